//! Local assignments on a level, global functions and ordered function lists.
//!
//! Every bit string is stored as a mask over the ambient vertex set: the value of
//! a string on vertex `v` is bit `v`. An entry `F[A]` therefore only uses bits of `A`.

use std::fmt::Write as _;

use rand::Rng;
use thiserror::Error;

use crate::complex::{ComplexError, SimplicialComplex};
use crate::face::{binomial_f64, Face, FaceMap};
use crate::rng::{random_bits, rng_from};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssignmentError {
    #[error("domain mismatch: {left} vs {right}")]
    DomainMismatch { left: Face, right: Face },
    #[error("{face} is not inside the domain {domain}")]
    OutsideDomain { face: Face, domain: Face },
    #[error("face {face} has {found} vertices, expected {expected}")]
    WrongSize { face: Face, found: usize, expected: usize },
    #[error("no entry for face {0}")]
    MissingFace(Face),
    #[error("duplicate entry for face {0}")]
    DuplicateFace(Face),
    #[error("list contains a repeated function")]
    DuplicateFunction,
    #[error("exhaustive search over {found} vertices exceeds the cap {cap}")]
    TooManyVertices { found: usize, cap: usize },
    #[error("assignment line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Complex(#[from] ComplexError),
}

pub const EXHAUSTIVE_MAX_VERTICES: usize = 24;

/// Fractional Hamming distance of two masks restricted to `on`.
pub fn distance_on(on: Face, x: u64, y: u64) -> f64 {
    if on.is_empty() {
        return 0.0;
    }
    ((x ^ y) & on.bits()).count_ones() as f64 / on.len() as f64
}

/// Render the bits of `value` on the vertices of `face`, smallest vertex first.
pub fn bit_string(face: Face, value: u64) -> String {
    face.vertices()
        .map(|v| if value >> v & 1 == 1 { '1' } else { '0' })
        .collect()
}

pub fn parse_bit_string(face: Face, text: &str) -> Option<u64> {
    if text.len() != face.len() {
        return None;
    }
    let mut value = 0;
    for (v, c) in face.vertices().zip(text.chars()) {
        match c {
            '1' => value |= 1 << v,
            '0' => {}
            _ => return None,
        }
    }
    Some(value)
}

/// `f: domain -> {0,1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GlobalFunction {
    pub domain: Face,
    pub bits: u64,
}

impl GlobalFunction {
    pub fn new(domain: Face, bits: u64) -> GlobalFunction {
        GlobalFunction {
            domain,
            bits: bits & domain.bits(),
        }
    }

    pub fn zero(domain: Face) -> GlobalFunction {
        GlobalFunction { domain, bits: 0 }
    }

    pub fn random<R: Rng + ?Sized>(domain: Face, rng: &mut R) -> GlobalFunction {
        GlobalFunction::new(domain, random_bits(domain, rng))
    }

    pub fn value(&self, v: usize) -> bool {
        self.bits >> v & 1 == 1
    }

    pub fn restrict(&self, on: Face) -> u64 {
        self.bits & on.bits()
    }

    pub fn flip(&self, on: Face) -> GlobalFunction {
        GlobalFunction::new(self.domain, self.bits ^ on.bits())
    }

    pub fn hamming(&self, other: &GlobalFunction) -> Result<f64, AssignmentError> {
        self.hamming_on(self.domain, other)
    }

    pub fn hamming_on(&self, on: Face, other: &GlobalFunction) -> Result<f64, AssignmentError> {
        if self.domain != other.domain {
            return Err(AssignmentError::DomainMismatch {
                left: self.domain,
                right: other.domain,
            });
        }
        if !on.is_subset_of(self.domain) {
            return Err(AssignmentError::OutsideDomain {
                face: on,
                domain: self.domain,
            });
        }
        Ok(distance_on(on, self.bits, other.bits))
    }
}

impl std::fmt::Display for GlobalFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&bit_string(self.domain, self.bits))
    }
}

/// Ordered list of distinct functions on a common domain.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FunctionList {
    pub domain: Face,
    functions: Vec<u64>,
}

impl FunctionList {
    pub fn new(domain: Face, functions: Vec<u64>) -> Result<FunctionList, AssignmentError> {
        let functions: Vec<u64> = functions.into_iter().map(|b| b & domain.bits()).collect();
        for (i, a) in functions.iter().enumerate() {
            if functions[..i].contains(a) {
                return Err(AssignmentError::DuplicateFunction);
            }
        }
        Ok(FunctionList { domain, functions })
    }

    pub fn empty(domain: Face) -> FunctionList {
        FunctionList {
            domain,
            functions: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn functions(&self) -> &[u64] {
        &self.functions
    }

    pub fn get(&self, i: usize) -> GlobalFunction {
        GlobalFunction::new(self.domain, self.functions[i])
    }

    pub fn position(&self, bits: u64) -> Option<usize> {
        let bits = bits & self.domain.bits();
        self.functions.iter().position(|&f| f == bits)
    }

    /// Every function restricted to `on`, order kept; restrictions may collide.
    pub fn restrict(&self, on: Face) -> Vec<u64> {
        self.functions.iter().map(|f| f & on.bits()).collect()
    }

    /// Smallest pairwise distance, or 1 for lists with fewer than two entries.
    pub fn min_distance(&self) -> f64 {
        let mut best: f64 = 1.0;
        for (i, &a) in self.functions.iter().enumerate() {
            for &b in &self.functions[..i] {
                best = best.min(distance_on(self.domain, a, b));
            }
        }
        best
    }
}

/// Read access to a table `F` on faces of one size.
pub trait Assignment: Sync {
    fn k(&self) -> usize;
    fn get(&self, face: Face) -> Option<u64>;
}

/// A fully materialized table on a set of k-faces.
#[derive(Debug, Clone)]
pub struct LocalAssignment {
    k: usize,
    faces: Vec<Face>,
    values: Vec<u64>,
    index: FaceMap<u32>,
    weights: Option<Vec<f64>>,
}

impl Assignment for LocalAssignment {
    fn k(&self) -> usize {
        self.k
    }

    fn get(&self, face: Face) -> Option<u64> {
        self.index.get(&face).map(|&i| self.values[i as usize])
    }
}

impl LocalAssignment {
    /// Table on level `k` of `x`, weighted by the level measure.
    pub fn from_fn(
        x: &SimplicialComplex,
        k: usize,
        mut f: impl FnMut(usize, Face) -> u64,
    ) -> Result<LocalAssignment, AssignmentError> {
        let level = x.level(k)?;
        let values = level
            .faces
            .iter()
            .enumerate()
            .map(|(i, &a)| f(i, a) & a.bits())
            .collect();
        let mut out = LocalAssignment::from_parts(k, level.faces.clone(), values)?;
        out.weights = Some(level.weights().to_vec());
        Ok(out)
    }

    /// Table on explicit faces with uniform weights.
    pub fn from_parts(
        k: usize,
        faces: Vec<Face>,
        values: Vec<u64>,
    ) -> Result<LocalAssignment, AssignmentError> {
        assert_eq!(faces.len(), values.len());
        let mut index = FaceMap::default();
        for (i, &a) in faces.iter().enumerate() {
            if a.len() != k {
                return Err(AssignmentError::WrongSize {
                    face: a,
                    found: a.len(),
                    expected: k,
                });
            }
            if index.insert(a, i as u32).is_some() {
                return Err(AssignmentError::DuplicateFace(a));
            }
        }
        let values = faces.iter().zip(values).map(|(a, v)| v & a.bits()).collect();
        Ok(LocalAssignment {
            k,
            faces,
            values,
            index,
            weights: None,
        })
    }

    /// `F[A] = f|_A`.
    pub fn direct_product(
        x: &SimplicialComplex,
        k: usize,
        f: &GlobalFunction,
    ) -> Result<LocalAssignment, AssignmentError> {
        LocalAssignment::from_fn(x, k, |_, a| f.bits & a.bits())
    }

    /// Independent uniform entries.
    pub fn random(x: &SimplicialComplex, k: usize, seed: u64) -> Result<LocalAssignment, AssignmentError> {
        let mut rng = rng_from(seed);
        LocalAssignment::from_fn(x, k, |_, a| random_bits(a, &mut rng))
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    pub fn values(&self) -> &[u64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.faces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    pub fn weight(&self, i: usize) -> f64 {
        match &self.weights {
            Some(w) => w[i],
            None => 1.0 / self.faces.len() as f64,
        }
    }

    pub fn set(&mut self, face: Face, value: u64) -> Result<(), AssignmentError> {
        let i = *self
            .index
            .get(&face)
            .ok_or(AssignmentError::MissingFace(face))?;
        self.values[i as usize] = value & face.bits();
        Ok(())
    }

    /// `F|_D`: the entries on faces inside `domain`, uniformly weighted.
    pub fn restrict_to(&self, domain: Face) -> LocalAssignment {
        let (faces, values): (Vec<Face>, Vec<u64>) = self
            .faces
            .iter()
            .zip(&self.values)
            .filter(|(a, _)| a.is_subset_of(domain))
            .map(|(&a, &v)| (a, v))
            .unzip();
        LocalAssignment::from_parts(self.k, faces, values).expect("sub-table of a valid table")
    }

    /// Faces with `Δ_A(f, F[A]) <= nu` and their total weight.
    pub fn agr_set(&self, f: &GlobalFunction, nu: f64) -> AgrSet {
        let mut faces = Vec::new();
        let mut measure = 0.0;
        for (i, (&a, &v)) in self.faces.iter().zip(&self.values).enumerate() {
            if distance_on(a, f.bits, v) <= nu + 1e-12 {
                faces.push(a);
                measure += self.weight(i);
            }
        }
        AgrSet { faces, measure }
    }

    /// Per-vertex weighted plurality of the entries over faces containing the vertex.
    /// Ties and uncovered vertices give 0.
    pub fn plurality(&self, domain: Face) -> GlobalFunction {
        let mut score = [0.0f64; 64];
        for (i, (&a, &v)) in self.faces.iter().zip(&self.values).enumerate() {
            let w = self.weight(i);
            for x in a.intersection(domain).vertices() {
                score[x] += if v >> x & 1 == 1 { w } else { -w };
            }
        }
        let bits = domain
            .vertices()
            .filter(|&x| score[x] > 1e-15)
            .fold(0u64, |b, x| b | 1 << x);
        GlobalFunction::new(domain, bits)
    }

    /// Weighted measure of `Agr_nu(f, F)` among faces inside `domain`, for every
    /// `f: domain -> {0,1}` at once. Entry `j` belongs to `f = domain.expand(j)`.
    pub fn agreement_table(&self, domain: Face, nu: f64) -> Result<Vec<f64>, AssignmentError> {
        let n = domain.len();
        if n > EXHAUSTIVE_MAX_VERTICES {
            return Err(AssignmentError::TooManyVertices {
                found: n,
                cap: EXHAUSTIVE_MAX_VERTICES,
            });
        }
        let k = self.k;
        let radius = (nu * k as f64 + 1e-9).floor().max(0.0) as usize;
        let spread = krawtchouk_sums(k, radius);
        let scale = 0.5f64.powi(k as i32);
        let mut total = 0.0;
        let mut spectrum = vec![0.0f64; 1 << n];
        for (i, (&a, &v)) in self.faces.iter().zip(&self.values).enumerate() {
            if !a.is_subset_of(domain) {
                continue;
            }
            let w = self.weight(i);
            total += w;
            let support = domain.compress(a.bits());
            let c = domain.compress(v);
            let mut s = support;
            loop {
                let sign = if (s & c).count_ones().is_multiple_of(2) { 1.0 } else { -1.0 };
                spectrum[s as usize] += w * scale * sign * spread[s.count_ones() as usize];
                if s == 0 {
                    break;
                }
                s = (s - 1) & support;
            }
        }
        walsh_hadamard(&mut spectrum);
        if total > 0.0 {
            for x in &mut spectrum {
                *x /= total;
            }
        }
        Ok(spectrum)
    }

    pub fn parse(text: &str) -> Result<LocalAssignment, AssignmentError> {
        let mut faces = Vec::new();
        let mut values = Vec::new();
        let mut k = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: &str| AssignmentError::Parse {
                line: lineno + 1,
                message: message.to_string(),
            };
            let (ids, bits) = line.split_once('\t').ok_or_else(|| err("missing tab"))?;
            let face = Face::parse_ids(ids).map_err(|e| err(&e.to_string()))?;
            let value = parse_bit_string(face, bits.trim()).ok_or_else(|| err("bad bit string"))?;
            if *k.get_or_insert(face.len()) != face.len() {
                return Err(err("faces of mixed sizes"));
            }
            faces.push(face);
            values.push(value);
        }
        LocalAssignment::from_parts(k.unwrap_or(0), faces, values)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (&a, &v) in self.faces.iter().zip(&self.values) {
            let _ = writeln!(out, "{}\t{}", a.ids(), bit_string(a, v));
        }
        out
    }
}

/// `sum_{j <= radius} K_j(w)` for each weight `w`, with Krawtchouk polynomials of length `k`.
fn krawtchouk_sums(k: usize, radius: usize) -> Vec<f64> {
    (0..=k)
        .map(|w| {
            let mut total = 0.0;
            for j in 0..=radius.min(k) {
                for i in 0..=j.min(w) {
                    if j - i > k - w {
                        continue;
                    }
                    let term = binomial_f64(w, i) * binomial_f64(k - w, j - i);
                    total += if i % 2 == 0 { term } else { -term };
                }
            }
            total
        })
        .collect()
}

/// Unnormalized in-place Walsh-Hadamard transform.
fn walsh_hadamard(v: &mut [f64]) {
    let mut h = 1;
    while h < v.len() {
        for block in v.chunks_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = x + y;
                *b = x - y;
            }
        }
        h *= 2;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgrSet {
    pub faces: Vec<Face>,
    pub measure: f64,
}
