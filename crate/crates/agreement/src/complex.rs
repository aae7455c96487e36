//! Pure simplicial complexes with push-down level measures.
//!
//! Levels are indexed by cardinality: level `i` holds the faces with `i` vertices.
//! The measure on level `i` draws a uniform facet and then a uniform `i`-subset of it.

use std::fmt::Write as _;
use std::sync::{Arc, OnceLock};

use rand::Rng;
use thiserror::Error;

use crate::face::{binomial, Face, FaceError, FaceMap, MAX_VERTICES};
use crate::rng::{random_subset, rng_from};

pub const DEFAULT_LEVEL_CAP: usize = 2_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ComplexError {
    #[error("complex needs {required} vertices but the cap is {cap}")]
    TooManyVertices { required: usize, cap: usize },
    #[error("invalid sizes n={n}, d={d}")]
    BadSizes { n: usize, d: usize },
    #[error("facet {facet} has {found} vertices, expected {expected} (line {line})")]
    Purity {
        facet: String,
        found: usize,
        expected: usize,
        line: usize,
    },
    #[error("facet {facet} uses vertex {vertex} >= n = {n}")]
    VertexBeyondN { facet: String, vertex: usize, n: usize },
    #[error("complex has no facets")]
    Empty,
    #[error("level {level} has more than {cap} faces")]
    LevelTooLarge { level: usize, cap: usize },
    #[error("level {level} is outside 0..={d}")]
    NoSuchLevel { level: usize, d: usize },
    #[error("{0} is not a face of the complex")]
    NotAFace(Face),
    #[error("link of {face} needs |I| <= d-2 = {max}")]
    LinkTooDeep { face: Face, max: usize },
    #[error("sizes must be strictly increasing and at most d, got {0:?}")]
    BadChain(Vec<usize>),
    #[error("face error: {0}")]
    Face(#[from] FaceError),
    #[error("facet file line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// One materialized level: sorted faces, containment counts and an index.
#[derive(Debug)]
pub struct Level {
    pub size: usize,
    pub faces: Vec<Face>,
    /// Number of facets containing each face.
    pub counts: Vec<u64>,
    /// `|facets| * C(d, size)`; the weight of face `j` is `counts[j] / denominator`.
    pub denominator: u128,
    weights: Vec<f64>,
    index: FaceMap<u32>,
}

impl Level {
    fn new(size: usize, faces: Vec<Face>, counts: Vec<u64>, denominator: u128) -> Level {
        let weights = counts
            .iter()
            .map(|&c| (c as f64) / (denominator as f64))
            .collect();
        let index = faces
            .iter()
            .enumerate()
            .map(|(i, &f)| (f, i as u32))
            .collect();
        Level {
            size,
            faces,
            counts,
            denominator,
            weights,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.faces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn index_of(&self, face: Face) -> Option<usize> {
        self.index.get(&face).map(|&i| i as usize)
    }

    pub fn weight_of(&self, face: Face) -> f64 {
        self.index_of(face).map_or(0.0, |i| self.weights[i])
    }

    /// Exact weight as (numerator, denominator).
    pub fn exact_weight(&self, idx: usize) -> (u64, u128) {
        (self.counts[idx], self.denominator)
    }
}

#[derive(Debug)]
pub struct SimplicialComplex {
    n: usize,
    d: usize,
    facets: Vec<Face>,
    complete: bool,
    level_cap: usize,
    levels: Vec<OnceLock<Option<Arc<Level>>>>,
    vertex_facets: OnceLock<Vec<Vec<u32>>>,
}

impl SimplicialComplex {
    /// All `d`-subsets of `[n]`.
    pub fn complete(n: usize, d: usize) -> Result<SimplicialComplex, ComplexError> {
        if n > MAX_VERTICES {
            return Err(ComplexError::TooManyVertices {
                required: n,
                cap: MAX_VERTICES,
            });
        }
        if d == 0 || d > n {
            return Err(ComplexError::BadSizes { n, d });
        }
        let count = binomial(n, d);
        if count > DEFAULT_LEVEL_CAP as u128 {
            return Err(ComplexError::LevelTooLarge {
                level: d,
                cap: DEFAULT_LEVEL_CAP,
            });
        }
        let facets: Vec<Face> = Face::range(n).subsets(d).collect();
        Ok(SimplicialComplex::assemble(n, d, facets, true))
    }

    /// Downward closure of a facet list; duplicates are dropped.
    pub fn from_facets(n: usize, facets: &[Face]) -> Result<SimplicialComplex, ComplexError> {
        if n > MAX_VERTICES {
            return Err(ComplexError::TooManyVertices {
                required: n,
                cap: MAX_VERTICES,
            });
        }
        let first = facets.first().ok_or(ComplexError::Empty)?;
        let d = first.len();
        if d == 0 {
            return Err(ComplexError::BadSizes { n, d });
        }
        for (i, f) in facets.iter().enumerate() {
            if f.len() != d {
                return Err(ComplexError::Purity {
                    facet: f.ids(),
                    found: f.len(),
                    expected: d,
                    line: i + 1,
                });
            }
            if let Some(v) = f.max_vertex().filter(|&v| v >= n) {
                return Err(ComplexError::VertexBeyondN {
                    facet: f.ids(),
                    vertex: v,
                    n,
                });
            }
        }
        let mut facets = facets.to_vec();
        facets.sort();
        facets.dedup();
        let complete = binomial(n, d) == facets.len() as u128;
        Ok(SimplicialComplex::assemble(n, d, facets, complete))
    }

    fn assemble(n: usize, d: usize, facets: Vec<Face>, complete: bool) -> SimplicialComplex {
        SimplicialComplex {
            n,
            d,
            facets,
            complete,
            level_cap: DEFAULT_LEVEL_CAP,
            levels: (0..=d).map(|_| OnceLock::new()).collect(),
            vertex_facets: OnceLock::new(),
        }
    }

    pub fn with_level_cap(mut self, cap: usize) -> SimplicialComplex {
        self.level_cap = cap;
        self.levels = (0..=self.d).map(|_| OnceLock::new()).collect();
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn facets(&self) -> &[Face] {
        &self.facets
    }

    pub fn is_complete(&self) -> bool {
        self.complete
    }

    pub fn vertex_set(&self) -> Face {
        Face::range(self.n)
    }

    pub fn isolated_vertices(&self) -> Vec<usize> {
        let covered = self.facets.iter().fold(Face::EMPTY, |a, &f| a.union(f));
        (0..self.n).filter(|&v| !covered.contains(v)).collect()
    }

    pub fn level_size_hint(&self, i: usize) -> u128 {
        if self.complete {
            binomial(self.n, i)
        } else {
            (self.facets.len() as u128 * binomial(self.d, i)).min(binomial(self.n, i))
        }
    }

    /// Materialize level `i`, or fail when it exceeds the level cap.
    pub fn level(&self, i: usize) -> Result<Arc<Level>, ComplexError> {
        if i > self.d {
            return Err(ComplexError::NoSuchLevel {
                level: i,
                d: self.d,
            });
        }
        self.levels[i]
            .get_or_init(|| self.build_level(i).map(Arc::new))
            .clone()
            .ok_or(ComplexError::LevelTooLarge {
                level: i,
                cap: self.level_cap,
            })
    }

    pub fn level_is_enumerable(&self, i: usize) -> bool {
        i <= self.d && self.level(i).is_ok()
    }

    fn build_level(&self, i: usize) -> Option<Level> {
        let denominator = self.facets.len() as u128 * binomial(self.d, i);
        if self.complete {
            if binomial(self.n, i) > self.level_cap as u128 {
                return None;
            }
            let faces: Vec<Face> = Face::range(self.n).subsets(i).collect();
            let c = binomial(self.n - i, self.d - i) as u64;
            let counts = vec![c; faces.len()];
            return Some(Level::new(i, faces, counts, denominator));
        }
        let mut acc: FaceMap<u64> = FaceMap::default();
        for &facet in &self.facets {
            for sub in facet.subsets(i) {
                *acc.entry(sub).or_insert(0) += 1;
            }
            if acc.len() > self.level_cap {
                return None;
            }
        }
        let mut pairs: Vec<(Face, u64)> = acc.into_iter().collect();
        pairs.sort_by_key(|a| a.0);
        let (faces, counts) = pairs.into_iter().unzip();
        Some(Level::new(i, faces, counts, denominator))
    }

    pub fn contains_face(&self, face: Face) -> bool {
        if face.len() > self.d || face.max_vertex().is_some_and(|v| v >= self.n) {
            return false;
        }
        if self.complete {
            return true;
        }
        match self.level(face.len()) {
            Ok(level) => level.index_of(face).is_some(),
            Err(_) => self.facets_containing(face).next().is_some(),
        }
    }

    /// Facet indices through each vertex.
    pub fn vertex_facets(&self) -> &[Vec<u32>] {
        self.vertex_facets.get_or_init(|| {
            let mut out = vec![Vec::new(); self.n];
            for (i, f) in self.facets.iter().enumerate() {
                for v in f.vertices() {
                    out[v].push(i as u32);
                }
            }
            out
        })
    }

    pub fn facets_containing(&self, face: Face) -> Box<dyn Iterator<Item = Face> + '_> {
        match face.min_vertex() {
            None => Box::new(self.facets.iter().copied()),
            Some(v) if v >= self.n => Box::new(std::iter::empty()),
            Some(v) => Box::new(
                self.vertex_facets()[v]
                    .iter()
                    .map(move |&i| self.facets[i as usize])
                    .filter(move |f| face.is_subset_of(*f)),
            ),
        }
    }

    pub fn sample_facet<R: Rng + ?Sized>(&self, rng: &mut R) -> Face {
        self.facets[rng.gen_range(0..self.facets.len())]
    }

    /// Draw from the level-`i` measure.
    pub fn sample_face<R: Rng + ?Sized>(&self, i: usize, rng: &mut R) -> Face {
        assert!(i <= self.d, "level above top size");
        let top = self.sample_facet(rng);
        random_subset(top, i, rng)
    }

    pub fn sample_face_seeded(&self, i: usize, seed: u64) -> Face {
        self.sample_face(i, &mut rng_from(seed))
    }

    /// A chain of faces with the given sizes, each a uniform subset of the next, the
    /// largest drawn from its level measure.
    pub fn sample_nested<R: Rng + ?Sized>(
        &self,
        sizes: &[usize],
        rng: &mut R,
    ) -> Result<Vec<Face>, ComplexError> {
        let increasing = sizes.windows(2).all(|w| w[0] < w[1]);
        let top = match sizes.last() {
            Some(&t) if increasing && t <= self.d => t,
            _ => return Err(ComplexError::BadChain(sizes.to_vec())),
        };
        let mut chain = vec![self.sample_face(top, rng)];
        for &s in sizes.iter().rev().skip(1) {
            let next = random_subset(*chain.last().unwrap(), s, rng);
            chain.push(next);
        }
        chain.reverse();
        Ok(chain)
    }

    /// Draw a face of the given size containing `base`, from the level measure
    /// conditioned on containment.
    pub fn sample_superset<R: Rng + ?Sized>(
        &self,
        base: Face,
        size: usize,
        rng: &mut R,
    ) -> Option<Face> {
        if size < base.len() || size > self.d {
            return None;
        }
        let top = if self.complete {
            let rest = random_subset(self.vertex_set().difference(base), self.d - base.len(), rng);
            base.union(rest)
        } else {
            let candidates: Vec<Face> = self.facets_containing(base).collect();
            if candidates.is_empty() {
                return None;
            }
            candidates[rng.gen_range(0..candidates.len())]
        };
        let extra = random_subset(top.difference(base), size - base.len(), rng);
        Some(base.union(extra))
    }

    /// The link of `face`: facets `D \ I` for facets `D` containing `I`. Vertex ids are kept.
    pub fn link(&self, face: Face) -> Result<SimplicialComplex, ComplexError> {
        if face.is_empty() {
            return Ok(SimplicialComplex::assemble(
                self.n,
                self.d,
                self.facets.clone(),
                self.complete,
            ));
        }
        if face.len() + 2 > self.d {
            return Err(ComplexError::LinkTooDeep {
                face,
                max: self.d.saturating_sub(2),
            });
        }
        let facets: Vec<Face> = self
            .facets_containing(face)
            .map(|f| f.difference(face))
            .collect();
        if facets.is_empty() {
            return Err(ComplexError::NotAFace(face));
        }
        let mut c = SimplicialComplex::assemble(self.n, self.d - face.len(), facets, false);
        c.level_cap = self.level_cap;
        Ok(c)
    }

    pub fn parse_facet_file(text: &str) -> Result<SimplicialComplex, ComplexError> {
        let mut header: Option<(usize, usize)> = None;
        let mut facets = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let line_no = lineno + 1;
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let nums: Result<Vec<usize>, _> =
                line.split_ascii_whitespace().map(|t| t.parse()).collect();
            let nums = nums.map_err(|_| ComplexError::Parse {
                line: line_no,
                message: format!("expected integers, got {line:?}"),
            })?;
            match header {
                None => {
                    if nums.len() != 2 {
                        return Err(ComplexError::Parse {
                            line: line_no,
                            message: "header must be `n d`".into(),
                        });
                    }
                    header = Some((nums[0], nums[1]));
                }
                Some((n, d)) => {
                    let face = Face::from_vertices(&nums).map_err(|e| ComplexError::Parse {
                        line: line_no,
                        message: e.to_string(),
                    })?;
                    if face.len() != d {
                        return Err(ComplexError::Purity {
                            facet: face.ids(),
                            found: face.len(),
                            expected: d,
                            line: line_no,
                        });
                    }
                    if let Some(v) = face.max_vertex().filter(|&v| v >= n) {
                        return Err(ComplexError::VertexBeyondN {
                            facet: face.ids(),
                            vertex: v,
                            n,
                        });
                    }
                    facets.push(face);
                }
            }
        }
        let (n, _) = header.ok_or(ComplexError::Parse {
            line: 0,
            message: "missing `n d` header".into(),
        })?;
        SimplicialComplex::from_facets(n, &facets)
    }

    pub fn to_facet_file(&self) -> String {
        let mut out = format!("{} {}\n", self.n, self.d);
        for f in &self.facets {
            let ids: Vec<String> = f.vertices().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{}", ids.join(" "));
        }
        out
    }
}

/// Small triangulations used as fixtures.
pub mod builtin {
    use super::*;

    fn from_triples(n: usize, triples: &[[usize; 3]]) -> SimplicialComplex {
        let facets: Vec<Face> = triples
            .iter()
            .map(|t| Face::from_vertices(t).expect("valid triple"))
            .collect();
        SimplicialComplex::from_facets(n, &facets).expect("valid triangulation")
    }

    /// The 6-vertex real projective plane (hemi-icosahedron).
    pub fn projective_plane() -> SimplicialComplex {
        from_triples(
            6,
            &[
                [0, 1, 2],
                [0, 2, 3],
                [0, 3, 4],
                [0, 4, 5],
                [0, 1, 5],
                [1, 2, 4],
                [2, 3, 5],
                [1, 3, 4],
                [2, 4, 5],
                [1, 3, 5],
            ],
        )
    }

    /// The 7-vertex torus.
    pub fn torus() -> SimplicialComplex {
        let mut t = Vec::new();
        for i in 0..7 {
            t.push([i, (i + 1) % 7, (i + 3) % 7]);
            t.push([i, (i + 2) % 7, (i + 3) % 7]);
        }
        from_triples(7, &t)
    }

    /// Cone over a hexagon: the link of the apex 6 is a 6-cycle.
    pub fn hexagon_cone() -> SimplicialComplex {
        let t: Vec<[usize; 3]> = (0..6).map(|i| [i, (i + 1) % 6, 6]).collect();
        from_triples(7, &t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complete_level_counts() {
        let x = SimplicialComplex::complete(4, 3).unwrap();
        let l2 = x.level(2).unwrap();
        assert_eq!(l2.len(), 6);
        for &w in l2.weights() {
            assert!((w - 1.0 / 6.0).abs() < 1e-15);
        }
        let x = SimplicialComplex::complete(6, 3).unwrap();
        assert_eq!(x.level(3).unwrap().len(), 20);
        let x = SimplicialComplex::complete(5, 5).unwrap();
        assert_eq!(x.facets().len(), 1);
        assert!(x.level(1).unwrap().weights().iter().all(|w| (w - 0.2).abs() < 1e-15));
    }

    #[test]
    fn from_facets_matches_complete() {
        let facets: Vec<Face> = Face::range(5).subsets(3).collect();
        let a = SimplicialComplex::from_facets(5, &facets).unwrap();
        let b = SimplicialComplex::complete(5, 3).unwrap();
        assert!(a.is_complete());
        for i in 0..=3 {
            assert_eq!(a.level(i).unwrap().faces, b.level(i).unwrap().faces);
        }
        let dup = [Face::range(3), Face::range(3)];
        assert_eq!(SimplicialComplex::from_facets(3, &dup).unwrap().facets().len(), 1);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            SimplicialComplex::complete(65, 3),
            Err(ComplexError::TooManyVertices { .. })
        ));
        let mixed = [Face::range(3), Face::range(2)];
        assert!(matches!(
            SimplicialComplex::from_facets(4, &mixed),
            Err(ComplexError::Purity { line: 2, .. })
        ));
        assert_eq!(SimplicialComplex::from_facets(4, &[]).unwrap_err(), ComplexError::Empty);
    }

    #[test]
    fn projective_plane_counts() {
        let x = builtin::projective_plane();
        let v = x.level(1).unwrap().len() as i64;
        let e = x.level(2).unwrap().len() as i64;
        let f = x.level(3).unwrap().len() as i64;
        assert_eq!((v, e, f), (6, 15, 10));
        assert_eq!(v - e + f, 1);
        let t = builtin::torus();
        let (v, e, f) = (
            t.level(1).unwrap().len() as i64,
            t.level(2).unwrap().len() as i64,
            t.level(3).unwrap().len() as i64,
        );
        assert_eq!((v, e, f), (7, 21, 14));
    }

    #[test]
    fn surface_links_are_cycles() {
        let x = builtin::projective_plane();
        for v in 0..6 {
            let link = x.link(Face::singleton(v)).unwrap();
            let l1 = link.level(1).unwrap();
            assert_eq!(l1.len(), 5);
            assert_eq!(link.facets().len(), 5);
            for u in l1.faces.iter() {
                let deg = link.facets().iter().filter(|f| u.is_subset_of(**f)).count();
                assert_eq!(deg, 2);
            }
        }
    }

    #[test]
    fn link_of_complete() {
        let x = SimplicialComplex::complete(6, 3).unwrap();
        let link = x.link(Face::singleton(0)).unwrap();
        let want: Vec<Face> = Face::from_bits(0b111110).subsets(2).collect();
        assert_eq!(link.facets(), &want[..]);
        let same = x.link(Face::EMPTY).unwrap();
        assert_eq!(same.facets(), x.facets());
        assert!(matches!(
            x.link(Face::range(2)),
            Err(ComplexError::LinkTooDeep { .. })
        ));
    }

    #[test]
    fn nested_chain() {
        let x = SimplicialComplex::complete(6, 3).unwrap();
        let mut rng = rng_from(3);
        let chain = x.sample_nested(&[1, 3], &mut rng).unwrap();
        assert_eq!(chain[0].len(), 1);
        assert!(chain[0].is_subset_of(chain[1]));
        assert!(x.sample_nested(&[2, 2], &mut rng).is_err());
        assert_eq!(x.sample_nested(&[3], &mut rng).unwrap()[0].len(), 3);
    }

    #[test]
    fn facet_file_roundtrip() {
        let x = builtin::torus();
        let text = format!("# torus\n{}", x.to_facet_file());
        let y = SimplicialComplex::parse_facet_file(&text).unwrap();
        assert_eq!(x.facets(), y.facets());
        let bad = "5 3\n0 1 2\n0 1\n";
        assert!(matches!(
            SimplicialComplex::parse_facet_file(bad),
            Err(ComplexError::Purity { line: 3, .. })
        ));
    }
}
