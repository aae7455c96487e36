//! Faces as 64-bit vertex masks.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::hash::{BuildHasherDefault, Hasher};

use thiserror::Error;

pub const MAX_VERTICES: usize = 64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FaceError {
    #[error("vertex id {0} exceeds the 64-vertex cap")]
    VertexOutOfRange(usize),
    #[error("duplicate vertex {0} in face")]
    DuplicateVertex(usize),
    #[error("cannot parse face from {0:?}")]
    Parse(String),
}

/// A set of vertex ids below 64, ordered lexicographically by its sorted vertex sequence.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Face(u64);

impl Face {
    pub const EMPTY: Face = Face(0);

    pub const fn from_bits(bits: u64) -> Face {
        Face(bits)
    }

    pub fn from_vertices(vertices: &[usize]) -> Result<Face, FaceError> {
        let mut bits = 0u64;
        for &v in vertices {
            if v >= MAX_VERTICES {
                return Err(FaceError::VertexOutOfRange(v));
            }
            if bits >> v & 1 == 1 {
                return Err(FaceError::DuplicateVertex(v));
            }
            bits |= 1 << v;
        }
        Ok(Face(bits))
    }

    /// The face {0, 1, ..., n-1}.
    pub fn range(n: usize) -> Face {
        assert!(n <= MAX_VERTICES);
        if n == 64 {
            Face(u64::MAX)
        } else {
            Face((1u64 << n) - 1)
        }
    }

    pub fn singleton(v: usize) -> Face {
        assert!(v < MAX_VERTICES);
        Face(1 << v)
    }

    pub const fn bits(self) -> u64 {
        self.0
    }

    pub const fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub const fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn contains(self, v: usize) -> bool {
        v < MAX_VERTICES && self.0 >> v & 1 == 1
    }

    pub const fn is_subset_of(self, other: Face) -> bool {
        self.0 & !other.0 == 0
    }

    pub const fn is_disjoint(self, other: Face) -> bool {
        self.0 & other.0 == 0
    }

    pub const fn union(self, other: Face) -> Face {
        Face(self.0 | other.0)
    }

    pub const fn intersection(self, other: Face) -> Face {
        Face(self.0 & other.0)
    }

    pub const fn difference(self, other: Face) -> Face {
        Face(self.0 & !other.0)
    }

    pub fn min_vertex(self) -> Option<usize> {
        (self.0 != 0).then(|| self.0.trailing_zeros() as usize)
    }

    pub fn max_vertex(self) -> Option<usize> {
        (self.0 != 0).then(|| 63 - self.0.leading_zeros() as usize)
    }

    pub fn vertices(self) -> Vertices {
        Vertices(self.0)
    }

    pub fn to_vec(self) -> Vec<usize> {
        self.vertices().collect()
    }

    /// Comma-separated sorted ids, the on-disk face notation.
    pub fn ids(self) -> String {
        let parts: Vec<String> = self.vertices().map(|v| v.to_string()).collect();
        parts.join(",")
    }

    pub fn parse_ids(text: &str) -> Result<Face, FaceError> {
        let text = text.trim();
        if text.is_empty() {
            return Ok(Face::EMPTY);
        }
        let mut ids = Vec::new();
        for part in text.split(',') {
            let v: usize = part
                .trim()
                .parse()
                .map_err(|_| FaceError::Parse(text.to_string()))?;
            ids.push(v);
        }
        if ids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(FaceError::Parse(text.to_string()));
        }
        Face::from_vertices(&ids)
    }

    /// All subsets of the given size, in lexicographic order.
    pub fn subsets(self, size: usize) -> Subsets {
        Subsets::new(self, size)
    }

    /// Position of each vertex of `part` inside this face, packed into the low bits.
    pub fn compress(self, part: u64) -> u64 {
        let mut out = 0u64;
        for (i, v) in self.vertices().enumerate() {
            out |= (part >> v & 1) << i;
        }
        out
    }

    /// Inverse of [`Face::compress`].
    pub fn expand(self, packed: u64) -> u64 {
        let mut out = 0u64;
        for (i, v) in self.vertices().enumerate() {
            out |= (packed >> i & 1) << v;
        }
        out
    }
}

impl Ord for Face {
    fn cmp(&self, other: &Face) -> Ordering {
        let diff = self.0 ^ other.0;
        if diff == 0 {
            return Ordering::Equal;
        }
        let v = diff.trailing_zeros();
        let (has, lacks) = if self.0 >> v & 1 == 1 {
            (Ordering::Less, other.0)
        } else {
            (Ordering::Greater, self.0)
        };
        if lacks >> v != 0 {
            has
        } else {
            has.reverse()
        }
    }
}

impl PartialOrd for Face {
    fn partial_cmp(&self, other: &Face) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for Face {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self.ids())
    }
}

impl fmt::Display for Face {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self.ids())
    }
}

pub struct Vertices(u64);

impl Iterator for Vertices {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        if self.0 == 0 {
            return None;
        }
        let v = self.0.trailing_zeros() as usize;
        self.0 &= self.0 - 1;
        Some(v)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = self.0.count_ones() as usize;
        (n, Some(n))
    }
}

impl ExactSizeIterator for Vertices {}

pub struct Subsets {
    pool: Vec<usize>,
    idx: Vec<usize>,
    done: bool,
}

impl Subsets {
    fn new(face: Face, size: usize) -> Subsets {
        let pool = face.to_vec();
        let done = size > pool.len();
        Subsets {
            idx: (0..size).collect(),
            pool,
            done,
        }
    }
}

impl Iterator for Subsets {
    type Item = Face;

    fn next(&mut self) -> Option<Face> {
        if self.done {
            return None;
        }
        let bits = self.idx.iter().fold(0u64, |b, &i| b | 1 << self.pool[i]);
        let k = self.idx.len();
        let n = self.pool.len();
        let mut i = k;
        loop {
            if i == 0 {
                self.done = true;
                break;
            }
            i -= 1;
            if self.idx[i] < n - k + i {
                self.idx[i] += 1;
                for j in i + 1..k {
                    self.idx[j] = self.idx[j - 1] + 1;
                }
                break;
            }
        }
        Some(Face(bits))
    }
}

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

pub fn binomial_f64(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0f64;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// Multiplicative hasher for keys that are already well-mixed machine words.
#[derive(Default, Clone, Copy)]
pub struct WordHasher(u64);

impl Hasher for WordHasher {
    fn finish(&self) -> u64 {
        self.0
    }

    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.write_u64(b as u64);
        }
    }

    fn write_u64(&mut self, x: u64) {
        self.0 = (self.0.rotate_left(5) ^ x).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    }

    fn write_u32(&mut self, x: u32) {
        self.write_u64(x as u64);
    }

    fn write_usize(&mut self, x: usize) {
        self.write_u64(x as u64);
    }
}

pub type FaceMap<V> = HashMap<Face, V, BuildHasherDefault<WordHasher>>;
pub type FaceSet = HashSet<Face, BuildHasherDefault<WordHasher>>;
pub type WordMap<K, V> = HashMap<K, V, BuildHasherDefault<WordHasher>>;

impl serde::Serialize for Face {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.ids())
    }
}

impl<'de> serde::Deserialize<'de> for Face {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Face, D::Error> {
        let s = String::deserialize(d)?;
        Face::parse_ids(&s).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexicographic_order_matches_sequences() {
        let faces: Vec<Face> = Face::range(6).subsets(3).collect();
        assert_eq!(faces.len(), 20);
        for w in faces.windows(2) {
            assert!(w[0] < w[1]);
            assert!(w[0].to_vec() < w[1].to_vec());
        }
        let a = Face::from_vertices(&[0, 1]).unwrap();
        let b = Face::from_vertices(&[0, 1, 2]).unwrap();
        let c = Face::from_vertices(&[0, 2]).unwrap();
        assert!(a < b && b < c);
    }

    #[test]
    fn subsets_count_and_edges() {
        assert_eq!(Face::range(9).subsets(3).count(), 84);
        assert_eq!(Face::range(4).subsets(0).count(), 1);
        assert_eq!(Face::range(3).subsets(4).count(), 0);
        assert_eq!(binomial(20, 10), 184_756);
        assert_eq!(binomial(64, 32), 1_832_624_140_942_590_534);
    }

    #[test]
    fn compress_roundtrip() {
        let d = Face::from_vertices(&[2, 5, 7, 11]).unwrap();
        let part = Face::from_vertices(&[5, 11]).unwrap().bits();
        assert_eq!(d.compress(part), 0b1010);
        assert_eq!(d.expand(0b1010), part);
    }

    #[test]
    fn ids_roundtrip() {
        let f = Face::from_vertices(&[3, 1, 9]).unwrap();
        assert_eq!(f.ids(), "1,3,9");
        assert_eq!(Face::parse_ids("1,3,9").unwrap(), f);
        assert!(Face::parse_ids("3,1").is_err());
        assert_eq!(
            Face::from_vertices(&[1, 1]),
            Err(FaceError::DuplicateVertex(1))
        );
    }
}
