//! Permutations of a small alphabet, packed four bits per letter.

use std::fmt;

use thiserror::Error;

pub const MAX_ALPHABET: usize = 16;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PermError {
    #[error("alphabet size {0} outside 1..={MAX_ALPHABET}")]
    Alphabet(usize),
    #[error("image array {0:?} is not a bijection")]
    NotBijection(Vec<usize>),
}

/// A bijection of `{0, .., m-1}`. `p.apply(i)` is the image of `i`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Perm {
    m: u8,
    packed: u64,
}

impl Perm {
    pub fn identity(m: usize) -> Perm {
        assert!((1..=MAX_ALPHABET).contains(&m), "alphabet size {m}");
        let mut packed = 0;
        for i in 0..m {
            packed |= (i as u64) << (4 * i);
        }
        Perm { m: m as u8, packed }
    }

    pub fn from_images(images: &[usize]) -> Result<Perm, PermError> {
        let m = images.len();
        if !(1..=MAX_ALPHABET).contains(&m) {
            return Err(PermError::Alphabet(m));
        }
        let mut seen = 0u32;
        let mut packed = 0;
        for (i, &x) in images.iter().enumerate() {
            if x >= m || seen >> x & 1 == 1 {
                return Err(PermError::NotBijection(images.to_vec()));
            }
            seen |= 1 << x;
            packed |= (x as u64) << (4 * i);
        }
        Ok(Perm { m: m as u8, packed })
    }

    /// The transposition of `a` and `b`.
    pub fn swap(m: usize, a: usize, b: usize) -> Perm {
        let mut images: Vec<usize> = (0..m).collect();
        images.swap(a, b);
        Perm::from_images(&images).expect("transposition")
    }

    pub fn m(self) -> usize {
        self.m as usize
    }

    pub fn apply(self, i: usize) -> usize {
        debug_assert!(i < self.m());
        (self.packed >> (4 * i) & 0xF) as usize
    }

    pub fn images(self) -> Vec<usize> {
        (0..self.m()).map(|i| self.apply(i)).collect()
    }

    pub fn is_identity(self) -> bool {
        self == Perm::identity(self.m())
    }

    /// Apply `self`, then `next`.
    pub fn then(self, next: Perm) -> Perm {
        debug_assert_eq!(self.m, next.m);
        let mut packed = 0;
        for i in 0..self.m() {
            packed |= (next.apply(self.apply(i)) as u64) << (4 * i);
        }
        Perm { m: self.m, packed }
    }

    pub fn inverse(self) -> Perm {
        let mut packed = 0;
        for i in 0..self.m() {
            packed |= (i as u64) << (4 * self.apply(i));
        }
        Perm { m: self.m, packed }
    }

    /// Remove letter `a` from the domain and `self(a)` from the range and relabel both
    /// to `{0, .., m-2}` keeping order.
    pub fn remove(self, a: usize) -> Perm {
        let b = self.apply(a);
        let images: Vec<usize> = (0..self.m())
            .filter(|&i| i != a)
            .map(|i| {
                let x = self.apply(i);
                if x > b {
                    x - 1
                } else {
                    x
                }
            })
            .collect();
        Perm::from_images(&images).expect("restriction is a bijection")
    }

    /// Remove `a` from the domain and `b` from the range, sending `self^{-1}(b)` to
    /// `self(a)` first so that the result is a bijection.
    pub fn splice(self, a: usize, b: usize) -> Perm {
        let target = self.apply(a);
        let source = self.inverse().apply(b);
        let mut images = self.images();
        images[source] = target;
        images[a] = b;
        Perm::from_images(&images)
            .expect("splice keeps a bijection")
            .remove(a)
    }

    /// Every permutation of `m` letters in lexicographic order of image arrays.
    pub fn all(m: usize) -> Vec<Perm> {
        let mut images: Vec<usize> = (0..m).collect();
        let mut out = vec![Perm::from_images(&images).unwrap()];
        loop {
            let Some(i) = (0..m.saturating_sub(1)).rev().find(|&i| images[i] < images[i + 1]) else {
                return out;
            };
            let j = (i + 1..m).rev().find(|&j| images[j] > images[i]).unwrap();
            images.swap(i, j);
            images[i + 1..].reverse();
            out.push(Perm::from_images(&images).unwrap());
        }
    }

    pub fn random<R: rand::Rng + ?Sized>(m: usize, rng: &mut R) -> Perm {
        use rand::seq::SliceRandom;
        let mut images: Vec<usize> = (0..m).collect();
        images.shuffle(rng);
        Perm::from_images(&images).unwrap()
    }
}

impl Default for Perm {
    fn default() -> Perm {
        Perm::identity(1)
    }
}

impl fmt::Debug for Perm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.images())
    }
}

impl fmt::Display for Perm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.images().iter().map(|x| x.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn group_laws() {
        let all = Perm::all(4);
        assert_eq!(all.len(), 24);
        assert!(all.windows(2).all(|w| w[0].images() < w[1].images()));
        for &p in &all {
            assert!(p.then(p.inverse()).is_identity());
            for &q in all.iter().step_by(5) {
                let pq = p.then(q);
                for i in 0..4 {
                    assert_eq!(pq.apply(i), q.apply(p.apply(i)));
                }
            }
        }
    }

    #[test]
    fn splice_matches_pair() {
        let p = Perm::from_images(&[2, 0, 3, 1]).unwrap();
        let s = p.splice(0, 2);
        assert_eq!(s.m(), 3);
        let kept = p.remove(0);
        assert_eq!(s, kept);
        let s = p.splice(1, 3);
        // 2 used to reach the removed 3 and takes over 1's old image 0.
        assert_eq!(s.images(), vec![2, 0, 1]);
    }

    #[test]
    fn rejects_non_bijections() {
        assert!(Perm::from_images(&[0, 0]).is_err());
        assert!(Perm::from_images(&[]).is_err());
    }
}
