//! Seed derivation and small sampling helpers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::face::Face;

pub type TrialRng = ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for sub-stream `j` of a master seed.
pub fn mix(master: u64, j: u64) -> u64 {
    splitmix(master ^ splitmix(j.wrapping_add(0x632B_E59B_D9B4_E019)))
}

pub fn rng_from(seed: u64) -> TrialRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stream(master: u64, j: u64) -> TrialRng {
    rng_from(mix(master, j))
}

/// Uniform subset of `face` with `size` vertices.
pub fn random_subset<R: Rng + ?Sized>(face: Face, size: usize, rng: &mut R) -> Face {
    let n = face.len();
    assert!(size <= n, "subset larger than face");
    if size == n {
        return face;
    }
    let mut pool = [0u8; 64];
    for (i, v) in face.vertices().enumerate() {
        pool[i] = v as u8;
    }
    let mut bits = 0u64;
    for i in 0..size {
        let j = rng.gen_range(i..n);
        pool.swap(i, j);
        bits |= 1 << pool[i];
    }
    Face::from_bits(bits)
}

/// Uniformly random bits on the vertices of `face`.
pub fn random_bits<R: Rng + ?Sized>(face: Face, rng: &mut R) -> u64 {
    rng.gen::<u64>() & face.bits()
}
