//! Fixtures shared by the benchmarks.

use skelfit_core::retrieval::{build_index, EmbeddingIndex};
use skelfit_core::synthetic::{fit_scene, FitScene};

/// The 274-vertex, five-bone, eight-frame round-trip scene.
pub fn scene() -> FitScene {
    fit_scene(0, 15f64.to_radians()).expect("bench scene builds")
}

/// Deterministic pseudo-random values in `[-1, 1)`.
pub fn values(seed: u64, n: usize) -> Vec<f64> {
    let mut x = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
    (0..n)
        .map(|_| {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            (x >> 11) as f64 / (1u64 << 52) as f64 - 1.0
        })
        .collect()
}

pub fn cost_matrix(n: usize, seed: u64) -> Vec<Vec<f64>> {
    values(seed, n * n).chunks(n).map(<[f64]>::to_vec).collect()
}

/// `items` entries of `frames` vectors each, in `dim` dimensions.
pub fn index(items: usize, frames: usize, dim: usize) -> EmbeddingIndex {
    let entries = (0..items)
        .map(|i| {
            let vs = values(i as u64 + 1, frames * dim).chunks(dim).map(<[f64]>::to_vec).collect();
            (format!("item{i:04}"), vs, format!("item{i:04}.json").into())
        })
        .collect();
    build_index(entries).expect("bench index builds")
}
