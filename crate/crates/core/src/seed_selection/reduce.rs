//! Dimensionality reduction behind a pluggable interface.
//!
//! The reference pipeline runs UMAP to d'=100 before clustering; that lives
//! in an external process. The built-in default is a seeded Gaussian random
//! projection, which preserves pairwise distances well enough for density
//! clustering and keeps the whole pipeline runnable offline. `reduce` itself
//! enforces the pass-through rule for inputs already at or below the target
//! dimension, regardless of backend.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::embedding::{EmbeddingMatrix, Modality};
use crate::error::Error;
use crate::rng::stream_rng;
use crate::Result;

pub const DEFAULT_REDUCE_DIM: usize = 100;

pub trait Reducer: Send + Sync {
    fn name(&self) -> &'static str;

    /// Project `m` to exactly `d_target` dimensions. Called only when
    /// `m.dim() > d_target`. Must be deterministic for a fixed seed.
    fn project(&self, m: &EmbeddingMatrix, d_target: usize, seed: u64) -> Result<EmbeddingMatrix>;
}

/// Reduce to `min(D, d_target)` dimensions: pass-through when the input is
/// already small enough, otherwise delegate to the backend.
pub fn reduce(
    m: &EmbeddingMatrix,
    d_target: usize,
    seed: u64,
    backend: &dyn Reducer,
) -> Result<EmbeddingMatrix> {
    if m.n() == 0 {
        return Err(Error::EmptyInput("reduce"));
    }
    if d_target == 0 {
        return Err(Error::DimensionMismatch("d_target must be >= 1".into()));
    }
    if m.dim() <= d_target {
        return Ok(m.clone().with_modality(Modality::Reduced));
    }
    let out = backend.project(m, d_target, seed)?;
    if out.dim() != d_target || out.n() != m.n() {
        return Err(Error::DimensionMismatch(format!(
            "reducer {} returned {}x{}, expected {}x{}",
            backend.name(),
            out.n(),
            out.dim(),
            m.n(),
            d_target
        )));
    }
    Ok(out.with_modality(Modality::Reduced))
}

/// Seeded Gaussian random projection: y = x R with R_ij ~ N(0, 1/d_target).
pub struct GaussianProjection;

impl Reducer for GaussianProjection {
    fn name(&self) -> &'static str {
        "gaussian-projection"
    }

    fn project(&self, m: &EmbeddingMatrix, d_target: usize, seed: u64) -> Result<EmbeddingMatrix> {
        let d_in = m.dim();
        let mut rng = stream_rng(seed, 0x7265_6475_6365); // "reduce"
        let scale = 1.0 / (d_target as f64).sqrt();
        let mut projection = vec![0.0f64; d_in * d_target];
        for v in projection.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v = z * scale;
        }
        let rows = m
            .rows()
            .map(|row| {
                (0..d_target)
                    .map(|j| {
                        row.iter()
                            .enumerate()
                            .map(|(i, x)| x * projection[i * d_target + j])
                            .sum()
                    })
                    .collect()
            })
            .collect();
        EmbeddingMatrix::from_rows(m.doc_ids().to_vec(), rows, Modality::Reduced)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(n: usize, d: usize) -> EmbeddingMatrix {
        let ids = (0..n).map(|i| format!("d{i}")).collect();
        let rows = (0..n)
            .map(|i| (0..d).map(|j| ((i * 31 + j * 7) % 13) as f64).collect())
            .collect();
        EmbeddingMatrix::from_rows(ids, rows, Modality::Combined).unwrap()
    }

    #[test]
    fn small_input_passes_through() {
        let m = matrix(5, 50);
        let r = reduce(&m, 100, 1, &GaussianProjection).unwrap();
        assert_eq!(r.dim(), 50);
        assert_eq!(r.modality(), Modality::Reduced);
        assert_eq!(r.row(3), m.row(3));
    }

    #[test]
    fn large_input_hits_target_shape() {
        let m = matrix(40, 300);
        let r = reduce(&m, 100, 1, &GaussianProjection).unwrap();
        assert_eq!((r.n(), r.dim()), (40, 100));
    }

    #[test]
    fn same_seed_same_output() {
        let m = matrix(10, 120);
        let a = reduce(&m, 8, 99, &GaussianProjection).unwrap();
        let b = reduce(&m, 8, 99, &GaussianProjection).unwrap();
        assert_eq!(a, b);
        let c = reduce(&m, 8, 100, &GaussianProjection).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn rough_distance_preservation() {
        // Johnson-Lindenstrauss sanity: relative distances survive projection
        // well enough to keep near/far ordering between a tight pair and a
        // far point.
        let ids = vec!["a".into(), "b".into(), "c".into()];
        let mut rows = vec![vec![0.0; 256], vec![0.0; 256], vec![0.0; 256]];
        rows[1][0] = 0.1;
        for v in rows[2].iter_mut() {
            *v = 10.0;
        }
        let m = EmbeddingMatrix::from_rows(ids, rows, Modality::Combined).unwrap();
        let r = reduce(&m, 32, 7, &GaussianProjection).unwrap();
        assert!(r.distance(0, 1) < r.distance(0, 2));
    }
}
