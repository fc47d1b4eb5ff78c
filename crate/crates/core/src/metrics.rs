//! FID and Layout-FID between real and synthetic document sets.
//!
//! Features come from an embedding client (or precomputed matrices); each set
//! is summarized as a Gaussian and compared with the Fréchet distance. Sample
//! covariance uses the N−1 denominator, and the matrix square root is
//! regularized with +εI (ε = 1e−6) when it fails to converge.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::geometry::{PageSize, PxBox};
use crate::Result;

/// Added to the covariance diagonal when the square root does not converge.
pub const REGULARIZATION_EPS: f64 = 1e-6;

/// Largest tolerated negative eigenvalue magnitude in the matrix root.
/// Anything below −NEG_EIGEN_TOL is treated as non-convergence.
const NEG_EIGEN_TOL: f64 = 1e-6;

/// Mean and covariance of one feature set.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianFit {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianFit {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Sample mean and covariance (denominator N−1) of row-major features.
pub fn fit_gaussian(features: &[Vec<f64>]) -> Result<GaussianFit> {
    if features.len() < 2 {
        return Err(Error::TooFewRows { need: 2, got: features.len() });
    }
    let d = features[0].len();
    if d == 0 {
        return Err(Error::EmptyInput("zero-dimensional features"));
    }
    for (i, row) in features.iter().enumerate() {
        if row.len() != d {
            return Err(Error::DimensionMismatch(format!(
                "row 0 has {d} features, row {i} has {}",
                row.len()
            )));
        }
    }
    let n = features.len() as f64;
    let mut mean = DVector::zeros(d);
    for row in features {
        for (j, v) in row.iter().enumerate() {
            mean[j] += v;
        }
    }
    mean /= n;

    let mut cov = DMatrix::zeros(d, d);
    for row in features {
        let centered = DVector::from_iterator(d, row.iter().enumerate().map(|(j, v)| v - mean[j]));
        cov += &centered * centered.transpose();
    }
    cov /= n - 1.0;
    // Kill the asymmetry that accumulates in floating point.
    let cov = (&cov + cov.transpose()) * 0.5;
    Ok(GaussianFit { mean, cov })
}

/// Square root of a symmetric PSD matrix via eigendecomposition. Eigenvalues
/// below −NEG_EIGEN_TOL mean the input is not PSD enough to root.
fn sqrtm_psd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    if let Some(&worst) = eig
        .eigenvalues
        .iter()
        .filter(|&&l| l < -NEG_EIGEN_TOL)
        .min_by(|a, b| a.total_cmp(b))
    {
        return Err(Error::NotPsd(worst));
    }
    let roots = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()),
    );
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose())
}

/// Tr((Σ1·Σ2)^{1/2}) computed through the symmetric product
/// sqrt(Σ1)·Σ2·sqrt(Σ1), which shares its eigenvalues with Σ1·Σ2.
fn sqrt_product_trace(cov1: &DMatrix<f64>, cov2: &DMatrix<f64>) -> Result<f64> {
    let a = sqrtm_psd(cov1)?;
    let inner = &a * cov2 * &a;
    let sym = (&inner + inner.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    if let Some(&worst) = eig
        .eigenvalues
        .iter()
        .filter(|&&l| l < -NEG_EIGEN_TOL)
        .min_by(|a, b| a.total_cmp(b))
    {
        return Err(Error::NotPsd(worst));
    }
    Ok(eig.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()).sum())
}

/// ‖μ1−μ2‖² + Tr(Σ1 + Σ2 − 2·(Σ1Σ2)^{1/2}). Retried once with +εI on both
/// covariances if the root fails; small negative totals clamp to zero.
pub fn frechet_distance(g1: &GaussianFit, g2: &GaussianFit) -> Result<f64> {
    if g1.dim() != g2.dim() {
        return Err(Error::DimensionMismatch(format!(
            "fits have dimensions {} and {}",
            g1.dim(),
            g2.dim()
        )));
    }
    let mean_term = (&g1.mean - &g2.mean).norm_squared();
    let trace_root = match sqrt_product_trace(&g1.cov, &g2.cov) {
        Ok(t) => t,
        Err(_) => {
            let eye = DMatrix::identity(g1.dim(), g1.dim()) * REGULARIZATION_EPS;
            sqrt_product_trace(&(&g1.cov + &eye), &(&g2.cov + &eye))?
        }
    };
    let dist = mean_term + g1.cov.trace() + g2.cov.trace() - 2.0 * trace_root;
    // Tiny negative residue is floating-point noise; the distance is >= 0.
    Ok(dist.max(0.0))
}

/// Fit both feature sets and return their Fréchet distance.
pub fn fid_from_features(real: &[Vec<f64>], synth: &[Vec<f64>]) -> Result<f64> {
    let g1 = fit_gaussian(real)?;
    let g2 = fit_gaussian(synth)?;
    frechet_distance(&g1, &g2)
}

/// Layout geometry of one document: the page and its content boxes (words or
/// regions), which is all an image-free layout embedding needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutSample {
    pub page: PageSize,
    pub boxes: Vec<PxBox>,
}

/// Maps one document layout to a fixed-dimension feature vector.
pub trait EmbeddingClient: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn embed(&self, sample: &LayoutSample) -> Result<Vec<f64>>;

    fn embed_all(&self, samples: &[LayoutSample]) -> Result<Vec<Vec<f64>>> {
        samples.par_iter().map(|s| self.embed(s)).collect()
    }
}

/// Built-in layout embedding: an 8×8 grid of cell coverage fractions plus
/// box count and mean box area, both normalized. D = 66.
#[derive(Debug, Clone)]
pub struct GridOccupancyEmbedder {
    pub grid: usize,
}

impl Default for GridOccupancyEmbedder {
    fn default() -> Self {
        GridOccupancyEmbedder { grid: 8 }
    }
}

impl EmbeddingClient for GridOccupancyEmbedder {
    fn name(&self) -> &str {
        "grid-occupancy"
    }

    fn dim(&self) -> usize {
        self.grid * self.grid + 2
    }

    fn embed(&self, sample: &LayoutSample) -> Result<Vec<f64>> {
        let g = self.grid;
        let page = sample.page.as_box();
        let page_area = page.area().max(1) as f64;
        let (w, h) = (sample.page.width as f64, sample.page.height as f64);
        if w <= 0.0 || h <= 0.0 {
            return Err(Error::EmptyInput("zero-sized page"));
        }
        let mut features = vec![0.0; g * g + 2];
        for row in 0..g {
            for col in 0..g {
                let cell = PxBox::new(
                    (col as f64 * w / g as f64).round() as i64,
                    (row as f64 * h / g as f64).round() as i64,
                    ((col + 1) as f64 * w / g as f64).round() as i64,
                    ((row + 1) as f64 * h / g as f64).round() as i64,
                );
                let cell_area = cell.area().max(1) as f64;
                let covered: i64 = sample
                    .boxes
                    .iter()
                    .filter_map(|b| cell.intersection(b))
                    .map(|i| i.area())
                    .sum();
                features[row * g + col] = (covered as f64 / cell_area).min(1.0);
            }
        }
        features[g * g] = (sample.boxes.len() as f64 / 256.0).min(1.0);
        let mean_area = if sample.boxes.is_empty() {
            0.0
        } else {
            sample.boxes.iter().map(|b| b.area()).sum::<i64>() as f64
                / sample.boxes.len() as f64
                / page_area
        };
        features[g * g + 1] = mean_area.min(1.0);
        Ok(features)
    }
}

/// Embed both document sets with the client, fit Gaussians, and return the
/// Fréchet distance between them.
pub fn layout_fid(
    real: &[LayoutSample],
    synth: &[LayoutSample],
    client: &dyn EmbeddingClient,
) -> Result<f64> {
    if real.is_empty() {
        return Err(Error::EmptyInput("real document set"));
    }
    if synth.is_empty() {
        return Err(Error::EmptyInput("synthetic document set"));
    }
    let real_features = client.embed_all(real)?;
    let synth_features = client.embed_all(synth)?;
    fid_from_features(&real_features, &synth_features)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn scalar_fit(mean: f64, var: f64) -> GaussianFit {
        GaussianFit {
            mean: DVector::from_vec(vec![mean]),
            cov: DMatrix::from_vec(1, 1, vec![var]),
        }
    }

    #[test]
    fn identical_rows_give_zero_covariance() {
        let fit = fit_gaussian(&[vec![3.0, -1.0], vec![3.0, -1.0]]).unwrap();
        assert_eq!(fit.mean, DVector::from_vec(vec![3.0, -1.0]));
        assert!(fit.cov.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sample_variance_uses_n_minus_one() {
        // Rows [0], [2] in 1-D: mean 1, variance (1 + 1) / (2 - 1) = 2.
        let fit = fit_gaussian(&[vec![0.0], vec![2.0]]).unwrap();
        assert_eq!(fit.mean[0], 1.0);
        assert_eq!(fit.cov[(0, 0)], 2.0);
    }

    #[test]
    fn single_row_is_an_error() {
        assert!(matches!(
            fit_gaussian(&[vec![1.0]]),
            Err(Error::TooFewRows { need: 2, got: 1 })
        ));
        assert!(matches!(fit_gaussian(&[]), Err(Error::TooFewRows { got: 0, .. })));
    }

    #[test]
    fn ragged_rows_are_rejected() {
        assert!(matches!(
            fit_gaussian(&[vec![1.0, 2.0], vec![3.0]]),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn identical_fits_have_zero_distance() {
        let rows = vec![
            vec![1.0, 2.0, 3.0],
            vec![0.5, 1.0, -1.0],
            vec![2.0, 0.0, 0.5],
            vec![-1.0, 3.0, 1.5],
        ];
        let g = fit_gaussian(&rows).unwrap();
        let d = frechet_distance(&g, &g).unwrap();
        assert!(d.abs() <= 1e-9, "got {d}");
    }

    #[test]
    fn unit_mean_shift_in_1d() {
        // N(0,1) vs N(1,1): only the mean term contributes.
        let d = frechet_distance(&scalar_fit(0.0, 1.0), &scalar_fit(1.0, 1.0)).unwrap();
        assert!((d - 1.0).abs() < 1e-9, "got {d}");
    }

    #[test]
    fn variance_gap_in_1d() {
        // N(0,1) vs N(0,4): 1 + 4 - 2·sqrt(1·4) = 1.
        let d = frechet_distance(&scalar_fit(0.0, 1.0), &scalar_fit(0.0, 4.0)).unwrap();
        assert!((d - 1.0).abs() < 1e-9, "got {d}");
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let g1 = scalar_fit(0.0, 1.0);
        let g2 = fit_gaussian(&[vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
        assert!(matches!(frechet_distance(&g1, &g2), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn mean_shift_oracle_matches_closed_form() {
        // Equal covariances, every feature shifted by δ: distance = D·δ².
        let mut rng = StdRng::seed_from_u64(41);
        let d = 5;
        let delta = 0.75;
        let rows: Vec<Vec<f64>> =
            (0..40).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let shifted: Vec<Vec<f64>> =
            rows.iter().map(|r| r.iter().map(|v| v + delta).collect()).collect();
        let got = fid_from_features(&rows, &shifted).unwrap();
        let want = d as f64 * delta * delta;
        assert!((got - want).abs() < 1e-6, "got {got}, want {want}");
    }

    #[test]
    fn row_permutation_does_not_change_distance() {
        let mut rng = StdRng::seed_from_u64(7);
        let rows: Vec<Vec<f64>> =
            (0..12).map(|_| (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
        let other: Vec<Vec<f64>> =
            (0..12).map(|_| (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
        let baseline = fid_from_features(&rows, &other).unwrap();
        let mut shuffled = rows.clone();
        shuffled.reverse();
        shuffled.swap(1, 7);
        let permuted = fid_from_features(&shuffled, &other).unwrap();
        assert!((baseline - permuted).abs() < 1e-9);
    }

    #[test]
    fn distance_is_symmetric_and_nonnegative() {
        let mut rng = StdRng::seed_from_u64(13);
        for _ in 0..5 {
            let a: Vec<Vec<f64>> =
                (0..10).map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
            let b: Vec<Vec<f64>> =
                (0..10).map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
            let ab = fid_from_features(&a, &b).unwrap();
            let ba = fid_from_features(&b, &a).unwrap();
            assert!(ab >= 0.0);
            assert!((ab - ba).abs() < 1e-9, "ab {ab} vs ba {ba}");
        }
    }

    #[test]
    fn degenerate_covariance_still_converges() {
        // Rank-deficient covariance (third feature constant) forces the
        // regularized retry path to stay finite and nonnegative.
        let a = vec![
            vec![0.0, 0.0, 5.0],
            vec![1.0, 1.0, 5.0],
            vec![2.0, 2.0, 5.0],
        ];
        let b = vec![
            vec![0.5, 0.0, 5.0],
            vec![1.5, 1.0, 5.0],
            vec![2.5, 2.0, 5.0],
        ];
        let d = fid_from_features(&a, &b).unwrap();
        assert!(d.is_finite());
        assert!(d >= 0.0);
        assert!((d - 0.25).abs() < 1e-6, "pure mean shift of 0.5 in one feature: {d}");
    }

    fn sample(seed: u64, page: PageSize, boxes: usize) -> LayoutSample {
        let mut rng = StdRng::seed_from_u64(seed);
        let boxes = (0..boxes)
            .map(|_| {
                let left = rng.gen_range(0..(page.width as i64 - 60));
                let top = rng.gen_range(0..(page.height as i64 - 30));
                PxBox::new(left, top, left + rng.gen_range(20..60), top + rng.gen_range(10..30))
            })
            .collect();
        LayoutSample { page, boxes }
    }

    #[test]
    fn identical_sets_have_zero_layout_fid() {
        let page = PageSize::new(794, 1123);
        let docs: Vec<LayoutSample> = (0..8).map(|i| sample(100 + i, page, 12)).collect();
        let fid = layout_fid(&docs, &docs, &GridOccupancyEmbedder::default()).unwrap();
        assert!(fid.abs() <= 1e-9, "got {fid}");
    }

    #[test]
    fn disjoint_layouts_have_positive_layout_fid() {
        let page = PageSize::new(794, 1123);
        let dense: Vec<LayoutSample> = (0..8).map(|i| sample(i, page, 40)).collect();
        let sparse: Vec<LayoutSample> = (0..8).map(|i| sample(50 + i, page, 3)).collect();
        let fid = layout_fid(&dense, &sparse, &GridOccupancyEmbedder::default()).unwrap();
        assert!(fid > 0.0, "got {fid}");
    }

    #[test]
    fn empty_set_is_an_error() {
        let page = PageSize::new(794, 1123);
        let docs = vec![sample(1, page, 5), sample(2, page, 5)];
        assert!(matches!(
            layout_fid(&[], &docs, &GridOccupancyEmbedder::default()),
            Err(Error::EmptyInput("real document set"))
        ));
        assert!(matches!(
            layout_fid(&docs, &[], &GridOccupancyEmbedder::default()),
            Err(Error::EmptyInput("synthetic document set"))
        ));
    }

    #[test]
    fn grid_embedder_dimension_matches_contract() {
        let e = GridOccupancyEmbedder::default();
        assert_eq!(e.dim(), 66);
        let page = PageSize::new(800, 800);
        let full = LayoutSample { page, boxes: vec![page.as_box()] };
        let v = e.embed(&full).unwrap();
        assert_eq!(v.len(), 66);
        // A page-covering box saturates every grid cell.
        assert!(v[..64].iter().all(|&c| (c - 1.0).abs() < 1e-12));
    }
}
