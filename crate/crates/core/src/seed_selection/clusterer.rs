//! Clustering backends. The pipeline depends only on the `Clusterer`
//! contract: per-point labels where `-1` marks noise. The default backend
//! wraps the `hdbscan` crate; tests inject fixed labelings.

use hdbscan::{Hdbscan, HdbscanHyperParams};

use crate::embedding::EmbeddingMatrix;
use crate::error::Error;
use crate::Result;

/// Label value a backend uses for points it considers noise.
pub const NOISE: i64 = -1;

pub trait Clusterer: Send + Sync {
    fn name(&self) -> &'static str;

    /// One label per row of `m`; `NOISE` for unassigned points. Cluster ids
    /// need not be contiguous, the caller compacts them.
    fn cluster(&self, m: &EmbeddingMatrix, min_cluster_size: usize) -> Result<Vec<i64>>;
}

/// Density-based clustering via the `hdbscan` crate.
pub struct HdbscanClusterer;

impl Clusterer for HdbscanClusterer {
    fn name(&self) -> &'static str {
        "hdbscan"
    }

    fn cluster(&self, m: &EmbeddingMatrix, min_cluster_size: usize) -> Result<Vec<i64>> {
        let data = m.to_rows();
        let params = HdbscanHyperParams::builder()
            .min_cluster_size(min_cluster_size.max(2))
            .build();
        let labels = Hdbscan::new(&data, params)
            .cluster()
            .map_err(|e| Error::ClusterBackend(format!("{e:?}")))?;
        Ok(labels.into_iter().map(|l| l as i64).collect())
    }
}

/// Test/injection backend returning a pre-baked labeling.
pub struct FixedClusterer {
    labels: Vec<i64>,
}

impl FixedClusterer {
    pub fn new(labels: Vec<i64>) -> Self {
        FixedClusterer { labels }
    }
}

impl Clusterer for FixedClusterer {
    fn name(&self) -> &'static str {
        "fixed"
    }

    fn cluster(&self, m: &EmbeddingMatrix, _min_cluster_size: usize) -> Result<Vec<i64>> {
        if self.labels.len() != m.n() {
            return Err(Error::ClusterBackend(format!(
                "fixed labeling has {} labels for {} points",
                self.labels.len(),
                m.n()
            )));
        }
        Ok(self.labels.clone())
    }
}
