//! Seed selection: cluster the fused corpus embeddings, score clustering
//! configurations, and draw seed-image batches for the generator.
//!
//! The flow is reduce → cluster → kNN noise reassignment → quality metrics
//! (silhouette S, normalized entropy H, final score (S+H)/2) → configuration
//! ranking across datasets → probability-weighted seed draws.

mod clusterer;
mod reduce;

pub use clusterer::{Clusterer, FixedClusterer, HdbscanClusterer, NOISE};
pub use reduce::{reduce, GaussianProjection, Reducer, DEFAULT_REDUCE_DIM};

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::{EmbeddingMatrix, Modality};
use crate::error::Error;
use crate::Result;

pub const DEFAULT_KNN: usize = 5;

/// Outcome of clustering one embedding matrix under one configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusteringResult {
    pub doc_ids: Vec<String>,
    /// Cluster index in [0, k) per document, after noise reassignment.
    pub labels: Vec<usize>,
    pub k: usize,
    /// Members per cluster; sums to doc count.
    pub sizes: Vec<usize>,
    /// True for documents the backend originally marked as noise.
    pub pre_reassignment_noise: Vec<bool>,
    /// None when k == 1 (silhouette undefined).
    pub silhouette: Option<f64>,
    pub norm_entropy: f64,
    /// None when silhouette is undefined; such configurations are never
    /// auto-selected.
    pub final_score: Option<f64>,
}

impl ClusteringResult {
    pub fn n(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn selectable(&self) -> bool {
        self.final_score.is_some()
    }

    /// Document indices per cluster, in document order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingStrategy {
    /// Cross-cluster: every seed independently samples a cluster, then a member.
    Cc,
    /// In-cluster: one cluster is sampled, all seeds come from it.
    Ic,
}

impl std::str::FromStr for SamplingStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cc" => Ok(SamplingStrategy::Cc),
            "ic" => Ok(SamplingStrategy::Ic),
            other => Err(Error::Other(format!("unknown sampling strategy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub strategy: SamplingStrategy,
    /// Cluster-size bias: p(c) ∝ n_c^alpha.
    pub alpha: f64,
    /// Seeds per batch (2M for M requested documents).
    pub n_seeds: usize,
}

/// Mean silhouette coefficient under Euclidean distance. Singleton-cluster
/// points contribute 0. Errors when fewer than two clusters are present.
pub fn silhouette(m: &EmbeddingMatrix, labels: &[usize]) -> Result<f64> {
    if labels.len() != m.n() {
        return Err(Error::DimensionMismatch(format!(
            "{} labels for {} points",
            labels.len(),
            m.n()
        )));
    }
    let k = match labels.iter().max() {
        Some(&mx) => mx + 1,
        None => return Err(Error::EmptyInput("silhouette")),
    };
    if k < 2 {
        return Err(Error::ClusterBackend("silhouette needs K >= 2".into()));
    }
    let mut sizes = vec![0usize; k];
    for &l in labels {
        sizes[l] += 1;
    }

    let n = m.n();
    let mut total = 0.0;
    for i in 0..n {
        let own = labels[i];
        if sizes[own] <= 1 {
            continue; // contributes 0
        }
        let mut sum_per_cluster = vec![0.0f64; k];
        for j in 0..n {
            if i == j {
                continue;
            }
            sum_per_cluster[labels[j]] += m.distance(i, j);
        }
        let a = sum_per_cluster[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sum_per_cluster[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / n as f64)
}

/// Normalized entropy −Σ p ln p / ln K of the cluster size distribution.
/// Defined as 0 for a single cluster.
pub fn normalized_entropy(sizes: &[usize]) -> Result<f64> {
    if sizes.is_empty() {
        return Err(Error::EmptyInput("normalized_entropy"));
    }
    if sizes.contains(&0) {
        return Err(Error::ClusterBackend("empty cluster in sizes".into()));
    }
    let k = sizes.len();
    if k == 1 {
        return Ok(0.0);
    }
    let n: usize = sizes.iter().sum();
    let h: f64 = sizes
        .iter()
        .map(|&s| {
            let p = s as f64 / n as f64;
            -p * p.ln()
        })
        .sum();
    Ok(h / (k as f64).ln())
}

/// Heuristic clustering quality: mean of silhouette and normalized entropy.
pub fn final_score(s: f64, h: f64) -> f64 {
    (s + h) / 2.0
}

/// Run the clusterer, fold noise points into their kNN-majority cluster, and
/// compute quality metrics over the final labeling.
pub fn cluster_with_reassignment(
    m: &EmbeddingMatrix,
    backend: &dyn Clusterer,
    kappa: usize,
    knn_k: usize,
) -> Result<ClusteringResult> {
    if m.n() <= kappa {
        return Err(Error::TooFewRows { need: kappa + 1, got: m.n() });
    }
    let raw = backend.cluster(m, kappa)?;
    if raw.len() != m.n() {
        return Err(Error::ClusterBackend(format!(
            "{} labels for {} points",
            raw.len(),
            m.n()
        )));
    }

    // Compact backend cluster ids (possibly sparse) to 0..K by ascending id.
    let mut distinct: Vec<i64> = raw.iter().copied().filter(|&l| l != NOISE).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.is_empty() {
        return Err(Error::NoClusters);
    }
    let compact: BTreeMap<i64, usize> =
        distinct.iter().enumerate().map(|(i, &l)| (l, i)).collect();
    let k = distinct.len();

    let noise_mask: Vec<bool> = raw.iter().map(|&l| l == NOISE).collect();
    let mut labels: Vec<usize> = raw
        .iter()
        .map(|l| compact.get(l).copied().unwrap_or(usize::MAX))
        .collect();

    let assigned: Vec<usize> = (0..m.n()).filter(|&i| !noise_mask[i]).collect();
    for i in 0..m.n() {
        if !noise_mask[i] {
            continue;
        }
        labels[i] = knn_majority(m, i, &assigned, &labels, knn_k, k);
    }

    let mut sizes = vec![0usize; k];
    for &l in &labels {
        sizes[l] += 1;
    }

    let norm_entropy = normalized_entropy(&sizes)?;
    let (sil, score) = if k >= 2 {
        let s = silhouette(m, &labels)?;
        (Some(s), Some(final_score(s, norm_entropy)))
    } else {
        (None, None)
    };

    Ok(ClusteringResult {
        doc_ids: m.doc_ids().to_vec(),
        labels,
        k,
        sizes,
        pre_reassignment_noise: noise_mask,
        silhouette: sil,
        norm_entropy,
        final_score: score,
    })
}

/// Majority cluster among the k nearest assigned points. Distance ties break
/// toward the lower point index, vote ties toward the smaller cluster index.
fn knn_majority(
    m: &EmbeddingMatrix,
    point: usize,
    assigned: &[usize],
    labels: &[usize],
    k: usize,
    n_clusters: usize,
) -> usize {
    let mut dists: Vec<(f64, usize)> = assigned
        .iter()
        .map(|&j| (m.distance(point, j), j))
        .collect();
    dists.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let take = k.max(1).min(dists.len());
    let mut votes = vec![0usize; n_clusters];
    for &(_, j) in &dists[..take] {
        votes[labels[j]] += 1;
    }
    let best = *votes.iter().max().unwrap();
    votes.iter().position(|&v| v == best).unwrap()
}

/// One scored configuration for ranking.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfigScore {
    pub embedding: Modality,
    pub kappa: usize,
    pub final_score: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankedConfig {
    pub embedding: Modality,
    pub kappa: usize,
    pub points: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfigRanking {
    pub entries: Vec<RankedConfig>,
}

/// Cumulative position scoring across datasets: within each dataset the
/// top-N configurations by final score earn N..1 points; totals are summed
/// per configuration and sorted descending. All ties break by (embedding
/// name, κ) so the ranking is reproducible.
pub fn rank_configurations(
    per_dataset: &BTreeMap<String, Vec<ConfigScore>>,
    top_n: usize,
) -> Result<ConfigRanking> {
    if top_n < 1 {
        return Err(Error::Other("rank_configurations: N must be >= 1".into()));
    }
    let mut totals: BTreeMap<(&'static str, usize), u64> = BTreeMap::new();
    for scores in per_dataset.values() {
        if scores.is_empty() {
            return Err(Error::EmptyInput("dataset with no scored configs"));
        }
        let mut ordered: Vec<&ConfigScore> = scores.iter().collect();
        ordered.sort_by(|a, b| {
            b.final_score
                .total_cmp(&a.final_score)
                .then_with(|| a.embedding.as_str().cmp(b.embedding.as_str()))
                .then_with(|| a.kappa.cmp(&b.kappa))
        });
        for (pos, cfg) in ordered.iter().take(top_n).enumerate() {
            *totals.entry((cfg.embedding.as_str(), cfg.kappa)).or_default() +=
                (top_n - pos) as u64;
        }
    }
    let mut entries: Vec<RankedConfig> = totals
        .into_iter()
        .map(|((emb, kappa), points)| RankedConfig {
            embedding: emb.parse().expect("modality round-trip"),
            kappa,
            points,
        })
        .collect();
    entries.sort_by(|a, b| {
        b.points
            .cmp(&a.points)
            .then_with(|| a.embedding.as_str().cmp(b.embedding.as_str()))
            .then_with(|| a.kappa.cmp(&b.kappa))
    });
    Ok(ConfigRanking { entries })
}

/// p(c) ∝ n_c^alpha, normalized to sum to 1.
pub fn cluster_probabilities(sizes: &[usize], alpha: f64) -> Vec<f64> {
    let weights: Vec<f64> = sizes.iter().map(|&s| (s as f64).powf(alpha)).collect();
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

/// Draw a seed batch of `cfg.n_seeds` document ids.
///
/// CC samples (cluster, member) independently per seed. IC samples one
/// cluster and takes all seeds from it: without replacement when the cluster
/// has at least `n_seeds` members, with replacement otherwise.
pub fn draw_seeds<R: Rng>(
    clustering: &ClusteringResult,
    cfg: &SamplingConfig,
    rng: &mut R,
) -> Result<Vec<String>> {
    if clustering.n() == 0 || clustering.k == 0 {
        return Err(Error::EmptyInput("draw_seeds"));
    }
    if cfg.n_seeds == 0 {
        return Err(Error::EmptyInput("n_seeds"));
    }
    let members = clustering.members();
    let probs = cluster_probabilities(&clustering.sizes, cfg.alpha);

    let mut picked = Vec::with_capacity(cfg.n_seeds);
    match cfg.strategy {
        SamplingStrategy::Cc => {
            for _ in 0..cfg.n_seeds {
                let c = sample_categorical(&probs, rng);
                let ms = &members[c];
                picked.push(ms[rng.gen_range(0..ms.len())]);
            }
        }
        SamplingStrategy::Ic => {
            let c = sample_categorical(&probs, rng);
            let ms = &members[c];
            if ms.len() >= cfg.n_seeds {
                // Partial Fisher-Yates for a without-replacement sample.
                let mut pool = ms.clone();
                for i in 0..cfg.n_seeds {
                    let j = rng.gen_range(i..pool.len());
                    pool.swap(i, j);
                    picked.push(pool[i]);
                }
            } else {
                for _ in 0..cfg.n_seeds {
                    picked.push(ms[rng.gen_range(0..ms.len())]);
                }
            }
        }
    }
    Ok(picked.into_iter().map(|i| clustering.doc_ids[i].clone()).collect())
}

fn sample_categorical<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}
