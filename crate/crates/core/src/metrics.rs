//! Distance-matrix computation and retrieval evaluation (AP, mAP, CMC).
//!
//! All pairwise math accumulates in `f64` even though features are stored as
//! `f32`. Per-query computations are row-independent, so parallelising over
//! rows cannot change the result.

use rayon::prelude::*;

use crate::data::{FeatureSet, ImageLabel, RankList};
use crate::error::{Error, Result};

/// Pairwise dissimilarity metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    /// Plain (non-squared) L2 distance.
    Euclidean,
    /// `1 - cos(a, b)`; undefined for zero vectors.
    Cosine,
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(Metric::Euclidean),
            "cosine" => Ok(Metric::Cosine),
            other => Err(Error::parse(format!(
                "unknown metric '{other}' (expected 'euclidean' or 'cosine')"
            ))),
        }
    }
}

/// Q x G matrix of finite, non-negative dissimilarities.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl DistanceMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::validation(format!(
                "distance matrix has {} values, expected {rows}x{cols}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::validation(format!(
                "distance matrix entries must be finite and >= 0, got {v}"
            )));
        }
        Ok(DistanceMatrix { rows, cols, values })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

fn euclidean(a: &[f32], b: &[f32]) -> f64 {
    let mut acc = 0.0f64;
    for k in 0..a.len() {
        let d = a[k] as f64 - b[k] as f64;
        acc += d * d;
    }
    acc.sqrt()
}

fn norm(a: &[f32]) -> f64 {
    let mut acc = 0.0f64;
    for &v in a {
        acc += v as f64 * v as f64;
    }
    acc.sqrt()
}

fn cosine(a: &[f32], b: &[f32], norm_a: f64, norm_b: f64) -> f64 {
    let mut dot = 0.0f64;
    for k in 0..a.len() {
        dot += a[k] as f64 * b[k] as f64;
    }
    // Guard against 1 - x/(sqrt(x)*sqrt(x)) dipping below zero.
    (1.0 - dot / (norm_a * norm_b)).max(0.0)
}

/// Compute the Q x G distance matrix between two feature sets.
pub fn distance_matrix(
    queries: &FeatureSet,
    gallery: &FeatureSet,
    metric: Metric,
) -> Result<DistanceMatrix> {
    if queries.dim() != gallery.dim() {
        return Err(Error::validation(format!(
            "dimension mismatch: queries dim {} vs gallery dim {}",
            queries.dim(),
            gallery.dim()
        )));
    }
    let (q, g) = (queries.len(), gallery.len());
    let (q_norms, g_norms) = match metric {
        Metric::Euclidean => (Vec::new(), Vec::new()),
        Metric::Cosine => {
            let qn: Vec<f64> = queries.rows().map(norm).collect();
            let gn: Vec<f64> = gallery.rows().map(norm).collect();
            if qn.iter().chain(gn.iter()).any(|&n| n == 0.0) {
                return Err(Error::validation(
                    "cosine distance is undefined for zero vectors",
                ));
            }
            (qn, gn)
        }
    };

    let mut values = vec![0.0f64; q * g];
    values
        .par_chunks_mut(g.max(1))
        .enumerate()
        .for_each(|(i, row)| {
            let qi = queries.row(i);
            for j in 0..g {
                row[j] = match metric {
                    Metric::Euclidean => euclidean(qi, gallery.row(j)),
                    Metric::Cosine => cosine(qi, gallery.row(j), q_norms[i], g_norms[j]),
                };
            }
        });
    DistanceMatrix::new(q, g, values)
}

/// Sort each query's gallery by ascending distance, ties broken by ascending
/// gallery index.
pub fn rank(dist: &DistanceMatrix) -> RankList {
    let lists = (0..dist.rows())
        .map(|i| {
            let row = dist.row(i);
            let mut idx: Vec<usize> = (0..dist.cols()).collect();
            // Stable sort keeps ascending-index order for ties.
            idx.sort_by(|&a, &b| row[a].total_cmp(&row[b]));
            idx
        })
        .collect();
    RankList::from_valid(lists)
}

/// Evaluation options.
#[derive(Debug, Clone)]
pub struct EvalOptions {
    /// CMC curve length.
    pub max_rank: usize,
    /// Drop same-camera same-identity gallery entries from each query's
    /// ranking before scoring.
    pub cross_camera: bool,
    /// Truncate the ranking to this depth for AP (challenge-style scoring);
    /// `None` scores the full ranking.
    pub top_k_map: Option<usize>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            max_rank: 100,
            cross_camera: false,
            top_k_map: None,
        }
    }
}

/// mAP, CMC curve and per-query APs (`None` marks queries with no relevant
/// gallery item; those are excluded from the mAP mean).
#[derive(Debug, Clone)]
pub struct EvalResult {
    pub map: f64,
    pub cmc: Vec<f64>,
    pub per_query_ap: Vec<Option<f64>>,
}

/// Score a ranking against identity labels.
///
/// Relevant = same identity. AP follows the standard sum of precision at each
/// relevant hit, divided by the number of relevant items (capped at the
/// truncation depth when `top_k_map` is set). `cmc[r]` is the fraction of
/// valid queries with a hit within the first `r + 1` results.
pub fn evaluate(
    ranks: &RankList,
    query_labels: &[ImageLabel],
    gallery_labels: &[ImageLabel],
    options: &EvalOptions,
) -> Result<EvalResult> {
    if options.max_rank == 0 {
        return Err(Error::validation("max_rank must be >= 1"));
    }
    if ranks.len() != query_labels.len() {
        return Err(Error::validation(format!(
            "{} rankings but {} query labels",
            ranks.len(),
            query_labels.len()
        )));
    }

    let per_query: Vec<(Option<f64>, Vec<bool>)> = ranks
        .lists()
        .par_iter()
        .zip(query_labels.par_iter())
        .map(|(list, q)| {
            for &gidx in list {
                if gidx >= gallery_labels.len() {
                    return Err(Error::validation(format!(
                        "ranked gallery index {gidx} has no label"
                    )));
                }
            }
            // Camera filter: drop same-camera same-identity entries entirely.
            let filtered: Vec<bool> = list
                .iter()
                .filter(|&&gidx| {
                    let gl = gallery_labels[gidx];
                    !(options.cross_camera && gl.identity == q.identity && gl.camera == q.camera)
                })
                .map(|&gidx| gallery_labels[gidx].identity == q.identity)
                .collect();

            let total_relevant = filtered.iter().filter(|&&r| r).count();
            if total_relevant == 0 {
                return Ok((None, filtered));
            }

            let depth = options.top_k_map.unwrap_or(filtered.len());
            let mut hits = 0usize;
            let mut precision_sum = 0.0f64;
            for (pos, &rel) in filtered.iter().take(depth).enumerate() {
                if rel {
                    hits += 1;
                    precision_sum += hits as f64 / (pos + 1) as f64;
                }
            }
            let denom = total_relevant.min(depth);
            Ok((Some(precision_sum / denom as f64), filtered))
        })
        .collect::<Result<_>>()?;

    let mut cmc_counts = vec![0usize; options.max_rank];
    let mut valid = 0usize;
    let mut ap_sum = 0.0f64;
    let mut per_query_ap = Vec::with_capacity(per_query.len());
    for (ap, filtered) in &per_query {
        per_query_ap.push(*ap);
        let Some(ap) = ap else { continue };
        valid += 1;
        ap_sum += ap;
        if let Some(first_hit) = filtered.iter().position(|&r| r) {
            for r in first_hit..options.max_rank {
                cmc_counts[r] += 1;
            }
        }
    }

    let map = if valid > 0 { ap_sum / valid as f64 } else { 0.0 };
    let cmc = cmc_counts
        .iter()
        .map(|&c| if valid > 0 { c as f64 / valid as f64 } else { 0.0 })
        .collect();
    Ok(EvalResult {
        map,
        cmc,
        per_query_ap,
    })
}
