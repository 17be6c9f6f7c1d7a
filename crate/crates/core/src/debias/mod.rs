//! Embedding debiasing (localized centering, all-but-the-top) and hubness
//! diagnostics.
//!
//! Both transforms are batch operations: every statistic (neighborhood
//! centroid, vocabulary centroid, principal components) is computed from
//! the original table before any row changes, so results are independent
//! of processing order and safe to parallelize.

use rayon::prelude::*;
use serde::Serialize;

use crate::embedding::{EmbeddingTable, PAD_ID, SPECIAL_COUNT};
use crate::error::{Error, Result};
use crate::numerics::{cosine_similarity, pca_top_components, Matrix, Vector};

/// Which correction to apply to an embedding table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DebiasMethod {
    None,
    LocalizedCentering { k: usize },
    AllButTheTop { d: usize },
}

impl DebiasMethod {
    pub const DEFAULT_K: usize = 10;
    pub const DEFAULT_D: usize = 3;

    pub fn apply(self, table: &EmbeddingTable) -> Result<EmbeddingTable> {
        match self {
            DebiasMethod::None => Ok(table.clone()),
            DebiasMethod::LocalizedCentering { k } => localized_centering(table, k),
            DebiasMethod::AllButTheTop { d } => all_but_the_top(table, d),
        }
    }
}

/// Similarity used for neighbor queries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Cosine,
    Euclidean,
}

fn similarity(a: &Vector, b: &Vector, metric: Metric) -> f64 {
    match metric {
        // A zero-norm vector has no direction; rank it below everything.
        Metric::Cosine => cosine_similarity(a, b).unwrap_or(f64::NEG_INFINITY),
        Metric::Euclidean => -a.sub(b).expect("table rows share one dimension").norm(),
    }
}

/// Ids of the `k` words most similar to `word_id`, best first, self and
/// special tokens excluded, ties broken by ascending id.
pub fn k_nearest_neighbors(
    table: &EmbeddingTable,
    word_id: usize,
    k: usize,
    metric: Metric,
) -> Result<Vec<usize>> {
    let n = table.vocab.len();
    if word_id >= n {
        return Err(Error::Argument(format!("word id {word_id} out of bounds for {n} tokens")));
    }
    let candidates = (n - SPECIAL_COUNT).saturating_sub((word_id >= SPECIAL_COUNT) as usize);
    if k == 0 || k > candidates {
        return Err(Error::Argument(format!(
            "k = {k} but there are {candidates} candidate neighbors"
        )));
    }

    let query = table.matrix.row_vector(word_id);
    let mut scored: Vec<(f64, usize)> = (SPECIAL_COUNT..n)
        .filter(|&id| id != word_id)
        .map(|id| (similarity(&query, &table.matrix.row_vector(id), metric), id))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    scored.truncate(k);
    Ok(scored.into_iter().map(|(_, id)| id).collect())
}

/// Localized centering: every row becomes `x - c_k(x)` where `c_k(x)` is
/// the mean of x's k nearest neighbors (cosine) in the ORIGINAL table.
/// Special rows are shifted by the same rule but never serve as neighbors;
/// the padding row stays zero.
pub fn localized_centering(table: &EmbeddingTable, k: usize) -> Result<EmbeddingTable> {
    let dim = table.dim();
    let rows: Vec<Vector> = (0..table.vocab.len())
        .into_par_iter()
        .map(|id| {
            if id == PAD_ID {
                return Ok(Vector::zeros(dim));
            }
            let neighbors = k_nearest_neighbors(table, id, k, Metric::Cosine)?;
            let mut centroid = Vector::zeros(dim);
            for &nb in &neighbors {
                centroid = centroid.add(&table.matrix.row_vector(nb))?;
            }
            centroid = centroid.scale(1.0 / neighbors.len() as f64);
            table.matrix.row_vector(id).sub(&centroid)
        })
        .collect::<Result<_>>()?;

    Ok(EmbeddingTable {
        vocab: table.vocab.clone(),
        matrix: Matrix::from_rows(&rows)?,
        oov_ids: table.oov_ids.clone(),
    })
}

/// All-but-the-top: subtract the vocabulary centroid, then remove the
/// projections onto the top `d` principal components of the centered
/// rows. Centroid and PCA see only non-special rows; every row is then
/// transformed, except padding which stays zero.
pub fn all_but_the_top(table: &EmbeddingTable, d: usize) -> Result<EmbeddingTable> {
    let dim = table.dim();
    let n = table.vocab.len();
    if d > dim {
        return Err(Error::Argument(format!("D = {d} exceeds embedding dimension {dim}")));
    }
    if n <= SPECIAL_COUNT {
        return Err(Error::Argument("vocabulary has no words to debias".into()));
    }

    let mut centroid = Vector::zeros(dim);
    for id in SPECIAL_COUNT..n {
        centroid = centroid.add(&table.matrix.row_vector(id))?;
    }
    let centroid = centroid.scale(1.0 / (n - SPECIAL_COUNT) as f64);

    let centered_words: Vec<Vector> = (SPECIAL_COUNT..n)
        .map(|id| table.matrix.row_vector(id).sub(&centroid))
        .collect::<Result<_>>()?;

    let basis = if d > 0 {
        Some(pca_top_components(&Matrix::from_rows(&centered_words)?, d)?)
    } else {
        None
    };

    let rows: Vec<Vector> = (0..n)
        .map(|id| {
            if id == PAD_ID {
                return Ok(Vector::zeros(dim));
            }
            let mut x = table.matrix.row_vector(id).sub(&centroid)?;
            if let Some(basis) = &basis {
                for u in &basis.components {
                    let coeff = u.dot(&x)?;
                    x = x.sub(&u.scale(coeff))?;
                }
            }
            Ok(x)
        })
        .collect::<Result<_>>()?;

    Ok(EmbeddingTable {
        vocab: table.vocab.clone(),
        matrix: Matrix::from_rows(&rows)?,
        oov_ids: table.oov_ids.clone(),
    })
}

/// One hub candidate in a [`HubnessReport`].
#[derive(Debug, Clone, Serialize)]
pub struct HubEntry {
    pub word: String,
    pub n_k: usize,
}

/// k-occurrence statistics of a table: how often each word appears in
/// other words' k-nearest-neighbor lists.
#[derive(Debug, Clone, Serialize)]
pub struct HubnessReport {
    pub k: usize,
    /// Population skewness (third standardized moment) of the counts;
    /// zero when undefined.
    pub skewness: f64,
    /// All scored words, most frequent neighbor first.
    pub top_hubs: Vec<HubEntry>,
    /// Count per vocabulary id; special ids stay zero.
    #[serde(skip)]
    pub n_k: Vec<usize>,
    /// False when fewer than 3 words make skewness meaningless.
    #[serde(skip)]
    pub skewness_defined: bool,
}

impl HubnessReport {
    /// The CLI-facing JSON document, optionally truncating `top_hubs`.
    pub fn to_json(&self, top: Option<usize>) -> String {
        let mut view = self.clone();
        if let Some(top) = top {
            view.top_hubs.truncate(top);
        }
        serde_json::to_string_pretty(&view).expect("report is statically serializable")
    }
}

/// Counts `n_k(x) = |{w : x in kNN(w)}|` over non-special words and
/// summarizes the distribution. The counts always satisfy
/// `sum n_k = k * (number of scored words)`.
pub fn hubness_report(table: &EmbeddingTable, k: usize, metric: Metric) -> Result<HubnessReport> {
    let n = table.vocab.len();
    let lists: Vec<Vec<usize>> = (SPECIAL_COUNT..n)
        .into_par_iter()
        .map(|id| k_nearest_neighbors(table, id, k, metric))
        .collect::<Result<_>>()?;

    let mut n_k = vec![0usize; n];
    for list in lists {
        for id in list {
            n_k[id] += 1;
        }
    }

    let counts: Vec<f64> = n_k[SPECIAL_COUNT..].iter().map(|&c| c as f64).collect();
    let (skewness, skewness_defined) = population_skewness(&counts);

    let mut top: Vec<usize> = (SPECIAL_COUNT..n).collect();
    top.sort_by(|&a, &b| n_k[b].cmp(&n_k[a]).then(a.cmp(&b)));
    let top_hubs = top
        .into_iter()
        .map(|id| HubEntry { word: table.vocab.token(id).to_string(), n_k: n_k[id] })
        .collect();

    Ok(HubnessReport { k, skewness, top_hubs, n_k, skewness_defined })
}

/// Third standardized moment with population (biased) normalization.
/// Returns `(0, false)` for fewer than 3 samples, `(0, true)` for a
/// constant sample.
fn population_skewness(xs: &[f64]) -> (f64, bool) {
    let n = xs.len();
    if n < 3 {
        return (0.0, false);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    let m3 = xs.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n as f64;
    if m2 == 0.0 {
        return (0.0, true);
    }
    (m3 / m2.powf(1.5), true)
}
