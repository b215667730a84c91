//! Linear-chain CRF: partition function, Viterbi decoding and marginals.
//!
//! A path `y` over `N` positions scores
//! `start[y0] + Σ emit[t][yt] + Σ trans[y(t-1)][yt] + end[y(N-1)]`.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Matrix;

/// Owned CRF parameters: `transitions[i][j]` scores tag `i` followed by `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrfParams {
    pub transitions: Matrix,
    /// `1 × K`
    pub start: Matrix,
    /// `1 × K`
    pub end: Matrix,
}

impl CrfParams {
    pub fn zeros(num_tags: usize) -> Self {
        CrfParams {
            transitions: Array2::zeros((num_tags, num_tags)),
            start: Array2::zeros((1, num_tags)),
            end: Array2::zeros((1, num_tags)),
        }
    }

    pub fn view(&self) -> CrfView<'_> {
        CrfView {
            transitions: &self.transitions,
            start: &self.start,
            end: &self.end,
        }
    }

    pub fn num_tags(&self) -> usize {
        self.transitions.nrows()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CrfView<'a> {
    pub transitions: &'a Matrix,
    pub start: &'a Matrix,
    pub end: &'a Matrix,
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub(crate) fn path_score(emissions: &Matrix, crf: &CrfView<'_>, tags: &[usize]) -> f64 {
    let Some((&first, _)) = tags.split_first() else {
        return 0.0;
    };
    let mut score = crf.start[[0, first]] + emissions[[0, first]];
    for t in 1..tags.len() {
        score += crf.transitions[[tags[t - 1], tags[t]]] + emissions[[t, tags[t]]];
    }
    score + crf.end[[0, tags[tags.len() - 1]]]
}

fn forward_table(emissions: &Matrix, crf: &CrfView<'_>) -> Matrix {
    let (n, k) = emissions.dim();
    let mut alpha = Array2::zeros((n, k));
    for j in 0..k {
        alpha[[0, j]] = crf.start[[0, j]] + emissions[[0, j]];
    }
    for t in 1..n {
        for j in 0..k {
            let prev = (0..k).map(|i| alpha[[t - 1, i]] + crf.transitions[[i, j]]);
            alpha[[t, j]] = log_sum_exp(prev) + emissions[[t, j]];
        }
    }
    alpha
}

fn backward_table(emissions: &Matrix, crf: &CrfView<'_>) -> Matrix {
    let (n, k) = emissions.dim();
    let mut beta = Array2::zeros((n, k));
    for i in 0..k {
        beta[[n - 1, i]] = crf.end[[0, i]];
    }
    for t in (0..n - 1).rev() {
        for i in 0..k {
            let next = (0..k).map(|j| crf.transitions[[i, j]] + emissions[[t + 1, j]] + beta[[t + 1, j]]);
            beta[[t, i]] = log_sum_exp(next);
        }
    }
    beta
}

pub(crate) fn log_partition(emissions: &Matrix, crf: &CrfView<'_>) -> f64 {
    let n = emissions.nrows();
    if n == 0 {
        return 0.0;
    }
    let alpha = forward_table(emissions, crf);
    log_sum_exp((0..emissions.ncols()).map(|j| alpha[[n - 1, j]] + crf.end[[0, j]]))
}

/// Expected feature counts under the CRF posterior.
#[derive(Debug, Clone, PartialEq)]
pub struct CrfMarginals {
    /// `P(y_t = j)`, shape `N × K`.
    pub unary: Matrix,
    /// `Σ_t P(y_(t-1) = i, y_t = j)`, shape `K × K`.
    pub pairwise: Matrix,
    pub start: Matrix,
    pub end: Matrix,
}

impl CrfMarginals {
    /// Subtracts the observed counts of `tags`, turning expectations into
    /// the gradient of the negative log-likelihood.
    pub(crate) fn subtract_path(&mut self, tags: &[usize]) {
        let Some((&first, _)) = tags.split_first() else {
            return;
        };
        self.start[[0, first]] -= 1.0;
        self.end[[0, tags[tags.len() - 1]]] -= 1.0;
        for (t, &y) in tags.iter().enumerate() {
            self.unary[[t, y]] -= 1.0;
            if t > 0 {
                self.pairwise[[tags[t - 1], y]] -= 1.0;
            }
        }
    }
}

pub(crate) fn marginals(emissions: &Matrix, crf: &CrfView<'_>) -> CrfMarginals {
    let (n, k) = emissions.dim();
    let mut out = CrfMarginals {
        unary: Array2::zeros((n, k)),
        pairwise: Array2::zeros((k, k)),
        start: Array2::zeros((1, k)),
        end: Array2::zeros((1, k)),
    };
    if n == 0 {
        return out;
    }
    let alpha = forward_table(emissions, crf);
    let beta = backward_table(emissions, crf);
    let log_z = log_sum_exp((0..k).map(|j| alpha[[n - 1, j]] + crf.end[[0, j]]));
    for t in 0..n {
        for j in 0..k {
            out.unary[[t, j]] = (alpha[[t, j]] + beta[[t, j]] - log_z).exp();
        }
    }
    for t in 1..n {
        for i in 0..k {
            for j in 0..k {
                out.pairwise[[i, j]] +=
                    (alpha[[t - 1, i]] + crf.transitions[[i, j]] + emissions[[t, j]] + beta[[t, j]] - log_z).exp();
            }
        }
    }
    out.start.row_mut(0).assign(&out.unary.row(0));
    out.end.row_mut(0).assign(&out.unary.row(n - 1));
    out
}

fn check_shapes(emissions: &Matrix, crf: &CrfParams) -> Result<()> {
    let k = crf.num_tags();
    if emissions.ncols() != k || crf.transitions.ncols() != k || crf.start.dim() != (1, k) || crf.end.dim() != (1, k) {
        return Err(Error::Dimension(format!(
            "emissions have {} tags; CRF has transitions {:?}, start {:?}, end {:?}",
            emissions.ncols(),
            crf.transitions.dim(),
            crf.start.dim(),
            crf.end.dim()
        )));
    }
    if emissions.nrows() == 0 {
        return Err(Error::Dimension("CRF needs at least one position".into()));
    }
    Ok(())
}

/// `log Σ_y exp(score(y))` over all tag paths.
pub fn crf_forward_log_z(emissions: &Matrix, crf: &CrfParams) -> Result<f64> {
    check_shapes(emissions, crf)?;
    Ok(log_partition(emissions, &crf.view()))
}

pub fn crf_path_score(emissions: &Matrix, crf: &CrfParams, tags: &[usize]) -> Result<f64> {
    check_shapes(emissions, crf)?;
    if tags.len() != emissions.nrows() || tags.iter().any(|&t| t >= crf.num_tags()) {
        return Err(Error::Input("tag path does not fit the emissions".into()));
    }
    Ok(path_score(emissions, &crf.view(), tags))
}

/// Posterior marginals of every position and transition.
pub fn crf_marginals(emissions: &Matrix, crf: &CrfParams) -> Result<CrfMarginals> {
    check_shapes(emissions, crf)?;
    Ok(marginals(emissions, &crf.view()))
}

/// Highest-scoring path. Ties go to the lower tag index at every step.
pub fn crf_viterbi(emissions: &Matrix, crf: &CrfParams) -> Result<Vec<usize>> {
    check_shapes(emissions, crf)?;
    Ok(viterbi(emissions, &crf.view()))
}

pub(crate) fn viterbi(emissions: &Matrix, crf: &CrfView<'_>) -> Vec<usize> {
    let (n, k) = emissions.dim();
    if n == 0 {
        return Vec::new();
    }
    let mut score: Vec<f64> = (0..k).map(|j| crf.start[[0, j]] + emissions[[0, j]]).collect();
    let mut back = vec![vec![0usize; k]; n];
    for t in 1..n {
        let mut next = vec![0.0; k];
        for j in 0..k {
            let mut best = (0, f64::NEG_INFINITY);
            for (i, s) in score.iter().enumerate() {
                let v = s + crf.transitions[[i, j]];
                if v > best.1 {
                    best = (i, v);
                }
            }
            back[t][j] = best.0;
            next[j] = best.1 + emissions[[t, j]];
        }
        score = next;
    }
    let mut last = (0, f64::NEG_INFINITY);
    for (j, s) in score.iter().enumerate() {
        let v = s + crf.end[[0, j]];
        if v > last.1 {
            last = (j, v);
        }
    }
    let mut path = vec![last.0; n];
    for t in (1..n).rev() {
        path[t - 1] = back[t][path[t]];
    }
    path
}
