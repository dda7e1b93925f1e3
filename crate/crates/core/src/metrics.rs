//! Varsortability, per-node least squares and the model MSE of a DAG.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{path_pairs, DagStructure};
use crate::scm::{mean_square, DataMatrix};

/// `1` if `a < b`, `1/2` if equal, `0` otherwise. Exact comparison.
pub fn inc(a: f64, b: f64) -> f64 {
    if a < b {
        1.0
    } else if a == b {
        0.5
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarsortReport {
    pub value: f64,
    pub numerator: f64,
    pub denominator: usize,
    /// `(from, to, inc)` for every path pair, 0-based.
    pub per_pair: Vec<(usize, usize, f64)>,
}

/// Fraction of directed path pairs of `g` along which the empirical
/// variance strictly increases (ties count one half).
pub fn varsortability(data: &DataMatrix, g: &DagStructure) -> Result<VarsortReport> {
    check_dims(data, g)?;
    varsortability_from_variances(&data.variances(), g)
}

pub fn varsortability_from_variances(variances: &[f64], g: &DagStructure) -> Result<VarsortReport> {
    if variances.len() != g.d() {
        return Err(Error::DimensionMismatch {
            expected: g.d(),
            found: variances.len(),
        });
    }
    let per_pair: Vec<_> = path_pairs(g)
        .into_iter()
        .map(|(i, j)| (i, j, inc(variances[i], variances[j])))
        .collect();
    if per_pair.is_empty() {
        return Err(Error::UndefinedMetric(
            "varsortability of a graph without edges".into(),
        ));
    }
    let numerator: f64 = per_pair.iter().map(|p| p.2).sum();
    let denominator = per_pair.len();
    Ok(VarsortReport {
        value: numerator / denominator as f64,
        numerator,
        denominator,
        per_pair,
    })
}

/// No-intercept least-squares regression of one column on a parent set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OlsFit {
    pub node: usize,
    pub parents: Vec<usize>,
    pub coefficients: Vec<f64>,
    pub residual_mse: f64,
}

/// Regresses column `node` on `parents` without an intercept.
///
/// The normal equations are solved through an SVD pseudo-inverse, so a
/// collinear parent set yields the minimum-norm solution.
pub fn fit_ols(data: &DataMatrix, node: usize, parents: &[usize]) -> Result<OlsFit> {
    let d = data.d();
    for &i in parents.iter().chain(std::iter::once(&node)) {
        if i >= d {
            return Err(Error::IndexOutOfRange { index: i, len: d });
        }
    }
    let y = data.column(node);
    if parents.is_empty() {
        return Ok(OlsFit {
            node,
            parents: Vec::new(),
            coefficients: Vec::new(),
            residual_mse: mean_square(y),
        });
    }
    if parents.contains(&node) {
        return Err(Error::InvalidArgument(format!(
            "node {node} cannot be its own parent"
        )));
    }
    let n = data.n();
    let k = parents.len();
    let design = DMatrix::from_fn(n, k, |r, c| data.column(parents[c])[r]);
    let target = DVector::from_column_slice(y);
    let gram = design.tr_mul(&design) / n as f64;
    let rhs = design.tr_mul(&target) / n as f64;
    let coefficients = solve_min_norm(gram, &rhs);
    let fitted = &design * &coefficients;
    let residual_mse = y
        .iter()
        .zip(fitted.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n as f64;
    Ok(OlsFit {
        node,
        parents: parents.to_vec(),
        coefficients: coefficients.iter().copied().collect(),
        residual_mse,
    })
}

fn solve_min_norm(gram: DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    let k = gram.nrows();
    let svd = gram.svd(true, true);
    let largest = svd.singular_values.max();
    if largest == 0.0 {
        return DVector::zeros(k);
    }
    let eps = largest * k as f64 * 1e-13;
    svd.solve(rhs, eps)
        .expect("both singular vector sets were computed")
}

/// Model MSE: variance of every parentless node plus the OLS residual MSE
/// of every node with parents, under the parent sets of `g`.
pub fn mmse(g: &DagStructure, data: &DataMatrix) -> Result<f64> {
    check_dims(data, g)?;
    (0..g.d())
        .map(|j| fit_ols(data, j, &g.parents(j)).map(|f| f.residual_mse))
        .sum()
}

/// Per-node OLS coefficients arranged as a weighted adjacency matrix:
/// column `j` holds the regression of node `j` on its parents in `g`.
pub fn ols_weight_matrix(g: &DagStructure, data: &DataMatrix) -> Result<DMatrix<f64>> {
    check_dims(data, g)?;
    let d = g.d();
    let mut w = DMatrix::zeros(d, d);
    for j in 0..d {
        let fit = fit_ols(data, j, &g.parents(j))?;
        for (p, c) in fit.parents.iter().zip(&fit.coefficients) {
            w[(*p, j)] = *c;
        }
    }
    Ok(w)
}

/// Insertions plus deletions plus reversals turning `g1` into `g2`; a
/// reversed edge counts once.
pub fn structural_hamming_distance(g1: &DagStructure, g2: &DagStructure) -> Result<usize> {
    if g1.d() != g2.d() {
        return Err(Error::DimensionMismatch {
            expected: g1.d(),
            found: g2.d(),
        });
    }
    let d = g1.d();
    let mut dist = 0;
    for i in 0..d {
        for j in i + 1..d {
            let a = (g1.has_edge(i, j), g1.has_edge(j, i));
            let b = (g2.has_edge(i, j), g2.has_edge(j, i));
            if a != b {
                dist += 1;
            }
        }
    }
    Ok(dist)
}

fn check_dims(data: &DataMatrix, g: &DagStructure) -> Result<()> {
    if data.d() != g.d() {
        return Err(Error::DimensionMismatch {
            expected: g.d(),
            found: data.d(),
        });
    }
    Ok(())
}
