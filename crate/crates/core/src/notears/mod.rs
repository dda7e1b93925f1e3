//! Linear NOTEARS: least-squares loss with an L1 penalty, minimized under
//! the smooth acyclicity constraint by an augmented Lagrangian.

mod acyclicity;
pub mod lbfgsb;

pub use acyclicity::{acyclicity, expm, expm_minus_identity};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{DagStructure, GraphJson};
use crate::scm::DataMatrix;
use lbfgsb::{Bound, LbfgsbOptions, StopReason};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NotearsConfig {
    /// L1 coefficient.
    pub lambda1: f64,
    pub rho_init: f64,
    pub rho_mult: f64,
    /// Penalty ceiling; the outer loop gives up once rho reaches it.
    pub rho_max: f64,
    pub h_tol: f64,
    pub max_outer: usize,
    /// Required shrink factor of h per outer step before rho is grown.
    pub h_progress: f64,
    /// Projected-gradient infinity-norm stop for the inner solver.
    pub inner_tol: f64,
    /// Relative objective-reduction stop for the inner solver.
    pub inner_ftol: f64,
    pub max_inner: usize,
    /// Edges with `|w| <= omega` are dropped.
    pub omega: f64,
}

impl Default for NotearsConfig {
    fn default() -> Self {
        Self {
            lambda1: 0.1,
            rho_init: 1.0,
            rho_mult: 10.0,
            rho_max: 1e16,
            h_tol: 1e-8,
            max_outer: 100,
            h_progress: 0.25,
            inner_tol: 1e-6,
            inner_ftol: 1e7 * f64::EPSILON,
            max_inner: 15_000,
            omega: 0.3,
        }
    }
}

impl NotearsConfig {
    pub fn with_lambda(mut self, lambda1: f64) -> Self {
        self.lambda1 = lambda1;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(what.to_string()));
        if !(self.lambda1 >= 0.0 && self.lambda1.is_finite()) {
            return bad("lambda1 must be >= 0");
        }
        if !(self.rho_init > 0.0) {
            return bad("rho_init must be > 0");
        }
        if !(self.rho_mult > 1.0) {
            return bad("rho_mult must be > 1");
        }
        if !(self.rho_max > self.rho_init) {
            return bad("rho_max must exceed rho_init");
        }
        if !(self.h_tol > 0.0) {
            return bad("h_tol must be > 0");
        }
        if !(self.h_progress > 0.0 && self.h_progress < 1.0) {
            return bad("h_progress must lie in (0, 1)");
        }
        if self.max_outer == 0 || self.max_inner == 0 {
            return bad("iteration limits must be positive");
        }
        if !(self.inner_tol > 0.0) || !(self.inner_ftol >= 0.0) {
            return bad("inner tolerances must be positive");
        }
        if !(self.omega >= 0.0) {
            return bad("omega must be >= 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TracePoint {
    pub outer: usize,
    /// `loss + lambda1 * ||W||_1` at the accepted iterate.
    pub objective: f64,
    pub h: f64,
    pub rho: f64,
}

/// One inner bound-constrained minimization.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InnerRun {
    pub rho: f64,
    pub alpha: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Augmented objective after each accepted inner step.
    #[serde(skip)]
    pub objectives: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub w_continuous: DMatrix<f64>,
    pub graph: DagStructure,
    pub h_final: f64,
    pub objective_final: f64,
    pub converged: bool,
    pub trace: Vec<TracePoint>,
    pub inner_runs: Vec<InnerRun>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveResultJson {
    /// Row-major weights.
    pub w: Vec<Vec<f64>>,
    pub graph: GraphJson,
    pub h_final: f64,
    pub objective_final: f64,
    pub converged: bool,
    pub trace: Vec<TracePoint>,
}

impl SolveResult {
    pub fn to_json(&self) -> SolveResultJson {
        let w = self
            .w_continuous
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect();
        SolveResultJson {
            w,
            graph: self.graph.to_json(),
            h_final: self.h_final,
            objective_final: self.objective_final,
            converged: self.converged,
            trace: self.trace.clone(),
        }
    }
}

/// `(1/2n) ||X - XW||_F^2` and its gradient `(1/n) X^T (XW - X)`.
pub fn loss(w: &DMatrix<f64>, data: &DataMatrix) -> Result<(f64, DMatrix<f64>)> {
    let d = data.d();
    if w.shape() != (d, d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: w.nrows(),
        });
    }
    let x = data.values();
    let n = data.n() as f64;
    let residual = x * w - x;
    let value = 0.5 / n * residual.norm_squared();
    let grad = x.tr_mul(&residual) / n;
    Ok((value, grad))
}

// The same loss through the second-moment matrix S = X^T X / n:
// value = 1/2 tr((I - W)^T S (I - W)), grad = S (W - I).
struct GramLoss {
    gram: DMatrix<f64>,
    identity: DMatrix<f64>,
}

impl GramLoss {
    fn new(data: &DataMatrix) -> Self {
        let d = data.d();
        Self {
            gram: data.gram(),
            identity: DMatrix::identity(d, d),
        }
    }

    fn eval(&self, w: &DMatrix<f64>) -> (f64, DMatrix<f64>) {
        let w_minus_i = w - &self.identity;
        let grad = &self.gram * &w_minus_i;
        let value = 0.5 * w_minus_i.component_mul(&grad).sum();
        (value, grad)
    }
}

fn split_to_weights(x: &[f64], d: usize) -> DMatrix<f64> {
    let dd = d * d;
    // column-major, like nalgebra
    DMatrix::from_fn(d, d, |i, j| {
        let k = j * d + i;
        x[k] - x[dd + k]
    })
}

fn split_bounds(d: usize) -> Vec<Bound> {
    let half: Vec<Bound> = (0..d * d)
        .map(|k| {
            if k % d == k / d {
                Bound::ZERO
            } else {
                Bound::NONNEGATIVE
            }
        })
        .collect();
    half.iter().chain(half.iter()).copied().collect()
}

/// Fits a DAG to `data`.
///
/// The L1 term is made smooth by writing `W = W+ - W-` with both parts
/// nonnegative; the diagonal is pinned to zero. Each outer step minimizes
/// `loss + lambda1 * sum(W+ + W-) + rho/2 h^2 + alpha h` from the current
/// iterate, growing rho until h shrinks by `h_progress`, then updates
/// `alpha += rho h`. The result is thresholded at `omega` and trimmed to a
/// DAG.
pub fn solve(data: &DataMatrix, config: &NotearsConfig) -> Result<SolveResult> {
    config.validate()?;
    if !data.all_finite() {
        return Err(Error::InvalidData("data contains NaN or infinite values".into()));
    }
    let d = data.d();
    let dd = d * d;
    let lossfn = GramLoss::new(data);
    let bounds = split_bounds(d);
    let opts = LbfgsbOptions {
        memory: 10,
        pgtol: config.inner_tol,
        ftol: config.inner_ftol,
        max_iter: config.max_inner,
    };
    let lambda = config.lambda1;

    let mut x_est = vec![0.0; 2 * dd];
    let mut rho = config.rho_init;
    let mut alpha = 0.0;
    let mut h = f64::INFINITY;
    let mut trace = Vec::new();
    let mut inner_runs = Vec::new();

    for outer in 0..config.max_outer {
        let mut accepted: Option<(Vec<f64>, f64)> = None;
        while rho < config.rho_max {
            let (r, a) = (rho, alpha);
            let result = lbfgsb::minimize(
                |x, g| {
                    let w = split_to_weights(x, d);
                    let (lv, lg) = lossfn.eval(&w);
                    let (hv, hg) = acyclicity(&w);
                    let smooth = lg + hg * (r * hv + a);
                    for j in 0..d {
                        for i in 0..d {
                            let k = j * d + i;
                            g[k] = smooth[(i, j)] + lambda;
                            g[dd + k] = -smooth[(i, j)] + lambda;
                        }
                    }
                    lv + 0.5 * r * hv * hv + a * hv + lambda * x.iter().sum::<f64>()
                },
                &x_est,
                &bounds,
                &opts,
            );
            let h_new = acyclicity(&split_to_weights(&result.x, d)).0;
            inner_runs.push(InnerRun {
                rho,
                alpha,
                iterations: result.iterations,
                converged: matches!(
                    result.stop,
                    StopReason::ProjectedGradient | StopReason::RelativeReduction
                ),
                objectives: result.history,
            });
            accepted = Some((result.x, h_new));
            if h_new > config.h_progress * h {
                rho *= config.rho_mult;
            } else {
                break;
            }
        }
        let Some((x_new, h_new)) = accepted else {
            break;
        };
        x_est = x_new;
        h = h_new;
        alpha += rho * h;
        let w = split_to_weights(&x_est, d);
        trace.push(TracePoint {
            outer,
            objective: lossfn.eval(&w).0 + lambda * w.abs().sum(),
            h,
            rho,
        });
        if h <= config.h_tol || rho >= config.rho_max {
            break;
        }
    }

    let w = split_to_weights(&x_est, d);
    let h_final = acyclicity(&w).0;
    let objective_final = lossfn.eval(&w).0 + lambda * w.abs().sum();
    let trimmed = threshold(&w, config.omega);
    let graph = DagStructure::with_labels(trimmed.adjacency().clone(), data.labels().to_vec())?;
    Ok(SolveResult {
        w_continuous: w,
        graph,
        h_final,
        objective_final,
        converged: h_final <= config.h_tol,
        trace,
        inner_runs,
    })
}

/// Keeps edges with `|w_ij| > omega`, then removes the smallest-magnitude
/// edge lying on a cycle (ties by `(i, j)`) until the graph is acyclic.
pub fn threshold(w: &DMatrix<f64>, omega: f64) -> DagStructure {
    let d = w.nrows();
    let mut adj = DMatrix::from_fn(d, d, |i, j| i != j && w[(i, j)].abs() > omega);
    loop {
        let reach = transitive_closure(&adj);
        let weakest = (0..d)
            .flat_map(|i| (0..d).map(move |j| (i, j)))
            .filter(|&(i, j)| adj[(i, j)] && reach[(j, i)])
            .min_by(|&a, &b| w[a].abs().total_cmp(&w[b].abs()).then(a.cmp(&b)));
        match weakest {
            Some(e) => adj[e] = false,
            None => break,
        }
    }
    DagStructure::new(adj).expect("no edge lies on a cycle")
}

fn transitive_closure(adj: &DMatrix<bool>) -> DMatrix<bool> {
    let d = adj.nrows();
    let mut reach = adj.clone();
    for k in 0..d {
        for i in 0..d {
            if reach[(i, k)] {
                for j in 0..d {
                    if reach[(k, j)] {
                        reach[(i, j)] = true;
                    }
                }
            }
        }
    }
    reach
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{make_chain, DagStructure, WeightedDag};
    use crate::scm::WeightedScm;

    #[test]
    fn threshold_examples() {
        let mut w = DMatrix::zeros(3, 3);
        w[(0, 1)] = 0.1;
        w[(1, 2)] = -0.2;
        assert_eq!(threshold(&w, 0.3), DagStructure::empty(3));

        let mut w = DMatrix::zeros(2, 2);
        w[(0, 1)] = 0.9;
        assert_eq!(threshold(&w, 0.3).edges(), vec![(0, 1)]);
        w[(1, 0)] = 0.4;
        assert_eq!(threshold(&w, 0.3).edges(), vec![(0, 1)]);
    }

    #[test]
    fn threshold_trims_longer_cycles() {
        let mut w = DMatrix::zeros(3, 3);
        w[(0, 1)] = 1.0;
        w[(1, 2)] = -0.8;
        w[(2, 0)] = 0.5;
        w[(0, 2)] = 0.35;
        // 0.35 sits on the 2-cycle with 2->0 and goes first, then 0.5
        let g = threshold(&w, 0.3);
        assert_eq!(g.edges(), vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn gram_loss_matches_direct_loss() {
        let scm = WeightedScm::with_unit_noise(WeightedDag::uniform(make_chain(3).unwrap(), 0.8).unwrap());
        let data = scm.sample(300, 1).unwrap();
        let w = DMatrix::from_row_slice(3, 3, &[0.0, 0.3, -0.2, 0.1, 0.0, 0.7, 0.4, -0.5, 0.0]);
        let (v1, g1) = loss(&w, &data).unwrap();
        let (v2, g2) = GramLoss::new(&data).eval(&w);
        assert!((v1 - v2).abs() < 1e-12 * v1.abs().max(1.0));
        assert!((g1 - g2).amax() < 1e-12);
    }

    #[test]
    fn loss_at_zero_is_half_mean_square() {
        let scm = WeightedScm::with_unit_noise(WeightedDag::uniform(make_chain(3).unwrap(), 1.0).unwrap());
        let data = scm.sample(500, 2).unwrap();
        let (v, _) = loss(&DMatrix::zeros(3, 3), &data).unwrap();
        let half: f64 = 0.5 * data.variances().iter().sum::<f64>();
        assert!((v - half).abs() < 1e-12 * half);
        assert!(loss(&DMatrix::zeros(2, 2), &data).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(NotearsConfig::default().validate().is_ok());
        let bad = NotearsConfig {
            rho_mult: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = NotearsConfig {
            omega: -0.1,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn rejects_non_finite_data() {
        let mut values = DMatrix::from_element(4, 2, 1.0);
        values[(2, 1)] = f64::NAN;
        let data = DataMatrix::new(values).unwrap();
        assert!(matches!(
            solve(&data, &NotearsConfig::default()),
            Err(Error::InvalidData(_))
        ));
    }
}
