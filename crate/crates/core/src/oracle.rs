//! Exhaustive scoring of every labeled DAG on a small node set.

use std::collections::HashMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{enumerate_dags, make_chain, DagStructure, GraphJson, WeightedDag, MAX_ENUMERATION_NODES};
use crate::metrics::{fit_ols, mmse, varsortability_from_variances};
use crate::scm::{pearson, DataMatrix, Provenance, WeightedScm};

#[derive(Debug, Clone, PartialEq)]
pub struct OracleEntry {
    /// Position in the enumeration order of [`enumerate_dags`].
    pub graph_id: usize,
    pub dag: DagStructure,
    pub n_edges: usize,
    pub mmse: f64,
    /// `None` for the edgeless graph.
    pub varsortability: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub entries: Vec<OracleEntry>,
    pub provenance: Option<Provenance>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EntryRow {
    graph_id: usize,
    n_edges: usize,
    mmse: f64,
    varsortability: Option<f64>,
}

impl OracleReport {
    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = Some(provenance);
        self
    }

    /// Writes `graph_id, n_edges, mmse, varsortability`; the undefined
    /// varsortability of the edgeless graph is an empty field.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for e in &self.entries {
            w.serialize(EntryRow {
                graph_id: e.graph_id,
                n_edges: e.n_edges,
                mmse: e.mmse,
                varsortability: e.varsortability,
            })?;
        }
        w.flush()?;
        Ok(())
    }

    /// Graph-JSON of every entry, in `graph_id` order.
    pub fn graphs_json(&self) -> Vec<GraphJson> {
        self.entries.iter().map(|e| e.dag.to_json()).collect()
    }

    pub fn minimum_mmse(&self) -> f64 {
        self.entries.iter().map(|e| e.mmse).fold(f64::INFINITY, f64::min)
    }
}

/// Scores every DAG over the data's columns by model MSE and varsortability.
///
/// Each `(node, parent set)` regression is fitted once and shared by all
/// DAGs that contain it, so entry `mmse` values equal [`mmse`] exactly.
pub fn score_all_dags(data: &DataMatrix) -> Result<OracleReport> {
    let d = data.d();
    if d > MAX_ENUMERATION_NODES {
        return Err(Error::InvalidArgument(format!(
            "exhaustive scoring supports at most {MAX_ENUMERATION_NODES} nodes, got {d}"
        )));
    }
    let families: Vec<(usize, u32)> = (0..d)
        .flat_map(|node| {
            (0u32..1 << d)
                .filter(move |mask| mask & (1 << node) == 0)
                .map(move |mask| (node, mask))
        })
        .collect();
    let fits: HashMap<(usize, u32), f64> = families
        .par_iter()
        .map(|&(node, mask)| {
            let parents: Vec<usize> = (0..d).filter(|p| mask & (1 << p) != 0).collect();
            fit_ols(data, node, &parents).map(|f| ((node, mask), f.residual_mse))
        })
        .collect::<Result<_>>()?;

    let variances = data.variances();
    let entries = enumerate_dags(d)?
        .into_iter()
        .enumerate()
        .map(|(graph_id, dag)| {
            let mmse = (0..d)
                .map(|j| {
                    let mask = dag.parents(j).iter().fold(0u32, |m, p| m | (1 << p));
                    fits[&(j, mask)]
                })
                .sum();
            let varsortability = varsortability_from_variances(&variances, &dag)
                .ok()
                .map(|r| r.value);
            OracleEntry {
                graph_id,
                n_edges: dag.n_edges(),
                dag,
                mmse,
                varsortability,
            }
        })
        .collect();
    Ok(OracleReport {
        entries,
        provenance: None,
    })
}

/// Entry minimizing `mmse + penalty * n_edges`; ties go to fewer edges,
/// then to the lower `graph_id`.
pub fn best_dag(report: &OracleReport, penalty: f64) -> Result<&OracleEntry> {
    if !(penalty >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "penalty must be nonnegative, got {penalty}"
        )));
    }
    let score = |e: &OracleEntry| e.mmse + penalty * e.n_edges as f64;
    report
        .entries
        .iter()
        .min_by(|a, b| {
            score(a)
                .total_cmp(&score(b))
                .then(a.n_edges.cmp(&b.n_edges))
                .then(a.graph_id.cmp(&b.graph_id))
        })
        .ok_or_else(|| Error::InvalidArgument("empty oracle report".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Correlation {
    pub pearson_r: f64,
    /// `(varsortability, mmse)` for every entry where varsortability is defined.
    pub points: Vec<(f64, f64)>,
}

pub fn varsort_mmse_correlation(report: &OracleReport) -> Result<Correlation> {
    let points: Vec<(f64, f64)> = report
        .entries
        .iter()
        .filter_map(|e| e.varsortability.map(|v| (v, e.mmse)))
        .collect();
    if points.len() < 3 {
        return Err(Error::UndefinedMetric(format!(
            "correlation needs at least 3 points, got {}",
            points.len()
        )));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = points.iter().copied().unzip();
    let pearson_r =
        pearson(&xs, &ys).ok_or_else(|| Error::UndefinedMetric("correlation of a constant series".into()))?;
    Ok(Correlation { pearson_r, points })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Conjecture1Result {
    pub d: usize,
    pub seed: u64,
    pub margin: f64,
    pub root_scale: f64,
    pub forward_mmse: f64,
    pub reverse_mmse: f64,
    /// Whether the reversed chain has the lower model MSE.
    pub holds: bool,
}

/// Samples a `d`-chain, rescales the root so that its variance is `margin`
/// times the sink's, and compares the forward and reverse chain MSEs.
///
/// `weights` has one entry per edge `X_i -> X_{i+1}` and `sigmas` one per
/// node; a single value is broadcast.
pub fn conjecture1_check(
    d: usize,
    weights: &[f64],
    sigmas: &[f64],
    n: usize,
    seed: u64,
    margin: f64,
) -> Result<Conjecture1Result> {
    if d < 3 {
        return Err(Error::InvalidArgument(format!(
            "chain needs at least 3 nodes, got {d}"
        )));
    }
    if !(margin > 0.0 && margin.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "margin must be positive, got {margin}"
        )));
    }
    let weights = broadcast(weights, d - 1, "weights")?;
    let sigmas = broadcast(sigmas, d, "sigmas")?;
    let chain = make_chain(d)?;
    let mut w = nalgebra::DMatrix::zeros(d, d);
    for i in 0..d - 1 {
        w[(i, i + 1)] = weights[i];
    }
    let scm = WeightedScm::new(WeightedDag::new(chain.clone(), w)?, sigmas)?;
    let data = scm.sample(n, seed)?;
    let vars = data.variances();
    let root_scale = (margin * vars[d - 1] / vars[0]).sqrt();
    let attacked = data.rescale_column(0, root_scale)?;
    let forward_mmse = mmse(&chain, &attacked)?;
    let reverse_mmse = mmse(&chain.reversed(), &attacked)?;
    Ok(Conjecture1Result {
        d,
        seed,
        margin,
        root_scale,
        forward_mmse,
        reverse_mmse,
        holds: reverse_mmse < forward_mmse,
    })
}

fn broadcast(values: &[f64], len: usize, what: &str) -> Result<Vec<f64>> {
    match values.len() {
        1 => Ok(vec![values[0]; len]),
        l if l == len => Ok(values.to_vec()),
        l => Err(Error::InvalidArgument(format!(
            "expected 1 or {len} {what}, got {l}"
        ))),
    }
}
