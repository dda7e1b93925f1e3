//! Linear-Gaussian structural causal models and the sample matrices drawn
//! from them.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{default_labels, DagStructure, GraphJson, WeightedDag};

/// Default magnitude range for randomized edge weights.
pub const DEFAULT_WEIGHT_RANGE: (f64, f64) = (0.5, 2.0);

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `X_j = sum_i w_ij X_i + eps_j`, `eps_j ~ N(0, noise_std[j]^2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedScm {
    graph: WeightedDag,
    noise_std: Vec<f64>,
}

impl WeightedScm {
    pub fn new(graph: WeightedDag, noise_std: Vec<f64>) -> Result<Self> {
        let d = graph.structure().d();
        if noise_std.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: noise_std.len(),
            });
        }
        if let Some(s) = noise_std.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "noise standard deviations must be positive, got {s}"
            )));
        }
        Ok(Self { graph, noise_std })
    }

    pub fn with_unit_noise(graph: WeightedDag) -> Self {
        let d = graph.structure().d();
        Self::new(graph, vec![1.0; d]).expect("unit noise is valid")
    }

    /// Edge weights with magnitudes uniform in `range` and a random sign.
    pub fn random_weights<R: Rng>(
        structure: DagStructure,
        range: (f64, f64),
        rng: &mut R,
    ) -> Result<WeightedDag> {
        let (lo, hi) = range;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "weight range must satisfy 0 < lo <= hi, got [{lo}, {hi}]"
            )));
        }
        let d = structure.d();
        let mut weights = DMatrix::zeros(d, d);
        for (i, j) in structure.edges() {
            let magnitude = if hi > lo { rng.random_range(lo..=hi) } else { lo };
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            weights[(i, j)] = sign * magnitude;
        }
        WeightedDag::new(structure, weights)
    }

    pub fn graph(&self) -> &WeightedDag {
        &self.graph
    }

    pub fn structure(&self) -> &DagStructure {
        self.graph.structure()
    }

    pub fn noise_std(&self) -> &[f64] {
        &self.noise_std
    }

    pub fn d(&self) -> usize {
        self.noise_std.len()
    }

    /// Ancestral sampling in topological order.
    ///
    /// Noise for each node is drawn as one block of `n` standard normals,
    /// node by node in topological order, from a ChaCha8 stream seeded with
    /// `seed`. Identical arguments give bit-identical output.
    pub fn sample(&self, n: usize, seed: u64) -> Result<DataMatrix> {
        if n < 2 {
            return Err(Error::InvalidArgument(format!("need n >= 2 samples, got {n}")));
        }
        let d = self.d();
        let mut rng = rng_from_seed(seed);
        let mut values = DMatrix::zeros(n, d);
        let structure = self.structure();
        for node in structure.topological_order() {
            let parents = structure.parents(node);
            let sigma = self.noise_std[node];
            for r in 0..n {
                let eps: f64 = rng.sample(StandardNormal);
                let signal: f64 = parents
                    .iter()
                    .map(|&p| self.graph.weight(p, node) * values[(r, p)])
                    .sum();
                values[(r, node)] = signal + sigma * eps;
            }
        }
        DataMatrix::with_labels(values, structure.labels().to_vec())
    }

    pub fn to_json(&self) -> ScmJson {
        ScmJson {
            graph: self.graph.to_json(),
            noise_std: self.noise_std.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScmJson {
    pub graph: GraphJson,
    pub noise_std: Vec<f64>,
}

impl ScmJson {
    pub fn to_scm(&self) -> Result<WeightedScm> {
        WeightedScm::new(self.graph.to_weighted()?, self.noise_std.clone())
    }
}

/// Where a dataset came from: `{scm, n, seed}` plus the canonical
/// structure it was built from, when there is one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub scm: ScmJson,
    pub n: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub structure: Option<String>,
    /// 1-based origin node for forks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<usize>,
}

/// `n x d` samples, one column per node in node-index order.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
    labels: Vec<String>,
}

impl DataMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        let d = values.ncols();
        Self::with_labels(values, default_labels(d))
    }

    pub fn with_labels(values: DMatrix<f64>, labels: Vec<String>) -> Result<Self> {
        if values.nrows() < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 samples, got {}",
                values.nrows()
            )));
        }
        if values.ncols() == 0 {
            return Err(Error::InvalidArgument("need at least one column".into()));
        }
        if labels.len() != values.ncols() {
            return Err(Error::DimensionMismatch {
                expected: values.ncols(),
                found: labels.len(),
            });
        }
        Ok(Self { values, labels })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn d(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn column(&self, i: usize) -> &[f64] {
        let n = self.n();
        &self.values.as_slice()[i * n..(i + 1) * n]
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.d() {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: self.d(),
            });
        }
        Ok(())
    }

    /// `(1/n) sum_r x_ri^2`. Columns are not mean-centered: samples from
    /// the generative model are zero-mean, and this is the convention under
    /// which a parentless node's least-squares residual equals its variance.
    pub fn column_variance(&self, i: usize) -> Result<f64> {
        self.check_index(i)?;
        Ok(mean_square(self.column(i)))
    }

    pub fn variances(&self) -> Vec<f64> {
        (0..self.d()).map(|i| mean_square(self.column(i))).collect()
    }

    /// Multiplies column `i` by `c > 0`.
    pub fn rescale_column(&self, i: usize, c: f64) -> Result<Self> {
        self.check_index(i)?;
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "scale factor must be positive and finite, got {c}"
            )));
        }
        let mut out = self.clone();
        out.values.column_mut(i).iter_mut().for_each(|x| *x *= c);
        Ok(out)
    }

    /// Second-moment matrix `X^T X / n`.
    pub fn gram(&self) -> DMatrix<f64> {
        self.values.tr_mul(&self.values) / self.n() as f64
    }

    /// Mean-centered Pearson correlation between two columns.
    pub fn pearson(&self, i: usize, j: usize) -> Result<f64> {
        self.check_index(i)?;
        self.check_index(j)?;
        pearson(self.column(i), self.column(j))
            .ok_or_else(|| Error::UndefinedMetric(format!("correlation of constant column in ({i}, {j})")))
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|x| x.is_finite())
    }

    /// Header of labels, one sample per row. Values use Rust's shortest
    /// round-trip float formatting, so reading back is exact.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(&self.labels)?;
        let mut row = Vec::with_capacity(self.d());
        for r in 0..self.n() {
            row.clear();
            row.extend((0..self.d()).map(|c| self.values[(r, c)].to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let labels: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
        let d = labels.len();
        let mut flat = Vec::new();
        for (line, record) in rdr.records().enumerate() {
            let record = record?;
            if record.len() != d {
                return Err(Error::InvalidData(format!(
                    "row {} has {} fields, expected {d}",
                    line + 1,
                    record.len()
                )));
            }
            for field in record.iter() {
                let x: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| Error::InvalidData(format!("row {}: cannot parse '{field}'", line + 1)))?;
                flat.push(x);
            }
        }
        let n = flat.len() / d.max(1);
        Self::with_labels(DMatrix::from_row_slice(n, d, &flat), labels)
    }
}

pub(crate) fn mean_square(xs: &[f64]) -> f64 {
    xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64
}

/// Pearson correlation; `None` when either input has zero spread.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}
