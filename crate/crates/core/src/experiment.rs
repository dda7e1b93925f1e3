//! Seeded experiment drivers shared by the command-line tool and the tests.

use std::collections::BTreeSet;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attack::{
    all_recipes, imperfect_attack, plan_recipe_attack, run_attack, AttackOutcome, AttackRecord, Recipe,
};
use crate::error::{Error, Result};
use crate::graph::{make_chain, DagStructure, WeightedDag};
use crate::notears::NotearsConfig;
use crate::oracle::{conjecture1_check, Conjecture1Result};
use crate::scm::{rng_from_seed, DataMatrix, Provenance, WeightedScm, DEFAULT_WEIGHT_RANGE};

/// How edge weights are chosen for a generated dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightSpec {
    /// Every edge gets this weight.
    Fixed(f64),
    /// Magnitude uniform in the range, random sign, redrawn per seed.
    Random { low: f64, high: f64 },
}

impl Default for WeightSpec {
    fn default() -> Self {
        let (low, high) = DEFAULT_WEIGHT_RANGE;
        Self::Random { low, high }
    }
}

/// Builds an SCM over `structure` and samples `n` rows, all from `seed`.
///
/// Weights (when random) come first from the seed's stream; the sampling
/// seed is the next draw from that stream.
pub fn seeded_dataset(
    structure: &DagStructure,
    weights: WeightSpec,
    sigma: f64,
    n: usize,
    seed: u64,
) -> Result<(WeightedScm, DataMatrix, Provenance)> {
    let mut rng = rng_from_seed(seed);
    let graph = match weights {
        WeightSpec::Fixed(w) => WeightedDag::uniform(structure.clone(), w)?,
        WeightSpec::Random { low, high } => {
            WeightedScm::random_weights(structure.clone(), (low, high), &mut rng)?
        }
    };
    let scm = WeightedScm::new(graph, vec![sigma; structure.d()])?;
    let data_seed: u64 = rng.random();
    let data = scm.sample(n, data_seed)?;
    let provenance = Provenance {
        scm: scm.to_json(),
        n,
        seed,
        structure: None,
        center: None,
    };
    Ok((scm, data, provenance))
}

/// Perfect recipe attacks for every `(recipe, seed, lambda)` combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerfectRunConfig {
    pub seeds: Vec<u64>,
    pub lambdas: Vec<f64>,
    pub margin: f64,
    pub n: usize,
    pub sigma: f64,
    pub weights: WeightSpec,
}

impl Default for PerfectRunConfig {
    fn default() -> Self {
        Self {
            seeds: (0..20).collect(),
            lambdas: vec![0.01, 0.1],
            margin: crate::attack::DEFAULT_MARGIN,
            n: 10_000,
            sigma: 1.0,
            weights: WeightSpec::Fixed(1.0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PerfectRun {
    pub recipe: Recipe,
    pub seed: u64,
    pub lambda: f64,
    pub outcome: AttackOutcome,
}

impl PerfectRun {
    pub fn record(&self, margin: f64) -> AttackRecord {
        AttackRecord::new(
            self.seed,
            self.recipe.source_kind.as_str(),
            self.recipe.attack_kind.as_str(),
            self.lambda,
            margin,
            &(0..self.recipe.source.d()).collect(),
            &self.outcome,
        )
    }
}

/// Runs `recipes` (all seven when empty) in recipe, seed, lambda order.
pub fn run_perfect_attacks(
    recipes: &[Recipe],
    cfg: &PerfectRunConfig,
    solver: &NotearsConfig,
) -> Result<Vec<PerfectRun>> {
    let recipes = if recipes.is_empty() {
        all_recipes()
    } else {
        recipes.to_vec()
    };
    let jobs: Vec<(Recipe, u64)> = recipes
        .iter()
        .flat_map(|r| cfg.seeds.iter().map(move |&s| (r.clone(), s)))
        .collect();
    let runs: Vec<Vec<PerfectRun>> = jobs
        .into_par_iter()
        .map(|(recipe, seed)| {
            let (_, data, _) = seeded_dataset(&recipe.source, cfg.weights, cfg.sigma, cfg.n, seed)?;
            let plan = plan_recipe_attack(&data, &recipe, cfg.margin)?;
            cfg.lambdas
                .iter()
                .map(|&lambda| {
                    let outcome = run_attack(&data, &plan, &solver.clone().with_lambda(lambda))?;
                    Ok(PerfectRun {
                        recipe: recipe.clone(),
                        seed,
                        lambda,
                        outcome,
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(runs.into_iter().flatten().collect())
}

/// Imperfect chain reversal: only the root column is rescaled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub scales: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub trials: usize,
    /// Trial `t` uses seed `seed + t`.
    pub seed: u64,
    pub d: usize,
    pub n: usize,
    pub sigma: f64,
    pub weights: WeightSpec,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            scales: vec![2.0, 4.0, 8.0, 10.0],
            lambdas: vec![0.0, 0.01, 0.1, 1.0],
            trials: 100,
            seed: 0,
            d: 3,
            n: 10_000,
            sigma: 1.0,
            weights: WeightSpec::default(),
        }
    }
}

/// Runs every trial over the full scale x lambda grid. Each trial draws
/// fresh weights and noise once and reuses that dataset for all cells.
///
/// Records are ordered by trial, then scale, then lambda.
pub fn run_reversal_sweep(cfg: &SweepConfig, solver: &NotearsConfig) -> Result<Vec<AttackRecord>> {
    if cfg.scales.is_empty() || cfg.lambdas.is_empty() {
        return Err(Error::InvalidArgument("sweep grid is empty".into()));
    }
    if cfg.trials == 0 {
        return Err(Error::InvalidArgument("sweep needs at least one trial".into()));
    }
    let chain = make_chain(cfg.d)?;
    let reversed = chain.reversed();
    let root = BTreeSet::from([0]);
    let per_trial: Vec<Vec<AttackRecord>> = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|t| {
            let seed = cfg.seed + t;
            let (_, data, _) = seeded_dataset(&chain, cfg.weights, cfg.sigma, cfg.n, seed)?;
            let mut rows = Vec::with_capacity(cfg.scales.len() * cfg.lambdas.len());
            for &scale in &cfg.scales {
                let plan = imperfect_attack(&data, &chain, &reversed, &root, scale)?;
                for &lambda in &cfg.lambdas {
                    let outcome = run_attack(&data, &plan, &solver.clone().with_lambda(lambda))?;
                    rows.push(AttackRecord::new(
                        seed, "chain", "reverse", lambda, scale, &root, &outcome,
                    ));
                }
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    Ok(per_trial.into_iter().flatten().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub scale: f64,
    pub lambda: f64,
    pub trials: usize,
    pub successes: usize,
    pub success_ratio: f64,
    pub mean_shd: f64,
}

/// One cell per `(scale, lambda)`, sorted by scale, then lambda.
pub fn aggregate_sweep(records: &[AttackRecord]) -> Vec<SweepCell> {
    let mut cells: Vec<SweepCell> = Vec::new();
    let mut shd_sums: Vec<usize> = Vec::new();
    for r in records {
        let idx = match cells
            .iter()
            .position(|c| c.scale == r.scale && c.lambda == r.lambda)
        {
            Some(i) => i,
            None => {
                cells.push(SweepCell {
                    scale: r.scale,
                    lambda: r.lambda,
                    trials: 0,
                    successes: 0,
                    success_ratio: 0.0,
                    mean_shd: 0.0,
                });
                shd_sums.push(0);
                cells.len() - 1
            }
        };
        cells[idx].trials += 1;
        cells[idx].successes += usize::from(r.success);
        shd_sums[idx] += r.shd;
    }
    for (c, shd) in cells.iter_mut().zip(shd_sums) {
        c.success_ratio = c.successes as f64 / c.trials as f64;
        c.mean_shd = shd as f64 / c.trials as f64;
    }
    cells.sort_by(|a, b| a.scale.total_cmp(&b.scale).then(a.lambda.total_cmp(&b.lambda)));
    cells
}

/// [`conjecture1_check`] on the chain dataset that [`seeded_dataset`]
/// builds from the same arguments. The reported seed is `seed`.
pub fn seeded_conjecture1(
    d: usize,
    weights: WeightSpec,
    sigma: f64,
    n: usize,
    seed: u64,
    margin: f64,
) -> Result<Conjecture1Result> {
    let chain = make_chain(d)?;
    let mut rng = rng_from_seed(seed);
    let edge_weights: Vec<f64> = match weights {
        WeightSpec::Fixed(w) => vec![w],
        WeightSpec::Random { low, high } => {
            let g = WeightedScm::random_weights(chain, (low, high), &mut rng)?;
            (0..d - 1).map(|i| g.weight(i, i + 1)).collect()
        }
    };
    let data_seed: u64 = rng.random();
    let mut result = conjecture1_check(d, &edge_weights, &[sigma], n, data_seed, margin)?;
    result.seed = seed;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::make_fork;

    #[test]
    fn seeded_dataset_is_reproducible() {
        let fork = make_fork(3).unwrap();
        let (a, x, _) = seeded_dataset(&fork, WeightSpec::default(), 1.0, 50, 4).unwrap();
        let (b, y, _) = seeded_dataset(&fork, WeightSpec::default(), 1.0, 50, 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(x, y);
        let (c, _, _) = seeded_dataset(&fork, WeightSpec::default(), 1.0, 50, 5).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn seeded_conjecture_uses_the_seeded_chain() {
        use crate::metrics::mmse;
        let chain = make_chain(4).unwrap();
        let spec = WeightSpec::default();
        let r = seeded_conjecture1(4, spec, 1.0, 300, 11, 2.0).unwrap();
        let (_, data, _) = seeded_dataset(&chain, spec, 1.0, 300, 11).unwrap();
        let attacked = data.rescale_column(0, r.root_scale).unwrap();
        assert_eq!(r.seed, 11);
        assert_eq!(r.forward_mmse, mmse(&chain, &attacked).unwrap());
    }

    #[test]
    fn fixed_weights() {
        let chain = make_chain(3).unwrap();
        let (scm, _, p) = seeded_dataset(&chain, WeightSpec::Fixed(1.0), 1.0, 10, 0).unwrap();
        assert_eq!(scm.graph().weight(0, 1), 1.0);
        assert_eq!(p.seed, 0);
    }

    #[test]
    fn aggregation_matches_raw_rows() {
        let cfg = SweepConfig {
            scales: vec![2.0, 8.0],
            lambdas: vec![0.0, 1.0],
            trials: 3,
            n: 500,
            ..Default::default()
        };
        let rows = run_reversal_sweep(&cfg, &NotearsConfig::default()).unwrap();
        assert_eq!(rows.len(), 12);
        let cells = aggregate_sweep(&rows);
        assert_eq!(cells.len(), 4);
        for c in &cells {
            let hits = rows
                .iter()
                .filter(|r| r.scale == c.scale && r.lambda == c.lambda && r.success)
                .count();
            assert_eq!(c.trials, 3);
            assert_eq!(c.successes, hits);
            assert!((0.0..=1.0).contains(&c.success_ratio));
        }
    }

    #[test]
    fn empty_sweep_grid_is_rejected() {
        let cfg = SweepConfig {
            scales: vec![],
            ..Default::default()
        };
        assert!(run_reversal_sweep(&cfg, &NotearsConfig::default()).is_err());
    }
}
