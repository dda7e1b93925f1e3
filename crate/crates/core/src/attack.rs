//! Variance-rescaling attacks.
//!
//! An attack multiplies data columns by positive constants so that, for a
//! chosen target graph, every node ends up with a strictly larger variance
//! than each of its target parents. Only variances change; the dependence
//! structure of the data (every pairwise correlation up to sign) is left
//! intact.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{make_chain, make_collider, make_fork, DagStructure, StructureKind};
use crate::metrics::{structural_hamming_distance, varsortability};
use crate::notears::{solve, NotearsConfig};
use crate::scm::DataMatrix;

pub const DEFAULT_MARGIN: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct AttackPlan {
    pub source: DagStructure,
    pub target: DagStructure,
    /// Per-column factors; `1.0` leaves a column untouched.
    pub scales: Vec<f64>,
    pub accessible: BTreeSet<usize>,
    /// Target plus any edges the solver is forced to add.
    pub expected_prediction: DagStructure,
}

impl AttackPlan {
    pub fn new(
        source: DagStructure,
        target: DagStructure,
        scales: Vec<f64>,
        accessible: BTreeSet<usize>,
        expected_prediction: DagStructure,
    ) -> Result<Self> {
        let d = source.d();
        for g in [&target, &expected_prediction] {
            if g.d() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: g.d(),
                });
            }
        }
        if scales.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: scales.len(),
            });
        }
        if target.same_edges(&source) {
            return Err(Error::InvalidArgument(
                "target graph must differ from the source graph".into(),
            ));
        }
        if !target.is_subgraph_of(&expected_prediction) {
            return Err(Error::InvalidArgument(
                "expected prediction must contain every target edge".into(),
            ));
        }
        if let Some(&i) = accessible.iter().find(|&&i| i >= d) {
            return Err(Error::IndexOutOfRange { index: i, len: d });
        }
        let plan = Self {
            source,
            target,
            scales,
            accessible,
            expected_prediction,
        };
        plan.check_scales()?;
        Ok(plan)
    }

    fn check_scales(&self) -> Result<()> {
        for (i, &s) in self.scales.iter().enumerate() {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::PlanViolation(format!(
                    "scale for X{} must be positive and finite, got {s}",
                    i + 1
                )));
            }
            if s != 1.0 && !self.accessible.contains(&i) {
                return Err(Error::PlanViolation(format!(
                    "X{} is not accessible but has scale {s}",
                    i + 1
                )));
            }
        }
        Ok(())
    }
}

/// Multiplies every column by its planned scale.
pub fn apply_attack(data: &DataMatrix, plan: &AttackPlan) -> Result<DataMatrix> {
    if data.d() != plan.scales.len() {
        return Err(Error::DimensionMismatch {
            expected: plan.scales.len(),
            found: data.d(),
        });
    }
    plan.check_scales()?;
    let mut out = data.clone();
    for (i, &s) in plan.scales.iter().enumerate() {
        if s != 1.0 {
            out = out.rescale_column(i, s)?;
        }
    }
    Ok(out)
}

/// When a node counts as already ordered above its parents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrderingRule {
    /// Any strict excess over the largest parent variance.
    Strict,
    /// At least `margin` times the largest parent variance.
    Margin,
}

/// Scales that make each node's variance exceed all of its parents' in `g`.
///
/// Nodes are visited in topological order of `g`. A node that is not
/// already ordered under `rule` is rescaled to `margin` times its largest
/// parent variance.
pub fn variance_ordering_scales(
    variances: &[f64],
    g: &DagStructure,
    margin: f64,
    rule: OrderingRule,
) -> Result<Vec<f64>> {
    if !(margin > 1.0 && margin.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "margin must exceed 1, got {margin}"
        )));
    }
    if variances.len() != g.d() {
        return Err(Error::DimensionMismatch {
            expected: g.d(),
            found: variances.len(),
        });
    }
    let mut vars = variances.to_vec();
    let mut scales = vec![1.0; g.d()];
    for node in g.topological_order() {
        let parents = g.parents(node);
        let Some(max_parent) = parents.iter().map(|&p| vars[p]).reduce(f64::max) else {
            continue;
        };
        let ordered = match rule {
            OrderingRule::Strict => vars[node] > max_parent,
            OrderingRule::Margin => vars[node] >= margin * max_parent,
        };
        if ordered {
            continue;
        }
        if !(vars[node] > 0.0) {
            return Err(Error::InvalidData(format!(
                "X{} has zero variance and cannot be rescaled",
                node + 1
            )));
        }
        let wanted = margin * max_parent;
        scales[node] = (wanted / vars[node]).sqrt();
        vars[node] = wanted;
    }
    Ok(scales)
}

/// Unordered node pairs `(a, b)`, `a < b`, that a least-squares fit must
/// join when the data come from `source` but the variances are arranged for
/// `target`.
///
/// For every unshielded triple `a - m - b` present in both graphs whose
/// collider status differs, the data carry a (conditional) dependence
/// between `a` and `b` that the target cannot express, so an extra edge
/// appears. Exact for 3-node structures.
pub fn forced_extra_pairs(source: &DagStructure, target: &DagStructure) -> Vec<(usize, usize)> {
    let d = target.d();
    let mut pairs = BTreeSet::new();
    for m in 0..d {
        for a in 0..d {
            for b in a + 1..d {
                if a == m || b == m {
                    continue;
                }
                let unshielded = |g: &DagStructure| g.adjacent(a, m) && g.adjacent(b, m) && !g.adjacent(a, b);
                if !(unshielded(source) && unshielded(target)) {
                    continue;
                }
                let collider = |g: &DagStructure| g.has_edge(a, m) && g.has_edge(b, m);
                if collider(source) != collider(target) {
                    pairs.insert((a, b));
                }
            }
        }
    }
    pairs.into_iter().collect()
}

/// Adds each pair as an edge from the lower- to the higher-variance endpoint
/// (ties: lower index first), flipping it if that orientation would close a
/// cycle.
pub fn orient_pairs(g: &DagStructure, pairs: &[(usize, usize)], variances: &[f64]) -> Result<DagStructure> {
    let mut out = g.clone();
    for &(a, b) in pairs {
        let (from, to) = if variances[b] < variances[a] {
            (b, a)
        } else {
            (a, b)
        };
        out = out.with_edge(from, to).or_else(|_| out.with_edge(to, from))?;
    }
    Ok(out)
}

/// Full-access plan making the data varsortable with respect to `target`.
///
/// Forced extra edges (see [`forced_extra_pairs`]) are included in the
/// ordering, oriented by the pre-attack variances, so their endpoints are
/// ordered too. The expected prediction orients them by the post-attack
/// variances.
pub fn plan_perfect_attack(
    data: &DataMatrix,
    source: &DagStructure,
    target: &DagStructure,
    margin: f64,
) -> Result<AttackPlan> {
    check_pair(data, source, target)?;
    let variances = data.variances();
    let extra = forced_extra_pairs(source, target);
    let ordering = orient_pairs(target, &extra, &variances)?;
    plan_with_ordering(
        data,
        source,
        target,
        &ordering,
        &extra,
        margin,
        OrderingRule::Strict,
    )
}

fn plan_with_ordering(
    data: &DataMatrix,
    source: &DagStructure,
    target: &DagStructure,
    ordering: &DagStructure,
    extra: &[(usize, usize)],
    margin: f64,
    rule: OrderingRule,
) -> Result<AttackPlan> {
    let variances = data.variances();
    let scales = variance_ordering_scales(&variances, ordering, margin, rule)?;
    let after: Vec<f64> = variances.iter().zip(&scales).map(|(v, s)| v * s * s).collect();
    let expected = orient_pairs(target, extra, &after)?;
    AttackPlan::new(
        source.clone(),
        target.clone(),
        scales,
        (0..data.d()).collect(),
        expected,
    )
}

fn check_pair(data: &DataMatrix, source: &DagStructure, target: &DagStructure) -> Result<()> {
    if source.d() != target.d() || data.d() != source.d() {
        return Err(Error::DimensionMismatch {
            expected: source.d(),
            found: if target.d() != source.d() {
                target.d()
            } else {
                data.d()
            },
        });
    }
    if source.same_edges(target) {
        return Err(Error::InvalidArgument(
            "target graph must differ from the source graph".into(),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    Reverse,
    ToFork,
    ToCollider,
    ToChain,
}

impl AttackKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Reverse => "reverse",
            Self::ToFork => "to_fork",
            Self::ToCollider => "to_collider",
            Self::ToChain => "to_chain",
        }
    }
}

impl std::str::FromStr for AttackKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reverse" => Ok(Self::Reverse),
            "to_fork" => Ok(Self::ToFork),
            "to_collider" => Ok(Self::ToCollider),
            "to_chain" => Ok(Self::ToChain),
            other => Err(Error::InvalidArgument(format!("unknown attack kind '{other}'"))),
        }
    }
}

impl std::fmt::Display for AttackKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A named 3-node attack and the graph the solver is expected to return.
#[derive(Debug, Clone, PartialEq)]
pub struct Recipe {
    pub source_kind: StructureKind,
    pub attack_kind: AttackKind,
    pub source: DagStructure,
    pub target: DagStructure,
    /// Target plus the forced `X1 -> X3` edge where one appears.
    pub expected_prediction: DagStructure,
}

/// The seven perfect attacks on 3-node chains, forks and colliders.
pub const RECIPES: [(StructureKind, AttackKind); 7] = [
    (StructureKind::Chain, AttackKind::Reverse),
    (StructureKind::Chain, AttackKind::ToFork),
    (StructureKind::Chain, AttackKind::ToCollider),
    (StructureKind::Fork, AttackKind::ToChain),
    (StructureKind::Fork, AttackKind::ToCollider),
    (StructureKind::Collider, AttackKind::ToChain),
    (StructureKind::Collider, AttackKind::ToFork),
];

pub fn recipe(source_kind: StructureKind, attack_kind: AttackKind) -> Result<Recipe> {
    use AttackKind::*;
    use StructureKind::*;
    let chain = make_chain(3)?;
    let fork = make_fork(3)?;
    let collider = make_collider();
    let (source, target) = match (source_kind, attack_kind) {
        (Chain, Reverse) => (chain.clone(), chain.reversed()),
        (Chain, ToFork) => (chain, fork),
        (Chain, ToCollider) => (chain, collider),
        (Fork, ToChain) => (fork, chain),
        (Fork, ToCollider) => (fork, collider),
        (Collider, ToChain) => (collider, chain),
        (Collider, ToFork) => (collider, fork),
        (s, a) => {
            return Err(Error::InvalidArgument(format!("no '{a}' attack on a {s}")));
        }
    };
    // X1 -> X3 wherever an extra edge is forced: the chain-to-collider
    // illustration shows that orientation, and the collider-to-fork recipe
    // asks for Var(X1) < Var(X3).
    let expected_prediction = if forced_extra_pairs(&source, &target).is_empty() {
        target.clone()
    } else {
        target.with_edge(0, 2)?
    };
    Ok(Recipe {
        source_kind,
        attack_kind,
        source,
        target,
        expected_prediction,
    })
}

pub fn all_recipes() -> Vec<Recipe> {
    RECIPES
        .iter()
        .map(|&(s, a)| recipe(s, a).expect("table entries are valid"))
        .collect()
}

/// Full-access plan realizing a recipe's variance ordering, including the
/// ordering of the forced edge's endpoints. Every ordered pair is separated
/// by at least `margin`, so near-equal variances are pulled apart.
pub fn plan_recipe_attack(data: &DataMatrix, recipe: &Recipe, margin: f64) -> Result<AttackPlan> {
    check_pair(data, &recipe.source, &recipe.target)?;
    let extra = forced_extra_pairs(&recipe.source, &recipe.target);
    plan_with_ordering(
        data,
        &recipe.source,
        &recipe.target,
        &recipe.expected_prediction,
        &extra,
        margin,
        OrderingRule::Margin,
    )
}

/// Plan that multiplies exactly the accessible columns by `scale`.
///
/// Requires `1 <= |accessible| < d - 1`; with control over `d - 1`
/// columns the perfect scenario applies.
pub fn imperfect_attack(
    data: &DataMatrix,
    source: &DagStructure,
    target: &DagStructure,
    accessible: &BTreeSet<usize>,
    scale: f64,
) -> Result<AttackPlan> {
    check_pair(data, source, target)?;
    let d = data.d();
    if accessible.is_empty() {
        return Err(Error::InvalidArgument("accessible column set is empty".into()));
    }
    if accessible.len() + 1 >= d {
        return Err(Error::InvalidArgument(format!(
            "{} accessible columns out of {d} is a perfect attack",
            accessible.len()
        )));
    }
    if let Some(&i) = accessible.iter().find(|&&i| i >= d) {
        return Err(Error::IndexOutOfRange { index: i, len: d });
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "scale must be positive, got {scale}"
        )));
    }
    let scales: Vec<f64> = (0..d)
        .map(|i| if accessible.contains(&i) { scale } else { 1.0 })
        .collect();
    let after: Vec<f64> = data
        .variances()
        .iter()
        .zip(&scales)
        .map(|(v, s)| v * s * s)
        .collect();
    let expected = orient_pairs(target, &forced_extra_pairs(source, target), &after)?;
    AttackPlan::new(
        source.clone(),
        target.clone(),
        scales,
        accessible.clone(),
        expected,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackStatus {
    Success,
    /// Right skeleton, but some edge orientation differs from the expectation.
    SkeletonMatch,
    Failure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackOutcome {
    pub predicted: DagStructure,
    pub status: AttackStatus,
    pub success: bool,
    /// Varsortability with respect to the target, before and after.
    pub varsort_before: f64,
    pub varsort_after: f64,
    pub shd_to_expected: usize,
    pub scales_used: Vec<f64>,
    pub h_final: f64,
    pub converged: bool,
}

/// Applies the plan, runs the solver and compares its graph with the
/// plan's expected prediction.
pub fn run_attack(data: &DataMatrix, plan: &AttackPlan, config: &NotearsConfig) -> Result<AttackOutcome> {
    let attacked = apply_attack(data, plan)?;
    let result = solve(&attacked, config)?;
    Ok(judge(
        data,
        &attacked,
        plan,
        result.graph,
        result.h_final,
        result.converged,
    ))
}

fn judge(
    data: &DataMatrix,
    attacked: &DataMatrix,
    plan: &AttackPlan,
    predicted: DagStructure,
    h_final: f64,
    converged: bool,
) -> AttackOutcome {
    let expected = &plan.expected_prediction;
    let status = if predicted.same_edges(expected) {
        AttackStatus::Success
    } else if predicted.same_skeleton(expected) {
        AttackStatus::SkeletonMatch
    } else {
        AttackStatus::Failure
    };
    let vs = |x: &DataMatrix| {
        varsortability(x, &plan.target)
            .map(|r| r.value)
            .unwrap_or(f64::NAN)
    };
    AttackOutcome {
        shd_to_expected: structural_hamming_distance(&predicted, expected).expect("same node count"),
        predicted,
        status,
        success: status == AttackStatus::Success,
        varsort_before: vs(data),
        varsort_after: vs(attacked),
        scales_used: plan.scales.clone(),
        h_final,
        converged,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaleSearch {
    /// Index into `trials` of the first success.
    pub success_at: Option<usize>,
    /// One `(scale, outcome)` per solver call, in grid order.
    pub trials: Vec<(f64, AttackOutcome)>,
}

impl ScaleSearch {
    pub fn found(&self) -> Option<&(f64, AttackOutcome)> {
        self.success_at.map(|i| &self.trials[i])
    }
}

/// Tries each grid scale in order and stops at the first success.
pub fn scale_search(
    data: &DataMatrix,
    source: &DagStructure,
    target: &DagStructure,
    accessible: &BTreeSet<usize>,
    grid: &[f64],
    config: &NotearsConfig,
) -> Result<ScaleSearch> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("scale grid is empty".into()));
    }
    let mut trials = Vec::with_capacity(grid.len());
    for &scale in grid {
        let plan = imperfect_attack(data, source, target, accessible, scale)?;
        let outcome = run_attack(data, &plan, config)?;
        let hit = outcome.success;
        trials.push((scale, outcome));
        if hit {
            return Ok(ScaleSearch {
                success_at: Some(trials.len() - 1),
                trials,
            });
        }
    }
    Ok(ScaleSearch {
        success_at: None,
        trials,
    })
}

/// Flat record of one attack run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackRecord {
    pub seed: u64,
    pub source_kind: String,
    pub attack_kind: String,
    pub lambda: f64,
    /// Imperfect-attack scale, or the margin of a perfect plan.
    pub scale: f64,
    /// 1-based accessible columns joined by `;`.
    pub accessible: String,
    pub success: bool,
    pub skeleton_match: bool,
    pub shd: usize,
    pub varsort_before: f64,
    pub varsort_after: f64,
}

impl AttackRecord {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        seed: u64,
        source_kind: &str,
        attack_kind: &str,
        lambda: f64,
        scale: f64,
        accessible: &BTreeSet<usize>,
        outcome: &AttackOutcome,
    ) -> Self {
        Self {
            seed,
            source_kind: source_kind.to_string(),
            attack_kind: attack_kind.to_string(),
            lambda,
            scale,
            accessible: accessible
                .iter()
                .map(|i| (i + 1).to_string())
                .collect::<Vec<_>>()
                .join(";"),
            success: outcome.success,
            skeleton_match: outcome.status == AttackStatus::SkeletonMatch,
            shd: outcome.shd_to_expected,
            varsort_before: outcome.varsort_before,
            varsort_after: outcome.varsort_after,
        }
    }
}
