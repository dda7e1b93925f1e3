//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit when any
//! criterion fails.

use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::Rng;
use varsort_core::attack::{all_recipes, recipe, AttackKind, AttackStatus};
use varsort_core::experiment::{
    aggregate_sweep, run_perfect_attacks, run_reversal_sweep, seeded_conjecture1, seeded_dataset,
    PerfectRunConfig, SweepConfig, WeightSpec,
};
use varsort_core::graph::{enumerate_dags, make_chain, StructureKind};
use varsort_core::metrics::{mmse, ols_weight_matrix};
use varsort_core::notears::{acyclicity, loss, solve, NotearsConfig};
use varsort_core::oracle::{conjecture1_check, score_all_dags, varsort_mmse_correlation};
use varsort_core::scm::rng_from_seed;

struct Verdict {
    pass: bool,
    summary: String,
    details: Vec<String>,
}

impl Verdict {
    fn new(pass: bool, summary: impl Into<String>) -> Self {
        Self {
            pass,
            summary: summary.into(),
            details: Vec::new(),
        }
    }

    fn with_details(mut self, details: Vec<String>) -> Self {
        self.details = details;
        self
    }
}

type Criterion = (&'static str, fn() -> Verdict, Duration);

fn bivariate_orientation() -> Verdict {
    let g = make_chain(2).unwrap();
    let cfg = NotearsConfig::default().with_lambda(0.1);
    let forward = g.clone();
    let backward = g.reversed();
    let mut correct = 0;
    let mut misses = Vec::new();
    for seed in 0..50 {
        let (_, x, _) = seeded_dataset(&g, WeightSpec::default(), 1.0, 10_000, seed).unwrap();
        let v = x.variances();
        let raw_ok = v[1] > v[0] && solve(&x, &cfg).unwrap().graph.same_edges(&forward);
        let attacked = x.rescale_column(0, (2.0 * v[1] / v[0]).sqrt()).unwrap();
        let va = attacked.variances();
        let flipped_ok = va[0] > va[1] && solve(&attacked, &cfg).unwrap().graph.same_edges(&backward);
        if raw_ok && flipped_ok {
            correct += 1;
        } else {
            misses.push(format!("seed {seed}: raw ok {raw_ok}, rescaled ok {flipped_ok}"));
        }
    }
    Verdict::new(
        correct == 50,
        format!("orientation follows variance order in {correct}/50 datasets"),
    )
    .with_details(misses)
}

fn perfect_success_ratio() -> Verdict {
    let runs = run_perfect_attacks(
        &all_recipes(),
        &PerfectRunConfig::default(),
        &NotearsConfig::default(),
    )
    .unwrap();
    let ok = runs.iter().filter(|r| r.outcome.success).count();
    let details = runs
        .iter()
        .filter(|r| !r.outcome.success)
        .map(|r| {
            format!(
                "{} {} seed {} lambda {}: predicted {:?}",
                r.recipe.source_kind,
                r.recipe.attack_kind,
                r.seed,
                r.lambda,
                r.outcome.predicted.edges()
            )
        })
        .collect();
    Verdict::new(
        ok == runs.len() && runs.len() == 280,
        format!(
            "7 recipes x 20 seeds x lambda {{0.01, 0.1}}: {ok}/{} succeeded",
            runs.len()
        ),
    )
    .with_details(details)
}

fn chain_to_collider() -> Verdict {
    let r = recipe(StructureKind::Chain, AttackKind::ToCollider).unwrap();
    let cfg = PerfectRunConfig {
        lambdas: vec![0.1],
        ..Default::default()
    };
    let runs = run_perfect_attacks(std::slice::from_ref(&r), &cfg, &NotearsConfig::default()).unwrap();
    let mut ok = 0;
    let mut exact = 0;
    let mut details = Vec::new();
    for run in &runs {
        let p = &run.outcome.predicted;
        let shape = p.n_edges() == 3 && p.has_edge(0, 1) && p.has_edge(2, 1) && p.adjacent(0, 2);
        ok += usize::from(shape);
        exact += usize::from(run.outcome.status == AttackStatus::Success);
        if !shape {
            details.push(format!("seed {}: predicted {:?}", run.seed, p.edges()));
        }
    }
    Verdict::new(
        ok == 20 && runs.len() == 20,
        format!("collider at X2 plus an X1-X3 edge in {ok}/20 seeds ({exact}/20 oriented X1->X3)"),
    )
    .with_details(details)
}

fn conjecture_one() -> Verdict {
    let mut total = 0;
    let mut holds = 0;
    let mut details = Vec::new();
    for d in 3..=6 {
        let mut row = 0;
        for seed in 0..20 {
            let r = conjecture1_check(d, &[1.0], &[1.0], 10_000, seed, 2.0).unwrap();
            total += 1;
            if r.holds {
                holds += 1;
                row += 1;
            } else {
                details.push(format!(
                    "counterexample d={d} seed={seed}: forward {} reverse {}",
                    r.forward_mmse, r.reverse_mmse
                ));
            }
        }
        details.push(format!("d={d}: {row}/20 (unit weights)"));
    }
    // same check with random weights; reported, not gated
    for d in 3..=6 {
        let bad: Vec<u64> = (0..20)
            .filter(|&seed| {
                !seeded_conjecture1(d, WeightSpec::default(), 1.0, 10_000, seed, 2.0)
                    .unwrap()
                    .holds
            })
            .collect();
        details.push(format!(
            "d={d}: {}/20 with weights in +-[0.5, 2] (info); failing seeds {bad:?}",
            20 - bad.len()
        ));
    }
    let ratio = holds as f64 / total as f64;
    Verdict::new(
        ratio >= 0.95,
        format!(
            "reverse chain preferred in {holds}/{total} runs ({:.1}%)",
            100.0 * ratio
        ),
    )
    .with_details(details)
}

fn oracle_count() -> Verdict {
    let three = enumerate_dags(3).unwrap().len();
    let four = enumerate_dags(4).unwrap();
    // independent filter: every 0/1 off-diagonal matrix that is nilpotent
    let mut brute = 0;
    for mask in 0u32..(1 << 12) {
        let mut a = DMatrix::<f64>::zeros(4, 4);
        let mut bit = 0;
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    a[(i, j)] = ((mask >> bit) & 1) as f64;
                    bit += 1;
                }
            }
        }
        if (&a * &a * &a * &a).iter().all(|&x| x == 0.0) {
            brute += 1;
        }
    }
    Verdict::new(
        three == 25 && four.len() == 543 && brute == 543,
        format!(
            "enumerate_dags(3) = {three}, enumerate_dags(4) = {}, brute-force filter = {brute}",
            four.len()
        ),
    )
}

fn fig3_sign() -> Verdict {
    let chain = make_chain(3).unwrap();
    let mut rs = Vec::new();
    for seed in 0..10 {
        let (_, x, _) = seeded_dataset(&chain, WeightSpec::Fixed(1.0), 1.0, 10_000, seed).unwrap();
        let report = score_all_dags(&x).unwrap();
        rs.push(varsort_mmse_correlation(&report).unwrap().pearson_r);
    }
    let negative = rs.iter().filter(|r| **r < 0.0).count();
    Verdict::new(
        negative == 10,
        format!(
            "pearson r < 0 in {negative}/10 chain datasets (r from {:.3} to {:.3})",
            rs.iter().copied().fold(f64::INFINITY, f64::min),
            rs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        ),
    )
}

fn table1_properties() -> Verdict {
    let cfg = SweepConfig::default();
    let rows = run_reversal_sweep(&cfg, &NotearsConfig::default()).unwrap();
    let cells = aggregate_sweep(&rows);
    let ratio = |s: f64, l: f64| {
        cells
            .iter()
            .find(|c| c.scale == s && c.lambda == l)
            .map(|c| c.success_ratio)
            .unwrap()
    };
    let mut details = Vec::new();
    for &s in &cfg.scales {
        details.push(format!(
            "scale {s:>4}: {}",
            cfg.lambdas
                .iter()
                .map(|&l| format!("lambda {l}: {:.2}", ratio(s, l)))
                .collect::<Vec<_>>()
                .join("  ")
        ));
    }
    let a = cfg.scales.iter().all(|&s| ratio(s, 1.0) == 0.0);
    let b = cfg.scales.iter().all(|&s| {
        cfg.lambdas
            .windows(2)
            .all(|w| ratio(s, w[1]) <= ratio(s, w[0]) + 0.05)
    });
    let c = cfg.scales.iter().all(|&s| {
        let r = ratio(s, 0.0);
        r > 0.0 && r < 1.0
    });
    details.push(format!("(a) lambda=1 cells all 0.00: {}", mark(a)));
    details.push(format!("(b) non-increasing in lambda within 0.05: {}", mark(b)));
    details.push(format!("(c) lambda=0 ratios in (0, 1): {}", mark(c)));
    Verdict::new(
        a && b && c,
        format!("{} trials per cell over 4 scales x 4 lambdas", cfg.trials),
    )
    .with_details(details)
}

fn numerical_invariants() -> Verdict {
    let mut rng = rng_from_seed(2024);
    let mut grad_err: f64 = 0.0;
    for d in [3usize, 4] {
        for _ in 0..20 {
            let w = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
            let x =
                varsort_core::DataMatrix::new(DMatrix::from_fn(30, d, |_, _| rng.random_range(-2.0..2.0)))
                    .unwrap();
            let step = 1e-6;
            let (_, hg) = acyclicity(&w);
            let (_, lg) = loss(&w, &x).unwrap();
            for i in 0..d {
                for j in 0..d {
                    let mut up = w.clone();
                    let mut down = w.clone();
                    up[(i, j)] += step;
                    down[(i, j)] -= step;
                    let fd_h = (acyclicity(&up).0 - acyclicity(&down).0) / (2.0 * step);
                    let fd_l = (loss(&up, &x).unwrap().0 - loss(&down, &x).unwrap().0) / (2.0 * step);
                    grad_err = grad_err
                        .max((fd_h - hg[(i, j)]).abs())
                        .max((fd_l - lg[(i, j)]).abs());
                }
            }
        }
    }
    let mut dag_h: f64 = 0.0;
    for g in enumerate_dags(4).unwrap() {
        let w = DMatrix::from_fn(4, 4, |i, j| {
            if g.has_edge(i, j) {
                rng.random_range(-3.0..3.0)
            } else {
                0.0
            }
        });
        dag_h = dag_h.max(acyclicity(&w).0);
    }
    let two_cycle = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
    let cycle_err = (acyclicity(&two_cycle).0 - (2.0 * 1f64.cosh() - 2.0)).abs();

    let chain = make_chain(3).unwrap();
    let (_, x, _) = seeded_dataset(&chain, WeightSpec::default(), 1.0, 10_000, 3).unwrap();
    let mut identity_err: f64 = 0.0;
    for g in enumerate_dags(3).unwrap() {
        let m = mmse(&g, &x).unwrap();
        let aggregate = 2.0 * loss(&ols_weight_matrix(&g, &x).unwrap(), &x).unwrap().0;
        identity_err = identity_err.max((m - aggregate).abs() / m);
    }
    let empty = mmse(&varsort_core::DagStructure::empty(3), &x).unwrap();
    let empty_exact = empty == x.variances().iter().sum::<f64>();

    let checks = [
        (
            grad_err < 1e-6,
            format!("max finite-difference gradient error {grad_err:.2e} (< 1e-6)"),
        ),
        (
            dag_h <= 1e-12,
            format!("max h on DAG-supported 4x4 matrices {dag_h:.2e} (<= 1e-12)"),
        ),
        (
            cycle_err < 1e-9,
            format!("2-cycle h error {cycle_err:.2e} (< 1e-9)"),
        ),
        (
            identity_err < 1e-9,
            format!("mmse vs aggregate objective rel. error {identity_err:.2e} (< 1e-9)"),
        ),
        (
            empty_exact,
            format!(
                "empty-graph mmse equals summed variances exactly: {}",
                mark(empty_exact)
            ),
        ),
    ];
    let pass = checks.iter().all(|c| c.0);
    Verdict::new(pass, "gradients, acyclicity and mmse identities")
        .with_details(checks.into_iter().map(|c| c.1).collect())
}

fn oracle_solver_equivalence() -> Verdict {
    let kinds = [StructureKind::Chain, StructureKind::Fork, StructureKind::Collider];
    let cfg = NotearsConfig {
        h_tol: 1e-10,
        ..NotearsConfig::default().with_lambda(0.0)
    };
    let mut worst: f64 = 0.0;
    let mut details = Vec::new();
    for seed in 0..10u64 {
        let kind = kinds[seed as usize % 3];
        let (_, x, _) =
            seeded_dataset(&kind.build(3).unwrap(), WeightSpec::default(), 1.0, 10_000, seed).unwrap();
        let best = score_all_dags(&x).unwrap().minimum_mmse();
        let got = mmse(&solve(&x, &cfg).unwrap().graph, &x).unwrap();
        let rel = (got - best) / best;
        worst = worst.max(rel);
        if rel > 0.02 {
            details.push(format!("{kind} seed {seed}: solver {got} vs best {best}"));
        }
    }
    Verdict::new(
        worst <= 0.02,
        format!(
            "solver mmse within {:.3}% of the 25-DAG minimum on 10 fixtures (<= 2%)",
            100.0 * worst
        ),
    )
    .with_details(details)
}

fn mark(ok: bool) -> &'static str {
    if ok {
        "yes"
    } else {
        "no"
    }
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("AC1", bivariate_orientation, Duration::from_secs(120)),
        ("AC2", perfect_success_ratio, Duration::from_secs(900)),
        ("AC3", chain_to_collider, Duration::MAX),
        ("AC4", conjecture_one, Duration::MAX),
        ("AC5", oracle_count, Duration::MAX),
        ("AC6", fig3_sign, Duration::MAX),
        ("AC7", table1_properties, Duration::from_secs(3600)),
        ("AC8", numerical_invariants, Duration::MAX),
        ("AC9", oracle_solver_equivalence, Duration::MAX),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = Vec::new();
    for (name, check, budget) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let mut v = check();
        let elapsed = start.elapsed();
        if elapsed > budget {
            v.pass = false;
            v.details
                .push(format!("runtime {elapsed:.1?} exceeds budget {budget:?}"));
        }
        println!(
            "{name} {} {} [{:.1?}]",
            if v.pass { "PASS" } else { "FAIL" },
            v.summary,
            elapsed
        );
        for d in &v.details {
            println!("      {d}");
        }
        if !v.pass {
            failed.push(name);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: failed {}", failed.join(", "));
        std::process::exit(1);
    }
}
