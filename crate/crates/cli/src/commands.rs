use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use varsort_core::attack::{
    imperfect_attack, plan_recipe_attack, recipe, run_attack, scale_search, AttackRecord, DEFAULT_MARGIN,
};
use varsort_core::experiment::{
    aggregate_sweep, run_reversal_sweep, seeded_conjecture1, seeded_dataset, SweepConfig, WeightSpec,
};
use varsort_core::graph::fork_center;
use varsort_core::oracle::{best_dag, score_all_dags, varsort_mmse_correlation};
use varsort_core::scm::Provenance;
use varsort_core::{solve as run_solver, DagStructure, DataMatrix, NotearsConfig, StructureKind};

use crate::config::{
    check_writable, layered, open_output, sidecar, usage, write_csv_rows, write_json, UsageError,
};
use crate::{AttackArgs, GenerateArgs, OracleArgs, SolveArgs, SweepArgs};

const DEFAULT_N: usize = 10_000;

fn resolve<T: Serialize + serde::de::DeserializeOwned>(args: &T, config: &Option<PathBuf>) -> Result<T> {
    layered(args, config.as_deref())
}

fn weight_spec(weight: Option<f64>, range: &Option<Vec<f64>>) -> Result<WeightSpec> {
    match (weight, range) {
        (Some(_), Some(_)) => usage("--weight and --weight-range are mutually exclusive"),
        (Some(w), None) => Ok(WeightSpec::Fixed(w)),
        (None, Some(r)) if r.len() == 2 => Ok(WeightSpec::Random {
            low: r[0],
            high: r[1],
        }),
        (None, Some(r)) => usage(format!("--weight-range needs LO,HI, got {} values", r.len())),
        (None, None) => Ok(WeightSpec::default()),
    }
}

fn solver_config(omega: Option<f64>, h_tol: Option<f64>, max_outer: Option<usize>) -> Result<NotearsConfig> {
    let mut cfg = NotearsConfig::default();
    if let Some(v) = omega {
        cfg.omega = v;
    }
    if let Some(v) = h_tol {
        cfg.h_tol = v;
    }
    if let Some(v) = max_outer {
        cfg.max_outer = v;
    }
    cfg.validate().map_err(|e| UsageError(e.to_string()))?;
    Ok(cfg)
}

fn read_data(path: &Path) -> Result<DataMatrix> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    DataMatrix::read_csv(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))
}

fn provenance_for(kind: StructureKind, d: usize, mut p: Provenance) -> Provenance {
    p.structure = Some(kind.as_str().to_string());
    if kind == StructureKind::Fork {
        p.center = Some(fork_center(d));
    }
    p
}

#[derive(Serialize)]
struct RunMeta<'a, T: Serialize> {
    command: &'a str,
    version: &'a str,
    config: &'a T,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    datasets: Vec<Provenance>,
}

fn write_meta<T: Serialize>(
    out: Option<&Path>,
    command: &str,
    config: &T,
    datasets: Vec<Provenance>,
) -> Result<()> {
    if let Some(out) = out {
        let meta = RunMeta {
            command,
            version: env!("CARGO_PKG_VERSION"),
            config,
            datasets,
        };
        write_json(&sidecar(out, "provenance.json"), &meta)?;
    }
    Ok(())
}

fn output_paths(out: Option<&Path>, extra: &[&str]) -> Vec<PathBuf> {
    let Some(out) = out else { return Vec::new() };
    let mut paths = vec![out.to_path_buf(), sidecar(out, "provenance.json")];
    paths.extend(extra.iter().map(|s| sidecar(out, s)));
    paths
}

fn guard(paths: &[PathBuf], force: bool) -> Result<()> {
    check_writable(&paths.iter().map(PathBuf::as_path).collect::<Vec<_>>(), force)
}

pub fn generate(args: GenerateArgs) -> Result<()> {
    let a = resolve(&args, &args.config)?;
    let Some(out) = a.out.as_deref() else {
        return usage("generate needs --out");
    };
    guard(&output_paths(Some(out), &[]), args.force)?;
    let kind = a.structure.unwrap_or(StructureKind::Chain);
    let d = a.d.unwrap_or(3);
    let structure = kind.build(d).map_err(|e| UsageError(e.to_string()))?;
    let weights = weight_spec(a.weight, &a.weight_range)?;
    let (_, data, provenance) = seeded_dataset(
        &structure,
        weights,
        a.sigma.unwrap_or(1.0),
        a.n.unwrap_or(DEFAULT_N),
        a.seed.unwrap_or(0),
    )?;
    let mut w = open_output(Some(out))?;
    data.write_csv(&mut w)?;
    w.flush()?;
    write_json(
        &sidecar(out, "provenance.json"),
        &provenance_for(kind, d, provenance),
    )?;
    Ok(())
}

/// `3>2,2>1` (1-based) over `d` nodes.
fn parse_target(spec: &str, d: usize) -> Result<DagStructure> {
    let mut edges = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let Some((from, to)) = part.split_once('>') else {
            return usage(format!("target edge '{part}' is not of the form I>J"));
        };
        let parse = |s: &str| -> Result<usize> {
            match s.trim().parse::<usize>() {
                Ok(i) if (1..=d).contains(&i) => Ok(i - 1),
                _ => usage(format!("target node '{s}' is not in 1..={d}")),
            }
        };
        edges.push((parse(from)?, parse(to)?));
    }
    DagStructure::from_edges(d, &edges).map_err(|e| UsageError(format!("target: {e}")).into())
}

pub fn attack(args: AttackArgs) -> Result<()> {
    let a = resolve(&args, &args.config)?;
    let out = a.out.as_deref();
    guard(&output_paths(out, &[]), args.force)?;
    let (Some(kind), Some(attack_kind)) = (a.structure, a.kind) else {
        return usage("attack needs --structure and --kind");
    };
    let r = recipe(kind, attack_kind).map_err(|e| UsageError(e.to_string()))?;
    let d = r.source.d();
    let lambdas = a.lambda.clone().unwrap_or_else(|| vec![0.1]);
    let solver = solver_config(a.omega, a.h_tol, a.max_outer)?;
    let margin = a.margin.unwrap_or(DEFAULT_MARGIN);

    let accessible: Option<BTreeSet<usize>> = match &a.accessible {
        None => None,
        Some(cols) => {
            if let Some(bad) = cols.iter().find(|&&c| c == 0 || c > d) {
                return usage(format!("accessible column {bad} is not in 1..={d}"));
            }
            Some(cols.iter().map(|c| c - 1).collect())
        }
    };
    if accessible.is_none() && (a.scale.is_some() || a.search) {
        return usage("--scale and --search need --accessible");
    }
    let target = match &a.target {
        Some(spec) => parse_target(spec, d)?,
        None => r.target.clone(),
    };

    let mut datasets: Vec<(u64, DataMatrix, Option<Provenance>)> = Vec::new();
    if let Some(path) = &a.data {
        let data = read_data(path)?;
        if data.d() != d {
            return usage(format!(
                "{} has {} columns, expected {d}",
                path.display(),
                data.d()
            ));
        }
        datasets.push((a.seed.unwrap_or(0), data, None));
    } else {
        let weights = weight_spec(a.weight, &a.weight_range)?;
        let first = a.seed.unwrap_or(0);
        for seed in first..first + a.seeds.unwrap_or(1) {
            let (_, data, p) = seeded_dataset(
                &r.source,
                weights,
                a.sigma.unwrap_or(1.0),
                a.n.unwrap_or(DEFAULT_N),
                seed,
            )?;
            datasets.push((seed, data, Some(provenance_for(kind, d, p))));
        }
    }

    let mut rows: Vec<AttackRecord> = Vec::new();
    for (seed, data, _) in &datasets {
        match &accessible {
            None => {
                let plan = plan_recipe_attack(data, &r, margin)?;
                for &lambda in &lambdas {
                    let outcome = run_attack(data, &plan, &solver.clone().with_lambda(lambda))?;
                    rows.push(AttackRecord::new(
                        *seed,
                        kind.as_str(),
                        attack_kind.as_str(),
                        lambda,
                        margin,
                        &plan.accessible,
                        &outcome,
                    ));
                }
            }
            Some(acc) => {
                let Some(scales) = &a.scale else {
                    return usage("an imperfect attack needs --scale");
                };
                for &lambda in &lambdas {
                    let cfg = solver.clone().with_lambda(lambda);
                    let trials = if a.search {
                        scale_search(data, &r.source, &target, acc, scales, &cfg)?.trials
                    } else {
                        scales
                            .iter()
                            .map(|&s| {
                                let plan = imperfect_attack(data, &r.source, &target, acc, s)?;
                                Ok((s, run_attack(data, &plan, &cfg)?))
                            })
                            .collect::<varsort_core::Result<Vec<_>>>()?
                    };
                    for (scale, outcome) in trials {
                        rows.push(AttackRecord::new(
                            *seed,
                            kind.as_str(),
                            attack_kind.as_str(),
                            lambda,
                            scale,
                            acc,
                            &outcome,
                        ));
                    }
                }
            }
        }
    }
    write_csv_rows(out, &rows)?;
    let successes = rows.iter().filter(|r| r.success).count();
    eprintln!("{successes}/{} runs succeeded", rows.len());
    write_meta(
        out,
        "attack",
        &a,
        datasets.into_iter().filter_map(|d| d.2).collect(),
    )
}

pub fn sweep(args: SweepArgs) -> Result<()> {
    let a = resolve(&args, &args.config)?;
    let out = a.out.as_deref();
    let mut paths = output_paths(out, &[]);
    paths.extend(a.raw.clone());
    guard(&paths, args.force)?;
    let defaults = SweepConfig::default();
    let cfg = SweepConfig {
        scales: a.scale.clone().unwrap_or(defaults.scales),
        lambdas: a.lambda.clone().unwrap_or(defaults.lambdas),
        trials: a.trials.unwrap_or(defaults.trials),
        seed: a.seed.unwrap_or(defaults.seed),
        d: a.d.unwrap_or(defaults.d),
        n: a.n.unwrap_or(defaults.n),
        sigma: a.sigma.unwrap_or(defaults.sigma),
        weights: weight_spec(a.weight, &a.weight_range)?,
    };
    if cfg.scales.is_empty() || cfg.lambdas.is_empty() {
        return usage("sweep grid is empty");
    }
    if cfg.trials == 0 {
        return usage("--trials must be at least 1");
    }
    let solver = solver_config(a.omega, a.h_tol, a.max_outer)?;
    let rows = run_reversal_sweep(&cfg, &solver)?;
    let cells = aggregate_sweep(&rows);
    write_csv_rows(out, &cells)?;
    if let Some(raw) = &a.raw {
        write_csv_rows(Some(raw), &rows)?;
    }
    let monotone = cfg.scales.iter().all(|&s| {
        let row: Vec<f64> = cells
            .iter()
            .filter(|c| c.scale == s)
            .map(|c| c.success_ratio)
            .collect();
        row.windows(2).all(|w| w[1] <= w[0])
    });
    eprintln!(
        "{} cells x {} trials; ratios non-increasing in lambda at every scale: {}",
        cells.len(),
        cfg.trials,
        if monotone { "yes" } else { "no" }
    );
    write_meta(out, "sweep", &a, Vec::new())
}

#[derive(Serialize)]
struct OracleSummary {
    entries: usize,
    pearson_r: Option<f64>,
    min_mmse: f64,
    best_dag: varsort_core::graph::GraphJson,
    penalty: f64,
}

pub fn oracle(args: OracleArgs) -> Result<()> {
    let a = resolve(&args, &args.config)?;
    let out = a.out.as_deref();
    let sigma = a.sigma.unwrap_or(1.0);
    let n = a.n.unwrap_or(DEFAULT_N);
    let d = a.d.unwrap_or(3);
    let weights = weight_spec(a.weight, &a.weight_range)?;

    if a.conjecture1 {
        guard(&output_paths(out, &[]), args.force)?;
        let first = a.seed.unwrap_or(0);
        let margin = a.margin.unwrap_or(DEFAULT_MARGIN);
        if d < 3 {
            return usage("--conjecture1 needs --d of at least 3");
        }
        let rows = (first..first + a.seeds.unwrap_or(20))
            .map(|seed| seeded_conjecture1(d, weights, sigma, n, seed, margin))
            .collect::<varsort_core::Result<Vec<_>>>()?;
        write_csv_rows(out, &rows)?;
        let holds = rows.iter().filter(|r| r.holds).count();
        eprintln!("reverse chain preferred in {holds}/{} runs", rows.len());
        for r in rows.iter().filter(|r| !r.holds) {
            eprintln!("counterexample: d={} seed={}", r.d, r.seed);
        }
        return write_meta(out, "oracle", &a, Vec::new());
    }

    let mut paths = output_paths(out, &["summary.json"]);
    paths.extend(a.graphs.clone());
    guard(&paths, args.force)?;
    if d > varsort_core::graph::MAX_ENUMERATION_NODES {
        return usage(format!(
            "oracle supports d <= {}",
            varsort_core::graph::MAX_ENUMERATION_NODES
        ));
    }
    let (data, provenance) = match &a.data {
        Some(path) => (read_data(path)?, None),
        None => {
            let kind = a.structure.unwrap_or(StructureKind::Chain);
            let structure = kind.build(d).map_err(|e| UsageError(e.to_string()))?;
            let (_, data, p) = seeded_dataset(&structure, weights, sigma, n, a.seed.unwrap_or(0))?;
            (data, Some(provenance_for(kind, d, p)))
        }
    };
    let mut report = score_all_dags(&data)?;
    if let Some(p) = provenance.clone() {
        report = report.with_provenance(p);
    }
    let penalty = a.penalty.unwrap_or(0.0);
    let best = best_dag(&report, penalty).map_err(|e| UsageError(e.to_string()))?;
    let correlation = varsort_mmse_correlation(&report).ok();

    if out.is_some() || !a.best_dag {
        report.write_csv(open_output(out)?)?;
    }
    if let Some(path) = &a.graphs {
        write_json(path, &report.graphs_json())?;
    }
    if a.best_dag {
        let mut stdout = std::io::stdout().lock();
        serde_json::to_writer_pretty(&mut stdout, &best.dag.to_json())?;
        writeln!(stdout)?;
    }
    if let Some(out) = out {
        write_json(
            &sidecar(out, "summary.json"),
            &OracleSummary {
                entries: report.entries.len(),
                pearson_r: correlation.as_ref().map(|c| c.pearson_r),
                min_mmse: report.minimum_mmse(),
                best_dag: best.dag.to_json(),
                penalty,
            },
        )?;
    }
    match &correlation {
        Some(c) => eprintln!(
            "pearson r(varsortability, mmse) = {:.4} over {} graphs",
            c.pearson_r,
            c.points.len()
        ),
        None => eprintln!("correlation undefined"),
    }
    write_meta(out, "oracle", &a, provenance.into_iter().collect())
}

pub fn solve(args: SolveArgs) -> Result<()> {
    let a = resolve(&args, &args.config)?;
    let out = a.out.as_deref();
    guard(&output_paths(out, &[]), args.force)?;
    let Some(path) = &a.data else {
        return usage("solve needs --data");
    };
    let mut cfg = solver_config(a.omega, a.h_tol, a.max_outer)?;
    if let Some(v) = a.lambda {
        cfg.lambda1 = v;
    }
    if let Some(v) = a.max_inner {
        cfg.max_inner = v;
    }
    if let Some(v) = a.rho_max {
        cfg.rho_max = v;
    }
    if let Some(v) = a.inner_tol {
        cfg.inner_tol = v;
    }
    cfg.validate().map_err(|e| UsageError(e.to_string()))?;
    let data = read_data(path)?;
    let result = run_solver(&data, &cfg)?;
    let mut w = open_output(out)?;
    serde_json::to_writer_pretty(&mut w, &result.to_json())?;
    writeln!(w)?;
    w.flush()?;
    write_meta(out, "solve", &a, Vec::new())?;
    if !result.converged {
        anyhow::bail!(
            "solver stopped with h = {:e} above h_tol = {:e}",
            result.h_final,
            cfg.h_tol
        );
    }
    Ok(())
}
