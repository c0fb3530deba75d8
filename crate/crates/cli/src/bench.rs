//! Simulation grids: every (structure, p, n) cell is replicated with
//! derived seeds, fitted, scored, and aggregated.
//!
//! Replicate `r` of structure `s` at dimension `p` uses the same true graph
//! for every `n`, so the sample-size comparison is paired.

use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use covsel::generate::{sample_mvn, Structure};
use covsel::io;
use covsel::pipeline::fit_ggm;
use covsel::rng::{derive_seed, tag};
use rayon::prelude::*;
use serde::Serialize;

use crate::commands::{evaluate, metric_fields, EvalOutcome, METRIC_HEADER};
use crate::grid::BenchGrid;
use crate::{create_dir, create_file, write_json, CliError};

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    /// Grid file (key = value lines, repeated keys for lists).
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Overrides the grid's per-fit thread count.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Overrides the grid's number of concurrent replicates.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Also write every estimated precision matrix and edge list under `estimates/`.
    #[arg(long)]
    pub save_estimates: bool,
}

/// Seeds of one replicate: the truth depends on (structure, p, replicate),
/// the data additionally on n.
pub fn replicate_seeds(master: u64, structure: Structure, p: usize, n: usize, r: usize) -> (u64, u64) {
    let s = Structure::ALL.iter().position(|&x| x == structure).unwrap_or(0) as u64;
    let graph = derive_seed(master, &[tag::REPLICATE, s, p as u64, r as u64]);
    (graph, derive_seed(graph, &[tag::DATA, n as u64]))
}

#[derive(Debug, Clone)]
pub struct ReplicateResult {
    pub structure: Structure,
    pub p: usize,
    pub n: usize,
    pub replicate: usize,
    pub seed: u64,
    pub outcome: Result<ReplicateScores, String>,
}

#[derive(Debug, Clone)]
pub struct ReplicateScores {
    pub eval: EvalOutcome,
    pub edges: usize,
    pub true_edges: usize,
    pub min_eig: f64,
    /// Nonzero precision entries outside the estimated edge set.
    pub off_pattern: usize,
    pub pd_corrected: bool,
    pub runtime_seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CellSummary {
    pub structure: Structure,
    pub p: usize,
    pub n: usize,
    pub replicates: usize,
    pub failed: usize,
    pub non_pd: usize,
    pub means: Vec<(String, f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct BenchOutcome {
    pub results: Vec<ReplicateResult>,
    pub cells: Vec<CellSummary>,
}

fn run_replicate(
    grid: &BenchGrid,
    (structure, p, n): (Structure, usize, usize),
    r: usize,
    save: Option<&PathBuf>,
) -> ReplicateResult {
    let (graph_seed, data_seed) = replicate_seeds(grid.seed, structure, p, n, r);
    let outcome = (|| -> Result<ReplicateScores, CliError> {
        let truth = grid.generator.spec(structure, p, graph_seed).generate()?;
        let data = sample_mvn(&truth, n, data_seed)?;
        let mut config = grid.config.clone();
        config.seed = data_seed;
        let start = Instant::now();
        let fit = fit_ggm(&data, &config)?;
        let runtime_seconds = start.elapsed().as_secs_f64();
        let g = &fit.graph;
        let eval = evaluate(&truth.omega, &g.omega_hat, &truth.adjacency, &g.edges)?;
        let om = g.omega_hat.matrix();
        let off_pattern = (0..p)
            .flat_map(|i| (0..p).map(move |j| (i, j)))
            .filter(|&(i, j)| i != j && om[(i, j)] != 0.0 && !g.edges.contains(i, j))
            .count();
        if let Some(dir) = save {
            let stem = format!("{structure}_p{p}_n{n}_r{r}");
            let names = io::default_names(p);
            io::write_matrix_file(&dir.join(format!("{stem}_omega_hat.csv")), &names, om)?;
            io::write_edge_list(
                create_file(&dir.join(format!("{stem}_edges.csv")))?,
                &g.edges,
                Some(&g.pcor),
                Some(&g.omega_hat),
            )?;
        }
        Ok(ReplicateScores {
            eval,
            edges: g.edges.len(),
            true_edges: truth.adjacency.len(),
            min_eig: g.omega_hat.min_eigenvalue(),
            off_pattern,
            pd_corrected: g.pd_report.corrected,
            runtime_seconds,
        })
    })();
    ReplicateResult {
        structure,
        p,
        n,
        replicate: r,
        seed: data_seed,
        outcome: outcome.map_err(|e| e.to_string()),
    }
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let k = values.len();
    if k == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / k as f64;
    let sd = if k > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

/// Means and SDs per cell. Replicates with a non-PD estimate are left out of
/// the loss means (their KL/QL are infinite) but still count for edge scores.
pub fn summarize(grid: &BenchGrid, results: &[ReplicateResult]) -> Vec<CellSummary> {
    grid.cells()
        .into_iter()
        .map(|(structure, p, n)| {
            let rows: Vec<&ReplicateScores> = results
                .iter()
                .filter(|r| r.structure == structure && r.p == p && r.n == n)
                .filter_map(|r| r.outcome.as_ref().ok())
                .collect();
            let finite: Vec<&&ReplicateScores> = rows.iter().filter(|r| !r.eval.losses.non_pd).collect();
            let mut means = Vec::new();
            let mut push = |name: &str, v: Vec<f64>| {
                let (m, s) = mean_sd(&v);
                means.push((name.to_string(), m, s));
            };
            push("kl", finite.iter().map(|r| r.eval.losses.kl).collect());
            push("ql", finite.iter().map(|r| r.eval.losses.ql).collect());
            push("l2", rows.iter().map(|r| r.eval.losses.l2).collect());
            push("mse", rows.iter().filter(|r| r.eval.losses.mse_pcor.is_finite()).map(|r| r.eval.losses.mse_pcor).collect());
            push("sp", rows.iter().map(|r| r.eval.edges.sp).collect());
            push("sn", rows.iter().map(|r| r.eval.edges.sn).collect());
            push("mcc", rows.iter().map(|r| r.eval.edges.mcc).collect());
            push("f1", rows.iter().map(|r| r.eval.edges.f1).collect());
            push("edges", rows.iter().map(|r| r.edges as f64).collect());
            push("runtime_seconds", rows.iter().map(|r| r.runtime_seconds).collect());
            CellSummary {
                structure,
                p,
                n,
                replicates: grid.replicates,
                failed: grid.replicates - rows.len(),
                non_pd: rows.len() - finite.len(),
                means,
            }
        })
        .collect()
}

#[derive(Serialize)]
struct BenchManifest<'a> {
    command: &'static str,
    version: &'static str,
    grid: &'a BenchGrid,
    replicate_seeds: Vec<(String, usize, usize, usize, u64)>,
    failures: usize,
}

/// Writes `metrics.csv` (one row per replicate), `summary.csv` (one row per
/// cell), `failures.csv` and `manifest.json`.
pub fn cmd_bench(args: &BenchArgs) -> Result<BenchOutcome, CliError> {
    let mut grid = BenchGrid::from_file(&args.grid)?;
    if let Some(t) = args.threads {
        grid.config.threads = t;
    }
    if let Some(w) = args.workers {
        grid.workers = w;
    }
    create_dir(&args.out_dir)?;
    let save = if args.save_estimates {
        let dir = args.out_dir.join("estimates");
        create_dir(&dir)?;
        Some(dir)
    } else {
        None
    };

    let jobs: Vec<((Structure, usize, usize), usize)> = grid
        .cells()
        .into_iter()
        .flat_map(|cell| (0..grid.replicates).map(move |r| (cell, r)))
        .collect();
    let run = || -> Vec<ReplicateResult> {
        jobs.par_iter()
            .map(|&(cell, r)| run_replicate(&grid, cell, r, save.as_ref()))
            .collect()
    };
    let results = if grid.workers == 0 {
        run()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(grid.workers)
            .build()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?
            .install(run)
    };
    let cells = summarize(&grid, &results);

    write_metrics(&args.out_dir.join("metrics.csv"), &results)?;
    write_summary(&args.out_dir.join("summary.csv"), &cells)?;
    let failures: Vec<&ReplicateResult> = results.iter().filter(|r| r.outcome.is_err()).collect();
    {
        let mut w = csv::Writer::from_writer(create_file(&args.out_dir.join("failures.csv"))?);
        w.write_record(["structure", "p", "n", "replicate", "seed", "error"]).map_err(covsel::Error::from)?;
        for f in &failures {
            w.write_record([
                f.structure.to_string(),
                f.p.to_string(),
                f.n.to_string(),
                f.replicate.to_string(),
                f.seed.to_string(),
                f.outcome.as_ref().err().cloned().unwrap_or_default(),
            ])
            .map_err(covsel::Error::from)?;
        }
        w.flush().map_err(covsel::Error::from)?;
    }
    write_json(
        &args.out_dir.join("manifest.json"),
        &BenchManifest {
            command: "bench",
            version: env!("CARGO_PKG_VERSION"),
            grid: &grid,
            replicate_seeds: results
                .iter()
                .map(|r| (r.structure.to_string(), r.p, r.n, r.replicate, r.seed))
                .collect(),
            failures: failures.len(),
        },
    )?;

    for c in &cells {
        let get = |k: &str| c.means.iter().find(|m| m.0 == k).map(|m| m.1).unwrap_or(f64::NAN);
        println!(
            "{:<10} p={:<4} n={:<5} reps={} failed={} KL={:.3} QL={:.3} SP={:.3} SN={:.3} MCC={:.3} edges={:.1}",
            c.structure.to_string(),
            c.p,
            c.n,
            c.replicates,
            c.failed,
            get("kl"),
            get("ql"),
            get("sp"),
            get("sn"),
            get("mcc"),
            get("edges")
        );
    }
    if !failures.is_empty() {
        eprintln!("{} replicate(s) failed; see failures.csv", failures.len());
        for f in &failures {
            eprintln!(
                "  {} p={} n={} replicate {}: {}",
                f.structure,
                f.p,
                f.n,
                f.replicate,
                f.outcome.as_ref().err().map(String::as_str).unwrap_or("")
            );
        }
    }
    Ok(BenchOutcome { results, cells })
}

fn write_metrics(path: &std::path::Path, results: &[ReplicateResult]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(create_file(path)?);
    let mut header = vec!["structure", "p", "n", "replicate", "seed"];
    header.extend(METRIC_HEADER);
    header.extend(["edges", "true_edges", "min_eig", "off_pattern", "pd_corrected", "runtime_seconds"]);
    w.write_record(&header).map_err(covsel::Error::from)?;
    for r in results {
        let Ok(s) = &r.outcome else { continue };
        let mut row = vec![
            r.structure.to_string(),
            r.p.to_string(),
            r.n.to_string(),
            r.replicate.to_string(),
            r.seed.to_string(),
        ];
        row.extend(metric_fields(&s.eval.losses, &s.eval.edges));
        row.extend([
            s.edges.to_string(),
            s.true_edges.to_string(),
            format!("{:e}", s.min_eig),
            s.off_pattern.to_string(),
            u8::from(s.pd_corrected).to_string(),
            format!("{:.6}", s.runtime_seconds),
        ]);
        w.write_record(&row).map_err(covsel::Error::from)?;
    }
    w.flush().map_err(covsel::Error::from)?;
    Ok(())
}

fn write_summary(path: &std::path::Path, cells: &[CellSummary]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(create_file(path)?);
    let mut header: Vec<String> = ["structure", "p", "n", "replicates", "failed", "non_pd"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    if let Some(c) = cells.first() {
        for (name, _, _) in &c.means {
            header.push(format!("{name}_mean"));
            header.push(format!("{name}_sd"));
        }
    }
    w.write_record(&header).map_err(covsel::Error::from)?;
    for c in cells {
        let mut row = vec![
            c.structure.to_string(),
            c.p.to_string(),
            c.n.to_string(),
            c.replicates.to_string(),
            c.failed.to_string(),
            c.non_pd.to_string(),
        ];
        for (name, m, s) in &c.means {
            if name == "runtime_seconds" {
                row.push(format!("{m:.6}"));
                row.push(format!("{s:.6}"));
            } else {
                row.push(format!("{m:e}"));
                row.push(format!("{s:e}"));
            }
        }
        w.write_record(&row).map_err(covsel::Error::from)?;
    }
    w.flush().map_err(covsel::Error::from)?;
    Ok(())
}
