use std::path::PathBuf;

use clap::Args;
use covsel::assembly::{PdReport, PrecisionSymmetrization};
use covsel::evaluation::{edge_metrics, loss_report, EdgeMetrics, LossReport};
use covsel::generate::{sample_mvn, GraphSpec, Structure};
use covsel::io;
use covsel::model::{precision_to_pcor, EdgeSet, PrecisionMatrix};
use covsel::pipeline::{fit_ggm, FitConfig, MethodChoice};
use covsel::projection::DecisionRule;
use serde::Serialize;

use crate::{create_dir, create_file, write_json, CliError, SharedArgs};

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// ar1, ar2, cluster, random or scale-free.
    #[arg(long)]
    pub structure: String,
    #[arg(long)]
    pub p: usize,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub lag1: Option<f64>,
    #[arg(long)]
    pub lag2: Option<f64>,
    #[arg(long)]
    pub edge_prob: Option<f64>,
    #[arg(long)]
    pub df: Option<usize>,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Serialize)]
struct SimulateManifest<'a> {
    command: &'static str,
    version: &'static str,
    graph: &'a GraphSpec,
    n: usize,
    true_edges: usize,
}

/// Writes `data.csv`, `omega_true.csv`, `edges_true.csv` and `manifest.json`.
pub fn cmd_simulate(args: &SimulateArgs) -> Result<GraphSpec, CliError> {
    let structure: Structure = args.structure.parse().map_err(|e: covsel::Error| CliError::Usage(e.to_string()))?;
    let params = crate::grid::GeneratorParams {
        rho: args.rho,
        lag1: args.lag1,
        lag2: args.lag2,
        edge_prob: args.edge_prob,
        df: args.df,
    };
    let spec = params.spec(structure, args.p, args.seed);
    let truth = spec.generate()?;
    let data = sample_mvn(&truth, args.n, args.seed)?;

    create_dir(&args.out_dir)?;
    let names = io::default_names(args.p);
    io::write_data_csv(&args.out_dir.join("data.csv"), &data)?;
    io::write_matrix_file(&args.out_dir.join("omega_true.csv"), &names, truth.omega.matrix())?;
    let pcor = truth.pcor();
    io::write_edge_list(
        create_file(&args.out_dir.join("edges_true.csv"))?,
        &truth.adjacency,
        Some(&pcor),
        Some(&truth.omega),
    )?;
    write_json(
        &args.out_dir.join("manifest.json"),
        &SimulateManifest {
            command: "simulate",
            version: env!("CARGO_PKG_VERSION"),
            graph: &spec,
            n: args.n,
            true_edges: truth.adjacency.len(),
        },
    )?;
    println!(
        "simulated {} with p = {}, n = {}: {} true edges",
        structure,
        args.p,
        args.n,
        truth.adjacency.len()
    );
    Ok(spec)
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    /// Data CSV with a header row of variable names.
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub shared: SharedArgs,
    /// auto, horseshoe or bayes-boot.
    #[arg(long, default_value = "auto")]
    pub method: String,
    #[arg(long, default_value_t = 1.0)]
    pub tau0: f64,
    /// Expected number of neighbours; sets τ₀ from the data instead of --tau0.
    #[arg(long)]
    pub p0: Option<f64>,
    #[arg(long, default_value_t = 1000)]
    pub warmup: usize,
    #[arg(long, default_value_t = 1000)]
    pub draws: usize,
    #[arg(long, default_value_t = 0.10)]
    pub delta_u_frac: f64,
    #[arg(long, default_value_t = 0.10)]
    pub prob_threshold: f64,
    /// Bayesian-bootstrap replicates in the decision rule.
    #[arg(long, default_value_t = 1000)]
    pub bootstrap: usize,
    #[arg(long)]
    pub max_size: Option<usize>,
    #[arg(long, default_value_t = 1e-6)]
    pub eps_pd: f64,
    /// Re-solve every projection without observation i when predicting it (n ≤ 200).
    #[arg(long)]
    pub exact_loo_projection: bool,
    /// average or min.
    #[arg(long, default_value = "average")]
    pub symmetrization: String,
}

impl FitArgs {
    pub fn config(&self) -> Result<FitConfig, CliError> {
        let usage = |e: covsel::Error| CliError::Usage(e.to_string());
        let method: MethodChoice = self.method.parse().map_err(usage)?;
        let symmetrization = match self.symmetrization.as_str() {
            "average" => PrecisionSymmetrization::Average,
            "min" => PrecisionSymmetrization::Min,
            s => return Err(CliError::Usage(format!("unknown symmetrization `{s}` (expected average or min)"))),
        };
        let config = FitConfig {
            method,
            tau0: self.tau0,
            p0: self.p0,
            warmup: self.warmup,
            draws: self.draws,
            rule: DecisionRule {
                delta_u_frac: self.delta_u_frac,
                prob_threshold: self.prob_threshold,
                bootstrap: self.bootstrap,
            },
            max_size: self.max_size,
            eps_pd: self.eps_pd,
            exact_loo: self.exact_loo_projection,
            seed: self.shared.seed,
            threads: self.shared.threads,
            standardize: !self.shared.no_standardize,
            symmetrization,
            ..FitConfig::default()
        };
        config.validate().map_err(usage)?;
        Ok(config)
    }
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub edges: EdgeSet,
    pub pd_report: PdReport,
}

/// Writes `edges.csv`, `pcor.csv`, `omega_hat.csv`, `lambda.csv`,
/// `paths/node_<i>.csv`, `paths/khat_<i>.csv` and `manifest.json`.
pub fn cmd_fit(args: &FitArgs) -> Result<FitOutcome, CliError> {
    let config = args.config()?;
    let data = io::read_data_csv(&args.data).map_err(|e| match e {
        covsel::Error::Io(source) => CliError::Io {
            path: args.data.clone(),
            source,
        },
        e => CliError::Core(e),
    })?;
    let fit = fit_ggm(&data, &config)?;

    let out = &args.shared.out_dir;
    let paths_dir = out.join("paths");
    create_dir(&paths_dir)?;
    let names = data.names().to_vec();
    let g = &fit.graph;
    io::write_edge_list(create_file(&out.join("edges.csv"))?, &g.edges, Some(&g.pcor), Some(&g.omega_hat))?;
    io::write_matrix_file(&out.join("pcor.csv"), &names, g.pcor.matrix())?;
    io::write_matrix_file(&out.join("omega_hat.csv"), &names, g.omega_hat.matrix())?;
    io::write_matrix_file(&out.join("lambda.csv"), &names, fit.lambda.matrix())?;
    let width = data.p().to_string().len();
    for path in fit.paths() {
        let id = format!("{:0width$}", path.node + 1);
        let labels: Vec<String> = names
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != path.node)
            .map(|(_, name)| name.clone())
            .collect();
        path.write_csv(create_file(&paths_dir.join(format!("node_{id}.csv")))?, &labels)?;
        path.write_khat_csv(create_file(&paths_dir.join(format!("khat_{id}.csv")))?)?;
    }
    write_json(&out.join("manifest.json"), &fit.manifest)?;

    let r = &g.pd_report;
    println!(
        "{} edges among {} variables (n = {}); PD correction: {} ({} iterations, min eigenvalue {:.3e} -> {:.3e})",
        g.edges.len(),
        data.p(),
        data.n(),
        if r.corrected { "applied" } else { "not needed" },
        r.iterations,
        r.min_eig_before,
        r.min_eig_after
    );
    let warnings: usize = fit.manifest.nodes.iter().map(|n| n.khat_warnings).sum();
    if warnings > 0 {
        eprintln!("warning: {warnings} observations have Pareto k-hat above 0.7");
    }
    Ok(FitOutcome {
        edges: g.edges.clone(),
        pd_report: g.pd_report.clone(),
    })
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub omega_true: PathBuf,
    #[arg(long)]
    pub omega_est: PathBuf,
    /// True edge list; defaults to the nonzero pattern of --omega-true.
    #[arg(long)]
    pub edges_true: Option<PathBuf>,
    /// Estimated edge list; defaults to the pattern of --omega-est.
    #[arg(long)]
    pub edges_est: Option<PathBuf>,
    /// Entries with magnitude at or below this are zero when reading patterns.
    #[arg(long, default_value_t = 1e-8)]
    pub edge_tol: f64,
    /// Metrics CSV; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy)]
pub struct EvalOutcome {
    pub losses: LossReport,
    pub edges: EdgeMetrics,
}

pub(crate) const METRIC_HEADER: [&str; 14] =
    ["kl", "ql", "l2", "mse", "sp", "sn", "mcc", "f1", "tp", "fp", "tn", "fn", "non_pd", "mcc_undefined"];

pub(crate) fn metric_fields(l: &LossReport, e: &EdgeMetrics) -> Vec<String> {
    vec![
        format!("{:e}", l.kl),
        format!("{:e}", l.ql),
        format!("{:e}", l.l2),
        format!("{:e}", l.mse_pcor),
        format!("{:e}", e.sp),
        format!("{:e}", e.sn),
        format!("{:e}", e.mcc),
        format!("{:e}", e.f1),
        e.tp.to_string(),
        e.fp.to_string(),
        e.tn.to_string(),
        e.fn_.to_string(),
        u8::from(l.non_pd).to_string(),
        u8::from(e.mcc_undefined).to_string(),
    ]
}

/// Losses and edge scores for one estimate.
pub fn evaluate(
    truth: &PrecisionMatrix,
    est: &PrecisionMatrix,
    truth_edges: &EdgeSet,
    est_edges: &EdgeSet,
) -> Result<EvalOutcome, CliError> {
    let truth_pcor = precision_to_pcor(truth)?;
    let losses = match precision_to_pcor(est) {
        Ok(est_pcor) => loss_report(truth, est, &truth_pcor, &est_pcor)?,
        Err(_) => {
            let mut l = loss_report(truth, est, &truth_pcor, &truth_pcor)?;
            l.mse_pcor = f64::NAN;
            l
        }
    };
    Ok(EvalOutcome {
        losses,
        edges: edge_metrics(truth_edges, est_edges)?,
    })
}

pub fn cmd_eval(args: &EvalArgs) -> Result<EvalOutcome, CliError> {
    let (_, truth) = io::read_precision_csv(&args.omega_true)?;
    let (_, est) = io::read_precision_csv(&args.omega_est)?;
    if truth.dim() != est.dim() {
        return Err(CliError::Core(covsel::Error::Dimension(format!(
            "truth is {0}×{0} but estimate is {1}×{1}",
            truth.dim(),
            est.dim()
        ))));
    }
    let p = truth.dim();
    let truth_edges = match &args.edges_true {
        Some(path) => io::read_edge_file(path, p)?,
        None => EdgeSet::from_pattern(truth.matrix(), args.edge_tol),
    };
    let est_edges = match &args.edges_est {
        Some(path) => io::read_edge_file(path, p)?,
        None => EdgeSet::from_pattern(est.matrix(), args.edge_tol),
    };
    let outcome = evaluate(&truth, &est, &truth_edges, &est_edges)?;

    let row = metric_fields(&outcome.losses, &outcome.edges);
    let write = |w: &mut csv::Writer<Box<dyn std::io::Write>>| -> Result<(), CliError> {
        w.write_record(METRIC_HEADER).map_err(covsel::Error::from)?;
        w.write_record(&row).map_err(covsel::Error::from)?;
        w.flush().map_err(covsel::Error::from)?;
        Ok(())
    };
    let sink: Box<dyn std::io::Write> = match &args.out {
        Some(path) => Box::new(create_file(path)?),
        None => Box::new(std::io::stdout()),
    };
    write(&mut csv::Writer::from_writer(sink))?;
    Ok(outcome)
}
