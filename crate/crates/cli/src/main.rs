//! `timino` command-line tool: causal discovery on CSV panels, Granger
//! baselines and the synthetic benchmark suites.

mod bench;
mod fmt;

use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use timino::data::write_dot;
use timino::datagen::{generate, ExperimentId, ExperimentSpec};
use timino::discovery::{discover_partial, DiscoveryConfig, DiscoveryResult, IndepMethod, Verdict};
use timino::granger::{granger_linear, granger_nonlinear_pairwise, GrangerConfig, GrangerReport, GrangerVerdict};
use timino::indep::HsicPValue;
use timino::models::Backend;
use timino::{Panel, SummaryGraph};

use crate::bench::{BenchPlan, Method};
use crate::fmt::g6;

#[derive(Parser)]
#[command(name = "timino", version, about = "Causal discovery for multivariate time series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Infer a summary graph from a CSV panel.
    Discover(DiscoverArgs),
    /// Run a Granger-causality baseline on a CSV panel.
    Granger(GrangerArgs),
    /// Score methods on seeded synthetic data sets.
    Bench(BenchArgs),
    /// Write one synthetic data set as CSV.
    Generate(GenerateArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Model {
    Linear,
    Gam,
    Gp,
}

impl From<Model> for Backend {
    fn from(m: Model) -> Self {
        match m {
            Model::Linear => Backend::Linear,
            Model::Gam => Backend::Additive,
            Model::Gp => Backend::Gp,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Indep {
    Hsic,
    Crosscorr,
}

impl From<Indep> for IndepMethod {
    fn from(i: Indep) -> Self {
        match i {
            Indep::Hsic => IndepMethod::Hsic,
            Indep::Crosscorr => IndepMethod::CrossCorr,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GrangerMethod {
    Linear,
    Nonlinear,
}

#[derive(clap::Args)]
struct DiscoverArgs {
    /// CSV file: header row of series names, one row per time step.
    csv: PathBuf,
    #[arg(long, value_enum, default_value = "linear")]
    model: Model,
    #[arg(long, value_enum, default_value = "hsic")]
    indep: Indep,
    #[arg(long, default_value_t = 2)]
    max_lag: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Largest set of series that may be excluded when no sink is found.
    #[arg(long, default_value_t = 0)]
    partial: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "on")]
    instantaneous: Switch,
    /// Use HSIC permutation p-values with this many permutations.
    #[arg(long)]
    permutations: Option<usize>,
    /// Suppress the report on standard error.
    #[arg(long, short)]
    quiet: bool,
}

#[derive(clap::Args)]
struct GrangerArgs {
    csv: PathBuf,
    #[arg(long, value_enum, default_value = "linear")]
    method: GrangerMethod,
    #[arg(long, default_value_t = 2)]
    max_lag: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Analyse every pair of series separately and report each pair.
    #[arg(long)]
    pairwise: bool,
    #[arg(long, short)]
    quiet: bool,
}

#[derive(clap::Args)]
struct BenchArgs {
    /// E1 .. E6.
    experiment: ExperimentId,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    /// Comma-separated series lengths.
    #[arg(long, value_delimiter = ',')]
    lengths: Vec<usize>,
    #[arg(long, value_enum, value_delimiter = ',')]
    methods: Vec<Method>,
    #[arg(long, value_enum, value_delimiter = ',')]
    indep: Vec<Indep>,
    /// Comma-separated exclusion limits for partial discovery.
    #[arg(long, value_delimiter = ',')]
    partial: Vec<usize>,
    /// Comma-separated values of the confounder coefficient (E1 only).
    #[arg(long, value_delimiter = ',')]
    confounder_ar: Vec<f64>,
    #[arg(long, default_value_t = 2)]
    max_lag: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Instantaneous terms; default off for E6, on otherwise.
    #[arg(long, value_enum)]
    instantaneous: Option<Switch>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the CSV summary here instead of after the table.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(clap::Args)]
struct GenerateArgs {
    experiment: ExperimentId,
    #[arg(long, default_value_t = 1000)]
    length: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Confounder coefficient `a` (E1 only).
    #[arg(long, default_value_t = 0.5)]
    confounder_ar: f64,
    #[arg(long, default_value_t = 500)]
    burn_in: usize,
    /// Output file; standard output when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

fn read_panel(path: &Path) -> Result<Panel, String> {
    let file = File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
    Panel::read_csv(io::BufReader::new(file)).map_err(|e| format!("{}: {e}", path.display()))
}

fn on(s: Switch) -> bool {
    s == Switch::On
}

fn verdict_line(result: &DiscoveryResult, names: &[String]) -> String {
    match result.verdict {
        Verdict::Decided => "decided".into(),
        Verdict::Undecided => format!("undecided: {}", result.reason.as_deref().unwrap_or(timino::discovery::BAD_MODEL_FIT)),
        Verdict::Partial => {
            let excluded: Vec<&str> = result.excluded.iter().map(|&i| names[i].as_str()).collect();
            format!("partial: excluded {}", excluded.join(", "))
        }
    }
}

fn discovery_report(args: &DiscoverArgs, cfg: &DiscoveryConfig, result: &DiscoveryResult, names: &[String]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "config: model={} indep={} max_lag={} alpha={} partial={} seed={} instantaneous={}{}",
        cfg.backend.name(),
        cfg.indep_method,
        cfg.max_lag,
        g6(cfg.alpha),
        cfg.partial_max_exclude,
        cfg.seed,
        if cfg.instantaneous { "on" } else { "off" },
        args.permutations.map(|b| format!(" permutations={b}")).unwrap_or_default(),
    );
    let name = |i: usize| names[i].as_str();
    for (round, it) in result.diagnostics.iterations.iter().enumerate() {
        let remaining: Vec<&str> = it.remaining.iter().map(|&i| name(i)).collect();
        let chosen = it.chosen.map(name).unwrap_or("none");
        let _ = writeln!(out, "iteration {}: remaining {{{}}}, sink {chosen}", round + 1, remaining.join(", "));
        for c in &it.candidates {
            let order = c.order.map(|o| o.to_string()).unwrap_or_else(|| "-".into());
            let p = c.min_adjusted_p.map(g6).unwrap_or_else(|| "-".into());
            let status = match &c.error {
                Some(e) => format!("fit failed: {e}"),
                None if c.accepted => "independent".into(),
                None => "dependent".into(),
            };
            let _ = writeln!(out, "  {:<12} order {order:<3} min adj. p {p:<10} {status}", name(c.node));
        }
    }
    for set in &result.diagnostics.exclusions_tried {
        let s: Vec<&str> = set.iter().map(|&i| name(i)).collect();
        let _ = writeln!(out, "exclusion tried: {{{}}}", s.join(", "));
    }
    for p in &result.diagnostics.pruning {
        let verdict = if p.dropped { "dropped" } else { "kept" };
        let pv = p.min_adjusted_p.map(g6).unwrap_or_else(|| "-".into());
        let _ = writeln!(out, "prune {} -> {}: {verdict} (min adj. p {pv})", name(p.parent), name(p.node));
    }
    out
}

fn cmd_discover(args: &DiscoverArgs) -> Result<(), String> {
    let start = Instant::now();
    let panel = read_panel(&args.csv)?;
    let cfg = DiscoveryConfig {
        backend: args.model.into(),
        max_lag: args.max_lag,
        alpha: args.alpha,
        indep_method: args.indep.into(),
        hsic_pvalue: args.permutations.map_or(HsicPValue::Gamma, HsicPValue::Permutation),
        instantaneous: on(args.instantaneous),
        partial_max_exclude: args.partial,
        seed: args.seed,
        ..Default::default()
    };
    let result = discover_partial(&panel, &cfg).map_err(|e| e.to_string())?;
    let names = panel.names();
    let mut out = verdict_line(&result, names);
    out.push('\n');
    if let Some(graph) = &result.graph {
        let comments: Vec<String> = result
            .unresolved
            .iter()
            .map(|&(e, r)| format!("unresolved: {} -- {}", names[e], names[r]))
            .collect();
        out.push_str(&write_dot(names, graph, &result.excluded, &comments));
    }
    io::stdout().write_all(out.as_bytes()).map_err(|e| e.to_string())?;
    if !args.quiet {
        eprint!("{}", discovery_report(args, &cfg, &result, names));
        eprintln!("elapsed: {} s", g6(start.elapsed().as_secs_f64()));
    }
    Ok(())
}

fn verdict_comment(v: &GrangerVerdict, names: &[String]) -> String {
    format!(
        "{} -> {}: F={} p={}{}",
        names[v.pair.0],
        names[v.pair.1],
        g6(v.statistic),
        g6(v.p_value),
        if v.causes { " causes" } else { "" }
    )
}

/// Runs the chosen baseline on the two-column panel `(i, j)`.
fn granger_pair(panel: &Panel, i: usize, j: usize, args: &GrangerArgs, cfg: &GrangerConfig) -> Result<Vec<GrangerVerdict>, String> {
    match args.method {
        GrangerMethod::Linear => {
            let sub = panel.select(&[i, j]).map_err(|e| e.to_string())?;
            let report = granger_linear(&sub, cfg).map_err(|e| e.to_string())?;
            let map = |k: usize| if k == 0 { i } else { j };
            Ok(report
                .verdicts
                .into_iter()
                .map(|v| GrangerVerdict { pair: (map(v.pair.0), map(v.pair.1)), ..v })
                .collect())
        }
        GrangerMethod::Nonlinear => {
            let (fwd, bwd) = granger_nonlinear_pairwise(panel.series(i), panel.series(j), args.max_lag, args.alpha)
                .map_err(|e| e.to_string())?;
            Ok(vec![
                GrangerVerdict { pair: (i, j), statistic: fwd.statistic, p_value: fwd.p_value, causes: fwd.causes },
                GrangerVerdict { pair: (j, i), statistic: bwd.statistic, p_value: bwd.p_value, causes: bwd.causes },
            ])
        }
    }
}

fn cmd_granger(args: &GrangerArgs) -> Result<(), String> {
    let start = Instant::now();
    let panel = read_panel(&args.csv)?;
    let names = panel.names();
    let cfg = GrangerConfig { max_lag: args.max_lag, alpha: args.alpha, ..Default::default() };
    let mut out = String::new();
    let report = if args.pairwise || args.method == GrangerMethod::Nonlinear {
        let mut graph = SummaryGraph::new(panel.dim());
        let mut verdicts = Vec::new();
        let mut failed = Vec::new();
        for i in 0..panel.dim() {
            for j in i + 1..panel.dim() {
                match granger_pair(&panel, i, j, args, &cfg) {
                    Ok(vs) => {
                        if args.pairwise {
                            let parts: Vec<String> = vs.iter().map(|v| verdict_comment(v, names)).collect();
                            let _ = writeln!(out, "pair {} {}: {}", names[i], names[j], parts.join("; "));
                        }
                        for v in vs {
                            if v.causes {
                                graph.add_edge(v.pair.0, v.pair.1).map_err(|e| e.to_string())?;
                            }
                            verdicts.push(v);
                        }
                    }
                    Err(e) => {
                        if args.pairwise {
                            let _ = writeln!(out, "pair {} {}: failed: {e}", names[i], names[j]);
                        }
                        failed.push(((i, j), e));
                    }
                }
            }
        }
        verdicts.sort_by_key(|v| v.pair);
        GrangerReport { graph, verdicts, failed }
    } else {
        granger_linear(&panel, &cfg).map_err(|e| e.to_string())?
    };
    let mut comments: Vec<String> = report.verdicts.iter().map(|v| verdict_comment(v, names)).collect();
    comments.extend(report.failed.iter().map(|((i, j), e)| format!("{} -> {}: failed: {e}", names[*i], names[*j])));
    out.push_str(&write_dot(names, &report.graph, &[], &comments));
    io::stdout().write_all(out.as_bytes()).map_err(|e| e.to_string())?;
    if !args.quiet {
        let method = match args.method {
            GrangerMethod::Linear => "linear",
            GrangerMethod::Nonlinear => "nonlinear",
        };
        eprintln!(
            "config: method={method} max_lag={} alpha={} pairwise={}",
            args.max_lag,
            g6(args.alpha),
            if args.pairwise { "on" } else { "off" }
        );
        eprintln!("elapsed: {} s", g6(start.elapsed().as_secs_f64()));
    }
    Ok(())
}

fn or_default<T: Clone>(given: &[T], default: Vec<T>) -> Vec<T> {
    if given.is_empty() {
        default
    } else {
        given.to_vec()
    }
}

fn cmd_bench(args: &BenchArgs) -> Result<(), String> {
    let start = Instant::now();
    let id = args.experiment;
    let plan = BenchPlan {
        id,
        reps: args.reps,
        seed: args.seed,
        lengths: or_default(&args.lengths, bench::default_lengths(id)),
        methods: or_default(&args.methods, bench::default_methods(id)),
        indep: if args.indep.is_empty() {
            bench::default_indep(id)
        } else {
            args.indep.iter().map(|&i| i.into()).collect()
        },
        partial: or_default(&args.partial, bench::default_partial(id)),
        confounder_ar: or_default(&args.confounder_ar, bench::default_confounder_ar(id)),
        max_lag: args.max_lag,
        alpha: args.alpha,
        instantaneous: args.instantaneous.map_or_else(|| bench::default_instantaneous(id), on),
    };
    let rows = bench::run(&plan).map_err(|e| e.to_string())?;
    let mut out = bench::table(&rows);
    let csv = bench::csv(&rows);
    match &args.csv {
        Some(path) => std::fs::write(path, csv).map_err(|e| format!("{}: {e}", path.display()))?,
        None => {
            out.push('\n');
            out.push_str(&csv);
        }
    }
    io::stdout().write_all(out.as_bytes()).map_err(|e| e.to_string())?;
    eprintln!("elapsed: {} s", g6(start.elapsed().as_secs_f64()));
    Ok(())
}

fn cmd_generate(args: &GenerateArgs) -> Result<(), String> {
    let spec = ExperimentSpec::new(args.experiment, args.length, args.seed)
        .with_confounder_ar(args.confounder_ar)
        .with_burn_in(args.burn_in);
    let (panel, _) = generate::<f64>(&spec).map_err(|e| e.to_string())?;
    let result = match &args.out {
        Some(path) => File::create(path)
            .map_err(|e| format!("{}: {e}", path.display()))
            .and_then(|f| panel.write_csv(io::BufWriter::new(f)).map_err(|e| e.to_string())),
        None => panel.write_csv(io::stdout().lock()).map_err(|e| e.to_string()),
    };
    result
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Discover(a) => cmd_discover(a),
        Command::Granger(a) => cmd_granger(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Generate(a) => cmd_generate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
