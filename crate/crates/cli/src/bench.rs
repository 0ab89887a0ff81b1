use std::fmt::Write as _;

use clap::ValueEnum;
use rayon::prelude::*;
use timino::datagen::{generate, ExperimentId, ExperimentSpec, GroundTruth, Outcome};
use timino::discovery::{discover_partial, DiscoveryConfig, IndepMethod};
use timino::granger::{granger_linear, granger_nonlinear_all_pairs, GrangerConfig};
use timino::models::Backend;
use timino::Panel;

use crate::fmt::g6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    #[value(alias = "timino-lin")]
    TiminoLinear,
    TiminoGam,
    TiminoGp,
    #[value(alias = "granger-lin")]
    GrangerLinear,
    GrangerNonlinear,
}

impl Method {
    fn name(self) -> &'static str {
        match self {
            Method::TiminoLinear => "timino-linear",
            Method::TiminoGam => "timino-gam",
            Method::TiminoGp => "timino-gp",
            Method::GrangerLinear => "granger-linear",
            Method::GrangerNonlinear => "granger-nonlinear",
        }
    }

    fn backend(self) -> Option<Backend> {
        match self {
            Method::TiminoLinear => Some(Backend::Linear),
            Method::TiminoGam => Some(Backend::Additive),
            Method::TiminoGp => Some(Backend::Gp),
            Method::GrangerLinear | Method::GrangerNonlinear => None,
        }
    }
}

/// Methods, lengths and settings used when the command line leaves them out.
pub fn default_methods(id: ExperimentId) -> Vec<Method> {
    use Method::*;
    match id {
        ExperimentId::E1 | ExperimentId::E2 => vec![TiminoLinear, GrangerLinear],
        ExperimentId::E3 => vec![TiminoGam, TiminoLinear, GrangerNonlinear],
        ExperimentId::E4 => vec![TiminoGp, TiminoLinear, TiminoGam],
        ExperimentId::E5 => vec![TiminoGam],
        ExperimentId::E6 => vec![TiminoLinear],
    }
}

pub fn default_lengths(id: ExperimentId) -> Vec<usize> {
    match id {
        ExperimentId::E1 | ExperimentId::E5 => vec![1000],
        ExperimentId::E2 => vec![2000],
        ExperimentId::E3 => vec![500],
        ExperimentId::E4 => vec![100, 250, 500, 1000, 2000],
        ExperimentId::E6 => vec![600],
    }
}

pub fn default_indep(id: ExperimentId) -> Vec<IndepMethod> {
    match id {
        ExperimentId::E5 => vec![IndepMethod::CrossCorr, IndepMethod::Hsic],
        _ => vec![IndepMethod::Hsic],
    }
}

pub fn default_partial(id: ExperimentId) -> Vec<usize> {
    match id {
        ExperimentId::E6 => vec![0, 1],
        _ => vec![0],
    }
}

pub fn default_instantaneous(id: ExperimentId) -> bool {
    id != ExperimentId::E6
}

pub fn default_confounder_ar(id: ExperimentId) -> Vec<f64> {
    match id {
        ExperimentId::E1 => vec![0.0, 0.25, 0.5, 0.75, 0.95],
        _ => vec![0.5],
    }
}

#[derive(Debug, Clone)]
pub struct BenchPlan {
    pub id: ExperimentId,
    pub reps: usize,
    pub seed: u64,
    pub lengths: Vec<usize>,
    pub methods: Vec<Method>,
    pub indep: Vec<IndepMethod>,
    pub partial: Vec<usize>,
    pub confounder_ar: Vec<f64>,
    pub max_lag: usize,
    pub alpha: f64,
    pub instantaneous: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub experiment: String,
    pub method: String,
    pub correct: usize,
    pub wrong: usize,
    pub undecided: usize,
    pub reps: usize,
    pub seed: u64,
}

/// One concrete method configuration of a bench run.
struct Variant {
    method: Method,
    indep: IndepMethod,
    partial: usize,
}

impl Variant {
    fn label(&self) -> String {
        let mut s = self.method.name().to_string();
        if self.method.backend().is_some() {
            if self.indep != IndepMethod::Hsic {
                let _ = write!(s, "+{}", self.indep);
            }
            if self.partial > 0 {
                let _ = write!(s, "+partial{}", self.partial);
            }
        }
        s
    }

    fn score(&self, panel: &Panel, truth: &GroundTruth, plan: &BenchPlan, seed: u64) -> Outcome {
        let granger = GrangerConfig { max_lag: plan.max_lag, alpha: plan.alpha, ..Default::default() };
        let scored = match self.method.backend() {
            Some(backend) => {
                let cfg = DiscoveryConfig {
                    backend,
                    max_lag: plan.max_lag,
                    alpha: plan.alpha,
                    indep_method: self.indep,
                    instantaneous: plan.instantaneous,
                    partial_max_exclude: self.partial,
                    seed,
                    ..Default::default()
                };
                discover_partial(panel, &cfg).map(|r| truth.score(&r))
            }
            None if self.method == Method::GrangerLinear => granger_linear(panel, &granger).map(|r| truth.score_graph(&r.graph)),
            None => granger_nonlinear_all_pairs(panel, &granger).map(|r| truth.score_graph(&r.graph)),
        };
        // A run that cannot be analysed at all makes no claim.
        scored.unwrap_or(Outcome::Undecided)
    }
}

/// Runs every (length, a, variant) cell over `reps` seeded data sets.
/// Repetition `r` uses data and method seed `seed + r`.
pub fn run(plan: &BenchPlan) -> timino::Result<Vec<BenchRow>> {
    let mut variants = Vec::new();
    for &method in &plan.methods {
        if method.backend().is_some() {
            for &indep in &plan.indep {
                for &partial in &plan.partial {
                    variants.push(Variant { method, indep, partial });
                }
            }
        } else {
            variants.push(Variant { method, indep: IndepMethod::Hsic, partial: 0 });
        }
    }
    let confounder: &[f64] = if plan.id == ExperimentId::E1 { &plan.confounder_ar } else { &[0.5] };
    let mut rows = Vec::new();
    for &length in &plan.lengths {
        for &a in confounder {
            let experiment = if plan.id == ExperimentId::E1 {
                format!("{}/T={length}/a={}", plan.id, g6(a))
            } else {
                format!("{}/T={length}", plan.id)
            };
            let outcomes: Vec<Vec<Outcome>> = (0..plan.reps as u64)
                .into_par_iter()
                .map(|r| {
                    let seed = plan.seed.wrapping_add(r);
                    let spec = ExperimentSpec::new(plan.id, length, seed).with_confounder_ar(a);
                    let (panel, truth) = generate::<f64>(&spec)?;
                    Ok(variants.iter().map(|v| v.score(&panel, &truth, plan, seed)).collect())
                })
                .collect::<timino::Result<_>>()?;
            for (j, v) in variants.iter().enumerate() {
                let count = |o: Outcome| outcomes.iter().filter(|rep| rep[j] == o).count();
                rows.push(BenchRow {
                    experiment: experiment.clone(),
                    method: v.label(),
                    correct: count(Outcome::Correct),
                    wrong: count(Outcome::Wrong),
                    undecided: count(Outcome::Undecided),
                    reps: plan.reps,
                    seed: plan.seed,
                });
            }
        }
    }
    Ok(rows)
}

fn rate(n: usize, reps: usize) -> f64 {
    if reps == 0 {
        0.0
    } else {
        n as f64 / reps as f64
    }
}

/// Percentage table, one block per experiment cell.
pub fn table(rows: &[BenchRow]) -> String {
    let mut out = String::new();
    let width = rows.iter().map(|r| r.method.len()).max().unwrap_or(6).max(6);
    let mut current: Option<&str> = None;
    for r in rows {
        if current != Some(r.experiment.as_str()) {
            if current.is_some() {
                out.push('\n');
            }
            let _ = writeln!(out, "{} ({} reps, seed {})", r.experiment, r.reps, r.seed);
            let _ = writeln!(out, "{:width$}  {:>9}  {:>9}  {:>9}", "method", "correct", "wrong", "no dec.");
            current = Some(r.experiment.as_str());
        }
        let pct = |n| format!("{}%", g6(100.0 * rate(n, r.reps)));
        let _ = writeln!(out, "{:width$}  {:>9}  {:>9}  {:>9}", r.method, pct(r.correct), pct(r.wrong), pct(r.undecided));
    }
    out
}

/// Machine-readable form; rates are fractions of `reps`.
pub fn csv(rows: &[BenchRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let _ = w.write_record(["experiment", "method", "correct", "wrong", "undecided", "reps", "seed"]);
    for r in rows {
        let _ = w.write_record([
            r.experiment.clone(),
            r.method.clone(),
            g6(rate(r.correct, r.reps)),
            g6(rate(r.wrong, r.reps)),
            g6(rate(r.undecided, r.reps)),
            r.reps.to_string(),
            r.seed.to_string(),
        ]);
    }
    String::from_utf8(w.into_inner().unwrap_or_default()).unwrap_or_default()
}
