//! Seeded simulators for the six synthetic benchmark processes.
//!
//! Every process starts from zero initial conditions, runs `burn_in` steps
//! that are discarded and then records `length` observations. Noise draws are
//! kept in the [`GroundTruth`] so that a panel can be replayed exactly.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::data::{SummaryGraph, TimeSeriesPanel};
use crate::discovery::{DiscoveryResult, Verdict};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded_rng};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ExperimentId {
    /// Hidden lagged common cause of two observed series.
    E1,
    /// Linear Gaussian system with instantaneous effects.
    E2,
    /// Nonlinear additive chain without instantaneous effects.
    E3,
    /// Non-additive interaction of two lags.
    E4,
    /// Quadratic dependence invisible to correlations.
    E5,
    /// Latent confounder; only part of the graph is recoverable.
    E6,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 6] =
        [ExperimentId::E1, ExperimentId::E2, ExperimentId::E3, ExperimentId::E4, ExperimentId::E5, ExperimentId::E6];

    fn index(self) -> u64 {
        self as u64 + 1
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "E{}", self.index())
    }
}

impl FromStr for ExperimentId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let digits = s.trim().trim_start_matches(['E', 'e']);
        match digits {
            "1" => Ok(ExperimentId::E1),
            "2" => Ok(ExperimentId::E2),
            "3" => Ok(ExperimentId::E3),
            "4" => Ok(ExperimentId::E4),
            "5" => Ok(ExperimentId::E5),
            "6" => Ok(ExperimentId::E6),
            _ => Err(Error::InvalidArgument(format!("unknown experiment '{s}'"))),
        }
    }
}

pub const DEFAULT_BURN_IN: usize = 500;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub id: ExperimentId,
    pub length: usize,
    pub seed: u64,
    /// Autoregressive coefficient `a` of the hidden cause (E1 only).
    pub confounder_ar: f64,
    pub burn_in: usize,
}

impl ExperimentSpec {
    pub fn new(id: ExperimentId, length: usize, seed: u64) -> Self {
        Self { id, length, seed, confounder_ar: 0.5, burn_in: DEFAULT_BURN_IN }
    }

    pub fn with_confounder_ar(mut self, a: f64) -> Self {
        self.confounder_ar = a;
        self
    }

    pub fn with_burn_in(mut self, burn_in: usize) -> Self {
        self.burn_in = burn_in;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.length < 100 {
            return Err(Error::InvalidArgument(format!("length {} below 100", self.length)));
        }
        if self.burn_in < 100 {
            return Err(Error::InvalidArgument(format!("burn-in {} below 100", self.burn_in)));
        }
        if self.id == ExperimentId::E1 && !(0.0..=0.95).contains(&self.confounder_ar) {
            return Err(Error::InvalidArgument(format!("a = {} outside [0, 0.95]", self.confounder_ar)));
        }
        Ok(())
    }
}

/// Unobserved series of a process.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSeries {
    pub names: Vec<String>,
    /// `length × k` values over the recorded window.
    pub values: DMatrix<f64>,
    /// Noise draws of the latent equations over the recorded window.
    pub noises: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// True summary graph over the observed columns.
    pub graph: SummaryGraph,
    pub latent: Option<LatentSeries>,
    /// Noise term of every observed equation, `length × d`, as it enters the
    /// equation before any scaling written in the equation itself.
    pub noises: DMatrix<f64>,
    /// Process state (all variables, observed then latent) in the steps just
    /// before the recorded window; row `0` is the oldest.
    pub initial: DMatrix<f64>,
    /// Randomly drawn coefficients (E2's `A_1..A_8`), empty otherwise.
    pub coefficients: Vec<f64>,
    /// Number of coefficient draws rejected by the stationarity check.
    pub rejected_draws: usize,
    /// Observed series a partial result must exclude to be scored correct
    /// (E6's `W`); empty when the full graph is the target.
    pub expected_excluded: Vec<usize>,
}

/// Score of one method on one data set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Correct,
    Wrong,
    Undecided,
}

impl GroundTruth {
    /// Decided results are correct when the graph matches exactly. Partial
    /// results are correct when they exclude exactly `expected_excluded`
    /// (which must be non-empty) and the graph matches.
    pub fn score(&self, result: &DiscoveryResult) -> Outcome {
        let graph_ok = result.graph.as_ref().is_some_and(|g| *g == self.graph);
        let ok = match result.verdict {
            Verdict::Undecided => return Outcome::Undecided,
            Verdict::Decided => graph_ok && self.expected_excluded.is_empty(),
            Verdict::Partial => graph_ok && !self.expected_excluded.is_empty() && result.excluded == self.expected_excluded,
        };
        if ok {
            Outcome::Correct
        } else {
            Outcome::Wrong
        }
    }

    /// Scores a method that always returns a graph over every series.
    pub fn score_graph(&self, graph: &SummaryGraph) -> Outcome {
        if self.expected_excluded.is_empty() && *graph == self.graph {
            Outcome::Correct
        } else {
            Outcome::Wrong
        }
    }
}

/// Variable layout and equations of one process.
struct Process {
    id: ExperimentId,
    /// Variable names in simulation order (parents before instantaneous children).
    vars: &'static [&'static str],
    /// Indices into `vars` of the observed series, in panel column order.
    observed: &'static [usize],
    truth: &'static [(usize, usize)],
    depth: usize,
    coefficients: Vec<f64>,
    a: f64,
}

impl Process {
    fn new(id: ExperimentId, a: f64, coefficients: Vec<f64>) -> Self {
        let (vars, observed, truth, depth): (&[&str], &[usize], &[(usize, usize)], usize) = match id {
            ExperimentId::E1 => (&["Z", "X", "Y"], &[1, 2], &[], 2),
            ExperimentId::E2 => (&["X", "W", "Y", "Z"], &[0, 1, 2, 3], &[(0, 1), (1, 2), (1, 3), (2, 3)], 1),
            ExperimentId::E3 => (&["X", "Y", "Z"], &[0, 1, 2], &[(0, 1), (1, 2)], 1),
            ExperimentId::E4 => (&["X", "Y"], &[0, 1], &[(0, 1)], 2),
            ExperimentId::E5 => (&["X", "Y"], &[0, 1], &[(0, 1)], 1),
            // Observed columns: B, A, Y, W. Truth over them: B -> A, B -> Y.
            ExperimentId::E6 => (&["X", "B", "A", "Y", "W"], &[1, 2, 3, 4], &[(0, 1), (0, 2)], 1),
        };
        Self { id, vars, observed, truth, depth, coefficients, a }
    }

    fn latent(&self) -> Vec<usize> {
        (0..self.vars.len()).filter(|v| !self.observed.contains(v)).collect()
    }

    /// Draws one noise vector (in `vars` order).
    fn draw_noise<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let unit = Uniform::new(-0.5, 0.5).expect("valid range");
        (0..self.vars.len())
            .map(|_| {
                let g: f64 = StandardNormal.sample(rng);
                match self.id {
                    ExperimentId::E1 => 0.4 * g * g * g,
                    ExperimentId::E2 | ExperimentId::E5 => 0.4 * g,
                    ExperimentId::E3 => unit.sample(rng),
                    ExperimentId::E4 => g,
                    ExperimentId::E6 => 0.4 * unit.sample(rng),
                }
            })
            .collect()
    }

    /// Next state from the history (`hist[t - lag]`) and the noise `e`.
    fn step(&self, hist: &[Vec<f64>], e: &[f64]) -> Vec<f64> {
        let t = hist.len();
        let lag = |v: usize, l: usize| hist[t - l][v];
        let c = &self.coefficients;
        let mut x = vec![0.0; self.vars.len()];
        match self.id {
            ExperimentId::E1 => {
                x[0] = self.a * lag(0, 1) + e[0];
                x[1] = 0.6 * lag(1, 1) + 0.5 * lag(0, 1) + e[1];
                x[2] = 0.6 * lag(2, 1) + 0.5 * lag(0, 2) + e[2];
            }
            ExperimentId::E2 => {
                x[0] = c[0] * lag(0, 1) + e[0];
                x[1] = c[1] * lag(1, 1) + c[2] * x[0] + e[1];
                x[2] = c[3] * lag(2, 1) + c[4] * lag(1, 1) + e[2];
                x[3] = c[5] * lag(3, 1) + c[6] * x[1] + c[7] * lag(2, 1) + e[3];
            }
            ExperimentId::E3 => {
                x[0] = 0.8 * lag(0, 1) + 0.3 * e[0];
                x[1] = 0.4 * lag(1, 1) + (lag(0, 1) - 1.0).powi(2) + 0.3 * e[1];
                x[2] = 0.4 * lag(2, 1) + 0.5 * lag(1, 1).cos() + lag(1, 1).sin() + 0.3 * e[2];
            }
            ExperimentId::E4 => {
                x[0] = 0.2 * lag(0, 1) + 0.9 * e[0];
                x[1] = -0.5 + (-(lag(0, 1) + lag(0, 2)).powi(2)).exp() + 0.1 * e[1];
            }
            ExperimentId::E5 => {
                x[0] = -0.5 * lag(0, 1) + e[0];
                x[1] = -0.5 * lag(1, 1) + lag(0, 1).powi(2) + e[1];
            }
            ExperimentId::E6 => {
                x[0] = 0.5 * lag(0, 1) + e[0];
                x[1] = 0.5 * lag(1, 1) + e[1];
                x[2] = 0.5 * lag(2, 1) + 0.5 * lag(1, 1) + e[2];
                x[3] = 0.5 * lag(3, 1) - 0.9 * lag(0, 1) + 0.8 * lag(1, 1) + e[3];
                x[4] = 0.5 * lag(4, 1) + 0.8 * lag(0, 1) + e[4];
            }
        }
        x
    }

    /// Simulates from `initial` (at least `depth` rows) through `noises`.
    fn run(&self, initial: Vec<Vec<f64>>, noises: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let mut hist = initial;
        for e in noises {
            let next = self.step(&hist, e);
            hist.push(next);
        }
        hist
    }
}

/// Draws `A_i ~ U([-0.8, -0.2] ∪ [0.2, 0.8])`.
fn draw_coefficient<R: Rng>(rng: &mut R) -> f64 {
    let magnitude = rng.random_range(0.2..=0.8);
    if rng.random_bool(0.5) {
        magnitude
    } else {
        -magnitude
    }
}

fn to_matrix(rows: &[Vec<f64>], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |r, c| rows[r][cols[c]])
}

/// Simulates one data set and its ground truth.
pub fn generate<T: Scalar>(spec: &ExperimentSpec) -> Result<(TimeSeriesPanel<T>, GroundTruth)> {
    spec.validate()?;
    let mut attempt = 0u64;
    loop {
        let mut rng = seeded_rng(derive_seed(spec.seed, &[spec.id.index(), attempt]));
        let coefficients = if spec.id == ExperimentId::E2 {
            (0..8).map(|_| draw_coefficient(&mut rng)).collect()
        } else {
            Vec::new()
        };
        let process = Process::new(spec.id, spec.confounder_ar, coefficients);
        let total = spec.burn_in + spec.length;
        let noises: Vec<Vec<f64>> = (0..total).map(|_| process.draw_noise(&mut rng)).collect();
        let start = vec![vec![0.0; process.vars.len()]; process.depth];
        let hist = process.run(start, &noises);
        let window = &hist[process.depth + spec.burn_in..];
        let observed = to_matrix(window, process.observed);
        let names: Vec<String> = process.observed.iter().map(|&v| process.vars[v].to_string()).collect();
        let panel = TimeSeriesPanel::new(observed.map(T::lit), names);
        let stationary = panel.as_ref().is_ok_and(stationarity_check);
        if spec.id == ExperimentId::E2 && !stationary && attempt < 100 {
            attempt += 1;
            continue;
        }
        let panel = panel?;
        let latent_idx = process.latent();
        let rec_noise = &noises[spec.burn_in..];
        let latent = (!latent_idx.is_empty()).then(|| LatentSeries {
            names: latent_idx.iter().map(|&v| process.vars[v].to_string()).collect(),
            values: to_matrix(window, &latent_idx),
            noises: to_matrix(rec_noise, &latent_idx),
        });
        let all_vars: Vec<usize> = process.observed.iter().copied().chain(latent_idx.iter().copied()).collect();
        let init_rows = &hist[spec.burn_in..spec.burn_in + process.depth];
        let truth = GroundTruth {
            graph: SummaryGraph::with_edges(process.observed.len(), process.truth.iter().copied())?,
            latent,
            noises: to_matrix(rec_noise, process.observed),
            initial: to_matrix(init_rows, &all_vars),
            coefficients: process.coefficients.clone(),
            rejected_draws: attempt as usize,
            expected_excluded: if spec.id == ExperimentId::E6 { vec![3] } else { Vec::new() },
        };
        return Ok((panel, truth));
    }
}

/// Re-simulates the recorded window from the stored initial state and noises.
pub fn replay(spec: &ExperimentSpec, truth: &GroundTruth) -> Result<TimeSeriesPanel<f64>> {
    let process = Process::new(spec.id, spec.confounder_ar, truth.coefficients.clone());
    let latent_idx = process.latent();
    let all_vars: Vec<usize> = process.observed.iter().copied().chain(latent_idx.iter().copied()).collect();
    let nvars = process.vars.len();
    let to_state = |row: Vec<f64>| {
        let mut s = vec![0.0; nvars];
        for (k, &v) in all_vars.iter().enumerate() {
            s[v] = row[k];
        }
        s
    };
    let initial: Vec<Vec<f64>> =
        (0..truth.initial.nrows()).map(|r| to_state(truth.initial.row(r).iter().copied().collect())).collect();
    let noises: Vec<Vec<f64>> = (0..truth.noises.nrows())
        .map(|r| {
            let mut row: Vec<f64> = truth.noises.row(r).iter().copied().collect();
            if let Some(lat) = &truth.latent {
                row.extend(lat.noises.row(r).iter().copied());
            }
            to_state(row)
        })
        .collect();
    let hist = process.run(initial, &noises);
    let window = &hist[process.depth..];
    let names = process.observed.iter().map(|&v| process.vars[v].to_string()).collect();
    TimeSeriesPanel::new(to_matrix(window, process.observed), names)
}

/// Crude divergence guard: every column's first- and second-half variances
/// agree within a factor of 5 and no value exceeds `1e6` in magnitude.
pub fn stationarity_check<T: Scalar>(panel: &TimeSeriesPanel<T>) -> bool {
    let len = panel.len();
    let half = len / 2;
    (0..panel.dim()).all(|j| {
        let s = panel.series(j);
        if s.iter().any(|v| v.abs().to_f64_lossy() > 1e6) {
            return false;
        }
        if half < 2 {
            return true;
        }
        let v1 = crate::scalar::variance(&s[..half]).to_f64_lossy();
        let v2 = crate::scalar::variance(&s[half..]).to_f64_lossy();
        match (v1 > 0.0, v2 > 0.0) {
            (false, false) => true,
            (true, true) => v1.max(v2) / v1.min(v2) < 5.0,
            _ => false,
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_panel() {
        for id in ExperimentId::ALL {
            let spec = ExperimentSpec::new(id, 150, 42);
            let (a, _) = generate::<f64>(&spec).unwrap();
            let (b, _) = generate::<f64>(&spec).unwrap();
            assert_eq!(a, b, "{id}");
            let (c, _) = generate::<f64>(&ExperimentSpec::new(id, 150, 43)).unwrap();
            assert_ne!(a, c);
        }
    }

    #[test]
    fn replay_is_exact() {
        for id in ExperimentId::ALL {
            let spec = ExperimentSpec::new(id, 200, 7).with_confounder_ar(0.9);
            let (panel, truth) = generate::<f64>(&spec).unwrap();
            assert_eq!(truth.noises.shape(), (panel.len(), panel.dim()));
            assert_eq!(replay(&spec, &truth).unwrap(), panel, "{id}");
        }
    }

    #[test]
    fn ground_truth_graphs() {
        let (_, t) = generate::<f64>(&ExperimentSpec::new(ExperimentId::E3, 100, 0)).unwrap();
        assert_eq!(t.graph.edges().iter().copied().collect::<Vec<_>>(), vec![(0, 1), (1, 2)]);
        let (p, t) = generate::<f64>(&ExperimentSpec::new(ExperimentId::E1, 100, 0).with_confounder_ar(0.0)).unwrap();
        assert_eq!(p.names(), &["X", "Y"]);
        assert_eq!(t.graph.edge_count(), 0);
        assert_eq!(t.latent.unwrap().names, vec!["Z"]);
        let (p, t) = generate::<f64>(&ExperimentSpec::new(ExperimentId::E6, 100, 0)).unwrap();
        assert_eq!(p.names(), &["B", "A", "Y", "W"]);
        assert!(t.graph.has_edge(0, 1) && t.graph.has_edge(0, 2) && t.graph.edge_count() == 2);
    }

    #[test]
    fn invalid_specs() {
        assert!(generate::<f64>(&ExperimentSpec::new(ExperimentId::E1, 100, 0).with_confounder_ar(0.99)).is_err());
        assert!(generate::<f64>(&ExperimentSpec::new(ExperimentId::E3, 99, 0)).is_err());
        assert!(generate::<f64>(&ExperimentSpec::new(ExperimentId::E3, 100, 0).with_burn_in(10)).is_err());
    }

    #[test]
    fn stationarity_examples() {
        let explosive: Vec<f64> = (0..200).scan(1.0, |s, _| {
            *s *= 1.5;
            Some(*s)
        }).collect();
        let p = TimeSeriesPanel::from_columns_unnamed(vec![explosive]).unwrap();
        assert!(!stationarity_check(&p));
        let c = TimeSeriesPanel::from_columns_unnamed(vec![vec![2.0; 50]]).unwrap();
        assert!(stationarity_check(&c));
    }

    #[test]
    fn coefficients_in_range() {
        let (_, t) = generate::<f64>(&ExperimentSpec::new(ExperimentId::E2, 100, 3)).unwrap();
        assert_eq!(t.coefficients.len(), 8);
        assert!(t.coefficients.iter().all(|c| (0.2..=0.8).contains(&c.abs())));
    }

    #[test]
    fn experiment_ids_parse() {
        assert_eq!("E4".parse::<ExperimentId>().unwrap(), ExperimentId::E4);
        assert_eq!("e6".parse::<ExperimentId>().unwrap(), ExperimentId::E6);
        assert!("E7".parse::<ExperimentId>().is_err());
        assert_eq!(ExperimentId::E5.to_string(), "E5");
    }
}
