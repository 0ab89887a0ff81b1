//! Sink-elimination causal discovery with independent-noise models.
//!
//! Each round fits every remaining series on the lags (and, optionally, the
//! present values) of all other remaining series and keeps those whose
//! residuals look independent of every remaining series. The candidate with
//! the weakest dependence becomes the next sink. When no candidate passes the
//! procedure stops with an undecided verdict, or, in partial mode, retries
//! after excluding small subsets of the remaining series.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::data::{build_lag_matrix, LagSpec, SummaryGraph, TimeSeriesPanel};
use crate::error::{Error, Result};
use crate::indep::{
    shift_bound_for_order, shifted_test_prepared, HsicPValue, IndependenceVerdict, PairTest, PreparedSeries,
    ShiftRange, ShiftedTestOptions,
};
use crate::models::{fit, select_order_aic, Backend, FitTolerances, FittedNodeModel};
use crate::rng::{derive_seed, seeded_rng};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IndepMethod {
    #[default]
    Hsic,
    CrossCorr,
}

impl FromStr for IndepMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hsic" => Ok(IndepMethod::Hsic),
            "crosscorr" | "cross-corr" | "xcorr" => Ok(IndepMethod::CrossCorr),
            _ => Err(Error::InvalidArgument(format!("unknown independence test '{s}'"))),
        }
    }
}

impl fmt::Display for IndepMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IndepMethod::Hsic => "hsic",
            IndepMethod::CrossCorr => "crosscorr",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscoveryConfig {
    pub backend: Backend,
    /// Largest lag order considered; the order itself is chosen by AIC
    /// (except for the GP backend, which always uses `max_lag`).
    pub max_lag: usize,
    pub alpha: f64,
    pub indep_method: IndepMethod,
    /// How HSIC p-values are obtained.
    pub hsic_pvalue: HsicPValue,
    pub instantaneous: bool,
    /// Largest exclusion set tried by [`discover_partial`].
    pub partial_max_exclude: usize,
    pub seed: u64,
    pub tolerances: FitTolerances,
}

impl Default for DiscoveryConfig {
    fn default() -> Self {
        Self {
            backend: Backend::Linear,
            max_lag: 2,
            alpha: 0.05,
            indep_method: IndepMethod::Hsic,
            hsic_pvalue: HsicPValue::Gamma,
            instantaneous: true,
            partial_max_exclude: 0,
            seed: 0,
            tolerances: FitTolerances::default(),
        }
    }
}

impl DiscoveryConfig {
    pub fn pair_test(&self) -> PairTest {
        match self.indep_method {
            IndepMethod::Hsic => PairTest::Hsic(self.hsic_pvalue),
            IndepMethod::CrossCorr => PairTest::CrossCorrelation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_lag == 0 {
            return Err(Error::InvalidArgument("max_lag must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidArgument(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Decided,
    Undecided,
    Partial,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Decided => "decided",
            Verdict::Undecided => "undecided",
            Verdict::Partial => "partial",
        })
    }
}

/// One candidate sink evaluated in an elimination round.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateRecord {
    pub node: usize,
    /// Lag order of the fit; `None` when fitting failed.
    pub order: Option<usize>,
    /// Smallest Bonferroni-adjusted p-value over all of the node's verdicts.
    pub min_adjusted_p: Option<f64>,
    pub accepted: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// Series still in play at the start of the round.
    pub remaining: Vec<usize>,
    pub candidates: Vec<CandidateRecord>,
    pub chosen: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PruneRecord {
    pub node: usize,
    pub parent: usize,
    pub dropped: bool,
    pub min_adjusted_p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Diagnostics {
    pub iterations: Vec<IterationRecord>,
    pub pruning: Vec<PruneRecord>,
    /// Exclusion sets tried by partial discovery, in order.
    pub exclusions_tried: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscoveryResult {
    pub verdict: Verdict,
    /// Present for decided and partial results. Node indices are those of the
    /// panel; excluded series never appear as edge endpoints.
    pub graph: Option<SummaryGraph>,
    pub excluded: Vec<usize>,
    /// Pairs (excluded, retained) whose relation is unknown.
    pub unresolved: Vec<(usize, usize)>,
    pub reason: Option<String>,
    /// Sinks in elimination order (last sink first).
    pub elimination_order: Vec<usize>,
    pub diagnostics: Diagnostics,
}

impl DiscoveryResult {
    pub fn is_decided(&self) -> bool {
        self.verdict == Verdict::Decided
    }
}

pub const BAD_MODEL_FIT: &str = "bad model fit";

/// Fit of one series plus its independence verdicts.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeEvaluation<T: Scalar> {
    pub node: usize,
    pub order: usize,
    pub model: FittedNodeModel<T>,
    /// Verdict of the residuals against each tested series.
    pub verdicts: BTreeMap<usize, IndependenceVerdict>,
    /// Smallest Bonferroni-adjusted p-value over all verdicts, clamped to 1.
    pub min_adjusted_p: f64,
    /// Harmonic mean of every raw per-shift p-value; breaks ties in
    /// `min_adjusted_p` (larger means weaker dependence).
    pub harmonic_mean_p: f64,
    pub accepted: bool,
}

impl<T: Scalar> NodeEvaluation<T> {
    /// Ranking key for sink selection: larger is weaker dependence.
    pub fn weakness(&self) -> (f64, f64) {
        (self.min_adjusted_p, self.harmonic_mean_p)
    }
}

/// Panel plus per-series test preparations shared by all fits of a run.
pub struct DiscoveryContext<'a, T: Scalar> {
    panel: &'a TimeSeriesPanel<T>,
    config: &'a DiscoveryConfig,
    prepared: Vec<PreparedSeries<T>>,
}

impl<'a, T: Scalar> DiscoveryContext<'a, T> {
    pub fn new(panel: &'a TimeSeriesPanel<T>, config: &'a DiscoveryConfig) -> Result<Self> {
        config.validate()?;
        let test = config.pair_test();
        let prepared = (0..panel.dim())
            .into_par_iter()
            .map(|i| PreparedSeries::new(panel.series(i).to_vec(), 0, test))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { panel, config, prepared })
    }

    pub fn panel(&self) -> &TimeSeriesPanel<T> {
        self.panel
    }

    /// Fits `node` on its own lags and those of `regressors`, then tests the
    /// residuals against every series in `tested`.
    ///
    /// Other series are tested at shifts `-m..=m` with `m = max(order, 4)`;
    /// the node's own series only at past shifts `1..=m`. The Bonferroni
    /// factor is the total number of tests.
    pub fn evaluate(&self, node: usize, regressors: &[usize], tested: &[usize], seed: u64) -> Result<NodeEvaluation<T>> {
        let cfg = self.config;
        let mut rng = seeded_rng(derive_seed(seed, &[0]));
        let selection = select_order_aic(
            self.panel,
            node,
            regressors,
            cfg.backend,
            cfg.max_lag,
            cfg.instantaneous,
            &cfg.tolerances,
            &mut rng,
        )?;
        let design = build_lag_matrix(self.panel, node, regressors, LagSpec::new(selection.order, cfg.instantaneous))?;
        let model = fit(cfg.backend, &design, &cfg.tolerances, &mut rng)?;
        let test = cfg.pair_test();
        let residuals = PreparedSeries::new(model.residuals.as_slice().to_vec(), design.first_time, test)?;
        let m = shift_bound_for_order(selection.order);
        let range = |i: usize| if i == node { ShiftRange::Past(m) } else { ShiftRange::Symmetric(m) };
        let total: usize = tested.iter().map(|&i| range(i).count()).sum();
        let mut verdicts = BTreeMap::new();
        let mut weakest = 1.0f64;
        let mut inverse_sum = 0.0;
        for &i in tested {
            let opts = ShiftedTestOptions {
                shifts: range(i),
                alpha: cfg.alpha,
                test,
                bonferroni: total,
                seed: derive_seed(seed, &[1, i as u64]),
            };
            let verdict = shifted_test_prepared(&residuals, &self.prepared[i], &opts)?;
            weakest = weakest.min(verdict.min_adjusted_p);
            inverse_sum += verdict.per_shift_pvalues.values().map(|p| 1.0 / p.max(1e-300)).sum::<f64>();
            verdicts.insert(i, verdict);
        }
        let accepted = verdicts.values().all(|v| !v.reject);
        Ok(NodeEvaluation {
            node,
            order: selection.order,
            model,
            verdicts,
            min_adjusted_p: weakest,
            harmonic_mean_p: if inverse_sum > 0.0 { total as f64 / inverse_sum } else { 1.0 },
            accepted,
        })
    }
}

/// Fits series `k` on all other members of `set` and tests its residuals
/// against every member of `set` (including `k` itself).
pub fn fit_timino_node<T: Scalar>(
    panel: &TimeSeriesPanel<T>,
    k: usize,
    set: &[usize],
    config: &DiscoveryConfig,
) -> Result<NodeEvaluation<T>> {
    if !set.contains(&k) {
        return Err(Error::InvalidArgument(format!("node {k} not in candidate set")));
    }
    check_indices(panel, set)?;
    let ctx = DiscoveryContext::new(panel, config)?;
    let regressors: Vec<usize> = set.iter().copied().filter(|&i| i != k).collect();
    ctx.evaluate(k, &regressors, set, derive_seed(config.seed, &[k as u64]))
}

fn check_indices<T: Scalar>(panel: &TimeSeriesPanel<T>, set: &[usize]) -> Result<()> {
    match set.iter().find(|&&i| i >= panel.dim()) {
        Some(&i) => Err(Error::IndexOutOfRange { index: i, count: panel.dim() }),
        None => Ok(()),
    }
}

fn check_length<T: Scalar>(panel: &TimeSeriesPanel<T>, config: &DiscoveryConfig) -> Result<()> {
    config.validate()?;
    if panel.len() <= 10 * config.max_lag {
        return Err(Error::InsufficientData(format!(
            "{} observations for lag order {}; need more than {}",
            panel.len(),
            config.max_lag,
            10 * config.max_lag
        )));
    }
    Ok(())
}

/// State of an elimination run: sinks removed so far with the set they were
/// tested against.
#[derive(Debug, Clone, Default)]
struct Elimination {
    /// `(sink, set it was fitted against)`, first removed first.
    sinks: Vec<(usize, Vec<usize>)>,
    last: Option<usize>,
}

impl Elimination {
    fn order(&self) -> Vec<usize> {
        self.sinks.iter().map(|s| s.0).chain(self.last).collect()
    }
}

/// Removes sinks from `set` until one series is left. Returns the set at
/// which no candidate passed, if any.
fn eliminate<T: Scalar>(
    ctx: &DiscoveryContext<'_, T>,
    mut set: Vec<usize>,
    state: &mut Elimination,
    diag: &mut Diagnostics,
) -> Option<Vec<usize>> {
    while set.len() > 1 {
        let round = diag.iterations.len() as u64;
        let evaluations: Vec<(usize, Result<NodeEvaluation<T>>)> = set
            .par_iter()
            .map(|&k| {
                let regressors: Vec<usize> = set.iter().copied().filter(|&i| i != k).collect();
                let seed = derive_seed(ctx.config.seed, &[0, round, k as u64]);
                (k, ctx.evaluate(k, &regressors, &set, seed))
            })
            .collect();
        let mut best: Option<(usize, (f64, f64))> = None;
        let mut candidates = Vec::with_capacity(set.len());
        for (k, eval) in evaluations {
            match eval {
                Ok(e) => {
                    if e.accepted && best.is_none_or(|(_, w)| e.weakness() > w) {
                        best = Some((k, e.weakness()));
                    }
                    candidates.push(CandidateRecord {
                        node: k,
                        order: Some(e.order),
                        min_adjusted_p: Some(e.min_adjusted_p),
                        accepted: e.accepted,
                        error: None,
                    });
                }
                Err(err) => candidates.push(CandidateRecord {
                    node: k,
                    order: None,
                    min_adjusted_p: None,
                    accepted: false,
                    error: Some(err.to_string()),
                }),
            }
        }
        let chosen = best.map(|b| b.0);
        diag.iterations.push(IterationRecord { remaining: set.clone(), candidates, chosen });
        let Some(sink) = chosen else {
            return Some(set);
        };
        state.sinks.push((sink, set.clone()));
        set.retain(|&i| i != sink);
    }
    state.last = set.first().copied();
    None
}

/// Greedily removes parents whose omission keeps every verdict accepting.
///
/// `parents` maps each node to `(candidate parents, set tested against)`.
/// Parents are tried in ascending order, restarting after each successful
/// drop, until no parent can be removed. A failed refit keeps the parent.
pub fn prune_parents<T: Scalar>(
    panel: &TimeSeriesPanel<T>,
    parents: &BTreeMap<usize, (Vec<usize>, Vec<usize>)>,
    config: &DiscoveryConfig,
) -> Result<BTreeMap<usize, Vec<usize>>> {
    let ctx = DiscoveryContext::new(panel, config)?;
    let mut diag = Diagnostics::default();
    Ok(prune_with(&ctx, parents, &mut diag))
}

fn prune_with<T: Scalar>(
    ctx: &DiscoveryContext<'_, T>,
    parents: &BTreeMap<usize, (Vec<usize>, Vec<usize>)>,
    diag: &mut Diagnostics,
) -> BTreeMap<usize, Vec<usize>> {
    let jobs: Vec<(usize, Vec<usize>, Vec<PruneRecord>)> = parents
        .par_iter()
        .map(|(&node, (initial, tested))| {
            let mut current = initial.clone();
            current.sort_unstable();
            let mut records = Vec::new();
            let mut attempt = 0u64;
            'outer: loop {
                for &p in &current.clone() {
                    let reduced: Vec<usize> = current.iter().copied().filter(|&i| i != p).collect();
                    let seed = derive_seed(ctx.config.seed, &[1, node as u64, attempt]);
                    attempt += 1;
                    let eval = ctx.evaluate(node, &reduced, tested, seed);
                    let (dropped, pval) = match &eval {
                        Ok(e) => (e.accepted, Some(e.min_adjusted_p)),
                        Err(_) => (false, None),
                    };
                    records.push(PruneRecord { node, parent: p, dropped, min_adjusted_p: pval });
                    if dropped {
                        current = reduced;
                        continue 'outer;
                    }
                }
                break;
            }
            (node, current, records)
        })
        .collect();
    let mut out = BTreeMap::new();
    for (node, kept, records) in jobs {
        diag.pruning.extend(records);
        out.insert(node, kept);
    }
    out
}

fn graph_from(d: usize, parents: &BTreeMap<usize, Vec<usize>>) -> SummaryGraph {
    let mut g = SummaryGraph::new(d);
    for (&child, ps) in parents {
        for &p in ps {
            g.add_edge(p, child).expect("parents are valid distinct nodes");
        }
    }
    g
}

fn finish<T: Scalar>(
    ctx: &DiscoveryContext<'_, T>,
    state: &Elimination,
    mut diag: Diagnostics,
    excluded: Vec<usize>,
    unresolved: Vec<(usize, usize)>,
) -> DiscoveryResult {
    let parents: BTreeMap<usize, (Vec<usize>, Vec<usize>)> = state
        .sinks
        .iter()
        .map(|(sink, set)| {
            let pa: Vec<usize> = set.iter().copied().filter(|&i| i != *sink && !excluded.contains(&i)).collect();
            (*sink, (pa, set.clone()))
        })
        .collect();
    let pruned = prune_with(ctx, &parents, &mut diag);
    let verdict = if excluded.is_empty() { Verdict::Decided } else { Verdict::Partial };
    DiscoveryResult {
        verdict,
        graph: Some(graph_from(ctx.panel.dim(), &pruned)),
        excluded,
        unresolved,
        reason: None,
        elimination_order: state.order(),
        diagnostics: diag,
    }
}

fn undecided(state: &Elimination, diag: Diagnostics) -> DiscoveryResult {
    DiscoveryResult {
        verdict: Verdict::Undecided,
        graph: None,
        excluded: Vec::new(),
        unresolved: Vec::new(),
        reason: Some(BAD_MODEL_FIT.to_string()),
        elimination_order: state.order(),
        diagnostics: diag,
    }
}

/// Full causal discovery: returns a decided graph over all series or an
/// undecided verdict.
pub fn discover_full<T: Scalar>(panel: &TimeSeriesPanel<T>, config: &DiscoveryConfig) -> Result<DiscoveryResult> {
    let mut cfg = config.clone();
    cfg.partial_max_exclude = 0;
    discover_partial(panel, &cfg)
}

/// Like [`discover_full`], but when elimination gets stuck it excludes
/// subsets of the remaining series (smallest first, lexicographic in the
/// series names within a size, at most `partial_max_exclude` series, keeping
/// at least two) and
/// continues the elimination on the rest. The first exclusion that lets the
/// elimination finish gives a partial result.
pub fn discover_partial<T: Scalar>(panel: &TimeSeriesPanel<T>, config: &DiscoveryConfig) -> Result<DiscoveryResult> {
    check_length(panel, config)?;
    let ctx = DiscoveryContext::new(panel, config)?;
    let mut diag = Diagnostics::default();
    let mut state = Elimination::default();
    let Some(stuck) = eliminate(&ctx, (0..panel.dim()).collect(), &mut state, &mut diag) else {
        return Ok(finish(&ctx, &state, diag, Vec::new(), Vec::new()));
    };
    let max_size = config.partial_max_exclude.min(stuck.len().saturating_sub(2));
    let mut by_name = stuck.clone();
    by_name.sort_by(|&a, &b| panel.names()[a].cmp(&panel.names()[b]).then(a.cmp(&b)));
    for size in 1..=max_size {
        for mut subset in combinations(&by_name, size) {
            subset.sort_unstable();
            diag.exclusions_tried.push(subset.clone());
            let rest: Vec<usize> = stuck.iter().copied().filter(|i| !subset.contains(i)).collect();
            let mut trial = state.clone();
            if eliminate(&ctx, rest.clone(), &mut trial, &mut diag).is_none() {
                let unresolved = subset.iter().flat_map(|&e| rest.iter().map(move |&r| (e, r))).collect();
                return Ok(finish(&ctx, &trial, diag, subset, unresolved));
            }
        }
    }
    Ok(undecided(&state, diag))
}

/// `size`-subsets of `items` in lexicographic order of positions.
fn combinations(items: &[usize], size: usize) -> Vec<Vec<usize>> {
    fn rec(items: &[usize], size: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == size {
            out.push(cur.clone());
            return;
        }
        for i in start..items.len() {
            cur.push(items[i]);
            rec(items, size, i + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(items, size, 0, &mut Vec::new(), &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Uniform};

    fn chain(n: usize, seed: u64) -> TimeSeriesPanel<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = Uniform::new(-0.5, 0.5).unwrap();
        let (mut x, mut y) = (vec![0.0; n], vec![0.0; n]);
        for t in 1..n {
            x[t] = 0.6 * x[t - 1] + u.sample(&mut rng);
            y[t] = 0.3 * y[t - 1] + 0.8 * x[t - 1] + u.sample(&mut rng);
        }
        TimeSeriesPanel::from_columns(vec![x, y], vec!["X".into(), "Y".into()]).unwrap()
    }

    #[test]
    fn combinations_are_lexicographic() {
        assert_eq!(combinations(&[1, 4, 7], 2), vec![vec![1, 4], vec![1, 7], vec![4, 7]]);
        assert_eq!(combinations(&[2, 3], 1), vec![vec![2], vec![3]]);
    }

    #[test]
    fn single_series_is_decided_empty() {
        let p = TimeSeriesPanel::from_columns_unnamed(vec![(0..100).map(|i| (i as f64 * 0.7).sin()).collect()]).unwrap();
        let r = discover_full(&p, &DiscoveryConfig::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Decided);
        assert_eq!(r.graph.unwrap().edge_count(), 0);
    }

    #[test]
    fn single_node_fit_tests_own_past() {
        let p = chain(300, 1).select(&[0]).unwrap();
        let e = fit_timino_node(&p, 0, &[0], &DiscoveryConfig::default()).unwrap();
        let v = &e.verdicts[&0];
        assert!(v.per_shift_pvalues.keys().all(|&s| s >= 1));
    }

    #[test]
    fn lagged_chain_recovered() {
        let p = chain(500, 3);
        let r = discover_full(&p, &DiscoveryConfig::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Decided, "{:?}", r.diagnostics);
        let g = r.graph.unwrap();
        assert!(g.has_edge(0, 1) && g.edge_count() == 1);
        assert_eq!(r.elimination_order, vec![1, 0]);
    }

    #[test]
    fn short_series_rejected() {
        let p = chain(20, 0);
        assert!(discover_full(&p, &DiscoveryConfig::default()).is_err());
    }

    #[test]
    fn minimal_parents_unchanged() {
        let p = chain(400, 5);
        let cfg = DiscoveryConfig::default();
        let parents: BTreeMap<usize, (Vec<usize>, Vec<usize>)> = [(1, (vec![0], vec![0, 1]))].into_iter().collect();
        assert_eq!(prune_parents(&p, &parents, &cfg).unwrap()[&1], vec![0]);
    }
}
