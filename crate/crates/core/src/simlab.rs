//! Synthetic scenarios and the offline experiments built on them.
//!
//! Scenarios draw `D ~ U(0, 100)`, `a ~ U(-1, 1)`, `b ~ U(0, 1)` per segment
//! and `B ~ U(0, 100 N)`. Segment `i` of a scenario seeded with `s` draws from
//! stream `i + 1` of `s` and the budget from stream 0, so a segment's values
//! do not depend on `N`. Monte-Carlo run `r` uses the child seed
//! `child_seed(seed, r)`, and runs are reduced in run order.

use rand::distr::{Distribution, Uniform};
use rand::Rng as _;
use rayon::prelude::*;
use serde::Serialize;

use crate::allocator::{evaluate, solve, AllocationProblem, Constraint, ObjectiveTolerance, SolverConfig, TraceStep};
use crate::discrete::{solve_discrete, DiscreteConfig, Strategy};
use crate::error::{Error, Result};
use crate::forecaster::{Observation, SegmentContext, TrainingSet};
use crate::response::Segment;
use crate::rng::{self, child_seed, Rng};

/// Draws below this are redrawn so `b` stays inside the open interval.
const MIN_SENSITIVITY: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScenarioSpec {
    pub n_segments: usize,
    pub seed: u64,
    pub size: (f64, f64),
    pub bias: (f64, f64),
    pub sensitivity: (f64, f64),
    /// Budget range per segment; the budget is drawn from `N` times it.
    pub budget_per_segment: (f64, f64),
}

impl ScenarioSpec {
    pub fn new(n_segments: usize, seed: u64) -> Self {
        Self {
            n_segments,
            seed,
            size: (0.0, 100.0),
            bias: (-1.0, 1.0),
            sensitivity: (0.0, 1.0),
            budget_per_segment: (0.0, 100.0),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo < hi;
        if self.n_segments == 0 {
            return Err(Error::InvalidConfig("scenario needs at least one segment".into()));
        }
        if !(ok(self.size) && ok(self.bias) && ok(self.sensitivity) && ok(self.budget_per_segment)) {
            return Err(Error::InvalidConfig("scenario ranges must be finite with lo < hi".into()));
        }
        if self.size.1 <= 0.0 || self.sensitivity.1 <= MIN_SENSITIVITY {
            return Err(Error::InvalidConfig("size and sensitivity ranges must reach above zero".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub segments: Vec<Segment>,
    pub budget: f64,
    pub seed: u64,
}

fn draw_above(rng: &mut Rng, (lo, hi): (f64, f64), floor: f64) -> f64 {
    loop {
        let v = rng.random_range(lo..hi);
        if v > floor {
            return v;
        }
    }
}

pub fn generate(spec: &ScenarioSpec) -> Result<Scenario> {
    spec.validate()?;
    let segments = (0..spec.n_segments)
        .map(|i| {
            let mut r = rng::stream(spec.seed, i as u64 + 1);
            let size = draw_above(&mut r, spec.size, 0.0);
            let bias = r.random_range(spec.bias.0..spec.bias.1);
            let sensitivity = draw_above(&mut r, spec.sensitivity, MIN_SENSITIVITY);
            Segment::new(format!("seg{i:04}"), size, bias, sensitivity)
        })
        .collect::<Result<Vec<_>>>()?;
    let n = spec.n_segments as f64;
    let budget = rng::stream(spec.seed, 0).random_range(n * spec.budget_per_segment.0..n * spec.budget_per_segment.1);
    Ok(Scenario {
        segments,
        budget,
        seed: spec.seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum BiasedParam {
    #[serde(rename = "a")]
    Bias,
    #[serde(rename = "b")]
    Sensitivity,
}

impl BiasedParam {
    pub fn as_str(&self) -> &'static str {
        match self {
            BiasedParam::Bias => "a",
            BiasedParam::Sensitivity => "b",
        }
    }
}

/// Applies `p -> p + eps |p|` to every segment's `a` or `b`.
pub fn apply_bias(segments: &[Segment], eps: f64, which: BiasedParam) -> Vec<Segment> {
    segments
        .iter()
        .map(|s| {
            let mut t = s.clone();
            match which {
                BiasedParam::Bias => t.bias += eps * s.bias.abs(),
                BiasedParam::Sensitivity => t.sensitivity += eps * s.sensitivity.abs(),
            }
            t
        })
        .collect()
}

/// Draws one `eps ~ U(-level, level)` for the whole scenario and applies it.
pub fn perturb(segments: &[Segment], level: f64, which: BiasedParam, rng: &mut Rng) -> Result<(Vec<Segment>, f64)> {
    if !(0.0..1.0).contains(&level) {
        return Err(Error::InvalidConfig(format!("bias level {level} outside [0, 1)")));
    }
    let eps = if level == 0.0 {
        0.0
    } else {
        rng.random_range(-level..level)
    };
    Ok((apply_bias(segments, eps, which), eps))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

impl Summary {
    /// Sample summary; `std` uses the `n - 1` denominator.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
                median: f64::NAN,
                min: f64::NAN,
                max: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
        };
        Self {
            mean,
            std: var.sqrt(),
            median,
            min: sorted[0],
            max: sorted[n - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityConfig {
    pub n_segments: usize,
    pub runs: usize,
    pub seed: u64,
    pub levels: Vec<f64>,
    pub solver: SolverConfig,
}

impl Default for SensitivityConfig {
    fn default() -> Self {
        Self {
            n_segments: 100,
            runs: 1000,
            seed: 20190804,
            levels: vec![0.0, 0.025, 0.05, 0.1, 0.15, 0.2],
            solver: SolverConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityReport {
    pub param: BiasedParam,
    pub level: f64,
    pub runs: usize,
    pub seed: u64,
    /// `(d(c*) - d(c_hat)) / d(c*)`, both under the true parameters.
    pub objective_error: Summary,
    /// `(spend(c_hat) - B) / B` under the true parameters.
    pub exceeded_budget: Summary,
}

struct RunOutcome {
    /// `[param][level] -> (objective error, exceeded budget)`.
    cells: Vec<Vec<(f64, f64)>>,
}

const PARAMS: [BiasedParam; 2] = [BiasedParam::Bias, BiasedParam::Sensitivity];

/// Stream of a run seed reserved for the bias draws.
const BIAS_STREAM: u64 = u64::MAX;

fn sensitivity_run(cfg: &SensitivityConfig, run: usize) -> Result<RunOutcome> {
    let seed = child_seed(cfg.seed, run as u64);
    let sc = generate(&ScenarioSpec::new(cfg.n_segments, seed))?;
    let solve_on = |segs: Vec<Segment>| {
        solve(&AllocationProblem::new(segs, Constraint::Budget(sc.budget)).with_config(cfg.solver)).map(|s| s.costs())
    };
    let best = evaluate(&sc.segments, &solve_on(sc.segments.clone())?).objective;

    // one uniform per parameter and run, scaled to each level
    let mut r = rng::stream(seed, BIAS_STREAM);
    let unit = Uniform::new(-1.0, 1.0).expect("valid range");
    let draws = [unit.sample(&mut r), unit.sample(&mut r)];

    let mut cells = Vec::with_capacity(PARAMS.len());
    for (which, u) in PARAMS.iter().zip(draws) {
        let mut row = Vec::with_capacity(cfg.levels.len());
        for &level in &cfg.levels {
            let costs = solve_on(apply_bias(&sc.segments, u * level, *which))?;
            let ev = evaluate(&sc.segments, &costs);
            row.push(((best - ev.objective) / best, (ev.spend - sc.budget) / sc.budget));
        }
        cells.push(row);
    }
    Ok(RunOutcome { cells })
}

/// Monte-Carlo estimate of the damage done by biased `a` or `b`. Each run
/// draws one `u ~ U(-1, 1)` per parameter and uses `eps = u * level`, so the
/// levels share random numbers.
pub fn sensitivity_experiment(cfg: &SensitivityConfig) -> Result<Vec<SensitivityReport>> {
    if cfg.runs == 0 {
        return Err(Error::InvalidConfig("at least one run is required".into()));
    }
    if let Some(l) = cfg.levels.iter().find(|l| !(0.0..1.0).contains(*l)) {
        return Err(Error::InvalidConfig(format!("bias level {l} outside [0, 1)")));
    }
    let outcomes = (0..cfg.runs)
        .into_par_iter()
        .map(|r| sensitivity_run(cfg, r))
        .collect::<Result<Vec<_>>>()?;

    let mut reports = Vec::new();
    for (p, which) in PARAMS.iter().enumerate() {
        for (l, &level) in cfg.levels.iter().enumerate() {
            let (obj, exc): (Vec<f64>, Vec<f64>) = outcomes.iter().map(|o| o.cells[p][l]).unzip();
            reports.push(SensitivityReport {
                param: *which,
                level,
                runs: cfg.runs,
                seed: cfg.seed,
                objective_error: Summary::of(&obj),
                exceeded_budget: Summary::of(&exc),
            });
        }
    }
    Ok(reports)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRun {
    pub seed: u64,
    pub n_segments: usize,
    pub budget: f64,
    pub lambda_star: Option<f64>,
    pub iterations: usize,
    pub doubling_iterations: usize,
    pub bisection_iterations: usize,
    /// Iteration bound evaluated at the returned dual value.
    pub iteration_bound: usize,
    pub termination: &'static str,
    pub trace: Vec<TraceStep>,
}

/// Solves one generated scenario and keeps the dual trace.
pub fn convergence_trace(spec: &ScenarioSpec, solver: &SolverConfig) -> Result<ConvergenceRun> {
    let sc = generate(spec)?;
    let sol = solve(&AllocationProblem::new(sc.segments, Constraint::Budget(sc.budget)).with_config(*solver))?;
    Ok(ConvergenceRun {
        seed: spec.seed,
        n_segments: spec.n_segments,
        budget: sc.budget,
        lambda_star: sol.lambda_star,
        iterations: sol.iterations(),
        doubling_iterations: sol.doubling_iterations,
        bisection_iterations: sol.bisection_iterations,
        iteration_bound: sol
            .lambda_star
            .map_or(0, |l| crate::allocator::iteration_bound(l, solver.epsilon)),
        termination: sol.termination.as_str(),
        trace: sol.trace,
    })
}

/// Objective early-stop used by the convergence experiment: 0.5% of `sum D`.
pub const CONVERGENCE_EPSILON_PRIME: ObjectiveTolerance = ObjectiveTolerance::RelativeToMarket(5e-3);

pub fn convergence_experiment(n_segments: usize, seeds: impl IntoIterator<Item = u64>, solver: &SolverConfig) -> Result<Vec<ConvergenceRun>> {
    seeds
        .into_iter()
        .map(|s| convergence_trace(&ScenarioSpec::new(n_segments, s), solver))
        .collect()
}

pub const OPTION_DISTANCES: [f64; 6] = [0.1, 0.5, 1.0, 2.0, 4.0, 8.0];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteErrorConfig {
    pub distances: Vec<f64>,
    pub runs: usize,
    pub n_segments: usize,
    pub seed: u64,
    /// Options cover `c* +- span * distance`.
    pub span: usize,
}

impl Default for DiscreteErrorConfig {
    fn default() -> Self {
        Self {
            distances: OPTION_DISTANCES.to_vec(),
            runs: 100,
            n_segments: 100,
            seed: 20190804,
            span: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteErrorRow {
    pub distance: f64,
    pub strategy: &'static str,
    pub runs: usize,
    pub seed: u64,
    /// Error bound summary in percent.
    pub error_bound_pct: Summary,
}

/// Option grid of one segment: multiples of `distance` within
/// `[c_star - span d, c_star + span d]`, plus 0.
pub fn option_grid(c_star: f64, distance: f64, span: usize) -> Vec<f64> {
    let lo = ((c_star - span as f64 * distance) / distance).ceil() as i64;
    let hi = ((c_star + span as f64 * distance) / distance).floor() as i64;
    let mut opts: Vec<f64> = (lo..=hi).map(|k| k as f64 * distance).collect();
    if !opts.contains(&0.0) {
        opts.push(0.0);
        opts.sort_by(f64::total_cmp);
    }
    // -0.0 from k = 0 compares equal; normalise for output
    for v in &mut opts {
        if *v == 0.0 {
            *v = 0.0;
        }
    }
    opts
}

/// Error bound of both discrete strategies over option grids of growing
/// spacing.
pub fn discrete_error_experiment(cfg: &DiscreteErrorConfig) -> Result<Vec<DiscreteErrorRow>> {
    if cfg.runs == 0 || cfg.distances.iter().any(|d| !(*d > 0.0)) {
        return Err(Error::InvalidConfig("need runs >= 1 and positive distances".into()));
    }
    let strategies = [Strategy::BisectionThenMckp, Strategy::DirectDyerZemel];
    // [run][distance][strategy]
    let per_run = (0..cfg.runs)
        .into_par_iter()
        .map(|r| -> Result<Vec<Vec<f64>>> {
            let sc = generate(&ScenarioSpec::new(cfg.n_segments, child_seed(cfg.seed, r as u64)))?;
            let relaxed = solve(&AllocationProblem::new(sc.segments.clone(), Constraint::Budget(sc.budget)))?;
            cfg.distances
                .iter()
                .map(|&d| {
                    let segs = sc
                        .segments
                        .iter()
                        .zip(relaxed.costs())
                        .map(|(s, c)| s.clone().with_options(option_grid(c, d, cfg.span)))
                        .collect::<Result<Vec<_>>>()?;
                    strategies
                        .iter()
                        .map(|&strategy| {
                            let dc = DiscreteConfig {
                                strategy,
                                ..Default::default()
                            };
                            let sol = solve_discrete(&segs, sc.budget, &dc)?;
                            Ok(100.0 * sol.approx_error_upper_bound.unwrap_or(0.0))
                        })
                        .collect()
                })
                .collect()
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    for (di, &distance) in cfg.distances.iter().enumerate() {
        for (si, strategy) in strategies.iter().enumerate() {
            let vals: Vec<f64> = per_run.iter().map(|r| r[di][si]).collect();
            rows.push(DiscreteErrorRow {
                distance,
                strategy: strategy.as_str(),
                runs: cfg.runs,
                seed: cfg.seed,
                error_bound_pct: Summary::of(&vals),
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub step: f64,
    pub lo: f64,
    pub hi: f64,
    /// Cap on enumerated grid points (`n^(N-1)`).
    pub limit: f64,
}

impl GridSpec {
    pub fn new(step: f64, lo: f64, hi: f64) -> Self {
        Self {
            step,
            lo,
            hi,
            limit: 2e8,
        }
    }

    fn points(&self) -> Vec<f64> {
        let n = ((self.hi - self.lo) / self.step).round() as usize;
        (0..=n).map(|k| self.lo + k as f64 * self.step).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BruteForce {
    pub costs: Vec<f64>,
    pub objective: f64,
    pub spend: f64,
}

/// Best grid point under the budget by exhaustive search.
///
/// All segments but the last are enumerated. For the last one the best
/// feasible grid cost is the largest one whose spend fits the remainder:
/// demand grows with cost, and the spend is decreasing then increasing, so
/// that cost is found by binary search on the increasing branch. The result
/// is the same as enumerating every coordinate.
pub fn brute_force_allocate(segments: &[Segment], budget: f64, grid: &GridSpec) -> Result<BruteForce> {
    if segments.is_empty() {
        return Ok(BruteForce {
            costs: Vec::new(),
            objective: 0.0,
            spend: 0.0,
        });
    }
    if !(grid.step > 0.0) || !(grid.lo < grid.hi) {
        return Err(Error::InvalidConfig("grid needs step > 0 and lo < hi".into()));
    }
    let pts = grid.points();
    let enumerated = (pts.len() as f64).powi(segments.len() as i32 - 1);
    if enumerated > grid.limit {
        return Err(Error::GridTooLarge {
            points: enumerated,
            limit: grid.limit,
        });
    }

    let tables: Vec<(Vec<f64>, Vec<f64>)> = segments
        .iter()
        .map(|s| pts.iter().map(|&c| (s.demand(c), s.spend(c))).unzip())
        .collect();
    let (last_demand, last_spend) = tables.last().expect("non-empty");
    // first index of the increasing branch of the last segment's spend
    let turn = last_spend
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(y.1))
        .map(|(i, _)| i)
        .expect("grid non-empty");
    let rising = &last_spend[turn..];

    let head = segments.len() - 1;
    let mut idx = vec![0usize; head];
    let mut best: Option<(f64, Vec<usize>, usize)> = None;
    loop {
        let (mut d, mut s) = (0.0, 0.0);
        for (k, &i) in idx.iter().enumerate() {
            d += tables[k].0[i];
            s += tables[k].1[i];
        }
        let room = budget - s;
        // largest j on the rising branch with spend <= room
        let fit = rising.partition_point(|&v| v <= room);
        if fit > 0 {
            let j = turn + fit - 1;
            let total = d + last_demand[j];
            if best.as_ref().is_none_or(|(b, _, _)| total > *b) {
                best = Some((total, idx.clone(), j));
            }
        }
        // odometer increment
        let mut k = 0;
        loop {
            if k == head {
                let Some((_, head_idx, j)) = best else {
                    return Err(Error::Infeasible {
                        min_constraint: f64::NAN,
                    });
                };
                let costs: Vec<f64> = head_idx.iter().chain(std::iter::once(&j)).map(|&i| pts[i]).collect();
                let ev = evaluate(segments, &costs);
                return Ok(BruteForce {
                    costs,
                    objective: ev.objective,
                    spend: ev.spend,
                });
            }
            idx[k] += 1;
            if idx[k] < pts.len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SparseFamilySpec {
    pub seed: u64,
    pub n_segments: usize,
    /// Categories of the two contextual features.
    pub stores: usize,
    pub slots: usize,
    /// Training observations per segment, drawn in `[min, max]`.
    pub train_per_segment: (usize, usize),
    pub test_per_segment: usize,
    pub cost_range: (f64, f64),
    pub size_range: (f64, f64),
    pub sensitivity_range: (f64, f64),
}

impl SparseFamilySpec {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            n_segments: 60,
            stores: 4,
            slots: 3,
            train_per_segment: (2, 3),
            test_per_segment: 3,
            cost_range: (-2.0, 4.0),
            size_range: (50.0, 150.0),
            sensitivity_range: (0.3, 1.2),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeldOut {
    pub segment: String,
    pub cost: f64,
    pub sales: f64,
    pub size: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseFamily {
    pub truth: Vec<Segment>,
    pub train: TrainingSet,
    pub test: Vec<HeldOut>,
}

/// Segments whose bias is a function of shared context, each with only a
/// handful of noisy observations. Sales are binomial draws from the true
/// curve; training costs within a segment are distinct.
pub fn sparse_context_family(spec: &SparseFamilySpec) -> Result<SparseFamily> {
    let (lo, hi) = spec.train_per_segment;
    if spec.n_segments == 0 || spec.stores == 0 || spec.slots == 0 || lo < 1 || lo > hi {
        return Err(Error::InvalidConfig("invalid sparse family spec".into()));
    }
    let mut shared = rng::stream(spec.seed, 0);
    let store_effect: Vec<f64> = (0..spec.stores).map(|_| shared.random_range(-0.6..0.6)).collect();
    let slot_effect: Vec<f64> = (0..spec.slots).map(|_| shared.random_range(-0.4..0.4)).collect();

    let binomial = |r: &mut Rng, n: u64, p: f64| (0..n).filter(|_| r.random::<f64>() < p).count() as f64;

    let mut truth = Vec::new();
    let mut train = TrainingSet::default();
    let mut test = Vec::new();
    for i in 0..spec.n_segments {
        let mut r = rng::stream(spec.seed, i as u64 + 1);
        let store = r.random_range(0..spec.stores);
        let slot = r.random_range(0..spec.slots);
        let bias = store_effect[store] + slot_effect[slot];
        let sensitivity = r.random_range(spec.sensitivity_range.0..spec.sensitivity_range.1);
        let size = r.random_range(spec.size_range.0..spec.size_range.1).round();
        let id = format!("seg{i:03}");
        let context = vec![("store".to_string(), format!("s{store}")), ("slot".to_string(), format!("t{slot}"))];
        let seg = Segment::new(id.clone(), size, bias, sensitivity)?.with_context(context.clone());

        let n_train = r.random_range(lo..=hi);
        let mut costs: Vec<f64> = Vec::new();
        while costs.len() < n_train {
            let c = (r.random_range(spec.cost_range.0..spec.cost_range.1) * 100.0).round() / 100.0;
            if !costs.contains(&c) {
                costs.push(c);
            }
        }
        for c in costs {
            let sales = binomial(&mut r, size as u64, seg.share(c));
            train.observations.push(Observation::from_sales(id.clone(), c, sales, size));
        }
        for _ in 0..spec.test_per_segment {
            let c = (r.random_range(spec.cost_range.0..spec.cost_range.1) * 100.0).round() / 100.0;
            let sales = binomial(&mut r, size as u64, seg.share(c));
            test.push(HeldOut {
                segment: id.clone(),
                cost: c,
                sales,
                size,
            });
        }
        train.segments.push(SegmentContext { id, context });
        truth.push(seg);
    }
    Ok(SparseFamily { truth, train, test })
}
