//! Continuous budget allocation by bisection on the Lagrange multiplier.
//!
//! Maximising `sum d_i(c_i)` subject to a spend constraint is non-convex in
//! the costs but convex in the market shares `q_i`, because the constraint
//! function `g(q) = sum D_i q_i c_i(q_i) - B` is strongly convex. Stationarity
//! of the Lagrangian gives every optimal share in closed form from a single
//! multiplier `lambda`:
//!
//! ```text
//! q_i(lambda) = W(exp(a_i + b_i / lambda - 1)) / (W(exp(a_i + b_i / lambda - 1)) + 1)
//! ```
//!
//! Both `f(lambda) = sum D_i q_i(lambda)` and `g(lambda)` are strictly
//! decreasing, so the binding multiplier is found by doubling then bisection.
//! Internally the solver keeps the odds `x_i = q_i / (1 - q_i)`, which is what
//! Lambert W returns, and derives costs as `(ln x_i - a_i) / b_i`.

use crate::error::{Error, Result};
use crate::numerics::{lambert_w_of_exp_with, WEvalConfig};
use crate::response::Segment;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Constraint {
    /// Total spend `sum d_i c_i <= B`. A negative `B` is a profit floor.
    Budget(f64),
    /// Sales per unit of spend at least `R`: `sum (R d_i c_i - d_i) <= 0`.
    Roi(f64),
}

impl Constraint {
    fn validate(&self) -> Result<()> {
        match *self {
            Constraint::Budget(b) if !b.is_finite() => {
                Err(Error::InvalidConfig(format!("budget {b} is not finite")))
            }
            Constraint::Roi(r) if !(r > 0.0 && r.is_finite()) => {
                Err(Error::InvalidConfig(format!("ROI bound {r} must be positive")))
            }
            _ => Ok(()),
        }
    }
}

/// Early-stop threshold on `f(lambda_l) - f(lambda_r)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ObjectiveTolerance {
    Absolute(f64),
    /// Multiple of the total market size `sum D_i`.
    RelativeToMarket(f64),
}

impl ObjectiveTolerance {
    fn resolve(&self, total_size: f64) -> f64 {
        match *self {
            ObjectiveTolerance::Absolute(v) => v,
            ObjectiveTolerance::RelativeToMarket(r) => r * total_size,
        }
    }

    fn is_valid(&self) -> bool {
        let v = match *self {
            ObjectiveTolerance::Absolute(v) | ObjectiveTolerance::RelativeToMarket(v) => v,
        };
        v > 0.0 && v.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Stop once `lambda_r - lambda_l <= epsilon`.
    pub epsilon: f64,
    pub epsilon_prime: ObjectiveTolerance,
    pub max_doublings: usize,
    pub max_bisections: usize,
    pub lambert: WEvalConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-9,
            epsilon_prime: ObjectiveTolerance::RelativeToMarket(1e-6),
            max_doublings: 1100,
            max_bisections: 400,
            lambert: WEvalConfig::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !self.epsilon_prime.is_valid() {
            return Err(Error::InvalidConfig(format!(
                "tolerances must be positive: epsilon = {}, epsilon' = {:?}",
                self.epsilon, self.epsilon_prime
            )));
        }
        self.lambert.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationProblem {
    pub segments: Vec<Segment>,
    pub constraint: Constraint,
    pub config: SolverConfig,
}

impl AllocationProblem {
    pub fn new(segments: Vec<Segment>, constraint: Constraint) -> Self {
        Self {
            segments,
            constraint,
            config: SolverConfig::default(),
        }
    }

    pub fn with_config(mut self, config: SolverConfig) -> Self {
        self.config = config;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentAllocation {
    pub id: String,
    pub cost: f64,
    pub share: f64,
    pub sales: f64,
    pub spend: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// `lambda_r - lambda_l <= epsilon` (or the interval can no longer be
    /// split in floating point).
    IntervalTol,
    /// `f(lambda_l) - f(lambda_r) <= epsilon'`.
    ObjectiveTol,
    /// The unconstrained minimiser of `g` already meets the constraint with
    /// equality; no multiplier is involved.
    AtConstraintMinimizer,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::IntervalTol => "interval_tol",
            Termination::ObjectiveTol => "objective_tol",
            Termination::AtConstraintMinimizer => "at_constraint_minimizer",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Doubling,
    Bisection,
}

/// Bracket state after one iteration. At `lambda_l = 0` the limits
/// `f = sum D` and `g = +inf` are recorded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceStep {
    pub phase: Phase,
    pub lambda_l: f64,
    pub lambda_r: f64,
    pub f_l: f64,
    pub f_r: f64,
    pub g_l: f64,
    pub g_r: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationSolution {
    pub allocations: Vec<SegmentAllocation>,
    pub lambda_star: Option<f64>,
    /// Total sales `sum D_i q_i`.
    pub objective: f64,
    /// Total spend `sum D_i q_i c_i`.
    pub spend: f64,
    /// Constraint value at the returned point (`g` or `g'`).
    pub constraint_value: f64,
    pub doubling_iterations: usize,
    pub bisection_iterations: usize,
    pub termination: Termination,
    pub trace: Vec<TraceStep>,
}

impl AllocationSolution {
    pub fn iterations(&self) -> usize {
        self.doubling_iterations + self.bisection_iterations
    }

    pub fn costs(&self) -> Vec<f64> {
        self.allocations.iter().map(|a| a.cost).collect()
    }

    pub fn shares(&self) -> Vec<f64> {
        self.allocations.iter().map(|a| a.share).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub objective: f64,
    pub spend: f64,
    /// `objective / spend`, absent when nothing is spent.
    pub roi: Option<f64>,
}

/// Objective, spend and ROI of an explicit cost vector.
pub fn evaluate(segments: &[Segment], costs: &[f64]) -> Evaluation {
    let (objective, spend) = segments
        .iter()
        .zip(costs)
        .fold((0.0, 0.0), |(obj, sp), (s, &c)| {
            let d = s.demand(c);
            (obj + d, sp + d * c)
        });
    Evaluation {
        objective,
        spend,
        roi: (spend != 0.0).then(|| objective / spend),
    }
}

/// Constraint function in share space: `g(q)` for a budget, `g'(q)` for ROI.
pub fn constraint_g(segments: &[Segment], shares: &[f64], constraint: Constraint) -> Result<f64> {
    let mut sales = 0.0;
    let mut spend = 0.0;
    for (s, &q) in segments.iter().zip(shares) {
        let c = s.inverse_cost(q)?;
        sales += s.size * q;
        spend += s.size * q * c;
    }
    Ok(constraint_value(constraint, sales, spend))
}

fn constraint_value(constraint: Constraint, sales: f64, spend: f64) -> f64 {
    match constraint {
        Constraint::Budget(b) => spend - b,
        Constraint::Roi(r) => r * spend - sales,
    }
}

/// Shares minimising the budget constraint function:
/// `q_i = W(exp(a_i - 1)) / (W(exp(a_i - 1)) + 1)`.
pub fn constraint_minimizer(segments: &[Segment]) -> Result<Vec<f64>> {
    let cfg = WEvalConfig::default();
    segments
        .iter()
        .map(|s| lambert_w_of_exp_with(s.bias - 1.0, &cfg).map(odds_to_share))
        .collect()
}

/// Optimal shares for a fixed multiplier `lambda > 0`.
pub fn q_of_lambda(segments: &[Segment], lambda: f64, constraint: Constraint) -> Result<Vec<f64>> {
    let cfg = WEvalConfig::default();
    segments
        .iter()
        .map(|s| {
            let z = lambert_argument(s, Some(lambda), constraint);
            lambert_w_of_exp_with(z, &cfg).map(odds_to_share)
        })
        .collect()
}

/// `(f(lambda), g(lambda))`; `g` is `g'` under an ROI constraint.
pub fn dual_values(segments: &[Segment], lambda: f64, constraint: Constraint) -> Result<(f64, f64)> {
    let p = DualPoint::at(segments, Some(lambda), constraint, &WEvalConfig::default())?;
    Ok((p.f, p.g))
}

fn odds_to_share(w: f64) -> f64 {
    w / (1.0 + w)
}

/// Exponent `z` in `W(exp(z))`. `None` stands for `lambda -> inf`.
fn lambert_argument(s: &Segment, lambda: Option<f64>, constraint: Constraint) -> f64 {
    let (a, b) = (s.bias, s.sensitivity);
    match (constraint, lambda) {
        (Constraint::Budget(_), Some(l)) => a + b / l - 1.0,
        (Constraint::Budget(_), None) => a - 1.0,
        (Constraint::Roi(r), Some(l)) => a + b / (l * r) + b / r - 1.0,
        (Constraint::Roi(r), None) => a + b / r - 1.0,
    }
}

#[derive(Debug, Clone)]
struct DualPoint {
    odds: Vec<f64>,
    f: f64,
    g: f64,
}

impl DualPoint {
    fn at(
        segments: &[Segment],
        lambda: Option<f64>,
        constraint: Constraint,
        cfg: &WEvalConfig,
    ) -> Result<Self> {
        let mut odds = Vec::with_capacity(segments.len());
        let mut sales = 0.0;
        let mut spend = 0.0;
        for s in segments {
            let w = lambert_w_of_exp_with(lambert_argument(s, lambda, constraint), cfg)?;
            let d = s.size * odds_to_share(w);
            sales += d;
            spend += d * s.cost_from_odds(w);
            odds.push(w);
        }
        Ok(Self {
            odds,
            f: sales,
            g: constraint_value(constraint, sales, spend),
        })
    }

    fn into_solution(
        self,
        segments: &[Segment],
        lambda_star: Option<f64>,
        termination: Termination,
    ) -> AllocationSolution {
        let allocations: Vec<_> = segments
            .iter()
            .zip(&self.odds)
            .map(|(s, &w)| {
                let share = odds_to_share(w);
                let cost = s.cost_from_odds(w);
                let sales = s.size * share;
                SegmentAllocation {
                    id: s.id.clone(),
                    cost,
                    share,
                    sales,
                    spend: sales * cost,
                }
            })
            .collect();
        let spend = allocations.iter().map(|a| a.spend).sum();
        AllocationSolution {
            allocations,
            lambda_star,
            objective: self.f,
            spend,
            constraint_value: self.g,
            doubling_iterations: 0,
            bisection_iterations: 0,
            termination,
            trace: Vec::new(),
        }
    }
}

/// Solves the continuous allocation problem.
///
/// Budget problems are first checked against the minimum of `g`: a positive
/// minimum means no allocation can meet the budget, and a zero minimum is the
/// solution itself. ROI problems skip the check, since `c = 0` is always
/// strictly feasible.
pub fn solve(problem: &AllocationProblem) -> Result<AllocationSolution> {
    let AllocationProblem {
        segments,
        constraint,
        config,
    } = problem;
    let constraint = *constraint;
    config.validate()?;
    constraint.validate()?;
    for s in segments {
        s.validate()?;
    }

    if segments.is_empty() {
        return Ok(DualPoint {
            odds: Vec::new(),
            f: 0.0,
            g: constraint_value(constraint, 0.0, 0.0),
        }
        .into_solution(segments, None, Termination::AtConstraintMinimizer));
    }

    let wcfg = &config.lambert;
    let eval = |lambda: f64| DualPoint::at(segments, Some(lambda), constraint, wcfg);
    let total_size: f64 = segments.iter().map(|s| s.size).sum();
    let eps_prime = config.epsilon_prime.resolve(total_size);

    if let Constraint::Budget(b) = constraint {
        let minimizer = DualPoint::at(segments, None, constraint, wcfg)?;
        let tol = 1e-9 * b.abs().max(1.0);
        if minimizer.g > tol {
            return Err(Error::Infeasible {
                min_constraint: minimizer.g,
            });
        }
        if minimizer.g.abs() <= tol {
            return Ok(minimizer.into_solution(segments, None, Termination::AtConstraintMinimizer));
        }
    }

    let mut trace = Vec::new();
    let mut record = |phase, l: f64, r: f64, fl: f64, fr: f64, gl: f64, gr: f64| {
        trace.push(TraceStep {
            phase,
            lambda_l: l,
            lambda_r: r,
            f_l: fl,
            f_r: fr,
            g_l: gl,
            g_r: gr,
        })
    };

    // f and g at lambda_l = 0 are their limits.
    let (mut lam_l, mut f_l, mut g_l) = (0.0, total_size, f64::INFINITY);
    let mut lam_r = 1.0;
    let mut right = eval(lam_r)?;

    let mut doublings = 0;
    while right.g > 0.0 {
        if doublings >= config.max_doublings {
            return Err(Error::NonConvergence {
                what: "doubling phase",
                iterations: doublings,
            });
        }
        lam_l = lam_r;
        f_l = right.f;
        g_l = right.g;
        lam_r *= 2.0;
        right = eval(lam_r)?;
        doublings += 1;
        record(Phase::Doubling, lam_l, lam_r, f_l, right.f, g_l, right.g);
    }

    let mut bisections = 0;
    let termination = loop {
        if bisections >= config.max_bisections {
            return Err(Error::NonConvergence {
                what: "bisection phase",
                iterations: bisections,
            });
        }
        let mid = 0.5 * (lam_l + lam_r);
        if mid <= lam_l || mid >= lam_r {
            break Termination::IntervalTol;
        }
        let point = eval(mid)?;
        bisections += 1;
        if point.g > 0.0 {
            lam_l = mid;
            f_l = point.f;
            g_l = point.g;
        } else {
            lam_r = mid;
            right = point;
        }
        record(Phase::Bisection, lam_l, lam_r, f_l, right.f, g_l, right.g);

        if lam_r - lam_l <= config.epsilon {
            break Termination::IntervalTol;
        }
        if f_l - right.f <= eps_prime {
            break Termination::ObjectiveTol;
        }
    };

    let mut solution = right.into_solution(segments, Some(lam_r), termination);
    solution.doubling_iterations = doublings;
    solution.bisection_iterations = bisections;
    solution.trace = trace;
    Ok(solution)
}

/// Upper bound on total iterations: `ceil(2 log2(max(lambda*, 1)) + log2(2 / epsilon))`.
pub fn iteration_bound(lambda_star: f64, epsilon: f64) -> usize {
    (2.0 * lambda_star.max(1.0).log2() + (2.0 / epsilon).log2()).ceil() as usize
}
