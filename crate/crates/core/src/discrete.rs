//! Discrete unit costs as a multiple-choice knapsack.
//!
//! Each segment becomes a class whose items are candidate costs `c`, with
//! profit `d(c)` and weight `d(c) c`; exactly one item is picked per class
//! under the budget as capacity. Classes are built either from the two options
//! bracketing the relaxed continuous optimum or from the whole option set.
//!
//! The knapsack is solved by the Dyer-Zemel algorithm for the LP relaxation:
//! items are paired within classes, the median pair slope is tried as the
//! multiplier, and half of the pairs lose an item that cannot be in the LP
//! optimum. The single fractional class of the LP optimum is rounded down.
//! The deletion conditions follow the corrected textbook statement: when the
//! lightest maximisers overflow (`sum w_a > c`) the heavier item of every pair
//! with slope `<= alpha` goes, and when the heaviest maximisers underfill
//! (`sum w_b < c`) the lighter item of every pair with slope `>= alpha` goes.

use rand::Rng as _;

use crate::allocator::{solve, AllocationProblem, Constraint, SolverConfig};
use crate::error::{Error, Result};
use crate::response::Segment;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MckpItem {
    /// Sales `d(c)`.
    pub profit: f64,
    /// Spend `d(c) c`; negative for premium options.
    pub weight: f64,
    /// Unit cost this item encodes.
    pub cost: f64,
    /// Set for the no-action item added when no option lies at or below the
    /// relaxed optimum.
    pub implicit: bool,
}

impl MckpItem {
    pub fn at_cost(seg: &Segment, cost: f64) -> Self {
        let profit = seg.demand(cost);
        Self {
            profit,
            weight: profit * cost,
            cost,
            implicit: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MckpInstance {
    pub classes: Vec<Vec<MckpItem>>,
    pub capacity: f64,
}

/// How the trial multiplier is chosen among the pair slopes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Pivot {
    /// Deterministic linear-time selection of the median slope.
    #[default]
    Median,
    /// Slope of a uniformly random pair, seeded.
    Random(u64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BreakClass {
    pub class: usize,
    /// Item kept (lower weight).
    pub kept: usize,
    /// Item the LP optimum moves towards.
    pub next: usize,
    /// `profit(next) - profit(kept)`; bounds the loss from rounding down.
    pub profit_gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MckpSolution {
    /// Chosen item index per class, into the original item lists.
    pub choice: Vec<usize>,
    pub profit: f64,
    pub weight: f64,
    /// Optimal value of the LP relaxation.
    pub lp_bound: f64,
    pub break_class: Option<BreakClass>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strategy {
    /// Relaxed continuous solve, then two items per class around the optimum.
    #[default]
    BisectionThenMckp,
    /// One class per segment holding every option.
    DirectDyerZemel,
}

impl Strategy {
    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::BisectionThenMckp => "bisection+dyer-zemel",
            Strategy::DirectDyerZemel => "dyer-zemel",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscreteConfig {
    pub strategy: Strategy,
    pub pivot: Pivot,
    /// Add a no-action item (`c = 0`) to classes with no option at or below
    /// the relaxed optimum.
    pub no_action_fallback: bool,
    pub solver: SolverConfig,
}

impl Default for DiscreteConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::default(),
            pivot: Pivot::default(),
            no_action_fallback: true,
            solver: SolverConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteSolution {
    pub ids: Vec<String>,
    pub costs: Vec<f64>,
    /// Segments that ended on the implicit no-action item.
    pub implicit_no_action: Vec<bool>,
    pub objective: f64,
    pub spend: f64,
    /// Optimum of the relaxed continuous problem, `d_u`.
    pub relaxed_objective: f64,
    /// Objective with every cost at zero, `d_0`.
    pub no_action_objective: f64,
    /// `(d_u - d_a) / (d_u - d_0)`; absent when `d_u <= d_0`.
    pub approx_error_upper_bound: Option<f64>,
    pub break_class: Option<usize>,
}

/// Nearest options around `c_star`: the largest option `<= c_star` and the
/// smallest option `> c_star`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bracket {
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

pub fn bracket_options(options: &[f64], c_star: f64) -> Bracket {
    let split = options.partition_point(|&c| c <= c_star);
    Bracket {
        lower: split.checked_sub(1).map(|i| options[i]),
        upper: options.get(split).copied(),
    }
}

fn options_of(seg: &Segment) -> Result<&[f64]> {
    seg.options.as_deref().ok_or_else(|| Error::InvalidSegment {
        id: seg.id.clone(),
        reason: "no discrete options".into(),
    })
}

/// Two-item classes around the relaxed costs `relaxed_costs`.
pub fn build_mckp(
    segments: &[Segment],
    relaxed_costs: &[f64],
    budget: f64,
    no_action_fallback: bool,
) -> Result<MckpInstance> {
    let mut classes = Vec::with_capacity(segments.len());
    for (seg, &c_star) in segments.iter().zip(relaxed_costs) {
        let bracket = bracket_options(options_of(seg)?, c_star);
        let mut class = Vec::with_capacity(2);
        if let Some(lo) = bracket.lower {
            class.push(MckpItem::at_cost(seg, lo));
        }
        if let Some(hi) = bracket.upper {
            class.push(MckpItem::at_cost(seg, hi));
        }
        if bracket.lower.is_none() && no_action_fallback {
            class.push(MckpItem {
                implicit: true,
                ..MckpItem::at_cost(seg, 0.0)
            });
        }
        classes.push(class);
    }
    Ok(MckpInstance {
        classes,
        capacity: budget,
    })
}

/// One class per segment containing every option.
pub fn build_direct(segments: &[Segment], budget: f64) -> Result<MckpInstance> {
    let classes = segments
        .iter()
        .map(|seg| {
            Ok(options_of(seg)?
                .iter()
                .map(|&c| MckpItem::at_cost(seg, c))
                .collect())
        })
        .collect::<Result<Vec<Vec<_>>>>()?;
    Ok(MckpInstance {
        classes,
        capacity: budget,
    })
}

/// Items of one class that survive dominance and LP-dominance pruning, as
/// indices sorted by increasing weight (and so increasing profit, decreasing
/// incremental efficiency).
fn prune_class(items: &[MckpItem]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&i, &j| {
        items[i]
            .weight
            .total_cmp(&items[j].weight)
            .then(items[j].profit.total_cmp(&items[i].profit))
    });

    let mut hull: Vec<usize> = Vec::with_capacity(order.len());
    for idx in order {
        let it = items[idx];
        if let Some(&last) = hull.last() {
            // dominated: no lighter-or-equal item does at least as well
            if it.profit <= items[last].profit {
                continue;
            }
        }
        while hull.len() >= 2 {
            let (p1, p2) = (items[hull[hull.len() - 2]], items[hull[hull.len() - 1]]);
            // p2 is LP-dominated if it lies on or below the chord p1 -> it
            let lhs = (p2.profit - p1.profit) * (it.weight - p2.weight);
            let rhs = (it.profit - p2.profit) * (p2.weight - p1.weight);
            if lhs <= rhs {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(idx);
    }
    hull
}

struct Pair {
    class: usize,
    /// Positions inside `active[class]`.
    light: usize,
    heavy: usize,
    slope: f64,
}

/// Dyer-Zemel for the multiple-choice knapsack.
///
/// Returns the LP-optimal choice with the fractional class rounded down to its
/// lighter item. Weights may be negative: each class is shifted by its
/// minimum weight and the capacity by the sum of minima before solving.
pub fn dyer_zemel(instance: &MckpInstance, pivot: Pivot) -> Result<MckpSolution> {
    let classes = &instance.classes;
    if classes.iter().any(|c| c.is_empty()) {
        return Err(Error::InvalidConfig("knapsack class without items".into()));
    }
    let finite = classes
        .iter()
        .flatten()
        .all(|it| it.profit.is_finite() && it.weight.is_finite());
    if !finite || !instance.capacity.is_finite() {
        return Err(Error::InvalidConfig("non-finite knapsack data".into()));
    }

    let shifts: Vec<f64> = classes
        .iter()
        .map(|c| c.iter().map(|it| it.weight).fold(f64::INFINITY, f64::min))
        .collect();
    let min_weight: f64 = shifts.iter().sum();
    let capacity = instance.capacity - min_weight;
    if capacity < 0.0 {
        return Err(Error::InfeasibleInstance {
            min_weight,
            capacity: instance.capacity,
        });
    }
    let weight = |k: usize, j: usize| classes[k][j].weight - shifts[k];
    let profit = |k: usize, j: usize| classes[k][j].profit;

    let mut active: Vec<Vec<usize>> = classes.iter().map(|c| prune_class(c)).collect();
    let mut rng = match pivot {
        Pivot::Random(seed) => Some(rng::stream(seed, 0)),
        Pivot::Median => None,
    };

    let mut pairs: Vec<Pair> = Vec::new();
    let mut slopes: Vec<f64> = Vec::new();
    let optimum = loop {
        pairs.clear();
        for (k, items) in active.iter().enumerate() {
            for p in (0..items.len() / 2).map(|t| 2 * t) {
                let (r, s) = (items[p], items[p + 1]);
                let slope = (profit(k, s) - profit(k, r)) / (weight(k, s) - weight(k, r));
                pairs.push(Pair {
                    class: k,
                    light: p,
                    heavy: p + 1,
                    slope,
                });
            }
        }
        if pairs.is_empty() {
            break None;
        }

        slopes.clear();
        slopes.extend(pairs.iter().map(|p| p.slope));
        let alpha = match rng.as_mut() {
            Some(r) => slopes[r.random_range(0..slopes.len())],
            None => {
                let mid = (slopes.len() - 1) / 2;
                *slopes.select_nth_unstable_by(mid, f64::total_cmp).1
            }
        };

        let (mut w_a, mut w_b) = (0.0, 0.0);
        let mut extremes = Vec::with_capacity(active.len());
        for (k, items) in active.iter().enumerate() {
            let (a, b) = maximisers(items, alpha, |j| profit(k, j), |j| weight(k, j));
            w_a += weight(k, a);
            w_b += weight(k, b);
            extremes.push((a, b));
        }

        if w_a <= capacity && capacity <= w_b {
            break Some((alpha, extremes, w_a));
        }

        let mut drop = vec![Vec::new(); active.len()];
        for p in &pairs {
            if w_a > capacity && p.slope <= alpha {
                drop[p.class].push(p.heavy);
            } else if w_a <= capacity && p.slope >= alpha {
                drop[p.class].push(p.light);
            }
        }
        for (items, mut gone) in active.iter_mut().zip(drop) {
            if gone.is_empty() {
                continue;
            }
            gone.sort_unstable();
            let mut pos = 0;
            items.retain(|_| {
                let keep = gone.binary_search(&pos).is_err();
                pos += 1;
                keep
            });
        }
    };

    let (mut choice, lp_bound, mut upgrades) = match optimum {
        None => {
            let choice: Vec<usize> = active.iter().map(|items| items[0]).collect();
            let bound = choice.iter().enumerate().map(|(k, &j)| profit(k, j)).sum();
            (choice, bound, Vec::new())
        }
        Some((alpha, extremes, w_a)) => {
            let base: f64 = extremes.iter().enumerate().map(|(k, &(a, _))| profit(k, a)).sum();
            let upgrades: Vec<(usize, usize, usize)> = extremes
                .iter()
                .enumerate()
                .filter(|(_, (a, b))| a != b)
                .map(|(k, &(a, b))| (k, a, b))
                .collect();
            let choice = extremes.iter().map(|&(a, _)| a).collect();
            (choice, base + alpha * (capacity - w_a), upgrades)
        }
    };

    // Move classes to their heavier maximiser while the capacity allows; the
    // first class that does not fit is the fractional one and stays down.
    let mut load: f64 = choice.iter().enumerate().map(|(k, &j)| weight(k, j)).sum();
    let mut switched = Vec::new();
    let mut break_class = None;
    for (k, a, b) in upgrades.drain(..) {
        let delta = weight(k, b) - weight(k, a);
        if load + delta <= capacity {
            load += delta;
            choice[k] = b;
            switched.push((k, a));
        } else {
            break_class = Some(BreakClass {
                class: k,
                kept: a,
                next: b,
                profit_gap: profit(k, b) - profit(k, a),
            });
            break;
        }
    }

    // Feasibility is judged on the original weights; undo upgrades that only
    // fit because of rounding in the shifted weights.
    let original_weight =
        |choice: &[usize]| -> f64 { choice.iter().enumerate().map(|(k, &j)| classes[k][j].weight).sum() };
    let mut total_weight = original_weight(&choice);
    while total_weight > instance.capacity {
        let Some((k, a)) = switched.pop() else {
            return Err(Error::InfeasibleInstance {
                min_weight,
                capacity: instance.capacity,
            });
        };
        choice[k] = a;
        total_weight = original_weight(&choice);
    }

    let total_profit = choice.iter().enumerate().map(|(k, &j)| profit(k, j)).sum();
    Ok(MckpSolution {
        choice,
        profit: total_profit,
        weight: total_weight,
        lp_bound: lp_bound.max(total_profit),
        break_class,
    })
}

/// Lightest and heaviest items maximising `p - alpha w` within one class.
fn maximisers(
    items: &[usize],
    alpha: f64,
    profit: impl Fn(usize) -> f64,
    weight: impl Fn(usize) -> f64,
) -> (usize, usize) {
    let value = |j: usize| profit(j) - alpha * weight(j);
    let best = items.iter().map(|&j| value(j)).fold(f64::NEG_INFINITY, f64::max);
    let tol = |j: usize| 1e-12 * profit(j).abs().max((alpha * weight(j)).abs()).max(1.0);
    let mut lightest: Option<usize> = None;
    let mut heaviest: Option<usize> = None;
    for &j in items {
        if value(j) >= best - tol(j) {
            if lightest.is_none_or(|l| weight(j) < weight(l)) {
                lightest = Some(j);
            }
            if heaviest.is_none_or(|h| weight(j) > weight(h)) {
                heaviest = Some(j);
            }
        }
    }
    (lightest.expect("class is non-empty"), heaviest.expect("class is non-empty"))
}

/// Allocation with every cost restricted to its segment's option set.
pub fn solve_discrete(segments: &[Segment], budget: f64, cfg: &DiscreteConfig) -> Result<DiscreteSolution> {
    for seg in segments {
        options_of(seg)?;
    }
    let relaxed = solve(
        &AllocationProblem::new(segments.to_vec(), Constraint::Budget(budget)).with_config(cfg.solver),
    )?;

    let instance = match cfg.strategy {
        Strategy::BisectionThenMckp => build_mckp(segments, &relaxed.costs(), budget, cfg.no_action_fallback)?,
        Strategy::DirectDyerZemel => build_direct(segments, budget)?,
    };
    let mck = dyer_zemel(&instance, cfg.pivot)?;

    let items: Vec<MckpItem> = mck
        .choice
        .iter()
        .zip(&instance.classes)
        .map(|(&j, class)| class[j])
        .collect();
    let objective: f64 = items.iter().map(|it| it.profit).sum();
    let spend: f64 = items.iter().map(|it| it.weight).sum();
    let no_action_objective: f64 = segments.iter().map(|s| s.demand(0.0)).sum();
    let gain = relaxed.objective - no_action_objective;

    Ok(DiscreteSolution {
        ids: segments.iter().map(|s| s.id.clone()).collect(),
        costs: items.iter().map(|it| it.cost).collect(),
        implicit_no_action: items.iter().map(|it| it.implicit).collect(),
        objective,
        spend,
        relaxed_objective: relaxed.objective,
        no_action_objective,
        approx_error_upper_bound: (gain > 0.0).then(|| (relaxed.objective - objective) / gain),
        break_class: mck.break_class.map(|b| b.class),
    })
}
