//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed.

use std::time::Instant;

use mkalloc::allocator::{constraint_g, dual_values, q_of_lambda};
use mkalloc::discrete::{dyer_zemel, MckpInstance, MckpItem, Pivot};
use mkalloc::forecaster::{
    fit_independent_logit, rmae, train, ElasticityNetwork, FeatureVocabulary, InitScheme, ModelSegment, Observation,
    SemiBlackBoxModel, TrainConfig,
};
use mkalloc::numerics::{lambert_w, lambert_w_of_exp};
use mkalloc::rng;
use mkalloc::simlab::{
    brute_force_allocate, convergence_experiment, discrete_error_experiment, generate, sensitivity_experiment,
    sparse_context_family, BiasedParam, DiscreteErrorConfig, GridSpec, ScenarioSpec, SensitivityConfig,
    SparseFamilySpec, CONVERGENCE_EPSILON_PRIME,
};
use mkalloc::{solve, AllocationProblem, Constraint, Segment, SolverConfig};
use rand::Rng as _;
use rayon::prelude::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn optimality_vs_grid() -> Outcome {
    // instances whose optimum lies inside the searched box
    let mut instances = Vec::new();
    let mut seed = 0u64;
    while instances.len() < 50 {
        seed += 1;
        let n = 1 + instances.len() % 3;
        let mut r = rng::stream(1001, seed);
        let segs: Vec<Segment> = (0..n)
            .map(|i| {
                Segment::new(
                    format!("s{i}"),
                    r.random_range(1.0..100.0),
                    r.random_range(-1.0..1.0),
                    r.random_range(0.2..1.0),
                )
                .unwrap()
            })
            .collect();
        let budget = r.random_range(0.0..30.0 * n as f64);
        let sol = solve(&AllocationProblem::new(segs.clone(), Constraint::Budget(budget))).unwrap();
        if sol.costs().iter().all(|c| c.abs() < 19.5) {
            instances.push((segs, budget, sol));
        }
    }
    let results: Vec<(f64, bool)> = instances
        .par_iter()
        .map(|(segs, budget, sol)| {
            // step 0.001 on [-20, 20]; three segments enumerate a 0.005 grid
            let step = if segs.len() < 3 { 0.001 } else { 0.005 };
            let grid = GridSpec::new(step, -20.0, 20.0);
            let bf = brute_force_allocate(segs, *budget, &grid).unwrap();
            let gap = (bf.objective - sol.objective) / bf.objective;
            let feasible = sol.spend <= budget + 1e-6 * budget.abs().max(1.0);
            (gap, feasible)
        })
        .collect();
    let worst = results.iter().map(|r| r.0).fold(f64::NEG_INFINITY, f64::max);
    let feasible = results.iter().all(|r| r.1);
    outcome(
        worst <= 1e-3 && feasible,
        format!("50 instances, worst (grid - solver)/grid = {worst:.3e}, all within budget: {feasible}"),
    )
}

fn convergence_claim() -> Outcome {
    let seeds = 1..=100u64;
    let loose = SolverConfig {
        epsilon_prime: CONVERGENCE_EPSILON_PRIME,
        ..Default::default()
    };
    let runs = convergence_experiment(100, seeds.clone(), &loose).unwrap();
    let within_ten = runs.iter().filter(|r| r.iterations <= 10).count();
    let bounded = runs.iter().all(|r| r.iterations <= r.iteration_bound);
    let max_it = runs.iter().map(|r| r.iterations).max().unwrap();

    let strict = convergence_experiment(100, seeds, &SolverConfig::default()).unwrap();
    let strict_ten = strict.iter().filter(|r| r.iterations <= 10).count();
    let strict_bounded = strict.iter().all(|r| r.iterations <= r.iteration_bound);
    let strict_mean = strict.iter().map(|r| r.iterations as f64).sum::<f64>() / strict.len() as f64;
    outcome(
        within_ten >= 90 && bounded && strict_bounded,
        format!(
            "eps' = 0.5% of sum D: {within_ten}/100 in <= 10 iterations (max {max_it}), bound holds: {bounded}; \
             default eps' = 1e-6 sum D: {strict_ten}/100 in <= 10 (mean {strict_mean:.1}), bound holds: {strict_bounded}"
        ),
    )
}

fn sensitivity_thresholds() -> Outcome {
    let cfg = SensitivityConfig {
        levels: vec![0.05, 0.1, 0.2],
        ..Default::default()
    };
    let reports = sensitivity_experiment(&cfg).unwrap();
    let find = |p: BiasedParam, l: f64| reports.iter().find(|r| r.param == p && r.level == l).unwrap();
    let a20 = find(BiasedParam::Bias, 0.2);
    let a10 = find(BiasedParam::Bias, 0.1);
    let b05 = find(BiasedParam::Sensitivity, 0.05);
    let b20 = find(BiasedParam::Sensitivity, 0.2);
    let obj_ok = a20.objective_error.mean < 0.01;
    let exc_ok = a10.exceeded_budget.mean < 0.05 && b05.exceeded_budget.mean < 0.05;
    let order_ok = b20.exceeded_budget.mean >= a20.exceeded_budget.mean;
    let pct = |v: f64| 100.0 * v;
    outcome(
        obj_ok && exc_ok && order_ok,
        format!(
            "{} runs, seed {}: objective error mean a20 {:.3}%; exceeded budget mean a10 {:.2}% (median {:.2}%), \
             b5 {:.2}% (median {:.2}%); a20 {:.2}% vs b20 {:.2}% (medians {:.2}% vs {:.2}%)",
            cfg.runs,
            cfg.seed,
            pct(a20.objective_error.mean),
            pct(a10.exceeded_budget.mean),
            pct(a10.exceeded_budget.median),
            pct(b05.exceeded_budget.mean),
            pct(b05.exceeded_budget.median),
            pct(a20.exceeded_budget.mean),
            pct(b20.exceeded_budget.mean),
            pct(a20.exceeded_budget.median),
            pct(b20.exceeded_budget.median),
        ),
    )
}

/// Reference error bounds in percent: (mean, stddev) for the two strategies.
const REFERENCE_BOUNDS: [(f64, (f64, f64), (f64, f64)); 6] = [
    (0.1, (0.0297, 0.0337), (0.0299, 0.0337)),
    (0.5, (0.3040, 0.2614), (0.3043, 0.2612)),
    (1.0, (0.8418, 0.5582), (0.8418, 0.5582)),
    (2.0, (3.053, 2.247), (3.053, 2.247)),
    (4.0, (15.14, 10.43), (15.09, 10.45)),
    (8.0, (49.89, 11.52), (49.88, 11.53)),
];

fn discrete_error_bounds() -> Outcome {
    let rows = discrete_error_experiment(&DiscreteErrorConfig::default()).unwrap();
    let mut pass = true;
    let mut cells = Vec::new();
    for (k, (distance, two_step, direct)) in REFERENCE_BOUNDS.iter().enumerate() {
        let ours = [&rows[2 * k], &rows[2 * k + 1]];
        assert_eq!(ours[0].distance, *distance);
        for (row, (mean, std)) in ours.iter().zip([two_step, direct]) {
            pass &= (row.error_bound_pct.mean - mean).abs() <= 2.0 * std;
        }
        let agree = (ours[0].error_bound_pct.mean - ours[1].error_bound_pct.mean).abs();
        if *distance <= 2.0 {
            pass &= agree <= 0.01;
        }
        cells.push(format!(
            "d={distance}: {:.4}/{:.4}",
            ours[0].error_bound_pct.mean, ours[1].error_bound_pct.mean
        ));
    }
    outcome(pass, format!("mean error bound % (two-step/direct) {}", cells.join(", ")))
}

fn analytic_properties() -> Outcome {
    let mut r = rng::stream(55, 0);
    let mut failures = Vec::new();

    // elasticity at market cost
    let mut worst_el: f64 = 0.0;
    for _ in 0..1000 {
        let s = Segment::new("s", r.random_range(1.0..100.0), r.random_range(-3.0..3.0), r.random_range(0.05..3.0)).unwrap();
        worst_el = worst_el.max((s.elasticity(s.market_cost().0) + s.bias / 2.0).abs());
    }
    if worst_el > 1e-10 {
        failures.push(format!("elasticity {worst_el:e}"));
    }

    // curvature of the constraint in share space
    let mut curvature_ok = true;
    for _ in 0..1000 {
        let s = Segment::new("s", r.random_range(1.0..100.0), r.random_range(-1.0..1.0), r.random_range(0.05..1.0)).unwrap();
        let q = r.random_range(0.02..0.98);
        let roi = r.random_range(0.2..5.0);
        let h = 1e-4;
        for (c, scale) in [(Constraint::Budget(0.0), 1.0), (Constraint::Roi(roi), roi)] {
            let g = |q: f64| constraint_g(std::slice::from_ref(&s), &[q], c).unwrap();
            let fd = (g(q + h) - 2.0 * g(q) + g(q - h)) / (h * h);
            curvature_ok &= fd >= scale * 27.0 * s.size / (4.0 * s.sensitivity) * (1.0 - 1e-4);
        }
    }
    if !curvature_ok {
        failures.push("curvature".into());
    }

    // stationarity of q(lambda)
    let mut worst_res: f64 = 0.0;
    for _ in 0..1000 {
        let (a, b) = (r.random_range(-1.0..1.0), r.random_range(0.01..1.0));
        let lambda = 10f64.powf(r.random_range(-3.0..3.0));
        let s = Segment::new("s", 1.0, a, b).unwrap();
        let q = q_of_lambda(&[s], lambda, Constraint::Budget(0.0)).unwrap()[0];
        let x = q / (1.0 - q);
        worst_res = worst_res.max((lambda * (1.0 - a + x.ln() + x) - b).abs());
    }
    if worst_res > 1e-8 {
        failures.push(format!("stationarity {worst_res:e}"));
    }

    // strict decrease in lambda and a positive limit at zero
    let mut monotone = true;
    let mut positive_at_zero = true;
    for seed in 0..50 {
        let sc = generate(&ScenarioSpec::new(100, 9000 + seed)).unwrap();
        let roi = r.random_range(0.3..3.0);
        for c in [Constraint::Budget(sc.budget), Constraint::Roi(roi)] {
            for _ in 0..10 {
                let l1 = 10f64.powf(r.random_range(-3.0..2.0));
                let l2 = l1 * r.random_range(1.01..10.0);
                let (f1, g1) = dual_values(&sc.segments, l1, c).unwrap();
                let (f2, g2) = dual_values(&sc.segments, l2, c).unwrap();
                monotone &= f1 > f2 && g1 > g2;
            }
            positive_at_zero &= dual_values(&sc.segments, 1e-8, c).unwrap().1 > 0.0;
        }
    }
    if !monotone {
        failures.push("monotonicity".into());
    }
    if !positive_at_zero {
        failures.push("g(1e-8) <= 0".into());
    }
    outcome(
        failures.is_empty(),
        format!(
            "elasticity err {worst_el:.1e}, stationarity residual {worst_res:.1e}, curvature {curvature_ok}, \
             monotone {monotone}, g(1e-8) > 0 {positive_at_zero}{}",
            if failures.is_empty() {
                String::new()
            } else {
                format!("; failed: {}", failures.join(", "))
            }
        ),
    )
}

fn lambert_w_accuracy() -> Outcome {
    let mut r = rng::stream(66, 0);
    let mut worst: f64 = 0.0;
    for k in 0..10_000 {
        let x = if k % 2 == 0 {
            r.random_range(0.0..10.0)
        } else {
            10f64.powf(r.random_range(-12.0..12.0))
        };
        let w = lambert_w(x).unwrap();
        worst = worst.max((w * w.exp() - x).abs() / x.max(1.0));
    }

    // log domain: w + ln w = z up to 1e8, monotone, continuous at the switch
    let mut zs: Vec<f64> = (0..2000).map(|_| 10f64.powf(r.random_range(0.0..8.0))).collect();
    zs.push(1e8);
    zs.sort_by(f64::total_cmp);
    let ws: Vec<f64> = zs.iter().map(|&z| lambert_w_of_exp(z).unwrap()).collect();
    let finite = ws.iter().all(|w| w.is_finite() && *w > 0.0);
    let log_res = zs
        .iter()
        .zip(&ws)
        .map(|(z, w)| (w + w.ln() - z).abs() / z.max(1.0))
        .fold(0.0, f64::max);
    let monotone = ws.windows(2).all(|p| p[0] <= p[1]);
    let (below, above) = (lambert_w_of_exp(30.0 - 1e-9).unwrap(), lambert_w_of_exp(30.0 + 1e-9).unwrap());
    let continuous = (above - below).abs() < 1e-8;
    outcome(
        worst <= 1e-12 && finite && log_res <= 1e-12 && monotone && continuous,
        format!(
            "10^4 points: max |w e^w - x| / max(1,x) = {worst:.1e}; log domain to 1e8: finite {finite}, \
             residual {log_res:.1e}, monotone {monotone}, continuous at switch {continuous}"
        ),
    )
}

fn dp_optimum(inst: &MckpInstance) -> f64 {
    let cap = inst.capacity as usize;
    let mut best = vec![f64::NEG_INFINITY; cap + 1];
    best[0] = 0.0;
    for class in &inst.classes {
        let mut next = vec![f64::NEG_INFINITY; cap + 1];
        for (w, &v) in best.iter().enumerate().filter(|(_, v)| v.is_finite()) {
            for it in class {
                let nw = w + it.weight as usize;
                if nw <= cap {
                    next[nw] = next[nw].max(v + it.profit);
                }
            }
        }
        best = next;
    }
    best.into_iter().fold(f64::NEG_INFINITY, f64::max)
}

fn mckp_exactness() -> Outcome {
    let mut r = rng::stream(77, 0);
    let (mut ok, mut exact) = (0, 0);
    for _ in 0..200 {
        let n = r.random_range(1..=12);
        let classes: Vec<Vec<MckpItem>> = (0..n)
            .map(|_| {
                (0..r.random_range(1..=4))
                    .map(|_| {
                        let weight = r.random_range(0..30) as f64;
                        MckpItem {
                            profit: r.random_range(0.1..50.0),
                            weight,
                            cost: weight,
                            implicit: false,
                        }
                    })
                    .collect()
            })
            .collect();
        let lo: f64 = classes.iter().map(|c| c.iter().map(|i| i.weight).fold(f64::INFINITY, f64::min)).sum();
        let hi: f64 = classes.iter().map(|c| c.iter().map(|i| i.weight).fold(0.0, f64::max)).sum();
        let capacity = r.random_range(lo as u64..=hi as u64) as f64;
        let inst = MckpInstance { classes, capacity };
        let opt = dp_optimum(&inst);
        let sol = dyer_zemel(&inst, Pivot::Median).unwrap();
        let valid = sol.choice.iter().zip(&inst.classes).all(|(&j, c)| j < c.len());
        let feasible = sol.weight <= inst.capacity;
        let gap = sol.break_class.map_or(0.0, |b| b.profit_gap);
        let within = sol.profit <= opt + 1e-9 && opt <= sol.profit + gap + 1e-9;
        if valid && feasible && within {
            ok += 1;
        }
        if (sol.profit - opt).abs() <= 1e-9 {
            exact += 1;
        }
    }
    outcome(
        ok == 200,
        format!("{ok}/200 feasible, valid and within the break-class gap of the DP optimum ({exact} exactly optimal)"),
    )
}

fn gradient_check() -> (bool, f64) {
    let mut worst: f64 = 0.0;
    let mut r = rng::stream(88, 0);
    for trial in 0..5 {
        let contexts: Vec<Vec<(String, String)>> = (0..6)
            .map(|i| vec![("f".to_string(), format!("v{}", i % 3)), ("g".to_string(), format!("w{}", i % 2))])
            .collect();
        let vocab = FeatureVocabulary::fit(contexts.iter().map(Vec::as_slice));
        let mut net = ElasticityNetwork::new(vocab.width(), 5, 4, InitScheme::SmallUniform { scale: 0.7 }, trial);
        let mut p = net.params();
        for v in p.iter_mut() {
            *v += r.random_range(-0.3..0.3);
        }
        net.set_params(&p);
        let segments = contexts
            .iter()
            .enumerate()
            .map(|(i, c)| ModelSegment {
                id: format!("s{i}"),
                context: c.iter().cloned().collect(),
                log_b: r.random_range(-1.0..1.0),
            })
            .collect();
        let mut model = SemiBlackBoxModel::new(vocab, net, segments).unwrap();
        let obs: Vec<Observation> = (0..24)
            .map(|k| Observation::new(format!("s{}", k % 6), r.random_range(-2.0..3.0), r.random_range(0.05..0.95)))
            .collect();
        let (_, grad) = model.loss_and_grad(&obs).unwrap();
        let base = model.params();
        let h = 1e-5;
        for i in 0..base.len() {
            let mut q = base.clone();
            q[i] = base[i] + h;
            model.set_params(&q);
            let up = model.nll_loss(&obs).unwrap();
            q[i] = base[i] - h;
            model.set_params(&q);
            let down = model.nll_loss(&obs).unwrap();
            model.set_params(&base);
            let fd = (up - down) / (2.0 * h);
            let scale = fd.abs().max(grad[i].abs());
            if scale > 1e-7 {
                worst = worst.max((fd - grad[i]).abs() / scale);
            }
        }
    }
    (worst <= 1e-4, worst)
}

fn forecaster_claims() -> Outcome {
    let (grad_ok, grad_err) = gradient_check();
    let results: Vec<(f64, f64)> = (0..20u64)
        .into_par_iter()
        .map(|seed| {
            let fam = sparse_context_family(&SparseFamilySpec::new(seed)).unwrap();
            let cfg = TrainConfig {
                seed,
                ..Default::default()
            };
            let model = train(&fam.train, &cfg).unwrap().model;
            let truths: Vec<f64> = fam.test.iter().map(|t| t.sales).collect();
            let sbb: Vec<f64> = fam
                .test
                .iter()
                .map(|t| t.size * model.predict_share(&t.segment, t.cost).unwrap())
                .collect();
            let logit: Vec<f64> = fam
                .test
                .iter()
                .map(|t| {
                    let own: Vec<Observation> =
                        fam.train.observations.iter().filter(|o| o.segment == t.segment).cloned().collect();
                    t.size * fit_independent_logit(&own).unwrap().share(t.cost)
                })
                .collect();
            (rmae(&sbb, &truths).unwrap(), rmae(&logit, &truths).unwrap())
        })
        .collect();
    let wins = results.iter().filter(|(s, l)| s <= l).count();
    let mean = |f: fn(&(f64, f64)) -> f64| results.iter().map(f).sum::<f64>() / results.len() as f64;
    outcome(
        grad_ok && wins >= 16,
        format!(
            "gradient max rel err {grad_err:.1e}; shared model RMAE <= independent logit in {wins}/20 trials \
             (mean {:.3} vs {:.3})",
            mean(|r| r.0),
            mean(|r| r.1)
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("1 optimality vs grid oracle", optimality_vs_grid),
        ("2 convergence in few iterations", convergence_claim),
        ("3 sensitivity thresholds", sensitivity_thresholds),
        ("4 discrete error table", discrete_error_bounds),
        ("5 analytic properties", analytic_properties),
        ("6 lambert w", lambert_w_accuracy),
        ("7 mckp vs dp", mckp_exactness),
        ("8 forecaster", forecaster_claims),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let o = run();
        let secs = start.elapsed().as_secs_f64();
        println!("[{}] criterion {name} ({secs:.1}s): {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed += 1;
        }
    }
    println!("[INFO] criterion 9: RMAE on the retail datasets and live A/B results depend on proprietary data; not reproduced");
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
