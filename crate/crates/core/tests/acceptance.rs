//! One line per acceptance criterion; exits non-zero if any fails.

mod common;

use std::ops::ControlFlow;
use std::thread;
use std::time::Instant;

use common::*;
use tfim_lightcone::dynamics::{
    bloch_norms, correlator_inhomogeneity, inhomogeneity, integrate, integrate_with, mf_energy,
    rhs_order1, rhs_order2, Observer, Recording, Rk4,
};
use tfim_lightcone::lattice::{
    build_ordered_state, build_perturbed_state, Axis, ModelParams, Order, SiteIndex, SpinField,
    SystemState, X,
};
use tfim_lightcone::lightcone::{
    analyze_map, fit_scaling, fit_velocity, homogeneous_reference, run_lightcone, LightconeAnalysis,
    LightconeOptions, DEFAULT_FIT_R_MIN,
};
use tfim_lightcone::oracle::{sx_series, term_values};

type Outcome = (bool, String);

const SWEEP: [f64; 4] = [0.3, 0.4, 0.5, 0.6];
const SWEEP_L: usize = 51;
const SWEEP_T_END: f64 = 2500.0;
const CONE_L: usize = 101;
const CONE_T_END: f64 = 2000.0;
const EPSILONS: [f64; 3] = [1e-4, 1e-3, 1e-2];

fn params(l: usize, h: f64, order: Order, t_end: f64) -> ModelParams {
    ModelParams {
        t_end,
        ..ModelParams::new(l, h, order)
    }
}

fn order8_at_three(h: f64) -> f64 {
    term_values(h, 1.0, 3.0)[3].value.abs()
}

/// Largest `|S^x - series|` over `Jt in [0, 3]` on an `l x l` lattice,
/// sampled every step.
fn oracle_deviation(l: usize, h: f64, order: Order) -> Result<f64, String> {
    let p = ModelParams {
        sample_interval: 1,
        ..params(l, h, order, 3.0)
    };
    let rec = integrate(&build_ordered_state(&p), &p, &mut []).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for (t, s) in rec.times.iter().zip(&rec.snapshots) {
        if inhomogeneity(s) != 0.0 {
            return Err(format!("homogeneous quench lost uniformity at t = {t}"));
        }
        worst = worst.max((s.get(SiteIndex::ORIGIN)[X] - sx_series(h, 1.0, *t)).abs());
    }
    Ok(worst)
}

fn criterion_1a() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for h in [0.1, 0.2, 0.3] {
        let tol = 1e-3f64.max(10.0 * order8_at_three(h));
        match oracle_deviation(3, h, Order::First) {
            Ok(d) => {
                pass &= d < tol;
                parts.push(format!("h={h}: {d:.2e} < {tol:.2e}"));
            }
            Err(e) => return (false, e),
        }
    }
    (pass, parts.join(", "))
}

fn criterion_1b() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for h in [0.4, 0.5, 0.6] {
        let tol = 10.0 * order8_at_three(h);
        match oracle_deviation(3, h, Order::First) {
            Ok(d) => {
                pass &= d < tol;
                parts.push(format!("h={h}: {d:.2e} vs {tol:.2e}"));
            }
            Err(e) => return (false, e),
        }
    }
    (pass, parts.join(", "))
}

fn criterion_2() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for h in [0.5, 0.6] {
        let d1 = oracle_deviation(9, h, Order::First);
        let d2 = oracle_deviation(9, h, Order::Second);
        match (d1, d2) {
            (Ok(d1), Ok(d2)) => {
                pass &= d2 <= d1;
                parts.push(format!("h={h}: order 2 {d2:.2e}, order 1 {d1:.2e}"));
            }
            (Err(e), _) | (_, Err(e)) => return (false, e),
        }
    }
    (pass, parts.join(", "))
}

fn sweep_run(h: f64, order: Order) -> Result<LightconeAnalysis, String> {
    let p = params(SWEEP_L, h, order, SWEEP_T_END);
    let run = run_lightcone(&p, &LightconeOptions::default(), &mut []).map_err(|e| e.to_string())?;
    analyze_map(&run.maps[0], DEFAULT_FIT_R_MIN).map_err(|e| e.to_string())
}

type Sweep = Vec<(f64, Result<LightconeAnalysis, String>)>;

fn exponent(sweep: &Sweep) -> Result<f64, String> {
    let mut points = Vec::new();
    for (h, r) in sweep {
        match r {
            Ok(a) => points.push((*h, a.fit.velocity())),
            Err(e) => return Err(format!("h={h}: {e}")),
        }
    }
    fit_scaling(&points).map(|f| f.exponent).map_err(|e| e.to_string())
}

fn criterion_3a(first: &Sweep) -> Outcome {
    match exponent(first) {
        Ok(e) => ((e - 2.0).abs() <= 0.15, format!("order 1 exponent {e:.4}, want 2.0 +- 0.15")),
        Err(e) => (false, e),
    }
}

fn criterion_3b(first: &Sweep, second: &Sweep) -> Outcome {
    match (exponent(first), exponent(second)) {
        (Ok(e1), Ok(e2)) => ((e1 - e2).abs() <= 0.1, format!("order 2 exponent {e2:.4}, order 1 {e1:.4}")),
        (Err(e), _) | (_, Err(e)) => (false, format!("order 2 sweep: {e}")),
    }
}

fn criterion_4(first: &Sweep) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (h, r) in first {
        let fit = r
            .as_ref()
            .map_err(|e| e.clone())
            .and_then(|a| fit_velocity(&a.map, Axis::X, 5, 23).map_err(|e| e.to_string()));
        match fit {
            Ok(f) => {
                pass &= f.r_squared > 0.99;
                parts.push(format!("h={h}: R^2 {:.4}", f.r_squared));
            }
            Err(e) => return (false, format!("h={h}: {e}")),
        }
    }
    (pass, parts.join(", "))
}

fn cone_run() -> Result<Vec<LightconeAnalysis>, String> {
    let p = params(CONE_L, 0.6, Order::First, CONE_T_END);
    let options = LightconeOptions {
        extra_epsilons: vec![EPSILONS[0], EPSILONS[2]],
        ..Default::default()
    };
    let run = run_lightcone(&p, &options, &mut []).map_err(|e| e.to_string())?;
    EPSILONS
        .iter()
        .map(|&eps| {
            let map = run.map_for(eps).ok_or(format!("no map for {eps}"))?;
            analyze_map(map, DEFAULT_FIT_R_MIN).map_err(|e| e.to_string())
        })
        .collect()
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn criterion_5(cone: &Result<Vec<LightconeAnalysis>, String>) -> Outcome {
    let profile = match cone {
        Ok(a) => match &a[1].anisotropy {
            Some(p) => p,
            None => return (false, "no radius with axis and diagonal arrivals".into()),
        },
        Err(e) => return (false, e.clone()),
    };
    let small = mean(profile.iter().filter(|(r, _)| *r <= 6.0).map(|p| p.1));
    let large = mean(profile.iter().filter(|(r, _)| *r >= 30.0).map(|p| p.1));
    let (Some(small), Some(large)) = (small, large) else {
        return (false, format!("profile covers r in [{}, {}]", profile[0].0, profile.last().unwrap().0));
    };
    let (lo, hi) = profile
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.1), hi.max(p.1)));
    let pass = small > large && large < small - 0.1 && lo >= 0.9 && hi <= 1.52;
    (
        pass,
        format!("rho small {small:.3}, large {large:.3}, range [{lo:.3}, {hi:.3}] want within [0.9, 1.52]"),
    )
}

fn criterion_6() -> Outcome {
    let mut rng = rng(2024);
    let p = ModelParams {
        sample_interval: 1,
        ..params(8, 0.6, Order::First, 20.0)
    };
    let (mut norm, mut energy) = (0.0f64, 0.0f64);
    for _ in 0..10 {
        let state = SystemState::product(random_spins(8, &mut rng), Order::First);
        let e0 = mf_energy(&state, &p);
        let mut watch = |_: usize, s: &SystemState| -> tfim_lightcone::Result<ControlFlow<()>> {
            for n in bloch_norms(s) {
                norm = norm.max((n - 1.0).abs());
            }
            energy = energy.max((mf_energy(s, &p) - e0).abs() / (p.j * p.t_end));
            Ok(ControlFlow::Continue(()))
        };
        if let Err(e) = integrate_with(&state, &p, Recording::EnergyOnly, &mut [&mut watch as &mut dyn Observer]) {
            return (false, e.to_string());
        }
    }
    (
        norm < 1e-8 && energy < 1e-8,
        format!("norm drift {norm:.2e}, energy drift {energy:.2e} per unit Jt"),
    )
}

fn criterion_7() -> Result<Outcome, tfim_lightcone::Error> {
    let mut asym = 0.0f64;
    for order in [Order::First, Order::Second] {
        let p = params(15, 0.6, order, 30.0);
        let origin = SiteIndex::new(7, 7);
        let rec = integrate(&build_perturbed_state(&p, origin), &p, &mut [])?;
        let reference = homogeneous_reference(&p)?;
        for (snap, (_, r)) in rec.snapshots.iter().zip(&reference) {
            asym = asym.max(d4_asymmetry(&delta(snap, *r), 15, origin));
        }
    }

    let p = params(21, 0.6, Order::First, 120.0);
    let options = |origin| LightconeOptions {
        origin,
        stop_when_covered: false,
        ..Default::default()
    };
    let a = run_lightcone(&p, &options(SiteIndex::ORIGIN), &mut [])?;
    let b = run_lightcone(&p, &options(SiteIndex::new(13, 4)), &mut [])?;
    let translation = map_difference(&a.maps[0], &b.maps[0], (13, 4));
    let sample_dt = p.dt * p.sample_interval as f64;

    let mut uniform = 0.0f64;
    let mut rng = rng(11);
    for order in [Order::First, Order::Second] {
        let p = params(5, 0.6, order, 0.0);
        let mut state = SystemState::product(SpinField::uniform(5, random_unit(&mut rng)), order);
        let mut rk = Rk4::new(&state);
        for n in 1..=500 {
            rk.step(&mut state, &p, n)?;
            uniform = uniform.max(inhomogeneity(&state.spins));
            if let Some(c) = &state.correlators {
                uniform = uniform.max(correlator_inhomogeneity(c));
            }
        }
    }

    let pass = asym <= 1e-10 && translation.is_some_and(|d| d <= sample_dt) && uniform <= 1e-12;
    let translation = match translation {
        Some(d) => format!("{d:.2e}"),
        None => "arrival status differs".into(),
    };
    Ok((
        pass,
        format!("D4 asymmetry {asym:.2e}, translated map difference {translation}, uniformity {uniform:.2e}"),
    ))
}

fn criterion_8() -> Result<Outcome, tfim_lightcone::Error> {
    let mut rng = rng(8);
    let mut reduction = 0.0f64;
    for _ in 0..20 {
        let spins = random_spins(6, &mut rng);
        let p1 = params(6, 0.6, Order::First, 1.0);
        let p2 = ModelParams { order: Order::Second, ..p1.clone() };
        let d1 = rhs_order1(&SystemState::product(spins.clone(), Order::First), &p1)?;
        let d2 = rhs_order2(&SystemState::product(spins, Order::Second), &p2)?;
        for (a, b) in d1.spins.iter().zip(&d2.spins) {
            for k in 0..3 {
                reduction = reduction.max((a[k] - b[k]).abs());
            }
        }
    }
    let mut stationary = 0.0f64;
    for order in [Order::First, Order::Second] {
        let p = params(7, 0.0, order, 1.0);
        let d = rhs_order1_or_2(&build_ordered_state(&p), &p)?;
        stationary = stationary.max(d.max_abs());
    }
    Ok((
        reduction <= 1e-14 && stationary == 0.0,
        format!("spin rate difference {reduction:.1e} (rounding), h = 0 rate {stationary:e}"),
    ))
}

fn rhs_order1_or_2(
    state: &SystemState,
    p: &ModelParams,
) -> tfim_lightcone::Result<tfim_lightcone::dynamics::DerivativeField> {
    match p.order {
        Order::First => rhs_order1(state, p),
        Order::Second => rhs_order2(state, p),
    }
}

fn criterion_9() -> Outcome {
    let sx_at_one = |dt: f64| -> Result<f64, String> {
        let p = ModelParams {
            dt,
            ..params(3, 0.6, Order::First, 1.0)
        };
        let rec = integrate(&build_ordered_state(&p), &p, &mut []).map_err(|e| e.to_string())?;
        Ok(rec.snapshots.last().unwrap().get(SiteIndex::ORIGIN)[X])
    };
    let x: Result<Vec<f64>, String> = [0.05, 0.025, 0.0125].iter().map(|&dt| sx_at_one(dt)).collect();
    match x {
        Ok(x) => {
            let order = ((x[0] - x[1]) / (x[1] - x[2])).abs().log2();
            ((3.5..=4.5).contains(&order), format!("measured order {order:.3}"))
        }
        Err(e) => (false, e),
    }
}

fn criterion_10(cone: &Result<Vec<LightconeAnalysis>, String>) -> Outcome {
    match cone {
        Ok(a) => {
            let v: Vec<f64> = a.iter().map(|a| a.fit.velocity()).collect();
            let (lo, hi) = v
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(*x), hi.max(*x)));
            let spread = (hi - lo) / v[1];
            (
                spread < 0.05,
                format!(
                    "L={CONE_L}: v = {:.5} / {:.5} / {:.5} for eps 1e-4 / 1e-3 / 1e-2, spread {:.2}%",
                    v[0],
                    v[1],
                    v[2],
                    100.0 * spread
                ),
            )
        }
        Err(e) => (false, e.clone()),
    }
}

fn flatten(r: Result<Outcome, tfim_lightcone::Error>) -> Outcome {
    r.unwrap_or_else(|e| (false, e.to_string()))
}

fn main() {
    let start = Instant::now();
    let (first, second, cone) = thread::scope(|s| {
        let spawn_sweep = |order| {
            SWEEP
                .iter()
                .map(|&h| (h, s.spawn(move || sweep_run(h, order))))
                .collect::<Vec<_>>()
        };
        let first = spawn_sweep(Order::First);
        let second = spawn_sweep(Order::Second);
        let cone = s.spawn(cone_run);
        let join = |v: Vec<(f64, thread::ScopedJoinHandle<'_, _>)>| -> Sweep {
            v.into_iter().map(|(h, j)| (h, j.join().expect("sweep worker panicked"))).collect()
        };
        (join(first), join(second), cone.join().expect("cone worker panicked"))
    });

    let results: Vec<(&str, Outcome)> = vec![
        ("1a oracle agreement, order 1, h <= 0.3", criterion_1a()),
        ("1b oracle agreement, order 1, h >= 0.4", criterion_1b()),
        ("2  oracle agreement, order 2 vs order 1", criterion_2()),
        ("3a velocity scaling, order 1", criterion_3a(&first)),
        ("3b velocity scaling, order 2", criterion_3b(&first, &second)),
        ("4  linear front, R^2 over r in [5, 23]", criterion_4(&first)),
        ("5  metric crossover", criterion_5(&cone)),
        ("6  conservation", criterion_6()),
        ("7  symmetry", flatten(criterion_7())),
        ("8  reduction and stationarity", flatten(criterion_8())),
        ("9  integrator self-convergence", criterion_9()),
        ("10 threshold robustness", criterion_10(&cone)),
    ];

    let mut failed = 0;
    for (name, (pass, detail)) in &results {
        println!("[{}] {name}: {detail}", if *pass { "PASS" } else { "FAIL" });
        failed += usize::from(!pass);
    }
    println!(
        "{} of {} criteria passed in {:.0} s",
        results.len() - failed,
        results.len(),
        start.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
