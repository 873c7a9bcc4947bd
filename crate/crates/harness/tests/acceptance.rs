//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::f64::consts::{LN_2, TAU};
use std::io::Write;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use glideflow::edi::{continuum_edi_residual, directional_slope_estimate, metric_derivative, psi, slope, SLOPE_PROBE};
use glideflow::energy::{
    fd_gradient, ConstantEnergy, Configuration, EnergyModel, ExampleField, QuadraticWell, SaddleEnergy, ScrewEnergy,
    ScrewEnergyParams,
};
use glideflow::glide::GlideSystem;
use glideflow::inclusion::{classify_ambiguity, AmbiguityClass};
use glideflow::mms::MmsRun;
use glideflow::simplex::{minimize, LpOutcome};
use glideflow::{vector, Vector};
use glideflow_harness::config::scenarios;
use glideflow_harness::study::{
    audit_steps, convergence_study, sample_times, sup_distance, Scenario,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Position and velocity of a curve at time `t`.
type Curve = Box<dyn Fn(f64) -> (Vector, Vector)>;

type Criterion = (u32, &'static str, fn() -> Outcome, Option<u64>);

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn unit(rng: &mut ChaCha8Rng, dim: usize) -> Vector {
    loop {
        let v = Vector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0));
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

fn random_planar_system(rng: &mut ChaCha8Rng) -> GlideSystem {
    loop {
        let pairs = rng.gen_range(2..=4);
        let dirs: Vec<Vector> = (0..pairs)
            .map(|_| {
                let a: f64 = rng.gen_range(0.0..std::f64::consts::PI);
                vector(&[a.cos(), a.sin()])
            })
            .collect();
        if let Ok(sys) = GlideSystem::new(&dirs, 2, 1e-9) {
            if sys.len() <= 8 {
                return sys;
            }
        }
    }
}

fn random_spatial_system(rng: &mut ChaCha8Rng) -> GlideSystem {
    loop {
        let pairs = rng.gen_range(3..=4);
        let dirs: Vec<Vector> = (0..pairs).map(|_| unit(rng, 3)).collect();
        if let Ok(sys) = GlideSystem::new(&dirs, 3, 1e-9) {
            return sys;
        }
    }
}

/// Outward facet normals `n` of `co G`, scaled so `n·g = 1` on the facet.
fn facets(sys: &GlideSystem) -> Vec<Vector> {
    let g = sys.directions();
    let d = sys.dim();
    let mut out: Vec<Vector> = Vec::new();
    let mut subset: Vec<usize> = (0..d).collect();
    loop {
        let m = nalgebra::DMatrix::from_fn(d, d, |r, c| g[subset[r]][c]);
        if let Some(n) = m.lu().solve(&Vector::from_element(d, 1.0)) {
            let supporting = g.iter().all(|v| n.dot(v) <= 1.0 + 1e-9);
            if supporting && out.iter().all(|o| (o - &n).norm() > 1e-9) {
                out.push(n);
            }
        }
        // next d-subset in lexicographic order
        let mut k = d;
        loop {
            if k == 0 {
                return out;
            }
            k -= 1;
            if subset[k] < g.len() - d + k {
                subset[k] += 1;
                for j in k + 1..d {
                    subset[j] = subset[j - 1] + 1;
                }
                break;
            }
        }
    }
}

fn facet_norm(facets: &[Vector], x: &Vector) -> f64 {
    facets.iter().map(|n| n.dot(x)).fold(0.0, f64::max)
}

/// `max ξ·y` over `{y : n·y ≤ 1}` as a linear program in standard form.
fn lp_dual_norm(facets: &[Vector], xi: &Vector) -> f64 {
    let d = xi.len();
    let m = facets.len();
    let cols = 2 * d + m;
    let mut c = vec![0.0; cols];
    for k in 0..d {
        c[k] = -xi[k];
        c[d + k] = xi[k];
    }
    let a: Vec<Vec<f64>> = facets
        .iter()
        .enumerate()
        .map(|(r, n)| {
            let mut row = vec![0.0; cols];
            for k in 0..d {
                row[k] = n[k];
                row[d + k] = -n[k];
            }
            row[2 * d + r] = 1.0;
            row
        })
        .collect();
    match minimize(&c, &a, &vec![1.0; m]) {
        LpOutcome::Optimal { value, .. } => -value,
        _ => f64::NAN,
    }
}

fn criterion_1() -> Outcome {
    let mut r = rng(1);
    let mut systems = vec![
        ("square", GlideSystem::square()),
        ("hexagonal", GlideSystem::hexagonal()),
    ];
    for _ in 0..3 {
        systems.push(("random planar", random_planar_system(&mut r)));
    }
    for _ in 0..3 {
        systems.push(("random spatial", random_spatial_system(&mut r)));
    }
    let mut worst: f64 = 0.0;
    let mut worst_at = "";
    for (name, sys) in &systems {
        let f = facets(sys);
        for _ in 0..200 {
            let x = unit(&mut r, sys.dim()) * r.gen_range(0.01..10.0);
            let mut errs = vec![
                (sys.crystalline_norm(&x) - facet_norm(&f, &x)).abs(),
                (sys.dual_norm(&x) - lp_dual_norm(&f, &x)).abs(),
            ];
            if sys.dim() == 2 {
                errs.push((sys.crystalline_norm(&x) - sys.crystalline_norm_lp(&x)).abs());
            }
            for e in errs {
                let e = if e.is_nan() { f64::INFINITY } else { e };
                if e > worst {
                    worst = e;
                    worst_at = name;
                }
            }
        }
    }
    outcome(
        worst <= 1e-8,
        format!("{} systems x 200 vectors, max deviation {worst:.2e} ({worst_at})", systems.len()),
    )
}

fn well_closed_form(t: f64) -> Vector {
    if t <= LN_2 {
        vector(&[-2.0 * (-t).exp(), -1.0])
    } else {
        let x = -(-(t - LN_2) / 2.0).exp();
        vector(&[x, x])
    }
}

fn criterion_2() -> Outcome {
    let cfg = scenarios::quadratic_well();
    let scenario = Scenario::from_config(&cfg).unwrap();
    let traj = scenario.integrate(1e-3, false).unwrap();
    let incl = traj
        .times
        .iter()
        .zip(&traj.states)
        .map(|(t, z)| (z.position(0) - well_closed_form(*t)).norm())
        .fold(0.0, f64::max);
    let run = scenario.run_mms(1e-3).unwrap();
    let closed = |t: f64| Configuration::unsigned(vec![well_closed_form(t)]).unwrap();
    let mms = sup_distance(
        &scenario.sys,
        &|t| run.piecewise_constant(t).clone(),
        &closed,
        &sample_times(cfg.run.end_time, cfg.run.samples),
    )
    .unwrap();
    outcome(
        incl <= 5e-3 && mms <= 2e-2,
        format!("inclusion sup error {incl:.2e} (<= 5e-3), scheme sup distance {mms:.2e} (<= 2e-2)"),
    )
}

fn criterion_3() -> Outcome {
    let cfg = scenarios::quadratic_well();
    let study = convergence_study(&cfg).unwrap();
    let r = &study.report;
    let last = *r.sup_distances.last().unwrap();
    let seq: Vec<String> = r.sup_distances.iter().map(|s| format!("{s:.3e}")).collect();
    outcome(
        r.strictly_decreasing() && last <= 1e-2,
        format!("tau {:?}: sup distances [{}] vs {} reference", r.taus, seq.join(", "), r.reference),
    )
}

fn edi_case(cfg: &glideflow_harness::RunConfig, tau: f64) -> (f64, f64, bool) {
    let scenario = Scenario::from_config(cfg).unwrap();
    let run = scenario.run_mms(tau).unwrap();
    let rep = scenario.edi_report(&run, 8).unwrap();
    (rep.residual, rep.tolerance(1e-5), rep.passes(1e-5) && !rep.inequality_only)
}

fn criterion_4() -> Outcome {
    let (r1, t1, p1) = edi_case(&scenarios::quadratic_well(), 0.01);
    let (r2, t2, p2) = edi_case(&scenarios::two_dislocations(), 0.01);
    outcome(
        p1 && p2,
        format!("well residual {r1:.2e} (tol {t1:.2e}), two-dislocation residual {r2:.2e} (tol {t2:.2e})"),
    )
}

fn criterion_5() -> Outcome {
    let cfg = scenarios::quadratic_well();
    let scenario = Scenario::from_config(&cfg).unwrap();
    let times: Vec<f64> = (0..=1000).map(|j| cfg.run.end_time * j as f64 / 1000.0).collect();
    let states: Vec<Configuration> = times
        .iter()
        .map(|&t| Configuration::unsigned(vec![well_closed_form(t)]).unwrap())
        .collect();
    let exact = continuum_edi_residual(&scenario.sys, scenario.model.as_ref(), &times, &states).unwrap();
    let finest = *cfg.run.tau.last().unwrap();
    let run = scenario.run_mms(finest).unwrap();
    let run_times: Vec<f64> = (0..run.states.len()).map(|k| run.time(k)).collect();
    let scheme = continuum_edi_residual(&scenario.sys, scenario.model.as_ref(), &run_times, &run.states).unwrap();
    outcome(
        exact.abs() <= 2e-3 && scheme <= 5e-3,
        format!("closed-form curve {exact:.2e} (|.| <= 2e-3), scheme at tau = {finest}: {scheme:.2e} (<= 5e-3)"),
    )
}

fn criterion_6() -> Outcome {
    let sys = GlideSystem::square();
    let mut misses = Vec::new();
    for k in 0..360 {
        let a = TAU * k as f64 / 360.0;
        let x = vector(&[a.cos(), a.sin()]);
        // quarter from the exact angle: open arcs (90°, 180°) and (270°, 360°)
        let want = if k > 90 && k < 180 {
            AmbiguityClass::FineCrossSlip
        } else if k > 270 {
            AmbiguityClass::Source
        } else {
            AmbiguityClass::CrossSlip
        };
        match classify_ambiguity(&sys, &ExampleField, &x, 1e-6, 1e-8) {
            Ok(c) if c == want => {}
            _ => misses.push(k),
        }
    }
    let at_endpoints = misses.iter().all(|k| k % 90 == 0);
    outcome(
        misses.len() <= 2 && at_endpoints,
        format!("360 points, {} misclassified at degrees {:?}", misses.len(), misses),
    )
}

fn bundled_runs() -> Vec<(Scenario, Vec<MmsRun>)> {
    [scenarios::quadratic_well(), scenarios::two_dislocations()]
        .iter()
        .map(|cfg| {
            let scenario = Scenario::from_config(cfg).unwrap();
            let runs = scenario
                .run_mms_all(&cfg.run.tau)
                .into_iter()
                .map(|r| r.unwrap())
                .collect();
            (scenario, runs)
        })
        .collect()
}

fn criterion_7() -> Outcome {
    // metric derivative of polynomial curves
    let curves: Vec<Curve> = vec![
        Box::new(|t| (vector(&[t + t * t, 1.0 - 2.0 * t.powi(3)]), vector(&[1.0 + 2.0 * t, -6.0 * t * t]))),
        Box::new(|t| (vector(&[3.0 * t - t * t, 0.5 * t]), vector(&[3.0 - 2.0 * t, 0.5]))),
        Box::new(|t| (vector(&[-t.powi(3), t * t + t]), vector(&[-3.0 * t * t, 2.0 * t + 1.0]))),
    ];
    let mut ratio_err: f64 = 0.0;
    for sys in [GlideSystem::square(), GlideSystem::hexagonal(), GlideSystem::regular(4)] {
        for c in &curves {
            for t in [0.2, 0.5, 0.9] {
                let path = |s: f64| Configuration::unsigned(vec![c(s).0]).unwrap();
                let md = metric_derivative(&sys, &path, t, 1e-5).unwrap();
                let p = psi(&sys, &[c(t).1]);
                ratio_err = ratio_err.max((md * md / (2.0 * p) - 1.0).abs());
            }
        }
    }

    // slope equality on smooth energies
    let mut r = rng(7);
    let screw = ScrewEnergy::new(ScrewEnergyParams::new(0.1, vector(&[0.0, 0.0]), 1.0, 5.0).unwrap()).unwrap();
    let well = QuadraticWell::new(vector(&[0.2, -0.1]));
    let saddle = SaddleEnergy::new(2.0).unwrap();
    let models: [&dyn EnergyModel; 3] = [&well, &saddle, &screw];
    let mut slope_err: f64 = 0.0;
    for sys in [GlideSystem::square(), GlideSystem::hexagonal()] {
        for model in models {
            for _ in 0..20 {
                let z = Configuration::new(
                    (0..3).map(|_| vector(&[r.gen_range(-1.2..1.2), r.gen_range(-1.2..1.2)])).collect(),
                    vec![1, -1, 1],
                )
                .unwrap();
                let exact = slope(&sys, model, &z);
                if exact < 1e-6 {
                    continue;
                }
                let est = directional_slope_estimate(&sys, model, &z, SLOPE_PROBE);
                slope_err = slope_err.max((est - exact).abs() / exact);
            }
        }
    }

    // step bounds on every bundled run
    let mut ratio: f64 = 0.0;
    let mut slack = f64::INFINITY;
    let mut steps = 0;
    for (scenario, runs) in bundled_runs() {
        for run in &runs {
            let audit = audit_steps(&scenario.sys, scenario.model.as_ref(), run);
            ratio = ratio.max(audit.max_bound_ratio);
            slack = slack.min(audit.min_slope_slack);
            steps += run.steps.len();
        }
    }
    outcome(
        ratio_err <= 0.01 && slope_err <= 0.02 && ratio <= 1.0 && slack >= -1e-8,
        format!(
            "metric-derivative ratio error {ratio_err:.1e}, slope error {slope_err:.1e}, \
             max D/(2L tau) {ratio:.3} and min slope slack {slack:.1e} over {steps} steps"
        ),
    )
}

fn criterion_8() -> Outcome {
    let mut r = rng(8);
    let screw = ScrewEnergy::new(ScrewEnergyParams::new(0.05, vector(&[0.0, 0.0]), 1.0, 10.0).unwrap()).unwrap();
    let well = QuadraticWell::new(vector(&[0.0, 0.0]));
    let saddle = SaddleEnergy::new(2.0).unwrap();
    let constant = ConstantEnergy { level: 1.5 };
    let models: [&dyn EnergyModel; 4] = [&screw, &well, &saddle, &constant];
    let mut worst: f64 = 0.0;
    for model in models {
        for _ in 0..50 {
            let z = Configuration::new(
                (0..3).map(|_| vector(&[r.gen_range(-1.5..1.5), r.gen_range(-1.5..1.5)])).collect(),
                vec![1, 1, -1],
            )
            .unwrap();
            let exact = model.gradient(&z);
            let approx = fd_gradient(model, &z, 1e-5);
            let num: f64 = exact.iter().zip(&approx).map(|(a, b)| (a - b).norm_squared()).sum::<f64>().sqrt();
            let den: f64 = exact.iter().map(|a| a.norm_squared()).sum::<f64>().sqrt();
            worst = worst.max(if den > 0.0 { num / den } else { num });
        }
    }
    outcome(worst <= 1e-6, format!("4 energies x 50 configurations, max relative error {worst:.2e}"))
}

fn fcc() -> GlideSystem {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    GlideSystem::from_rows(
        &[
            vec![s, s, 0.0],
            vec![s, -s, 0.0],
            vec![s, 0.0, s],
            vec![s, 0.0, -s],
            vec![0.0, s, s],
            vec![0.0, s, -s],
        ],
        1e-9,
    )
    .unwrap()
}

fn criterion_9() -> Outcome {
    let mut r = rng(9);
    let systems = [
        GlideSystem::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]], 1e-9).unwrap(),
        fcc(),
    ];
    let mut dual_err: f64 = 0.0;
    let mut overshoot: f64 = 0.0;
    let mut mismatches = 0;
    for sys in &systems {
        let g = sys.directions();
        // points of the unit ball: random vertex pulled towards a random convex combination
        let samples: Vec<Vector> = (0..10_000)
            .map(|_| {
                let w: Vec<f64> = (0..g.len()).map(|_| r.gen_range(0.0f64..1.0).powi(4)).collect();
                let total: f64 = w.iter().sum();
                let mix = g.iter().zip(&w).fold(Vector::zeros(3), |acc, (v, wk)| acc + v * (wk / total));
                let vertex = &g[r.gen_range(0..g.len())];
                let s = r.gen_range(0.0f64..1.0).powi(3);
                vertex * (1.0 - s) + mix * s
            })
            .map(|y| {
                let n = sys.crystalline_norm(&y);
                (y, n)
            })
            .filter(|(_, n)| *n > 1e-9)
            .map(|(y, n)| y / n)
            .collect();
        for _ in 0..20 {
            let x = unit(&mut r, 3) * r.gen_range(0.1..3.0);
            let best = samples.iter().map(|y| x.dot(y)).fold(f64::NEG_INFINITY, f64::max);
            let dn = sys.dual_norm(&x);
            dual_err = dual_err.max((dn - best) / x.norm());
            overshoot = overshoot.max(best - dn);
        }
        for _ in 0..1000 {
            let xi = unit(&mut r, 3) * r.gen_range(0.1..3.0);
            let u = &xi / xi.norm();
            let nearest = (0..g.len())
                .min_by(|&a, &b| (&g[a] - &u).norm().total_cmp(&(&g[b] - &u).norm()))
                .unwrap();
            let cones: Vec<usize> = (0..g.len()).filter(|&k| sys.cone_contains(k, &xi)).collect();
            let maxi = sys.maximizer_set(&xi).unwrap();
            if cones != vec![nearest] || maxi != vec![nearest] {
                mismatches += 1;
            }
        }
    }
    outcome(
        dual_err <= 1e-3 && overshoot <= 1e-9 && mismatches == 0,
        format!(
            "sampled dual-norm gap {dual_err:.1e} (overshoot {overshoot:.1e}), {mismatches} cone/Voronoi mismatches in 2000 forces"
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        (1, "norm oracles", criterion_1, Some(5)),
        (2, "closed-form glide and slide", criterion_2, Some(10)),
        (3, "convergence in tau", criterion_3, Some(30)),
        (4, "discrete energy balance", criterion_4, Some(20)),
        (5, "continuum energy balance", criterion_5, None),
        (6, "ambiguity taxonomy", criterion_6, Some(2)),
        (7, "lemma suite", criterion_7, Some(20)),
        (8, "gradient audit", criterion_8, None),
        (9, "three-dimensional glide systems", criterion_9, None),
    ];
    let mut failed = 0;
    let mut err = std::io::stderr();
    let _ = writeln!(err, "\nacceptance criteria");
    for (id, name, check, limit) in criteria {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let in_time = limit.is_none_or(|s| elapsed < Duration::from_secs(s));
        let passed = result.passed && in_time;
        if !passed {
            failed += 1;
        }
        let budget = limit.map(|s| format!(" of {s}s")).unwrap_or_default();
        let _ = writeln!(
            err,
            "[{}] {id} {name}: {} ({:.2}s{budget})",
            if passed { "PASS" } else { "FAIL" },
            result.detail,
            elapsed.as_secs_f64()
        );
    }
    let _ = writeln!(err, "{} of 9 criteria passed\n", 9 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
