//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Every export returns a JSON string. The `*_json` functions hold the logic
//! and are tested natively.

use std::f64::consts::TAU;

use glideflow::energy::{estimate_lipschitz, Configuration, ExampleField, QuadraticWell, LIPSCHITZ_SAMPLES};
use glideflow::glide::GlideSystem;
use glideflow::inclusion::{classify_ambiguity, integrate_inclusion, GradientDrive, InclusionSettings};
use glideflow::mms::{run_mms, MmsMode, MmsSettings};
use glideflow::vector;
use serde::Serialize;
use wasm_bindgen::prelude::*;

type Point = [f64; 2];

fn system(pairs: u32) -> Result<GlideSystem, String> {
    match pairs {
        2 => Ok(GlideSystem::square()),
        3 => Ok(GlideSystem::hexagonal()),
        4..=8 => Ok(GlideSystem::regular(pairs as usize)),
        _ => Err(format!("pairs must lie in 2..=8, got {pairs}")),
    }
}

fn point(v: &glideflow::Vector) -> Point {
    [v[0], v[1]]
}

#[derive(Serialize)]
struct UnitBall {
    directions: Vec<Point>,
    /// Vertices of the dual unit ball, one per edge of the primal ball.
    dual_vertices: Vec<Point>,
}

pub fn unit_ball_json(pairs: u32) -> Result<String, String> {
    let sys = system(pairs)?;
    let g = sys.directions();
    let dual_vertices = (0..g.len())
        .map(|k| {
            let (a, b) = (&g[k], &g[(k + 1) % g.len()]);
            // n·a = n·b = 1
            let det = a[0] * b[1] - a[1] * b[0];
            [(b[1] - a[1]) / det, (a[0] - b[0]) / det]
        })
        .collect();
    let ball = UnitBall {
        directions: g.iter().map(point).collect(),
        dual_vertices,
    };
    serde_json::to_string(&ball).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Simulation {
    lipschitz: f64,
    scheme: Vec<Point>,
    inclusion: Vec<Point>,
    energy: Vec<f64>,
    halted: bool,
}

/// Scheme and inclusion paths of one particle in the well `½|x|²`.
pub fn simulate_json(pairs: u32, x: f64, y: f64, tau: f64, end_time: f64) -> Result<String, String> {
    let sys = system(pairs)?;
    let model = QuadraticWell::new(vector(&[0.0, 0.0]));
    let z0 = Configuration::unsigned(vec![vector(&[x, y])]).map_err(|e| e.to_string())?;
    let lipschitz = estimate_lipschitz(&model, &z0, 1.0, LIPSCHITZ_SAMPLES, 0).max(1e-3);
    let settings = MmsSettings::new(MmsMode::Exact, lipschitz);
    let run = run_mms(&sys, &model, &z0, tau, end_time, &settings).map_err(|e| e.to_string())?;
    let drive = GradientDrive(&model);
    let incl = InclusionSettings::new(tau / 10.0, end_time, lipschitz);
    let traj = integrate_inclusion(&sys, &drive, &z0, &incl).map_err(|e| e.to_string())?;
    let sim = Simulation {
        lipschitz,
        scheme: run.states.iter().map(|z| point(z.position(0))).collect(),
        inclusion: traj.states.iter().map(|z| point(z.position(0))).collect(),
        energy: run.states.iter().map(|z| 0.5 * z.position(0).norm_squared()).collect(),
        halted: run.halt.is_some(),
    };
    serde_json::to_string(&sim).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Classified {
    angle: f64,
    point: Point,
    class: &'static str,
}

/// Labels `points` equispaced points of the circle of `radius` for the
/// field `(1+|x|², 2)` on the square system.
pub fn classify_circle_json(points: u32, radius: f64) -> Result<String, String> {
    if points == 0 || radius.is_nan() || radius <= 0.0 {
        return Err("need at least one point and a positive radius".into());
    }
    let sys = GlideSystem::square();
    let rows: Vec<Classified> = (0..points)
        .map(|k| {
            let angle = TAU * k as f64 / points as f64;
            let x = vector(&[radius * angle.cos(), radius * angle.sin()]);
            let class = classify_ambiguity(&sys, &ExampleField, &x, 1e-6, 1e-8).map_or("off_set", |c| c.as_str());
            Classified {
                angle,
                point: point(&x),
                class,
            }
        })
        .collect();
    serde_json::to_string(&rows).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn unit_ball(pairs: u32) -> Result<String, JsValue> {
    unit_ball_json(pairs).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn simulate(pairs: u32, x: f64, y: f64, tau: f64, end_time: f64) -> Result<String, JsValue> {
    simulate_json(pairs, x, y, tau, end_time).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn classify_circle(points: u32, radius: f64) -> Result<String, JsValue> {
    classify_circle_json(points, radius).map_err(|e| JsValue::from_str(&e))
}
