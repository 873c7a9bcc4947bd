//! Minimising-movement scheme driven by the glide quasi-distance.
//!
//! One step solves
//!
//! ```text
//! Z^{k+1} ∈ argmin_X  D²(Z^k, X) / (2τ) + E(X).
//! ```
//!
//! `D` is finite only when every particle moves along a single glide ray, so
//! the minimisation reduces to choosing a direction `g_i` and an amplitude
//! `α_i ≥ 0` per particle: `x_i = z_i + α_i g_i`. The exact solver enumerates
//! every direction assignment and minimises the smooth amplitude problem on
//! the box `[0, 2Lτ]^n`, which contains every minimiser when `L` bounds `|∇E|`.

use crate::energy::{Configuration, EnergyModel};
use crate::glide::GlideSystem;
use crate::optimize::{golden_section, minimize_bounded};
use crate::{Error, Result, Vector};

/// Largest number of direction assignments the exact solver enumerates.
pub const MAX_ASSIGNMENTS: usize = 262_144;

/// Restarts whose minimal values differ by more than this are flagged.
pub const RESTART_AGREEMENT: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MmsMode {
    /// Enumerate all direction assignments, minimise amplitudes globally.
    Exact,
    /// Directions from the linearised energy, amplitudes refined by line search.
    QuadraticModel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmsSettings {
    pub mode: MmsMode,
    /// Bound on `|∇E|`; sets the amplitude box `[0, 2Lτ]`.
    pub lipschitz: f64,
    pub max_assignments: usize,
}

impl MmsSettings {
    pub fn new(mode: MmsMode, lipschitz: f64) -> Self {
        Self {
            mode,
            lipschitz,
            max_assignments: MAX_ASSIGNMENTS,
        }
    }
}

/// What one scheme step chose.
#[derive(Debug, Clone, PartialEq)]
pub struct MmsStepRecord {
    /// Glide direction index per particle.
    pub directions: Vec<usize>,
    /// Non-negative amplitude per particle.
    pub amplitudes: Vec<f64>,
    /// Attained value of `D²/(2τ) + E`.
    pub phi_value: f64,
    pub energy_after: f64,
    /// Spread of the minimal values found from different restarts.
    pub restart_spread: f64,
}

impl MmsStepRecord {
    /// `D(Z^k, Z^{k+1}) = |α|`.
    pub fn distance(&self) -> f64 {
        self.amplitudes.iter().map(|a| a * a).sum::<f64>().sqrt()
    }

    /// `D²/(2τ)`.
    pub fn kinetic(&self, tau: f64) -> f64 {
        self.distance().powi(2) / (2.0 * tau)
    }

    /// Displacement of every particle, `α_i g_i`.
    pub fn displacements(&self, sys: &GlideSystem) -> Vec<Vector> {
        self.directions
            .iter()
            .zip(&self.amplitudes)
            .map(|(&k, &a)| sys.direction(k) * a)
            .collect()
    }
}

/// Why a run stopped before the end time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmsHalt {
    pub step: usize,
    pub distance: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone)]
pub struct MmsRun {
    pub tau: f64,
    pub end_time: f64,
    pub mode: MmsMode,
    pub lipschitz: f64,
    /// `Z^0, Z^1, …, Z^K`.
    pub states: Vec<Configuration>,
    pub steps: Vec<MmsStepRecord>,
    pub halt: Option<MmsHalt>,
}

impl MmsRun {
    pub fn initial(&self) -> &Configuration {
        &self.states[0]
    }

    pub fn final_state(&self) -> &Configuration {
        self.states.last().expect("runs hold at least the initial state")
    }

    /// `Z̄_τ(t) = Z^k` for `t ∈ ((k−1)τ, kτ]`, and `Z^0` at `t = 0`.
    pub fn piecewise_constant(&self, t: f64) -> &Configuration {
        if t <= 0.0 {
            return &self.states[0];
        }
        let k = ceil_ratio(t, self.tau).min(self.states.len() - 1);
        &self.states[k]
    }

    /// Time of state `k`.
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.tau
    }

    /// Whether some step found restarts that disagree on the minimal value.
    pub fn restarts_disagree(&self) -> bool {
        self.steps.iter().any(|s| s.restart_spread > RESTART_AGREEMENT)
    }
}

/// `⌈t/τ⌉`, treating ratios within rounding of an integer as that integer.
pub fn ceil_ratio(t: f64, tau: f64) -> usize {
    let r = t / tau;
    let n = r.round();
    if (r - n).abs() <= 1e-9 * r.abs().max(1.0) {
        n as usize
    } else {
        r.ceil() as usize
    }
}

/// Number of scheme steps `⌈T/τ⌉` (at least one).
pub fn step_count(end_time: f64, tau: f64) -> usize {
    ceil_ratio(end_time, tau).max(1)
}

/// `Φ(X, Y, τ) = D²(X, Y)/(2τ) + E(Y)`, infinite off the glide rays.
pub fn phi(
    sys: &GlideSystem,
    model: &dyn EnergyModel,
    x: &Configuration,
    y: &Configuration,
    tau: f64,
) -> Result<f64> {
    let d = sys.quasi_distance_config(x.positions(), y.positions())?;
    if d.is_infinite() {
        return Ok(f64::INFINITY);
    }
    Ok(d * d / (2.0 * tau) + model.value(y))
}

fn check_step_inputs(z: &Configuration, sys: &GlideSystem, tau: f64, lipschitz: f64) -> Result<()> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::InvalidParameter(format!("time step must be positive, got {tau}")));
    }
    if !(lipschitz > 0.0) || !lipschitz.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "Lipschitz bound must be positive, got {lipschitz}"
        )));
    }
    if z.dim() != sys.dim() {
        return Err(Error::DimensionMismatch {
            expected: sys.dim(),
            found: z.dim(),
        });
    }
    Ok(())
}

fn check_clearance(model: &dyn EnergyModel, z: &Configuration) -> Result<()> {
    if let Some((distance, epsilon)) = model.singular_clearance(z) {
        if distance < epsilon {
            return Err(Error::SingularProximity { distance, epsilon });
        }
    }
    Ok(())
}

/// Amplitude problem for a fixed direction assignment.
struct RayProblem<'a> {
    sys: &'a GlideSystem,
    model: &'a dyn EnergyModel,
    z: &'a Configuration,
    dirs: &'a [usize],
    tau: f64,
}

impl RayProblem<'_> {
    fn state(&self, alpha: &[f64]) -> Configuration {
        self.z.with_positions(
            self.z
                .positions()
                .iter()
                .zip(self.dirs.iter().zip(alpha))
                .map(|(p, (&k, &a))| p + self.sys.direction(k) * a)
                .collect(),
        )
    }

    fn value(&self, alpha: &[f64]) -> f64 {
        let kinetic: f64 = alpha.iter().map(|a| a * a).sum::<f64>() / (2.0 * self.tau);
        kinetic + self.model.value(&self.state(alpha))
    }

    fn partial(&self, alpha: &[f64], i: usize) -> f64 {
        let grad = self.model.gradient(&self.state(alpha));
        alpha[i] / self.tau + self.sys.direction(self.dirs[i]).dot(&grad[i])
    }

    /// Projected coordinate descent from `start` on `[0, bound]^n`.
    fn descend(&self, start: f64, bound: f64) -> (Vec<f64>, f64) {
        let n = self.dirs.len();
        let mut alpha = vec![start.clamp(0.0, bound); n];
        let sweeps = if n == 1 { 1 } else { 200 };
        for _ in 0..sweeps {
            let mut change: f64 = 0.0;
            for i in 0..n {
                let mut trial = alpha.clone();
                let next = minimize_bounded(
                    &mut |a| {
                        trial[i] = a;
                        self.value(&trial)
                    },
                    &mut |a| {
                        let mut t = alpha.clone();
                        t[i] = a;
                        self.partial(&t, i)
                    },
                    0.0,
                    bound,
                );
                change = change.max((next - alpha[i]).abs());
                alpha[i] = next;
            }
            if change <= 1e-15 * (1.0 + bound) {
                break;
            }
        }
        let v = self.value(&alpha);
        (alpha, v)
    }
}

struct Solution {
    dirs: Vec<usize>,
    alpha: Vec<f64>,
    value: f64,
    spread: f64,
}

fn solve_exact(
    sys: &GlideSystem,
    model: &dyn EnergyModel,
    z: &Configuration,
    tau: f64,
    lipschitz: f64,
    max_assignments: usize,
) -> Result<Solution> {
    let n = z.len();
    let big_n = sys.len();
    let total = (big_n as f64).powi(n as i32);
    if total > max_assignments as f64 {
        return Err(Error::CombinatorialBlowup {
            assignments: total,
            limit: max_assignments,
        });
    }
    let bound = 2.0 * lipschitz * tau;
    let starts = [0.0, 0.5 * lipschitz * tau, lipschitz * tau];

    let mut best: Option<Solution> = None;
    let mut dirs = vec![0usize; n];
    for _ in 0..total as usize {
        let problem = RayProblem {
            sys,
            model,
            z,
            dirs: &dirs,
            tau,
        };
        let mut local: Option<(Vec<f64>, f64)> = None;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &s in &starts {
            let (alpha, v) = problem.descend(s, bound);
            lo = lo.min(v);
            hi = hi.max(v);
            if local.as_ref().is_none_or(|(_, lv)| v < *lv) {
                local = Some((alpha, v));
            }
        }
        let (alpha, value) = local.expect("at least one restart");
        // lexicographic order + strict improvement = smallest index on ties
        let improves = match &best {
            None => true,
            Some(b) => value < b.value - 1e-12 * (1.0 + b.value.abs()),
        };
        if improves {
            best = Some(Solution {
                dirs: dirs.clone(),
                alpha,
                value,
                spread: hi - lo,
            });
        }
        // odometer with particle 0 most significant
        for i in (0..n).rev() {
            dirs[i] += 1;
            if dirs[i] < big_n {
                break;
            }
            dirs[i] = 0;
        }
    }
    Ok(best.expect("at least one assignment"))
}

fn solve_quadratic_model(
    sys: &GlideSystem,
    model: &dyn EnergyModel,
    z: &Configuration,
    tau: f64,
    lipschitz: f64,
) -> Solution {
    let grad = model.gradient(z);
    let mut dirs = Vec::with_capacity(z.len());
    let mut alpha = Vec::with_capacity(z.len());
    for g in &grad {
        let force = -g;
        match sys.maximizer_set(&force) {
            Ok(ks) => {
                dirs.push(ks[0]);
                alpha.push(tau * sys.dual_norm(g));
            }
            Err(_) => {
                dirs.push(0);
                alpha.push(0.0);
            }
        }
    }
    let bound = 2.0 * lipschitz * tau;
    let problem = RayProblem {
        sys,
        model,
        z,
        dirs: &dirs,
        tau,
    };
    for a in alpha.iter_mut() {
        *a = a.min(bound);
    }
    let sweeps = if alpha.len() == 1 { 1 } else { 2 };
    for _ in 0..sweeps {
        for i in 0..alpha.len() {
            let mut trial = alpha.clone();
            let found = golden_section(
                &mut |a| {
                    trial[i] = a;
                    problem.value(&trial)
                },
                0.0,
                bound,
                1e-10,
            );
            let mut candidate = alpha.clone();
            candidate[i] = found;
            if problem.value(&candidate) < problem.value(&alpha) {
                alpha = candidate;
            }
        }
    }
    let value = problem.value(&alpha);
    Solution {
        dirs,
        alpha,
        value,
        spread: 0.0,
    }
}

fn finish(
    sys: &GlideSystem,
    model: &dyn EnergyModel,
    z: &Configuration,
    sol: Solution,
) -> (Configuration, MmsStepRecord) {
    let next = z.with_positions(
        z.positions()
            .iter()
            .zip(sol.dirs.iter().zip(&sol.alpha))
            .map(|(p, (&k, &a))| p + sys.direction(k) * a)
            .collect(),
    );
    let energy_after = model.value(&next);
    let record = MmsStepRecord {
        directions: sol.dirs,
        amplitudes: sol.alpha,
        phi_value: sol.value,
        energy_after,
        restart_spread: sol.spread,
    };
    (next, record)
}

/// One step of the scheme from `z` with time step `tau`.
pub fn mms_step(
    sys: &GlideSystem,
    model: &dyn EnergyModel,
    z: &Configuration,
    tau: f64,
    settings: &MmsSettings,
) -> Result<(Configuration, MmsStepRecord)> {
    check_step_inputs(z, sys, tau, settings.lipschitz)?;
    check_clearance(model, z)?;
    let sol = match settings.mode {
        MmsMode::Exact => solve_exact(sys, model, z, tau, settings.lipschitz, settings.max_assignments)?,
        MmsMode::QuadraticModel => solve_quadratic_model(sys, model, z, tau, settings.lipschitz),
    };
    Ok(finish(sys, model, z, sol))
}

/// De Giorgi interpolant: the exact minimiser of `Φ(Z^k, ·, δ)` for `0 < δ ≤ τ`.
pub fn de_giorgi_interpolant(
    sys: &GlideSystem,
    model: &dyn EnergyModel,
    z_k: &Configuration,
    delta: f64,
    lipschitz: f64,
) -> Result<(Configuration, MmsStepRecord)> {
    let settings = MmsSettings::new(MmsMode::Exact, lipschitz);
    mms_step(sys, model, z_k, delta, &settings)
}

/// Iterates the scheme `⌈T/τ⌉` times from `z0`.
///
/// Reaching the singular set ends the run early with [`MmsRun::halt`] set;
/// any other failure is returned together with its step index.
pub fn run_mms(
    sys: &GlideSystem,
    model: &dyn EnergyModel,
    z0: &Configuration,
    tau: f64,
    end_time: f64,
    settings: &MmsSettings,
) -> Result<MmsRun> {
    if !(end_time > 0.0) || !end_time.is_finite() {
        return Err(Error::InvalidParameter(format!("end time must be positive, got {end_time}")));
    }
    check_step_inputs(z0, sys, tau, settings.lipschitz)?;
    let count = step_count(end_time, tau);
    let mut run = MmsRun {
        tau,
        end_time,
        mode: settings.mode,
        lipschitz: settings.lipschitz,
        states: vec![z0.clone()],
        steps: Vec::with_capacity(count),
        halt: None,
    };
    for k in 0..count {
        match mms_step(sys, model, run.final_state(), tau, settings) {
            Ok((next, record)) => {
                run.states.push(next);
                run.steps.push(record);
            }
            Err(Error::SingularProximity { distance, epsilon }) => {
                run.halt = Some(MmsHalt {
                    step: k,
                    distance,
                    epsilon,
                });
                break;
            }
            Err(e) => return Err(e.at_step(k)),
        }
    }
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::{ConstantEnergy, QuadraticWell};
    use crate::vector;

    fn well() -> QuadraticWell {
        QuadraticWell::new(vector(&[0.0, 0.0]))
    }

    fn single(x: f64, y: f64) -> Configuration {
        Configuration::unsigned(vec![vector(&[x, y])]).unwrap()
    }

    #[test]
    fn phi_examples() {
        let sys = GlideSystem::square();
        let x = single(-1.0, 0.0);
        assert_eq!(phi(&sys, &well(), &x, &x, 0.1).unwrap(), 0.5);
        let diag = single(0.0, 1.0);
        assert_eq!(phi(&sys, &well(), &x, &diag, 0.1).unwrap(), f64::INFINITY);
        let (a, tau) = (0.3, 0.2);
        let y = single(-1.0 + a, 0.0);
        let expect = a * a / (2.0 * tau) + 0.5 * (-1.0f64 + a).powi(2);
        assert!((phi(&sys, &well(), &x, &y, tau).unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn exact_step_on_the_well_axis() {
        let sys = GlideSystem::square();
        let tau = 0.1;
        let settings = MmsSettings::new(MmsMode::Exact, 3.0);
        let (next, rec) = mms_step(&sys, &well(), &single(-1.0, 0.0), tau, &settings).unwrap();
        let alpha = tau / (1.0 + tau);
        assert_eq!(rec.directions, vec![0]);
        assert!((rec.amplitudes[0] - alpha).abs() < 1e-13);
        assert!((next.position(0) - vector(&[-1.0 + alpha, 0.0])).norm() < 1e-13);
        let again = phi(&sys, &well(), &single(-1.0, 0.0), &next, tau).unwrap();
        assert!((again - rec.phi_value).abs() < 1e-12);
    }

    #[test]
    fn stationary_point_does_not_move() {
        let sys = GlideSystem::square();
        let settings = MmsSettings::new(MmsMode::Exact, 1.0);
        let z = single(0.0, 0.0);
        let (next, rec) = mms_step(&sys, &well(), &z, 0.1, &settings).unwrap();
        assert_eq!(next, z);
        assert!(rec.amplitudes.iter().all(|a| *a == 0.0));
    }

    #[test]
    fn diagonal_tie_moves_along_lowest_index() {
        let sys = GlideSystem::square();
        let settings = MmsSettings::new(MmsMode::Exact, 3.0);
        let (_, rec) = mms_step(&sys, &well(), &single(-1.0, -1.0), 0.1, &settings).unwrap();
        assert_eq!(rec.directions, vec![0]);
        assert!(rec.amplitudes[0] > 0.0);
        // e2 reaches the same value
        let z = single(-1.0, -1.0);
        let along_e2 = single(-1.0, -1.0 + rec.amplitudes[0]);
        let v = phi(&sys, &well(), &z, &along_e2, 0.1).unwrap();
        assert!((v - rec.phi_value).abs() < 1e-14);
    }

    #[test]
    fn quadratic_model_matches_exact_on_the_well() {
        let sys = GlideSystem::square();
        let z = single(-2.0, -1.0);
        let exact = mms_step(&sys, &well(), &z, 0.05, &MmsSettings::new(MmsMode::Exact, 4.0)).unwrap();
        let model = mms_step(
            &sys,
            &well(),
            &z,
            0.05,
            &MmsSettings::new(MmsMode::QuadraticModel, 4.0),
        )
        .unwrap();
        assert!(model.1.phi_value >= exact.1.phi_value - 1e-15);
        assert!((model.1.phi_value - exact.1.phi_value).abs() < 1e-8);
    }

    #[test]
    fn blowup_guard() {
        let sys = GlideSystem::regular(8);
        let z = Configuration::unsigned((0..5).map(|i| vector(&[i as f64, 0.0])).collect()).unwrap();
        let err = mms_step(&sys, &well(), &z, 0.1, &MmsSettings::new(MmsMode::Exact, 1.0)).unwrap_err();
        assert!(matches!(err, Error::CombinatorialBlowup { .. }));
    }

    #[test]
    fn step_counts() {
        assert_eq!(step_count(2.0, 0.04), 50);
        assert_eq!(step_count(0.05, 0.1), 1);
        assert_eq!(step_count(1.0, 0.3), 4);
    }

    #[test]
    fn short_horizon_takes_one_step() {
        let sys = GlideSystem::square();
        let run = run_mms(
            &sys,
            &well(),
            &single(-1.0, 0.0),
            0.1,
            0.05,
            &MmsSettings::new(MmsMode::Exact, 2.0),
        )
        .unwrap();
        assert_eq!(run.steps.len(), 1);
    }

    #[test]
    fn constant_energy_freezes_the_scheme() {
        let sys = GlideSystem::square();
        let z0 = single(0.3, -0.2);
        let run = run_mms(
            &sys,
            &ConstantEnergy::default(),
            &z0,
            0.1,
            0.5,
            &MmsSettings::new(MmsMode::Exact, 1.0),
        )
        .unwrap();
        for t in [0.0, 0.05, 0.1, 0.33, 0.5] {
            assert_eq!(run.piecewise_constant(t), &z0);
        }
    }

    #[test]
    fn piecewise_constant_uses_right_endpoints() {
        let sys = GlideSystem::square();
        let run = run_mms(
            &sys,
            &well(),
            &single(-1.0, 0.0),
            0.1,
            0.3,
            &MmsSettings::new(MmsMode::Exact, 2.0),
        )
        .unwrap();
        assert_eq!(run.piecewise_constant(0.0), &run.states[0]);
        assert_eq!(run.piecewise_constant(0.05), &run.states[1]);
        assert_eq!(run.piecewise_constant(0.1), &run.states[1]);
        assert_eq!(run.piecewise_constant(0.1000001), &run.states[2]);
        assert_eq!(run.piecewise_constant(0.3), &run.states[3]);
    }

    #[test]
    fn de_giorgi_at_full_step_coincides_with_scheme() {
        let sys = GlideSystem::square();
        let z = single(-1.0, 0.0);
        let settings = MmsSettings::new(MmsMode::Exact, 2.0);
        let (a, _) = mms_step(&sys, &well(), &z, 0.1, &settings).unwrap();
        let (b, _) = de_giorgi_interpolant(&sys, &well(), &z, 0.1, 2.0).unwrap();
        assert_eq!(a, b);
        let delta = 0.037;
        let (c, _) = de_giorgi_interpolant(&sys, &well(), &z, delta, 2.0).unwrap();
        assert!((c.position(0) - vector(&[-1.0 + delta / (1.0 + delta), 0.0])).norm() < 1e-13);
    }

    #[test]
    fn invalid_inputs() {
        let sys = GlideSystem::square();
        let z = single(0.0, 0.0);
        let s = MmsSettings::new(MmsMode::Exact, 1.0);
        assert!(mms_step(&sys, &well(), &z, 0.0, &s).is_err());
        assert!(run_mms(&sys, &well(), &z, 0.1, 0.0, &s).is_err());
        let z3 = Configuration::unsigned(vec![vector(&[0.0, 0.0, 0.0])]).unwrap();
        assert!(matches!(
            mms_step(&sys, &well(), &z3, 0.1, &s),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
