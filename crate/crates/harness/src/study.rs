//! Scheme runs, reference solutions and convergence studies.

use std::thread;

use glideflow::edi::{discrete_edi_report, step_slope_slack, EdiReport};
use glideflow::energy::{Configuration, EnergyModel};
use glideflow::glide::GlideSystem;
use glideflow::inclusion::{integrate_inclusion, GradientDrive, InclusionSettings, Trajectory};
use glideflow::mms::{run_mms, MmsMode, MmsRun, MmsSettings};
use glideflow::Vector;
use serde::Serialize;

use crate::config::{GlidePreset, ModelKind, ReferenceKind, RunConfig};
use crate::error::{HarnessError, Result};

/// Everything a run needs, built once from a config.
pub struct Scenario {
    pub sys: GlideSystem,
    pub model: Box<dyn EnergyModel>,
    pub initial: Configuration,
    pub lipschitz: f64,
    pub end_time: f64,
    pub mode: MmsMode,
}

impl Scenario {
    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let model = cfg.energy_model()?;
        let lipschitz = cfg.lipschitz(model.as_ref())?;
        Ok(Self {
            sys: cfg.glide_system()?,
            initial: cfg.configuration()?,
            model,
            lipschitz,
            end_time: cfg.run.end_time,
            mode: cfg.run.mode.into(),
        })
    }

    pub fn run_mms(&self, tau: f64) -> Result<MmsRun> {
        let settings = MmsSettings::new(self.mode, self.lipschitz);
        Ok(run_mms(&self.sys, self.model.as_ref(), &self.initial, tau, self.end_time, &settings)?)
    }

    /// Scheme runs for every `τ`, computed concurrently, in input order.
    pub fn run_mms_all(&self, taus: &[f64]) -> Vec<Result<MmsRun>> {
        thread::scope(|s| {
            let handles: Vec<_> = taus.iter().map(|&tau| s.spawn(move || self.run_mms(tau))).collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("scheme worker panicked"))
                .collect()
        })
    }

    pub fn integrate(&self, h: f64, halt_on_source: bool) -> Result<Trajectory> {
        let mut settings = InclusionSettings::new(h, self.end_time, self.lipschitz);
        settings.halt_on_source = halt_on_source;
        Ok(integrate_inclusion(
            &self.sys,
            &GradientDrive(self.model.as_ref()),
            &self.initial,
            &settings,
        )?)
    }

    pub fn edi_report(&self, run: &MmsRun, nodes: usize) -> Result<EdiReport> {
        Ok(discrete_edi_report(&self.sys, self.model.as_ref(), run, nodes)?)
    }
}

/// Exact solution for a quadratic well with the square glide system.
///
/// Each particle's offset from the centre first shrinks along its larger
/// component at unit rate until both components have equal size, then
/// slides along the diagonal with both components decaying at rate ½.
#[derive(Debug, Clone)]
pub struct WellSolution {
    center: Vector,
    initial: Configuration,
}

impl WellSolution {
    pub fn new(center: Vector, initial: Configuration) -> Self {
        Self { center, initial }
    }

    pub fn at(&self, t: f64) -> Configuration {
        let positions = self
            .initial
            .positions()
            .iter()
            .map(|p| {
                let u = p - &self.center;
                &self.center + well_offset(&u, t)
            })
            .collect();
        self.initial.with_positions(positions)
    }

    /// Time at which particle `i` reaches the diagonal, if it ever does.
    pub fn switch_time(&self, i: usize) -> Option<f64> {
        let u = self.initial.position(i) - &self.center;
        let (a, b) = (u[0].abs().max(u[1].abs()), u[0].abs().min(u[1].abs()));
        (b > 0.0).then(|| (a / b).ln())
    }
}

fn well_offset(u: &Vector, t: f64) -> Vector {
    let big = if u[0].abs() >= u[1].abs() { 0 } else { 1 };
    let small = 1 - big;
    let (a, b) = (u[big].abs(), u[small].abs());
    let mut out = u.clone();
    if b == 0.0 {
        out[big] = u[big] * (-t).exp();
        return out;
    }
    let switch = (a / b).ln();
    if t <= switch {
        out[big] = u[big] * (-t).exp();
    } else {
        let m = b * (-(t - switch) / 2.0).exp();
        out[big] = m * u[big].signum();
        out[small] = m * u[small].signum();
    }
    out
}

/// Comparison curve for a study.
pub enum Reference {
    ClosedForm(WellSolution),
    Inclusion(Trajectory),
}

impl Reference {
    pub fn at(&self, t: f64) -> Configuration {
        match self {
            Reference::ClosedForm(w) => w.at(t),
            Reference::Inclusion(tr) => tr.at(t),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Reference::ClosedForm(_) => "closed-form",
            Reference::Inclusion(_) => "inclusion",
        }
    }
}

/// Whether the closed-form well solution describes the configured dynamics.
pub fn closed_form_available(cfg: &RunConfig) -> bool {
    cfg.energy.model == ModelKind::QuadraticWell
        && cfg.glide.preset == GlidePreset::Square
        && cfg.initial.positions.iter().all(|p| p.len() == 2)
}

pub fn build_reference(cfg: &RunConfig, scenario: &Scenario) -> Result<Reference> {
    let closed = closed_form_available(cfg);
    match cfg.reference_kind() {
        ReferenceKind::ClosedForm if !closed => Err(HarnessError::invalid(
            "reference.kind",
            "no closed form for this energy and glide system",
        )),
        ReferenceKind::ClosedForm | ReferenceKind::Auto if closed => {
            let center = cfg
                .energy
                .center
                .as_ref()
                .map(|c| glideflow::vector(c))
                .unwrap_or_else(|| Vector::zeros(2));
            Ok(Reference::ClosedForm(WellSolution::new(center, scenario.initial.clone())))
        }
        _ => Ok(Reference::Inclusion(scenario.integrate(cfg.inclusion_step(), false)?)),
    }
}

/// `n` uniform times covering `[0, end]`.
pub fn sample_times(end: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    (0..n).map(|j| end * j as f64 / (n - 1) as f64).collect()
}

/// `max_t D̂(a(t), b(t))` over the sample times.
pub fn sup_distance(
    sys: &GlideSystem,
    a: &dyn Fn(f64) -> Configuration,
    b: &dyn Fn(f64) -> Configuration,
    times: &[f64],
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for &t in times {
        let (x, y) = (a(t), b(t));
        worst = worst.max(sys.metric_distance_config(x.positions(), y.positions())?);
    }
    Ok(worst)
}

/// Lemma-style step audits over a finished run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepAudit {
    /// Largest `D / (2Lτ)`; at most one when the amplitude bound holds.
    pub max_bound_ratio: f64,
    /// Smallest `D/τ − |∂E|(Z^{k+1})`.
    pub min_slope_slack: f64,
}

pub fn audit_steps(sys: &GlideSystem, model: &dyn EnergyModel, run: &MmsRun) -> StepAudit {
    let mut ratio: f64 = 0.0;
    let mut slack = f64::INFINITY;
    for (k, rec) in run.steps.iter().enumerate() {
        ratio = ratio.max(rec.distance() / (2.0 * run.lipschitz * run.tau));
        let s = step_slope_slack(sys, model, &run.states[k + 1], &rec.directions, &rec.amplitudes, run.tau);
        slack = slack.min(s);
    }
    StepAudit {
        max_bound_ratio: ratio,
        min_slope_slack: slack,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub reference: String,
    pub taus: Vec<f64>,
    pub sup_distances: Vec<f64>,
    /// `log(e_k / e_{k+1}) / log(τ_k / τ_{k+1})` for successive pairs.
    pub observed_orders: Vec<f64>,
    pub edi_residuals: Vec<Option<f64>>,
    pub lipschitz: f64,
    pub sample_count: usize,
}

impl ConvergenceReport {
    pub fn strictly_decreasing(&self) -> bool {
        self.sup_distances.windows(2).all(|w| w[1] < w[0])
    }
}

pub struct StudyOutput {
    pub report: ConvergenceReport,
    pub runs: Vec<MmsRun>,
    pub edi: Vec<Option<EdiReport>>,
    pub reference: Reference,
    pub times: Vec<f64>,
}

/// Runs the scheme for every configured `τ` and compares with the reference.
pub fn convergence_study(cfg: &RunConfig) -> Result<StudyOutput> {
    let scenario = Scenario::from_config(cfg)?;
    convergence_study_with(cfg, &scenario)
}

pub fn convergence_study_with(cfg: &RunConfig, scenario: &Scenario) -> Result<StudyOutput> {
    let taus = cfg.run.tau.clone();
    let times = sample_times(cfg.run.end_time, cfg.run.samples);
    let nodes = cfg.run.edi_nodes;
    let exact = scenario.mode == MmsMode::Exact;
    let (runs, edi) = thread::scope(|s| {
        let handles: Vec<_> = taus
            .iter()
            .map(|&tau| {
                s.spawn(move || -> Result<(MmsRun, Option<EdiReport>)> {
                    let run = scenario.run_mms(tau)?;
                    let edi = if exact && run.halt.is_none() {
                        Some(scenario.edi_report(&run, nodes)?)
                    } else {
                        None
                    };
                    Ok((run, edi))
                })
            })
            .collect();
        let mut runs = Vec::new();
        let mut edi = Vec::new();
        for h in handles {
            let (r, e) = h.join().expect("study worker panicked")?;
            runs.push(r);
            edi.push(e);
        }
        Ok::<_, HarnessError>((runs, edi))
    })?;
    let reference = build_reference(cfg, scenario)?;
    let mut sups = Vec::with_capacity(runs.len());
    for run in &runs {
        let sup = sup_distance(
            &scenario.sys,
            &|t| run.piecewise_constant(t).clone(),
            &|t| reference.at(t),
            &times,
        )?;
        sups.push(sup);
    }
    let orders = sups
        .windows(2)
        .zip(taus.windows(2))
        .map(|(e, t)| (e[0] / e[1]).ln() / (t[0] / t[1]).ln())
        .collect();
    let report = ConvergenceReport {
        reference: reference.label().to_string(),
        taus,
        sup_distances: sups,
        observed_orders: orders,
        edi_residuals: edi.iter().map(|e| e.as_ref().map(|r| r.residual)).collect(),
        lipschitz: scenario.lipschitz,
        sample_count: times.len(),
    };
    Ok(StudyOutput {
        report,
        runs,
        edi,
        reference,
        times,
    })
}
