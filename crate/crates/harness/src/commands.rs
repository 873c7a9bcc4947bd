//! The command-line operations, as library functions.

use std::fs;
use std::path::{Path, PathBuf};

use glideflow::inclusion::{classify_ambiguity, HaltReason};
use glideflow::mms::{MmsMode, MmsRun};
use glideflow::vector;
use serde::Serialize;

use crate::config::{ModelKind, RunConfig};
use crate::error::{HarnessError, Result};
use crate::output::{
    glide_star, regime_color, well_ambiguity, write_convergence_csv, write_json, write_mms_csv, write_svg,
    write_table, write_trajectory_csv, EdiJson, SvgPath, SvgScene, PALETTE,
};
use crate::study::{audit_steps, convergence_study_with, Scenario, StepAudit};

/// How a command finished, beyond plain errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success,
    /// A solver stopped at the singular set or at a source.
    Halted,
    /// An energy-dissipation audit exceeded its tolerance.
    AuditFailed,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Success => 0,
            Status::Halted => 3,
            Status::AuditFailed => 4,
        }
    }

    fn worst(self, other: Status) -> Status {
        let rank = |s: Status| match s {
            Status::Success => 0,
            Status::Halted => 1,
            Status::AuditFailed => 2,
        };
        if rank(other) > rank(self) {
            other
        } else {
            self
        }
    }
}

/// Exit code for an error: 2 for bad input, 3 for solver halts, 1 otherwise.
pub fn error_exit_code(err: &HarnessError) -> i32 {
    if err.is_halt() {
        3
    } else if err.is_validation() {
        2
    } else {
        1
    }
}

fn ensure_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))
}

fn planar(points: impl Iterator<Item = glideflow::Vector>) -> Vec<(f64, f64)> {
    points.map(|p| (p[0], if p.len() > 1 { p[1] } else { 0.0 })).collect()
}

fn base_scene(cfg: &RunConfig, scenario: &Scenario, title: String) -> SvgScene {
    let center = cfg
        .energy
        .center
        .as_ref()
        .map(|c| (c[0], c.get(1).copied().unwrap_or(0.0)))
        .unwrap_or((0.0, 0.0));
    let reach = cfg
        .initial
        .positions
        .iter()
        .map(|p| ((p[0] - center.0).powi(2) + (p.get(1).copied().unwrap_or(0.0) - center.1).powi(2)).sqrt())
        .fold(0.0, f64::max)
        * 1.2;
    let ambiguity = if cfg.energy.model == ModelKind::QuadraticWell {
        well_ambiguity(&scenario.sys, center, reach)
    } else {
        Vec::new()
    };
    SvgScene {
        title,
        paths: Vec::new(),
        glide: glide_star(&scenario.sys),
        grid_center: center,
        ambiguity,
        annotations: Vec::new(),
    }
}

fn mms_paths(run: &MmsRun, color: &'static str, label: &str) -> Vec<SvgPath> {
    (0..run.initial().len())
        .map(|i| {
            SvgPath::uniform(
                planar(run.states.iter().map(|z| z.position(i).clone())),
                color,
                if i == 0 { label.to_string() } else { String::new() },
            )
        })
        .collect()
}

fn tau_tag(tau: f64) -> String {
    format!("{tau}")
}

#[derive(Serialize)]
struct MmsRunSummary {
    tau: f64,
    steps: usize,
    mode: &'static str,
    lipschitz: f64,
    final_energy: f64,
    final_positions: Vec<Vec<f64>>,
    halted_at_step: Option<usize>,
    restarts_disagree: bool,
    audit: StepAudit,
    csv: String,
}

fn mode_name(mode: MmsMode) -> &'static str {
    match mode {
        MmsMode::Exact => "exact",
        MmsMode::QuadraticModel => "quadratic-model",
    }
}

fn positions(z: &glideflow::energy::Configuration) -> Vec<Vec<f64>> {
    z.positions().iter().map(|p| p.iter().copied().collect()).collect()
}

pub fn simulate_mms(cfg: &RunConfig, out: &Path) -> Result<Status> {
    let scenario = Scenario::from_config(cfg)?;
    ensure_dir(out)?;
    let runs = scenario.run_mms_all(&cfg.run.tau);
    let mut summaries = Vec::new();
    let mut status = Status::Success;
    let mut scene = base_scene(cfg, &scenario, format!("scheme trajectories, {}", scenario.model.name()));
    for (k, run) in runs.into_iter().enumerate() {
        let run = run?;
        let name = format!("mms_tau_{}.csv", tau_tag(run.tau));
        write_mms_csv(&out.join(&name), &run)?;
        if run.halt.is_some() {
            status = Status::Halted;
        }
        scene
            .paths
            .extend(mms_paths(&run, PALETTE[k % PALETTE.len()], &format!("tau = {}", run.tau)));
        summaries.push(MmsRunSummary {
            tau: run.tau,
            steps: run.steps.len(),
            mode: mode_name(run.mode),
            lipschitz: run.lipschitz,
            final_energy: scenario.model.value(run.final_state()),
            final_positions: positions(run.final_state()),
            halted_at_step: run.halt.map(|h| h.step),
            restarts_disagree: run.restarts_disagree(),
            audit: audit_steps(&scenario.sys, scenario.model.as_ref(), &run),
            csv: name,
        });
    }
    write_json(&out.join("mms.json"), "simulate-mms", &cfg.hash(), &summaries)?;
    write_svg(&out.join("mms.svg"), &scene)?;
    Ok(status)
}

#[derive(Serialize)]
struct InclusionSummary {
    h: f64,
    end_time: f64,
    samples: usize,
    halt_reason: &'static str,
    event_times: Vec<f64>,
    final_energy: f64,
    final_positions: Vec<Vec<f64>>,
}

pub fn simulate_inclusion(cfg: &RunConfig, out: &Path) -> Result<Status> {
    let scenario = Scenario::from_config(cfg)?;
    ensure_dir(out)?;
    let h = cfg.inclusion_step();
    let traj = scenario.integrate(h, cfg.run.halt_on_source)?;
    write_trajectory_csv(&out.join("inclusion.csv"), &traj)?;
    let summary = InclusionSummary {
        h,
        end_time: traj.end_time(),
        samples: traj.times.len(),
        halt_reason: traj.halt_reason.as_str(),
        event_times: traj.events.clone(),
        final_energy: scenario.model.value(traj.final_state()),
        final_positions: positions(traj.final_state()),
    };
    write_json(&out.join("inclusion.json"), "simulate-inclusion", &cfg.hash(), &summary)?;
    let mut scene = base_scene(cfg, &scenario, format!("inclusion trajectory, h = {h}"));
    for i in 0..scenario.initial.len() {
        scene.paths.push(SvgPath {
            points: planar(traj.states.iter().map(|z| z.position(i).clone())),
            colors: traj.regimes.iter().map(|r| regime_color(r[i].kind)).collect(),
            label: String::new(),
        });
    }
    scene.annotations = vec![
        "blue: single  red: sliding  green: crossing  orange: source branch".into(),
    ];
    write_svg(&out.join("inclusion.svg"), &scene)?;
    Ok(match traj.halt_reason {
        HaltReason::Completed => Status::Success,
        _ => Status::Halted,
    })
}

#[derive(Serialize)]
struct ConvergenceJson {
    #[serde(flatten)]
    report: crate::study::ConvergenceReport,
    audits: Vec<StepAudit>,
    edi: Vec<Option<EdiJson>>,
}

pub fn converge(cfg: &RunConfig, out: &Path) -> Result<Status> {
    let scenario = Scenario::from_config(cfg)?;
    ensure_dir(out)?;
    let study = convergence_study_with(cfg, &scenario)?;
    write_convergence_csv(&out.join("convergence.csv"), &study.report)?;
    let audits = study
        .runs
        .iter()
        .map(|r| audit_steps(&scenario.sys, scenario.model.as_ref(), r))
        .collect();
    let edi = study
        .edi
        .iter()
        .zip(&study.runs)
        .map(|(e, r)| e.as_ref().map(|e| EdiJson::new(r.tau, e, cfg.run.edi_tolerance)))
        .collect();
    let json = ConvergenceJson {
        report: study.report.clone(),
        audits,
        edi,
    };
    write_json(&out.join("convergence.json"), "converge", &cfg.hash(), &json)?;

    let mut scene = base_scene(cfg, &scenario, "convergence study".into());
    let reference_path: Vec<_> = study.times.iter().map(|&t| study.reference.at(t)).collect();
    for i in 0..scenario.initial.len() {
        scene.paths.push(SvgPath::uniform(
            planar(reference_path.iter().map(|z| z.position(i).clone())),
            "#000000",
            if i == 0 { format!("reference ({})", study.reference.label()) } else { String::new() },
        ));
    }
    for (k, run) in study.runs.iter().enumerate() {
        scene
            .paths
            .extend(mms_paths(run, PALETTE[k % PALETTE.len()], &format!("tau = {}", run.tau)));
    }
    write_svg(&out.join("convergence.svg"), &scene)?;
    Ok(if study.runs.iter().any(|r| r.halt.is_some()) {
        Status::Halted
    } else {
        Status::Success
    })
}

pub fn edi_check(cfg: &RunConfig, out: &Path) -> Result<Status> {
    let scenario = Scenario::from_config(cfg)?;
    if scenario.mode != MmsMode::Exact {
        return Err(HarnessError::invalid("run.mode", "the energy balance audit needs exact mode"));
    }
    ensure_dir(out)?;
    let mut status = Status::Success;
    let mut reports = Vec::new();
    for run in scenario.run_mms_all(&cfg.run.tau) {
        let run = run?;
        if run.halt.is_some() {
            status = status.worst(Status::Halted);
            continue;
        }
        let rep = scenario.edi_report(&run, cfg.run.edi_nodes)?;
        let json = EdiJson::new(run.tau, &rep, cfg.run.edi_tolerance);
        if !json.passed {
            log::warn!("energy balance residual {} exceeds {} at tau = {}", json.residual, json.absolute_tolerance, run.tau);
            status = status.worst(Status::AuditFailed);
        }
        reports.push(json);
    }
    let rows = reports
        .iter()
        .map(|r| {
            vec![
                r.tau.to_string(),
                r.kinetic_term.to_string(),
                r.interpolant_term.to_string(),
                r.energy_drop.to_string(),
                r.residual.to_string(),
                r.continuum_residual.to_string(),
                r.passed.to_string(),
            ]
        })
        .collect();
    write_table(
        &out.join("edi.csv"),
        &["tau", "kinetic", "interpolant", "energy_drop", "residual", "continuum_residual", "passed"],
        rows,
    )?;
    write_json(&out.join("edi.json"), "edi-check", &cfg.hash(), &reports)?;
    Ok(status)
}

#[derive(Serialize)]
struct ClassifySummary {
    field: String,
    radius: f64,
    points: usize,
    fine_cross_slip: usize,
    source: usize,
    cross_slip: usize,
    off_set: usize,
}

pub fn classify(cfg: &RunConfig, out: &Path) -> Result<Status> {
    let section = cfg
        .classify
        .as_ref()
        .ok_or_else(|| HarnessError::invalid("classify", "section required for the classify command"))?;
    cfg.validate()?;
    let sys = cfg.glide_system()?;
    if sys.dim() != 2 {
        return Err(HarnessError::invalid("glide", "classification needs a planar glide system"));
    }
    let field = cfg.force_field().expect("classify section present");
    ensure_dir(out)?;
    let radius = section.radius.unwrap_or(1.0);
    let mut counts = [0usize; 4];
    let mut rows = Vec::with_capacity(section.points);
    let mut scene = SvgScene {
        title: format!("ambiguity classes of the {} field", field.name()),
        glide: glide_star(&sys),
        ..SvgScene::default()
    };
    for k in 0..section.points {
        let angle = std::f64::consts::TAU * k as f64 / section.points as f64;
        let x = vector(&[radius * angle.cos(), radius * angle.sin()]);
        let (label, slot, color) = match classify_ambiguity(&sys, field.as_ref(), &x, section.probe, section.tolerance) {
            Ok(c) => {
                use glideflow::inclusion::AmbiguityClass as A;
                match c {
                    A::FineCrossSlip => (c.as_str(), 0, "#d62728"),
                    A::Source => (c.as_str(), 1, "#ff7f0e"),
                    A::CrossSlip => (c.as_str(), 2, "#1f77b4"),
                }
            }
            Err(_) => ("off", 3, "#7f7f7f"),
        };
        counts[slot] += 1;
        rows.push(vec![k.to_string(), angle.to_string(), x[0].to_string(), x[1].to_string(), label.to_string()]);
        let next = std::f64::consts::TAU * (k + 1) as f64 / section.points as f64;
        scene.paths.push(SvgPath::uniform(
            vec![(x[0], x[1]), (radius * next.cos(), radius * next.sin())],
            color,
            String::new(),
        ));
    }
    scene.annotations = vec!["red: fine cross-slip  orange: source  blue: cross-slip".into()];
    write_table(&out.join("classify.csv"), &["index", "angle", "x0", "x1", "class"], rows)?;
    let summary = ClassifySummary {
        field: field.name().to_string(),
        radius,
        points: section.points,
        fine_cross_slip: counts[0],
        source: counts[1],
        cross_slip: counts[2],
        off_set: counts[3],
    };
    write_json(&out.join("classify.json"), "classify", &cfg.hash(), &summary)?;
    write_svg(&out.join("classify.svg"), &scene)?;
    Ok(Status::Success)
}

#[derive(Serialize)]
struct NormRow {
    vector: Vec<f64>,
    crystalline_norm: f64,
    dual_norm: f64,
    maximizers: Vec<usize>,
}

pub fn norms(cfg: &RunConfig, out: &Path) -> Result<Status> {
    let section = cfg
        .norms
        .as_ref()
        .ok_or_else(|| HarnessError::invalid("norms", "section required for the norms command"))?;
    cfg.validate()?;
    let sys = cfg.glide_system()?;
    ensure_dir(out)?;
    let rows: Vec<NormRow> = section
        .vectors
        .iter()
        .map(|v| {
            let x = vector(v);
            NormRow {
                vector: v.clone(),
                crystalline_norm: sys.crystalline_norm(&x),
                dual_norm: sys.dual_norm(&x),
                maximizers: sys.maximizer_set(&x).unwrap_or_default(),
            }
        })
        .collect();
    let table = rows
        .iter()
        .map(|r| {
            vec![
                r.vector.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";"),
                r.crystalline_norm.to_string(),
                r.dual_norm.to_string(),
                r.maximizers.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(";"),
            ]
        })
        .collect();
    write_table(&out.join("norms.csv"), &["vector", "norm", "dual_norm", "maximizers"], table)?;
    let directions: Vec<Vec<f64>> = sys.directions().iter().map(|g| g.iter().copied().collect()).collect();
    #[derive(Serialize)]
    struct NormsJson {
        directions: Vec<Vec<f64>>,
        rows: Vec<NormRow>,
    }
    write_json(&out.join("norms.json"), "norms", &cfg.hash(), NormsJson { directions, rows })?;
    Ok(Status::Success)
}

/// Resolves the output directory: the command-line flag wins over the config.
pub fn output_dir(cfg: &RunConfig, flag: Option<PathBuf>) -> PathBuf {
    flag.unwrap_or_else(|| cfg.run.output_dir.clone())
}
