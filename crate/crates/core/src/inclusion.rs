//! Explicit integration of `ż_i ∈ co P_G(−∇_i E(Z))` with Filippov sliding.
//!
//! Away from ties each particle moves with `(g·ξ) g` along its unique
//! maximising direction. On a two-way tie the switching function
//! `σ = g'·ξ − g''·ξ` decides between sliding along `{σ = 0}`, crossing into
//! one cone, or a source where both branches are admissible.

use crate::energy::{Configuration, EnergyModel, ForceField};
use crate::glide::GlideSystem;
use crate::{Error, Result, Vector};

/// Something that produces the driving force `ξ_i` on each particle.
pub trait Drive: Sync {
    fn name(&self) -> &str;

    fn force(&self, z: &Configuration, i: usize) -> Vector;

    fn forces(&self, z: &Configuration) -> Vec<Vector> {
        (0..z.len()).map(|i| self.force(z, i)).collect()
    }

    /// Energy, when the drive derives from one.
    fn energy(&self, _z: &Configuration) -> Option<f64> {
        None
    }

    fn singular_clearance(&self, _z: &Configuration) -> Option<(f64, f64)> {
        None
    }
}

/// `ξ = −∇E`.
pub struct GradientDrive<'a>(pub &'a dyn EnergyModel);

impl Drive for GradientDrive<'_> {
    fn name(&self) -> &str {
        self.0.name()
    }

    fn force(&self, z: &Configuration, i: usize) -> Vector {
        -&self.0.gradient(z)[i]
    }

    fn forces(&self, z: &Configuration) -> Vec<Vector> {
        self.0.gradient(z).into_iter().map(|g| -g).collect()
    }

    fn energy(&self, z: &Configuration) -> Option<f64> {
        Some(self.0.value(z))
    }

    fn singular_clearance(&self, z: &Configuration) -> Option<(f64, f64)> {
        self.0.singular_clearance(z)
    }
}

/// `ξ_i = F(z_i)` for a position-dependent field.
pub struct FieldDrive<'a>(pub &'a dyn ForceField);

impl Drive for FieldDrive<'_> {
    fn name(&self) -> &str {
        self.0.name()
    }

    fn force(&self, z: &Configuration, i: usize) -> Vector {
        self.0.force(z.position(i))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegimeKind {
    Rest,
    Single,
    Sliding,
    Crossing,
    SourceBranch,
}

impl RegimeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RegimeKind::Rest => "rest",
            RegimeKind::Single => "single",
            RegimeKind::Sliding => "sliding",
            RegimeKind::Crossing => "crossing",
            RegimeKind::SourceBranch => "source-branch",
        }
    }
}

/// Velocity branch chosen for one particle.
///
/// For crossing and source branches both tied directions are stored, the
/// selected one first.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityRegime {
    pub kind: RegimeKind,
    pub active: Vec<usize>,
    /// Weight of the first active direction when sliding.
    pub theta: f64,
    /// Set when three or more directions tied and only two were used.
    pub reduced: bool,
}

impl VelocityRegime {
    fn rest() -> Self {
        Self {
            kind: RegimeKind::Rest,
            active: Vec::new(),
            theta: 0.0,
            reduced: false,
        }
    }

    fn single(k: usize) -> Self {
        Self {
            kind: RegimeKind::Single,
            active: vec![k],
            theta: 1.0,
            reduced: false,
        }
    }

    /// Direction actually followed (the first active one), if not sliding or at rest.
    pub fn chosen(&self) -> Option<usize> {
        match self.kind {
            RegimeKind::Single | RegimeKind::Crossing | RegimeKind::SourceBranch => {
                self.active.first().copied()
            }
            _ => None,
        }
    }
}

/// Local behaviour at a two-way tie.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AmbiguityClass {
    /// Both branches point back to the switching surface.
    FineCrossSlip,
    /// Both branches leave the surface.
    Source,
    /// Transversal crossing.
    CrossSlip,
}

impl AmbiguityClass {
    pub fn as_str(self) -> &'static str {
        match self {
            AmbiguityClass::FineCrossSlip => "fine_cross_slip",
            AmbiguityClass::Source => "source",
            AmbiguityClass::CrossSlip => "cross_slip",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum PairRegime {
    Sliding { theta: f64 },
    /// Crossing into the cone of the first (`true`) or second direction.
    Crossing { first: bool },
    Source,
}

fn pair_regime(a1: f64, a2: f64) -> PairRegime {
    if a1 < 0.0 && a2 > 0.0 {
        PairRegime::Sliding {
            theta: (a2 / (a2 - a1)).clamp(0.0, 1.0),
        }
    } else if a1 > 0.0 && a2 < 0.0 || (a1 == 0.0 && a2 == 0.0) {
        PairRegime::Source
    } else if a1 >= 0.0 && a2 >= 0.0 {
        PairRegime::Crossing { first: true }
    } else {
        PairRegime::Crossing { first: false }
    }
}

/// `σ(Z) = (g_p − g_q)·ξ_i(Z)`.
fn switching(sys: &GlideSystem, drive: &dyn Drive, z: &Configuration, i: usize, p: usize, q: usize) -> f64 {
    let xi = drive.force(z, i);
    (sys.direction(p) - sys.direction(q)).dot(&xi)
}

/// Central-difference derivatives of `σ` along the two pure velocities,
/// moving particle `i` only.
fn switching_rates(
    sys: &GlideSystem,
    drive: &dyn Drive,
    z: &Configuration,
    i: usize,
    p: usize,
    q: usize,
    h: f64,
) -> (f64, f64) {
    let xi = drive.force(z, i);
    let rate = |k: usize| {
        let g = sys.direction(k);
        let speed = g.dot(&xi);
        let plus = switching(sys, drive, &z.moved(i, &(g * h)), i, p, q);
        let minus = switching(sys, drive, &z.moved(i, &(g * -h)), i, p, q);
        speed * (plus - minus) / (2.0 * h)
    };
    (rate(p), rate(q))
}

fn check_probe(h: f64) -> Result<()> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidParameter(format!("probe step must be positive, got {h}")));
    }
    Ok(())
}

/// Velocity of particle `i` and the branch it came from.
pub fn select_velocity(
    sys: &GlideSystem,
    drive: &dyn Drive,
    z: &Configuration,
    i: usize,
    h: f64,
) -> Result<(Vector, VelocityRegime)> {
    check_probe(h)?;
    let xi = drive.force(z, i);
    let ks = match sys.maximizer_set(&xi) {
        Ok(ks) if sys.dual_norm(&xi) > 0.0 => ks,
        _ => return Ok((Vector::zeros(sys.dim()), VelocityRegime::rest())),
    };
    let pure = |k: usize| sys.direction(k) * sys.direction(k).dot(&xi);
    if ks.len() == 1 {
        return Ok((pure(ks[0]), VelocityRegime::single(ks[0])));
    }
    let (p, q) = (ks[0], ks[1]);
    let reduced = ks.len() > 2;
    if reduced {
        log::debug!("{} tied directions at particle {i}, using the first two", ks.len());
    }
    let (a1, a2) = switching_rates(sys, drive, z, i, p, q, h);
    let (v, regime) = match pair_regime(a1, a2) {
        PairRegime::Sliding { theta } => (
            pure(p) * theta + pure(q) * (1.0 - theta),
            VelocityRegime {
                kind: RegimeKind::Sliding,
                active: vec![p, q],
                theta,
                reduced,
            },
        ),
        PairRegime::Crossing { first } => {
            let (a, b) = if first { (p, q) } else { (q, p) };
            (
                pure(a),
                VelocityRegime {
                    kind: RegimeKind::Crossing,
                    active: vec![a, b],
                    theta: 1.0,
                    reduced,
                },
            )
        }
        PairRegime::Source => (
            pure(p),
            VelocityRegime {
                kind: RegimeKind::SourceBranch,
                active: vec![p, q],
                theta: 1.0,
                reduced,
            },
        ),
    };
    Ok((v, regime))
}

/// Classifies a point of the ambiguity set of a planar field.
///
/// The two competing directions are the two largest values of `g·F(x)`;
/// `tolerance` is relative to `‖F(x)‖_*`.
pub fn classify_ambiguity(
    sys: &GlideSystem,
    field: &dyn ForceField,
    x: &Vector,
    h: f64,
    tolerance: f64,
) -> Result<AmbiguityClass> {
    check_probe(h)?;
    let f = field.force(x);
    let mut order: Vec<(usize, f64)> = sys
        .directions()
        .iter()
        .enumerate()
        .map(|(k, g)| (k, g.dot(&f)))
        .collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let (p, q) = if order[0].0 < order[1].0 {
        (order[0].0, order[1].0)
    } else {
        (order[1].0, order[0].0)
    };
    let mismatch = (order[0].1 - order[1].1).abs();
    let bound = tolerance * sys.dual_norm(&f);
    if mismatch >= bound {
        return Err(Error::NotOnAmbiguitySet {
            mismatch,
            tolerance: bound,
        });
    }
    let z = Configuration::unsigned(vec![x.clone()])?;
    let (a1, a2) = switching_rates(sys, &FieldDrive(field), &z, 0, p, q, h);
    Ok(match pair_regime(a1, a2) {
        PairRegime::Sliding { .. } => AmbiguityClass::FineCrossSlip,
        PairRegime::Source => AmbiguityClass::Source,
        PairRegime::Crossing { .. } => AmbiguityClass::CrossSlip,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HaltReason {
    Completed,
    SingularProximity,
    AmbiguitySource,
}

impl HaltReason {
    pub fn as_str(self) -> &'static str {
        match self {
            HaltReason::Completed => "completed",
            HaltReason::SingularProximity => "singular-proximity",
            HaltReason::AmbiguitySource => "ambiguity-source",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InclusionSettings {
    /// Euler step.
    pub h: f64,
    pub end_time: f64,
    /// Force bound; steps moving farther than `10 L h` are rejected.
    pub lipschitz: f64,
    /// Stop instead of picking a branch at a source.
    pub halt_on_source: bool,
}

impl InclusionSettings {
    pub fn new(h: f64, end_time: f64, lipschitz: f64) -> Self {
        Self {
            h,
            end_time,
            lipschitz,
            halt_on_source: false,
        }
    }
}

/// Sampled solution of the inclusion.
///
/// `regimes[k][i]` is the branch particle `i` followed from `times[k]`
/// onward; the last row describes the final state.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Configuration>,
    pub regimes: Vec<Vec<VelocityRegime>>,
    pub events: Vec<f64>,
    pub halt_reason: HaltReason,
}

impl Trajectory {
    pub fn final_state(&self) -> &Configuration {
        self.states.last().expect("trajectories hold at least one sample")
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().expect("trajectories hold at least one sample")
    }

    /// Linear interpolation between samples, clamped to the sampled range.
    pub fn at(&self, t: f64) -> Configuration {
        let n = self.times.len();
        if t <= self.times[0] {
            return self.states[0].clone();
        }
        if t >= self.times[n - 1] {
            return self.states[n - 1].clone();
        }
        let k = self.times.partition_point(|&s| s <= t) - 1;
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let w = (t - t0) / (t1 - t0);
        let a = &self.states[k];
        let b = &self.states[k + 1];
        a.with_positions(
            a.positions()
                .iter()
                .zip(b.positions())
                .map(|(x, y)| x * (1.0 - w) + y * w)
                .collect(),
        )
    }
}

/// Per-particle integrator memory: the pair a sliding particle is held on.
type Lock = Option<(usize, usize)>;

fn locked_velocity(
    sys: &GlideSystem,
    drive: &dyn Drive,
    z: &Configuration,
    i: usize,
    pair: (usize, usize),
    h: f64,
    step: f64,
) -> Option<(Vector, VelocityRegime)> {
    let (p, q) = pair;
    let xi = drive.force(z, i);
    let top = sys.dual_norm(&xi);
    if top <= 0.0 {
        return None;
    }
    let vp = sys.direction(p).dot(&xi);
    let vq = sys.direction(q).dot(&xi);
    let band = sys.tie_tolerance() * top;
    if top > vp.max(vq) + band {
        return None;
    }
    let (a1, a2) = switching_rates(sys, drive, z, i, p, q, h);
    if !(a1 < 0.0 && a2 > 0.0) {
        return None;
    }
    // pull σ back to zero over one step, on top of the tangential weight
    let sigma = vp - vq;
    let theta = ((a2 + sigma / step) / (a2 - a1)).clamp(0.0, 1.0);
    let v = sys.direction(p) * (vp * theta) + sys.direction(q) * (vq * (1.0 - theta));
    Some((
        v,
        VelocityRegime {
            kind: RegimeKind::Sliding,
            active: vec![p, q],
            theta,
            reduced: false,
        },
    ))
}

fn velocities(
    sys: &GlideSystem,
    drive: &dyn Drive,
    z: &Configuration,
    locks: &mut [Lock],
    h: f64,
    step: f64,
) -> Result<(Vec<Vector>, Vec<VelocityRegime>)> {
    let mut vs = Vec::with_capacity(z.len());
    let mut regimes = Vec::with_capacity(z.len());
    for (i, lock) in locks.iter_mut().enumerate() {
        if let Some(pair) = *lock {
            if let Some((v, r)) = locked_velocity(sys, drive, z, i, pair, h, step) {
                vs.push(v);
                regimes.push(r);
                continue;
            }
            *lock = None;
        }
        let (v, r) = select_velocity(sys, drive, z, i, h)?;
        if r.kind == RegimeKind::Sliding {
            *lock = Some((r.active[0], r.active[1]));
        }
        vs.push(v);
        regimes.push(r);
    }
    Ok((vs, regimes))
}

/// Whether some unlocked particle's followed direction stopped being maximal.
fn switched(sys: &GlideSystem, drive: &dyn Drive, z: &Configuration, regimes: &[VelocityRegime]) -> bool {
    regimes.iter().enumerate().any(|(i, r)| match r.chosen() {
        Some(k) => match sys.maximizer_set(&drive.force(z, i)) {
            Ok(ks) => !ks.contains(&k),
            Err(_) => false,
        },
        None => false,
    })
}

fn advance(z: &Configuration, vs: &[Vector], s: f64) -> Configuration {
    z.with_positions(z.positions().iter().zip(vs).map(|(p, v)| p + v * s).collect())
}

/// Explicit Euler integration of the inclusion up to `settings.end_time`.
///
/// A step during which some particle leaves the cone of its direction is cut
/// back to within `h·10⁻³` of the switching time. Particles that reach a
/// sliding surface are held on it until the pair stops attracting them or a
/// third direction takes over.
pub fn integrate_inclusion(
    sys: &GlideSystem,
    drive: &dyn Drive,
    z0: &Configuration,
    settings: &InclusionSettings,
) -> Result<Trajectory> {
    let InclusionSettings {
        h,
        end_time,
        lipschitz,
        halt_on_source,
    } = *settings;
    check_probe(h)?;
    if !(end_time > 0.0) || !end_time.is_finite() {
        return Err(Error::InvalidParameter(format!("end time must be positive, got {end_time}")));
    }
    if !(lipschitz > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "Lipschitz bound must be positive, got {lipschitz}"
        )));
    }
    if z0.dim() != sys.dim() {
        return Err(Error::DimensionMismatch {
            expected: sys.dim(),
            found: z0.dim(),
        });
    }
    let probe = (h * 1e-3).max(1e-7);
    let resolution = h * 1e-3;
    let mut locks: Vec<Lock> = vec![None; z0.len()];
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![z0.clone()],
        regimes: Vec::new(),
        events: Vec::new(),
        halt_reason: HaltReason::Completed,
    };
    let mut t = 0.0;
    let mut z = z0.clone();
    let mut index = 0usize;
    loop {
        if let Some((distance, epsilon)) = drive.singular_clearance(&z) {
            if distance < epsilon {
                traj.halt_reason = HaltReason::SingularProximity;
                break;
            }
        }
        let remaining = end_time - t;
        if remaining <= 1e-12 * end_time {
            break;
        }
        let step = h.min(remaining);
        let (vs, regimes) = velocities(sys, drive, &z, &mut locks, probe, step)?;
        if halt_on_source && regimes.iter().any(|r| r.kind == RegimeKind::SourceBranch) {
            traj.regimes.push(regimes);
            traj.halt_reason = HaltReason::AmbiguitySource;
            return Ok(traj);
        }
        let mut s = step;
        let mut event = false;
        if switched(sys, drive, &advance(&z, &vs, step), &regimes) {
            let (mut lo, mut hi) = (0.0, step);
            while hi - lo > resolution {
                let mid = 0.5 * (lo + hi);
                if switched(sys, drive, &advance(&z, &vs, mid), &regimes) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            s = hi;
            event = true;
        }
        let next = advance(&z, &vs, s);
        let displacement = (vs.iter().map(|v| v.norm_squared()).sum::<f64>()).sqrt() * s;
        let bound = 10.0 * lipschitz * h;
        if !displacement.is_finite() || displacement > bound {
            return Err(Error::StepTooLarge { displacement, bound }.at_step(index));
        }
        t = if s == step && step == remaining { end_time } else { t + s };
        z = next;
        if event {
            traj.events.push(t);
            lock_at_event(sys, drive, &z, &regimes, &mut locks, probe);
        }
        traj.regimes.push(regimes);
        traj.times.push(t);
        traj.states.push(z.clone());
        index += 1;
    }
    let mut scratch = locks.clone();
    let (_, last) = velocities(sys, drive, &z, &mut scratch, probe, h)?;
    traj.regimes.push(last);
    Ok(traj)
}

/// After an event, holds particles whose old and new directions form a sliding pair.
fn lock_at_event(
    sys: &GlideSystem,
    drive: &dyn Drive,
    z: &Configuration,
    regimes: &[VelocityRegime],
    locks: &mut [Lock],
    probe: f64,
) {
    for (i, r) in regimes.iter().enumerate() {
        let Some(old) = r.chosen() else { continue };
        let Ok(ks) = sys.maximizer_set(&drive.force(z, i)) else { continue };
        if ks.contains(&old) {
            continue;
        }
        let new = ks[0];
        let (p, q) = if old < new { (old, new) } else { (new, old) };
        let (a1, a2) = switching_rates(sys, drive, z, i, p, q, probe);
        if matches!(pair_regime(a1, a2), PairRegime::Sliding { .. }) {
            locks[i] = Some((p, q));
        }
    }
}
