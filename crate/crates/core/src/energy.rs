//! Energies, forces and defect configurations.
//!
//! The central model is the regularised screw-dislocation energy
//!
//! ```text
//! E(Z) = φ(Z) + Σ_i Σ_{j≠i} −b_i b_j · ½ log(|z_i − z_j|² + ε²)
//! ```
//!
//! where the ordered double sum counts every pair twice, and `φ` is a
//! quadratic hinge that confines defects to a ball. Benchmark energies and
//! non-conservative force fields are provided for tests and demos.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result, Vector};

/// Safety factor applied to sampled gradient maxima.
pub const LIPSCHITZ_SAFETY: f64 = 1.5;

/// Default number of samples for [`estimate_lipschitz`].
pub const LIPSCHITZ_SAMPLES: usize = 10_000;

/// Positions of `n` defects together with their Burgers moduli (±1).
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    positions: Vec<Vector>,
    burgers: Vec<i8>,
}

impl Configuration {
    pub fn new(positions: Vec<Vector>, burgers: Vec<i8>) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::InvalidConfiguration("no particles".into()));
        }
        if positions.len() != burgers.len() {
            return Err(Error::InvalidConfiguration(format!(
                "{} positions but {} Burgers moduli",
                positions.len(),
                burgers.len()
            )));
        }
        if let Some(b) = burgers.iter().find(|b| b.abs() != 1) {
            return Err(Error::InvalidConfiguration(format!(
                "Burgers modulus {b} is not ±1"
            )));
        }
        let dim = positions[0].len();
        if let Some(p) = positions.iter().find(|p| p.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: p.len(),
            });
        }
        if positions.iter().any(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidConfiguration("non-finite coordinate".into()));
        }
        Ok(Self { positions, burgers })
    }

    /// All Burgers moduli set to `+1`.
    pub fn unsigned(positions: Vec<Vector>) -> Result<Self> {
        let n = positions.len();
        Self::new(positions, vec![1; n])
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.positions[0].len()
    }

    pub fn positions(&self) -> &[Vector] {
        &self.positions
    }

    pub fn position(&self, i: usize) -> &Vector {
        &self.positions[i]
    }

    pub fn burgers(&self) -> &[i8] {
        &self.burgers
    }

    /// Same Burgers moduli, new positions.
    pub fn with_positions(&self, positions: Vec<Vector>) -> Self {
        debug_assert_eq!(positions.len(), self.positions.len());
        Self {
            positions,
            burgers: self.burgers.clone(),
        }
    }

    /// `z_i + displacement_i` for every particle.
    pub fn displaced(&self, displacements: &[Vector]) -> Self {
        self.with_positions(
            self.positions
                .iter()
                .zip(displacements)
                .map(|(p, d)| p + d)
                .collect(),
        )
    }

    /// Moves only particle `i`.
    pub fn moved(&self, i: usize, displacement: &Vector) -> Self {
        let mut out = self.clone();
        out.positions[i] += displacement;
        out
    }

    /// Uniform translation of every particle.
    pub fn translated(&self, t: &Vector) -> Self {
        self.with_positions(self.positions.iter().map(|p| p + t).collect())
    }
}

/// A differentiable energy on configurations.
pub trait EnergyModel: Send + Sync {
    fn name(&self) -> &str;

    fn value(&self, z: &Configuration) -> f64;

    /// `∇_{z_i} E(Z)` for every particle.
    fn gradient(&self, z: &Configuration) -> Vec<Vector>;

    /// Distance of `z` to the singular set together with the halt radius;
    /// `None` for energies without singularities.
    fn singular_clearance(&self, _z: &Configuration) -> Option<(f64, f64)> {
        None
    }
}

/// A (not necessarily conservative) force field on `R^d`.
pub trait ForceField: Send + Sync {
    fn name(&self) -> &str;

    fn force(&self, x: &Vector) -> Vector;
}

/// Parameters of the regularised screw-dislocation energy.
#[derive(Debug, Clone, PartialEq)]
pub struct ScrewEnergyParams {
    /// Regularisation scale `ε` of the logarithm; also the halt radius.
    pub epsilon: f64,
    pub confinement_center: Vector,
    /// Radius `R` of the ball inside which the confinement vanishes.
    pub confinement_radius: f64,
    /// Stiffness `κ` of the quadratic hinge `κ (|z − c| − R)_+²`.
    pub confinement_stiffness: f64,
    /// Radius of the circular domain whose boundary belongs to the singular set.
    pub domain_radius: f64,
}

impl ScrewEnergyParams {
    /// Parameters with the domain radius set to twice the confinement radius.
    pub fn new(epsilon: f64, center: Vector, radius: f64, stiffness: f64) -> Result<Self> {
        let p = Self {
            epsilon,
            confinement_center: center,
            confinement_radius: radius,
            confinement_stiffness: stiffness,
            domain_radius: 2.0 * radius,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if !(self.confinement_radius > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "confinement radius must be positive, got {}",
                self.confinement_radius
            )));
        }
        if !(self.confinement_stiffness >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "confinement stiffness must be non-negative, got {}",
                self.confinement_stiffness
            )));
        }
        if !(self.domain_radius >= self.confinement_radius) {
            return Err(Error::InvalidParameter(format!(
                "domain radius {} is smaller than the confinement radius {}",
                self.domain_radius, self.confinement_radius
            )));
        }
        Ok(())
    }
}

/// Regularised logarithmic interaction plus quadratic-hinge confinement.
#[derive(Debug, Clone)]
pub struct ScrewEnergy {
    params: ScrewEnergyParams,
}

impl ScrewEnergy {
    pub fn new(params: ScrewEnergyParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { params })
    }

    pub fn params(&self) -> &ScrewEnergyParams {
        &self.params
    }

    fn confinement(&self, z: &Vector) -> f64 {
        let p = &self.params;
        let excess = ((z - &p.confinement_center).norm() - p.confinement_radius).max(0.0);
        p.confinement_stiffness * excess * excess
    }

    /// Lower bound `−n(n−1) max(0, −log ε)` on the energy.
    pub fn lower_bound(&self, n: usize) -> f64 {
        -((n * n.saturating_sub(1)) as f64) * (-self.params.epsilon.ln()).max(0.0)
    }
}

impl EnergyModel for ScrewEnergy {
    fn name(&self) -> &str {
        "screw"
    }

    fn value(&self, z: &Configuration) -> f64 {
        let eps2 = self.params.epsilon.powi(2);
        let pos = z.positions();
        let b = z.burgers();
        let mut total: f64 = pos.iter().map(|p| self.confinement(p)).sum();
        for i in 0..pos.len() {
            for j in (i + 1)..pos.len() {
                let r2 = (&pos[i] - &pos[j]).norm_squared();
                // both ordered pairs (i, j) and (j, i)
                total -= f64::from(b[i] * b[j]) * (r2 + eps2).ln();
            }
        }
        total
    }

    fn gradient(&self, z: &Configuration) -> Vec<Vector> {
        let p = &self.params;
        let eps2 = p.epsilon.powi(2);
        let pos = z.positions();
        let b = z.burgers();
        let mut grad: Vec<Vector> = pos
            .iter()
            .map(|x| {
                let off = x - &p.confinement_center;
                let r = off.norm();
                let excess = r - p.confinement_radius;
                if excess > 0.0 {
                    off * (2.0 * p.confinement_stiffness * excess / r)
                } else {
                    Vector::zeros(x.len())
                }
            })
            .collect();
        for i in 0..pos.len() {
            for j in (i + 1)..pos.len() {
                let diff = &pos[i] - &pos[j];
                let w = -2.0 * f64::from(b[i] * b[j]) / (diff.norm_squared() + eps2);
                grad[i] += &diff * w;
                grad[j] -= &diff * w;
            }
        }
        grad
    }

    fn singular_clearance(&self, z: &Configuration) -> Option<(f64, f64)> {
        Some((
            dist_to_singular_set(z, self.params.domain_radius, &self.params.confinement_center),
            self.params.epsilon,
        ))
    }
}

/// Distance of a configuration to the singular set: collisions and the
/// boundary of the circular domain.
///
/// Pairwise distances are halved, so two defects approaching each other
/// symmetrically reach the halt radius at the same time as a single defect
/// approaching the boundary.
pub fn dist_to_singular_set(z: &Configuration, domain_radius: f64, center: &Vector) -> f64 {
    let pos = z.positions();
    let mut best = pos
        .iter()
        .map(|p| domain_radius - (p - center).norm())
        .fold(f64::INFINITY, f64::min);
    for i in 0..pos.len() {
        for j in (i + 1)..pos.len() {
            best = best.min(0.5 * (&pos[i] - &pos[j]).norm());
        }
    }
    best.max(0.0)
}

/// `E(Z) = ½ Σ_i |z_i − c|²`.
#[derive(Debug, Clone)]
pub struct QuadraticWell {
    center: Vector,
}

impl QuadraticWell {
    pub fn new(center: Vector) -> Self {
        Self { center }
    }

    pub fn center(&self) -> &Vector {
        &self.center
    }
}

impl EnergyModel for QuadraticWell {
    fn name(&self) -> &str {
        "quadratic-well"
    }

    fn value(&self, z: &Configuration) -> f64 {
        0.5 * z
            .positions()
            .iter()
            .map(|p| (p - &self.center).norm_squared())
            .sum::<f64>()
    }

    fn gradient(&self, z: &Configuration) -> Vec<Vector> {
        z.positions().iter().map(|p| p - &self.center).collect()
    }
}

/// Bounded saddle `E(Z) = Σ_i ½ (x_{i,1}² − Σ_{k>1} x_{i,k}²) / (1 + |z_i|²/s²)`.
#[derive(Debug, Clone)]
pub struct SaddleEnergy {
    scale: f64,
}

impl SaddleEnergy {
    pub fn new(scale: f64) -> Result<Self> {
        if !(scale > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "saddle scale must be positive, got {scale}"
            )));
        }
        Ok(Self { scale })
    }
}

impl EnergyModel for SaddleEnergy {
    fn name(&self) -> &str {
        "saddle"
    }

    fn value(&self, z: &Configuration) -> f64 {
        let s2 = self.scale * self.scale;
        z.positions()
            .iter()
            .map(|p| {
                let q = p[0] * p[0] - p.rows(1, p.len() - 1).norm_squared();
                0.5 * q / (1.0 + p.norm_squared() / s2)
            })
            .sum()
    }

    fn gradient(&self, z: &Configuration) -> Vec<Vector> {
        let s2 = self.scale * self.scale;
        z.positions()
            .iter()
            .map(|p| {
                let q = p[0] * p[0] - p.rows(1, p.len() - 1).norm_squared();
                let w = 1.0 + p.norm_squared() / s2;
                // d/dp [½ q / w] = ½ (∇q w − q ∇w) / w²
                let mut grad_q = -2.0 * p;
                grad_q[0] = 2.0 * p[0];
                let grad_w = p * (2.0 / s2);
                (grad_q * w - grad_w * q) * (0.5 / (w * w))
            })
            .collect()
    }
}

/// Energy equal to `level` everywhere.
#[derive(Debug, Clone, Default)]
pub struct ConstantEnergy {
    pub level: f64,
}

impl EnergyModel for ConstantEnergy {
    fn name(&self) -> &str {
        "constant"
    }

    fn value(&self, _z: &Configuration) -> f64 {
        self.level
    }

    fn gradient(&self, z: &Configuration) -> Vec<Vector> {
        z.positions().iter().map(|p| Vector::zeros(p.len())).collect()
    }
}

/// Planar field `F(x) = (1 + |x|², 2)`.
///
/// Both components are positive, so the competing glide directions of the
/// square system are `e1` and `e2`; they tie exactly on the unit circle,
/// with `e2` preferred inside and `e1` outside.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExampleField;

impl ForceField for ExampleField {
    fn name(&self) -> &str {
        "example"
    }

    fn force(&self, x: &Vector) -> Vector {
        Vector::from_column_slice(&[1.0 + x.norm_squared(), 2.0])
    }
}

/// Linear saddle field `F(x) = (x_1, −x_2)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SaddleField;

impl ForceField for SaddleField {
    fn name(&self) -> &str {
        "saddle"
    }

    fn force(&self, x: &Vector) -> Vector {
        Vector::from_column_slice(&[x[0], -x[1]])
    }
}

/// Largest jump `|F(x) − F(y)|` between neighbouring nodes of a square grid
/// over `[lo, hi]²` with `cells` cells per side.
pub fn sampled_modulus(field: &dyn ForceField, lo: f64, hi: f64, cells: usize) -> f64 {
    let step = (hi - lo) / cells as f64;
    let at = |i: usize, j: usize| {
        field.force(&Vector::from_column_slice(&[lo + i as f64 * step, lo + j as f64 * step]))
    };
    let mut worst: f64 = 0.0;
    for i in 0..=cells {
        for j in 0..=cells {
            let here = at(i, j);
            if i < cells {
                worst = worst.max((at(i + 1, j) - &here).norm());
            }
            if j < cells {
                worst = worst.max((at(i, j + 1) - &here).norm());
            }
        }
    }
    worst
}

/// Central-difference gradient with probe `h` in every coordinate.
pub fn fd_gradient(model: &dyn EnergyModel, z: &Configuration, h: f64) -> Vec<Vector> {
    let dim = z.dim();
    (0..z.len())
        .map(|i| {
            Vector::from_fn(dim, |k, _| {
                let mut e = Vector::zeros(dim);
                e[k] = h;
                let plus = model.value(&z.moved(i, &e));
                let minus = model.value(&z.moved(i, &(-&e)));
                (plus - minus) / (2.0 * h)
            })
        })
        .collect()
}

/// Full Euclidean length of the stacked gradient.
pub fn gradient_norm(grad: &[Vector]) -> f64 {
    grad.iter().map(|g| g.norm_squared()).sum::<f64>().sqrt()
}

/// Sampled Lipschitz bound: [`LIPSCHITZ_SAFETY`] times the largest
/// `|∇E|` seen at `samples` configurations drawn uniformly from the product of
/// balls of `radius` around the particles of `around` (the centre included).
pub fn estimate_lipschitz(
    model: &dyn EnergyModel,
    around: &Configuration,
    radius: f64,
    samples: usize,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = around.dim();
    let mut worst = gradient_norm(&model.gradient(around));
    for _ in 0..samples {
        let offsets: Vec<Vector> = (0..around.len())
            .map(|_| sample_ball(&mut rng, dim, radius))
            .collect();
        worst = worst.max(gradient_norm(&model.gradient(&around.displaced(&offsets))));
    }
    LIPSCHITZ_SAFETY * worst
}

/// Uniform sample from the ball of `radius` in `R^dim` (rejection sampling).
pub fn sample_ball<R: Rng>(rng: &mut R, dim: usize, radius: f64) -> Vector {
    loop {
        let v = Vector::from_fn(dim, |_, _| rng.gen_range(-1.0..=1.0));
        if v.norm_squared() <= 1.0 {
            return v * radius;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vector;

    fn screw(eps: f64) -> ScrewEnergy {
        ScrewEnergy::new(ScrewEnergyParams::new(eps, vector(&[0.0, 0.0]), 10.0, 1.0).unwrap()).unwrap()
    }

    #[test]
    fn configuration_validation() {
        assert!(Configuration::new(vec![], vec![]).is_err());
        assert!(Configuration::new(vec![vector(&[0.0, 0.0])], vec![2]).is_err());
        assert!(Configuration::new(vec![vector(&[0.0, 0.0])], vec![1, 1]).is_err());
        assert!(Configuration::new(vec![vector(&[0.0, 0.0]), vector(&[0.0])], vec![1, -1]).is_err());
        assert!(Configuration::new(vec![vector(&[f64::NAN, 0.0])], vec![1]).is_err());
    }

    #[test]
    fn single_defect_has_zero_energy_inside_confinement() {
        let z = Configuration::unsigned(vec![vector(&[1.0, 2.0])]).unwrap();
        assert_eq!(screw(0.1).value(&z), 0.0);
    }

    #[test]
    fn like_pair_at_unit_distance_without_regularisation_limit() {
        let e = screw(1e-12);
        let z = Configuration::unsigned(vec![vector(&[0.0, 0.0]), vector(&[1.0, 0.0])]).unwrap();
        assert!(e.value(&z).abs() < 1e-20);
    }

    #[test]
    fn opposite_pair_attracts() {
        let e = screw(0.1);
        let pair = |r: f64| {
            Configuration::new(vec![vector(&[0.0, 0.0]), vector(&[r, 0.0])], vec![1, -1]).unwrap()
        };
        let value = e.value(&pair(2.0));
        assert!((value - (4.0f64 + 0.01).ln()).abs() < 1e-14);
        assert!(e.value(&pair(1.0)) < value);
    }

    #[test]
    fn repulsion_force_closed_form() {
        let e = screw(1.0);
        let z = Configuration::unsigned(vec![vector(&[0.0, 0.0]), vector(&[1.0, 0.0])]).unwrap();
        let g = e.gradient(&z);
        assert!((&g[0] - vector(&[1.0, 0.0])).norm() < 1e-15);
        assert!((&g[1] - vector(&[-1.0, 0.0])).norm() < 1e-15);
    }

    #[test]
    fn symmetric_pair_has_antisymmetric_gradient() {
        let e = screw(0.2);
        let z = Configuration::unsigned(vec![vector(&[0.7, 0.7]), vector(&[-0.7, -0.7])]).unwrap();
        let g = e.gradient(&z);
        assert!((&g[0] + &g[1]).norm() < 1e-15);
    }

    #[test]
    fn singular_distance_examples() {
        let c = vector(&[0.0, 0.0]);
        let one = Configuration::unsigned(vec![c.clone()]).unwrap();
        assert_eq!(dist_to_singular_set(&one, 3.0, &c), 3.0);
        let two = Configuration::unsigned(vec![vector(&[1.0, 0.0]), vector(&[-1.0, 0.0])]).unwrap();
        assert_eq!(dist_to_singular_set(&two, 100.0, &c), 1.0);
        let edge = Configuration::unsigned(vec![vector(&[0.6, 0.8])]).unwrap();
        assert!(dist_to_singular_set(&edge, 1.0, &c) < 1e-15);
    }

    #[test]
    fn quadratic_well_fixtures() {
        let c = vector(&[0.5, -1.0]);
        let well = QuadraticWell::new(c.clone());
        let z = Configuration::unsigned(vec![c]).unwrap();
        assert_eq!(well.gradient(&z)[0].norm(), 0.0);
    }

    #[test]
    fn example_field_fixtures() {
        let f = ExampleField;
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let on_circle = f.force(&vector(&[h, -h]));
        assert!((on_circle[0] - 2.0).abs() < 1e-15 && on_circle[1] == 2.0);
        assert_eq!(f.force(&vector(&[0.0, 0.0])), vector(&[1.0, 2.0]));
    }

    #[test]
    fn field_modulus_shrinks_with_grid() {
        let coarse = sampled_modulus(&ExampleField, -2.0, 2.0, 10);
        let fine = sampled_modulus(&ExampleField, -2.0, 2.0, 40);
        assert!(fine < 0.3 * coarse);
    }

    #[test]
    fn constant_energy_fd_is_zero() {
        let z = Configuration::unsigned(vec![vector(&[0.3, 0.1])]).unwrap();
        let g = fd_gradient(&ConstantEnergy { level: 4.0 }, &z, 1e-5);
        assert_eq!(g[0].norm(), 0.0);
    }

    #[test]
    fn quadratic_fd_matches_analytic() {
        let well = QuadraticWell::new(vector(&[0.1, 0.2]));
        let z = Configuration::unsigned(vec![vector(&[1.3, -0.4]), vector(&[-2.0, 0.5])]).unwrap();
        let fd = fd_gradient(&well, &z, 1e-5);
        for (a, b) in fd.iter().zip(well.gradient(&z)) {
            assert!((a - b).norm() < 1e-8);
        }
    }

    #[test]
    fn lipschitz_estimate_covers_the_sampled_region() {
        let well = QuadraticWell::new(vector(&[0.0, 0.0]));
        let z = Configuration::unsigned(vec![vector(&[-2.0, -1.0])]).unwrap();
        let l = estimate_lipschitz(&well, &z, 0.5, 2000, 7);
        let max_possible = 5f64.sqrt() + 0.5;
        assert!(l > 5f64.sqrt() && l <= LIPSCHITZ_SAFETY * max_possible + 1e-12);
    }

    #[test]
    fn invalid_params_are_rejected() {
        assert!(ScrewEnergyParams::new(0.0, vector(&[0.0, 0.0]), 1.0, 1.0).is_err());
        assert!(ScrewEnergyParams::new(0.1, vector(&[0.0, 0.0]), -1.0, 1.0).is_err());
        assert!(ScrewEnergyParams::new(0.1, vector(&[0.0, 0.0]), 1.0, -1.0).is_err());
        assert!(SaddleEnergy::new(0.0).is_err());
    }
}
