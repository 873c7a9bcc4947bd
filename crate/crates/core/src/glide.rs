//! Glide-direction geometry.
//!
//! A [`GlideSystem`] is a finite set `G` of unit vectors in `R^d`, closed under
//! negation and spanning `R^d`. It induces
//!
//! * the crystalline norm `‖x‖ = min { Σ α_k : α_k ≥ 0, Σ α_k g_k = x }`,
//!   whose unit ball is the convex hull of `G`;
//! * the dual norm `‖ξ‖_* = max_{g ∈ G} g·ξ`;
//! * the multi-valued projection `P_G ξ = { (g·ξ) g : g maximises g·ξ }`;
//! * the quasi-distance `d(x, y) = |x − y|` when `x − y` is parallel to a
//!   glide direction and `+∞` otherwise, which violates the triangle
//!   inequality, and its largest metric minorant `d̂(x, y) = ‖x − y‖`.

use std::f64::consts::PI;

use log::info;
use nalgebra::DMatrix;

use crate::simplex::{self, LpOutcome};
use crate::{Error, Result, Vector};

/// Default relative band used to decide ties between maximising directions.
pub const DEFAULT_TIE_TOLERANCE: f64 = 1e-9;

/// Angular separation below which two glide directions are the same direction.
pub const DUPLICATE_ANGLE: f64 = 1e-10;

/// Angular separation below which a displacement counts as glide-aligned.
pub const RAY_ANGLE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct GlideSystem {
    dim: usize,
    directions: Vec<Vector>,
    bisectors: Vec<Vector>,
    tie_tolerance: f64,
}

impl GlideSystem {
    /// Validates and normalises a list of glide directions.
    ///
    /// Missing negations are added (and logged). In two dimensions the
    /// directions are sorted counter-clockwise starting from the positive
    /// `x` axis, and the bisectors `g_i' = (g_i + g_{i+1}) / |g_i + g_{i+1}|`
    /// are precomputed.
    pub fn new(directions: &[Vector], dim: usize, tie_tolerance: f64) -> Result<Self> {
        if directions.is_empty() {
            return Err(Error::EmptyDirections);
        }
        if dim < 2 {
            return Err(Error::InvalidParameter(format!(
                "glide systems need dimension at least 2, got {dim}"
            )));
        }
        if !(0.0..1.0).contains(&tie_tolerance) {
            return Err(Error::InvalidParameter(format!(
                "tie tolerance must lie in [0, 1), got {tie_tolerance}"
            )));
        }

        let mut units: Vec<Vector> = Vec::with_capacity(2 * directions.len());
        for (index, g) in directions.iter().enumerate() {
            if g.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: g.len(),
                });
            }
            let norm = g.norm();
            if !(norm > 0.0) || !norm.is_finite() {
                return Err(Error::ZeroDirection { index });
            }
            let u = g / norm;
            if let Some(first) = units.iter().position(|v| angle_between(v, &u) < DUPLICATE_ANGLE) {
                return Err(Error::DuplicateDirection {
                    first,
                    second: index,
                });
            }
            units.push(u);
        }

        let given = units.len();
        for k in 0..given {
            let neg = -&units[k];
            if !units.iter().any(|v| angle_between(v, &neg) < DUPLICATE_ANGLE) {
                info!("glide direction {k} has no opposite; adding its negation");
                units.push(neg);
            }
        }

        let rank = span_rank(&units, dim);
        if rank < dim {
            return Err(Error::SpanDeficient { dim, rank });
        }

        let mut bisectors = Vec::new();
        if dim == 2 {
            units.sort_by(|a, b| polar_angle(a).total_cmp(&polar_angle(b)));
            let n = units.len();
            for i in 0..n {
                let s = &units[i] + &units[(i + 1) % n];
                bisectors.push(&s / s.norm());
            }
        }

        Ok(Self {
            dim,
            directions: units,
            bisectors,
            tie_tolerance,
        })
    }

    /// Convenience constructor from plain coordinate rows.
    pub fn from_rows(rows: &[Vec<f64>], tie_tolerance: f64) -> Result<Self> {
        let dim = rows.first().map(Vec::len).ok_or(Error::EmptyDirections)?;
        let dirs: Vec<Vector> = rows.iter().map(|r| Vector::from_column_slice(r)).collect();
        Self::new(&dirs, dim, tie_tolerance)
    }

    /// The four directions `±e1, ±e2` of a square lattice.
    pub fn square() -> Self {
        Self::regular(2)
    }

    /// Six directions at 60° spacing, as on a triangular lattice.
    pub fn hexagonal() -> Self {
        Self::regular(3)
    }

    /// `2 * pairs` directions equally spaced on the unit circle, starting at `e1`.
    pub fn regular(pairs: usize) -> Self {
        assert!(pairs >= 2, "a planar glide system needs at least two direction pairs");
        let dirs: Vec<Vector> = (0..pairs)
            .map(|k| {
                let a = PI * k as f64 / pairs as f64;
                Vector::from_column_slice(&[a.cos(), a.sin()])
            })
            .collect();
        Self::new(&dirs, 2, DEFAULT_TIE_TOLERANCE).expect("regular glide systems are valid")
    }

    /// Returns the same system with a different tie band.
    pub fn with_tie_tolerance(mut self, tie_tolerance: f64) -> Self {
        self.tie_tolerance = tie_tolerance;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of glide directions `N`.
    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn directions(&self) -> &[Vector] {
        &self.directions
    }

    pub fn direction(&self, k: usize) -> &Vector {
        &self.directions[k]
    }

    /// Bisectors `g_i'` between consecutive directions (planar systems only).
    pub fn bisectors(&self) -> &[Vector] {
        &self.bisectors
    }

    pub fn tie_tolerance(&self) -> f64 {
        self.tie_tolerance
    }

    /// Index of the direction `-g_k`.
    pub fn opposite(&self, k: usize) -> usize {
        let neg = -&self.directions[k];
        self.directions
            .iter()
            .position(|g| angle_between(g, &neg) < DUPLICATE_ANGLE)
            .expect("glide systems are closed under negation")
    }

    /// Open cone `Λ_{g_k}` membership.
    ///
    /// In the plane this uses the bisector description: `x` lies in the cone
    /// iff `x = a g'_{k-1} + b g'_k` with `a, b > 0`. In higher dimensions the
    /// cone is the set where `g_k` is the strict maximiser of `g·x`.
    pub fn cone_contains(&self, k: usize, x: &Vector) -> bool {
        if self.dim == 2 {
            let n = self.len();
            let left = &self.bisectors[(k + n - 1) % n];
            let right = &self.bisectors[k];
            let det = left[0] * right[1] - left[1] * right[0];
            let a = (x[0] * right[1] - x[1] * right[0]) / det;
            let b = (left[0] * x[1] - left[1] * x[0]) / det;
            a > 0.0 && b > 0.0
        } else {
            let gk = self.directions[k].dot(x);
            self.directions
                .iter()
                .enumerate()
                .all(|(j, g)| j == k || g.dot(x) < gk)
        }
    }

    /// Crystalline norm `‖x‖`, the gauge of the convex hull of the directions.
    pub fn crystalline_norm(&self, x: &Vector) -> f64 {
        if self.dim == 2 {
            self.crystalline_norm_planar(x)
        } else {
            self.crystalline_norm_lp(x)
        }
    }

    /// Planar route: minimise `α + β` over pairs with `α g + β g̃ = x`, `α, β ≥ 0`.
    fn crystalline_norm_planar(&self, x: &Vector) -> f64 {
        let scale = x.norm();
        if scale == 0.0 {
            return 0.0;
        }
        let slack = 1e-12 * scale;
        let mut best = f64::INFINITY;
        let n = self.len();
        for i in 0..n {
            let g = &self.directions[i];
            for j in (i + 1)..n {
                let h = &self.directions[j];
                let det = g[0] * h[1] - g[1] * h[0];
                if det.abs() < 1e-14 {
                    continue;
                }
                let alpha = (x[0] * h[1] - x[1] * h[0]) / det;
                let beta = (g[0] * x[1] - g[1] * x[0]) / det;
                if alpha >= -slack && beta >= -slack {
                    best = best.min(alpha.max(0.0) + beta.max(0.0));
                }
            }
        }
        best
    }

    /// General route: the linear program `min Σ α_k` s.t. `Σ α_k g_k = x`, `α ≥ 0`.
    pub fn crystalline_norm_lp(&self, x: &Vector) -> f64 {
        let n = self.len();
        let a: Vec<Vec<f64>> = (0..self.dim)
            .map(|r| self.directions.iter().map(|g| g[r]).collect())
            .collect();
        let b: Vec<f64> = x.iter().copied().collect();
        match simplex::minimize(&vec![1.0; n], &a, &b) {
            LpOutcome::Optimal { value, .. } => value,
            _ => f64::INFINITY,
        }
    }

    /// Dual norm `‖ξ‖_* = max_g g·ξ`.
    pub fn dual_norm(&self, xi: &Vector) -> f64 {
        self.directions
            .iter()
            .map(|g| g.dot(xi))
            .fold(f64::NEG_INFINITY, f64::max)
            .max(0.0)
    }

    /// Indices `k` with `g_k·ξ ≥ (1 − η) ‖ξ‖_*`, in increasing order.
    pub fn maximizer_set(&self, xi: &Vector) -> Result<Vec<usize>> {
        if xi.iter().all(|v| *v == 0.0) {
            return Err(Error::ZeroForce);
        }
        let dots: Vec<f64> = self.directions.iter().map(|g| g.dot(xi)).collect();
        let top = dots.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let threshold = top - self.tie_tolerance * top.abs();
        Ok(dots
            .iter()
            .enumerate()
            .filter(|(_, d)| **d >= threshold)
            .map(|(k, _)| k)
            .collect())
    }

    /// Multi-valued projection `P_G ξ`, stored by its extreme points.
    ///
    /// Directions inside the tie band share the maximal value, so every
    /// vertex has Euclidean length `‖ξ‖_*`.
    pub fn project_glide(&self, xi: &Vector) -> VelocitySet {
        match self.maximizer_set(xi) {
            Err(_) => VelocitySet::new(vec![Vector::zeros(self.dim)]),
            Ok(ks) => {
                let value = self.dual_norm(xi);
                VelocitySet::new(ks.iter().map(|&k| &self.directions[k] * value).collect())
            }
        }
    }

    /// Subdifferential of `ψ*(ξ) = ½‖ξ‖_*²`.
    ///
    /// `{0}` at the origin, `{(g·ξ) g}` for a unique maximiser, and the convex
    /// hull of the maximiser vertices otherwise (a segment for two-way ties).
    pub fn subdifferential_psi_star(&self, xi: &Vector) -> VelocitySet {
        self.project_glide(xi)
    }

    /// Index of the glide direction along which `delta` points, if any.
    ///
    /// Alignment is decided by the angle to `g` being below [`RAY_ANGLE`],
    /// widened by `floor` (an absolute bound on rounding in `delta`).
    pub fn ray_direction(&self, delta: &Vector, floor: f64) -> Option<usize> {
        let len = delta.norm();
        if len == 0.0 {
            return None;
        }
        let u = delta / len;
        let tol = RAY_ANGLE + floor / len;
        self.directions.iter().position(|g| {
            let c = g.dot(&u);
            c > 0.0 && (&u - g * c).norm() <= tol
        })
    }

    /// Quasi-distance `d(x, y)`: `|x − y|` along a glide ray, `+∞` otherwise.
    pub fn quasi_distance(&self, x: &Vector, y: &Vector) -> f64 {
        let delta = y - x;
        let len = delta.norm();
        if len == 0.0 {
            return 0.0;
        }
        // Subtraction of nearby coordinates loses relative precision.
        let floor = 4.0 * f64::EPSILON * (x.norm() + y.norm());
        if self.ray_direction(&delta, floor).is_some() {
            len
        } else {
            f64::INFINITY
        }
    }

    /// Metric `d̂(x, y) = ‖x − y‖` induced by the crystalline norm.
    pub fn metric_distance(&self, x: &Vector, y: &Vector) -> f64 {
        self.crystalline_norm(&(y - x))
    }

    /// `D(X, Y) = (Σ_i d²(x_i, y_i))^{1/2}`; infinite if any particle leaves its glide rays.
    pub fn quasi_distance_config(&self, xs: &[Vector], ys: &[Vector]) -> Result<f64> {
        check_shape(xs, ys)?;
        let sum: f64 = xs
            .iter()
            .zip(ys)
            .map(|(x, y)| self.quasi_distance(x, y).powi(2))
            .sum();
        Ok(sum.sqrt())
    }

    /// `D̂(X, Y) = (Σ_i ‖x_i − y_i‖²)^{1/2}`.
    pub fn metric_distance_config(&self, xs: &[Vector], ys: &[Vector]) -> Result<f64> {
        check_shape(xs, ys)?;
        let sum: f64 = xs
            .iter()
            .zip(ys)
            .map(|(x, y)| self.metric_distance(x, y).powi(2))
            .sum();
        Ok(sum.sqrt())
    }
}

fn check_shape(xs: &[Vector], ys: &[Vector]) -> Result<()> {
    if xs.len() != ys.len() {
        return Err(Error::ShapeMismatch {
            left: xs.len(),
            right: ys.len(),
        });
    }
    Ok(())
}

fn angle_between(a: &Vector, b: &Vector) -> f64 {
    let c = a.dot(b);
    let s = (a - b * c).norm();
    s.atan2(c)
}

fn polar_angle(v: &Vector) -> f64 {
    let a = v[1].atan2(v[0]);
    if a < 0.0 {
        a + 2.0 * PI
    } else {
        a
    }
}

fn span_rank(units: &[Vector], dim: usize) -> usize {
    let m = DMatrix::from_fn(dim, units.len(), |r, c| units[c][r]);
    let sv = m.singular_values();
    let top = sv.iter().copied().fold(0.0, f64::max);
    sv.iter().filter(|s| **s > 1e-10 * top.max(1.0)).count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VelocitySetKind {
    Singleton,
    Segment,
    Polytope,
}

/// Convex set of admissible velocities, stored by its extreme points.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocitySet {
    vertices: Vec<Vector>,
    kind: VelocitySetKind,
}

impl VelocitySet {
    fn new(vertices: Vec<Vector>) -> Self {
        let kind = match vertices.len() {
            0 | 1 => VelocitySetKind::Singleton,
            2 => VelocitySetKind::Segment,
            _ => VelocitySetKind::Polytope,
        };
        Self { vertices, kind }
    }

    pub fn vertices(&self) -> &[Vector] {
        &self.vertices
    }

    pub fn kind(&self) -> VelocitySetKind {
        self.kind
    }

    /// Whether `v` lies in the convex hull of the vertices, up to `tol`.
    pub fn contains(&self, v: &Vector, tol: f64) -> bool {
        match self.kind {
            VelocitySetKind::Singleton => (v - &self.vertices[0]).norm() <= tol,
            VelocitySetKind::Segment => {
                let a = &self.vertices[0];
                let b = &self.vertices[1];
                let ab = b - a;
                let t = ((v - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
                (v - (a + ab * t)).norm() <= tol
            }
            VelocitySetKind::Polytope => {
                // min Σ|s| s.t. Σ λ_k v_k + s⁺ − s⁻ = v, Σ λ_k = 1, λ, s± ≥ 0
                let k = self.vertices.len();
                let d = v.len();
                let cols = k + 2 * d;
                let mut rows = Vec::with_capacity(d + 1);
                let mut rhs = Vec::with_capacity(d + 1);
                for r in 0..d {
                    let mut row = vec![0.0; cols];
                    for (j, vert) in self.vertices.iter().enumerate() {
                        row[j] = vert[r];
                    }
                    row[k + r] = 1.0;
                    row[k + d + r] = -1.0;
                    rows.push(row);
                    rhs.push(v[r]);
                }
                let mut sum_row = vec![0.0; cols];
                for x in sum_row.iter_mut().take(k) {
                    *x = 1.0;
                }
                rows.push(sum_row);
                rhs.push(1.0);
                let mut cost = vec![0.0; cols];
                for c in cost.iter_mut().skip(k) {
                    *c = 1.0;
                }
                simplex::minimize(&cost, &rows, &rhs)
                    .value()
                    .is_some_and(|residual| residual <= tol)
            }
        }
    }
}
