//! Feasible-error and image observability ellipsoids.
//!
//! For a Gramian `G` the error set is `{x : xᵀGx ≤ 1}`, the set of initial
//! state errors compatible with unit-energy noise, and the image set is
//! `{z : zᵀG⁻¹z ≤ 1}`. Their radii are reciprocal, so the volume product is
//! always `H_n²`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gramian::{
    check_symmetric, eigen_zero_tolerance, observability_matrix, GramianBundle, Horizon,
};
use crate::model::LdtSystem;

pub const DEFAULT_SWEEP: usize = 256;
const UNIT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EllipsoidKind {
    ErrorSet,
    ImageSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ellipsoid {
    pub kind: EllipsoidKind,
    pub g: DMatrix<f64>,
    pub horizon: Horizon,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EllipsoidMetrics {
    pub kind: EllipsoidKind,
    /// Descending; `inf` along unbounded directions of an error set.
    #[serde(serialize_with = "crate::serde_float::vec")]
    pub radii: Vec<f64>,
    #[serde(serialize_with = "crate::serde_float::scalar")]
    pub volume: f64,
    pub h_n: f64,
    /// Principal axes matching `radii`, each a unit vector.
    pub axes: Vec<Vec<f64>>,
    /// Null-space directions of `G` (error set unbounded along them).
    pub unbounded_directions: Vec<Vec<f64>>,
}

impl EllipsoidMetrics {
    pub fn is_bounded(&self) -> bool {
        self.volume.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Membership {
    pub inside: bool,
    /// The quadratic form; 1 on the boundary.
    pub value: f64,
}

/// `Γ(k/2)` by the half-integer recursion seeded at `Γ(1/2) = √π`, `Γ(1) = 1`.
pub fn gamma_half(k: usize) -> f64 {
    assert!(k >= 1, "gamma_half needs k >= 1");
    let (mut s, mut value) = if k.is_multiple_of(2) { (1.0, 1.0) } else { (0.5, PI.sqrt()) };
    let target = k as f64 / 2.0;
    while s < target {
        value *= s;
        s += 1.0;
    }
    value
}

/// Unit n-ball volume `H_n = π^{n/2} / Γ(n/2 + 1)`.
pub fn hypersphere_coefficient(n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidConfig("hypersphere coefficient needs n >= 1".into()));
    }
    Ok(PI.powf(n as f64 / 2.0) / gamma_half(n + 2))
}

impl Ellipsoid {
    pub fn error_set(bundle: &GramianBundle) -> Self {
        Self {
            kind: EllipsoidKind::ErrorSet,
            g: bundle.g.clone(),
            horizon: bundle.horizon,
        }
    }

    pub fn image_set(bundle: &GramianBundle) -> Self {
        Self {
            kind: EllipsoidKind::ImageSet,
            g: bundle.g.clone(),
            horizon: bundle.horizon,
        }
    }

    pub fn n(&self) -> usize {
        self.g.nrows()
    }

    pub fn metrics(&self) -> Result<EllipsoidMetrics> {
        metrics_of(&self.g, self.kind)
    }

    /// Membership test; `value` is `xᵀGx` (error) or `xᵀG⁻¹x` (image).
    pub fn contains(&self, x: &DVector<f64>) -> Result<Membership> {
        if x.len() != self.n() {
            return Err(Error::DimensionMismatch(format!(
                "point has length {}, ellipsoid dimension is {}",
                x.len(),
                self.n()
            )));
        }
        let value = match self.kind {
            EllipsoidKind::ErrorSet => quadratic_form(&self.g, x),
            EllipsoidKind::ImageSet => {
                if x.iter().all(|&v| v == 0.0) {
                    0.0
                } else {
                    x.dot(&self.solve(x)?)
                }
            }
        };
        Ok(Membership {
            inside: value <= 1.0,
            value,
        })
    }

    /// Boundary point `d·f` along each unit direction `f`.
    pub fn boundary_points(&self, directions: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
        let zero_tol = eigen_zero_tolerance(self.n(), self.g.norm());
        directions
            .iter()
            .map(|f| {
                if f.len() != self.n() {
                    return Err(Error::DimensionMismatch("direction length".into()));
                }
                let norm = f.norm();
                if (norm - 1.0).abs() > UNIT_TOL {
                    return Err(Error::NotUnitDirection(norm));
                }
                let q = match self.kind {
                    EllipsoidKind::ErrorSet => quadratic_form(&self.g, f),
                    EllipsoidKind::ImageSet => f.dot(&self.solve(f)?),
                };
                if q <= zero_tol {
                    return Err(Error::UnboundedDirection);
                }
                Ok(f / q.sqrt())
            })
            .collect()
    }

    fn solve(&self, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        let rank_deficient = || Error::RankDeficient {
            rank: crate::gramian::numerical_rank(&self.g),
            n: self.n(),
        };
        let chol = self.g.clone().cholesky().ok_or_else(rank_deficient)?;
        let min_diag = chol.l_dirty().diagonal().min();
        if min_diag * min_diag <= eigen_zero_tolerance(self.n(), self.g.norm()) {
            return Err(rank_deficient());
        }
        Ok(chol.solve(rhs))
    }
}

pub fn error_ellipsoid_metrics(bundle: &GramianBundle) -> Result<EllipsoidMetrics> {
    metrics_of(&bundle.g, EllipsoidKind::ErrorSet)
}

pub fn image_ellipsoid_metrics(bundle: &GramianBundle) -> Result<EllipsoidMetrics> {
    metrics_of(&bundle.g, EllipsoidKind::ImageSet)
}

fn metrics_of(g: &DMatrix<f64>, kind: EllipsoidKind) -> Result<EllipsoidMetrics> {
    if !g.is_square() || g.nrows() == 0 {
        return Err(Error::DimensionMismatch("Gramian must be square and nonempty".into()));
    }
    check_symmetric(g, 1e-12)?;
    let n = g.nrows();
    let h_n = hypersphere_coefficient(n)?;
    let eig = SymmetricEigen::new(crate::gramian::symmetrize(g));
    let max_eig = eig.eigenvalues.max();
    let zero_tol = eigen_zero_tolerance(n, max_eig);

    // Error radii grow as eigenvalues shrink, image radii the other way.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        let (a, b) = (eig.eigenvalues[i], eig.eigenvalues[j]);
        match kind {
            EllipsoidKind::ErrorSet => a.total_cmp(&b),
            EllipsoidKind::ImageSet => b.total_cmp(&a),
        }
    });

    let mut radii = Vec::with_capacity(n);
    let mut axes = Vec::with_capacity(n);
    let mut unbounded = Vec::new();
    for &i in &order {
        let mu = eig.eigenvalues[i];
        let axis = canonical_sign(eig.eigenvectors.column(i).iter().copied().collect());
        let null = mu <= zero_tol;
        if null {
            unbounded.push(axis.clone());
        }
        radii.push(match (kind, null) {
            (EllipsoidKind::ErrorSet, true) => f64::INFINITY,
            (EllipsoidKind::ErrorSet, false) => mu.powf(-0.5),
            (EllipsoidKind::ImageSet, true) => 0.0,
            (EllipsoidKind::ImageSet, false) => mu.sqrt(),
        });
        axes.push(axis);
    }
    let volume = h_n * radii.iter().product::<f64>();
    Ok(EllipsoidMetrics {
        kind,
        radii,
        volume,
        h_n,
        axes,
        unbounded_directions: unbounded,
    })
}

fn canonical_sign(mut v: Vec<f64>) -> Vec<f64> {
    let lead = v
        .iter()
        .copied()
        .fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
    if lead < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    v
}

fn quadratic_form(g: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    x.dot(&(g * x))
}

/// `count` unit vectors at equally spaced angles in the plane.
pub fn sweep_directions(count: usize) -> Vec<DVector<f64>> {
    (0..count)
        .map(|k| {
            let t = 2.0 * PI * k as f64 / count as f64;
            DVector::from_column_slice(&[t.cos(), t.sin()])
        })
        .collect()
}

/// Smallest horizon `N ≤ max_steps` whose error set excludes `target`,
/// i.e. `targetᵀ G_{o,N} target > 1`.
pub fn min_samples_for_error(
    sys: &LdtSystem,
    target: &DVector<f64>,
    max_steps: usize,
) -> Result<Option<usize>> {
    sys.check()?;
    if target.len() != sys.n() {
        return Err(Error::DimensionMismatch(format!(
            "target has length {}, expected {}",
            target.len(),
            sys.n()
        )));
    }
    if target.iter().all(|&v| v == 0.0) {
        return Err(Error::ZeroVector);
    }
    if max_steps == 0 {
        return Err(Error::ZeroHorizon);
    }
    let mut state = target.clone();
    let mut energy = 0.0;
    for steps in 1..=max_steps {
        energy += (&sys.c * &state).norm_squared();
        if !energy.is_finite() {
            return Err(Error::NonFiniteResult("output energy".into()));
        }
        if energy > 1.0 {
            return Ok(Some(steps));
        }
        state = &sys.a * state;
    }
    Ok(None)
}

/// Same scan via explicit observability matrices, kept for cross-checks.
pub fn min_samples_by_gramian(
    sys: &LdtSystem,
    target: &DVector<f64>,
    max_steps: usize,
) -> Result<Option<usize>> {
    for steps in 1..=max_steps {
        let q = observability_matrix(sys, steps)?;
        if (&q * target).norm_squared() > 1.0 {
            return Ok(Some(steps));
        }
    }
    Ok(None)
}

/// Whether the error set of `inner` lies inside that of `outer`,
/// equivalently `G_inner ⪰ G_outer`.
pub fn feasible_set_containment(inner: &GramianBundle, outer: &GramianBundle) -> Result<bool> {
    if inner.n() != outer.n() {
        return Err(Error::DimensionMismatch(format!(
            "dimensions {} and {}",
            inner.n(),
            outer.n()
        )));
    }
    let diff = crate::gramian::symmetrize(&(&inner.g - &outer.g));
    let min_eig = SymmetricEigen::new(diff).eigenvalues.min();
    let spectral_norm = inner.max_eig.abs().max(inner.min_eig.abs());
    Ok(min_eig >= -1e-10 * (1.0 + spectral_norm))
}
