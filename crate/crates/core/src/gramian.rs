//! Observability and reachability matrices and their Gramians.

use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::LdtSystem;

/// Stability margin for infinite-horizon requests.
pub const STABILITY_MARGIN: f64 = 1e-9;

/// Above this state dimension the Stein equation is solved by doubling
/// instead of a dense Kronecker system.
pub const KRONECKER_MAX_DIM: usize = 30;

/// Number of samples `N` of the output sequence, or the limit `N → ∞`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Horizon {
    Finite(usize),
    Infinite,
}

impl Horizon {
    pub fn steps(self) -> Option<usize> {
        match self {
            Horizon::Finite(n) => Some(n),
            Horizon::Infinite => None,
        }
    }
}

impl fmt::Display for Horizon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Horizon::Finite(n) => write!(f, "{n}"),
            Horizon::Infinite => f.write_str("infinite"),
        }
    }
}

impl Serialize for Horizon {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Horizon::Finite(n) => s.serialize_u64(*n as u64),
            Horizon::Infinite => s.serialize_str("infinite"),
        }
    }
}

impl<'de> Deserialize<'de> for Horizon {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Steps(usize),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Steps(n) => Ok(Horizon::Finite(n)),
            Raw::Word(w) if w == "infinite" => Ok(Horizon::Infinite),
            Raw::Word(w) => Err(serde::de::Error::custom(format!("unknown horizon {w:?}"))),
        }
    }
}

/// A Gramian together with the spectral data every downstream metric needs.
#[derive(Debug, Clone, PartialEq)]
pub struct GramianBundle {
    pub horizon: Horizon,
    /// Stacked observability (or reachability) matrix; absent for `N = ∞`.
    pub q: Option<DMatrix<f64>>,
    /// Symmetric positive semidefinite n×n Gramian.
    pub g: DMatrix<f64>,
    pub rank: usize,
    pub min_eig: f64,
    pub max_eig: f64,
    pub determinant: f64,
}

impl GramianBundle {
    pub fn n(&self) -> usize {
        self.g.nrows()
    }

    pub fn is_full_rank(&self) -> bool {
        self.rank == self.n()
    }

    /// Wraps an externally computed Gramian (symmetrized here).
    pub fn from_gramian(horizon: Horizon, g: DMatrix<f64>) -> Result<Self> {
        if !g.is_square() {
            return Err(Error::DimensionMismatch("Gramian must be square".into()));
        }
        check_symmetric(&g, 1e-12)?;
        let g = symmetrize(&g);
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteResult("Gramian".into()));
        }
        let eig = SymmetricEigen::new(g.clone());
        let (min_eig, max_eig) = extreme(&eig.eigenvalues);
        let rank = eigen_rank(eig.eigenvalues.as_slice(), max_eig);
        Ok(Self {
            horizon,
            q: None,
            determinant: determinant_from(eig.eigenvalues.as_slice()),
            g,
            rank,
            min_eig,
            max_eig,
        })
    }

    fn from_stacked(horizon: Horizon, q: DMatrix<f64>, g: DMatrix<f64>) -> Result<Self> {
        let mut bundle = Self::from_gramian(horizon, g)?;
        bundle.rank = numerical_rank(&q);
        bundle.q = Some(q);
        Ok(bundle)
    }
}

pub(crate) fn symmetrize(g: &DMatrix<f64>) -> DMatrix<f64> {
    (g + g.transpose()) * 0.5
}

pub(crate) fn check_symmetric(g: &DMatrix<f64>, rel_tol: f64) -> Result<()> {
    let scale = g.abs().max();
    let asym = (g - g.transpose()).abs().max();
    if asym > rel_tol * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::NotSymmetric(if scale > 0.0 { asym / scale } else { asym }));
    }
    Ok(())
}

fn extreme(values: &nalgebra::DVector<f64>) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    (values.min(), values.max())
}

/// Eigenvalues at or below this count as zero for a PSD matrix.
pub(crate) fn eigen_zero_tolerance(n: usize, max_eig: f64) -> f64 {
    64.0 * n.max(1) as f64 * f64::EPSILON * max_eig.abs()
}

fn eigen_rank(values: &[f64], max_eig: f64) -> usize {
    if max_eig <= 0.0 {
        return 0;
    }
    let tol = eigen_zero_tolerance(values.len(), max_eig);
    values.iter().filter(|&&v| v > tol).count()
}

fn determinant_from(values: &[f64]) -> f64 {
    values.iter().map(|&v| v.max(0.0)).product()
}

/// Numerical rank: singular values below `max(rows, cols)·ε·σ_max` are zero.
pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.singular_values();
    let sigma_max = sv.max();
    if sigma_max <= 0.0 {
        return 0;
    }
    let tol = m.nrows().max(m.ncols()) as f64 * f64::EPSILON * sigma_max;
    sv.iter().filter(|&&s| s > tol).count()
}

pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.complex_eigenvalues()
        .iter()
        .map(|l| l.norm())
        .fold(0.0, f64::max)
}

/// Stacked `[C; CA; …; CA^{N-1}]`, an Nm×n matrix.
pub fn observability_matrix(sys: &LdtSystem, steps: usize) -> Result<DMatrix<f64>> {
    sys.check()?;
    if steps == 0 {
        return Err(Error::ZeroHorizon);
    }
    let (m, n) = (sys.m(), sys.n());
    let mut q = DMatrix::zeros(steps * m, n);
    let mut block = sys.c.clone();
    for k in 0..steps {
        q.view_mut((k * m, 0), (m, n)).copy_from(&block);
        if k + 1 < steps {
            block = &block * &sys.a;
        }
    }
    if q.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteResult(format!("observability matrix at N = {steps}")));
    }
    Ok(q)
}

/// `G_{o,N} = Σ_{k<N} (CAᵏ)ᵀ(CAᵏ)`.
pub fn observability_gramian(sys: &LdtSystem, steps: usize) -> Result<GramianBundle> {
    let q = observability_matrix(sys, steps)?;
    let g = q.tr_mul(&q);
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteResult(format!("Gramian at N = {steps}")));
    }
    GramianBundle::from_stacked(Horizon::Finite(steps), q, symmetrize(&g))
}

/// Limit Gramian `G = AᵀGA + CᵀC` for a Schur-stable `A`.
pub fn infinite_observability_gramian(sys: &LdtSystem) -> Result<GramianBundle> {
    sys.check()?;
    let g = solve_stein(&sys.a, &sys.c.tr_mul(&sys.c))?;
    GramianBundle::from_gramian(Horizon::Infinite, g)
}

pub fn observability_bundle(sys: &LdtSystem, horizon: Horizon) -> Result<GramianBundle> {
    match horizon {
        Horizon::Finite(steps) => observability_gramian(sys, steps),
        Horizon::Infinite => infinite_observability_gramian(sys),
    }
}

/// Reachability Gramian `G_c = Σ A_cᵏB_cB_cᵀ(A_cᵏ)ᵀ = Q_cQ_cᵀ`.
pub fn reachability_gramian(
    a_c: &DMatrix<f64>,
    b_c: &DMatrix<f64>,
    horizon: Horizon,
) -> Result<GramianBundle> {
    if !a_c.is_square() || a_c.nrows() == 0 {
        return Err(Error::DimensionMismatch("A_c must be square and nonempty".into()));
    }
    if b_c.nrows() != a_c.nrows() || b_c.ncols() == 0 {
        return Err(Error::DimensionMismatch(format!(
            "B_c is {}x{}, A_c is {}x{}",
            b_c.nrows(),
            b_c.ncols(),
            a_c.nrows(),
            a_c.ncols()
        )));
    }
    if a_c.iter().chain(b_c.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("A_c or B_c".into()));
    }
    match horizon {
        Horizon::Infinite => {
            let g = solve_stein(&a_c.transpose(), &(b_c * b_c.transpose()))?;
            GramianBundle::from_gramian(Horizon::Infinite, g)
        }
        Horizon::Finite(0) => Err(Error::ZeroHorizon),
        Horizon::Finite(steps) => {
            let (n, p) = (b_c.nrows(), b_c.ncols());
            let mut q = DMatrix::zeros(n, steps * p);
            let mut block = b_c.clone();
            for k in 0..steps {
                q.view_mut((0, k * p), (n, p)).copy_from(&block);
                if k + 1 < steps {
                    block = a_c * &block;
                }
            }
            let g = &q * q.transpose();
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteResult(format!("reachability Gramian at N = {steps}")));
            }
            GramianBundle::from_stacked(Horizon::Finite(steps), q, symmetrize(&g))
        }
    }
}

/// Rank of `Q_{o,N}` and whether it equals n.
pub fn observability_rank(sys: &LdtSystem, steps: usize) -> Result<(usize, bool)> {
    sys.check()?;
    if steps < sys.n() {
        return Err(Error::InvalidConfig(format!(
            "rank test needs N >= n = {}, got {steps}",
            sys.n()
        )));
    }
    let q = observability_matrix(sys, steps)?;
    let rank = numerical_rank(&q);
    Ok((rank, rank == sys.n()))
}

/// Solves the Stein equation `X = AᵀXA + Q`.
pub fn solve_stein(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if !a.is_square() || q.shape() != (n, n) {
        return Err(Error::DimensionMismatch("Stein equation operands".into()));
    }
    let rho = spectral_radius(a);
    if rho >= 1.0 - STABILITY_MARGIN {
        return Err(Error::Divergent { spectral_radius: rho });
    }
    let x = if n <= KRONECKER_MAX_DIM {
        stein_kronecker(a, q)?
    } else {
        stein_doubling(a, q)
    };
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteResult("Stein solution".into()));
    }
    Ok(symmetrize(&x))
}

// vec(AᵀXA) = (Aᵀ ⊗ Aᵀ) vec(X) for column-major vec.
fn stein_kronecker(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let at = a.transpose();
    let lhs = DMatrix::identity(n * n, n * n) - at.kronecker(&at);
    let rhs = nalgebra::DVector::from_column_slice(q.as_slice());
    let sol = lhs
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::NonFiniteResult("singular Stein system".into()))?;
    Ok(DMatrix::from_column_slice(n, n, sol.as_slice()))
}

// Smith doubling: X_{k+1} = X_k + A_kᵀ X_k A_k, A_{k+1} = A_k².
fn stein_doubling(a: &DMatrix<f64>, q: &DMatrix<f64>) -> DMatrix<f64> {
    let mut x = q.clone();
    let mut ak = a.clone();
    for _ in 0..64 {
        let step = ak.transpose() * &x * &ak;
        let done = step.norm() <= f64::EPSILON * x.norm();
        x += step;
        if done {
            break;
        }
        ak = &ak * &ak;
    }
    x
}
