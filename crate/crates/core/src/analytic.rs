//! Closed-form infinite-horizon determinant, volumes and shape factors for
//! single-output systems with distinct, strictly stable eigenvalues.
//!
//! With `A = PΛP⁻¹` and `c̃_i = Cp_i`, the limit Gramian is
//! `P⁻ᴴ M P⁻¹` where `M_ij = conj(c̃_i) c̃_j / (1 − conj(λ_i) λ_j)` is a
//! Cauchy-type matrix. Its determinant factors as
//!
//! ```text
//! det G = (F1 / |det P|)² · Π_i |Cp_i|² / |1 − λ_i²|
//! F1    = Π_{i<j} |λ_j − λ_i| / |1 − λ_i λ_j|
//! ```
//!
//! For a real spectrum `|1 − λ_i²| = 1 − |λ_i|²`, so the product of `F2_i²`
//! appears directly; with complex pairs the ratio of the two denominators is
//! carried separately as `conjugate_correction`.

use nalgebra::{Complex, DMatrix};
use serde::Serialize;

use crate::ellipsoid::hypersphere_coefficient;
use crate::error::{Error, Result};
use crate::model::LdtSystem;

pub type Complex64 = Complex<f64>;

/// Relative eigenvalue gap below which the spectrum counts as repeated.
pub const DISTINCT_GAP: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct EigenStructure {
    /// Sorted by decreasing modulus, then decreasing imaginary part.
    pub eigenvalues: Vec<Complex64>,
    /// Columns are unit right eigenvectors `p_i`; the largest-magnitude entry
    /// of each is real and positive.
    pub right_eigenvectors: DMatrix<Complex64>,
    /// Rows of `P⁻¹` (`q_i p_i = 1`); absent when `P` is numerically singular.
    pub left_eigenvectors: Option<DMatrix<Complex64>>,
    pub det_p_abs: f64,
    pub distinct: bool,
    pub min_gap: f64,
    pub gap_threshold: f64,
    pub max_modulus: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShapeFactorReport {
    /// Eigenvalues as `[re, im]` pairs.
    pub eigenvalues: Vec<[f64; 2]>,
    /// Evenness factor `Π_{i<j} F1_ij`.
    pub f1: f64,
    pub f1_pairwise: Vec<Vec<f64>>,
    /// `|Cp_i| (1 − |λ_i|²)^{-1/2}`; absent when some `|λ_i| ≥ 1`.
    pub f2: Option<Vec<f64>>,
    /// Modal observability `|Cp_i|`.
    pub f3: Vec<f64>,
    pub det_p_abs: f64,
    /// `Π (1 − |λ_i|²) / |1 − λ_i²|`, exactly 1 for a real spectrum.
    pub conjugate_correction: Option<f64>,
    pub analytic_det: Option<f64>,
    #[serde(serialize_with = "crate::serde_float::option")]
    pub vol_error_inf: Option<f64>,
    pub vol_image_inf: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnalyticVolumes {
    pub determinant: f64,
    #[serde(serialize_with = "crate::serde_float::scalar")]
    pub vol_error: f64,
    pub vol_image: f64,
    /// Zero determinant: the error set is unbounded.
    pub error_unbounded: bool,
}

impl AnalyticVolumes {
    pub fn from_determinant(n: usize, det: f64) -> Result<Self> {
        let h_n = hypersphere_coefficient(n)?;
        let root = det.max(0.0).sqrt();
        Ok(Self {
            determinant: det,
            vol_error: if root > 0.0 { h_n / root } else { f64::INFINITY },
            vol_image: h_n * root,
            error_unbounded: root == 0.0,
        })
    }
}

pub fn eigen_structure(sys: &LdtSystem) -> Result<EigenStructure> {
    sys.check()?;
    eigen_structure_of(&sys.a)
}

pub fn eigen_structure_of(a: &DMatrix<f64>) -> Result<EigenStructure> {
    let n = a.nrows();
    if !a.is_square() || n == 0 {
        return Err(Error::DimensionMismatch("A must be square and nonempty".into()));
    }
    let mut eigenvalues: Vec<Complex64> = nalgebra::linalg::Schur::try_new(a.clone(), f64::EPSILON, 10_000)
        .ok_or_else(|| Error::EigenFailure("Schur iteration did not converge".into()))?
        .complex_eigenvalues()
        .iter()
        .copied()
        .collect();
    if eigenvalues.iter().any(|l| !l.re.is_finite() || !l.im.is_finite()) {
        return Err(Error::EigenFailure("non-finite eigenvalue".into()));
    }
    eigenvalues.sort_by(|x, y| {
        y.norm()
            .total_cmp(&x.norm())
            .then(y.im.total_cmp(&x.im))
            .then(y.re.total_cmp(&x.re))
    });

    let ac = a.map(|v| Complex64::new(v, 0.0));
    let mut p = DMatrix::<Complex64>::zeros(n, n);
    for (k, &lambda) in eigenvalues.iter().enumerate() {
        let shifted = &ac - DMatrix::<Complex64>::identity(n, n) * lambda;
        let v = null_vector(shifted)?;
        p.set_column(k, &normalize_phase(v));
    }

    let max_modulus = eigenvalues.iter().map(|l| l.norm()).fold(0.0, f64::max);
    let mut min_gap = f64::INFINITY;
    for i in 0..n {
        for j in i + 1..n {
            min_gap = min_gap.min((eigenvalues[i] - eigenvalues[j]).norm());
        }
    }
    let gap_threshold = DISTINCT_GAP * max_modulus.max(1.0);
    let det_p_abs = p.clone().lu().determinant().norm();
    let left_eigenvectors = p.clone().try_inverse();

    Ok(EigenStructure {
        eigenvalues,
        right_eigenvectors: p,
        left_eigenvectors,
        det_p_abs,
        distinct: min_gap > gap_threshold,
        min_gap,
        gap_threshold,
        max_modulus,
    })
}

// Right singular vector of the smallest singular value.
fn null_vector(m: DMatrix<Complex64>) -> Result<nalgebra::DVector<Complex64>> {
    let svd = m.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::EigenFailure("SVD returned no right vectors".into()))?;
    let (k, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .ok_or_else(|| Error::EigenFailure("empty SVD".into()))?;
    Ok(v_t.row(k).transpose().map(|z| z.conj()))
}

fn normalize_phase(v: nalgebra::DVector<Complex64>) -> nalgebra::DVector<Complex64> {
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let lead = v
        .iter()
        .copied()
        .fold(Complex64::new(0.0, 0.0), |acc, z| if z.norm() > acc.norm() { z } else { acc });
    let phase = if lead.norm() > 0.0 { lead.conj() / lead.norm() } else { Complex64::new(1.0, 0.0) };
    v.map(|z| z * phase / norm)
}

/// `|λ_i − λ_j| / |1 − λ_i λ_j|`.
pub fn pairwise_evenness(li: Complex64, lj: Complex64) -> f64 {
    (lj - li).norm() / (Complex64::new(1.0, 0.0) - li * lj).norm()
}

/// Eigenvalue evenness factor `F1` of a spectrum.
pub fn evenness_factor(eigenvalues: &[Complex64]) -> f64 {
    let mut f1 = 1.0;
    for i in 0..eigenvalues.len() {
        for j in i + 1..eigenvalues.len() {
            f1 *= pairwise_evenness(eigenvalues[i], eigenvalues[j]);
        }
    }
    f1
}

fn require_single_output(sys: &LdtSystem) -> Result<()> {
    if sys.m() != 1 {
        return Err(Error::MultiOutput(sys.m()));
    }
    Ok(())
}

fn require_distinct(eig: &EigenStructure) -> Result<()> {
    if !eig.distinct {
        return Err(Error::RepeatedEigenvalue {
            gap: eig.min_gap,
            threshold: eig.gap_threshold,
        });
    }
    Ok(())
}

fn require_stable(eig: &EigenStructure) -> Result<()> {
    if eig.max_modulus >= 1.0 {
        return Err(Error::UnstableEigenvalue(eig.max_modulus));
    }
    Ok(())
}

/// Shape factors from an already computed eigenstructure and a 1×n output row.
pub fn shape_factors_from(eig: &EigenStructure, c: &DMatrix<f64>) -> Result<ShapeFactorReport> {
    let n = eig.eigenvalues.len();
    if c.nrows() != 1 {
        return Err(Error::MultiOutput(c.nrows()));
    }
    if c.ncols() != n {
        return Err(Error::DimensionMismatch("C columns vs eigenvector length".into()));
    }
    let lambdas = &eig.eigenvalues;
    let f1_pairwise: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| pairwise_evenness(lambdas[i], lambdas[j])).collect())
        .collect();
    let f1 = evenness_factor(lambdas);

    let cc = c.map(|v| Complex64::new(v, 0.0));
    let f3: Vec<f64> = (0..n)
        .map(|i| (&cc * eig.right_eigenvectors.column(i))[(0, 0)].norm())
        .collect();

    let one = Complex64::new(1.0, 0.0);
    let stable = eig.max_modulus < 1.0;
    let (f2, correction, det) = if stable {
        let f2: Vec<f64> = lambdas
            .iter()
            .zip(&f3)
            .map(|(l, m)| m / (1.0 - l.norm_sqr()).sqrt())
            .collect();
        let correction: f64 = lambdas
            .iter()
            .map(|l| (1.0 - l.norm_sqr()) / (one - l * l).norm())
            .product();
        let f2_sq: f64 = f2.iter().map(|v| v * v).product();
        let det = (f1 / eig.det_p_abs).powi(2) * f2_sq * correction;
        (Some(f2), Some(correction), Some(det))
    } else {
        (None, None, None)
    };
    let volumes = det
        .map(|d| AnalyticVolumes::from_determinant(n, d))
        .transpose()?;

    Ok(ShapeFactorReport {
        eigenvalues: lambdas.iter().map(|l| [l.re, l.im]).collect(),
        f1,
        f1_pairwise,
        f2,
        f3,
        det_p_abs: eig.det_p_abs,
        conjugate_correction: correction,
        analytic_det: det,
        vol_error_inf: volumes.map(|v| v.vol_error),
        vol_image_inf: volumes.map(|v| v.vol_image),
    })
}

/// All shape factors. Needs one output and distinct eigenvalues; the
/// stability-dependent fields are absent when some `|λ_i| ≥ 1`.
pub fn shape_factors(sys: &LdtSystem) -> Result<ShapeFactorReport> {
    sys.check()?;
    require_single_output(sys)?;
    let eig = eigen_structure(sys)?;
    require_distinct(&eig)?;
    shape_factors_from(&eig, &sys.c)
}

/// Closed-form `det G_{o,∞}`.
pub fn analytic_infinite_determinant(sys: &LdtSystem) -> Result<f64> {
    sys.check()?;
    require_single_output(sys)?;
    let eig = eigen_structure(sys)?;
    require_distinct(&eig)?;
    require_stable(&eig)?;
    shape_factors_from(&eig, &sys.c)?
        .analytic_det
        .ok_or(Error::UnstableEigenvalue(eig.max_modulus))
}

pub fn analytic_volumes(sys: &LdtSystem) -> Result<AnalyticVolumes> {
    let det = analytic_infinite_determinant(sys)?;
    AnalyticVolumes::from_determinant(sys.n(), det)
}

/// Controllability-side closed form
/// `det G_{c,∞} = |det P_c · F1|² · Π |q_i B_c|² / |1 − λ_i²|`,
/// with `q_i` the rows of `P_c⁻¹`.
pub fn analytic_reachability_determinant(a_c: &DMatrix<f64>, b_c: &DMatrix<f64>) -> Result<f64> {
    if b_c.ncols() != 1 {
        return Err(Error::MultiOutput(b_c.ncols()));
    }
    if b_c.nrows() != a_c.nrows() {
        return Err(Error::DimensionMismatch("B_c rows vs A_c".into()));
    }
    let eig = eigen_structure_of(a_c)?;
    require_distinct(&eig)?;
    require_stable(&eig)?;
    let q = eig
        .left_eigenvectors
        .as_ref()
        .ok_or_else(|| Error::EigenFailure("eigenvector matrix is singular".into()))?;
    let bc = b_c.map(|v| Complex64::new(v, 0.0));
    let one = Complex64::new(1.0, 0.0);
    let modal: f64 = eig
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(i, l)| (q.row(i) * &bc)[(0, 0)].norm_sqr() / (one - l * l).norm())
        .product();
    Ok((eig.det_p_abs * evenness_factor(&eig.eigenvalues)).powi(2) * modal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gramian::{infinite_observability_gramian, observability_gramian};
    use crate::model::dualize;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn diag_reference() -> LdtSystem {
        LdtSystem::from_rows("diag", &[&[0.3, 0.0], &[0.0, 0.9]], &[&[1.0, 1.0]]).unwrap()
    }

    fn rotation(modulus: f64, theta: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(
            2,
            2,
            &[
                modulus * theta.cos(),
                -modulus * theta.sin(),
                modulus * theta.sin(),
                modulus * theta.cos(),
            ],
        )
    }

    #[test]
    fn diagonal_structure() {
        let eig = eigen_structure(&diag_reference()).unwrap();
        assert_relative_eq!(eig.eigenvalues[0].re, 0.9, epsilon = 1e-14);
        assert_relative_eq!(eig.eigenvalues[1].re, 0.3, epsilon = 1e-14);
        assert_relative_eq!(eig.det_p_abs, 1.0, epsilon = 1e-14);
        assert!(eig.distinct);
        assert_relative_eq!(eig.max_modulus, 0.9, epsilon = 1e-14);
    }

    #[test]
    fn triangular_structure_and_residuals() {
        let sys = LdtSystem::from_rows("triangular", &[&[0.9, -0.165], &[0.0, 0.35]], &[&[1.0, -1.3]]).unwrap();
        let eig = eigen_structure(&sys).unwrap();
        assert_relative_eq!(eig.eigenvalues[0].re, 0.9, epsilon = 1e-14);
        assert_relative_eq!(eig.eigenvalues[1].re, 0.35, epsilon = 1e-14);
        let ac = sys.a.map(|v| c(v, 0.0));
        for (i, l) in eig.eigenvalues.iter().enumerate() {
            let p = eig.right_eigenvectors.column(i);
            assert_relative_eq!(p.norm(), 1.0, epsilon = 1e-14);
            assert!((&ac * p - p * *l).norm() < 1e-12);
        }
        let q = eig.left_eigenvectors.as_ref().unwrap();
        let id = q * &eig.right_eigenvectors;
        assert!((id - DMatrix::<Complex64>::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn rotation_gives_conjugate_pair() {
        let a = rotation(0.9, PI / 6.0);
        let eig = eigen_structure_of(&a).unwrap();
        assert_relative_eq!(eig.eigenvalues[0].norm(), 0.9, epsilon = 1e-14);
        assert_relative_eq!(eig.eigenvalues[0].im, 0.45, epsilon = 1e-14);
        assert!((eig.eigenvalues[1] - eig.eigenvalues[0].conj()).norm() < 1e-14);
    }

    #[test]
    fn closed_form_determinant() {
        let det = analytic_infinite_determinant(&diag_reference()).unwrap();
        let oracle = (0.6f64 / 0.73).powi(2) / 0.91 / 0.19;
        assert_relative_eq!(det, oracle, max_relative = 1e-13);
        let numeric = infinite_observability_gramian(&diag_reference()).unwrap().determinant;
        assert_relative_eq!(det, numeric, max_relative = 1e-10);
    }

    #[test]
    fn orthogonal_output_zeroes_determinant() {
        let sys = LdtSystem::from_rows("o", &[&[0.3, 0.0], &[0.0, 0.9]], &[&[1.0, 0.0]]).unwrap();
        assert_eq!(analytic_infinite_determinant(&sys).unwrap(), 0.0);
        let vols = analytic_volumes(&sys).unwrap();
        assert!(vols.error_unbounded);
        assert!(vols.vol_error.is_infinite());
    }

    #[test]
    fn complex_pair_evenness() {
        let (r, t) = (0.9f64, PI / 6.0);
        let f = pairwise_evenness(c(r * t.cos(), r * t.sin()), c(r * t.cos(), -r * t.sin()));
        // direct arithmetic: 2 r sin t / (1 - r²)
        assert_relative_eq!(f, 2.0 * r * t.sin() / (1.0 - r * r), max_relative = 1e-14);
        assert_relative_eq!(f, 4.736842, max_relative = 1e-6);
    }

    #[test]
    fn real_pair_evenness_matches_closed_form() {
        for (l1, l2) in [(0.3, 0.9), (0.55, 0.9), (0.85, 0.9)] {
            let f1 = evenness_factor(&[c(l1, 0.0), c(l2, 0.0)]);
            assert_relative_eq!(f1, (l2 - l1) / (1.0 - l1 * l2), max_relative = 1e-14);
        }
        // four-decimal roundings: 0.8219, 0.6931, 0.2128
        assert_relative_eq!(evenness_factor(&[c(0.3, 0.0), c(0.9, 0.0)]), 0.821918, epsilon = 1e-6);
        assert_relative_eq!(evenness_factor(&[c(0.55, 0.0), c(0.9, 0.0)]), 0.693069, epsilon = 1e-6);
        assert_relative_eq!(evenness_factor(&[c(0.85, 0.0), c(0.9, 0.0)]), 0.212766, epsilon = 1e-6);
    }

    #[test]
    fn volumes_and_product() {
        let v = analytic_volumes(&diag_reference()).unwrap();
        assert_relative_eq!(v.vol_error, 1.589348, max_relative = 1e-6);
        assert_relative_eq!(v.vol_image, 6.209845, max_relative = 1e-6);
        assert_relative_eq!(v.vol_error * v.vol_image, PI * PI, max_relative = 1e-14);
        let unit = AnalyticVolumes::from_determinant(3, 1.0).unwrap();
        assert_eq!(unit.vol_error, unit.vol_image);
    }

    #[test]
    fn shape_factor_report_reconstructs_determinant() {
        let sys = LdtSystem::new("rot", rotation(0.8, 0.7), DMatrix::from_row_slice(1, 2, &[1.0, 0.4])).unwrap();
        let r = shape_factors(&sys).unwrap();
        let f1_from_pairs = r.f1_pairwise[0][1];
        assert_relative_eq!(r.f1, f1_from_pairs, max_relative = 1e-12);
        let f2 = r.f2.as_ref().unwrap();
        let rebuilt = (r.f1 / r.det_p_abs).powi(2)
            * f2.iter().map(|v| v * v).product::<f64>()
            * r.conjugate_correction.unwrap();
        assert_relative_eq!(r.analytic_det.unwrap(), rebuilt, max_relative = 1e-12);
        let numeric = infinite_observability_gramian(&sys).unwrap().determinant;
        assert_relative_eq!(r.analytic_det.unwrap(), numeric, max_relative = 1e-9);
    }

    #[test]
    fn assumption_violations_are_distinct() {
        let multi = LdtSystem::from_rows("m", &[&[0.3, 0.0], &[0.0, 0.9]], &[&[1.0, 0.0], &[0.0, 1.0]]).unwrap();
        assert_eq!(analytic_infinite_determinant(&multi), Err(Error::MultiOutput(2)));
        let repeated = LdtSystem::from_rows("r", &[&[0.5, 0.0], &[0.0, 0.5]], &[&[1.0, 1.0]]).unwrap();
        assert!(matches!(
            analytic_infinite_determinant(&repeated),
            Err(Error::RepeatedEigenvalue { .. })
        ));
        let unstable = LdtSystem::from_rows("u", &[&[1.2, 0.0], &[0.0, 0.5]], &[&[1.0, 1.0]]).unwrap();
        assert!(matches!(
            analytic_infinite_determinant(&unstable),
            Err(Error::UnstableEigenvalue(_))
        ));
        let report = shape_factors(&unstable).unwrap();
        assert!(report.f2.is_none() && report.analytic_det.is_none());
        assert_eq!(report.f3.len(), 2);
    }

    #[test]
    fn phase_rotation_of_eigenvectors_changes_nothing() {
        let sys = LdtSystem::new("rot", rotation(0.85, 0.4), DMatrix::from_row_slice(1, 2, &[0.3, -1.0])).unwrap();
        let eig = eigen_structure(&sys).unwrap();
        let base = shape_factors_from(&eig, &sys.c).unwrap();
        let mut rotated = eig.clone();
        for (k, phi) in [(0usize, 0.7f64), (1, -2.1)] {
            let u = Complex64::from_polar(1.0, phi);
            let col = rotated.right_eigenvectors.column(k) * u;
            rotated.right_eigenvectors.set_column(k, &col);
        }
        rotated.det_p_abs = rotated.right_eigenvectors.clone().lu().determinant().norm();
        let other = shape_factors_from(&rotated, &sys.c).unwrap();
        assert_relative_eq!(other.det_p_abs, base.det_p_abs, max_relative = 1e-12);
        assert_relative_eq!(other.analytic_det.unwrap(), base.analytic_det.unwrap(), max_relative = 1e-12);
        for (x, y) in other.f3.iter().zip(&base.f3) {
            assert_relative_eq!(x, y, max_relative = 1e-12);
        }
    }

    #[test]
    fn reachability_closed_form_matches_dual() {
        let sys = LdtSystem::from_rows("triangular", &[&[0.9, -0.165], &[0.0, 0.35]], &[&[1.0, -1.3]]).unwrap();
        let dual = dualize(&sys).unwrap();
        let det_c = analytic_reachability_determinant(&dual.a_c, &dual.b_c).unwrap();
        let det_o = analytic_infinite_determinant(&sys).unwrap();
        assert_relative_eq!(det_c, det_o, max_relative = 1e-10);
        let sum = observability_gramian(&sys, 600).unwrap().determinant;
        assert_relative_eq!(det_o, sum, max_relative = 1e-10);
    }
}
