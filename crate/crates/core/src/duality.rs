//! Observability/reachability duality: `S₂ᵉ(N)` of `Σ(A, C)` against the
//! reachability ellipsoid `R(N)` of `Σ(Aᵀ, Cᵀ)`.

use serde::Serialize;

use crate::ellipsoid::{error_ellipsoid_metrics, hypersphere_coefficient, image_ellipsoid_metrics};
use crate::error::Result;
use crate::gramian::{observability_bundle, reachability_gramian, Horizon};
use crate::model::{dualize, LdtSystem};

pub const DEFAULT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualityReport {
    pub horizon: Horizon,
    pub tolerance: f64,
    #[serde(serialize_with = "crate::serde_float::scalar")]
    pub vol_error: f64,
    #[serde(serialize_with = "crate::serde_float::scalar")]
    pub vol_reachability: f64,
    /// `|vol(S₂ᵉ)·vol(R) − H_n²| / H_n²`.
    #[serde(serialize_with = "crate::serde_float::scalar")]
    pub vol_product_residual: f64,
    /// `|r_i(S₂ᵉ)·r_{n−i+1}(R) − 1|`.
    #[serde(serialize_with = "crate::serde_float::vec")]
    pub radii_residuals: Vec<f64>,
    /// Largest entrywise gap between the image-ellipsoid and `R(N)` radii.
    #[serde(serialize_with = "crate::serde_float::scalar")]
    pub image_reachability_gap: f64,
    pub rank_deficient: bool,
    pub pass: bool,
}

pub fn verify_duality(sys: &LdtSystem, horizon: Horizon, tol: f64) -> Result<DualityReport> {
    let dual = dualize(sys)?;
    let obs = observability_bundle(sys, horizon)?;
    let reach = reachability_gramian(&dual.a_c, &dual.b_c, horizon)?;
    let h_n = hypersphere_coefficient(sys.n())?;

    let err = error_ellipsoid_metrics(&obs)?;
    let img = image_ellipsoid_metrics(&obs)?;
    // R(N) = {x : xᵀG_c⁻¹x ≤ 1} has the geometry of an image set.
    let r = image_ellipsoid_metrics(&reach)?;

    let rank_deficient = !err.is_bounded() || !obs.is_full_rank();
    let n = sys.n();
    let vol_product_residual = if rank_deficient {
        f64::INFINITY
    } else {
        ((err.volume * r.volume - h_n * h_n) / (h_n * h_n)).abs()
    };
    let radii_residuals: Vec<f64> = (0..n)
        .map(|i| {
            let product = err.radii[i] * r.radii[n - 1 - i];
            if product.is_finite() {
                (product - 1.0).abs()
            } else {
                f64::INFINITY
            }
        })
        .collect();
    let image_reachability_gap = img
        .radii
        .iter()
        .zip(&r.radii)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    let pass = !rank_deficient
        && vol_product_residual <= tol
        && radii_residuals.iter().all(|&v| v <= tol);
    Ok(DualityReport {
        horizon,
        tolerance: tol,
        vol_error: err.volume,
        vol_reachability: r.volume,
        vol_product_residual,
        radii_residuals,
        image_reachability_gap,
        rank_deficient,
        pass,
    })
}
