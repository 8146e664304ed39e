//! Monte-Carlo validation of the feasible-error set.
//!
//! Each trial draws a noise sequence `W` with `‖W‖₂ ≤ s`, measures
//! `Y = Q x₀ + W`, runs the least-squares observer and records
//! `x̃ᵀ G x̃` for the estimation error `x̃ = x̂₀ − x₀`. Since `Q G⁻¹ Qᵀ` is an
//! orthogonal projection, that value never exceeds `‖W‖₂²`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gramian::{
    check_symmetric, eigen_zero_tolerance, numerical_rank, observability_bundle,
    observability_matrix, Horizon,
};
use crate::model::{LdtSystem, NoiseModel};

/// Relative slack on the containment test `x̃ᵀGx̃ ≤ s²`.
pub const CONTAINMENT_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// `‖W‖₂ = s`, uniform direction.
    #[default]
    Boundary,
    /// Uniform in the ball `‖W‖₂ ≤ s`.
    Interior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub trials: usize,
    pub seed: u64,
    pub steps: usize,
    pub noise: NoiseModel,
    #[serde(default)]
    pub sampling: SamplingMode,
    /// Fixed initial state; drawn per trial when absent.
    #[serde(default)]
    pub initial_state: Option<Vec<f64>>,
    #[serde(default)]
    pub keep_records: bool,
}

impl BenchConfig {
    pub fn new(trials: usize, seed: u64, steps: usize) -> Self {
        Self {
            trials,
            seed,
            steps,
            noise: NoiseModel::unit_energy(),
            sampling: SamplingMode::Boundary,
            initial_state: None,
            keep_records: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidConfig("trials must be at least 1".into()));
        }
        if self.steps == 0 {
            return Err(Error::ZeroHorizon);
        }
        if !self.noise.is_energy_bounded() {
            return Err(Error::InvalidConfig(format!(
                "noise model {:?}/{:?} is unsupported for ellipsoid validation; \
                 only sequence two-norm bounds have ellipsoid theory",
                self.noise.scope, self.noise.norm
            )));
        }
        if !(self.noise.bound.is_finite() && self.noise.bound > 0.0) {
            return Err(Error::NonPositive("noise bound".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub trial: u64,
    pub noise_norm: f64,
    pub quadratic_form: f64,
    pub error_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchResult {
    pub trials: usize,
    pub seed: u64,
    pub steps: usize,
    pub sampling: SamplingMode,
    pub noise_bound: f64,
    pub containment_fraction: f64,
    pub max_quadratic_form: f64,
    pub mean_quadratic_form: f64,
    pub worst_case_error_norm: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub records: Option<Vec<TrialRecord>>,
}

/// Least-squares observer over a fixed horizon, factored once.
struct Observer {
    q: DMatrix<f64>,
    g: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl Observer {
    fn new(sys: &LdtSystem, steps: usize) -> Result<Self> {
        let q = observability_matrix(sys, steps)?;
        let rank = numerical_rank(&q);
        if rank < sys.n() {
            return Err(Error::RankDeficient { rank, n: sys.n() });
        }
        let g = crate::gramian::symmetrize(&q.tr_mul(&q));
        let chol = g
            .clone()
            .cholesky()
            .ok_or(Error::RankDeficient { rank, n: sys.n() })?;
        Ok(Self { q, g, chol })
    }

    fn estimate(&self, y: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(&self.q.tr_mul(y))
    }
}

/// `x̂₀ = G⁻¹QᵀY` for a stacked output sequence `Y` of length `N·m`.
pub fn least_squares_estimate(sys: &LdtSystem, y: &DVector<f64>) -> Result<DVector<f64>> {
    sys.check()?;
    let m = sys.m();
    if y.is_empty() || !y.len().is_multiple_of(m) {
        return Err(Error::DimensionMismatch(format!(
            "output sequence length {} is not a positive multiple of m = {m}",
            y.len()
        )));
    }
    Ok(Observer::new(sys, y.len() / m)?.estimate(y))
}

fn trial_rng(seed: u64, trial: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

fn normal_vector(rng: &mut ChaCha20Rng, dim: usize) -> DVector<f64> {
    DVector::from_fn(dim, |_, _| rng.sample(StandardNormal))
}

fn draw_noise(rng: &mut ChaCha20Rng, cfg: &BenchConfig, dim: usize) -> DVector<f64> {
    let mut v = normal_vector(rng, dim);
    let mut norm = v.norm();
    while norm == 0.0 {
        v = normal_vector(rng, dim);
        norm = v.norm();
    }
    let radius = match cfg.sampling {
        SamplingMode::Boundary => cfg.noise.bound,
        SamplingMode::Interior => cfg.noise.bound * rng.random::<f64>().powf(1.0 / dim as f64),
    };
    v * (radius / norm)
}

/// Noise sequence of length `dim` for one trial; depends only on
/// `(cfg.seed, trial)`.
pub fn sample_noise(cfg: &BenchConfig, dim: usize, trial: u64) -> Result<DVector<f64>> {
    cfg.validate()?;
    if dim == 0 {
        return Err(Error::InvalidConfig("noise dimension must be positive".into()));
    }
    Ok(draw_noise(&mut trial_rng(cfg.seed, trial), cfg, dim))
}

pub fn run_containment_experiment(sys: &LdtSystem, cfg: &BenchConfig) -> Result<BenchResult> {
    sys.check()?;
    cfg.validate()?;
    let n = sys.n();
    if let Some(x0) = &cfg.initial_state {
        if x0.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "initial_state has length {}, expected {n}",
                x0.len()
            )));
        }
    }
    let observer = Observer::new(sys, cfg.steps)?;
    let dim = cfg.steps * sys.m();

    let records: Vec<TrialRecord> = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|trial| {
            let mut rng = trial_rng(cfg.seed, trial);
            let w = draw_noise(&mut rng, cfg, dim);
            let x0 = match &cfg.initial_state {
                Some(x0) => DVector::from_column_slice(x0),
                None => normal_vector(&mut rng, n),
            };
            let y = &observer.q * &x0 + &w;
            let err = observer.estimate(&y) - x0;
            TrialRecord {
                trial,
                noise_norm: w.norm(),
                quadratic_form: err.dot(&(&observer.g * &err)),
                error_norm: err.norm(),
            }
        })
        .collect();

    let limit = cfg.noise.bound * cfg.noise.bound * (1.0 + CONTAINMENT_SLACK);
    let inside = records.iter().filter(|r| r.quadratic_form <= limit).count();
    let max_quadratic_form = records.iter().map(|r| r.quadratic_form).fold(0.0, f64::max);
    let mean_quadratic_form =
        records.iter().map(|r| r.quadratic_form).sum::<f64>() / records.len() as f64;
    let worst_case_error_norm = records.iter().map(|r| r.error_norm).fold(0.0, f64::max);

    Ok(BenchResult {
        trials: cfg.trials,
        seed: cfg.seed,
        steps: cfg.steps,
        sampling: cfg.sampling,
        noise_bound: cfg.noise.bound,
        containment_fraction: inside as f64 / records.len() as f64,
        max_quadratic_form,
        mean_quadratic_form,
        worst_case_error_norm,
        records: cfg.keep_records.then_some(records),
    })
}

/// `‖G⁻¹‖₂·‖Λ‖₂` for output noise covariance `Λ`; infinite for a singular
/// Gramian.
pub fn covariance_error_bound(sys: &LdtSystem, horizon: Horizon, lambda: &DMatrix<f64>) -> Result<f64> {
    sys.check()?;
    if lambda.shape() != (sys.m(), sys.m()) {
        return Err(Error::DimensionMismatch(format!(
            "covariance is {}x{}, expected {m}x{m}",
            lambda.nrows(),
            lambda.ncols(),
            m = sys.m()
        )));
    }
    if lambda.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("covariance".into()));
    }
    check_symmetric(lambda, 1e-12)?;
    let lambda_eigs = SymmetricEigen::new(crate::gramian::symmetrize(lambda)).eigenvalues;
    if lambda_eigs.min() < -eigen_zero_tolerance(sys.m(), lambda_eigs.max()) {
        return Err(Error::InvalidConfig("covariance is not positive semidefinite".into()));
    }
    let noise_norm = lambda_eigs.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if noise_norm == 0.0 {
        return Ok(0.0);
    }
    let bundle = observability_bundle(sys, horizon)?;
    if bundle.min_eig <= eigen_zero_tolerance(sys.n(), bundle.max_eig) {
        return Ok(f64::INFINITY);
    }
    Ok(noise_norm / bundle.min_eig)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{NoiseNorm, NoiseScope};
    use approx::assert_relative_eq;

    fn triangular() -> LdtSystem {
        LdtSystem::from_rows("triangular", &[&[0.9, -0.165], &[0.0, 0.35]], &[&[1.0, -1.3]]).unwrap()
    }

    fn diag_reference() -> LdtSystem {
        LdtSystem::from_rows("d", &[&[0.3, 0.0], &[0.0, 0.9]], &[&[1.0, 1.0]]).unwrap()
    }

    #[test]
    fn noise_free_estimate_recovers_state() {
        let sys = triangular();
        let x0 = DVector::from_column_slice(&[1.0, -2.0]);
        let y = observability_matrix(&sys, 6).unwrap() * &x0;
        let est = least_squares_estimate(&sys, &y).unwrap();
        assert!((est - x0).norm() < 1e-10);
        assert_eq!(least_squares_estimate(&sys, &DVector::zeros(6)).unwrap(), DVector::zeros(2));
    }

    #[test]
    fn unobservable_estimate_is_rejected() {
        let sys = LdtSystem::from_rows("u", &[&[0.4, 0.0], &[0.0, 0.7]], &[&[1.0, 0.0]]).unwrap();
        assert!(matches!(
            least_squares_estimate(&sys, &DVector::zeros(5)),
            Err(Error::RankDeficient { rank: 1, n: 2 })
        ));
    }

    #[test]
    fn unit_noise_error_is_inside_error_set() {
        let sys = triangular();
        let q = observability_matrix(&sys, 6).unwrap();
        let g = q.tr_mul(&q);
        let cfg = BenchConfig::new(1, 7, 6);
        for trial in 0..50 {
            let w = sample_noise(&cfg, 6, trial).unwrap();
            let err = least_squares_estimate(&sys, &w).unwrap();
            assert!(err.dot(&(&g * &err)) <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn noise_sampling_contract() {
        let mut cfg = BenchConfig::new(1, 42, 4);
        for trial in 0..20 {
            let w = sample_noise(&cfg, 12, trial).unwrap();
            assert!((w.norm() - 1.0).abs() <= 1e-12);
            assert_eq!(w, sample_noise(&cfg, 12, trial).unwrap());
        }
        assert_ne!(sample_noise(&cfg, 12, 0).unwrap(), sample_noise(&cfg, 12, 1).unwrap());
        cfg.sampling = SamplingMode::Interior;
        for trial in 0..20 {
            assert!(sample_noise(&cfg, 12, trial).unwrap().norm() <= 1.0);
        }
    }

    #[test]
    fn unsupported_noise_model_is_diagnosed() {
        let mut cfg = BenchConfig::new(10, 1, 4);
        cfg.noise = NoiseModel::new(NoiseScope::PerSample, NoiseNorm::Infinity, 1.0).unwrap();
        let err = run_containment_experiment(&triangular(), &cfg).unwrap_err();
        assert!(err.to_string().contains("unsupported for ellipsoid validation"));
        assert!(BenchConfig::new(0, 1, 4).validate().is_err());
    }

    #[test]
    fn experiment_is_contained_and_reproducible() {
        let cfg = BenchConfig::new(2000, 42, 6);
        let a = run_containment_experiment(&triangular(), &cfg).unwrap();
        assert_eq!(a.containment_fraction, 1.0);
        assert!(a.max_quadratic_form <= 1.0 + 1e-10);
        assert_eq!(a, run_containment_experiment(&triangular(), &cfg).unwrap());

        let mut interior = cfg.clone();
        interior.sampling = SamplingMode::Interior;
        let b = run_containment_experiment(&triangular(), &interior).unwrap();
        assert!(b.max_quadratic_form <= a.max_quadratic_form);
    }

    #[test]
    fn result_does_not_depend_on_initial_state() {
        let mut cfg = BenchConfig::new(300, 9, 6);
        cfg.keep_records = true;
        cfg.initial_state = Some(vec![0.0, 0.0]);
        let a = run_containment_experiment(&triangular(), &cfg).unwrap();
        cfg.initial_state = Some(vec![3.0, -1.5]);
        let b = run_containment_experiment(&triangular(), &cfg).unwrap();
        for (x, y) in a.records.unwrap().iter().zip(b.records.unwrap().iter()) {
            assert_relative_eq!(x.quadratic_form, y.quadratic_form, epsilon = 1e-12);
        }
        assert_relative_eq!(a.max_quadratic_form, b.max_quadratic_form, epsilon = 1e-12);
    }

    #[test]
    fn covariance_bound_cases() {
        let sys = diag_reference();
        let zero = DMatrix::zeros(1, 1);
        assert_eq!(covariance_error_bound(&sys, Horizon::Infinite, &zero).unwrap(), 0.0);
        let lam = DMatrix::from_element(1, 1, 0.01);
        let b = covariance_error_bound(&sys, Horizon::Infinite, &lam).unwrap();
        // μ_min of the closed-form Gramian = 0.688684...
        assert_relative_eq!(b, 0.014520436, max_relative = 1e-7);
        let b4 = covariance_error_bound(&sys, Horizon::Infinite, &(lam * 4.0)).unwrap();
        assert_relative_eq!(b4, 4.0 * b, max_relative = 1e-14);

        let unobs = LdtSystem::from_rows("u", &[&[0.4, 0.0], &[0.0, 0.7]], &[&[1.0, 0.0]]).unwrap();
        let inf = covariance_error_bound(&unobs, Horizon::Finite(5), &DMatrix::identity(1, 1)).unwrap();
        assert!(inf.is_infinite());
    }

    #[test]
    fn covariance_bound_is_non_increasing_in_horizon() {
        let sys = triangular();
        let lam = DMatrix::identity(1, 1);
        let mut prev = f64::INFINITY;
        for steps in 2..30 {
            let b = covariance_error_bound(&sys, Horizon::Finite(steps), &lam).unwrap();
            assert!(b <= prev * (1.0 + 1e-12));
            prev = b;
        }
    }
}
