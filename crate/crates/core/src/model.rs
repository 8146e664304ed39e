//! Linear discrete-time system models `x_{k+1} = A x_k`, `y_k = C x_k`.
//!
//! Models are plain data. [`validate_system`] reports every problem it finds,
//! while the analysis routines call [`LdtSystem::check`] and fail on the first.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The analyzed plant `Σ(A, C)` with optional physical scaling data.
#[derive(Debug, Clone, PartialEq)]
pub struct LdtSystem {
    pub name: String,
    /// State matrix, n×n.
    pub a: DMatrix<f64>,
    /// Output matrix, m×n.
    pub c: DMatrix<f64>,
    pub rated_states: Option<Vec<f64>>,
    pub rated_outputs: Option<Vec<f64>>,
    pub shared_ranges: Option<Vec<f64>>,
}

/// Dual controllability-side pair `(A_c, B_c) = (Aᵀ, Cᵀ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualSystem {
    pub name: String,
    pub a_c: DMatrix<f64>,
    pub b_c: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseScope {
    /// Bound applies to each sample `w_k`.
    PerSample,
    /// Bound applies to the stacked sequence `W_N`.
    Sequence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseNorm {
    One,
    Two,
    Infinity,
}

/// Bounded measurement noise class `Ω_{a,p}(s)` or `Ω_{N,p}(s)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub scope: NoiseScope,
    pub norm: NoiseNorm,
    pub bound: f64,
}

impl NoiseModel {
    pub fn new(scope: NoiseScope, norm: NoiseNorm, bound: f64) -> Result<Self> {
        if !bound.is_finite() {
            return Err(Error::NonFinite("noise bound".into()));
        }
        if bound <= 0.0 {
            return Err(Error::NonPositive("noise bound".into()));
        }
        Ok(Self { scope, norm, bound })
    }

    /// Unit-energy sequence noise, the only class with ellipsoid theory.
    pub fn unit_energy() -> Self {
        Self {
            scope: NoiseScope::Sequence,
            norm: NoiseNorm::Two,
            bound: 1.0,
        }
    }

    pub fn is_energy_bounded(&self) -> bool {
        self.scope == NoiseScope::Sequence && self.norm == NoiseNorm::Two
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationMode {
    Rated,
    SharedRange,
}

/// How output rated values enter the normalized output matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputDirection {
    /// `C' = diag(y*)⁻¹ C`: each normalized output lives in [-1, 1].
    #[default]
    DivideOutput,
    /// `C' = diag(y*) C`: outputs multiplied by their rated values.
    PaperLiteral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationSpec {
    pub mode: NormalizationMode,
    /// Diagonal of the state scaling `P`.
    pub state_scale: Vec<f64>,
    /// Per-output rated range.
    pub output_scale: Vec<f64>,
    #[serde(default)]
    pub direction: OutputDirection,
}

impl NormalizationSpec {
    /// Rated-interval scaling taken from the model; absent vectors mean ones.
    pub fn rated(sys: &LdtSystem, direction: OutputDirection) -> Self {
        Self {
            mode: NormalizationMode::Rated,
            state_scale: sys
                .rated_states
                .clone()
                .unwrap_or_else(|| vec![1.0; sys.n()]),
            output_scale: sys
                .rated_outputs
                .clone()
                .unwrap_or_else(|| vec![1.0; sys.m()]),
            direction,
        }
    }

    /// Shared-interval scaling taken from the model; absent vectors mean ones.
    pub fn shared(sys: &LdtSystem, direction: OutputDirection) -> Self {
        Self {
            mode: NormalizationMode::SharedRange,
            state_scale: sys
                .shared_ranges
                .clone()
                .unwrap_or_else(|| vec![1.0; sys.n()]),
            output_scale: sys
                .rated_outputs
                .clone()
                .unwrap_or_else(|| vec![1.0; sys.m()]),
            direction,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueKind {
    DimensionMismatch,
    NonFinite,
    NonPositive,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationIssue {
    pub kind: IssueKind,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub valid: bool,
    pub n: usize,
    pub m: usize,
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn first_error(&self) -> Option<Error> {
        self.issues.first().map(|issue| match issue.kind {
            IssueKind::DimensionMismatch => Error::DimensionMismatch(issue.message.clone()),
            IssueKind::NonFinite => Error::NonFinite(issue.message.clone()),
            IssueKind::NonPositive => Error::NonPositive(issue.message.clone()),
        })
    }
}

impl LdtSystem {
    /// Builds and validates a model without scaling data.
    pub fn new(name: impl Into<String>, a: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self> {
        let sys = Self {
            name: name.into(),
            a,
            c,
            rated_states: None,
            rated_outputs: None,
            shared_ranges: None,
        };
        sys.check()?;
        Ok(sys)
    }

    /// Convenience constructor from row-major slices.
    pub fn from_rows(name: impl Into<String>, a: &[&[f64]], c: &[&[f64]]) -> Result<Self> {
        let a = matrix_from_rows(a.iter().map(|r| r.to_vec()).collect(), "A")?;
        let c = matrix_from_rows(c.iter().map(|r| r.to_vec()).collect(), "C")?;
        Self::new(name, a, c)
    }

    pub fn with_rated(mut self, states: Option<Vec<f64>>, outputs: Option<Vec<f64>>) -> Result<Self> {
        self.rated_states = states;
        self.rated_outputs = outputs;
        self.check()?;
        Ok(self)
    }

    pub fn with_shared_ranges(mut self, ranges: Vec<f64>) -> Result<Self> {
        self.shared_ranges = Some(ranges);
        self.check()?;
        Ok(self)
    }

    /// State dimension n.
    pub fn n(&self) -> usize {
        self.a.ncols()
    }

    /// Output dimension m.
    pub fn m(&self) -> usize {
        self.c.nrows()
    }

    pub fn check(&self) -> Result<()> {
        match validate_system(self).first_error() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}

/// Reports every structural problem of a model. Never panics.
pub fn validate_system(sys: &LdtSystem) -> ValidationReport {
    let mut issues = Vec::new();
    let mut push = |kind, message: String| issues.push(ValidationIssue { kind, message });

    let n = sys.a.nrows();
    if sys.a.nrows() != sys.a.ncols() {
        push(
            IssueKind::DimensionMismatch,
            format!("A is {}x{}, expected square", sys.a.nrows(), sys.a.ncols()),
        );
    }
    if n == 0 {
        push(IssueKind::DimensionMismatch, "A is empty".into());
    }
    if sys.c.nrows() == 0 {
        push(IssueKind::DimensionMismatch, "C has no rows".into());
    }
    if sys.c.ncols() != sys.a.ncols() {
        push(
            IssueKind::DimensionMismatch,
            format!("C has {} columns, A has {}", sys.c.ncols(), sys.a.ncols()),
        );
    }
    if sys.a.iter().any(|v| !v.is_finite()) {
        push(IssueKind::NonFinite, "A".into());
    }
    if sys.c.iter().any(|v| !v.is_finite()) {
        push(IssueKind::NonFinite, "C".into());
    }

    let m = sys.c.nrows();
    let vectors = [
        ("rated_states", &sys.rated_states, n),
        ("rated_outputs", &sys.rated_outputs, m),
        ("shared_ranges", &sys.shared_ranges, n),
    ];
    for (label, values, expected) in vectors {
        let Some(values) = values else { continue };
        if values.len() != expected {
            push(
                IssueKind::DimensionMismatch,
                format!("{label} has length {}, expected {expected}", values.len()),
            );
        }
        if values.iter().any(|v| !v.is_finite()) {
            push(IssueKind::NonFinite, label.to_string());
        } else if values.iter().any(|&v| v <= 0.0) {
            push(IssueKind::NonPositive, label.to_string());
        }
    }

    ValidationReport {
        valid: issues.is_empty(),
        n,
        m,
        issues,
    }
}

fn check_scales(sys: &LdtSystem, spec: &NormalizationSpec) -> Result<()> {
    if spec.state_scale.len() != sys.n() {
        return Err(Error::DimensionMismatch(format!(
            "state_scale has length {}, expected {}",
            spec.state_scale.len(),
            sys.n()
        )));
    }
    if spec.output_scale.len() != sys.m() {
        return Err(Error::DimensionMismatch(format!(
            "output_scale has length {}, expected {}",
            spec.output_scale.len(),
            sys.m()
        )));
    }
    for (label, values) in [("state_scale", &spec.state_scale), ("output_scale", &spec.output_scale)] {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(label.into()));
        }
        if values.iter().any(|&v| v <= 0.0) {
            return Err(Error::NonPositive(label.into()));
        }
    }
    Ok(())
}

/// `Σ(P⁻¹AP, C'P)` with `P = diag(state_scale)`.
fn normalize(sys: &LdtSystem, spec: &NormalizationSpec) -> Result<LdtSystem> {
    sys.check()?;
    check_scales(sys, spec)?;
    let p = &spec.state_scale;
    let a = DMatrix::from_fn(sys.n(), sys.n(), |i, j| sys.a[(i, j)] * (p[j] / p[i]));
    let c = DMatrix::from_fn(sys.m(), sys.n(), |i, j| {
        let y = spec.output_scale[i];
        let row_scale = match spec.direction {
            OutputDirection::DivideOutput => 1.0 / y,
            OutputDirection::PaperLiteral => y,
        };
        row_scale * sys.c[(i, j)] * p[j]
    });
    Ok(LdtSystem {
        name: sys.name.clone(),
        a,
        c,
        rated_states: None,
        rated_outputs: None,
        shared_ranges: None,
    })
}

/// Normalizes a plant by its rated state values and sensor ranges.
pub fn normalize_rated(sys: &LdtSystem, spec: &NormalizationSpec) -> Result<LdtSystem> {
    if spec.mode != NormalizationMode::Rated {
        return Err(Error::InvalidConfig("normalize_rated needs mode = rated".into()));
    }
    normalize(sys, spec)
}

/// Normalizes a plant onto common target intervals shared across candidates.
pub fn normalize_shared(sys: &LdtSystem, spec: &NormalizationSpec) -> Result<LdtSystem> {
    if spec.mode != NormalizationMode::SharedRange {
        return Err(Error::InvalidConfig(
            "normalize_shared needs mode = shared_range".into(),
        ));
    }
    normalize(sys, spec)
}

pub fn dualize(sys: &LdtSystem) -> Result<DualSystem> {
    sys.check()?;
    Ok(DualSystem {
        name: sys.name.clone(),
        a_c: sys.a.transpose(),
        b_c: sys.c.transpose(),
    })
}

impl DualSystem {
    /// Maps the controllability-side pair back to `Σ(A_cᵀ, B_cᵀ)`.
    pub fn dualize(&self) -> Result<LdtSystem> {
        LdtSystem::new(self.name.clone(), self.a_c.transpose(), self.b_c.transpose())
    }
}

// ---------------------------------------------------------------------------
// JSON model documents

/// On-disk model schema. Matrices are row-major arrays of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub name: String,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    pub c: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rated_states: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rated_outputs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shared_ranges: Option<Vec<f64>>,
}

const KNOWN_KEYS: [&str; 6] = ["name", "A", "C", "rated_states", "rated_outputs", "shared_ranges"];

/// A parsed model plus the unknown top-level keys that were dropped.
#[derive(Debug, Clone)]
pub struct LoadedModel {
    pub system: LdtSystem,
    pub ignored_keys: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum ModelLoadError {
    #[error("malformed model document: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Invalid(#[from] Error),
}

fn matrix_from_rows(rows: Vec<Vec<f64>>, label: &str) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::DimensionMismatch(format!("{label} has ragged rows")));
    }
    Ok(DMatrix::from_row_iterator(nrows, ncols, rows.into_iter().flatten()))
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl ModelDocument {
    /// Converts without validating the numbers, so callers can report on them.
    pub fn into_system_unchecked(self) -> Result<LdtSystem> {
        Ok(LdtSystem {
            name: self.name,
            a: matrix_from_rows(self.a, "A")?,
            c: matrix_from_rows(self.c, "C")?,
            rated_states: self.rated_states,
            rated_outputs: self.rated_outputs,
            shared_ranges: self.shared_ranges,
        })
    }

    pub fn from_system(sys: &LdtSystem) -> Self {
        Self {
            name: sys.name.clone(),
            a: matrix_to_rows(&sys.a),
            c: matrix_to_rows(&sys.c),
            rated_states: sys.rated_states.clone(),
            rated_outputs: sys.rated_outputs.clone(),
            shared_ranges: sys.shared_ranges.clone(),
        }
    }
}

/// Parses a JSON model document. Unknown keys are dropped and listed in
/// [`LoadedModel::ignored_keys`]; the numeric content is not validated.
pub fn parse_model_unchecked(text: &str) -> std::result::Result<LoadedModel, ModelLoadError> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let mut ignored_keys = Vec::new();
    if let serde_json::Value::Object(map) = &value {
        ignored_keys = map
            .keys()
            .filter(|k| !KNOWN_KEYS.contains(&k.as_str()))
            .cloned()
            .collect();
    }
    let doc: ModelDocument = serde_json::from_value(value)?;
    Ok(LoadedModel {
        system: doc.into_system_unchecked()?,
        ignored_keys,
    })
}

/// Parses and validates a JSON model document.
pub fn parse_model(text: &str) -> std::result::Result<LoadedModel, ModelLoadError> {
    let loaded = parse_model_unchecked(text)?;
    loaded.system.check()?;
    Ok(loaded)
}


#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn triangular() -> LdtSystem {
        LdtSystem::from_rows("triangular", &[&[0.9, -0.165], &[0.0, 0.35]], &[&[1.0, -1.3]]).unwrap()
    }

    #[test]
    fn triangular_model_is_valid() {
        let report = validate_system(&triangular());
        assert!(report.valid);
        assert_eq!((report.n, report.m), (2, 1));
    }

    #[test]
    fn mismatched_output_columns_are_reported() {
        let sys = LdtSystem {
            name: "bad".into(),
            a: DMatrix::identity(2, 2),
            c: DMatrix::from_row_slice(1, 3, &[1.0, 2.0, 3.0]),
            rated_states: None,
            rated_outputs: None,
            shared_ranges: None,
        };
        let report = validate_system(&sys);
        assert!(!report.valid);
        assert_eq!(report.issues[0].kind, IssueKind::DimensionMismatch);
        assert!(matches!(sys.check(), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn zero_rated_output_is_rejected() {
        let err = triangular().with_rated(None, Some(vec![0.0])).unwrap_err();
        assert!(matches!(err, Error::NonPositive(_)));
    }

    #[test]
    fn nan_entry_is_reported() {
        let mut sys = triangular();
        sys.a[(0, 1)] = f64::NAN;
        let report = validate_system(&sys);
        assert_eq!(report.issues[0].kind, IssueKind::NonFinite);
    }

    #[test]
    fn rated_normalization_divides_outputs() {
        let sys = LdtSystem::from_rows("d", &[&[0.5, 0.0], &[0.0, 0.8]], &[&[0.2, 0.0]]).unwrap();
        let spec = NormalizationSpec {
            mode: NormalizationMode::Rated,
            state_scale: vec![1.0, 1.0],
            output_scale: vec![5.0],
            direction: OutputDirection::DivideOutput,
        };
        let out = normalize_rated(&sys, &spec).unwrap();
        assert_eq!(out.a, sys.a);
        assert_abs_diff_eq!(out.c[(0, 0)], 0.04, epsilon = 1e-15);
        assert_eq!(out.c[(0, 1)], 0.0);
    }

    #[test]
    fn identity_scales_leave_model_unchanged() {
        let sys = triangular();
        let out = normalize_rated(&sys, &NormalizationSpec::rated(&sys, OutputDirection::DivideOutput)).unwrap();
        assert_eq!(out.a, sys.a);
        assert_eq!(out.c, sys.c);
    }

    #[test]
    fn state_scaling_is_a_similarity_transform() {
        let sys = triangular();
        let spec = NormalizationSpec {
            mode: NormalizationMode::Rated,
            state_scale: vec![2.0, 1.0],
            output_scale: vec![1.0],
            direction: OutputDirection::DivideOutput,
        };
        let out = normalize_rated(&sys, &spec).unwrap();
        // P⁻¹AP with P = diag(2, 1), worked by hand
        let expected = DMatrix::from_row_slice(2, 2, &[0.9, -0.0825, 0.0, 0.35]);
        assert!((out.a - expected).abs().max() < 1e-15);
    }

    #[test]
    fn shared_equals_rated_for_same_scale() {
        let sys = triangular()
            .with_rated(Some(vec![3.0, 0.5]), Some(vec![2.0]))
            .unwrap()
            .with_shared_ranges(vec![3.0, 0.5])
            .unwrap();
        let rated = normalize_rated(&sys, &NormalizationSpec::rated(&sys, OutputDirection::DivideOutput)).unwrap();
        let shared = normalize_shared(&sys, &NormalizationSpec::shared(&sys, OutputDirection::DivideOutput)).unwrap();
        assert_eq!(rated, shared);
    }

    #[test]
    fn diagonal_plant_paper_literal_scaling() {
        let sys = LdtSystem::from_rows("d", &[&[0.2, 0.0], &[0.0, 0.6]], &[&[1.0, 2.0]])
            .unwrap()
            .with_shared_ranges(vec![3.0, 3.0])
            .unwrap();
        let out = normalize_shared(&sys, &NormalizationSpec::shared(&sys, OutputDirection::PaperLiteral)).unwrap();
        assert_eq!(out.a, sys.a);
        assert_eq!(out.c, DMatrix::from_row_slice(1, 2, &[3.0, 6.0]));
    }

    #[test]
    fn wrong_mode_and_bad_scale_are_errors() {
        let sys = triangular();
        let mut spec = NormalizationSpec::rated(&sys, OutputDirection::DivideOutput);
        assert!(matches!(normalize_shared(&sys, &spec), Err(Error::InvalidConfig(_))));
        spec.state_scale = vec![1.0, 0.0];
        assert!(matches!(normalize_rated(&sys, &spec), Err(Error::NonPositive(_))));
        spec.state_scale = vec![1.0];
        assert!(matches!(normalize_rated(&sys, &spec), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn dualize_transposes_and_is_an_involution() {
        let sys = triangular();
        let dual = dualize(&sys).unwrap();
        assert_eq!(dual.a_c, DMatrix::from_row_slice(2, 2, &[0.9, 0.0, -0.165, 0.35]));
        assert_eq!(dual.b_c, DMatrix::from_column_slice(2, 1, &[1.0, -1.3]));
        assert_eq!(dual.dualize().unwrap(), sys);

        let diag = LdtSystem::from_rows("d", &[&[0.3, 0.0], &[0.0, 0.9]], &[&[1.0, 1.0]]).unwrap();
        let dual = dualize(&diag).unwrap();
        assert_eq!(dual.a_c, diag.a);
        assert_eq!(dual.b_c, DMatrix::from_column_slice(2, 1, &[1.0, 1.0]));
    }

    #[test]
    fn documents_report_unknown_keys() {
        let text = r#"{"name":"x","A":[[0.5]],"C":[[1.0]],"units":"V","extra":1}"#;
        let loaded = parse_model(text).unwrap();
        let mut keys = loaded.ignored_keys.clone();
        keys.sort();
        assert_eq!(keys, vec!["extra", "units"]);
        assert_eq!(loaded.system.n(), 1);
    }

    #[test]
    fn ragged_document_is_rejected() {
        let text = r#"{"name":"x","A":[[0.5, 0.1],[0.2]],"C":[[1.0, 0.0]]}"#;
        assert!(matches!(
            parse_model(text),
            Err(ModelLoadError::Invalid(Error::DimensionMismatch(_)))
        ));
    }

    #[test]
    fn noise_model_bound_must_be_positive() {
        assert!(NoiseModel::new(NoiseScope::Sequence, NoiseNorm::Two, 0.0).is_err());
        assert!(NoiseModel::unit_energy().is_energy_bounded());
        assert!(!NoiseModel::new(NoiseScope::PerSample, NoiseNorm::Infinity, 2.0)
            .unwrap()
            .is_energy_bounded());
    }
}
