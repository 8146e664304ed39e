//! Cross-candidate comparison of observe-ability.
//!
//! Candidates (sensor choices, plant variants) are normalized upstream, then
//! reduced to a [`MetricRow`] each and ranked. A smaller error ellipsoid means
//! a stronger ability, so ranks ascend in `vol_error`.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::analytic::shape_factors;
use crate::ellipsoid::{error_ellipsoid_metrics, image_ellipsoid_metrics};
use crate::error::{Error, Result};
use crate::gramian::{observability_bundle, Horizon};
use crate::model::LdtSystem;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub candidate: String,
    pub horizon: Horizon,
    pub rank: usize,
    pub observable: bool,
    #[serde(serialize_with = "crate::serde_float::scalar")]
    pub vol_error: f64,
    /// Reported only; never used for ordering.
    pub vol_image: f64,
    #[serde(serialize_with = "crate::serde_float::scalar")]
    pub r_min: f64,
    #[serde(serialize_with = "crate::serde_float::scalar")]
    pub r_max: f64,
    pub det_g: f64,
    pub f1: Option<f64>,
    pub f2: Option<Vec<f64>>,
    pub f3: Option<Vec<f64>>,
    /// Why the analytic factors are absent, when they are.
    pub analytic_note: Option<String>,
    pub constraint_violations: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankingMode {
    #[default]
    ConstrainedVolume,
    WeightedSum,
}

/// Lower bounds a candidate must meet to be ranked.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Floors {
    pub r_min: Option<f64>,
    pub r_max: Option<f64>,
    pub f1: Option<f64>,
    /// Applied to every `F2_i`.
    pub f2: Option<f64>,
    /// Applied to every `F3_i`.
    pub f3: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Weights {
    #[serde(default)]
    pub vol_error: f64,
    #[serde(default)]
    pub r_max: f64,
    #[serde(default)]
    pub inv_f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankingPolicy {
    #[serde(default)]
    pub mode: RankingMode,
    #[serde(default)]
    pub floors: Floors,
    #[serde(default)]
    pub weights: Weights,
}

impl RankingPolicy {
    pub fn validate(&self) -> Result<()> {
        let floors = [
            self.floors.r_min,
            self.floors.r_max,
            self.floors.f1,
            self.floors.f2,
            self.floors.f3,
        ];
        if floors.iter().flatten().any(|&f| f.is_nan() || f < 0.0) {
            return Err(Error::InvalidConfig("floors must be nonnegative".into()));
        }
        let w = [self.weights.vol_error, self.weights.r_max, self.weights.inv_f1];
        if w.iter().any(|&v| !v.is_finite() || v < 0.0) {
            return Err(Error::InvalidConfig("weights must be finite and nonnegative".into()));
        }
        if self.mode == RankingMode::WeightedSum && w.iter().all(|&v| v == 0.0) {
            return Err(Error::InvalidConfig("weighted_sum needs a positive weight".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedRow {
    /// 1-based.
    pub position: usize,
    #[serde(serialize_with = "crate::serde_float::scalar")]
    pub score: f64,
    pub row: MetricRow,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ranking {
    pub mode: RankingMode,
    pub ordered: Vec<RankedRow>,
    /// Rows that violated a floor, with their violations filled in.
    pub excluded: Vec<MetricRow>,
    pub empty_notice: Option<String>,
}

pub fn metric_report(sys: &LdtSystem, horizon: Horizon, analytic: bool) -> Result<MetricRow> {
    let bundle = observability_bundle(sys, horizon)?;
    let err = error_ellipsoid_metrics(&bundle)?;
    let img = image_ellipsoid_metrics(&bundle)?;
    let r_max = err.radii.first().copied().unwrap_or(f64::NAN);
    let r_min = err.radii.last().copied().unwrap_or(f64::NAN);

    let mut row = MetricRow {
        candidate: sys.name.clone(),
        horizon,
        rank: bundle.rank,
        observable: bundle.is_full_rank() && err.is_bounded(),
        vol_error: err.volume,
        vol_image: img.volume,
        r_min,
        r_max,
        det_g: bundle.determinant,
        f1: None,
        f2: None,
        f3: None,
        analytic_note: None,
        constraint_violations: Vec::new(),
    };
    if !analytic {
        row.analytic_note = Some("analytic factors not requested".into());
        return Ok(row);
    }
    match shape_factors(sys) {
        Ok(report) => {
            row.f1 = Some(report.f1);
            row.f3 = Some(report.f3);
            row.f2 = report.f2;
            if row.f2.is_none() {
                row.analytic_note = Some("F2 needs all eigenvalue moduli below 1".into());
            }
        }
        Err(e) => row.analytic_note = Some(e.to_string()),
    }
    Ok(row)
}

fn floor_violations(row: &MetricRow, floors: &Floors) -> Vec<String> {
    let mut out = Vec::new();
    let mut scalar = |label: &str, floor: Option<f64>, value: Option<f64>| {
        let Some(floor) = floor else { return };
        match value {
            Some(v) if v >= floor => {}
            Some(v) => out.push(format!("{label} = {v} below floor {floor}")),
            None => out.push(format!("{label} unavailable for floor {floor}")),
        }
    };
    scalar("r_min", floors.r_min, Some(row.r_min));
    scalar("r_max", floors.r_max, Some(row.r_max));
    scalar("F1", floors.f1, row.f1);
    let mut vector = |label: &str, floor: Option<f64>, values: &Option<Vec<f64>>| {
        let Some(floor) = floor else { return };
        match values {
            Some(vs) => {
                for (i, &v) in vs.iter().enumerate() {
                    if v < floor {
                        out.push(format!("{label}[{i}] = {v} below floor {floor}"));
                    }
                }
            }
            None => out.push(format!("{label} unavailable for floor {floor}")),
        }
    };
    vector("F2", floors.f2, &row.f2);
    vector("F3", floors.f3, &row.f3);
    out
}

fn median(mut values: Vec<f64>) -> Option<f64> {
    values.retain(|v| v.is_finite());
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    Some(if values.len().is_multiple_of(2) {
        (values[mid - 1] + values[mid]) / 2.0
    } else {
        values[mid]
    })
}

fn inv_f1(row: &MetricRow) -> f64 {
    match row.f1 {
        Some(f) if f > 0.0 => 1.0 / f,
        _ => f64::INFINITY,
    }
}

fn weighted_scores(rows: &[MetricRow], w: &Weights) -> Vec<f64> {
    let scale = |values: Vec<f64>| match median(values) {
        Some(m) if m > 0.0 => m,
        _ => 1.0,
    };
    let vol_scale = scale(rows.iter().map(|r| r.vol_error).collect());
    let rmax_scale = scale(rows.iter().map(|r| r.r_max).collect());
    let f1_scale = scale(rows.iter().map(inv_f1).collect());
    rows.iter()
        .map(|r| {
            let mut score = 0.0;
            for (weight, value, s) in [
                (w.vol_error, r.vol_error, vol_scale),
                (w.r_max, r.r_max, rmax_scale),
                (w.inv_f1, inv_f1(r), f1_scale),
            ] {
                if weight > 0.0 {
                    score += weight * value / s;
                }
            }
            score
        })
        .collect()
}

/// Orders candidates: strongest observe-ability first.
pub fn rank_candidates(rows: &[MetricRow], policy: &RankingPolicy) -> Result<Ranking> {
    if rows.is_empty() {
        return Err(Error::InvalidConfig("nothing to rank".into()));
    }
    policy.validate()?;

    let mut kept = Vec::new();
    let mut excluded = Vec::new();
    for row in rows {
        let mut row = row.clone();
        row.constraint_violations = floor_violations(&row, &policy.floors);
        if row.constraint_violations.is_empty() {
            kept.push(row);
        } else {
            excluded.push(row);
        }
    }

    let scores = match policy.mode {
        RankingMode::ConstrainedVolume => kept.iter().map(|r| r.vol_error).collect(),
        RankingMode::WeightedSum => weighted_scores(&kept, &policy.weights),
    };
    let mut scored: Vec<(f64, MetricRow)> = scores.into_iter().zip(kept).collect();
    scored.sort_by(|(sa, ra), (sb, rb)| {
        sa.total_cmp(sb)
            .then_with(|| ra.r_max.total_cmp(&rb.r_max))
            .then_with(|| ra.candidate.cmp(&rb.candidate))
            .then(Ordering::Equal)
    });

    let ordered: Vec<RankedRow> = scored
        .into_iter()
        .enumerate()
        .map(|(i, (score, row))| RankedRow {
            position: i + 1,
            score,
            row,
        })
        .collect();
    let empty_notice = ordered
        .is_empty()
        .then(|| format!("all {} candidates violate the floors", rows.len()));
    Ok(Ranking {
        mode: policy.mode,
        ordered,
        excluded,
        empty_notice,
    })
}
