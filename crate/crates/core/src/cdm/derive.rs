use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::catalog::{EgfrEquation, FeatureDef};
use super::{CdmError, Sex};

pub const DAYS_PER_YEAR: f64 = 365.25;

/// Fractional age in years between two dates.
pub fn derive_age(birth_date: NaiveDate, encounter_date: NaiveDate) -> Result<f64, CdmError> {
    let days = (encounter_date - birth_date).num_days();
    if days < 0 {
        return Err(CdmError::Derive(format!(
            "encounter date {encounter_date} precedes birth date {birth_date}"
        )));
    }
    Ok(days as f64 / DAYS_PER_YEAR)
}

pub fn derive_egfr(
    equation: &EgfrEquation,
    serum_creatinine: f64,
    age: f64,
    sex: Sex,
) -> Result<f64, CdmError> {
    if !(serum_creatinine > 0.0) || !serum_creatinine.is_finite() {
        return Err(CdmError::Derive(format!(
            "serum creatinine must be positive, got {serum_creatinine}"
        )));
    }
    if !(age > 0.0) || !age.is_finite() {
        return Err(CdmError::Derive(format!("age must be positive, got {age}")));
    }
    let (kappa, alpha, factor) = match sex {
        Sex::Female => (equation.kappa_female, equation.alpha_female, equation.female_factor),
        Sex::Male => (equation.kappa_male, equation.alpha_male, 1.0),
        Sex::Unknown => {
            return Err(CdmError::Derive("eGFR requires a known sex".into()));
        }
    };
    let ratio = serum_creatinine / kappa;
    Ok(equation.scale
        * ratio.min(1.0).powf(alpha)
        * ratio.max(1.0).powf(equation.exponent_high)
        * equation.age_base.powf(age)
        * factor)
}

/// Serum creatinine that yields `egfr` under `equation`; the inverse of [`derive_egfr`].
pub fn creatinine_for_egfr(
    equation: &EgfrEquation,
    egfr: f64,
    age: f64,
    sex: Sex,
) -> Result<f64, CdmError> {
    if !(egfr > 0.0) {
        return Err(CdmError::Derive(format!("eGFR must be positive, got {egfr}")));
    }
    let (kappa, alpha, factor) = match sex {
        Sex::Female => (equation.kappa_female, equation.alpha_female, equation.female_factor),
        Sex::Male => (equation.kappa_male, equation.alpha_male, 1.0),
        Sex::Unknown => return Err(CdmError::Derive("eGFR requires a known sex".into())),
    };
    // value at ratio == 1 splits the two power-law pieces
    let pivot = equation.scale * equation.age_base.powf(age) * factor;
    let ratio = if egfr >= pivot {
        (egfr / pivot).powf(1.0 / alpha)
    } else {
        (egfr / pivot).powf(1.0 / equation.exponent_high)
    };
    Ok(ratio * kappa)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Band {
    Below,
    Normal,
    Above,
}

/// Band of `value` against the feature's closed normal interval, with the
/// distance to the violated bound (normalized by the interval width when both
/// bounds exist).
pub fn classify_value(feature: &FeatureDef, value: f64) -> Result<(Band, f64), CdmError> {
    if !feature.is_numeric() {
        return Err(CdmError::Classify(format!("{} is categorical", feature.code)));
    }
    let (lo, hi) = (feature.normal_low, feature.normal_high);
    if lo.is_none() && hi.is_none() {
        return Err(CdmError::Classify(format!("{} has no normal bounds", feature.code)));
    }
    let width = match (lo, hi) {
        (Some(l), Some(h)) => h - l,
        _ => 1.0,
    };
    if let Some(l) = lo {
        if value < l {
            return Ok((Band::Below, (l - value) / width));
        }
    }
    if let Some(h) = hi {
        if value > h {
            return Ok((Band::Above, (value - h) / width));
        }
    }
    Ok((Band::Normal, 0.0))
}
