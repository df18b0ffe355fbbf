use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::CdmError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureCategory {
    Demographic,
    Vital,
    Laboratory,
    Derived,
}

/// Coefficients of a creatinine-based eGFR equation of the CKD-EPI family:
///
/// `scale * min(scr/kappa, 1)^alpha * max(scr/kappa, 1)^exponent_high * age_base^age * female_factor`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EgfrEquation {
    pub creatinine_code: String,
    pub scale: f64,
    pub kappa_female: f64,
    pub kappa_male: f64,
    pub alpha_female: f64,
    pub alpha_male: f64,
    pub exponent_high: f64,
    pub age_base: f64,
    pub female_factor: f64,
}

impl EgfrEquation {
    /// CKD-EPI 2021 race-free creatinine equation.
    pub fn ckd_epi_2021() -> Self {
        Self {
            creatinine_code: "creatinine".into(),
            scale: 142.0,
            kappa_female: 0.7,
            kappa_male: 0.9,
            alpha_female: -0.241,
            alpha_male: -0.302,
            exponent_high: -1.200,
            age_base: 0.9938,
            female_factor: 1.012,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDef {
    pub code: String,
    pub name: String,
    pub kind: FeatureKind,
    pub units: String,
    #[serde(default)]
    pub normal_low: Option<f64>,
    #[serde(default)]
    pub normal_high: Option<f64>,
    pub category: FeatureCategory,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equation: Option<EgfrEquation>,
}

impl FeatureDef {
    fn new(
        code: &str,
        name: &str,
        kind: FeatureKind,
        units: &str,
        bounds: (Option<f64>, Option<f64>),
        category: FeatureCategory,
    ) -> Self {
        Self {
            code: code.into(),
            name: name.into(),
            kind,
            units: units.into(),
            normal_low: bounds.0,
            normal_high: bounds.1,
            category,
            equation: None,
        }
    }

    pub fn is_numeric(&self) -> bool {
        self.kind == FeatureKind::Numeric
    }
}

pub const AGE: &str = "age";
pub const EGFR: &str = "egfr";
pub const SEX: &str = "sex";
pub const RACE: &str = "race";

/// Ordered, code-unique registry of clinical features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCatalog {
    features: Vec<FeatureDef>,
    index: HashMap<String, usize>,
}

impl FeatureCatalog {
    pub fn new(features: Vec<FeatureDef>) -> Result<Self, CdmError> {
        let mut index = HashMap::with_capacity(features.len());
        for (i, f) in features.iter().enumerate() {
            if index.insert(f.code.clone(), i).is_some() {
                return Err(CdmError::Catalog(format!("duplicate feature code {:?}", f.code)));
            }
            if let (Some(lo), Some(hi)) = (f.normal_low, f.normal_high) {
                if !(lo < hi) {
                    return Err(CdmError::Catalog(format!(
                        "feature {:?}: normal_low {lo} must be below normal_high {hi}",
                        f.code
                    )));
                }
            }
            if f.kind == FeatureKind::Categorical
                && (f.normal_low.is_some() || f.normal_high.is_some())
            {
                return Err(CdmError::Catalog(format!(
                    "categorical feature {:?} cannot carry normal bounds",
                    f.code
                )));
            }
        }
        let catalog = Self { features, index };
        if let Some(eq) = catalog.get(EGFR).and_then(|f| f.equation.as_ref()) {
            match catalog.get(&eq.creatinine_code) {
                Some(f) if f.is_numeric() => {}
                _ => {
                    return Err(CdmError::Catalog(format!(
                        "eGFR equation references unknown numeric feature {:?}",
                        eq.creatinine_code
                    )))
                }
            }
        }
        Ok(catalog)
    }

    /// Essential clinical indices with standard adult reference ranges.
    ///
    /// The ranges are configuration: write the catalog out with
    /// [`FeatureCatalog::save`], edit, and pass the file to ingest.
    pub fn clinic_default() -> Self {
        use FeatureCategory::*;
        use FeatureKind::*;
        let n = |lo: f64, hi: f64| (Some(lo), Some(hi));
        let hi_only = |hi: f64| (None, Some(hi));
        let lo_only = |lo: f64| (Some(lo), None);
        let none = (None, None);
        let mut egfr = FeatureDef::new(
            EGFR,
            "Estimated glomerular filtration rate",
            Numeric,
            "mL/min/1.73m2",
            n(60.0, 120.0),
            Derived,
        );
        egfr.equation = Some(EgfrEquation::ckd_epi_2021());
        let features = vec![
            FeatureDef::new(SEX, "Sex", Categorical, "", none, Demographic),
            FeatureDef::new(RACE, "Race", Categorical, "", none, Demographic),
            FeatureDef::new(AGE, "Age", Numeric, "years", none, Derived),
            FeatureDef::new("dbp", "Diastolic blood pressure", Numeric, "mmHg", n(60.0, 80.0), Vital),
            FeatureDef::new("sbp", "Systolic blood pressure", Numeric, "mmHg", n(90.0, 120.0), Vital),
            FeatureDef::new("height", "Height", Numeric, "cm", none, Vital),
            FeatureDef::new("weight", "Weight", Numeric, "kg", none, Vital),
            FeatureDef::new("alt", "Alanine aminotransferase (ALT/SGPT)", Numeric, "U/L", n(7.0, 56.0), Laboratory),
            FeatureDef::new("ast", "Aspartate aminotransferase (AST/SGOT)", Numeric, "U/L", n(10.0, 40.0), Laboratory),
            FeatureDef::new("alp", "Alkaline phosphatase", Numeric, "U/L", n(44.0, 147.0), Laboratory),
            FeatureDef::new("chol", "Total cholesterol", Numeric, "mg/dL", n(125.0, 200.0), Laboratory),
            FeatureDef::new("ldl", "Low density lipoprotein cholesterol", Numeric, "mg/dL", hi_only(100.0), Laboratory),
            FeatureDef::new("hdl", "High density lipoprotein cholesterol", Numeric, "mg/dL", lo_only(40.0), Laboratory),
            FeatureDef::new("ck", "Creatine kinase", Numeric, "U/L", n(22.0, 198.0), Laboratory),
            FeatureDef::new("creatinine", "Serum creatinine", Numeric, "mg/dL", n(0.6, 1.3), Laboratory),
            egfr,
            FeatureDef::new("hgb", "Hemoglobin", Numeric, "g/dL", n(12.0, 17.5), Laboratory),
            FeatureDef::new("hba1c", "Hemoglobin A1c", Numeric, "%", n(4.0, 5.7), Laboratory),
            FeatureDef::new("tg", "Triglycerides", Numeric, "mg/dL", hi_only(150.0), Laboratory),
            FeatureDef::new("inr", "International normalized ratio of prothrombin time", Numeric, "", n(0.8, 1.1), Laboratory),
            FeatureDef::new("troponin", "Troponin", Numeric, "ng/mL", hi_only(0.04), Laboratory),
            FeatureDef::new("uacr", "Urine albumin/creatinine ratio", Numeric, "mg/g", hi_only(30.0), Laboratory),
        ];
        Self::new(features).expect("default catalog is valid")
    }

    pub fn features(&self) -> &[FeatureDef] {
        &self.features
    }

    pub fn get(&self, code: &str) -> Option<&FeatureDef> {
        self.index.get(code).map(|&i| &self.features[i])
    }

    pub fn position(&self, code: &str) -> Option<usize> {
        self.index.get(code).copied()
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// Numeric features in catalog order; the column order of visit vectors.
    pub fn numeric(&self) -> impl Iterator<Item = &FeatureDef> {
        self.features.iter().filter(|f| f.is_numeric())
    }

    pub fn egfr_equation(&self) -> Option<&EgfrEquation> {
        self.get(EGFR).and_then(|f| f.equation.as_ref())
    }

    pub fn load(path: &Path) -> Result<Self, CdmError> {
        let text = std::fs::read_to_string(path).map_err(|e| CdmError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, CdmError> {
        let features: Vec<FeatureDef> =
            serde_json::from_str(text).map_err(|e| CdmError::Catalog(e.to_string()))?;
        Self::new(features)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.features).expect("catalog serializes")
    }

    pub fn save(&self, path: &Path) -> Result<(), CdmError> {
        std::fs::write(path, self.to_json() + "\n").map_err(|e| CdmError::io(path, e))
    }
}
