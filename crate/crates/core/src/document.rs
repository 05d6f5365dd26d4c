//! The JSON scenario document shared by the HTTP service and the CLI.
//!
//! Variants and vaccines are named by id; arrays indexed by variant follow the
//! order of `variants`, arrays indexed by arm start with placebo and follow
//! the order of `vaccines`. The id `placebo` is reserved for arm 0.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::measures::Comparison;
use crate::model::{AllOrNoneProfile, ArmProfile, EpidemicRates, LeakyProfile, StudyHorizon, VariantSet};
use crate::samplesize::DesignSpec;
use crate::scenario::Scenario;
use crate::tnd::{TndParams, TndSampling};

pub const SCHEMA_VERSION: u32 = 1;
pub const PLACEBO_ID: &str = "placebo";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDocument {
    pub schema_version: u32,
    pub variants: Vec<VariantDoc>,
    pub vaccines: Vec<VaccineDoc>,
    pub horizon: f64,
    /// `P(V=m)` per arm, placebo first.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coverage: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tnd: Option<TndDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design: Option<DesignSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantDoc {
    pub id: String,
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VaccineMode {
    Leaky,
    AllOrNone,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VaccineDoc {
    pub id: String,
    pub mode: VaccineMode,
    /// Leaky: `θ_i` per variant.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thetas: Option<Vec<f64>>,
    /// All-or-none: immunity strata. A missing empty-set stratum receives the
    /// remaining share.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strata: Option<Vec<StratumDoc>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StratumDoc {
    pub immune_to: Vec<String>,
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TndDoc {
    pub population: f64,
    pub rate_offtarget: f64,
    pub p_symptom_case: Vec<f64>,
    pub p_symptom_offtarget: f64,
    pub p_seek_care: Vec<f64>,
    pub sampling: TndSampling,
}

/// A comparison named by ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ComparisonDoc {
    VariantSpecific { variant: String, vaccine: String },
    RelativeVariants { variant: String, other: String, vaccine: String },
    RelativeVaccines { variant: String, vaccine: String, reference: String },
}

/// A validation failure with the JSON path of the offending value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, thiserror::Error)]
#[error("{path}: {message}")]
pub struct DocumentError {
    pub path: String,
    pub message: String,
}

impl DocumentError {
    pub fn new(path: impl Into<String>, message: impl std::fmt::Display) -> Self {
        Self { path: path.into(), message: message.to_string() }
    }
}

/// Deserialises `T` from JSON bytes, reporting the path of the first error.
pub fn parse_json<T: serde::de::DeserializeOwned>(bytes: &[u8]) -> Result<T, DocumentError> {
    let mut de = serde_json::Deserializer::from_slice(bytes);
    let value = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        DocumentError::new(if path == "." { "$".to_string() } else { format!("$.{path}") }, e.into_inner())
    })?;
    de.end().map_err(|e| DocumentError::new("$", e))?;
    Ok(value)
}

/// A validated document.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedScenario {
    pub scenario: Scenario,
    pub variant_ids: Vec<String>,
    /// Arm ids, `placebo` first.
    pub arm_ids: Vec<String>,
    pub coverage: Option<Vec<f64>>,
    pub tnd: Option<TndParams>,
    pub design: Option<DesignSpec>,
}

impl ScenarioDocument {
    pub fn parse(bytes: &[u8]) -> Result<Self, DocumentError> {
        parse_json(bytes)
    }

    /// SHA-256 of the canonical serialisation; insensitive to whitespace and
    /// key order of the source text.
    pub fn canonical_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("documents always serialise");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn resolve(&self) -> Result<ResolvedScenario, DocumentError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(DocumentError::new(
                "$.schema_version",
                format!("unsupported schema version {}, expected {SCHEMA_VERSION}", self.schema_version),
            ));
        }
        if self.variants.is_empty() {
            return Err(DocumentError::new("$.variants", "at least one variant is required"));
        }
        let variant_ids: Vec<String> = self.variants.iter().map(|v| v.id.clone()).collect();
        unique_ids(&variant_ids, "$.variants", false)?;
        let rates = EpidemicRates::new(self.variants.iter().map(|v| v.rate).collect())
            .map_err(|e| DocumentError::new("$.variants", e))?;
        let horizon = StudyHorizon::new(self.horizon).map_err(|e| DocumentError::new("$.horizon", e))?;

        let mut arm_ids = vec![PLACEBO_ID.to_string()];
        arm_ids.extend(self.vaccines.iter().map(|v| v.id.clone()));
        unique_ids(&arm_ids[1..], "$.vaccines", true)?;
        let arms = self
            .vaccines
            .iter()
            .enumerate()
            .map(|(k, v)| self.vaccine_profile(v, &variant_ids, &format!("$.vaccines[{k}]")))
            .collect::<Result<Vec<_>, _>>()?;
        let scenario = Scenario::new(rates, arms, horizon).map_err(|e| DocumentError::new("$.vaccines", e))?;

        if let Some(cov) = &self.coverage {
            if cov.len() != arm_ids.len() {
                return Err(DocumentError::new(
                    "$.coverage",
                    format!("expected {} entries (placebo first), found {}", arm_ids.len(), cov.len()),
                ));
            }
            if let Some((k, p)) = cov.iter().enumerate().find(|(_, p)| !(p.is_finite() && (0.0..=1.0).contains(*p))) {
                return Err(DocumentError::new(format!("$.coverage[{k}]"), format!("must lie in [0, 1], got {p}")));
            }
            let total: f64 = cov.iter().sum();
            if (total - 1.0).abs() > crate::model::MIXTURE_TOLERANCE {
                return Err(DocumentError::new("$.coverage", format!("sums to {total}, expected 1")));
            }
        }

        let tnd = match &self.tnd {
            None => None,
            Some(doc) => {
                let coverage = self
                    .coverage
                    .clone()
                    .ok_or_else(|| DocumentError::new("$.coverage", "required when tnd is given"))?;
                let params = TndParams {
                    population: doc.population,
                    rate_offtarget: doc.rate_offtarget,
                    p_symptom_case: doc.p_symptom_case.clone(),
                    p_symptom_offtarget: doc.p_symptom_offtarget,
                    p_seek_care: doc.p_seek_care.clone(),
                    p_vaccinated: coverage,
                    sampling: doc.sampling,
                };
                params
                    .validate(variant_ids.len(), arm_ids.len())
                    .map_err(|e| DocumentError::new("$.tnd", e))?;
                Some(params)
            }
        };

        if let Some(design) = &self.design {
            design.validate().map_err(|e| DocumentError::new("$.design", e))?;
            if self.coverage.is_none() {
                return Err(DocumentError::new("$.coverage", "required when design is given"));
            }
        }

        Ok(ResolvedScenario {
            scenario,
            variant_ids,
            arm_ids,
            coverage: self.coverage.clone(),
            tnd,
            design: self.design.clone(),
        })
    }

    fn vaccine_profile(&self, v: &VaccineDoc, variant_ids: &[String], path: &str) -> Result<ArmProfile, DocumentError> {
        let n = variant_ids.len();
        match v.mode {
            VaccineMode::Leaky => {
                if v.strata.is_some() {
                    return Err(DocumentError::new(format!("{path}.strata"), "not allowed for a leaky vaccine"));
                }
                let thetas = v
                    .thetas
                    .clone()
                    .ok_or_else(|| DocumentError::new(format!("{path}.thetas"), "required for a leaky vaccine"))?;
                if thetas.len() != n {
                    return Err(DocumentError::new(
                        format!("{path}.thetas"),
                        format!("expected one theta per variant ({n}), found {}", thetas.len()),
                    ));
                }
                LeakyProfile::new(thetas)
                    .map(ArmProfile::Leaky)
                    .map_err(|e| DocumentError::new(format!("{path}.thetas"), e))
            }
            VaccineMode::AllOrNone => {
                if v.thetas.is_some() {
                    return Err(DocumentError::new(format!("{path}.thetas"), "not allowed for an all-or-none vaccine"));
                }
                let strata = v.strata.as_ref().ok_or_else(|| {
                    DocumentError::new(format!("{path}.strata"), "required for an all-or-none vaccine")
                })?;
                let mut entries = Vec::with_capacity(strata.len());
                let mut has_empty = false;
                for (k, s) in strata.iter().enumerate() {
                    let mut set = VariantSet::EMPTY;
                    for (q, id) in s.immune_to.iter().enumerate() {
                        let idx = variant_ids.iter().position(|x| x == id).ok_or_else(|| {
                            DocumentError::new(format!("{path}.strata[{k}].immune_to[{q}]"), format!("unknown variant id {id:?}"))
                        })?;
                        set = set.with(idx);
                    }
                    if entries.iter().any(|(g, _)| *g == set) {
                        return Err(DocumentError::new(format!("{path}.strata[{k}]"), "duplicate immunity set"));
                    }
                    has_empty |= set.is_empty();
                    entries.push((set, s.theta));
                }
                let profile = if has_empty {
                    AllOrNoneProfile::new(n, entries)
                } else {
                    AllOrNoneProfile::fill_remainder(n, entries)
                };
                profile.map(ArmProfile::AllOrNone).map_err(|e| DocumentError::new(format!("{path}.strata"), e))
            }
        }
    }
}

fn unique_ids(ids: &[String], path: &str, arms: bool) -> Result<(), DocumentError> {
    for (k, id) in ids.iter().enumerate() {
        if id.is_empty() {
            return Err(DocumentError::new(format!("{path}[{k}].id"), "ids must be nonempty"));
        }
        if arms && id == PLACEBO_ID {
            return Err(DocumentError::new(format!("{path}[{k}].id"), "the id \"placebo\" is reserved"));
        }
        if ids[..k].contains(id) {
            return Err(DocumentError::new(format!("{path}[{k}].id"), format!("duplicate id {id:?}")));
        }
    }
    Ok(())
}

impl ResolvedScenario {
    pub fn variant_index(&self, id: &str, path: &str) -> Result<usize, DocumentError> {
        self.variant_ids
            .iter()
            .position(|x| x == id)
            .ok_or_else(|| DocumentError::new(path, format!("unknown variant id {id:?}")))
    }

    pub fn arm_index(&self, id: &str, path: &str) -> Result<usize, DocumentError> {
        self.arm_ids
            .iter()
            .position(|x| x == id)
            .ok_or_else(|| DocumentError::new(path, format!("unknown arm id {id:?}")))
    }

    fn vaccine_index(&self, id: &str, path: &str) -> Result<usize, DocumentError> {
        match self.arm_index(id, path)? {
            0 => Err(DocumentError::new(path, "placebo is not a vaccine")),
            k => Ok(k),
        }
    }

    /// Maps id-based comparisons to arm and variant indices. `path` locates
    /// the comparison in the request.
    pub fn resolve_comparison(&self, c: &ComparisonDoc, path: &str) -> Result<Comparison, DocumentError> {
        let p = |f: &str| format!("{path}.{f}");
        Ok(match c {
            ComparisonDoc::VariantSpecific { variant, vaccine } => Comparison::VariantSpecific {
                variant: self.variant_index(variant, &p("variant"))?,
                vaccine: self.vaccine_index(vaccine, &p("vaccine"))?,
            },
            ComparisonDoc::RelativeVariants { variant, other, vaccine } => Comparison::RelativeVariants {
                variant: self.variant_index(variant, &p("variant"))?,
                other: self.variant_index(other, &p("other"))?,
                vaccine: self.vaccine_index(vaccine, &p("vaccine"))?,
            },
            ComparisonDoc::RelativeVaccines { variant, vaccine, reference } => Comparison::RelativeVaccines {
                variant: self.variant_index(variant, &p("variant"))?,
                vaccine: self.vaccine_index(vaccine, &p("vaccine"))?,
                reference: self.arm_index(reference, &p("reference"))?,
            },
        })
    }

    /// Label of a comparison in ids rather than indices.
    pub fn comparison_label(&self, c: &Comparison) -> String {
        let v = |i: usize| self.variant_ids[i].as_str();
        let a = |m: usize| self.arm_ids[m].as_str();
        match *c {
            Comparison::VariantSpecific { variant, vaccine } => {
                format!("variant_specific(i={},m={})", v(variant), a(vaccine))
            }
            Comparison::RelativeVariants { variant, other, vaccine } => {
                format!("relative_variants(i={},j={},m={})", v(variant), v(other), a(vaccine))
            }
            Comparison::RelativeVaccines { variant, vaccine, reference } => {
                format!("relative_vaccines(i={},m={},n={})", v(variant), a(vaccine), a(reference))
            }
        }
    }
}
