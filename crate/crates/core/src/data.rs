//! Survey and census unit records, their validation, and the alignment
//! contract between the two.

use alloc::borrow::ToOwned;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::indicator::IndicatorSpec;

/// Hierarchical domain code (department or municipality).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DomainId(String);

impl DomainId {
    pub fn new(code: impl Into<String>) -> Self {
        Self(code.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for DomainId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for DomainId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Department,
    Municipality,
}

impl Level {
    pub fn as_str(self) -> &'static str {
        match self {
            Level::Department => "department",
            Level::Municipality => "municipality",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Survey,
    Census,
}

/// One person or household row.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitRecord {
    pub department: DomainId,
    /// Municipality; the level carrying the random intercept.
    pub domain: DomainId,
    /// Optional identifier linking a survey unit to its census row.
    pub unit_id: Option<String>,
    pub covariates: Vec<f64>,
    pub indicators: Vec<Option<bool>>,
    pub design_weight: f64,
}

/// Parse an indicator cell: `0`, `1`, empty or `NA`. Anything else is `Err(())`.
pub fn parse_indicator_token(token: &str) -> core::result::Result<Option<bool>, ()> {
    match token.trim() {
        "" | "NA" => Ok(None),
        "0" => Ok(Some(false)),
        "1" => Ok(Some(true)),
        _ => Err(()),
    }
}

/// A validated, immutable collection of unit records.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    role: Role,
    records: Vec<UnitRecord>,
    covariate_names: Vec<String>,
    indicator_names: Vec<String>,
    domain_index: BTreeMap<DomainId, Vec<usize>>,
    department_index: BTreeMap<DomainId, Vec<usize>>,
    parent: BTreeMap<DomainId, DomainId>,
}

impl Dataset {
    pub fn new(
        role: Role,
        covariate_names: Vec<String>,
        indicator_names: Vec<String>,
        records: Vec<UnitRecord>,
    ) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let p = covariate_names.len();
        let k = indicator_names.len();
        let mut domain_index: BTreeMap<DomainId, Vec<usize>> = BTreeMap::new();
        let mut department_index: BTreeMap<DomainId, Vec<usize>> = BTreeMap::new();
        let mut parent: BTreeMap<DomainId, DomainId> = BTreeMap::new();
        for (row, r) in records.iter().enumerate() {
            if r.covariates.len() != p {
                return Err(Error::RecordShape { row, what: "covariates", expected: p, found: r.covariates.len() });
            }
            if r.indicators.len() != k {
                return Err(Error::RecordShape { row, what: "indicators", expected: k, found: r.indicators.len() });
            }
            if let Some(j) = r.covariates.iter().position(|x| !x.is_finite()) {
                return Err(Error::NonFiniteCovariate { row, column: covariate_names[j].clone() });
            }
            if !(r.design_weight > 0.0 && r.design_weight.is_finite()) {
                return Err(Error::InvalidWeight { row });
            }
            if r.domain.as_str().is_empty() || r.department.as_str().is_empty() {
                return Err(Error::EmptyDomainCode { row });
            }
            if role == Role::Survey {
                if let Some(j) = r.indicators.iter().position(Option::is_none) {
                    return Err(Error::MissingSurveyValue { row, column: indicator_names[j].clone() });
                }
            }
            match parent.get(&r.domain) {
                Some(dept) if *dept != r.department => {
                    return Err(Error::InconsistentHierarchy {
                        muni: r.domain.clone(),
                        first: dept.clone(),
                        second: r.department.clone(),
                    });
                }
                Some(_) => {}
                None => {
                    parent.insert(r.domain.clone(), r.department.clone());
                }
            }
            domain_index.entry(r.domain.clone()).or_default().push(row);
            department_index.entry(r.department.clone()).or_default().push(row);
        }
        Ok(Self { role, records, covariate_names, indicator_names, domain_index, department_index, parent })
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn records(&self) -> &[UnitRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn indicator_names(&self) -> &[String] {
        &self.indicator_names
    }

    /// Number of covariates `p` (intercept excluded).
    pub fn p(&self) -> usize {
        self.covariate_names.len()
    }

    /// Number of indicators `K`.
    pub fn k(&self) -> usize {
        self.indicator_names.len()
    }

    /// Municipality → record positions, in file order.
    pub fn domain_index(&self) -> &BTreeMap<DomainId, Vec<usize>> {
        &self.domain_index
    }

    pub fn department_index(&self) -> &BTreeMap<DomainId, Vec<usize>> {
        &self.department_index
    }

    pub fn index(&self, level: Level) -> &BTreeMap<DomainId, Vec<usize>> {
        match level {
            Level::Department => &self.department_index,
            Level::Municipality => &self.domain_index,
        }
    }

    pub fn department_of(&self, muni: &DomainId) -> Option<&DomainId> {
        self.parent.get(muni)
    }

    /// Records with all values of indicator `k` observed?
    pub fn indicator_fully_observed(&self, k: usize) -> bool {
        self.records.iter().all(|r| r.indicators[k].is_some())
    }

    pub fn indicator_fully_missing(&self, k: usize) -> bool {
        self.records.iter().all(|r| r.indicators[k].is_none())
    }

    /// Copy of this dataset with the given indicators blanked out, as a census.
    pub fn hide_indicators(&self, hidden: &BTreeSet<usize>) -> Self {
        let mut out = self.clone();
        out.role = Role::Census;
        for r in &mut out.records {
            for &k in hidden {
                r.indicators[k] = None;
            }
        }
        out
    }

    /// Rows at `positions` (in the given order) as a new dataset.
    pub fn subset(&self, positions: &[usize], role: Role, weights: Option<&[f64]>) -> Result<Self> {
        let records = positions
            .iter()
            .enumerate()
            .map(|(i, &pos)| {
                let mut r = self.records[pos].clone();
                if let Some(w) = weights {
                    r.design_weight = w[i];
                }
                r
            })
            .collect();
        Self::new(role, self.covariate_names.clone(), self.indicator_names.clone(), records)
    }
}

/// Positions of each survey record in the census, when every survey record
/// carries a unit id present in the census with the same municipality.
pub fn link_units(survey: &Dataset, census: &Dataset) -> Option<Vec<usize>> {
    let mut by_id: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, r) in census.records().iter().enumerate() {
        by_id.insert(r.unit_id.as_deref()?, i);
    }
    survey
        .records()
        .iter()
        .map(|r| {
            let pos = *by_id.get(r.unit_id.as_deref()?)?;
            (census.records()[pos].domain == r.domain).then_some(pos)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AlignmentReport {
    pub covariates: Vec<String>,
    /// Census municipalities present in the survey.
    pub in_sample: Vec<DomainId>,
    /// Census municipalities absent from the survey.
    pub out_of_sample: Vec<DomainId>,
    /// Survey municipalities absent from the census.
    pub survey_only: Vec<DomainId>,
    pub census_observed: Vec<usize>,
    pub census_missing: Vec<usize>,
}

pub fn check_alignment(survey: &Dataset, census: &Dataset, spec: &IndicatorSpec) -> Result<AlignmentReport> {
    if survey.covariate_names() != census.covariate_names() {
        return Err(Error::CovariateMismatch {
            survey: survey.covariate_names().to_vec(),
            census: census.covariate_names().to_vec(),
        });
    }
    for ds in [survey, census] {
        if ds.k() != spec.k() {
            return Err(Error::SpecInconsistent(format!(
                "dataset declares {} indicators, spec has {}",
                ds.k(),
                spec.k()
            )));
        }
    }
    let mut census_observed = Vec::new();
    for k in 0..spec.k() {
        let name = &census.indicator_names()[k];
        if spec.is_census_missing(k) {
            if !census.indicator_fully_missing(k) {
                return Err(Error::SpecInconsistent(format!(
                    "census observes `{name}`, which the spec marks census-missing"
                )));
            }
        } else {
            if !census.indicator_fully_observed(k) {
                return Err(Error::SpecInconsistent(format!("census indicator `{name}` has missing values")));
            }
            census_observed.push(k);
        }
    }
    let survey_domains: BTreeSet<&DomainId> = survey.domain_index().keys().collect();
    let census_domains: BTreeSet<&DomainId> = census.domain_index().keys().collect();
    let (in_sample, out_of_sample): (Vec<_>, Vec<_>) =
        census_domains.iter().map(|d| (*d).clone()).partition(|d| survey_domains.contains(d));
    let survey_only = survey_domains.difference(&census_domains).map(|d| (*d).clone()).collect();
    Ok(AlignmentReport {
        covariates: census.covariate_names().to_vec(),
        in_sample,
        out_of_sample,
        survey_only,
        census_observed,
        census_missing: spec.census_missing().iter().copied().collect(),
    })
}

impl fmt::Display for AlignmentReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "covariates [{}]; {} in-sample, {} out-of-sample, {} survey-only municipalities",
            self.covariates.join(","),
            self.in_sample.len(),
            self.out_of_sample.len(),
            self.survey_only.len()
        )
    }
}

pub(crate) fn names(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| prefix.to_string() + &i.to_string()).collect()
}
