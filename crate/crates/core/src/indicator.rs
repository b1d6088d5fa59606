//! Composite indicator algebra: weighted deprivation score, poverty
//! classification, and the domain headcount ratio.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack on `q > z`. Scores are sums of decimal weights such as 0.1 and 0.2
/// whose binary representations can overshoot the threshold by a few ulps
/// (0.2 + 0.1 + 0.1 = 0.4000000000000001).
pub const SCORE_TOLERANCE: f64 = 1e-12;

const WEIGHT_SUM_TOLERANCE: f64 = 1e-12;

/// Definition of the composite index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpecDocument", into = "SpecDocument")]
pub struct IndicatorSpec {
    weights: Vec<f64>,
    z: f64,
    census_missing: BTreeSet<usize>,
    names: Vec<String>,
}

/// JSON form; `census_missing` is 1-based.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct SpecDocument {
    weights: Vec<f64>,
    z: f64,
    census_missing: Vec<usize>,
    #[serde(default)]
    names: Vec<String>,
}

impl TryFrom<SpecDocument> for IndicatorSpec {
    type Error = Error;
    fn try_from(doc: SpecDocument) -> Result<Self> {
        if doc.census_missing.iter().any(|&i| i == 0) {
            return Err(Error::InvalidSpec("census_missing indices are 1-based".to_string()));
        }
        let names = if doc.names.is_empty() { crate::data::names("y_", doc.weights.len()) } else { doc.names };
        IndicatorSpec::new(doc.weights, doc.z, doc.census_missing.iter().map(|i| i - 1).collect(), names)
    }
}

impl From<IndicatorSpec> for SpecDocument {
    fn from(s: IndicatorSpec) -> Self {
        SpecDocument {
            weights: s.weights,
            z: s.z,
            census_missing: s.census_missing.iter().map(|i| i + 1).collect(),
            names: s.names,
        }
    }
}

impl IndicatorSpec {
    /// `census_missing` holds 0-based indicator positions.
    pub fn new(weights: Vec<f64>, z: f64, census_missing: BTreeSet<usize>, names: Vec<String>) -> Result<Self> {
        let k = weights.len();
        if k == 0 {
            return Err(Error::InvalidSpec("no indicators".to_string()));
        }
        if names.len() != k {
            return Err(Error::InvalidSpec(format!("{} names for {k} weights", names.len())));
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0 && w.is_finite())) {
            return Err(Error::InvalidSpec(format!("weight {w} is negative or non-finite")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::InvalidSpec(format!("weights sum to {sum}, not 1")));
        }
        if !(z > 0.0 && z < 1.0) {
            return Err(Error::InvalidSpec(format!("threshold z = {z} outside (0, 1)")));
        }
        if let Some(&i) = census_missing.iter().find(|&&i| i >= k) {
            return Err(Error::InvalidSpec(format!("census-missing index {} out of range", i + 1)));
        }
        Ok(Self { weights, z, census_missing, names })
    }

    /// Six housing/water/energy indicators at 1/10, education and
    /// employment at 2/10 (both census-missing), z = 0.4.
    pub fn default_eight() -> Self {
        let names = [
            "poor_housing_materials",
            "overcrowding",
            "lack_of_drinking_water",
            "lack_of_sanitation",
            "lack_of_internet",
            "lack_of_electricity",
            "unfinished_education",
            "employment_social_protection",
        ];
        Self::new(
            alloc::vec![0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.2, 0.2],
            0.4,
            [6, 7].into_iter().collect(),
            names.iter().map(|s| s.to_string()).collect(),
        )
        .expect("built-in spec is valid")
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn census_missing(&self) -> &BTreeSet<usize> {
        &self.census_missing
    }

    pub fn is_census_missing(&self, k: usize) -> bool {
        self.census_missing.contains(&k)
    }

    pub fn with_census_missing(&self, census_missing: BTreeSet<usize>) -> Result<Self> {
        Self::new(self.weights.clone(), self.z, census_missing, self.names.clone())
    }

    /// `q = Σ w_k y_k`; every indicator must be present.
    pub fn deprivation_score(&self, y: &[Option<bool>]) -> Result<f64> {
        self.check_len(y.len())?;
        let mut q = 0.0;
        for (index, (w, v)) in self.weights.iter().zip(y).enumerate() {
            match v {
                Some(true) => q += w,
                Some(false) => {}
                None => return Err(Error::MissingIndicatorValue { index }),
            }
        }
        Ok(q)
    }

    /// Contribution of the census-observed indicators only.
    pub fn observed_score(&self, y: &[Option<bool>]) -> Result<f64> {
        self.check_len(y.len())?;
        let mut q = 0.0;
        for (index, (w, v)) in self.weights.iter().zip(y).enumerate() {
            if self.is_census_missing(index) {
                continue;
            }
            match v {
                Some(true) => q += w,
                Some(false) => {}
                None => return Err(Error::MissingIndicatorValue { index }),
            }
        }
        Ok(q)
    }

    pub fn unit_is_poor(&self, y: &[Option<bool>]) -> Result<bool> {
        Ok(is_poor(self.deprivation_score(y)?, self.z))
    }

    /// `H = (1/N) Σ_j I(q_j > z)` over the rows of one domain.
    pub fn headcount<R: AsRef<[Option<bool>]>>(&self, rows: &[R]) -> Result<f64> {
        if rows.is_empty() {
            return Err(Error::EmptyDomain);
        }
        let mut poor = 0usize;
        for r in rows {
            poor += usize::from(self.unit_is_poor(r.as_ref())?);
        }
        Ok(poor as f64 / rows.len() as f64)
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if n != self.k() {
            return Err(Error::DimensionMismatch { expected: self.k(), found: n });
        }
        Ok(())
    }
}

impl Default for IndicatorSpec {
    fn default() -> Self {
        Self::default_eight()
    }
}

/// Strict `q > z`.
#[inline]
pub fn is_poor(q: f64, z: f64) -> bool {
    q > z + SCORE_TOLERANCE
}
