//! Monte Carlo point estimator of the headcount for every domain.
//!
//! Plug-in probabilities of the census-missing indicators are computed once
//! per census unit. Each replicate then draws the missing indicators as
//! independent Bernoulli variables, completes every unit's score with the
//! census-observed part, and evaluates the headcount of every department and
//! municipality. The estimate is the mean over replicates.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, DomainId, Level};
use crate::error::{Error, Result};
use crate::glmm::{predict_plugin, GlmmFit};
use crate::indicator::{is_poor, IndicatorSpec};
use crate::math;
use crate::par;
use crate::rng::{self, Stream, StreamFamily};

/// Replicates evaluated per parallel batch.
const BATCH: usize = 512;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadcountEstimate {
    pub domain: DomainId,
    pub level: Level,
    pub h_hat: f64,
    pub replicates: usize,
    /// Standard deviation of the replicate headcounts over √L.
    pub mc_stderr: f64,
    pub mse: Option<f64>,
    pub cv_percent: Option<f64>,
}

/// Census units reduced to what the Monte Carlo needs: the observed part of
/// each score and the domain membership at both levels.
#[derive(Clone, Debug)]
pub struct CensusFrame {
    observed_score: Vec<f64>,
    missing: Vec<usize>,
    missing_weights: Vec<f64>,
    z: f64,
    muni_of: Vec<usize>,
    dept_of: Vec<usize>,
    munis: Vec<DomainId>,
    depts: Vec<DomainId>,
    muni_sizes: Vec<usize>,
    dept_sizes: Vec<usize>,
}

impl CensusFrame {
    pub fn new(census: &Dataset, spec: &IndicatorSpec) -> Result<Self> {
        if census.k() != spec.k() {
            return Err(Error::IncompatibleSpec(format!(
                "census has {} indicators, spec has {}",
                census.k(),
                spec.k()
            )));
        }
        let observed_score = census
            .records()
            .iter()
            .map(|r| spec.observed_score(&r.indicators))
            .collect::<Result<Vec<f64>>>()
            .map_err(|e| Error::IncompatibleSpec(format!("census-observed indicator unavailable: {e}")))?;
        let missing: Vec<usize> = spec.census_missing().iter().copied().collect();
        let missing_weights = missing.iter().map(|&k| spec.weights()[k]).collect();
        let (munis, muni_of, muni_sizes) = level_membership(census, Level::Municipality);
        let (depts, dept_of, dept_sizes) = level_membership(census, Level::Department);
        Ok(Self {
            observed_score,
            missing,
            missing_weights,
            z: spec.z(),
            muni_of,
            dept_of,
            munis,
            depts,
            muni_sizes,
            dept_sizes,
        })
    }

    pub fn n_units(&self) -> usize {
        self.observed_score.len()
    }

    /// Census-missing indicator positions, ascending.
    pub fn missing(&self) -> &[usize] {
        &self.missing
    }

    pub fn municipalities(&self) -> &[DomainId] {
        &self.munis
    }

    pub fn departments(&self) -> &[DomainId] {
        &self.depts
    }

    /// Headcounts given a realised value of every missing indicator;
    /// `draw(unit, m)` returns the value of the `m`-th missing indicator.
    pub fn headcounts_with(&self, mut draw: impl FnMut(usize, usize) -> bool) -> DomainHeadcounts {
        let mut muni = vec![0usize; self.munis.len()];
        let mut dept = vec![0usize; self.depts.len()];
        for j in 0..self.n_units() {
            let mut q = self.observed_score[j];
            for (m, w) in self.missing_weights.iter().enumerate() {
                if draw(j, m) {
                    q += w;
                }
            }
            if is_poor(q, self.z) {
                muni[self.muni_of[j]] += 1;
                dept[self.dept_of[j]] += 1;
            }
        }
        DomainHeadcounts {
            municipality: muni.iter().zip(&self.muni_sizes).map(|(c, n)| *c as f64 / *n as f64).collect(),
            department: dept.iter().zip(&self.dept_sizes).map(|(c, n)| *c as f64 / *n as f64).collect(),
        }
    }

    pub fn labelled(&self, h: &DomainHeadcounts) -> BTreeMap<(Level, DomainId), f64> {
        let mut out = BTreeMap::new();
        for (d, v) in self.depts.iter().zip(&h.department) {
            out.insert((Level::Department, d.clone()), *v);
        }
        for (d, v) in self.munis.iter().zip(&h.municipality) {
            out.insert((Level::Municipality, d.clone()), *v);
        }
        out
    }
}

fn level_membership(census: &Dataset, level: Level) -> (Vec<DomainId>, Vec<usize>, Vec<usize>) {
    let index = census.index(level);
    let mut of = vec![0usize; census.len()];
    let mut ids = Vec::with_capacity(index.len());
    let mut sizes = Vec::with_capacity(index.len());
    for (i, (d, rows)) in index.iter().enumerate() {
        ids.push(d.clone());
        sizes.push(rows.len());
        for &r in rows {
            of[r] = i;
        }
    }
    (ids, of, sizes)
}

/// One headcount per domain, in the frame's (sorted) domain order.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainHeadcounts {
    pub municipality: Vec<f64>,
    pub department: Vec<f64>,
}

/// Probability that each census-missing indicator equals 1, per census unit.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityTable {
    n_missing: usize,
    values: Vec<f64>,
}

impl ProbabilityTable {
    /// `rows[j][m]`: unit `j`, `m`-th census-missing indicator.
    pub fn from_rows(rows: &[Vec<f64>], n_missing: usize) -> Result<Self> {
        let mut values = Vec::with_capacity(rows.len() * n_missing);
        for r in rows {
            if r.len() != n_missing {
                return Err(Error::WrongArity { expected: n_missing, found: r.len() });
            }
            if r.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::InvalidArgument("probability outside [0, 1]".into()));
            }
            values.extend_from_slice(r);
        }
        Ok(Self { n_missing, values })
    }

    pub fn n_units(&self) -> usize {
        if self.n_missing == 0 {
            0
        } else {
            self.values.len() / self.n_missing
        }
    }

    #[inline]
    pub fn get(&self, unit: usize, m: usize) -> f64 {
        self.values[unit * self.n_missing + m]
    }
}

/// Plug-in probabilities π̂^k for every census unit and census-missing k.
pub fn plugin_probabilities(
    census: &Dataset,
    fits: &BTreeMap<usize, GlmmFit>,
    spec: &IndicatorSpec,
) -> Result<ProbabilityTable> {
    check_fits(fits, spec, census.p())?;
    let models: Vec<&GlmmFit> = spec.census_missing().iter().map(|k| &fits[k]).collect();
    let mut values = Vec::with_capacity(census.len() * models.len());
    for r in census.records() {
        for fit in &models {
            values.push(predict_plugin(fit, &r.covariates, &r.domain)?);
        }
    }
    Ok(ProbabilityTable { n_missing: models.len(), values })
}

pub(crate) fn check_fits(fits: &BTreeMap<usize, GlmmFit>, spec: &IndicatorSpec, p: usize) -> Result<()> {
    for &k in spec.census_missing() {
        let fit = fits.get(&k).ok_or(Error::FitMissing { indicator: k })?;
        if fit.p() != p {
            return Err(Error::IncompatibleSpec(format!(
                "model for indicator {} has {} covariates, census has {p}",
                k + 1,
                fit.p()
            )));
        }
    }
    if let Some(k) = fits.keys().find(|k| !spec.is_census_missing(**k)) {
        return Err(Error::IncompatibleSpec(format!("indicator {} has a model but is observed in the census", k + 1)));
    }
    Ok(())
}

/// One Monte Carlo replicate. `streams[m]` supplies the draws of the `m`-th
/// missing indicator, consumed in census order.
pub fn single_mc_replicate(frame: &CensusFrame, pihat: &ProbabilityTable, streams: &mut [Stream]) -> DomainHeadcounts {
    debug_assert_eq!(streams.len(), frame.missing.len());
    frame.headcounts_with(|j, m| rng::bernoulli(&mut streams[m], pihat.get(j, m)))
}

/// Per-domain running mean and sum of squared deviations (Welford), updated
/// in replicate order.
struct Accumulator {
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Accumulator {
    fn new(n: usize) -> Self {
        Self { n: 0, mean: vec![0.0; n], m2: vec![0.0; n] }
    }

    fn add(&mut self, values: impl Iterator<Item = f64>) {
        self.n += 1;
        let nf = self.n as f64;
        for ((mean, m2), v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(values) {
            let delta = v - *mean;
            *mean += delta / nf;
            *m2 += delta * (v - *mean);
        }
    }

    fn finish(&self) -> Vec<(f64, f64)> {
        let lf = self.n as f64;
        self.mean
            .iter()
            .zip(&self.m2)
            .map(|(&mean, &m2)| {
                let se = if self.n > 1 { math::sqrt((m2 / (lf - 1.0)).max(0.0) / lf) } else { 0.0 };
                (mean.clamp(0.0, 1.0), se)
            })
            .collect()
    }
}

/// Run `replicates` Monte Carlo replicates; replicate `l`, missing indicator
/// `m` draws from `family.stream(&[l, m])`.
pub fn monte_carlo(
    frame: &CensusFrame,
    pihat: &ProbabilityTable,
    replicates: usize,
    family: &StreamFamily,
) -> Result<Vec<HeadcountEstimate>> {
    if replicates == 0 {
        return Err(Error::InvalidArgument("at least one Monte Carlo replicate required".into()));
    }
    if !frame.missing.is_empty() && pihat.n_units() != frame.n_units() {
        return Err(Error::InvalidArgument(format!(
            "probability table covers {} units, census has {}",
            pihat.n_units(),
            frame.n_units()
        )));
    }
    let n_domains = frame.depts.len() + frame.munis.len();
    let mut acc = Accumulator::new(n_domains);
    let mut start = 0;
    while start < replicates {
        let len = BATCH.min(replicates - start);
        let batch = par::map_indexed(len, |i| {
            let l = (start + i) as u64;
            let mut streams: Vec<Stream> = (0..frame.missing.len()).map(|m| family.stream(&[l, m as u64])).collect();
            single_mc_replicate(frame, pihat, &mut streams)
        });
        for h in &batch {
            acc.add(h.department.iter().chain(&h.municipality).copied());
        }
        start += len;
    }
    let stats = acc.finish();
    let levels = frame
        .depts
        .iter()
        .map(|d| (Level::Department, d))
        .chain(frame.munis.iter().map(|d| (Level::Municipality, d)));
    Ok(levels
        .zip(stats)
        .map(|((level, d), (h_hat, mc_stderr))| HeadcountEstimate {
            domain: d.clone(),
            level,
            h_hat,
            replicates,
            mc_stderr,
            mse: None,
            cv_percent: None,
        })
        .collect())
}

/// Point estimates for every department and municipality of the census.
pub fn estimate_headcount(
    census: &Dataset,
    fits: &BTreeMap<usize, GlmmFit>,
    spec: &IndicatorSpec,
    replicates: usize,
    seed: u64,
) -> Result<Vec<HeadcountEstimate>> {
    let frame = CensusFrame::new(census, spec)?;
    let pihat = plugin_probabilities(census, fits, spec)?;
    monte_carlo(&frame, &pihat, replicates, &StreamFamily::new(seed, "estimate"))
}

/// As [`estimate_headcount`] with caller-supplied probabilities.
pub fn estimate_from_probabilities(
    census: &Dataset,
    pihat: &ProbabilityTable,
    spec: &IndicatorSpec,
    replicates: usize,
    seed: u64,
) -> Result<Vec<HeadcountEstimate>> {
    let frame = CensusFrame::new(census, spec)?;
    monte_carlo(&frame, pihat, replicates, &StreamFamily::new(seed, "estimate"))
}
