use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Range;

use crate::data::{Dataset, DomainId};
use crate::error::{Error, Result};
use crate::math::{self, Matrix};

#[derive(Clone, Debug)]
pub struct Group {
    pub domain: DomainId,
    pub rows: Range<usize>,
}

/// Design matrix (intercept first), binary response and domain grouping for
/// one indicator. Rows are stored grouped by domain.
#[derive(Clone, Debug)]
pub struct ModelData {
    pub(crate) indicator: String,
    pub(crate) ncol: usize,
    pub(crate) x: Vec<f64>,
    pub(crate) y: Vec<bool>,
    pub(crate) groups: Vec<Group>,
    /// Dataset position of each stored row.
    pub(crate) source_rows: Vec<usize>,
}

impl ModelData {
    pub fn from_dataset(data: &Dataset, indicator_index: usize) -> Result<Self> {
        if indicator_index >= data.k() {
            return Err(Error::InvalidArgument(alloc::format!("indicator index {indicator_index} out of range")));
        }
        let indicator = data.indicator_names()[indicator_index].clone();
        let ncol = data.p() + 1;
        let mut x = Vec::with_capacity(data.len() * ncol);
        let mut y = Vec::with_capacity(data.len());
        let mut groups = Vec::with_capacity(data.domain_index().len());
        let mut source_rows = Vec::with_capacity(data.len());
        for (domain, rows) in data.domain_index() {
            let start = y.len();
            for &row in rows {
                let r = &data.records()[row];
                let v = r.indicators[indicator_index]
                    .ok_or_else(|| Error::IndicatorNotObserved { indicator: indicator.clone() })?;
                x.push(1.0);
                x.extend_from_slice(&r.covariates);
                y.push(v);
                source_rows.push(row);
            }
            groups.push(Group { domain: domain.clone(), rows: start..y.len() });
        }
        Ok(Self { indicator, ncol, x, y, groups, source_rows })
    }

    /// Same design with a new response; `y` is indexed by dataset position.
    pub fn with_response(&self, y: &[bool]) -> Self {
        let mut out = self.clone();
        for (slot, &row) in out.y.iter_mut().zip(&self.source_rows) {
            *slot = y[row];
        }
        out
    }

    pub fn indicator(&self) -> &str {
        &self.indicator
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn ncol(&self) -> usize {
        self.ncol
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    #[inline]
    pub(crate) fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.ncol..(i + 1) * self.ncol]
    }

    pub(crate) fn linear_predictor(&self, beta: &[f64]) -> Vec<f64> {
        (0..self.n()).map(|i| math::dot(self.row(i), beta)).collect()
    }

    pub(crate) fn gram(&self) -> Matrix {
        let mut g = Matrix::zeros(self.ncol);
        for i in 0..self.n() {
            let r = self.row(i);
            for a in 0..self.ncol {
                for b in 0..=a {
                    g[(a, b)] += r[a] * r[b];
                }
            }
        }
        for a in 0..self.ncol {
            for b in 0..a {
                g[(b, a)] = g[(a, b)];
            }
        }
        g
    }

    /// Center and scale every covariate column; returns (means, sds).
    pub(crate) fn standardize(&mut self) -> (Vec<f64>, Vec<f64>) {
        let n = self.n() as f64;
        let p = self.ncol - 1;
        let mut means = alloc::vec![0.0; p];
        let mut sds = alloc::vec![1.0; p];
        for j in 0..p {
            let col: Vec<f64> = (0..self.n()).map(|i| self.x[i * self.ncol + j + 1]).collect();
            let m = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            means[j] = m;
            sds[j] = if var > 0.0 { math::sqrt(var) } else { 1.0 };
            for i in 0..self.n() {
                let v = &mut self.x[i * self.ncol + j + 1];
                *v = (*v - m) / sds[j];
            }
        }
        (means, sds)
    }
}
