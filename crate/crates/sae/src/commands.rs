//! The pipeline commands. Each returns the files it wrote; the caller
//! records them in the manifest.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use sae_core::data::check_alignment;
use sae_core::oracle::{self, UnitPovertyProblem};
use sae_core::simulation::{self, DomainPerformance, EstimatorConfig, SimulationReport};
use sae_core::uncertainty::attach_mse;
use sae_core::{Dataset, GlmmFit, HeadcountEstimate, Role};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::io;
use crate::manifest::sha256_hex;

/// Completion state of a successful command.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Ok,
    Warnings,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::Warnings => 2,
        }
    }

    fn warn_if(self, cond: bool) -> Self {
        if cond {
            Status::Warnings
        } else {
            self
        }
    }
}

/// Files written by a command, keyed by name relative to the output directory.
#[derive(Debug, Default)]
pub struct Outputs {
    pub files: BTreeMap<String, String>,
}

impl Outputs {
    fn write(&mut self, dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.files.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }
}

pub fn fit_file_name(indicator: &str) -> String {
    format!("fit_{indicator}.json")
}

fn prepare_out(cfg: &RunConfig) -> Result<&Path> {
    fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    Ok(&cfg.out)
}

fn census_omitted(cfg: &RunConfig) -> &BTreeSet<usize> {
    cfg.spec.census_missing()
}

pub fn load_inputs(cfg: &RunConfig) -> Result<(Dataset, Dataset)> {
    let k = cfg.spec.k();
    let survey = io::load_dataset(cfg.survey_path()?, Role::Survey, &cfg.schema, k, &BTreeSet::new())?;
    let census = io::load_dataset(cfg.census_path()?, Role::Census, &cfg.schema, k, census_omitted(cfg))?;
    let report = check_alignment(&survey, &census, &cfg.spec)?;
    info!("{report}");
    if !report.survey_only.is_empty() {
        warn!("{} survey municipalities are absent from the census", report.survey_only.len());
    }
    Ok((survey, census))
}

fn load_census(cfg: &RunConfig) -> Result<Dataset> {
    Ok(io::load_dataset(cfg.census_path()?, Role::Census, &cfg.schema, cfg.spec.k(), census_omitted(cfg))?)
}

pub fn load_fits(cfg: &RunConfig) -> Result<BTreeMap<usize, GlmmFit>> {
    let mut fits = BTreeMap::new();
    for &k in cfg.spec.census_missing() {
        let path: PathBuf = cfg.fits_dir().join(fit_file_name(&cfg.spec.names()[k]));
        if !path.exists() {
            return Err(sae_core::Error::FitMissing { indicator: k }.into());
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let fit: GlmmFit = serde_json::from_str(&text).map_err(|source| Error::Json { path: path.clone(), source })?;
        fits.insert(k, fit);
    }
    Ok(fits)
}

fn warn_unconverged<'a>(fits: impl IntoIterator<Item = &'a GlmmFit>) -> bool {
    let mut any = false;
    for f in fits {
        if !f.converged {
            warn!("model for `{}` did not converge after {} iterations", f.indicator_name, f.iterations);
            any = true;
        }
    }
    any
}

pub fn cmd_fit(cfg: &RunConfig, out: &mut Outputs) -> Result<Status> {
    let (survey, _) = load_inputs(cfg)?;
    let dir = prepare_out(cfg)?;
    let missing: Vec<usize> = cfg.spec.census_missing().iter().copied().collect();
    let fits = missing
        .par_iter()
        .map(|&k| {
            let mut f = sae_core::fit(&survey, k, &cfg.fit)?;
            f.indicator_name = cfg.spec.names()[k].clone();
            Ok(f)
        })
        .collect::<Result<Vec<GlmmFit>>>()?;
    for f in &fits {
        info!("`{}`: sigma_u = {}, loglik = {}", f.indicator_name, f.sigma_u, f.loglik);
        let path = dir.join(fit_file_name(&f.indicator_name));
        let text = serde_json::to_string_pretty(f).map_err(|source| Error::Json { path, source })?;
        out.write(dir, &fit_file_name(&f.indicator_name), (text + "\n").as_bytes())?;
    }
    Ok(Status::Ok.warn_if(warn_unconverged(&fits)))
}

fn estimates_csv(est: &[HeadcountEstimate], seed: u64) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["domain", "level", "h_hat", "mc_stderr", "L", "seed"])?;
    for e in est {
        w.write_record([
            e.domain.to_string(),
            e.level.as_str().to_string(),
            e.h_hat.to_string(),
            e.mc_stderr.to_string(),
            e.replicates.to_string(),
            seed.to_string(),
        ])?;
    }
    w.into_inner().map_err(|e| Error::io("<csv>", e.into_error()))
}

pub fn cmd_estimate(cfg: &RunConfig, out: &mut Outputs) -> Result<Status> {
    let seed = cfg.seed()?;
    let census = load_census(cfg)?;
    let fits = load_fits(cfg)?;
    let dir = prepare_out(cfg)?;
    let est = sae_core::estimate_headcount(&census, &fits, &cfg.spec, cfg.replicates, seed)?;
    out.write(dir, "estimates.csv", &estimates_csv(&est, seed)?)?;
    Ok(Status::Ok.warn_if(warn_unconverged(fits.values())))
}

pub fn cmd_mse(cfg: &RunConfig, out: &mut Outputs) -> Result<Status> {
    let seed = cfg.seed()?;
    let (survey, census) = load_inputs(cfg)?;
    let fits = load_fits(cfg)?;
    let dir = prepare_out(cfg)?;
    let mut est = sae_core::estimate_headcount(&census, &fits, &cfg.spec, cfg.replicates, seed)?;
    let boot = sae_core::BootstrapConfig { seed, ..cfg.bootstrap.clone() };
    let result = sae_core::bootstrap_mse(&census, &survey, &fits, &cfg.spec, &boot, &cfg.fit)?;
    if result.retries > 0 {
        info!("{} bootstrap replicates were redrawn after failed refits", result.retries);
    }
    attach_mse(&mut est, &result);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["domain", "level", "h_hat", "mse", "rmse", "cv_percent", "B", "refit"])?;
    let mut zero = false;
    for e in &est {
        let mse = e.mse.unwrap_or(f64::NAN);
        let cv = match e.cv_percent {
            Some(c) => c.to_string(),
            None => {
                warn!("{} {}: estimate is zero, CV undefined", e.level.as_str(), e.domain);
                zero = true;
                String::new()
            }
        };
        w.write_record([
            e.domain.to_string(),
            e.level.as_str().to_string(),
            e.h_hat.to_string(),
            mse.to_string(),
            mse.sqrt().to_string(),
            cv,
            boot.b.to_string(),
            boot.refit.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io("<csv>", e.into_error()))?;
    out.write(dir, "mse.csv", &bytes)?;
    Ok(Status::Ok.warn_if(zero || warn_unconverged(fits.values())))
}

fn domain_csv(domains: &[DomainPerformance]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["domain", "bias", "rmse", "cv"])?;
    for d in domains {
        w.write_record([
            d.domain.to_string(),
            d.bias.to_string(),
            d.rmse.to_string(),
            d.cv.map(|c| c.to_string()).unwrap_or_default(),
        ])?;
    }
    w.into_inner().map_err(|e| Error::io("<csv>", e.into_error()))
}

fn summary_csv(reports: &[(String, SimulationReport)]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["scenario", "stat", "min", "q1", "median", "mean", "q3", "max"])?;
    for (name, r) in reports {
        for s in &r.summaries {
            let mut row = vec![name.clone(), s.stat.to_string()];
            row.extend([s.min, s.q1, s.median, s.mean, s.q3, s.max].iter().map(f64::to_string));
            w.write_record(&row)?;
        }
    }
    w.into_inner().map_err(|e| Error::io("<csv>", e.into_error()))
}

pub fn cmd_simulate(cfg: &RunConfig, out: &mut Outputs) -> Result<Status> {
    let seed = cfg.seed()?;
    let pop_cfg = cfg.population()?;
    if cfg.scenarios.is_empty() {
        return Err(Error::Config("no `scenarios` configured".into()));
    }
    let population = simulation::generate_population(&pop_cfg)?;
    let dir = prepare_out(cfg)?;
    let est = EstimatorConfig { replicates: cfg.replicates, fit: cfg.fit.clone() };
    let mut reports = Vec::new();
    let mut failures = false;
    for sc in &cfg.scenarios {
        info!("scenario `{}`: {} runs of {}", sc.name, sc.runs, sc.design.label());
        let r = simulation::run_design_simulation(&population, &sc.design, &cfg.spec, sc.runs, &est, seed)?;
        if r.failures > 0 {
            warn!("scenario `{}`: {} of {} runs failed and were excluded", sc.name, r.failures, r.runs);
            failures = true;
        }
        out.write(dir, &format!("simulation_{}.csv", sc.name), &domain_csv(&r.domains)?)?;
        reports.push((sc.name.clone(), r));
    }
    out.write(dir, "simulation_summary.csv", &summary_csv(&reports)?)?;
    Ok(Status::Ok.warn_if(failures))
}

pub fn cmd_generate(cfg: &RunConfig, out: &mut Outputs) -> Result<Status> {
    let seed = cfg.seed()?;
    let pop_cfg = cfg.population()?;
    let population = simulation::generate_population(&pop_cfg)?;
    let dir = prepare_out(cfg)?;
    let none = BTreeSet::new();
    let mut buf = Vec::new();
    io::write_dataset(&mut buf, &population.data, &cfg.schema, &none)?;
    out.write(dir, "population.csv", &buf)?;
    let mut buf = Vec::new();
    io::write_dataset(&mut buf, &population.data, &cfg.schema, census_omitted(cfg))?;
    out.write(dir, "census.csv", &buf)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["domain", "level", "h_true"])?;
    for ((level, d), h) in &population.truth {
        w.write_record([d.to_string(), level.as_str().to_string(), h.to_string()])?;
    }
    out.write(dir, "truth.csv", &w.into_inner().map_err(|e| Error::io("<csv>", e.into_error()))?)?;
    if let Some(design) = &cfg.sample_design {
        let sample = simulation::draw_sample(&population.data, design, seed)?;
        let mut buf = Vec::new();
        io::write_dataset(&mut buf, &sample, &cfg.schema, &none)?;
        out.write(dir, "survey.csv", &buf)?;
    }
    Ok(Status::Ok)
}

/// Closed-form expected poverty indicator of one unit.
pub fn cmd_oracle(alpha: f64, k: f64, delta: f64, pi: f64, pi2: Option<f64>) -> Result<f64> {
    let problem = UnitPovertyProblem { alpha, k, delta, pis: std::iter::once(pi).chain(pi2).collect() };
    Ok(match pi2 {
        None => oracle::expected_poor_one_missing(&problem)?,
        Some(_) => oracle::expected_poor_two_missing(&problem)?,
    })
}
