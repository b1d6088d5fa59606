use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

struct Run {
    dir: TempDir,
}

impl Run {
    fn new() -> Self {
        Self { dir: tempfile::tempdir().unwrap() }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn file(&self, name: &str, text: &str) -> PathBuf {
        let p = self.path(name);
        fs::write(&p, text).unwrap();
        p
    }

    fn config(&self, mut cfg: Value) -> PathBuf {
        let obj = cfg.as_object_mut().unwrap();
        obj.entry("out").or_insert(json!(self.path("out")));
        obj.entry("seed").or_insert(json!(7));
        self.file("config.json", &serde_json::to_string_pretty(&cfg).unwrap())
    }

    fn sae(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_sae"))
            .arg("--config")
            .arg(self.path("config.json"))
            .args(args)
            .output()
            .unwrap()
    }

    fn read(&self, name: &str) -> String {
        fs::read_to_string(self.path("out").join(name)).unwrap()
    }
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn two_indicator_spec() -> Value {
    json!({"weights": [0.5, 0.5], "z": 0.4, "census_missing": [2]})
}

/// Census where the first indicator decides poverty and the second is
/// pinned to zero by the fit below.
fn degenerate_toy(run: &Run, refit: bool) {
    let survey = run.file(
        "survey.csv",
        "domain_muni,weight,x_1,y_1,y_2\n01001,2,0.5,1,0\n01002,1,-0.2,1,0\n02001,1,1.0,0,0\n",
    );
    let census = run.file("census.csv", "domain_muni,x_1,y_1\n01001,0.5,1\n01001,0.1,0\n01002,-0.2,1\n01002,0.3,1\n02001,1.0,0\n");
    fs::create_dir_all(run.path("out")).unwrap();
    let fit = json!({
        "indicator": "y_2", "beta": [-800.0, 0.0], "sigma_u": 0.0, "u_hat": {},
        "loglik": 0.0, "converged": true, "iterations": 0
    });
    fs::write(run.path("out").join("fit_y_2.json"), fit.to_string()).unwrap();
    run.config(json!({
        "survey": survey, "census": census, "spec": two_indicator_spec(), "L": 10,
        "bootstrap": {"B": 4, "L_inner": 5, "refit": refit}
    }));
}

const TOY_ESTIMATES: &str = "domain,level,h_hat,mc_stderr,L,seed
01,department,0.75,0,10,7
02,department,0,0,10,7
01001,municipality,0.5,0,10,7
01002,municipality,1,0,10,7
02001,municipality,0,0,10,7
";

#[test]
fn estimate_of_deterministic_toy_is_exact_and_reproducible() {
    let run = Run::new();
    degenerate_toy(&run, false);
    let o = run.sae(&["estimate"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(run.read("estimates.csv"), TOY_ESTIMATES);
    let manifest: Value = serde_json::from_str(&run.read("manifest.json")).unwrap();
    let digest = manifest["outputs"]["estimates.csv"].as_str().unwrap().to_string();
    assert_eq!(manifest["command"], "estimate");
    assert_eq!(manifest["seed"], 7);

    let o = run.sae(&["estimate", "--threads", "3"]);
    assert_eq!(o.status.code(), Some(0));
    let again: Value = serde_json::from_str(&run.read("manifest.json")).unwrap();
    assert_eq!(again["outputs"]["estimates.csv"].as_str().unwrap(), digest);
}

#[test]
fn seed_flag_overrides_config() {
    let run = Run::new();
    degenerate_toy(&run, false);
    let o = run.sae(&["estimate", "--seed", "99"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(run.read("estimates.csv").lines().skip(1).all(|l| l.ends_with(",10,99")));
}

#[test]
fn missing_fit_file_is_an_error() {
    let run = Run::new();
    degenerate_toy(&run, false);
    fs::remove_file(run.path("out").join("fit_y_2.json")).unwrap();
    let o = run.sae(&["estimate"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("ERROR: FitMissing"), "{}", stderr(&o));
}

#[test]
fn degenerate_mse_is_zero_and_zero_estimates_warn() {
    let run = Run::new();
    degenerate_toy(&run, false);
    let o = run.sae(&["mse"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("CV undefined"));
    let text = run.read("mse.csv");
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("domain,level,h_hat,mse,rmse,cv_percent,B,refit"));
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!((f[3], f[4], f[6], f[7]), ("0", "0", "4", "false"), "{line}");
        let zero_estimate = f[2] == "0";
        assert_eq!(f[5].is_empty(), zero_estimate, "{line}");
        if !zero_estimate {
            assert_eq!(f[5], "0");
        }
    }
}

fn population(d: usize) -> Value {
    json!({
        "D": d, "n_departments": 2, "domain_sizes": {"fixed": 40},
        "covariates": [{"mean": 0.0, "between_sd": 0.5, "within_sd": 1.0}],
        "true_beta": [[-0.5, 0.8], [0.0, -0.5], [-0.3, 0.6], [-0.8, 0.4]],
        "true_sigma_u": [0.5, 0.5, 0.5, 0.5],
        "spec": four_indicator_spec(),
        "seed": 0
    })
}

fn four_indicator_spec() -> Value {
    json!({"weights": [0.25, 0.25, 0.25, 0.25], "z": 0.4, "census_missing": [3, 4]})
}

/// Generated inputs with fits in `out`.
fn generated(run: &Run, bootstrap: Value) -> Output {
    let data = run.path("data");
    run.config(json!({
        "survey": data.join("survey.csv"), "census": data.join("census.csv"),
        "spec": four_indicator_spec(), "L": 20, "bootstrap": bootstrap,
        "population": population(6),
        "sample_design": {"stratified_two_stage": {"munis_per_stratum": 2, "units_per_muni": 20}}
    }));
    let o = run.sae(&["generate", "--out", data.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["population.csv", "census.csv", "survey.csv", "truth.csv", "manifest.json"] {
        assert!(data.join(f).exists(), "{f}");
    }
    run.sae(&["fit"])
}

#[test]
fn fit_writes_one_file_per_missing_indicator() {
    let run = Run::new();
    let o = generated(&run, json!({}));
    assert!(o.status.code() == Some(0) || o.status.code() == Some(2), "{}", stderr(&o));
    for name in ["y_3", "y_4"] {
        let fit: Value = serde_json::from_str(&run.read(&format!("fit_{name}.json"))).unwrap();
        assert_eq!(fit["indicator"], name);
        assert_eq!(fit["beta"].as_array().unwrap().len(), 2);
    }
    let census_header = fs::read_to_string(run.path("data").join("census.csv")).unwrap();
    let header = census_header.lines().next().unwrap();
    assert!(header.contains("y_2") && !header.contains("y_3") && !header.contains("y_4"), "{header}");
}

#[test]
fn two_replicate_bootstrap_is_finite() {
    let run = Run::new();
    let o = generated(&run, json!({"B": 2, "L_inner": 5, "refit": true}));
    assert_ne!(o.status.code(), Some(1), "{}", stderr(&o));
    let o = run.sae(&["mse"]);
    assert_ne!(o.status.code(), Some(1), "{}", stderr(&o));
    let text = run.read("mse.csv");
    assert_eq!(text.lines().count(), 1 + 2 + 6);
    for line in text.lines().skip(1) {
        let mse: f64 = line.split(',').nth(3).unwrap().parse().unwrap();
        assert!(mse.is_finite() && mse >= 0.0, "{line}");
    }
}

fn fit_inputs(run: &Run, survey: &str) {
    let survey = run.file("survey.csv", survey);
    let census = run.file("census.csv", "domain_muni,x_1,x_2,y_1\n01001,0,0,1\n01002,1,1,0\n");
    run.config(json!({"survey": survey, "census": census, "spec": two_indicator_spec()}));
}

#[test]
fn collinear_covariates_are_rejected() {
    let run = Run::new();
    let mut survey = String::from("domain_muni,x_1,x_2,y_1,y_2\n");
    for j in 0..20 {
        let x = (j as f64 * 0.37).sin();
        survey += &format!("0100{},{x},{x},{},{}\n", 1 + j % 2, j % 2, (j / 3) % 2);
    }
    fit_inputs(&run, &survey);
    let o = run.sae(&["fit"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("ERROR: RankDeficientDesign"), "{}", stderr(&o));
}

#[test]
fn separated_indicator_is_named() {
    let run = Run::new();
    let mut survey = String::from("domain_muni,x_1,x_2,y_1,y_2\n");
    for j in 0..20 {
        let x = j as f64 - 9.5;
        survey += &format!("0100{},{x},{},{},{}\n", 1 + j % 2, (j * 7 % 5) as f64, j % 2, u8::from(x > 0.0));
    }
    fit_inputs(&run, &survey);
    let o = run.sae(&["fit"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.starts_with("ERROR: Separation") && err.contains("y_2"), "{err}");
}

#[test]
fn simulate_smoke_and_invalid_population() {
    let run = Run::new();
    let scenarios = json!([
        {"name": "srs", "design": {"srs": {"n": 60}}, "T": 2},
        {"name": "two_stage", "design": {"stratified_two_stage": {"munis_per_stratum": 2, "units_per_muni": 15}}, "T": 2}
    ]);
    run.config(json!({"spec": four_indicator_spec(), "L": 10, "population": population(6), "scenarios": scenarios}));
    let o = run.sae(&["simulate"]);
    assert_ne!(o.status.code(), Some(1), "{}", stderr(&o));
    for name in ["srs", "two_stage"] {
        let text = run.read(&format!("simulation_{name}.csv"));
        assert_eq!(text.lines().next(), Some("domain,bias,rmse,cv"));
        for line in text.lines().skip(1) {
            let f: Vec<f64> = line.split(',').skip(1).take(2).map(|v| v.parse().unwrap()).collect();
            assert!(f[1] >= f[0].abs(), "{line}");
        }
    }
    let summary = run.read("simulation_summary.csv");
    assert!(summary.lines().any(|l| l.starts_with("srs,")) && summary.lines().any(|l| l.starts_with("two_stage,")));

    run.config(json!({"spec": four_indicator_spec(), "population": population(1), "scenarios": scenarios}));
    let o = run.sae(&["simulate"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("ERROR: InvalidConfig"), "{}", stderr(&o));
}

#[test]
fn oracle_subcommand() {
    let o = Command::new(env!("CARGO_BIN_EXE_sae"))
        .args(["oracle", "--alpha", "0.2", "--k", "0.3", "--delta", "0.4", "--pi", "0.35"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "0.35");
    let o = Command::new(env!("CARGO_BIN_EXE_sae"))
        .args(["oracle", "--alpha", "0.1", "--k", "0.25", "--delta", "0.4", "--pi", "0.5", "--pi2", "0.5"])
        .output()
        .unwrap();
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "0.25");
    let o = Command::new(env!("CARGO_BIN_EXE_sae"))
        .args(["oracle", "--alpha", "-0.1", "--k", "0.25", "--delta", "0.4", "--pi", "0.5"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn missing_seed_is_a_config_error() {
    let run = Run::new();
    degenerate_toy(&run, false);
    let mut cfg: Value = serde_json::from_str(&fs::read_to_string(run.path("config.json")).unwrap()).unwrap();
    cfg.as_object_mut().unwrap().remove("seed");
    fs::write(run.path("config.json"), cfg.to_string()).unwrap();
    let o = run.sae(&["estimate"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("ERROR: Config"), "{}", stderr(&o));
}
