//! Drives the `halluscope` binary over the checked-in planted corpus.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_halluscope")
}

pub fn planted() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/planted")
}

pub fn fixture(name: &str) -> String {
    quote(&planted().join(name))
}

/// A TOML string literal for a path.
pub fn quote(p: &Path) -> String {
    format!("{:?}", p.display().to_string())
}

pub fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

pub fn halluscope(config: &Path, command: &str, extra: &[&str]) -> Output {
    Command::new(bin())
        .arg(command)
        .arg("--config")
        .arg(config)
        .args(extra)
        .env_remove("HALLUSCOPE_CONFIG")
        .output()
        .unwrap()
}

pub fn check(out: Output, step: &str) -> Result<Output, String> {
    if out.status.success() {
        Ok(out)
    } else {
        Err(format!(
            "{step} failed: {}",
            String::from_utf8_lossy(&out.stderr).trim()
        ))
    }
}

pub fn wordlists() -> String {
    format!(
        "[wordlists]\nde = {}\nsw = {}\n",
        fixture("wordlists/de.txt"),
        fixture("wordlists/sw.txt")
    )
}

/// Output directories of one full pipeline run.
pub struct PipelineRun {
    pub perturb: PathBuf,
    pub calibrate: PathBuf,
    pub natural: PathBuf,
    pub perturbation: PathBuf,
    pub fallback: PathBuf,
    pub natural_report: PathBuf,
    pub perturbation_report: PathBuf,
}

/// perturb -> calibrate -> detect (both studies) -> fallback -> report (both).
pub fn run_pipeline(dir: &Path) -> Result<PipelineRun, String> {
    let o = |n: &str| dir.join(n);
    let run = PipelineRun {
        perturb: o("perturb"),
        calibrate: o("calibrate"),
        natural: o("natural"),
        perturbation: o("perturbation"),
        fallback: o("fallback"),
        natural_report: o("natural_report"),
        perturbation_report: o("perturbation_report"),
    };
    let corpus = format!(
        "corpus = [{}]\nscores = [{}]\n",
        fixture("corpus.jsonl"),
        fixture("scores.jsonl")
    );
    let profiles = quote(&run.calibrate.join("profiles.toml"));

    let cfg = write(
        dir,
        "perturb.toml",
        &format!(
            "seed = 17\nout = {}\n[paths]\ncorpus = [{}]\n[perturbation]\nkind = \"insert\"\n",
            quote(&run.perturb),
            fixture("corpus.jsonl")
        ),
    );
    check(halluscope(&cfg, "perturb", &[]), "perturb")?;

    let cfg = write(
        dir,
        "calibrate.toml",
        &format!(
            "out = {}\n[paths]\nvalidation = [{}]\nvalidation_scores = [{}]\n",
            quote(&run.calibrate),
            fixture("validation.jsonl"),
            fixture("validation_scores.jsonl")
        ),
    );
    check(halluscope(&cfg, "calibrate", &[]), "calibrate")?;

    let cfg = write(
        dir,
        "natural.toml",
        &format!(
            "out = {}\n[paths]\n{corpus}profiles = {profiles}\n{}",
            quote(&run.natural),
            wordlists()
        ),
    );
    check(halluscope(&cfg, "detect", &[]), "detect (natural)")?;

    let cfg = write(
        dir,
        "perturbation.toml",
        &format!(
            "study = \"perturbation\"\nout = {}\n[paths]\n{corpus}perturbed = [{}]\nperturbed_scores = [{}]\n",
            quote(&run.perturbation),
            quote(&run.perturb.join("perturbed.jsonl")),
            fixture("perturbed_scores.jsonl")
        ),
    );
    check(halluscope(&cfg, "detect", &[]), "detect (perturbation)")?;

    let cfg = write(
        dir,
        "fallback.toml",
        &format!(
            "out = {}\n[paths]\n{corpus}profiles = {profiles}\nplan = {}\n{}",
            quote(&run.fallback),
            fixture("plan.toml"),
            wordlists()
        ),
    );
    check(halluscope(&cfg, "fallback", &[]), "fallback")?;

    let cfg = write(
        dir,
        "natural_report.toml",
        &format!(
            "out = {}\n[paths]\n{corpus}verdicts = [{}]\nresource_map = {}\n",
            quote(&run.natural_report),
            quote(&run.natural.join("verdicts.jsonl")),
            fixture("levels.txt")
        ),
    );
    check(halluscope(&cfg, "report", &[]), "report (natural)")?;

    let cfg = write(
        dir,
        "perturbation_report.toml",
        &format!(
            "study = \"perturbation\"\nout = {}\n[paths]\nverdicts = [{}]\nresource_map = {}\n",
            quote(&run.perturbation_report),
            quote(&run.perturbation.join("verdicts.jsonl")),
            fixture("levels.txt")
        ),
    );
    check(halluscope(&cfg, "report", &[]), "report (perturbation)")?;
    Ok(run)
}
