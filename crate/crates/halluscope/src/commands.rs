//! The five subcommands. Each reads its inputs through a [`Run`], writes into
//! the output directory and echoes the config there as `run_config.toml`.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use halluscope_core::calibrate::calibrate as calibrate_model;
use halluscope_core::detect::{run_detectors_with, DetectionVerdict, ProfilePolicy, TokenSource, Tri, Wordlist};
use halluscope_core::metrics::{mean, WhitespacePunct};
use halluscope_core::perturb::{build_frequency_pool, perturb_corpus, FrequencyPool};
use halluscope_core::pipeline::{
    align_verdicts, perturbation_study, reversal_rate, route_fallback, HallucinationType, Routing, SystemOutput,
};
use halluscope_core::record::validate_corpus;
use halluscope_core::report::{
    aggregate, composition_heatmap, correlation_report, direction_split, rate_heatmap, toxicity_summary,
    CorrelationInputs, StudyKind,
};
use halluscope_core::{PerturbationKind, TranslationRecord};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{LoadedConfig, RunConfig};
use crate::jsonl::{load_corpus, load_verdicts, merge_scores, write_corpus, write_jsonl};
use crate::profiles::{load_plan, load_profiles, save_profiles, Profiles};
use crate::resources::load_resource_map;
use crate::tables::{corr, opt, write_heatmap, write_tsv};
use crate::tokens::SidecarTokens;
use crate::wordlist::load_wordlist;
use crate::{Error, Result};

const CHUNK: usize = 512;

type Tokens = dyn TokenSource + Sync;

/// A validated configuration bound to an output directory and worker pool.
pub struct Run {
    pub config: RunConfig,
    pub config_path: PathBuf,
    raw_config: String,
    overrides: Vec<String>,
    pub out: PathBuf,
    pool: rayon::ThreadPool,
}

impl Run {
    /// Applies flag overrides, checks that every referenced input exists and
    /// creates the output directory.
    pub fn new(loaded: LoadedConfig, out: Option<PathBuf>, seed: Option<u64>, jobs: Option<usize>) -> Result<Self> {
        let LoadedConfig { path, raw, mut config } = loaded;
        let mut overrides = Vec::new();
        if let Some(seed) = seed {
            config.seed = seed;
            overrides.push(format!("seed = {seed}"));
        }
        let out = out
            .or_else(|| config.out.clone())
            .ok_or_else(|| Error::Usage("no output directory: pass --out or set `out` in the config".into()))?;
        let jobs = jobs.or(config.jobs);
        if jobs == Some(0) {
            return Err(Error::Usage("--jobs must be at least 1".into()));
        }
        config.check_paths()?;
        std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.unwrap_or(0))
            .build()
            .map_err(|e| Error::Usage(e.to_string()))?;
        Ok(Self {
            config,
            config_path: path,
            raw_config: raw,
            overrides,
            out,
            pool,
        })
    }

    fn echo_config(&self) -> Result<()> {
        let mut text = self.raw_config.clone();
        if !self.overrides.is_empty() {
            if !text.ends_with('\n') {
                text.push('\n');
            }
            text.push_str("\n# command-line overrides\n");
            for o in &self.overrides {
                text.push_str("# ");
                text.push_str(o);
                text.push('\n');
            }
        }
        let path = self.out.join("run_config.toml");
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn required<'a>(&self, p: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
        p.as_deref()
            .ok_or_else(|| Error::config(&self.config_path, format!("paths.{key} is required for this command")))
    }

    fn load_corpora(
        &self,
        files: &[PathBuf],
        scores: &[PathBuf],
        key: &str,
        filter: bool,
    ) -> Result<Vec<TranslationRecord>> {
        if files.is_empty() {
            return Err(Error::config(&self.config_path, format!("paths.{key} lists no files")));
        }
        let mut records = Vec::new();
        for f in files {
            records.extend(load_corpus(f)?);
        }
        validate_corpus(&records).map_err(|(_, e)| Error::Data(e))?;
        for s in scores {
            merge_scores(&mut records, s)?;
        }
        if filter {
            records.retain(|r| self.config.wants_model(&r.model_id));
        }
        Ok(records)
    }

    fn tokens(&self) -> Result<Box<Tokens>> {
        Ok(match &self.config.paths.tokens {
            Some(p) => Box::new(SidecarTokens::load(p)?),
            None => Box::new(WhitespacePunct),
        })
    }

    fn wordlists(&self) -> Result<BTreeMap<String, Wordlist>> {
        self.config
            .wordlists
            .iter()
            .map(|(lang, p)| Ok((lang.clone(), load_wordlist(p)?)))
            .collect()
    }

    fn detect_all(
        &self,
        records: &[TranslationRecord],
        profiles: &Profiles,
        policy: ProfilePolicy,
        wordlists: &BTreeMap<String, Wordlist>,
        tokens: &Tokens,
    ) -> Result<Vec<DetectionVerdict>> {
        let params = self.config.tng_params();
        let chunks = self.pool.install(|| {
            records
                .par_chunks(CHUNK)
                .map(|c| run_detectors_with(c, profiles, policy, &params, wordlists, tokens))
                .collect::<Result<Vec<_>, _>>()
        })?;
        Ok(chunks.into_iter().flatten().collect())
    }
}

fn count(verdicts: &[DetectionVerdict], f: impl Fn(&DetectionVerdict) -> bool) -> usize {
    verdicts.iter().filter(|v| f(v)).count()
}

/// Writes one perturbed record per input record.
pub fn perturb(run: &Run) -> Result<()> {
    let cfg = &run.config;
    let spec = cfg
        .perturbation_spec()
        .ok_or_else(|| Error::config(&run.config_path, "perturbation.kind is required for perturb"))?;
    spec.validate()?;
    let records = run.load_corpora(&cfg.paths.corpus, &[], "corpus", true)?;

    let mut pools: BTreeMap<String, FrequencyPool> = BTreeMap::new();
    if spec.kind == PerturbationKind::Insert {
        let mut seen = HashSet::new();
        let mut by_lang: BTreeMap<&str, Vec<TranslationRecord>> = BTreeMap::new();
        for r in &records {
            if seen.insert(r.source_key()) {
                by_lang.entry(r.lp.source_lang()).or_default().push(r.clone());
            }
        }
        let mut rows = Vec::new();
        for (lang, group) in by_lang {
            let pool = build_frequency_pool(&group, &WhitespacePunct, spec.insert_pool_size)?;
            if pool.is_clamped() {
                log::warn!(
                    "{lang}: vocabulary has only {} tokens; pool clamped below {}",
                    pool.len(),
                    spec.insert_pool_size
                );
            }
            for (rank, (tok, n)) in pool.entries().iter().enumerate() {
                rows.push(vec![
                    lang.to_string(),
                    (rank + 1).to_string(),
                    tok.clone(),
                    n.to_string(),
                ]);
            }
            pools.insert(lang.to_string(), pool);
        }
        write_tsv(&run.path("pool.tsv"), &["source_lang", "rank", "token", "count"], &rows)?;
    }

    let parts = run.pool.install(|| {
        records
            .par_iter()
            .map(|r| perturb_corpus(std::slice::from_ref(r), &spec, pools.get(r.lp.source_lang())))
            .collect::<Result<Vec<_>, _>>()
    })?;
    let mut out = Vec::with_capacity(records.len());
    let mut unchanged = Vec::new();
    for p in parts {
        out.extend(p.records);
        unchanged.extend(p.unchanged);
    }
    write_corpus(&run.path("perturbed.jsonl"), &out)?;
    if spec.kind == PerturbationKind::Capitalize {
        if !unchanged.is_empty() {
            log::warn!(
                "{} sources have no word whose capitalization can change",
                unchanged.len()
            );
        }
        let rows: Vec<Vec<String>> = unchanged.into_iter().map(|id| vec![id]).collect();
        write_tsv(&run.path("unchanged.tsv"), &["record_id"], &rows)?;
    }
    log::info!("perturbed {} records ({})", out.len(), spec.kind);
    run.echo_config()
}

/// Calibrates one threshold profile per model from the validation corpora.
pub fn calibrate(run: &Run) -> Result<()> {
    let cfg = &run.config;
    let validation = run.load_corpora(&cfg.paths.validation, &cfg.paths.validation_scores, "validation", true)?;
    let models: BTreeSet<String> = if cfg.models.is_empty() {
        validation.iter().map(|r| r.model_id.clone()).collect()
    } else {
        cfg.models.iter().cloned().collect()
    };
    let label = cfg
        .paths
        .validation
        .iter()
        .map(|p| {
            p.file_name()
                .map_or_else(|| p.display().to_string(), |f| f.to_string_lossy().into_owned())
        })
        .collect::<Vec<_>>()
        .join(",");
    let mut profiles = Profiles::new();
    for m in models {
        let cal = calibrate_model(&validation, &m, &label, &cfg.calibration())?;
        for w in &cal.warnings {
            log::warn!("{m}: {w}");
        }
        profiles.insert(m, cal.profile);
    }
    save_profiles(&run.path("profiles.toml"), &profiles)?;
    run.echo_config()
}

/// Natural study: one verdict per corpus record. Perturbation study: one
/// verdict per perturbed record, with `under_perturbation` set for
/// translations of candidate sources.
pub fn detect(run: &Run) -> Result<()> {
    let cfg = &run.config;
    let tokens = run.tokens()?;
    let wordlists = run.wordlists()?;
    let verdicts = match cfg.study {
        StudyKind::Natural => {
            let records = run.load_corpora(&cfg.paths.corpus, &cfg.paths.scores, "corpus", true)?;
            let profiles = load_profiles(run.required(&cfg.paths.profiles, "profiles")?)?;
            run.detect_all(
                &records,
                &profiles,
                ProfilePolicy::Required,
                &wordlists,
                tokens.as_ref(),
            )?
        }
        StudyKind::Perturbation => {
            if cfg.paths.perturbed.is_empty() {
                return Err(Error::config(
                    &run.config_path,
                    "the perturbation study needs both paths.corpus and paths.perturbed",
                ));
            }
            let originals = run.load_corpora(&cfg.paths.corpus, &cfg.paths.scores, "corpus", true)?;
            let perturbed = run.load_corpora(&cfg.paths.perturbed, &cfg.paths.perturbed_scores, "perturbed", true)?;
            let study = perturbation_study(&originals, &perturbed, &cfg.quality(), tokens.as_ref())?;
            let profiles = match &cfg.paths.profiles {
                Some(p) => load_profiles(p)?,
                None => Profiles::new(),
            };
            let mut verdicts = run.detect_all(
                &perturbed,
                &profiles,
                ProfilePolicy::Optional,
                &wordlists,
                tokens.as_ref(),
            )?;
            for (v, o) in verdicts.iter_mut().zip(&study.outcomes) {
                v.under_perturbation = o.hallucination;
                v.evidence.extend(o.evidence());
            }

            let mut rows = Vec::new();
            for (lp, set) in &study.candidates {
                log::info!("{lp}: {} candidates of {} eligible sources", set.len(), set.eligible());
                for (rank, src) in set.sources().iter().enumerate() {
                    let scores = set.scores(src).cloned().unwrap_or_default();
                    let avg = mean(&scores.values().copied().collect::<Vec<_>>());
                    for (model, s) in &scores {
                        rows.push(vec![
                            lp.to_string(),
                            (rank + 1).to_string(),
                            src.clone(),
                            opt(avg),
                            model.clone(),
                            s.to_string(),
                        ]);
                    }
                }
            }
            write_tsv(
                &run.path("candidates.tsv"),
                &["lp", "rank", "source_id", "mean_spbleu", "model_id", "spbleu"],
                &rows,
            )?;
            verdicts
        }
    };
    write_jsonl(&run.path("verdicts.jsonl"), &verdicts)?;
    log::info!(
        "{} verdicts, {} hallucinations",
        verdicts.len(),
        count(&verdicts, |v| cfg.study.classify(v) == Tri::Yes)
    );
    run.echo_config()
}

#[derive(Serialize)]
struct PlanEcho<'a> {
    primary: &'a str,
    fallbacks: &'a [String],
    rescoring: &'static str,
}

fn summary_row(system: &str, records: &[TranslationRecord], verdicts: &[DetectionVerdict]) -> Vec<String> {
    let field = |f: fn(&TranslationRecord) -> Option<f64>| {
        let mut v: Vec<f64> = records.iter().filter_map(f).collect();
        v.sort_by(f64::total_cmp);
        opt(mean(&v))
    };
    vec![
        system.to_string(),
        records.len().to_string(),
        count(verdicts, |v| v.hallucination() == Tri::Yes).to_string(),
        count(verdicts, |v| v.oscillatory).to_string(),
        count(verdicts, |v| v.detached == Tri::Yes).to_string(),
        count(verdicts, |v| v.hallucination() == Tri::Unknown).to_string(),
        field(|r| r.scores.spbleu),
        field(|r| r.scores.comet22),
    ]
}

/// Routes primary hallucinations to the first clean fallback and reports
/// reversal rates. Every system is scored with its own profile.
pub fn fallback(run: &Run) -> Result<()> {
    let cfg = &run.config;
    let plan = load_plan(run.required(&cfg.paths.plan, "plan")?)?;
    let records = run.load_corpora(&cfg.paths.corpus, &cfg.paths.scores, "corpus", false)?;
    let profiles = load_profiles(run.required(&cfg.paths.profiles, "profiles")?)?;
    let tokens = run.tokens()?;
    let wordlists = run.wordlists()?;

    let mut systems = Vec::new();
    for model in std::iter::once(&plan.primary).chain(&plan.fallbacks) {
        let recs: Vec<TranslationRecord> = records.iter().filter(|r| &r.model_id == model).cloned().collect();
        if recs.is_empty() {
            return Err(Error::Data(halluscope_core::Error::InvalidArgument(format!(
                "the corpus has no records of plan model {model:?}"
            ))));
        }
        let verdicts = run.detect_all(&recs, &profiles, ProfilePolicy::Required, &wordlists, tokens.as_ref())?;
        systems.push((model.clone(), recs, verdicts));
    }
    let outputs: Vec<SystemOutput<'_>> = systems
        .iter()
        .map(|(m, r, v)| SystemOutput {
            model_id: m,
            records: r,
            verdicts: v,
        })
        .collect();
    let (primary, fallbacks) = (outputs[0], &outputs[1..]);
    let routed = route_fallback(primary, fallbacks)?;

    let hybrid_records: Vec<TranslationRecord> = routed.hybrid.iter().map(|h| h.record.clone()).collect();
    write_jsonl(&run.path("hybrid.jsonl"), &routed.hybrid)?;
    write_jsonl(&run.path("hybrid_verdicts.jsonl"), &routed.hybrid_verdicts)?;
    write_jsonl(&run.path("system_verdicts.jsonl"), systems.iter().flat_map(|s| &s.2))?;

    let routing: Vec<Vec<String>> = routed
        .routing
        .iter()
        .zip(&routed.hybrid)
        .map(|((src, r), h)| {
            let outcome = match r {
                Routing::Kept { unreversed: false } => "kept",
                Routing::Kept { unreversed: true } => "unreversed",
                Routing::ReplacedBy(_) => "replaced",
            };
            vec![src.clone(), outcome.to_string(), h.produced_by.clone()]
        })
        .collect();
    write_tsv(
        &run.path("routing.tsv"),
        &["source_id", "outcome", "produced_by"],
        &routing,
    )?;

    let types = [
        ("all", None),
        ("oscillatory", Some(HallucinationType::Oscillatory)),
        ("detached", Some(HallucinationType::Detached)),
    ];
    let mut rows = Vec::new();
    let mut push = |name: &str, against: &[DetectionVerdict]| -> Result<()> {
        for (label, t) in types {
            let ratio = reversal_rate(primary.verdicts, against, t)?;
            rows.push(vec![
                name.to_string(),
                label.to_string(),
                ratio.numerator.to_string(),
                ratio.denominator.to_string(),
                opt(ratio.value()),
            ]);
        }
        Ok(())
    };
    for fb in fallbacks {
        let aligned: Vec<DetectionVerdict> = align_verdicts(&primary, fb)?.into_iter().cloned().collect();
        push(fb.model_id, &aligned)?;
    }
    push("chain", &routed.hybrid_verdicts)?;
    write_tsv(
        &run.path("reversal.tsv"),
        &["fallback", "type", "reversed", "primary_hallucinations", "rate"],
        &rows,
    )?;

    let mut summary = vec![summary_row(primary.model_id, primary.records, primary.verdicts)];
    for fb in fallbacks {
        summary.push(summary_row(fb.model_id, fb.records, fb.verdicts));
    }
    summary.push(summary_row("hybrid", &hybrid_records, &routed.hybrid_verdicts));
    write_tsv(
        &run.path("summary.tsv"),
        &[
            "system",
            "records",
            "hallucinations",
            "oscillatory",
            "detached",
            "unknown",
            "mean_spbleu",
            "mean_comet22",
        ],
        &summary,
    )?;

    let echo = PlanEcho {
        primary: &plan.primary,
        fallbacks: &plan.fallbacks,
        rescoring: "each system's verdicts use its own threshold profile",
    };
    let path = run.path("plan.toml");
    std::fs::write(&path, toml::to_string(&echo).map_err(|e| Error::config(&path, e))?)
        .map_err(|e| Error::io(&path, e))?;
    run.echo_config()
}

type Series = CorrelationInputs;

fn natural_series(run: &Run, rates: &BTreeMap<(String, String), f64>) -> Result<Option<Series>> {
    let cfg = &run.config;
    if cfg.paths.corpus.is_empty() {
        log::info!("no corpus configured; skipping the quality correlation");
        return Ok(None);
    }
    let records = run.load_corpora(&cfg.paths.corpus, &cfg.paths.scores, "corpus", true)?;
    let mut comet: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for r in &records {
        if let Some(c) = r.scores.comet22 {
            comet.entry((r.model_id.clone(), r.lp.to_string())).or_default().push(c);
        }
    }
    let mut series = Series::new();
    for (key, mut values) in comet {
        values.sort_by(f64::total_cmp);
        if let (Some(m), Some(rate)) = (mean(&values), rates.get(&key)) {
            series.entry(key.0).or_default().push((vec![m], vec![*rate]));
        }
    }
    Ok(Some(series))
}

fn perturbation_series(verdicts: &[DetectionVerdict]) -> Series {
    let mut points: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for v in verdicts {
        let (Some(flag), Some(x)) = (
            v.under_perturbation,
            v.evidence.get("pert.orig_spbleu").and_then(|e| e.as_number()),
        ) else {
            continue;
        };
        points
            .entry(v.model_id.clone())
            .or_default()
            .push((x, f64::from(u8::from(flag))));
    }
    points
        .into_iter()
        .map(|(m, mut p)| {
            p.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
            let (x, y) = p.into_iter().unzip();
            (m, vec![(x, y)])
        })
        .collect()
}

/// Aggregates verdicts into TSV tables and CSV heatmaps.
pub fn report(run: &Run) -> Result<()> {
    let cfg = &run.config;
    if cfg.paths.verdicts.is_empty() {
        return Err(Error::config(&run.config_path, "paths.verdicts lists no files"));
    }
    let mut verdicts = Vec::new();
    for p in &cfg.paths.verdicts {
        verdicts.extend(load_verdicts(p)?);
    }
    verdicts.retain(|v| cfg.wants_model(&v.model_id));
    let resources = load_resource_map(run.required(&cfg.paths.resource_map, "resource_map")?)?;
    let kind = cfg.study;
    let agg = aggregate(&verdicts, &resources, kind)?;

    let mut lp_rows = Vec::new();
    let mut level_rows = Vec::new();
    let mut rates = BTreeMap::new();
    for (model, rep) in &agg.models {
        for (lp, s) in &rep.lps {
            rates.insert((model.clone(), lp.to_string()), s.rate());
            lp_rows.push(vec![
                model.clone(),
                lp.to_string(),
                resources.level_of(lp)?.as_str().to_string(),
                s.evaluated.to_string(),
                s.hallucinations.to_string(),
                s.detached.to_string(),
                s.oscillatory.to_string(),
                s.off_target.to_string(),
                s.toxic.to_string(),
                s.unknown.to_string(),
                s.rate().to_string(),
            ]);
        }
        for (level, s) in &rep.levels {
            level_rows.push(vec![
                model.clone(),
                level.as_str().to_string(),
                s.lp_fraction.0.to_string(),
                s.lp_fraction.1.to_string(),
                s.language_fraction.0.to_string(),
                s.language_fraction.1.to_string(),
                s.mean_rate.to_string(),
                s.median_rate.to_string(),
            ]);
        }
    }
    write_tsv(
        &run.path("lp_stats.tsv"),
        &[
            "model",
            "lp",
            "level",
            "evaluated",
            "hallucinations",
            "detached",
            "oscillatory",
            "off_target",
            "toxic",
            "unknown",
            "rate",
        ],
        &lp_rows,
    )?;
    write_tsv(
        &run.path("resource_levels.tsv"),
        &[
            "model",
            "level",
            "lps_with_hallucinations",
            "lps",
            "language_pairs_with_hallucinations",
            "language_pairs",
            "mean_rate",
            "median_rate",
        ],
        &level_rows,
    )?;

    match direction_split(&agg) {
        Ok(split) => {
            let rows: Vec<Vec<String>> = split
                .iter()
                .map(|(m, d)| vec![m.clone(), opt(d.into_english), opt(d.out_of_english)])
                .collect();
            write_tsv(
                &run.path("direction.tsv"),
                &["model", "into_english", "out_of_english"],
                &rows,
            )?;
        }
        Err(e @ halluscope_core::Error::NotEnglishCentric(_)) => {
            log::warn!("skipping the direction split: {e}");
        }
        Err(e) => return Err(e.into()),
    }

    write_heatmap(&run.out, "rates", &rate_heatmap(&agg))?;
    write_heatmap(&run.out, "composition", &composition_heatmap(&verdicts, kind))?;

    let tox: Vec<Vec<String>> = toxicity_summary(&verdicts, kind)
        .into_iter()
        .map(|((m, lp), t)| {
            vec![
                m,
                lp.to_string(),
                t.records.to_string(),
                t.toxic_records.to_string(),
                t.hallucinations.to_string(),
                t.toxic_hallucinations.to_string(),
                t.entries.into_iter().collect::<Vec<_>>().join(";"),
            ]
        })
        .collect();
    write_tsv(
        &run.path("toxicity.tsv"),
        &[
            "model",
            "lp",
            "records",
            "toxic_records",
            "hallucinations",
            "toxic_hallucinations",
            "entries",
        ],
        &tox,
    )?;

    let (series, x, y) = match kind {
        StudyKind::Natural => (natural_series(run, &rates)?, "lp_mean_comet22", "lp_rate"),
        StudyKind::Perturbation => (
            Some(perturbation_series(&verdicts)),
            "orig_spbleu",
            "under_perturbation",
        ),
    };
    if let Some(series) = series {
        let mut rows = Vec::new();
        for (model, s) in series {
            let points: usize = s.iter().map(|(xs, _)| xs.len()).sum();
            let r = match correlation_report(&BTreeMap::from([(model.clone(), s)])) {
                Ok(mut m) => m.remove(&model).map(corr).unwrap_or_else(|| "n/a".into()),
                Err(e) => {
                    log::warn!("{model}: no correlation: {e}");
                    "n/a".into()
                }
            };
            rows.push(vec![model, x.to_string(), y.to_string(), points.to_string(), r]);
        }
        write_tsv(
            &run.path("correlation.tsv"),
            &["model", "x", "y", "points", "pearson_r"],
            &rows,
        )?;
    }
    run.echo_config()
}
