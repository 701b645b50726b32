//! Command-line front end.
//!
//! Every subcommand resolves its configuration in the same order: defaults,
//! then the `--config` file, then `--set key=value` overrides, then the
//! subcommand's own flags. The result is validated, and required inputs are
//! checked, before anything is written.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::backbone::{
    layer_mean, propagate_layers, BackboneKind, EmbeddingTable, PropagationPlan,
};
use crate::config::{require_path, ExperimentConfig};
use crate::dataset::{ingest, load_split, save_split, InputFormat};
use crate::dataset::{
    read_profiles, stratify_popularity, write_profiles, InteractionDataset, ProfileStore,
};
use crate::error::{Error, Result};
use crate::eval::{evaluate, fhns_panel, probe_panel, sparsity_sweep, FhnsTrace, MetricReport};
use crate::objective::{append_run_log, TrainState, Trainer};
use crate::sampling::SamplerKind;
use crate::semantic::{
    build_provider, embed_item_anchors, generate_profiles, read_anchors, read_meta, read_records,
    sample_semantic_negatives, write_anchors, write_records, CachedProvider, NegativeSampling,
    ProjectionHead, SemanticStore,
};

/// Environment variable holding the bearer token for the HTTP provider.
pub const PROVIDER_KEY_ENV: &str = "NEGREC_PROVIDER_KEY";

const RUN_LOG: &str = "run_log.csv";
const RUN_CONFIG: &str = "config.txt";
const CURVE: &str = "curve.csv";
const METRICS_CSV: &str = "metrics.csv";
const METRICS_JSON: &str = "metrics.json";
const FHNS_CSV: &str = "fhns.csv";
const SWEEP_CSV: &str = "sweep.csv";

#[derive(Parser, Debug)]
#[command(
    name = "negrec",
    version,
    about = "Negative sampling experiments for collaborative filtering"
)]
pub struct Cli {
    /// Experiment config file with `key = value` lines.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override a config key (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Read an interaction CSV, split it and write the split directory.
    Ingest(IngestArgs),
    /// Generate item and user profiles with the configured provider.
    Profiles(ProfilesArgs),
    /// Ask the provider for hard negatives for every training pair.
    SampleNegatives(SampleArgs),
    /// Train one model and checkpoint every epoch.
    Train(TrainArgs),
    /// Evaluate a trained run.
    Eval(EvalArgs),
    /// Merge run outputs into figure-ready CSVs.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Output split directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.2)]
    pub test_frac: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct ProfilesArgs {
    /// `mock` or `http`.
    #[arg(long)]
    pub provider: Option<String>,
    /// Keep existing profiles and generate only the missing ones.
    #[arg(long)]
    pub resume: bool,
    /// Profile file (defaults to `data.profiles`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SampleArgs {
    #[arg(long)]
    pub negatives: Option<usize>,
    /// Use hybrid prompts that embed a pre-trained CF snapshot.
    #[arg(long)]
    pub hybrid: bool,
    /// Embedding checkpoint for hybrid prompts.
    #[arg(long)]
    pub snapshot: Option<PathBuf>,
    #[arg(long)]
    pub provider: Option<String>,
    /// Record file (defaults to `data.negatives`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Item anchor file (defaults to `data.anchors`, else `anchors.jsonl`
    /// next to the records).
    #[arg(long)]
    pub anchors: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// rns, dns, mixgcf, ahns or semantic.
    #[arg(long)]
    pub sampler: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Semantic negative record file (overrides `data.negatives`).
    #[arg(long)]
    pub negatives_store: Option<PathBuf>,
    /// Evaluate after every epoch and write the recall/NDCG curve.
    #[arg(long)]
    pub curve: bool,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Run directory (defaults to the one derived from the config).
    #[arg(long)]
    pub run: Option<PathBuf>,
    /// Per-stratum metrics by item popularity.
    #[arg(long)]
    pub strata: bool,
    /// Per-epoch false-hard-negative trace.
    #[arg(long)]
    pub fhns: bool,
    /// Comma-separated training fractions for a sparsity sweep.
    #[arg(long, value_name = "FRACTIONS")]
    pub sweep: Option<String>,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Run directories to merge.
    #[arg(required = true)]
    pub runs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Entry point used by the binary; returns the process exit status.
pub fn main() -> i32 {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .try_init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run_args<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::Config(e.to_string()))?;
    run(cli)
}

pub fn run(cli: Cli) -> Result<()> {
    let base = || load_config(cli.config.as_deref(), &cli.set);
    match &cli.command {
        Command::Ingest(a) => cmd_ingest(a),
        Command::Profiles(a) => cmd_profiles(base()?, a),
        Command::SampleNegatives(a) => cmd_sample_negatives(base()?, a),
        Command::Train(a) => cmd_train(base()?, a),
        Command::Eval(a) => {
            let cfg = match &a.run {
                Some(dir) => {
                    let mut c = ExperimentConfig::load(&dir.join(RUN_CONFIG))?;
                    c.apply_overrides(cli.set.iter().map(String::as_str))?;
                    c
                }
                None => base()?,
            };
            cmd_eval(cfg, a)
        }
        Command::Report(a) => cmd_report(a),
    }
}

fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<ExperimentConfig> {
    let mut cfg = match path {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    cfg.apply_overrides(overrides.iter().map(String::as_str))?;
    if let Ok(key) = std::env::var(PROVIDER_KEY_ENV) {
        if !key.is_empty() {
            cfg.provider.api_key = Some(key);
        }
    }
    Ok(cfg)
}

fn cmd_ingest(a: &IngestArgs) -> Result<()> {
    if !(a.test_frac > 0.0 && a.test_frac < 1.0) {
        return Err(Error::Config(format!(
            "--test-frac must lie in (0, 1), got {}",
            a.test_frac
        )));
    }
    let ds = ingest(&a.input, InputFormat::Csv)?;
    let split = ds.split(a.test_frac, a.seed)?;
    save_split(&split, &a.out)?;
    println!(
        "{} users, {} items: {} train / {} test pairs -> {}",
        split.num_users(),
        split.num_items(),
        split.train().len(),
        split.test().len(),
        a.out.display()
    );
    Ok(())
}

fn cache_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.provider
        .cache
        .clone()
        .unwrap_or_else(|| cfg.runs_dir.join("provider-cache"))
}

fn cached_provider(
    cfg: &ExperimentConfig,
) -> Result<CachedProvider<Box<dyn crate::semantic::Provider>>> {
    let inner = build_provider(&cfg.provider)?;
    let dir = cache_dir(cfg);
    fs::create_dir_all(&dir)?;
    CachedProvider::open_dir(inner, &dir)
}

fn cmd_profiles(mut cfg: ExperimentConfig, a: &ProfilesArgs) -> Result<()> {
    if let Some(p) = &a.provider {
        cfg.set("provider.kind", p)?;
    }
    cfg.validate()?;
    cfg.provider.validate()?;
    let split_dir = require_path(cfg.data.split.as_deref(), "data.split")?;
    let out = a
        .out
        .clone()
        .or_else(|| cfg.data.profiles.clone())
        .ok_or_else(|| Error::Config("no profile file: set data.profiles or pass --out".into()))?;
    let meta_path = match &cfg.data.item_meta {
        Some(p) => Some(require_path(Some(p), "data.item_meta")?),
        None => None,
    };
    let ds = load_split(&split_dir)?;
    let (item_meta, user_meta) = match &meta_path {
        Some(p) => read_meta(p, &ds)?,
        None => Default::default(),
    };
    let existing = if a.resume && out.exists() {
        read_profiles(&out, &ds)?
    } else {
        ProfileStore::default()
    };
    let provider = cached_provider(&cfg)?;
    let (new, summary) = generate_profiles(
        &provider,
        &ds,
        &item_meta,
        &user_meta,
        &existing,
        cfg.provider.max_inflight,
    )?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    write_profiles(&out, &new, a.resume && out.exists())?;
    println!(
        "profiles: {} items, {} users generated, {} kept; cache hits {}, misses {} -> {}",
        summary.generated_items,
        summary.generated_users,
        existing.len(),
        provider.hits(),
        provider.misses(),
        out.display()
    );
    Ok(())
}

fn sibling_anchors(records: &Path) -> PathBuf {
    records.with_file_name("anchors.jsonl")
}

fn cmd_sample_negatives(mut cfg: ExperimentConfig, a: &SampleArgs) -> Result<()> {
    if let Some(n) = a.negatives {
        cfg.negatives_per_pair = n;
    }
    if a.hybrid {
        cfg.hybrid = true;
    }
    if let Some(p) = &a.provider {
        cfg.set("provider.kind", p)?;
    }
    cfg.validate()?;
    let split_dir = require_path(cfg.data.split.as_deref(), "data.split")?;
    let profiles_path = require_path(cfg.data.profiles.as_deref(), "data.profiles")?;
    let out = a
        .out
        .clone()
        .or_else(|| cfg.data.negatives.clone())
        .ok_or_else(|| Error::Config("no record file: set data.negatives or pass --out".into()))?;
    let anchors_out = a
        .anchors
        .clone()
        .or_else(|| cfg.data.anchors.clone())
        .unwrap_or_else(|| sibling_anchors(&out));
    let snapshot_path = if cfg.hybrid {
        Some(require_path(
            a.snapshot.as_deref(),
            "--snapshot (hybrid prompts)",
        )?)
    } else {
        None
    };
    let ds = load_split(&split_dir)?;
    let profiles = read_profiles(&profiles_path, &ds)?;
    let snapshot = match &snapshot_path {
        Some(p) => {
            let t = EmbeddingTable::load(p)?;
            if t.num_users() != ds.num_users() || t.num_items() != ds.num_items() {
                return Err(Error::InvalidArgument(format!(
                    "snapshot {} does not match the split's shape",
                    p.display()
                )));
            }
            Some(t)
        }
        None => None,
    };
    let provider = cached_provider(&cfg)?;
    let opts = NegativeSampling {
        negatives: cfg.negatives_per_pair,
        hybrid_instruction: cfg.hybrid.then(|| cfg.hybrid_instruction.clone()),
        max_inflight: cfg.provider.max_inflight,
    };
    let (records, summary) =
        sample_semantic_negatives(&provider, &ds, &profiles, &opts, snapshot.as_ref())?;
    let anchors = embed_item_anchors(&provider, &profiles, cfg.provider.max_inflight)?;
    for p in [&out, &anchors_out] {
        if let Some(parent) = p.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
    }
    write_records(&out, &ds, &records)?;
    write_anchors(&anchors_out, &ds, &anchors)?;
    println!(
        "negatives: {} pairs, {} with vectors, {} \"None\" responses, {} declined; {} anchors -> {}",
        summary.pairs,
        summary.with_vector,
        summary.none_responses,
        summary.declined,
        anchors.len(),
        out.display()
    );
    Ok(())
}

/// Semantic store for a config, or `None` when the sampler does not use one.
fn semantic_store(
    cfg: &ExperimentConfig,
    ds: &InteractionDataset,
) -> Result<Option<SemanticStore>> {
    if cfg.sampler.kind != SamplerKind::Semantic {
        return Ok(None);
    }
    let path = cfg.data.negatives.as_deref().ok_or_else(|| {
        Error::Config("sampler.kind = semantic needs data.negatives (or --negatives-store)".into())
    })?;
    let path = require_path(Some(path), "semantic negative store")?;
    let records = read_records(&path, ds)?;
    let mut store = SemanticStore::from_records(&records)?;
    let anchors = cfg
        .data
        .anchors
        .clone()
        .unwrap_or_else(|| sibling_anchors(&path));
    if anchors.exists() {
        store = store.with_anchors(read_anchors(&anchors, ds)?)?;
    } else if cfg.loss.lambda_sft > 0.0 {
        log::warn!(
            "loss.lambda_sft > 0 but no anchors at {}; the anchoring term is inactive",
            anchors.display()
        );
    }
    Ok(Some(store))
}

fn check_semantic_inputs(cfg: &ExperimentConfig) -> Result<()> {
    if cfg.sampler.kind == SamplerKind::Semantic {
        let p = cfg.data.negatives.as_deref().ok_or_else(|| {
            Error::Config(
                "sampler.kind = semantic needs data.negatives (or --negatives-store)".into(),
            )
        })?;
        require_path(Some(p), "semantic negative store")?;
    }
    Ok(())
}

/// Base embedding checkpoint for an epoch.
pub fn checkpoint_path(run_dir: &Path, epoch: usize) -> PathBuf {
    run_dir
        .join("checkpoints")
        .join(format!("epoch-{epoch:04}.bin"))
}

/// Projection head checkpoint for an epoch.
pub fn head_path(run_dir: &Path, epoch: usize) -> PathBuf {
    run_dir
        .join("checkpoints")
        .join(format!("head-{epoch:04}.json"))
}

fn save_state(run_dir: &Path, state: &TrainState) -> Result<()> {
    state
        .embeddings
        .save(&checkpoint_path(run_dir, state.epoch))?;
    if let Some(h) = &state.projection {
        h.save(&head_path(run_dir, state.epoch))?;
    }
    Ok(())
}

fn curve_header(ks: &[usize]) -> String {
    let mut h = String::from("epoch");
    for k in ks {
        let _ = write!(h, ",recall@{k},ndcg@{k}");
    }
    h
}

fn curve_row(epoch: usize, ks: &[usize], m: &MetricReport) -> String {
    let mut r = epoch.to_string();
    for &k in ks {
        let _ = write!(r, ",{},{}", m.recall_at(k), m.ndcg_at(k));
    }
    r
}

fn cmd_train(mut cfg: ExperimentConfig, a: &TrainArgs) -> Result<()> {
    if let Some(s) = &a.sampler {
        cfg.set("sampler.kind", s)?;
    }
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    if let Some(p) = &a.negatives_store {
        cfg.data.negatives = Some(p.clone());
    }
    cfg.validate()?;
    let split_dir = require_path(cfg.data.split.as_deref(), "data.split")?;
    check_semantic_inputs(&cfg)?;

    let ds = load_split(&split_dir)?;
    let store = semantic_store(&cfg, &ds)?;
    let trainer = Trainer::new(
        &ds,
        cfg.train.clone(),
        cfg.sampler.clone(),
        cfg.loss.clone(),
        store.as_ref(),
    )?;
    let mut state = trainer.init_state()?;

    let run_dir = cfg.run_dir();
    fs::create_dir_all(run_dir.join("checkpoints"))?;
    fs::write(run_dir.join(RUN_CONFIG), cfg.canonical())?;
    let log_path = run_dir.join(RUN_LOG);
    if log_path.exists() {
        fs::remove_file(&log_path)?;
    }
    let ks = cfg.eval.ks.clone();
    let mut curve = a.curve.then(|| curve_header(&ks) + "\n");
    save_state(&run_dir, &state)?;
    // The log exists even for zero epochs.
    fs::write(&log_path, format!("{}\n", crate::objective::RUN_LOG_HEADER))?;
    let epochs = cfg.train.epochs;
    trainer.fit(&mut state, epochs, |s, report| {
        append_run_log(&log_path, report)?;
        save_state(&run_dir, s)?;
        if let Some(c) = curve.as_mut() {
            let m = evaluate(&trainer.snapshot(s)?, &ds, &ks, None)?;
            c.push_str(&curve_row(s.epoch, &ks, &m));
            c.push('\n');
        }
        log::info!("epoch {}: bpr {:.5}", report.epoch, report.loss_bpr);
        Ok(())
    })?;
    if let Some(c) = curve {
        fs::write(run_dir.join(CURVE), c)?;
    }
    println!(
        "trained {} epochs with {} -> {}",
        state.epoch,
        cfg.sampler.kind,
        run_dir.display()
    );
    Ok(())
}

/// Propagated embeddings of a base checkpoint under the config's backbone.
fn propagate(
    cfg: &ExperimentConfig,
    ds: &InteractionDataset,
    base: &EmbeddingTable,
) -> Result<EmbeddingTable> {
    let layers = match cfg.train.backbone {
        BackboneKind::Mf => 0,
        BackboneKind::LightGcn => cfg.train.layers,
    };
    let plan = PropagationPlan::from_dataset(ds, layers)?;
    layer_mean(&propagate_layers(base, &plan)?, ds.num_users())
}

/// Highest epoch with a checkpoint in the run directory.
fn last_epoch(run_dir: &Path, upto: usize) -> Result<usize> {
    (0..=upto)
        .rev()
        .find(|&e| checkpoint_path(run_dir, e).exists())
        .ok_or_else(|| Error::MissingFile(checkpoint_path(run_dir, 0).display().to_string()))
}

fn load_state(cfg: &ExperimentConfig, run_dir: &Path, epoch: usize) -> Result<TrainState> {
    let embeddings = EmbeddingTable::load(&checkpoint_path(run_dir, epoch))?;
    let hp = head_path(run_dir, epoch);
    let projection = if hp.exists() {
        Some(ProjectionHead::load(&hp)?)
    } else {
        None
    };
    Ok(TrainState {
        embeddings,
        projection,
        epoch,
        seed: cfg.train.seed,
        learning_rate: cfg.train.learning_rate,
    })
}

fn cmd_eval(mut cfg: ExperimentConfig, a: &EvalArgs) -> Result<()> {
    if a.strata {
        cfg.eval.strata = true;
    }
    if a.fhns {
        cfg.eval.fhns = true;
    }
    if let Some(s) = &a.sweep {
        cfg.set("eval.sweep", s)?;
    }
    cfg.validate()?;
    let split_dir = require_path(cfg.data.split.as_deref(), "data.split")?;
    let run_dir = a.run.clone().unwrap_or_else(|| cfg.run_dir());
    let epoch = last_epoch(&run_dir, cfg.train.epochs)?;
    if cfg.eval.fhns {
        check_semantic_inputs(&cfg)?;
    }

    let ds = load_split(&split_dir)?;
    let base = EmbeddingTable::load(&checkpoint_path(&run_dir, epoch))?;
    let fin = propagate(&cfg, &ds, &base)?;
    let strata = cfg.eval.strata.then(|| stratify_popularity(&ds));
    let report = evaluate(&fin, &ds, &cfg.eval.ks, strata.as_ref())?;
    report.write(&run_dir.join(METRICS_CSV), &run_dir.join(METRICS_JSON))?;
    println!("epoch {epoch}: {}", summary_line(&report, &cfg.eval.ks));

    if cfg.eval.fhns {
        let store = semantic_store(&cfg, &ds)?;
        let trainer = Trainer::new(
            &ds,
            cfg.train.clone(),
            cfg.sampler.clone(),
            cfg.loss.clone(),
            store.as_ref(),
        )?;
        let panel = probe_panel(&ds, cfg.eval.panel_size, cfg.train.seed);
        let mut trace = FhnsTrace::default();
        for e in 0..=epoch {
            if !checkpoint_path(&run_dir, e).exists() {
                continue;
            }
            let state = load_state(&cfg, &run_dir, e)?;
            let snap = trainer.snapshot(&state)?;
            let drawn = trainer.probe_negatives(&state, &panel, cfg.train.seed ^ e as u64)?;
            let drawn: Vec<(usize, Vec<Vec<f64>>)> = panel.iter().copied().zip(drawn).collect();
            trace.push(e, fhns_panel(&ds, &drawn, |v| Some(snap.item(v).to_vec()))?);
        }
        fs::write(run_dir.join(FHNS_CSV), trace.to_csv())?;
        println!(
            "fhns trace: {} epochs -> {}",
            trace.points.len(),
            run_dir.join(FHNS_CSV).display()
        );
    }

    if !cfg.eval.sweep.is_empty() {
        let store = semantic_store(&cfg, &ds)?;
        let table = sparsity_sweep(&ds, &cfg.eval.sweep, cfg.train.seed, |sub| {
            let t = Trainer::new(
                sub,
                cfg.train.clone(),
                cfg.sampler.clone(),
                cfg.loss.clone(),
                store.as_ref(),
            )?;
            let mut s = t.init_state()?;
            t.fit(&mut s, cfg.train.epochs, |_, _| Ok(()))?;
            evaluate(&t.snapshot(&s)?, sub, &cfg.eval.ks, None)
        })?;
        fs::write(run_dir.join(SWEEP_CSV), table.to_csv())?;
        println!(
            "sweep: {} fractions -> {}",
            table.rows.len(),
            run_dir.join(SWEEP_CSV).display()
        );
    }
    Ok(())
}

fn summary_line(r: &MetricReport, ks: &[usize]) -> String {
    ks.iter()
        .map(|&k| format!("R@{k} {:.4} N@{k} {:.4}", r.recall_at(k), r.ndcg_at(k)))
        .collect::<Vec<_>>()
        .join("  ")
}

fn read_kv(path: &Path) -> Result<BTreeMap<String, String>> {
    let text =
        fs::read_to_string(path).map_err(|_| Error::MissingFile(path.display().to_string()))?;
    Ok(text
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect())
}

fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r =
        csv::Reader::from_path(path).map_err(|_| Error::MissingFile(path.display().to_string()))?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec?.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}

fn run_name(dir: &Path) -> String {
    dir.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string())
}

fn cmd_report(a: &ReportArgs) -> Result<()> {
    let missing: Vec<String> = a
        .runs
        .iter()
        .flat_map(|r| [r.join(RUN_LOG), r.join(RUN_CONFIG)])
        .filter(|p| !p.exists())
        .map(|p| p.display().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingFile(missing.join(", ")));
    }

    let mut convergence = String::from("run_id,epoch,metric,value\n");
    let mut alpha = String::from("run_id,sampler,alpha,metric,k,value\n");
    let mut strata = String::from("run_id,sampler,stratum,metric,k,value\n");
    for dir in &a.runs {
        let id = run_name(dir);
        let conf = read_kv(&dir.join(RUN_CONFIG))?;
        let sampler = conf.get("sampler.kind").cloned().unwrap_or_default();
        let alpha_v = conf.get("loss.alpha").cloned().unwrap_or_default();

        let (header, rows) = read_table(&dir.join(RUN_LOG))?;
        for row in &rows {
            // wall time is left out so reports are reproducible
            for (name, value) in header
                .iter()
                .zip(row)
                .skip(1)
                .filter(|(n, _)| *n != "seconds")
            {
                let _ = writeln!(convergence, "{id},{},{name},{value}", row[0]);
            }
        }
        let curve = dir.join(CURVE);
        if curve.exists() {
            let (header, rows) = read_table(&curve)?;
            for row in &rows {
                for (name, value) in header.iter().zip(row).skip(1) {
                    let _ = writeln!(convergence, "{id},{},{name},{value}", row[0]);
                }
            }
        }
        let metrics = dir.join(METRICS_CSV);
        if metrics.exists() {
            let (_, rows) = read_table(&metrics)?;
            for row in rows.iter().filter(|r| r.len() == 4) {
                let (metric, k, stratum, value) = (&row[0], &row[1], &row[2], &row[3]);
                if stratum == "all" {
                    let _ = writeln!(alpha, "{id},{sampler},{alpha_v},{metric},{k},{value}");
                } else {
                    let _ = writeln!(strata, "{id},{sampler},{stratum},{metric},{k},{value}");
                }
            }
        }
    }
    fs::create_dir_all(&a.out)?;
    fs::write(a.out.join("convergence.csv"), convergence)?;
    fs::write(a.out.join("alpha.csv"), alpha)?;
    fs::write(a.out.join("strata.csv"), strata)?;
    println!("report: {} runs -> {}", a.runs.len(), a.out.display());
    Ok(())
}
