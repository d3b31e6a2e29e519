//! Command-line front end.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::fusion::{self, Betas, FusionSpec, Group};
use crate::halluc::{self, Model, SelectionSet};
use crate::io;
use crate::odf;
use crate::sdf;
use crate::synth;
use crate::verify::Suite;

pub const MODEL_FILE: &str = "model.hal";
pub const METRICS_FILE: &str = "metrics.csv";
pub const FUSION_FILE: &str = "fusion.toml";

#[derive(Debug, Parser)]
#[command(
    name = "momhal",
    version,
    about = "Multi-moment descriptors and stream hallucination"
)]
pub struct Cli {
    /// Worker threads for per-video jobs; training threads when given.
    #[arg(long, global = true, env = "MOMHAL_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Encode detection JSON Lines into one descriptor per (video, detector).
    EncodeOdf(EncodeOdfArgs),
    /// Encode PGM saliency frames into one descriptor per (video, source).
    EncodeSdf(EncodeSdfArgs),
    /// Write a seeded synthetic dataset.
    Synth(SynthArgs),
    /// Train streams and PredNet from a run configuration.
    Train(TrainArgs),
    /// Score a checkpoint on a dataset's features and labels.
    Eval(EvalArgs),
    /// Golden-section search of the fusion exponent for a trained model.
    SearchBeta(SearchBetaArgs),
    /// Run the property suites.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct EncodeOdfArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// `video tau` lines overriding the per-record tau.
    #[arg(long)]
    pub tau_source: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Raw scalars instead of RBF embeddings.
    #[arg(long)]
    pub no_rbf: bool,
    #[arg(long)]
    pub n_prime: Option<usize>,
    /// Repair out-of-range records and skip malformed lines.
    #[arg(long)]
    pub lenient: bool,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EncodeSdfArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub n_dagger: Option<usize>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub videos: Option<usize>,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset directory; synthesized in memory from the config when absent.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Run directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated hallucination streams; `none` trains HAF only.
    #[arg(long)]
    pub streams: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Fusion spec replacing the checkpoint's.
    #[arg(long)]
    pub fusion: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SearchBetaArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Run directory holding the trained checkpoint.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 40)]
    pub iters: usize,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// sketch, kernel, gradients, moments or all.
    #[arg(long, default_value = "all")]
    pub suite: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Process exit code for an error: 2 for empty or invalid input, 1 otherwise.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Empty(_)
        | Error::Parse { .. }
        | Error::Format { .. }
        | Error::Config { .. }
        | Error::InputRange(_)
        | Error::Argument(_)
        | Error::Shape { .. } => 2,
        _ => 1,
    }
}

pub fn run(cli: Cli) -> ExitCode {
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn dispatch(cli: Cli) -> Result<bool> {
    let threads = cli.threads;
    match cli.command {
        Command::EncodeOdf(a) => encode_odf(a, threads).map(|_| true),
        Command::EncodeSdf(a) => encode_sdf(a, threads).map(|_| true),
        Command::Synth(a) => synth_cmd(a).map(|_| true),
        Command::Train(a) => train_cmd(a, threads).map(|_| true),
        Command::Eval(a) => eval_cmd(a).map(|_| true),
        Command::SearchBeta(a) => search_beta(a).map(|_| true),
        Command::Verify(a) => verify_cmd(a),
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(Error::Argument("--threads must be positive".into()));
        }
        b = b.num_threads(n);
    }
    b.build()
        .map_err(|e| Error::Argument(format!("thread pool: {e}")))
}

fn encode_odf(a: EncodeOdfArgs, threads: Option<usize>) -> Result<()> {
    let mut cfg = load_config(a.config.as_deref())?;
    if a.no_rbf {
        cfg.odf.use_rbf_embedding = false;
    }
    if let Some(n) = a.n_prime {
        cfg.odf.n_prime = n;
    }
    if a.lenient {
        cfg.odf.validation = odf::Validation::Lenient;
    }
    cfg.validate()?;
    let taus = a
        .tau_source
        .as_deref()
        .map(io::read_tau_manifest)
        .transpose()?;
    let set = io::read_detections(&a.input, taus.as_ref(), &cfg.odf)?;
    for (line, msg) in &set.skipped {
        eprintln!("warning: {}:{line}: skipped: {msg}", a.input.display());
    }
    if set.record_count() == 0 {
        return Err(Error::Empty(format!("no records in {}", a.input.display())));
    }
    fs::create_dir_all(&a.out)?;
    let groups: Vec<_> = set.groups.iter().collect();
    let odf_cfg = cfg.odf;
    let written = pool(threads)?.install(|| {
        groups
            .par_iter()
            .map(|((video, detector), g)| {
                let desc = odf::odf_descriptor(&g.records, g.tau, &odf_cfg)?;
                let path = io::descriptor_path(&a.out, video, detector);
                io::write_descriptor(&path, &desc)?;
                Ok((
                    video,
                    detector,
                    g.records.len(),
                    g.tau,
                    desc.dim(),
                    desc.flat_len(),
                ))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    println!(
        "{:<24} {:<16} {:>6} {:>6} {:>6} {:>10}",
        "video", "detector", "boxes", "tau", "dim", "flat_len"
    );
    for (v, d, n, tau, dim, len) in &written {
        println!("{v:<24} {d:<16} {n:>6} {tau:>6} {dim:>6} {len:>10}");
    }
    println!(
        "{} descriptors, {} records, {} skipped lines",
        written.len(),
        set.record_count(),
        set.skipped.len()
    );
    Ok(())
}

fn encode_sdf(a: EncodeSdfArgs, threads: Option<usize>) -> Result<()> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(n) = a.n_dagger {
        cfg.sdf.n_dagger = n;
    }
    cfg.validate()?;
    let entries = io::read_saliency_manifest(&a.manifest)?;
    if entries.is_empty() {
        return Err(Error::Empty(format!(
            "no frames in {}",
            a.manifest.display()
        )));
    }
    fs::create_dir_all(&a.out)?;
    let sdf_cfg = cfg.sdf;
    let written = pool(threads)?.install(|| {
        entries
            .par_iter()
            .map(|e| {
                let frames = e
                    .frames
                    .iter()
                    .map(|p| io::read_pgm(p))
                    .collect::<Result<Vec<_>>>()?;
                let desc = sdf::sdf_descriptor(&frames, &sdf_cfg)?;
                io::write_descriptor(&io::descriptor_path(&a.out, &e.video, &e.source), &desc)?;
                Ok((e, desc.dim(), desc.flat_len()))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    println!(
        "{:<24} {:<16} {:>6} {:>6} {:>10}",
        "video", "source", "frames", "dim", "flat_len"
    );
    for (e, dim, len) in &written {
        println!(
            "{:<24} {:<16} {:>6} {dim:>6} {len:>10}",
            e.video,
            e.source,
            e.frames.len()
        );
    }
    println!("{} descriptors", written.len());
    Ok(())
}

fn synth_cmd(a: SynthArgs) -> Result<()> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(v) = a.videos {
        cfg.synth.videos = v;
    }
    if let Some(c) = a.classes {
        cfg.synth.classes = c;
    }
    if let Some(s) = a.seed {
        cfg.seed = Some(s);
    }
    let cfg = cfg.resolved();
    cfg.validate()?;
    let videos = synth::generate(&cfg.synth)?;
    let meta = io::write_dataset(&a.out, &videos)?;
    cfg.write_resolved(&a.out)?;
    println!(
        "wrote {} videos, {} classes, backbone {}x{}, {} target streams to {}",
        meta.videos,
        meta.classes,
        meta.backbone_dim,
        meta.temporal_len,
        meta.targets.len(),
        a.out.display()
    );
    Ok(())
}

fn set_streams(cfg: &mut RunConfig, list: &str) -> Result<()> {
    let names: Vec<&str> = list
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty() && *s != "none")
        .collect();
    for n in &names {
        if !halluc::HALLUCINATION_STREAMS.contains(n) {
            return Err(Error::Argument(format!("unknown stream `{n}`")));
        }
    }
    for s in halluc::HALLUCINATION_STREAMS {
        cfg.train.streams.insert(s.to_string(), names.contains(&s));
    }
    Ok(())
}

/// Dataset from `paths.data`, or synthesized from the config.
fn dataset(cfg: &RunConfig) -> Result<Vec<halluc::SyntheticVideo>> {
    match &cfg.paths.data {
        Some(dir) => io::read_dataset(dir),
        None => synth::generate(&cfg.synth),
    }
}

/// Takes backbone and sketch sizes from the loaded data.
fn adopt_dims(cfg: &mut RunConfig, data: &[halluc::SyntheticVideo]) {
    if let Some(v) = data.first() {
        cfg.synth.backbone_dim = v.features.dim();
        if let Some(t) = v.ground_truth.values().next() {
            cfg.synth.sketch_dim = t.len();
        }
        *cfg = cfg.resolved();
    }
}

fn run_dir(cfg: &RunConfig) -> Result<PathBuf> {
    cfg.paths.out.clone().ok_or_else(|| Error::Config {
        field: "paths.out".into(),
        msg: "run directory not set (use --out)".into(),
    })
}

fn train_cmd(a: TrainArgs, threads: Option<usize>) -> Result<()> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(d) = a.data {
        cfg.paths.data = Some(d);
    }
    if let Some(o) = a.out {
        cfg.paths.out = Some(o);
    }
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    if let Some(s) = a.seed {
        cfg.seed = Some(s);
    }
    if let Some(s) = &a.streams {
        set_streams(&mut cfg, s)?;
    }
    if let Some(t) = threads {
        cfg.train.threads = t;
    }
    let mut cfg = cfg.resolved();
    cfg.validate()?;
    let out = run_dir(&cfg)?;
    let data = dataset(&cfg)?;
    adopt_dims(&mut cfg, &data);
    cfg.write_resolved(&out)?;
    let outcome = halluc::train(&data, &cfg.train)?;
    fs::write(out.join(MODEL_FILE), outcome.model.to_bytes())?;
    let streams = outcome.model.stream_ids();
    fs::write(
        out.join(METRICS_FILE),
        halluc::metrics_csv(&streams, &outcome.metrics),
    )?;
    fs::write(out.join(FUSION_FILE), outcome.model.spec.to_toml()?)?;
    match outcome.metrics.last() {
        Some(m) => println!(
            "epochs {} loss {:.6} val_acc {:.4} beta det {:.4} sal {:.4} top {:.4}",
            m.epoch, m.loss, m.val_acc, m.beta.det, m.beta.sal, m.beta.top
        ),
        None => println!("no epochs run"),
    }
    println!("run directory {}", out.display());
    Ok(())
}

fn eval_cmd(a: EvalArgs) -> Result<()> {
    let mut model = Model::read_from(fs::File::open(&a.model)?)?;
    if let Some(f) = &a.fusion {
        model.spec = FusionSpec::load(f)?;
    }
    // features and labels only; targets stay on disk
    let features = io::read_features(&a.data)?;
    let labels = io::read_labels(&a.data)?;
    let refs: Vec<_> = features.iter().collect();
    let acc = halluc::accuracy(&model, &refs, &labels)?;
    let mut counts = BTreeMap::new();
    for &l in &labels {
        *counts.entry(l).or_insert(0usize) += 1;
    }
    let majority = counts.values().copied().max().unwrap_or(0) as f64 / labels.len() as f64;
    println!(
        "videos {} accuracy {acc:.4} majority_baseline {majority:.4}",
        labels.len()
    );
    Ok(())
}

fn search_beta(a: SearchBetaArgs) -> Result<()> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(d) = a.data {
        cfg.paths.data = Some(d);
    }
    if let Some(o) = a.out {
        cfg.paths.out = Some(o);
    }
    let mut cfg = cfg.resolved();
    cfg.validate()?;
    let out = run_dir(&cfg)?;
    let model = Model::read_from(fs::File::open(out.join(MODEL_FILE))?)?;
    let data = dataset(&cfg)?;
    adopt_dims(&mut cfg, &data);
    let split = halluc::split(data.len(), cfg.train.val_fraction, cfg.train.seed)?;
    let sel = SelectionSet::new(
        &model,
        &data,
        &split,
        cfg.train.selection_subset,
        cfg.train.ridge_lambda,
    )?;
    let mut spec = model.spec.clone();
    let (lo, hi) = (spec.search.lo, spec.search.hi);
    let mut log = String::from("group,beta_star,score\n");
    let groups: Vec<Option<Group>> = if spec.search.per_group {
        [Group::Det, Group::Sal, Group::Top]
            .into_iter()
            .filter(|g| *g == Group::Top || !spec.members(*g).is_empty())
            .map(Some)
            .collect()
    } else {
        vec![None]
    };
    for g in groups {
        let mut trial = spec.clone();
        let mut failure = None;
        let mut score = |s: &FusionSpec| match sel.score(s) {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        };
        let res = fusion::golden_section_max(
            |b| {
                match g {
                    Some(g) => trial.beta.set(g, b),
                    None => trial.beta = Betas::shared(b),
                }
                score(&trial)
            },
            lo,
            hi,
            a.iters,
        );
        if let Some(e) = failure {
            return Err(e);
        }
        let res = res?;
        match g {
            Some(g) => spec.beta.set(g, res.beta_star),
            None => spec.beta = Betas::shared(res.beta_star),
        }
        let name = g.map_or("shared", |g| match g {
            Group::Det => "det",
            Group::Sal => "sal",
            Group::Top => "top",
        });
        log.push_str(&format!("{name},{},{}\n", res.beta_star, res.f_star));
        println!("{name} beta* {:.6} score {:.4}", res.beta_star, res.f_star);
    }
    fs::write(out.join(FUSION_FILE), spec.to_toml()?)?;
    fs::write(out.join("beta_search.csv"), log)?;
    Ok(())
}

fn verify_cmd(a: VerifyArgs) -> Result<bool> {
    let mut ok = true;
    for suite in Suite::parse(&a.suite)? {
        for check in suite.run(a.seed)? {
            ok &= check.passed;
            println!("{check}");
        }
    }
    Ok(ok)
}
