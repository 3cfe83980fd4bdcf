//! Command-line front end.
//!
//! Every artifact carries a provenance block with the run configuration,
//! its SHA-256 and the seeds used. JSON artifacts embed it; line formats
//! (TSV, JSONL) get a `<path>.meta.json` sidecar so trainers can read them
//! unchanged. Exit codes: 0 success, 1 usage error, 2 data error.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::alignment::{self, AlignmentRecord};
use crate::corpus::{self, Dataset};
use crate::milab::{self, CurveConfig, ToyGrammar};
use crate::report::{self, BootstrapCI, CorrelationReport, HarmonyConfig, HarmonyStats};
use crate::scoring::{self, UniformScorer};
use crate::seeds;
use crate::selection::{self, SelectionResult, SelectionStrategy, StrategyKind};
use crate::splitgen;
use crate::stemcorrupt::{self, CorruptionConfig, SyntheticExample, SyntheticPool};

pub const FORMAT_VERSION: u32 = 1;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
/// Subset sizes of a sweep.
pub const SWEEP_SIZES: [usize; 5] = [128, 256, 512, 1024, 2048];

#[derive(Debug, Parser)]
#[command(name = "morphaug", version, about = "Stem-corruption augmentation for morphological inflection")]
pub struct Cli {
    /// Top-level seed; every stage derives its own seed from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file (a directory for `pipeline`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Suppress progress messages.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate a UniMorph TSV file and export it as JSONL.
    Parse(ParseArgs),
    /// Generate a pool of stem-corrupted examples.
    Augment(AugmentArgs),
    /// Score a pool with a character n-gram model.
    Score(ScoreArgs),
    /// Select a subset of a pool.
    Select(SelectArgs),
    /// Build a lemma-disjoint test set.
    Split(SplitArgs),
    /// Run the mutual-information lab on a toy grammar.
    Milab(MilabArgs),
    /// Diagnostics over a scored pool and selections.
    Report(ReportArgs),
    /// Run every stage from a TOML config.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ParseArgs {
    #[arg(long)]
    input: PathBuf,
    /// Also write alignments of every triple as JSONL.
    #[arg(long)]
    alignments: Option<PathBuf>,
    #[arg(long, default_value_t = alignment::DEFAULT_MIN_RUN)]
    min_run: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AugmentArgs {
    #[arg(long)]
    gold: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long, default_value_t = 0.5)]
    theta: f64,
    #[arg(long, default_value_t = alignment::DEFAULT_MIN_RUN)]
    min_run: usize,
    /// Allow a stem character to be replaced by itself.
    #[arg(long)]
    allow_original: bool,
    /// Also write the pool's triples as TSV.
    #[arg(long)]
    tsv: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ScoreArgs {
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    pool: PathBuf,
    #[arg(long, default_value_t = scoring::DEFAULT_ORDER)]
    order: usize,
    #[arg(long, default_value_t = scoring::DEFAULT_SMOOTHING)]
    smoothing: f64,
    /// Score with a uniform distribution over the model vocabulary.
    #[arg(long)]
    uniform: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SelectArgs {
    #[arg(long)]
    pool: PathBuf,
    #[arg(long)]
    strategy: StrategyKind,
    #[arg(long)]
    k: usize,
    /// Override the strategy's MSD temperature.
    #[arg(long)]
    alpha: Option<f64>,
    /// Score TSV; without it the pool's own `nll` fields are used.
    #[arg(long)]
    scores: Option<PathBuf>,
    #[arg(long, requires = "merged")]
    gold: Option<PathBuf>,
    /// Write gold plus the selection as a training TSV.
    #[arg(long, requires = "gold")]
    merged: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SplitArgs {
    #[arg(long)]
    full: PathBuf,
    #[arg(long)]
    train: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Toggle {
    On,
    Off,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MilabArgs {
    #[arg(long, default_value_t = 50)]
    stems: usize,
    #[arg(long, default_value_t = 5)]
    msds: usize,
    #[arg(long, default_value_t = 500)]
    gold: usize,
    #[arg(long, value_delimiter = ',', default_value = "0,100,1000,10000")]
    syn_sizes: Vec<usize>,
    #[arg(long, default_value_t = 1.0)]
    theta: f64,
    #[arg(long, value_enum, default_value_t = Toggle::Off)]
    harmony: Toggle,
    /// Inflection classes of the grammar without harmony.
    #[arg(long, default_value_t = 2)]
    classes: usize,
    #[arg(long, default_value_t = 200)]
    resamples: usize,
    #[arg(long, default_value_t = 0.02)]
    epsilon: f64,
    /// Compare ground-truth stems with alignment-derived ones.
    #[arg(long)]
    cross_check: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReportArgs {
    #[arg(long)]
    pool: PathBuf,
    #[arg(long)]
    scores: Option<PathBuf>,
    /// Selection JSON; may be repeated.
    #[arg(long)]
    selection: Vec<PathBuf>,
    /// Vowel classes as `vowel<TAB>class` lines.
    #[arg(long)]
    harmony: Option<PathBuf>,
    #[arg(long, default_value_t = 10_000)]
    resamples: usize,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PipelineArgs {
    #[arg(long)]
    config: PathBuf,
}

#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<UsageError>() {
                EXIT_USAGE
            } else {
                EXIT_DATA
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub format_version: u32,
    pub command: String,
    pub seed: u64,
    pub stage_seed: u64,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub inputs: Vec<InputDigest>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// One stage of a run: the configuration it is reproducible from and the
/// inputs it has read so far.
struct Stage {
    command: String,
    stage: &'static str,
    seed: u64,
    config: serde_json::Value,
    quiet: bool,
    base: PathBuf,
    /// Inputs under this directory are recorded relative to it.
    out_root: Option<PathBuf>,
    inputs: Vec<InputDigest>,
}

impl Stage {
    fn new(command: impl Into<String>, stage: &'static str, seed: u64, config: serde_json::Value, quiet: bool) -> Stage {
        Stage {
            command: command.into(),
            stage,
            seed,
            config,
            quiet,
            base: PathBuf::new(),
            out_root: None,
            inputs: Vec::new(),
        }
    }

    fn stage_seed(&self) -> u64 {
        seeds::derive_seed(self.seed, self.stage)
    }

    fn log(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("[{}] {}", self.stage, msg.as_ref());
        }
    }

    /// Config-relative for inputs named in a pipeline config; artifacts of
    /// the run itself are used as given.
    fn resolve(&self, p: &Path) -> PathBuf {
        match &self.out_root {
            Some(root) if p.starts_with(root) => p.to_path_buf(),
            _ => self.base.join(p),
        }
    }

    fn read(&mut self, p: &Path) -> Result<String> {
        let full = self.resolve(p);
        let text = fs::read_to_string(&full).with_context(|| format!("{}: cannot read", full.display()))?;
        let label = match self.out_root.as_deref().and_then(|r| p.strip_prefix(r).ok()) {
            Some(rel) => format!("<out>/{}", rel.display()),
            None => p.display().to_string(),
        };
        self.inputs.push(InputDigest {
            path: label,
            sha256: sha256_hex(text.as_bytes()),
        });
        Ok(text)
    }

    fn read_dataset(&mut self, p: &Path) -> Result<Dataset> {
        let text = self.read(p)?;
        let name = p.file_stem().map_or("data".into(), |s| s.to_string_lossy().into_owned());
        corpus::parse_unimorph(&text, name).with_context(|| self.resolve(p).display().to_string())
    }

    fn read_pool(&mut self, p: &Path) -> Result<SyntheticPool> {
        let text = self.read(p)?;
        SyntheticPool::from_jsonl("pool", &text).with_context(|| self.resolve(p).display().to_string())
    }

    fn read_scores(&mut self, p: &Path, pool: &mut [SyntheticExample]) -> Result<()> {
        let text = self.read(p)?;
        let ctx = || self.resolve(p).display().to_string();
        let scores = scoring::load_external_scores(&text, pool.iter().map(|e| e.id())).with_context(ctx)?;
        scoring::attach_scores(pool, &scores).with_context(ctx)
    }

    fn provenance(&self) -> Provenance {
        let config_bytes = serde_json::to_vec(&self.config).expect("config serializes");
        Provenance {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            format_version: FORMAT_VERSION,
            command: self.command.clone(),
            seed: self.seed,
            stage_seed: self.stage_seed(),
            config_hash: sha256_hex(&config_bytes),
            config: self.config.clone(),
            inputs: self.inputs.clone(),
        }
    }

    fn write_json<T: Serialize>(&self, path: &Path, body: &T) -> Result<()> {
        #[derive(Serialize)]
        struct WithProvenance<'a, T> {
            provenance: Provenance,
            #[serde(flatten)]
            body: &'a T,
        }
        let doc = WithProvenance { provenance: self.provenance(), body };
        let mut bytes = serde_json::to_vec_pretty(&doc)?;
        bytes.push(b'\n');
        write_atomic(path, &bytes)?;
        self.log(format!("wrote {}", path.display()));
        Ok(())
    }

    /// Writes a line-oriented artifact plus its provenance sidecar.
    fn write_lines(&self, path: &Path, text: &str) -> Result<()> {
        #[derive(Serialize)]
        struct Sidecar {
            provenance: Provenance,
            artifact: String,
            lines: usize,
            sha256: String,
        }
        write_atomic(path, text.as_bytes())?;
        let sidecar = Sidecar {
            provenance: self.provenance(),
            artifact: path.file_name().map_or(String::new(), |n| n.to_string_lossy().into_owned()),
            lines: text.lines().count(),
            sha256: sha256_hex(text.as_bytes()),
        };
        let mut bytes = serde_json::to_vec_pretty(&sidecar)?;
        bytes.push(b'\n');
        write_atomic(&sidecar_path(path), &bytes)?;
        self.log(format!("wrote {} ({} lines)", path.display(), sidecar.lines));
        Ok(())
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// Writes through a temporary file in the target directory and renames it
/// into place, so the final path never holds a partial artifact.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&dir).with_context(|| format!("{}: cannot create directory", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir)
        .with_context(|| format!("{}: cannot create temporary file", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .map_err(|e| e.error)
        .with_context(|| format!("{}: cannot write", path.display()))?;
    Ok(())
}

#[derive(Serialize)]
struct RunConfig<'a, A: Serialize> {
    format_version: u32,
    command: &'a str,
    seed: u64,
    out: &'a Path,
    args: &'a A,
}

fn execute(cli: &Cli) -> Result<()> {
    if let Command::Pipeline(a) = &cli.command {
        let out = cli.out.as_deref().ok_or_else(|| usage("--out <DIR> is required"))?;
        return pipeline(a, out, cli.seed, cli.quiet);
    }
    let out = cli.out.as_deref().ok_or_else(|| usage("--out <PATH> is required"))?;
    let seed = cli.seed.unwrap_or(0);
    macro_rules! stage {
        ($name:literal, $args:expr) => {{
            let config = serde_json::to_value(RunConfig {
                format_version: FORMAT_VERSION,
                command: $name,
                seed,
                out,
                args: $args,
            })?;
            Stage::new($name, $name, seed, config, cli.quiet)
        }};
    }
    match &cli.command {
        Command::Parse(a) => parse(&mut stage!("parse", a), a, out),
        Command::Augment(a) => augment(&mut stage!("augment", a), a, out),
        Command::Score(a) => score(&mut stage!("score", a), a, out),
        Command::Select(a) => select(&mut stage!("select", a), a, out),
        Command::Split(a) => split(&mut stage!("split", a), a, out),
        Command::Milab(a) => run_milab(&mut stage!("milab", a), a, out),
        Command::Report(a) => run_report(&mut stage!("report", a), a, out),
        Command::Pipeline(_) => unreachable!("handled above"),
    }
}

fn parse(st: &mut Stage, a: &ParseArgs, out: &Path) -> Result<()> {
    let d = st.read_dataset(&a.input)?;
    if let Some(path) = &a.alignments {
        let mut text = String::new();
        for t in &d {
            let rec = alignment::align(&t.lemma, &t.form)
                .map(|al| AlignmentRecord::new(&al, a.min_run))
                .with_context(|| format!("triple {}", t.id))?;
            text.push_str(&serde_json::to_string(&rec)?);
            text.push('\n');
        }
        st.write_lines(&st.resolve(path), &text)?;
    }
    st.write_lines(out, &d.to_jsonl())
}

fn augment(st: &mut Stage, a: &AugmentArgs, out: &Path) -> Result<()> {
    let gold = st.read_dataset(&a.gold)?;
    let alphabet = corpus::extract_alphabet(&gold)?;
    let cfg = CorruptionConfig {
        theta: a.theta,
        exclude_original: !a.allow_original,
        min_run: a.min_run,
        seed: st.stage_seed(),
    };
    cfg.validate().map_err(|e| usage(format!("--theta: {e}")))?;
    let pool = stemcorrupt::generate_pool(&gold, a.n, &alphabet, &cfg)?;
    if !pool.unalignable.is_empty() {
        st.log(format!("{} gold triples have no stem and were skipped", pool.unalignable.len()));
    }
    if let Some(tsv) = &a.tsv {
        st.write_lines(&st.resolve(tsv), &pool.to_dataset().to_tsv())?;
    }
    st.write_lines(out, &pool.to_jsonl())
}

fn score(st: &mut Stage, a: &ScoreArgs, out: &Path) -> Result<()> {
    let gold = st.read_dataset(&a.gold)?;
    let pool = st.read_pool(&a.pool)?;
    let model = scoring::train_ngram(&gold, a.order, a.smoothing).map_err(|e| usage(e.to_string()))?;
    let scores = if a.uniform {
        scoring::score_all(&UniformScorer { vocab_size: model.vocab_size() }, &pool.examples)
    } else {
        scoring::score_all(&model, &pool.examples)
    };
    st.write_lines(out, &scoring::scores_to_tsv(&scores))
}

#[derive(Serialize)]
struct SelectionArtifact<'a> {
    #[serde(flatten)]
    result: &'a SelectionResult,
    experimental: bool,
    mode_msd: Option<String>,
    mode_count: usize,
}

fn select(st: &mut Stage, a: &SelectArgs, out: &Path) -> Result<()> {
    let mut pool = st.read_pool(&a.pool)?;
    if let Some(scores) = &a.scores {
        st.read_scores(scores, &mut pool.examples)?;
    }
    let mut strategy = SelectionStrategy::new(a.strategy, a.k, st.stage_seed());
    if let Some(alpha) = a.alpha {
        strategy = strategy.with_alpha(alpha);
    }
    let result = selection::select(&pool.examples, &strategy)?;
    if let (Some(gold), Some(merged)) = (&a.gold, &a.merged) {
        let gold = st.read_dataset(gold)?;
        let train = selection::merge_for_training(&gold, &pool.examples, &result)?;
        st.write_lines(&st.resolve(merged), &train.to_tsv())?;
    }
    let mode = report::msd_mode_frequency(&result).ok();
    let artifact = SelectionArtifact {
        result: &result,
        experimental: strategy.is_experimental(),
        mode_count: mode.as_ref().map_or(0, |m| m.1),
        mode_msd: mode.map(|m| m.0),
    };
    st.write_json(out, &artifact)
}

fn split(st: &mut Stage, a: &SplitArgs, out: &Path) -> Result<()> {
    let full = st.read_dataset(&a.full)?;
    let train = st.read_dataset(&a.train)?;
    let s = splitgen::lemma_split(&full, &train);
    if s.warning.is_some() {
        st.log("warning: every triple shares a lemma with training; the test set is empty");
    }
    st.write_lines(out, &s.test.to_tsv())
}

#[derive(Serialize)]
struct CurveArtifact<'a> {
    grammar: &'a ToyGrammar,
    curve: &'a milab::DecayCurve,
}

fn run_milab(st: &mut Stage, a: &MilabArgs, out: &Path) -> Result<()> {
    let seed = st.stage_seed();
    let grammar = match a.harmony {
        Toggle::On => ToyGrammar::harmonic(a.stems, a.msds, seed),
        Toggle::Off => ToyGrammar::concatenative(a.stems, a.msds, a.classes, seed),
    }
    .map_err(|e| usage(e.to_string()))?;
    let cfg = CurveConfig {
        gold_n: a.gold,
        syn_sizes: a.syn_sizes.clone(),
        theta: a.theta,
        bootstrap_resamples: a.resamples,
        epsilon: a.epsilon,
        cross_check: a.cross_check,
        seed,
        ..CurveConfig::default()
    };
    let curve = milab::mi_decay_curve(&grammar, &cfg)?;
    st.write_json(out, &CurveArtifact { grammar: &grammar, curve: &curve })
}

#[derive(Debug, Serialize)]
struct ModeEntry {
    selection: String,
    strategy: StrategyKind,
    k: usize,
    msd: Option<String>,
    count: usize,
}

#[derive(Debug, Serialize)]
struct ReportArtifact {
    pool_size: usize,
    correlations: CorrelationReport,
    msd_mode: Vec<ModeEntry>,
    harmony: Option<HarmonyStats>,
    bootstrap: Vec<BootstrapCI>,
}

fn run_report(st: &mut Stage, a: &ReportArgs, out: &Path) -> Result<()> {
    let mut pool = st.read_pool(&a.pool)?;
    if let Some(scores) = &a.scores {
        st.read_scores(scores, &mut pool.examples)?;
    }
    let mut selections = Vec::new();
    for p in &a.selection {
        let text = st.read(p)?;
        let sel: SelectionResult =
            serde_json::from_str(&text).with_context(|| format!("{}: not a selection", st.resolve(p).display()))?;
        let name = p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned());
        selections.push((name, sel));
    }
    let harmony = match &a.harmony {
        Some(p) => {
            let text = st.read(p)?;
            Some(HarmonyConfig::parse_tsv(&text).with_context(|| st.resolve(p).display().to_string())?)
        }
        None => None,
    };
    st.write_json(out, &build_report(st.stage_seed(), &pool.examples, &selections, harmony.as_ref(), a)?)
}

fn build_report(
    seed: u64,
    pool: &[SyntheticExample],
    selections: &[(String, SelectionResult)],
    harmony: Option<&HarmonyConfig>,
    a: &ReportArgs,
) -> Result<ReportArtifact> {
    let correlations = report::correlations(pool)?;
    let nll: Vec<f64> = pool.iter().filter_map(|e| e.score).collect();
    let mut bootstrap = vec![report::bootstrap_percentile(
        "mean_nll/pool",
        &nll,
        report::mean,
        a.resamples,
        a.level,
        seeds::derive_seed(seed, "pool"),
    )?];
    let by_id: std::collections::BTreeMap<_, _> = pool.iter().map(|e| (e.id(), e)).collect();
    let mut msd_mode = Vec::new();
    for (i, (name, sel)) in selections.iter().enumerate() {
        let mode = report::msd_mode_frequency(sel).ok();
        msd_mode.push(ModeEntry {
            selection: name.clone(),
            strategy: sel.strategy.kind,
            k: sel.strategy.k,
            count: mode.as_ref().map_or(0, |m| m.1),
            msd: mode.map(|m| m.0),
        });
        let picked: Vec<f64> = sel
            .selected_ids
            .iter()
            .map(|id| by_id.get(id).and_then(|e| e.score).with_context(|| format!("{name}: id {id} is not a scored pool item")))
            .collect::<Result<_>>()?;
        if picked.len() >= 2 {
            bootstrap.push(report::bootstrap_percentile(
                &format!("mean_nll/{name}"),
                &picked,
                report::mean,
                a.resamples,
                a.level,
                seeds::derive_seed_index(seeds::derive_seed(seed, "selection"), i as u64),
            )?);
        }
    }
    let harmony = harmony
        .map(|cfg| report::harmony_violation_stats(pool, cfg, a.resamples, seeds::derive_seed(seed, "harmony")))
        .transpose()?;
    Ok(ReportArtifact {
        pool_size: pool.len(),
        correlations,
        msd_mode,
        harmony,
        bootstrap,
    })
}

fn default_order() -> usize {
    scoring::DEFAULT_ORDER
}

fn default_smoothing() -> f64 {
    scoring::DEFAULT_SMOOTHING
}

fn default_min_run() -> usize {
    alignment::DEFAULT_MIN_RUN
}

fn default_resamples() -> usize {
    1000
}

fn default_classes() -> usize {
    2
}

fn default_milab_resamples() -> usize {
    200
}

/// Pipeline configuration. Relative paths are resolved against the
/// directory of the config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub gold: PathBuf,
    pub full: PathBuf,
    pub n: usize,
    pub theta: f64,
    pub strategies: Vec<StrategyKind>,
    /// Required unless `sweep` is set.
    pub k: Option<usize>,
    #[serde(default)]
    pub sweep: bool,
    pub alpha: Option<f64>,
    #[serde(default = "default_order")]
    pub order: usize,
    #[serde(default = "default_smoothing")]
    pub smoothing: f64,
    #[serde(default = "default_min_run")]
    pub min_run: usize,
    pub harmony: Option<PathBuf>,
    #[serde(default = "default_resamples")]
    pub resamples: usize,
    pub milab: Option<MilabSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MilabSection {
    pub stems: usize,
    pub msds: usize,
    pub gold: usize,
    pub syn_sizes: Vec<usize>,
    pub theta: f64,
    #[serde(default)]
    pub harmony: bool,
    #[serde(default = "default_classes")]
    pub classes: usize,
    #[serde(default = "default_milab_resamples")]
    pub resamples: usize,
}

fn pipeline(a: &PipelineArgs, out: &Path, seed: Option<u64>, quiet: bool) -> Result<()> {
    let text = fs::read_to_string(&a.config).with_context(|| format!("{}: cannot read", a.config.display()))?;
    let cfg: PipelineConfig = toml::from_str(&text)
        .map_err(|e| usage(format!("{}: {}", a.config.display(), e.message())))?;
    if seed.is_some_and(|s| s != cfg.seed) {
        return Err(usage("--seed differs from the config's `seed`; set it in one place"));
    }
    let ks: Vec<usize> = if cfg.sweep {
        SWEEP_SIZES.to_vec()
    } else {
        vec![cfg.k.ok_or_else(|| usage(format!("{}: missing key `k` (or set `sweep = true`)", a.config.display())))?]
    };
    let base = a.config.parent().map(Path::to_path_buf).unwrap_or_default();
    let config = serde_json::to_value(&cfg)?;
    let stage = |name: &'static str| {
        let mut s = Stage::new(format!("pipeline/{name}"), name, cfg.seed, config.clone(), quiet);
        s.base = base.clone();
        s.out_root = Some(out.to_path_buf());
        s
    };
    let art = |name: &str| out.join(name);
    fs::create_dir_all(out).with_context(|| format!("{}: cannot create directory", out.display()))?;

    parse(
        &mut stage("parse"),
        &ParseArgs {
            input: cfg.gold.clone(),
            alignments: Some(art("alignments.jsonl")),
            min_run: cfg.min_run,
        },
        &art("gold.jsonl"),
    )?;
    augment(
        &mut stage("augment"),
        &AugmentArgs {
            gold: cfg.gold.clone(),
            n: cfg.n,
            theta: cfg.theta,
            min_run: cfg.min_run,
            allow_original: false,
            tsv: Some(art("pool.tsv")),
        },
        &art("pool.jsonl"),
    )?;
    score(
        &mut stage("score"),
        &ScoreArgs {
            gold: cfg.gold.clone(),
            pool: art("pool.jsonl"),
            order: cfg.order,
            smoothing: cfg.smoothing,
            uniform: false,
        },
        &art("scores.tsv"),
    )?;
    let mut selection_files = Vec::new();
    for &kind in &cfg.strategies {
        for &k in &ks {
            let name = format!("{}-{k}", kind.name());
            let file = art(&format!("selections/{name}.json"));
            select(
                &mut stage("select"),
                &SelectArgs {
                    pool: art("pool.jsonl"),
                    strategy: kind,
                    k,
                    alpha: cfg.alpha.filter(|_| kind.default_alpha().is_some()),
                    scores: Some(art("scores.tsv")),
                    gold: Some(cfg.gold.clone()),
                    merged: Some(art(&format!("selections/{name}.train.tsv"))),
                },
                &file,
            )?;
            selection_files.push(file);
        }
    }
    split(
        &mut stage("split"),
        &SplitArgs {
            full: cfg.full.clone(),
            train: cfg.gold.clone(),
        },
        &art("test.tsv"),
    )?;
    if let Some(m) = &cfg.milab {
        run_milab(
            &mut stage("milab"),
            &MilabArgs {
                stems: m.stems,
                msds: m.msds,
                gold: m.gold,
                syn_sizes: m.syn_sizes.clone(),
                theta: m.theta,
                harmony: if m.harmony { Toggle::On } else { Toggle::Off },
                classes: m.classes,
                resamples: m.resamples,
                epsilon: 0.02,
                cross_check: true,
            },
            &art("curve.json"),
        )?;
    }
    run_report(
        &mut stage("report"),
        &ReportArgs {
            pool: art("pool.jsonl"),
            scores: Some(art("scores.tsv")),
            selection: selection_files,
            harmony: cfg.harmony.clone(),
            resamples: cfg.resamples,
            level: 0.95,
        },
        &art("report.json"),
    )
}
