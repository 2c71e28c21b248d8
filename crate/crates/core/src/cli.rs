use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use log::info;
use serde_json::json;

use kgadapt::adapt::{apply_adaptation, AdaptationPolicy, Strategy};
use kgadapt::backend::RecommendationRequest;
use kgadapt::catalog::Catalog;
use kgadapt::classify::{classify_outcome, Category};
use kgadapt::config::{BackendKind, RunConfig};
use kgadapt::eval::{
    parse_table_tsv, render_comparison, render_table, run_experiment, tune_all, tuning_log,
    Aggregation, Mode, Proportions, RowSpec, TableFormat,
};
use kgadapt::ingest::{
    generate_synthetic_cohort, load_catalog, load_pkgs, sample_experiment, CohortSpec, CorpusPaths,
    ExperimentSplit, SignFilter,
};
use kgadapt::pie::{bias_score, detect_pies};
use kgadapt::pipeline::Harness;
use kgadapt::pkg::{Feature, Pkg, UserId};
use kgadapt::prompt::build_prompt;
use kgadapt::store;
use kgadapt::{Error, Result};

/// Writes to stdout. A closed pipe (`| head`) ends the process quietly.
fn emit(args: std::fmt::Arguments<'_>) {
    if let Err(e) = std::io::stdout().lock().write_fmt(args) {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        eprintln!("error[io]: {e}");
        std::process::exit(1);
    }
}

macro_rules! out {
    ($($arg:tt)*) => { emit(format_args!($($arg)*)) };
}

macro_rules! outln {
    ($($arg:tt)*) => { emit(format_args!("{}\n", format_args!($($arg)*))) };
}

#[derive(Debug, Parser)]
#[command(
    name = "kgadapt",
    version,
    about = "Detect and mitigate filter bubbles in per-user knowledge graphs"
)]
#[command(arg_required_else_help = true)]
pub struct Cli {
    /// Run configuration file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Turn a recipes + interactions corpus (or a synthetic cohort spec) into a data directory.
    Ingest(IngestArgs),
    /// List the PIEs of one PKG.
    Detect(DetectArgs),
    /// Apply an adaptation strategy for one PIE and write the adapted PKG.
    Adapt(AdaptArgs),
    /// Tune adaptation proportions on the training PIEs of a data directory.
    Tune(TuneArgs),
    /// Run the full protocol (tune, then evaluate) and write the results table.
    Eval(EvalArgs),
    /// One end-to-end query for a single user.
    Recommend(RecommendArgs),
}

#[derive(Debug, Args)]
struct DetectOpts {
    /// Minimum |q_bias|.
    #[arg(long)]
    threshold: Option<f64>,
    /// Minimum number of items carrying both features.
    #[arg(long)]
    min_support: Option<usize>,
    /// Require |q_bias| > threshold instead of >=.
    #[arg(long)]
    strict: bool,
}

#[derive(Debug, Args)]
struct BackendOpts {
    /// oracle, http or scripted.
    #[arg(long)]
    backend: Option<BackendKind>,
    /// Chat-completions URL for the http backend.
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// Reply file for the scripted backend (one reply per line, cycled).
    #[arg(long)]
    replies: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DataOpts {
    /// Directory written by `ingest` (catalog.jsonl, pkgs/, splits.json).
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    catalog: Option<PathBuf>,
    /// Directory of .pkg files.
    #[arg(long)]
    pkgs: Option<PathBuf>,
    #[arg(long)]
    splits: Option<PathBuf>,
}

impl DataOpts {
    fn resolve(&self, explicit: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
        explicit
            .clone()
            .or_else(|| self.data.as_ref().map(|d| d.join(name)))
            .ok_or_else(|| {
                Error::Config(format!(
                    "pass --data or --{}",
                    name.trim_end_matches(".jsonl").trim_end_matches(".json")
                ))
            })
    }

    fn catalog_path(&self) -> Result<PathBuf> {
        self.resolve(&self.catalog, "catalog.jsonl")
    }

    fn pkgs_path(&self) -> Result<PathBuf> {
        self.resolve(&self.pkgs, "pkgs")
    }

    fn splits_path(&self) -> Result<PathBuf> {
        self.resolve(&self.splits, "splits.json")
    }
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[arg(long, requires = "interactions", conflicts_with = "cohort")]
    recipes: Option<PathBuf>,
    #[arg(long, requires = "recipes")]
    interactions: Option<PathBuf>,
    /// Synthetic cohort spec (TOML) instead of a corpus.
    #[arg(long, required_unless_present = "recipes")]
    cohort: Option<PathBuf>,
    /// Only build PKGs for these users (comma-separated).
    #[arg(long, value_delimiter = ',')]
    users: Vec<String>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Also sample users and PIEs into splits.json (needs --seed).
    #[arg(long, requires = "seed")]
    sample: bool,
    /// Seed for sampling; for cohorts it replaces the spec's seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_users: Option<usize>,
    #[arg(long)]
    pies_per_user: Option<usize>,
    #[arg(long)]
    min_items: Option<usize>,
    /// both, positive or negative.
    #[arg(long)]
    sign: Option<SignFilter>,
    #[command(flatten)]
    detect: DetectOpts,
}

#[derive(Debug, Args)]
struct DetectArgs {
    #[arg(long)]
    pkg: PathBuf,
    #[command(flatten)]
    detect: DetectOpts,
}

#[derive(Debug, Args)]
struct PieOpts {
    /// Given feature, e.g. hasTag:italian.
    #[arg(long)]
    given: Feature,
    /// Bias feature, e.g. hasIngredient:tomato.
    #[arg(long)]
    bias: Feature,
}

#[derive(Debug, Args)]
struct AdaptArgs {
    #[arg(long)]
    pkg: PathBuf,
    #[command(flatten)]
    pie: PieOpts,
    /// soft, hard, removal, prompt-only or none.
    #[arg(long)]
    strategy: Strategy,
    #[arg(long)]
    proportion: f64,
    /// Output PKG file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TuneArgs {
    #[command(flatten)]
    data: DataOpts,
    /// Strategies to tune (comma-separated); all adaptive strategies by default.
    #[arg(long, value_delimiter = ',')]
    strategy: Vec<Strategy>,
    /// personalized, global or both.
    #[arg(long, default_value = "both")]
    mode: String,
    /// Output directory for <strategy>.tsv proportion files.
    #[arg(long)]
    out: PathBuf,
    /// Also write the tuning trace to <out>/trace.log.
    #[arg(long)]
    trace: bool,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    init_proportion: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[command(flatten)]
    backend: BackendOpts,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    data: DataOpts,
    /// Recorded in the manifest; also seeds sampling when no splits file exists.
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Use tuned proportions from this directory instead of tuning first.
    #[arg(long)]
    proportions: Option<PathBuf>,
    /// Rows to run, e.g. soft:personalized,none (default: all eight).
    #[arg(long, value_delimiter = ',')]
    rows: Vec<RowSpec>,
    /// micro or macro.
    #[arg(long)]
    aggregation: Option<Aggregation>,
    /// Reference table (tsv) to compare against.
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    #[command(flatten)]
    backend: BackendOpts,
}

#[derive(Debug, Args)]
struct RecommendArgs {
    #[arg(long)]
    pkg: PathBuf,
    #[arg(long)]
    catalog: PathBuf,
    /// Query trait, e.g. hasTag:italian.
    #[arg(long)]
    query: Feature,
    /// Bias feature of the PIE to mitigate.
    #[arg(long, requires = "strategy")]
    bias: Option<Feature>,
    #[arg(long, requires = "bias")]
    strategy: Option<Strategy>,
    #[arg(long, default_value_t = 1.0)]
    proportion: f64,
    /// Print the prompt that an http backend would receive.
    #[arg(long)]
    show_prompt: bool,
    #[command(flatten)]
    backend: BackendOpts,
}

pub fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
}

impl Cli {
    pub fn verbose(&self) -> u8 {
        self.verbose
    }

    pub fn run(self) -> Result<()> {
        let mut cfg = RunConfig::load(self.config.as_deref())?;
        match self.command {
            Command::Ingest(a) => ingest(&mut cfg, a),
            Command::Detect(a) => detect(&mut cfg, a),
            Command::Adapt(a) => adapt(a),
            Command::Tune(a) => tune(&mut cfg, a),
            Command::Eval(a) => eval(&mut cfg, a),
            Command::Recommend(a) => recommend(&mut cfg, a),
        }
    }
}

fn apply_detect(cfg: &mut RunConfig, d: &DetectOpts) {
    if let Some(t) = d.threshold {
        cfg.detect.threshold = t;
    }
    if let Some(s) = d.min_support {
        cfg.detect.min_support = s;
    }
    if d.strict {
        cfg.detect.inclusive = false;
    }
}

fn apply_backend(cfg: &mut RunConfig, b: &BackendOpts) {
    if let Some(kind) = b.backend {
        cfg.backend.kind = kind;
    }
    if let Some(e) = &b.endpoint {
        cfg.backend.http.endpoint = e.clone();
    }
    if let Some(m) = &b.model {
        cfg.backend.http.model = m.clone();
    }
    if let Some(r) = &b.replies {
        cfg.backend.replies = Some(r.clone());
    }
}

fn by_user(pkgs: impl IntoIterator<Item = Pkg>) -> BTreeMap<UserId, Pkg> {
    pkgs.into_iter().map(|p| (p.user_id().clone(), p)).collect()
}

fn ingest(cfg: &mut RunConfig, a: IngestArgs) -> Result<()> {
    apply_detect(cfg, &a.detect);
    if let Some(n) = a.n_users {
        cfg.sample.n_users = n;
    }
    if let Some(n) = a.pies_per_user {
        cfg.sample.pies_per_user = n;
    }
    if let Some(n) = a.min_items {
        cfg.sample.min_items = n;
    }
    if let Some(s) = a.sign {
        cfg.sample.sign = s;
    }
    let (catalog, pkgs) = if let Some(spec_path) = &a.cohort {
        let spec = CohortSpec::from_toml(&store::read_text(spec_path)?)?;
        let seed = a.seed.unwrap_or(spec.seed);
        let (catalog, pkgs) = generate_synthetic_cohort(&spec, seed)?;
        (catalog, by_user(pkgs))
    } else {
        let paths = CorpusPaths::new(
            a.recipes.clone().expect("clap enforces --recipes"),
            a.interactions
                .clone()
                .expect("clap enforces --interactions"),
        );
        let catalog = load_catalog(&paths)?;
        let users: BTreeSet<UserId> = a.users.iter().map(|u| UserId::new(u.as_str())).collect();
        let pkgs = load_pkgs(
            &paths,
            &catalog.value,
            (!users.is_empty()).then_some(&users),
            cfg.rating_scale()?,
        )?;
        eprintln!(
            "skipped {} recipe rows and {} interaction rows",
            catalog.skipped.len(),
            pkgs.skipped.len()
        );
        (catalog.value, pkgs.value)
    };
    store::write_catalog(&a.out.join("catalog.jsonl"), &catalog)?;
    let n = store::write_pkg_dir(&a.out.join("pkgs"), pkgs.values())?;
    outln!(
        "wrote {} catalog entries and {n} PKGs to {}",
        catalog.len(),
        a.out.display()
    );
    if a.sample {
        let seed = a.seed.expect("clap enforces --seed");
        let splits = sample_experiment(&pkgs, &cfg.sample_config(), seed)?;
        store::write_splits(&a.out.join("splits.json"), &splits)?;
        outln!(
            "sampled {} users into {}",
            splits.len(),
            a.out.join("splits.json").display()
        );
    }
    Ok(())
}

fn detect(cfg: &mut RunConfig, a: DetectArgs) -> Result<()> {
    apply_detect(cfg, &a.detect);
    let pkg = store::read_pkg(&a.pkg)?;
    for pie in detect_pies(&pkg, &cfg.detect) {
        outln!(
            "{}\t{}\t{:.4}\t{}",
            pie.f_given,
            pie.f_bias,
            pie.q_bias,
            pie.support
        );
    }
    Ok(())
}

fn adapt(a: AdaptArgs) -> Result<()> {
    let pkg = store::read_pkg(&a.pkg)?;
    let pie = bias_score(&pkg, &a.pie.given, &a.pie.bias)?;
    let policy = AdaptationPolicy::new(a.strategy, a.proportion)?;
    let adapted = apply_adaptation(&pkg, &pie, &policy)?;
    info!(
        "q_bias {:.4} -> {}",
        pie.q_bias,
        bias_score(&adapted, &a.pie.given, &a.pie.bias)
            .map_or("undefined".into(), |p| format!("{:.4}", p.q_bias))
    );
    match &a.out {
        Some(path) => store::write_pkg(path, &adapted),
        None => {
            out!("{}", store::pkg_to_string(&adapted));
            Ok(())
        }
    }
}

struct Loaded {
    catalog: Arc<Catalog>,
    pkgs: BTreeMap<UserId, Pkg>,
}

fn load_data(data: &DataOpts) -> Result<Loaded> {
    let catalog = Arc::new(store::read_catalog(&data.catalog_path()?)?);
    let pkgs = store::read_pkg_dir(&data.pkgs_path()?)?;
    Ok(Loaded { catalog, pkgs })
}

fn parse_modes(mode: &str) -> Result<Vec<Mode>> {
    match mode.trim().to_ascii_lowercase().as_str() {
        "both" => Ok(vec![Mode::Personalized, Mode::Global]),
        other => match other.parse::<Mode>()? {
            Mode::Baseline => Err(Error::Config(
                "tuning needs personalized or global mode".into(),
            )),
            m => Ok(vec![m]),
        },
    }
}

fn proportions_file(dir: &Path, strategy: Strategy) -> PathBuf {
    dir.join(format!("{strategy}.tsv"))
}

fn tune(cfg: &mut RunConfig, a: TuneArgs) -> Result<()> {
    apply_backend(cfg, &a.backend);
    let t = &mut cfg.experiment.tune;
    if let Some(v) = a.learning_rate {
        t.learning_rate = v;
    }
    if let Some(v) = a.init_proportion {
        t.init_proportion = v;
    }
    if let Some(v) = a.epochs {
        t.epochs = v;
    }
    let strategies = if a.strategy.is_empty() {
        Strategy::ADAPTIVE.to_vec()
    } else {
        a.strategy.clone()
    };
    if let Some(s) = strategies.iter().find(|s| !s.rewrites_pkg()) {
        return Err(Error::Config(format!(
            "strategy {s} has no proportion to tune"
        )));
    }
    let modes = parse_modes(&a.mode)?;
    cfg.experiment.rows = strategies
        .iter()
        .flat_map(|&s| modes.iter().map(move |&m| RowSpec::new(s, m)))
        .collect();

    let data = load_data(&a.data)?;
    let splits = store::read_splits(&a.data.splits_path()?)?;
    let backend = cfg.backend.build(data.catalog.clone(), &cfg.prompt)?;
    let mut harness = Harness::new(backend.as_ref(), &data.catalog);
    harness.classify = cfg.classify;
    let tuning = tune_all(&cfg.experiment, &splits, &data.pkgs, &harness)?;
    for (strategy, p) in &tuning.proportions {
        let path = proportions_file(&a.out, *strategy);
        store::write_proportions(&path, p)?;
        outln!("{}", path.display());
    }
    if a.trace {
        let mut text = tuning_log(&tuning).join("\n");
        text.push('\n');
        store::write_text(&a.out.join("trace.log"), &text)?;
    }
    Ok(())
}

fn read_proportions_dir(dir: &Path, rows: &[RowSpec]) -> Result<Proportions> {
    let mut out = Proportions::new();
    for row in rows.iter().filter(|r| r.mode != Mode::Baseline) {
        if out.contains_key(&row.strategy) {
            continue;
        }
        let path = proportions_file(dir, row.strategy);
        out.insert(row.strategy, store::read_proportions(&path)?);
    }
    Ok(out)
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

fn eval(cfg: &mut RunConfig, a: EvalArgs) -> Result<()> {
    let started = unix_now();
    apply_backend(cfg, &a.backend);
    cfg.seed = Some(a.seed);
    if !a.rows.is_empty() {
        cfg.experiment.rows = a.rows.clone();
    }
    if let Some(agg) = a.aggregation {
        cfg.experiment.aggregation = agg;
    }
    if let Some(w) = a.workers {
        cfg.experiment.workers = w;
    }
    cfg.experiment.validate()?;

    let data = load_data(&a.data)?;
    let splits_path = a.data.splits_path()?;
    let splits: Vec<ExperimentSplit> = if splits_path.exists() {
        store::read_splits(&splits_path)?
    } else {
        info!(
            "{} not found; sampling with seed {}",
            splits_path.display(),
            a.seed
        );
        let splits = sample_experiment(&data.pkgs, &cfg.sample_config(), a.seed)?;
        store::write_splits(&a.out.join("splits.json"), &splits)?;
        splits
    };
    let backend = cfg.backend.build(data.catalog.clone(), &cfg.prompt)?;
    let mut harness = Harness::new(backend.as_ref(), &data.catalog);
    harness.classify = cfg.classify;

    let (proportions, trace) = match &a.proportions {
        Some(dir) => (read_proportions_dir(dir, &cfg.experiment.rows)?, None),
        None => {
            let tuning = tune_all(&cfg.experiment, &splits, &data.pkgs, &harness)?;
            (tuning.proportions.clone(), Some(tuning_log(&tuning)))
        }
    };
    let evaluation = run_experiment(&cfg.experiment, &splits, &data.pkgs, &proportions, &harness)?;

    let out = &a.out;
    let tsv = render_table(&evaluation.table, TableFormat::Tsv);
    store::write_text(&out.join("table.tsv"), &tsv)?;
    store::write_text(
        &out.join("table.md"),
        &render_table(&evaluation.table, TableFormat::Markdown),
    )?;
    let mut log_text = evaluation.log.join("\n");
    log_text.push('\n');
    store::write_text(&out.join("outcomes.log"), &log_text)?;
    if let Some(trace) = trace {
        let mut text = trace.join("\n");
        text.push('\n');
        store::write_text(&out.join("trace.log"), &text)?;
    }
    for (strategy, p) in &proportions {
        store::write_proportions(&proportions_file(&out.join("proportions"), *strategy), p)?;
    }
    if let Some(reference) = &a.reference {
        let reference = parse_table_tsv(&store::read_text(reference)?)?;
        for format in [TableFormat::Tsv, TableFormat::Markdown] {
            let ext = if format == TableFormat::Tsv {
                "tsv"
            } else {
                "md"
            };
            store::write_text(
                &out.join(format!("comparison.{ext}")),
                &render_comparison(&evaluation.table, &reference, format),
            )?;
        }
    }
    let manifest = json!({
        "tool": "kgadapt",
        "version": env!("CARGO_PKG_VERSION"),
        "seed": a.seed,
        "backend": cfg.backend.describe(),
        "backend_id": backend.id(),
        "inputs": {
            "catalog": a.data.catalog_path()?.display().to_string(),
            "pkgs": a.data.pkgs_path()?.display().to_string(),
            "splits": splits_path.display().to_string(),
            "proportions": a.proportions.as_ref().map(|p| p.display().to_string()),
        },
        "config": serde_json::to_value(&*cfg)?,
        "users": splits.iter().map(|s| s.user_id.as_str()).collect::<Vec<_>>(),
        "proportions": serde_json::to_value(&proportions)?,
        "table": serde_json::to_value(&evaluation.table)?,
        "started_unix": started,
        "finished_unix": unix_now(),
    });
    store::write_text(
        &out.join("manifest.json"),
        &(serde_json::to_string_pretty(&manifest)? + "\n"),
    )?;
    out!("{tsv}");
    Ok(())
}

fn recommend(cfg: &mut RunConfig, a: RecommendArgs) -> Result<()> {
    apply_backend(cfg, &a.backend);
    let pkg = store::read_pkg(&a.pkg)?;
    let catalog = Arc::new(store::read_catalog(&a.catalog)?);
    let (adapted, baseline_bias, pie) = match (&a.bias, a.strategy) {
        (Some(bias), Some(strategy)) => {
            let pie = bias_score(&pkg, &a.query, bias)?;
            let policy = AdaptationPolicy::new(strategy, a.proportion)?;
            let adapted = apply_adaptation(&pkg, &pie, &policy)?;
            let baseline = (strategy == Strategy::PromptOnly).then(|| bias.clone());
            (adapted, baseline, Some(pie))
        }
        _ => (pkg.clone(), None, None),
    };
    if a.show_prompt {
        let prompt = build_prompt(&adapted, &a.query, baseline_bias.as_ref(), &cfg.prompt);
        eprint!("{}", prompt.to_dump());
    }
    let backend = cfg.backend.build(catalog.clone(), &cfg.prompt)?;
    let request = RecommendationRequest {
        pkg: &adapted,
        query: &a.query,
        baseline_bias: baseline_bias.as_ref(),
    };
    let raw = backend.recommend(&request)?;
    outln!("{}", raw.text);
    if let Some(pie) = pie {
        let outcome = classify_outcome(raw, &pie, &catalog, &pkg, &cfg.classify)?;
        let item = outcome
            .item
            .as_ref()
            .map_or("-".to_string(), |i| i.to_string());
        outln!("{}\t{}", outcome.category, item);
    } else {
        let item = kgadapt::classify::extract_item(&raw.text, &catalog);
        let category = match item.as_ref().and_then(|i| catalog.get(i)) {
            Some(e) if e.has(&a.query) && !pkg.contains(&e.id) => "matches query",
            Some(_) => Category::Invalid.as_str(),
            None => "unresolved",
        };
        outln!(
            "{category}\t{}",
            item.map_or("-".to_string(), |i| i.to_string())
        );
    }
    Ok(())
}
