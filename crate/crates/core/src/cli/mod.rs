//! The `roarbench` command line: `gen`, `roar`, `report` and `validate`.

mod config;
pub mod svg;

pub use config::{DatasetSpec, ModeSpec, ModelSpec, PipelineConfig};

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::data::{
    gen_keyword_lookup, gen_leakage_probe, gen_paired_lookup, gen_tabular, save_dataset, save_tabular, KeywordParams,
    LeakageParams, PairedParams, SplitSizes, TabularParams,
};
use crate::harness::{
    build_curves, run_synthetic_validation, CurveBundle, Harness, HarnessError, RoarMode, RunCache, ValidationBundle,
    ValidationConfig,
};
use crate::importance::Measure;
use crate::masking::StepSchedule;
use crate::metrics::{faithfulness_csv, FaithfulnessRow, MetricKind};
use svg::{Chart, Rule, Series, BASELINE_COLOR, PALETTE};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUN_FAILURES: i32 = 3;
pub const EXIT_EMPTY: i32 = 4;
pub const EXIT_VERDICT: i32 = 5;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("run failures: {0}")]
    RunFailures(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("validation failed: {0}")]
    Verdict(String),
    #[error("io error at {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => EXIT_CONFIG,
            CliError::RunFailures(_) => EXIT_RUN_FAILURES,
            CliError::Empty(_) => EXIT_EMPTY,
            CliError::Verdict(_) => EXIT_VERDICT,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(path, contents).map_err(io_err(path))
}

#[derive(Debug, Parser)]
#[command(name = "roarbench", version, about = "Recursive ROAR faithfulness benchmark")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset.
    #[command(subcommand)]
    Gen(GenCommand),
    /// Run ROAR / Recursive ROAR from a pipeline config.
    Roar(RoarArgs),
    /// Render plots and faithfulness tables from a `roar` output directory.
    Report(ReportArgs),
    /// Run the tabular ground-truth validation and emit a verdict.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct CommonGenArgs {
    /// Training examples.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub n_val: Option<usize>,
    #[arg(long)]
    pub n_test: Option<usize>,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

impl CommonGenArgs {
    fn splits(&self, default: SplitSizes) -> SplitSizes {
        SplitSizes {
            train: self.n.unwrap_or(default.train),
            validation: self.n_val.unwrap_or(default.validation),
            test: self.n_test.unwrap_or(default.test),
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum GenCommand {
    /// Keyword lookup: the label is the class of a planted key token.
    Keyword {
        #[command(flatten)]
        common: CommonGenArgs,
        #[arg(long, default_value_t = 2)]
        classes: usize,
        #[arg(long, default_value_t = 1)]
        redundancy: usize,
        #[arg(long, default_value_t = 20)]
        distractors: usize,
        #[arg(long, default_value_t = 12)]
        length: usize,
    },
    /// Paired entity/location lookup with a question sequence.
    Paired {
        #[command(flatten)]
        common: CommonGenArgs,
        #[arg(long, default_value_t = 6)]
        entities: usize,
        #[arg(long, default_value_t = 4)]
        locations: usize,
        #[arg(long, default_value_t = 3)]
        statements: usize,
    },
    /// Keyword task with a class-dependent probe token.
    Leakage {
        #[command(flatten)]
        common: CommonGenArgs,
        #[arg(long, default_value_t = 20)]
        distractors: usize,
        #[arg(long, default_value_t = 12)]
        length: usize,
        #[arg(long, default_value_t = 0.75)]
        probe_rate_class0: f64,
        #[arg(long, default_value_t = 0.5)]
        probe_rate_class1: f64,
    },
    /// Tabular task with 16 features, 4 informative.
    Tabular {
        #[command(flatten)]
        common: CommonGenArgs,
    },
}

#[derive(Debug, Args)]
pub struct RoarArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long, value_delimiter = ',')]
    pub measures: Option<Vec<Measure>>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeSpec>,
    /// Relative masking step, e.g. 0.1.
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long)]
    pub metric: Option<MetricKind>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Output directory of a `roar` invocation.
    #[arg(long)]
    pub runs: PathBuf,
    /// Defaults to `<runs>/report`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
    pub seeds: Vec<u64>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub jobs: Option<usize>,
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Gen(g) => cmd_gen(g),
        Command::Roar(a) => cmd_roar(&a),
        Command::Report(a) => cmd_report(&a),
        Command::Validate(a) => cmd_validate(&a),
    }
}

fn cmd_gen(cmd: GenCommand) -> Result<(), CliError> {
    let cfg = |e: crate::data::DataError| CliError::Config(e.to_string());
    let (out, hash) = match cmd {
        GenCommand::Keyword { common, classes, redundancy, distractors, length } => {
            let p = KeywordParams {
                splits: common.splits(SplitSizes::default()),
                classes,
                redundancy,
                distractors,
                length,
                seed: common.seed,
            };
            let ds = gen_keyword_lookup(&p).map_err(cfg)?;
            save_dataset(&ds, &common.out).map_err(cfg)?;
            (common.out, ds.content_hash())
        }
        GenCommand::Paired { common, entities, locations, statements } => {
            let p = PairedParams { splits: common.splits(SplitSizes::default()), entities, locations, statements, seed: common.seed };
            let ds = gen_paired_lookup(&p).map_err(cfg)?;
            save_dataset(&ds, &common.out).map_err(cfg)?;
            (common.out, ds.content_hash())
        }
        GenCommand::Leakage { common, distractors, length, probe_rate_class0, probe_rate_class1 } => {
            let p = LeakageParams {
                splits: common.splits(SplitSizes::default()),
                distractors,
                length,
                probe_rate_class0,
                probe_rate_class1,
                seed: common.seed,
            };
            let ds = gen_leakage_probe(&p).map_err(cfg)?;
            save_dataset(&ds, &common.out).map_err(cfg)?;
            (common.out, ds.content_hash())
        }
        GenCommand::Tabular { common } => {
            let p = TabularParams { splits: common.splits(TabularParams::default().splits), seed: common.seed };
            let ds = gen_tabular(&p).map_err(cfg)?;
            save_tabular(&ds, &common.out).map_err(cfg)?;
            let hash = hash_files(&common.out, &["metadata.json", "train.jsonl", "validation.jsonl", "test.jsonl"])?;
            (common.out, hash)
        }
    };
    println!("wrote {}", out.display());
    println!("dataset hash {hash}");
    Ok(())
}

fn hash_files(dir: &Path, names: &[&str]) -> Result<String, CliError> {
    let mut h = Sha256::new();
    for name in names {
        let path = dir.join(name);
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(hex::encode(h.finalize()))
}

fn load_config(args: &RoarArgs) -> Result<PipelineConfig, CliError> {
    let text = fs::read_to_string(&args.config).map_err(|e| CliError::Config(format!("{}: {e}", args.config.display())))?;
    let mut c = PipelineConfig::from_json(&text).map_err(|e| CliError::Config(format!("{}: {e}", args.config.display())))?;
    if let Some(out) = &args.out {
        c.out = Some(out.clone());
    }
    if let Some(j) = args.jobs {
        c.jobs = Some(j);
    }
    if let Some(s) = &args.seeds {
        c.seeds = s.clone();
    }
    if let Some(m) = &args.measures {
        c.measures = m.clone();
    }
    if let Some(m) = args.mode {
        c.mode = m;
    }
    if let Some(s) = args.step {
        c.schedule = StepSchedule::relative(s);
    }
    if let Some(m) = args.metric {
        c.metric = m;
    }
    c.validate().map_err(CliError::Config)?;
    Ok(c)
}

#[derive(Serialize)]
struct RoarSummary {
    name: String,
    dataset_hash: String,
    runs: Vec<ModeSummary>,
}

#[derive(Serialize)]
struct ModeSummary {
    mode: RoarMode,
    plan_hash: String,
    curves: String,
    faithfulness: String,
    runs: usize,
    failed: usize,
}

fn bundle_stem(b: &CurveBundle) -> String {
    format!("{}_{}", b.dataset, b.mode.name())
}

/// `dataset` column of the faithfulness table; classic runs are suffixed.
fn table_dataset(b: &CurveBundle) -> String {
    match b.mode {
        RoarMode::Recursive => b.dataset.clone(),
        RoarMode::Classic => format!("{} (classic)", b.dataset),
    }
}

fn faithfulness_rows(b: &CurveBundle) -> Vec<FaithfulnessRow> {
    b.measures
        .iter()
        .map(|m| FaithfulnessRow {
            dataset: table_dataset(b),
            measure: m.measure.name().to_string(),
            mean: m.faithfulness.mean.unwrap_or(f64::NAN),
            ci_low: m.faithfulness.ci_low.unwrap_or(f64::NAN),
            ci_high: m.faithfulness.ci_high.unwrap_or(f64::NAN),
        })
        .collect()
}

fn cmd_roar(args: &RoarArgs) -> Result<(), CliError> {
    let config = load_config(args)?;
    let out = config.out.clone().ok_or_else(|| CliError::Config("no output directory (set `out` or --out)".into()))?;
    let base = args.config.parent().unwrap_or(Path::new("."));
    let ds = Arc::new(config.dataset.build(base).map_err(CliError::Config)?);
    let plans = config.plans(Arc::clone(&ds)).map_err(CliError::Config)?;
    write_file(&out.join("effective_config.json"), &config.to_json())?;

    let cache = RunCache::from_env(Some(out.join("cache")));
    let harness = Harness::new(cache).with_store(&out).with_jobs(config.jobs.unwrap_or(1));
    let mut summary = RoarSummary { name: config.name.clone(), dataset_hash: ds.content_hash(), runs: Vec::new() };
    for plan in &plans {
        let outcome = match harness.run(plan) {
            Ok(o) => o,
            Err(e @ HarnessError::TooManyFailures { .. }) => return Err(CliError::RunFailures(e.to_string())),
            Err(HarnessError::Plan(m)) => return Err(CliError::Config(m)),
            Err(HarnessError::Io(e)) => return Err(CliError::Io { path: out.clone(), source: e }),
        };
        let bundle = build_curves(&outcome, &config.name, plan.mode, plan.metric);
        let stem = bundle_stem(&bundle);
        let curves = format!("curves/{stem}.json");
        let table = format!("faithfulness_{}.csv", plan.mode.name());
        write_file(&out.join(&curves), &bundle.to_json())?;
        write_file(&out.join(&table), &faithfulness_csv(&faithfulness_rows(&bundle)))?;
        println!("{} ({}): {} runs, {} failed", config.name, plan.mode.name(), outcome.total(), outcome.failed());
        for m in &bundle.measures {
            match m.faithfulness.mean {
                Some(v) => println!("  {:<22} faithfulness {v:.4}", m.measure.name()),
                None => println!("  {:<22} faithfulness undefined", m.measure.name()),
            }
        }
        summary.runs.push(ModeSummary {
            mode: plan.mode,
            plan_hash: outcome.plan_hash.clone(),
            curves,
            faithfulness: table,
            runs: outcome.total(),
            failed: outcome.failed(),
        });
    }
    println!(
        "trainings {} (cache hits {}, misses {})",
        harness.trainings(),
        harness.cache.hits(),
        harness.cache.misses()
    );
    let mut json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    json.push('\n');
    write_file(&out.join("summary.json"), &json)
}

/// Ratio ticks at the schedule grid, labelled in percent.
fn ratio_ticks(ratios: &[f64]) -> Vec<(f64, String)> {
    ratios.iter().map(|&r| (r, format!("{}", (r * 100.0).round()))).collect()
}

pub fn roar_chart(b: &CurveBundle) -> Chart {
    let mut series = Vec::new();
    let mut palette = PALETTE.iter().cycle();
    for m in &b.measures {
        let random = m.measure == Measure::Random;
        let color = if random { BASELINE_COLOR } else { palette.next().unwrap() };
        series.push(Series {
            name: m.measure.name().to_string(),
            color: color.to_string(),
            dashed: random,
            y: m.summary.mean.clone(),
            ci_low: Some(m.summary.ci_low.clone()),
            ci_high: Some(m.summary.ci_high.clone()),
        });
    }
    let lb: Vec<f64> = b.lower_bound.iter().filter_map(|c| c.performance[0]).collect();
    let rules = if lb.is_empty() {
        Vec::new()
    } else {
        vec![Rule { label: "100 % masked".into(), y: lb.iter().sum::<f64>() / lb.len() as f64 }]
    };
    Chart {
        title: format!("{} ({} ROAR)", b.dataset, b.mode.name()),
        x_label: "% of tokens masked".into(),
        y_label: b.metric.name().into(),
        x: b.ratios.clone(),
        x_range: (0.0, 1.0),
        x_ticks: ratio_ticks(&b.ratios),
        series,
        rules,
    }
}

/// A measure sits below the random baseline when its faithfulness CI
/// excludes zero from above; with one seed the mean decides.
fn below_baseline(m: &crate::harness::MeasureCurves) -> Option<bool> {
    match (m.faithfulness.ci_low, m.faithfulness.mean) {
        (Some(lo), _) => Some(lo > 0.0),
        (None, Some(mean)) if m.per_seed.len() == 1 => Some(mean > 0.0),
        _ => None,
    }
}

fn cmd_report(args: &ReportArgs) -> Result<(), CliError> {
    let dir = args.runs.join("curves");
    let mut paths: Vec<PathBuf> = match fs::read_dir(&dir) {
        Ok(rd) => rd
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect(),
        Err(_) => Vec::new(),
    };
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::Empty(format!("no curve files under {}", dir.display())));
    }
    let out = args.out.clone().unwrap_or_else(|| args.runs.join("report"));
    let mut rows = Vec::new();
    let mut table = String::from("| dataset | measure | faithfulness | 95 % CI | below baseline |\n|---|---|---|---|---|\n");
    for path in &paths {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let bundle: CurveBundle =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let chart = roar_chart(&bundle);
        let stem = bundle_stem(&bundle);
        write_file(&out.join(format!("{stem}.svg")), &chart.to_svg())?;
        write_file(&out.join(format!("{stem}.plot.json")), &chart.to_json())?;
        rows.extend(faithfulness_rows(&bundle));
        for m in &bundle.measures {
            let f = &m.faithfulness;
            let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.3}"));
            let verdict = match below_baseline(m) {
                Some(true) => "yes",
                Some(false) => "no",
                None => "-",
            };
            writeln!(
                table,
                "| {} | {} | {} | [{}, {}] | {verdict} |",
                table_dataset(&bundle),
                m.measure.name(),
                fmt(f.mean),
                fmt(f.ci_low),
                fmt(f.ci_high)
            )
            .unwrap();
        }
        println!("wrote {}", out.join(format!("{stem}.svg")).display());
    }
    write_file(&out.join("faithfulness.csv"), &faithfulness_csv(&rows))?;
    write_file(&out.join("summary.md"), &table)?;
    print!("{table}");
    Ok(())
}

pub fn validation_chart(v: &ValidationBundle) -> Chart {
    let n = (v.removed.len() - 1) as f64;
    let x: Vec<f64> = v.removed.iter().map(|&k| k as f64 / n).collect();
    let mk = |name: &str, color: &str, dashed: bool, s: &crate::harness::SeriesSummary| Series {
        name: name.into(),
        color: color.into(),
        dashed,
        y: s.mean.clone(),
        ci_low: Some(s.ci_low.clone()),
        ci_high: Some(s.ci_high.clone()),
    };
    Chart {
        title: "Tabular ground truth vs ROAR".into(),
        x_label: "features removed".into(),
        y_label: "accuracy".into(),
        x_ticks: v.removed.iter().zip(&x).map(|(k, &x)| (x, k.to_string())).collect(),
        x,
        x_range: (0.0, 1.0),
        series: vec![
            mk("ground truth", "#000000", false, &v.ground_truth),
            mk("worst case", BASELINE_COLOR, true, &v.worst_case),
            mk("ROAR", PALETTE[1], false, &v.classic),
            mk("Recursive ROAR", PALETTE[0], false, &v.recursive),
        ],
        rules: Vec::new(),
    }
}

fn cmd_validate(args: &ValidateArgs) -> Result<(), CliError> {
    let cfg = ValidationConfig { seeds: args.seeds.clone(), ..ValidationConfig::default() };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs.unwrap_or(1).max(1))
        .build()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let bundle = pool.install(|| run_synthetic_validation(&cfg)).map_err(|e| CliError::Config(e.to_string()))?;
    write_file(&args.out.join("validation.json"), &bundle.to_json())?;
    let chart = validation_chart(&bundle);
    write_file(&args.out.join("validation.svg"), &chart.to_svg())?;
    write_file(&args.out.join("validation.plot.json"), &chart.to_json())?;
    println!(
        "max |recursive - ground truth| = {:.4} (tolerance {}); classic overestimates on {} of {} seeds",
        bundle.max_recursive_gap,
        bundle.tolerance,
        bundle.classic_overestimating_seeds,
        bundle.per_seed.len()
    );
    if bundle.passed {
        println!("verdict: pass");
        Ok(())
    } else {
        println!("verdict: fail");
        Err(CliError::Verdict(format!("gap {:.4} exceeds {}", bundle.max_recursive_gap, bundle.tolerance)))
    }
}
