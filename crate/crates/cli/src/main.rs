mod config_file;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nbselect::{
    compare_reports, load_csv, run_experiment, select_best, ClassColumn, CriterionKind,
    CriterionSpec, CsvOptions, Dataset, ExperimentConfig, ExperimentReport, LossKind,
    SearchOptions, SelectionLoss, Structure, DEFAULT_BINS, DEFAULT_FEATURE_CAP,
};
use serde::Serialize;
use serde_json::{json, Value};

const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Select pruned Naive Bayes classifiers with supervised and unsupervised
/// scoring criteria.
#[derive(Parser)]
#[command(name = "nbselect", version, args_override_self = true)]
struct Cli {
    /// File of `key = value` lines supplying default flag values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a CSV, discretize numeric columns and write the result.
    #[command(args_override_self = true)]
    Discretize(DiscretizeArgs),
    /// Score one structure under one criterion.
    #[command(args_override_self = true)]
    Score(ScoreArgs),
    /// Score every structure and report the best.
    #[command(args_override_self = true)]
    Select(SelectArgs),
    /// Run the repeated train/test protocol.
    #[command(args_override_self = true)]
    Experiment(ExperimentArgs),
    /// Average gains across experiment reports.
    #[command(args_override_self = true)]
    Compare(CompareArgs),
}

#[derive(Args, Serialize)]
struct DataArgs {
    /// CSV file with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Class column, by header name or zero-based index.
    #[arg(long)]
    class: String,
    /// K-means bins for numeric columns; 0 keeps them as categories.
    #[arg(long, default_value_t = DEFAULT_BINS)]
    bins: usize,
    /// Comma-separated cell values treated as missing.
    #[arg(long, value_delimiter = ',', default_value = "?,")]
    missing: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl DataArgs {
    fn load(&self) -> nbselect::Result<Dataset> {
        let opts = CsvOptions {
            missing: self.missing.clone(),
            bins: self.bins,
            seed: self.seed,
        };
        load_csv(&self.data, &ClassColumn::Name(self.class.clone()), &opts)
    }
}

fn criterion_name(s: &str) -> Result<String, String> {
    CriterionSpec::from_name(s)
        .map(|_| s.to_string())
        .map_err(|e| e.to_string())
}

#[derive(Args, Serialize)]
struct CriterionArgs {
    #[arg(long, value_parser = criterion_name)]
    criterion: String,
    /// Loss for loocv, fcv and trloss: zero_one or log.
    #[arg(long)]
    loss: Option<LossKind>,
    #[arg(long)]
    folds: Option<usize>,
    /// Orderings averaged by preq and fcv.
    #[arg(long)]
    orderings: Option<usize>,
}

impl CriterionArgs {
    fn spec(&self, seed: u64) -> CriterionSpec {
        let spec = CriterionSpec::from_name(&self.criterion).expect("validated by clap");
        let spec = apply_overrides(spec, self.folds, self.orderings).with_seed(seed);
        match self.loss {
            Some(loss) => spec.with_loss(loss),
            None => spec,
        }
    }
}

fn apply_overrides(
    mut spec: CriterionSpec,
    folds: Option<usize>,
    orderings: Option<usize>,
) -> CriterionSpec {
    if let Some(f) = folds {
        spec.folds = f;
    }
    if let (Some(o), CriterionKind::Preq | CriterionKind::KFold) = (orderings, spec.kind) {
        spec.orderings = o;
    }
    spec
}

#[derive(Args, Serialize)]
struct DiscretizeArgs {
    #[command(flatten)]
    #[serde(flatten)]
    data: DataArgs,
    /// Where to write the discretized CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct ScoreArgs {
    #[command(flatten)]
    #[serde(flatten)]
    data: DataArgs,
    #[command(flatten)]
    #[serde(flatten)]
    criterion: CriterionArgs,
    /// Integer bit mask or comma-separated feature names.
    #[arg(long)]
    structure: String,
}

#[derive(Args, Serialize)]
struct SearchArgs {
    /// Largest feature count enumerated exhaustively.
    #[arg(long, default_value_t = DEFAULT_FEATURE_CAP)]
    max_features: usize,
    /// Worker threads; defaults to the machine's parallelism.
    #[arg(long, env = "NBSELECT_WORKERS")]
    workers: Option<usize>,
}

#[derive(Args, Serialize)]
struct SelectArgs {
    #[command(flatten)]
    #[serde(flatten)]
    data: DataArgs,
    #[command(flatten)]
    #[serde(flatten)]
    criterion: CriterionArgs,
    #[command(flatten)]
    #[serde(flatten)]
    search: SearchArgs,
    /// Rows of the ranked table included in the output.
    #[arg(long, default_value_t = 10)]
    top: usize,
    /// Write every structure's score as CSV.
    #[arg(long)]
    table_out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct ExperimentArgs {
    #[command(flatten)]
    #[serde(flatten)]
    data: DataArgs,
    /// Comma-separated criterion names.
    #[arg(long, value_delimiter = ',', required = true, value_parser = criterion_name)]
    criteria: Vec<String>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    orderings: Option<usize>,
    #[arg(long, default_value_t = 50)]
    reps: usize,
    #[arg(long, default_value_t = 500)]
    sample: usize,
    /// Draw a fresh subsample for every repetition.
    #[arg(long)]
    redraw_sample: bool,
    /// Loss optimized by loss-based criteria: match, zero_one or log.
    #[arg(long, default_value = "match")]
    selection_loss: SelectionLoss,
    #[command(flatten)]
    #[serde(flatten)]
    search: SearchArgs,
    /// Report path; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write `criterion,loss,gain` rows here.
    #[arg(long)]
    csv_out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct CompareArgs {
    /// Experiment report files.
    #[arg(required = true)]
    reports: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

type CmdResult = Result<(), Box<dyn std::error::Error>>;

fn create(path: &Path) -> nbselect::Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| nbselect::Error::io(path, e))
}

fn emit(value: &Value) -> CmdResult {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn header(command: &str, config: &impl Serialize) -> serde_json::Map<String, Value> {
    let mut m = serde_json::Map::new();
    m.insert("tool_version".into(), json!(VERSION));
    m.insert("command".into(), json!(command));
    m.insert(
        "config".into(),
        serde_json::to_value(config).expect("plain data"),
    );
    m
}

fn structure_json(m: Structure, names: &[String]) -> Value {
    json!({ "mask": m.mask(), "features": m.names(names) })
}

fn discretize(args: &DiscretizeArgs) -> CmdResult {
    let data = args.data.load()?;
    let mut w = create(&args.out)?;
    data.write_csv(&mut w)?;
    w.flush().map_err(|e| nbselect::Error::io(&args.out, e))?;
    let mut out = header("discretize", args);
    out.insert("rows".into(), json!(data.len()));
    out.insert(
        "variables".into(),
        serde_json::to_value(data.schema().variables())?,
    );
    emit(&Value::Object(out))
}

fn score(args: &ScoreArgs) -> CmdResult {
    let data = args.data.load()?;
    let names = data.schema().feature_names();
    let m = Structure::parse(&args.structure, &names)?;
    let spec = args.criterion.spec(args.data.seed);
    let s = spec.score(&data, m)?;
    let mut out = header("score", args);
    out.insert("criterion".into(), json!(spec.name()));
    out.insert("spec".into(), serde_json::to_value(spec)?);
    out.insert("structure".into(), structure_json(m, &names));
    out.insert("score".into(), json!(s.finite()));
    emit(&Value::Object(out))
}

fn select(args: &SelectArgs) -> CmdResult {
    let data = args.data.load()?;
    let names = data.schema().feature_names();
    let spec = args.criterion.spec(args.data.seed);
    let opts = SearchOptions {
        feature_cap: args.search.max_features,
        workers: args.search.workers,
    };
    let sel = select_best(&data, &spec, &opts)?;
    if let Some(path) = &args.table_out {
        let mut w = create(path)?;
        sel.table.write_csv(&mut w, &names)?;
    }
    let top: Vec<Value> = sel
        .table
        .top(args.top)
        .into_iter()
        .map(|(m, s)| json!({ "mask": m.mask(), "features": m.names(&names), "score": s.finite() }))
        .collect();
    let mut out = header("select", args);
    out.insert("criterion".into(), json!(spec.name()));
    out.insert("spec".into(), serde_json::to_value(spec)?);
    out.insert("structure".into(), structure_json(sel.best, &names));
    out.insert("score".into(), json!(sel.score.finite()));
    out.insert("degenerate".into(), json!(sel.degenerate));
    out.insert("structures_scored".into(), json!(sel.table.entries.len()));
    out.insert("top".into(), Value::Array(top));
    emit(&Value::Object(out))
}

fn experiment(args: &ExperimentArgs) -> CmdResult {
    let data = args.data.load()?;
    let criteria = args
        .criteria
        .iter()
        .map(|n| {
            CriterionSpec::from_name(n)
                .map(|spec| apply_overrides(spec, args.folds, args.orderings))
        })
        .collect::<nbselect::Result<Vec<_>>>()?;
    let config = ExperimentConfig {
        criteria,
        repetitions: args.reps,
        sample_size: args.sample,
        seed: args.data.seed,
        redraw_sample: args.redraw_sample,
        selection_loss: args.selection_loss,
        feature_cap: args.search.max_features,
        bins: Some(args.data.bins),
    };
    let mut report = run_experiment(&data, &config, args.search.workers)?;
    report.invocation = Some(serde_json::to_value(args)?);
    let text = report.to_json()?;
    match &args.out {
        Some(path) => {
            let mut w = create(path)?;
            writeln!(w, "{text}")?;
            w.flush()?;
        }
        None => println!("{text}"),
    }
    if let Some(path) = &args.csv_out {
        report.write_gain_csv(create(path)?)?;
    }
    eprint!("{}", report.summary_table());
    Ok(())
}

fn compare(args: &CompareArgs) -> CmdResult {
    let reports = args
        .reports
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p).map_err(|e| nbselect::Error::io(p, e))?;
            ExperimentReport::from_json(&text)
        })
        .collect::<nbselect::Result<Vec<_>>>()?;
    let mut out = header("compare", args);
    out.insert(
        "comparison".into(),
        serde_json::to_value(compare_reports(&reports))?,
    );
    let value = Value::Object(out);
    if let Some(path) = &args.out {
        let mut w = create(path)?;
        serde_json::to_writer_pretty(&mut w, &value)?;
        writeln!(w)?;
        w.flush()?;
    }
    emit(&value)
}

fn main() -> ExitCode {
    let argv = match config_file::expand(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::try_parse_from(argv).unwrap_or_else(|e| e.exit());
    let result = match &cli.command {
        Command::Discretize(a) => discretize(a),
        Command::Score(a) => score(a),
        Command::Select(a) => select(a),
        Command::Experiment(a) => experiment(a),
        Command::Compare(a) => compare(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
