use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gridguard::datastore::{self, load_corpus, save_corpus, write_atomic, Corpus};
use gridguard::detect::ClassifierKind;
use gridguard::experiment::{
    self, evaluate, DetectReport, Evaluation, ExperimentConfig, IsolateReport, Report, Scenario,
    SimulateReport, TrainedDetector,
};
use gridguard::isolate::IsolationMethod;

#[derive(Parser)]
#[command(
    name = "gridguard",
    version,
    about = "Demand-response FDIA pipeline: generate, train, detect, isolate, simulate, evaluate"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Experiment config (JSON); missing fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides every seed in the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Clone)]
struct Inputs {
    /// Corpus directory written by `generate`.
    #[arg(long)]
    corpus: PathBuf,
    /// Model file written by `train`.
    #[arg(long)]
    model: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit clusters on the attack-free training days and calibrate thresholds.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        corpus: PathBuf,
        /// Cluster count (default: one per 25 training days, at least 4).
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Classify every test-split forecast.
    Detect {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        inputs: Inputs,
        /// csr | sr
        #[arg(long)]
        classifier: Option<ClassifierKind>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Locate the attacked slots of flagged test days.
    Isolate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        inputs: Inputs,
        /// csr | sr
        #[arg(long)]
        classifier: Option<ClassifierKind>,
        /// beam | lof | csr
        #[arg(long)]
        isolator: Option<IsolationMethod>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Paired DR runs: clean, attacked and mitigated.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        inputs: Inputs,
        /// clean | attack | mitigated (default: everything)
        #[arg(long)]
        scenario: Option<ScenarioArg>,
        /// 1..6 | none
        #[arg(long)]
        method: Option<MethodArg>,
        /// Simulate only the first N test days.
        #[arg(long)]
        days: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Join report files into comparison tables.
    Evaluate {
        #[arg(long)]
        out: PathBuf,
        /// Report JSON files from detect / isolate / simulate.
        #[arg(required = true)]
        reports: Vec<PathBuf>,
    },
    /// generate → train → detect → isolate → simulate → evaluate.
    Pipeline {
        #[command(flatten)]
        common: Common,
        /// Simulate only the first N test days.
        #[arg(long)]
        days: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum ScenarioArg {
    Clean,
    Attack,
    Mitigated,
}

impl std::str::FromStr for ScenarioArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "clean" => Ok(Self::Clean),
            "attack" => Ok(Self::Attack),
            "mitigated" => Ok(Self::Mitigated),
            other => Err(format!("unknown scenario '{other}' (expected clean|attack|mitigated)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum MethodArg {
    None,
    Number(u8),
}

impl std::str::FromStr for MethodArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "none" {
            return Ok(Self::None);
        }
        match s.parse::<u8>() {
            Ok(n @ 1..=6) => Ok(Self::Number(n)),
            _ => Err(format!("unknown method '{s}' (expected 1..6|none)")),
        }
    }
}

enum Failure {
    Usage(String),
    Lib(gridguard::Error),
}

impl From<gridguard::Error> for Failure {
    fn from(e: gridguard::Error) -> Self {
        Failure::Lib(e)
    }
}

type CliResult<T> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(summary) => {
            print!("{summary}");
            ExitCode::SUCCESS
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_data_error() { 2 } else { 1 })
        }
    }
}

/// Config file (or defaults) with the seed override applied. A loaded
/// corpus always supplies its own generator settings.
fn resolve_config(common: &Common, corpus: Option<&Corpus>) -> CliResult<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    match (common.seed, &common.config, corpus) {
        (Some(seed), _, _) => cfg = cfg.with_seed(seed),
        (None, None, Some(c)) => cfg = cfg.with_seed(c.config.seed),
        _ => {}
    }
    if let Some(c) = corpus {
        cfg.generator = c.config.clone();
    }
    Ok(cfg)
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|source| {
        Failure::Lib(gridguard::Error::Io {
            path: dir.to_path_buf(),
            source,
        })
    })
}

fn pct(bucket: u32) -> String {
    format!("{}%", bucket as f64 / 100.0)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |x| format!("{x:.4}"))
}

fn run(command: Command) -> CliResult<String> {
    match command {
        Command::Generate { common, out } => {
            let cfg = resolve_config(&common, None)?;
            cmd_generate(&cfg, &out)
        }
        Command::Train { common, corpus, k, out } => {
            let corpus = load_corpus(&corpus)?;
            let mut cfg = resolve_config(&common, Some(&corpus))?;
            if k.is_some() {
                cfg.k = k;
            }
            cmd_train(&corpus, &cfg, &out).map(|(_, s)| s)
        }
        Command::Detect { common, inputs, classifier, out } => {
            let (corpus, trained, cfg) = load_inputs(&common, &inputs)?;
            let kind = classifier.unwrap_or(cfg.classifier);
            cmd_detect(&corpus, &trained, kind, &out).map(|(_, s)| s)
        }
        Command::Isolate { common, inputs, classifier, isolator, out } => {
            let (corpus, trained, cfg) = load_inputs(&common, &inputs)?;
            let kind = classifier.unwrap_or(cfg.classifier);
            let isolator = isolator.unwrap_or(cfg.isolator);
            cmd_isolate(&corpus, &trained, &cfg, kind, isolator, &out).map(|(_, s)| s)
        }
        Command::Simulate { common, inputs, scenario, method, days, out } => {
            let (corpus, trained, mut cfg) = load_inputs(&common, &inputs)?;
            if days.is_some() {
                cfg.simulation.max_days = days;
            }
            let scenarios = scenarios(scenario, method)?;
            cmd_simulate(&corpus, &trained, &cfg, &scenarios, &out).map(|(_, s)| s)
        }
        Command::Evaluate { out, reports } => cmd_evaluate(&reports, &out),
        Command::Pipeline { common, days, out } => {
            let mut cfg = resolve_config(&common, None)?;
            if days.is_some() {
                cfg.simulation.max_days = days;
            }
            cmd_pipeline(&cfg, &out)
        }
    }
}

fn load_inputs(common: &Common, inputs: &Inputs) -> CliResult<(Corpus, TrainedDetector, ExperimentConfig)> {
    let corpus = load_corpus(&inputs.corpus)?;
    let trained = TrainedDetector::load(&inputs.model)?;
    let cfg = resolve_config(common, Some(&corpus))?;
    Ok((corpus, trained, cfg))
}

/// The clean baseline is always reported; `attack` adds the unmitigated
/// run and `mitigated` adds the chosen method (all six by default).
fn scenarios(scenario: Option<ScenarioArg>, method: Option<MethodArg>) -> CliResult<Vec<Scenario>> {
    let scenario = match (scenario, method) {
        (None, None) => return Ok(Scenario::all()),
        (None, Some(MethodArg::None)) => ScenarioArg::Attack,
        (None, Some(MethodArg::Number(_))) => ScenarioArg::Mitigated,
        (Some(s), _) => s,
    };
    let mitigated = |ms: Vec<u8>| {
        let mut v = vec![Scenario::Clean, Scenario::Attack];
        v.extend(ms.into_iter().map(Scenario::Mitigated));
        v
    };
    match (scenario, method) {
        (ScenarioArg::Clean, None | Some(MethodArg::None)) => Ok(vec![Scenario::Clean]),
        (ScenarioArg::Attack, None | Some(MethodArg::None)) => Ok(vec![Scenario::Clean, Scenario::Attack]),
        (ScenarioArg::Mitigated, None) => Ok(mitigated((1..=6).collect())),
        (ScenarioArg::Mitigated, Some(MethodArg::Number(n))) => Ok(mitigated(vec![n])),
        (ScenarioArg::Mitigated, Some(MethodArg::None)) => {
            Err(Failure::Usage("--scenario mitigated needs --method 1..6".into()))
        }
        (s, Some(MethodArg::Number(_))) => Err(Failure::Usage(format!(
            "--method applies only to --scenario mitigated, not {s:?}"
        ))),
    }
}

fn cmd_generate(cfg: &ExperimentConfig, out: &Path) -> CliResult<String> {
    let corpus = datastore::generate(&cfg.generator)?;
    ensure_dir(out)?;
    save_corpus(out, &corpus)?;
    let mut s = String::new();
    let _ = writeln!(s, "corpus: {}", out.display());
    let _ = writeln!(
        s,
        "days: {} (train {}, test {})",
        corpus.days.len(),
        corpus.train_len(),
        corpus.test_days().len()
    );
    let _ = writeln!(s, "houses: {}", cfg.generator.houses);
    let _ = writeln!(s, "attacked: {}", corpus.attacked_count());
    let _ = writeln!(s, "reference demand: {}", corpus.reference_demand);
    for (bucket, n) in corpus.magnitude_histogram() {
        let _ = writeln!(s, "  injection {:>6}: {n}", pct(bucket));
    }
    Ok(s)
}

fn cmd_train(corpus: &Corpus, cfg: &ExperimentConfig, out: &Path) -> CliResult<(TrainedDetector, String)> {
    let trained = experiment::train(corpus, cfg)?;
    ensure_dir(out)?;
    trained.save(&out.join("model.json"))?;
    let mut diag = String::from("iteration,objective\n");
    for (i, o) in trained.model.objective_trace.iter().enumerate() {
        let _ = writeln!(diag, "{i},{o}");
    }
    write_atomic(&out.join("fit_diagnostics.csv"), diag.as_bytes())?;
    let mut s = String::new();
    let _ = writeln!(s, "model: {}", out.join("model.json").display());
    let _ = writeln!(s, "training forecasts: {}", trained.model.members.len());
    let _ = writeln!(s, "k: {}", trained.model.k());
    let _ = writeln!(s, "lloyd iterations: {}", trained.model.objective_trace.len());
    let _ = writeln!(
        s,
        "thresholds at p{}: csr {:.6}, sr {:.6}",
        trained.percentile, trained.csr.threshold, trained.sr.threshold
    );
    Ok((trained, s))
}

fn cmd_detect(
    corpus: &Corpus,
    trained: &TrainedDetector,
    kind: ClassifierKind,
    out: &Path,
) -> CliResult<(DetectReport, String)> {
    let report = experiment::detect(corpus, trained, kind)?;
    ensure_dir(out)?;
    let stem = format!("detect_{}", kind.as_str());
    report.save(&out.join(format!("{stem}.json")))?;
    write_atomic(&out.join(format!("{stem}.csv")), report.rows_csv().as_bytes())?;
    let m = &report.metrics;
    let mut s = String::new();
    let _ = writeln!(s, "classifier: {} (threshold {:.6})", kind.as_str(), report.threshold);
    let _ = writeln!(s, "forecasts: {}", report.rows.len());
    let _ = writeln!(
        s,
        "accuracy {} precision {} recall {} f1 {} fpr {}",
        opt(m.accuracy),
        opt(m.precision),
        opt(m.recall),
        opt(m.f1),
        opt(m.fpr)
    );
    for b in &report.buckets {
        let _ = writeln!(
            s,
            "  injection {:>6}: {}/{} flagged ({:.3})",
            pct(b.bucket),
            b.flagged,
            b.attacked,
            b.recall
        );
    }
    Ok((report, s))
}

fn cmd_isolate(
    corpus: &Corpus,
    trained: &TrainedDetector,
    cfg: &ExperimentConfig,
    kind: ClassifierKind,
    isolator: IsolationMethod,
    out: &Path,
) -> CliResult<(IsolateReport, String)> {
    let report = experiment::isolate(corpus, trained, cfg, kind, isolator)?;
    ensure_dir(out)?;
    let stem = format!("isolate_{}", isolator.as_str());
    report.save(&out.join(format!("{stem}.json")))?;
    write_atomic(&out.join(format!("{stem}.csv")), report.rows_csv().as_bytes())?;
    let mut s = String::new();
    let _ = writeln!(s, "isolator: {} (classifier {})", isolator.as_str(), kind.as_str());
    let _ = writeln!(s, "attacked test days: {}", report.rows.len());
    let _ = writeln!(s, "exact-match recall: {:.4}", report.recall);
    for b in &report.buckets {
        let _ = writeln!(
            s,
            "  injection {:>6}: {}/{} exact ({:.3}), partial {:.3}",
            pct(b.bucket),
            b.exact,
            b.cases,
            b.recall,
            b.partial
        );
    }
    Ok((report, s))
}

fn audit_csv(report: &SimulateReport) -> String {
    let join = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(";");
    let mut t = vec![["day_id", "magnitude", "scenario", "iteration", "flagged", "slots", "received", "rectified"]
        .map(String::from)
        .to_vec()];
    for r in &report.rows {
        for a in &r.audit {
            t.push(vec![
                r.day_id.to_string(),
                r.magnitude.to_string(),
                r.scenario.to_string(),
                a.iteration.to_string(),
                a.flagged.map_or_else(String::new, |f| f.to_string()),
                a.slots.iter().map(usize::to_string).collect::<Vec<_>>().join(";"),
                join(&a.received),
                join(&a.rectified),
            ]);
        }
    }
    Evaluation::to_csv(&t)
}

fn cmd_simulate(
    corpus: &Corpus,
    trained: &TrainedDetector,
    cfg: &ExperimentConfig,
    scenarios: &[Scenario],
    out: &Path,
) -> CliResult<(SimulateReport, String)> {
    let report = experiment::simulate(corpus, trained, cfg, scenarios)?;
    ensure_dir(out)?;
    report.save(&out.join("simulate.json"))?;
    write_atomic(&out.join("simulate.csv"), report.rows_csv().as_bytes())?;
    write_atomic(&out.join("simulate_audit.csv"), audit_csv(&report).as_bytes())?;
    let eval = evaluate(&[], &[], std::slice::from_ref(&report))?;
    let costs = &eval.tables["mitigation_costs"];
    write_atomic(&out.join("simulate_summary.csv"), Evaluation::to_csv(costs).as_bytes())?;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<9} {:>5} {:>6} {:>16} {:>16} {:>14}",
        "scenario", "cases", "gains", "attacker mean/med", "community mean/med", "mape mean/med"
    );
    for x in &report.summary {
        let _ = writeln!(
            s,
            "{:<9} {:>5} {:>6} {:>8.2}/{:<7.2} {:>8.3}/{:<7.3} {:>6.3}/{:<7.3}",
            x.scenario.to_string(),
            x.cases,
            x.attacker_gains,
            x.attacker_delta_mean,
            x.attacker_delta_median,
            x.community_delta_mean,
            x.community_delta_median,
            x.mape_mean,
            x.mape_median
        );
    }
    Ok((report, s))
}

fn report_kind(path: &Path) -> CliResult<String> {
    let text = std::fs::read_to_string(path).map_err(|source| gridguard::Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|source| gridguard::Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(value
        .get("kind")
        .and_then(|k| k.as_str())
        .unwrap_or_default()
        .to_string())
}

fn cmd_evaluate(paths: &[PathBuf], out: &Path) -> CliResult<String> {
    let (mut detects, mut isolates, mut simulates) = (Vec::new(), Vec::new(), Vec::new());
    for path in paths {
        match report_kind(path)?.as_str() {
            k if k == DetectReport::KIND => detects.push(DetectReport::load(path)?),
            k if k == IsolateReport::KIND => isolates.push(IsolateReport::load(path)?),
            k if k == SimulateReport::KIND => simulates.push(SimulateReport::load(path)?),
            other => {
                return Err(Failure::Lib(gridguard::Error::Parse {
                    path: path.clone(),
                    line: 1,
                    message: format!("not a report document (kind '{other}')"),
                }))
            }
        }
    }
    let eval = evaluate(&detects, &isolates, &simulates)?;
    ensure_dir(out)?;
    eval.save(out)?;
    let mut s = String::new();
    for (name, table) in &eval.tables {
        if table.len() <= 1 {
            continue;
        }
        let _ = writeln!(s, "== {name}");
        s.push_str(&Evaluation::to_csv(table));
    }
    Ok(s)
}

fn cmd_pipeline(cfg: &ExperimentConfig, out: &Path) -> CliResult<String> {
    let corpus_dir = out.join("corpus");
    let model_dir = out.join("model");
    let reports = out.join("reports");
    let mut s = String::new();
    s += &cmd_generate(cfg, &corpus_dir)?;
    // Reading back what was written keeps the pipeline honest about the formats.
    let corpus = load_corpus(&corpus_dir)?;
    let (trained, t) = cmd_train(&corpus, cfg, &model_dir)?;
    s += &t;
    let mut written = Vec::new();
    for kind in [ClassifierKind::Csr, ClassifierKind::Sr] {
        s += &cmd_detect(&corpus, &trained, kind, &reports)?.1;
        written.push(reports.join(format!("detect_{}.json", kind.as_str())));
    }
    for iso in [IsolationMethod::IsolationPath, IsolationMethod::Lof, IsolationMethod::Csr] {
        s += &cmd_isolate(&corpus, &trained, cfg, cfg.classifier, iso, &reports)?.1;
        written.push(reports.join(format!("isolate_{}.json", iso.as_str())));
    }
    s += &cmd_simulate(&corpus, &trained, cfg, &Scenario::all(), &reports)?.1;
    written.push(reports.join("simulate.json"));
    s += &cmd_evaluate(&written, &out.join("evaluation"))?;
    Ok(s)
}
