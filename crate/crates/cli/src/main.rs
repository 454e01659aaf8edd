//! `scope-refine`: parse, run, transform, validate and refine MiniC programs.

mod model_source;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value as Json};

use scope_refine::harness::{
    report_write, run_pipeline, synth_corpus, write_corpus, ClassRule, CorpusRecord, CorpusSource, ExperimentConfig,
};
use scope_refine::minic::{interpret, print_source, resolve_scopes, SourceText, SourceUnit, Type, Value, DEFAULT_FUEL};
use scope_refine::model::{
    fit_layer_probes, probe_accuracies, save_model, train_surrogate, Classifier, Example, ModelSpec, TokenizedInput,
    TrainConfig,
};
use scope_refine::search::{adapt, SearchConfig, Strategy};
use scope_refine::transform::{apply_op, OperatorId, SiteIndex, TransformOutcome};
use scope_refine::validate::{
    classify_input, dsmg_score, uncertainty_score, Evidence, EvidenceKind, MetricId, Verdict,
};

use model_source::{open_model, ENDPOINT_VAR};
use output::{Format, Output};

#[derive(Debug, Parser)]
#[command(name = "scope-refine", version, about = "Validate and refine MiniC inputs to a code classifier")]
struct Cli {
    /// Output format for data written by the command.
    #[arg(long, global = true, value_enum, default_value_t = Format::Tsv)]
    format: Format,
    /// Print the effective configuration to stderr before running.
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the canonical form of a program.
    Parse(ParseArgs),
    /// Interpret one function of a program.
    Run(RunArgs),
    /// Apply one transformation operator, or list where it applies.
    Transform(TransformArgs),
    /// Score inputs and decide whether they are in the model's scope.
    Validate(ValidateArgs),
    /// Search for a semantically equivalent rewrite the model handles reliably.
    Adapt(AdaptArgs),
    /// Run the train/calibrate/validate/adapt experiment and write a report.
    Experiment(ExperimentArgs),
    /// Write a synthetic labelled corpus as JSONL.
    GenCorpus(GenCorpusArgs),
    /// Train a surrogate model with layer probes.
    Train(TrainArgs),
    /// Check that a model server speaks the wire protocol.
    CheckProtocol(CheckProtocolArgs),
    /// Answer wire-protocol requests on stdin with a model file.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
struct ParseArgs {
    /// MiniC source file.
    file: PathBuf,
    /// Write the output to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// MiniC source file.
    file: PathBuf,
    /// Function to call; defaults to `main`, else the first function.
    #[arg(long)]
    entry: Option<String>,
    /// Argument value (integer or true/false), repeated in parameter order.
    #[arg(long = "arg", allow_hyphen_values = true)]
    args: Vec<String>,
    /// Interpreter step limit.
    #[arg(long, default_value_t = DEFAULT_FUEL)]
    fuel: u64,
    /// Write the output to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TransformArgs {
    /// MiniC source file.
    file: PathBuf,
    /// Operator number (1-15) or name.
    #[arg(long)]
    op: Option<OperatorId>,
    /// Index of the site among the operator's sites.
    #[arg(long, default_value_t = 0)]
    site: usize,
    /// Seed for every random choice the command makes.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Print the site table instead of transforming.
    #[arg(long)]
    list_sites: bool,
    /// Write the output to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Model file. The model server named by SCOPE_REFINE_MODEL_ENDPOINT takes precedence.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Number of dropout sub-models.
    #[arg(long, default_value_t = 30)]
    k: usize,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    /// MiniC source file.
    #[arg(required_unless_present = "manifest", conflicts_with = "manifest")]
    file: Option<PathBuf>,
    /// JSONL manifest of inputs, one `{"id", "path"}` or `{"id", "source"}` object per line.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
    /// Seed for every random choice the command makes.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `dsmg`, or an uncertainty baseline: vanilla, temperature_scaled, entropy, predictive_entropy,
    /// mutual_information, least_confidence, ratio_confidence, margin_confidence, mc_dropout_variance.
    #[arg(long, default_value_t = MetricId::Dsmg)]
    metric: MetricId,
    /// Inputs scoring below this are out of scope.
    #[arg(long, default_value_t = 0.5)]
    tau: f64,
    /// Softmax temperature for temperature_scaled.
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    /// Write the output to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AdaptArgs {
    /// MiniC source file.
    file: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    /// aes, hc (hill climbing) or rand.
    #[arg(long, default_value_t = Strategy::Aes)]
    strategy: Strategy,
    /// Seed for every random choice the command makes.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fitness evaluations allowed.
    #[arg(long)]
    budget: Option<usize>,
    /// Score a refinement must reach; inputs already at it are left unchanged.
    #[arg(long, default_value_t = 0.5)]
    tau: f64,
    /// Search settings as JSON; flags override it.
    #[arg(long)]
    search_config: Option<PathBuf>,
    /// Where to write the refined source. Printed after the summary otherwise.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    /// Experiment configuration as JSON; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Replaces every seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Report path. The report goes to stdout otherwise.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GenCorpusArgs {
    /// Number of programs.
    #[arg(long, default_value_t = 1000)]
    n: usize,
    /// Seed for every random choice the command makes.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Labelling rule.
    #[arg(long, default_value = "div-risk")]
    rule: String,
    /// Write the output to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// JSONL corpus. A synthetic one of --n programs is used otherwise.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Number of programs.
    #[arg(long, default_value_t = 1000)]
    n: usize,
    /// Seed for every random choice the command makes.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Encoder layers [default: 4].
    #[arg(long)]
    layers: Option<usize>,
    /// Hidden width [default: 64].
    #[arg(long)]
    hidden: Option<usize>,
    /// Training epochs [default: 30].
    #[arg(long)]
    epochs: Option<usize>,
    /// Dropout rate of the sub-models [default: 0.1].
    #[arg(long)]
    dropout: Option<f64>,
    /// Model file to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CheckProtocolArgs {
    /// `host:port`, `tcp://host:port` or `cmd:<server command>`. Defaults to SCOPE_REFINE_MODEL_ENDPOINT.
    endpoint: Option<String>,
    /// Serve a built-in model on a local port and check that instead.
    #[arg(long, conflicts_with = "endpoint")]
    self_test: bool,
    /// Model for --self-test; a small one is trained otherwise.
    #[arg(long, requires = "self_test")]
    model: Option<PathBuf>,
    /// Seed for every random choice the command makes.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the output to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    /// Model file.
    #[arg(long)]
    model: PathBuf,
}

/// Error carrying its exit code.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Diagnostic(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Diagnostic(_) => 2,
        }
    }
}

type CmdResult = Result<(), Failure>;

fn diag(e: impl ToString) -> Failure {
    Failure::Diagnostic(e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(m) => eprintln!("error: {m}"),
                Failure::Diagnostic(m) if !m.is_empty() => eprintln!("{m}"),
                Failure::Diagnostic(_) => {}
            }
            ExitCode::from(f.code())
        }
    }
}

fn dispatch(cli: Cli) -> CmdResult {
    let verbose = cli.verbose;
    let fmt = cli.format;
    let show = |cfg: Json| {
        if verbose {
            eprintln!("{}", serde_json::to_string_pretty(&cfg).unwrap());
        }
    };
    match cli.command {
        Command::Parse(a) => {
            show(json!({"command": "parse", "file": a.file}));
            cmd_parse(a, fmt)
        }
        Command::Run(a) => {
            show(json!({"command": "run", "file": a.file, "entry": a.entry, "args": a.args, "fuel": a.fuel}));
            cmd_run(a, fmt)
        }
        Command::Transform(a) => {
            show(json!({"command": "transform", "file": a.file, "op": a.op, "site": a.site, "seed": a.seed,
                "list_sites": a.list_sites}));
            cmd_transform(a, fmt)
        }
        Command::Validate(a) => cmd_validate(a, fmt, &show),
        Command::Adapt(a) => cmd_adapt(a, fmt, &show),
        Command::Experiment(a) => cmd_experiment(a, fmt, &show),
        Command::GenCorpus(a) => {
            show(json!({"command": "gen-corpus", "n": a.n, "seed": a.seed, "rule": a.rule}));
            cmd_gen_corpus(a)
        }
        Command::Train(a) => cmd_train(a, fmt, &show),
        Command::CheckProtocol(a) => {
            show(json!({"command": "check-protocol", "endpoint": a.endpoint, "self_test": a.self_test,
                "model": a.model, "seed": a.seed}));
            cmd_check_protocol(a, fmt)
        }
        Command::Serve(a) => {
            show(json!({"command": "serve", "model": a.model}));
            let model = scope_refine::model::load_model(&a.model).map_err(diag)?;
            let stdin = std::io::stdin();
            scope_refine::model::wire::serve_lines(&model, stdin.lock(), std::io::stdout().lock()).map_err(diag)
        }
    }
}

/// Reads and parses a source file, reporting `path:line:col: message` on failure.
fn load_unit(path: &Path) -> Result<SourceUnit, Failure> {
    let text = SourceText::from_path(path).map_err(|e| diag(format!("{}: {e}", path.display())))?;
    let unit = text.parse().map_err(|e| diag(text.diagnostic(&e)))?;
    resolve_scopes(&unit).map_err(|e| diag(format!("{}: {e}", path.display())))?;
    Ok(unit)
}

fn cmd_parse(a: ParseArgs, fmt: Format) -> CmdResult {
    let unit = load_unit(&a.file)?;
    let mut out = Output::new(fmt, a.out);
    out.source(&print_source(&unit));
    out.finish()
}

fn parse_value(s: &str, ty: Type) -> Result<Value, Failure> {
    match ty {
        Type::Int => s
            .parse()
            .map(Value::Int)
            .map_err(|_| Failure::Usage(format!("'{s}' is not an int"))),
        Type::Bool => s
            .parse()
            .map(Value::Bool)
            .map_err(|_| Failure::Usage(format!("'{s}' is not a bool"))),
    }
}

fn cmd_run(a: RunArgs, fmt: Format) -> CmdResult {
    let unit = load_unit(&a.file)?;
    let func = match &a.entry {
        Some(name) => unit.functions.iter().find(|f| &f.name == name),
        None => unit
            .functions
            .iter()
            .find(|f| f.name == "main")
            .or_else(|| unit.functions.first()),
    }
    .ok_or_else(|| Failure::Usage(format!("no function '{}'", a.entry.as_deref().unwrap_or("main"))))?;
    if a.args.len() != func.params.len() {
        return Err(Failure::Usage(format!(
            "{} takes {} arguments, got {}",
            func.name,
            func.params.len(),
            a.args.len()
        )));
    }
    let args = a
        .args
        .iter()
        .zip(&func.params)
        .map(|(s, p)| parse_value(s, p.ty))
        .collect::<Result<Vec<_>, _>>()?;
    let outcome = interpret(&unit, &func.name, &args, a.fuel);
    let result = match outcome.result {
        Ok(Value::Int(v)) => v.to_string(),
        Ok(Value::Bool(b)) => b.to_string(),
        Err(fault) => format!("fault:{fault}"),
    };
    let mut out = Output::new(fmt, a.out);
    out.record(&[("result", json!(result)), ("steps", json!(outcome.steps_used))]);
    out.finish()
}

fn cmd_transform(a: TransformArgs, fmt: Format) -> CmdResult {
    let unit = load_unit(&a.file)?;
    let index = SiteIndex::build(&unit);
    let mut out = Output::new(fmt, a.out);
    if a.list_sites {
        let ops: Vec<OperatorId> = match a.op {
            Some(op) => vec![op],
            None => OperatorId::ALL.to_vec(),
        };
        out.header(&["op", "name", "site", "node", "description"]);
        for op in ops {
            for (rank, site) in index.sites(op).iter().enumerate() {
                out.row(&[
                    ("op", json!(op.number())),
                    ("name", json!(op.name())),
                    ("site", json!(rank)),
                    ("node", json!(site.node_id)),
                    ("description", json!(site.description)),
                ]);
            }
        }
        return out.finish();
    }
    let op = a
        .op
        .ok_or_else(|| Failure::Usage("--op is required unless --list-sites is given".into()))?;
    let sites = index.sites(op);
    let site = sites.get(a.site).ok_or_else(|| {
        diag(format!(
            "{}: {op} has {} site(s); --site {} is out of range",
            a.file.display(),
            sites.len(),
            a.site
        ))
    })?;
    match apply_op(&unit, op, site, a.seed) {
        TransformOutcome::Applied { unit, .. } => {
            out.source(&print_source(&unit));
            out.finish()
        }
        TransformOutcome::Inapplicable(reason) => Err(diag(format!("{}: {reason}", a.file.display()))),
    }
}

struct ManifestEntry {
    id: String,
    unit: Result<SourceUnit, String>,
}

fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| diag(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut entries = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |m: &str| diag(format!("{}:{}: {m}", path.display(), n + 1));
        let v: Json = serde_json::from_str(line).map_err(|e| bad(&e.to_string()))?;
        let id = match v.get("id") {
            Some(Json::String(s)) => s.clone(),
            Some(other) => other.to_string(),
            None => format!("line{}", n + 1),
        };
        let unit = if let Some(src) = v.get("source").and_then(Json::as_str) {
            scope_refine::minic::load(src).map(|(u, _)| u)
        } else if let Some(p) = v.get("path").and_then(Json::as_str) {
            load_unit(&base.join(p)).map_err(|f| match f {
                Failure::Usage(m) | Failure::Diagnostic(m) => m,
            })
        } else {
            return Err(bad("entry needs \"source\" or \"path\""));
        };
        entries.push(ManifestEntry { id, unit });
    }
    Ok(entries)
}

fn fmt_score(x: f64) -> Json {
    json!(x)
}

fn cmd_validate(a: ValidateArgs, fmt: Format, show: &dyn Fn(Json)) -> CmdResult {
    show(json!({"command": "validate", "file": a.file, "manifest": a.manifest, "model": a.model.model,
        "endpoint": std::env::var(ENDPOINT_VAR).ok(), "k": a.model.k, "seed": a.seed,
        "metric": a.metric.to_string(), "tau": a.tau, "temperature": a.temperature}));
    if let MetricId::Uncertainty(m) = a.metric {
        if m.needs() == EvidenceKind::Ensemble {
            return Err(Failure::Usage(format!(
                "{m} needs several independently trained models; the experiment command reports it"
            )));
        }
    }
    let model = open_model(a.model.model.as_deref())?;
    let model = model.classifier();
    let batch = a.manifest.is_some();
    let entries = match (&a.file, &a.manifest) {
        (_, Some(m)) => read_manifest(m)?,
        (Some(f), None) => vec![ManifestEntry {
            id: f.display().to_string(),
            unit: Ok(load_unit(f)?),
        }],
        (None, None) => unreachable!("clap requires one of them"),
    };
    let mut out = Output::new(fmt, a.out.clone());
    let mut cols = vec!["verdict", "score", "variance_term", "distance_term"];
    if batch {
        cols.insert(0, "id");
        cols.push("error");
    }
    out.header(&cols);
    let mut failures = 0;
    for entry in entries {
        let scored = entry.unit.and_then(|unit| score_one(model, &unit, &a).map_err(|e| e.to_string()));
        let mut row: Vec<(&str, Json)> = Vec::new();
        if batch {
            row.push(("id", json!(entry.id)));
        }
        match scored {
            Ok((verdict, score, var, dist)) => {
                let verdict = match verdict {
                    Verdict::InScope => "in_scope",
                    Verdict::OutOfScope => "out_of_scope",
                };
                row.push(("verdict", json!(verdict)));
                row.push(("score", fmt_score(score)));
                row.push(("variance_term", var.map_or(Json::Null, fmt_score)));
                row.push(("distance_term", dist.map_or(Json::Null, fmt_score)));
                if batch {
                    row.push(("error", Json::Null));
                }
            }
            Err(e) if batch => {
                failures += 1;
                for c in ["verdict", "score", "variance_term", "distance_term"] {
                    row.push((c, Json::Null));
                }
                row.push(("error", json!(e)));
            }
            Err(e) => return Err(diag(e)),
        }
        out.row(&row);
    }
    out.finish()?;
    if failures > 0 {
        return Err(diag(format!("{failures} input(s) could not be scored")));
    }
    Ok(())
}

type Scored = (Verdict, f64, Option<f64>, Option<f64>);

fn score_one(model: &dyn Classifier, unit: &SourceUnit, a: &ValidateArgs) -> Result<Scored, Box<dyn std::error::Error>> {
    let input = TokenizedInput::from_unit(unit);
    let (score, var, dist) = match a.metric {
        MetricId::Dsmg => {
            let samples = model.infer_submodels(&input, a.model.k, a.seed)?;
            let s = dsmg_score(&samples, Default::default(), None)?;
            (s.combined, Some(s.variance_term), Some(s.distance_term))
        }
        MetricId::Uncertainty(m) => {
            let value = match m.needs() {
                EvidenceKind::Samples => {
                    let samples = model.infer_submodels(&input, a.model.k, a.seed)?;
                    uncertainty_score(m, Evidence::Samples(&samples), a.temperature)?
                }
                _ => {
                    let output = model.infer(&input)?;
                    uncertainty_score(m, Evidence::Single(&output), a.temperature)?
                }
            };
            (value.score, None, None)
        }
    };
    Ok((classify_input(score, a.tau, a.metric).verdict, score, var, dist))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| diag(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| diag(format!("{}: {e}", path.display())))
}

fn cmd_adapt(a: AdaptArgs, fmt: Format, show: &dyn Fn(Json)) -> CmdResult {
    let mut search: SearchConfig = match &a.search_config {
        Some(p) => read_json(p)?,
        None => SearchConfig::default(),
    };
    if a.budget.is_some() {
        search.eval_budget = a.budget;
    }
    search.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let dsmg = scope_refine::validate::DsmgConfig {
        k: a.model.k,
        base_seed: a.seed,
        ..Default::default()
    };
    show(json!({"command": "adapt", "file": a.file, "model": a.model.model,
        "endpoint": std::env::var(ENDPOINT_VAR).ok(), "strategy": a.strategy, "seed": a.seed, "tau": a.tau,
        "dsmg": dsmg, "search": search, "out": a.out}));
    let unit = load_unit(&a.file)?;
    let model = open_model(a.model.model.as_deref())?;
    let outcome = adapt(&unit, model.classifier(), &dsmg, a.tau, a.strategy, &search, a.seed).map_err(diag)?;
    let source = print_source(&outcome.unit);
    let mut out = Output::new(fmt, None);
    let mut fields = vec![
        ("kind", json!(outcome.kind)),
        ("original_score", fmt_score(outcome.original_score)),
        ("score", fmt_score(outcome.score)),
        ("original_prediction", json!(outcome.original_prediction)),
        ("prediction", json!(outcome.prediction)),
        ("evaluations", json!(outcome.evaluations())),
        ("genome", json!(outcome.genome.to_string())),
    ];
    match &a.out {
        Some(path) => {
            std::fs::write(path, &source).map_err(|e| diag(format!("{}: {e}", path.display())))?;
            out.record(&fields);
        }
        None if fmt == Format::Json => {
            fields.push(("source", json!(source)));
            out.record(&fields);
        }
        None => {
            out.record(&fields);
            out.raw("\n");
            out.raw(&source);
        }
    }
    out.finish()
}

fn reseed(cfg: &mut ExperimentConfig, seed: u64) {
    if let CorpusSource::Synthetic { seed: s, .. } = &mut cfg.corpus {
        *s = seed;
    }
    cfg.split.seed = seed;
    cfg.train_seed = seed;
    cfg.dsmg.base_seed = seed;
    cfg.search_seed = seed;
}

fn cmd_experiment(a: ExperimentArgs, fmt: Format, show: &dyn Fn(Json)) -> CmdResult {
    let cfg = match (&a.config, a.seed) {
        (Some(p), seed) => {
            let mut cfg: ExperimentConfig = read_json(p)?;
            if let Some(s) = seed {
                reseed(&mut cfg, s);
            }
            cfg
        }
        (None, seed) => ExperimentConfig::seeded(seed.unwrap_or(1)),
    };
    show(serde_json::to_value(&cfg).unwrap());
    let report = run_pipeline(&cfg).map_err(diag)?;
    match &a.out {
        Some(path) => {
            report_write(&report, path).map_err(diag)?;
            let mut out = Output::new(fmt, None);
            out.record(&[
                ("partial", json!(report.partial)),
                ("baseline_accuracy", json!(report.baseline.accuracy)),
                ("adapted_accuracy", json!(report.adapted.accuracy)),
                ("auc", json!(report.auc)),
                ("tau", json!(report.tau)),
                ("cvr", json!(report.cvr)),
                ("mvr", json!(report.mvr)),
                ("corrected_fraction", json!(report.corrected_fraction)),
                ("regressed_fraction", json!(report.regressed_fraction)),
            ]);
            out.finish()?;
        }
        None => {
            let mut out = Output::new(Format::Json, None);
            out.raw(&(report.to_json() + "\n"));
            out.finish()?;
        }
    }
    if report.partial {
        return Err(diag(format!("partial run: {}", report.errors.join("; "))));
    }
    Ok(())
}

fn parse_rule(s: &str) -> Result<ClassRule, Failure> {
    serde_json::from_value(json!(s)).map_err(|_| Failure::Usage(format!("unknown rule '{s}'")))
}

fn cmd_gen_corpus(a: GenCorpusArgs) -> CmdResult {
    let rule = parse_rule(&a.rule)?;
    let recs = synth_corpus(a.n, rule, a.seed).map_err(diag)?;
    match &a.out {
        Some(p) => write_corpus(&recs, p).map_err(diag),
        None => {
            let mut out = Output::new(Format::Json, None);
            out.raw(&scope_refine::harness::corpus_jsonl(&recs));
            out.finish()
        }
    }
}

fn cmd_train(a: TrainArgs, fmt: Format, show: &dyn Fn(Json)) -> CmdResult {
    let mut spec = ModelSpec::default();
    spec.num_layers = a.layers.unwrap_or(spec.num_layers);
    spec.hidden_dim = a.hidden.unwrap_or(spec.hidden_dim);
    spec.dropout_rate = a.dropout.unwrap_or(spec.dropout_rate);
    let mut train = TrainConfig::default();
    train.epochs = a.epochs.unwrap_or(train.epochs);
    show(json!({"command": "train", "corpus": a.corpus, "n": a.n, "seed": a.seed, "spec": spec,
        "train": train, "out": a.out}));
    spec.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let recs: Vec<CorpusRecord> = match &a.corpus {
        Some(p) => scope_refine::harness::load_corpus(p).map_err(diag)?,
        None => synth_corpus(a.n, ClassRule::DivRisk, a.seed).map_err(diag)?,
    };
    let examples = recs
        .iter()
        .map(|r| {
            let unit = scope_refine::minic::parse(&r.source).map_err(|e| diag(format!("{}: {e}", r.id)))?;
            Ok(Example {
                input: TokenizedInput::from_unit(&unit),
                label: r.label,
            })
        })
        .collect::<Result<Vec<_>, Failure>>()?;
    let (model, report) = train_surrogate(&examples, spec, &train, a.seed).map_err(diag)?;
    let model = fit_layer_probes(&model, &examples, &train).map_err(diag)?;
    save_model(&model, &a.out).map_err(diag)?;
    let probes = probe_accuracies(&model, &examples).map_err(diag)?;
    let mut out = Output::new(fmt, None);
    out.record(&[
        ("train_accuracy", json!(report.accuracy)),
        ("final_loss", json!(report.final_loss)),
        ("probe_accuracy", json!(probes)),
    ]);
    out.finish()
}

fn cmd_check_protocol(a: CheckProtocolArgs, fmt: Format) -> CmdResult {
    let report = if a.self_test {
        model_source::self_test(a.model.as_deref(), a.seed)?
    } else {
        let endpoint = match a.endpoint.clone().or_else(|| std::env::var(ENDPOINT_VAR).ok()) {
            Some(e) => e,
            None => return Err(Failure::Usage(format!("no endpoint given and {ENDPOINT_VAR} is unset"))),
        };
        scope_refine::model::wire::check_protocol(&endpoint).map_err(diag)?
    };
    let mut out = Output::new(fmt, a.out);
    out.header(&["check", "result", "detail"]);
    for c in &report.checks {
        out.row(&[
            ("check", json!(c.name)),
            ("result", json!(if c.passed { "pass" } else { "fail" })),
            ("detail", json!(c.detail)),
        ]);
    }
    out.finish()?;
    match report.violation() {
        Some(v) => Err(diag(v)),
        None => Ok(()),
    }
}
