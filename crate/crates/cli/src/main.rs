//! `spd`: fit, apply, evaluate and diagnose embedding debiasers through files.
//!
//! Log verbosity follows `SPD_LOG` (`error`, `warn`, `info`, `debug`); the
//! default is `warn`. Failures print a single `error[Code]: message` line on
//! stderr and exit with the code listed in [`error`].

mod config;
mod error;
mod evaluate;
mod synth_spec;
mod table;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use spd_core::debias::{fit_spd, sfid_fit, ApplyOptions, DebiasArtifact};
use spd_core::diagnostics::{drift_report, entanglement_report, residual_bias_report, DebiasMethod};
use spd_core::io::{self, Dtype, EmbeddingFile};
use spd_core::models::LabelVector;
use spd_core::rng::derive_seed;
use spd_core::Matrix;

use config::{Method, Mode, RunConfig};
use error::{CliError, WithPath};

#[derive(Parser)]
#[command(name = "spd", version, about = "Subspace projection debiasing for frozen embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn an SPD or SFID artifact for one attribute.
    Fit(FitArgs),
    /// Debias embeddings with one or more artifacts, in order.
    Apply(ApplyArgs),
    /// Compute fairness and utility metrics from prediction files.
    #[command(subcommand)]
    Evaluate(EvaluateCmd),
    /// Overlap and residual-bias diagnostics.
    #[command(subcommand)]
    Diagnose(DiagnoseCmd),
    /// Generate synthetic embeddings with planted bias.
    Synth(SynthArgs),
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig::load(self.config.as_deref())?;
        if self.seed.is_some() {
            cfg.seed = self.seed;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    attribute: Option<String>,
    #[arg(long, value_enum)]
    method: Option<Method>,
    #[arg(long)]
    out: PathBuf,
    /// Also write the fit summary as JSON.
    #[arg(long)]
    summary: Option<PathBuf>,
    #[arg(long)]
    r: Option<usize>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    n_trees: Option<usize>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct ApplyArgs {
    #[arg(long)]
    embeddings: PathBuf,
    /// Artifact file; repeat to compose several, applied left to right.
    #[arg(long = "artifact", required = true)]
    artifacts: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Rescale output rows to unit length.
    #[arg(long)]
    renormalize: bool,
    /// Skip neutral reinjection in SPD artifacts.
    #[arg(long)]
    proj_only: bool,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct EvalCommon {
    /// `NAME=PATH`; repeatable. The first run is the improvement baseline.
    #[arg(long = "run", required = true, value_parser = parse_named)]
    runs: Vec<(String, PathBuf)>,
    /// Metric records, one JSON object per line.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    bootstrap: Option<usize>,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand)]
enum EvaluateCmd {
    Classification {
        #[command(flatten)]
        eval: EvalCommon,
        /// Size of the class set; defaults to the largest id seen plus one.
        #[arg(long)]
        classes: Option<usize>,
    },
    Retrieval {
        #[command(flatten)]
        eval: EvalCommon,
        #[arg(long)]
        items: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1,5,10")]
        recall_k: Vec<usize>,
        #[arg(long, default_value_t = 100)]
        skew_k: usize,
        #[arg(long)]
        alpha: Option<f64>,
    },
    Generation {
        #[command(flatten)]
        eval: EvalCommon,
        /// Generations per prompt.
        #[arg(long, default_value_t = 10)]
        n: usize,
    },
}

#[derive(Subcommand)]
enum DiagnoseCmd {
    /// Top-m importance overlap between attributes.
    Entanglement {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        /// Comma-separated subset of label columns (2 or 3).
        #[arg(long, value_delimiter = ',')]
        attributes: Vec<String>,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Top-m importance overlap for one attribute across datasets.
    Drift {
        /// `NAME=EMBEDDINGS,LABELS`; give 2 or 3.
        #[arg(long = "dataset", required = true, value_parser = parse_dataset)]
        datasets: Vec<(String, PathBuf, PathBuf)>,
        #[arg(long)]
        attribute: Option<String>,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Probe accuracy for every attribute after every artifact.
    Residual {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        /// `NAME=ARTIFACT`; repeatable.
        #[arg(long = "method", value_parser = parse_named)]
        methods: Vec<(String, PathBuf)>,
        #[arg(long)]
        renormalize: bool,
        #[arg(long)]
        proj_only: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum DtypeArg {
    F32,
    F64,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "f64")]
    dtype: DtypeArg,
}

fn parse_named(s: &str) -> Result<(String, PathBuf), String> {
    let (name, path) = s.split_once('=').ok_or_else(|| format!("expected NAME=PATH, got {s:?}"))?;
    if name.is_empty() || path.is_empty() {
        return Err(format!("expected NAME=PATH, got {s:?}"));
    }
    Ok((name.to_string(), PathBuf::from(path)))
}

fn parse_dataset(s: &str) -> Result<(String, PathBuf, PathBuf), String> {
    let (name, rest) = parse_named(s)?;
    let rest = rest.to_string_lossy().into_owned();
    let (emb, lab) = rest
        .split_once(',')
        .ok_or_else(|| format!("expected NAME=EMBEDDINGS,LABELS, got {s:?}"))?;
    Ok((name, PathBuf::from(emb), PathBuf::from(lab)))
}

fn read_embeddings(path: &Path) -> Result<EmbeddingFile, CliError> {
    io::read_embeddings(path).at(path)
}

fn read_labels(path: &Path, n: usize) -> Result<Vec<(String, LabelVector)>, CliError> {
    let labels = io::read_labels(path).at(path)?;
    if let Some((_, y)) = labels.first() {
        if y.len() != n {
            return Err(CliError::schema(path, 1, format!("{} label rows for {n} embeddings", y.len())));
        }
    }
    Ok(labels)
}

fn pick_attribute(labels: Vec<(String, LabelVector)>, name: Option<&str>, path: &Path) -> Result<(String, LabelVector), CliError> {
    let name = name.ok_or_else(|| CliError::Usage("no attribute: pass --attribute or set `attribute` in the config".into()))?;
    labels
        .into_iter()
        .find(|(n, _)| n == name)
        .ok_or_else(|| CliError::schema(path, 1, format!("no label column {name:?}")))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    io::write_atomic(path, text.as_bytes()).at(path)
}

#[derive(Serialize)]
struct FitSummary {
    attribute: String,
    method: Method,
    #[serde(skip_serializing_if = "Option::is_none")]
    d_b: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    m: Option<usize>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    per_iteration_accuracy: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    stop_reason: Option<String>,
    selection_mode: String,
    tau: f64,
    n_selected: usize,
}

fn cmd_fit(a: FitArgs) -> Result<(), CliError> {
    let mut cfg = a.common.load()?;
    if a.attribute.is_some() {
        cfg.attribute = a.attribute.clone();
    }
    cfg.method = a.method.unwrap_or(cfg.method);
    cfg.r = a.r.unwrap_or(cfg.r);
    cfg.tau = a.tau.unwrap_or(cfg.tau);
    cfg.mode = a.mode.unwrap_or(cfg.mode);
    cfg.m = a.m.unwrap_or(cfg.m);
    cfg.n_trees = a.n_trees.unwrap_or(cfg.n_trees);
    let seed = cfg.require_seed()?;

    let x = read_embeddings(&a.embeddings)?.matrix;
    let labels = read_labels(&a.labels, x.rows())?;
    let (name, y) = pick_attribute(labels, cfg.attribute.as_deref(), &a.labels)?;

    let (artifact, summary) = match cfg.method {
        Method::Spd => {
            let art = fit_spd(&x, &y, &name, &cfg.spd(seed))?;
            let s = FitSummary {
                attribute: name,
                method: Method::Spd,
                d_b: Some(art.subspace.dim_subspace()),
                m: None,
                per_iteration_accuracy: art.subspace.per_iteration_accuracy.clone(),
                stop_reason: Some(format!("{:?}", art.subspace.stop_reason)),
                selection_mode: art.neutral.selection_mode.to_string(),
                tau: art.neutral.tau,
                n_selected: art.neutral.n_selected,
            };
            (DebiasArtifact::Spd(art), s)
        }
        Method::Sfid => {
            let art = sfid_fit(&x, &y, &name, &cfg.sfid(seed))?;
            let s = FitSummary {
                attribute: name,
                method: Method::Sfid,
                d_b: None,
                m: Some(art.m()),
                per_iteration_accuracy: Vec::new(),
                stop_reason: None,
                selection_mode: art.selection_mode.to_string(),
                tau: art.tau,
                n_selected: art.n_selected,
            };
            (DebiasArtifact::Sfid(art), s)
        }
    };
    io::write_artifact(&a.out, &artifact).at(&a.out)?;
    if let Some(path) = &a.summary {
        write_json(path, &summary)?;
    }
    match (summary.d_b, summary.m) {
        (Some(db), _) => println!("{}: SPD, d_b = {db}, stop = {}", summary.attribute, summary.stop_reason.as_deref().unwrap_or("")),
        (_, Some(m)) => println!("{}: SFID, m = {m}", summary.attribute),
        _ => {}
    }
    if !summary.per_iteration_accuracy.is_empty() {
        let trail: Vec<String> = summary.per_iteration_accuracy.iter().map(|v| format!("{v:.4}")).collect();
        println!("accuracy per iteration: {}", trail.join(" "));
    }
    println!(
        "neutral mean from {} low-confidence samples ({}, tau = {})",
        summary.n_selected, summary.selection_mode, summary.tau
    );
    Ok(())
}

fn apply_all(x: Matrix, artifacts: &[DebiasArtifact], opts: ApplyOptions) -> Result<Matrix, CliError> {
    let last = artifacts.len().saturating_sub(1);
    let mut x = x;
    for (i, art) in artifacts.iter().enumerate() {
        // renormalize once, after the last transform
        let step = ApplyOptions {
            renormalize: opts.renormalize && i == last,
            ..opts
        };
        x = art.apply(&x, step)?;
    }
    Ok(x)
}

fn cmd_apply(a: ApplyArgs) -> Result<(), CliError> {
    let cfg = RunConfig::load(a.config.as_deref())?;
    let input = read_embeddings(&a.embeddings)?;
    let artifacts = a
        .artifacts
        .iter()
        .map(|p| io::read_artifact(p).at(p))
        .collect::<Result<Vec<_>, _>>()?;
    let opts = ApplyOptions {
        renormalize: a.renormalize || cfg.renormalize,
        proj_only: a.proj_only,
    };
    let out = apply_all(input.matrix, &artifacts, opts)?;
    io::write_embeddings(
        &a.out,
        &EmbeddingFile {
            matrix: out,
            dtype: input.dtype,
        },
    )
    .at(&a.out)
}

fn emit_report(report: &spd_core::metrics::FairnessReport, out: Option<&Path>) -> Result<(), CliError> {
    if let Some(path) = out {
        let mut text = String::new();
        for e in &report.entries {
            text.push_str(&serde_json::to_string(e).expect("entry serializes"));
            text.push('\n');
        }
        io::write_atomic(path, text.as_bytes()).at(path)?;
    }
    print!("{}", table::fairness(report));
    Ok(())
}

fn cmd_evaluate(cmd: EvaluateCmd) -> Result<(), CliError> {
    let eval = match &cmd {
        EvaluateCmd::Classification { eval, .. } | EvaluateCmd::Retrieval { eval, .. } | EvaluateCmd::Generation { eval, .. } => eval,
    };
    let cfg = eval.common.load()?;
    let settings = evaluate::Settings {
        bootstrap: eval.bootstrap.unwrap_or(cfg.bootstrap),
        seed: cfg.seed.unwrap_or(0),
    };
    let report = match &cmd {
        EvaluateCmd::Classification { classes, .. } => {
            let runs = eval
                .runs
                .iter()
                .map(|(n, p)| Ok((n.clone(), evaluate::read_classification(p)?)))
                .collect::<Result<Vec<_>, CliError>>()?;
            evaluate::classification(&runs, *classes, &settings)?
        }
        EvaluateCmd::Retrieval {
            items,
            recall_k,
            skew_k,
            alpha,
            ..
        } => {
            let runs = eval
                .runs
                .iter()
                .map(|(n, p)| Ok((n.clone(), evaluate::read_retrieval(p, items)?)))
                .collect::<Result<Vec<_>, CliError>>()?;
            evaluate::retrieval(&runs, recall_k, *skew_k, alpha.unwrap_or(cfg.smoothing_alpha), &settings)?
        }
        EvaluateCmd::Generation { n, .. } => {
            let runs = eval
                .runs
                .iter()
                .map(|(name, p)| Ok((name.clone(), evaluate::read_generation(p, *n)?)))
                .collect::<Result<Vec<_>, CliError>>()?;
            evaluate::generation(&runs, &settings)?
        }
    };
    emit_report(&report, eval.out.as_deref())
}

fn cmd_diagnose(cmd: DiagnoseCmd) -> Result<(), CliError> {
    match cmd {
        DiagnoseCmd::Entanglement {
            embeddings,
            labels,
            attributes,
            m,
            out,
            common,
        } => {
            let cfg = common.load()?;
            let seed = cfg.require_seed()?;
            let x = read_embeddings(&embeddings)?.matrix;
            let mut all = read_labels(&labels, x.rows())?;
            if !attributes.is_empty() {
                for name in &attributes {
                    if !all.iter().any(|(n, _)| n == name) {
                        return Err(CliError::schema(&labels, 1, format!("no label column {name:?}")));
                    }
                }
                all.retain(|(n, _)| attributes.contains(n));
            }
            let report = entanglement_report(&x, &all, m.unwrap_or(cfg.m), &cfg.forest(seed))?;
            if let Some(p) = &out {
                write_json(p, &report)?;
            }
            print!("{}", table::overlap(&report));
        }
        DiagnoseCmd::Drift {
            datasets,
            attribute,
            m,
            out,
            common,
        } => {
            let cfg = common.load()?;
            let seed = cfg.require_seed()?;
            let name = attribute.or(cfg.attribute.clone());
            let mut loaded = Vec::new();
            for (tag, emb, lab) in &datasets {
                let x = read_embeddings(emb)?.matrix;
                let (_, y) = pick_attribute(read_labels(lab, x.rows())?, name.as_deref(), lab)?;
                loaded.push((tag.clone(), x, y));
            }
            let refs: Vec<(String, &Matrix, &LabelVector)> = loaded.iter().map(|(t, x, y)| (t.clone(), x, y)).collect();
            let report = drift_report(&refs, m.unwrap_or(cfg.m), &cfg.forest(seed))?;
            if let Some(p) = &out {
                write_json(p, &report)?;
            }
            print!("{}", table::overlap(&report));
        }
        DiagnoseCmd::Residual {
            embeddings,
            labels,
            methods,
            renormalize,
            proj_only,
            out,
            common,
        } => {
            let cfg = common.load()?;
            let seed = cfg.require_seed()?;
            let x = read_embeddings(&embeddings)?.matrix;
            let all = read_labels(&labels, x.rows())?;
            let opts = ApplyOptions {
                renormalize: renormalize || cfg.renormalize,
                proj_only,
            };
            let methods = methods
                .iter()
                .map(|(n, p)| Ok((n.clone(), DebiasMethod::Transform(io::read_artifact(p).at(p)?, opts))))
                .collect::<Result<Vec<_>, CliError>>()?;
            let report = residual_bias_report(&x, &all, &methods, derive_seed(seed, 0), cfg.probe_test_frac)?;
            if let Some(p) = &out {
                write_json(p, &report)?;
            }
            print!("{}", table::residual(&report));
        }
    }
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&a.spec).map_err(|e| CliError::io(&a.spec, e))?;
    let spec = synth_spec::SynthSpec::parse(&text)?;
    let seed = a
        .seed
        .or(spec.seed)
        .ok_or_else(|| CliError::Usage("a seed is required: pass --seed or set `seed` in the spec".into()))?;
    let ds = spec.build(seed)?;
    let dtype = match a.dtype {
        DtypeArg::F32 => Dtype::F32,
        DtypeArg::F64 => Dtype::F64,
    };
    io::write_embeddings(&a.embeddings, &EmbeddingFile { matrix: ds.x, dtype }).at(&a.embeddings)?;
    io::write_labels(&a.labels, &ds.labels).at(&a.labels)?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Apply(a) => cmd_apply(a),
        Command::Evaluate(c) => cmd_evaluate(c),
        Command::Diagnose(c) => cmd_diagnose(c),
        Command::Synth(a) => cmd_synth(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SPD_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", e.code(), e);
            ExitCode::from(e.exit_code())
        }
    }
}
