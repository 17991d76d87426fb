//! The `gsabt` command line: configuration loading, one function per
//! subcommand, run manifests and exit codes.
//!
//! Exit codes: 0 success, 1 runtime failure (I/O while writing), 2 usage or
//! configuration error (including missing or invalid input files), 3
//! numeric failure, 4 gradient check failure.

mod config;
mod manifest;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, CommandFactory, Parser, Subcommand};

pub use config::{
    apply_override, read_config_table, DataConfig, EvalConfig, GenerateConfig, GradcheckConfig, RunConfig,
    SplitName, SweepConfig, CONFIG_KEYS,
};
pub use manifest::{FileDigest, RunManifest, Timings, RUN_MANIFEST};

use crate::data::io::{save_graph, save_series, Manifest, ManifestEntry};
use crate::data::{synth_generate, Dataset, ModalitySpec, Series, Split};
use crate::error::Error;
use crate::model::{block_summary, check_gradients, load_checkpoint, micro_instance, save_checkpoint, ModalityShape, Model, ModelConfig};
use crate::tensor::GradCheckOptions;
use crate::train::{
    attention_census, evaluate, historical_average, run_ablation_suite, run_joint_vs_single, run_sweep, train,
    write_history_csv, write_sweep_table, write_variant_table,
};

pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_GRADCHECK: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "gsabt", version, about = "Multimodal spatio-temporal flow forecasting", after_help = CONFIG_KEYS)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Debug, Args)]
pub struct Common {
    /// Configuration file (TOML); a run manifest is accepted too.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Master seed, overriding the file.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
    /// Set one configuration key, e.g. `model.d_h=16`. Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Clone, Debug, Args)]
pub struct CheckpointArgs {
    /// Checkpoint to read (sets `eval.checkpoint`).
    #[arg(long, value_name = "PATH")]
    pub checkpoint: Option<PathBuf>,
    /// Split to use (sets `eval.split`).
    #[arg(long, value_parser = ["train", "val", "test"])]
    pub split: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write synthetic series, graphs and a modality manifest.
    #[command(after_help = CONFIG_KEYS)]
    Generate(Common),
    /// Train a model; writes the best checkpoint, history and test report.
    #[command(after_help = CONFIG_KEYS)]
    Train(Common),
    /// Evaluate a checkpoint; writes a per-modality report.
    #[command(after_help = CONFIG_KEYS)]
    Eval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        ckpt: CheckpointArgs,
    },
    /// Train the full model and its five single-module ablations.
    #[command(after_help = CONFIG_KEYS)]
    Ablate(Common),
    /// Train one model per value of `st_layers` or `top_u`.
    #[command(after_help = CONFIG_KEYS)]
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Parameter to sweep (sets `sweep.param`).
        #[arg(long, value_parser = ["st_layers", "top_u"])]
        param: Option<String>,
    },
    /// Finite-difference gradient check of the whole model on a micro-instance.
    #[command(after_help = CONFIG_KEYS)]
    Gradcheck(Common),
    /// Count retained attention entries by source and target modality.
    #[command(after_help = CONFIG_KEYS)]
    Census {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        ckpt: CheckpointArgs,
    },
    /// Joint training against one model per modality, same budget and seed.
    #[command(after_help = CONFIG_KEYS)]
    Compare(Common),
}

/// Why a command stopped.
#[derive(Debug)]
pub enum Failure {
    /// Bad invocation or unreadable input; usage text is printed.
    Usage(String),
    Run(Error),
    Gradcheck(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Gradcheck(_) => EXIT_GRADCHECK,
            Failure::Run(e) => match e {
                Error::Config(_)
                | Error::Format { .. }
                | Error::Shape { .. }
                | Error::InsufficientData(_) => EXIT_USAGE,
                Error::Numeric { .. } | Error::DegenerateRow { .. } | Error::NonScalarLoss(_) => EXIT_NUMERIC,
                Error::Io { .. } => EXIT_RUNTIME,
            },
        }
    }
}

type CmdResult<T = ()> = std::result::Result<T, Failure>;

/// Input files must exist: failing to read one is a usage error.
fn input<T>(r: crate::Result<T>) -> CmdResult<T> {
    r.map_err(|e| match e {
        Error::Io { .. } => Failure::Usage(e.to_string()),
        other => Failure::Run(other),
    })
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(f) => {
            match &f {
                Failure::Usage(msg) => {
                    eprintln!("error: {msg}\n");
                    eprintln!("{}", Cli::command().render_usage());
                }
                Failure::Run(e) => eprintln!("error: {e}"),
                Failure::Gradcheck(msg) => eprintln!("gradient check failed: {msg}"),
            }
            f.exit_code()
        }
    }
}

fn dispatch(cmd: Command) -> CmdResult {
    let started = Instant::now();
    let (name, common, extra) = match &cmd {
        Command::Generate(c) => ("generate", c, vec![]),
        Command::Train(c) => ("train", c, vec![]),
        Command::Eval { common, ckpt } => ("eval", common, ckpt_overrides(ckpt)),
        Command::Ablate(c) => ("ablate", c, vec![]),
        Command::Sweep { common, param } => (
            "sweep",
            common,
            param.iter().map(|p| ("sweep.param".to_string(), toml::Value::String(p.clone()))).collect(),
        ),
        Command::Gradcheck(c) => ("gradcheck", c, vec![]),
        Command::Census { common, ckpt } => ("census", common, ckpt_overrides(ckpt)),
        Command::Compare(c) => ("compare", c, vec![]),
    };
    let cfg = load_config(common, extra)?;
    let out = common.out.clone();
    fs::create_dir_all(&out).map_err(|e| Failure::Run(Error::io(&out, e)))?;
    let mut io = RunFiles::default();
    let result = match name {
        "generate" => cmd_generate(&cfg, &out, &mut io),
        "train" => cmd_train(&cfg, &out, &mut io),
        "eval" => cmd_eval(&cfg, &out, &mut io),
        "ablate" => cmd_ablate(&cfg, &out, &mut io),
        "sweep" => cmd_sweep(&cfg, &out, &mut io),
        "gradcheck" => cmd_gradcheck(&cfg, &out, &mut io),
        "census" => cmd_census(&cfg, &out, &mut io),
        "compare" => cmd_compare(&cfg, &out, &mut io),
        _ => unreachable!("every subcommand is dispatched"),
    };
    // A failed gradient check still leaves its report and manifest behind.
    if matches!(result, Ok(()) | Err(Failure::Gradcheck(_))) {
        let manifest = RunManifest {
            command: name.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: cfg.seed,
            inputs: io.inputs,
            outputs: io.outputs,
            timings: Timings {
                total_ms: started.elapsed().as_millis() as u64,
            },
            config: toml::Table::try_from(&cfg).expect("config serialises to a table"),
        };
        let path = manifest.write(&out)?;
        println!("wrote {}", path.display());
    }
    result
}

fn ckpt_overrides(c: &CheckpointArgs) -> Vec<(String, toml::Value)> {
    let mut v = Vec::new();
    if let Some(p) = &c.checkpoint {
        v.push(("eval.checkpoint".into(), toml::Value::String(p.display().to_string())));
    }
    if let Some(s) = &c.split {
        v.push(("eval.split".into(), toml::Value::String(s.clone())));
    }
    v
}

/// Reads `--config`, then applies `--seed`, every `--override`, and the
/// subcommand's own flags, in that order.
pub fn load_config(common: &Common, extra: Vec<(String, toml::Value)>) -> CmdResult<RunConfig> {
    let mut table = match &common.config {
        Some(p) => input(read_config_table(p))?,
        None => toml::Table::new(),
    };
    if let Some(seed) = common.seed {
        table.insert("seed".into(), toml::Value::Integer(seed as i64));
    }
    for o in &common.overrides {
        apply_override(&mut table, o)?;
    }
    for (k, v) in extra {
        let (section, key) = k.split_once('.').expect("dotted key");
        let t = table
            .entry(section.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        t.as_table_mut()
            .ok_or_else(|| Failure::Run(Error::Config(format!("`{section}` is not a table"))))?
            .insert(key.to_string(), v);
    }
    Ok(RunConfig::from_table(table)?)
}

#[derive(Default)]
struct RunFiles {
    inputs: Vec<FileDigest>,
    outputs: Vec<FileDigest>,
}

impl RunFiles {
    fn input(&mut self, p: &Path) -> CmdResult {
        self.inputs.push(input(FileDigest::of(p))?);
        Ok(())
    }

    fn output(&mut self, p: &Path) -> CmdResult {
        self.outputs.push(FileDigest::of(p)?);
        Ok(())
    }
}

fn create(path: &Path) -> CmdResult<fs::File> {
    fs::File::create(path).map_err(|e| Failure::Run(Error::io(path, e)))
}

fn write_text(path: &Path, text: &str) -> CmdResult {
    fs::write(path, text).map_err(|e| Failure::Run(Error::io(path, e)))
}

/// Loads the modalities named by the data manifest, honouring
/// `data.modalities`.
fn load_modalities(cfg: &RunConfig, io: &mut RunFiles) -> CmdResult<Vec<(ModalitySpec, Series)>> {
    let path = &cfg.data.manifest;
    let manifest = input(Manifest::read(path))?;
    let base = path.parent().unwrap_or(Path::new("."));
    io.input(path)?;
    let wanted: Vec<&ManifestEntry> = if cfg.data.modalities.is_empty() {
        manifest.modalities.iter().collect()
    } else {
        cfg.data
            .modalities
            .iter()
            .map(|name| {
                manifest
                    .modalities
                    .iter()
                    .find(|m| &m.name == name)
                    .ok_or_else(|| Failure::Run(Error::Config(format!("modality `{name}` is not in {}", path.display()))))
            })
            .collect::<CmdResult<_>>()?
    };
    for m in &wanted {
        io.input(&base.join(&m.series))?;
        io.input(&base.join(&m.graph))?;
    }
    let subset = Manifest {
        modalities: wanted.into_iter().cloned().collect(),
    };
    input(subset.load(base))
}

fn load_dataset(cfg: &RunConfig, p: usize, q: usize, io: &mut RunFiles) -> CmdResult<Dataset> {
    let parts = load_modalities(cfg, io)?;
    Ok(Dataset::prepare(&parts, p, q, cfg.data.bounds(), cfg.data.norm)?)
}

fn model_config(cfg: &RunConfig, data: &Dataset) -> CmdResult<ModelConfig> {
    Ok(cfg.model_for(ModalityShape::from_graph(&data.graph), data.features())?)
}

fn load_model(cfg: &RunConfig, io: &mut RunFiles) -> CmdResult<Model> {
    let path = cfg
        .eval
        .checkpoint
        .as_ref()
        .ok_or_else(|| Failure::Usage("no checkpoint given (use --checkpoint or eval.checkpoint)".into()))?;
    let model = input(load_checkpoint(path))?;
    io.input(path)?;
    Ok(model)
}

fn cmd_generate(cfg: &RunConfig, out: &Path, io: &mut RunFiles) -> CmdResult {
    let g = &cfg.generate;
    let parts = synth_generate(&g.modality, g.days, cfg.seed)?;
    let mut entries = Vec::new();
    for ((spec, series), m) in parts.iter().zip(&g.modality) {
        let series_file = format!("{}.gstd", spec.name);
        let graph_file = format!("{}.gadj", spec.name);
        save_series(series, &out.join(&series_file))?;
        save_graph(&spec.adjacency, &out.join(&graph_file))?;
        io.output(&out.join(&series_file))?;
        io.output(&out.join(&graph_file))?;
        entries.push(ManifestEntry {
            name: spec.name.clone(),
            node_count: spec.node_count(),
            features: (0..m.features).map(|f| format!("flow{f}")).collect(),
            series: series_file.into(),
            graph: graph_file.into(),
        });
        println!(
            "{}: {} steps x {} nodes x {} features",
            spec.name,
            series.steps(),
            series.nodes(),
            series.features()
        );
    }
    let path = out.join("manifest.toml");
    Manifest { modalities: entries }.write(&path)?;
    io.output(&path)
}

fn write_report(path: &Path, report: &crate::train::MetricsReport, io: &mut RunFiles) -> CmdResult {
    report.write_csv(create(path)?)?;
    io.output(path)
}

fn cmd_train(cfg: &RunConfig, out: &Path, io: &mut RunFiles) -> CmdResult {
    let data = load_dataset(cfg, cfg.model.input_len, cfg.model.horizon, io)?;
    let model = Model::new(model_config(cfg, &data)?)?;
    println!("{} parameters", model.param_count());
    let outcome = train(model, &data, &cfg.train)?;
    let ckpt = out.join("model.gsab");
    save_checkpoint(&outcome.best, &ckpt)?;
    io.output(&ckpt)?;
    let hist = out.join("history.csv");
    write_history_csv(&outcome.history, create(&hist)?)?;
    io.output(&hist)?;
    let report = evaluate(&outcome.best, &data, Split::Test)?;
    write_report(&out.join("report.csv"), &report, io)?;
    let baseline = historical_average(&data, Split::Test)?;
    write_report(&out.join("baseline.csv"), &baseline, io)?;
    println!("best epoch {}\n{report}\nhistorical average\n{baseline}", outcome.best_epoch);
    Ok(())
}

fn cmd_eval(cfg: &RunConfig, out: &Path, io: &mut RunFiles) -> CmdResult {
    let model = load_model(cfg, io)?;
    let data = load_dataset(cfg, model.config.input_len, model.config.horizon, io)?;
    let report = evaluate(&model, &data, cfg.eval.split.into())?;
    write_report(&out.join("report.csv"), &report, io)?;
    println!("{report}");
    Ok(())
}

fn cmd_ablate(cfg: &RunConfig, out: &Path, io: &mut RunFiles) -> CmdResult {
    let data = load_dataset(cfg, cfg.model.input_len, cfg.model.horizon, io)?;
    let runs = run_ablation_suite(&model_config(cfg, &data)?, &cfg.train, &data)?;
    let path = out.join("ablation.csv");
    write_variant_table(&runs, create(&path)?)?;
    io.output(&path)?;
    for r in &runs {
        println!("{:<10} overall mae {:.4}", r.label, r.report.overall().mae);
    }
    Ok(())
}

fn cmd_sweep(cfg: &RunConfig, out: &Path, io: &mut RunFiles) -> CmdResult {
    let data = load_dataset(cfg, cfg.model.input_len, cfg.model.horizon, io)?;
    let runs = run_sweep(cfg.sweep.param, &model_config(cfg, &data)?, &cfg.train, &data)?;
    let path = out.join(format!("sweep_{}.csv", cfg.sweep.param.name()));
    write_sweep_table(&runs, cfg.sweep.param, create(&path)?)?;
    io.output(&path)?;
    let optimum = cfg.sweep.param.label(cfg.sweep.param.reference_optimum());
    for r in &runs {
        let mark = if r.label == optimum { "  (reference optimum)" } else { "" };
        println!("{:<14} overall mae {:.4}{mark}", r.label, r.report.overall().mae);
    }
    Ok(())
}

fn cmd_gradcheck(cfg: &RunConfig, out: &Path, io: &mut RunFiles) -> CmdResult {
    let g = &cfg.gradcheck;
    let base = ModelConfig {
        input_len: g.input_len,
        horizon: g.horizon,
        d_h: g.d_h,
        d_f: None,
        head_hidden: None,
        st_layers: g.st_layers,
        top_u: g.top_u,
        ..cfg.model.clone()
    };
    let opts = GradCheckOptions {
        step: g.step,
        tol: g.tol,
        ..GradCheckOptions::default()
    };
    let mut text = String::new();
    let mut verdict = None;
    for attempt in 0..=g.resamples as u64 {
        let seed = cfg.seed + attempt;
        let mi = micro_instance(&base, &g.nodes, seed)?;
        let report = check_gradients(&mi.model, &mi.x, &mi.target, &mi.graph, opts)?;
        text = format!("micro-instance seed {seed}, nodes {:?}\n\nblock max_rel\n", g.nodes);
        for (block, err) in block_summary(&report) {
            text.push_str(&format!("{block:<18} {err:.3e}\n"));
        }
        text.push_str(&format!("\n{report}\n"));
        if report.is_conclusive() {
            verdict = Some(report.passed());
            break;
        }
        log::warn!("seed {seed}: {} unresolved kink crossings, resampling", report.kink_crossings);
    }
    let path = out.join("gradcheck.txt");
    write_text(&path, &text)?;
    io.output(&path)?;
    print!("{text}");
    match verdict {
        Some(true) => Ok(()),
        Some(false) => Err(Failure::Gradcheck(format!("relative error above {}", g.tol))),
        None => Err(Failure::Gradcheck("every sampled instance straddled a kink".into())),
    }
}

fn cmd_census(cfg: &RunConfig, out: &Path, io: &mut RunFiles) -> CmdResult {
    let model = load_model(cfg, io)?;
    let data = load_dataset(cfg, model.config.input_len, model.config.horizon, io)?;
    let census = attention_census(&model, &data, cfg.eval.split.into())?;
    let path = out.join("census.csv");
    census.write_csv(create(&path)?)?;
    io.output(&path)?;
    for (t, name) in census.names.iter().enumerate() {
        let parts: Vec<String> = census
            .names
            .iter()
            .zip(census.proportions(t))
            .zip(&census.counts[t])
            .map(|((s, p), c)| format!("{s} {c} ({p:.2}%)"))
            .collect();
        println!("{name} <- {}", parts.join(", "));
    }
    Ok(())
}

fn cmd_compare(cfg: &RunConfig, out: &Path, io: &mut RunFiles) -> CmdResult {
    let parts = load_modalities(cfg, io)?;
    if !cfg.model.modalities.is_empty() {
        return Err(Failure::Run(Error::Config("compare takes modalities from the data; unset model.modalities".into())));
    }
    let cmp = run_joint_vs_single(&parts, &cfg.model, &cfg.train, cfg.data.bounds(), cfg.data.norm)?;
    let path = out.join("comparison.csv");
    cmp.write_csv(create(&path)?)?;
    io.output(&path)?;
    println!("joint training wins on: {:?}", cmp.joint_wins());
    Ok(())
}
