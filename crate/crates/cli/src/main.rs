//! `pbp`: generate synthetic scenes, train, predict, evaluate and run the
//! decoder ablation.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use pbp_core::ablation::{ablation_csv, loss_csv, offroad_csv};
use pbp_core::plot::{line_plot_svg, Series};
use pbp_core::{
    evaluate_model, generate, load_scene, predict, run_ablation, split, DecoderKind, Layout,
    LossReport, ModelParams, PipelineConfig, PredictionSet, Scene,
};

#[derive(Parser, Debug)]
#[command(name = "pbp", version, about = "Path-based trajectory prediction")]
struct Cli {
    /// Seed for generation, training and splitting (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON pipeline configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file or directory, depending on the subcommand.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write synthetic scenario files into a directory.
    Generate(GenerateArgs),
    /// Train a model on a scenario directory.
    Train(TrainArgs),
    /// Predict one agent of one scenario.
    Predict(PredictArgs),
    /// Evaluate a checkpoint on a scenario directory.
    Eval(EvalArgs),
    /// Train and evaluate every decoder variant on identical data.
    Ablate(AblateArgs),
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(long)]
    n_scenes: Option<usize>,
    /// straight, curve, fork, merge, grid, lane_change or mixed.
    #[arg(long)]
    layout: Option<Layout>,
    #[arg(long)]
    path_free_fraction: Option<f64>,
    #[arg(long)]
    lateral_noise_sigma: Option<f64>,
}

#[derive(Args, Debug, Clone)]
struct TrainOverrides {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    lambda_cls: Option<f64>,
    #[arg(long)]
    lambda_lateral: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Directory of scenario JSON files.
    #[arg(long)]
    scenes: PathBuf,
    /// pbp, pbp_cartesian, goal_based or multimodal_regression.
    #[arg(long)]
    decoder: Option<DecoderKind>,
    #[command(flatten)]
    overrides: TrainOverrides,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    scene: PathBuf,
    /// Agent to predict; defaults to the focal agent.
    #[arg(long)]
    agent: Option<i64>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    scenes: PathBuf,
}

#[derive(Args, Debug)]
struct AblateArgs {
    /// Training scenes; split by `eval.train_fraction` unless `--val` is given.
    #[arg(long)]
    scenes: PathBuf,
    #[arg(long)]
    val: Option<PathBuf>,
    /// Comma-separated decoder names.
    #[arg(long, value_delimiter = ',')]
    decoders: Option<Vec<DecoderKind>>,
    #[command(flatten)]
    overrides: TrainOverrides,
}

/// Stable error-code tag attached as context.
#[derive(Debug)]
struct Code(&'static str);

impl fmt::Display for Code {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.0)
    }
}

const E_IO: &str = "E_IO";
const E_CONFIG: &str = "E_CONFIG";
const E_SCENE: &str = "E_SCENE";
const E_CHECKPOINT: &str = "E_CHECKPOINT";
const E_GENERATE: &str = "E_GENERATE";
const E_TRAIN: &str = "E_TRAIN";
const E_PREDICT: &str = "E_PREDICT";
const E_EVAL: &str = "E_EVAL";

trait Coded<T> {
    fn code(self, code: &'static str) -> Result<T>;
}

impl<T, E: Into<anyhow::Error>> Coded<T> for std::result::Result<T, E> {
    fn code(self, code: &'static str) -> Result<T> {
        self.map_err(|e| e.into().context(Code(code)))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let code = err.downcast_ref::<Code>().map_or("E_INTERNAL", |c| c.0);
            let parts: Vec<String> = err
                .chain()
                .map(|e| e.to_string())
                .filter(|m| m != code)
                .collect();
            eprintln!("error[{code}]: {}", parts.join(": "));
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = read(path)?;
            PipelineConfig::from_json(&text)
                .with_context(|| format!("invalid config {}", path.display()))
                .code(E_CONFIG)?
        }
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.generate.seed = seed;
        cfg.train.seed = seed;
    }
    let out = cli.out;
    match cli.command {
        Command::Generate(a) => cmd_generate(cfg, a, out.unwrap_or_else(|| "scenes".into())),
        Command::Train(a) => cmd_train(cfg, a, out.unwrap_or_else(|| "model".into())),
        Command::Predict(a) => cmd_predict(cfg, a, out),
        Command::Eval(a) => cmd_eval(cfg, a, out.unwrap_or_else(|| "eval".into())),
        Command::Ablate(a) => cmd_ablate(cfg, a, out.unwrap_or_else(|| "ablation".into())),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .code(E_IO)
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents)
        .with_context(|| format!("cannot write {}", path.display()))
        .code(E_IO)
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path)
        .with_context(|| format!("cannot create {}", path.display()))
        .code(E_IO)
}

fn load_scene_file(path: &Path) -> Result<Scene> {
    let file = fs::File::open(path)
        .with_context(|| format!("cannot open {}", path.display()))
        .code(E_IO)?;
    load_scene(std::io::BufReader::new(file))
        .with_context(|| format!("invalid scenario {}", path.display()))
        .code(E_SCENE)
}

/// Every `*.json` file of a directory, in file-name order.
fn load_scene_dir(dir: &Path) -> Result<Vec<Scene>> {
    let entries = fs::read_dir(dir)
        .with_context(|| format!("cannot list {}", dir.display()))
        .code(E_IO)?;
    let mut paths = Vec::new();
    for e in entries {
        let p = e.code(E_IO)?.path();
        if p.extension().is_some_and(|x| x == "json") {
            paths.push(p);
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(anyhow::anyhow!("no scenario files in {}", dir.display())).code(E_SCENE);
    }
    paths.iter().map(|p| load_scene_file(p)).collect()
}

fn load_model(path: &Path) -> Result<ModelParams> {
    let text = read(path)?;
    ModelParams::from_json(&text)
        .with_context(|| format!("cannot load model {}", path.display()))
        .code(E_CHECKPOINT)
}

fn apply_overrides(cfg: &mut PipelineConfig, o: &TrainOverrides) {
    let t = &mut cfg.train;
    if let Some(v) = o.epochs {
        t.epochs = v;
    }
    if let Some(v) = o.lr {
        t.learning_rate = v;
    }
    if let Some(v) = o.lambda_cls {
        t.lambda_cls = v;
    }
    if let Some(v) = o.lambda_lateral {
        t.lambda_lateral = v;
    }
    if let Some(v) = o.batch_size {
        t.batch_size = v;
    }
}

fn cmd_generate(mut cfg: PipelineConfig, a: GenerateArgs, out: PathBuf) -> Result<()> {
    let g = &mut cfg.generate;
    if let Some(v) = a.n_scenes {
        g.n_scenes = v;
    }
    if let Some(v) = a.layout {
        g.layout = v;
    }
    if let Some(v) = a.path_free_fraction {
        g.path_free_fraction = v;
    }
    if let Some(v) = a.lateral_noise_sigma {
        g.lateral_noise_sigma = v;
    }
    let scenes = generate(&cfg.generate).code(E_GENERATE)?;
    create_dir(&out)?;
    for (i, s) in scenes.iter().enumerate() {
        write(&out.join(format!("scene_{i:05}.json")), s.to_json())?;
    }
    println!("wrote {} scenes to {}", scenes.len(), out.display());
    Ok(())
}

fn loss_svg(title: &str, history: &[LossReport]) -> String {
    let col = |f: fn(&LossReport) -> f64| history.iter().map(f).collect::<Vec<f64>>();
    let cols = [
        ("total", col(|r| r.total)),
        ("cls", col(|r| r.cls_loss)),
        ("reg_s", col(|r| r.reg_loss_s)),
        ("reg_d", col(|r| r.reg_loss_d)),
        ("selector", col(|r| r.selector_loss)),
        ("path_free", col(|r| r.path_free_loss)),
    ];
    let series: Vec<Series> = cols.iter().map(|(n, v)| Series { name: n, values: v }).collect();
    line_plot_svg(title, "epoch", "loss", &series)
}

fn cmd_train(mut cfg: PipelineConfig, a: TrainArgs, out: PathBuf) -> Result<()> {
    apply_overrides(&mut cfg, &a.overrides);
    if let Some(d) = a.decoder {
        cfg.train.decoder = d;
    }
    let scenes = load_scene_dir(&a.scenes)?;
    let outcome = pbp_core::train(&scenes, &cfg.predict.sampler, &cfg.train).code(E_TRAIN)?;
    create_dir(&out)?;
    write(&out.join("checkpoint.json"), outcome.params.to_json())?;
    write(&out.join("loss.csv"), loss_csv(&outcome.history))?;
    write(
        &out.join("loss.svg"),
        loss_svg(&format!("{} training loss", cfg.train.decoder.name()), &outcome.history),
    )?;
    let first = outcome.history.first().map_or(f64::NAN, |r| r.total);
    let last = outcome.history.last().map_or(f64::NAN, |r| r.total);
    println!(
        "trained {} for {} epochs: total loss {first:.4} -> {last:.4}; wrote {}",
        cfg.train.decoder.name(),
        outcome.history.len(),
        out.display()
    );
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct ModeRecord {
    probability: f64,
    waypoints: Vec<[f64; 2]>,
    path_segment_ids: Option<Vec<i64>>,
}

#[derive(Serialize, Deserialize)]
struct PredictionRecord {
    agent_id: i64,
    modes: Vec<ModeRecord>,
}

impl From<&PredictionSet> for PredictionRecord {
    fn from(p: &PredictionSet) -> Self {
        let modes = (0..p.num_modes())
            .map(|m| ModeRecord {
                probability: p.probabilities[m],
                waypoints: p.trajectories[m].iter().map(|w| [w.x, w.y]).collect(),
                path_segment_ids: p.mode_paths[m].as_ref().map(|r| r.segment_ids.clone()),
            })
            .collect();
        Self {
            agent_id: p.agent_id,
            modes,
        }
    }
}

fn cmd_predict(cfg: PipelineConfig, a: PredictArgs, out: Option<PathBuf>) -> Result<()> {
    let params = load_model(&a.model)?;
    let scene = load_scene_file(&a.scene)?;
    let agent = a.agent.unwrap_or(scene.focal_agent_id);
    let pred = predict(&params, &scene, agent, &cfg.predict).code(E_PREDICT)?;
    let json = serde_json::to_string(&PredictionRecord::from(&pred)).code(E_PREDICT)?;
    match out {
        Some(path) => write(&path, json + "\n"),
        None => {
            println!("{json}");
            Ok(())
        }
    }
}

fn cmd_eval(cfg: PipelineConfig, a: EvalArgs, out: PathBuf) -> Result<()> {
    let params = load_model(&a.model)?;
    let scenes = load_scene_dir(&a.scenes)?;
    let (report, _) = evaluate_model(&params, &scenes, &cfg.predict, &cfg.eval.ks).code(E_EVAL)?;
    create_dir(&out)?;
    let json = serde_json::to_string_pretty(&report).code(E_EVAL)?;
    write(&out.join("metrics.json"), json + "\n")?;
    write(&out.join("offroad.csv"), offroad_csv(&report))?;
    let series = [Series {
        name: params.kind.name(),
        values: &report.offroad_by_horizon,
    }];
    write(
        &out.join("offroad.svg"),
        line_plot_svg("Offroad rate by horizon", "step", "offroad rate", &series),
    )?;
    println!(
        "evaluated {} scenes: offroad {:.4}, lane dev {:.4}; wrote {}",
        report.num_samples,
        report.offroad_rate,
        report.lane_deviation,
        out.display()
    );
    Ok(())
}

fn cmd_ablate(mut cfg: PipelineConfig, a: AblateArgs, out: PathBuf) -> Result<()> {
    apply_overrides(&mut cfg, &a.overrides);
    if let Some(d) = a.decoders {
        cfg.ablate.decoders = d;
    }
    if cfg.ablate.decoders.is_empty() {
        bail!(anyhow::anyhow!("no decoders selected").context(Code(E_CONFIG)));
    }
    let scenes = load_scene_dir(&a.scenes)?;
    let (train, val) = match &a.val {
        Some(dir) => (scenes, load_scene_dir(dir)?),
        None => {
            let f = cfg.eval.train_fraction;
            if !(f > 0.0 && f < 1.0) {
                bail!(anyhow::anyhow!("train_fraction {f} outside (0, 1)").context(Code(E_CONFIG)));
            }
            split(&scenes, f, cfg.train.seed)
        }
    };
    if train.is_empty() || val.is_empty() {
        bail!(anyhow::anyhow!("empty train or validation split").context(Code(E_CONFIG)));
    }
    let rows = run_ablation(&train, &val, &cfg.ablate, &cfg.train, &cfg.predict).code(E_EVAL)?;
    create_dir(&out)?;
    let table: Vec<(DecoderKind, &pbp_core::MetricsReport)> =
        rows.iter().map(|r| (r.decoder, &r.report)).collect();
    let csv = ablation_csv(&table);
    write(&out.join("ablation.csv"), &csv)?;
    for r in &rows {
        let name = r.decoder.name();
        write(&out.join(format!("offroad_{name}.csv")), offroad_csv(&r.report))?;
        write(&out.join(format!("loss_{name}.csv")), loss_csv(&r.history))?;
        write(&out.join(format!("checkpoint_{name}.json")), r.params.to_json())?;
    }
    let series: Vec<Series> = rows
        .iter()
        .map(|r| Series {
            name: r.decoder.name(),
            values: &r.report.offroad_by_horizon,
        })
        .collect();
    write(
        &out.join("offroad.svg"),
        line_plot_svg("Offroad rate by horizon", "step", "offroad rate", &series),
    )?;
    print!("{csv}");
    Ok(())
}
