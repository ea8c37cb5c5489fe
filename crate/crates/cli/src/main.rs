use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use crosswise_core::eval::{self, Dataset, TrainConfig};
use crosswise_core::ingest::synth::{generate_scenario, ScenarioSpec};
use crosswise_core::ingest::write_stream;
use crosswise_core::nn::io as weights;
use crosswise_core::pipeline::{self, AlertSink, RunSinks, UdpAlertSink};
use crosswise_core::{FeatureGroup, IntersectionGeometry, ModelParams, Scalar};

#[derive(Parser)]
#[command(name = "crosswise", version, about = "Crossing-intention prediction for VRUs at intersections")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Dtype {
    F32,
    F64,
}

#[derive(clap::Args)]
struct DataArgs {
    /// Frame stream (JSON lines).
    #[arg(long)]
    data: PathBuf,
    /// Ground truth written by `simulate`.
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    geometry: PathBuf,
    /// Training config (JSON); missing keys take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Training precision.
    #[arg(long, value_enum, default_value = "f32")]
    dtype: Dtype,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic frame stream and its ground-truth labels.
    Simulate {
        #[arg(long)]
        geometry: PathBuf,
        /// Scenario spec (JSON).
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        labels: PathBuf,
    },
    /// Train a model and write its weights.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
        /// Optional training report (JSON).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Incremental feature-group ablation.
    Ablate {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        report: PathBuf,
        /// Groups to add in order, e.g. "LMGP".
        #[arg(long, default_value = "LMGP")]
        groups: String,
    },
    /// Attention head-count comparison.
    SweepHeads {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        report: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
        heads: Vec<usize>,
    },
    /// Stream frames through the engine, writing predictions and sending alerts.
    Run {
        #[arg(long)]
        geometry: PathBuf,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Send alerts as UDP datagrams to host:port.
        #[arg(long)]
        alert_udp: Option<String>,
        /// Write every feature window as JSON lines.
        #[arg(long)]
        dump_features: Option<PathBuf>,
    },
    /// Throughput and forward-latency benchmark on generated traffic.
    Bench {
        #[arg(long)]
        geometry: PathBuf,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long, default_value_t = 3000)]
        frames: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn geometry(path: &Path) -> Result<IntersectionGeometry> {
    IntersectionGeometry::load(path).with_context(|| format!("loading geometry {}", path.display()))
}

fn load_data(args: &DataArgs) -> Result<(Dataset, TrainConfig)> {
    let g = geometry(&args.geometry)?;
    let config = match &args.config {
        Some(p) => read_json(p)?,
        None => TrainConfig::default(),
    };
    let data = Dataset::load(&args.data, &args.labels, &g).context("building dataset")?;
    log::info!("{} windows from {} VRUs ({} unmatched tracks)", data.len(), data.vru_count(), data.unmatched_tracks);
    Ok((data, config))
}

fn train_and_save<T: Scalar>(data: &Dataset, config: &TrainConfig, out: &Path, report: Option<&Path>) -> Result<()> {
    let splits = eval::split_by_track(data, config.split_seed)?;
    let (params, rep) = eval::train::<T>(&splits, config)?;
    weights::save(&params, out).with_context(|| format!("writing {}", out.display()))?;
    let m = &rep.test.metrics;
    println!(
        "test accuracy {:.4} precision {} recall {} f1 {} (best epoch {} of {})",
        m.accuracy,
        fmt_opt(m.precision),
        fmt_opt(m.recall),
        fmt_opt(m.f1),
        rep.best_epoch,
        rep.epochs_run
    );
    if let Some(p) = report {
        write_json(p, &rep)?;
    }
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("undefined".into(), |x| format!("{x:.4}"))
}

fn print_table(report: &eval::ExperimentReport) {
    println!("{:<12} {:>8} {:>9} {:>8} {:>8}  source", "config", "acc", "precision", "recall", "f1");
    for r in &report.results {
        println!(
            "{:<12} {:>8.4} {:>9} {:>8} {:>8}  synthetic",
            r.name,
            r.accuracy,
            fmt_opt(r.precision),
            fmt_opt(r.recall),
            fmt_opt(r.f1)
        );
    }
    for r in &report.reference {
        println!("{:<12} {:>8.4} {:>9.4} {:>8.4} {:>8.4}  {}", r.name, r.accuracy, r.precision, r.recall, r.f1, r.source);
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Simulate { geometry: gp, spec, out, labels } => {
            let g = geometry(&gp)?;
            let spec: ScenarioSpec = read_json(&spec)?;
            let (frames, truth) = generate_scenario(&spec, &g)?;
            let mut w = BufWriter::new(File::create(&out).with_context(|| format!("creating {}", out.display()))?);
            write_stream(&frames, &mut w)?;
            w.flush()?;
            write_json(&labels, &truth)?;
            println!("{} frames, {} VRUs", frames.len(), truth.vrus.len());
        }
        Command::Train { data, out, report } => {
            let (ds, config) = load_data(&data)?;
            match data.dtype {
                Dtype::F32 => train_and_save::<f32>(&ds, &config, &out, report.as_deref())?,
                Dtype::F64 => train_and_save::<f64>(&ds, &config, &out, report.as_deref())?,
            }
        }
        Command::Ablate { data, report, groups } => {
            let mut keep = Vec::new();
            for c in groups.chars() {
                match FeatureGroup::from_letter(c) {
                    Some(g) => keep.push(g),
                    None => bail!("unknown feature group {c:?}; expected letters from L, M, G, P"),
                }
            }
            let (ds, config) = load_data(&data)?;
            let rep = match data.dtype {
                Dtype::F32 => eval::ablation::<f32>(&ds, &keep, &config)?,
                Dtype::F64 => eval::ablation::<f64>(&ds, &keep, &config)?,
            };
            print_table(&rep);
            write_json(&report, &rep)?;
        }
        Command::SweepHeads { data, report, heads } => {
            let (ds, config) = load_data(&data)?;
            let rep = match data.dtype {
                Dtype::F32 => eval::head_sweep::<f32>(&ds, &heads, &config)?,
                Dtype::F64 => eval::head_sweep::<f64>(&ds, &heads, &config)?,
            };
            print_table(&rep);
            write_json(&report, &rep)?;
        }
        Command::Run { geometry: gp, weights: wp, input, out, alert_udp, dump_features } => {
            let g = geometry(&gp)?;
            let model: ModelParams<f32> = weights::load(&wp).with_context(|| format!("loading {}", wp.display()))?;
            let source = BufReader::new(File::open(&input).with_context(|| format!("opening {}", input.display()))?);
            let mut preds = BufWriter::new(File::create(&out).with_context(|| format!("creating {}", out.display()))?);
            let mut udp = alert_udp.as_deref().map(UdpAlertSink::connect).transpose()?;
            let mut feats = dump_features.as_ref().map(File::create).transpose()?.map(BufWriter::new);
            let summary = pipeline::run(
                source,
                &g,
                model,
                RunSinks {
                    predictions: &mut preds,
                    alerts: udp.as_mut().map(|s| s as &mut dyn AlertSink),
                    features: feats.as_mut().map(|f| f as &mut dyn Write),
                },
            )?;
            serde_json::to_writer_pretty(io::stdout().lock(), &summary)?;
            println!();
        }
        Command::Bench { geometry: gp, weights: wp, frames, seed, report } => {
            let g = geometry(&gp)?;
            let model: ModelParams<f32> = weights::load(&wp).with_context(|| format!("loading {}", wp.display()))?;
            let rep = pipeline::bench(&g, &model, frames, seed)?;
            println!(
                "{} frames, up to {} tracks: {:.1} FPS end to end (paper {:.0}); forward p50 {:.3} ms p99 {:.3} ms (paper {:.2} ms)",
                rep.frames,
                rep.max_active_tracks,
                rep.end_to_end_fps,
                rep.paper_fps,
                rep.forward_p50_ms,
                rep.forward_p99_ms,
                rep.paper_forward_ms
            );
            for s in &rep.scaling {
                println!("  {:>2} tracks (mean active {:.1}): {:.1} FPS", s.target_tracks, s.mean_active_tracks, s.fps);
            }
            if let Some(p) = report {
                write_json(&p, &rep)?;
            }
        }
    }
    Ok(())
}
