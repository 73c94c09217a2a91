//! Command-line interface: `train`, `derive-bits`, `gen-synthetic`, and
//! `bench`. Reports stream as JSON lines to stdout or to `--report`.
//! Exit codes: 0 success, 2 configuration error, 3 data error.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use qgnn_cli::bench::{bench_primitives, BenchConfig};
use qgnn_cli::config::{BitsChoice, Model, PrecisionMode, RoundingMode, TrainConfig};
use qgnn_cli::data::load_dataset;
use qgnn_cli::synth::{generate, write_dataset, SbmParams};
use qgnn_cli::train::{derive_bits, run_train};

#[derive(Parser)]
#[command(name = "qgnn", about = "Quantized GNN training on CPU", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Gcn,
    Gat,
}

#[derive(Clone, Copy, ValueEnum)]
enum PrecisionArg {
    Fp32,
    Quant,
}

#[derive(Clone, Copy, ValueEnum)]
enum RoundingArg {
    Stochastic,
    Nearest,
}

#[derive(Args)]
struct DataArgs {
    /// Graph file: "V E" then E lines "src dst".
    #[arg(long)]
    graph: PathBuf,
    /// Feature file: "V D" then V rows of D floats.
    #[arg(long)]
    features: PathBuf,
    /// Label file: V lines, one class id each.
    #[arg(long)]
    labels: PathBuf,
    /// Optional split file: V lines of 0 (train), 1 (val), or 2 (test).
    #[arg(long)]
    split: Option<PathBuf>,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, value_enum, default_value = "gcn")]
    model: ModelArg,
    #[arg(long, default_value_t = 128)]
    hidden: usize,
    #[arg(long, default_value_t = 4)]
    heads: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.2)]
    leaky_slope: f32,
    /// Sweep budget for the kernel-count adaptation.
    #[arg(long, default_value_t = 6)]
    kmax: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Train a two-layer model and stream per-epoch metrics.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_enum, default_value = "fp32")]
        precision: PrecisionArg,
        /// Quantization bit width (2..=8) or "auto".
        #[arg(long, default_value = "8")]
        bits: String,
        #[arg(long, default_value_t = 200)]
        epochs: usize,
        #[arg(long, default_value_t = 0.01)]
        lr: f32,
        /// Ablation: quantize the layer before the softmax/loss too.
        #[arg(long)]
        quantize_last: bool,
        #[arg(long, value_enum, default_value = "stochastic")]
        rounding: RoundingArg,
        /// Disable quantized-tensor caching across consumer sites.
        #[arg(long)]
        no_reuse: bool,
        /// Write the JSON-lines report here instead of stdout.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Derive the quantization bit width from the first layer's output.
    DeriveBits {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Generate a stochastic-block-model dataset.
    GenSynthetic {
        #[arg(long, default_value_t = 2000)]
        nodes: usize,
        #[arg(long, default_value_t = 4)]
        classes: usize,
        #[arg(long, default_value_t = 0.02)]
        intra_p: f64,
        #[arg(long, default_value_t = 0.002)]
        inter_p: f64,
        #[arg(long, default_value_t = 32)]
        dim: usize,
        #[arg(long, default_value_t = 2.5)]
        noise: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Output directory for graph.txt, features.txt, labels.txt.
        #[arg(long)]
        out: PathBuf,
    },
    /// Time each primitive in both modes over a dataset.
    Bench {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 8)]
        bits: u8,
        #[arg(long, default_value_t = 128)]
        hidden: usize,
        #[arg(long, default_value_t = 4)]
        heads: usize,
        #[arg(long, default_value_t = 30)]
        reps: usize,
        #[arg(long, default_value_t = 6)]
        kmax: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;

enum Sink {
    Stdout(std::io::Stdout),
    File(std::io::BufWriter<std::fs::File>),
}

impl Sink {
    fn open(report: Option<&PathBuf>) -> Result<Self, std::io::Error> {
        Ok(match report {
            None => Sink::Stdout(std::io::stdout()),
            Some(path) => Sink::File(std::io::BufWriter::new(std::fs::File::create(path)?)),
        })
    }

    fn line(&mut self, json: &str) {
        let res = match self {
            Sink::Stdout(out) => writeln!(out, "{json}"),
            Sink::File(out) => writeln!(out, "{json}"),
        };
        res.expect("report sink write");
    }

    fn finish(self) {
        if let Sink::File(mut out) = self {
            out.flush().expect("report sink flush");
        }
    }
}

fn parse_bits(s: &str) -> Result<BitsChoice, String> {
    if s == "auto" {
        return Ok(BitsChoice::Auto);
    }
    s.parse::<u8>()
        .map(BitsChoice::Fixed)
        .map_err(|_| format!("bits must be an integer in 2..=8 or \"auto\", got {s:?}"))
}

fn fail(code: u8, err: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Train {
            data,
            model,
            precision,
            bits,
            epochs,
            lr,
            quantize_last,
            rounding,
            no_reuse,
            report,
        } => {
            let bits = match parse_bits(&bits) {
                Ok(b) => b,
                Err(e) => return fail(EXIT_CONFIG, e),
            };
            let cfg = TrainConfig {
                model: match model.model {
                    ModelArg::Gcn => Model::Gcn,
                    ModelArg::Gat => Model::Gat,
                },
                precision: match precision {
                    PrecisionArg::Fp32 => PrecisionMode::Fp32,
                    PrecisionArg::Quant => PrecisionMode::Quantized,
                },
                bits,
                epochs,
                lr,
                hidden: model.hidden,
                heads: model.heads,
                seed: model.seed,
                leaky_slope: model.leaky_slope,
                k_max: model.kmax,
                quantize_last,
                rounding: match rounding {
                    RoundingArg::Stochastic => RoundingMode::Stochastic,
                    RoundingArg::Nearest => RoundingMode::Nearest,
                },
                reuse: !no_reuse,
            };
            if let Err(e) = cfg.validate() {
                return fail(EXIT_CONFIG, e);
            }
            let loaded = match load_dataset(
                &data.graph,
                &data.features,
                &data.labels,
                data.split.as_deref(),
                cfg.seed,
            ) {
                Ok(d) => d,
                Err(e) => return fail(EXIT_DATA, e),
            };
            let mut sink = match Sink::open(report.as_ref()) {
                Ok(s) => s,
                Err(e) => return fail(EXIT_DATA, e),
            };
            let outcome = run_train(&cfg, &loaded, |record| {
                sink.line(&serde_json::to_string(record).expect("serializable record"));
            });
            match outcome {
                Ok(out) => {
                    sink.line(
                        &serde_json::to_string(&out.summary).expect("serializable summary"),
                    );
                    sink.finish();
                    ExitCode::SUCCESS
                }
                Err(qgnn_cli::train::TrainError::Config(e)) => fail(EXIT_CONFIG, e),
                Err(e) => fail(1, e),
            }
        }
        Command::DeriveBits { data, model, report } => {
            let cfg = TrainConfig {
                model: match model.model {
                    ModelArg::Gcn => Model::Gcn,
                    ModelArg::Gat => Model::Gat,
                },
                precision: PrecisionMode::Quantized,
                bits: BitsChoice::Auto,
                hidden: model.hidden,
                heads: model.heads,
                seed: model.seed,
                leaky_slope: model.leaky_slope,
                k_max: model.kmax,
                ..Default::default()
            };
            if let Err(e) = cfg.validate() {
                return fail(EXIT_CONFIG, e);
            }
            let loaded = match load_dataset(
                &data.graph,
                &data.features,
                &data.labels,
                data.split.as_deref(),
                cfg.seed,
            ) {
                Ok(d) => d,
                Err(e) => return fail(EXIT_DATA, e),
            };
            match derive_bits(&cfg, &loaded) {
                Ok(sel) => {
                    let mut sink = match Sink::open(report.as_ref()) {
                        Ok(s) => s,
                        Err(e) => return fail(EXIT_DATA, e),
                    };
                    let json = serde_json::json!({
                        "chosen_bits": sel.bits,
                        "error_at_chosen": sel.error,
                        "threshold_satisfied": sel.satisfied,
                        "table": sel.table,
                    });
                    sink.line(&json.to_string());
                    sink.finish();
                    ExitCode::SUCCESS
                }
                Err(qgnn_cli::train::TrainError::Config(e)) => fail(EXIT_CONFIG, e),
                Err(e) => fail(1, e),
            }
        }
        Command::GenSynthetic {
            nodes,
            classes,
            intra_p,
            inter_p,
            dim,
            noise,
            seed,
            out,
        } => {
            let params = SbmParams {
                nodes,
                classes,
                intra_p,
                inter_p,
                feature_dim: dim,
                noise,
                seed,
            };
            let dataset = match generate(&params) {
                Ok(d) => d,
                Err(e @ qgnn_cli::synth::SynthError::Io(_)) => return fail(EXIT_DATA, e),
                Err(e) => return fail(EXIT_CONFIG, e),
            };
            if let Err(e) = write_dataset(&out, &dataset) {
                return fail(EXIT_DATA, e);
            }
            println!(
                "{}",
                serde_json::json!({
                    "out": out,
                    "nodes": dataset.edges.num_nodes,
                    "edges": dataset.edges.num_edges(),
                    "classes": classes,
                    "feature_dim": dim,
                })
            );
            ExitCode::SUCCESS
        }
        Command::Bench {
            data,
            bits,
            hidden,
            heads,
            reps,
            kmax,
            seed,
            report,
        } => {
            if !(2..=8).contains(&bits) {
                return fail(EXIT_CONFIG, format!("bits {bits} outside [2, 8]"));
            }
            let loaded = match load_dataset(
                &data.graph,
                &data.features,
                &data.labels,
                data.split.as_deref(),
                seed,
            ) {
                Ok(d) => d,
                Err(e) => return fail(EXIT_DATA, e),
            };
            match bench_primitives(
                &loaded,
                &BenchConfig {
                    bits,
                    hidden,
                    heads,
                    reps,
                    k_max: kmax,
                    seed,
                },
            ) {
                Ok(rep) => {
                    let mut sink = match Sink::open(report.as_ref()) {
                        Ok(s) => s,
                        Err(e) => return fail(EXIT_DATA, e),
                    };
                    sink.line(&serde_json::to_string(&rep).expect("serializable report"));
                    sink.finish();
                    ExitCode::SUCCESS
                }
                Err(e) => fail(1, e),
            }
        }
    }
}
