use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use noisy_ecg::harness::{
    evaluate, generate_synthetic, render_report, run_experiment, set_probabilities, welch_t, PipelineConfig,
};
use noisy_ecg::model::{probabilities, Network, Prediction};
use noisy_ecg::nn::Checkpoint;
use noisy_ecg::noisy_label::{train_with, RunWriter};
use noisy_ecg::signal_prep::{read_dataset, write_dataset, LeadCombo, PreparedSet, WindowConfig};
use noisy_ecg::swa_ensemble::EnsembleSet;
use noisy_ecg::{Error, Result};

const RUN_CONFIG: &str = "config.toml";

#[derive(Parser)]
#[command(name = "noisy-ecg", version, about = "Noisy-label multi-label classification of multichannel recordings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with injected label noise
    Gen {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        n_samples: Option<usize>,
        #[arg(long)]
        noise_rate: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Select leads, resample and normalize a dataset, attaching wide features
    Prep {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        leads: LeadCombo,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Co-train the twin networks and leave checkpoints, partitions and metrics in a run directory
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        leads: LeadCombo,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Single-network operations
    #[command(subcommand)]
    Model(ModelCommand),
    /// Four-member ensemble operations
    #[command(subcommand)]
    Ensemble(EnsembleCommand),
    /// Score predictions against the labels of a dataset
    Evaluate {
        #[arg(long)]
        preds: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0.3)]
        threshold: f64,
        /// Score against the training labels even when reference labels exist
        #[arg(long)]
        noisy: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Baseline versus noisy-label pipeline with cross-validation
    Experiment {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Welch's t-test of two comma-separated samples
    Ttest {
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        a: Vec<f64>,
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        b: Vec<f64>,
    },
}

#[derive(Subcommand)]
enum ModelCommand {
    /// Write a freshly initialized network
    Build {
        #[arg(long)]
        leads: LeadCombo,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        n_labels: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict with one checkpoint
    Predict {
        #[arg(long)]
        ckpt: PathBuf,
        #[command(flatten)]
        io: PredictIo,
    },
}

#[derive(Subcommand)]
enum EnsembleCommand {
    /// Predict with the four members left in a run directory
    Predict {
        #[arg(long)]
        run: PathBuf,
        #[command(flatten)]
        io: PredictIo,
    },
}

#[derive(Args)]
struct PredictIo {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 0.3)]
    threshold: f64,
    /// Configuration whose window settings apply; defaults to the run's own or built-in values
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize, Deserialize)]
struct PredLine {
    id: String,
    #[serde(flatten)]
    prediction: Prediction,
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    match path {
        Some(p) => PipelineConfig::load(p),
        None => Ok(PipelineConfig::default()),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_predictions(path: &Path, set: &PreparedSet, probs: Vec<Vec<f64>>, threshold: f64) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path).map_err(io_err(path))?);
    for (s, p) in set.samples.iter().zip(probs) {
        let line = PredLine {
            id: s.id.clone(),
            prediction: Prediction::from_probabilities(p, threshold),
        };
        writeln!(w, "{}", serde_json::to_string(&line)?).map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn read_predictions(path: &Path) -> Result<Vec<PredLine>> {
    let reader = BufReader::new(fs::File::open(path).map_err(io_err(path))?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line.map_err(io_err(path))?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

fn combo_of(leads: &[String]) -> Result<LeadCombo> {
    LeadCombo::ALL
        .into_iter()
        .find(|c| c.lead_names() == leads)
        .ok_or_else(|| Error::Checkpoint(format!("no lead combination matches {leads:?}")))
}

fn window_for(io: &PredictIo, run_config: Option<PathBuf>) -> Result<WindowConfig> {
    match (&io.config, run_config) {
        (Some(p), _) => Ok(PipelineConfig::load(p)?.window),
        (None, Some(p)) if p.exists() => Ok(PipelineConfig::load(&p)?.window),
        _ => Ok(WindowConfig::default()),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen {
            config,
            n_samples,
            noise_rate,
            seed,
            out,
        } => {
            let mut synth = load_config(config.as_deref())?.synthetic;
            synth.n_samples = n_samples.unwrap_or(synth.n_samples);
            synth.noise_rate = noise_rate.unwrap_or(synth.noise_rate);
            synth.seed = seed.unwrap_or(synth.seed);
            let records: Vec<_> = generate_synthetic(&synth)?.into_iter().map(|r| (r, None)).collect();
            write_dataset(&out, &records)?;
            log::info!("wrote {} records to {}", records.len(), out.display());
        }
        Command::Prep {
            input,
            leads,
            config,
            out,
        } => {
            let window = load_config(config.as_deref())?.window;
            let set = PreparedSet::from_records(&read_dataset(&input)?, leads, window)?;
            write_dataset(&out, &set.to_records())?;
            log::info!("prepared {} records with {leads} leads", set.len());
        }
        Command::Train {
            config,
            leads,
            data,
            out,
        } => {
            let cfg = load_config(config.as_deref())?;
            let set = PreparedSet::from_records(&read_dataset(&data)?, leads, cfg.window)?;
            let writer = RunWriter::create(&out, &set)?;
            let text = toml::to_string(&cfg).map_err(|e| Error::Config(e.to_string()))?;
            fs::write(out.join(RUN_CONFIG), text).map_err(io_err(&out))?;
            let state = train_with(&cfg.train, &set, |s| writer.record(s))?;
            state.ensemble(&cfg.train, &set)?.save_run(&out, &leads.lead_names())?;
            log::info!("run complete in {}", out.display());
        }
        Command::Model(ModelCommand::Build {
            leads,
            config,
            n_labels,
            seed,
            out,
        }) => {
            let cfg = load_config(config.as_deref())?;
            let model = cfg.train.model(n_labels.unwrap_or(cfg.synthetic.n_labels))?;
            let net = Network::<f32>::build(&model, leads.count(), seed.unwrap_or(cfg.train.seed))?;
            net.to_checkpoint(&leads.lead_names())?.save(&out)?;
            log::info!("{} parameters", net.store().num_scalars());
        }
        Command::Model(ModelCommand::Predict { ckpt, io }) => {
            let (mut net, meta) = Network::<f32>::from_checkpoint(&Checkpoint::load(&ckpt)?)?;
            let window = window_for(&io, None)?;
            let set = PreparedSet::from_records(&read_dataset(&io.input)?, combo_of(&meta.leads)?, window)?;
            let probs = set_probabilities(&set, 64, |x, w| probabilities(&mut net, x, w, 64))?;
            write_predictions(&io.out, &set, probs, io.threshold)?;
        }
        Command::Ensemble(EnsembleCommand::Predict { run, io }) => {
            let (mut ensemble, meta) = EnsembleSet::<f32>::load_run(&run)?;
            let window = window_for(&io, Some(run.join(RUN_CONFIG)))?;
            let set = PreparedSet::from_records(&read_dataset(&io.input)?, combo_of(&meta.leads)?, window)?;
            let probs = set_probabilities(&set, 64, |x, w| ensemble.probabilities(x, w, 64))?;
            write_predictions(&io.out, &set, probs, io.threshold)?;
        }
        Command::Evaluate {
            preds,
            data,
            threshold,
            noisy,
            out,
        } => {
            let lines = read_predictions(&preds)?;
            let records = read_dataset(&data)?;
            let pred_ids: Vec<String> = lines.iter().map(|l| l.id.clone()).collect();
            let probs: Vec<Vec<f64>> = lines.into_iter().map(|l| l.prediction.probabilities).collect();
            let true_ids: Vec<String> = records.iter().map(|(r, _)| r.id.clone()).collect();
            let truth: Vec<Vec<u8>> = records
                .into_iter()
                .map(|(r, _)| match (noisy, r.true_labels) {
                    (false, Some(t)) => t,
                    _ => r.labels,
                })
                .collect();
            let report = evaluate(&pred_ids, &probs, &true_ids, &truth, threshold)?;
            let text = serde_json::to_string_pretty(&report)?;
            match out {
                Some(p) => fs::write(&p, text + "\n").map_err(io_err(&p))?,
                None => println!("{text}"),
            }
            eprintln!("macro-F1 {:.4}", report.macro_f1);
        }
        Command::Experiment { config, out } => {
            let cfg = load_config(config.as_deref())?;
            let report = run_experiment(&cfg, Some(&out))?;
            print!("{}", render_report(&report));
        }
        Command::Ttest { a, b } => {
            let r = welch_t(&a, &b)?;
            println!("t = {:.6}\ndf = {:.6}\np = {:.6}", r.t, r.df, r.p);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
