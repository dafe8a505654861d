use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use chordalign::baselines::{dtw_align, hcdf, HcdfParams};
use chordalign::datagen::{write_corpus, SynthSpec};
use chordalign::dsp::{chroma, CqtMatrix};
use chordalign::io::{read_chord_list, read_lab, read_wav, save_features, write_atomic, write_json, write_lab};
use chordalign::metrics::DEFAULT_WINDOW;
use chordalign::pipeline::{
    align_features, error_csv, evaluate_dirs, load_model, train_corpus, AlignmentRecord, FeatureCache, RunConfig,
};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "chordalign", version, about = "Align chord sequences to audio")]
struct Cli {
    /// Worker threads for corpus-level work (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus of wav/lab pairs.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 15.0)]
        min_duration: f64,
        #[arg(long, default_value_t = 30.0)]
        max_duration: f64,
        #[arg(long, default_value_t = 0.1)]
        repeat_prob: f64,
        #[arg(long, default_value_t = 1e-3)]
        noise: f64,
    },
    /// Train a model on a directory of wav/lab pairs.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// key = value settings file.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides `seed` from the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides `max_epochs` from the config.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Place an untimed chord list on an audio file.
    Align {
        #[arg(long)]
        audio: PathBuf,
        #[arg(long)]
        chords: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Output LAB file; a JSON record is written next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predicted LAB files against references.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        /// JSON report; per-event errors go to the same path with `.csv`.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_WINDOW)]
        window: f64,
    },
    /// Run a comparison method.
    Baseline {
        #[arg(value_enum)]
        method: Method,
        #[arg(long)]
        audio: PathBuf,
        /// Weak annotation (required by dtw).
        #[arg(long)]
        weak: Option<PathBuf>,
        /// Output file; hcdf prints to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = HcdfParams::default().sigma)]
        sigma: f64,
        #[arg(long, default_value_t = HcdfParams::default().threshold)]
        threshold: f64,
    },
    /// Dump CQT or chroma features.
    Features {
        #[arg(long)]
        audio: PathBuf,
        /// Raw little-endian f32 file; a JSON header is written next to it.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        chroma: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Hcdf,
    Dtw,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    err.chain()
        .find_map(|e| e.downcast_ref::<chordalign::Error>())
        .map_or(2, |e| e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth {
            out,
            n,
            seed,
            min_duration,
            max_duration,
            repeat_prob,
            noise,
        } => {
            let spec = SynthSpec {
                n_tracks: n,
                seed,
                duration_range: (min_duration, max_duration),
                repeat_prob,
                noise_level: noise,
                ..SynthSpec::default()
            };
            let manifest = write_corpus(&out, &spec)?;
            println!("{}", out.join("manifest.json").display());
            eprintln!("{} tracks", manifest.tracks.len());
        }
        Command::Train {
            data,
            config,
            out,
            seed,
            epochs,
        } => {
            let mut cfg = match &config {
                Some(p) => RunConfig::from_file(p)?,
                None => RunConfig::default(),
            };
            if let Some(s) = seed {
                cfg.train.seed = s;
            }
            if let Some(e) = epochs {
                cfg.train.max_epochs = e;
            }
            cfg.train.validate()?;
            eprint!("{}", cfg.echo());
            let outcome = train_corpus(&data, &cfg, &out, &FeatureCache::from_env(), |s| {
                eprintln!(
                    "epoch {:>3}  train {:.4}  val {:.4}  lr {:.2e}",
                    s.epoch, s.train_loss, s.val_loss, s.learning_rate
                );
            })?;
            eprintln!(
                "best epoch {} of {}; {} train / {} val / {} test tracks",
                outcome.checkpoint.meta.epoch,
                outcome.checkpoint.meta.stop_epoch,
                outcome.split.train.len(),
                outcome.split.val.len(),
                outcome.split.test.len()
            );
            println!("{}", out.display());
        }
        Command::Align {
            audio,
            chords,
            checkpoint,
            out,
        } => {
            let list = read_chord_list(&chords)?;
            let model = load_model(&checkpoint)?;
            let cqt = FeatureCache::from_env().features(&audio)?;
            let segments = align_features(&model.model, &cqt, &list)?;
            write_lab(&out, &segments)?;
            let record = AlignmentRecord::new(&audio, &model.id, cqt.grid.duration(), &segments);
            record.save(&out.with_extension("json"))?;
            println!("{}", out.display());
        }
        Command::Eval {
            pred,
            reference,
            out,
            window,
        } => {
            if !(window > 0.0) {
                bail!(chordalign::Error::InvalidArgument("--window must be positive".into()));
            }
            let period = chordalign::dsp::FrameGrid::default().period();
            let eval = evaluate_dirs(&pred, &reference, window, period)?;
            write_json(&out, &eval)?;
            write_atomic(&out.with_extension("csv"), error_csv(&eval).as_bytes())?;
            if let Some(b) = &eval.boundary {
                println!("boundary  P {:.4}  R {:.4}  F1 {:.4}  (window {window} s)", b.precision, b.recall, b.f1);
            }
            if let Some(a) = &eval.alignment {
                println!(
                    "alignment  correct {:.4}  median {:.4} s  mean {:.4} s  perceptual {:.4}",
                    a.percentage_correct, a.median_abs_err, a.mean_abs_err, a.perceptual
                );
            }
        }
        Command::Baseline {
            method,
            audio,
            weak,
            out,
            sigma,
            threshold,
        } => {
            let buffer = read_wav(&audio)?;
            match method {
                Method::Hcdf => {
                    let params = HcdfParams {
                        sigma,
                        threshold,
                        ..HcdfParams::default()
                    };
                    let text: String = hcdf(&buffer, &params)?.iter().map(|t| format!("{t:.6}\n")).collect();
                    match out {
                        Some(p) => write_atomic(&p, text.as_bytes())?,
                        None => print!("{text}"),
                    }
                }
                Method::Dtw => {
                    let Some(weak) = weak else {
                        bail!(chordalign::Error::InvalidArgument(
                            "dtw needs --weak: DTW refines an approximate (weak) alignment and cannot start from an untimed chord list".into()
                        ));
                    };
                    let Some(out) = out else {
                        bail!(chordalign::Error::InvalidArgument("dtw needs --out".into()));
                    };
                    let segments = dtw_align(&buffer, &read_lab(&weak)?)
                        .with_context(|| format!("aligning {}", weak.display()))?;
                    write_lab(&out, &segments)?;
                    println!("{}", out.display());
                }
            }
        }
        Command::Features { audio, out, chroma: want_chroma } => {
            let cqt = FeatureCache::from_env().features(&audio)?;
            let dump = if want_chroma {
                CqtMatrix {
                    data: chroma(&cqt),
                    grid: cqt.grid,
                }
            } else {
                cqt
            };
            save_features(&out, &dump)?;
            println!("{}", out.display());
        }
    }
    Ok(())
}
