use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use amsr_core::flops::{self, BodyMask};
use amsr_core::freqmask::{generate_mask, window_decision, MaskStrategy};
use amsr_core::model::BodySpec;
use amsr_core::netpbm::{load_image, load_mask, save_hfmap, save_image, save_mask};
use amsr_core::sweep::{bench_sweep, load_corpus, rows_to_csv, Sweep};
use amsr_core::tensor::psnr;
use amsr_core::{bind, super_resolve, Error, Model, ModelSpec, RunConfig, RunMode, Tensor, WeightStore};

/// Frequency-masked sparse super-resolution.
#[derive(Parser)]
#[command(name = "amsr", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepArg {
    Dilate,
    Sigma,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the high-frequency mask of an LR image.
    Mask {
        input: PathBuf,
        /// kmeans, median or fixed:<t>
        #[arg(long, default_value = "kmeans")]
        strategy: String,
        #[arg(long, default_value_t = 5)]
        dilate: usize,
        #[arg(short, long)]
        output: PathBuf,
        /// Also write the normalized high-frequency map.
        #[arg(long)]
        hfmap: Option<PathBuf>,
    },
    /// Super-resolve one image.
    Sr {
        input: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        weights: PathBuf,
        /// Run the body on every position.
        #[arg(long)]
        dense: bool,
        /// Defaults to 5 for convolutional bodies, 11 for attention bodies.
        #[arg(long)]
        dilate: Option<usize>,
        #[arg(long, default_value_t = 0.5)]
        sigma: f64,
        #[arg(long, default_value = "kmeans")]
        strategy: String,
        #[arg(short, long)]
        output: PathBuf,
        /// Per-layer MAC counts as CSV.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Analytic MAC report for a model and a mask.
    Flops {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        /// Window threshold for attention bodies.
        #[arg(long, default_value_t = 0.5)]
        sigma: f64,
        /// Print CSV instead of a table.
        #[arg(long)]
        csv: bool,
    },
    /// Sweep dilation or threshold over a corpus directory.
    Bench {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_enum)]
        sweep: SweepArg,
        /// Dilation for threshold sweeps (default 5).
        #[arg(long)]
        dilate: Option<usize>,
        /// Threshold for dilation sweeps.
        #[arg(long, default_value_t = 0.5)]
        sigma: f64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// PSNR of two images (peak 1, RGB, no crop).
    Psnr { a: PathBuf, b: PathBuf },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

/// Categorizes a core error; `Io` failures inherit the code of what was
/// being read.
fn classify(e: Error, io_code: u8) -> Failure {
    let code = match &e {
        Error::InvalidArgument(_) => 2,
        Error::Format(_) => 3,
        Error::Binding(_) => 4,
        Error::Io(_) => io_code,
        _ => 1,
    };
    Failure {
        code,
        message: e.to_string(),
    }
}

fn read_image(path: &Path) -> Result<Tensor, Failure> {
    load_image(path).map_err(|e| {
        let mut f = classify(e, 3);
        f.message = format!("{}: {}", path.display(), f.message);
        f
    })
}

fn model_failure(path: &Path, e: Error) -> Failure {
    let mut f = classify(e, 4);
    f.message = format!("{}: {}", path.display(), f.message);
    f
}

fn read_model(spec: &Path, weights: &Path) -> Result<Model, Failure> {
    let parsed = ModelSpec::load(spec).map_err(|e| model_failure(spec, e))?;
    let store = WeightStore::load(weights).map_err(|e| model_failure(weights, e))?;
    let (model, warnings) = bind(&parsed, &store).map_err(|e| model_failure(weights, e))?;
    for w in warnings {
        eprintln!("warning: {w}");
    }
    Ok(model)
}

fn parse_strategy(s: &str) -> Result<MaskStrategy, Failure> {
    s.parse().map_err(|e: Error| Failure::usage(e.to_string()))
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), Failure> {
    std::fs::write(path, bytes).map_err(|e| Failure {
        code: 1,
        message: format!("{}: {e}", path.display()),
    })
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Mask {
            input,
            strategy,
            dilate,
            output,
            hfmap,
        } => {
            let strategy = parse_strategy(&strategy)?;
            let lr = read_image(&input)?;
            let art = generate_mask(&lr, strategy, dilate).map_err(|e| classify(e, 1))?;
            save_mask(&art.mask, &output).map_err(|e| classify(e, 1))?;
            if let Some(p) = hfmap {
                save_hfmap(&art.hf, p).map_err(|e| classify(e, 1))?;
            }
            if let Some(km) = &art.kmeans {
                println!(
                    "kmeans: centers {:.4} / {:.4}, threshold {:.4}, {} iterations",
                    km.center_low, km.center_high, km.threshold, km.iterations
                );
            }
            println!(
                "coverage: raw {:.4}, dilated {:.4} ({} of {} pixels)",
                art.raw.coverage(),
                art.mask.coverage(),
                art.mask.count_ones(),
                art.mask.bits().len()
            );
        }
        Command::Sr {
            input,
            model,
            weights,
            dense,
            dilate,
            sigma,
            strategy,
            output,
            report,
        } => {
            let strategy = parse_strategy(&strategy)?;
            let lr = read_image(&input)?;
            let model = read_model(&model, &weights)?;
            let mut cfg = RunConfig::for_model(model.spec());
            cfg.sigma = sigma;
            cfg.strategy = strategy;
            if let Some(k) = dilate {
                cfg.dilation_k = k;
            }
            if dense {
                cfg.mode = RunMode::Dense;
            }
            let out = super_resolve(&lr, &model, &cfg).map_err(|e| classify(e, 1))?;
            save_image(&out.sr, &output).map_err(|e| classify(e, 1))?;
            if let Some(p) = report {
                write_file(&p, out.report.to_csv())?;
            }
            print!("{}", out.report.to_text());
        }
        Command::Flops {
            model,
            mask,
            sigma,
            csv,
        } => {
            let spec = ModelSpec::load(&model).map_err(|e| model_failure(&model, e))?;
            let m = load_mask(&mask).map_err(|e| classify(e, 3))?;
            let (h, w) = (m.height(), m.width());
            let report = match spec.body {
                BodySpec::Cnn { .. } => flops::report(&spec, h, w, BodyMask::Pixels(&m)),
                BodySpec::Stl { win, .. } => {
                    let padded = m
                        .pad_to(h.div_ceil(win) * win, w.div_ceil(win) * win)
                        .map_err(|e| classify(e, 1))?;
                    let d = window_decision(&padded, win, sigma).map_err(|e| classify(e, 1))?;
                    flops::report(&spec, h, w, BodyMask::Windows(&d))
                }
            }
            .map_err(|e| classify(e, 1))?;
            if csv {
                print!("{}", report.to_csv());
            } else {
                print!("{}", report.to_text());
            }
        }
        Command::Bench {
            model,
            weights,
            corpus,
            sweep,
            dilate,
            sigma,
            output,
        } => {
            let model = read_model(&model, &weights)?;
            let images = load_corpus(&corpus).map_err(|e| classify(e, 3))?;
            let sweep = match sweep {
                SweepArg::Dilate => Sweep::Dilation,
                SweepArg::Sigma => Sweep::Sigma,
            };
            let mut base = RunConfig::for_model(model.spec());
            base.sigma = sigma;
            base.dilation_k = dilate.unwrap_or(5);
            let threads = match std::env::var("AMSR_THREADS") {
                Ok(v) => Some(
                    v.parse::<usize>()
                        .map_err(|_| Failure::usage(format!("AMSR_THREADS must be a positive integer, got '{v}'")))?,
                ),
                Err(_) => None,
            };
            let rows = bench_sweep(&model, &images, sweep, &base, threads).map_err(|e| classify(e, 1))?;
            write_file(&output, rows_to_csv(&rows))?;
            println!(
                "{} rows over {} images -> {}",
                rows.len(),
                images.len(),
                output.display()
            );
        }
        Command::Psnr { a, b } => {
            let (ta, tb) = (read_image(&a)?, read_image(&b)?);
            let v = psnr(&ta, &tb, 1.0).map_err(|e| Failure {
                code: 3,
                message: e.to_string(),
            })?;
            if v.is_infinite() {
                println!("inf");
            } else {
                println!("{v:.4}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
