//! Command-line front end.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::experiment::{
    anscombe_identity, run_experiment, threads_from_env, training_size, with_threads, ExperimentOptions,
    InitDictionary, Method,
};
use crate::image::{psnr, scale_to_peak};
use crate::io::{read_dictionary, read_image, write_dictionary, write_image};
use crate::learning::{init_dictionary_dct, train_initial_dictionary};
use crate::noise::{sample_poisson, NoiseSeed};
use crate::pipeline::{denoise, SpdaConfig};
use crate::testimage::{make_test_image, TestImageKind};

#[derive(Debug, Parser)]
#[command(name = "spda", version, about = "Poisson image denoising with sparse exponential patch models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Profile {
    /// 20x20 patches, groups of 50, 5 rounds.
    Full,
    /// 8x8 patches, groups of 10, 2 rounds; meant for 64x64 images.
    Desk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitKind {
    Dct,
    Trained,
}

/// Options shared by commands that run the denoiser.
#[derive(Debug, clap::Args)]
pub struct ConfigArgs {
    /// JSON file with `SpdaConfig` fields; overrides --profile.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "full")]
    pub profile: Profile,
    /// Ablation setup: I, II, III, IV, V or custom.
    #[arg(long)]
    pub setup: Option<String>,
}

impl ConfigArgs {
    pub fn load(&self) -> Result<SpdaConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                serde_json::from_str(&text).map_err(|e| Error::Parse {
                    path: path.clone(),
                    line: e.line(),
                    msg: e.to_string(),
                })?
            }
            None => match self.profile {
                Profile::Full => SpdaConfig::full(),
                Profile::Desk => SpdaConfig::desk(),
            },
        };
        if let Some(s) = &self.setup {
            cfg.setup = s.parse()?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Scale an image to a peak and add Poisson noise.
    AddNoise {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        peak: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Noisy output; the scaled clean image goes to `<output>.clean`.
        #[arg(long)]
        output: PathBuf,
    },
    /// Denoise a photon-count image.
    Denoise {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "spda")]
        method: String,
        /// Starting dictionary; the DCT initialization is used when absent.
        #[arg(long)]
        dict: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        output: PathBuf,
        /// Clean image for PSNR reporting.
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// Train an initial dictionary on a clean image scaled to a peak bucket.
    TrainDict {
        #[arg(long)]
        peak: f64,
        /// Clean training image; the procedural training pattern when absent.
        #[arg(long)]
        input: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        output: PathBuf,
    },
    /// PSNR of an estimate against a reference.
    Psnr {
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        estimate: PathBuf,
    },
    /// Denoise many noise realizations and write a CSV of PSNR values.
    Experiment {
        /// Clean image; a procedural one (see --kind) when absent.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value = "ridges")]
        kind: String,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, value_delimiter = ',', default_value = "0.2,1,4")]
        peaks: Vec<f64>,
        #[arg(long, default_value_t = 5)]
        realizations: usize,
        #[arg(long, value_delimiter = ',', default_value = "spda,spda-bin,anscombe-identity")]
        methods: Vec<String>,
        #[arg(long, value_enum, default_value = "dct")]
        init: InitKind,
        /// Base seed; overrides the config's `seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Fill the `seconds` column (makes the output run-dependent).
        #[arg(long)]
        timings: bool,
        #[command(flatten)]
        cfg: ConfigArgs,
        /// CSV destination; stdout when absent.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Write a procedural test image.
    MakeTestImage {
        #[arg(long, default_value = "ridges")]
        kind: String,
        #[arg(long, default_value_t = 64)]
        size: usize,
        /// Peak of the written image (generators produce values in [0, 1]).
        #[arg(long, default_value_t = 255.0)]
        peak: f64,
        #[arg(long)]
        output: PathBuf,
    },
}

/// Path of the scaled clean image written next to a noisy one.
pub fn clean_sidecar(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".clean");
    PathBuf::from(s)
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::arg(format!("--{name} must be positive, got {v}")))
    }
}

/// Runs one parsed command, writing reports to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let threads = threads_from_env()?;
    let text = with_threads(threads, || dispatch(cli.command))??;
    out.write_all(text.as_bytes())
        .map_err(|e| Error::io(Path::new("<stdout>"), e))
}

/// Executes a command and returns what it prints.
fn dispatch(command: Command) -> Result<String> {
    match command {
        Command::AddNoise {
            input,
            peak,
            seed,
            output,
        } => {
            let peak = positive("peak", peak)?;
            let clean = scale_to_peak(&read_image(&input)?, peak)?;
            let noisy = sample_poisson(&clean, NoiseSeed(seed))?;
            write_image(clean_sidecar(&output), &clean)?;
            write_image(&output, &noisy)?;
            Ok(String::new())
        }
        Command::Denoise {
            input,
            method,
            dict,
            cfg,
            output,
            reference,
        } => {
            let method: Method = method.parse()?;
            let noisy = read_image(&input)?;
            let reference = reference.map(read_image).transpose()?;
            let mut cfg = cfg.load()?;
            let (image, summary) = match method {
                Method::AnscombeIdentity => {
                    let img = anscombe_identity(&noisy)?;
                    let p = reference.as_ref().map(|r| psnr(r, &img)).transpose()?;
                    (img, serde_json::json!({ "method": "anscombe-identity", "psnr_db": p }))
                }
                Method::Spda | Method::SpdaBin => {
                    cfg.binning = method == Method::SpdaBin;
                    let d0 = match dict {
                        Some(path) => read_dictionary(&path)?,
                        None => {
                            eprintln!("warning: no --dict given, starting from the DCT dictionary");
                            init_dictionary_dct(cfg.patch_side)?
                        }
                    };
                    let report = denoise(&noisy, &d0, &cfg, reference.as_ref())?;
                    let mut v = serde_json::to_value(report.summary())?;
                    v["method"] = serde_json::Value::String(method.to_string());
                    (report.output, v)
                }
            };
            write_image(&output, &image)?;
            Ok(format!("{}\n", serde_json::to_string_pretty(&summary)?))
        }
        Command::TrainDict {
            peak,
            input,
            cfg,
            output,
        } => {
            let peak = positive("peak", peak)?;
            let cfg = cfg.load()?;
            let clean = match input {
                Some(p) => read_image(&p)?,
                None => make_test_image(TestImageKind::Training, training_size(cfg.patch_side))?,
            };
            let d = train_initial_dictionary(&clean, peak, &cfg)?;
            write_dictionary(&output, &d)?;
            Ok(String::new())
        }
        Command::Psnr { reference, estimate } => {
            let v = psnr(&read_image(&reference)?, &read_image(&estimate)?)?;
            Ok(format!("{v:.4}\n"))
        }
        Command::Experiment {
            input,
            kind,
            size,
            peaks,
            realizations,
            methods,
            init,
            seed,
            timings,
            cfg,
            output,
        } => {
            for &p in &peaks {
                positive("peaks", p)?;
            }
            let mut cfg = cfg.load()?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let (clean, name) = match input {
                Some(p) => {
                    let name = p.file_stem().map_or("input".into(), |s| s.to_string_lossy().into_owned());
                    (read_image(&p)?, name)
                }
                None => {
                    let kind: TestImageKind = kind.parse()?;
                    (make_test_image(kind, size)?, kind.to_string())
                }
            };
            let methods = methods.iter().map(|m| m.parse()).collect::<Result<Vec<Method>>>()?;
            let opts = ExperimentOptions {
                image_name: name,
                peaks,
                realizations,
                methods,
                init: match init {
                    InitKind::Dct => InitDictionary::Dct,
                    InitKind::Trained => InitDictionary::Trained,
                },
                timings,
            };
            let table = run_experiment(&clean, &opts, &cfg)?;
            match output {
                Some(path) => {
                    let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
                    table.write_csv(std::io::BufWriter::new(file))?;
                    Ok(String::new())
                }
                None => table.to_csv_string(),
            }
        }
        Command::MakeTestImage {
            kind,
            size,
            peak,
            output,
        } => {
            let kind: TestImageKind = kind.parse()?;
            let img = make_test_image(kind, size)?;
            let peak = positive("peak", peak)?;
            write_image(&output, &scale_to_peak(&img, peak)?)?;
            Ok(String::new())
        }
    }
}

/// Entry point for the binary: parses arguments, runs, maps errors to exit codes.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match run(cli, &mut lock) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
