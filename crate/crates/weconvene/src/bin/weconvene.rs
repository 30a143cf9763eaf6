use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use weconvene::codec::{decode_file, encode_file, ClassicalOptions, EncodeMode, NeuralCodec};
use weconvene::core::classical::DEFAULT_LEVELS;
use weconvene::core::weights::ModelConfig;
use weconvene::core::WaveletKind;
use weconvene::image_io::read_rgb;
use weconvene::manifest::ModelManifest;
use weconvene::metrics::{bd_rate, ms_ssim, psnr, RdPoint};
use weconvene::sweep::{rd_sweep, RatePoint, SweepConfig};
use weconvene::{CodecError, Result};

#[derive(Parser)]
#[command(name = "weconvene", version, about = "Wavelet-domain image codec")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Wavelet {
    Haar,
    #[value(name = "53")]
    Cdf53,
    #[value(name = "97")]
    Cdf97,
}

impl From<Wavelet> for WaveletKind {
    fn from(w: Wavelet) -> Self {
        match w {
            Wavelet::Haar => WaveletKind::Haar,
            Wavelet::Cdf53 => WaveletKind::Cdf53,
            Wavelet::Cdf97 => WaveletKind::Cdf97,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Neural,
    Classical,
}

#[derive(Args)]
struct Toggles {
    /// Wavelet used inside WeConv layers and at the end of the encoder.
    #[arg(long, value_enum)]
    wavelet: Option<Wavelet>,
    /// Slice count of the entropy model.
    #[arg(long, value_parser = ["5", "10"])]
    slices: Option<String>,
    /// Plain convolutions instead of WeConv layers.
    #[arg(long)]
    no_weconv: bool,
}

impl Toggles {
    fn slices(&self) -> Option<usize> {
        self.slices.as_deref().map(|s| s.parse().unwrap())
    }

    /// Rejects toggles that disagree with a loaded model.
    fn check(&self, cfg: &ModelConfig) -> Result<()> {
        let bad = self.wavelet.is_some_and(|w| WaveletKind::from(w) != cfg.wavelet)
            || self.slices().is_some_and(|s| s != cfg.slices)
            || (self.no_weconv && cfg.weconv);
        if bad {
            return Err(CodecError::ModelMismatch(
                "--wavelet/--slices/--no-weconv disagree with the model manifest".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Subcommand)]
enum Command {
    /// Compress a PNG/PPM image.
    Encode {
        input: PathBuf,
        output: PathBuf,
        #[arg(long, value_enum, default_value = "classical")]
        mode: Mode,
        /// Model manifest (neural mode).
        #[arg(long)]
        model: Option<PathBuf>,
        /// Quantizer step (classical mode).
        #[arg(long, default_value_t = 8.0)]
        qstep: f32,
        /// Decomposition depth (classical mode).
        #[arg(long, default_value_t = DEFAULT_LEVELS)]
        levels: usize,
        #[command(flatten)]
        toggles: Toggles,
    },
    /// Decompress a bitstream to PNG/PPM.
    Decode {
        input: PathBuf,
        output: PathBuf,
        /// Model manifest, required for neural bitstreams.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// PSNR and MS-SSIM between two images.
    Metrics { a: PathBuf, b: PathBuf },
    /// Rate-distortion sweep over a directory of images.
    Sweep {
        dir: PathBuf,
        #[arg(long, value_enum, default_value = "classical")]
        mode: Mode,
        /// Quantizer steps (classical mode).
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16,32")]
        qsteps: Vec<f32>,
        /// Wavelets to compare (classical mode); one configuration each.
        #[arg(long, value_enum, value_delimiter = ',', default_value = "53")]
        wavelets: Vec<Wavelet>,
        #[arg(long, default_value_t = DEFAULT_LEVELS)]
        levels: usize,
        /// One manifest per rate point (neural mode).
        #[arg(long, value_delimiter = ',')]
        models: Vec<PathBuf>,
        /// Write per-image rows here.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Report BD-rate of every configuration against this one.
        #[arg(long)]
        reference: Option<String>,
        /// Skip the estimated-versus-actual rate check.
        #[arg(long)]
        no_audit: bool,
    },
    /// BD-rate between two R-D curves given as CSV with `bpp,psnr_db` columns.
    Bdrate { a: PathBuf, b: PathBuf },
    /// Write a manifest with random weights.
    InitModel {
        output: PathBuf,
        #[arg(long, default_value_t = 128)]
        n: usize,
        #[arg(long, default_value_t = 320)]
        m: usize,
        #[arg(long, default_value_t = 128)]
        z: usize,
        #[arg(long, default_value_t = 128)]
        charm_width: usize,
        #[arg(long, default_value_t = 0)]
        lambda_index: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        toggles: Toggles,
    },
}

/// Audit threshold for `sweep`.
const MAX_RATE_GAP: f64 = 0.005;

fn wavelet_name(w: WaveletKind) -> &'static str {
    match w {
        WaveletKind::Haar => "haar",
        WaveletKind::Cdf53 => "53",
        WaveletKind::Cdf97 => "97",
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Encode {
            input,
            output,
            mode,
            model,
            qstep,
            levels,
            toggles,
        } => {
            let enc = match mode {
                Mode::Neural => {
                    let path = model.ok_or_else(|| CodecError::InvalidArgument("neural mode needs --model".into()))?;
                    let codec = NeuralCodec::load(path)?;
                    toggles.check(&codec.manifest().config)?;
                    encode_file(&input, &output, EncodeMode::Neural(&codec))?
                }
                Mode::Classical => {
                    let opts = ClassicalOptions {
                        wavelet: toggles.wavelet.map_or(WaveletKind::Cdf53, Into::into),
                        levels,
                        qstep,
                    };
                    encode_file(&input, &output, EncodeMode::Classical(opts))?
                }
            };
            println!(
                "{} bytes, {:.4} bpp (estimated {:.0} bits, coded {} bits)",
                enc.bytes.len(),
                enc.bpp(),
                enc.rate.estimated_bits(),
                enc.rate.actual_bits()
            );
        }
        Command::Decode { input, output, model } => {
            let codec = model.map(NeuralCodec::load).transpose()?;
            let img = decode_file(&input, &output, codec.as_ref())?;
            println!("{}x{}", img.width(), img.height());
        }
        Command::Metrics { a, b } => {
            let (a, b) = (read_rgb(a)?, read_rgb(b)?);
            println!("psnr_db {:.4}", psnr(&a, &b)?);
            println!("msssim {:.6}", ms_ssim(&a, &b)?);
        }
        Command::Sweep {
            dir,
            mode,
            qsteps,
            wavelets,
            levels,
            models,
            csv,
            reference,
            no_audit,
        } => {
            let configs = match mode {
                Mode::Classical => wavelets
                    .iter()
                    .map(|&w| {
                        let wavelet = WaveletKind::from(w);
                        let base = ClassicalOptions {
                            wavelet,
                            levels,
                            qstep: 1.0,
                        };
                        SweepConfig::classical(format!("classical-{}", wavelet_name(wavelet)), base, &qsteps)
                    })
                    .collect(),
                Mode::Neural => {
                    let points = models
                        .iter()
                        .map(|p| Ok(RatePoint::Neural(Arc::new(NeuralCodec::load(p)?))))
                        .collect::<Result<_>>()?;
                    vec![SweepConfig {
                        name: "neural".into(),
                        points,
                    }]
                }
            };
            let report = rd_sweep(&dir, &configs, reference.as_deref())?;
            match csv {
                Some(path) => {
                    let f = std::fs::File::create(&path).map_err(|e| CodecError::IoError { path, source: e })?;
                    report.write_csv(std::io::BufWriter::new(f))?;
                }
                None => report.write_csv(std::io::stdout().lock())?,
            }
            for (name, curve) in &report.curves {
                for p in curve {
                    eprintln!("{name}: {:.4} bpp, {:.3} dB, {:.5} MS-SSIM", p.bpp, p.psnr_db, p.msssim);
                }
            }
            for (name, bd) in &report.bd_rates {
                eprintln!("BD-rate {name}: {bd:+.3}%");
            }
            if !no_audit {
                let gap = report.max_rate_gap();
                eprintln!("rate audit: max |actual - estimated| / estimated = {:.4}%", 100.0 * gap);
                if gap > MAX_RATE_GAP {
                    return Err(CodecError::InvalidArgument(format!(
                        "rate audit failed: gap {:.4}% exceeds {:.1}%",
                        100.0 * gap,
                        100.0 * MAX_RATE_GAP
                    )));
                }
            }
        }
        Command::Bdrate { a, b } => {
            let bd = bd_rate(&read_curve(&a)?, &read_curve(&b)?)?;
            println!("{bd:.4}");
        }
        Command::InitModel {
            output,
            n,
            m,
            z,
            charm_width,
            lambda_index,
            seed,
            toggles,
        } => {
            let defaults = ModelConfig::default();
            let config = ModelConfig {
                n,
                m,
                z,
                charm_width,
                lambda_index,
                slices: toggles.slices().unwrap_or(defaults.slices),
                wavelet: toggles.wavelet.map_or(defaults.wavelet, Into::into),
                weconv: !toggles.no_weconv,
                ..defaults
            };
            config.validate()?;
            let manifest = ModelManifest::random(config, seed);
            manifest.save(&output)?;
            let id: String = manifest.model_id().iter().map(|b| format!("{b:02x}")).collect();
            println!("{id}");
        }
    }
    Ok(())
}

#[derive(Deserialize)]
struct CurveRow {
    bpp: f64,
    psnr_db: f64,
    #[serde(default)]
    msssim: f64,
}

fn read_curve(path: &PathBuf) -> Result<Vec<RdPoint>> {
    let mut r =
        csv::Reader::from_path(path).map_err(|e| CodecError::InvalidArgument(format!("{}: {e}", path.display())))?;
    r.deserialize::<CurveRow>()
        .map(|row| {
            row.map(|r| RdPoint {
                bpp: r.bpp,
                psnr_db: r.psnr_db,
                msssim: r.msssim,
            })
            .map_err(|e| CodecError::InvalidArgument(format!("{}: {e}", path.display())))
        })
        .collect()
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
