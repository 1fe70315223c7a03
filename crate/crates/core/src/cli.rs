//! `qdmr` command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 I/O or data error, 3 failed
//! verification.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::codec::{compress, decompress, stats, CodecOptions, DwiDataset, MotionMode, QspacePredictor};
use crate::error::Error;
use crate::io::gradients::DEFAULT_B0_THRESHOLD;
use crate::qspace::OrderingStrategy;
use crate::spatial::DEFAULT_LAMBDA;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;

/// Environment variable read when `--threads` is absent.
pub const THREADS_ENV: &str = "QDMR_THREADS";

#[derive(Debug, Parser)]
#[command(name = "qdmr", version, about = "Lossless compression of diffusion MRI datasets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compress a NIfTI dataset with its gradient table into one container.
    Compress {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        codec: CodecArgs,
        /// Output container path.
        #[arg(short, long)]
        output: PathBuf,
        /// Also print the report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Restore <prefix>.nii, <prefix>.bval and <prefix>.bvec from a container.
    Decompress {
        container: PathBuf,
        /// Output path prefix.
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Print the record directory and size breakdown of a container.
    Inspect {
        container: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Compress and decompress in memory and compare byte for byte.
    Verify {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        codec: CodecArgs,
    },
    /// Compress and compare against DEFLATE of the raw NIfTI file.
    Bench {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        codec: CodecArgs,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Args)]
struct Input {
    /// NIfTI-1 image (.nii).
    image: PathBuf,
    /// FSL b-value table.
    #[arg(long)]
    bval: PathBuf,
    /// FSL gradient direction table.
    #[arg(long)]
    bvec: PathBuf,
}

#[derive(Debug, Args)]
struct CodecArgs {
    /// q-space predictor: lh, bh or dti.
    #[arg(long, default_value = "lh")]
    qspace: String,
    /// Direction ordering: furthest, closest or original.
    #[arg(long, default_value = "furthest")]
    order: String,
    /// Motion compensation: off, builtin, or import:<dir> with MAT_0000, MAT_0001, ...
    #[arg(long, default_value = "off")]
    motion: String,
    /// Same as `--motion import:<DIR>`.
    #[arg(long = "motion-import", value_name = "DIR", conflicts_with = "motion")]
    motion_import: Option<PathBuf>,
    /// EED contrast parameter.
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    lambda: f32,
    /// Worker threads (default: all cores, or QDMR_THREADS).
    #[arg(long)]
    threads: Option<usize>,
    /// Largest b-value treated as b=0.
    #[arg(long = "b0-threshold", default_value_t = DEFAULT_B0_THRESHOLD)]
    b0_threshold: f64,
    /// Image-space volumes per shell before q-space takes over (default: adaptive; 6 for dti).
    #[arg(long)]
    split: Option<usize>,
    /// Code every volume in image space.
    #[arg(long)]
    spatial_only: bool,
}

/// Failure with its exit code.
struct Failure(i32, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Options(_) => EXIT_USAGE,
            _ => EXIT_IO,
        };
        Failure(code, e.to_string())
    }
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    std::fs::read(path).map_err(|e| Failure(EXIT_IO, format!("{}: {e}", path.display())))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    std::fs::write(path, bytes).map_err(|e| Failure(EXIT_IO, format!("{}: {e}", path.display())))
}

fn motion_mode(spec: &str, volumes: usize) -> Result<MotionMode, Failure> {
    match spec {
        "off" => Ok(MotionMode::Off),
        "builtin" => Ok(MotionMode::Builtin),
        _ => {
            let dir = spec
                .strip_prefix("import:")
                .ok_or_else(|| Failure(EXIT_USAGE, format!("unknown motion mode {spec:?}")))?;
            let texts = (0..volumes)
                .map(|i| {
                    let p = Path::new(dir).join(format!("MAT_{i:04}"));
                    let bytes = read(&p)?;
                    String::from_utf8(bytes).map_err(|_| Failure(EXIT_IO, format!("{}: not UTF-8", p.display())))
                })
                .collect::<Result<_, _>>()?;
            Ok(MotionMode::Import(texts))
        }
    }
}

fn options(args: &CodecArgs, volumes: usize) -> Result<CodecOptions, Failure> {
    Ok(CodecOptions {
        predictor: args.qspace.parse::<QspacePredictor>()?,
        ordering: args
            .order
            .parse::<OrderingStrategy>()
            .map_err(|_| Failure(EXIT_USAGE, format!("unknown ordering {:?}", args.order)))?,
        motion: match &args.motion_import {
            Some(dir) => motion_mode(&format!("import:{}", dir.display()), volumes)?,
            None => motion_mode(&args.motion, volumes)?,
        },
        lambda: args.lambda,
        spatial_split: args.split,
        spatial_only: args.spatial_only,
        ..Default::default()
    })
}

fn load(input: &Input, threshold: f64) -> Result<(DwiDataset, Vec<u8>), Failure> {
    let raw = read(&input.image)?;
    let ds = DwiDataset::from_bytes(&raw, &read(&input.bval)?, &read(&input.bvec)?, threshold)?;
    Ok((ds, raw))
}

fn thread_count(args: Option<&CodecArgs>) -> Result<usize, Failure> {
    if let Some(n) = args.and_then(|a| a.threads) {
        return if n == 0 { Err(Failure(EXIT_USAGE, "--threads must be positive".into())) } else { Ok(n) };
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Failure(EXIT_USAGE, format!("{THREADS_ENV}={v:?} is not a positive integer"))),
        Err(_) => Ok(0),
    }
}

fn execute(command: Command, out: &mut dyn Write) -> Result<i32, Failure> {
    let io = |e: std::io::Error| Failure(EXIT_IO, e.to_string());
    match command {
        Command::Compress { input, codec, output, json } => {
            let (ds, raw) = load(&input, codec.b0_threshold)?;
            let bytes = compress(&ds, &options(&codec, ds.volumes.len())?)?;
            write(&output, &bytes)?;
            let report = stats(&bytes, Some(&raw))?;
            write!(out, "{report}").map_err(io)?;
            if json {
                writeln!(out, "{}", report.to_json()).map_err(io)?;
            }
        }
        Command::Decompress { container, output } => {
            let ds = decompress(&read(&container)?)?;
            let prefix = output.to_string_lossy().trim_end_matches(".nii").to_string();
            for (ext, bytes) in
                [("nii", ds.nifti_bytes()?), ("bval", ds.bval_bytes().to_vec()), ("bvec", ds.bvec_bytes().to_vec())]
            {
                let p = PathBuf::from(format!("{prefix}.{ext}"));
                write(&p, &bytes)?;
                writeln!(out, "wrote={}", p.display()).map_err(io)?;
            }
        }
        Command::Inspect { container, json } => {
            let report = stats(&read(&container)?, None)?;
            write!(out, "{report}").map_err(io)?;
            if json {
                writeln!(out, "{}", report.to_json()).map_err(io)?;
            }
        }
        Command::Verify { input, codec } => {
            let (ds, raw) = load(&input, codec.b0_threshold)?;
            let bval = read(&input.bval)?;
            let bvec = read(&input.bvec)?;
            let bytes = compress(&ds, &options(&codec, ds.volumes.len())?)?;
            let back = decompress(&bytes)?;
            let same = back.nifti_bytes()? == raw && back.bval_bytes() == bval && back.bvec_bytes() == bvec;
            writeln!(out, "compressed_bytes={}", bytes.len()).map_err(io)?;
            writeln!(out, "verify={}", if same { "PASS" } else { "FAIL" }).map_err(io)?;
            if !same {
                return Ok(EXIT_VERIFY);
            }
        }
        Command::Bench { input, codec, json } => {
            let (ds, raw) = load(&input, codec.b0_threshold)?;
            let opts = options(&codec, ds.volumes.len())?;
            let t = Instant::now();
            let bytes = compress(&ds, &opts)?;
            let encode = t.elapsed().as_secs_f64();
            let t = Instant::now();
            decompress(&bytes)?;
            let decode = t.elapsed().as_secs_f64();
            let report = stats(&bytes, Some(&raw))?;
            write!(out, "{report}").map_err(io)?;
            writeln!(out, "encode_seconds={encode:.3}").map_err(io)?;
            writeln!(out, "decode_seconds={decode:.3}").map_err(io)?;
            if json {
                writeln!(out, "{}", report.to_json()).map_err(io)?;
            }
        }
    }
    Ok(EXIT_OK)
}

/// Parses `argv` (including the program name) and runs the command,
/// writing normal output to `out` and diagnostics to `err`.
pub fn run_with<I, S>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                EXIT_USAGE
            } else {
                let _ = write!(out, "{text}");
                EXIT_OK
            };
        }
    };
    let codec_args = match &cli.command {
        Command::Compress { codec, .. } | Command::Verify { codec, .. } | Command::Bench { codec, .. } => Some(codec),
        _ => None,
    };
    let result = thread_count(codec_args).and_then(|n| {
        let pool =
            rayon::ThreadPoolBuilder::new().num_threads(n).build().map_err(|e| Failure(EXIT_IO, e.to_string()))?;
        let mut buf = Vec::new();
        let code = pool.install(|| execute(cli.command, &mut buf));
        let _ = out.write_all(&buf);
        code
    });
    match result {
        Ok(code) => code,
        Err(Failure(code, msg)) => {
            let _ = writeln!(err, "qdmr: {msg}");
            code
        }
    }
}

/// [`run_with`] on the process's stdout and stderr.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    run_with(argv, &mut std::io::stdout().lock(), &mut std::io::stderr().lock())
}
