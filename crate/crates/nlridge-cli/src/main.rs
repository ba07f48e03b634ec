//! Batch command-line interface for the nlridge denoiser.
//!
//! Three subcommands cover the full workflow:
//!
//! * `add-noise` — corrupt a clean image under a chosen noise model,
//! * `denoise`   — run the two-step pipeline on a noisy image,
//! * `bench`     — corrupt and denoise every image in a directory and
//!   report PSNR per image and noise level, as CSV and aligned text.
//!
//! All configuration travels through flags (no environment variables),
//! so an invocation pasted from a log reproduces the run exactly.

use clap::{Args, Parser, Subcommand, ValueEnum};
use nlridge::{
    corrupt, default_params_for_family, denoise, psnr, read_image, write_image, ConstraintKind,
    EstimatorConfig, FamilyKind, NoiseModel, PipelineParams,
};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "nlridge", version, about = "Two-step non-local image denoiser")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Corrupt a clean image under a noise model
    AddNoise(AddNoiseArgs),
    /// Denoise a noisy image with the two-step pipeline
    Denoise(DenoiseArgs),
    /// Corrupt and denoise a directory of clean images, reporting PSNR
    Bench(BenchArgs),
}

/// Noise-model selection for `add-noise` and `denoise`: exactly one of
/// the four flags.
#[derive(Args)]
#[group(required = true, multiple = false)]
struct NoiseArgs {
    /// Homoscedastic Gaussian noise level
    #[arg(long)]
    sigma: Option<f64>,
    /// Per-pixel Gaussian standard deviations, read from an image file
    #[arg(long, value_name = "PATH")]
    noisemap: Option<PathBuf>,
    /// Poisson noise (variance equals intensity)
    #[arg(long)]
    poisson: bool,
    /// Mixed Poisson-Gaussian noise with variance a*x + b
    #[arg(long, value_name = "A,B", value_parser = parse_pair)]
    mixed_pg: Option<(f64, f64)>,
}

impl NoiseArgs {
    fn to_model(&self) -> Result<NoiseModel, String> {
        let model = if let Some(sigma) = self.sigma {
            NoiseModel::GaussianHomo { sigma }
        } else if let Some(path) = &self.noisemap {
            NoiseModel::GaussianHetero {
                noisemap: read_image(path).map_err(|e| format!("{}: {e}", path.display()))?,
            }
        } else if self.poisson {
            NoiseModel::Poisson
        } else if let Some((gain, var)) = self.mixed_pg {
            NoiseModel::MixedPg { gain, var }
        } else {
            unreachable!("clap enforces exactly one noise flag");
        };
        model.validate().map_err(|e| e.to_string())?;
        Ok(model)
    }
}

/// Noise-model selection for `bench`; identical to [`NoiseArgs`] except
/// that `--sigma` accepts a comma-separated list of levels.
#[derive(Args)]
#[group(required = true, multiple = false)]
struct BenchNoiseArgs {
    /// Homoscedastic Gaussian noise levels, comma-separated
    #[arg(long, value_name = "S1,S2,...", value_delimiter = ',')]
    sigma: Option<Vec<f64>>,
    /// Per-pixel Gaussian standard deviations, read from an image file
    #[arg(long, value_name = "PATH")]
    noisemap: Option<PathBuf>,
    /// Poisson noise (variance equals intensity)
    #[arg(long)]
    poisson: bool,
    /// Mixed Poisson-Gaussian noise with variance a*x + b
    #[arg(long, value_name = "A,B", value_parser = parse_pair)]
    mixed_pg: Option<(f64, f64)>,
}

impl BenchNoiseArgs {
    fn to_models(&self) -> Result<Vec<NoiseModel>, String> {
        if let Some(sigmas) = &self.sigma {
            if sigmas.is_empty() {
                return Err("--sigma needs at least one level".into());
            }
            return sigmas
                .iter()
                .map(|&sigma| {
                    let model = NoiseModel::GaussianHomo { sigma };
                    model.validate().map_err(|e| e.to_string())?;
                    Ok(model)
                })
                .collect();
        }
        let single = NoiseArgs {
            sigma: None,
            noisemap: self.noisemap.clone(),
            poisson: self.poisson,
            mixed_pg: self.mixed_pg,
        };
        Ok(vec![single.to_model()?])
    }
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| "expected two comma-separated numbers, e.g. 2.0,16.0".to_string())?;
    let gain = a
        .trim()
        .parse::<f64>()
        .map_err(|e| format!("bad gain {a:?}: {e}"))?;
    let var = b
        .trim()
        .parse::<f64>()
        .map_err(|e| format!("bad variance {b:?}: {e}"))?;
    Ok((gain, var))
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ConstraintArg {
    Linear,
    Affine,
    Conical,
    Convex,
}

impl From<ConstraintArg> for ConstraintKind {
    fn from(value: ConstraintArg) -> Self {
        match value {
            ConstraintArg::Linear => ConstraintKind::Linear,
            ConstraintArg::Affine => ConstraintKind::Affine,
            ConstraintArg::Conical => ConstraintKind::Conical,
            ConstraintArg::Convex => ConstraintKind::Convex,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FamilyArg {
    Nlridge,
    Nlbayes,
    Bm3d,
}

impl From<FamilyArg> for FamilyKind {
    fn from(value: FamilyArg) -> Self {
        match value {
            FamilyArg::Nlridge => FamilyKind::NlRidge,
            FamilyArg::Nlbayes => FamilyKind::NlBayes,
            FamilyArg::Bm3d => FamilyKind::Bm3d,
        }
    }
}

/// Pipeline configuration shared by `denoise` and `bench`. Geometry
/// flags override the calibrated defaults; models without calibrated
/// defaults require all four of --patch1/--patch2/--k1/--k2.
#[derive(Args)]
struct ParamArgs {
    /// Constraint on the combination weights
    #[arg(long, value_enum, default_value_t = ConstraintArg::Linear)]
    constraint: ConstraintArg,
    /// Estimator family
    #[arg(long, value_enum, default_value_t = FamilyArg::Nlridge)]
    family: FamilyArg,
    /// Regularization strength for the weight estimation (0 disables)
    #[arg(long)]
    alpha: Option<f64>,
    /// Coordinate-descent sweeps for conical/convex constraints
    #[arg(long)]
    scd_iters: Option<usize>,
    /// Step-1 patch side (e.g. 7 for 7x7 patches)
    #[arg(long)]
    patch1: Option<usize>,
    /// Step-2 patch side
    #[arg(long)]
    patch2: Option<usize>,
    /// Step-1 group size (patches per group)
    #[arg(long)]
    k1: Option<usize>,
    /// Step-2 group size
    #[arg(long)]
    k2: Option<usize>,
    /// Search-window side (odd)
    #[arg(long)]
    window: Option<usize>,
    /// Reference-patch stride
    #[arg(long)]
    stride: Option<usize>,
    /// Seed for all pseudo-random choices
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads (1 guarantees bit-reproducible output)
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct AddNoiseArgs {
    #[command(flatten)]
    noise: NoiseArgs,
    /// Seed for the noise generator
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Clean input image (PGM or grayscale PNG)
    input: PathBuf,
    /// Corrupted output image
    output: PathBuf,
}

#[derive(Args)]
struct DenoiseArgs {
    #[command(flatten)]
    noise: NoiseArgs,
    #[command(flatten)]
    params: ParamArgs,
    /// Also write the step-1 pilot estimate here
    #[arg(long, value_name = "PATH")]
    keep_step1: Option<PathBuf>,
    /// Noisy input image (PGM or grayscale PNG)
    input: PathBuf,
    /// Denoised output image
    output: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Directory of clean reference images (PGM or grayscale PNG)
    #[arg(long, value_name = "DIR")]
    clean: PathBuf,
    #[command(flatten)]
    noise: BenchNoiseArgs,
    #[command(flatten)]
    params: ParamArgs,
    /// Write the CSV report to this file instead of stdout
    #[arg(long, value_name = "PATH")]
    csv: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::AddNoise(args) => cmd_add_noise(args),
        Command::Denoise(args) => cmd_denoise(args),
        Command::Bench(args) => cmd_bench(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::FAILURE
        }
    }
}

fn cmd_add_noise(args: AddNoiseArgs) -> Result<(), String> {
    let clean = read_image(&args.input).map_err(|e| format!("{}: {e}", args.input.display()))?;
    let model = args.noise.to_model()?;
    let noisy = corrupt(&clean, &model, args.seed).map_err(|e| e.to_string())?;
    write_image(&noisy, &args.output).map_err(|e| format!("{}: {e}", args.output.display()))?;
    println!(
        "{} -> {} [{}]",
        args.input.display(),
        args.output.display(),
        model.describe()
    );
    Ok(())
}

fn cmd_denoise(args: DenoiseArgs) -> Result<(), String> {
    configure_threads(args.params.threads)?;
    let noisy = read_image(&args.input).map_err(|e| format!("{}: {e}", args.input.display()))?;
    let model = args.noise.to_model()?;
    let params = resolve_params(&model, &args.params)?;
    let started = Instant::now();
    let (pilot, second) = denoise(&noisy, &model, &params).map_err(|e| e.to_string())?;
    let seconds = started.elapsed().as_secs_f64();
    if let Some(path) = &args.keep_step1 {
        write_image(&pilot, path).map_err(|e| format!("{}: {e}", path.display()))?;
    }
    write_image(&second, &args.output).map_err(|e| format!("{}: {e}", args.output.display()))?;
    println!(
        "{} -> {} [{} {}] {seconds:.2}s",
        args.input.display(),
        args.output.display(),
        model.describe(),
        constraint_label(params.constraint),
    );
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<(), String> {
    configure_threads(args.params.threads)?;
    let paths = image_paths(&args.clean)?;
    let models = args.noise.to_models()?;
    let mut records = Vec::new();
    for path in &paths {
        let clean = read_image(path).map_err(|e| format!("{}: {e}", path.display()))?;
        for model in &models {
            let params = resolve_params(model, &args.params)?;
            // A distinct corruption seed per row; the pipeline itself
            // still uses params.seed so reruns are comparable.
            let noisy = corrupt(&clean, model, args.params.seed + records.len() as u64)
                .map_err(|e| e.to_string())?;
            let started = Instant::now();
            let (pilot, second) = denoise(&noisy, model, &params).map_err(|e| e.to_string())?;
            let seconds = started.elapsed().as_secs_f64();
            let peak = clean.peak();
            records.push(BenchRecord {
                // Commas would break the CSV; filenames are the only
                // field not comma-free by construction.
                image: file_label(path).replace(',', "_"),
                model: model.describe(),
                constraint: constraint_label(params.constraint).to_string(),
                psnr_noisy: psnr(&noisy, &clean, peak).map_err(|e| e.to_string())?,
                psnr_step1: psnr(&pilot, &clean, peak).map_err(|e| e.to_string())?,
                psnr_step2: psnr(&second, &clean, peak).map_err(|e| e.to_string())?,
                seconds,
            });
        }
    }
    records.push(mean_record(&records));
    print!("{}", render_table(&records));
    let csv = render_csv(&records);
    match &args.csv {
        Some(path) => {
            std::fs::write(path, &csv).map_err(|e| format!("{}: {e}", path.display()))?
        }
        None => print!("\n{csv}"),
    }
    Ok(())
}

fn configure_threads(threads: Option<usize>) -> Result<(), String> {
    if let Some(n) = threads {
        if n == 0 {
            return Err("--threads must be at least 1".into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| format!("thread pool: {e}"))?;
    }
    Ok(())
}

/// Builds the pipeline parameters from the calibrated defaults plus any
/// explicit flag overrides. When all four geometry flags are present the
/// defaults table is not consulted at all, which is how models outside
/// its calibration range are configured.
fn resolve_params(model: &NoiseModel, args: &ParamArgs) -> Result<PipelineParams, String> {
    let family = args.family.into();
    let fully_explicit =
        args.patch1.is_some() && args.patch2.is_some() && args.k1.is_some() && args.k2.is_some();
    let mut params = if fully_explicit {
        PipelineParams {
            n1: 0, // all four overridden below
            n2: 0,
            k1: 0,
            k2: 0,
            kappa: 37,
            delta: 4,
            constraint: ConstraintKind::Linear,
            family,
            noisier_alpha: 0.0,
            scd_iters: EstimatorConfig::default().scd_iters,
            seed: 0,
        }
    } else {
        default_params_for_family(family, model)
            .map_err(|e| format!("{e}; pass --patch1/--patch2/--k1/--k2 explicitly"))?
    };
    if let Some(side) = args.patch1 {
        params.n1 = side * side;
    }
    if let Some(side) = args.patch2 {
        params.n2 = side * side;
    }
    if let Some(k) = args.k1 {
        params.k1 = k;
    }
    if let Some(k) = args.k2 {
        params.k2 = k;
    }
    if let Some(window) = args.window {
        params.kappa = window;
    }
    if let Some(stride) = args.stride {
        params.delta = stride;
    }
    if let Some(alpha) = args.alpha {
        params.noisier_alpha = alpha;
    }
    if let Some(sweeps) = args.scd_iters {
        params.scd_iters = sweeps;
    }
    params.constraint = args.constraint.into();
    params.seed = args.seed;
    params.validate().map_err(|e| e.to_string())?;
    Ok(params)
}

fn constraint_label(constraint: ConstraintKind) -> &'static str {
    match constraint {
        ConstraintKind::Linear => "linear",
        ConstraintKind::Affine => "affine",
        ConstraintKind::Conical => "conical",
        ConstraintKind::Convex => "convex",
    }
}

/// All PGM/PNG files in the directory, sorted by name for determinism.
fn image_paths(dir: &Path) -> Result<Vec<PathBuf>, String> {
    let entries = std::fs::read_dir(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| format!("{}: {e}", dir.display()))?.path();
        let matches = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("pgm") || e.eq_ignore_ascii_case("png"));
        if matches {
            paths.push(path);
        }
    }
    if paths.is_empty() {
        return Err(format!(
            "no PGM or PNG images found in {}",
            dir.display()
        ));
    }
    paths.sort();
    Ok(paths)
}

fn file_label(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// One benchmark row; the field order matches the CSV columns.
#[derive(Debug, Clone, PartialEq)]
struct BenchRecord {
    image: String,
    model: String,
    constraint: String,
    psnr_noisy: f64,
    psnr_step1: f64,
    psnr_step2: f64,
    seconds: f64,
}

const CSV_HEADER: &str = "image,model,constraint,psnr_noisy,psnr_step1,psnr_step2,seconds";

impl BenchRecord {
    /// Full-precision CSV line; `{}` on f64 round-trips through parse,
    /// including the "inf" sentinel for identical images.
    fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.image,
            self.model,
            self.constraint,
            self.psnr_noisy,
            self.psnr_step1,
            self.psnr_step2,
            self.seconds
        )
    }

    /// Inverse of `to_csv_line`; exists to pin the round-trip contract.
    #[cfg(test)]
    fn from_csv_line(line: &str) -> Result<BenchRecord, String> {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(format!("expected 7 CSV fields, got {}", fields.len()));
        }
        let number =
            |s: &str| s.parse::<f64>().map_err(|e| format!("bad number {s:?}: {e}"));
        Ok(BenchRecord {
            image: fields[0].to_string(),
            model: fields[1].to_string(),
            constraint: fields[2].to_string(),
            psnr_noisy: number(fields[3])?,
            psnr_step1: number(fields[4])?,
            psnr_step2: number(fields[5])?,
            seconds: number(fields[6])?,
        })
    }
}

fn mean_record(records: &[BenchRecord]) -> BenchRecord {
    let n = records.len() as f64;
    let mean = |f: fn(&BenchRecord) -> f64| records.iter().map(f).sum::<f64>() / n;
    BenchRecord {
        image: "mean".to_string(),
        model: "-".to_string(),
        constraint: "-".to_string(),
        psnr_noisy: mean(|r| r.psnr_noisy),
        psnr_step1: mean(|r| r.psnr_step1),
        psnr_step2: mean(|r| r.psnr_step2),
        seconds: mean(|r| r.seconds),
    }
}

fn render_csv(records: &[BenchRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for record in records {
        out.push_str(&record.to_csv_line());
        out.push('\n');
    }
    out
}

/// Human-oriented aligned table: text columns left-aligned, numbers
/// right-aligned and rounded to 2 decimals.
fn render_table(records: &[BenchRecord]) -> String {
    let headers = [
        "image",
        "model",
        "constraint",
        "psnr_noisy",
        "psnr_step1",
        "psnr_step2",
        "seconds",
    ];
    let rows: Vec<[String; 7]> = records
        .iter()
        .map(|r| {
            [
                r.image.clone(),
                r.model.clone(),
                r.constraint.clone(),
                format!("{:.2}", r.psnr_noisy),
                format!("{:.2}", r.psnr_step1),
                format!("{:.2}", r.psnr_step2),
                format!("{:.2}", r.seconds),
            ]
        })
        .collect();
    let mut widths: [usize; 7] = headers.map(str::len);
    for row in &rows {
        for (width, cell) in widths.iter_mut().zip(row) {
            *width = (*width).max(cell.len());
        }
    }
    let mut out = String::new();
    let push_row = |cells: [&str; 7], out: &mut String| {
        for (i, (cell, width)) in cells.iter().zip(widths).enumerate() {
            if i > 0 {
                out.push_str("  ");
            }
            if i < 3 {
                out.push_str(&format!("{cell:<width$}"));
            } else {
                out.push_str(&format!("{cell:>width$}"));
            }
        }
        // No trailing spaces after the last (left-padded) column.
        while out.ends_with(' ') {
            out.pop();
        }
        out.push('\n');
    };
    push_row(headers, &mut out);
    for row in &rows {
        let cells: [&str; 7] = std::array::from_fn(|i| row[i].as_str());
        push_row(cells, &mut out);
    }
    out
}
