//! Command-line surface: `simulate`, `calibrate`, `reconstruct`, `smooth`,
//! `metrics` and `pipeline`.
//!
//! Exit codes: 0 success, 2 usage error, 3 format error, 4 numerical failure.

mod pipeline;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::calibration::{calibrate, Calibration, CalibrationConfig, KSpaceStack, SensitivitySet, SingularCount};
use crate::error::{MoccaError, Result};
use crate::image::RealImage;
use crate::io::{self, MaskFile, Report};
use crate::metrics::{QualityReport, DEFAULT_ERROR_CLIP};
use crate::phantom::{make_pattern, MagnetizationKind, Phantom, PhantomSpec};
use crate::reconstruct::{finalize_sos, invertibility_diagnostic, solve, InvertibilityReport, ReconConfig, Reconstruction, SolverKind};
use crate::sampling::{PatternKind, SamplingPattern};
use crate::smoothing::{lambda_preset, smooth_step, PresetTable, SmoothingConfig};

pub use pipeline::{run_pipeline, PipelineConfig};

#[derive(Parser, Debug)]
#[command(name = "mocca", version, about = "Parallel MRI reconstruction with model-based coil calibration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a phantom, a sampling mask and masked k-space data.
    Simulate(SimulateArgs),
    /// Estimate coil sensitivities from the calibration block.
    Calibrate(CalibrateArgs),
    /// Reconstruct the image for given sensitivities.
    Reconstruct(ReconstructArgs),
    /// Apply nonlinear smoothing to a magnitude image.
    Smooth(SmoothArgs),
    /// Compare an image against a reference.
    Metrics(MetricsArgs),
    /// Run every stage from one TOML configuration.
    Pipeline(PipelineArgs),
}

#[derive(Args, Clone, Debug)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 64)]
    pub n: usize,
    #[arg(long, default_value_t = 8)]
    pub coils: usize,
    #[arg(long, default_value_t = 5)]
    pub support_l: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// `full`, `cols:S` or `rows-cols:A,B`.
    #[arg(long, default_value = "cols:2")]
    pub pattern: PatternKind,
    #[arg(long, default_value_t = 20)]
    pub acs_m: usize,
    /// Standard deviation of complex Gaussian k-space noise.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// `dense`, `piecewise` or `sparse:F`.
    #[arg(long, default_value = "dense", value_parser = parse_magnetization)]
    pub magnetization: MagnetizationKind,
    #[arg(long)]
    pub out_kspace: PathBuf,
    /// `.pgm` for a graymap, anything else for a one-coil stack.
    #[arg(long)]
    pub out_truth: PathBuf,
    #[arg(long)]
    pub out_mask: Option<PathBuf>,
}

#[derive(Args, Clone, Debug)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub kspace: PathBuf,
    /// Without a mask the acquired set is taken to be the nonzero samples.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    pub acs_m: usize,
    #[arg(long, default_value_t = 5)]
    pub support_l: usize,
    /// `auto` or a positive count.
    #[arg(long, default_value = "auto", value_parser = parse_singular)]
    pub num_singular: SingularCount,
    #[arg(long, default_value_t = 1e-8)]
    pub d_threshold: f64,
    #[arg(long)]
    pub out_sens: PathBuf,
    /// Written to standard output when absent.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Clone, Debug)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub kspace: PathBuf,
    #[arg(long)]
    pub mask: PathBuf,
    #[arg(long)]
    pub sens: PathBuf,
    #[arg(long, default_value = "auto")]
    pub solver: SolverKind,
    #[arg(long, default_value_t = 1e-3)]
    pub beta: f64,
    #[arg(long, default_value_t = 200)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    /// Run exactly this many iterations.
    #[arg(long)]
    pub fixed_iterations: Option<usize>,
    /// Fail on singular group systems instead of using a pseudoinverse.
    #[arg(long)]
    pub no_fallback: bool,
    #[arg(long)]
    pub out_image: PathBuf,
    /// Complex solution before the phase is moved into the sensitivities.
    #[arg(long)]
    pub out_complex: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Clone, Debug)]
pub struct SmoothArgs {
    #[arg(long)]
    pub image: PathBuf,
    /// Overrides the preset looked up from `--pattern`.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub pattern: Option<PatternKind>,
    /// `brain8` or `brain32`.
    #[arg(long, default_value = "brain8", value_parser = parse_table)]
    pub table: PresetTable,
    #[arg(long, default_value_t = 1)]
    pub steps: usize,
    #[arg(long)]
    pub out_image: PathBuf,
}

#[derive(Args, Clone, Debug)]
pub struct MetricsArgs {
    #[arg(long)]
    pub reference: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub error_map: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_ERROR_CLIP)]
    pub clip: f64,
}

#[derive(Args, Clone, Debug)]
pub struct PipelineArgs {
    #[arg(long)]
    pub config: PathBuf,
}

fn parse_magnetization(s: &str) -> std::result::Result<MagnetizationKind, String> {
    match s {
        "dense" => Ok(MagnetizationKind::DenseRandom),
        "piecewise" => Ok(MagnetizationKind::Piecewise),
        _ => s
            .strip_prefix("sparse:")
            .and_then(|f| f.parse().ok())
            .filter(|f: &f64| *f > 0.0 && *f <= 1.0)
            .map(MagnetizationKind::Sparse)
            .ok_or_else(|| format!("expected dense, piecewise or sparse:F with 0 < F <= 1, got {s:?}")),
    }
}

fn parse_singular(s: &str) -> std::result::Result<SingularCount, String> {
    if s == "auto" {
        return Ok(SingularCount::Auto);
    }
    match s.parse::<usize>() {
        Ok(k) if k > 0 => Ok(SingularCount::Fixed(k)),
        _ => Err(format!("expected auto or a positive count, got {s:?}")),
    }
}

fn parse_table(s: &str) -> std::result::Result<PresetTable, String> {
    match s {
        "brain8" => Ok(PresetTable::Brain8),
        "brain32" => Ok(PresetTable::Brain32),
        _ => Err(format!("expected brain8 or brain32, got {s:?}")),
    }
}

/// Process exit code for a failed command.
pub fn exit_code(err: &MoccaError) -> i32 {
    match err {
        MoccaError::InvalidArgument(_) | MoccaError::UnsupportedPattern(_) => 2,
        MoccaError::Format(_)
        | MoccaError::MissingAcs { .. }
        | MoccaError::DimensionMismatch(_)
        | MoccaError::Io(_) => 3,
        MoccaError::Svd(_)
        | MoccaError::ZeroCombination
        | MoccaError::SingularGroup { .. }
        | MoccaError::ZeroImage
        | MoccaError::Degenerate(_)
        | MoccaError::RetriesExhausted { .. } => 4,
    }
}

/// Parses `args` (program name first), runs the command and returns the exit
/// code. Diagnostics go to standard error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => simulate(&a),
        Command::Calibrate(a) => calibrate_cmd(&a),
        Command::Reconstruct(a) => reconstruct_cmd(&a),
        Command::Smooth(a) => smooth_cmd(&a),
        Command::Metrics(a) => metrics_cmd(&a),
        Command::Pipeline(a) => PipelineConfig::load(&a.config).and_then(|(cfg, base)| run_pipeline(&cfg, &base)),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn is_pgm(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm"))
}

/// Writes a graymap for `.pgm` paths and a one-coil stack otherwise.
pub fn save_image(path: &Path, image: &RealImage) -> Result<()> {
    if is_pgm(path) {
        io::save_pgm(path, image)
    } else {
        io::save_stack(path, &[image.to_complex()])
    }
}

/// Reads a graymap or the modulus of a one-coil stack.
pub fn load_image(path: &Path) -> Result<RealImage> {
    let bytes = std::fs::read(path)?;
    if bytes.starts_with(b"P5") {
        return io::read_pgm(&bytes);
    }
    let coils = io::read_stack(&bytes)?;
    if coils.len() != 1 {
        return Err(MoccaError::Format(format!("expected a one-coil image stack, found {} coils", coils.len())));
    }
    Ok(coils[0].abs())
}

fn emit(report: &Report, path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) => report.save(p),
        None => {
            print!("{}", report.render());
            Ok(())
        }
    }
}

/// Masked data, mask and ground truth for a phantom.
pub struct Simulation {
    pub kspace: KSpaceStack,
    pub mask: MaskFile,
    pub truth: RealImage,
}

pub fn simulate_data(a: &SimulateArgs) -> Result<Simulation> {
    if a.pattern == PatternKind::Explicit {
        return Err(MoccaError::InvalidArgument("simulate needs a lattice pattern".into()));
    }
    let spec = PhantomSpec { magnetization: a.magnetization, noise: a.noise, ..PhantomSpec::new(a.n, a.coils, a.support_l, a.seed) };
    let pattern = make_pattern(a.pattern, a.n, a.acs_m, a.support_l)?;
    let phantom = Phantom::generate(&spec)?;
    let kspace = phantom.kspace.masked(&pattern)?;
    Ok(Simulation { kspace, mask: MaskFile::new(pattern, a.acs_m, a.support_l)?, truth: phantom.truth })
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    let sim = simulate_data(a)?;
    io::save_stack(&a.out_kspace, sim.kspace.coils())?;
    save_image(&a.out_truth, &sim.truth)?;
    if let Some(p) = &a.out_mask {
        io::save_mask(p, &sim.mask)?;
    }
    log::info!("simulated {} coils at N={} with pattern {}", a.coils, a.n, a.pattern);
    Ok(())
}

pub fn calibration_report(cal: &Calibration, cfg: &CalibrationConfig, stack: &KSpaceStack) -> Report {
    let mut r = Report::new();
    r.push("n", stack.n())
        .push("coils", stack.num_coils())
        .push("acs_m", cfg.equations)
        .push("support_l", cfg.support)
        .push("acs_size", cfg.acs_size())
        .push("num_singular", cal.num_singular)
        .push_f64("sigma_min_ratio", cal.smallest_ratio())
        .push_f64("gap_ratio", cal.gap_ratio())
        .push_f64s("singular_values", cal.spectrum.iter().copied());
    r
}

fn calibrate_cmd(a: &CalibrateArgs) -> Result<()> {
    let stack = io::load_kspace(&a.kspace)?;
    let cfg = CalibrationConfig {
        support: a.support_l,
        equations: a.acs_m,
        singular_vectors: a.num_singular,
        threshold: a.d_threshold,
        alpha: None,
    };
    let pattern = match &a.mask {
        Some(p) => io::load_mask(p)?.pattern,
        None => SamplingPattern::explicit(stack.n(), stack.nonzero_mask(), 0)?,
    };
    let cal = calibrate(&stack, &cfg, Some(&pattern))?;
    io::save_stack(&a.out_sens, cal.sensitivities.normalized())?;
    emit(&calibration_report(&cal, &cfg, &stack), a.report.as_deref())
}

pub fn load_sensitivities(path: &Path) -> Result<SensitivitySet> {
    SensitivitySet::from_normalized(io::load_stack(path)?).map_err(|e| MoccaError::Format(e.to_string()))
}

pub fn reconstruction_report(rec: &Reconstruction, cfg: &ReconConfig, pattern: &SamplingPattern, sens: &SensitivitySet) -> Report {
    let mut r = Report::new();
    r.push("solver", rec.solver).push_f64("beta", cfg.beta).push("pattern", pattern.kind());
    if let Some(it) = &rec.iterative {
        r.push("iterations", it.iterations)
            .push("converged", it.converged)
            .push_f64("final_residual", it.final_residual())
            .push_f64s("residual_history", it.history.iter().map(|h| h.residual))
            .push_f64s("step_history", it.history.iter().map(|h| h.step));
    }
    if let Some(d) = &rec.direct {
        r.push("group_size", d.group_size).push("singular_groups", d.singular_groups);
        match invertibility_diagnostic(sens, pattern) {
            InvertibilityReport::Groups(g) => {
                r.push("diagnostic_groups", g.groups)
                    .push_f64("diagnostic_min_singular", g.min_singular)
                    .push("diagnostic_argmin", format!("{},{}", g.argmin.n1, g.argmin.n2))
                    .push_f64("diagnostic_max_singular", g.max_singular)
                    .push("diagnostic_flagged", g.flagged)
                    .push("invertible", g.invertible());
            }
            InvertibilityReport::Unavailable(why) => {
                r.push("diagnostic", why);
            }
        }
    }
    r
}

/// Solves, moves the phase into the sensitivities and normalizes.
pub fn reconstruct_image(
    stack: &KSpaceStack,
    pattern: &SamplingPattern,
    sens: &SensitivitySet,
    cfg: &ReconConfig,
) -> Result<(Reconstruction, RealImage, Report)> {
    let rec = solve(stack, pattern, sens, cfg)?;
    if let Some(it) = &rec.iterative {
        if !it.converged {
            log::warn!("iteration stopped after {} steps without reaching tol={:e}", it.iterations, cfg.tol);
        }
    }
    let (image, _) = finalize_sos(&rec.image, sens)?;
    let report = reconstruction_report(&rec, cfg, pattern, sens);
    Ok((rec, image, report))
}

fn reconstruct_cmd(a: &ReconstructArgs) -> Result<()> {
    let stack = io::load_kspace(&a.kspace)?;
    let pattern = io::load_mask(&a.mask)?.pattern;
    let sens = load_sensitivities(&a.sens)?;
    let cfg = ReconConfig {
        beta: a.beta,
        tol: a.tol,
        max_iter: a.max_iter,
        fixed_iterations: a.fixed_iterations,
        solver: a.solver,
        pseudo_inverse_fallback: !a.no_fallback,
    };
    let (rec, image, report) = reconstruct_image(&stack, &pattern, &sens, &cfg)?;
    save_image(&a.out_image, &image)?;
    if let Some(p) = &a.out_complex {
        io::save_stack(p, std::slice::from_ref(&rec.image))?;
    }
    emit(&report, a.report.as_deref())
}

/// Smoothing parameter from an explicit value or the preset table.
pub fn resolve_lambda(lambda: Option<f64>, pattern: Option<PatternKind>, table: PresetTable) -> Result<f64> {
    match (lambda, pattern) {
        (Some(l), _) => Ok(l),
        (None, Some(kind)) => lambda_preset(kind, table)
            .ok_or_else(|| MoccaError::InvalidArgument(format!("no preset lambda for pattern {kind}; pass --lambda"))),
        (None, None) => Err(MoccaError::InvalidArgument("pass --lambda or --pattern".into())),
    }
}

/// Normalizes to unit 2-norm, the scale the presets are tuned for, then smooths.
pub fn smooth_image(image: &RealImage, lambda: f64, steps: usize) -> Result<RealImage> {
    let cfg = SmoothingConfig { steps, ..SmoothingConfig::new(lambda) };
    smooth_step(&image.normalized()?, &cfg)
}

fn smooth_cmd(a: &SmoothArgs) -> Result<()> {
    let lambda = resolve_lambda(a.lambda, a.pattern, a.table)?;
    let out = smooth_image(&load_image(&a.image)?, lambda, a.steps)?;
    save_image(&a.out_image, &out)
}

pub fn metrics_report(q: &QualityReport) -> Report {
    let mut r = Report::new();
    r.push_f64("psnr", q.psnr).push_f64("ssim", q.ssim).push_f64("max_rel_err", q.max_rel_err);
    r
}

fn metrics_cmd(a: &MetricsArgs) -> Result<()> {
    let reference = load_image(&a.reference)?;
    let test = load_image(&a.test)?;
    let q = QualityReport::compute(&reference, &test, a.clip)?;
    if let Some(p) = &a.error_map {
        save_image(p, &q.error_map)?;
    }
    emit(&metrics_report(&q), a.report.as_deref())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parsers() {
        assert_eq!(parse_singular("auto"), Ok(SingularCount::Auto));
        assert_eq!(parse_singular("3"), Ok(SingularCount::Fixed(3)));
        assert!(parse_singular("0").is_err());
        assert_eq!(parse_magnetization("sparse:0.5"), Ok(MagnetizationKind::Sparse(0.5)));
        assert!(parse_magnetization("sparse:2").is_err());
        assert_eq!(parse_table("brain32"), Ok(PresetTable::Brain32));
    }

    #[test]
    fn usage_errors_exit_with_two() {
        assert_eq!(run(["mocca", "frobnicate"]), 2);
        assert_eq!(run(["mocca", "simulate", "--pattern", "diagonal:3"]), 2);
        assert_eq!(run(["mocca", "--help"]), 0);
    }

    #[test]
    fn lambda_resolution() {
        assert_eq!(resolve_lambda(Some(0.1), None, PresetTable::Brain8).unwrap(), 0.1);
        assert_eq!(resolve_lambda(None, Some(PatternKind::Columns(2)), PresetTable::Brain8).unwrap(), 0.00045);
        assert!(resolve_lambda(None, Some(PatternKind::Full), PresetTable::Brain8).is_err());
        assert!(resolve_lambda(None, None, PresetTable::Brain8).is_err());
    }
}
