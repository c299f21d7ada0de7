//! Declarative end-to-end runs. Relative paths in the configuration are
//! resolved against the directory holding the configuration file.
//!
//! ```toml
//! output_dir = "run"
//!
//! [simulate]
//! n = 32
//! coils = 4
//! support_l = 3
//! acs_m = 8
//! seed = 7
//! pattern = "cols:2"
//!
//! [reconstruct]
//! beta = 0.001
//!
//! [smooth]
//! lambda = 0.0005
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::{
    calibration_report, load_image, metrics_report, parse_magnetization, parse_singular, parse_table,
    reconstruct_image, resolve_lambda, save_image, simulate_data, smooth_image, SimulateArgs, Simulation,
};
use crate::calibration::{calibrate, CalibrationConfig};
use crate::error::{MoccaError, Result};
use crate::image::RealImage;
use crate::io::{self, Report};
use crate::metrics::{QualityReport, DEFAULT_ERROR_CLIP};
use crate::reconstruct::{ReconConfig, SolverKind};
use crate::sampling::PatternKind;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub output_dir: PathBuf,
    /// Generate the data. Exactly one of `simulate` and `input` is required.
    pub simulate: Option<SimulateSection>,
    /// Use existing files.
    pub input: Option<InputSection>,
    #[serde(default)]
    pub calibrate: CalibrateSection,
    #[serde(default)]
    pub reconstruct: ReconstructSection,
    pub smooth: Option<SmoothSection>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub n: usize,
    pub coils: usize,
    pub support_l: usize,
    pub acs_m: usize,
    pub seed: u64,
    pub pattern: String,
    #[serde(default)]
    pub noise: f64,
    #[serde(default = "default_magnetization")]
    pub magnetization: String,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputSection {
    pub kspace: PathBuf,
    pub mask: PathBuf,
    pub reference: Option<PathBuf>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrateSection {
    pub num_singular: String,
    pub d_threshold: f64,
}

impl Default for CalibrateSection {
    fn default() -> Self {
        Self { num_singular: "auto".into(), d_threshold: 1e-8 }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReconstructSection {
    pub solver: String,
    pub beta: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub fixed_iterations: Option<usize>,
    pub pseudo_inverse_fallback: bool,
}

impl Default for ReconstructSection {
    fn default() -> Self {
        let d = ReconConfig::default();
        Self {
            solver: d.solver.to_string(),
            beta: d.beta,
            tol: d.tol,
            max_iter: d.max_iter,
            fixed_iterations: d.fixed_iterations,
            pseudo_inverse_fallback: d.pseudo_inverse_fallback,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothSection {
    /// Preset for the sampling pattern when absent.
    pub lambda: Option<f64>,
    #[serde(default = "one")]
    pub steps: usize,
    #[serde(default = "default_table")]
    pub table: String,
}

fn default_magnetization() -> String {
    "dense".into()
}

fn default_table() -> String {
    "brain8".into()
}

fn one() -> usize {
    1
}

fn usage(msg: String) -> MoccaError {
    MoccaError::InvalidArgument(msg)
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| MoccaError::Format(format!("pipeline config: {e}")))
    }

    /// Reads the file and returns the configuration with its directory.
    pub fn load(path: &Path) -> Result<(Self, PathBuf)> {
        let cfg = Self::parse(&std::fs::read_to_string(path)?)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((cfg, base))
    }
}

fn quality(report: &mut Report, prefix: &str, reference: &RealImage, test: &RealImage) -> Result<QualityReport> {
    let q = QualityReport::compute(reference, test, DEFAULT_ERROR_CLIP)?;
    for (k, v) in metrics_report(&q).entries() {
        report.push(format!("{prefix}{k}"), v);
    }
    Ok(q)
}

/// Runs every configured stage and writes the results to `output_dir`.
pub fn run_pipeline(cfg: &PipelineConfig, base: &Path) -> Result<()> {
    let out = base.join(&cfg.output_dir);
    std::fs::create_dir_all(&out)?;

    let (stack, mask, truth) = match (&cfg.simulate, &cfg.input) {
        (Some(s), None) => {
            let args = SimulateArgs {
                n: s.n,
                coils: s.coils,
                support_l: s.support_l,
                seed: s.seed,
                pattern: s.pattern.parse()?,
                acs_m: s.acs_m,
                noise: s.noise,
                magnetization: parse_magnetization(&s.magnetization).map_err(usage)?,
                out_kspace: out.join("kspace.ksp"),
                out_truth: out.join("truth.pgm"),
                out_mask: Some(out.join("mask.msk")),
            };
            let Simulation { kspace, mask, truth } = simulate_data(&args)?;
            io::save_stack(&args.out_kspace, kspace.coils())?;
            io::save_mask(&out.join("mask.msk"), &mask)?;
            save_image(&args.out_truth, &truth)?;
            save_image(&out.join("truth.ksp"), &truth)?;
            (kspace, mask, Some(truth))
        }
        (None, Some(i)) => {
            let stack = io::load_kspace(&base.join(&i.kspace))?;
            let mask = io::load_mask(&base.join(&i.mask))?;
            let truth = i.reference.as_ref().map(|r| load_image(&base.join(r))).transpose()?;
            (stack, mask, truth)
        }
        _ => return Err(usage("pipeline config needs exactly one of [simulate] and [input]".into())),
    };

    let cal_cfg = CalibrationConfig {
        support: mask.support,
        equations: mask.equations,
        singular_vectors: parse_singular(&cfg.calibrate.num_singular).map_err(usage)?,
        threshold: cfg.calibrate.d_threshold,
        alpha: None,
    };
    let cal = calibrate(&stack, &cal_cfg, Some(&mask.pattern))?;
    io::save_stack(&out.join("sens.ksp"), cal.sensitivities.normalized())?;
    calibration_report(&cal, &cal_cfg, &stack).save(&out.join("calibrate.txt"))?;

    let r = &cfg.reconstruct;
    let rec_cfg = ReconConfig {
        beta: r.beta,
        tol: r.tol,
        max_iter: r.max_iter,
        fixed_iterations: r.fixed_iterations,
        solver: r.solver.parse::<SolverKind>()?,
        pseudo_inverse_fallback: r.pseudo_inverse_fallback,
    };
    let (rec, image, report) = reconstruct_image(&stack, &mask.pattern, &cal.sensitivities, &rec_cfg)?;
    report.save(&out.join("reconstruct.txt"))?;
    io::save_stack(&out.join("image_complex.ksp"), std::slice::from_ref(&rec.image))?;
    save_image(&out.join("image.pgm"), &image)?;
    save_image(&out.join("image.ksp"), &image)?;

    let smoothed = match &cfg.smooth {
        Some(s) => {
            let kind = Some(mask.pattern.kind()).filter(|k| *k != PatternKind::Explicit);
            let lambda = resolve_lambda(s.lambda, kind, parse_table(&s.table).map_err(usage)?)?;
            let sm = smooth_image(&image, lambda, s.steps)?;
            save_image(&out.join("smoothed.pgm"), &sm)?;
            save_image(&out.join("smoothed.ksp"), &sm)?;
            Some(sm)
        }
        None => None,
    };

    if let Some(truth) = &truth {
        let mut report = Report::new();
        let q = quality(&mut report, "", truth, &image)?;
        save_image(&out.join("error_map.pgm"), &q.error_map)?;
        if let Some(sm) = &smoothed {
            quality(&mut report, "smoothed_", truth, sm)?;
        }
        report.save(&out.join("metrics.txt"))?;
    }
    log::info!("pipeline outputs written to {}", out.display());
    Ok(())
}
