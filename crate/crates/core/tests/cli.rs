use std::path::Path;
use std::process::{Command, Output};

use mocca::calibration::KSpaceStack;
use mocca::io::{self, MaskFile, Report};
use mocca::{ComplexImage, PatternKind, SamplingPattern};
use num_complex::Complex64;

fn mocca(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mocca")).current_dir(dir).args(args).output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = mocca(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

const SIMULATE: &[&str] = &[
    "simulate", "--n", "32", "--coils", "4", "--support-l", "3", "--seed", "7", "--pattern", "cols:2", "--acs-m", "8",
    "--noise", "0", "--out-kspace", "k.ksp", "--out-truth", "truth.pgm", "--out-mask", "m.msk",
];

#[test]
fn noiseless_pipeline_reports_infinite_psnr() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, SIMULATE);
    let cal = ok(d, &["calibrate", "--kspace", "k.ksp", "--acs-m", "8", "--support-l", "3", "--out-sens", "s.ksp"]);
    let cal = Report::parse(&cal).unwrap();
    assert_eq!(cal.get("num_singular"), Some("1"));
    ok(d, &[
        "reconstruct", "--kspace", "k.ksp", "--mask", "m.msk", "--sens", "s.ksp", "--beta", "0", "--out-image", "r.pgm",
        "--report", "r.txt",
    ]);
    let rec = Report::parse(&std::fs::read_to_string(d.join("r.txt")).unwrap()).unwrap();
    assert_eq!(rec.get("solver"), Some("direct"));
    assert_eq!(rec.get("invertible"), Some("true"));
    let metrics = Report::parse(&ok(d, &["metrics", "--reference", "truth.pgm", "--test", "r.pgm"])).unwrap();
    assert_eq!(metrics.get("psnr"), Some("inf"));
    assert_eq!(metrics.get("ssim").unwrap().parse::<f64>().unwrap(), 1.0);
}

#[test]
fn iterative_report_lists_residual_history() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, SIMULATE);
    ok(d, &["calibrate", "--kspace", "k.ksp", "--mask", "m.msk", "--acs-m", "8", "--support-l", "3", "--out-sens", "s.ksp"]);
    let text = ok(d, &[
        "reconstruct", "--kspace", "k.ksp", "--mask", "m.msk", "--sens", "s.ksp", "--solver", "iterative",
        "--fixed-iterations", "5", "--out-image", "r.ksp", "--out-complex", "c.ksp",
    ]);
    let rep = Report::parse(&text).unwrap();
    assert_eq!(rep.get("iterations"), Some("5"));
    let history: Vec<f64> = rep.get("residual_history").unwrap().split(' ').map(|v| v.parse().unwrap()).collect();
    assert_eq!(history.len(), 6);
    assert!(history.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9)));
    assert_eq!(io::load_stack(&d.join("c.ksp")).unwrap().len(), 1);
}

#[test]
fn metrics_of_identical_images() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, SIMULATE);
    let rep = Report::parse(&ok(d, &["metrics", "--reference", "truth.pgm", "--test", "truth.pgm", "--error-map", "e.pgm"])).unwrap();
    assert_eq!(rep.get("ssim"), Some("1e0"));
    assert_eq!(rep.get("psnr"), Some("inf"));
    assert_eq!(io::load_pgm(&d.join("e.pgm")).unwrap().max(), 0.0);
}

#[test]
fn missing_calibration_block_exits_with_format_code() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, SIMULATE);
    let out = mocca(d, &["calibrate", "--kspace", "k.ksp", "--acs-m", "12", "--support-l", "3", "--out-sens", "s.ksp"]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("\u{039b}_{M+L-1}"), "{err}");
}

#[test]
fn usage_and_format_errors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(mocca(d, &["simulate", "--bogus"]).status.code(), Some(2));
    assert_eq!(mocca(d, &["smooth", "--image", "x.pgm", "--out-image", "y.pgm"]).status.code(), Some(2));
    std::fs::write(d.join("junk.ksp"), b"not a stack").unwrap();
    let out = mocca(d, &["calibrate", "--kspace", "junk.ksp", "--out-sens", "s.ksp"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(mocca(d, &["metrics", "--reference", "nope.pgm", "--test", "nope.pgm"]).status.code(), Some(3));
}

#[test]
fn singular_groups_without_fallback_exit_with_numerical_code() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let n = 8;
    let one = ComplexImage::from_fn(n, |_| Complex64::new(1.0, 0.0));
    let data = ComplexImage::from_fn(n, |i| Complex64::new(1.0 + i.n1 as f64, 0.0));
    let stack = KSpaceStack::new(vec![data]).unwrap();
    io::save_stack(&d.join("k.ksp"), stack.coils()).unwrap();
    io::save_stack(&d.join("s.ksp"), &[one]).unwrap();
    let pattern = SamplingPattern::new(PatternKind::RowsCols(2, 2), n, 2).unwrap();
    io::save_mask(&d.join("m.msk"), &MaskFile::new(pattern, 1, 1).unwrap()).unwrap();
    let args = ["reconstruct", "--kspace", "k.ksp", "--mask", "m.msk", "--sens", "s.ksp", "--solver", "direct", "--beta", "0"];
    let mut strict = args.to_vec();
    strict.extend(["--no-fallback", "--out-image", "r.pgm"]);
    assert_eq!(mocca(d, &strict).status.code(), Some(4));
    let mut lenient = args.to_vec();
    lenient.extend(["--out-image", "r.pgm"]);
    let rep = Report::parse(&ok(d, &lenient)).unwrap();
    assert_eq!(rep.get("invertible"), Some("false"));
    assert_eq!(rep.get("singular_groups"), Some("16"));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut noisy = SIMULATE.to_vec();
    noisy[14] = "0.01";
    let mut outputs = Vec::new();
    for _ in 0..2 {
        ok(d, &noisy);
        ok(d, &["calibrate", "--kspace", "k.ksp", "--mask", "m.msk", "--acs-m", "8", "--support-l", "3", "--out-sens", "s.ksp", "--report", "c.txt"]);
        ok(d, &["reconstruct", "--kspace", "k.ksp", "--mask", "m.msk", "--sens", "s.ksp", "--out-image", "r.pgm", "--report", "r.txt"]);
        ok(d, &["smooth", "--image", "r.pgm", "--pattern", "cols:2", "--out-image", "sm.pgm"]);
        let files = ["k.ksp", "m.msk", "truth.pgm", "s.ksp", "c.txt", "r.pgm", "r.txt", "sm.pgm"];
        outputs.push(files.map(|f| std::fs::read(d.join(f)).unwrap()));
    }
    assert!(outputs[0] == outputs[1]);
}

#[test]
fn pipeline_config_paths_are_relative_to_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::create_dir(d.join("cfg")).unwrap();
    std::fs::write(
        d.join("cfg/run.toml"),
        "output_dir = \"out\"\n[simulate]\nn = 32\ncoils = 4\nsupport_l = 3\nacs_m = 8\nseed = 3\npattern = \"rows-cols:2,2\"\n[reconstruct]\nbeta = 0.0\n",
    )
    .unwrap();
    ok(d, &["pipeline", "--config", "cfg/run.toml"]);
    let metrics = Report::parse(&std::fs::read_to_string(d.join("cfg/out/metrics.txt")).unwrap()).unwrap();
    let err: f64 = metrics.get("max_rel_err").unwrap().parse().unwrap();
    assert!(err < 1e-8, "{err}");
    assert!(d.join("cfg/out/image.pgm").exists());
    assert!(!d.join("cfg/out/smoothed.pgm").exists());

    std::fs::write(d.join("cfg/bad.toml"), "output_dir = \"out\"\n").unwrap();
    assert_eq!(mocca(d, &["pipeline", "--config", "cfg/bad.toml"]).status.code(), Some(2));
}
