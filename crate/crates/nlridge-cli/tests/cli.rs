//! End-to-end tests driving the compiled binary.

use ndarray::Array2;
use nlridge::{read_image, write_image, BitDepth, Image};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nlridge"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn bundled_image() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../nlridge/tests/data/camera256.pgm")
}

/// Small textured test image so block matching has structure to find.
fn write_textured(path: &Path, height: usize, width: usize) {
    let data = Array2::from_shape_fn((height, width), |(i, j)| {
        125.0 + 80.0 * (0.35 * i as f64).sin() * (0.22 * j as f64).cos()
    });
    write_image(&Image::new(data, BitDepth::Eight), path).expect("test image written");
}

/// Flags for a fast run on tiny images, bypassing the calibrated table.
const SMALL_GEOMETRY: &[&str] = &[
    "--patch1", "3", "--patch2", "3", "--k1", "6", "--k2", "8", "--window", "11", "--stride", "3",
];

#[test]
fn denoise_smoke_writes_a_valid_png() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out.png");
    let output = run(&[
        "denoise",
        "--sigma",
        "15",
        bundled_image().to_str().unwrap(),
        out.to_str().unwrap(),
    ]);
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    let image = read_image(&out).expect("output is a readable PNG");
    assert_eq!((image.height(), image.width()), (256, 256));
    assert!(image.data().iter().all(|v| v.is_finite()));
}

#[test]
fn add_noise_is_deterministic_for_a_fixed_seed() {
    let dir = tempfile::tempdir().unwrap();
    let clean = dir.path().join("clean.pgm");
    write_textured(&clean, 24, 24);
    let out1 = dir.path().join("noisy1.pgm");
    let out2 = dir.path().join("noisy2.pgm");
    for out in [&out1, &out2] {
        let output = run(&[
            "add-noise",
            "--poisson",
            "--seed",
            "7",
            clean.to_str().unwrap(),
            out.to_str().unwrap(),
        ]);
        assert!(
            output.status.success(),
            "stderr: {}",
            String::from_utf8_lossy(&output.stderr)
        );
    }
    let bytes1 = std::fs::read(&out1).unwrap();
    let bytes2 = std::fs::read(&out2).unwrap();
    assert_eq!(bytes1, bytes2, "same seed must produce identical files");
}

#[test]
fn denoise_is_deterministic_with_one_thread() {
    let dir = tempfile::tempdir().unwrap();
    let noisy = dir.path().join("noisy.pgm");
    write_textured(&noisy, 30, 26);
    let mut outputs = Vec::new();
    for name in ["a.pgm", "b.pgm"] {
        let out = dir.path().join(name);
        let pilot = dir.path().join(format!("pilot-{name}"));
        let mut args = vec![
            "denoise",
            "--sigma",
            "20",
            "--constraint",
            "convex",
            "--scd-iters",
            "30",
            "--seed",
            "5",
            "--threads",
            "1",
            "--keep-step1",
            pilot.to_str().unwrap(),
        ];
        args.extend_from_slice(SMALL_GEOMETRY);
        args.push(noisy.to_str().unwrap());
        args.push(out.to_str().unwrap());
        let output = bin().args(&args).output().expect("binary runs");
        assert!(
            output.status.success(),
            "stderr: {}",
            String::from_utf8_lossy(&output.stderr)
        );
        outputs.push((std::fs::read(&out).unwrap(), std::fs::read(&pilot).unwrap()));
    }
    assert_eq!(outputs[0].0, outputs[1].0, "final estimates differ");
    assert_eq!(outputs[0].1, outputs[1].1, "pilot estimates differ");
}

#[test]
fn bench_emits_one_csv_row_per_image_and_level_plus_mean() {
    let dir = tempfile::tempdir().unwrap();
    let clean_dir = dir.path().join("clean");
    std::fs::create_dir(&clean_dir).unwrap();
    write_textured(&clean_dir.join("a.pgm"), 24, 24);
    write_textured(&clean_dir.join("b.pgm"), 24, 24);
    // A decoy the walker must skip.
    std::fs::write(clean_dir.join("notes.txt"), "not an image").unwrap();
    let csv_path = dir.path().join("report.csv");
    let mut args = vec![
        "bench",
        "--clean",
        clean_dir.to_str().unwrap(),
        "--sigma",
        "15,25",
        "--constraint",
        "affine",
        "--seed",
        "3",
        "--csv",
        csv_path.to_str().unwrap(),
    ];
    args.extend_from_slice(SMALL_GEOMETRY);
    let output = bin().args(&args).output().expect("binary runs");
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );

    // Aligned text table on stdout: header + 4 rows + mean.
    let stdout = String::from_utf8_lossy(&output.stdout);
    let table: Vec<&str> = stdout.lines().collect();
    assert_eq!(table.len(), 6, "table: {stdout}");
    assert!(table[0].starts_with("image"));
    assert!(table[5].starts_with("mean"));

    // CSV report: header + one row per (image, sigma) + mean row.
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "image,model,constraint,psnr_noisy,psnr_step1,psnr_step2,seconds"
    );
    assert_eq!(lines.len(), 6, "csv: {csv}");
    for line in &lines[1..] {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 7, "line: {line}");
        for field in &fields[3..] {
            field.parse::<f64>().expect("numeric CSV field");
        }
    }
    assert!(lines[1].starts_with("a.pgm,gaussian(sigma=15),affine,"));
    assert!(lines[2].starts_with("a.pgm,gaussian(sigma=25),affine,"));
    assert!(lines[3].starts_with("b.pgm,gaussian(sigma=15),affine,"));
    assert!(lines[5].starts_with("mean,-,-,"));
}

#[test]
fn errors_exit_nonzero_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.pgm");
    write_textured(&input, 24, 24);
    let out = dir.path().join("out.pgm");

    // Invalid noise level.
    let output = run(&[
        "denoise",
        "--sigma",
        "0",
        input.to_str().unwrap(),
        out.to_str().unwrap(),
    ]);
    assert!(!output.status.success());
    assert!(String::from_utf8_lossy(&output.stderr).contains("error:"));

    // Models outside the calibrated table need explicit geometry.
    let output = run(&[
        "denoise",
        "--poisson",
        input.to_str().unwrap(),
        out.to_str().unwrap(),
    ]);
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr).into_owned();
    assert!(stderr.contains("--patch1"), "stderr: {stderr}");

    // Missing input file.
    let output = run(&["add-noise", "--sigma", "10", "missing.pgm", "x.pgm"]);
    assert!(!output.status.success());
    assert!(String::from_utf8_lossy(&output.stderr).contains("error:"));

    // Mutually exclusive noise flags are a usage error.
    let output = run(&[
        "add-noise",
        "--sigma",
        "10",
        "--poisson",
        input.to_str().unwrap(),
        out.to_str().unwrap(),
    ]);
    assert!(!output.status.success());
}
