use std::path::Path;
use std::process::{Command, Output};

fn spda(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spda"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn spda")
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn make_test_image_is_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a.pgm", "b.pgm"] {
        ok(&spda(dir.path(), &["make-test-image", "--kind", "ridges", "--size", "64", "--output", name]));
    }
    let a = std::fs::read(dir.path().join("a.pgm")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("b.pgm")).unwrap());
    let img = spda::io::read_image(dir.path().join("a.pgm")).unwrap();
    assert_eq!(img.dims(), (64, 64));
    assert!(img.distinct_levels() <= 8);

    ok(&spda(dir.path(), &["make-test-image", "--kind", "constant", "--size", "16", "--output", "c.txt"]));
    let c = spda::io::read_image(dir.path().join("c.txt")).unwrap();
    assert_eq!(c.distinct_levels(), 1);
    assert!(!spda(dir.path(), &["make-test-image", "--size", "8", "--output", "x.pgm"]).status.success());
}

#[test]
fn add_noise_writes_sidecar_and_repeats() {
    let dir = tempfile::tempdir().unwrap();
    ok(&spda(dir.path(), &["make-test-image", "--kind", "flag-like", "--size", "32", "--output", "clean.pgm"]));
    for out in ["n1.pgm", "n2.pgm"] {
        ok(&spda(dir.path(), &["add-noise", "--input", "clean.pgm", "--peak", "1", "--seed", "4", "--output", out]));
    }
    let n1 = std::fs::read(dir.path().join("n1.pgm")).unwrap();
    assert_eq!(n1, std::fs::read(dir.path().join("n2.pgm")).unwrap());
    let noisy = spda::io::read_image(dir.path().join("n1.pgm")).unwrap();
    assert!(noisy.pixels().iter().all(|v| v.fract() == 0.0));
    assert!(noisy.max() <= 10.0);
    let clean = spda::io::read_image(dir.path().join("n1.pgm.clean")).unwrap();
    assert!((clean.max() - 1.0).abs() < 1e-12);

    let bad = spda(dir.path(), &["add-noise", "--input", "clean.pgm", "--peak", "0", "--output", "x.pgm"]);
    assert!(!bad.status.success());
    assert!(bad.stdout.is_empty());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("peak"));
}

#[test]
fn parse_errors_name_file_and_line() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.txt"), "2 2\n1 2\n3 x\n").unwrap();
    let out = spda(dir.path(), &["psnr", "--reference", "bad.txt", "--estimate", "bad.txt"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.txt") && err.contains('3'), "{err}");
}

#[test]
fn denoise_and_psnr() {
    let dir = tempfile::tempdir().unwrap();
    ok(&spda(dir.path(), &["make-test-image", "--kind", "ridges", "--size", "24", "--output", "clean.pgm"]));
    ok(&spda(dir.path(), &["add-noise", "--input", "clean.pgm", "--peak", "4", "--seed", "1", "--output", "noisy.pgm"]));

    let out = spda(
        dir.path(),
        &["denoise", "--input", "noisy.pgm", "--method", "anscombe-identity", "--output", "ai.txt"],
    );
    ok(&out);
    let noisy = spda::io::read_image(dir.path().join("noisy.pgm")).unwrap();
    let ai = spda::io::read_image(dir.path().join("ai.txt")).unwrap();
    for (a, b) in ai.pixels().iter().zip(noisy.pixels().iter()) {
        assert!((a - b).abs() < 1e-12);
    }

    std::fs::write(
        dir.path().join("cfg.json"),
        r#"{"patch_side": 4, "group_size": 6, "rounds": 1, "inner_iters": 1, "kernel_side": 3}"#,
    )
    .unwrap();
    let out = spda(
        dir.path(),
        &[
            "denoise", "--input", "noisy.pgm", "--config", "cfg.json", "--output", "d.txt", "--reference",
            "noisy.pgm.clean",
        ],
    );
    let report: serde_json::Value = serde_json::from_str(&ok(&out)).unwrap();
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
    let p = report["psnr_db"].as_f64().unwrap();
    let shown = ok(&spda(dir.path(), &["psnr", "--reference", "noisy.pgm.clean", "--estimate", "d.txt"]));
    assert!((shown.trim().parse::<f64>().unwrap() - p).abs() < 1e-4);

    // dictionary with the wrong patch size
    let d5 = spda::learning::init_dictionary_dct(5).unwrap();
    spda::io::write_dictionary(dir.path().join("d5.dict"), &d5).unwrap();
    let out = spda(
        dir.path(),
        &["denoise", "--input", "noisy.pgm", "--config", "cfg.json", "--dict", "d5.dict", "--output", "e.txt"],
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("pixels"));
}

#[test]
fn train_dict_writes_loadable_dictionary() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("cfg.json"),
        r#"{"patch_side": 4, "group_size": 8, "rounds": 1, "inner_iters": 1, "kernel_side": 3, "setup": "IV"}"#,
    )
    .unwrap();
    ok(&spda(dir.path(), &["train-dict", "--peak", "1", "--config", "cfg.json", "--output", "t.dict"]));
    let d = spda::io::read_dictionary(dir.path().join("t.dict")).unwrap();
    assert_eq!(d.dim(), 16);
    assert!(d.len() >= 1 && d.len() <= 16);
}

#[test]
fn experiment_csv_to_file() {
    let dir = tempfile::tempdir().unwrap();
    ok(&spda(
        dir.path(),
        &[
            "experiment", "--kind", "flag-like", "--size", "16", "--peaks", "1", "--realizations", "1", "--methods",
            "anscombe-identity", "--output", "r.csv",
        ],
    ));
    let csv = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "image,peak,realization,method,psnr_db,seconds");
    assert!(lines[1].starts_with("flag-like,1.0,0,anscombe-identity,"));
    assert!(lines[2].starts_with("flag-like,1.0,mean,anscombe-identity,"));

    let bad = spda(dir.path(), &["experiment", "--methods", "bm3d"]);
    assert!(!bad.status.success());
}
