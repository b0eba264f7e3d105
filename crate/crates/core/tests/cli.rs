//! Drives the installed binary end to end: every subcommand, the config
//! precedence rules, and the exit-code contract (0 ok, 1 usage or failed
//! self-test, 2 malformed input, 3 bad shapes or domains).

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_blacksoil"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary should spawn")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn workdir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("blacksoil-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_ppm(path: &Path, w: usize, h: usize, seed: u32) {
    let mut bytes = format!("P6\n{w} {h}\n255\n").into_bytes();
    let mut state = seed.wrapping_mul(2891336453).wrapping_add(1);
    for _ in 0..w * h * 3 {
        state = state.wrapping_mul(1664525).wrapping_add(1013904223);
        bytes.push((state >> 24) as u8);
    }
    std::fs::write(path, bytes).unwrap();
}

fn write_pgm(path: &Path, w: usize, h: usize, pixels: &[u8]) {
    let mut bytes = format!("P5\n{w} {h}\n255\n").into_bytes();
    bytes.extend_from_slice(pixels);
    std::fs::write(path, bytes).unwrap();
}

#[test]
fn scan_order_prints_the_window_walk() {
    let out = run(&["scan-order", "--h", "4", "--w", "4", "--strategy", "local_window2"]);
    assert!(out.status.success());
    assert_eq!(stdout(&out).trim(), "0 1 4 5 2 3 6 7 8 9 12 13 10 11 14 15");

    // the explicit flag form names the same order
    let flagged =
        run(&["scan-order", "--h", "4", "--w", "4", "--strategy", "local_window", "--window", "2"]);
    assert_eq!(stdout(&flagged), stdout(&out));

    let vertical = run(&["scan-order", "--h", "2", "--w", "3", "--strategy", "vertical"]);
    assert_eq!(stdout(&vertical).trim(), "0 3 1 4 2 5");

    let bad = run(&["scan-order", "--h", "4", "--w", "4", "--strategy", "diagonal"]);
    assert_eq!(bad.status.code(), Some(3), "unknown strategy is a domain error");
}

#[test]
fn selftest_exits_clean() {
    let out = run(&["selftest"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("selftest passed"), "missing verdict in: {text}");
    assert!(!text.contains("FAIL"), "unexpected failure in: {text}");
}

#[test]
fn init_then_infer_yields_a_binary_mask_deterministically() {
    let dir = workdir("infer");
    let ckpt = dir.join("w.ckpt");
    let img = dir.join("in.ppm");
    write_ppm(&img, 64, 64, 7);
    assert!(run(&["init", "--out", ckpt.to_str().unwrap(), "--seed", "3"]).status.success());

    let infer = |out_name: &str, probs: Option<&str>| {
        let out_path = dir.join(out_name);
        let mut args = vec![
            "infer".to_string(),
            format!("--weights={}", ckpt.display()),
            format!("--image={}", img.display()),
            format!("--out={}", out_path.display()),
        ];
        if let Some(p) = probs {
            args.push(format!("--probs={}", dir.join(p).display()));
        }
        let out = bin().args(&args).output().unwrap();
        assert!(out.status.success(), "infer failed: {}", String::from_utf8_lossy(&out.stderr));
        std::fs::read(&out_path).unwrap()
    };

    let first = infer("mask_a.pgm", Some("p"));
    let second = infer("mask_b.pgm", None);
    assert_eq!(first, second, "same inputs must give byte-identical masks");

    let header = b"P5\n64 64\n255\n";
    assert_eq!(&first[..header.len()], header);
    assert!(first[header.len()..].iter().all(|&v| v == 0 || v == 255), "mask is not binary");

    // probability planes land next to the mask, one file per class
    for suffix in ["p_blk.pgm", "p_mat.pgm"] {
        assert!(dir.join(suffix).exists(), "missing {suffix}");
    }
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn eval_reports_the_hand_case_csv() {
    let dir = workdir("eval");
    let pred = dir.join("pred.pgm");
    let gt = dir.join("gt.pgm");
    write_pgm(&pred, 2, 2, &[0, 0, 255, 255]);
    write_pgm(&gt, 2, 2, &[0, 255, 255, 255]);
    let out = run(&["eval", "--pred", pred.to_str().unwrap(), "--gt", gt.to_str().unwrap()]);
    assert!(out.status.success());
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("IoU_blk,IoU_mat,mIoU,F1_blk,F1_mat,mean_F1,ACC"));
    assert_eq!(
        lines.next(),
        Some("50.0000,66.6667,58.3333,66.6667,80.0000,73.3333,75.0000")
    );
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn bench_prints_throughput_rows() {
    let out = run(&["bench", "--L", "64", "--D", "2", "--N", "2", "--block", "16"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("kernel,block,elements_per_s"), "missing header: {text}");
    assert!(text.contains("sequential,"), "missing sequential row: {text}");
    assert!(text.contains("blocked,16,"), "missing blocked row: {text}");
}

#[test]
fn config_file_feeds_defaults_and_flags_override_it() {
    let dir = workdir("config");
    let cfg = dir.join("run.conf");
    std::fs::write(&cfg, "# defaults for this survey\nseed = 9\nstate_dim = 8\n").unwrap();

    let from_config = dir.join("a.ckpt");
    let from_flags = dir.join("b.ckpt");
    let overridden = dir.join("c.ckpt");
    let cs = cfg.to_str().unwrap();
    assert!(run(&["init", "--config", cs, "--out", from_config.to_str().unwrap()])
        .status
        .success());
    assert!(run(&["init", "--seed", "9", "--state-dim", "8", "--out", from_flags.to_str().unwrap()])
        .status
        .success());
    assert!(run(&["init", "--config", cs, "--seed", "4", "--out", overridden.to_str().unwrap()])
        .status
        .success());

    let a = std::fs::read(&from_config).unwrap();
    let b = std::fs::read(&from_flags).unwrap();
    let c = std::fs::read(&overridden).unwrap();
    assert_eq!(a, b, "config keys must act exactly like the equivalent flags");
    assert_ne!(a, c, "a flag must beat the config file");

    let unknown = dir.join("bad.conf");
    std::fs::write(&unknown, "sed = 9\n").unwrap();
    let rejected = dir.join("d.ckpt");
    let out = run(&["init", "--config", unknown.to_str().unwrap(), "--out",
        rejected.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "unknown config key is a format error");
    assert!(!rejected.exists(), "rejected run must not write output");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn exit_codes_follow_the_contract() {
    assert_eq!(run(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["infer"]).status.code(), Some(1), "missing required flags is usage");

    let dir = workdir("exit");
    let img = dir.join("ok.ppm");
    write_ppm(&img, 64, 64, 1);
    let missing = run(&[
        "infer",
        "--weights",
        dir.join("absent.ckpt").to_str().unwrap(),
        "--image",
        img.to_str().unwrap(),
        "--out",
        dir.join("m.pgm").to_str().unwrap(),
    ]);
    assert_eq!(missing.status.code(), Some(2), "unreadable weights file is I/O");

    // a valid checkpoint but an image whose extents the model cannot take
    let ckpt = dir.join("w.ckpt");
    assert!(run(&["init", "--out", ckpt.to_str().unwrap()]).status.success());
    let odd = dir.join("odd.ppm");
    write_ppm(&odd, 50, 50, 2);
    let shape = run(&[
        "infer",
        "--weights",
        ckpt.to_str().unwrap(),
        "--image",
        odd.to_str().unwrap(),
        "--out",
        dir.join("m.pgm").to_str().unwrap(),
    ]);
    assert_eq!(shape.status.code(), Some(3), "indivisible extents are a shape error");

    let truncated = dir.join("short.ppm");
    std::fs::write(&truncated, b"P6\n4 4\n255\nabc").unwrap();
    let fmt = run(&[
        "infer",
        "--weights",
        ckpt.to_str().unwrap(),
        "--image",
        truncated.to_str().unwrap(),
        "--out",
        dir.join("m.pgm").to_str().unwrap(),
    ]);
    assert_eq!(fmt.status.code(), Some(2), "truncated image payload is a format error");
    std::fs::remove_dir_all(&dir).ok();
}
