use std::path::Path;
use std::process::{Command, Output};

use hvsjnd::imaging::{load_image_as_rgb, psnr, save_image};
use hvsjnd::pipeline::synthetic::scenes;

fn hvsjnd(args: &[&str], ckpt_dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hvsjnd"))
        .args(args)
        .env("HVSJND_CHECKPOINT_DIR", ckpt_dir)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(args: &[&str], ckpt_dir: &Path) -> String {
    let out = hvsjnd(args, ckpt_dir);
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

const CONFIG: &str = r#"
execution = "sequential"
checkpoint_every = 2
[codec_arch]
channels = 6
[generator_arch]
widths = [4, 8]
[jnd]
batch = 2
crop = 16
"#;

#[test]
fn end_to_end_commands() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let data = root.join("data");
    std::fs::create_dir_all(&data).unwrap();
    for (i, img) in scenes(5, 2, 32, 32).iter().enumerate() {
        save_image(img, data.join(format!("s{i}.png"))).unwrap();
    }
    let cfg = root.join("exp.toml");
    std::fs::write(&cfg, CONFIG).unwrap();
    let ck = root.join("ckpt");
    let (d, c) = (data.to_str().unwrap(), cfg.to_str().unwrap());

    let out = ok(
        &["train-codec", "--config", c, "--data", d, "--steps", "3", "--crop", "16", "--lambda", "2000", "--seed", "1"],
        &ck,
    );
    assert!(out.contains("codec saved"), "{out}");
    assert!(ck.join("codec.ckpt").exists());
    assert!(ck.join("codec.trace.csv").exists());

    for (name, seed) in [("a", "1"), ("b", "2")] {
        let gen = ck.join(format!("{name}.ckpt"));
        ok(
            &[
                "train-jnd", "--config", c, "--data", d, "--out", gen.to_str().unwrap(), "--steps", "2", "--seed", seed,
                "--alpha", "0.1", "--beta", "1.0", "--gamma", "0.1",
            ],
            &ck,
        );
        let trace = std::fs::read_to_string(gen.with_extension("trace.csv")).unwrap();
        assert!(trace.starts_with("step,loss1,loss2,loss3,total\n"));
    }
    std::fs::copy(ck.join("a.ckpt"), ck.join("generator.ckpt")).unwrap();

    let img = data.join("s0.png");
    let jnd = root.join("s0.jnd.json");
    ok(&["generate", "--image", img.to_str().unwrap(), "--out-jnd", jnd.to_str().unwrap()], &ck);
    assert!(jnd.exists() && root.join("s0.jnd.png").exists());

    let priors = root.join("priors");
    ok(&["extract-priors", "--image", img.to_str().unwrap(), "--out", priors.to_str().unwrap()], &ck);
    for f in ["cam.png", "guided.png", "priors.json"] {
        assert!(priors.join(f).exists(), "{f}");
    }

    let y0 = root.join("y0.png");
    let out = ok(
        &[
            "inject", "--image", img.to_str().unwrap(), "--jnd", jnd.to_str().unwrap(), "--psnr", "30", "--seed", "4",
            "--out", y0.to_str().unwrap(),
        ],
        &ck,
    );
    assert!(out.contains("seed 4"), "{out}");
    // An 8-bit save re-quantizes, so allow some slack around the target.
    let achieved = psnr(load_image_as_rgb(&img).unwrap(), load_image_as_rgb(&y0).unwrap()).unwrap();
    assert!((achieved - 30.0).abs() < 0.3, "{achieved}");

    let report = root.join("report.csv");
    ok(
        &[
            "evaluate", "--images", d, "--models", ck.join("a.ckpt").to_str().unwrap(), ck.join("b.ckpt").to_str().unwrap(),
            "--psnr", "26.06", "--report", report.to_str().unwrap(),
        ],
        &ck,
    );
    let text = std::fs::read_to_string(&report).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "image,model,epsilon,achieved_psnr,clipped_fraction,seed");
    assert_eq!(lines.len(), 5);
    for l in &lines[1..] {
        let psnr: f64 = l.split(',').nth(3).unwrap().parse().unwrap();
        assert!((psnr - 26.06).abs() <= 0.01, "{l}");
    }
}

#[test]
fn serve_exports_scores_and_reports_errors() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    std::fs::write(root.join("a.png"), b"A").unwrap();
    std::fs::write(root.join("b.png"), b"B").unwrap();
    std::fs::write(
        root.join("plan.json"),
        r#"[{"pair_id": "p1", "image_id": "P1", "candidate_model": "ours", "anchor_model": "x",
             "candidate_image": "a.png", "anchor_image": "b.png"}]"#,
    )
    .unwrap();
    let scores = root.join("scores.jsonl");
    std::fs::write(
        &scores,
        r#"{"subject_id":"s","pair_id":"p1","raw_score":1,"stored_score":-1,"timestamp_ms":1,"placement":"anchor-left"}
"#,
    )
    .unwrap();
    let csv = root.join("scores.csv");
    let plan = root.join("plan.json");
    ok(
        &[
            "serve", "--plan", plan.to_str().unwrap(), "--scores", scores.to_str().unwrap(), "--export-csv",
            csv.to_str().unwrap(),
        ],
        root,
    );
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 2, "{text}");

    // Missing checkpoint: clean failure with the path in the message.
    let out = hvsjnd(&["generate", "--image", "x.png", "--out-jnd", "x.json"], &root.join("nowhere"));
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("codec.ckpt"));

    let bad = root.join("bad.toml");
    std::fs::write(&bad, "[codec]\ncrop = 100\n").unwrap();
    let out = hvsjnd(&["run", "--config", bad.to_str().unwrap()], root);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("divisible by 8"));

    let out = hvsjnd(&["train-jnd", "--ablate", "bl-x"], root);
    assert!(!out.status.success());
}
