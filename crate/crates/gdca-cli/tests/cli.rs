//! End-to-end contract tests for the `gdca` binary: exit codes, config
//! echoing, checkpoint artifacts, inference output bytes, and eval reports.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gdca_cli::{checkpoint, ppm};
use gdca_core::image::Image;
use gdca_core::loss::LossWeights;
use gdca_core::model::GeneratorConfig;
use gdca_core::train::{TrainSchedule, Trainer};
use gdca_core::Tensor;
use tempfile::TempDir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gdca"))
        .args(args)
        .output()
        .expect("binary should spawn")
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("process should exit normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Deterministic full-range test image (no randomness needed).
fn gradient_image(height: usize, width: usize, phase: f64) -> Image {
    let mut pixels = Vec::with_capacity(height * width * 3);
    for y in 0..height {
        for x in 0..width {
            let fx = x as f64 / width.max(2) as f64;
            let fy = y as f64 / height.max(2) as f64;
            pixels.push((0.15 + 0.7 * fx + 0.1 * phase).min(1.0));
            pixels.push((0.1 + 0.8 * fy).min(1.0));
            pixels.push((0.5 + 0.4 * (fx - fy) + 0.05 * phase).clamp(0.0, 1.0));
        }
    }
    Image::new(height, width, pixels).unwrap()
}

fn write_dataset(dir: &Path, count: usize, size: usize) {
    std::fs::create_dir_all(dir).unwrap();
    for i in 0..count {
        let img = gradient_image(size, size, i as f64);
        ppm::write_file(&dir.join(format!("img{i}.ppm")), &img).unwrap();
    }
}

/// Config text for a model tiny enough that a few steps run in milliseconds.
fn tiny_config_text(dataset: &Path, ckpt: &Path, extra: &str) -> String {
    format!(
        "base_channels = 8\n\
         n_ca_blocks = 1\n\
         n_le_blocks = 1\n\
         patch_size = 8\n\
         batch_size = 2\n\
         dataset_dir = {}\n\
         checkpoint = {}\n\
         {extra}",
        dataset.display(),
        ckpt.display()
    )
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn missing_config_file_exits_2() {
    let out = run(&["train", "--config", "/nonexistent/gdca.conf"]);
    assert_eq!(exit_code(&out), 2);
    assert!(stderr(&out).contains("cannot read config"), "stderr: {}", stderr(&out));
}

#[test]
fn unknown_config_key_exits_2() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "bad.conf", "bananas = 1\n");
    let out = run(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 2);
    assert!(stderr(&out).contains("bananas"), "stderr: {}", stderr(&out));
}

#[test]
fn empty_dataset_exits_3() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    std::fs::create_dir_all(&data).unwrap();
    let cfg = write_config(
        tmp.path(),
        "cfg.conf",
        &tiny_config_text(&data, &tmp.path().join("out.ckpt"), "pretrain_steps = 1\ngan_steps = 0\n"),
    );
    let out = run(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 3);
    assert!(stderr(&out).contains("no .ppm"), "stderr: {}", stderr(&out));
}

#[test]
fn print_config_echoes_canonically_and_seed_override_applies() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "cfg.conf", "n_ca_blocks = 2\nw_percep = 0.5\n");
    let out = run(&["train", "--config", cfg.to_str().unwrap(), "--print-config", "--seed", "42"]);
    assert_eq!(exit_code(&out), 0);
    let text = stdout(&out);
    let echoed = gdca_cli::config::Config::parse(&text).expect("echo should re-parse");
    assert_eq!(echoed.n_ca_blocks, 2);
    assert_eq!(echoed.w_percep, 0.5);
    assert_eq!(echoed.seed, 42, "--seed must override the config seed");
    assert_eq!(echoed.base_channels, 64, "unset keys keep defaults");
    // Canonical echo: printing the parsed config reproduces the output.
    assert_eq!(format!("{echoed}\n"), text);
}

#[test]
fn degenerate_schedule_writes_initial_checkpoint() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    write_dataset(&data, 1, 48);
    let ckpt = tmp.path().join("init.ckpt");
    let cfg = write_config(
        tmp.path(),
        "cfg.conf",
        &tiny_config_text(&data, &ckpt, "pretrain_steps = 0\ngan_steps = 0\n"),
    );
    let out = run(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr(&out));
    let (entries, _) = checkpoint::load(&ckpt).unwrap();
    assert!(entries.contains_key("generator.head.weight"));
    assert!(entries.contains_key("d_img.conv0.weight"));
    let step = entries.get("trainer.step").expect("step counter saved");
    assert_eq!(step.data(), &[0.0]);
}

#[test]
fn train_runs_are_bitwise_deterministic_and_logs_match_format() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    write_dataset(&data, 2, 48);
    let extra = "pretrain_steps = 3\ngan_steps = 2\nseed = 7\ncheckpoint_interval = 100\n";
    let mut outputs = Vec::new();
    let mut bytes = Vec::new();
    for name in ["a.ckpt", "b.ckpt"] {
        let ckpt = tmp.path().join(name);
        let cfg = write_config(tmp.path(), name, &tiny_config_text(&data, &ckpt, extra));
        let out = run(&["train", "--config", cfg.to_str().unwrap()]);
        assert_eq!(exit_code(&out), 0, "stderr: {}", stderr(&out));
        outputs.push(stdout(&out));
        bytes.push(std::fs::read(&ckpt).unwrap());
    }
    assert_eq!(bytes[0], bytes[1], "two identical runs must write identical checkpoints");

    let steps = |text: &str| -> Vec<String> {
        text.lines().filter(|l| !l.starts_with('#')).map(str::to_owned).collect()
    };
    assert_eq!(steps(&outputs[0]), steps(&outputs[1]), "step logs must match");
    let lines = steps(&outputs[0]);
    assert_eq!(lines.len(), 5);
    for (i, line) in lines.iter().enumerate() {
        let parts: Vec<&str> = line.split(' ').collect();
        assert_eq!(parts.len(), 10, "log line shape: {line}");
        assert_eq!(parts[0], "step");
        assert_eq!(parts[1], i.to_string());
        assert_eq!(parts[2], "phase");
        assert_eq!(parts[4], "g_loss");
        assert_eq!(parts[6], "d_img_loss");
        assert_eq!(parts[8], "d_feat_loss");
        if i < 3 {
            assert_eq!(parts[3], "pretrain");
            assert!(parts[5].parse::<f64>().is_ok(), "g_loss numeric: {line}");
            assert_eq!(parts[7], "-");
            assert_eq!(parts[9], "-");
        } else {
            assert_eq!(parts[3], "gan");
            assert!(parts[5].parse::<f64>().is_ok());
            assert!(parts[7].parse::<f64>().is_ok());
            assert!(parts[9].parse::<f64>().is_ok());
        }
    }
}

#[test]
fn resume_reproduces_uninterrupted_run_bitwise() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    write_dataset(&data, 2, 48);

    // Uninterrupted 4-step run.
    let full_ckpt = tmp.path().join("full.ckpt");
    let full_cfg = write_config(
        tmp.path(),
        "full.conf",
        &tiny_config_text(&data, &full_ckpt, "pretrain_steps = 4\ngan_steps = 0\nseed = 9\n"),
    );
    assert_eq!(exit_code(&run(&["train", "--config", full_cfg.to_str().unwrap()])), 0);

    // Same run interrupted after 2 steps, then resumed to 4.
    let split_ckpt = tmp.path().join("split.ckpt");
    let first = write_config(
        tmp.path(),
        "first.conf",
        &tiny_config_text(&data, &split_ckpt, "pretrain_steps = 2\ngan_steps = 0\nseed = 9\n"),
    );
    assert_eq!(exit_code(&run(&["train", "--config", first.to_str().unwrap()])), 0);
    let second = write_config(
        tmp.path(),
        "second.conf",
        &tiny_config_text(
            &data,
            &split_ckpt,
            "pretrain_steps = 4\ngan_steps = 0\nseed = 9\nresume = true\n",
        ),
    );
    let out = run(&["train", "--config", second.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr(&out));
    assert!(stdout(&out).lines().any(|l| l.starts_with('#') && l.contains("resumed")));

    assert_eq!(
        std::fs::read(&full_ckpt).unwrap(),
        std::fs::read(&split_ckpt).unwrap(),
        "resumed run must reproduce the uninterrupted checkpoint"
    );
}

/// Train with the degenerate schedule to get an initialized checkpoint.
fn init_checkpoint(tmp: &TempDir) -> PathBuf {
    let data = tmp.path().join("data");
    write_dataset(&data, 1, 48);
    let ckpt = tmp.path().join("model.ckpt");
    let cfg = write_config(
        tmp.path(),
        "init.conf",
        &tiny_config_text(&data, &ckpt, "pretrain_steps = 0\ngan_steps = 0\n"),
    );
    assert_eq!(exit_code(&run(&["train", "--config", cfg.to_str().unwrap()])), 0);
    ckpt
}

#[test]
fn infer_scales_by_4_and_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let ckpt = init_checkpoint(&tmp);
    let input = tmp.path().join("in.ppm");
    ppm::write_file(&input, &gradient_image(24, 24, 0.0)).unwrap();

    let out_a = tmp.path().join("a.ppm");
    let out_b = tmp.path().join("b.ppm");
    for out_path in [&out_a, &out_b] {
        let out = run(&[
            "infer",
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--in",
            input.to_str().unwrap(),
            "--out",
            out_path.to_str().unwrap(),
        ]);
        assert_eq!(exit_code(&out), 0, "stderr: {}", stderr(&out));
    }
    let sr = ppm::read_file(&out_a).unwrap();
    assert_eq!((sr.height(), sr.width()), (96, 96));
    assert_eq!(
        std::fs::read(&out_a).unwrap(),
        std::fs::read(&out_b).unwrap(),
        "inference must be byte-deterministic"
    );
}

#[test]
fn infer_with_zeroed_generator_emits_tail_bias_constant() {
    let tmp = TempDir::new().unwrap();
    let config = GeneratorConfig {
        base_channels: 8,
        n_ca_blocks: 1,
        n_le_blocks: 1,
        ca_reduction: 4,
        skip_weight_init: 1.0,
    };
    let schedule = TrainSchedule { pretrain_steps: 0, gan_steps: 0, ..TrainSchedule::default() };
    let mut trainer: Trainer<f32> =
        Trainer::new(&config, schedule, LossWeights::default(), 0).unwrap();
    trainer.generator.for_each_named_mut("generator", &mut |name, t: &mut Tensor<f32>| {
        t.data_mut().fill(0.0);
        if name == "generator.tail.bias" {
            t.data_mut().copy_from_slice(&[0.3, 0.6, 0.2]);
        }
    });
    let entries: BTreeMap<String, Tensor<f32>> = trainer.export_state().into_iter().collect();
    let ckpt = tmp.path().join("zero.ckpt");
    checkpoint::save(&ckpt, &entries, 0).unwrap();

    let input = tmp.path().join("in.ppm");
    ppm::write_file(&input, &gradient_image(16, 16, 0.0)).unwrap();
    let output = tmp.path().join("out.ppm");
    let out = run(&[
        "infer",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--in",
        input.to_str().unwrap(),
        "--out",
        output.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr(&out));

    // Every conv output collapses to its (zero) bias, so the SR image is the
    // tail bias replicated: round(255·0.3) = 77, round(255·0.6) = 153,
    // round(255·0.2) = 51.
    let sr = ppm::read_file(&output).unwrap();
    assert_eq!((sr.height(), sr.width()), (64, 64));
    let bytes = sr.to_rgb8();
    assert!(
        bytes.chunks(3).all(|px| px == [77, 153, 51]),
        "expected constant (77,153,51), first pixel {:?}",
        &bytes[..3]
    );
}

#[test]
fn eval_identical_dirs_reports_zero_rmse_and_inf_psnr() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("set");
    write_dataset(&dir, 2, 16);
    let out = run(&["eval", "--sr", dir.to_str().unwrap(), "--hr", dir.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr(&out));
    let text = stdout(&out);
    for name in ["img0.ppm", "img1.ppm"] {
        let row = text.lines().find(|l| l.contains(name)).expect("row per image");
        assert!(row.contains("0.00000"), "zero rmse in: {row}");
        assert!(row.contains("inf"), "inf psnr in: {row}");
    }
    assert!(text.contains("PI: not computed"), "report must disclose PI scope: {text}");
}

#[test]
fn eval_filename_mismatch_exits_4_listing_offenders() {
    let tmp = TempDir::new().unwrap();
    let sr = tmp.path().join("sr");
    let hr = tmp.path().join("hr");
    std::fs::create_dir_all(&sr).unwrap();
    std::fs::create_dir_all(&hr).unwrap();
    let img = gradient_image(16, 16, 0.0);
    ppm::write_file(&sr.join("a.ppm"), &img).unwrap();
    ppm::write_file(&sr.join("b.ppm"), &img).unwrap();
    ppm::write_file(&hr.join("a.ppm"), &img).unwrap();
    ppm::write_file(&hr.join("c.ppm"), &img).unwrap();
    let out = run(&["eval", "--sr", sr.to_str().unwrap(), "--hr", hr.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 4);
    let err = stderr(&out);
    assert!(err.contains("b.ppm") && err.contains("c.ppm"), "stderr: {err}");
    assert!(err.contains("only in"), "stderr: {err}");
}

#[test]
fn eval_pair_dimension_error_marks_row_and_exits_5() {
    let tmp = TempDir::new().unwrap();
    let sr = tmp.path().join("sr");
    let hr = tmp.path().join("hr");
    std::fs::create_dir_all(&sr).unwrap();
    std::fs::create_dir_all(&hr).unwrap();
    // Pair "good": identical 16×16. Pair "bad": 16×16 vs 24×24.
    let img = gradient_image(16, 16, 0.0);
    ppm::write_file(&sr.join("bad.ppm"), &img).unwrap();
    ppm::write_file(&hr.join("bad.ppm"), &gradient_image(24, 24, 0.0)).unwrap();
    ppm::write_file(&sr.join("good.ppm"), &img).unwrap();
    ppm::write_file(&hr.join("good.ppm"), &img).unwrap();
    let out = run(&["eval", "--sr", sr.to_str().unwrap(), "--hr", hr.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 5);
    let text = stdout(&out);
    let bad_row = text.lines().find(|l| l.contains("bad.ppm")).unwrap();
    assert!(bad_row.contains("error:"), "bad row: {bad_row}");
    let mean_row = text.lines().find(|l| l.starts_with("mean")).unwrap();
    assert!(mean_row.contains("0.00000"), "aggregate must exclude the error row: {mean_row}");
}

#[test]
fn eval_csv_matches_direct_loop_oracle() {
    let tmp = TempDir::new().unwrap();
    let sr_dir = tmp.path().join("sr");
    let hr_dir = tmp.path().join("hr");
    std::fs::create_dir_all(&sr_dir).unwrap();
    std::fs::create_dir_all(&hr_dir).unwrap();

    let mut expected = Vec::new();
    for (i, name) in ["p0.ppm", "p1.ppm", "p2.ppm"].iter().enumerate() {
        let a = gradient_image(16, 16, i as f64 * 0.3);
        let b = gradient_image(16, 16, i as f64 * 0.3 + 0.45);
        ppm::write_file(&sr_dir.join(name), &a).unwrap();
        ppm::write_file(&hr_dir.join(name), &b).unwrap();

        // Direct double-precision oracle: quantize to 8-bit, crop 4, RMSE.
        let mut sum = 0.0f64;
        let mut count = 0usize;
        for y in 4..12 {
            for x in 4..12 {
                let pa = a.get(y, x);
                let pb = b.get(y, x);
                for c in 0..3 {
                    let qa = (pa[c] * 255.0).round();
                    let qb = (pb[c] * 255.0).round();
                    sum += (qa - qb) * (qa - qb);
                    count += 1;
                }
            }
        }
        let rmse = (sum / count as f64).sqrt();
        expected.push((name.to_string(), rmse, 20.0 * (255.0 / rmse).log10()));
    }

    let csv_path = tmp.path().join("report.csv");
    let out = run(&[
        "eval",
        "--sr",
        sr_dir.to_str().unwrap(),
        "--hr",
        hr_dir.to_str().unwrap(),
        "--csv",
        csv_path.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr(&out));

    let csv = std::fs::read_to_string(&csv_path).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "name,rmse,psnr");
    assert_eq!(lines.len(), 5, "header + 3 rows + mean: {csv}");
    let mut mean_rmse = 0.0;
    let mut mean_psnr = 0.0;
    for (line, (name, rmse, psnr)) in lines[1..4].iter().zip(&expected) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[0], name.as_str());
        let got_rmse: f64 = cols[1].parse().unwrap();
        let got_psnr: f64 = cols[2].parse().unwrap();
        // CSV carries 6 significant digits; compare at that precision.
        assert!((got_rmse - rmse).abs() <= 1e-4 * rmse.abs(), "{name}: {got_rmse} vs {rmse}");
        assert!((got_psnr - psnr).abs() <= 1e-4 * psnr.abs(), "{name}: {got_psnr} vs {psnr}");
        mean_rmse += rmse / 3.0;
        mean_psnr += psnr / 3.0;
    }
    let mean_cols: Vec<&str> = lines[4].split(',').collect();
    assert_eq!(mean_cols[0], "mean");
    let got_mean_rmse: f64 = mean_cols[1].parse().unwrap();
    let got_mean_psnr: f64 = mean_cols[2].parse().unwrap();
    assert!((got_mean_rmse - mean_rmse).abs() <= 1e-4 * mean_rmse.abs());
    assert!((got_mean_psnr - mean_psnr).abs() <= 1e-4 * mean_psnr.abs());
    assert!(csv.ends_with('\n') && !csv.contains('\r'), "LF endings");
}
