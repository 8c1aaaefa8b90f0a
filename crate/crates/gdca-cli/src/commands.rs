//! The three entry points behind the CLI: train, infer, eval.
//!
//! Exit codes: 0 success, 2 configuration problem, 3 dataset problem,
//! 4 eval filename mismatch, 5 eval pair error, 1 anything else. Training
//! progress lines are deterministic; anything timestamped is prefixed `#`
//! and carries no load-bearing information.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use gdca_core::image::Image;
use gdca_core::metrics::{psnr, rmse, DEFAULT_BORDER_CROP};
use gdca_core::model::{FeatureExtractor, Generator, GeneratorConfig};
use gdca_core::patch::assemble_batch;
use gdca_core::train::Trainer;
use gdca_core::Tensor;

use crate::checkpoint;
use crate::config::Config;
use crate::dataset;
use crate::ppm;
use crate::report::{EvalReport, EvalRow, RowOutcome};

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_DATASET: u8 = 3;
pub const EXIT_NAME_MISMATCH: u8 = 4;
pub const EXIT_PAIR_ERROR: u8 = 5;

#[derive(Debug)]
pub struct CmdError {
    pub code: u8,
    pub message: String,
}

impl CmdError {
    fn new(code: u8, message: impl Into<String>) -> Self {
        CmdError { code, message: message.into() }
    }
}

type CmdResult = Result<(), CmdError>;

/// Write to stdout, exiting quietly if the reader closed the pipe early
/// (`gdca train | head` should behave like any Unix tool, not panic).
fn emit(text: impl std::fmt::Display) {
    use std::io::Write;
    if write!(std::io::stdout(), "{text}").is_err() {
        std::process::exit(0);
    }
}

fn note(msg: &str) {
    let ts = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    emit(format_args!("# {ts} {msg}\n"));
}

pub fn cmd_train(config_path: &Path, seed_override: Option<u64>, print_config: bool) -> CmdResult {
    let text = std::fs::read_to_string(config_path).map_err(|e| {
        CmdError::new(EXIT_CONFIG, format!("cannot read config {}: {e}", config_path.display()))
    })?;
    let mut config = Config::parse(&text).map_err(|e| CmdError::new(EXIT_CONFIG, e.0))?;
    if let Some(seed) = seed_override {
        config.seed = seed;
    }
    if print_config {
        emit(format_args!("{config}\n"));
        return Ok(());
    }
    if config.gan_steps > 0 && config.patch_size % 4 != 0 {
        return Err(CmdError::new(
            EXIT_CONFIG,
            format!(
                "patch_size must be a multiple of 4 when gan_steps > 0 \
                 (the feature extractor downsamples HR patches by 16), got {}",
                config.patch_size
            ),
        ));
    }

    let images = dataset::load_images(Path::new(&config.dataset_dir))
        .map_err(|e| CmdError::new(EXIT_DATASET, e.0))?;
    if images.is_empty() {
        return Err(CmdError::new(
            EXIT_DATASET,
            format!("dataset directory {} contains no .ppm images", config.dataset_dir),
        ));
    }

    let mut trainer: Trainer<f32> = Trainer::new(
        &config.generator_config(),
        config.schedule(),
        config.loss_weights(),
        config.extractor_seed,
    )
    .map_err(|e| CmdError::new(EXIT_CONFIG, e.to_string()))?;

    let ckpt_path = Path::new(&config.checkpoint);
    if config.resume && ckpt_path.exists() {
        let (entries, extractor_seed) =
            checkpoint::load(ckpt_path).map_err(|e| CmdError::new(1, e.0))?;
        trainer.extractor = FeatureExtractor::new(extractor_seed);
        trainer
            .import_state(&entries)
            .map_err(|e| CmdError::new(1, format!("cannot resume: {e}")))?;
        note(&format!("resumed from {} at step {}", ckpt_path.display(), trainer.step));
    }

    let save = |trainer: &Trainer<f32>| -> CmdResult {
        let entries: BTreeMap<String, Tensor<f32>> = trainer.export_state().into_iter().collect();
        checkpoint::save(ckpt_path, &entries, trainer.extractor.seed())
            .map_err(|e| CmdError::new(1, e.0))
    };

    note(&format!(
        "training: {} pretrain + {} gan steps, batch {}, {} images",
        config.pretrain_steps,
        config.gan_steps,
        config.batch_size,
        images.len()
    ));
    while trainer.phase().is_some() {
        let batch = assemble_batch::<f32>(
            &images,
            config.patch_size,
            config.seed,
            trainer.step,
            config.batch_size,
        )
        .map_err(|e| CmdError::new(EXIT_DATASET, e.to_string()))?;
        let log = trainer.train_step(&batch).map_err(|e| CmdError::new(1, e.to_string()))?;
        emit(format_args!("{}\n", log.line()));
        if trainer.step % config.checkpoint_interval == 0 && trainer.phase().is_some() {
            save(&trainer)?;
            note(&format!("wrote checkpoint {}", ckpt_path.display()));
        }
    }
    save(&trainer)?;
    note(&format!("done, final checkpoint {}", ckpt_path.display()));
    Ok(())
}

/// Rebuilds the generator architecture from checkpoint tensor names and
/// shapes, then fills in the stored parameter values.
pub fn generator_from_entries(
    entries: &BTreeMap<String, Tensor<f32>>,
) -> Result<Generator<Tensor<f32>>, String> {
    let head = entries
        .get("generator.head.weight")
        .ok_or("checkpoint has no generator.head.weight tensor")?;
    if head.shape().len() != 4 {
        return Err(format!("generator.head.weight has shape {:?}", head.shape()));
    }
    let base_channels = head.shape()[0];
    let count_blocks = |kind: &str| {
        let mut n = 0;
        while entries.contains_key(&format!("generator.{kind}{n}.conv1.weight")) {
            n += 1;
        }
        n
    };
    let n_ca_blocks = count_blocks("ca");
    let n_le_blocks = count_blocks("le");
    let ca_reduction = match entries.get("generator.ca0.squeeze.weight") {
        Some(w) if !w.shape().is_empty() && w.shape()[0] > 0 => base_channels / w.shape()[0],
        _ => 4,
    };
    let skip_weight_init = entries
        .get("generator.skip_weight")
        .map(|t| t.data()[0] as f64)
        .unwrap_or(1.0);
    let config = GeneratorConfig {
        base_channels,
        n_ca_blocks,
        n_le_blocks,
        ca_reduction,
        skip_weight_init,
    };
    config.validate().map_err(|e| e.to_string())?;

    let mut gen: Generator<Tensor<f32>> =
        Generator::init(&config, 0).map_err(|e| e.to_string())?;
    let mut missing: Option<String> = None;
    gen.for_each_named_mut("generator", &mut |name, t: &mut Tensor<f32>| {
        if missing.is_some() {
            return;
        }
        match entries.get(&name) {
            Some(src) if src.shape() == t.shape() => {
                let flag = t.requires_grad();
                *t = src.clone();
                t.set_requires_grad(flag);
            }
            Some(src) => {
                missing = Some(format!(
                    "tensor {name}: checkpoint shape {:?} does not fit {:?}",
                    src.shape(),
                    t.shape()
                ));
            }
            None => missing = Some(format!("checkpoint is missing tensor {name}")),
        }
    });
    match missing {
        Some(m) => Err(m),
        None => Ok(gen),
    }
}

pub fn cmd_infer(checkpoint_path: &Path, input: &Path, output: &Path) -> CmdResult {
    let (entries, _seed) = checkpoint::load(checkpoint_path).map_err(|e| CmdError::new(1, e.0))?;
    let gen = generator_from_entries(&entries)
        .map_err(|e| CmdError::new(1, format!("{}: {e}", checkpoint_path.display())))?;

    let img = ppm::read_file(input).map_err(|e| CmdError::new(1, e.0))?;
    if img.height() < 8 || img.width() < 8 {
        return Err(CmdError::new(
            1,
            format!("input must be at least 8x8, got {}x{}", img.width(), img.height()),
        ));
    }
    let sr = gen
        .infer(&img.to_tensor::<f32>())
        .map_err(|e| CmdError::new(1, e.to_string()))?;
    let sr_img = Image::from_tensor(&sr).map_err(|e| CmdError::new(1, e.to_string()))?;
    ppm::write_file(output, &sr_img).map_err(|e| CmdError::new(1, e.0))?;
    Ok(())
}

pub fn cmd_eval(sr_dir: &Path, hr_dir: &Path, csv_path: Option<&Path>) -> CmdResult {
    let names_of = |dir: &Path| -> Result<Vec<String>, CmdError> {
        Ok(dataset::list_ppm_files(dir)
            .map_err(|e| CmdError::new(EXIT_DATASET, e.0))?
            .iter()
            .map(|p| p.file_name().unwrap_or_default().to_string_lossy().into_owned())
            .collect())
    };
    let sr_names = names_of(sr_dir)?;
    let hr_names = names_of(hr_dir)?;
    if sr_names != hr_names {
        let mut msg = String::from("filename mismatch between directories:");
        for n in sr_names.iter().filter(|n| !hr_names.contains(n)) {
            msg.push_str(&format!("\n  only in {}: {n}", sr_dir.display()));
        }
        for n in hr_names.iter().filter(|n| !sr_names.contains(n)) {
            msg.push_str(&format!("\n  only in {}: {n}", hr_dir.display()));
        }
        return Err(CmdError::new(EXIT_NAME_MISMATCH, msg));
    }

    let mut report = EvalReport::default();
    for name in &sr_names {
        let outcome = (|| -> Result<RowOutcome, String> {
            let sr = ppm::read_file(&sr_dir.join(name)).map_err(|e| e.0)?;
            let hr = ppm::read_file(&hr_dir.join(name)).map_err(|e| e.0)?;
            let r = rmse(&sr, &hr, DEFAULT_BORDER_CROP).map_err(|e| e.to_string())?;
            let p = psnr(&sr, &hr, DEFAULT_BORDER_CROP).map_err(|e| e.to_string())?;
            Ok(RowOutcome::Ok { rmse: r, psnr: p })
        })()
        .unwrap_or_else(RowOutcome::Error);
        report.rows.push(EvalRow { name: name.clone(), outcome });
    }

    emit(report.table());
    if let Some(path) = csv_path {
        std::fs::write(path, report.csv())
            .map_err(|e| CmdError::new(1, format!("cannot write {}: {e}", path.display())))?;
    }
    if report.had_errors() {
        return Err(CmdError::new(EXIT_PAIR_ERROR, "one or more pairs failed"));
    }
    Ok(())
}
