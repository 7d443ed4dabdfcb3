//! Subcommand implementations: generate, train, eval, optimize, import.

use std::path::Path;

use serde::Deserialize;

use beamsight::dataset::{
    generate_dataset, import_external_labels, read_sidecar, DatasetSpec, Manifest, Split,
};
use beamsight::mechanics::Label;
use beamsight::model::{
    build, check_labels, evaluate, load_checkpoint, save_checkpoint, train as train_model,
    ArchKind, ArchitectureConfig, Model, TrainConfig,
};
use beamsight::search::{
    run_campaign, targets_from_test_split, CnnSurrogate, OracleSurrogate, SampleRanges,
    Surrogate, TargetSpec,
};
use beamsight::seeds::mix;

use crate::CliError;

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    if !path.exists() {
        return Err(CliError::Usage(format!(
            "config file {} does not exist",
            path.display()
        )));
    }
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn ensure_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn generate(config: &Path, out: &Path, seed: Option<u64>) -> Result<(), CliError> {
    let mut spec: DatasetSpec = read_json(config)?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    ensure_dir(out)?;
    let manifest = generate_dataset(&spec, out)?;
    let sidecar = read_sidecar(out)?;
    println!(
        "generated {} samples into {} (train {}, val {}, test {}; {} failed, {} retried)",
        manifest.rows.len(),
        out.display(),
        manifest.split_len(Split::Train),
        manifest.split_len(Split::Val),
        manifest.split_len(Split::Test),
        sidecar.generation.failed_ids.len(),
        sidecar.generation.retried.len(),
    );
    Ok(())
}

#[derive(Debug, Deserialize)]
pub struct TrainCmdConfig {
    pub arch_kind: ArchKind,
    /// Label columns to predict; defaults to the dataset's label set.
    #[serde(default)]
    pub labels: Option<Vec<Label>>,
    pub train: TrainConfig,
}

fn parse_labels(names: &[String]) -> Result<Vec<Label>, CliError> {
    names
        .iter()
        .map(|n| {
            Label::from_name(n).ok_or_else(|| CliError::Data(format!("unknown label {n:?}")))
        })
        .collect()
}

pub fn train(config: &Path, data: &Path, out: &Path, seed: Option<u64>) -> Result<(), CliError> {
    let mut cfg: TrainCmdConfig = read_json(config)?;
    if let Some(s) = seed {
        cfg.train.seed = s;
    }
    let sidecar = read_sidecar(data)?;
    let manifest = Manifest::read(data)?;
    let labels = cfg.labels.unwrap_or_else(|| sidecar.spec.label_set.clone());
    let arch = ArchitectureConfig {
        kind: cfg.arch_kind,
        img_size: sidecar.spec.raster.img_size,
        number_of_labels: labels.len(),
    };
    ensure_dir(out)?;
    let mut model = build(arch, &labels, mix(cfg.train.seed, 0x494E_4954))?;
    let history = train_model(&mut model, &manifest, data, &cfg.train)?;
    save_checkpoint(&model, &out.join("model"), None)?;
    history.write_csv(&out.join("history.csv"))?;
    let last = history.epochs.last().expect("at least one epoch");
    println!(
        "trained {} epochs (best epoch {}); final train mse {:.6}, val mse {:.6}",
        history.epochs.len(),
        history.best_epoch,
        last.train_mse,
        last.val_mse
    );
    println!("checkpoint: {}", out.join("model.ckpt.json").display());
    Ok(())
}

pub fn eval(
    checkpoint: &Path,
    data: &Path,
    split: Split,
    labels: Option<&[String]>,
    out: &Path,
) -> Result<(), CliError> {
    let (model, _) = load_checkpoint(checkpoint)?;
    if let Some(names) = labels {
        let expected = parse_labels(names)?;
        check_labels(&model, &expected)?;
    }
    let manifest = Manifest::read(data)?;
    let metrics = evaluate(&model, &manifest, data, split)?;
    ensure_dir(out)?;
    let path = out.join("metrics.json");
    let json = serde_json::to_string_pretty(&metrics).expect("serializable metrics");
    std::fs::write(&path, json).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    println!(
        "{} split, {} samples: aggregate MSE {:.6}, MAE {:.6}, MAPE {:.3}%",
        split.tag(),
        metrics.n_samples,
        metrics.mse,
        metrics.mae,
        metrics.mape
    );
    for lm in &metrics.per_label {
        println!(
            "  {:>18}: mse {:.6e}  mae {:.6e}  mape {:.3}% (ci95 ±{:.3})",
            lm.label.name(),
            lm.mse,
            lm.mae,
            lm.mape,
            lm.ci95_mape
        );
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
pub struct OptimizeConfig {
    /// Explicit target triples; when absent, targets are sampled from the
    /// dataset's test split.
    #[serde(default)]
    pub targets: Option<Vec<[f64; 3]>>,
    #[serde(default = "default_n_targets")]
    pub n_targets: usize,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_n_targets() -> usize {
    10
}
fn default_budget() -> usize {
    10_000
}
fn default_restarts() -> usize {
    10
}

pub fn optimize(
    config: &Path,
    checkpoint: Option<&Path>,
    data: &Path,
    out: &Path,
    use_oracle: bool,
    seed: Option<u64>,
) -> Result<(), CliError> {
    let mut cfg: OptimizeConfig = read_json(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let sidecar = read_sidecar(data)?;
    let manifest = Manifest::read(data)?;
    let ranges = SampleRanges::from_dataset(&sidecar.spec);
    let beam = sidecar.spec.beam;

    let targets: Vec<TargetSpec> = match &cfg.targets {
        Some(triples) => triples
            .iter()
            .enumerate()
            .map(|(k, t)| TargetSpec {
                target: *t,
                budget: cfg.budget,
                restarts: cfg.restarts,
                seed: mix(cfg.seed, k as u64),
            })
            .collect(),
        None => targets_from_test_split(&manifest, cfg.n_targets, cfg.budget, cfg.restarts, cfg.seed)?,
    };
    for t in &targets {
        t.validate()?;
    }

    ensure_dir(out)?;
    let loaded_model: Option<Model>;
    let surrogate: Box<dyn Surrogate> = if use_oracle {
        Box::new(OracleSurrogate { beam })
    } else {
        let stem = checkpoint.ok_or_else(|| {
            CliError::Usage("--checkpoint is required unless --surrogate oracle".into())
        })?;
        let (model, _) = load_checkpoint(stem)?;
        loaded_model = Some(model);
        Box::new(CnnSurrogate::new(loaded_model.as_ref().expect("just set"))?)
    };

    let report = run_campaign(&targets, surrogate.as_ref(), &ranges, &sidecar.spec.raster, &beam, out)?;
    println!(
        "{} runs over {} targets: mean MAPE {:.3}%, median {:.3}%, mean cumulative deviation {:.3} Hz",
        report.aggregates.runs,
        targets.len(),
        report.aggregates.mean_mape,
        report.aggregates.median_mape,
        report.aggregates.mean_cumulative_deviation_hz
    );
    for (t, best) in report.aggregates.best_mape_per_target.iter().enumerate() {
        println!("  target {t}: best MAPE {best:.3}%");
    }
    println!("report: {}", out.join("campaign.json").display());
    Ok(())
}

pub fn import_labels(data: &Path, csv: &Path, source: &str) -> Result<(), CliError> {
    if !csv.exists() {
        return Err(CliError::Usage(format!(
            "label csv {} does not exist",
            csv.display()
        )));
    }
    let mut manifest = Manifest::read(data)?;
    let text = std::fs::read_to_string(csv)
        .map_err(|e| CliError::Data(format!("{}: {e}", csv.display())))?;
    import_external_labels(&mut manifest, &text, source)?;
    manifest.write(data)?;
    println!(
        "imported labels from {} into {} rows",
        csv.display(),
        manifest.rows.len()
    );
    Ok(())
}
