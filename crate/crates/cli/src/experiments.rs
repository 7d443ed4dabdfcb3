//! Experiment harnesses: data-efficiency ladder, input-resolution sweep, and
//! per-sample analytical-vs-model comparison. All emit plot-ready CSV.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use serde::Deserialize;

use beamsight::dataset::{
    generate_dataset, polygon_for_sample, read_sidecar, Manifest, SampleRow, Split,
};
use beamsight::mechanics::label_vector;
use beamsight::model::{
    build, evaluate, load_checkpoint, predict, train as train_model, ArchKind,
    ArchitectureConfig, TrainConfig,
};
use beamsight::seeds::{self, mix, Stream};

use crate::commands::read_json;
use crate::CliError;

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn ensure_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Largest-remainder allocation of a subset into 64% train / 16% val, the
/// remaining 20% share being omitted (the shared test set is fixed).
fn subset_counts(size: usize) -> (usize, usize) {
    let exact = [0.64 * size as f64, 0.16 * size as f64, 0.20 * size as f64];
    let mut counts = [0usize; 3];
    let mut fracs: Vec<(usize, f64)> = Vec::new();
    let mut assigned = 0usize;
    for i in 0..3 {
        counts[i] = exact[i].floor() as usize;
        assigned += counts[i];
        fracs.push((i, exact[i] - exact[i].floor()));
    }
    fracs.sort_by(|x, y| y.1.partial_cmp(&x.1).expect("finite").then(x.0.cmp(&y.0)));
    for (i, _) in fracs.iter().take(size - assigned) {
        counts[*i] += 1;
    }
    (counts[0], counts[1])
}

/// A subset manifest: chosen pool rows become train/val, the base test split
/// is kept verbatim, everything else is dropped.
fn subset_manifest(
    base: &Manifest,
    pool: &[&SampleRow],
    train_n: usize,
    val_n: usize,
    seed: u64,
) -> Result<Manifest, CliError> {
    if train_n + val_n > pool.len() {
        return Err(CliError::Data(format!(
            "subset needs {} pool rows but only {} are outside the test split",
            train_n + val_n,
            pool.len()
        )));
    }
    let mut order: Vec<usize> = (0..pool.len()).collect();
    let mut rng = seeds::rng(seed, Stream::EpochShuffle);
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let mut rows = Vec::with_capacity(train_n + val_n + base.split_len(Split::Test));
    for (k, &pool_idx) in order.iter().take(train_n + val_n).enumerate() {
        let mut row = pool[pool_idx].clone();
        row.split = if k < train_n { Split::Train } else { Split::Val };
        rows.push(row);
    }
    rows.extend(base.split_rows(Split::Test).cloned());
    rows.sort_by_key(|r| r.id);
    Ok(Manifest { rows })
}

#[derive(Debug, Deserialize)]
struct DataEfficiencyConfig {
    #[serde(default = "default_sizes")]
    sizes: Vec<usize>,
    #[serde(default = "default_seeds")]
    seeds: usize,
    #[serde(default = "default_arch")]
    arch_kind: ArchKind,
    #[serde(default = "TrainConfig::eigenfrequency")]
    train: TrainConfig,
}

fn default_sizes() -> Vec<usize> {
    vec![80, 250, 1000, 5000]
}
fn default_seeds() -> usize {
    4
}
fn default_arch() -> ArchKind {
    ArchKind::ConvnetExtended
}

impl Default for DataEfficiencyConfig {
    fn default() -> Self {
        DataEfficiencyConfig {
            sizes: default_sizes(),
            seeds: default_seeds(),
            arch_kind: default_arch(),
            train: TrainConfig::eigenfrequency(),
        }
    }
}

/// Trains `seeds` models per subset size against a shared held-out test set
/// and tabulates test MAPE versus dataset size.
pub fn data_efficiency(
    data: &Path,
    out: &Path,
    config: Option<&Path>,
    seed: Option<u64>,
) -> Result<(), CliError> {
    let cfg: DataEfficiencyConfig = match config {
        Some(p) => read_json(p)?,
        None => DataEfficiencyConfig::default(),
    };
    let exp_seed = seed.unwrap_or(cfg.train.seed);
    let sidecar = read_sidecar(data)?;
    let base = Manifest::read(data)?;
    let pool: Vec<&SampleRow> = base
        .rows
        .iter()
        .filter(|r| r.split != Split::Test)
        .collect();
    ensure_dir(out)?;

    let labels = sidecar.spec.label_set.clone();
    let arch = ArchitectureConfig {
        kind: cfg.arch_kind,
        img_size: sidecar.spec.raster.img_size,
        number_of_labels: labels.len(),
    };

    let mut csv = String::from("size,seed,test_mape_pct,epochs\n");
    let mut summary = String::from("size,median_test_mape_pct,min_test_mape_pct,max_test_mape_pct\n");
    let mut medians = Vec::new();
    for (size_idx, &size) in cfg.sizes.iter().enumerate() {
        let (train_n, val_n) = subset_counts(size);
        let mut mapes = Vec::new();
        for seed_idx in 0..cfg.seeds {
            let run_seed = mix(mix(exp_seed, size_idx as u64), seed_idx as u64);
            let subset = subset_manifest(&base, &pool, train_n, val_n, run_seed)?;
            let mut model = build(arch, &labels, mix(run_seed, 0x494E_4954))?;
            let tcfg = TrainConfig {
                seed: run_seed,
                ..cfg.train
            };
            let history = train_model(&mut model, &subset, data, &tcfg)?;
            let metrics = evaluate(&model, &subset, data, Split::Test)?;
            let _ = writeln!(
                csv,
                "{size},{seed_idx},{},{}",
                metrics.mape,
                history.epochs.len()
            );
            println!(
                "size {size} seed {seed_idx}: test MAPE {:.3}% ({} epochs)",
                metrics.mape,
                history.epochs.len()
            );
            mapes.push(metrics.mape);
        }
        let (min, max) = (
            mapes.iter().cloned().fold(f64::INFINITY, f64::min),
            mapes.iter().cloned().fold(0.0, f64::max),
        );
        let med = median(&mut mapes);
        let _ = writeln!(summary, "{size},{med},{min},{max}");
        medians.push((size, med));
    }
    write_file(&out.join("data_efficiency.csv"), &csv)?;
    write_file(&out.join("data_efficiency_summary.csv"), &summary)?;
    for (size, med) in &medians {
        println!("size {size}: median test MAPE {med:.3}%");
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
struct ResolutionConfig {
    #[serde(default = "default_img_sizes")]
    img_sizes: Vec<usize>,
    #[serde(default = "default_res_seeds")]
    seeds: usize,
    #[serde(default = "default_arch")]
    arch_kind: ArchKind,
    #[serde(default = "TrainConfig::eigenfrequency")]
    train: TrainConfig,
}

fn default_img_sizes() -> Vec<usize> {
    vec![32, 64]
}
fn default_res_seeds() -> usize {
    2
}

impl Default for ResolutionConfig {
    fn default() -> Self {
        ResolutionConfig {
            img_sizes: default_img_sizes(),
            seeds: default_res_seeds(),
            arch_kind: default_arch(),
            train: TrainConfig::eigenfrequency(),
        }
    }
}

/// Re-rasterizes the same polygons at each requested resolution (the polygon
/// streams do not depend on the raster config), trains at each, and
/// tabulates test MAPE versus input resolution.
pub fn resolution(
    data: &Path,
    out: &Path,
    config: Option<&Path>,
    seed: Option<u64>,
) -> Result<(), CliError> {
    let cfg: ResolutionConfig = match config {
        Some(p) => read_json(p)?,
        None => ResolutionConfig::default(),
    };
    let exp_seed = seed.unwrap_or(cfg.train.seed);
    let sidecar = read_sidecar(data)?;
    ensure_dir(out)?;
    let labels = sidecar.spec.label_set.clone();

    let mut csv = String::from("img_size,seed,test_mape_pct,epochs\n");
    let mut summary = String::from("img_size,median_test_mape_pct\n");
    for &img_size in &cfg.img_sizes {
        let (dir, manifest) = if img_size == sidecar.spec.raster.img_size {
            (data.to_path_buf(), Manifest::read(data)?)
        } else {
            let derived_dir = out.join(format!("ds_{img_size}px"));
            let mut derived_spec = sidecar.spec.clone();
            derived_spec.raster.img_size = img_size;
            let manifest = if derived_dir.join("manifest.csv").exists() {
                Manifest::read(&derived_dir)?
            } else {
                generate_dataset(&derived_spec, &derived_dir)?
            };
            (derived_dir, manifest)
        };
        let arch = ArchitectureConfig {
            kind: cfg.arch_kind,
            img_size,
            number_of_labels: labels.len(),
        };
        let mut mapes = Vec::new();
        for seed_idx in 0..cfg.seeds {
            let run_seed = mix(mix(exp_seed, img_size as u64), seed_idx as u64);
            let mut model = build(arch, &labels, mix(run_seed, 0x494E_4954))?;
            let tcfg = TrainConfig {
                seed: run_seed,
                ..cfg.train
            };
            let history = train_model(&mut model, &manifest, &dir, &tcfg)?;
            let metrics = evaluate(&model, &manifest, &dir, Split::Test)?;
            let _ = writeln!(
                csv,
                "{img_size},{seed_idx},{},{}",
                metrics.mape,
                history.epochs.len()
            );
            println!(
                "img {img_size} seed {seed_idx}: test MAPE {:.3}% ({} epochs)",
                metrics.mape,
                history.epochs.len()
            );
            mapes.push(metrics.mape);
        }
        let _ = writeln!(summary, "{img_size},{}", median(&mut mapes));
    }
    write_file(&out.join("resolution.csv"), &csv)?;
    write_file(&out.join("resolution_summary.csv"), &summary)?;
    Ok(())
}

#[derive(Debug, Deserialize)]
struct AnalyticalCompareConfig {
    checkpoint: std::path::PathBuf,
}

/// Per test sample: the stored label, the closed-form recomputation, and the
/// model prediction, with both absolute errors. With oracle-labeled data the
/// formula column reproduces the labels; with imported FEA labels it shows
/// the analytical formula's error next to the model's.
pub fn analytical_compare(data: &Path, out: &Path, config: Option<&Path>) -> Result<(), CliError> {
    let cfg: AnalyticalCompareConfig = match config {
        Some(p) => read_json(p)?,
        None => {
            return Err(CliError::Usage(
                "analytical_compare needs --config with a checkpoint path".into(),
            ))
        }
    };
    let sidecar = read_sidecar(data)?;
    let manifest = Manifest::read(data)?;
    let (model, _) = load_checkpoint(&cfg.checkpoint)?;
    ensure_dir(out)?;

    let rows: Vec<&SampleRow> = manifest.split_rows(Split::Test).collect();
    if rows.is_empty() {
        return Err(CliError::Data("test split is empty".into()));
    }
    let labels = model.labels.clone();
    let mut csv = String::from("id,label,truth,formula,model,formula_abs_err,model_abs_err\n");
    let mut formula_pct = vec![0.0f64; labels.len()];
    let mut model_pct = vec![0.0f64; labels.len()];
    for row in &rows {
        let (_, poly, _) = polygon_for_sample(&sidecar.spec, row.seed)?;
        let formula = label_vector(&poly, &sidecar.spec.beam, &labels)?;
        let img = manifest.load_image(data, row)?;
        let pred = predict(&model, &[img])?.remove(0);
        for (j, &label) in labels.iter().enumerate() {
            let truth = row.label(label);
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{},{}",
                row.id,
                label.name(),
                truth,
                formula[j],
                pred[j],
                (formula[j] - truth).abs(),
                (pred[j] - truth).abs()
            );
            if truth.abs() > 1e-12 {
                formula_pct[j] += 100.0 * (formula[j] - truth).abs() / truth.abs();
                model_pct[j] += 100.0 * (pred[j] - truth).abs() / truth.abs();
            }
        }
    }
    write_file(&out.join("analytical_compare.csv"), &csv)?;
    let n = rows.len() as f64;
    for (j, label) in labels.iter().enumerate() {
        println!(
            "{}: formula MAPE {:.3}%, model MAPE {:.3}%",
            label.name(),
            formula_pct[j] / n,
            model_pct[j] / n
        );
    }
    Ok(())
}
