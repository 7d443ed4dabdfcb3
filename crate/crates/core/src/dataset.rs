//! Labeled dataset generation, persistence, splitting, scaling and
//! external-label ingestion.
//!
//! A dataset is a directory: `manifest.csv` (one row per sample, fixed
//! column order), `dataset.json` (the full spec plus generation stats), and
//! `images/beam_<id>.pgm`. Per-sample seeds derive from the dataset seed and
//! the sample index alone, so generation is schedule-independent and every
//! byte reproduces from (spec, seed).

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{generate_polygon, GeometryError, Polygon, PolygonSpec};
use crate::mechanics::{label_vector, BeamSpec, Label};
use crate::raster::{decode_pgm, encode_pgm, rasterize, CrossSectionImage, RasterConfig, RasterError};
use crate::seeds::{self, mix, Stream};

/// Attempts per sample before recording a geometry failure.
pub const RETRY_BUDGET: u32 = 8;

const RETRY_TAG: u64 = 0x5245_5452;
const SPLIT_TAG: u64 = 0x5350_4C49;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("invalid dataset spec: {0}")]
    Parameter(String),
    #[error("oracle labels require twist_deg = 0 and taper_factor = 1 (got twist {twist_deg}, taper {taper_factor}); generate with pending labels and import external ones")]
    OracleGuard { twist_deg: f64, taper_factor: f64 },
    #[error("manifest format at row {row}: {message}")]
    Format { row: usize, message: String },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// How manifest label columns get filled at generation time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    /// Closed-form labels; valid only for untwisted, untapered beams.
    Oracle,
    /// Zero placeholders awaiting [`import_external_labels`].
    Pending,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub size: usize,
    pub n_vertices: (usize, usize),
    pub avg_radius_mm: (f64, f64),
    pub irregularity: f64,
    pub spikiness: f64,
    pub beam: BeamSpec,
    pub raster: RasterConfig,
    pub label_set: Vec<Label>,
    pub label_mode: LabelMode,
    /// Extrusion metadata only; labels for twisted beams must be imported.
    pub twist_deg: f64,
    /// Extrusion metadata only; 1.0 means constant cross-section.
    pub taper_factor: f64,
    pub split_ratios: (f64, f64, f64),
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            size: 100,
            n_vertices: (3, 30),
            avg_radius_mm: (24.0, 63.0),
            irregularity: 0.4,
            spikiness: 0.15,
            beam: BeamSpec::default(),
            raster: RasterConfig::default(),
            label_set: Label::ALL.to_vec(),
            label_mode: LabelMode::Oracle,
            twist_deg: 0.0,
            taper_factor: 1.0,
            split_ratios: (0.64, 0.16, 0.20),
            seed: 0,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.size == 0 {
            return Err(DatasetError::Parameter("size must be > 0".into()));
        }
        if self.n_vertices.0 < 3 || self.n_vertices.0 > self.n_vertices.1 {
            return Err(DatasetError::Parameter(format!(
                "n_vertices range {:?} invalid (min 3, lo <= hi)",
                self.n_vertices
            )));
        }
        if !(self.avg_radius_mm.0 > 0.0) || self.avg_radius_mm.0 > self.avg_radius_mm.1 {
            return Err(DatasetError::Parameter(format!(
                "avg_radius range {:?} invalid",
                self.avg_radius_mm
            )));
        }
        for (name, v) in [("irregularity", self.irregularity), ("spikiness", self.spikiness)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(DatasetError::Parameter(format!("{name} {v} outside [0,1]")));
            }
        }
        if self.avg_radius_mm.1 * crate::geometry::RADIUS_CLIP.1 >= self.raster.world_half_width {
            return Err(DatasetError::Parameter(format!(
                "world window ±{} mm cannot hold radius {} mm after spikiness clipping",
                self.raster.world_half_width,
                self.avg_radius_mm.1 * crate::geometry::RADIUS_CLIP.1
            )));
        }
        self.raster.validate()?;
        self.beam.validate()?;
        if self.label_set.is_empty() {
            return Err(DatasetError::Parameter("label_set is empty".into()));
        }
        let mut sorted = self.label_set.clone();
        sorted.sort();
        sorted.dedup();
        if sorted != self.label_set {
            return Err(DatasetError::Parameter(
                "label_set must be in canonical order without duplicates".into(),
            ));
        }
        let (a, b, c) = self.split_ratios;
        if !(a >= 0.0 && b >= 0.0 && c >= 0.0) || (a + b + c - 1.0).abs() > 1e-9 {
            return Err(DatasetError::Parameter(format!(
                "split ratios {:?} must be non-negative and sum to 1",
                self.split_ratios
            )));
        }
        if self.label_mode == LabelMode::Oracle
            && (self.twist_deg != 0.0 || self.taper_factor != 1.0)
        {
            return Err(DatasetError::OracleGuard {
                twist_deg: self.twist_deg,
                taper_factor: self.taper_factor,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn tag(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    fn from_tag(tag: &str) -> Option<Split> {
        match tag {
            "train" => Some(Split::Train),
            "val" => Some(Split::Val),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRow {
    pub id: u64,
    pub seed: u64,
    pub n_vertices: usize,
    pub avg_radius_mm: f64,
    pub image_path: String,
    /// All six labels in canonical order.
    pub labels: [f64; 6],
    pub label_source: String,
    pub split: Split,
}

impl SampleRow {
    pub fn label(&self, label: Label) -> f64 {
        let idx = Label::ALL.iter().position(|&l| l == label).expect("canonical");
        self.labels[idx]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub rows: Vec<SampleRow>,
}

/// Generation outcome persisted beside the spec in `dataset.json`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub failed_ids: Vec<u64>,
    /// (id, attempts) for samples that needed more than one attempt.
    pub retried: Vec<(u64, u32)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSidecar {
    pub spec: DatasetSpec,
    pub generation: GenerationStats,
}

const MANIFEST_HEADER: &str = "id,seed,n_vertices,avg_radius_mm,image_path,area_mm2,volume_mm3,max_deflection_mm,f1_hz,f2_hz,f3_hz,label_source,split";

impl Manifest {
    pub fn split_rows(&self, split: Split) -> impl Iterator<Item = &SampleRow> {
        self.rows.iter().filter(move |r| r.split == split)
    }

    pub fn split_len(&self, split: Split) -> usize {
        self.split_rows(split).count()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.rows.len() * 128);
        out.push_str(MANIFEST_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = write!(
                out,
                "{},{},{},{},{}",
                r.id, r.seed, r.n_vertices, r.avg_radius_mm, r.image_path
            );
            for v in r.labels {
                let _ = write!(out, ",{v}");
            }
            let _ = writeln!(out, ",{},{}", r.label_source, r.split.tag());
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Manifest, DatasetError> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h == MANIFEST_HEADER => {}
            other => {
                return Err(DatasetError::Format {
                    row: 1,
                    message: format!("bad header {other:?}"),
                })
            }
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let row_no = i + 2;
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 13 {
                return Err(DatasetError::Format {
                    row: row_no,
                    message: format!("expected 13 columns, got {}", cols.len()),
                });
            }
            let fail = |message: String| DatasetError::Format { row: row_no, message };
            let id: u64 = cols[0].parse().map_err(|_| fail(format!("bad id {:?}", cols[0])))?;
            let seed: u64 = cols[1].parse().map_err(|_| fail(format!("bad seed {:?}", cols[1])))?;
            let n_vertices: usize = cols[2]
                .parse()
                .map_err(|_| fail(format!("bad n_vertices {:?}", cols[2])))?;
            let avg_radius_mm: f64 = cols[3]
                .parse()
                .map_err(|_| fail(format!("bad avg_radius {:?}", cols[3])))?;
            let mut labels = [0.0f64; 6];
            for (j, slot) in labels.iter_mut().enumerate() {
                let raw = cols[5 + j];
                let v: f64 = raw.parse().map_err(|_| fail(format!("bad label {raw:?}")))?;
                if !v.is_finite() {
                    return Err(fail(format!("non-finite label {raw:?}")));
                }
                *slot = v;
            }
            let split = Split::from_tag(cols[12])
                .ok_or_else(|| fail(format!("unknown split tag {:?}", cols[12])))?;
            rows.push(SampleRow {
                id,
                seed,
                n_vertices,
                avg_radius_mm,
                image_path: cols[4].to_string(),
                labels,
                label_source: cols[11].to_string(),
                split,
            });
        }
        let manifest = Manifest { rows };
        manifest.validate_ids()?;
        Ok(manifest)
    }

    fn validate_ids(&self) -> Result<(), DatasetError> {
        let mut seen = BTreeSet::new();
        for (i, r) in self.rows.iter().enumerate() {
            if !seen.insert(r.id) {
                return Err(DatasetError::Format {
                    row: i + 2,
                    message: format!("duplicate id {}", r.id),
                });
            }
        }
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<(), DatasetError> {
        let path = dir.join("manifest.csv");
        std::fs::write(&path, self.to_csv()).map_err(io_err(&path))
    }

    pub fn read(dir: &Path) -> Result<Manifest, DatasetError> {
        let path = dir.join("manifest.csv");
        let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
        Manifest::from_csv(&text)
    }

    /// Loads and decodes a row's image from the dataset directory.
    pub fn load_image(&self, dir: &Path, row: &SampleRow) -> Result<CrossSectionImage, DatasetError> {
        let path = dir.join(&row.image_path);
        let bytes = std::fs::read(&path).map_err(io_err(&path))?;
        Ok(decode_pgm(&bytes)?)
    }
}

/// Draws a sample's polygon parameters and shape from its seed, retrying
/// degenerate draws with offset seeds. Returns the spec that succeeded and
/// the attempt count. Deterministic per seed; this is the exact sequence
/// the dataset generator runs, so manifest rows can be replayed.
pub fn polygon_for_sample(
    spec: &DatasetSpec,
    sample_seed: u64,
) -> Result<(PolygonSpec, Polygon, u32), DatasetError> {
    let mut rng = seeds::rng(sample_seed, Stream::SampleParams);
    let n_vertices = rng.gen_range(spec.n_vertices.0..=spec.n_vertices.1);
    let avg_radius = rng.gen_range(spec.avg_radius_mm.0..=spec.avg_radius_mm.1);
    let mut last_err = None;
    for attempt in 0..RETRY_BUDGET {
        let pspec = PolygonSpec {
            n_vertices,
            avg_radius,
            irregularity: spec.irregularity,
            spikiness: spec.spikiness,
            seed: mix(sample_seed, RETRY_TAG + attempt as u64),
        };
        match generate_polygon(&pspec) {
            Ok(poly) => return Ok((pspec, poly, attempt + 1)),
            Err(e @ GeometryError::Degenerate(_)) => last_err = Some(e),
            Err(e) => return Err(e.into()),
        }
    }
    Err(last_err.expect("at least one attempt").into())
}

/// Generates the dataset into `out_dir`: images, manifest and sidecar.
/// Samples whose geometry stays degenerate through the retry budget are
/// skipped (their ids left unused) and reported in the sidecar stats.
pub fn generate_dataset(spec: &DatasetSpec, out_dir: &Path) -> Result<Manifest, DatasetError> {
    spec.validate()?;
    let images_dir = out_dir.join("images");
    std::fs::create_dir_all(&images_dir).map_err(io_err(&images_dir))?;

    let results: Vec<(u64, Result<(SampleRow, u32), DatasetError>)> = (0..spec.size as u64)
        .into_par_iter()
        .map(|id| {
            let sample_seed = mix(spec.seed, id);
            let outcome = (|| {
                let (pspec, poly, attempts) = polygon_for_sample(spec, sample_seed)?;
                let img = rasterize(&poly, &spec.raster)?;
                let labels = match spec.label_mode {
                    LabelMode::Oracle => {
                        let v = label_vector(&poly, &spec.beam, &Label::ALL)?;
                        let mut arr = [0.0f64; 6];
                        arr.copy_from_slice(&v);
                        arr
                    }
                    LabelMode::Pending => [0.0; 6],
                };
                let image_path = format!("images/beam_{id}.pgm");
                let path = out_dir.join(&image_path);
                std::fs::write(&path, encode_pgm(&img)).map_err(io_err(&path))?;
                let row = SampleRow {
                    id,
                    seed: sample_seed,
                    n_vertices: pspec.n_vertices,
                    avg_radius_mm: pspec.avg_radius,
                    image_path,
                    labels,
                    label_source: match spec.label_mode {
                        LabelMode::Oracle => "oracle".to_string(),
                        LabelMode::Pending => "pending".to_string(),
                    },
                    split: Split::Train,
                };
                Ok((row, attempts))
            })();
            (id, outcome)
        })
        .collect();

    let mut rows = Vec::with_capacity(spec.size);
    let mut stats = GenerationStats::default();
    for (id, outcome) in results {
        match outcome {
            Ok((row, attempts)) => {
                if attempts > 1 {
                    stats.retried.push((id, attempts));
                }
                rows.push(row);
            }
            Err(DatasetError::Geometry(GeometryError::Degenerate(_))) => {
                stats.failed_ids.push(id);
            }
            Err(e) => return Err(e),
        }
    }

    let mut manifest = Manifest { rows };
    split_dataset(&mut manifest, spec.split_ratios, mix(spec.seed, SPLIT_TAG))?;
    manifest.write(out_dir)?;

    let sidecar = DatasetSidecar {
        spec: spec.clone(),
        generation: stats,
    };
    let path = out_dir.join("dataset.json");
    let json = serde_json::to_string_pretty(&sidecar).expect("serializable sidecar");
    std::fs::write(&path, json).map_err(io_err(&path))?;
    Ok(manifest)
}

pub fn read_sidecar(dir: &Path) -> Result<DatasetSidecar, DatasetError> {
    let path = dir.join("dataset.json");
    let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&text).map_err(|e| DatasetError::Format {
        row: 0,
        message: format!("dataset.json: {e}"),
    })
}

/// Deterministically re-tags rows with train/val/test splits.
///
/// Counts are floors of `ratio * n` with the remainder distributed by
/// largest fractional part (ties broken in train, val, test order). The
/// shuffled assignment depends only on (row order, ratios, seed).
pub fn split_dataset(
    manifest: &mut Manifest,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<(), DatasetError> {
    let (a, b, c) = ratios;
    if !(a >= 0.0 && b >= 0.0 && c >= 0.0) || (a + b + c - 1.0).abs() > 1e-9 {
        return Err(DatasetError::Parameter(format!(
            "split ratios {ratios:?} must be non-negative and sum to 1"
        )));
    }
    let n = manifest.rows.len();
    if n == 0 {
        return Ok(());
    }
    let exact = [a * n as f64, b * n as f64, c * n as f64];
    let mut counts = [0usize; 3];
    let mut assigned = 0usize;
    let mut fracs: Vec<(usize, f64)> = Vec::with_capacity(3);
    for i in 0..3 {
        counts[i] = exact[i].floor() as usize;
        assigned += counts[i];
        fracs.push((i, exact[i] - exact[i].floor()));
    }
    fracs.sort_by(|x, y| y.1.partial_cmp(&x.1).expect("finite").then(x.0.cmp(&y.0)));
    for (i, _) in fracs.iter().take(n - assigned) {
        counts[*i] += 1;
    }

    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = seeds::rng(seed, Stream::EpochShuffle);
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    for (pos, &row_idx) in order.iter().enumerate() {
        manifest.rows[row_idx].split = if pos < counts[0] {
            Split::Train
        } else if pos < counts[0] + counts[1] {
            Split::Val
        } else {
            Split::Test
        };
    }
    Ok(())
}

/// Standardization fitted on the training split only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelScaler {
    pub labels: Vec<Label>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl LabelScaler {
    /// Fits per-label mean/std (population) over train rows.
    pub fn fit(manifest: &Manifest, labels: &[Label]) -> Result<LabelScaler, DatasetError> {
        let train: Vec<&SampleRow> = manifest.split_rows(Split::Train).collect();
        if train.is_empty() {
            return Err(DatasetError::Parameter("train split is empty".into()));
        }
        let n = train.len() as f64;
        let mut mean = Vec::with_capacity(labels.len());
        let mut std = Vec::with_capacity(labels.len());
        for &label in labels {
            let m = train.iter().map(|r| r.label(label)).sum::<f64>() / n;
            let var = train
                .iter()
                .map(|r| {
                    let d = r.label(label) - m;
                    d * d
                })
                .sum::<f64>()
                / n;
            let s = var.sqrt();
            if s <= 0.0 {
                return Err(DatasetError::Parameter(format!(
                    "label {} has zero variance on the train split",
                    label.name()
                )));
            }
            mean.push(m);
            std.push(s);
        }
        Ok(LabelScaler {
            labels: labels.to_vec(),
            mean,
            std,
        })
    }

    pub fn apply(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    pub fn invert(&self, scaled: &[f64]) -> Vec<f64> {
        scaled
            .iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((z, m), s)| z * s + m)
            .collect()
    }
}

/// Merges an external label CSV (header `id,<label>...`) into the manifest,
/// overriding those columns and stamping the provenance. The CSV must cover
/// every manifest id exactly.
pub fn import_external_labels(
    manifest: &mut Manifest,
    csv_text: &str,
    source_name: &str,
) -> Result<(), DatasetError> {
    let mut lines = csv_text.lines().enumerate();
    let (_, header) = lines.next().ok_or(DatasetError::Format {
        row: 1,
        message: "empty csv".into(),
    })?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.first() != Some(&"id") {
        return Err(DatasetError::Format {
            row: 1,
            message: format!("first column must be id, got {:?}", cols.first()),
        });
    }
    let mut labels = Vec::new();
    for &c in &cols[1..] {
        let label = Label::from_name(c).ok_or_else(|| DatasetError::Format {
            row: 1,
            message: format!("unknown label column {c:?}"),
        })?;
        labels.push(label);
    }
    if labels.is_empty() {
        return Err(DatasetError::Format {
            row: 1,
            message: "no label columns".into(),
        });
    }

    let mut updates: Vec<(u64, Vec<f64>)> = Vec::new();
    for (i, line) in lines {
        let row_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != labels.len() + 1 {
            return Err(DatasetError::Format {
                row: row_no,
                message: format!("expected {} columns, got {}", labels.len() + 1, parts.len()),
            });
        }
        let id: u64 = parts[0].parse().map_err(|_| DatasetError::Format {
            row: row_no,
            message: format!("bad id {:?}", parts[0]),
        })?;
        let mut values = Vec::with_capacity(labels.len());
        for p in &parts[1..] {
            let v: f64 = p.parse().map_err(|_| DatasetError::Format {
                row: row_no,
                message: format!("bad value {p:?}"),
            })?;
            if !v.is_finite() {
                return Err(DatasetError::Format {
                    row: row_no,
                    message: format!("non-finite value {p:?}"),
                });
            }
            values.push(v);
        }
        updates.push((id, values));
    }

    let mut by_id: std::collections::BTreeMap<u64, usize> = manifest
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| (r.id, i))
        .collect();
    let mut covered = BTreeSet::new();
    for (id, values) in &updates {
        let Some(&row_idx) = by_id.get(id) else {
            return Err(DatasetError::Format {
                row: 0,
                message: format!("csv references unknown id {id}"),
            });
        };
        covered.insert(*id);
        for (&label, &v) in labels.iter().zip(values) {
            let idx = Label::ALL.iter().position(|&l| l == label).expect("canonical");
            manifest.rows[row_idx].labels[idx] = v;
        }
        manifest.rows[row_idx].label_source = format!("external:{source_name}");
    }
    by_id.retain(|id, _| !covered.contains(id));
    if !by_id.is_empty() {
        let missing: Vec<String> = by_id.keys().take(10).map(|id| id.to_string()).collect();
        return Err(DatasetError::Format {
            row: 0,
            message: format!(
                "csv missing {} manifest ids: {}{}",
                by_id.len(),
                missing.join(", "),
                if by_id.len() > 10 { ", ..." } else { "" }
            ),
        });
    }
    Ok(())
}
