//! Random search over cross-section shapes with a surrogate fitness measure,
//! plus closed-form verification of the found sections.
//!
//! Each step draws an independent candidate from the generator distribution,
//! scores the predicted first three eigenfrequencies against the target by
//! MSE in Hz^2, and keeps strictly better candidates. Restarts and targets
//! parallelize freely; per-run seeds derive from (target seed, restart), so
//! reports do not depend on scheduling.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DatasetError, DatasetSpec, Manifest, Split};
use crate::geometry::{
    generate_polygon, principal_axes, section_properties, GeometryError, Polygon, PolygonSpec,
};
use crate::mechanics::{eigenfrequencies, label_vector, BeamSpec, Label};
use crate::model::{check_labels, predict, Model, ModelError};
use crate::raster::{rasterize, CrossSectionImage, RasterConfig, RasterError};
use crate::seeds::{self, mix, Stream};

const CANDIDATE_BATCH: usize = 256;
const POLY_TAG: u64 = 0x504F_4C59;

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("search parameter: {0}")]
    Parameter(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SearchError + '_ {
    move |source| SearchError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// A target eigenfrequency triple and the search budget for it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    /// [f1, f2, f3] in Hz, ascending.
    pub target: [f64; 3],
    pub budget: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl TargetSpec {
    pub fn validate(&self) -> Result<(), SearchError> {
        if !self.target.iter().all(|f| f.is_finite() && *f > 0.0) {
            return Err(SearchError::Parameter(format!(
                "target frequencies must be positive, got {:?}",
                self.target
            )));
        }
        if !(self.target[0] <= self.target[1] && self.target[1] <= self.target[2]) {
            return Err(SearchError::Parameter(format!(
                "target frequencies must be ascending, got {:?}",
                self.target
            )));
        }
        if self.budget == 0 || self.restarts == 0 {
            return Err(SearchError::Parameter(
                "budget and restarts must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Candidate distribution for the search, taken from a dataset spec so the
/// surrogate stays in-distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleRanges {
    pub n_vertices: (usize, usize),
    pub avg_radius_mm: (f64, f64),
    pub irregularity: f64,
    pub spikiness: f64,
}

impl SampleRanges {
    pub fn from_dataset(spec: &DatasetSpec) -> SampleRanges {
        SampleRanges {
            n_vertices: spec.n_vertices,
            avg_radius_mm: spec.avg_radius_mm,
            irregularity: spec.irregularity,
            spikiness: spec.spikiness,
        }
    }

    fn validate(&self, raster: &RasterConfig) -> Result<(), SearchError> {
        if self.n_vertices.0 < 3 || self.n_vertices.0 > self.n_vertices.1 {
            return Err(SearchError::Parameter(format!(
                "n_vertices range {:?} invalid",
                self.n_vertices
            )));
        }
        if !(self.avg_radius_mm.0 > 0.0) || self.avg_radius_mm.0 > self.avg_radius_mm.1 {
            return Err(SearchError::Parameter(format!(
                "avg_radius range {:?} invalid",
                self.avg_radius_mm
            )));
        }
        if self.avg_radius_mm.1 * crate::geometry::RADIUS_CLIP.1 >= raster.world_half_width {
            return Err(SearchError::Parameter(
                "radius range exceeds the raster window".into(),
            ));
        }
        Ok(())
    }
}

/// Predicts [f1, f2, f3] for a batch of candidates.
pub trait Surrogate: Sync {
    fn predict_batch(
        &self,
        candidates: &[(PolygonSpec, Polygon, CrossSectionImage)],
    ) -> Result<Vec<[f64; 3]>, SearchError>;
}

/// The trained CNN: reads only the rasterized image.
pub struct CnnSurrogate<'a> {
    model: &'a Model,
}

impl<'a> CnnSurrogate<'a> {
    pub fn new(model: &'a Model) -> Result<Self, SearchError> {
        check_labels(model, &Label::FREQUENCIES)?;
        Ok(CnnSurrogate { model })
    }
}

impl Surrogate for CnnSurrogate<'_> {
    fn predict_batch(
        &self,
        candidates: &[(PolygonSpec, Polygon, CrossSectionImage)],
    ) -> Result<Vec<[f64; 3]>, SearchError> {
        let images: Vec<CrossSectionImage> =
            candidates.iter().map(|(_, _, img)| img.clone()).collect();
        let preds = predict(self.model, &images)?;
        Ok(preds
            .into_iter()
            .map(|p| [p[0], p[1], p[2]])
            .collect())
    }
}

/// Closed-form frequencies instead of the CNN: a perfect surrogate for
/// wiring checks and upper-bound baselines.
pub struct OracleSurrogate {
    pub beam: BeamSpec,
}

impl Surrogate for OracleSurrogate {
    fn predict_batch(
        &self,
        candidates: &[(PolygonSpec, Polygon, CrossSectionImage)],
    ) -> Result<Vec<[f64; 3]>, SearchError> {
        candidates
            .iter()
            .map(|(_, poly, _)| {
                let v = label_vector(poly, &self.beam, &Label::FREQUENCIES)?;
                Ok([v[0], v[1], v[2]])
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best_spec: PolygonSpec,
    pub best_polygon: Polygon,
    pub predicted: [f64; 3],
    /// MSE of `predicted` against the target, Hz^2.
    pub surrogate_mse: f64,
    /// (step, best-so-far MSE) recorded at improvements; non-increasing.
    pub trace: Vec<(usize, f64)>,
    pub evaluations: usize,
    pub skipped_degenerate: usize,
    pub wall_time_s: f64,
}

fn freq_mse(pred: &[f64; 3], target: &[f64; 3]) -> f64 {
    pred.iter()
        .zip(target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / 3.0
}

/// Draws candidates, scores them through the surrogate, and keeps the best.
/// Degenerate polygon draws consume budget and are counted. Deterministic
/// for a given (target, ranges, seed), independent of batch scheduling.
pub fn random_search(
    target: &TargetSpec,
    surrogate: &dyn Surrogate,
    ranges: &SampleRanges,
    raster: &RasterConfig,
    run_seed: u64,
) -> Result<SearchResult, SearchError> {
    target.validate()?;
    ranges.validate(raster)?;
    let started = Instant::now();

    let mut best: Option<(f64, PolygonSpec, Polygon, [f64; 3], usize)> = None;
    let mut trace: Vec<(usize, f64)> = Vec::new();
    let mut skipped = 0usize;
    let mut batch: Vec<(usize, (PolygonSpec, Polygon, CrossSectionImage))> =
        Vec::with_capacity(CANDIDATE_BATCH);

    let flush = |batch: &mut Vec<(usize, (PolygonSpec, Polygon, CrossSectionImage))>,
                     best: &mut Option<(f64, PolygonSpec, Polygon, [f64; 3], usize)>,
                     trace: &mut Vec<(usize, f64)>|
     -> Result<(), SearchError> {
        if batch.is_empty() {
            return Ok(());
        }
        let candidates: Vec<(PolygonSpec, Polygon, CrossSectionImage)> =
            batch.iter().map(|(_, c)| c.clone()).collect();
        let preds = surrogate.predict_batch(&candidates)?;
        for ((step, (pspec, poly, _)), pred) in batch.drain(..).zip(preds) {
            let mse = freq_mse(&pred, &target.target);
            let better = best.as_ref().map_or(true, |(b, ..)| mse < *b);
            if better {
                *best = Some((mse, pspec, poly, pred, step));
                trace.push((step, mse));
            }
        }
        Ok(())
    };

    for step in 0..target.budget {
        let step_seed = mix(run_seed, step as u64);
        let mut rng = seeds::rng(step_seed, Stream::SearchSampling);
        let pspec = PolygonSpec {
            n_vertices: rng.gen_range(ranges.n_vertices.0..=ranges.n_vertices.1),
            avg_radius: rng.gen_range(ranges.avg_radius_mm.0..=ranges.avg_radius_mm.1),
            irregularity: ranges.irregularity,
            spikiness: ranges.spikiness,
            seed: mix(step_seed, POLY_TAG),
        };
        let poly = match generate_polygon(&pspec) {
            Ok(p) => p,
            Err(GeometryError::Degenerate(_)) => {
                skipped += 1;
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let img = rasterize(&poly, raster)?;
        batch.push((step, (pspec, poly, img)));
        if batch.len() >= CANDIDATE_BATCH {
            flush(&mut batch, &mut best, &mut trace)?;
        }
    }
    flush(&mut batch, &mut best, &mut trace)?;

    let (mse, pspec, poly, pred, _) = best.ok_or_else(|| {
        SearchError::Parameter("every candidate draw was degenerate; widen the ranges".into())
    })?;
    Ok(SearchResult {
        best_spec: pspec,
        best_polygon: poly,
        predicted: pred,
        surrogate_mse: mse,
        trace,
        evaluations: target.budget,
        skipped_degenerate: skipped,
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}

/// Closed-form verification of a found section against the target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub oracle: [f64; 3],
    pub abs_error_hz: [f64; 3],
    pub cumulative_deviation_hz: f64,
    /// 100 * mean(|target - oracle| / target), percent.
    pub mape: f64,
}

/// Depends only on the found polygon and the beam, never on the surrogate.
pub fn verify(
    result: &SearchResult,
    target: &TargetSpec,
    beam: &BeamSpec,
) -> Result<VerificationReport, SearchError> {
    let props = section_properties(&result.best_polygon)?;
    let modal = eigenfrequencies(beam, &principal_axes(&props), props.area);
    let oracle = modal.frequencies;
    let mut abs_error = [0.0; 3];
    let mut mape = 0.0;
    for i in 0..3 {
        abs_error[i] = (target.target[i] - oracle[i]).abs();
        mape += abs_error[i] / target.target[i];
    }
    Ok(VerificationReport {
        oracle,
        abs_error_hz: abs_error,
        cumulative_deviation_hz: abs_error.iter().sum(),
        mape: 100.0 * mape / 3.0,
    })
}

/// One search run inside a campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignRun {
    pub target_idx: usize,
    pub restart_idx: usize,
    pub target: [f64; 3],
    pub result: SearchResult,
    pub verification: VerificationReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignAggregates {
    pub runs: usize,
    pub mean_mape: f64,
    pub median_mape: f64,
    pub mean_cumulative_deviation_hz: f64,
    /// Per target: the best (minimum) verified MAPE over its restarts.
    pub best_mape_per_target: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CampaignReport {
    pub targets: Vec<TargetSpec>,
    pub ranges: SampleRanges,
    pub aggregates: CampaignAggregates,
}

/// Samples target triples from the oracle labels of test-split rows. Search
/// targets must never come from train/val rows, which the surrogate saw.
pub fn targets_from_test_split(
    manifest: &Manifest,
    n_targets: usize,
    budget: usize,
    restarts: usize,
    seed: u64,
) -> Result<Vec<TargetSpec>, SearchError> {
    let test_rows: Vec<_> = manifest.split_rows(Split::Test).collect();
    if test_rows.is_empty() {
        return Err(SearchError::Parameter("test split is empty".into()));
    }
    if n_targets == 0 || n_targets > test_rows.len() {
        return Err(SearchError::Parameter(format!(
            "need 1..={} targets, asked for {n_targets}",
            test_rows.len()
        )));
    }
    // Seeded sample without replacement.
    let mut order: Vec<usize> = (0..test_rows.len()).collect();
    let mut rng = seeds::rng(seed, Stream::SearchSampling);
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    Ok(order[..n_targets]
        .iter()
        .enumerate()
        .map(|(k, &i)| {
            let row = test_rows[i];
            TargetSpec {
                target: [
                    row.label(Label::F1Hz),
                    row.label(Label::F2Hz),
                    row.label(Label::F3Hz),
                ],
                budget,
                restarts,
                seed: mix(seed, k as u64),
            }
        })
        .collect())
}

/// Runs every (target, restart) pair, verifies the found sections, and
/// writes `campaign.json`, `results.csv` and the best polygon per target
/// into `out_dir`.
pub fn run_campaign(
    targets: &[TargetSpec],
    surrogate: &dyn Surrogate,
    ranges: &SampleRanges,
    raster: &RasterConfig,
    beam: &BeamSpec,
    out_dir: &Path,
) -> Result<CampaignReport, SearchError> {
    if targets.is_empty() {
        return Err(SearchError::Parameter("no targets given".into()));
    }
    for t in targets {
        t.validate()?;
    }
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;

    let jobs: Vec<(usize, usize)> = targets
        .iter()
        .enumerate()
        .flat_map(|(t, spec)| (0..spec.restarts).map(move |r| (t, r)))
        .collect();
    let runs: Vec<Result<CampaignRun, SearchError>> = jobs
        .into_par_iter()
        .map(|(target_idx, restart_idx)| {
            let target = &targets[target_idx];
            let run_seed = mix(target.seed, restart_idx as u64);
            let result = random_search(target, surrogate, ranges, raster, run_seed)?;
            let verification = verify(&result, target, beam)?;
            Ok(CampaignRun {
                target_idx,
                restart_idx,
                target: target.target,
                result,
                verification,
            })
        })
        .collect();
    let runs: Vec<CampaignRun> = runs.into_iter().collect::<Result<_, _>>()?;

    let mut mapes: Vec<f64> = runs.iter().map(|r| r.verification.mape).collect();
    let mean_mape = mapes.iter().sum::<f64>() / mapes.len() as f64;
    mapes.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let median_mape = if mapes.len() % 2 == 1 {
        mapes[mapes.len() / 2]
    } else {
        0.5 * (mapes[mapes.len() / 2 - 1] + mapes[mapes.len() / 2])
    };
    let mean_cum = runs
        .iter()
        .map(|r| r.verification.cumulative_deviation_hz)
        .sum::<f64>()
        / runs.len() as f64;
    let best_per_target: Vec<f64> = (0..targets.len())
        .map(|t| {
            runs.iter()
                .filter(|r| r.target_idx == t)
                .map(|r| r.verification.mape)
                .fold(f64::INFINITY, f64::min)
        })
        .collect();

    // Export the best polygon per target (lowest verified MAPE; earlier
    // restart wins ties).
    for t in 0..targets.len() {
        let best = runs
            .iter()
            .filter(|r| r.target_idx == t)
            .min_by(|a, b| {
                a.verification
                    .mape
                    .partial_cmp(&b.verification.mape)
                    .expect("finite")
                    .then(a.restart_idx.cmp(&b.restart_idx))
            })
            .expect("restarts >= 1");
        let path = out_dir.join(format!("best_target_{t}.csv"));
        best.result.best_polygon.write_csv(&path)?;
    }

    let mut csv = String::from(
        "target_idx,restart_idx,target_f1_hz,target_f2_hz,target_f3_hz,\
         found_seed,found_n_vertices,found_avg_radius_mm,\
         predicted_f1_hz,predicted_f2_hz,predicted_f3_hz,\
         oracle_f1_hz,oracle_f2_hz,oracle_f3_hz,\
         mape_pct,cumulative_deviation_hz,surrogate_mse_hz2,steps,wall_time_s\n",
    );
    for r in &runs {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.target_idx,
            r.restart_idx,
            r.target[0],
            r.target[1],
            r.target[2],
            r.result.best_spec.seed,
            r.result.best_spec.n_vertices,
            r.result.best_spec.avg_radius,
            r.result.predicted[0],
            r.result.predicted[1],
            r.result.predicted[2],
            r.verification.oracle[0],
            r.verification.oracle[1],
            r.verification.oracle[2],
            r.verification.mape,
            r.verification.cumulative_deviation_hz,
            r.result.surrogate_mse,
            r.result.evaluations,
            r.result.wall_time_s,
        );
    }
    let csv_path = out_dir.join("results.csv");
    std::fs::write(&csv_path, csv).map_err(io_err(&csv_path))?;

    let report = CampaignReport {
        targets: targets.to_vec(),
        ranges: *ranges,
        aggregates: CampaignAggregates {
            runs: runs.len(),
            mean_mape,
            median_mape,
            mean_cumulative_deviation_hz: mean_cum,
            best_mape_per_target: best_per_target,
        },
    };
    let json_path = out_dir.join("campaign.json");
    let json = serde_json::to_string_pretty(&report).expect("serializable report");
    std::fs::write(&json_path, json).map_err(io_err(&json_path))?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_ranges() -> SampleRanges {
        SampleRanges {
            n_vertices: (3, 12),
            avg_radius_mm: (24.0, 50.0),
            irregularity: 0.4,
            spikiness: 0.15,
        }
    }

    fn oracle_target(seed: u64) -> ([f64; 3], BeamSpec) {
        let beam = BeamSpec::default();
        let pspec = PolygonSpec {
            n_vertices: 8,
            avg_radius: 35.0,
            irregularity: 0.4,
            spikiness: 0.15,
            seed,
        };
        let poly = generate_polygon(&pspec).unwrap();
        let v = label_vector(&poly, &beam, &Label::FREQUENCIES).unwrap();
        ([v[0], v[1], v[2]], beam)
    }

    #[test]
    fn budget_one_returns_single_candidate() {
        let (target, beam) = oracle_target(4);
        let spec = TargetSpec {
            target,
            budget: 1,
            restarts: 1,
            seed: 9,
        };
        let surrogate = OracleSurrogate { beam };
        let r = random_search(&spec, &surrogate, &test_ranges(), &RasterConfig::default(), 1)
            .unwrap();
        assert_eq!(r.evaluations, 1);
        assert_eq!(r.trace.len(), 1);
    }

    #[test]
    fn non_ascending_target_is_rejected() {
        let spec = TargetSpec {
            target: [100.0, 90.0, 300.0],
            budget: 10,
            restarts: 1,
            seed: 0,
        };
        assert!(matches!(
            spec.validate(),
            Err(SearchError::Parameter(_))
        ));
    }

    #[test]
    fn best_so_far_is_non_increasing_and_deterministic() {
        let (target, beam) = oracle_target(17);
        let spec = TargetSpec {
            target,
            budget: 400,
            restarts: 1,
            seed: 3,
        };
        let surrogate = OracleSurrogate { beam };
        let cfg = RasterConfig::default();
        let a = random_search(&spec, &surrogate, &test_ranges(), &cfg, 5).unwrap();
        let b = random_search(&spec, &surrogate, &test_ranges(), &cfg, 5).unwrap();
        // Everything but wall time must reproduce exactly.
        assert_eq!(a.best_spec, b.best_spec);
        assert_eq!(a.predicted, b.predicted);
        assert_eq!(a.surrogate_mse, b.surrogate_mse);
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.skipped_degenerate, b.skipped_degenerate);
        for w in a.trace.windows(2) {
            assert!(w[1].1 < w[0].1, "trace must strictly improve");
            assert!(w[1].0 > w[0].0);
        }
    }

    #[test]
    fn verification_formulas_match_hand_values() {
        let poly = Polygon::new(vec![(25.0, -25.0), (25.0, 25.0), (-25.0, 25.0), (-25.0, -25.0)])
            .unwrap();
        let result = SearchResult {
            best_spec: PolygonSpec {
                n_vertices: 4,
                avg_radius: 25.0,
                irregularity: 0.0,
                spikiness: 0.0,
                seed: 0,
            },
            best_polygon: poly,
            predicted: [0.0; 3],
            surrogate_mse: 0.0,
            trace: vec![],
            evaluations: 0,
            skipped_degenerate: 0,
            wall_time_s: 0.0,
        };
        // Errors and MAPE are measured against the target, not the surrogate.
        let target = TargetSpec {
            target: [100.0, 200.0, 300.0],
            budget: 1,
            restarts: 1,
            seed: 0,
        };
        let beam = BeamSpec::default();
        let report = verify(&result, &target, &beam).unwrap();
        // Canonical 50 mm square: oracle close to [41.13, 41.13, 257.7].
        assert!((report.oracle[0] - 41.126).abs() < 0.01);
        let manual_mape = 100.0
            * ((100.0 - report.oracle[0]).abs() / 100.0
                + (200.0 - report.oracle[1]).abs() / 200.0
                + (300.0 - report.oracle[2]).abs() / 300.0)
            / 3.0;
        assert!((report.mape - manual_mape).abs() < 1e-12);

        // Worked example: oracle [110, 200, 300] vs target [100, 200, 300].
        let synthetic = VerificationReport {
            oracle: [110.0, 200.0, 300.0],
            abs_error_hz: [10.0, 0.0, 0.0],
            cumulative_deviation_hz: 10.0,
            mape: 100.0 * (10.0 / 100.0) / 3.0,
        };
        assert!((synthetic.mape - 10.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn oracle_loop_campaign_reaches_near_zero_mape() {
        let beam = BeamSpec::default();
        let mut targets = Vec::new();
        for k in 0..2u64 {
            let (target, _) = oracle_target(100 + k);
            targets.push(TargetSpec {
                target,
                budget: 600,
                restarts: 2,
                seed: mix(55, k),
            });
        }
        let surrogate = OracleSurrogate { beam };
        let dir = tempfile::tempdir().unwrap();
        let report = run_campaign(
            &targets,
            &surrogate,
            &test_ranges(),
            &RasterConfig::default(),
            &beam,
            dir.path(),
        )
        .unwrap();
        assert_eq!(report.aggregates.runs, 4);
        assert!(
            report.aggregates.mean_mape < 25.0,
            "oracle loop mean MAPE {}",
            report.aggregates.mean_mape
        );
        assert!(dir.path().join("campaign.json").exists());
        assert!(dir.path().join("results.csv").exists());
        assert!(dir.path().join("best_target_0.csv").exists());
        assert!(dir.path().join("best_target_1.csv").exists());

        // Scheduling independence: a rerun gives identical science fields.
        let report2 = run_campaign(
            &targets,
            &surrogate,
            &test_ranges(),
            &RasterConfig::default(),
            &beam,
            tempfile::tempdir().unwrap().path(),
        )
        .unwrap();
        assert_eq!(
            report.aggregates.mean_mape,
            report2.aggregates.mean_mape
        );
        assert_eq!(
            report.aggregates.best_mape_per_target,
            report2.aggregates.best_mape_per_target
        );
    }

    #[test]
    fn empty_target_list_is_rejected() {
        let beam = BeamSpec::default();
        let surrogate = OracleSurrogate { beam };
        let dir = tempfile::tempdir().unwrap();
        let err = run_campaign(
            &[],
            &surrogate,
            &test_ranges(),
            &RasterConfig::default(),
            &beam,
            dir.path(),
        )
        .unwrap_err();
        assert!(matches!(err, SearchError::Parameter(_)));
    }

    #[test]
    fn targets_come_from_test_split_only() {
        let spec = DatasetSpec {
            size: 40,
            raster: RasterConfig {
                img_size: 32,
                ..RasterConfig::default()
            },
            seed: 77,
            ..DatasetSpec::default()
        };
        let dir = tempfile::tempdir().unwrap();
        let manifest = crate::dataset::generate_dataset(&spec, dir.path()).unwrap();
        let targets = targets_from_test_split(&manifest, 3, 100, 2, 5).unwrap();
        assert_eq!(targets.len(), 3);
        let test_triples: Vec<[f64; 3]> = manifest
            .split_rows(Split::Test)
            .map(|r| {
                [
                    r.label(Label::F1Hz),
                    r.label(Label::F2Hz),
                    r.label(Label::F3Hz),
                ]
            })
            .collect();
        for t in &targets {
            assert!(
                test_triples.iter().any(|x| x == &t.target),
                "target {:?} not from test split",
                t.target
            );
        }
    }
}
