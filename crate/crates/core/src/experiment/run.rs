use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{DatasetConfig, ExperimentConfig, ScoringKind, ThresholdConfig};
use crate::diagnosis::{diagnose_events, hitrate_at, rc_top_k};
use crate::error::{Error, Result};
use crate::ingest::{apply_normalizer, fit_normalizer, generate_synthetic, load_entity, read_cause_map, Phase};
use crate::metrics::MetricReport;
use crate::models::{fit, residuals, train_residuals, TrainedModel};
use crate::scoring::{fit_gauss, score_error, score_gauss_d, score_gauss_d_k, score_gauss_s};
use crate::thresholding::{threshold_best_f, threshold_tail_p, threshold_top_k, FScore, ThresholdResult};
use crate::types::{ChannelScores, Entity, ScoreSeries, ScoredChannels};

pub const RESULTS_SCHEMA_VERSION: u32 = 1;
const TAIL_P_SWEEP: std::ops::RangeInclusive<u32> = 1..=5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisScores {
    pub events_evaluated: usize,
    pub rc_top_k: f64,
    pub hitrate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub entity: String,
    pub seed: u64,
    pub status: CellStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// `None` when the threshold is `+inf` or the cell failed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub neg_log_eps: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted_positives: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_positives_points: Option<usize>,
    #[serde(default)]
    pub metrics: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnosis: Option<DiagnosisScores>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Aggregates {
    /// Entity average per seed, then the mean over seeds.
    pub overall: BTreeMap<String, f64>,
    /// Mean over entities, per seed.
    pub per_seed: BTreeMap<u64, BTreeMap<String, f64>>,
    /// Mean over seeds, per entity.
    pub per_entity: BTreeMap<String, BTreeMap<String, f64>>,
}

/// Deterministic run outcome; timings live in [`RunMetadata`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsRecord {
    pub schema_version: u32,
    pub config_digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub config: ExperimentConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selected_neg_log_eps: Option<u32>,
    pub cells: Vec<CellRecord>,
    pub aggregates: Aggregates,
}

impl ResultsRecord {
    pub fn failed_cells(&self) -> usize {
        self.cells.iter().filter(|c| c.status == CellStatus::Failed).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellTiming {
    pub entity: String,
    pub seed: u64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub started_unix_seconds: u64,
    pub total_seconds: f64,
    pub workers: usize,
    pub cells: Vec<CellTiming>,
}

pub struct RunOutput {
    pub record: ResultsRecord,
    pub metadata: RunMetadata,
    /// Fitted models in cell order, when `save_models` is set.
    pub models: Vec<Option<TrainedModel>>,
}

fn load_dataset_entity(dataset: &DatasetConfig, index: usize) -> Result<Entity> {
    match dataset {
        DatasetConfig::Synthetic { entities } => generate_synthetic(&entities[index]),
        DatasetConfig::Csv { entities } => {
            let e = &entities[index];
            let map = e.cause_map.as_deref().map(read_cause_map).transpose()?;
            load_entity(&e.train, &e.test, &e.options, map.as_ref())
        }
    }
}

/// Per-time-point and per-channel anomaly scores of one (entity, seed) cell.
pub struct CellScores {
    pub scores: ScoreSeries,
    pub channel_scores: ChannelScores,
    pub scored: ScoredChannels,
    pub model: TrainedModel,
}

/// Normalize, fit, compute residuals and apply the configured scoring function.
pub fn score_entity(entity: &Entity, config: &ExperimentConfig, seed: u64) -> Result<CellScores> {
    let stats = fit_normalizer(&entity.train);
    let train = apply_normalizer(&entity.train, &stats, Phase::Train)?;
    let test = apply_normalizer(&entity.test, &stats, Phase::Test)?;
    let model = fit(&train, &config.model.clone().with_seed(seed), config.window)?;
    let train_err = train_residuals(&model, &train)?;
    let test_err = residuals(&model, &test, Some(&train))?;
    let scored = entity.scored();
    let sc = &config.scoring;
    let (channel_scores, scores) = match sc.kind {
        ScoringKind::Error => {
            let total = score_error(&test_err, &model.train_error_mean, &scored)?;
            // centred absolute error ranks channels for diagnosis
            let mean = &model.train_error_mean;
            let ch = Array2::from_shape_fn(test_err.0.dim(), |(t, i)| (test_err.0[[t, i]] - mean[i]).abs());
            (ChannelScores(ch), total)
        }
        ScoringKind::GaussS => score_gauss_s(&test_err, &fit_gauss(&train_err)?, &scored)?,
        ScoringKind::GaussD => {
            let w = sc.window.ok_or_else(|| Error::Config("missing Gauss-D window".into()))?;
            score_gauss_d(&test_err, &train_err, w, &scored)?
        }
        ScoringKind::GaussDK => {
            let w = sc.window.ok_or_else(|| Error::Config("missing Gauss-D window".into()))?;
            let k = sc.kernel_sigma.ok_or_else(|| Error::Config("missing kernel sigma".into()))?;
            let (d, _) = score_gauss_d(&test_err, &train_err, w, &scored)?;
            score_gauss_d_k(&d, k, &scored)?
        }
    };
    Ok(CellScores {
        scores,
        channel_scores,
        scored,
        model,
    })
}

struct Evaluated {
    threshold: ThresholdResult,
    neg_log_eps: Option<u32>,
    report: MetricReport,
    metrics: BTreeMap<String, f64>,
}

fn evaluate(entity: &Entity, scores: &ScoreSeries, th: ThresholdResult, nle: Option<u32>, names: &[String]) -> Result<Evaluated> {
    let report = MetricReport::evaluate(&th.predictions, &entity.test_labels, Some(scores))?;
    let metrics = names
        .iter()
        .filter_map(|n| report.get(n).map(|v| (n.clone(), v)))
        .collect();
    Ok(Evaluated {
        threshold: th,
        neg_log_eps: nle,
        report,
        metrics,
    })
}

struct CellOutcome {
    /// One entry, or one per swept `-log10(eps)` for tail-p without a fixed value.
    candidates: Vec<Evaluated>,
    diagnosis: Option<DiagnosisScores>,
    model: Option<TrainedModel>,
}

fn run_cell(entity: &Entity, config: &ExperimentConfig, seed: u64) -> Result<CellOutcome> {
    let cell = score_entity(entity, config, seed)?;
    let truth = &entity.test_labels;
    let names = &config.metrics;
    let candidates = match config.threshold {
        ThresholdConfig::TopK => {
            let th = threshold_top_k(&cell.scores, truth.positives())?;
            vec![evaluate(entity, &cell.scores, th, None, names)?]
        }
        ThresholdConfig::BestF { metric } => {
            let th = threshold_best_f(&cell.scores, truth, metric)?;
            vec![evaluate(entity, &cell.scores, th, None, names)?]
        }
        ThresholdConfig::TailP { neg_log_eps, .. } => {
            let sweep: Vec<u32> = match neg_log_eps {
                Some(v) => vec![v],
                None => TAIL_P_SWEEP.collect(),
            };
            sweep
                .into_iter()
                .map(|v| {
                    let th = threshold_tail_p(&cell.scores, cell.scored.len(), v)?;
                    evaluate(entity, &cell.scores, th, Some(v), names)
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    let diagnosis = match &config.diagnosis {
        Some(d) if entity.test_events.iter().any(|e| e.causes.is_some()) => {
            let ds = diagnose_events(&cell.channel_scores, &entity.test_events, &cell.scored, d.statistic)?;
            Some(DiagnosisScores {
                events_evaluated: ds.len(),
                rc_top_k: rc_top_k(&ds, &entity.test_events, d.top_k)?,
                hitrate: hitrate_at(&ds, &entity.test_events, d.hitrate_percent)?,
            })
        }
        _ => None,
    };
    Ok(CellOutcome {
        candidates,
        diagnosis,
        model: config.save_models.then_some(cell.model),
    })
}

fn mean_maps<'a>(maps: impl IntoIterator<Item = &'a BTreeMap<String, f64>>) -> BTreeMap<String, f64> {
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for m in maps {
        for (k, v) in m {
            let e = sums.entry(k.clone()).or_insert((0.0, 0));
            e.0 += v;
            e.1 += 1;
        }
    }
    sums.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
}

fn cell_values(c: &CellRecord) -> BTreeMap<String, f64> {
    let mut v = c.metrics.clone();
    if let Some(d) = &c.diagnosis {
        v.insert("rc_top_k".into(), d.rc_top_k);
        v.insert("hitrate".into(), d.hitrate);
    }
    v
}

/// Arithmetic means over successful cells, in deterministic key order.
pub fn aggregate(cells: &[CellRecord]) -> Aggregates {
    let ok: Vec<(&CellRecord, BTreeMap<String, f64>)> = cells
        .iter()
        .filter(|c| c.status == CellStatus::Ok)
        .map(|c| (c, cell_values(c)))
        .collect();
    let mut by_seed: BTreeMap<u64, Vec<&BTreeMap<String, f64>>> = BTreeMap::new();
    let mut by_entity: BTreeMap<String, Vec<&BTreeMap<String, f64>>> = BTreeMap::new();
    for (c, v) in &ok {
        by_seed.entry(c.seed).or_default().push(v);
        by_entity.entry(c.entity.clone()).or_default().push(v);
    }
    let per_seed: BTreeMap<u64, BTreeMap<String, f64>> =
        by_seed.into_iter().map(|(s, v)| (s, mean_maps(v))).collect();
    let per_entity = by_entity.into_iter().map(|(e, v)| (e, mean_maps(v))).collect();
    Aggregates {
        overall: mean_maps(per_seed.values()),
        per_seed,
        per_entity,
    }
}

fn build_pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        b = b.num_threads(w);
    }
    b.build().map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

/// Runs every (entity, seed) cell. A failing cell is recorded and the
/// remaining cells still run.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutput> {
    config.validate()?;
    let started = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let clock = Instant::now();
    let pool = build_pool(config.workers)?;
    let ids = config.dataset.entity_ids();
    let jobs: Vec<(usize, u64)> = (0..ids.len())
        .flat_map(|e| config.seeds.iter().map(move |&s| (e, s)))
        .collect();

    let (outcomes, entities_loaded) = pool.install(|| {
        let entities: Vec<Result<Entity>> = (0..ids.len())
            .into_par_iter()
            .map(|i| load_dataset_entity(&config.dataset, i))
            .collect();
        let outcomes: Vec<(Result<CellOutcome>, f64)> = jobs
            .par_iter()
            .map(|&(e, seed)| {
                let t0 = Instant::now();
                let out = match &entities[e] {
                    Ok(entity) => run_cell(entity, config, seed),
                    Err(err) => Err(Error::InvalidInput(format!("entity load failed: {err}"))),
                };
                (out, t0.elapsed().as_secs_f64())
            })
            .collect();
        (outcomes, entities)
    });

    // tail-p sweep: one -log10(eps) for every entity
    let selected = match config.threshold {
        ThresholdConfig::TailP { neg_log_eps: None, select_metric } => {
            Some(select_neg_log_eps(&outcomes, &jobs, &ids, select_metric))
        }
        _ => None,
    };

    let mut cells = Vec::with_capacity(jobs.len());
    let mut timings = Vec::with_capacity(jobs.len());
    let mut models = Vec::with_capacity(jobs.len());
    for (&(e, seed), (outcome, secs)) in jobs.iter().zip(outcomes) {
        timings.push(CellTiming {
            entity: ids[e].clone(),
            seed,
            seconds: secs,
        });
        let entity = entities_loaded[e].as_ref().ok();
        match outcome {
            Ok(out) => {
                let pick = match selected {
                    Some(v) => out.candidates.into_iter().find(|c| c.neg_log_eps == Some(v)),
                    None => out.candidates.into_iter().next(),
                }
                .expect("candidate present");
                let t = pick.threshold.threshold;
                cells.push(CellRecord {
                    entity: ids[e].clone(),
                    seed,
                    status: CellStatus::Ok,
                    error: None,
                    threshold: t.is_finite().then_some(t),
                    neg_log_eps: pick.neg_log_eps,
                    predicted_positives: Some(pick.threshold.predictions.positives()),
                    true_positives_points: entity.map(|en| en.test_labels.positives()),
                    metrics: pick.metrics,
                    diagnosis: out.diagnosis,
                });
                models.push(out.model);
            }
            Err(err) => {
                cells.push(CellRecord {
                    entity: ids[e].clone(),
                    seed,
                    status: CellStatus::Failed,
                    error: Some(err.to_string()),
                    threshold: None,
                    neg_log_eps: None,
                    predicted_positives: None,
                    true_positives_points: None,
                    metrics: BTreeMap::new(),
                    diagnosis: None,
                });
                models.push(None);
            }
        }
    }

    let workers = pool.current_num_threads();
    let aggregates = aggregate(&cells);
    Ok(RunOutput {
        record: ResultsRecord {
            schema_version: RESULTS_SCHEMA_VERSION,
            config_digest: config.digest(),
            name: config.name.clone(),
            config: ExperimentConfig {
                output_dir: None,
                workers: None,
                ..config.clone()
            },
            selected_neg_log_eps: selected,
            cells,
            aggregates,
        },
        metadata: RunMetadata {
            started_unix_seconds: started,
            total_seconds: clock.elapsed().as_secs_f64(),
            workers,
            cells: timings,
        },
        models,
    })
}

/// Largest entity-then-seed mean of `metric`; the smallest value wins ties.
fn select_neg_log_eps(
    outcomes: &[(Result<CellOutcome>, f64)],
    jobs: &[(usize, u64)],
    ids: &[String],
    metric: FScore,
) -> u32 {
    let mut best = (*TAIL_P_SWEEP.start(), f64::NEG_INFINITY);
    for v in TAIL_P_SWEEP {
        let cells: Vec<CellRecord> = jobs
            .iter()
            .zip(outcomes)
            .filter_map(|(&(e, seed), (o, _))| {
                let o = o.as_ref().ok()?;
                let c = o.candidates.iter().find(|c| c.neg_log_eps == Some(v))?;
                let report_value = c.report.get(metric.name()).unwrap_or(0.0);
                Some(CellRecord {
                    entity: ids[e].clone(),
                    seed,
                    status: CellStatus::Ok,
                    error: None,
                    threshold: None,
                    neg_log_eps: Some(v),
                    predicted_positives: None,
                    true_positives_points: None,
                    metrics: BTreeMap::from([(metric.name().to_owned(), report_value)]),
                    diagnosis: None,
                })
            })
            .collect();
        let score = aggregate(&cells).overall.get(metric.name()).copied().unwrap_or(0.0);
        if score > best.1 {
            best = (v, score);
        }
    }
    best.0
}

/// Loads a results file written by `emit_results`.
pub fn load_results(path: &Path) -> Result<ResultsRecord> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
