use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use tsad::diagnosis::{diagnose_events, hitrate_at, rc_top_k, EventDiagnosis, SpanStatistic};
use tsad::experiment::{compare_metrics, emit_results, run_experiment, ExperimentConfig, OutputFormat};
use tsad::ingest::{generate_synthetic, load_series, read_cause_map, write_entity, LoadOptions, SyntheticSpec};
use tsad::rankstats::{rank_report, RankTable};
use tsad::types::{events_from_labels, ChannelScores, LabelVector, ScoredChannels};
use tsad::Error;

const EXIT_CONFIG: u8 = 1;
const EXIT_PARTIAL: u8 = 2;

#[derive(Parser)]
#[command(name = "tsad", version, about = "Multivariate time-series anomaly detection experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic entities as train/test CSV plus cause maps.
    Generate {
        /// Synthetic spec JSON: one spec, a list, or {"entities": [...]}.
        #[arg(long)]
        config: PathBuf,
        /// Override the generator seed; several values write one copy each.
        #[arg(long, value_delimiter = ',')]
        seed: Vec<u64>,
        #[arg(long, default_value = "data")]
        out: PathBuf,
    },
    /// Run an experiment config and write results.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Replace the config's seeds.
        #[arg(long, value_delimiter = ',')]
        seed: Vec<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long, value_enum, default_value_t = OutputFormat::Json)]
        format: OutputFormat,
    },
    /// F1 / Fpa1 / Fc1 for prediction columns against a `label` column.
    CompareMetrics {
        labels: PathBuf,
        #[arg(long, default_value = "label")]
        truth_column: String,
        /// Seed for the random-detector rows.
        #[arg(long, value_delimiter = ',')]
        seed: Vec<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = OutputFormat::Json)]
        format: OutputFormat,
    },
    /// Average ranks, Friedman test and Hochberg post-hoc for a rank table CSV.
    Rank {
        table: PathBuf,
        #[arg(long)]
        lower_is_better: bool,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = OutputFormat::Json)]
        format: OutputFormat,
    },
    /// Rank channels per labelled event from a channel-score CSV.
    Diagnose {
        /// Channel score columns plus a 0/1 `label` column.
        #[arg(long)]
        scores: PathBuf,
        /// Cause-map JSON: event ordinal -> channel names.
        #[arg(long)]
        causes: PathBuf,
        #[arg(long, value_enum, default_value_t = Statistic::Mean)]
        statistic: Statistic,
        #[arg(long, default_value_t = 3)]
        top_k: usize,
        #[arg(long, default_value_t = 150)]
        percent: u32,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = OutputFormat::Json)]
        format: OutputFormat,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Statistic {
    Mean,
    Max,
}

/// Error plus the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: EXIT_CONFIG,
            message: e.to_string(),
        }
    }
}

type CliResult = std::result::Result<u8, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate { config, seed, out } => generate(&config, &seed, &out),
        Command::Run {
            config,
            seed,
            out,
            workers,
            format,
        } => run(&config, &seed, out, workers, format),
        Command::CompareMetrics {
            labels,
            truth_column,
            seed,
            out,
            format,
        } => compare(&labels, &truth_column, &seed, out.as_deref(), format),
        Command::Rank {
            table,
            lower_is_better,
            alpha,
            out,
            format,
        } => rank(&table, !lower_is_better, alpha, out.as_deref(), format),
        Command::Diagnose {
            scores,
            causes,
            statistic,
            top_k,
            percent,
            out,
            format,
        } => diagnose(&scores, &causes, statistic, top_k, percent, out.as_deref(), format),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn read_specs(path: &Path) -> tsad::Result<Vec<SyntheticSpec>> {
    #[derive(serde::Deserialize)]
    #[serde(untagged)]
    enum Specs {
        One(SyntheticSpec),
        Many(Vec<SyntheticSpec>),
        Wrapped { entities: Vec<SyntheticSpec> },
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let specs: Specs =
        serde_json::from_str(&text).map_err(|_| Error::Config(format!("{}: not a synthetic spec", path.display())))?;
    Ok(match specs {
        Specs::One(s) => vec![s],
        Specs::Many(v) | Specs::Wrapped { entities: v } => v,
    })
}

fn generate(config: &Path, seeds: &[u64], out: &Path) -> CliResult {
    let specs = read_specs(config)?;
    let mut listing = Vec::new();
    for spec in specs {
        let variants: Vec<SyntheticSpec> = match seeds {
            [] => vec![spec],
            [s] => vec![SyntheticSpec { seed: *s, ..spec }],
            many => many
                .iter()
                .map(|&s| SyntheticSpec {
                    id: format!("{}_s{s}", spec.id),
                    seed: s,
                    ..spec.clone()
                })
                .collect(),
        };
        for v in variants {
            v.validate().map_err(|e| Error::Config(format!("entity '{}': {e}", v.id)))?;
            let entity = generate_synthetic(&v)?;
            let files = write_entity(&entity, out)?;
            let mut item = serde_json::json!({
                "id": entity.id,
                "train": files.train.file_name().map(|f| f.to_string_lossy().into_owned()),
                "test": files.test.file_name().map(|f| f.to_string_lossy().into_owned()),
            });
            if let Some(c) = &files.cause_map {
                item["cause_map"] = c.file_name().map(|f| f.to_string_lossy().into_owned()).into();
            }
            listing.push(item);
        }
    }
    // ready to paste as the `dataset` of a run config placed next to the files
    let dataset = serde_json::json!({ "csv": { "entities": listing } });
    let path = out.join("dataset.json");
    std::fs::write(&path, serde_json::to_string_pretty(&dataset).map_err(Error::from)? + "\n")
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    println!("wrote {} entities to {}", listing.len(), out.display());
    Ok(0)
}

fn run(config: &Path, seeds: &[u64], out: Option<PathBuf>, workers: Option<usize>, format: OutputFormat) -> CliResult {
    let mut cfg = ExperimentConfig::load(config)?;
    cfg.apply_env()?;
    if !seeds.is_empty() {
        cfg.seeds = seeds.to_vec();
    }
    if out.is_some() {
        cfg.output_dir = out;
    }
    if workers.is_some() {
        cfg.workers = workers;
    }
    cfg.validate()?;
    let dir = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("results"));
    let output = run_experiment(&cfg)?;
    let io_fail = |e: Error| Failure {
        code: EXIT_CONFIG,
        message: e.to_string(),
    };
    emit_results(&output.record, Some(&output.metadata), &dir, format).map_err(io_fail)?;
    if cfg.save_models {
        let models_dir = dir.join("models");
        std::fs::create_dir_all(&models_dir).map_err(|e| io_fail(Error::Config(e.to_string())))?;
        for (cell, model) in output.record.cells.iter().zip(&output.models) {
            if let Some(m) = model {
                m.save(&models_dir.join(format!("{}_seed{}.json", cell.entity, cell.seed)))
                    .map_err(io_fail)?;
            }
        }
    }
    print!("{}", tsad::experiment::summary_table(&output.record));
    Ok(if output.record.failed_cells() > 0 { EXIT_PARTIAL } else { 0 })
}

fn emit<T: Serialize>(rows: &[T], out: Option<&Path>, stem: &str, format: OutputFormat) -> tsad::Result<()> {
    let body = match format {
        OutputFormat::Json => serde_json::to_string_pretty(rows)? + "\n",
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in rows {
                w.serialize(r).map_err(|e| Error::InvalidInput(e.to_string()))?;
            }
            String::from_utf8(w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?)
                .expect("csv output is UTF-8")
        }
    };
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| Error::Config(format!("{}: {e}", dir.display())))?;
            let ext = match format {
                OutputFormat::Json => "json",
                OutputFormat::Csv => "csv",
            };
            let path = dir.join(format!("{stem}.{ext}"));
            std::fs::write(&path, body).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
        }
        None => {
            let _ = std::io::stdout().write_all(body.as_bytes());
            Ok(())
        }
    }
}

fn compare(labels: &Path, truth_column: &str, seeds: &[u64], out: Option<&Path>, format: OutputFormat) -> CliResult {
    let text = std::fs::read_to_string(labels).map_err(|e| Error::Config(format!("{}: {e}", labels.display())))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Config(e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    let truth_idx = header.iter().position(|h| h == truth_column).ok_or_else(|| Error::MissingColumn {
        path: labels.to_owned(),
        column: truth_column.to_owned(),
    })?;
    let mut cols: Vec<Vec<u8>> = vec![Vec::new(); header.len()];
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Config(e.to_string()))?;
        for (c, field) in rec.iter().enumerate() {
            let v = match field {
                "0" => 0,
                "1" => 1,
                other => {
                    return Err(Error::Parse {
                        path: labels.to_owned(),
                        row: r + 2,
                        column: header[c].clone(),
                        message: format!("'{other}' is not 0 or 1"),
                    }
                    .into())
                }
            };
            cols[c].push(v);
        }
    }
    let truth = LabelVector::from_u8(&cols[truth_idx])?;
    let preds = header
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != truth_idx)
        .map(|(i, h)| Ok((h.clone(), LabelVector::from_u8(&cols[i])?)))
        .collect::<tsad::Result<Vec<_>>>()?;
    let rows = compare_metrics(&truth, &preds, Some(seeds.first().copied().unwrap_or(0)))?;
    emit(&rows, out, "compare", format)?;
    Ok(0)
}

fn rank(table: &Path, higher_is_better: bool, alpha: f64, out: Option<&Path>, format: OutputFormat) -> CliResult {
    let t = RankTable::from_csv(table)?;
    let report = rank_report(&t, higher_is_better, alpha)?;
    match format {
        OutputFormat::Json => emit(std::slice::from_ref(&report), out, "rank", format)?,
        OutputFormat::Csv => {
            #[derive(Serialize)]
            struct Row<'a> {
                method: &'a str,
                average_rank: f64,
                z: Option<f64>,
                p_value: Option<f64>,
                rejected: Option<bool>,
            }
            let rows: Vec<Row> = report
                .methods
                .iter()
                .zip(&report.average_ranks)
                .map(|(m, &r)| {
                    let ph = report.post_hoc.iter().find(|p| &p.test.method == m);
                    Row {
                        method: m,
                        average_rank: r,
                        z: ph.map(|p| p.test.z),
                        p_value: ph.map(|p| p.test.p_value),
                        rejected: ph.map(|p| p.rejected),
                    }
                })
                .collect();
            emit(&rows, out, "rank", format)?;
            if let Some(f) = report.friedman {
                eprintln!("friedman statistic {:.4}, dof {}, p {:.3e}", f.statistic, f.dof, f.p_value);
            }
        }
    }
    Ok(0)
}

#[derive(Serialize)]
struct DiagnosisReport {
    events: Vec<EventRanking>,
    rc_top_k: f64,
    top_k: usize,
    hitrate: f64,
    hitrate_percent: u32,
}

#[derive(Serialize)]
struct EventRanking {
    event: usize,
    start: usize,
    end: usize,
    causes: Vec<String>,
    ranked_channels: Vec<String>,
}

fn diagnose(
    scores: &Path,
    causes: &Path,
    statistic: Statistic,
    top_k: usize,
    percent: u32,
    out: Option<&Path>,
    format: OutputFormat,
) -> CliResult {
    let (series, labels) = load_series(scores, &LoadOptions::new("scores"))?;
    let labels = labels.ok_or_else(|| Error::MissingColumn {
        path: scores.to_owned(),
        column: "label".into(),
    })?;
    let names = series.channel_names().to_vec();
    let map: BTreeMap<usize, Vec<String>> = read_cause_map(causes)?;
    let mut events = events_from_labels(&labels);
    for (&k, channels) in &map {
        let set = channels
            .iter()
            .map(|c| series.channel_index(c).ok_or_else(|| Error::Config(format!("unknown channel '{c}'"))))
            .collect::<tsad::Result<_>>()?;
        events.set_causes(k, set)?;
    }
    let stat = match statistic {
        Statistic::Mean => SpanStatistic::Mean,
        Statistic::Max => SpanStatistic::Max,
    };
    let m = series.m();
    let channel_scores = ChannelScores(series.into_values());
    let diags: Vec<EventDiagnosis> = diagnose_events(&channel_scores, &events, &ScoredChannels::all(m), stat)?;
    let report = DiagnosisReport {
        events: diags
            .iter()
            .map(|d| {
                let e = &events.events()[d.event_index];
                EventRanking {
                    event: d.event_index,
                    start: e.start,
                    end: e.end,
                    causes: e.causes.iter().flatten().map(|&i| names[i].clone()).collect(),
                    ranked_channels: d.ranked_channels.iter().map(|&i| names[i].clone()).collect(),
                }
            })
            .collect(),
        rc_top_k: rc_top_k(&diags, &events, top_k)?,
        top_k,
        hitrate: hitrate_at(&diags, &events, percent)?,
        hitrate_percent: percent,
    };
    match format {
        OutputFormat::Json => emit(std::slice::from_ref(&report), out, "diagnosis", format)?,
        OutputFormat::Csv => {
            #[derive(Serialize)]
            struct Row {
                event: usize,
                start: usize,
                end: usize,
                causes: String,
                ranked_channels: String,
            }
            let rows: Vec<Row> = report
                .events
                .iter()
                .map(|e| Row {
                    event: e.event,
                    start: e.start,
                    end: e.end,
                    causes: e.causes.join(";"),
                    ranked_channels: e.ranked_channels.join(";"),
                })
                .collect();
            emit(&rows, out, "diagnosis", format)?;
            eprintln!("rc_top_{top_k} {:.4}, hitrate@{percent} {:.4}", report.rc_top_k, report.hitrate);
        }
    }
    Ok(0)
}
