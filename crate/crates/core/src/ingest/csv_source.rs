//! CSV ingestion: UTF-8, header row, one row per time-point. Channel columns
//! hold floats; the test file carries a 0/1 label column. Row numbers in
//! errors are 1-based file lines (the header is line 1).

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Entity, LabelVector, ScoredChannels, SeriesMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadOptions {
    pub id: String,
    #[serde(default = "default_label_column")]
    pub label_column: String,
    /// Non-channel columns to ignore, e.g. timestamps.
    #[serde(default)]
    pub drop_columns: Vec<String>,
    /// Restrict score aggregation to these channel names.
    #[serde(default)]
    pub scored_channels: Option<Vec<String>>,
}

fn default_label_column() -> String {
    "label".to_owned()
}

impl LoadOptions {
    pub fn new(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            label_column: default_label_column(),
            drop_columns: Vec::new(),
            scored_channels: None,
        }
    }
}

struct Table {
    channels: Vec<String>,
    values: Array2<f64>,
    labels: Option<Vec<u8>>,
}

fn read_table(path: &Path, opts: &LoadOptions, require_labels: bool) -> Result<Table> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::csv(path, e))?
        .iter()
        .map(str::to_owned)
        .collect();

    let label_idx = header.iter().position(|h| *h == opts.label_column);
    if require_labels && label_idx.is_none() {
        return Err(Error::MissingColumn {
            path: path.to_owned(),
            column: opts.label_column.clone(),
        });
    }
    let channel_idx: Vec<usize> = (0..header.len())
        .filter(|&i| Some(i) != label_idx && !opts.drop_columns.contains(&header[i]))
        .collect();
    if channel_idx.is_empty() {
        return Err(Error::InvalidInput(format!("{}: no channel columns", path.display())));
    }

    let mut flat = Vec::new();
    let mut labels = label_idx.map(|_| Vec::new());
    let mut rows = 0;
    for (r, record) in reader.records().enumerate() {
        let line = r + 2;
        let record = record.map_err(|e| Error::csv(path, e))?;
        if record.len() != header.len() {
            return Err(Error::Parse {
                path: path.to_owned(),
                row: line,
                column: String::new(),
                message: format!("{} fields, header has {}", record.len(), header.len()),
            });
        }
        for &i in &channel_idx {
            let cell = &record[i];
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                path: path.to_owned(),
                row: line,
                column: header[i].clone(),
                message: format!("'{cell}' is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    path: path.to_owned(),
                    row: line,
                    column: header[i].clone(),
                    message: format!("'{cell}' is not finite"),
                });
            }
            flat.push(v);
        }
        if let (Some(li), Some(labels)) = (label_idx, labels.as_mut()) {
            let cell = &record[li];
            let y = match cell.parse::<f64>() {
                Ok(0.0) => 0,
                Ok(1.0) => 1,
                _ => {
                    return Err(Error::Parse {
                        path: path.to_owned(),
                        row: line,
                        column: header[li].clone(),
                        message: format!("label '{cell}' is not 0 or 1"),
                    })
                }
            };
            labels.push(y);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::InvalidInput(format!("{}: no data rows", path.display())));
    }
    let values = Array2::from_shape_vec((rows, channel_idx.len()), flat)
        .map_err(|e| Error::Shape(e.to_string()))?;
    Ok(Table {
        channels: channel_idx.iter().map(|&i| header[i].clone()).collect(),
        values,
        labels,
    })
}

/// Event ordinal -> channel names, as stored in a cause-map JSON file.
pub fn read_cause_map(path: &Path) -> Result<BTreeMap<usize, Vec<String>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let raw: BTreeMap<String, Vec<String>> = serde_json::from_str(&text)?;
    raw.into_iter()
        .map(|(k, v)| {
            k.parse::<usize>()
                .map(|ordinal| (ordinal, v))
                .map_err(|_| Error::Config(format!("{}: cause map key '{k}' is not an event ordinal", path.display())))
        })
        .collect()
}

/// Loads a train/test pair into an [`Entity`], attaching causes from the
/// optional cause map.
pub fn load_entity(
    train_path: &Path,
    test_path: &Path,
    opts: &LoadOptions,
    cause_map: Option<&BTreeMap<usize, Vec<String>>>,
) -> Result<Entity> {
    let train = read_table(train_path, opts, false)?;
    let test = read_table(test_path, opts, true)?;
    if train.channels != test.channels {
        return Err(Error::Shape(format!(
            "channel columns differ between {} and {}",
            train_path.display(),
            test_path.display()
        )));
    }
    let test_labels = LabelVector::from_u8(test.labels.as_deref().unwrap_or_default())?;
    let channels = train.channels;
    let index_of = |name: &str| {
        channels
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::Config(format!("unknown channel '{name}'")))
    };
    let scored = match &opts.scored_channels {
        Some(names) => Some(ScoredChannels::new(
            names.iter().map(|n| index_of(n)).collect::<Result<Vec<_>>>()?,
            channels.len(),
        )?),
        None => None,
    };
    let test_series = SeriesMatrix::new(test.values, channels.clone())?;
    let train_series = SeriesMatrix::new(train.values, channels.clone())?;
    let mut entity = Entity::new(opts.id.clone(), train_series, test_series, test_labels, scored)?;

    if let Some(map) = cause_map {
        for (&ordinal, names) in map {
            let causes = names
                .iter()
                .map(|n| index_of(n))
                .collect::<Result<BTreeSet<_>>>()?;
            entity.test_events.set_causes(ordinal, causes)?;
        }
    }
    Ok(entity)
}

/// Reads one CSV into a series plus its label column when present.
pub fn load_series(path: &Path, opts: &LoadOptions) -> Result<(SeriesMatrix, Option<LabelVector>)> {
    let table = read_table(path, opts, false)?;
    let labels = table.labels.as_deref().map(LabelVector::from_u8).transpose()?;
    Ok((SeriesMatrix::new(table.values, table.channels)?, labels))
}

/// Files written by [`write_entity`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityFiles {
    pub train: PathBuf,
    pub test: PathBuf,
    pub cause_map: Option<PathBuf>,
}

fn write_matrix(path: &Path, x: &SeriesMatrix, labels: Option<&LabelVector>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut header: Vec<&str> = x.channel_names().iter().map(String::as_str).collect();
    if labels.is_some() {
        header.push("label");
    }
    w.write_record(&header).map_err(|e| Error::csv(path, e))?;
    for (t, row) in x.values().rows().into_iter().enumerate() {
        let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        if let Some(l) = labels {
            rec.push(u8::from(l.as_slice()[t]).to_string());
        }
        w.write_record(&rec).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `<id>_train.csv`, `<id>_test.csv` (with a `label` column) and,
/// when any event has causes, `<id>_causes.json`. Values round-trip exactly.
pub fn write_entity(entity: &Entity, dir: &Path) -> Result<EntityFiles> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let train = dir.join(format!("{}_train.csv", entity.id));
    let test = dir.join(format!("{}_test.csv", entity.id));
    write_matrix(&train, &entity.train, None)?;
    write_matrix(&test, &entity.test, Some(&entity.test_labels))?;
    let names = entity.train.channel_names();
    let map: BTreeMap<String, Vec<String>> = entity
        .test_events
        .iter()
        .enumerate()
        .filter_map(|(k, e)| {
            e.causes
                .as_ref()
                .map(|c| (k.to_string(), c.iter().map(|&i| names[i].clone()).collect()))
        })
        .collect();
    let cause_map = if map.is_empty() {
        None
    } else {
        let path = dir.join(format!("{}_causes.json", entity.id));
        std::fs::write(&path, serde_json::to_string_pretty(&map)?).map_err(|e| Error::io(&path, e))?;
        Some(path)
    };
    Ok(EntityFiles { train, test, cause_map })
}
