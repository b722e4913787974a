//! Shared domain types: series matrices, label vectors, events and the
//! per-stage score containers that flow through the detection pipeline.
//!
//! All time indices are 0-based.

use std::collections::BTreeSet;

use ndarray::{s, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Regularly sampled multivariate series, `n` time-points by `m` channels.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesMatrix {
    values: Array2<f64>,
    channel_names: Vec<String>,
}

impl SeriesMatrix {
    pub fn new(values: Array2<f64>, channel_names: Vec<String>) -> Result<Self> {
        let (n, m) = values.dim();
        if n == 0 || m == 0 {
            return Err(Error::InvalidInput(format!(
                "series must have at least one row and one channel, got {n}x{m}"
            )));
        }
        if channel_names.len() != m {
            return Err(Error::Shape(format!(
                "{} channel names for {m} channels",
                channel_names.len()
            )));
        }
        if let Some(((t, c), v)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite value {v} at row {t}, channel '{}'",
                channel_names[c]
            )));
        }
        Ok(Self {
            values,
            channel_names,
        })
    }

    /// Builds a matrix with generated channel names `ch0..ch{m-1}`.
    pub fn from_values(values: Array2<f64>) -> Result<Self> {
        let names = (0..values.ncols()).map(|i| format!("ch{i}")).collect();
        Self::new(values, names)
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn m(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn channel(&self, i: usize) -> ArrayView1<'_, f64> {
        self.values.column(i)
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.channel_names.iter().position(|c| c == name)
    }

    /// Rows `[start, end)` as a new matrix.
    pub fn rows(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.n() {
            return Err(Error::InvalidInput(format!(
                "row range {start}..{end} invalid for {} rows",
                self.n()
            )));
        }
        Ok(Self {
            values: self.values.slice(s![start..end, ..]).to_owned(),
            channel_names: self.channel_names.clone(),
        })
    }

    /// The last `count` rows (all rows if fewer exist).
    pub fn tail(&self, count: usize) -> Option<Self> {
        let count = count.min(self.n());
        if count == 0 {
            return None;
        }
        self.rows(self.n() - count, self.n()).ok()
    }

    /// Same shape and names, new values. Used by transforms that preserve finiteness.
    pub(crate) fn with_values(&self, values: Array2<f64>) -> Self {
        debug_assert_eq!(values.dim(), self.values.dim());
        Self {
            values,
            channel_names: self.channel_names.clone(),
        }
    }
}

/// Binary per-time-point labels (ground truth or predictions).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelVector(Vec<bool>);

impl LabelVector {
    pub fn new(labels: Vec<bool>) -> Self {
        Self(labels)
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![false; n])
    }

    /// From 0/1 integers; any other value is rejected.
    pub fn from_u8(values: &[u8]) -> Result<Self> {
        values
            .iter()
            .enumerate()
            .map(|(t, &v)| match v {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(Error::InvalidInput(format!(
                    "label at {t} is {other}, expected 0 or 1"
                ))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }

    pub fn positives(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn to_u8(&self) -> Vec<u8> {
        self.0.iter().map(|&b| u8::from(b)).collect()
    }
}

impl From<Vec<bool>> for LabelVector {
    fn from(v: Vec<bool>) -> Self {
        Self(v)
    }
}

/// A maximal run of anomalous time-points, both ends inclusive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub start: usize,
    pub end: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub causes: Option<BTreeSet<usize>>,
}

impl Event {
    pub fn new(start: usize, end: usize) -> Self {
        Self {
            start,
            end,
            causes: None,
        }
    }

    pub fn with_causes(start: usize, end: usize, causes: impl IntoIterator<Item = usize>) -> Self {
        Self {
            start,
            end,
            causes: Some(causes.into_iter().collect()),
        }
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, t: usize) -> bool {
        self.start <= t && t <= self.end
    }
}

/// Sorted, pairwise disjoint and non-adjacent events.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EventSet(Vec<Event>);

impl EventSet {
    /// Validates ordering, disjointness and non-adjacency. Adjacent events are
    /// rejected rather than merged. `n` and `m` bound indices when given.
    pub fn new(events: Vec<Event>, n: Option<usize>, m: Option<usize>) -> Result<Self> {
        for (i, e) in events.iter().enumerate() {
            if e.start > e.end {
                return Err(Error::InvalidInput(format!(
                    "event {i} has start {} > end {}",
                    e.start, e.end
                )));
            }
            if let Some(n) = n {
                if e.end >= n {
                    return Err(Error::OutOfRange {
                        what: "event end",
                        index: e.end,
                        bound: n,
                    });
                }
            }
            if let Some(causes) = &e.causes {
                if causes.is_empty() {
                    return Err(Error::InvalidInput(format!("event {i} has an empty cause set")));
                }
                if let (Some(m), Some(&max)) = (m, causes.iter().next_back()) {
                    if max >= m {
                        return Err(Error::OutOfRange {
                            what: "cause channel",
                            index: max,
                            bound: m,
                        });
                    }
                }
            }
            if i > 0 {
                let prev = &events[i - 1];
                if e.start <= prev.end + 1 {
                    return Err(Error::InvalidInput(format!(
                        "events {} ({}..={}) and {i} ({}..={}) overlap or are adjacent",
                        i - 1,
                        prev.start,
                        prev.end,
                        e.start,
                        e.end
                    )));
                }
            }
        }
        Ok(Self(events))
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn events(&self) -> &[Event] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Event> {
        self.0.iter()
    }

    /// Attaches a cause set to event `index`.
    pub fn set_causes(&mut self, index: usize, causes: BTreeSet<usize>) -> Result<()> {
        let bound = self.0.len();
        let event = self.0.get_mut(index).ok_or(Error::OutOfRange {
            what: "event ordinal",
            index,
            bound,
        })?;
        if causes.is_empty() {
            return Err(Error::InvalidInput(format!("empty cause set for event {index}")));
        }
        event.causes = Some(causes);
        Ok(())
    }
}

impl<'a> IntoIterator for &'a EventSet {
    type Item = &'a Event;
    type IntoIter = std::slice::Iter<'a, Event>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// Maximal runs of positive labels. An event truncated by the end of the
/// series counts as one event.
pub fn events_from_labels(labels: &LabelVector) -> EventSet {
    let mut events = Vec::new();
    let mut start = None;
    for (t, &y) in labels.as_slice().iter().enumerate() {
        match (y, start) {
            (true, None) => start = Some(t),
            (false, Some(s)) => {
                events.push(Event::new(s, t - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        events.push(Event::new(s, labels.len() - 1));
    }
    EventSet(events)
}

pub fn labels_from_events(events: &EventSet, n: usize) -> Result<LabelVector> {
    let mut labels = vec![false; n];
    for e in events {
        if e.end >= n {
            return Err(Error::OutOfRange {
                what: "event end",
                index: e.end,
                bound: n,
            });
        }
        labels[e.start..=e.end].iter_mut().for_each(|y| *y = true);
    }
    Ok(LabelVector(labels))
}

/// Signed reconstruction residuals, `n` x `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorMatrix(pub Array2<f64>);

impl ErrorMatrix {
    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn m(&self) -> usize {
        self.0.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    /// Last `count` rows (fewer if the matrix is shorter).
    pub fn tail(&self, count: usize) -> ErrorMatrix {
        let start = self.n().saturating_sub(count);
        ErrorMatrix(self.0.slice(s![start.., ..]).to_owned())
    }

    /// Per-channel arithmetic mean.
    pub fn channel_means(&self) -> Vec<f64> {
        if self.n() == 0 {
            return vec![0.0; self.m()];
        }
        self.0
            .mean_axis(Axis(0))
            .map(|a| a.to_vec())
            .unwrap_or_else(|| vec![0.0; self.m()])
    }
}

/// Transformed per-channel anomaly scores, `n` x `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelScores(pub Array2<f64>);

impl ChannelScores {
    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn m(&self) -> usize {
        self.0.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }
}

/// One aggregated anomaly score per time-point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScoreSeries(pub Vec<f64>);

impl ScoreSeries {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// The subset of channels whose scores enter aggregation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScoredChannels(Vec<usize>);

impl ScoredChannels {
    pub fn all(m: usize) -> Self {
        Self((0..m).collect())
    }

    /// Sorted, deduplicated, each index `< m`, non-empty.
    pub fn new(channels: impl IntoIterator<Item = usize>, m: usize) -> Result<Self> {
        let set: BTreeSet<usize> = channels.into_iter().collect();
        if set.is_empty() {
            return Err(Error::InvalidInput("scored channel set is empty".into()));
        }
        if let Some(&max) = set.iter().next_back() {
            if max >= m {
                return Err(Error::OutOfRange {
                    what: "scored channel",
                    index: max,
                    bound: m,
                });
            }
        }
        Ok(Self(set.into_iter().collect()))
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub(crate) fn check_within(&self, m: usize) -> Result<()> {
        match self.0.iter().max() {
            None => Err(Error::InvalidInput("scored channel set is empty".into())),
            Some(&max) if max >= m => Err(Error::OutOfRange {
                what: "scored channel",
                index: max,
                bound: m,
            }),
            _ => Ok(()),
        }
    }
}

/// One physical unit with its own train/test split and its own model.
#[derive(Debug, Clone, PartialEq)]
pub struct Entity {
    pub id: String,
    pub train: SeriesMatrix,
    pub test: SeriesMatrix,
    pub test_labels: LabelVector,
    pub test_events: EventSet,
    pub scored_channels: Option<ScoredChannels>,
}

impl Entity {
    pub fn new(
        id: impl Into<String>,
        train: SeriesMatrix,
        test: SeriesMatrix,
        test_labels: LabelVector,
        scored_channels: Option<ScoredChannels>,
    ) -> Result<Self> {
        if train.m() != test.m() {
            return Err(Error::Shape(format!(
                "train has {} channels, test has {}",
                train.m(),
                test.m()
            )));
        }
        if train.channel_names() != test.channel_names() {
            return Err(Error::Shape("train and test channel names differ".into()));
        }
        if test_labels.len() != test.n() {
            return Err(Error::Shape(format!(
                "{} labels for {} test rows",
                test_labels.len(),
                test.n()
            )));
        }
        if let Some(sc) = &scored_channels {
            sc.check_within(train.m())?;
        }
        let test_events = events_from_labels(&test_labels);
        Ok(Self {
            id: id.into(),
            train,
            test,
            test_labels,
            test_events,
            scored_channels,
        })
    }

    pub fn m(&self) -> usize {
        self.train.m()
    }

    pub fn scored(&self) -> ScoredChannels {
        self.scored_channels
            .clone()
            .unwrap_or_else(|| ScoredChannels::all(self.m()))
    }
}
