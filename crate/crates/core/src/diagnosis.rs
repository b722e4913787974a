//! Per-event channel rankings over true event spans, and the RC-top-k and
//! HitRate@P diagnosis scores.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{ChannelScores, Event, EventSet, ScoredChannels};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpanStatistic {
    #[default]
    Mean,
    Max,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventDiagnosis {
    pub event_index: usize,
    /// Scored channel indices, most anomalous first.
    pub ranked_channels: Vec<usize>,
    pub statistic: SpanStatistic,
}

/// Orders scored channels by descending span statistic, ascending index on ties.
pub fn rank_channels(
    channel_scores: &ChannelScores,
    event: &Event,
    event_index: usize,
    scored: &ScoredChannels,
    statistic: SpanStatistic,
) -> Result<EventDiagnosis> {
    if event.end >= channel_scores.n() {
        return Err(Error::OutOfRange {
            what: "event end",
            index: event.end,
            bound: channel_scores.n(),
        });
    }
    scored.check_within(channel_scores.m())?;
    let span = channel_scores.0.slice(ndarray::s![event.start..=event.end, ..]);
    let stat: Vec<(usize, f64)> = scored
        .as_slice()
        .iter()
        .map(|&i| {
            let col = span.column(i);
            let v = match statistic {
                SpanStatistic::Mean => col.sum() / col.len() as f64,
                SpanStatistic::Max => col.fold(f64::NEG_INFINITY, |a, &b| a.max(b)),
            };
            (i, v)
        })
        .collect();
    let mut ranked = stat;
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(EventDiagnosis {
        event_index,
        ranked_channels: ranked.into_iter().map(|(i, _)| i).collect(),
        statistic,
    })
}

/// Diagnoses every event that carries cause labels.
pub fn diagnose_events(
    channel_scores: &ChannelScores,
    events: &EventSet,
    scored: &ScoredChannels,
    statistic: SpanStatistic,
) -> Result<Vec<EventDiagnosis>> {
    events
        .iter()
        .enumerate()
        .filter(|(_, e)| e.causes.is_some())
        .map(|(k, e)| rank_channels(channel_scores, e, k, scored, statistic))
        .collect()
}

fn paired<'a>(
    diagnoses: &'a [EventDiagnosis],
    events: &'a EventSet,
) -> Result<Vec<(&'a EventDiagnosis, &'a std::collections::BTreeSet<usize>)>> {
    let pairs: Vec<_> = diagnoses
        .iter()
        .filter_map(|d| {
            events
                .events()
                .get(d.event_index)
                .and_then(|e| e.causes.as_ref())
                .map(|c| (d, c))
        })
        .collect();
    if pairs.is_empty() {
        return Err(Error::InvalidInput("no diagnosed events with cause labels".into()));
    }
    Ok(pairs)
}

/// Fraction of labelled events with at least one cause among the top `k`.
pub fn rc_top_k(diagnoses: &[EventDiagnosis], events: &EventSet, k: usize) -> Result<f64> {
    let pairs = paired(diagnoses, events)?;
    let hits = pairs
        .iter()
        .filter(|(d, causes)| d.ranked_channels.iter().take(k).any(|c| causes.contains(c)))
        .count();
    Ok(hits as f64 / pairs.len() as f64)
}

/// Mean overlap of the `c` causes with the top `floor(percent / 100 * c)`.
pub fn hitrate_at(diagnoses: &[EventDiagnosis], events: &EventSet, percent: u32) -> Result<f64> {
    let pairs = paired(diagnoses, events)?;
    let total: f64 = pairs
        .iter()
        .map(|(d, causes)| {
            let c = causes.len();
            let cut = (percent as usize * c) / 100;
            let overlap = d.ranked_channels.iter().take(cut).filter(|i| causes.contains(i)).count();
            overlap as f64 / c as f64
        })
        .sum();
    Ok(total / pairs.len() as f64)
}
