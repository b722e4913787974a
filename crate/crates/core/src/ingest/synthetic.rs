//! Sinusoidal multichannel benchmark with injected, labelled anomalies.
//!
//! Each channel is `sin(2*pi*t/period) + N(0, noise_sigma)`, with `t` running
//! continuously from the first training row through the last test row.
//! Event positions are test-set indices.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Entity, Event, EventSet, LabelVector, SeriesMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyKind {
    /// Adds `magnitude` to the cause channels over the event span.
    Spike,
    /// Replaces the periodic component of the cause channels with a constant
    /// level `magnitude` over the span; noise is kept.
    LevelShift,
    /// Unlabelled background ramp on every channel: rises linearly from 0 at
    /// `start` to `magnitude` at `start + length` and holds afterwards.
    DriftBackground,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectedEvent {
    pub start: usize,
    pub length: usize,
    #[serde(default)]
    pub causes: Vec<usize>,
    pub kind: AnomalyKind,
    pub magnitude: f64,
}

impl InjectedEvent {
    fn end_exclusive(&self) -> usize {
        self.start + self.length
    }

    fn is_labelled(&self) -> bool {
        self.kind != AnomalyKind::DriftBackground
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    #[serde(default = "default_id")]
    pub id: String,
    pub n_train: usize,
    pub n_test: usize,
    pub m: usize,
    /// Sinusoid period per channel, in time-points.
    pub periods: Vec<f64>,
    pub noise_sigma: f64,
    #[serde(default)]
    pub events: Vec<InjectedEvent>,
    pub seed: u64,
}

fn default_id() -> String {
    "synthetic".to_owned()
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_train == 0 || self.n_test == 0 || self.m == 0 {
            return Err(Error::InvalidInput(
                "synthetic spec needs n_train, n_test and m >= 1".into(),
            ));
        }
        if self.periods.len() != self.m {
            return Err(Error::Shape(format!(
                "{} periods for {} channels",
                self.periods.len(),
                self.m
            )));
        }
        if self.periods.iter().any(|&p| p <= 0.0 || !p.is_finite()) {
            return Err(Error::InvalidInput("periods must be positive".into()));
        }
        if self.noise_sigma < 0.0 || !self.noise_sigma.is_finite() {
            return Err(Error::InvalidInput("noise_sigma must be >= 0".into()));
        }
        for (i, e) in self.events.iter().enumerate() {
            if e.length == 0 || e.end_exclusive() > self.n_test {
                return Err(Error::InvalidInput(format!(
                    "event {i} ({}+{}) is outside the test range of {}",
                    e.start, e.length, self.n_test
                )));
            }
            if !e.magnitude.is_finite() {
                return Err(Error::InvalidInput(format!("event {i} magnitude is not finite")));
            }
            if e.is_labelled() {
                if e.causes.is_empty() {
                    return Err(Error::InvalidInput(format!("event {i} has no cause channels")));
                }
                if let Some(&c) = e.causes.iter().find(|&&c| c >= self.m) {
                    return Err(Error::OutOfRange {
                        what: "cause channel",
                        index: c,
                        bound: self.m,
                    });
                }
            }
        }
        let mut labelled: Vec<&InjectedEvent> =
            self.events.iter().filter(|e| e.is_labelled()).collect();
        labelled.sort_by_key(|e| e.start);
        for w in labelled.windows(2) {
            // a healthy gap must separate consecutive events
            if w[1].start <= w[0].end_exclusive() {
                return Err(Error::InvalidInput(format!(
                    "events starting at {} and {} overlap or touch",
                    w[0].start, w[1].start
                )));
            }
        }
        Ok(())
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Entity> {
    spec.validate()?;
    let noise = Normal::new(0.0, spec.noise_sigma)
        .map_err(|e| Error::InvalidInput(format!("noise distribution: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let periodic = |t: usize, c: usize| (2.0 * PI * t as f64 / spec.periods[c]).sin();
    let train = Array2::from_shape_fn((spec.n_train, spec.m), |(t, c)| {
        periodic(t, c) + noise.sample(&mut rng)
    });

    let mut clean = Array2::from_shape_fn((spec.n_test, spec.m), |(t, c)| {
        periodic(spec.n_train + t, c)
    });
    for e in &spec.events {
        match e.kind {
            AnomalyKind::Spike => {
                for t in e.start..e.end_exclusive() {
                    for &c in &e.causes {
                        clean[[t, c]] += e.magnitude;
                    }
                }
            }
            AnomalyKind::LevelShift => {
                for t in e.start..e.end_exclusive() {
                    for &c in &e.causes {
                        clean[[t, c]] = e.magnitude;
                    }
                }
            }
            AnomalyKind::DriftBackground => {
                for t in e.start..spec.n_test {
                    let ramp = ((t - e.start) as f64 / e.length as f64).min(1.0);
                    clean.row_mut(t).iter_mut().for_each(|v| *v += ramp * e.magnitude);
                }
            }
        }
    }
    let test = clean.mapv(|v| v + noise.sample(&mut rng));

    let mut labelled: Vec<&InjectedEvent> =
        spec.events.iter().filter(|e| e.is_labelled()).collect();
    labelled.sort_by_key(|e| e.start);
    let mut labels = vec![false; spec.n_test];
    let mut events = Vec::with_capacity(labelled.len());
    for e in &labelled {
        labels[e.start..e.end_exclusive()].iter_mut().for_each(|y| *y = true);
        events.push(Event::with_causes(
            e.start,
            e.end_exclusive() - 1,
            e.causes.iter().copied().collect::<BTreeSet<_>>(),
        ));
    }

    let names: Vec<String> = (0..spec.m).map(|i| format!("ch{i}")).collect();
    let mut entity = Entity::new(
        spec.id.clone(),
        SeriesMatrix::new(train, names.clone())?,
        SeriesMatrix::new(test, names)?,
        LabelVector::new(labels),
        None,
    )?;
    entity.test_events = EventSet::new(events, Some(spec.n_test), Some(spec.m))?;
    Ok(entity)
}
