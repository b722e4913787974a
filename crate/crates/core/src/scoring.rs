//! Scoring functions: per-channel transforms of reconstruction residuals and
//! their aggregation into one anomaly score per time-point.
//!
//! Gauss-family channel scores are `-log10(1 - Φ(z))` (base 10, so a tail-p
//! threshold of `-m * log10(eps)` is on the same scale), with `z` clamped to
//! `[-8, 8]`, which caps a channel score at about 15.2.

use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::normal_sf;
use crate::types::{ChannelScores, ErrorMatrix, ScoreSeries, ScoredChannels};

pub const SIGMA_FLOOR: f64 = 1e-4;
pub const Z_CLAMP: f64 = 8.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussParams {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Rolling window length for Gauss-D, at least 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct DynamicWindow(usize);

impl DynamicWindow {
    pub fn new(w: usize) -> Result<Self> {
        if w < 2 {
            return Err(Error::InvalidInput(format!("dynamic window must be >= 2, got {w}")));
        }
        Ok(Self(w))
    }

    pub fn get(self) -> usize {
        self.0
    }
}

impl TryFrom<usize> for DynamicWindow {
    type Error = Error;

    fn try_from(w: usize) -> Result<Self> {
        Self::new(w)
    }
}

impl From<DynamicWindow> for usize {
    fn from(w: DynamicWindow) -> usize {
        w.0
    }
}

/// Gaussian smoothing kernel truncated at `3 * ceil(sigma)` taps each side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct KernelSpec {
    sigma: f64,
}

impl KernelSpec {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidInput(format!("kernel sigma must be > 0, got {sigma}")));
        }
        Ok(Self { sigma })
    }

    pub fn sigma(self) -> f64 {
        self.sigma
    }

    pub fn radius(self) -> usize {
        3 * self.sigma.ceil() as usize
    }

    /// Unit-sum weights for offsets `-radius..=radius`.
    pub fn weights(self) -> Vec<f64> {
        let r = self.radius() as i64;
        let raw: Vec<f64> = (-r..=r)
            .map(|u| (-0.5 * (u as f64 / self.sigma).powi(2)).exp())
            .collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|w| w / total).collect()
    }
}

impl TryFrom<f64> for KernelSpec {
    type Error = Error;

    fn try_from(sigma: f64) -> Result<Self> {
        Self::new(sigma)
    }
}

impl From<KernelSpec> for f64 {
    fn from(k: KernelSpec) -> f64 {
        k.sigma
    }
}

fn check_scored(scored: &ScoredChannels, m: usize) -> Result<()> {
    scored.check_within(m)
}

/// Root-mean-square over scored channels of the train-mean-centred error.
pub fn score_error(
    test_err: &ErrorMatrix,
    train_mean: &[f64],
    scored: &ScoredChannels,
) -> Result<ScoreSeries> {
    if train_mean.len() != test_err.m() {
        return Err(Error::Shape(format!(
            "{} train means for {} channels",
            train_mean.len(),
            test_err.m()
        )));
    }
    check_scored(scored, test_err.m())?;
    let k = scored.len() as f64;
    let scores = test_err
        .view()
        .rows()
        .into_iter()
        .map(|row| {
            let ss: f64 = scored
                .as_slice()
                .iter()
                .map(|&i| (row[i] - train_mean[i]).powi(2))
                .sum();
            (ss / k).sqrt()
        })
        .collect();
    Ok(ScoreSeries(scores))
}

/// Sample mean and standard deviation (n - 1) per channel, std floored.
pub fn fit_gauss(train_err: &ErrorMatrix) -> Result<GaussParams> {
    if train_err.n() < 2 {
        return Err(Error::InsufficientData {
            what: "training error rows",
            need: 2,
            have: train_err.n(),
        });
    }
    let (mean, std) = train_err
        .view()
        .columns()
        .into_iter()
        .map(|col| {
            let mean = col.mean().expect("non-empty");
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (col.len() - 1) as f64;
            (mean, var.sqrt().max(SIGMA_FLOOR))
        })
        .unzip();
    Ok(GaussParams { mean, std })
}

/// `-log10(1 - Φ(z))` with `z = (err - mu) / sigma` clamped to `[-8, 8]`.
pub fn gauss_channel_score(err: f64, mu: f64, sigma: f64) -> f64 {
    let z = ((err - mu) / sigma).clamp(-Z_CLAMP, Z_CLAMP);
    -normal_sf(z).log10()
}

/// Sum of channel scores over the scored subset, in channel index order.
pub fn aggregate_sum(channels: &ChannelScores, scored: &ScoredChannels) -> Result<ScoreSeries> {
    check_scored(scored, channels.m())?;
    Ok(ScoreSeries(
        channels
            .view()
            .rows()
            .into_iter()
            .map(|row| scored.as_slice().iter().map(|&i| row[i]).sum())
            .collect(),
    ))
}

pub fn score_gauss_s(
    test_err: &ErrorMatrix,
    params: &GaussParams,
    scored: &ScoredChannels,
) -> Result<(ChannelScores, ScoreSeries)> {
    if params.mean.len() != test_err.m() || params.std.len() != test_err.m() {
        return Err(Error::Shape("Gauss parameters do not match channel count".into()));
    }
    let mut out = Array2::zeros(test_err.0.dim());
    for ((t, i), a) in out.indexed_iter_mut() {
        *a = gauss_channel_score(test_err.0[[t, i]], params.mean[i], params.std[i]);
    }
    let channels = ChannelScores(out);
    let total = aggregate_sum(&channels, scored)?;
    Ok((channels, total))
}

/// Welford accumulator supporting removal, for sliding-window statistics.
#[derive(Debug, Clone, Copy, Default)]
struct RollingStats {
    n: usize,
    mean: f64,
    m2: f64,
}

impl RollingStats {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn pop(&mut self, x: f64) {
        if self.n <= 1 {
            *self = Self::default();
            return;
        }
        let n = self.n as f64;
        let mean_new = (n * self.mean - x) / (n - 1.0);
        self.m2 = (self.m2 - (x - self.mean) * (x - mean_new)).max(0.0);
        self.mean = mean_new;
        self.n -= 1;
    }

    fn std(&self) -> f64 {
        if self.n < 2 {
            SIGMA_FLOOR
        } else {
            (self.m2 / (self.n - 1) as f64).sqrt().max(SIGMA_FLOOR)
        }
    }
}

fn rolling_channel(tail: ArrayView1<'_, f64>, test: ArrayView1<'_, f64>, w: usize, out: &mut [f64]) {
    let history: Vec<f64> = tail.iter().chain(test.iter()).copied().collect();
    let offset = tail.len();
    let mut stats = RollingStats::default();
    // window on entry to the first test point: the last w - 1 tail values
    let first = offset.saturating_sub(w - 1);
    for &v in &history[first..offset] {
        stats.push(v);
    }
    for (t, slot) in out.iter_mut().enumerate() {
        let idx = offset + t;
        stats.push(history[idx]);
        if stats.n > w {
            stats.pop(history[idx - w]);
        }
        *slot = gauss_channel_score(history[idx], stats.mean, stats.std());
    }
}

/// Gauss-S with per-time-point mean and sample std over the `W` most recent
/// errors, current point included. `train_tail_err` supplies the history
/// before the first test point; when it is shorter than `W - 1` rows the
/// window shrinks to the history available.
pub fn score_gauss_d(
    test_err: &ErrorMatrix,
    train_tail_err: &ErrorMatrix,
    window: DynamicWindow,
    scored: &ScoredChannels,
) -> Result<(ChannelScores, ScoreSeries)> {
    if train_tail_err.n() > 0 && train_tail_err.m() != test_err.m() {
        return Err(Error::Shape("train tail errors have a different channel count".into()));
    }
    check_scored(scored, test_err.m())?;
    let w = window.get();
    let tail = train_tail_err.tail(w - 1);
    let mut out = Array2::zeros(test_err.0.dim());
    for (i, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
        let tail_col = if tail.n() > 0 {
            tail.0.column(i).to_owned()
        } else {
            ndarray::Array1::zeros(0)
        };
        let mut buf = vec![0.0; test_err.n()];
        rolling_channel(tail_col.view(), test_err.0.column(i), w, &mut buf);
        col.iter_mut().zip(buf).for_each(|(a, b)| *a = b);
    }
    let channels = ChannelScores(out);
    let total = aggregate_sum(&channels, scored)?;
    Ok((channels, total))
}

/// Convolves each channel with the unit-sum Gaussian kernel (edge values
/// replicated) and sums over scored channels.
pub fn score_gauss_d_k(
    gauss_d_channels: &ChannelScores,
    kernel: KernelSpec,
    scored: &ScoredChannels,
) -> Result<(ChannelScores, ScoreSeries)> {
    check_scored(scored, gauss_d_channels.m())?;
    let weights = kernel.weights();
    let r = kernel.radius() as i64;
    let n = gauss_d_channels.n() as i64;
    let mut out = Array2::zeros(gauss_d_channels.0.dim());
    for (i, col) in gauss_d_channels.0.axis_iter(Axis(1)).enumerate() {
        for t in 0..n {
            let v: f64 = weights
                .iter()
                .enumerate()
                .map(|(k, w)| w * col[(t + k as i64 - r).clamp(0, n - 1) as usize])
                .sum();
            out[[t as usize, i]] = v;
        }
    }
    let channels = ChannelScores(out);
    let total = aggregate_sum(&channels, scored)?;
    Ok((channels, total))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use proptest::prelude::*;
    use statrs::distribution::{ContinuousCDF, Normal};

    // -log10(0.5)
    const HALF: f64 = std::f64::consts::LOG10_2;

    fn errs(v: Array2<f64>) -> ErrorMatrix {
        ErrorMatrix(v)
    }

    fn all(m: usize) -> ScoredChannels {
        ScoredChannels::all(m)
    }

    #[test]
    fn error_score_cases() {
        let e = errs(array![[0.5, 1.0]]);
        assert_eq!(score_error(&e, &[0.5, 1.0], &all(2)).unwrap().0, vec![0.0]);
        let single = errs(array![[4.0]]);
        assert_eq!(score_error(&single, &[1.0], &all(1)).unwrap().0, vec![3.0]);
        let two = errs(array![[3.0, 4.0]]);
        let a = score_error(&two, &[0.0, 0.0], &all(2)).unwrap().0[0];
        assert!((a - 12.5f64.sqrt()).abs() < 1e-15);
        assert!((a - 3.5355).abs() < 1e-4);
    }

    #[test]
    fn error_score_subset_and_empty() {
        let e = errs(array![[3.0, 100.0]]);
        let sub = ScoredChannels::new([0], 2).unwrap();
        assert_eq!(score_error(&e, &[0.0, 0.0], &sub).unwrap().0, vec![3.0]);
        assert!(ScoredChannels::new(Vec::<usize>::new(), 2).is_err());
    }

    #[test]
    fn fit_gauss_cases() {
        let p = fit_gauss(&errs(array![[0.0], [0.0], [0.0]])).unwrap();
        assert_eq!((p.mean[0], p.std[0]), (0.0, SIGMA_FLOOR));
        let p = fit_gauss(&errs(array![[1.0, 5.0], [3.0, 5.0]])).unwrap();
        assert_eq!(p.mean, vec![2.0, 5.0]);
        assert!((p.std[0] - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(p.std[1], SIGMA_FLOOR);
        assert!(fit_gauss(&errs(array![[1.0]])).is_err());
    }

    #[test]
    fn gauss_s_reference_points() {
        assert!((gauss_channel_score(0.0, 0.0, 1.0) - HALF).abs() < 1e-12);
        assert!(gauss_channel_score(-100.0, 0.0, 1.0).abs() < 1e-9);
        // oracle: statrs survival function
        let expected = -Normal::standard().sf(3.0).log10();
        let got = gauss_channel_score(3.0, 0.0, 1.0);
        assert!((got - expected).abs() < 1e-10);
        assert!((got - 2.8697).abs() < 1e-4);
        let cap = gauss_channel_score(1e9, 0.0, 1.0);
        assert!((cap - -Normal::standard().sf(8.0).log10()).abs() < 1e-9);
        assert!(cap > 15.0 && cap < 15.3);
    }

    #[test]
    fn gauss_s_sums_channels() {
        let e = errs(array![[0.0, 0.0, 9.0]]);
        let p = GaussParams { mean: vec![0.0; 3], std: vec![1.0; 3] };
        let (_, total) = score_gauss_s(&e, &p, &ScoredChannels::new([0, 1], 3).unwrap()).unwrap();
        assert!((total.0[0] - 2.0 * HALF).abs() < 1e-12);
    }

    #[test]
    fn gauss_d_constant_stream() {
        let tail = errs(Array2::from_elem((10, 2), 0.3));
        let test = errs(Array2::from_elem((20, 2), 0.3));
        let (ch, _) = score_gauss_d(&test, &tail, DynamicWindow::new(5).unwrap(), &all(2)).unwrap();
        assert!(ch.0.iter().all(|a| (a - HALF).abs() < 1e-9));
    }

    #[test]
    fn gauss_d_rolling_oracle() {
        // W = 3, window [1, 1, 4]: mean 2, sample std sqrt(3)
        let tail = errs(array![[1.0], [1.0]]);
        let test = errs(array![[4.0]]);
        let (ch, _) = score_gauss_d(&test, &tail, DynamicWindow::new(3).unwrap(), &all(1)).unwrap();
        let z = 2.0 / 3f64.sqrt();
        let expected = -Normal::standard().sf(z).log10();
        assert!((ch.0[[0, 0]] - expected).abs() < 1e-9);
    }

    // Direct recomputation over each window, independent of the Welford path.
    fn gauss_d_oracle(history: &[f64], offset: usize, w: usize) -> Vec<f64> {
        (offset..history.len())
            .map(|idx| {
                let lo = (idx + 1).saturating_sub(w);
                let win = &history[lo..=idx];
                let n = win.len() as f64;
                let mean = win.iter().sum::<f64>() / n;
                let std = if win.len() < 2 {
                    SIGMA_FLOOR
                } else {
                    (win.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0))
                        .sqrt()
                        .max(SIGMA_FLOOR)
                };
                gauss_channel_score(history[idx], mean, std)
            })
            .collect()
    }

    proptest! {
        #[test]
        fn gauss_d_matches_direct_windows(
            hist in proptest::collection::vec(-2.0f64..2.0, 2..80),
            w in 2usize..12,
            tail_len in 0usize..10,
        ) {
            let tail_len = tail_len.min(hist.len() - 1);
            let tail = errs(Array2::from_shape_vec((tail_len, 1), hist[..tail_len].to_vec()).unwrap());
            let test_vals = hist[tail_len..].to_vec();
            let test = errs(Array2::from_shape_vec((test_vals.len(), 1), test_vals).unwrap());
            let (ch, _) = score_gauss_d(&test, &tail, DynamicWindow::new(w).unwrap(), &all(1)).unwrap();
            // tail longer than w - 1 is truncated, as the implementation does
            let start = tail_len.saturating_sub(w - 1);
            let expected = gauss_d_oracle(&hist[start..], tail_len - start, w);
            for (a, b) in ch.0.column(0).iter().zip(expected) {
                prop_assert!((a - b).abs() < 1e-7, "{} vs {}", a, b);
            }
        }

        #[test]
        fn gauss_s_monotone(a in -20.0f64..20.0, b in -20.0f64..20.0, mu in -1.0f64..1.0, s in 0.01f64..3.0) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(gauss_channel_score(hi, mu, s) >= gauss_channel_score(lo, mu, s));
            prop_assert!(gauss_channel_score(lo, mu, s) >= 0.0);
            prop_assert!(gauss_channel_score(hi, mu, s).is_finite());
        }

        #[test]
        fn aggregation_is_additive(values in proptest::collection::vec(0.0f64..15.0, 12)) {
            let ch = ChannelScores(Array2::from_shape_vec((3, 4), values).unwrap());
            let s1 = ScoredChannels::new([0, 2], 4).unwrap();
            let s2 = ScoredChannels::new([1, 3], 4).unwrap();
            let a = aggregate_sum(&ch, &all(4)).unwrap();
            let b = aggregate_sum(&ch, &s1).unwrap();
            let c = aggregate_sum(&ch, &s2).unwrap();
            for t in 0..3 {
                prop_assert!((a.0[t] - (b.0[t] + c.0[t])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gauss_d_short_tail_degrades() {
        let test = errs(array![[1.0], [2.0], [3.0]]);
        let (ch, _) = score_gauss_d(&test, &errs(Array2::zeros((0, 1))), DynamicWindow::new(5).unwrap(), &all(1)).unwrap();
        // single-point history: z = 0
        assert!((ch.0[[0, 0]] - HALF).abs() < 1e-12);
        assert!(ch.0.iter().all(|a| a.is_finite() && *a >= 0.0));
    }

    #[test]
    fn gauss_d_saturated_matches_gauss_s() {
        // alternating +-1 errors: every even-length window has the train statistics
        let n_train = 200;
        let alt = |t: usize| if t.is_multiple_of(2) { 1.0 } else { -1.0 };
        let train = errs(Array2::from_shape_fn((n_train, 1), |(t, _)| alt(t)));
        let test = errs(Array2::from_shape_fn((300, 1), |(t, _)| alt(n_train + t)));
        let params = fit_gauss(&train).unwrap();
        let (s, _) = score_gauss_s(&test, &params, &all(1)).unwrap();
        let (d, _) = score_gauss_d(&test, &train, DynamicWindow::new(n_train).unwrap(), &all(1)).unwrap();
        for (a, b) in s.0.iter().zip(d.0.iter()) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn drift_bounded_under_gauss_d_not_gauss_s() {
        let noise = |t: usize| ((t * 7919) % 101) as f64 / 101.0 - 0.5;
        let train = errs(Array2::from_shape_fn((500, 1), |(t, _)| 0.05 * noise(t)));
        let test = errs(Array2::from_shape_fn((2000, 1), |(t, _)| 0.002 * t as f64 + 0.05 * noise(t + 500)));
        let (s, _) = score_gauss_s(&test, &fit_gauss(&train).unwrap(), &all(1)).unwrap();
        let (d, _) = score_gauss_d(&test, &train, DynamicWindow::new(200).unwrap(), &all(1)).unwrap();
        let tail_max = |c: &ChannelScores| c.0.slice(ndarray::s![1500.., 0]).fold(0.0f64, |a, &v| a.max(v));
        assert!(tail_max(&s) > 15.0);
        assert!(tail_max(&d) < 3.0, "{}", tail_max(&d));
    }

    #[test]
    fn kernel_impulse_peak() {
        let mut v = Array2::zeros((21, 1));
        v[[10, 0]] = 1.0;
        let k = KernelSpec::new(1.0).unwrap();
        assert_eq!(k.radius(), 3);
        let (ch, _) = score_gauss_d_k(&ChannelScores(v), k, &all(1)).unwrap();
        let sum = 1.0 + 2.0 * ((-0.5f64).exp() + (-2.0f64).exp() + (-4.5f64).exp());
        assert!((ch.0[[10, 0]] - 1.0 / sum).abs() < 1e-15);
        assert!((ch.0[[10, 0]] - 0.3990).abs() < 1e-4);
        assert!((ch.0.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kernel_preserves_constant() {
        let v = ChannelScores(Array2::from_elem((15, 2), 2.5));
        let (ch, _) = score_gauss_d_k(&v, KernelSpec::new(2.0).unwrap(), &all(2)).unwrap();
        assert!(ch.0.iter().all(|a| (a - 2.5).abs() < 1e-12));
    }

    #[test]
    fn kernel_amplifies_nearby_channel_spikes() {
        let sigma = 3.0;
        let mut v = Array2::zeros((61, 2));
        v[[27, 0]] = 10.0;
        v[[33, 1]] = 10.0;
        let k = KernelSpec::new(sigma).unwrap();
        let (ch, total) = score_gauss_d_k(&ChannelScores(v.clone()), k, &all(2)).unwrap();
        // direct convolution oracle at the midpoint t = 30
        let w = |u: f64| (-0.5 * (u / sigma).powi(2)).exp();
        let norm: f64 = (-9..=9).map(|u| w(u as f64)).sum();
        let expected = 10.0 * (w(3.0) + w(3.0)) / norm;
        assert!((total.0[30] - expected).abs() < 1e-12);
        assert!(total.0[30] > v[[30, 0]] + v[[30, 1]]);
        assert!(total.0[30] > ch.0[[30, 0]]);
    }

    #[test]
    fn tiny_sigma_is_identity() {
        let v = ChannelScores(Array2::from_shape_fn((30, 2), |(t, c)| ((t * 13 + c * 5) % 7) as f64));
        let (ch, _) = score_gauss_d_k(&v, KernelSpec::new(1e-3).unwrap(), &all(2)).unwrap();
        assert_eq!(ch.0, v.0);
    }

    #[test]
    fn invalid_parameters() {
        assert!(DynamicWindow::new(1).is_err());
        assert!(KernelSpec::new(0.0).is_err());
        assert!(serde_json::from_str::<DynamicWindow>("1").is_err());
    }
}
