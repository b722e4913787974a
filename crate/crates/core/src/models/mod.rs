//! Reconstruction models: Raw Signal, PCA, univariate autoencoders (one per
//! channel) and a fully-connected autoencoder over flattened windows.

mod mlp;
mod pca;
mod train;

use std::ops::Range;
use std::path::Path;

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use mlp::{autoencoder_widths, encoder_widths, Adam, MlpAutoencoder};
pub use pca::PcaModel;
pub use train::{train_autoencoder, EpochLoss, TrainSettings, TrainingReport};

use crate::error::{Error, Result};
use crate::ingest::{make_windows, WindowSpec};
use crate::types::{ErrorMatrix, SeriesMatrix};

/// Number of windows reconstructed per forward pass during inference.
const INFERENCE_CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Raw,
    Pca,
    Uae,
    FcAe,
}

impl ModelKind {
    pub fn is_windowed(self) -> bool {
        matches!(self, ModelKind::Uae | ModelKind::FcAe)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// Defaults: 5 for UAE, `max(1, m / 2)` for FC AE.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latent_dim: Option<usize>,
    #[serde(default = "default_pca_fraction")]
    pub pca_variance_fraction: f64,
    /// Defaults: 1e-3 for UAE, 1e-4 for FC AE.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    /// Defaults: 256 for UAE, 128 for FC AE.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default = "default_validation_fraction")]
    pub validation_fraction: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_pca_fraction() -> f64 {
    0.9
}
fn default_max_epochs() -> usize {
    100
}
fn default_patience() -> usize {
    10
}
fn default_validation_fraction() -> f64 {
    0.25
}

impl ModelConfig {
    pub fn new(kind: ModelKind) -> Self {
        Self {
            kind,
            latent_dim: None,
            pca_variance_fraction: default_pca_fraction(),
            learning_rate: None,
            batch_size: None,
            max_epochs: default_max_epochs(),
            patience: default_patience(),
            validation_fraction: default_validation_fraction(),
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::Config(format!(
                "validation_fraction must lie in (0, 1), got {}",
                self.validation_fraction
            )));
        }
        if self.latent_dim == Some(0) {
            return Err(Error::Config("latent_dim must be >= 1".into()));
        }
        if self.batch_size == Some(0) {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if let Some(lr) = self.learning_rate {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::Config(format!("learning_rate must be positive, got {lr}")));
            }
        }
        if !(self.pca_variance_fraction > 0.0 && self.pca_variance_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "pca_variance_fraction must lie in (0, 1], got {}",
                self.pca_variance_fraction
            )));
        }
        Ok(())
    }

    pub fn train_settings(&self, m: usize) -> TrainSettings {
        let (latent, lr, batch) = match self.kind {
            ModelKind::FcAe => ((m / 2).max(1), 1e-4, 128),
            _ => (5, 1e-3, 256),
        };
        TrainSettings {
            latent_dim: self.latent_dim.unwrap_or(latent),
            learning_rate: self.learning_rate.unwrap_or(lr),
            batch_size: self.batch_size.unwrap_or(batch),
            max_epochs: self.max_epochs,
            patience: self.patience,
            validation_fraction: self.validation_fraction,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedParams {
    Raw,
    Pca { pca: PcaModel },
    Uae { channels: Vec<MlpAutoencoder> },
    FcAe { network: MlpAutoencoder },
}

/// Maps a context matrix to the reconstruction of the final time-point of
/// each window ending in `ends`. A window ending at `t` spans
/// `t + 1 - window_len ..= t`.
pub trait Reconstructor: Sync {
    fn window_len(&self) -> usize;

    fn n_channels(&self) -> usize;

    fn reconstruct_last(&self, context: ArrayView2<'_, f64>, ends: Range<usize>) -> Array2<f64>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub config: ModelConfig,
    pub window: WindowSpec,
    pub m: usize,
    pub params: FittedParams,
    /// Per-channel mean of the training residuals.
    pub train_error_mean: Vec<f64>,
    pub training: Vec<TrainingReport>,
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        self.config.kind
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            model: self.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_str(text)?;
        if ckpt.format != CHECKPOINT_FORMAT || ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint {} v{}",
                ckpt.format, ckpt.version
            )));
        }
        ckpt.model.check()?;
        Ok(ckpt.model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    fn check(&self) -> Result<()> {
        if self.train_error_mean.len() != self.m {
            return Err(Error::Shape("train error stats do not match channel count".into()));
        }
        let l_w = self.window.l_w;
        match &self.params {
            FittedParams::Uae { channels } if channels.len() != self.m => {
                Err(Error::Shape(format!("{} UAE networks for {} channels", channels.len(), self.m)))
            }
            FittedParams::Uae { channels } if channels.iter().any(|n| n.input_dim() != l_w) => {
                Err(Error::Shape("UAE network input does not match window length".into()))
            }
            FittedParams::FcAe { network } if network.input_dim() != l_w * self.m => {
                Err(Error::Shape("FC AE input does not match window size".into()))
            }
            FittedParams::Pca { pca } if pca.mean.len() != self.m => {
                Err(Error::Shape("PCA mean does not match channel count".into()))
            }
            _ => Ok(()),
        }
    }
}

const CHECKPOINT_FORMAT: &str = "tsad-model";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    model: TrainedModel,
}

impl Reconstructor for TrainedModel {
    fn window_len(&self) -> usize {
        if self.kind().is_windowed() {
            self.window.l_w
        } else {
            1
        }
    }

    fn n_channels(&self) -> usize {
        self.m
    }

    fn reconstruct_last(&self, context: ArrayView2<'_, f64>, ends: Range<usize>) -> Array2<f64> {
        let l_w = self.window_len();
        let count = ends.len();
        match &self.params {
            // reconstructs any signal to 0
            FittedParams::Raw => Array2::zeros((count, self.m)),
            FittedParams::Pca { pca } => pca.reconstruct(context.slice(s![ends, ..])),
            FittedParams::Uae { channels } => {
                let mut out = Array2::zeros((count, self.m));
                for (c, net) in channels.iter().enumerate() {
                    let col = context.column(c);
                    for chunk_start in (0..count).step_by(INFERENCE_CHUNK) {
                        let chunk = chunk_start..(chunk_start + INFERENCE_CHUNK).min(count);
                        let batch = Array2::from_shape_fn((chunk.len(), l_w), |(i, j)| {
                            col[ends.start + chunk.start + i + 1 - l_w + j]
                        });
                        let recon = net.forward(batch.view());
                        out.slice_mut(s![chunk, c]).assign(&recon.column(l_w - 1));
                    }
                }
                out
            }
            FittedParams::FcAe { network } => {
                let m = self.m;
                let mut out = Array2::zeros((count, m));
                for chunk_start in (0..count).step_by(INFERENCE_CHUNK) {
                    let chunk = chunk_start..(chunk_start + INFERENCE_CHUNK).min(count);
                    let batch = Array2::from_shape_fn((chunk.len(), l_w * m), |(i, k)| {
                        context[[ends.start + chunk.start + i + 1 - l_w + k / m, k % m]]
                    });
                    let recon = network.forward(batch.view());
                    out.slice_mut(s![chunk, ..])
                        .assign(&recon.slice(s![.., (l_w - 1) * m..]));
                }
                out
            }
        }
    }
}

fn flatten_windows(windows: &[ArrayView2<'_, f64>]) -> Array2<f64> {
    let (l_w, m) = windows[0].dim();
    Array2::from_shape_fn((windows.len(), l_w * m), |(i, k)| windows[i][[k / m, k % m]])
}

fn channel_windows(windows: &[ArrayView2<'_, f64>], c: usize) -> Array2<f64> {
    let l_w = windows[0].nrows();
    Array2::from_shape_fn((windows.len(), l_w), |(i, j)| windows[i][[j, c]])
}

/// Trains the configured model on a normalized training series.
///
/// Deterministic for a fixed seed. Every UAE channel network uses the same
/// seed, so a channel's model depends only on that channel's data.
pub fn fit(train: &SeriesMatrix, config: &ModelConfig, window: WindowSpec) -> Result<TrainedModel> {
    config.validate()?;
    let m = train.m();
    let settings = config.train_settings(m);
    let (params, training) = match config.kind {
        ModelKind::Raw => (FittedParams::Raw, Vec::new()),
        ModelKind::Pca => (
            FittedParams::Pca {
                pca: PcaModel::fit(train.values(), config.pca_variance_fraction)?,
            },
            Vec::new(),
        ),
        ModelKind::Uae => {
            let windows = make_windows(train, window)?;
            let fitted = (0..m)
                .into_par_iter()
                .map(|c| train_autoencoder(&channel_windows(&windows, c), &settings))
                .collect::<Result<Vec<_>>>()?;
            let (channels, reports) = fitted.into_iter().unzip();
            (FittedParams::Uae { channels }, reports)
        }
        ModelKind::FcAe => {
            let windows = make_windows(train, window)?;
            let (network, report) = train_autoencoder(&flatten_windows(&windows), &settings)?;
            (FittedParams::FcAe { network }, vec![report])
        }
    };
    let mut model = TrainedModel {
        config: config.clone(),
        window,
        m,
        params,
        train_error_mean: vec![0.0; m],
        training,
    };
    model.train_error_mean = train_residuals(&model, train)?.channel_means();
    Ok(model)
}

/// Signed errors `observed - reconstructed` at the last position of the
/// stride-1 window ending at each row of `x`. `train_tail` must supply at
/// least `window_len - 1` rows preceding `x`.
pub fn residuals<R: Reconstructor + ?Sized>(
    model: &R,
    x: &SeriesMatrix,
    train_tail: Option<&SeriesMatrix>,
) -> Result<ErrorMatrix> {
    if x.m() != model.n_channels() {
        return Err(Error::Shape(format!(
            "model has {} channels, input has {}",
            model.n_channels(),
            x.m()
        )));
    }
    let need = model.window_len() - 1;
    let context = if need == 0 {
        x.values().to_owned()
    } else {
        let tail = train_tail.ok_or(Error::InsufficientData {
            what: "train tail rows",
            need,
            have: 0,
        })?;
        if tail.m() != x.m() {
            return Err(Error::Shape("train tail channel count differs".into()));
        }
        if tail.n() < need {
            return Err(Error::InsufficientData {
                what: "train tail rows",
                need,
                have: tail.n(),
            });
        }
        let tail = tail.values();
        concatenate(Axis(0), &[tail.slice(s![tail.nrows() - need.., ..]), x.values()])
            .map_err(|e| Error::Shape(e.to_string()))?
    };
    errors_over(model, context.view(), need..context.nrows())
}

/// Residuals on the training series itself, for the `n - window_len + 1`
/// rows that close a complete window.
pub fn train_residuals<R: Reconstructor + ?Sized>(model: &R, train: &SeriesMatrix) -> Result<ErrorMatrix> {
    let l_w = model.window_len();
    if train.n() < l_w {
        return Err(Error::InsufficientData {
            what: "training rows",
            need: l_w,
            have: train.n(),
        });
    }
    errors_over(model, train.values(), l_w - 1..train.n())
}

fn errors_over<R: Reconstructor + ?Sized>(
    model: &R,
    context: ArrayView2<'_, f64>,
    ends: Range<usize>,
) -> Result<ErrorMatrix> {
    let recon = model.reconstruct_last(context, ends.clone());
    Ok(ErrorMatrix(&context.slice(s![ends, ..]) - &recon))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use std::f64::consts::PI;

    struct Identity {
        l_w: usize,
        m: usize,
    }

    impl Reconstructor for Identity {
        fn window_len(&self) -> usize {
            self.l_w
        }
        fn n_channels(&self) -> usize {
            self.m
        }
        fn reconstruct_last(&self, context: ArrayView2<'_, f64>, ends: Range<usize>) -> Array2<f64> {
            context.slice(s![ends, ..]).to_owned()
        }
    }

    fn series(v: Array2<f64>) -> SeriesMatrix {
        SeriesMatrix::from_values(v).unwrap()
    }

    fn sinusoid(n: usize, m: usize) -> SeriesMatrix {
        series(Array2::from_shape_fn((n, m), |(t, c)| {
            0.5 + 0.5 * (2.0 * PI * t as f64 / (16.0 + 4.0 * c as f64)).sin()
        }))
    }

    #[test]
    fn raw_model_has_no_params_and_error_is_signal() {
        let x = series(array![[0.7, 0.1], [0.2, 0.4]]);
        let model = fit(&x, &ModelConfig::new(ModelKind::Raw), WindowSpec::new(1, 1).unwrap()).unwrap();
        assert_eq!(model.params, FittedParams::Raw);
        let err = residuals(&model, &x, None).unwrap();
        assert_eq!(err.0, x.values());
        assert_eq!(err.0[[0, 0]], 0.7);
    }

    #[test]
    fn pca_rank_one_residuals_vanish() {
        let x = series(Array2::from_shape_fn((40, 2), |(t, c)| {
            let v = (t as f64 * 0.3).cos();
            if c == 0 { v } else { 2.0 * v }
        }));
        let model = fit(&x, &ModelConfig::new(ModelKind::Pca), WindowSpec::new(1, 1).unwrap()).unwrap();
        match &model.params {
            FittedParams::Pca { pca } => assert_eq!(pca.n_components(), 1),
            other => panic!("{other:?}"),
        }
        let err = residuals(&model, &x, None).unwrap();
        assert!(err.0.iter().all(|e| e.abs() <= 1e-10));
    }

    #[test]
    fn identity_stub_gives_zero_errors() {
        let x = sinusoid(20, 3);
        let tail = sinusoid(10, 3);
        let err = residuals(&Identity { l_w: 5, m: 3 }, &x, Some(&tail)).unwrap();
        assert_eq!(err.n(), 20);
        assert!(err.0.iter().all(|&e| e == 0.0));
    }

    #[test]
    fn windowed_models_need_tail() {
        let x = sinusoid(20, 2);
        let stub = Identity { l_w: 5, m: 2 };
        assert!(matches!(residuals(&stub, &x, None), Err(Error::InsufficientData { need: 4, .. })));
        let short = sinusoid(3, 2);
        assert!(residuals(&stub, &x, Some(&short)).is_err());
        assert!(residuals(&stub, &sinusoid(20, 3), Some(&sinusoid(10, 3))).is_err());
    }

    fn quick(kind: ModelKind) -> ModelConfig {
        ModelConfig {
            max_epochs: 5,
            batch_size: Some(32),
            ..ModelConfig::new(kind).with_seed(3)
        }
    }

    #[test]
    fn uae_trains_one_network_per_channel() {
        let x = sinusoid(120, 3);
        let model = fit(&x, &quick(ModelKind::Uae), WindowSpec::new(16, 2).unwrap()).unwrap();
        match &model.params {
            FittedParams::Uae { channels } => {
                assert_eq!(channels.len(), 3);
                assert_eq!(channels[0].widths(), &[16, 8, 5, 8, 16]);
            }
            other => panic!("{other:?}"),
        }
        let err = residuals(&model, &sinusoid(30, 3), Some(&x)).unwrap();
        assert_eq!((err.n(), err.m()), (30, 3));
        assert_eq!(model.training.len(), 3);
    }

    #[test]
    fn uae_is_channel_permutation_equivariant() {
        let x = sinusoid(120, 3);
        let perm = [2usize, 0, 1];
        let permuted = series(Array2::from_shape_fn((120, 3), |(t, c)| x.values()[[t, perm[c]]]));
        let spec = WindowSpec::new(16, 2).unwrap();
        let a = fit(&x, &quick(ModelKind::Uae), spec).unwrap();
        let b = fit(&permuted, &quick(ModelKind::Uae), spec).unwrap();
        let test = sinusoid(25, 3);
        let test_p = series(Array2::from_shape_fn((25, 3), |(t, c)| test.values()[[t, perm[c]]]));
        let ea = residuals(&a, &test, Some(&x)).unwrap();
        let eb = residuals(&b, &test_p, Some(&permuted)).unwrap();
        for c in 0..3 {
            assert_eq!(eb.0.column(c), ea.0.column(perm[c]));
        }
    }

    #[test]
    fn fc_ae_shapes_and_latent_default() {
        let x = sinusoid(80, 4);
        let model = fit(&x, &quick(ModelKind::FcAe), WindowSpec::new(8, 4).unwrap()).unwrap();
        match &model.params {
            FittedParams::FcAe { network } => {
                assert_eq!(network.input_dim(), 32);
                assert_eq!(network.widths(), &[32, 16, 8, 4, 2, 4, 8, 16, 32]);
            }
            other => panic!("{other:?}"),
        }
        let err = residuals(&model, &sinusoid(10, 4), Some(&x)).unwrap();
        assert_eq!((err.n(), err.m()), (10, 4));
    }

    #[test]
    fn fit_is_deterministic() {
        let x = sinusoid(100, 2);
        let spec = WindowSpec::new(10, 3).unwrap();
        assert_eq!(
            fit(&x, &quick(ModelKind::Uae), spec).unwrap(),
            fit(&x, &quick(ModelKind::Uae), spec).unwrap()
        );
    }

    #[test]
    fn checkpoint_round_trip_is_lossless() {
        let x = sinusoid(100, 2);
        let model = fit(&x, &quick(ModelKind::FcAe), WindowSpec::new(10, 3).unwrap()).unwrap();
        let back = TrainedModel::from_json(&model.to_json().unwrap()).unwrap();
        assert_eq!(back, model);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        model.save(&path).unwrap();
        assert_eq!(TrainedModel::load(&path).unwrap(), model);
    }

    #[test]
    fn checkpoint_rejects_foreign_format() {
        assert!(TrainedModel::from_json(r#"{"format":"other","version":1,"model":null}"#).is_err());
    }

    #[test]
    fn insufficient_training_windows() {
        let x = sinusoid(10, 1);
        let err = fit(&x, &quick(ModelKind::Uae), WindowSpec::new(16, 1).unwrap()).unwrap_err();
        assert!(matches!(err, Error::InsufficientData { .. }));
    }

    #[test]
    fn config_validation() {
        let mut c = ModelConfig::new(ModelKind::Uae);
        c.validation_fraction = 1.0;
        assert!(c.validate().is_err());
        let c = ModelConfig { latent_dim: Some(0), ..ModelConfig::new(ModelKind::Uae) };
        assert!(c.validate().is_err());
        let s = ModelConfig::new(ModelKind::FcAe).train_settings(51);
        assert_eq!((s.latent_dim, s.learning_rate, s.batch_size), (25, 1e-4, 128));
        let s = ModelConfig::new(ModelKind::Uae).train_settings(51);
        assert_eq!((s.latent_dim, s.learning_rate, s.batch_size), (5, 1e-3, 256));
    }
}
