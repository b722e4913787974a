//! Dataset loading, channel-wise normalization, windowing and synthetic
//! benchmark generation.

mod csv_source;
mod normalize;
mod synthetic;
mod window;

pub use csv_source::{load_entity, load_series, read_cause_map, write_entity, EntityFiles, LoadOptions};
pub use normalize::{apply_normalizer, fit_normalizer, NormStats, Phase, TEST_CLIP};
pub use synthetic::{generate_synthetic, AnomalyKind, InjectedEvent, SyntheticSpec};
pub use window::{make_windows, window_count, window_starts, WindowSpec};
