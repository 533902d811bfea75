//! Manual features, normalisation, sliding windows and train/val/test splits.

mod io;
mod manual;
mod normalize;
mod split;
mod window;

pub use io::{read_frame_csv, write_frame_csv};
pub use manual::{build_manual_features, lob_column_names, FeatureConfig, FeatureFrame, MANUAL_FEATURES};
pub use normalize::{normalize, NormStats, STD_FLOOR};
pub use split::{split, SplitMode, SplitSpec, SplitWindows, TrainAnomalyPolicy, WindowConfig};
pub use window::{make_windows, InputMode, WindowBatch, WindowData};
