//! Supporting engineering around the math core: dataset generation and
//! ingestion, experiment configuration, and CSV/SVG persistence.

pub mod config;
pub mod data;
pub mod idx;
pub mod io;
pub mod svg;

pub use config::{parse_config, ExperimentConfig};
pub use data::{gen_blobs, gen_toy_2d, random_pd_matrix, Dataset};
pub use idx::load_idx;
pub use io::{format_float, write_trajectory_csv};
pub use svg::{emit_svg, PlotKind, Series};
