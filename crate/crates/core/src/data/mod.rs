//! Point tables, proxy rasters, and normalization.

mod field;
mod normalize;
mod points;

pub use field::{bin_path, GridSpec, ProxyField, TimeAxis};
pub use normalize::{NormalizationStats, ZScore};
pub use points::{load_labeled_table, points_to_string, write_points, Dataset, LabeledSample, Site, SiteTable};
