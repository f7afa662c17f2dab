//! Location–time encoders: Equal Earth projection, random Fourier features,
//! temporal encoders, and frozen embedding tables.

mod encoder;
mod equal_earth;
mod frozen;
mod rff;
mod time;

pub use encoder::{EncoderShape, LocationTimeEncoder, SpaceTime};
pub use equal_earth::{equal_earth_project, EqualEarthPoint, X_EXTENT, Y_EXTENT};
pub use frozen::FrozenEmbeddingTable;
pub use rff::{RffBank, RffLevel};
pub use time::{TemporalEncoder, TemporalKind, DAYS_PER_YEAR};
