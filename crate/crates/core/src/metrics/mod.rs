mod embedding;
mod pca;
mod regression;

pub use embedding::{export_embedding_grid, roughness, EmbeddingGrid, EmbeddingGridExport, MAPPED_COMPONENTS};
pub use pca::Pca;
pub use regression::{aggregate, compute_metrics, AggregateReport, MetricReport, Stat};
