//! Batch front end for HTH mixture clustering: CSV input, standardization,
//! fits over `(G, q)` grids, JSON reports, and planar contour export.

pub mod contour;
pub mod data;
pub mod error;
pub mod report;
pub mod run;

pub use contour::{contour_grid, quasiconcavity_check, ContourGrid, ConvexityReport, LevelReport};
pub use data::{load_csv, standardize, Dataset, Scaling};
pub use error::{CliError, CliResult};
pub use report::{ComponentReport, FitReport};
pub use run::{run_fit, ContourRequest, RunConfig, RunSummary, SummaryRow};
