//! Calibration and simulation toolkit for a two-regime daily temperature
//! model.
//!
//! The base regime is a mean-reverting process whose volatility scales with
//! the deseasonalized temperature level; the shifted regime is a drifted
//! Lévy-type walk whose innovations are fitted with generalized hyperbolic
//! distributions. The crate covers the full workflow:
//!
//! * [`ingest`]: station CSV loading, daily averages, gap filling, summary
//!   statistics;
//! * [`seasonal`]: least-squares trend + annual sinusoid and
//!   deseasonalization;
//! * [`ghdist`]: generalized hyperbolic family (GH, NIG, HYP, VG, Normal):
//!   densities, distribution functions, MGFs, sampling and ML fitting;
//! * [`regime`]: Hamilton filter, Kim smoother and EM calibration of the
//!   regime-switching model;
//! * [`stats`]: normality, goodness-of-fit, ARCH and Hurst diagnostics;
//! * [`indices`]: CAT / GDD indices and Monte Carlo path simulation;
//! * [`pipeline`]: end-to-end orchestration and report emission.

pub mod error;
pub mod ghdist;
pub mod indices;
pub mod ingest;
pub mod io;
pub mod par;
pub mod pipeline;
pub mod regime;
pub mod seasonal;
pub mod special;
pub mod stats;

pub use error::{Error, ErrorKind, Result};
pub use par::Execution;
