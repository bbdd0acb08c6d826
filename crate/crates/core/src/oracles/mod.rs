//! Independent reference computations.

pub mod grid_zakai;
pub mod kalman;
pub mod projection;

pub use grid_zakai::{grid_zakai_1d, GridConfig, GridError, GridZakaiOutput};
pub use kalman::{kalman_bucy, stationary_variance, KalmanError, KalmanPath, LinearModel};
pub use projection::{projection_theorem_test, shipped_fixtures, ProjectionReport, SimpleProcessFixture};
