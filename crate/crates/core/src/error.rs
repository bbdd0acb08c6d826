use std::path::PathBuf;

use thiserror::Error;

use crate::experiments::ConfigErrors;
use crate::filter::FilterError;
use crate::girsanov::GirsanovError;
use crate::model::ModelError;
use crate::noise::NoiseError;
use crate::operators::OperatorError;
use crate::oracles::grid_zakai::GridError;
use crate::oracles::kalman::KalmanError;
use crate::oracles::projection::FixtureError;
use crate::simulator::SimError;

/// Any failure of an experiment run, tagged with the module it came from.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigErrors),
    #[error("model: {0}")]
    Model(#[from] ModelError),
    #[error("operators: {0}")]
    Operator(#[from] OperatorError),
    #[error("noise: {0}")]
    Noise(#[from] NoiseError),
    #[error("simulator: {0}")]
    Simulation(#[from] SimError),
    #[error("girsanov: {0}")]
    Girsanov(#[from] GirsanovError),
    #[error("filter: {0}")]
    Filter(#[from] FilterError),
    #[error("kalman oracle: {0}")]
    Kalman(#[from] KalmanError),
    #[error("grid oracle: {0}")]
    Grid(#[from] GridError),
    #[error("projection fixture: {0}")]
    Fixture(#[from] FixtureError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("output: {0}")]
    Json(#[from] serde_json::Error),
    #[error("output: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    pub fn is_config(&self) -> bool {
        matches!(self, Self::Config(_))
    }
}
