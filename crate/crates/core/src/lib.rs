//! Synthetic driving data, view synthesis, and closed-loop evaluation for
//! camera-based lateral control policies.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod augmentation;
pub mod config;
pub mod experiment;
pub mod geometry;
pub mod image;
pub mod labels;
pub mod metrics;
pub mod par;
pub mod path;
pub mod patches;
pub mod policy;
pub mod resim;
pub mod world;

pub use par::Exec;

use std::path::{Path, PathBuf};

/// Any error the library can return.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error(transparent)]
    Geometry(#[from] geometry::GeometryError),
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    World(#[from] world::WorldError),
    #[error(transparent)]
    Patch(#[from] patches::PatchError),
    #[error(transparent)]
    Label(#[from] labels::LabelError),
    #[error(transparent)]
    Augment(#[from] augmentation::AugmentError),
    #[error(transparent)]
    Policy(#[from] policy::PolicyError),
    #[error(transparent)]
    Resim(#[from] resim::ResimError),
    #[error(transparent)]
    Metrics(#[from] metrics::MetricsError),
    #[error("i/o on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Whether the error stems from invalid input rather than a runtime failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::Augment(augmentation::AugmentError::InvalidSpec(_))
                | Error::Resim(resim::ResimError::InvalidConfig(_))
                | Error::Metrics(metrics::MetricsError::InvalidProtocol(_))
        )
    }
}
