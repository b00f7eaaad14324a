//! Two-branch differentiable renderer for sparse aerial view synthesis.
//!
//! A radiance-field branch and a multiplane-image branch are trained jointly
//! on a handful of posed views; the MPI branch's renders at unseen viewpoints
//! serve as pseudo-labels that regularize the radiance field. Everything runs
//! on CPU over a small reverse-mode autodiff core ([`diffcore`]).

pub mod diffcore;
pub mod geometry;
pub mod losses;
pub mod metrics;
pub mod mpi;
pub mod nerf;
pub mod rng;
pub mod scene;
pub mod trainer;

pub use diffcore::{Graph, Tensor};

/// Crate-wide error type; module errors convert into it.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Diff(#[from] diffcore::DiffError),
    #[error(transparent)]
    Geom(#[from] geometry::GeomError),
    #[error(transparent)]
    Scene(#[from] scene::SceneError),
    #[error(transparent)]
    Train(#[from] trainer::TrainError),
    #[error("{0}")]
    Msg(String),
}

pub type Result<T> = std::result::Result<T, Error>;
