//! One-hidden-layer associative network trained with competitive Hebbian
//! plasticity and weight perturbation, two backpropagation baselines, and a
//! variational mutual-information / synaptic-capacity evaluation.

pub mod baselines;
pub mod bio;
pub mod dataset;
pub mod error;
pub mod matrix;
pub mod metrics;
pub mod net;
pub mod persist;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use net::{Algorithm, NetworkModel};
