//! Train-validation hyperparameter selection and the numerical machinery around it:
//! feature-map regression, mixed-activation networks and their tangent kernels,
//! and two-stage spectral learning of rank-1 models.

pub mod activations;
pub mod deepnet;
pub mod featmap;
pub mod lowrank;
pub mod numcore;
pub mod shallownet;
pub mod tvo;
