pub mod analysis;
pub mod autodiff;
pub mod data;
pub mod error;
pub mod experiments;
pub mod inference;
pub mod losses;
pub mod model;
pub mod scalar;
pub mod trainer;
pub mod transforms;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Training precision.
pub type Image32 = data::Image<f32>;
pub type Tensor32 = autodiff::Tensor<f32>;
pub type Model32 = model::ModelParams<f32>;
pub type StyleCode32 = model::StyleCode<f32>;

/// Gradient-check precision.
pub type Image64 = data::Image<f64>;
pub type Tensor64 = autodiff::Tensor<f64>;
pub type Model64 = model::ModelParams<f64>;
pub type StyleCode64 = model::StyleCode<f64>;
