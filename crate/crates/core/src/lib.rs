//! Shading design-space enumeration, daylight simulation, surrogate models,
//! sensitivity analysis and multi-objective search for side-lit rooms.

pub mod dataset;
pub mod design_space;
pub mod error;
pub mod geometry;
pub mod moo;
pub mod sensitivity;
pub mod service;
pub mod sim;
pub mod surrogate;

pub use dataset::{Dataset, SplitSpec};
pub use design_space::{
    DesignAlternative, Family, FeatureSchema, Material, OpeningSpec, Orientation, RoomSpec, ShadingSpec,
};
pub use error::{Error, Result};
pub use moo::{OptimalRecord, ParetoArchive};
pub use sensitivity::ShapReport;
pub use service::{LeedScore, PredictRequest, PredictResponse, Predictor, ServiceConfig, SuggestQuery};
pub use sim::{Fidelity, MetricVector, Output};
pub use surrogate::{Algorithm, Hyperparams, SurrogateModel};
