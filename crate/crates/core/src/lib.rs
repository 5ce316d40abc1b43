//! Differentially private synthetic count data from vector-weighted pseudo
//! posteriors.
//!
//! The pipeline fits an unweighted synthesizer, derives record weights
//! (Lipschitz-weighted, count-weighted or scalar), refits under those
//! weights, optionally re-weights to flatten the by-record bounds, and
//! releases synthetic replicates together with the local privacy
//! guarantee `ε = 2Δ`.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! at the crate root fix it to `f64`.

pub mod error;
pub mod fingerprint;
pub mod fit;
pub mod generators;
pub mod io;
pub mod lipschitz;
pub mod mc;
pub mod model;
pub mod pipeline;
pub mod provenance;
pub mod reweight;
pub mod rng;
pub mod sampler;
pub mod scalar;
pub mod special;
pub mod stats;
pub mod synth;
pub mod weights;

pub use error::{Error, Result};
pub use fit::{fit_and_bound, Fit};
pub use generators::Generator;
pub use lipschitz::{LipschitzOptions, LipschitzReport, MagnitudeMatrix};
pub use mc::{run_mc, McConfig, McReport};
pub use model::{Dataset, Family, ModelSpec, Prior, Theta};
pub use pipeline::{run_pipeline, PipelineConfig};
pub use provenance::Provenance;
pub use reweight::{reweight_formula, reweight_with_refit, ReweightConfig, ReweightOutcome};
pub use sampler::{sample_pseudo_posterior, ParameterDraws, SamplerConfig};
pub use scalar::Scalar;
pub use synth::{SyntheticBundle, UtilityTable};
pub use weights::{Scheme, SchemeConfig, WeightSchemeConfig, WeightVector};

pub type Theta64 = Theta<f64>;
pub type ModelSpec64 = ModelSpec<f64>;
pub type WeightVector64 = WeightVector<f64>;
pub type ParameterDraws64 = ParameterDraws<f64>;
pub type LipschitzReport64 = LipschitzReport<f64>;
