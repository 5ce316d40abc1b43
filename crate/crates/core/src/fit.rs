//! One synthesizer fit: draws under a weight vector and their bounds.

use crate::error::Result;
use crate::lipschitz::{lipschitz_report, LipschitzOptions, LipschitzReport, MagnitudeMatrix};
use crate::model::{Dataset, ModelSpec};
use crate::sampler::{sample_pseudo_posterior, ParameterDraws, SamplerConfig};
use crate::scalar::Scalar;
use crate::weights::WeightVector;

#[derive(Debug, Clone)]
pub struct Fit<T> {
    pub weights: WeightVector<T>,
    pub draws: ParameterDraws<T>,
    pub report: LipschitzReport<T>,
    /// Present only when requested and within the size cap.
    pub matrix: Option<MagnitudeMatrix<T>>,
}

impl<T: Scalar> Fit<T> {
    pub fn converged(&self) -> bool {
        self.draws.diagnostics.converged
    }
}

/// Samples the `weights`-weighted pseudo posterior and bounds it.
pub fn fit_and_bound<T: Scalar>(
    spec: &ModelSpec<T>,
    dataset: &Dataset,
    weights: &WeightVector<T>,
    sampler: &SamplerConfig,
    options: &LipschitzOptions<T>,
    keep_matrix: bool,
) -> Result<Fit<T>> {
    let draws = sample_pseudo_posterior(spec, dataset, weights, sampler)?;
    let run = lipschitz_report(spec, &draws, dataset, weights, options, keep_matrix)?;
    Ok(Fit {
        weights: weights.clone(),
        draws,
        report: run.report,
        matrix: run.matrix,
    })
}
