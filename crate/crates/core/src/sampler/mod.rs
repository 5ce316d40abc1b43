//! Adaptive random-walk Metropolis for the α-weighted pseudo posterior
//! `π(θ | x) ∝ Π p(x_i | θ)^{α_i} · prior(θ)`.
//!
//! Sampling happens in `(β, log φ)`. During warmup the per-coordinate
//! proposal scales are re-estimated from the chain at three window
//! boundaries and a global log step size follows Robbins–Monro toward the
//! target acceptance rate; everything is frozen after warmup.

pub mod diagnostics;

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fingerprint::Fingerprinter;
use crate::model::{
    log_prior_unconstrained, Dataset, Family, LogLikKernel, ModelSpec, Prior, Theta,
};
use crate::provenance::Provenance;
use crate::rng::{self, StreamRng};
use crate::scalar::Scalar;
use crate::weights::WeightVector;

pub use diagnostics::{Diagnostics, ParameterDiagnostics, RHAT_LIMIT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub n_chains: usize,
    pub n_warmup: usize,
    pub n_keep: usize,
    /// Robbins–Monro target for the Metropolis acceptance rate.
    pub target_accept: f64,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            n_chains: 4,
            n_warmup: 1000,
            n_keep: 1000,
            target_accept: 0.35,
            seed: 1,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_chains == 0 || self.n_warmup == 0 || self.n_keep == 0 {
            return Err(Error::config(
                "chains, warmup and kept draws must all be positive",
            ));
        }
        if !(0.2..=0.5).contains(&self.target_accept) {
            return Err(Error::config(format!(
                "target acceptance {} outside [0.2, 0.5]",
                self.target_accept
            )));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn fingerprint(&self) -> String {
        let mut f = Fingerprinter::new("sampler");
        f.u64(self.n_chains as u64)
            .u64(self.n_warmup as u64)
            .u64(self.n_keep as u64)
            .u64(self.target_accept.to_bits())
            .u64(self.seed);
        f.hex()
    }
}

/// Post-warmup draws, chain-major, with diagnostics and provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterDraws<T> {
    pub draws: Vec<Theta<T>>,
    pub n_chains: usize,
    pub n_per_chain: usize,
    pub diagnostics: Diagnostics,
    pub provenance: Provenance,
}

impl<T: Scalar> ParameterDraws<T> {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn chains(&self) -> impl Iterator<Item = &[Theta<T>]> {
        self.draws.chunks(self.n_per_chain)
    }

    /// Per-chain series of a scalar functional, ready for
    /// [`diagnostics::ess`] or [`diagnostics::split_rhat`].
    pub fn chain_series(&self, f: impl Fn(&Theta<T>) -> f64) -> Vec<Vec<f64>> {
        self.chains().map(|c| c.iter().map(&f).collect()).collect()
    }

    /// Column-ordered dump: `chain,iter,beta_0..,phi_0..`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let first = &self.draws[0];
        let mut header = vec!["chain".to_string(), "iter".to_string()];
        header.extend((0..first.beta.len()).map(|k| format!("beta_{k}")));
        header.extend((0..first.dispersion.len()).map(|k| format!("phi_{k}")));
        w.write_record(&header)?;
        for (c, chain) in self.chains().enumerate() {
            for (it, theta) in chain.iter().enumerate() {
                let mut row = vec![c.to_string(), it.to_string()];
                row.extend(theta.beta.iter().map(|v| v.to_string()));
                row.extend(theta.dispersion.iter().map(|v| v.to_string()));
                w.write_record(&row)?;
            }
        }
        w.flush().map_err(|e| Error::io("draws csv", e))?;
        Ok(())
    }
}

/// Unnormalized log density on the unconstrained coordinates.
struct Target<'a, T> {
    kernel: LogLikKernel<'a, T>,
    group_weights: Vec<T>,
    n_coefficients: usize,
}

impl<T: Scalar> Target<'_, T> {
    fn log_density(&self, u: &[T], scratch: &mut Vec<T>) -> T {
        let theta = Theta::from_unconstrained(u, self.n_coefficients);
        if theta
            .dispersion
            .iter()
            .any(|&p| !(p > T::zero() && p.is_finite()))
        {
            return T::neg_infinity();
        }
        let ll = match self
            .kernel
            .weighted_sum(&theta, &self.group_weights, scratch)
        {
            Ok(v) => v,
            Err(_) => return T::neg_infinity(),
        };
        let lp = ll + log_prior_unconstrained(self.kernel.spec(), &theta);
        if lp.is_nan() {
            T::neg_infinity()
        } else {
            lp
        }
    }
}

/// Weighted method-of-moments starting point and rough posterior scales.
struct Start<T> {
    center: Vec<T>,
    scales: Vec<T>,
}

fn starting_point<T: Scalar>(spec: &ModelSpec<T>, dataset: &Dataset, alphas: &[T]) -> Start<T> {
    let xs: Vec<T> = dataset
        .records()
        .iter()
        .map(|&x| T::from_count(x))
        .collect();
    let mut wsum: T = alphas.iter().copied().sum();
    let weights: Vec<T> = if wsum > T::lit(1e-9) {
        alphas.to_vec()
    } else {
        wsum = T::from_usize(xs.len()).unwrap();
        vec![T::one(); xs.len()]
    };
    let mean = xs.iter().zip(&weights).map(|(&x, &w)| w * x).sum::<T>() / wsum;
    let mean = mean.max(T::lit(0.5));
    let var = xs
        .iter()
        .zip(&weights)
        .map(|(&x, &w)| w * (x - mean) * (x - mean))
        .sum::<T>()
        / wsum;
    let phi = if var > mean * T::lit(1.001) {
        mean * mean / (var - mean)
    } else {
        T::lit(1e3)
    }
    .max(T::lit(0.05))
    .min(T::lit(1e4));

    let k = spec.n_coefficients();
    let mut center = vec![T::zero(); spec.dim()];
    center[0] = mean.ln();

    let info_per_unit = match spec.family {
        Family::Poisson => mean,
        _ => mean * phi / (mean + phi),
    };
    let eff_n: T = alphas.iter().copied().sum();
    let prior_var = match &spec.prior {
        Prior::StudentTHalfCauchy { beta_scale, .. } => T::lit(3.0) * *beta_scale * *beta_scale,
        Prior::GammaMean { shape, .. } => shape.recip(),
    };
    let mut scales = vec![T::zero(); spec.dim()];
    for (j, s) in scales.iter_mut().enumerate().take(k) {
        let design_sq = match &spec.covariates {
            None => T::one(),
            Some(c) => {
                (0..c.n_rows).map(|i| c.row(i)[j] * c.row(i)[j]).sum::<T>()
                    / T::from_usize(c.n_rows).unwrap()
            }
        };
        let info = eff_n * info_per_unit * design_sq + prior_var.recip();
        *s = info.recip().sqrt();
    }
    let n_disp = spec.family.n_dispersion();
    for d in 0..n_disp {
        // spread mixture components around the pooled estimate
        let offset = T::from_usize(d).unwrap()
            - T::from_usize(n_disp.saturating_sub(1)).unwrap() * T::lit(0.5);
        center[k + d] = phi.ln() + offset * T::lit(0.7);
        scales[k + d] = T::lit(0.3);
    }
    Start { center, scales }
}

fn student_t3<T: Scalar>(rng: &mut StreamRng) -> T {
    let z = T::sample_standard_normal(rng);
    let chi2 = T::sample_gamma(rng, T::lit(1.5), T::lit(2.0));
    z / (chi2 / T::lit(3.0)).sqrt()
}

struct ChainOutput<T> {
    draws: Vec<Vec<T>>,
    acceptance: f64,
}

fn run_chain<T: Scalar>(
    target: &Target<'_, T>,
    start: &Start<T>,
    spec: &ModelSpec<T>,
    config: &SamplerConfig,
    chain: usize,
) -> Result<ChainOutput<T>> {
    let mut rng = rng::substream(config.seed, rng::SAMPLER, chain as u64);
    let dim = start.center.len();
    let k = spec.n_coefficients();
    let mut scratch = Vec::new();

    let beta_scale = match &spec.prior {
        Prior::StudentTHalfCauchy { beta_scale, .. } => *beta_scale,
        Prior::GammaMean { .. } => T::one(),
    };
    let mut current = start.center.clone();
    for c in current.iter_mut().take(k) {
        *c += T::lit(0.1) * beta_scale * student_t3::<T>(&mut rng);
    }
    let mut current_lp = target.log_density(&current, &mut scratch);
    if !current_lp.is_finite() {
        current = start.center.clone();
        current_lp = target.log_density(&current, &mut scratch);
    }
    if !current_lp.is_finite() {
        return Err(Error::Convergence(format!(
            "chain {chain}: log density is not finite at the starting point"
        )));
    }

    let mut scales = start.scales.clone();
    let base_log_step = (T::lit(2.38) / T::from_usize(dim).unwrap().sqrt()).ln();
    let mut log_step = base_log_step;
    let target_accept = T::lit(config.target_accept);

    let w = config.n_warmup;
    let boundaries: Vec<usize> = if w >= 40 {
        vec![w / 4, w / 2, 3 * w / 4]
    } else {
        Vec::new()
    };
    let last_boundary = boundaries.last().copied().unwrap_or(0);
    let mut window: Vec<Vec<T>> = Vec::new();
    let mut adapt_t = 0usize;
    let mut log_step_sum = T::zero();
    let mut log_step_count = 0usize;

    let mut proposal = vec![T::zero(); dim];
    let mut kept = Vec::with_capacity(config.n_keep);
    let mut accepted_after_warmup = 0usize;

    for iter in 0..(w + config.n_keep) {
        let step = log_step.exp();
        for d in 0..dim {
            proposal[d] = current[d] + step * scales[d] * T::sample_standard_normal(&mut rng);
        }
        let prop_lp = target.log_density(&proposal, &mut scratch);
        let log_ratio = prop_lp - current_lp;
        let accept_prob = if log_ratio >= T::zero() {
            T::one()
        } else if log_ratio.is_finite() {
            log_ratio.exp()
        } else {
            T::zero()
        };
        let u = T::sample_unit(&mut rng);
        let accepted = u < accept_prob;
        if accepted {
            current.copy_from_slice(&proposal);
            current_lp = prop_lp;
        }

        if iter < w {
            adapt_t += 1;
            let gain = T::from_usize(adapt_t + 10).unwrap().powf(T::lit(-0.6));
            log_step += gain * (accept_prob - target_accept);
            window.push(current.clone());
            if boundaries.contains(&(iter + 1)) {
                let m = T::from_usize(window.len()).unwrap();
                for d in 0..dim {
                    let mean = window.iter().map(|v| v[d]).sum::<T>() / m;
                    let var = window
                        .iter()
                        .map(|v| (v[d] - mean) * (v[d] - mean))
                        .sum::<T>()
                        / (m - T::one());
                    // shrink toward a small floor, as with short windows
                    let shrunk = (m / (m + T::lit(5.0))) * var
                        + T::lit(1e-3) * (T::lit(5.0) / (m + T::lit(5.0)));
                    if shrunk.is_finite() && shrunk > T::zero() {
                        scales[d] = shrunk.sqrt();
                    }
                }
                window.clear();
                log_step = base_log_step;
                adapt_t = 0;
            }
            if iter + 1 > last_boundary {
                log_step_sum += log_step;
                log_step_count += 1;
            }
            if iter + 1 == w {
                log_step = log_step_sum / T::from_usize(log_step_count).unwrap();
            }
        } else {
            if accepted {
                accepted_after_warmup += 1;
            }
            kept.push(current.clone());
        }
    }
    Ok(ChainOutput {
        draws: kept,
        acceptance: accepted_after_warmup as f64 / config.n_keep as f64,
    })
}

fn parameter_names<T: Scalar>(spec: &ModelSpec<T>) -> Vec<String> {
    (0..spec.n_coefficients())
        .map(|k| format!("beta[{k}]"))
        .chain((0..spec.family.n_dispersion()).map(|k| format!("log_phi[{k}]")))
        .collect()
}

/// Draws `n_chains × n_keep` samples from the α-weighted pseudo posterior.
///
/// Chains run in parallel, each on its own substream of `config.seed`, and
/// are concatenated in chain order, so output is bit-identical for a given
/// seed regardless of thread count. Non-convergence is reported through
/// `diagnostics.converged`, not as an error.
pub fn sample_pseudo_posterior<T: Scalar>(
    spec: &ModelSpec<T>,
    dataset: &Dataset,
    weights: &WeightVector<T>,
    config: &SamplerConfig,
) -> Result<ParameterDraws<T>> {
    config.validate()?;
    if weights.len() != dataset.len() {
        return Err(Error::config(format!(
            "weight vector has {} entries for {} records",
            weights.len(),
            dataset.len()
        )));
    }
    let kernel = LogLikKernel::new(spec, dataset)?;
    let group_weights = kernel.group_weights(weights.alphas())?;
    let target = Target {
        kernel,
        group_weights,
        n_coefficients: spec.n_coefficients(),
    };
    let start = starting_point(spec, dataset, weights.alphas());

    let chains: Vec<ChainOutput<T>> = (0..config.n_chains)
        .into_par_iter()
        .map(|c| run_chain(&target, &start, spec, config, c))
        .collect::<Result<_>>()?;

    let names = parameter_names(spec);
    let parameters = names
        .into_iter()
        .enumerate()
        .map(|(d, name)| {
            let series: Vec<Vec<f64>> = chains
                .iter()
                .map(|c| c.draws.iter().map(|v| v[d].to_f64_lossy()).collect())
                .collect();
            ParameterDiagnostics {
                name,
                rhat: diagnostics::split_rhat(&series),
                ess: diagnostics::ess(&series),
            }
        })
        .collect();
    let acceptance = chains.iter().map(|c| c.acceptance).collect();
    let k = spec.n_coefficients();
    let draws = chains
        .iter()
        .flat_map(|c| c.draws.iter().map(|u| Theta::from_unconstrained(u, k)))
        .collect();

    Ok(ParameterDraws {
        draws,
        n_chains: config.n_chains,
        n_per_chain: config.n_keep,
        diagnostics: Diagnostics::from_parameters(parameters, acceptance),
        provenance: Provenance {
            model: spec.fingerprint(),
            dataset: dataset.fingerprint(),
            weights: weights.fingerprint(),
            weights_scheme: weights.scheme(),
            sampler: config.fingerprint(),
        },
    })
}
