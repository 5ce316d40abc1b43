//! Monte Carlo study of how local bounds spread across databases.
//!
//! Each replicate draws a fresh database from a generator, runs the staged
//! fits (unweighted, weighted, re-weighted) and records the overall bounds.
//! As `n` grows the re-weighted bounds should concentrate.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generators::Generator;
use crate::lipschitz::LipschitzOptions;
use crate::model::{Family, ModelSpec};
use crate::pipeline::{run_stages, SamplerSettings, StageSettings};
use crate::reweight::ReweightConfig;
use crate::rng::{self, substream_seed};
use crate::stats;
use crate::weights::{Scheme, WeightSchemeConfig};

fn default_sampler() -> SamplerSettings {
    SamplerSettings {
        n_chains: 2,
        n_warmup: 500,
        n_keep: 500,
        ..SamplerSettings::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub generator: Generator,
    /// Synthesizer family fitted to each replicate.
    pub family: Family<f64>,
    pub n: usize,
    pub replicates: usize,
    pub scheme: Scheme,
    #[serde(default)]
    pub weights: WeightSchemeConfig<f64>,
    #[serde(default)]
    pub reweight: ReweightConfig<f64>,
    #[serde(default = "default_sampler")]
    pub sampler: SamplerSettings,
    #[serde(default)]
    pub lipschitz: LipschitzOptions<f64>,
    pub seed: u64,
    /// Give every replicate the same seed; replicates are then identical.
    #[serde(default)]
    pub identical_seeds: bool,
}

impl McConfig {
    /// Poisson(μ) data with a Poisson synthesizer, LW weights, R = 100.
    pub fn poisson(mu: f64, n: usize) -> Self {
        McConfig {
            generator: Generator::Poisson { mu },
            family: Family::Poisson,
            n,
            replicates: 100,
            scheme: Scheme::Lw,
            weights: WeightSchemeConfig::default(),
            reweight: ReweightConfig::default(),
            sampler: default_sampler(),
            lipschitz: LipschitzOptions::default(),
            seed: 1,
            identical_seeds: false,
        }
    }

    /// The two-component NB mixture with an NB synthesizer.
    pub fn nb_mixture(n: usize) -> Self {
        McConfig {
            generator: Generator::skewed_mixture(),
            family: Family::NegativeBinomial,
            ..McConfig::poisson(100.0, n)
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        if self.replicates < 2 {
            return Err(Error::config("need at least two replicates"));
        }
        if self.n < 2 {
            return Err(Error::config("need at least two records per replicate"));
        }
        if !matches!(self.scheme, Scheme::Lw | Scheme::Cw | Scheme::Sw) {
            return Err(Error::config(format!(
                "scheme must be lw, cw or sw, not {}",
                self.scheme.label()
            )));
        }
        self.weights.validate()?;
        self.reweight.validate()?;
        self.sampler.with_seed(self.seed).validate()
    }

    pub fn replicate_seed(&self, r: usize) -> u64 {
        let index = if self.identical_seeds { 0 } else { r as u64 };
        substream_seed(self.seed, rng::MC, index)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReplicate {
    pub replicate: usize,
    pub seed: u64,
    pub delta_unweighted: f64,
    pub delta_weighted: f64,
    pub delta_reweighted: f64,
    pub k_used: f64,
    pub reweight_converged: bool,
    pub sampler_converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub sd: f64,
    /// `max − min`.
    pub range: f64,
    /// `(max − min) / mean`.
    pub relative_range: f64,
}

impl Spread {
    pub fn of(values: &[f64]) -> Self {
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = stats::mean(values);
        Spread {
            min,
            max,
            mean,
            sd: stats::std_dev(values),
            range: max - min,
            relative_range: (max - min) / mean,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub config: McConfig,
    pub replicates: Vec<McReplicate>,
    pub unweighted: Spread,
    pub reweighted: Spread,
    pub unconverged_replicates: usize,
}

impl McReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.replicates {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io("mc csv", e))?;
        Ok(())
    }

    /// Long format `replicate,variant,bound` for violin plots.
    pub fn write_violin_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["replicate", "variant", "bound"])?;
        for r in &self.replicates {
            for (variant, bound) in [
                ("unweighted", r.delta_unweighted),
                ("weighted", r.delta_weighted),
                ("reweighted", r.delta_reweighted),
            ] {
                w.write_record([
                    r.replicate.to_string(),
                    variant.to_string(),
                    bound.to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io("violin csv", e))?;
        Ok(())
    }
}

/// One replicate: generate, fit all stages, collect bounds.
pub fn run_replicate(config: &McConfig, r: usize) -> Result<McReplicate> {
    let seed = config.replicate_seed(r);
    let data = config.generator.generate(config.n, seed)?;
    let spec = ModelSpec::intercept_only(config.family.clone());
    let settings = StageSettings {
        scheme: config.scheme,
        weights: &config.weights,
        sw_target: None,
        reweight: Some(&config.reweight),
        sampler: &config.sampler,
        lipschitz: &config.lipschitz,
        seed,
    };
    let stages = run_stages(&spec, &data, &settings, false)?;
    let rw = stages
        .reweight
        .as_ref()
        .expect("re-weighting is always configured here");
    let sampler_converged =
        stages.unweighted.converged() && stages.weighted.converged() && rw.fit.converged();
    Ok(McReplicate {
        replicate: r,
        seed,
        delta_unweighted: stages.unweighted.report.overall,
        delta_weighted: stages.weighted.report.overall,
        delta_reweighted: rw.outcome.delta_after,
        k_used: rw.outcome.k_used,
        reweight_converged: rw.outcome.converged,
        sampler_converged,
    })
}

/// Runs all replicates on the current thread pool. Results are in
/// replicate order whatever the schedule. Non-convergence is recorded, not
/// fatal.
pub fn run_mc(config: &McConfig) -> Result<McReport> {
    config.validate()?;
    let replicates: Vec<McReplicate> = (0..config.replicates)
        .into_par_iter()
        .map(|r| run_replicate(config, r))
        .collect::<Result<_>>()?;
    let unweighted: Vec<f64> = replicates.iter().map(|r| r.delta_unweighted).collect();
    let reweighted: Vec<f64> = replicates.iter().map(|r| r.delta_reweighted).collect();
    let unconverged_replicates = replicates
        .iter()
        .filter(|r| !(r.sampler_converged && r.reweight_converged))
        .count();
    Ok(McReport {
        config: config.clone(),
        unweighted: Spread::of(&unweighted),
        reweighted: Spread::of(&reweighted),
        replicates,
        unconverged_replicates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(n: usize) -> McConfig {
        McConfig {
            replicates: 3,
            sampler: SamplerSettings {
                n_chains: 2,
                n_warmup: 500,
                n_keep: 150,
                ..SamplerSettings::default()
            },
            reweight: ReweightConfig {
                max_iters: 2,
                ..ReweightConfig::default()
            },
            ..McConfig::poisson(30.0, n)
        }
    }

    #[test]
    fn identical_seeds_identical_bounds() {
        let mut c = tiny(40);
        c.replicates = 2;
        c.identical_seeds = true;
        let r = run_mc(&c).unwrap();
        assert_eq!(r.replicates[0].seed, r.replicates[1].seed);
        assert_eq!(
            r.replicates[0].delta_reweighted,
            r.replicates[1].delta_reweighted
        );
        assert_eq!(r.reweighted.range, 0.0);
    }

    #[test]
    fn report_is_consistent_and_deterministic() {
        let c = tiny(60);
        let a = run_mc(&c).unwrap();
        assert_eq!(a, run_mc(&c).unwrap());
        assert_eq!(a.replicates.len(), 3);
        let vals: Vec<f64> = a.replicates.iter().map(|r| r.delta_reweighted).collect();
        assert_eq!(
            a.reweighted.max,
            vals.iter().copied().fold(f64::MIN, f64::max)
        );
        assert!(a.replicates.iter().all(|r| r.delta_unweighted > 0.0));
        let mut csv = Vec::new();
        a.write_violin_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 1 + 3 * 3);
        let mut csv = Vec::new();
        a.write_csv(&mut csv).unwrap();
        assert!(String::from_utf8(csv)
            .unwrap()
            .starts_with("replicate,seed,delta_unweighted"));
        let back: McReport = serde_json::from_str(&a.to_json().unwrap()).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn invalid() {
        let mut c = tiny(10);
        c.replicates = 1;
        assert!(c.validate().is_err());
        let mut c = tiny(1);
        c.replicates = 2;
        assert!(c.validate().is_err());
    }

    #[test]
    fn spread() {
        let s = Spread::of(&[2.0, 4.0, 6.0]);
        assert_eq!((s.min, s.max, s.mean, s.range), (2.0, 6.0, 4.0, 4.0));
        assert_eq!(s.relative_range, 1.0);
    }
}
