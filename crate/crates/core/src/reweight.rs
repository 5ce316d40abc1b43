//! Re-weighting toward a flat by-record bound profile.
//!
//! Any weight vector `α` with its report `Δ_{α,x_i}`, `Δ_{α,x}` is lifted to
//!
//! ```text
//! α_i^w = clamp(k · α_i · Δ_{α,x} / Δ_{α,x_i}, 0, 1)
//! ```
//!
//! which at fixed draws makes every unclamped record's bound exactly
//! `k · Δ_{α,x}`. Because the refit under `α^w` moves the draws, `k` is
//! searched by bisection until the refit bound matches the original one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{fit_and_bound, Fit};
use crate::lipschitz::{LipschitzOptions, LipschitzReport};
use crate::model::{Dataset, ModelSpec};
use crate::sampler::SamplerConfig;
use crate::scalar::Scalar;
use crate::stats::coefficient_of_variation;
use crate::weights::{Scheme, SchemeConfig, WeightVector};

/// Scale ratio used for records whose bound is zero despite a positive
/// weight.
pub const ZERO_BOUND_RATIO_CAP: f64 = 1e3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(deserialize = "T: Scalar"), deny_unknown_fields)]
pub struct ReweightConfig<T> {
    pub k_init: T,
    /// Relative bound-match tolerance.
    pub tolerance: T,
    pub max_iters: usize,
    pub k_bounds: (T, T),
}

impl<T: Scalar> Default for ReweightConfig<T> {
    fn default() -> Self {
        ReweightConfig {
            k_init: T::lit(0.95),
            tolerance: T::lit(0.05),
            max_iters: 12,
            k_bounds: (T::lit(0.5), T::one()),
        }
    }
}

impl<T: Scalar> ReweightConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.k_bounds;
        if !(lo > T::zero() && lo < hi && hi <= T::one()) {
            return Err(Error::config(format!(
                "k search interval ({lo}, {hi}) must lie in (0, 1]"
            )));
        }
        if !(self.k_init > T::zero() && self.k_init < T::one()) {
            return Err(Error::config(format!(
                "k_init {} must lie in (0, 1)",
                self.k_init
            )));
        }
        if !(self.k_init >= lo && self.k_init <= hi) {
            return Err(Error::config(format!(
                "k_init {} lies outside the search interval ({lo}, {hi})",
                self.k_init
            )));
        }
        if !(self.tolerance > T::zero()) {
            return Err(Error::config("tolerance must be positive"));
        }
        if self.max_iters == 0 {
            return Err(Error::config("max_iters must be at least 1"));
        }
        Ok(())
    }
}

/// Output of the closed-form step.
#[derive(Debug, Clone, PartialEq)]
pub struct Reweighted<T> {
    pub weights: WeightVector<T>,
    /// `k · Δ / Δ_i` per record; zero for records with `α_i = 0`.
    pub scale_ratios: Vec<T>,
    /// Records whose raw value exceeded 1.
    pub clamped: Vec<usize>,
    /// Records with `α_i > 0` but a zero bound; their ratio was capped.
    pub zero_bound: Vec<usize>,
}

fn check_report_matches<T: Scalar>(
    alphas: &WeightVector<T>,
    report: &LipschitzReport<T>,
) -> Result<()> {
    if report.record_bounds.len() != alphas.len() {
        return Err(Error::config(format!(
            "report covers {} records, weights {}",
            report.record_bounds.len(),
            alphas.len()
        )));
    }
    let p = &report.provenance;
    let detached = p.weights == "detached";
    if p.weights_scheme != alphas.scheme() || (!detached && p.weights != alphas.fingerprint()) {
        return Err(Error::Provenance(format!(
            "report was computed under {} weights, not the {} weights being re-weighted",
            p.weights_scheme.label(),
            alphas.scheme().label()
        )));
    }
    Ok(())
}

/// Closed-form re-weighting at a fixed `k`. The report must come from the
/// pseudo posterior weighted by `alphas`.
pub fn reweight_formula<T: Scalar>(
    alphas: &WeightVector<T>,
    report: &LipschitzReport<T>,
    k: T,
) -> Result<Reweighted<T>> {
    if !(k > T::zero() && k <= T::one()) {
        return Err(Error::config(format!("k = {k} must lie in (0, 1]")));
    }
    check_report_matches(alphas, report)?;
    let overall = report.overall;
    let cap = T::lit(ZERO_BOUND_RATIO_CAP);
    let n = alphas.len();
    let mut out = Vec::with_capacity(n);
    let mut ratios = Vec::with_capacity(n);
    let mut clamped = Vec::new();
    let mut zero_bound = Vec::new();
    for (i, (&a, &b)) in alphas
        .alphas()
        .iter()
        .zip(&report.record_bounds)
        .enumerate()
    {
        if a == T::zero() {
            out.push(T::zero());
            ratios.push(T::zero());
            continue;
        }
        let ratio = if b > T::zero() {
            overall / b
        } else {
            zero_bound.push(i);
            cap
        };
        let scaled = k * ratio;
        let raw = scaled * a;
        if raw > T::one() {
            clamped.push(i);
        }
        out.push(raw.min(T::one()));
        ratios.push(scaled);
    }
    let weights = WeightVector::new(
        out,
        Scheme::Reweighted,
        SchemeConfig::Reweighted {
            base: alphas.scheme(),
            k,
        },
    )?;
    Ok(Reweighted {
        weights,
        scale_ratios: ratios,
        clamped,
        zero_bound,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReweightTrial<T> {
    pub k: T,
    pub delta_after: T,
    pub relative_error: T,
    pub sampler_converged: bool,
}

/// Summary of a re-weighting search. Contains no per-record information.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReweightOutcome<T> {
    pub base_scheme: Scheme,
    pub k_used: T,
    pub delta_before: T,
    pub delta_after: T,
    /// `(Δ_after − Δ_before) / Δ_before` at `k_used`.
    pub relative_error: T,
    pub iterations: usize,
    pub converged: bool,
    pub clamped_to_one: usize,
    pub zero_bound_flagged: usize,
    pub trials: Vec<ReweightTrial<T>>,
}

impl<T: Scalar> ReweightOutcome<T> {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Outcome plus the re-weighted vector and its fit.
#[derive(Debug, Clone)]
pub struct ReweightRun<T> {
    pub outcome: ReweightOutcome<T>,
    pub reweighted: Reweighted<T>,
    pub fit: Fit<T>,
}

/// Re-weights `before` and refits, bisecting `k` until the refit bound is
/// within tolerance of `before.report.overall`. Each trial refits with the
/// same sampler configuration. When no trial meets the tolerance, the
/// closest one is returned with `converged = false`.
pub fn reweight_with_refit<T: Scalar>(
    spec: &ModelSpec<T>,
    dataset: &Dataset,
    before: &Fit<T>,
    sampler: &SamplerConfig,
    options: &LipschitzOptions<T>,
    config: &ReweightConfig<T>,
    keep_matrix: bool,
) -> Result<ReweightRun<T>> {
    config.validate()?;
    let delta_before = before.report.overall;
    if !(delta_before > T::zero()) {
        return Err(Error::config(
            "the weighted fit has a zero overall bound; nothing to re-weight",
        ));
    }
    let (mut lo, mut hi) = config.k_bounds;
    let mut k = config.k_init;
    let mut trials = Vec::new();
    let mut best: Option<(T, Reweighted<T>, Fit<T>)> = None;
    for _ in 0..config.max_iters {
        let rw = reweight_formula(&before.weights, &before.report, k)?;
        let fit = fit_and_bound(spec, dataset, &rw.weights, sampler, options, keep_matrix)?;
        let rel = (fit.report.overall - delta_before) / delta_before;
        trials.push(ReweightTrial {
            k,
            delta_after: fit.report.overall,
            relative_error: rel,
            sampler_converged: fit.converged(),
        });
        let better = best.as_ref().is_none_or(|(e, _, _)| rel.abs() < e.abs());
        if better {
            best = Some((rel, rw, fit));
        }
        if rel.abs() <= config.tolerance {
            break;
        }
        if rel > T::zero() {
            hi = k;
        } else {
            lo = k;
        }
        k = (lo + hi) / T::lit(2.0);
    }
    let (rel, reweighted, fit) = best.expect("at least one trial");
    let k_used = match reweighted.weights.config() {
        SchemeConfig::Reweighted { k, .. } => *k,
        _ => unreachable!("re-weighted vectors carry their k"),
    };
    let outcome = ReweightOutcome {
        base_scheme: before.weights.scheme(),
        k_used,
        delta_before,
        delta_after: fit.report.overall,
        relative_error: rel,
        iterations: trials.len(),
        converged: rel.abs() <= config.tolerance,
        clamped_to_one: reweighted.clamped.len(),
        zero_bound_flagged: reweighted.zero_bound.len(),
        trials,
    };
    Ok(ReweightRun {
        outcome,
        reweighted,
        fit,
    })
}

/// Spread of the by-record bounds before and after re-weighting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Flattening<T> {
    pub records: usize,
    pub cv_before: T,
    pub cv_after: T,
}

/// Coefficient of variation of the by-record bounds over the records the
/// re-weighting left strictly inside `(0, 1)`. Suppressed and clamped
/// records are excluded: their bounds are pinned by the weight limits, not
/// by the profile.
pub fn flattening<T: Scalar>(
    before: &LipschitzReport<T>,
    after: &LipschitzReport<T>,
    reweighted: &WeightVector<T>,
) -> Flattening<T> {
    let idx: Vec<usize> = reweighted
        .alphas()
        .iter()
        .enumerate()
        .filter(|(_, &a)| a > T::zero() && a < T::one())
        .map(|(i, _)| i)
        .collect();
    let pick =
        |r: &LipschitzReport<T>| -> Vec<T> { idx.iter().map(|&i| r.record_bounds[i]).collect() };
    Flattening {
        records: idx.len(),
        cv_before: coefficient_of_variation(&pick(before)),
        cv_after: coefficient_of_variation(&pick(after)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lipschitz::{report_at, summarize, MagnitudeMatrix, Provenance};
    use crate::weights::WeightSchemeConfig;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn report(bounds: Vec<f64>, scheme: Scheme) -> LipschitzReport<f64> {
        let n = bounds.len();
        let m = MagnitudeMatrix::new(1, n, bounds).unwrap();
        summarize(&m, 1.0, Provenance::detached(scheme)).unwrap()
    }

    fn sw(alphas: Vec<f64>) -> WeightVector<f64> {
        WeightVector::new(alphas, Scheme::Sw, SchemeConfig::Unit).unwrap()
    }

    #[test]
    fn equal_bounds_with_unit_k_leave_weights() {
        let a = sw(vec![0.3, 0.6, 0.9]);
        let r = report(vec![2.0, 2.0, 2.0], Scheme::Sw);
        let w = reweight_formula(&a, &r, 1.0).unwrap();
        assert_eq!(w.weights.alphas(), a.alphas());
        assert!(w.clamped.is_empty());
    }

    #[test]
    fn hand_examples() {
        let a = sw(vec![0.4, 0.9, 0.5]);
        let r = report(vec![1.0, 1.0, 2.0], Scheme::Sw);
        let w = reweight_formula(&a, &r, 0.95).unwrap();
        assert_relative_eq!(w.weights.alphas()[0], 0.76, max_relative = 1e-15);
        assert_eq!(w.weights.alphas()[1], 1.0);
        assert_relative_eq!(w.weights.alphas()[2], 0.475, max_relative = 1e-15);
        assert_eq!(w.clamped, vec![1]);
        assert_eq!(w.weights.scheme(), Scheme::Reweighted);
    }

    #[test]
    fn suppressed_records_stay_suppressed_and_zero_bounds_are_capped() {
        let a = sw(vec![0.0, 1e-4, 0.5]);
        let r = report(vec![0.0, 0.0, 2.0], Scheme::Sw);
        let w = reweight_formula(&a, &r, 0.95).unwrap();
        assert_eq!(w.weights.alphas()[0], 0.0);
        assert_relative_eq!(
            w.weights.alphas()[1],
            0.95 * 1e3 * 1e-4,
            max_relative = 1e-12
        );
        assert_eq!(w.zero_bound, vec![1]);
        assert_relative_eq!(w.weights.alphas()[2], 0.475);
    }

    #[test]
    fn mismatched_reports_are_rejected() {
        let a = sw(vec![0.5, 0.5]);
        assert!(matches!(
            reweight_formula(&a, &report(vec![1.0, 2.0], Scheme::Lw), 0.95),
            Err(Error::Provenance(_))
        ));
        assert!(reweight_formula(&a, &report(vec![1.0], Scheme::Sw), 0.95).is_err());
        assert!(reweight_formula(&a, &report(vec![1.0, 2.0], Scheme::Sw), 1.5).is_err());
    }

    #[test]
    fn unit_weights_with_equal_bounds_drop_uniformly() {
        let a = WeightVector::unit(4);
        let r = report(vec![3.0; 4], Scheme::Unit);
        let w = reweight_formula(&a, &r, 0.95).unwrap();
        assert!(w.weights.alphas().iter().all(|&x| x == 0.95));
    }

    #[test]
    fn flat_profile_at_fixed_draws() {
        let spec = ModelSpec::negative_binomial();
        let d = Dataset::new(vec![4, 19, 7, 45, 12]).unwrap();
        let cfg = SamplerConfig {
            n_chains: 1,
            n_warmup: 500,
            n_keep: 50,
            ..SamplerConfig::default()
        };
        let unit = WeightVector::unit(5);
        let fit0 =
            fit_and_bound(&spec, &d, &unit, &cfg, &LipschitzOptions::default(), false).unwrap();
        let lw = crate::weights::lw_weights(
            &fit0.report,
            &WeightSchemeConfig {
                c: 0.8,
                g: 0.1,
                ..Default::default()
            },
        )
        .unwrap();
        let fit = fit_and_bound(&spec, &d, &lw, &cfg, &LipschitzOptions::default(), false).unwrap();
        let k = 0.95;
        let rw = reweight_formula(&lw, &fit.report, k).unwrap();
        let at = report_at(&spec, &fit.draws.draws, &d, &rw.weights, 1.0).unwrap();
        for i in 0..5 {
            if lw.alphas()[i] > 0.0 && !rw.clamped.contains(&i) {
                assert_relative_eq!(
                    at.record_bounds[i],
                    k * fit.report.overall,
                    max_relative = 1e-10
                );
            }
        }
    }

    #[test]
    fn refit_search_records_trials() {
        let spec = ModelSpec::<f64>::negative_binomial();
        let d = crate::generators::Generator::skewed_mixture()
            .generate(200, 4)
            .unwrap();
        let cfg = SamplerConfig {
            n_chains: 2,
            n_warmup: 500,
            n_keep: 300,
            ..SamplerConfig::default()
        };
        let opts = LipschitzOptions::default();
        let fit0 =
            fit_and_bound(&spec, &d, &WeightVector::unit(d.len()), &cfg, &opts, false).unwrap();
        let lw = crate::weights::lw_weights(&fit0.report, &WeightSchemeConfig::default()).unwrap();
        let fit = fit_and_bound(&spec, &d, &lw, &cfg, &opts, false).unwrap();
        let config = ReweightConfig {
            max_iters: 3,
            ..ReweightConfig::default()
        };
        let run = reweight_with_refit(&spec, &d, &fit, &cfg, &opts, &config, false).unwrap();
        let o = &run.outcome;
        assert!(o.iterations >= 1 && o.iterations <= 3);
        assert_eq!(o.trials.len(), o.iterations);
        assert_eq!(o.trials[0].k, 0.95);
        assert_eq!(o.delta_after, run.fit.report.overall);
        assert_eq!(o.converged, o.relative_error.abs() <= 0.05);
        let best = o
            .trials
            .iter()
            .map(|t| t.relative_error.abs())
            .fold(f64::INFINITY, f64::min);
        assert_eq!(o.relative_error.abs(), best);
        let json: ReweightOutcome<f64> = serde_json::from_str(&o.to_json().unwrap()).unwrap();
        assert_eq!(&json, o);
    }

    #[test]
    fn bad_configs() {
        let mut c = ReweightConfig::<f64>::default();
        c.k_init = 1.0;
        assert!(c.validate().is_err());
        let c = ReweightConfig {
            k_bounds: (0.9, 0.8),
            ..ReweightConfig::<f64>::default()
        };
        assert!(c.validate().is_err());
        let c = ReweightConfig {
            k_init: 0.3,
            ..ReweightConfig::<f64>::default()
        };
        assert!(c.validate().is_err());
    }

    proptest! {
        #[test]
        fn weights_never_drop_when_ratio_at_least_one(
            alphas in proptest::collection::vec(0.0f64..=1.0, 1..30),
            bounds in proptest::collection::vec(0.0f64..10.0, 30),
            k in 0.5f64..=1.0,
        ) {
            let n = alphas.len();
            let a = sw(alphas);
            let b: Vec<f64> = bounds[..n].iter().zip(a.alphas()).map(|(&b, &x)| if x > 0.0 { b } else { 0.0 }).collect();
            let r = report(b, Scheme::Sw);
            let w = reweight_formula(&a, &r, k).unwrap();
            for i in 0..n {
                let x = w.weights.alphas()[i];
                prop_assert!((0.0..=1.0).contains(&x));
                if w.scale_ratios[i] >= 1.0 {
                    prop_assert!(x >= a.alphas()[i]);
                }
                if a.alphas()[i] == 0.0 {
                    prop_assert_eq!(x, 0.0);
                }
            }
        }
    }
}
