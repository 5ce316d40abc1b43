//! Record-indexed weight vectors: Lipschitz-weighted (LW), count-weighted
//! (CW) and scalar-weighted (SW).
//!
//! Weights are confidential. They are derived from the confidential records
//! and releasing them leaks information about those records.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fingerprint::Fingerprinter;
use crate::lipschitz::LipschitzReport;
use crate::model::Dataset;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Unit,
    Lw,
    Cw,
    Sw,
    Reweighted,
}

impl Scheme {
    pub fn label(self) -> &'static str {
        match self {
            Scheme::Unit => "unweighted",
            Scheme::Lw => "lw",
            Scheme::Cw => "cw",
            Scheme::Sw => "sw",
            Scheme::Reweighted => "reweighted",
        }
    }
}

/// Parameters echoed alongside a weight vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "kebab-case")]
pub enum SchemeConfig<T> {
    Unit,
    Lw {
        c: T,
        g: T,
        thresh: T,
    },
    Cw {
        c: T,
        g: T,
        radius: T,
    },
    Sw {
        delta_unweighted: T,
        delta_target: T,
    },
    Reweighted {
        base: Scheme,
        k: T,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector<T> {
    alphas: Vec<T>,
    scheme: Scheme,
    config: SchemeConfig<T>,
}

impl<T: Scalar> WeightVector<T> {
    /// Every entry must already lie in `[0, 1]`.
    pub fn new(alphas: Vec<T>, scheme: Scheme, config: SchemeConfig<T>) -> Result<Self> {
        if alphas.is_empty() {
            return Err(Error::config("empty weight vector"));
        }
        if alphas.iter().any(|&a| !(a >= T::zero() && a <= T::one())) {
            return Err(Error::config("weights must lie in [0, 1]"));
        }
        Ok(WeightVector {
            alphas,
            scheme,
            config,
        })
    }

    /// α ≡ 1: the unweighted synthesizer.
    pub fn unit(n: usize) -> Self {
        WeightVector {
            alphas: vec![T::one(); n],
            scheme: Scheme::Unit,
            config: SchemeConfig::Unit,
        }
    }

    pub fn alphas(&self) -> &[T] {
        &self.alphas
    }

    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn config(&self) -> &SchemeConfig<T> {
        &self.config
    }

    pub fn fingerprint(&self) -> String {
        let mut f = Fingerprinter::new("weights");
        f.u64(self.alphas.len() as u64);
        for &a in &self.alphas {
            f.scalar(a);
        }
        f.hex()
    }

    /// Writes `index,alpha,scheme,config` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let config = serde_json::to_string(&self.config)?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["index", "alpha", "scheme", "config"])?;
        for (i, a) in self.alphas.iter().enumerate() {
            w.write_record([
                i.to_string(),
                a.to_string(),
                self.scheme.label().to_string(),
                config.clone(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("weights csv", e))?;
        Ok(())
    }

    /// Reads a file produced by [`WeightVector::write_csv`].
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(input);
        let mut alphas = Vec::new();
        let mut scheme = Scheme::Unit;
        let mut config = SchemeConfig::Unit;
        for (row, rec) in reader.records().enumerate() {
            let rec = rec?;
            let index: usize = rec
                .get(0)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::data(format!("weights row {row}: bad index")))?;
            if index != row {
                return Err(Error::data(format!(
                    "weights row {row} carries index {index}; rows must be in record order"
                )));
            }
            let alpha: f64 = rec
                .get(1)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::data(format!("weights row {row}: bad alpha")))?;
            alphas.push(T::lit(alpha));
            if row == 0 {
                if let Some(cfg) = rec.get(3) {
                    config = serde_json::from_str(cfg)?;
                    scheme = scheme_of(&config);
                }
            }
        }
        WeightVector::new(alphas, scheme, config).map_err(|e| Error::data(e.to_string()))
    }
}

fn scheme_of<T>(config: &SchemeConfig<T>) -> Scheme {
    match config {
        SchemeConfig::Unit => Scheme::Unit,
        SchemeConfig::Lw { .. } => Scheme::Lw,
        SchemeConfig::Cw { .. } => Scheme::Cw,
        SchemeConfig::Sw { .. } => Scheme::Sw,
        SchemeConfig::Reweighted { .. } => Scheme::Reweighted,
    }
}

impl<T> AsRef<[T]> for WeightVector<T> {
    fn as_ref(&self) -> &[T] {
        &self.alphas
    }
}

/// Tuning knobs shared by LW and CW: `α_i = clamp(c·(1 − risk_i) + g)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(deserialize = "T: Scalar"), deny_unknown_fields)]
pub struct WeightSchemeConfig<T> {
    pub c: T,
    pub g: T,
    /// CW ball radius on the count scale; `None` means 5% of the sample
    /// standard deviation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<T>,
    /// Quantile level used when the LW risk report is aggregated.
    pub thresh: T,
}

impl<T: Scalar> Default for WeightSchemeConfig<T> {
    fn default() -> Self {
        WeightSchemeConfig {
            c: T::one(),
            g: T::zero(),
            radius: None,
            thresh: T::one(),
        }
    }
}

impl<T: Scalar> WeightSchemeConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.c >= T::zero() && self.c.is_finite()) {
            return Err(Error::config("scale c must be finite and non-negative"));
        }
        if !self.g.is_finite() {
            return Err(Error::config("shift g must be finite"));
        }
        if let Some(r) = self.radius {
            if !(r > T::zero() && r.is_finite()) {
                return Err(Error::config("radius must be positive"));
            }
        }
        if !(self.thresh > T::zero() && self.thresh <= T::one()) {
            return Err(Error::config("thresh must lie in (0, 1]"));
        }
        Ok(())
    }

    /// Radius used for `dataset`: the configured one, or 5% of the sample
    /// standard deviation. Constant data has zero spread; any positive
    /// radius is equivalent there, so 1 is used.
    pub fn radius_for(&self, dataset: &Dataset) -> T {
        self.radius.unwrap_or_else(|| {
            let sd = dataset.std_dev();
            if sd > 0.0 {
                T::lit(0.05 * sd)
            } else {
                T::one()
            }
        })
    }
}

#[inline]
fn clamp_unit<T: Scalar>(v: T) -> T {
    v.max(T::zero()).min(T::one())
}

#[inline]
fn affine_weight<T: Scalar>(c: T, g: T, risk: T) -> T {
    clamp_unit(c * (T::one() - risk) + g)
}

/// Linear rescale of record bounds to `[0, 1]`. Identical bounds carry no
/// ordering and map to zero risk.
pub fn rescale_risks<T: Scalar>(bounds: &[T]) -> Vec<T> {
    let min = bounds.iter().copied().fold(T::infinity(), T::min);
    let max = bounds.iter().copied().fold(T::neg_infinity(), T::max);
    let span = max - min;
    if !(span > T::zero()) {
        return vec![T::zero(); bounds.len()];
    }
    bounds.iter().map(|&b| (b - min) / span).collect()
}

/// LW weights from a Lipschitz report of the unweighted synthesizer.
pub fn lw_weights<T: Scalar>(
    report: &LipschitzReport<T>,
    config: &WeightSchemeConfig<T>,
) -> Result<WeightVector<T>> {
    config.validate()?;
    if report.provenance.weights_scheme != Scheme::Unit {
        return Err(Error::Provenance(format!(
            "LW weights need a report from the unweighted synthesizer, got one built under {} weights",
            report.provenance.weights_scheme.label()
        )));
    }
    let risks = rescale_risks(&report.record_bounds);
    let alphas = risks
        .iter()
        .map(|&r| affine_weight(config.c, config.g, r))
        .collect();
    WeightVector::new(
        alphas,
        Scheme::Lw,
        SchemeConfig::Lw {
            c: config.c,
            g: config.g,
            thresh: report.thresh,
        },
    )
}

/// Isolation risk: for each record, the fraction of the other records lying
/// outside `[y_i − r, y_i + r]`. The record itself is not counted.
pub fn isolation_risks<T: Scalar>(dataset: &Dataset, radius: T) -> Vec<T> {
    let n = dataset.len();
    let mut sorted: Vec<T> = dataset
        .records()
        .iter()
        .map(|&x| T::from_count(x))
        .collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite counts"));
    let others = T::from_usize(n - 1).unwrap();
    dataset
        .records()
        .iter()
        .map(|&x| {
            let y = T::from_count(x);
            let lo = sorted.partition_point(|&v| v < y - radius);
            let hi = sorted.partition_point(|&v| v <= y + radius);
            let inside_others = (hi - lo) - 1;
            T::from_usize(n - 1 - inside_others).unwrap() / others
        })
        .collect()
}

/// CW weights from record isolation.
pub fn cw_weights<T: Scalar>(
    dataset: &Dataset,
    config: &WeightSchemeConfig<T>,
) -> Result<WeightVector<T>> {
    config.validate()?;
    let radius = config.radius_for(dataset);
    let alphas = isolation_risks(dataset, radius)
        .into_iter()
        .map(|ir| affine_weight(config.c, config.g, ir))
        .collect();
    WeightVector::new(
        alphas,
        Scheme::Cw,
        SchemeConfig::Cw {
            c: config.c,
            g: config.g,
            radius,
        },
    )
}

/// Constant weights `Δ_target / Δ_unweighted`: the scalar-weighted
/// synthesizer, matched to a target bound.
pub fn sw_weights<T: Scalar>(
    delta_unweighted: T,
    delta_target: T,
    n: usize,
) -> Result<WeightVector<T>> {
    if !(delta_target > T::zero()) {
        return Err(Error::config("target bound must be positive"));
    }
    if !(delta_target <= delta_unweighted) || !delta_unweighted.is_finite() {
        return Err(Error::config(format!(
            "target bound {delta_target} exceeds the unweighted bound {delta_unweighted}; that needs weights above 1"
        )));
    }
    if n == 0 {
        return Err(Error::config("empty weight vector"));
    }
    let alpha = clamp_unit(delta_target / delta_unweighted);
    WeightVector::new(
        vec![alpha; n],
        Scheme::Sw,
        SchemeConfig::Sw {
            delta_unweighted,
            delta_target,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lipschitz::{summarize, MagnitudeMatrix, Provenance};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn unit_report(bounds: &[f64]) -> LipschitzReport<f64> {
        let m = MagnitudeMatrix::new(1, bounds.len(), bounds.to_vec()).unwrap();
        summarize(&m, 1.0, Provenance::detached(Scheme::Unit)).unwrap()
    }

    #[test]
    fn lw_hand_example() {
        let cfg = WeightSchemeConfig {
            c: 0.5,
            g: 0.25,
            ..Default::default()
        };
        let w = lw_weights(&unit_report(&[2.0, 4.0, 6.0]), &cfg).unwrap();
        assert_eq!(w.alphas(), &[0.75, 0.5, 0.25]);
        assert_eq!(w.scheme(), Scheme::Lw);
    }

    #[test]
    fn lw_extremes_with_defaults() {
        let w = lw_weights(
            &unit_report(&[3.0, 9.0, 5.0]),
            &WeightSchemeConfig::default(),
        )
        .unwrap();
        assert_eq!(w.alphas()[1], 0.0);
        assert_eq!(w.alphas()[0], 1.0);
    }

    #[test]
    fn lw_degenerate_bounds() {
        let cfg = WeightSchemeConfig {
            c: 0.7,
            g: 0.1,
            ..Default::default()
        };
        let w = lw_weights(&unit_report(&[4.0, 4.0, 4.0]), &cfg).unwrap();
        for a in w.alphas() {
            assert_relative_eq!(*a, 0.8);
        }
        let w = lw_weights(&unit_report(&[4.0, 4.0]), &WeightSchemeConfig::default()).unwrap();
        assert_eq!(w.alphas(), &[1.0, 1.0]);
    }

    #[test]
    fn lw_rejects_weighted_report() {
        let m = MagnitudeMatrix::new(1, 2, vec![1.0, 2.0]).unwrap();
        let r = summarize(&m, 1.0, Provenance::detached(Scheme::Cw)).unwrap();
        assert!(matches!(
            lw_weights(&r, &WeightSchemeConfig::default()),
            Err(Error::Provenance(_))
        ));
    }

    #[test]
    fn cw_hand_example() {
        let d = Dataset::new(vec![1, 2, 10]).unwrap();
        let risks = isolation_risks(&d, 1.5);
        assert_eq!(risks, vec![0.5, 0.5, 1.0]);
        let cfg = WeightSchemeConfig {
            radius: Some(1.5),
            ..Default::default()
        };
        let w = cw_weights(&d, &cfg).unwrap();
        assert_eq!(w.alphas(), &[0.5, 0.5, 0.0]);
    }

    #[test]
    fn cw_wide_radius_and_identical_records() {
        let d = Dataset::new(vec![3, 50, 7, 12]).unwrap();
        let cfg = WeightSchemeConfig {
            c: 0.6,
            g: 0.1,
            radius: Some(100.0),
            thresh: 1.0,
        };
        for a in cw_weights(&d, &cfg).unwrap().alphas() {
            assert_relative_eq!(*a, 0.7);
        }
        let same = Dataset::new(vec![5, 5, 5]).unwrap();
        assert_eq!(isolation_risks(&same, 0.01), vec![0.0; 3]);
        // default radius on constant data
        assert_eq!(
            cw_weights::<f64>(&same, &WeightSchemeConfig::default())
                .unwrap()
                .alphas(),
            &[1.0; 3]
        );
    }

    #[test]
    fn sw_examples() {
        assert_eq!(sw_weights(6.0, 6.0, 3).unwrap().alphas(), &[1.0; 3]);
        assert_eq!(sw_weights(6.0, 3.0, 2).unwrap().alphas(), &[0.5; 2]);
        assert!(sw_weights(3.0, 6.0, 2).is_err());
        assert!(sw_weights(3.0, 0.0, 2).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let d = Dataset::new(vec![1, 2, 10, 4]).unwrap();
        let w = cw_weights::<f64>(
            &d,
            &WeightSchemeConfig {
                radius: Some(2.0),
                ..Default::default()
            },
        )
        .unwrap();
        let mut buf = Vec::new();
        w.write_csv(&mut buf).unwrap();
        let back = WeightVector::<f64>::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, w);
    }

    #[test]
    fn config_validation() {
        let bad = WeightSchemeConfig {
            c: -1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = WeightSchemeConfig {
            radius: Some(0.0),
            ..WeightSchemeConfig::<f64>::default()
        };
        assert!(bad.validate().is_err());
        let bad = WeightSchemeConfig {
            thresh: 0.0,
            ..WeightSchemeConfig::<f64>::default()
        };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn weights_always_in_unit_interval(
            bounds in proptest::collection::vec(0.0f64..50.0, 2..40),
            xs in proptest::collection::vec(0u64..200, 2..40),
            c in 0.0f64..5.0,
            g in -3.0f64..3.0,
            r in 0.01f64..40.0,
        ) {
            let cfg = WeightSchemeConfig { c, g, radius: Some(r), thresh: 1.0 };
            let lw = lw_weights(&unit_report(&bounds), &cfg).unwrap();
            let cw = cw_weights(&Dataset::new(xs).unwrap(), &cfg).unwrap();
            for &a in lw.alphas().iter().chain(cw.alphas()) {
                prop_assert!((0.0..=1.0).contains(&a));
            }
        }

        #[test]
        fn lw_is_monotone_in_risk(
            bounds in proptest::collection::vec(0.0f64..50.0, 2..40),
            c in 0.01f64..5.0,
            g in -1.0f64..1.0,
        ) {
            let cfg = WeightSchemeConfig { c, g, radius: None, thresh: 1.0 };
            let w = lw_weights(&unit_report(&bounds), &cfg).unwrap();
            for i in 0..bounds.len() {
                for j in 0..bounds.len() {
                    if bounds[i] > bounds[j] {
                        prop_assert!(w.alphas()[i] <= w.alphas()[j]);
                    }
                }
            }
        }

        #[test]
        fn cw_is_monotone_and_permutation_invariant(
            xs in proptest::collection::vec(0u64..100, 3..30),
            r in 0.5f64..20.0,
            c in 0.01f64..2.0,
            rot in 0usize..30,
        ) {
            let d = Dataset::new(xs.clone()).unwrap();
            let risks = isolation_risks(&d, r);
            let cfg = WeightSchemeConfig { c, g: 0.0, radius: Some(r), thresh: 1.0 };
            let w = cw_weights(&d, &cfg).unwrap();
            for i in 0..xs.len() {
                for j in 0..xs.len() {
                    if risks[i] > risks[j] {
                        prop_assert!(w.alphas()[i] <= w.alphas()[j]);
                    }
                }
            }
            // risk of record 0 does not depend on the order of the others
            let mut others = xs[1..].to_vec();
            let k = rot % others.len();
            others.rotate_left(k);
            others.reverse();
            let mut permuted = vec![xs[0]];
            permuted.extend(others);
            let risks_p = isolation_risks(&Dataset::new(permuted).unwrap(), r);
            prop_assert_eq!(risks[0], risks_p[0]);
        }

        #[test]
        fn identity_config_with_zero_risk(n in 2usize..30, v in 0.0f64..10.0) {
            let w = lw_weights(&unit_report(&vec![v; n]), &WeightSchemeConfig::default()).unwrap();
            prop_assert!(w.alphas().iter().all(|&a| a == 1.0));
        }
    }
}
