//! Synthetic replicates and utility comparisons.
//!
//! Quantiles throughout use linear interpolation between order statistics
//! (position `p·(n−1)` in the sorted sample), so `q15` and `q90` of counts
//! can fall between integers.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generators::negative_binomial;
use crate::io::write_counts;
use crate::model::{record_mean, Dataset, Family, ModelSpec, Theta};
use crate::provenance::Provenance;
use crate::rng;
use crate::sampler::ParameterDraws;
use crate::scalar::Scalar;
use crate::stats::{quantile_sorted, sort_floats};

pub const DEFAULT_REPLICATES: usize = 20;
pub const DEFAULT_BOOTSTRAP: usize = 2000;

/// `M` synthetic datasets, each generated from one posterior draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticBundle {
    pub replicates: Vec<Dataset>,
    /// Zero-based index into the draws for each replicate.
    pub source_draw_indices: Vec<usize>,
    pub provenance: Provenance,
}

impl SyntheticBundle {
    pub fn len(&self) -> usize {
        self.replicates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.replicates.is_empty()
    }

    /// One headerless count CSV per replicate, `replicate_001.csv` onward,
    /// plus `sources.csv` mapping replicates to draw indices.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (m, rep) in self.replicates.iter().enumerate() {
            let path = dir.join(format!("replicate_{:03}.csv", m + 1));
            fs::write(&path, write_counts(rep)).map_err(|e| Error::io(&path, e))?;
        }
        let path = dir.join("sources.csv");
        let mut out = String::from("replicate,draw\n");
        for (m, s) in self.source_draw_indices.iter().enumerate() {
            out.push_str(&format!("{},{}\n", m + 1, s));
        }
        fs::write(&path, out).map_err(|e| Error::io(&path, e))
    }
}

/// `m` indices spread evenly over `0..s`: `⌊j·s/m⌋` for `j = 0..m`.
pub fn evenly_spaced(s: usize, m: usize) -> Vec<usize> {
    (0..m).map(|j| j * s / m).collect()
}

fn draw_record<T: Scalar, R: Rng + ?Sized>(
    spec: &ModelSpec<T>,
    theta: &Theta<T>,
    record: usize,
    rng: &mut R,
) -> u64 {
    let mu = record_mean(spec, theta, record);
    match &spec.family {
        Family::Poisson => T::sample_poisson(rng, mu),
        Family::NegativeBinomial => negative_binomial(rng, mu, theta.dispersion[0]),
        Family::NegativeBinomialMixture { proportions } => {
            let u = T::sample_unit(rng);
            let mut acc = T::zero();
            let mut c = proportions.len() - 1;
            for (j, &p) in proportions.iter().enumerate() {
                acc += p;
                if u < acc {
                    c = j;
                    break;
                }
            }
            negative_binomial(rng, mu, theta.dispersion[c])
        }
    }
}

/// Replicates from explicit parameter values, without provenance.
pub fn generate_at<T: Scalar>(
    spec: &ModelSpec<T>,
    thetas: &[Theta<T>],
    n: usize,
    m: usize,
    seed: u64,
) -> Result<(Vec<Dataset>, Vec<usize>)> {
    if m == 0 {
        return Err(Error::config("need at least one replicate"));
    }
    if m > thetas.len() {
        return Err(Error::config(format!(
            "{m} replicates requested from only {} draws",
            thetas.len()
        )));
    }
    spec.validate(n)?;
    for t in thetas {
        t.validate(spec)?;
    }
    let indices = evenly_spaced(thetas.len(), m);
    let replicates = indices
        .par_iter()
        .enumerate()
        .map(|(j, &s)| {
            let mut rng = rng::substream(seed, rng::SYNTH, j as u64);
            let theta = &thetas[s];
            let records = (0..n)
                .map(|i| draw_record(spec, theta, i, &mut rng))
                .collect();
            Dataset::new(records)
        })
        .collect::<Result<_>>()?;
    Ok((replicates, indices))
}

/// `m` replicates of `n` records from evenly spaced draws. Replicate `j`
/// uses its own substream of `seed`, so output does not depend on
/// scheduling.
pub fn generate<T: Scalar>(
    spec: &ModelSpec<T>,
    draws: &ParameterDraws<T>,
    n: usize,
    m: usize,
    seed: u64,
) -> Result<SyntheticBundle> {
    let (replicates, source_draw_indices) = generate_at(spec, &draws.draws, n, m, seed)?;
    Ok(SyntheticBundle {
        replicates,
        source_draw_indices,
        provenance: draws.provenance.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimand {
    Mean,
    Median,
    Q15,
    Q90,
}

impl Estimand {
    pub const ALL: [Estimand; 4] = [
        Estimand::Mean,
        Estimand::Median,
        Estimand::Q15,
        Estimand::Q90,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Estimand::Mean => "mean",
            Estimand::Median => "median",
            Estimand::Q15 => "q15",
            Estimand::Q90 => "q90",
        }
    }

    /// Evaluates on an ascending sample.
    pub fn evaluate(self, sorted: &[f64]) -> f64 {
        match self {
            Estimand::Mean => shifted_mean(sorted),
            Estimand::Median => quantile_sorted(sorted, 0.5),
            Estimand::Q15 => quantile_sorted(sorted, 0.15),
            Estimand::Q90 => quantile_sorted(sorted, 0.9),
        }
    }
}

/// Mean computed around the first value; exact when all values agree.
fn shifted_mean(values: &[f64]) -> f64 {
    let base = values[0];
    base + values.iter().map(|v| v - base).sum::<f64>() / values.len() as f64
}

fn sorted_counts(d: &Dataset) -> Vec<f64> {
    let mut v: Vec<f64> = d.records().iter().map(|&x| x as f64).collect();
    sort_floats(&mut v);
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityRow {
    pub estimand: Estimand,
    pub variant: String,
    pub point: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Point estimates and 95% intervals for the confidential data (variant
/// `"data"`) and each synthesizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityTable {
    pub rows: Vec<UtilityRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityConfig {
    pub bootstrap_resamples: usize,
    pub seed: u64,
}

impl Default for UtilityConfig {
    fn default() -> Self {
        UtilityConfig {
            bootstrap_resamples: DEFAULT_BOOTSTRAP,
            seed: 1,
        }
    }
}

fn interval(mut values: Vec<f64>, point: f64) -> (f64, f64) {
    sort_floats(&mut values);
    let lo = quantile_sorted(&values, 0.025).min(point);
    let hi = quantile_sorted(&values, 0.975).max(point);
    (lo, hi)
}

impl UtilityTable {
    pub fn get(&self, estimand: Estimand, variant: &str) -> Option<&UtilityRow> {
        self.rows
            .iter()
            .find(|r| r.estimand == estimand && r.variant == variant)
    }

    /// `estimand,variant,point,lo,hi`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["estimand", "variant", "point", "lo", "hi"])?;
        for r in &self.rows {
            w.write_record([
                r.estimand.name().to_string(),
                r.variant.clone(),
                r.point.to_string(),
                r.lo.to_string(),
                r.hi.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("utility csv", e))?;
        Ok(())
    }

    /// Long-format JSON array, one object per row.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.rows)?)
    }
}

/// Builds the utility table.
///
/// Synthetic rows: the point is the mean over replicates of the per-replicate
/// estimate, the interval the 2.5% and 97.5% quantiles of those estimates.
/// Data rows: the point is the sample estimate, the interval a percentile
/// bootstrap. Every interval is widened if needed to contain its point.
pub fn utility_table(
    confidential: &Dataset,
    bundles: &[(&str, &SyntheticBundle)],
    config: &UtilityConfig,
) -> Result<UtilityTable> {
    if bundles.is_empty() {
        return Err(Error::config(
            "utility table needs at least one synthetic bundle",
        ));
    }
    if let Some((name, _)) = bundles.iter().find(|(_, b)| b.is_empty()) {
        return Err(Error::config(format!("bundle {name} has no replicates")));
    }
    if config.bootstrap_resamples < 2 {
        return Err(Error::config("bootstrap needs at least two resamples"));
    }
    let data = sorted_counts(confidential);
    let n = data.len();
    let boot: Vec<[f64; 4]> = (0..config.bootstrap_resamples)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng::substream(config.seed, rng::BOOTSTRAP, b as u64);
            let mut sample: Vec<f64> = (0..n).map(|_| data[rng.random_range(0..n)]).collect();
            sort_floats(&mut sample);
            Estimand::ALL.map(|e| e.evaluate(&sample))
        })
        .collect();

    let mut rows = Vec::new();
    for (k, e) in Estimand::ALL.into_iter().enumerate() {
        let point = e.evaluate(&data);
        let (lo, hi) = interval(boot.iter().map(|v| v[k]).collect(), point);
        rows.push(UtilityRow {
            estimand: e,
            variant: "data".into(),
            point,
            lo,
            hi,
        });
        for (name, bundle) in bundles {
            let per_rep: Vec<f64> = bundle
                .replicates
                .iter()
                .map(|r| e.evaluate(&sorted_counts(r)))
                .collect();
            let point = shifted_mean(&per_rep);
            let (lo, hi) = interval(per_rep, point);
            rows.push(UtilityRow {
                estimand: e,
                variant: (*name).to_string(),
                point,
                lo,
                hi,
            });
        }
    }
    Ok(UtilityTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::Scheme;

    fn bundle(replicates: Vec<Dataset>) -> SyntheticBundle {
        let m = replicates.len();
        SyntheticBundle {
            replicates,
            source_draw_indices: (0..m).collect(),
            provenance: Provenance::detached(Scheme::Unit),
        }
    }

    #[test]
    fn spacing() {
        assert_eq!(evenly_spaced(10, 10), (0..10).collect::<Vec<_>>());
        assert_eq!(evenly_spaced(10, 4), vec![0, 2, 5, 7]);
        assert_eq!(evenly_spaced(4000, 20)[19], 3800);
    }

    #[test]
    fn vanishing_mean_gives_zeros() {
        let spec = ModelSpec::poisson();
        let (reps, _) = generate_at(&spec, &[Theta::poisson_mean(1e-8)], 1000, 1, 3).unwrap();
        assert!(reps[0].records().iter().all(|&x| x == 0));
    }

    #[test]
    fn poisson_replicate_mean() {
        let spec = ModelSpec::poisson();
        let (reps, _) = generate_at(&spec, &[Theta::poisson_mean(100.0)], 100_000, 1, 5).unwrap();
        assert!((reps[0].mean() - 100.0).abs() < 4.0 * (100.0f64 / 1e5).sqrt());
    }

    #[test]
    fn negative_binomial_replicate_moments() {
        let spec = ModelSpec::negative_binomial();
        let (reps, _) =
            generate_at(&spec, &[Theta::negative_binomial(50.0, 4.0)], 100_000, 1, 6).unwrap();
        let sd = (50.0f64 + 2500.0 / 4.0).sqrt();
        assert!((reps[0].mean() - 50.0).abs() < 4.0 * sd / 1e5f64.sqrt());
        assert!((reps[0].std_dev() / sd - 1.0).abs() < 0.02);
    }

    #[test]
    fn mixture_family_generates() {
        let spec = ModelSpec::intercept_only(Family::NegativeBinomialMixture {
            proportions: vec![0.2, 0.8],
        });
        let theta = Theta {
            beta: vec![100f64.ln()],
            dispersion: vec![5.0, 20.0],
        };
        let (reps, _) = generate_at(&spec, &[theta], 100_000, 1, 8).unwrap();
        assert!((reps[0].std_dev() - 30.0).abs() < 1.0);
    }

    #[test]
    fn too_many_replicates() {
        let spec = ModelSpec::poisson();
        assert!(generate_at(&spec, &[Theta::poisson_mean(1.0)], 5, 2, 1).is_err());
        assert!(generate_at(&spec, &[Theta::poisson_mean(1.0)], 5, 0, 1).is_err());
    }

    #[test]
    fn deterministic() {
        let spec = ModelSpec::negative_binomial();
        let thetas: Vec<_> = (1..=8)
            .map(|i| Theta::negative_binomial(10.0 * i as f64, 3.0))
            .collect();
        let a = generate_at(&spec, &thetas, 50, 4, 9).unwrap();
        assert_eq!(a, generate_at(&spec, &thetas, 50, 4, 9).unwrap());
        assert_ne!(a, generate_at(&spec, &thetas, 50, 4, 10).unwrap());
        assert_eq!(a.1, vec![0, 2, 4, 6]);
    }

    #[test]
    fn estimands_on_hand_vectors() {
        let v = [1.0, 2.0, 4.0, 7.0, 11.0];
        assert_eq!(Estimand::Mean.evaluate(&v), 5.0);
        assert_eq!(Estimand::Median.evaluate(&v), 4.0);
        // positions 0.6 and 3.6
        assert!((Estimand::Q15.evaluate(&v) - 1.6).abs() < 1e-15);
        assert!((Estimand::Q90.evaluate(&v) - 9.4).abs() < 1e-12);
    }

    #[test]
    fn identity_bundle_reproduces_data_points() {
        let d = Dataset::new(vec![3, 9, 1, 40, 7, 7, 12, 5, 0, 22]).unwrap();
        let b = bundle(vec![d.clone(); 20]);
        let t = utility_table(&d, &[("copy", &b)], &UtilityConfig::default()).unwrap();
        for e in Estimand::ALL {
            let data = t.get(e, "data").unwrap();
            let copy = t.get(e, "copy").unwrap();
            assert_eq!(data.point, copy.point);
            assert_eq!((copy.lo, copy.hi), (copy.point, copy.point));
        }
    }

    #[test]
    fn rows_are_ordered_and_serialize() {
        let d = crate::generators::Generator::skewed_mixture()
            .generate(300, 2)
            .unwrap();
        let spec = ModelSpec::negative_binomial();
        let thetas: Vec<_> = (0..20)
            .map(|i| Theta::negative_binomial(95.0 + i as f64 * 0.5, 10.0))
            .collect();
        let (reps, idx) = generate_at(&spec, &thetas, 300, 20, 4).unwrap();
        let b = SyntheticBundle {
            replicates: reps,
            source_draw_indices: idx,
            provenance: Provenance::detached(Scheme::Unit),
        };
        let cfg = UtilityConfig {
            bootstrap_resamples: 500,
            seed: 3,
        };
        let t = utility_table(&d, &[("nb", &b)], &cfg).unwrap();
        assert_eq!(t.rows.len(), 8);
        for r in &t.rows {
            assert!(r.lo <= r.point && r.point <= r.hi, "{r:?}");
        }
        assert_eq!(t, utility_table(&d, &[("nb", &b)], &cfg).unwrap());
        let mut csv = Vec::new();
        t.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("estimand,variant,point,lo,hi\nmean,data,"));
        let rows: Vec<UtilityRow> = serde_json::from_str(&t.to_json().unwrap()).unwrap();
        assert_eq!(rows, t.rows);
    }

    #[test]
    fn empty_inputs_rejected() {
        let d = Dataset::new(vec![1, 2]).unwrap();
        assert!(utility_table(&d, &[], &UtilityConfig::default()).is_err());
        let empty = bundle(vec![]);
        assert!(utility_table(&d, &[("e", &empty)], &UtilityConfig::default()).is_err());
    }
}
