//! Lipschitz accounting over posterior draws.
//!
//! For draws `θ_1..θ_S` and weights `α`, the magnitude matrix holds
//! `|α_i · log p(x_i | θ_s)|`. Its column maxima are the by-record bounds,
//! its overall maximum is the database bound `Δ`, and `ε = 2Δ`.
//!
//! The same matrix can be computed a second way, as the leave-one-out
//! change `|ℓ_α(x) − ℓ_α(x₋ᵢ)|` of the full pseudo log-likelihood. For
//! independent records the two agree exactly; the LOO path is kept as a
//! cross-check.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, LogLikKernel, ModelSpec, Theta};
use crate::sampler::ParameterDraws;
use crate::scalar::Scalar;
use crate::stats::{quantile, ExactSum};
use crate::weights::WeightVector;

pub use crate::provenance::Provenance;

/// Default cap on materialized matrix entries.
pub const DEFAULT_MATRIX_CAP: usize = 100_000_000;

/// Row-major `S × n` matrix of non-negative magnitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct MagnitudeMatrix<T> {
    n_draws: usize,
    n_records: usize,
    values: Vec<T>,
}

impl<T: Scalar> MagnitudeMatrix<T> {
    pub fn new(n_draws: usize, n_records: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != n_draws * n_records {
            return Err(Error::config(format!(
                "matrix of {n_draws}x{n_records} needs {} values, got {}",
                n_draws * n_records,
                values.len()
            )));
        }
        Ok(MagnitudeMatrix {
            n_draws,
            n_records,
            values,
        })
    }

    pub fn n_draws(&self) -> usize {
        self.n_draws
    }

    pub fn n_records(&self) -> usize {
        self.n_records
    }

    pub fn get(&self, draw: usize, record: usize) -> T {
        self.values[draw * self.n_records + record]
    }

    pub fn row(&self, draw: usize) -> &[T] {
        &self.values[draw * self.n_records..(draw + 1) * self.n_records]
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn column_maxima(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.n_records];
        for s in 0..self.n_draws {
            for (m, &v) in out.iter_mut().zip(self.row(s)) {
                *m = m.max(v);
            }
        }
        out
    }

    pub fn row_maxima(&self) -> Vec<T> {
        (0..self.n_draws)
            .map(|s| self.row(s).iter().copied().fold(T::zero(), T::max))
            .collect()
    }

    /// Headerless CSV, one row per draw.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(out);
        for s in 0..self.n_draws {
            w.write_record(self.row(s).iter().map(|v| v.to_string()))?;
        }
        w.flush().map_err(|e| Error::io("matrix csv", e))?;
        Ok(())
    }
}

/// By-record and overall bounds for one `(draws, weights)` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzReport<T> {
    /// `Δ_{α,x_i}`: column maximum, capped at `overall` when `thresh < 1`.
    pub record_bounds: Vec<T>,
    /// `Δ_{α,x}`: the `thresh`-quantile of per-draw row maxima; the global
    /// matrix maximum when `thresh = 1`.
    pub overall: T,
    pub epsilon_local: T,
    pub thresh: T,
    pub n_draws: usize,
    pub provenance: Provenance,
}

impl<T: Scalar> LipschitzReport<T> {
    /// Coefficient of variation of the record bounds over `records`.
    pub fn bound_cv(&self, records: &[usize]) -> T {
        let v: Vec<T> = records.iter().map(|&i| self.record_bounds[i]).collect();
        crate::stats::coefficient_of_variation(&v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(deserialize = "T: Scalar"), deny_unknown_fields)]
pub struct LipschitzOptions<T> {
    pub thresh: T,
    /// Above `S·n` entries the matrix is never materialized.
    pub max_matrix_entries: usize,
}

impl<T: Scalar> Default for LipschitzOptions<T> {
    fn default() -> Self {
        LipschitzOptions {
            thresh: T::one(),
            max_matrix_entries: DEFAULT_MATRIX_CAP,
        }
    }
}

fn check_thresh<T: Scalar>(thresh: T) -> Result<()> {
    if !(thresh > T::zero() && thresh <= T::one()) {
        return Err(Error::config(format!("thresh {thresh} outside (0, 1]")));
    }
    Ok(())
}

/// Aggregates a magnitude matrix into a report.
///
/// `L` is the `thresh`-quantile of the row maxima; record bounds are the
/// column maxima capped at `L`. With `thresh = 1` nothing is capped and
/// `L` is the global maximum.
pub fn summarize<T: Scalar>(
    matrix: &MagnitudeMatrix<T>,
    thresh: T,
    provenance: Provenance,
) -> Result<LipschitzReport<T>> {
    check_thresh(thresh)?;
    if matrix.n_draws == 0 || matrix.n_records == 0 {
        return Err(Error::config("cannot summarize an empty matrix"));
    }
    Ok(finish_report(
        matrix.row_maxima(),
        matrix.column_maxima(),
        thresh,
        provenance,
    ))
}

fn finish_report<T: Scalar>(
    row_max: Vec<T>,
    col_max: Vec<T>,
    thresh: T,
    provenance: Provenance,
) -> LipschitzReport<T> {
    let overall = if thresh == T::one() {
        row_max.iter().copied().fold(T::zero(), T::max)
    } else {
        quantile(&row_max, thresh)
    };
    let record_bounds = col_max.into_iter().map(|c| c.min(overall)).collect();
    LipschitzReport {
        record_bounds,
        overall,
        epsilon_local: overall + overall,
        thresh,
        n_draws: row_max.len(),
        provenance,
    }
}

fn check_provenance<T: Scalar>(
    spec: &ModelSpec<T>,
    draws: &ParameterDraws<T>,
    dataset: &Dataset,
    weights: &WeightVector<T>,
) -> Result<()> {
    let p = &draws.provenance;
    if p.model != spec.fingerprint() {
        return Err(Error::Provenance(
            "draws were produced under a different model".into(),
        ));
    }
    if p.dataset != dataset.fingerprint() {
        return Err(Error::Provenance(
            "draws were produced on a different dataset".into(),
        ));
    }
    if p.weights != weights.fingerprint() {
        return Err(Error::Provenance(format!(
            "draws were produced under {} weights, not the ones supplied; pass the weights the sampler used (unit weights for the unweighted fit)",
            p.weights_scheme.label()
        )));
    }
    Ok(())
}

/// Magnitudes of one draw. Zero-weight records are exactly zero.
fn magnitude_row<T: Scalar>(
    kernel: &LogLikKernel<'_, T>,
    theta: &Theta<T>,
    alphas: &[T],
    group_ll: &mut Vec<T>,
    out: &mut [T],
) -> Result<()> {
    kernel.group_log_liks(theta, group_ll);
    for (i, (&g, &a)) in kernel.group_of().iter().zip(alphas).enumerate() {
        out[i] = if a > T::zero() {
            let ll = group_ll[g];
            if !ll.is_finite() {
                let (_, value) = kernel.group_record(g);
                return Err(Error::Evaluation {
                    record: i,
                    value,
                    theta: theta.to_string(),
                });
            }
            a * ll.abs()
        } else {
            T::zero()
        };
    }
    Ok(())
}

struct Scan<T> {
    row_max: Vec<T>,
    col_max: Vec<T>,
    values: Option<Vec<T>>,
}

const CHUNK: usize = 64;

fn scan<T: Scalar>(
    spec: &ModelSpec<T>,
    thetas: &[Theta<T>],
    dataset: &Dataset,
    alphas: &[T],
    keep: bool,
) -> Result<Scan<T>> {
    let kernel = LogLikKernel::new(spec, dataset)?;
    crate::model::check_weights(alphas, dataset.len())?;
    for t in thetas {
        t.validate(spec)?;
    }
    let n = dataset.len();
    let parts: Vec<Scan<T>> = thetas
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut group_ll = Vec::new();
            let mut row = vec![T::zero(); n];
            let mut part = Scan {
                row_max: Vec::with_capacity(chunk.len()),
                col_max: vec![T::zero(); n],
                values: keep.then(|| Vec::with_capacity(chunk.len() * n)),
            };
            for theta in chunk {
                magnitude_row(&kernel, theta, alphas, &mut group_ll, &mut row)?;
                part.row_max
                    .push(row.iter().copied().fold(T::zero(), T::max));
                for (m, &v) in part.col_max.iter_mut().zip(&row) {
                    *m = m.max(v);
                }
                if let Some(vals) = part.values.as_mut() {
                    vals.extend_from_slice(&row);
                }
            }
            Ok(part)
        })
        .collect::<Result<_>>()?;

    let mut out = Scan {
        row_max: Vec::with_capacity(thetas.len()),
        col_max: vec![T::zero(); n],
        values: keep.then(|| Vec::with_capacity(thetas.len() * n)),
    };
    for part in parts {
        out.row_max.extend(part.row_max);
        for (m, v) in out.col_max.iter_mut().zip(part.col_max) {
            *m = m.max(v);
        }
        if let (Some(all), Some(vals)) = (out.values.as_mut(), part.values) {
            all.extend(vals);
        }
    }
    Ok(out)
}

/// Magnitude matrix at an arbitrary set of parameter values. No provenance
/// check: use this for fixed-draw analyses such as comparing weight
/// vectors on the same draws.
pub fn magnitude_matrix_at<T: Scalar>(
    spec: &ModelSpec<T>,
    thetas: &[Theta<T>],
    dataset: &Dataset,
    weights: &[T],
) -> Result<MagnitudeMatrix<T>> {
    let s = scan(spec, thetas, dataset, weights, true)?;
    MagnitudeMatrix::new(thetas.len(), dataset.len(), s.values.unwrap_or_default())
}

/// `|α_i · log p(x_i | θ_s)|` for draws produced under exactly these
/// weights.
pub fn loglik_magnitude_matrix<T: Scalar>(
    spec: &ModelSpec<T>,
    draws: &ParameterDraws<T>,
    dataset: &Dataset,
    weights: &WeightVector<T>,
) -> Result<MagnitudeMatrix<T>> {
    check_provenance(spec, draws, dataset, weights)?;
    magnitude_matrix_at(spec, &draws.draws, dataset, weights.alphas())
}

/// Leave-one-out form at arbitrary parameter values: entry `(s, i)` is
/// `|ℓ_α(x; θ_s) − ℓ_α(x₋ᵢ; θ_s)|`, where `x₋ᵢ` drops record `i` and keeps
/// every other weight. Both sums are accumulated exactly so the
/// difference does not lose small weighted terms.
///
/// Costs `O(S·n²)`; intended for validation on modest instances.
pub fn loo_ratio_matrix_at<T: Scalar>(
    spec: &ModelSpec<T>,
    thetas: &[Theta<T>],
    dataset: &Dataset,
    weights: &[T],
) -> Result<MagnitudeMatrix<T>> {
    let kernel = LogLikKernel::new(spec, dataset)?;
    crate::model::check_weights(weights, dataset.len())?;
    let n = dataset.len();
    let rows: Vec<Vec<T>> = thetas
        .par_iter()
        .map(|theta| {
            theta.validate(spec)?;
            let lls = kernel.record_log_liks(theta);
            let mut terms = Vec::with_capacity(n);
            for (i, (&a, &ll)) in weights.iter().zip(&lls).enumerate() {
                if a > T::zero() {
                    if !ll.is_finite() {
                        return Err(Error::Evaluation {
                            record: i,
                            value: dataset.records()[i],
                            theta: theta.to_string(),
                        });
                    }
                    terms.push(a * ll);
                } else {
                    terms.push(T::zero());
                }
            }
            let mut full = ExactSum::new();
            for &t in &terms {
                full.add(t);
            }
            let row = (0..n)
                .map(|i| {
                    let mut deleted = ExactSum::new();
                    for (j, &t) in terms.iter().enumerate() {
                        if j != i {
                            deleted.add(t);
                        }
                    }
                    let mut diff = full.clone();
                    diff.absorb(&deleted, true);
                    diff.value().abs()
                })
                .collect();
            Ok(row)
        })
        .collect::<Result<_>>()?;
    MagnitudeMatrix::new(thetas.len(), n, rows.into_iter().flatten().collect())
}

/// Leave-one-out form for draws produced under exactly these weights.
pub fn loo_ratio_matrix<T: Scalar>(
    spec: &ModelSpec<T>,
    draws: &ParameterDraws<T>,
    dataset: &Dataset,
    weights: &WeightVector<T>,
) -> Result<MagnitudeMatrix<T>> {
    check_provenance(spec, draws, dataset, weights)?;
    loo_ratio_matrix_at(spec, &draws.draws, dataset, weights.alphas())
}

/// Report plus, when small enough, the matrix it came from.
#[derive(Debug, Clone)]
pub struct LipschitzRun<T> {
    pub report: LipschitzReport<T>,
    pub matrix: Option<MagnitudeMatrix<T>>,
}

/// Computes the report for draws produced under `weights`. The matrix is
/// kept only when `keep_matrix` is set and `S·n` is within the cap;
/// otherwise column and row maxima are streamed.
pub fn lipschitz_report<T: Scalar>(
    spec: &ModelSpec<T>,
    draws: &ParameterDraws<T>,
    dataset: &Dataset,
    weights: &WeightVector<T>,
    options: &LipschitzOptions<T>,
    keep_matrix: bool,
) -> Result<LipschitzRun<T>> {
    check_thresh(options.thresh)?;
    check_provenance(spec, draws, dataset, weights)?;
    if draws.is_empty() {
        return Err(Error::config("no draws to summarize"));
    }
    let keep =
        keep_matrix && draws.len().saturating_mul(dataset.len()) <= options.max_matrix_entries;
    let s = scan(spec, &draws.draws, dataset, weights.alphas(), keep)?;
    let matrix = match s.values {
        Some(v) => Some(MagnitudeMatrix::new(draws.len(), dataset.len(), v)?),
        None => None,
    };
    let mut provenance = draws.provenance.clone();
    provenance.weights_scheme = weights.scheme();
    Ok(LipschitzRun {
        report: finish_report(s.row_max, s.col_max, options.thresh, provenance),
        matrix,
    })
}

/// Report at arbitrary parameter values (no provenance check).
pub fn report_at<T: Scalar>(
    spec: &ModelSpec<T>,
    thetas: &[Theta<T>],
    dataset: &Dataset,
    weights: &WeightVector<T>,
    thresh: T,
) -> Result<LipschitzReport<T>> {
    check_thresh(thresh)?;
    if thetas.is_empty() {
        return Err(Error::config("no draws to summarize"));
    }
    let s = scan(spec, thetas, dataset, weights.alphas(), false)?;
    Ok(finish_report(
        s.row_max,
        s.col_max,
        thresh,
        Provenance::detached(weights.scheme()),
    ))
}
