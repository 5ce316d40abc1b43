//! Count-data likelihood families, priors, and per-record log-likelihoods.
//!
//! Every other module evaluates `log p(x_i | θ)` through this one. The mean
//! is log-linear, `μ_i = exp(row_i · β)`, with an intercept-only design by
//! default. Negative binomial variance is `μ + μ²/φ`.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fingerprint::Fingerprinter;
use crate::scalar::Scalar;
use crate::special::ln_gamma;

/// The confidential database: an ordered list of non-negative counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<u64>", into = "Vec<u64>")]
pub struct Dataset {
    records: Vec<u64>,
}

impl Dataset {
    /// Fails when fewer than two records are supplied; leave-one-out
    /// deletion must leave a non-empty database.
    pub fn new(records: Vec<u64>) -> Result<Self> {
        if records.len() < 2 {
            return Err(Error::data(format!(
                "a dataset needs at least 2 records, got {}",
                records.len()
            )));
        }
        Ok(Dataset { records })
    }

    pub fn records(&self) -> &[u64] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    /// Always false; kept for API symmetry with `len`.
    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.records.iter().map(|&x| x as f64).sum::<f64>() / self.len() as f64
    }

    /// Sample standard deviation (n − 1 denominator).
    pub fn std_dev(&self) -> f64 {
        let m = self.mean();
        let ss: f64 = self.records.iter().map(|&x| (x as f64 - m).powi(2)).sum();
        (ss / (self.len() - 1) as f64).sqrt()
    }

    pub fn fingerprint(&self) -> String {
        let mut f = Fingerprinter::new("dataset");
        f.u64(self.len() as u64);
        for &x in &self.records {
            f.u64(x);
        }
        f.hex()
    }
}

impl TryFrom<Vec<u64>> for Dataset {
    type Error = Error;
    fn try_from(v: Vec<u64>) -> Result<Self> {
        Dataset::new(v)
    }
}

impl From<Dataset> for Vec<u64> {
    fn from(d: Dataset) -> Self {
        d.records
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Family<T> {
    Poisson,
    NegativeBinomial,
    /// Components share the log-linear mean and carry their own dispersion.
    /// Proportions are fixed hyperparameters, never sampled.
    NegativeBinomialMixture {
        proportions: Vec<T>,
    },
}

impl<T: Scalar> Family<T> {
    /// Number of dispersion parameters carried by `Theta`.
    pub fn n_dispersion(&self) -> usize {
        match self {
            Family::Poisson => 0,
            Family::NegativeBinomial => 1,
            Family::NegativeBinomialMixture { proportions } => proportions.len(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Family::Poisson => "poisson",
            Family::NegativeBinomial => "negative-binomial",
            Family::NegativeBinomialMixture { .. } => "negative-binomial-mixture",
        }
    }
}

/// Row-major `n × K` design matrix for the log-mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Covariates<T> {
    pub n_rows: usize,
    pub n_cols: usize,
    pub values: Vec<T>,
}

impl<T: Scalar> Covariates<T> {
    pub fn new(n_rows: usize, n_cols: usize, values: Vec<T>) -> Result<Self> {
        if n_cols == 0 || values.len() != n_rows * n_cols {
            return Err(Error::config(format!(
                "design matrix of {n_rows}x{n_cols} needs {} values, got {}",
                n_rows * n_cols,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("design matrix has non-finite entries"));
        }
        Ok(Covariates {
            n_rows,
            n_cols,
            values,
        })
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    /// Copy with row `i` removed.
    pub fn without_row(&self, i: usize) -> Self {
        let mut values = Vec::with_capacity(self.values.len() - self.n_cols);
        for r in (0..self.n_rows).filter(|&r| r != i) {
            values.extend_from_slice(self.row(r));
        }
        Covariates {
            n_rows: self.n_rows - 1,
            n_cols: self.n_cols,
            values,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Prior<T> {
    /// Student-t on every coefficient, half-Cauchy on `1/φ` for each
    /// dispersion parameter.
    StudentTHalfCauchy {
        beta_df: T,
        beta_scale: T,
        inv_phi_scale: T,
    },
    /// `exp(β) ~ Gamma(shape, rate)` for an intercept-only Poisson model.
    /// Weighted Poisson likelihoods are conjugate to it, which makes this
    /// the reference case for checking the sampler.
    GammaMean { shape: T, rate: T },
}

impl<T: Scalar> Default for Prior<T> {
    fn default() -> Self {
        Prior::StudentTHalfCauchy {
            beta_df: T::lit(3.0),
            beta_scale: T::lit(2.5),
            inv_phi_scale: T::lit(5.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
pub struct ModelSpec<T> {
    pub family: Family<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariates: Option<Covariates<T>>,
    #[serde(default)]
    pub prior: Prior<T>,
}

impl<T: Scalar> ModelSpec<T> {
    pub fn intercept_only(family: Family<T>) -> Self {
        ModelSpec {
            family,
            covariates: None,
            prior: Prior::default(),
        }
    }

    pub fn poisson() -> Self {
        Self::intercept_only(Family::Poisson)
    }

    pub fn negative_binomial() -> Self {
        Self::intercept_only(Family::NegativeBinomial)
    }

    pub fn with_prior(mut self, prior: Prior<T>) -> Self {
        self.prior = prior;
        self
    }

    pub fn with_covariates(mut self, covariates: Covariates<T>) -> Self {
        self.covariates = Some(covariates);
        self
    }

    /// Number of log-mean coefficients `K`.
    pub fn n_coefficients(&self) -> usize {
        self.covariates.as_ref().map_or(1, |c| c.n_cols)
    }

    /// Dimension of the unconstrained parameter vector.
    pub fn dim(&self) -> usize {
        self.n_coefficients() + self.family.n_dispersion()
    }

    /// Checks the spec on its own and against a dataset of `n` records.
    pub fn validate(&self, n: usize) -> Result<()> {
        if let Family::NegativeBinomialMixture { proportions } = &self.family {
            if proportions.len() < 2 {
                return Err(Error::config("a mixture needs at least 2 components"));
            }
            if proportions.iter().any(|&p| !(p > T::zero())) {
                return Err(Error::config("mixture proportions must be positive"));
            }
            let total: T = proportions.iter().copied().sum();
            if (total - T::one()).abs() > T::lit(1e-6) {
                return Err(Error::config(format!(
                    "mixture proportions sum to {total}, expected 1"
                )));
            }
        }
        if let Some(c) = &self.covariates {
            if c.n_rows != n {
                return Err(Error::config(format!(
                    "design matrix has {} rows but the dataset has {n} records",
                    c.n_rows
                )));
            }
        }
        match &self.prior {
            Prior::StudentTHalfCauchy {
                beta_df,
                beta_scale,
                inv_phi_scale,
            } => {
                if !(*beta_df > T::zero() && *beta_scale > T::zero() && *inv_phi_scale > T::zero())
                {
                    return Err(Error::config("prior scales and df must be positive"));
                }
            }
            Prior::GammaMean { shape, rate } => {
                if !(*shape > T::zero() && *rate > T::zero()) {
                    return Err(Error::config("gamma prior shape and rate must be positive"));
                }
                if self.family != Family::Poisson || self.n_coefficients() != 1 {
                    return Err(Error::config(
                        "the gamma mean prior applies to intercept-only Poisson models",
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("model spec serializes");
        let mut f = Fingerprinter::new("model-spec");
        f.bytes(json.as_bytes());
        f.hex()
    }
}

/// Model parameters: log-mean coefficients and dispersions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theta<T> {
    pub beta: Vec<T>,
    /// Empty for Poisson, one entry for NB, one per mixture component.
    pub dispersion: Vec<T>,
}

impl<T: Scalar> Theta<T> {
    pub fn poisson_mean(mu: T) -> Self {
        Theta {
            beta: vec![mu.ln()],
            dispersion: Vec::new(),
        }
    }

    pub fn negative_binomial(mu: T, phi: T) -> Self {
        Theta {
            beta: vec![mu.ln()],
            dispersion: vec![phi],
        }
    }

    pub fn phi(&self) -> Option<T> {
        self.dispersion.first().copied()
    }

    /// Mean of an intercept-only model.
    pub fn intercept_mean(&self) -> T {
        self.beta[0].exp()
    }

    pub fn validate(&self, spec: &ModelSpec<T>) -> Result<()> {
        if self.beta.len() != spec.n_coefficients()
            || self.dispersion.len() != spec.family.n_dispersion()
        {
            return Err(Error::config(format!(
                "theta has {} coefficients and {} dispersions; model expects {} and {}",
                self.beta.len(),
                self.dispersion.len(),
                spec.n_coefficients(),
                spec.family.n_dispersion()
            )));
        }
        if self.beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::config("theta coefficients must be finite"));
        }
        if self
            .dispersion
            .iter()
            .any(|&p| !(p > T::zero() && p.is_finite()))
        {
            return Err(Error::config("dispersion must be positive and finite"));
        }
        Ok(())
    }

    /// `(β, log φ)` layout used by the sampler.
    pub fn to_unconstrained(&self) -> Vec<T> {
        self.beta
            .iter()
            .copied()
            .chain(self.dispersion.iter().map(|p| p.ln()))
            .collect()
    }

    pub fn from_unconstrained(u: &[T], n_coefficients: usize) -> Self {
        Theta {
            beta: u[..n_coefficients].to_vec(),
            dispersion: u[n_coefficients..].iter().map(|v| v.exp()).collect(),
        }
    }
}

impl<T: Scalar> fmt::Display for Theta<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "beta={:?} dispersion={:?}", self.beta, self.dispersion)
    }
}

#[inline]
fn poisson_lpmf<T: Scalar>(x: T, ln_fact_x: T, eta: T, mu: T) -> T {
    if x == T::zero() {
        -mu
    } else {
        x * eta - mu - ln_fact_x
    }
}

#[inline]
fn nb_lpmf<T: Scalar>(x: T, ln_fact_x: T, mu: T, phi: T) -> T {
    let tail = -phi * (mu / phi).ln_1p();
    if x == T::zero() {
        tail
    } else {
        ln_gamma(x + phi) - ln_gamma(phi) - ln_fact_x + tail - x * (phi / mu).ln_1p()
    }
}

/// `log p(x | θ)` given the record's linear predictor `eta = log μ`.
#[inline]
fn family_lpmf<T: Scalar>(family: &Family<T>, x: T, ln_fact_x: T, eta: T, theta: &Theta<T>) -> T {
    let mu = eta.exp();
    match family {
        Family::Poisson => poisson_lpmf(x, ln_fact_x, eta, mu),
        Family::NegativeBinomial => nb_lpmf(x, ln_fact_x, mu, theta.dispersion[0]),
        Family::NegativeBinomialMixture { proportions } => {
            let mut max = T::neg_infinity();
            for (p, &phi) in proportions.iter().zip(&theta.dispersion) {
                max = max.max(p.ln() + nb_lpmf(x, ln_fact_x, mu, phi));
            }
            if !max.is_finite() {
                return max;
            }
            let mut acc = T::zero();
            for (p, &phi) in proportions.iter().zip(&theta.dispersion) {
                acc += (p.ln() + nb_lpmf(x, ln_fact_x, mu, phi) - max).exp();
            }
            max + acc.ln()
        }
    }
}

fn linear_predictor<T: Scalar>(spec: &ModelSpec<T>, theta: &Theta<T>, record: usize) -> T {
    match &spec.covariates {
        None => theta.beta[0],
        Some(c) => c
            .row(record)
            .iter()
            .zip(&theta.beta)
            .fold(T::zero(), |acc, (&x, &b)| acc + x * b),
    }
}

/// Mean `μ_i = exp(η_i)` of record `i` under `theta`.
pub fn record_mean<T: Scalar>(spec: &ModelSpec<T>, theta: &Theta<T>, record: usize) -> T {
    linear_predictor(spec, theta, record).exp()
}

fn evaluation_error<T: Scalar>(record: usize, value: u64, theta: &Theta<T>) -> Error {
    Error::Evaluation {
        record,
        value,
        theta: theta.to_string(),
    }
}

/// Exact `log p(x_i | θ)` for one record.
pub fn log_lik_record<T: Scalar>(
    spec: &ModelSpec<T>,
    theta: &Theta<T>,
    record_index: usize,
    dataset: &Dataset,
) -> Result<T> {
    let Some(&raw) = dataset.records().get(record_index) else {
        return Err(Error::config(format!(
            "record index {record_index} out of range for {} records",
            dataset.len()
        )));
    };
    theta.validate(spec)?;
    let x = T::from_count(raw);
    let eta = linear_predictor(spec, theta, record_index);
    let value = family_lpmf(&spec.family, x, ln_gamma(x + T::one()), eta, theta);
    if value.is_finite() {
        Ok(value)
    } else {
        Err(evaluation_error(record_index, raw, theta))
    }
}

/// `Σ_i α_i log p(x_i | θ)`. Records with zero weight contribute exactly
/// zero and are never evaluated.
pub fn pseudo_log_lik<T: Scalar, W: AsRef<[T]> + ?Sized>(
    spec: &ModelSpec<T>,
    theta: &Theta<T>,
    dataset: &Dataset,
    weights: &W,
) -> Result<T> {
    let alphas = weights.as_ref();
    check_weights(alphas, dataset.len())?;
    let mut total = T::zero();
    for (i, &a) in alphas.iter().enumerate() {
        if a > T::zero() {
            total += a * log_lik_record(spec, theta, i, dataset)?;
        }
    }
    Ok(total)
}

pub(crate) fn check_weights<T: Scalar>(alphas: &[T], n: usize) -> Result<()> {
    if alphas.len() != n {
        return Err(Error::config(format!(
            "weight vector has {} entries for {n} records",
            alphas.len()
        )));
    }
    if alphas.iter().any(|&a| !(a >= T::zero() && a <= T::one())) {
        return Err(Error::config("weights must lie in [0, 1]"));
    }
    Ok(())
}

fn student_t_lpdf<T: Scalar>(z: T, df: T, scale: T) -> T {
    let half = T::lit(0.5);
    let pi = T::lit(std::f64::consts::PI);
    let u = z / scale;
    ln_gamma((df + T::one()) * half)
        - ln_gamma(df * half)
        - half * (df * pi).ln()
        - scale.ln()
        - (df + T::one()) * half * (u * u / df).ln_1p()
}

fn half_cauchy_lpdf<T: Scalar>(v: T, scale: T) -> T {
    let pi = T::lit(std::f64::consts::PI);
    let u = v / scale;
    T::lit(2.0).ln() - (pi * scale).ln() - (u * u).ln_1p()
}

/// Log prior density in natural coordinates: `β` and `φ` (the half-Cauchy
/// on `1/φ` is carried over to `φ` with its Jacobian). Under
/// [`Prior::GammaMean`] the density is expressed on `β = log μ`.
pub fn log_prior<T: Scalar>(spec: &ModelSpec<T>, theta: &Theta<T>) -> T {
    match &spec.prior {
        Prior::StudentTHalfCauchy {
            beta_df,
            beta_scale,
            inv_phi_scale,
        } => {
            let coef: T = theta
                .beta
                .iter()
                .map(|&b| student_t_lpdf(b, *beta_df, *beta_scale))
                .sum();
            let disp: T = theta
                .dispersion
                .iter()
                .map(|&phi| half_cauchy_lpdf(phi.recip(), *inv_phi_scale) - T::lit(2.0) * phi.ln())
                .sum();
            coef + disp
        }
        Prior::GammaMean { shape, rate } => {
            let b = theta.beta[0];
            *shape * rate.ln() - ln_gamma(*shape) + *shape * b - *rate * b.exp()
        }
    }
}

/// Log prior density of the sampler's `(β, log φ)` coordinates.
pub fn log_prior_unconstrained<T: Scalar>(spec: &ModelSpec<T>, theta: &Theta<T>) -> T {
    let jacobian: T = theta.dispersion.iter().map(|p| p.ln()).sum();
    log_prior(spec, theta) + jacobian
}

#[derive(Debug, Clone)]
struct Group<T> {
    value: u64,
    x: T,
    ln_fact: T,
    /// First record in the group; used for covariate rows and error reports.
    record: usize,
}

/// Batch evaluator of per-record log-likelihoods for one `(spec, dataset)`.
///
/// Intercept-only models share `μ` across records, so records with equal
/// counts share a log-likelihood and are evaluated once per distinct value.
#[derive(Debug, Clone)]
pub struct LogLikKernel<'a, T> {
    spec: &'a ModelSpec<T>,
    groups: Vec<Group<T>>,
    group_of: Vec<usize>,
}

impl<'a, T: Scalar> LogLikKernel<'a, T> {
    pub fn new(spec: &'a ModelSpec<T>, dataset: &Dataset) -> Result<Self> {
        spec.validate(dataset.len())?;
        let records = dataset.records();
        let mut groups = Vec::new();
        let mut group_of = Vec::with_capacity(records.len());
        let make = |value: u64, record: usize| {
            let x = T::from_count(value);
            Group {
                value,
                x,
                ln_fact: ln_gamma(x + T::one()),
                record,
            }
        };
        if spec.covariates.is_some() {
            for (i, &v) in records.iter().enumerate() {
                groups.push(make(v, i));
                group_of.push(i);
            }
        } else {
            let mut index: BTreeMap<u64, usize> = BTreeMap::new();
            for (i, &v) in records.iter().enumerate() {
                let g = *index.entry(v).or_insert_with(|| {
                    groups.push(make(v, i));
                    groups.len() - 1
                });
                group_of.push(g);
            }
        }
        Ok(LogLikKernel {
            spec,
            groups,
            group_of,
        })
    }

    pub fn spec(&self) -> &ModelSpec<T> {
        self.spec
    }

    pub fn n_records(&self) -> usize {
        self.group_of.len()
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    /// Group index of each record.
    pub fn group_of(&self) -> &[usize] {
        &self.group_of
    }

    /// Fills `out` with one log-likelihood per group. Values may be
    /// non-finite; callers decide whether that matters for their weights.
    pub fn group_log_liks(&self, theta: &Theta<T>, out: &mut Vec<T>) {
        out.clear();
        out.extend(self.groups.iter().map(|g| {
            let eta = linear_predictor(self.spec, theta, g.record);
            family_lpmf(&self.spec.family, g.x, g.ln_fact, eta, theta)
        }));
    }

    /// Per-record log-likelihoods.
    pub fn record_log_liks(&self, theta: &Theta<T>) -> Vec<T> {
        let mut by_group = Vec::with_capacity(self.groups.len());
        self.group_log_liks(theta, &mut by_group);
        self.group_of.iter().map(|&g| by_group[g]).collect()
    }

    /// Sums record weights within each group.
    pub fn group_weights(&self, alphas: &[T]) -> Result<Vec<T>> {
        check_weights(alphas, self.n_records())?;
        let mut w = vec![T::zero(); self.groups.len()];
        for (&g, &a) in self.group_of.iter().zip(alphas) {
            w[g] += a;
        }
        Ok(w)
    }

    /// `Σ_g w_g ℓ_g`, skipping zero-weight groups. Errors on a non-finite
    /// contribution from a positively weighted group.
    pub fn weighted_sum(
        &self,
        theta: &Theta<T>,
        group_weights: &[T],
        scratch: &mut Vec<T>,
    ) -> Result<T> {
        self.group_log_liks(theta, scratch);
        let mut total = T::zero();
        for (g, (&w, &ll)) in group_weights.iter().zip(scratch.iter()).enumerate() {
            if w > T::zero() {
                if !ll.is_finite() {
                    let grp = &self.groups[g];
                    return Err(evaluation_error(grp.record, grp.value, theta));
                }
                total += w * ll;
            }
        }
        Ok(total)
    }

    pub(crate) fn group_record(&self, g: usize) -> (usize, u64) {
        (self.groups[g].record, self.groups[g].value)
    }
}
