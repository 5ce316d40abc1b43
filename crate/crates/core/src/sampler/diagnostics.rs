//! Split-R̂ and effective sample size over multiple chains.
//!
//! Both follow the usual multi-chain formulation: within-chain variance
//! `W`, between-chain variance `B`, and the pooled estimate
//! `var⁺ = (N−1)/N · W + B/N`. ESS sums autocorrelations with Geyer's
//! initial monotone positive sequence.

use serde::{Deserialize, Serialize};

/// Split-R̂ threshold above which a run is flagged as unconverged.
pub const RHAT_LIMIT: f64 = 1.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterDiagnostics {
    pub name: String,
    pub rhat: f64,
    pub ess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub parameters: Vec<ParameterDiagnostics>,
    pub max_rhat: f64,
    pub min_ess: f64,
    /// Mean acceptance rate of each chain after warmup.
    pub acceptance: Vec<f64>,
    pub converged: bool,
}

impl Diagnostics {
    pub fn from_parameters(parameters: Vec<ParameterDiagnostics>, acceptance: Vec<f64>) -> Self {
        let max_rhat = parameters
            .iter()
            .map(|p| p.rhat)
            .fold(f64::NEG_INFINITY, |a, b| {
                if b.is_nan() {
                    f64::INFINITY
                } else {
                    a.max(b)
                }
            });
        let min_ess = parameters
            .iter()
            .map(|p| p.ess)
            .fold(f64::INFINITY, f64::min);
        Diagnostics {
            converged: max_rhat <= RHAT_LIMIT,
            parameters,
            max_rhat,
            min_ess,
            acceptance,
        }
    }
}

struct ChainMoments {
    means: Vec<f64>,
    vars: Vec<f64>,
}

fn moments(chains: &[&[f64]]) -> ChainMoments {
    let mut means = Vec::with_capacity(chains.len());
    let mut vars = Vec::with_capacity(chains.len());
    for c in chains {
        let n = c.len() as f64;
        let m = c.iter().sum::<f64>() / n;
        let v = c.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        means.push(m);
        vars.push(v);
    }
    ChainMoments { means, vars }
}

fn pooled(chains: &[&[f64]]) -> (f64, f64) {
    let n = chains[0].len() as f64;
    let m = moments(chains);
    let k = chains.len() as f64;
    let w = m.vars.iter().sum::<f64>() / k;
    let between_over_n = if chains.len() > 1 {
        let grand = m.means.iter().sum::<f64>() / k;
        m.means.iter().map(|x| (x - grand).powi(2)).sum::<f64>() / (k - 1.0)
    } else {
        0.0
    };
    (w, w * (n - 1.0) / n + between_over_n)
}

fn equal_length(chains: &[Vec<f64>]) -> usize {
    let n = chains.iter().map(Vec::len).min().unwrap_or(0);
    assert!(
        chains.iter().all(|c| c.len() == n),
        "chains must have equal length"
    );
    n
}

/// Split-R̂: each chain is halved, then the potential scale reduction is
/// computed over the halves. Returns NaN with fewer than 4 draws per chain
/// and `+inf` when all draws are identical within chains but differ across.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let n = equal_length(chains);
    if chains.is_empty() || n < 4 {
        return f64::NAN;
    }
    let half = n / 2;
    let mut halves: Vec<&[f64]> = Vec::with_capacity(chains.len() * 2);
    for c in chains {
        halves.push(&c[..half]);
        halves.push(&c[n - half..]);
    }
    let (w, var_plus) = pooled(&halves);
    if w == 0.0 {
        return if var_plus == 0.0 { 1.0 } else { f64::INFINITY };
    }
    (var_plus / w).sqrt()
}

fn autocovariance(chain: &[f64], mean: f64, lag: usize) -> f64 {
    let n = chain.len();
    let mut acc = 0.0;
    for t in 0..n - lag {
        acc += (chain[t] - mean) * (chain[t + lag] - mean);
    }
    acc / n as f64
}

/// Effective sample size of the pooled draws.
pub fn ess(chains: &[Vec<f64>]) -> f64 {
    let n = equal_length(chains);
    let m = chains.len();
    let total = (n * m) as f64;
    if m == 0 || n < 4 {
        return total;
    }
    let refs: Vec<&[f64]> = chains.iter().map(Vec::as_slice).collect();
    let mom = moments(&refs);
    let (w, var_plus) = pooled(&refs);
    if !(var_plus > 0.0) || !(w > 0.0) {
        return 1.0;
    }
    let rho = |lag: usize| -> f64 {
        let mean_acov = refs
            .iter()
            .zip(&mom.means)
            .map(|(c, &mu)| autocovariance(c, mu, lag))
            .sum::<f64>()
            / m as f64;
        1.0 - (w - mean_acov * n as f64 / (n as f64 - 1.0)) / var_plus
    };
    // Geyer: sum adjacent pairs while positive, forcing monotone decrease.
    let mut tau = -1.0;
    let mut prev_pair = f64::INFINITY;
    let mut lag = 0;
    while lag + 1 < n {
        let r0 = if lag == 0 { 1.0 } else { rho(lag) };
        let pair = r0 + rho(lag + 1);
        if !(pair > 0.0) {
            break;
        }
        let pair = pair.min(prev_pair);
        tau += 2.0 * pair;
        prev_pair = pair;
        lag += 2;
    }
    let tau = tau.max(1.0 / total.log10().max(1.0));
    total / tau
}
