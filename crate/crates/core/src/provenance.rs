use serde::{Deserialize, Serialize};

use crate::weights::Scheme;

/// Identifies the inputs a set of draws (and anything derived from them)
/// was produced under. All ids are content fingerprints.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub model: String,
    pub dataset: String,
    pub weights: String,
    pub weights_scheme: Scheme,
    pub sampler: String,
}

impl Provenance {
    /// Provenance for quantities computed outside a sampler run, e.g. a
    /// hand-built matrix. Only the weight scheme is meaningful.
    pub fn detached(weights_scheme: Scheme) -> Self {
        let none = || "detached".to_string();
        Provenance {
            model: none(),
            dataset: none(),
            weights: none(),
            weights_scheme,
            sampler: none(),
        }
    }
}
