use serde::{Deserialize, Serialize};

use super::score::ScoredToken;
use crate::error::{Error, Result};
use crate::stats::{normal_upper_p, PValue};
use crate::wm::DepthWeights;

/// The highest-entropy tokens kept by the gate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatedSet {
    pub tokens: Vec<ScoredToken>,
    pub q: f64,
    pub n0: usize,
}

impl GatedSet {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn mean_gbar(&self) -> f64 {
        mean_gbar(&self.tokens)
    }
}

pub(crate) fn mean_gbar(tokens: &[ScoredToken]) -> f64 {
    tokens.iter().map(|t| t.gbar).sum::<f64>() / tokens.len() as f64
}

/// `floor(q * n0 / 100)`, tolerant of the representation error in `q`.
pub fn gate_size(q: f64, n0: usize) -> usize {
    (q * n0 as f64 / 100.0 + 1e-9).floor() as usize
}

/// Keep the `floor(q/100 * N0)` highest-entropy tokens, pooled across all
/// sequences. Equal entropies are ordered by `(seq_id, offset)`.
pub fn entropy_gate(tokens: &[ScoredToken], q: f64) -> Result<GatedSet> {
    if !(q > 0.0 && q <= 100.0) {
        return Err(Error::InvalidConfig(format!("gate percentage {q} outside (0, 100]")));
    }
    if tokens.is_empty() {
        return Err(Error::Empty("no scored tokens"));
    }
    let n0 = tokens.len();
    let b = gate_size(q, n0);
    if b == 0 {
        return Err(Error::EmptyGate { q, n0 });
    }
    let mut order: Vec<&ScoredToken> = tokens.iter().collect();
    order.sort_by(|a, b| {
        b.entropy
            .total_cmp(&a.entropy)
            .then(a.seq_id.cmp(&b.seq_id))
            .then(a.offset.cmp(&b.offset))
    });
    Ok(GatedSet {
        tokens: order.into_iter().take(b).cloned().collect(),
        q,
        n0,
    })
}

/// `(mean - 1/2) * sqrt(4 * d_eff * n)`.
pub fn z_from_mean(mean_gbar: f64, n: usize, weights: &DepthWeights) -> f64 {
    (mean_gbar - 0.5) * (4.0 * weights.effective_depth() * n as f64).sqrt()
}

pub fn z_statistic(set: &GatedSet, weights: &DepthWeights) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::Empty("gated set"));
    }
    Ok(z_from_mean(set.mean_gbar(), set.len(), weights))
}

/// One-sided `1 - Phi(z)`.
pub fn p_value(z: f64) -> PValue {
    normal_upper_p(z)
}
