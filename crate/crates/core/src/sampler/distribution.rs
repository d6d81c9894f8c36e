use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::TokenId;

const SUM_TOLERANCE: f64 = 1e-9;

/// A next-token distribution: token ids in ascending order with their probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenDistribution {
    ids: Vec<TokenId>,
    probs: Vec<f64>,
}

impl TokenDistribution {
    pub fn new(mut entries: Vec<(TokenId, f64)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidDistribution("empty support".into()));
        }
        entries.sort_by_key(|e| e.0);
        if entries.windows(2).any(|p| p[0].0 == p[1].0) {
            return Err(Error::InvalidDistribution("duplicate token id".into()));
        }
        let (ids, probs): (Vec<_>, Vec<_>) = entries.into_iter().unzip();
        Self::from_parts(ids, probs)
    }

    /// `ids` must be strictly ascending and parallel to `probs`.
    pub fn from_parts(ids: Vec<TokenId>, probs: Vec<f64>) -> Result<Self> {
        if ids.is_empty() || ids.len() != probs.len() {
            return Err(Error::InvalidDistribution("empty or ragged support".into()));
        }
        if ids.windows(2).any(|p| p[0] >= p[1]) {
            return Err(Error::InvalidDistribution("ids must be strictly ascending".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidDistribution("negative or non-finite probability".into()));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidDistribution(format!("probabilities sum to {sum}")));
        }
        Ok(Self { ids, probs })
    }

    pub fn point_mass(token: TokenId) -> Self {
        Self {
            ids: vec![token],
            probs: vec![1.0],
        }
    }

    pub fn uniform(ids: Vec<TokenId>) -> Result<Self> {
        let n = ids.len() as f64;
        let probs = vec![1.0 / n; ids.len()];
        Self::from_parts(ids, probs)
    }

    pub fn ids(&self) -> &[TokenId] {
        &self.ids
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn prob(&self, token: TokenId) -> f64 {
        self.ids
            .binary_search(&token)
            .map(|i| self.probs[i])
            .unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (TokenId, f64)> + '_ {
        self.ids.iter().copied().zip(self.probs.iter().copied())
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        -self
            .probs
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| p * p.ln())
            .sum::<f64>()
    }

    pub fn support_size(&self) -> usize {
        self.probs.iter().filter(|&&p| p > 0.0).count()
    }

    pub fn total_variation(&self, other: &TokenDistribution) -> f64 {
        let mut tv = 0.0;
        let (mut i, mut j) = (0, 0);
        while i < self.ids.len() || j < other.ids.len() {
            let a = self.ids.get(i).copied().unwrap_or(TokenId::MAX);
            let b = other.ids.get(j).copied().unwrap_or(TokenId::MAX);
            match a.cmp(&b) {
                Ordering::Less => {
                    tv += self.probs[i];
                    i += 1;
                }
                Ordering::Greater => {
                    tv += other.probs[j];
                    j += 1;
                }
                Ordering::Equal => {
                    tv += (self.probs[i] - other.probs[j]).abs();
                    i += 1;
                    j += 1;
                }
            }
        }
        tv / 2.0
    }

    /// Temperature on log-probabilities, then top-k, then top-p, then renormalize.
    ///
    /// Zero-probability tokens are dropped. Equal probabilities are ranked by
    /// ascending token id. The most probable token always survives.
    pub fn shape(&self, temperature: f64, top_k: usize, top_p: f64) -> Result<TokenDistribution> {
        if !(temperature.is_finite() && temperature > 0.0) {
            return Err(Error::InvalidConfig(format!("temperature {temperature} must be > 0")));
        }
        if top_k == 0 {
            return Err(Error::InvalidConfig("top_k must be >= 1".into()));
        }
        if !(top_p > 0.0 && top_p <= 1.0) {
            return Err(Error::InvalidConfig(format!("top_p {top_p} must lie in (0, 1]")));
        }
        let mut ranked: Vec<Ranked> = self
            .iter()
            .filter(|&(_, p)| p > 0.0)
            .map(|(id, p)| Ranked { prob: p, id })
            .collect();

        // Temperature is monotone, so the top-k set can be chosen on raw probabilities.
        let kept: Vec<Ranked> = if top_k < ranked.len() {
            ranked.select_nth_unstable_by(top_k - 1, |a, b| b.cmp(a));
            ranked.truncate(top_k);
            ranked.sort_unstable_by(|a, b| b.cmp(a));
            let tempered = temper(&ranked, temperature);
            let total = tempered.iter().map(|r| r.prob).sum();
            nucleus(tempered.into_iter(), total, top_p)
        } else {
            let tempered = temper(&ranked, temperature);
            let total = tempered.iter().map(|r| r.prob).sum();
            nucleus(HeapDrain(BinaryHeap::from(tempered)), total, top_p)
        };

        let total: f64 = kept.iter().map(|r| r.prob).sum();
        let mut entries: Vec<(TokenId, f64)> =
            kept.into_iter().map(|r| (r.id, r.prob / total)).collect();
        entries.sort_unstable_by_key(|e| e.0);
        let (ids, probs) = entries.into_iter().unzip();
        Ok(TokenDistribution { ids, probs })
    }

    pub fn sampler(&self) -> CumulativeSampler<'_> {
        let mut acc = 0.0;
        let cumulative = self
            .probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        CumulativeSampler {
            ids: &self.ids,
            cumulative,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> TokenId {
        self.sampler().sample(rng)
    }
}

/// Inverse-CDF sampling over a fixed distribution.
pub struct CumulativeSampler<'a> {
    ids: &'a [TokenId],
    cumulative: Vec<f64>,
}

impl CumulativeSampler<'_> {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> TokenId {
        let total = *self.cumulative.last().expect("nonempty distribution");
        let u = rng.random::<f64>() * total;
        let idx = self.cumulative.partition_point(|&c| c <= u);
        // u can reach the total through rounding
        let idx = idx.min(self.ids.len() - 1);
        self.ids[idx]
    }
}

#[derive(Debug, Clone, Copy)]
struct Ranked {
    prob: f64,
    id: TokenId,
}

// Larger probability ranks higher; among equals, the smaller id ranks higher.
impl Ord for Ranked {
    fn cmp(&self, other: &Self) -> Ordering {
        self.prob
            .total_cmp(&other.prob)
            .then_with(|| other.id.cmp(&self.id))
    }
}

impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Ranked {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Ranked {}

fn temper(ranked: &[Ranked], temperature: f64) -> Vec<Ranked> {
    if temperature == 1.0 {
        return ranked.to_vec();
    }
    let max_log = ranked
        .iter()
        .map(|r| r.prob.ln())
        .fold(f64::NEG_INFINITY, f64::max);
    ranked
        .iter()
        .map(|r| Ranked {
            prob: ((r.prob.ln() - max_log) / temperature).exp(),
            id: r.id,
        })
        .collect()
}

struct HeapDrain(BinaryHeap<Ranked>);

impl Iterator for HeapDrain {
    type Item = Ranked;
    fn next(&mut self) -> Option<Ranked> {
        self.0.pop()
    }
}

/// Smallest descending-probability prefix holding at least `top_p` of `total`.
fn nucleus<I>(descending: I, total: f64, top_p: f64) -> Vec<Ranked>
where
    I: Iterator<Item = Ranked>,
{
    if top_p >= 1.0 {
        return descending.collect();
    }
    let target = top_p * total * (1.0 - 1e-12);
    let mut cum = 0.0;
    let mut kept = Vec::new();
    for r in descending {
        cum += r.prob;
        kept.push(r);
        if cum >= target {
            break;
        }
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn dist(entries: &[(TokenId, f64)]) -> TokenDistribution {
        TokenDistribution::new(entries.to_vec()).unwrap()
    }

    #[test]
    fn validation() {
        assert!(TokenDistribution::new(vec![]).is_err());
        assert!(TokenDistribution::new(vec![(1, 0.5), (2, 0.4)]).is_err());
        assert!(TokenDistribution::new(vec![(1, -0.1), (2, 1.1)]).is_err());
        assert!(TokenDistribution::new(vec![(1, 0.5), (1, 0.5)]).is_err());
    }

    #[test]
    fn identity_shaping() {
        let d = dist(&[(3, 0.1), (5, 0.25), (9, 0.4), (11, 0.25)]);
        let s = d.shape(1.0, d.len(), 1.0).unwrap();
        assert_eq!(s, d);
    }

    #[test]
    fn top_k_tie_break_by_id() {
        let d = dist(&[(4, 0.25), (1, 0.25), (3, 0.25), (2, 0.25)]);
        let s = d.shape(1.0, 2, 1.0).unwrap();
        assert_eq!(s.ids(), &[1, 2]);
        assert_eq!(s.probs(), &[0.5, 0.5]);
    }

    #[test]
    fn top_p_prefix() {
        let d = dist(&[(0, 0.7), (1, 0.2), (2, 0.1)]);
        let s = d.shape(1.0, 3, 0.8).unwrap();
        assert_eq!(s.ids(), &[0, 1]);
        assert!((s.probs()[0] - 7.0 / 9.0).abs() < 1e-12);
        assert!((s.probs()[1] - 2.0 / 9.0).abs() < 1e-12);
        // exact boundary: 0.7 + 0.2 is 0.9 in exact arithmetic
        let s = d.shape(1.0, 3, 0.9).unwrap();
        assert_eq!(s.ids(), &[0, 1]);
        // heap path (top_k >= support) agrees with the sorted path
        let s2 = d.shape(1.0, 100, 0.8).unwrap();
        assert_eq!(s2.ids(), &[0, 1]);
    }

    #[test]
    fn temperature_sharpens() {
        let d = dist(&[(0, 0.5), (1, 0.25), (2, 0.25)]);
        let s = d.shape(0.5, 3, 1.0).unwrap();
        // p^2 normalized: .25, .0625, .0625 -> 2/3, 1/6, 1/6
        assert!((s.prob(0) - 2.0 / 3.0).abs() < 1e-12);
        assert!((s.prob(1) - 1.0 / 6.0).abs() < 1e-12);
        let s = d.shape(1e-3, 3, 1.0).unwrap();
        assert!(s.prob(0) > 0.999_999);
    }

    #[test]
    fn top_token_always_kept() {
        let d = dist(&[(0, 0.9), (1, 0.1)]);
        let s = d.shape(1.0, 1, 1e-9).unwrap();
        assert_eq!(s.ids(), &[0]);
        assert!(d.shape(0.0, 1, 1.0).is_err());
        assert!(d.shape(1.0, 0, 1.0).is_err());
        assert!(d.shape(1.0, 1, 0.0).is_err());
    }

    #[test]
    fn entropy_examples() {
        let u4 = TokenDistribution::uniform(vec![0, 1, 2, 3]).unwrap();
        assert!((u4.entropy() - 4f64.ln()).abs() < 1e-12);
        assert_eq!(TokenDistribution::point_mass(7).entropy(), 0.0);
        let d = dist(&[(0, 0.5), (1, 0.25), (2, 0.25)]);
        assert!((d.entropy() - 1.5 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn sampling_matches_probabilities() {
        let d = dist(&[(2, 0.5), (5, 0.3), (8, 0.2)]);
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let n = 100_000;
        let s = d.sampler();
        let mut counts = [0usize; 3];
        for _ in 0..n {
            let t = s.sample(&mut rng);
            counts[d.ids().iter().position(|&x| x == t).unwrap()] += 1;
        }
        for (c, p) in counts.iter().zip(d.probs()) {
            let sigma = (p * (1.0 - p) / n as f64).sqrt();
            assert!((*c as f64 / n as f64 - p).abs() < 4.0 * sigma);
        }
    }

    #[test]
    fn total_variation() {
        let a = dist(&[(0, 0.5), (1, 0.5)]);
        let b = dist(&[(1, 0.5), (2, 0.5)]);
        assert!((a.total_variation(&b) - 0.5).abs() < 1e-12);
        assert_eq!(a.total_variation(&a), 0.0);
    }
}
