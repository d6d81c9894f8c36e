use std::cmp::Ordering;

use rand::Rng;

use crate::error::{Error, Result};
use crate::wm::GVector;
use crate::TokenId;

/// Single-elimination bracket over `2^d` candidates.
///
/// Round `j` pairs adjacent survivors and advances the one with the larger
/// layer-`j` g-value; distinct tokens with equal g-values are split by a fair
/// coin from `rng`.
pub fn tournament_select<R: Rng + ?Sized>(
    candidates: &[TokenId],
    gvectors: &[GVector],
    rng: &mut R,
) -> Result<TokenId> {
    let n = candidates.len();
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::CandidateCount(n));
    }
    if gvectors.len() != n {
        return Err(Error::InvalidConfig(format!(
            "{} g-vectors for {n} candidates",
            gvectors.len()
        )));
    }
    let rounds = n.trailing_zeros() as usize;
    if let Some(gv) = gvectors.iter().find(|gv| gv.d() < rounds) {
        return Err(Error::DepthMismatch {
            gvector: gv.d(),
            weights: rounds,
        });
    }

    let mut survivors: Vec<usize> = (0..n).collect();
    for layer in 1..=rounds {
        survivors = survivors
            .chunks_exact(2)
            .map(|pair| {
                let (a, b) = (pair[0], pair[1]);
                let (ga, gb) = (gvectors[a].layer(layer), gvectors[b].layer(layer));
                match ga.cmp(&gb) {
                    Ordering::Greater => a,
                    Ordering::Less => b,
                    // same token on both sides: no coin needed
                    Ordering::Equal if candidates[a] == candidates[b] => a,
                    Ordering::Equal if rng.random_bool(0.5) => a,
                    Ordering::Equal => b,
                }
            })
            .collect();
    }
    Ok(candidates[survivors[0]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn gv(bits: &[u8]) -> GVector {
        GVector::from_bits(bits.to_vec()).unwrap()
    }

    #[test]
    fn single_round() {
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let winner = tournament_select(&[10, 11], &[gv(&[1]), gv(&[0])], &mut rng).unwrap();
        assert_eq!(winner, 10);
        let winner = tournament_select(&[10, 11], &[gv(&[0]), gv(&[1])], &mut rng).unwrap();
        assert_eq!(winner, 11);
    }

    #[test]
    fn identical_candidates() {
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let cands = [7; 8];
        let gvs = vec![gv(&[0, 1, 1]); 8];
        assert_eq!(tournament_select(&cands, &gvs, &mut rng).unwrap(), 7);
    }

    #[test]
    fn two_round_bracket() {
        // A(1,0) B(0,1) C(1,1) D(0,0): round 1 -> A, C; round 2 compares 0 vs 1 -> C.
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let cands = [1, 2, 3, 4];
        let gvs = [gv(&[1, 0]), gv(&[0, 1]), gv(&[1, 1]), gv(&[0, 0])];
        assert_eq!(tournament_select(&cands, &gvs, &mut rng).unwrap(), 3);
    }

    #[test]
    fn ties_are_fair() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let n = 20_000;
        let wins = (0..n)
            .filter(|_| tournament_select(&[1, 2], &[gv(&[1]), gv(&[1])], &mut rng).unwrap() == 1)
            .count();
        let frac = wins as f64 / n as f64;
        assert!((frac - 0.5).abs() < 4.0 * (0.25 / n as f64).sqrt());
    }

    #[test]
    fn rejects_bad_counts() {
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let gvs = vec![gv(&[1, 1]); 3];
        assert!(matches!(
            tournament_select(&[1, 2, 3], &gvs, &mut rng),
            Err(Error::CandidateCount(3))
        ));
        assert!(matches!(
            tournament_select(&[], &[], &mut rng),
            Err(Error::CandidateCount(0))
        ));
        let short = vec![gv(&[1]); 4];
        assert!(tournament_select(&[1, 2, 3, 4], &short, &mut rng).is_err());
    }
}
