use proptest::prelude::*;
use proptest::test_runner::Config;

use radiomark::baselines::{ddi_test, welch_t_one_sided, Alternative, SampleFeatures};
use radiomark::detect::{entropy_gate, gate_size, p_value, z_from_mean, ScoredToken};
use radiomark::lm::{NgramConfig, NgramModel, Tokenizer};
use radiomark::sampler::TokenDistribution;
use radiomark::stats::student_t_cdf;
use radiomark::wm::{DepthWeights, GVector};

fn scored(entropies: &[f64]) -> Vec<ScoredToken> {
    entropies
        .iter()
        .enumerate()
        .map(|(i, &h)| ScoredToken {
            token: i as u32,
            seq_id: i / 7,
            offset: i % 7,
            entropy: h,
            gbar: 0.5,
            gvector: GVector::from_bits(vec![0, 1]).unwrap(),
            seed: i as u64,
        })
        .collect()
}

fn distribution() -> impl Strategy<Value = TokenDistribution> {
    prop::collection::vec(0.001f64..1.0, 1..30).prop_map(|w| {
        let total: f64 = w.iter().sum();
        let ids = (0..w.len() as u32).map(|i| i * 3 + 5).collect();
        TokenDistribution::from_parts(ids, w.iter().map(|x| x / total).collect()).unwrap()
    })
}

fn t_density(x: f64, df: f64) -> f64 {
    let ln_norm = ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0) - 0.5 * (df * std::f64::consts::PI).ln();
    (ln_norm - (df + 1.0) / 2.0 * (1.0 + x * x / df).ln()).exp()
}

/// Lanczos approximation, accurate to about 1e-14 for positive arguments.
fn ln_gamma(x: f64) -> f64 {
    const G: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    let x = x - 1.0;
    let t = x + 7.5;
    let s = G[0] + G[1..].iter().enumerate().map(|(i, g)| g / (x + i as f64 + 1.0)).sum::<f64>();
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + s.ln()
}

/// `P(T <= t)` by composite Simpson integration from 0.
fn t_cdf_numeric(t: f64, df: f64) -> f64 {
    let n = 4_000;
    let h = t.abs() / n as f64;
    let mut s = t_density(0.0, df) + t_density(t.abs(), df);
    for i in 1..n {
        s += t_density(i as f64 * h, df) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    let half = s * h / 3.0;
    if t >= 0.0 {
        0.5 + half
    } else {
        0.5 - half
    }
}

fn features(rows: &[[f64; 3]], prefix: &str) -> Vec<SampleFeatures> {
    rows.iter()
        .enumerate()
        .map(|(i, r)| SampleFeatures {
            id: format!("{prefix}{i}"),
            ppl: r[0].exp(),
            mean_logp: -r[0],
            kmin_logp: -r[0] - r[1],
            kmax_logp: -r[0] + r[1],
            compress_ratio: r[2],
            length: 10 + i % 5,
        })
        .collect()
}

proptest! {
    #[test]
    fn gate_keeps_the_highest_entropies(
        entropies in prop::collection::vec(prop_oneof![0.0f64..5.0, Just(1.0)], 1..300),
        q in 0.5f64..=100.0,
    ) {
        let tokens = scored(&entropies);
        let b = gate_size(q, tokens.len());
        match entropy_gate(&tokens, q) {
            Err(_) => prop_assert_eq!(b, 0),
            Ok(set) => {
                prop_assert_eq!(set.len(), b);
                prop_assert_eq!(b, (q * tokens.len() as f64 / 100.0 + 1e-9).floor() as usize);
                let kept: std::collections::HashSet<_> = set.tokens.iter().map(|t| (t.seq_id, t.offset)).collect();
                let min_kept = set.tokens.iter().map(|t| t.entropy).fold(f64::INFINITY, f64::min);
                for t in tokens.iter().filter(|t| !kept.contains(&(t.seq_id, t.offset))) {
                    prop_assert!(t.entropy <= min_kept);
                }
            }
        }
    }

    #[test]
    fn z_increases_with_mean_and_p_decreases_with_z(
        m1 in 0.0f64..=1.0, m2 in 0.0f64..=1.0, n in 1usize..100_000, d in 1usize..12,
    ) {
        let w = DepthWeights::new(d).unwrap();
        let (lo, hi) = if m1 <= m2 { (m1, m2) } else { (m2, m1) };
        let (zl, zh) = (z_from_mean(lo, n, &w), z_from_mean(hi, n, &w));
        prop_assert!(zl <= zh);
        let (pl, ph) = (p_value(zl), p_value(zh));
        prop_assert!(pl.p >= ph.p);
        prop_assert!((0.0..=1.0).contains(&pl.p) && (0.0..=1.0).contains(&ph.p));
        prop_assert!(pl.log10_p >= ph.log10_p);
        if (0.5 - lo).abs() < 1e-15 {
            prop_assert!(zl.abs() < 1e-9);
        }
    }

    #[test]
    fn depth_weights_sum_to_depth(d in 1usize..64) {
        let w = DepthWeights::new(d).unwrap();
        let sum: f64 = w.weights().iter().sum();
        prop_assert!((sum - d as f64).abs() < 1e-9);
        let sq: f64 = w.weights().iter().map(|x| x * x).sum();
        prop_assert!((w.effective_depth() - (d * d) as f64 / sq).abs() < 1e-9);
        prop_assert!(w.weights().windows(2).all(|p| p[0] > p[1]));
    }

    #[test]
    fn shaping_yields_a_normalized_sub_distribution(
        dist in distribution(), t in 0.1f64..3.0, k in 1usize..40, top_p in 0.01f64..=1.0,
    ) {
        let shaped = dist.shape(t, k, top_p).unwrap();
        let total: f64 = shaped.probs().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
        prop_assert!(shaped.len() <= k && !shaped.is_empty());
        prop_assert!(shaped.ids().iter().all(|id| dist.prob(*id) > 0.0));
        let best = dist.iter().max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0))).unwrap().0;
        prop_assert!(shaped.prob(best) > 0.0);
        // Every dropped token is strictly less likely than every kept one, or tied and larger id.
        for (id, p) in dist.iter().filter(|(id, _)| shaped.prob(*id) == 0.0) {
            for &kept in shaped.ids() {
                let pk = dist.prob(kept);
                prop_assert!(p < pk || (p == pk && id > kept));
            }
        }
    }

    #[test]
    fn identity_shaping(dist in distribution()) {
        let shaped = dist.shape(1.0, dist.len(), 1.0).unwrap();
        prop_assert_eq!(shaped.ids(), dist.ids());
        for (a, b) in shaped.probs().iter().zip(dist.probs()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn welch_is_antisymmetric(
        pos in prop::collection::vec(-50.0f64..50.0, 2..40),
        neg in prop::collection::vec(-50.0f64..50.0, 2..40),
    ) {
        let a = welch_t_one_sided(&pos, &neg, Alternative::PosLess).unwrap();
        let b = welch_t_one_sided(&neg, &pos, Alternative::PosGreater).unwrap();
        match (a.statistic, b.statistic) {
            (Some(ta), Some(tb)) => {
                prop_assert!((ta + tb).abs() <= 1e-9 * ta.abs().max(1.0));
                prop_assert!((a.degrees_of_freedom.unwrap() - b.degrees_of_freedom.unwrap()).abs() < 1e-9);
                prop_assert!((a.p_value.unwrap() - b.p_value.unwrap()).abs() < 1e-12);
                let c = welch_t_one_sided(&pos, &neg, Alternative::PosGreater).unwrap();
                prop_assert!((a.p_value.unwrap() + c.p_value.unwrap() - 1.0).abs() < 1e-9);
            }
            (None, None) => prop_assert!(a.is_flagged("DEGENERATE") && b.is_flagged("DEGENERATE")),
            _ => prop_assert!(false, "one direction degenerate, the other not"),
        }
    }
}

proptest! {
    #![proptest_config(Config::with_cases(64))]

    #[test]
    fn t_cdf_matches_numerical_integration(t in -12.0f64..12.0, df in 1.0f64..60.0) {
        let exact = student_t_cdf(t, df);
        let numeric = t_cdf_numeric(t, df);
        prop_assert!((exact - numeric).abs() < 1e-8, "t={t} df={df}: {exact} vs {numeric}");
    }

    #[test]
    fn ddi_is_invariant_to_positive_affine_feature_maps(
        sus in prop::collection::vec([0.5f64..3.0, 0.0f64..1.0, 0.2f64..0.9], 24..40),
        val in prop::collection::vec([0.5f64..3.0, 0.0f64..1.0, 0.2f64..0.9], 24..40),
        scale in 0.01f64..100.0,
        shift in -10.0f64..10.0,
        seed in any::<u64>(),
    ) {
        let (s, v) = (features(&sus, "s"), features(&val, "v"));
        let map = |fs: &[SampleFeatures]| -> Vec<SampleFeatures> {
            fs.iter().cloned().map(|mut f| { f.compress_ratio = f.compress_ratio * scale + shift; f }).collect()
        };
        let a = ddi_test(&s, &v, seed).unwrap();
        let b = ddi_test(&map(&s), &map(&v), seed).unwrap();
        match (a.statistic, b.statistic) {
            (Some(ta), Some(tb)) => prop_assert!((ta - tb).abs() <= 1e-6 * ta.abs().max(1.0), "{ta} vs {tb}"),
            (ta, tb) => prop_assert_eq!(ta.is_some(), tb.is_some()),
        }
    }

    #[test]
    fn model_bytes_round_trip(
        corpus in prop::collection::vec(prop::collection::vec(0usize..6, 1..20), 1..10),
    ) {
        let words = ["a", "b", "c", "d", "e", "f"];
        let texts: Vec<String> = corpus.iter().map(|s| s.iter().map(|&i| words[i]).collect::<Vec<_>>().join(" ")).collect();
        let tok = Tokenizer::build(texts.iter().map(String::as_str), 100);
        let mut m = NgramModel::new(tok, NgramConfig::default()).unwrap();
        let seqs: Vec<Vec<u32>> = texts.iter().map(|t| m.tokenizer().encode(t)).collect();
        m.train(&seqs).unwrap();
        for t in &texts {
            prop_assert_eq!(&m.tokenizer().decode(&m.tokenizer().encode(t)), t);
        }
        let bytes = m.to_bytes().unwrap();
        let back = NgramModel::from_bytes(&bytes).unwrap();
        prop_assert_eq!(back.to_bytes().unwrap(), bytes);
        let h = m.tokenizer().encode(&texts[0]);
        prop_assert_eq!(back.dense_distribution(&h), m.dense_distribution(&h));
    }
}
