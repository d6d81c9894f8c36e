//! Shaping and tournament selection on a fixed distribution: averaged over
//! keys the output matches the shaped distribution, while under one key the
//! winners carry high g-values.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use radiomark::lm::FixedModel;
use radiomark::sampler::{generate_sequence, SamplerConfig, TokenDistribution};
use radiomark::wm::WatermarkKey;

fn main() -> radiomark::Result<()> {
    let base = TokenDistribution::from_parts((10..16).collect(), vec![0.4, 0.25, 0.15, 0.1, 0.06, 0.04])?;
    let shaped = base.shape(0.8, 50, 0.95)?;
    println!("shaped (T=0.8, top-k 50, top-p 0.95): {:?}", shaped.iter().collect::<Vec<_>>());

    let model = FixedModel::new(base.clone());
    let cfg = SamplerConfig { temperature: 1.0, top_k: usize::MAX, top_p: 1.0, w: 2, ..SamplerConfig::default() };
    let mut rng = ChaCha20Rng::seed_from_u64(0);
    let trials = 20_000;
    let mut counts = [0usize; 6];
    for t in 0..trials {
        let key = WatermarkKey::generate(&mut rng, "k")?;
        let sc = SamplerConfig { rng_seed: t, ..cfg.clone() };
        let rec = generate_sequence(&model, &[3, 4], &key, &sc, 1, &[])?;
        counts[(rec.generated()[0] - 10) as usize] += 1;
    }
    for (i, c) in counts.iter().enumerate() {
        println!("token {} base {:.3} key-averaged {:.3}", i + 10, base.probs()[i], *c as f64 / trials as f64);
    }

    let key = WatermarkKey::generate(&mut rng, "owner")?;
    let rec = generate_sequence(&model, &[3, 4], &key, &SamplerConfig { rng_seed: 1, ..cfg }, 2_000, &[])?;
    let s = rec.g_summary();
    println!("one key, {} tokens: mean g {:.3}, per layer {:?}", s.positions, s.mean_g, s.layer_means);
    Ok(())
}
