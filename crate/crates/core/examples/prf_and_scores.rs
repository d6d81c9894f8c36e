//! Seeds, g-values and depth-weighted scores for a short token sequence.

use radiomark::wm::{depth_weights, effective_depth, WatermarkKey, WatermarkParams};

fn main() -> radiomark::Result<()> {
    let key = WatermarkKey::new([7; 32], "demo")?;
    let params = WatermarkParams { d: 4, w: 3, salt_with_position: false };
    let weights = depth_weights(params.d)?;
    println!("weights {:?}  d_eff {:.3}", weights.weights(), effective_depth(&weights));

    let tokens = [12u32, 40, 7, 7, 93, 12, 40, 7];
    for t in 0..tokens.len() {
        let seed = params.seed_for(&key, &tokens[..t])?;
        let gv = params.g_vector(seed, tokens[t])?;
        println!(
            "pos {t} token {:>3} seed {seed:016x} g {:?} gbar {:.3}",
            tokens[t],
            gv.bits(),
            weights.weighted_g(&gv)?
        );
    }
    // Same window and token give the same seed and g-values under one key.
    let other = WatermarkKey::new([8; 32], "other")?;
    println!(
        "window [12,40,7]: key demo {:016x}, key other {:016x}",
        params.seed_for(&key, &tokens[..3])?,
        params.seed_for(&other, &tokens[..3])?
    );
    Ok(())
}
