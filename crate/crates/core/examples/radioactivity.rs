//! The owner workflow end to end: watermark a corpus, fine-tune a fresh
//! model on it, query the model as a black box and test with the owner key
//! and an unrelated key.

use radiomark::detect::Prepared;
use radiomark::pipeline::{ExperimentSpec, Fixture};

fn main() -> radiomark::Result<()> {
    let seed = std::env::args().nth(1).map_or(0, |s| s.parse().expect("seed"));
    let spec = ExperimentSpec::default();
    let fx = Fixture::build(&spec, seed)?;
    let rad = fx.radioactive(&spec, 1.0)?;
    let prompts = fx.prompts(&spec, &rad, spec.prompt_mode())?;
    let outputs = fx.collect(&spec, &rad.suspect, &prompts, spec.token_budget)?;
    let prep = Prepared::new(&outputs, &fx.clean)?;
    for q in [40.0, 100.0] {
        let cfg = spec.detect_config(seed, q, spec.token_budget);
        for key in &fx.keys {
            let r = prep.report(&outputs, key, &cfg)?;
            println!(
                "q={q:>5} key {:<6} |S|={:>6} mean g {:.4} z={:>7.2} -log10 p={:>6.2} ungated z={:.2}",
                r.key_id,
                r.n_selected,
                r.mean_gbar,
                r.z,
                r.neg_log10_p().unwrap_or(f64::NAN),
                r.ungated_z
            );
        }
    }
    Ok(())
}
