//! How much of the signal survives further training on clean data.

use radiomark::detect::detect_outputs;
use radiomark::pipeline::{ExperimentSpec, Fixture};

fn main() -> radiomark::Result<()> {
    let spec = ExperimentSpec::default();
    let fx = Fixture::build(&spec, 0)?;
    let rad = fx.radioactive(&spec, 1.0)?;
    let prompts = fx.prompts(&spec, &rad, spec.prompt_mode())?;
    let cfg = spec.detect_config(0, spec.gate_q(), spec.token_budget);
    let mut model = rad.suspect.clone();
    for round in 0..=2 {
        if round > 0 {
            model = fx.continue_training(&spec, &model)?;
        }
        let outputs = fx.collect(&spec, &model, &prompts, spec.token_budget)?;
        let r = detect_outputs(&outputs, fx.owner(), &fx.clean, &cfg)?;
        println!(
            "clean rounds {round} ({}x corpus each): z={:.2} -log10 p={:.2}",
            spec.continued_factor,
            r.z,
            r.neg_log10_p().unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
