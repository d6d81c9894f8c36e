//! Two owners watermark their own corpora; one model is trained on both.
//! Each owner's prompts should point at that owner's key only.

use radiomark::detect::attribute_outputs;
use radiomark::pipeline::{AttributionFixture, ExperimentMode, ExperimentSpec};

fn main() -> radiomark::Result<()> {
    let spec = ExperimentSpec::for_mode(ExperimentMode::Attribution);
    let fx = AttributionFixture::build(&spec, 0)?;
    for (i, name) in fx.names.iter().enumerate() {
        let outputs = fx.collect(&spec, i, spec.token_budget)?;
        let cfg = spec.detect_config(0, spec.gate_q(), spec.token_budget);
        let rep = attribute_outputs(&outputs, &fx.keys, &fx.clean, &cfg)?;
        for r in &rep.reports {
            println!("prompts {name:<6} key {:<6} p={:.3e}", r.key_id, r.p_value.unwrap_or(f64::NAN));
        }
        println!("  -> {:?}", rep.attribution);
    }
    Ok(())
}
