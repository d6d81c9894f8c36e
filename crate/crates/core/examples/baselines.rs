//! Grey-box membership baselines on a toy model: per-sample scores, the
//! Welch split test and dataset inference on combined features.

use radiomark::baselines::{ddi_test, mia_split_test, sample_features, MiaMethod};
use radiomark::pipeline::{synth_corpus, ExperimentSpec, Fixture};

fn main() -> radiomark::Result<()> {
    let spec = ExperimentSpec { target_tokens: 60_000, ..ExperimentSpec::default() };
    let fx = Fixture::build(&spec, 0)?;
    let held_out: Vec<_> = synth_corpus(&spec.synth_config(0, &spec.domains[0], 7, 60_000))?
        .into_iter()
        .map(|mut r| {
            r.id = format!("held-{}", r.id);
            r
        })
        .collect();
    for m in [MiaMethod::Ppl, MiaMethod::Mink, MiaMethod::Compress] {
        let r = mia_split_test(&fx.clean, &fx.records, &held_out, m)?;
        println!("{:<9} t={:>8.2} p={:.3e} {:?}", r.method, r.statistic.unwrap_or(f64::NAN), r.p_value.unwrap_or(f64::NAN), r.notes);
    }
    let ddi = ddi_test(&sample_features(&fx.clean, &fx.records)?, &sample_features(&fx.clean, &held_out)?, 0)?;
    println!("{}", ddi.to_json()?);
    Ok(())
}
