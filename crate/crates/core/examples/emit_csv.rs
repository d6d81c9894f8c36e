//! Per-token entropies and scores for plotting: the gate keeps the rows with
//! the highest entropy.

use radiomark::detect::{write_scored_csv, EntropyTable};
use radiomark::pipeline::{ExperimentSpec, Fixture};
use radiomark::wm::DepthWeights;

fn main() -> radiomark::Result<()> {
    let spec = ExperimentSpec { target_tokens: 60_000, ..ExperimentSpec::default() };
    let fx = Fixture::build(&spec, 0)?;
    let rad = fx.radioactive(&spec, 1.0)?;
    let prompts = fx.prompts(&spec, &rad, spec.prompt_mode())?;
    let outputs = fx.collect(&spec, &rad.suspect, &prompts, 5_000)?;
    let table = EntropyTable::compute(&outputs, &fx.clean)?;
    let scored = table.score(&outputs, fx.owner(), &spec.params(), &DepthWeights::new(spec.d)?)?;
    let path = std::env::temp_dir().join("radiomark-scored.csv");
    write_scored_csv(std::fs::File::create(&path)?, &scored)?;
    println!("{} rows written to {}", scored.len(), path.display());
    Ok(())
}
