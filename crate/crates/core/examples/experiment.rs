//! Run one experiment mode and write its bundle.
//!
//! `cargo run --release --example experiment -- budget-sweep /tmp/bundle 0,1`

use std::path::PathBuf;

use radiomark::pipeline::{run_experiment, summary_text, ExperimentMode, ExperimentSpec};

fn main() -> radiomark::Result<()> {
    let mut args = std::env::args().skip(1);
    let mode: ExperimentMode = args.next().as_deref().unwrap_or("qa-detection").parse()?;
    let out = PathBuf::from(args.next().unwrap_or_else(|| "bundle".into()));
    let seeds = args
        .next()
        .map(|s| s.split(',').map(|x| x.parse().expect("seed")).collect())
        .unwrap_or_else(|| vec![0]);
    let spec = ExperimentSpec { seeds, ..ExperimentSpec::for_mode(mode) };
    let bundle = run_experiment(&spec, &out)?;
    print!("{}", summary_text(&bundle));
    println!("written to {}", out.display());
    Ok(())
}
