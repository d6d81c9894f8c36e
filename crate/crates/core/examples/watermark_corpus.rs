//! Rewrite half of a corpus under a key and show which records changed.

use radiomark::pipeline::{watermark_corpus, ExperimentSpec, Fixture};

fn main() -> radiomark::Result<()> {
    let spec = ExperimentSpec { target_tokens: 30_000, ..ExperimentSpec::default() };
    let fx = Fixture::build(&spec, 0)?;
    let (wm, manifest) = watermark_corpus(&fx.records, fx.owner(), &fx.clean, &spec.rewrite_config(0, 0.5))?;
    println!(
        "{} records, {} selected, {} rewritten, {} failed, config {}",
        fx.records.len(),
        manifest.selected,
        manifest.rewritten.len(),
        manifest.failed.len(),
        &manifest.config_digest[..16]
    );
    let id = &manifest.rewritten[0];
    let (before, after) = fx.records.iter().zip(&wm).find(|(a, _)| &a.id == id).expect("rewritten record");
    println!("\n[{}] {}\n  original:    {}\n  watermarked: {}", before.id, before.prompt, before.response, after.response);
    Ok(())
}
