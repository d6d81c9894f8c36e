//! Train the interpolated trigram model on a synthetic corpus, inspect its
//! distributions and round-trip it through the model file format.

use radiomark::lm::{LanguageModel, NgramConfig, NgramModel, Tokenizer};
use radiomark::pipeline::corpus::training_sequences;
use radiomark::pipeline::{synth_corpus, SynthConfig};

fn main() -> radiomark::Result<()> {
    let records = synth_corpus(&SynthConfig { target_tokens: 30_000, ..SynthConfig::default() })?;
    let tok = Tokenizer::build(records.iter().flat_map(|r| [r.prompt.as_str(), r.response.as_str()]), 5_000);
    let mut model = NgramModel::new(tok, NgramConfig::default())?;
    model.train(&training_sequences(&records, model.tokenizer()))?;
    println!("{} records, vocab {}", records.len(), model.vocab_size());

    let r = &records[0];
    println!("prompt: {}\nresponse: {}", r.prompt, r.response);
    let ids = r.training_tokens(model.tokenizer());
    println!("perplexity of record 0: {:.2}", model.perplexity(&ids)?);
    for cut in [1, 2, 5] {
        let h = &ids[..cut];
        let dist = model.next_token_distribution(h)?;
        let top = dist.shape(1.0, 3, 1.0)?;
        let names: Vec<String> = top
            .iter()
            .map(|(t, _)| format!("{}:{:.2}", model.tokenizer().surface(t).unwrap_or("?"), dist.prob(t)))
            .collect();
        println!("after {:?}: entropy {:.2} nats, top {names:?}", model.tokenizer().decode(h), dist.entropy());
    }

    let dir = std::env::temp_dir().join("radiomark-toy-lm.model");
    model.save(&dir)?;
    let back = NgramModel::load(&dir)?;
    println!("reloaded model identical: {}", back.to_bytes()? == model.to_bytes()?);
    Ok(())
}
