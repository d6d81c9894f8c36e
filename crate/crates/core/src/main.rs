use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

use radiomark::baselines::{
    ddi_test, mia_split_test_k, sample_features, write_features_csv, MiaMethod, SplitTestResult,
    FLAG_DEGENERATE, FLAG_SMALL_SAMPLE, MINK_FRACTION,
};
use radiomark::detect::{
    attribute_outputs, collect_outputs, write_scored_csv, DetectConfig, Prepared,
};
use radiomark::digest::sub_seed;
use radiomark::lm::{NgramConfig, NgramModel, Tokenizer};
use radiomark::pipeline::corpus::{export, ingest, training_sequences};
use radiomark::pipeline::{
    build_prompts, run_experiment, summary_text, synth_corpus, watermark_corpus, CorpusMode,
    CorpusRecord, ExperimentMode, ExperimentSpec, FlatConfig, PromptMode, RewriteConfig,
    SynthConfig,
};
use radiomark::sampler::{generate_plain, generate_sequence, SamplerConfig, Shaping};
use radiomark::wm::{WatermarkKey, WatermarkParams};
use radiomark::EOS;

const EXIT_LOW_POWER: u8 = 2;
const EXIT_INPUT: u8 = 3;

/// Tournament watermarking of text corpora and radioactivity detection.
#[derive(Parser)]
#[command(name = "radiomark", version)]
struct Cli {
    /// Base seed for every random choice.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Flat TOML file; any key may also be given as a flag, and the flag wins.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Create a watermark key file.
    Keygen {
        #[arg(long)]
        key_id: Option<String>,
    },
    /// Write a synthetic QA corpus.
    Synth {
        #[arg(long)]
        domain: Option<String>,
        #[arg(long)]
        target_tokens: Option<usize>,
        #[arg(long)]
        lexicon_size: Option<usize>,
        /// Sampling stream; different streams give disjoint samples of the same language.
        #[arg(long)]
        stream: Option<u64>,
        #[arg(long)]
        shared_function_words: Option<bool>,
    },
    /// Build a tokenizer and train a model from scratch.
    Train {
        #[arg(long = "corpus")]
        corpora: Vec<PathBuf>,
        #[arg(long)]
        name: Option<String>,
        #[arg(long)]
        max_vocab: Option<usize>,
        #[arg(long)]
        order: Option<usize>,
        #[arg(long)]
        add_k: Option<f64>,
    },
    /// Rewrite a fraction of a corpus's responses under a key.
    Watermark {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        key: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        rho: Option<f64>,
        #[command(flatten)]
        sampling: SamplingArgs,
    },
    /// Train further on new corpora, or from empty counts with `--fresh`.
    Finetune {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long = "corpus")]
        corpora: Vec<PathBuf>,
        #[arg(long)]
        name: Option<String>,
        /// Keep only the tokenizer and hyperparameters of the base model.
        #[arg(long)]
        fresh: Option<bool>,
    },
    /// Sample responses to corpus prompts, watermarked when a key is given.
    Generate {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        key: Option<PathBuf>,
        #[arg(long)]
        count: Option<usize>,
        #[command(flatten)]
        prompts: PromptArgs,
        #[command(flatten)]
        sampling: SamplingArgs,
    },
    /// Query a suspect model and test its outputs for one key.
    Detect {
        #[command(flatten)]
        query: QueryArgs,
        #[arg(long)]
        key: Option<PathBuf>,
        /// Also write `scored.csv` with one row per scored token.
        #[arg(long)]
        emit_csv: bool,
    },
    /// Test the same suspect outputs against several keys.
    Attribute {
        #[command(flatten)]
        query: QueryArgs,
        #[arg(long = "key")]
        keys: Vec<PathBuf>,
    },
    /// Grey-box membership tests: ppl, mink, compress or ddi.
    Baseline {
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Suspected training samples.
        #[arg(long)]
        members: Option<PathBuf>,
        /// Samples known to be unseen.
        #[arg(long)]
        nonmembers: Option<PathBuf>,
        #[arg(long)]
        mink_k: Option<f64>,
        /// Also write per-sample features to `features.csv`.
        #[arg(long)]
        emit_csv: bool,
    },
    /// Run a full experiment bundle over pinned seeds.
    Experiment {
        #[arg(long)]
        mode: Option<String>,
        /// Comma-separated; defaults to `--seed` when that is given.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        #[arg(long)]
        q: Option<f64>,
        #[arg(long)]
        token_budget: Option<usize>,
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long)]
        threads: Option<usize>,
        /// Any other experiment field, as `name=value` in TOML syntax.
        #[arg(long = "set", value_name = "NAME=VALUE")]
        overrides: Vec<String>,
    },
}

#[derive(Args)]
struct SamplingArgs {
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    w: Option<usize>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    top_p: Option<f64>,
    #[arg(long)]
    max_new_tokens: Option<usize>,
}

#[derive(Args)]
struct PromptArgs {
    /// `qa` or `continuation`.
    #[arg(long)]
    prompt_mode: Option<String>,
    #[arg(long)]
    prefix_fraction: Option<f64>,
}

#[derive(Args)]
struct QueryArgs {
    /// Suspect model.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Auxiliary model supplying entropies; defaults to the suspect.
    #[arg(long)]
    aux: Option<PathBuf>,
    /// Corpora the prompts are drawn from.
    #[arg(long = "corpus")]
    corpora: Vec<PathBuf>,
    #[command(flatten)]
    prompts: PromptArgs,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    token_budget: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    dedupe: Option<bool>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    w: Option<usize>,
    #[arg(long)]
    max_new_tokens: Option<usize>,
}

struct Ctx {
    cfg: FlatConfig,
    seed: u64,
    out: PathBuf,
}

impl Ctx {
    fn get<T: DeserializeOwned>(&self, key: &str, flag: Option<T>, default: T) -> anyhow::Result<T> {
        Ok(self.cfg.resolve(key, flag, default)?)
    }

    fn need<T: DeserializeOwned>(&self, key: &str, flag: Option<T>) -> anyhow::Result<T> {
        match flag {
            Some(v) => Ok(v),
            None => self.cfg.get(key)?.ok_or_else(|| anyhow!("--{} is required", key.replace('_', "-"))),
        }
    }

    /// Repeatable path flag; the config may hold one path or a list.
    fn paths(&self, key: &str, flag: Vec<PathBuf>) -> anyhow::Result<Vec<PathBuf>> {
        if !flag.is_empty() {
            return Ok(flag);
        }
        if let Ok(Some(list)) = self.cfg.get::<Vec<PathBuf>>(key) {
            return Ok(list);
        }
        Ok(self.cfg.get::<PathBuf>(key)?.into_iter().collect())
    }

    fn out_file(&self, name: &str) -> anyhow::Result<PathBuf> {
        fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        Ok(self.out.join(name))
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> anyhow::Result<PathBuf> {
        let path = self.out_file(name)?;
        fs::write(&path, serde_json::to_string_pretty(value)? + "\n")?;
        Ok(path)
    }

    fn params(&self, d: Option<usize>, w: Option<usize>) -> anyhow::Result<WatermarkParams> {
        let spec = ExperimentSpec::default();
        Ok(WatermarkParams {
            d: self.get("d", d, spec.d)?,
            w: self.get("w", w, spec.w)?,
            salt_with_position: false,
        })
    }

    fn sampler(&self, a: &SamplingArgs, stream: &str) -> anyhow::Result<SamplerConfig> {
        let p = self.params(a.d, a.w)?;
        let base = SamplerConfig::default();
        Ok(SamplerConfig {
            w: p.w,
            temperature: self.get("temperature", a.temperature, base.temperature)?,
            top_k: self.get("top_k", a.top_k, base.top_k)?,
            top_p: self.get("top_p", a.top_p, base.top_p)?,
            rng_seed: sub_seed(self.seed, stream, &[]),
            ..base.with_depth(p.d)
        })
    }

    fn max_new_tokens(&self, flag: Option<usize>) -> anyhow::Result<usize> {
        self.get("max_new_tokens", flag, ExperimentSpec::default().max_new_tokens)
    }

    fn prompt_mode(&self, a: &PromptArgs) -> anyhow::Result<(PromptMode, f64)> {
        let mode: String = self.get("prompt_mode", a.prompt_mode.clone(), "qa".into())?;
        let frac = self.get("prefix_fraction", a.prefix_fraction, radiomark::pipeline::prompts::DEFAULT_PREFIX_FRACTION)?;
        Ok((mode.parse()?, frac))
    }
}

fn load_corpus(path: &Path, mode: CorpusMode) -> anyhow::Result<Vec<CorpusRecord>> {
    let ing = ingest(path, mode).with_context(|| format!("reading corpus {}", path.display()))?;
    for w in &ing.warnings {
        eprintln!("warning: {w}");
    }
    for m in &ing.malformed {
        eprintln!("warning: {}:{}: {}", path.display(), m.line, m.reason);
    }
    Ok(ing.records)
}

fn load_model(path: &Path) -> anyhow::Result<NgramModel> {
    NgramModel::load(path).with_context(|| format!("loading model {}", path.display()))
}

fn load_key(path: &Path) -> anyhow::Result<WatermarkKey> {
    WatermarkKey::load(path).with_context(|| format!("loading key {}", path.display()))
}

fn flagged(r: &SplitTestResult) -> bool {
    r.is_flagged(FLAG_DEGENERATE) || r.is_flagged(FLAG_SMALL_SAMPLE)
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    let cfg = match &cli.config {
        Some(p) => FlatConfig::load(p).with_context(|| format!("reading config {}", p.display()))?,
        None => FlatConfig::default(),
    };
    let seed_flag = cli.seed;
    let ctx = Ctx {
        seed: cfg.resolve("seed", cli.seed, 0)?,
        out: cfg.resolve("out", cli.out, PathBuf::from("out"))?,
        cfg,
    };
    match cli.cmd {
        Cmd::Keygen { key_id } => {
            let id: String = ctx.get("key_id", key_id, "owner".into())?;
            let key = match seed_flag.or(ctx.cfg.get("seed")?) {
                Some(s) => {
                    use rand::SeedableRng;
                    eprintln!("warning: key derived from seed {s}; use only for reproducible experiments");
                    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(sub_seed(s, &format!("key/{id}"), &[]));
                    WatermarkKey::generate(&mut rng, id.clone())?
                }
                None => WatermarkKey::generate(&mut rand::rng(), id.clone())?,
            };
            let path = ctx.out_file(&format!("{id}.key"))?;
            key.save(&path)?;
            println!("{}", path.display());
        }
        Cmd::Synth { domain, target_tokens, lexicon_size, stream, shared_function_words } => {
            let base = SynthConfig::default();
            let sc = SynthConfig {
                domain: ctx.get("domain", domain, base.domain.clone())?,
                seed: ctx.seed,
                stream: ctx.get("stream", stream, 0)?,
                lexicon_size: ctx.get("lexicon_size", lexicon_size, base.lexicon_size)?,
                target_tokens: ctx.get("target_tokens", target_tokens, base.target_tokens)?,
                shared_function_words: ctx.get("shared_function_words", shared_function_words, false)?,
                ..base
            };
            let records = synth_corpus(&sc)?;
            let path = ctx.out_file(&format!("{}.jsonl", sc.domain))?;
            export(&records, &path)?;
            println!("{} ({} records)", path.display(), records.len());
        }
        Cmd::Train { corpora, name, max_vocab, order, add_k } => {
            let paths = ctx.paths("corpus", corpora)?;
            if paths.is_empty() {
                bail!("--corpus is required");
            }
            let mut all = Vec::new();
            for p in &paths {
                all.extend(load_corpus(p, CorpusMode::Plain)?);
            }
            let spec = ExperimentSpec::default();
            let tok = Tokenizer::build(
                all.iter().flat_map(|r| [r.prompt.as_str(), r.response.as_str()]),
                ctx.get("max_vocab", max_vocab, spec.max_vocab)?,
            );
            let mut ncfg = NgramConfig {
                order: ctx.get("order", order, spec.order)?,
                add_k: ctx.get("add_k", add_k, spec.add_k)?,
                ..NgramConfig::default()
            };
            if let Some(l) = ctx.cfg.get("lambdas")? {
                ncfg.lambdas = l;
            } else if ncfg.order != spec.order {
                ncfg.lambdas = vec![1.0 / ncfg.order as f64; ncfg.order];
            }
            let mut model = NgramModel::new(tok, ncfg)?;
            model.train(&training_sequences(&all, model.tokenizer()))?;
            let name: String = ctx.get("name", name, "model".into())?;
            let path = ctx.out_file(&format!("{name}.model"))?;
            model.save(&path)?;
            println!("{} (vocab {}, {} records)", path.display(), model.vocab_size(), all.len());
        }
        Cmd::Watermark { corpus, key, model, rho, sampling } => {
            let records = load_corpus(&ctx.need::<PathBuf>("corpus", corpus)?, CorpusMode::Qa)?;
            let key = load_key(&ctx.need::<PathBuf>("key", key)?)?;
            let model = load_model(&ctx.need::<PathBuf>("model", model)?)?;
            let rc = RewriteConfig {
                sampler: ctx.sampler(&sampling, "watermark")?,
                rho: ctx.get("rho", rho, 1.0)?,
                max_tokens: ctx.max_new_tokens(sampling.max_new_tokens)?,
                seed: ctx.seed,
            };
            let (out, manifest) = watermark_corpus(&records, &key, &model, &rc)?;
            let path = ctx.out_file("watermarked.jsonl")?;
            export(&out, &path)?;
            ctx.write_json("manifest.json", &manifest)?;
            println!(
                "{}: {} of {} rewritten, {} failed",
                path.display(),
                manifest.rewritten.len(),
                records.len(),
                manifest.failed.len()
            );
        }
        Cmd::Finetune { model, corpora, name, fresh } => {
            let base = load_model(&ctx.need::<PathBuf>("model", model)?)?;
            let mut m = if ctx.get("fresh", fresh, false)? { base.fresh() } else { base };
            let paths = ctx.paths("corpus", corpora)?;
            if paths.is_empty() {
                bail!("--corpus is required");
            }
            for p in &paths {
                let recs = load_corpus(p, CorpusMode::Plain)?;
                m.train(&training_sequences(&recs, m.tokenizer()))?;
            }
            let name: String = ctx.get("name", name, "finetuned".into())?;
            let path = ctx.out_file(&format!("{name}.model"))?;
            m.save(&path)?;
            println!("{}", path.display());
        }
        Cmd::Generate { model, corpus, key, count, prompts, sampling } => {
            let model = load_model(&ctx.need::<PathBuf>("model", model)?)?;
            let records = load_corpus(&ctx.need::<PathBuf>("corpus", corpus)?, CorpusMode::Plain)?;
            let (mode, frac) = ctx.prompt_mode(&prompts)?;
            let set = build_prompts(&records, model.tokenizer(), mode, frac)?;
            let count = ctx.get("count", count, set.prompts.len())?.min(set.prompts.len());
            let max_new = ctx.max_new_tokens(sampling.max_new_tokens)?;
            let key = match ctx.paths("key", key.into_iter().collect())?.first() {
                Some(p) => Some(load_key(p)?),
                None => None,
            };
            let tok = model.tokenizer();
            let path = ctx.out_file("generations.jsonl")?;
            let mut out = BufWriter::new(fs::File::create(&path)?);
            for (i, prompt) in set.prompts.iter().take(count).enumerate() {
                match &key {
                    Some(k) => {
                        let sc = SamplerConfig {
                            rng_seed: sub_seed(ctx.seed, "generate", &[i as u64]),
                            ..ctx.sampler(&sampling, "generate")?
                        };
                        let rec = generate_sequence(&model, prompt, k, &sc, max_new, &[EOS])?;
                        writeln!(out, "{}", rec.to_json_line(k.key_id(), &sc)?)?;
                    }
                    None => {
                        let shaping = Shaping::detection();
                        let g = generate_plain(&model, prompt, &shaping, max_new, &[EOS], sub_seed(ctx.seed, "generate", &[i as u64]))?;
                        let line = serde_json::json!({
                            "id": set.ids[i],
                            "prompt": tok.decode(prompt),
                            "response": tok.decode(&g),
                            "tokens": g,
                        });
                        writeln!(out, "{line}")?;
                    }
                }
            }
            out.flush()?;
            println!("{} ({count} generations)", path.display());
        }
        Cmd::Detect { query, key, emit_csv } => {
            let key = load_key(&ctx.need::<PathBuf>("key", key)?)?;
            let q = Query::prepare(&ctx, query)?;
            let report = q.prep.report(&q.outputs, &key, &q.cfg)?;
            if emit_csv || ctx.get("emit_csv", None, false)? {
                let weights = radiomark::wm::DepthWeights::new(q.cfg.params.d)?;
                let scored = q.prep.table.score(&q.outputs, &key, &q.cfg.params, &weights)?;
                let path = ctx.out_file("scored.csv")?;
                write_scored_csv(BufWriter::new(fs::File::create(&path)?), &scored)?;
            }
            let path = ctx.write_json("report.json", &report)?;
            println!(
                "{}: key {} N0={} |S|={} z={:.3} p={} {}",
                path.display(),
                report.key_id,
                report.n0,
                report.n_selected,
                report.z,
                report.p_value.map_or("-".into(), |p| format!("{p:.3e}")),
                if report.significant { "SIGNIFICANT" } else { "not significant" }
            );
            if report.low_power() {
                eprintln!("warning: LOW_POWER");
                return Ok(EXIT_LOW_POWER);
            }
        }
        Cmd::Attribute { query, keys } => {
            let paths = ctx.paths("key", keys)?;
            if paths.is_empty() {
                bail!("--key is required (repeat for each candidate)");
            }
            let keys = paths.iter().map(|p| load_key(p)).collect::<anyhow::Result<Vec<_>>>()?;
            let q = Query::prepare(&ctx, query)?;
            let aux = q.aux.as_ref().unwrap_or(&q.model);
            let report = attribute_outputs(&q.outputs, &keys, aux, &q.cfg)?;
            let path = ctx.write_json("attribution.json", &report)?;
            for r in &report.reports {
                println!(
                    "key {:<12} z={:>8.3} p={}",
                    r.key_id,
                    r.z,
                    r.p_value.map_or("-".into(), |p| format!("{p:.3e}"))
                );
            }
            println!("{}: {:?}", path.display(), report.attribution);
            if report.reports.iter().any(|r| r.low_power()) {
                return Ok(EXIT_LOW_POWER);
            }
        }
        Cmd::Baseline { method, model, members, nonmembers, mink_k, emit_csv } => {
            let method: String = ctx.get("method", method, "mink".into())?;
            let model = load_model(&ctx.need::<PathBuf>("model", model)?)?;
            let pos = load_corpus(&ctx.need::<PathBuf>("members", members)?, CorpusMode::Plain)?;
            let neg = load_corpus(&ctx.need::<PathBuf>("nonmembers", nonmembers)?, CorpusMode::Plain)?;
            let need_features = method == "ddi" || emit_csv || ctx.get("emit_csv", None, false)?;
            let features = if need_features {
                Some((sample_features(&model, &pos)?, sample_features(&model, &neg)?))
            } else {
                None
            };
            let result = match (method.as_str(), &features) {
                ("ddi", Some((fp, fn_))) => ddi_test(fp, fn_, ctx.seed)?,
                _ => {
                    let m: MiaMethod = method.parse()?;
                    mia_split_test_k(&model, &pos, &neg, m, ctx.get("mink_k", mink_k, MINK_FRACTION)?)?
                }
            };
            if let (true, Some((fp, fn_))) = (emit_csv, &features) {
                write_features_csv(ctx.out_file("features.csv")?, &[("members", fp), ("nonmembers", fn_)])?;
            }
            let path = ctx.write_json("baseline.json", &result)?;
            println!(
                "{}: {} t={} p={} flags={:?}",
                path.display(),
                result.method,
                result.statistic.map_or("-".into(), |t| format!("{t:.3}")),
                result.p_value.map_or("-".into(), |p| format!("{p:.3e}")),
                result.flags
            );
            if flagged(&result) {
                return Ok(EXIT_LOW_POWER);
            }
        }
        Cmd::Experiment { mode, seeds, q, token_budget, rho, threads, overrides } => {
            let mut file = FlatConfig::default();
            for k in ctx.cfg.keys() {
                if !matches!(k, "seed" | "out" | "config") {
                    file.insert(k, ctx.cfg.get::<toml::Value>(k)?.expect("listed key"));
                }
            }
            for o in &overrides {
                let (k, v) = o.split_once('=').ok_or_else(|| anyhow!("--set expects NAME=VALUE, got {o:?}"))?;
                let parsed = FlatConfig::parse(&format!("v = {v}"))
                    .or_else(|_| FlatConfig::parse(&format!("v = {:?}", v)))?;
                file.insert(k.trim(), parsed.get::<toml::Value>("v")?.expect("parsed"));
            }
            let mut spec: ExperimentSpec = file.to_struct()?;
            if let Some(m) = mode {
                spec.mode = m.parse::<ExperimentMode>()?;
            }
            if !seeds.is_empty() {
                spec.seeds = seeds;
            } else if let Some(s) = seed_flag {
                spec.seeds = vec![s];
            } else if let (None, Some(s)) = (file.get::<Vec<u64>>("seeds")?, ctx.cfg.get::<u64>("seed")?) {
                spec.seeds = vec![s];
            }
            spec.q = q.or(spec.q);
            spec.token_budget = token_budget.unwrap_or(spec.token_budget);
            spec.rho = rho.unwrap_or(spec.rho);
            spec.threads = threads.unwrap_or(spec.threads);
            spec.validate()?;
            let bundle = run_experiment(&spec, &ctx.out)?;
            print!("{}", summary_text(&bundle));
            println!("bundle written to {}", ctx.out.display());
            if bundle.runs().any(|r| r.report.low_power()) {
                return Ok(EXIT_LOW_POWER);
            }
        }
    }
    Ok(0)
}

/// Suspect outputs collected once, with entropies ready for scoring.
struct Query {
    model: NgramModel,
    aux: Option<NgramModel>,
    outputs: Vec<radiomark::detect::ModelOutput>,
    prep: Prepared,
    cfg: DetectConfig,
}

impl Query {
    fn prepare(ctx: &Ctx, a: QueryArgs) -> anyhow::Result<Self> {
        let model = load_model(&ctx.need::<PathBuf>("model", a.model)?)?;
        let aux = match a.aux.or(ctx.cfg.get("aux")?) {
            Some(p) => Some(load_model(&p)?),
            None => None,
        };
        let paths = ctx.paths("corpus", a.corpora)?;
        if paths.is_empty() {
            bail!("--corpus is required");
        }
        let (mode, frac) = ctx.prompt_mode(&a.prompts)?;
        let mut prompts = Vec::new();
        for p in &paths {
            let recs = load_corpus(p, CorpusMode::Plain)?;
            let set = build_prompts(&recs, model.tokenizer(), mode, frac)?;
            if set.skipped > 0 {
                eprintln!("warning: {}: {} records too short for continuation", p.display(), set.skipped);
            }
            prompts.extend(set.prompts);
        }
        let default_q = match mode {
            PromptMode::Qa => 40.0,
            PromptMode::Continuation => 10.0,
        };
        let spec = ExperimentSpec::default();
        let cfg = DetectConfig {
            q: ctx.get("q", a.q, default_q)?,
            token_budget: ctx.get("token_budget", a.token_budget, spec.token_budget)?,
            alpha: ctx.get("alpha", a.alpha, spec.alpha)?,
            dedupe: ctx.get("dedupe", a.dedupe, spec.dedupe)?,
            max_new_tokens: ctx.max_new_tokens(a.max_new_tokens)?,
            params: ctx.params(a.d, a.w)?,
            rng_seed: ctx.seed,
            ..DetectConfig::default()
        };
        let outputs = collect_outputs(&model, &prompts, &cfg)?;
        let prep = Prepared::new(&outputs, aux.as_ref().unwrap_or(&model))?;
        Ok(Self { model, aux, outputs, prep, cfg })
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INPUT)
        }
    }
}
