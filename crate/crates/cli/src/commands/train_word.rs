//! `songvec train-word`: skip-gram training over a built corpus directory.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::Deserialize;
use songvec_core::corpus::{
    read_music_corpus, CorpusConfig, ShuffleMode, TrainingCorpus, Vocabulary,
};
use songvec_core::embedding::WordEmbedding;
use songvec_core::sgns::{train, NegativeSampler};

use crate::config::{require_exists, resolve_path};
use crate::manifest::{ensure_out_dir, sorted_files, Manifest};
use crate::{user_error, CliResult, CommonArgs};

#[derive(Debug, Args)]
pub struct TrainWordArgs {
    #[command(flatten)]
    pub common: CommonArgs,

    /// Corpus directory produced by `build-corpus`.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
}

/// The shard-production record written by `build-corpus`.
#[derive(Deserialize)]
struct CorpusRecord {
    corpus: CorpusConfig,
    #[allow(dead_code)]
    corpus_seed: u64,
    #[allow(dead_code)]
    shards: usize,
}

/// Shard lines are already tokenized (and IDs are verbatim codes), so
/// loading only splits on whitespace and must not lowercase again.
fn split_pretokenized(line: &str) -> Vec<String> {
    line.split_whitespace().map(str::to_string).collect()
}

fn shard_paths(dir: &Path, stem: &str, ext: &str) -> CliResult<Vec<PathBuf>> {
    Ok(sorted_files(dir)?
        .into_iter()
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with(stem) && n.ends_with(ext))
        })
        .collect())
}

pub fn run(args: TrainWordArgs) -> CliResult<()> {
    let config = args.common.load_config()?;
    let out = args.common.require_out()?.clone();
    let corpus_dir = resolve_path(args.corpus.as_ref(), config.paths.corpus_dir.as_ref(), "corpus dir")?;
    require_exists(&corpus_dir, "corpus dir")?;

    let corpus_json = corpus_dir.join("corpus.json");
    require_exists(&corpus_json, "corpus.json (built corpus record)")?;
    let record: CorpusRecord = serde_json::from_str(
        &fs::read_to_string(&corpus_json)
            .map_err(|e| user_error(format!("cannot read {}: {e}", corpus_json.display())))?,
    )
    .map_err(|e| user_error(format!("invalid {}: {e}", corpus_json.display())))?;
    let corpus_config = record.corpus;

    let vocab_path = corpus_dir.join("vocab.tsv");
    require_exists(&vocab_path, "vocabulary")?;
    let vocab = Vocabulary::read_tsv(&vocab_path)?;

    let shards_dir = corpus_dir.join("shards");
    require_exists(&shards_dir, "shards directory")?;
    let mut sentences: Vec<Vec<String>> = Vec::new();
    for path in shard_paths(&shards_dir, "general", ".txt")? {
        let text = fs::read_to_string(&path)
            .map_err(|e| user_error(format!("cannot read {}: {e}", path.display())))?;
        sentences.extend(text.lines().map(split_pretokenized).filter(|s| !s.is_empty()));
    }

    // Randomness at training time derives from the training seed, not the
    // build seed, so PerEpoch augmentation varies with --seed.
    let corpus_seed = config.corpus_seed();
    let corpus = match corpus_config.shuffle_mode {
        ShuffleMode::Static => {
            for path in shard_paths(&shards_dir, "music", ".txt")? {
                let text = fs::read_to_string(&path)
                    .map_err(|e| user_error(format!("cannot read {}: {e}", path.display())))?;
                sentences.extend(text.lines().map(split_pretokenized).filter(|s| !s.is_empty()));
            }
            let ids = sentences.iter().map(|s| vocab.map_sentence(s)).collect();
            TrainingCorpus::from_sentences(vocab.clone(), ids, corpus_config.clone(), corpus_seed)?
        }
        ShuffleMode::PerEpoch => {
            let mut docs = Vec::new();
            for path in shard_paths(&shards_dir, "music", ".jsonl")? {
                docs.extend(read_music_corpus(&path)?);
            }
            let general = std::mem::take(&mut sentences);
            TrainingCorpus::new(vocab.clone(), general, &docs, corpus_config.clone(), corpus_seed)?
        }
    };

    let sgns_config = config.sgns_effective();
    sgns_config.validate()?;
    let sampler = NegativeSampler::new(&vocab, sgns_config.ns_exponent)?;
    let outcome = train(&corpus, &sampler, vocab.len(), &sgns_config)?;
    for (epoch, loss) in outcome.epoch_loss.iter().enumerate() {
        println!("epoch {epoch} loss {loss:.6}");
    }

    ensure_out_dir(&out)?;
    let embedding_path = out.join("embedding.txt");
    let embedding = WordEmbedding::from_training(vocab, outcome.model)?;
    embedding.save(&embedding_path)?;

    let mut manifest = Manifest::new("train-word", &config, &out);
    manifest.add_input_dir(&corpus_dir)?;
    manifest.add_output(&embedding_path);
    manifest.add_output(&WordEmbedding::sidecar_path(&embedding_path));
    manifest.count("vocab_size", embedding.vocab().len() as u64);
    manifest.count("dim", embedding.dim() as u64);
    manifest.count("pairs_processed", outcome.pairs_processed);
    manifest.count("epochs", u64::from(sgns_config.epochs));
    manifest.count("window_size", corpus_config.window_size as u64);
    manifest.count("negatives", sgns_config.negatives as u64);
    let manifest_path = manifest.write()?;

    println!(
        "embedding trained: |V| = {}, d = {} -> {}",
        embedding.vocab().len(),
        embedding.dim(),
        manifest_path.display()
    );
    Ok(())
}
