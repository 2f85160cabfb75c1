//! `songvec build-corpus`: vocabulary + tokenized shard files.
//!
//! In Static shuffle mode the music paragraphs are assembled and shuffled
//! here, once, and written as plain token lines; reruns with the same seed
//! are byte-identical. In PerEpoch mode the music documents are written as
//! normalized JSON Lines so the trainer can reshuffle them every epoch.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::Args;
use serde_json::json;
use songvec_core::corpus::{
    assemble_music_paragraph, build_vocabulary, read_general_corpus, read_music_corpus,
    MusicDocument, ShuffleMode,
};
use songvec_core::rng::stream_rng;

use crate::config::require_exists;
use crate::manifest::{ensure_out_dir, Manifest};
use crate::{internal_error, user_error, CliResult, CommonArgs};

#[derive(Debug, Args)]
pub struct BuildCorpusArgs {
    #[command(flatten)]
    pub common: CommonArgs,

    /// General corpus: plain UTF-8 text, one document per line.
    #[arg(long)]
    pub general: Option<PathBuf>,

    /// Music corpus: JSON Lines, one object per track.
    #[arg(long)]
    pub music: Option<PathBuf>,
}

fn shard_writers(dir: &Path, stem: &str, ext: &str, n: usize) -> CliResult<Vec<BufWriter<File>>> {
    (0..n)
        .map(|i| {
            let path = dir.join(format!("{stem}-{i:03}.{ext}"));
            File::create(&path)
                .map(BufWriter::new)
                .map_err(|e| internal_error(format!("cannot create {}: {e}", path.display())))
        })
        .collect()
}

pub fn run(args: BuildCorpusArgs) -> CliResult<()> {
    let config = args.common.load_config()?;
    config.corpus.validate()?;
    let out = args.common.require_out()?.clone();

    let general_path = args
        .general
        .as_ref()
        .or(config.paths.general_corpus.as_ref())
        .cloned();
    let music_path = args
        .music
        .as_ref()
        .or(config.paths.music_corpus.as_ref())
        .cloned();
    if general_path.is_none() && music_path.is_none() {
        return Err(user_error(
            "no corpus given: pass --general and/or --music (or set them in the config)",
        ));
    }

    let general = match &general_path {
        Some(path) => {
            require_exists(path, "general corpus")?;
            read_general_corpus(path)?
        }
        None => Vec::new(),
    };
    let music: Vec<MusicDocument> = match &music_path {
        Some(path) => {
            require_exists(path, "music corpus")?;
            read_music_corpus(path)?
        }
        None => Vec::new(),
    };

    let vocab = build_vocabulary(general.iter().cloned(), music.iter(), &config.corpus)?;

    ensure_out_dir(&out)?;
    let shards_dir = out.join("shards");
    ensure_out_dir(&shards_dir)?;
    let vocab_path = out.join("vocab.tsv");
    vocab.write_tsv(&vocab_path)?;

    let mut manifest = Manifest::new("build-corpus", &config, &out);
    if let Some(p) = &general_path {
        manifest.add_input(p)?;
    }
    if let Some(p) = &music_path {
        manifest.add_input(p)?;
    }
    manifest.add_output(&vocab_path);

    let shards = config.workers.max(1);
    let corpus_seed = config.corpus_seed();
    let mut general_tokens = 0u64;
    if !general.is_empty() {
        let mut writers = shard_writers(&shards_dir, "general", "txt", shards)?;
        for (i, doc) in general.iter().enumerate() {
            general_tokens += doc.len() as u64;
            writeln!(writers[i % shards], "{}", doc.join(" "))
                .map_err(|e| internal_error(format!("writing general shard: {e}")))?;
        }
        for (i, mut w) in writers.into_iter().enumerate() {
            w.flush()
                .map_err(|e| internal_error(format!("flushing general shard {i}: {e}")))?;
            manifest.add_output(&shards_dir.join(format!("general-{i:03}.txt")));
        }
    }

    let mut review_tokens = 0u64;
    let mut tag_entries = 0u64;
    if !music.is_empty() {
        for doc in &music {
            review_tokens += doc.review_sentences.iter().map(|s| s.len() as u64).sum::<u64>();
            tag_entries += doc.tags.len() as u64;
        }
        match config.corpus.shuffle_mode {
            ShuffleMode::Static => {
                let mut writers = shard_writers(&shards_dir, "music", "txt", shards)?;
                for (i, doc) in music.iter().enumerate() {
                    let mut rng = stream_rng(corpus_seed, "paragraph", &[0, i as u64]);
                    let paragraph = assemble_music_paragraph(doc, &config.corpus, &mut rng);
                    writeln!(writers[i % shards], "{}", paragraph.join(" "))
                        .map_err(|e| internal_error(format!("writing music shard: {e}")))?;
                }
                for (i, mut w) in writers.into_iter().enumerate() {
                    w.flush()
                        .map_err(|e| internal_error(format!("flushing music shard {i}: {e}")))?;
                    manifest.add_output(&shards_dir.join(format!("music-{i:03}.txt")));
                }
            }
            ShuffleMode::PerEpoch => {
                let mut writers = shard_writers(&shards_dir, "music", "jsonl", shards)?;
                for (i, doc) in music.iter().enumerate() {
                    // Normalized form: tokenized sentences re-joined so the
                    // shard schema matches the input schema.
                    let line = json!({
                        "track_id": doc.track_id,
                        "artist_id": doc.artist_id,
                        "tags": doc.tags,
                        "review_sentences": doc
                            .review_sentences
                            .iter()
                            .map(|s| s.join(" "))
                            .collect::<Vec<_>>(),
                    });
                    writeln!(writers[i % shards], "{line}")
                        .map_err(|e| internal_error(format!("writing music shard: {e}")))?;
                }
                for (i, mut w) in writers.into_iter().enumerate() {
                    w.flush()
                        .map_err(|e| internal_error(format!("flushing music shard {i}: {e}")))?;
                    manifest.add_output(&shards_dir.join(format!("music-{i:03}.jsonl")));
                }
            }
        }
    }

    // Trainer-facing record of how the shards were produced.
    let corpus_json = out.join("corpus.json");
    fs::write(
        &corpus_json,
        serde_json::to_string_pretty(&json!({
            "corpus": config.corpus,
            "corpus_seed": corpus_seed,
            "shards": shards,
        }))
        .map_err(internal_error)?
            + "\n",
    )
    .map_err(|e| internal_error(format!("writing corpus.json: {e}")))?;
    manifest.add_output(&corpus_json);

    manifest.count("general_docs", general.len() as u64);
    manifest.count("general_tokens", general_tokens);
    manifest.count("music_docs", music.len() as u64);
    manifest.count("review_tokens", review_tokens);
    manifest.count("tag_annotations", tag_entries);
    manifest.count(
        "total_tokens",
        general_tokens + review_tokens + tag_entries + 2 * music.len() as u64,
    );
    manifest.count("vocab_size", vocab.len() as u64);
    let manifest_path = manifest.write()?;

    println!(
        "corpus built: {} vocabulary entries, {} general docs, {} music docs -> {}",
        vocab.len(),
        general.len(),
        music.len(),
        manifest_path.display()
    );
    Ok(())
}
