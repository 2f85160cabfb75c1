//! `songvec query`: rank vocabulary tokens (or, with a joint checkpoint,
//! audio tracks) against a multi-word text query by cosine similarity.
//!
//! Multi-word queries use the mean of the in-vocabulary word vectors;
//! out-of-vocabulary words are reported on stderr and skipped.

use std::collections::{BTreeMap, HashSet};
use std::path::PathBuf;

use clap::Args;
use serde_json::json;
use songvec_core::corpus::{tokenize, TokenKind};
use songvec_core::embedding::WordEmbedding;
use songvec_core::features::read_features;
use songvec_core::joint::{load_checkpoint, similarity, track_embedding};

use crate::config::{require_exists, resolve_path};
use crate::manifest::{ensure_out_dir, write_json, Manifest};
use crate::{user_error, CliResult, CommonArgs};

use super::eval_cmd::RankedItem;

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[command(flatten)]
    pub common: CommonArgs,

    /// Word embedding file.
    #[arg(long)]
    pub embedding: Option<PathBuf>,

    /// Joint checkpoint: rank tracks by audio embedding instead of tokens.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,

    /// Clip features (required with --checkpoint).
    #[arg(long)]
    pub features: Option<PathBuf>,

    /// Number of results.
    #[arg(long, short, default_value_t = 10)]
    pub k: usize,

    /// Restrict candidates to these kinds (general, review, tag, artist,
    /// track); repeatable.
    #[arg(long = "kind", value_name = "KIND")]
    pub kinds: Vec<String>,

    /// Query words; multi-word queries are averaged.
    #[arg(required = true)]
    pub words: Vec<String>,
}

pub fn run(args: QueryArgs) -> CliResult<()> {
    let config = args.common.load_config()?;
    let embedding_path = resolve_path(
        args.embedding.as_ref(),
        config.paths.embedding.as_ref(),
        "embedding",
    )?;
    require_exists(&embedding_path, "embedding")?;
    if args.k == 0 {
        return Err(user_error("-k must be >= 1"));
    }

    let kind_filter: Option<HashSet<TokenKind>> = if args.kinds.is_empty() {
        None
    } else {
        Some(
            args.kinds
                .iter()
                .map(|k| {
                    TokenKind::parse(k).ok_or_else(|| {
                        user_error(format!(
                            "unknown kind {k:?} (expected general, review, tag, artist, track)"
                        ))
                    })
                })
                .collect::<CliResult<_>>()?,
        )
    };

    let embedding = WordEmbedding::load(&embedding_path)?;
    let tokens: Vec<String> = args.words.iter().flat_map(|w| tokenize(w)).collect();
    let (query, skipped) = embedding.query_vector(&tokens)?;
    if !skipped.is_empty() {
        eprintln!("skipped out-of-vocabulary tokens: {}", skipped.join(", "));
    }

    let results: Vec<RankedItem> = match (&args.checkpoint, &args.features) {
        (Some(ck_path), Some(ft_path)) => {
            require_exists(ck_path, "checkpoint")?;
            require_exists(ft_path, "features")?;
            let checkpoint = load_checkpoint(ck_path)?;
            if checkpoint.semantic.word_dim != embedding.dim() {
                return Err(user_error(format!(
                    "checkpoint was trained on {}-dim word vectors, embedding has {}",
                    checkpoint.semantic.word_dim,
                    embedding.dim()
                )));
            }
            let query64: Vec<f64> = query.iter().map(|&v| f64::from(v)).collect();
            let prototype = checkpoint.semantic.forward_word_vector(&query64);
            let mut by_track: BTreeMap<String, Vec<songvec_core::features::ClipFeatures>> =
                BTreeMap::new();
            for clip in read_features(ft_path)? {
                by_track.entry(clip.track_id.clone()).or_default().push(clip);
            }
            let mut scored: Vec<RankedItem> = Vec::with_capacity(by_track.len());
            for (track, clips) in &by_track {
                let vec = track_embedding(&checkpoint.audio, clips)?;
                scored.push(RankedItem {
                    token: track.clone(),
                    kind: "track".into(),
                    score: similarity(&vec, &prototype)?,
                });
            }
            scored.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.token.cmp(&b.token)));
            scored.truncate(args.k);
            scored
        }
        (None, None) => embedding
            .nearest(&query, args.k, kind_filter.as_ref())?
            .into_iter()
            .map(|(id, score)| RankedItem {
                token: embedding.vocab().token(id).to_string(),
                kind: embedding.vocab().kind(id).as_str().to_string(),
                score,
            })
            .collect(),
        _ => {
            return Err(user_error(
                "--checkpoint and --features must be given together",
            ))
        }
    };

    for item in &results {
        println!("{}\t{}\t{:.6}", item.token, item.kind, item.score);
    }

    if let Some(out) = &args.common.out {
        ensure_out_dir(out)?;
        let results_path = out.join("query_results.json");
        write_json(
            &results_path,
            &json!({
                "query": tokens,
                "skipped": skipped,
                "k": args.k,
                "results": results,
            }),
        )?;
        let mut manifest = Manifest::new("query", &config, out);
        manifest.add_input(&embedding_path)?;
        if let Some(p) = &args.checkpoint {
            manifest.add_input(p)?;
        }
        if let Some(p) = &args.features {
            manifest.add_input(p)?;
        }
        manifest.add_output(&results_path);
        manifest.write()?;
    }
    Ok(())
}
