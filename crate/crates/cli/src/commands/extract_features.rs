//! `songvec extract-features`: WAV files -> random 3-second excerpts ->
//! log-mel spectrograms -> per-bin mean/std clip vectors.
//!
//! Input is a clip manifest (JSON Lines of `{clip_id, track_id, path}`);
//! output is the precomputed-feature file the joint trainer and evaluators
//! consume. Excerpt offsets derive from the global seed, one stream per
//! clip, so reruns are byte-identical.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use clap::Args;
use serde::Deserialize;
use songvec_core::features::{
    excerpt, log_mel_spectrogram, summarize, write_features, ClipFeatures,
};
use songvec_core::rng::{derive_seed, stream_rng};

use crate::config::require_exists;
use crate::manifest::{ensure_out_dir, Manifest};
use crate::{user_error, CliResult, CommonArgs};

#[derive(Debug, Args)]
pub struct ExtractFeaturesArgs {
    #[command(flatten)]
    pub common: CommonArgs,

    /// Clip manifest: JSON Lines of {clip_id, track_id, path}.
    #[arg(long)]
    pub clips: PathBuf,
}

#[derive(Deserialize)]
struct ClipRow {
    clip_id: String,
    track_id: String,
    path: PathBuf,
}

fn read_clip_manifest(path: &Path) -> CliResult<Vec<ClipRow>> {
    let file =
        File::open(path).map_err(|e| user_error(format!("cannot read {}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| user_error(format!("{}: {e}", path.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: ClipRow = serde_json::from_str(&line).map_err(|e| {
            user_error(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(user_error(format!("{}: no clips listed", path.display())));
    }
    Ok(rows)
}

pub fn run(args: ExtractFeaturesArgs) -> CliResult<()> {
    let config = args.common.load_config()?;
    config.mel.validate()?;
    let out = args.common.require_out()?.clone();
    require_exists(&args.clips, "clip manifest")?;
    let rows = read_clip_manifest(&args.clips)?;

    let features_seed = derive_seed(config.seed, "features", &[]);
    let mut clips = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        require_exists(&row.path, "wav file")?;
        let pcm = songvec_core::features::load_wav(&row.path, config.mel.sample_rate)?;
        let mut rng = stream_rng(features_seed, "excerpt", &[i as u64]);
        let slice = excerpt(
            &pcm,
            config.mel.excerpt_seconds,
            config.mel.sample_rate,
            &mut rng,
        )?;
        let spec = log_mel_spectrogram(&slice, &config.mel)?;
        clips.push(ClipFeatures {
            clip_id: row.clip_id.clone(),
            track_id: row.track_id.clone(),
            vector: summarize(&spec)?,
        });
    }

    ensure_out_dir(&out)?;
    let features_path = out.join("features.jsonl");
    write_features(&features_path, &clips)?;

    let mut manifest = Manifest::new("extract-features", &config, &out);
    manifest.add_input(&args.clips)?;
    for row in &rows {
        manifest.add_input(&row.path)?;
    }
    manifest.add_output(&features_path);
    manifest.count("clips", clips.len() as u64);
    manifest.count("vector_len", clips[0].vector.len() as u64);
    let manifest_path = manifest.write()?;

    println!(
        "extracted {} clip vectors of length {} -> {}",
        clips.len(),
        clips[0].vector.len(),
        manifest_path.display()
    );
    Ok(())
}
