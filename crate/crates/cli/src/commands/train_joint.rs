//! `songvec train-joint`: audio-word metric learning over supervision
//! records joined with precomputed clip features.

use std::fs;
use std::path::PathBuf;

use clap::Args;
use songvec_core::embedding::WordEmbedding;
use songvec_core::features::read_features;
use songvec_core::joint::{read_supervision, save_checkpoint, train_joint, Checkpoint};

use crate::config::{require_exists, resolve_path};
use crate::manifest::{ensure_out_dir, Manifest};
use crate::{internal_error, CliResult, CommonArgs};

#[derive(Debug, Args)]
pub struct TrainJointArgs {
    #[command(flatten)]
    pub common: CommonArgs,

    /// Word embedding file written by `train-word`.
    #[arg(long)]
    pub embedding: Option<PathBuf>,

    /// Precomputed clip features (JSON Lines).
    #[arg(long)]
    pub features: Option<PathBuf>,

    /// Supervision records (JSON Lines), joined to features by clip_id.
    #[arg(long)]
    pub supervision: Option<PathBuf>,

    /// Tag supervision weight (0 disables the term).
    #[arg(long)]
    pub lambda_tag: Option<f64>,

    /// Artist supervision weight (0 disables the term).
    #[arg(long)]
    pub lambda_artist: Option<f64>,

    /// Track supervision weight (0 disables the term).
    #[arg(long)]
    pub lambda_track: Option<f64>,
}

pub fn run(args: TrainJointArgs) -> CliResult<()> {
    let config = args.common.load_config()?;
    let out = args.common.require_out()?.clone();
    let embedding_path = resolve_path(
        args.embedding.as_ref(),
        config.paths.embedding.as_ref(),
        "embedding",
    )?;
    let features_path = resolve_path(
        args.features.as_ref(),
        config.paths.features.as_ref(),
        "features",
    )?;
    let supervision_path = resolve_path(
        args.supervision.as_ref(),
        config.paths.supervision.as_ref(),
        "supervision",
    )?;
    require_exists(&embedding_path, "embedding")?;
    require_exists(&features_path, "features")?;
    require_exists(&supervision_path, "supervision")?;

    let mut joint_config = config.joint_effective();
    if let Some(l) = args.lambda_tag {
        joint_config.lambda_tag = l;
    }
    if let Some(l) = args.lambda_artist {
        joint_config.lambda_artist = l;
    }
    if let Some(l) = args.lambda_track {
        joint_config.lambda_track = l;
    }
    joint_config.validate()?;

    let embedding = WordEmbedding::load(&embedding_path)?;
    let clips = read_features(&features_path)?;
    let records = read_supervision(&supervision_path, &clips)?;

    let outcome = train_joint(&records, &embedding, &joint_config)?;

    ensure_out_dir(&out)?;
    let log_path = out.join("train_log.tsv");
    let mut log = String::from("epoch\tloss\n");
    for (epoch, loss) in outcome.epoch_loss.iter().enumerate() {
        log.push_str(&format!("{epoch}\t{loss:.12}\n"));
    }
    fs::write(&log_path, log)
        .map_err(|e| internal_error(format!("writing {}: {e}", log_path.display())))?;

    let checkpoint_path = out.join("checkpoint.json");
    save_checkpoint(
        &checkpoint_path,
        &Checkpoint {
            config: joint_config.clone(),
            audio: outcome.model.audio,
            semantic: outcome.model.semantic,
        },
    )?;

    let supervision_names: Vec<&str> = [
        ("Tag", joint_config.lambda_tag),
        ("Artist", joint_config.lambda_artist),
        ("Track", joint_config.lambda_track),
    ]
    .iter()
    .filter(|(_, l)| *l > 0.0)
    .map(|(n, _)| *n)
    .collect();

    let mut manifest = Manifest::new("train-joint", &config, &out);
    // The effective joint config (with flag overrides) travels in counts and
    // in the checkpoint itself; the manifest config echoes the file values.
    manifest.add_input(&embedding_path)?;
    manifest.add_input(&features_path)?;
    manifest.add_input(&supervision_path)?;
    manifest.add_output(&checkpoint_path);
    manifest.add_output(&log_path);
    manifest.count("records", records.len() as u64);
    manifest.count("epochs", u64::from(joint_config.epochs));
    manifest.count("supervision_tag", (joint_config.lambda_tag > 0.0) as u64);
    manifest.count(
        "supervision_artist",
        (joint_config.lambda_artist > 0.0) as u64,
    );
    manifest.count("supervision_track", (joint_config.lambda_track > 0.0) as u64);
    let manifest_path = manifest.write()?;

    println!(
        "joint model trained on {} records with {} supervision; final loss {:.6} -> {}",
        records.len(),
        supervision_names.join("+"),
        outcome.epoch_loss.last().copied().unwrap_or(f64::NAN),
        manifest_path.display()
    );
    Ok(())
}
