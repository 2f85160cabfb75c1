//! `songvec eval`: the four evaluation tasks plus the zero-shot protocol.
//!
//! Tag/track scores come either from the word embedding alone (tag vector
//! vs track-ID vector) or, when `--checkpoint` and `--features` are given,
//! from the joint model (semantic prototype vs track-level audio embedding).
//! Reports are deterministic: rerunning a command writes byte-identical
//! JSON.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use clap::{Args, Subcommand};
use serde::Serialize;
use serde_json::json;
use songvec_core::embedding::{cosine_similarity, WordEmbedding};
use songvec_core::eval::{
    query_by_tag_eval, query_by_track_eval, read_annotations, read_tag_metadata, tag_rank_prediction,
    tagging_eval, zero_shot_protocol, Annotations, EvalDataset,
};
use songvec_core::features::read_features;
use songvec_core::joint::{load_checkpoint, track_embedding, Checkpoint};
use songvec_core::{Error as CoreError, Result as CoreResult};

use crate::config::{require_exists, resolve_path};
use crate::manifest::{ensure_out_dir, write_json, Manifest};
use crate::{user_error, CliResult, CommonArgs};

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(subcommand)]
    pub task: EvalTask,
}

#[derive(Debug, Args)]
pub struct EvalCommon {
    #[command(flatten)]
    pub common: CommonArgs,

    /// Word embedding file.
    #[arg(long)]
    pub embedding: Option<PathBuf>,

    /// Annotation file (JSON Lines of {track_id, artist_id, tags, split}).
    #[arg(long)]
    pub annotations: Option<PathBuf>,

    /// Tag metadata TSV (tag, category, zs_split).
    #[arg(long)]
    pub tags: Option<PathBuf>,

    /// Joint model checkpoint; switches scoring to the joint space.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,

    /// Clip features (required with --checkpoint).
    #[arg(long)]
    pub features: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum EvalTask {
    /// Tag-to-tag nDCG@k against co-occurrence, in four category directions.
    TagRank {
        #[command(flatten)]
        common: EvalCommon,
        /// Rank cutoff.
        #[arg(long, default_value_t = 30)]
        k: usize,
    },
    /// Per-tag ROC-AUC for retrieving tracks from a tag.
    QueryByTag {
        #[command(flatten)]
        common: EvalCommon,
    },
    /// Recall@k for retrieving tracks similar to a query track.
    QueryByTrack {
        #[command(flatten)]
        common: EvalCommon,
        /// Comma-separated recall cutoffs.
        #[arg(long, default_value = "1,2,4,8")]
        ks: String,
    },
    /// Per-track ROC-AUC over the tag set (requires the joint model).
    Tagging {
        #[command(flatten)]
        common: EvalCommon,
    },
    /// Generalized zero-shot split: retrieval on unseen tags, tagging on
    /// test tracks with all tags (requires the joint model).
    ZeroShot {
        #[command(flatten)]
        common: EvalCommon,
    },
}

fn conventions() -> serde_json::Value {
    json!({
        "ndcg_gain": "linear rel/log2(i+1)",
        "auc_ties": "midrank (exact Mann-Whitney)",
        "undefined_metrics": "queries excluded and counted",
        "tie_break": "ascending token id",
    })
}

struct EvalInputs {
    config: crate::config::RunConfig,
    out: PathBuf,
    embedding: WordEmbedding,
    embedding_path: PathBuf,
    annotations_path: PathBuf,
    records: Vec<songvec_core::eval::AnnotationRecord>,
    annotations: Annotations,
    tag_metadata_path: Option<PathBuf>,
    tag_metadata: Option<Vec<songvec_core::eval::TagMetadata>>,
    checkpoint_path: Option<PathBuf>,
    features_path: Option<PathBuf>,
    joint: Option<JointScorer>,
}

/// Prototype and track-level audio vectors under a trained joint model.
struct JointScorer {
    prototypes: BTreeMap<String, Vec<f64>>,
    track_vecs: BTreeMap<String, Vec<f64>>,
    /// Tracks present in annotations but absent from the feature file.
    tracks_without_audio: Vec<String>,
}

impl JointScorer {
    fn build(
        checkpoint: &Checkpoint,
        emb: &WordEmbedding,
        features_path: &Path,
        annotations: &Annotations,
        tags: &[String],
    ) -> CliResult<Self> {
        let clips = read_features(features_path)?;
        let mut by_track: BTreeMap<String, Vec<songvec_core::features::ClipFeatures>> =
            BTreeMap::new();
        for clip in clips {
            by_track.entry(clip.track_id.clone()).or_default().push(clip);
        }
        let mut track_vecs = BTreeMap::new();
        let mut tracks_without_audio = Vec::new();
        for track in annotations.keys() {
            match by_track.get(track) {
                Some(clips) => {
                    track_vecs.insert(track.clone(), track_embedding(&checkpoint.audio, clips)?);
                }
                None => tracks_without_audio.push(track.clone()),
            }
        }
        let mut prototypes = BTreeMap::new();
        for tag in tags {
            prototypes.insert(
                tag.clone(),
                songvec_core::joint::encode_prototype(&checkpoint.semantic, emb, tag)?,
            );
        }
        Ok(JointScorer {
            prototypes,
            track_vecs,
            tracks_without_audio,
        })
    }

    fn score(&self, tag: &str, track: &str) -> CoreResult<f64> {
        let p = self
            .prototypes
            .get(tag)
            .ok_or_else(|| CoreError::OovTokens(vec![tag.to_string()]))?;
        let a = self
            .track_vecs
            .get(track)
            .ok_or(CoreError::EmptyCandidates)?;
        songvec_core::joint::similarity(a, p)
    }

    fn track_sim(&self, a: &str, b: &str) -> CoreResult<f64> {
        match (self.track_vecs.get(a), self.track_vecs.get(b)) {
            (Some(va), Some(vb)) => songvec_core::joint::similarity(va, vb),
            _ => Err(CoreError::EmptyCandidates),
        }
    }
}

fn load_inputs(common: &EvalCommon, need_tags: bool, need_joint: bool) -> CliResult<EvalInputs> {
    let config = common.common.load_config()?;
    let out = common.common.require_out()?.clone();
    let embedding_path = resolve_path(
        common.embedding.as_ref(),
        config.paths.embedding.as_ref(),
        "embedding",
    )?;
    require_exists(&embedding_path, "embedding")?;
    let annotations_path = resolve_path(
        common.annotations.as_ref(),
        config.paths.annotations.as_ref(),
        "annotations",
    )?;
    require_exists(&annotations_path, "annotations")?;

    let tag_metadata_path = common
        .tags
        .as_ref()
        .or(config.paths.tag_metadata.as_ref())
        .cloned();
    if need_tags && tag_metadata_path.is_none() {
        return Err(user_error(
            "this task needs the tag metadata TSV: pass --tags or set paths.tag_metadata",
        ));
    }
    let tag_metadata = match &tag_metadata_path {
        Some(path) => {
            require_exists(path, "tag metadata")?;
            Some(read_tag_metadata(path)?)
        }
        None => None,
    };

    let checkpoint_path = common
        .checkpoint
        .as_ref()
        .or(config.paths.checkpoint.as_ref())
        .cloned();
    let features_path = common
        .features
        .as_ref()
        .or(config.paths.features.as_ref())
        .cloned();
    if need_joint && checkpoint_path.is_none() {
        return Err(user_error(
            "this task scores audio: pass --checkpoint and --features",
        ));
    }
    if checkpoint_path.is_some() != features_path.is_some() {
        return Err(user_error(
            "--checkpoint and --features must be given together",
        ));
    }

    let embedding = WordEmbedding::load(&embedding_path)?;
    let records = read_annotations(&annotations_path)?;
    let mut annotations: Annotations = BTreeMap::new();
    for rec in &records {
        annotations
            .entry(rec.track_id.clone())
            .or_default()
            .extend(rec.tags.iter().cloned());
    }

    Ok(EvalInputs {
        config,
        out,
        embedding,
        embedding_path,
        annotations_path,
        records,
        annotations,
        tag_metadata_path,
        tag_metadata,
        checkpoint_path,
        features_path,
        joint: None,
    })
}

impl EvalInputs {
    /// Annotated tags present in the embedding vocabulary, plus the skipped
    /// remainder.
    fn vocab_tags(&self) -> (Vec<String>, Vec<String>) {
        let all: BTreeSet<String> = self
            .annotations
            .values()
            .flat_map(|t| t.iter().cloned())
            .collect();
        all.into_iter()
            .partition(|t| self.embedding.vocab().id(t).is_some())
    }

    /// Annotated tracks present in the embedding vocabulary.
    fn vocab_tracks(&self) -> (Vec<String>, Vec<String>) {
        self.annotations
            .keys()
            .cloned()
            .partition(|t| self.embedding.vocab().id(t).is_some())
    }

    fn load_joint(&mut self, tags: &[String]) -> CliResult<()> {
        let (Some(ck_path), Some(ft_path)) = (&self.checkpoint_path, &self.features_path) else {
            return Ok(());
        };
        require_exists(ck_path, "checkpoint")?;
        require_exists(ft_path, "features")?;
        let checkpoint = load_checkpoint(ck_path)?;
        self.joint = Some(JointScorer::build(
            &checkpoint,
            &self.embedding,
            ft_path,
            &self.annotations,
            tags,
        )?);
        Ok(())
    }

    fn scoring_name(&self) -> &'static str {
        if self.joint.is_some() {
            "joint"
        } else {
            "word-embedding"
        }
    }

    fn word_score(&self, tag: &str, track: &str) -> CoreResult<f64> {
        let tv = self
            .embedding
            .vector_of(tag)
            .ok_or_else(|| CoreError::OovTokens(vec![tag.to_string()]))?;
        let rv = self
            .embedding
            .vector_of(track)
            .ok_or_else(|| CoreError::OovTokens(vec![track.to_string()]))?;
        cosine_similarity(tv, rv)
    }

    fn manifest(&self, command: &'static str, report_path: &Path) -> CliResult<()> {
        let mut manifest = Manifest::new(command, &self.config, &self.out);
        manifest.add_input(&self.embedding_path)?;
        manifest.add_input(&self.annotations_path)?;
        if let Some(p) = &self.tag_metadata_path {
            manifest.add_input(p)?;
        }
        if let Some(p) = &self.checkpoint_path {
            manifest.add_input(p)?;
        }
        if let Some(p) = &self.features_path {
            manifest.add_input(p)?;
        }
        manifest.add_output(report_path);
        manifest.write()?;
        Ok(())
    }
}

#[derive(Serialize)]
struct TaskReport<'a, T: Serialize> {
    task: &'static str,
    scoring: &'static str,
    conventions: serde_json::Value,
    config: &'a crate::config::RunConfig,
    skipped_tags: Vec<String>,
    skipped_tracks: Vec<String>,
    #[serde(flatten)]
    body: T,
}

fn finish<T: Serialize>(inputs: &EvalInputs, command: &'static str, report: &T) -> CliResult<()> {
    ensure_out_dir(&inputs.out)?;
    let report_path = inputs.out.join("report.json");
    write_json(&report_path, report)?;
    inputs.manifest(command, &report_path)?;
    println!("report written to {}", report_path.display());
    Ok(())
}

pub fn run(args: EvalArgs) -> CliResult<()> {
    match args.task {
        EvalTask::TagRank { common, k } => {
            let inputs = load_inputs(&common, true, false)?;
            let categories: BTreeMap<String, songvec_core::corpus::TagCategory> = inputs
                .tag_metadata
                .as_ref()
                .expect("tag metadata required")
                .iter()
                .map(|t| (t.tag.clone(), t.category))
                .collect();
            let report =
                tag_rank_prediction(&inputs.embedding, &inputs.annotations, &categories, k)?;
            let (_, skipped_tags) = inputs.vocab_tags();
            let body = TaskReport {
                config: &inputs.config,
                task: "tag-rank",
                scoring: "word-embedding",
                conventions: conventions(),
                skipped_tags,
                skipped_tracks: Vec::new(),
                body: json!({ "average": report.average, "k": report.k, "directions": report.directions }),
            };
            finish(&inputs, "eval tag-rank", &body)
        }
        EvalTask::QueryByTag { common } => {
            let mut inputs = load_inputs(&common, false, false)?;
            let (tags, mut skipped_tags) = inputs.vocab_tags();
            inputs.load_joint(&tags)?;
            let (report, skipped_tracks) = match &inputs.joint {
                Some(joint) => {
                    let tracks: Vec<String> = joint.track_vecs.keys().cloned().collect();
                    (
                        query_by_tag_eval(
                            |tag, track| joint.score(tag, track),
                            &tracks,
                            &inputs.annotations,
                            &tags,
                        )?,
                        joint.tracks_without_audio.clone(),
                    )
                }
                None => {
                    let (tracks, skipped) = inputs.vocab_tracks();
                    if tracks.is_empty() {
                        return Err(user_error(
                            "no annotated track IDs are present in the embedding vocabulary",
                        ));
                    }
                    (
                        query_by_tag_eval(
                            |tag, track| inputs.word_score(tag, track),
                            &tracks,
                            &inputs.annotations,
                            &tags,
                        )?,
                        skipped,
                    )
                }
            };
            skipped_tags.sort();
            let body = TaskReport {
                config: &inputs.config,
                task: "query-by-tag",
                scoring: inputs.scoring_name(),
                conventions: conventions(),
                skipped_tags,
                skipped_tracks,
                body: json!({ "rocauc_tag": report.aggregate, "report": report }),
            };
            finish(&inputs, "eval query-by-tag", &body)
        }
        EvalTask::QueryByTrack { common, ks } => {
            let ks: Vec<usize> = ks
                .split(',')
                .map(|s| s.trim().parse::<usize>())
                .collect::<Result<_, _>>()
                .map_err(|e| user_error(format!("bad --ks list: {e}")))?;
            if ks.is_empty() || ks.contains(&0) {
                return Err(user_error("--ks must be positive integers"));
            }
            let mut inputs = load_inputs(&common, false, false)?;
            inputs.load_joint(&[])?;
            let (reports, skipped_tracks) = match &inputs.joint {
                Some(joint) => {
                    let tracks: Vec<String> = joint.track_vecs.keys().cloned().collect();
                    (
                        query_by_track_eval(
                            |a, b| joint.track_sim(a, b),
                            &tracks,
                            &inputs.annotations,
                            &ks,
                        )?,
                        joint.tracks_without_audio.clone(),
                    )
                }
                None => {
                    let (tracks, skipped) = inputs.vocab_tracks();
                    if tracks.len() < 2 {
                        return Err(user_error(
                            "need at least 2 annotated track IDs in the embedding vocabulary",
                        ));
                    }
                    (
                        query_by_track_eval(
                            |a, b| inputs.word_score(a, b),
                            &tracks,
                            &inputs.annotations,
                            &ks,
                        )?,
                        skipped,
                    )
                }
            };
            let recalls: BTreeMap<String, f64> = reports
                .iter()
                .map(|(k, r)| (format!("recall@{k}"), r.aggregate))
                .collect();
            let body = TaskReport {
                config: &inputs.config,
                task: "query-by-track",
                scoring: inputs.scoring_name(),
                conventions: conventions(),
                skipped_tags: Vec::new(),
                skipped_tracks,
                body: json!({ "recall": recalls, "reports": reports }),
            };
            finish(&inputs, "eval query-by-track", &body)
        }
        EvalTask::Tagging { common } => {
            let mut inputs = load_inputs(&common, false, true)?;
            let (tags, mut skipped_tags) = inputs.vocab_tags();
            inputs.load_joint(&tags)?;
            let joint = inputs.joint.as_ref().expect("checkpoint required");
            let tracks: Vec<String> = joint.track_vecs.keys().cloned().collect();
            let report = tagging_eval(
                |tag, track| joint.score(tag, track),
                &tracks,
                &inputs.annotations,
                &tags,
            )?;
            skipped_tags.sort();
            let skipped_tracks = joint.tracks_without_audio.clone();
            let body = TaskReport {
                config: &inputs.config,
                task: "tagging",
                scoring: "joint",
                conventions: conventions(),
                skipped_tags,
                skipped_tracks,
                body: json!({ "rocauc_clip": report.aggregate, "report": report }),
            };
            finish(&inputs, "eval tagging", &body)
        }
        EvalTask::ZeroShot { common } => {
            let mut inputs = load_inputs(&common, true, true)?;
            let dataset = EvalDataset::from_parts(
                &inputs.records,
                inputs.tag_metadata.as_ref().expect("tag metadata required"),
            )?;
            let tasks = zero_shot_protocol(&dataset)?;
            // Prototypes for every tag in the split that the vocabulary
            // knows; unknown tags are reported, not fatal.
            let (known_tags, mut skipped_tags): (Vec<String>, Vec<String>) = tasks
                .tagging
                .tags
                .iter()
                .cloned()
                .partition(|t| inputs.embedding.vocab().id(t).is_some());
            inputs.load_joint(&known_tags)?;
            let joint = inputs.joint.as_ref().expect("checkpoint required");

            let retrieval_tags: Vec<String> = tasks
                .retrieval
                .tags
                .iter()
                .filter(|t| joint.prototypes.contains_key(*t))
                .cloned()
                .collect();
            if retrieval_tags.is_empty() {
                return Err(user_error(
                    "no unseen tag is present in the embedding vocabulary",
                ));
            }
            let retrieval_tracks: Vec<String> = tasks
                .retrieval
                .tracks
                .iter()
                .filter(|t| joint.track_vecs.contains_key(*t))
                .cloned()
                .collect();
            let retrieval = query_by_tag_eval(
                |tag, track| joint.score(tag, track),
                &retrieval_tracks,
                &inputs.annotations,
                &retrieval_tags,
            )?;

            let tagging_tracks: Vec<String> = tasks
                .tagging
                .tracks
                .iter()
                .filter(|t| joint.track_vecs.contains_key(*t))
                .cloned()
                .collect();
            let tagging = tagging_eval(
                |tag, track| joint.score(tag, track),
                &tagging_tracks,
                &inputs.annotations,
                &known_tags,
            )?;

            skipped_tags.sort();
            let skipped_tracks = joint.tracks_without_audio.clone();
            let body = TaskReport {
                config: &inputs.config,
                task: "zero-shot",
                scoring: "joint",
                conventions: conventions(),
                skipped_tags,
                skipped_tracks,
                body: json!({
                    "retrieval_tag_count": retrieval_tags.len(),
                    "tagging_tag_count": known_tags.len(),
                    "rocauc_tag_unseen": retrieval.aggregate,
                    "rocauc_clip": tagging.aggregate,
                    "retrieval": retrieval,
                    "tagging": tagging,
                }),
            };
            finish(&inputs, "eval zero-shot", &body)
        }
    }
}

/// Shared by `query`: one report entry per ranked item.
#[derive(Serialize)]
pub struct RankedItem {
    pub token: String,
    pub kind: String,
    pub score: f64,
}
