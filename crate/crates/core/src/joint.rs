//! Audio-word metric learning.
//!
//! A trainable audio encoder `f` (affine → tanh → affine) and semantic
//! encoder `g` (affine over frozen word vectors) are pulled together with a
//! max-margin triplet hinge on cosine similarity:
//! `max(0, margin - sim(a, p+) + sim(a, p-))`. Positives come from a
//! record's own tags / artist / track; negatives are drawn uniformly from
//! the global prototype pool of the same kind minus the record's positives.
//! The total loss is the weighted sum of the tag, artist, and track terms;
//! a weight of zero disables that supervision entirely.
//!
//! Gradients are hand-derived (and finite-difference-checked in the test
//! suites); training runs in f64 with serialized mini-batch SGD plus
//! Nesterov momentum, so fixed-seed runs are bit-reproducible.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::TokenId;
use crate::embedding::WordEmbedding;
use crate::features::ClipFeatures;
use crate::rng::stream_rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JointConfig {
    pub joint_dim: usize,
    pub hidden: usize,
    pub margin: f64,
    pub lambda_tag: f64,
    pub lambda_artist: f64,
    pub lambda_track: f64,
    pub batch_size: usize,
    pub epochs: u32,
    pub lr: f64,
    pub momentum: f64,
    /// Inverse-time decay: `lr_t = lr / (1 + lr_decay * t)` per step.
    pub lr_decay: f64,
    pub seed: u64,
}

impl Default for JointConfig {
    fn default() -> Self {
        JointConfig {
            joint_dim: 256,
            hidden: 512,
            margin: 0.2,
            lambda_tag: 1.0,
            lambda_artist: 1.0,
            lambda_track: 1.0,
            batch_size: 128,
            epochs: 200,
            lr: 1e-3,
            momentum: 0.9,
            lr_decay: 1e-6,
            seed: 0,
        }
    }
}

impl JointConfig {
    pub fn validate(&self) -> Result<()> {
        if self.joint_dim < 1 || self.hidden < 1 {
            return Err(Error::InvalidConfig("encoder dims must be >= 1".into()));
        }
        if self.margin.is_nan() || self.margin <= 0.0 {
            return Err(Error::InvalidConfig("margin must be > 0".into()));
        }
        let lambdas = [self.lambda_tag, self.lambda_artist, self.lambda_track];
        if lambdas.iter().any(|l| *l < 0.0 || !l.is_finite()) {
            return Err(Error::InvalidConfig("lambdas must be finite and >= 0".into()));
        }
        if lambdas.iter().all(|l| *l == 0.0) {
            return Err(Error::InvalidConfig(
                "at least one supervision weight must be > 0".into(),
            ));
        }
        if self.batch_size < 1 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if self.epochs < 1 {
            return Err(Error::InvalidConfig("epochs must be >= 1".into()));
        }
        if self.lr.is_nan() || self.lr <= 0.0 {
            return Err(Error::InvalidConfig("lr must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig("momentum must be in [0, 1)".into()));
        }
        if self.lr_decay < 0.0 {
            return Err(Error::InvalidConfig("lr_decay must be >= 0".into()));
        }
        Ok(())
    }
}

fn init_weights<R: Rng>(out_dim: usize, in_dim: usize, rng: &mut R) -> Vec<f64> {
    let bound = 1.0 / (in_dim as f64).sqrt();
    (0..out_dim * in_dim)
        .map(|_| rng.gen_range(-bound..bound))
        .collect()
}

fn affine(w: &[f64], b: &[f64], x: &[f64], out_dim: usize, in_dim: usize) -> Vec<f64> {
    (0..out_dim)
        .map(|o| {
            let row = &w[o * in_dim..(o + 1) * in_dim];
            b[o] + row.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>()
        })
        .collect()
}

/// Two-layer audio encoder: `w2 tanh(w1 x + b1) + b2`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AudioEncoder {
    pub in_dim: usize,
    pub hidden: usize,
    pub out_dim: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl AudioEncoder {
    pub fn zeroed(in_dim: usize, hidden: usize, out_dim: usize) -> Self {
        AudioEncoder {
            in_dim,
            hidden,
            out_dim,
            w1: vec![0.0; hidden * in_dim],
            b1: vec![0.0; hidden],
            w2: vec![0.0; out_dim * hidden],
            b2: vec![0.0; out_dim],
        }
    }

    pub fn init<R: Rng>(in_dim: usize, hidden: usize, out_dim: usize, rng: &mut R) -> Self {
        AudioEncoder {
            in_dim,
            hidden,
            out_dim,
            w1: init_weights(hidden, in_dim, rng),
            b1: vec![0.0; hidden],
            w2: init_weights(out_dim, hidden, rng),
            b2: vec![0.0; out_dim],
        }
    }

    /// Hidden activations and output for one feature vector.
    pub fn forward_cached(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if x.len() != self.in_dim {
            return Err(Error::InvalidConfig(format!(
                "feature vector has {} components, encoder expects {}",
                x.len(),
                self.in_dim
            )));
        }
        let mut h = affine(&self.w1, &self.b1, x, self.hidden, self.in_dim);
        for v in h.iter_mut() {
            *v = v.tanh();
        }
        let a = affine(&self.w2, &self.b2, &h, self.out_dim, self.hidden);
        Ok((h, a))
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_cached(x)?.1)
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = self.w1.clone();
        p.extend_from_slice(&self.b1);
        p.extend_from_slice(&self.w2);
        p.extend_from_slice(&self.b2);
        p
    }

    pub fn set_params(&mut self, flat: &[f64]) {
        let mut it = flat.iter();
        for dst in self
            .w1
            .iter_mut()
            .chain(&mut self.b1)
            .chain(&mut self.w2)
            .chain(&mut self.b2)
        {
            *dst = *it.next().expect("parameter vector too short");
        }
        assert!(it.next().is_none(), "parameter vector too long");
    }

    pub fn all_finite(&self) -> bool {
        self.params().iter().all(|p| p.is_finite())
    }
}

/// Affine map from frozen word vectors into the joint space. The word
/// embedding itself is passed by shared reference at every call and is never
/// modified.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SemanticEncoder {
    pub word_dim: usize,
    pub out_dim: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl SemanticEncoder {
    pub fn zeroed(word_dim: usize, out_dim: usize) -> Self {
        SemanticEncoder {
            word_dim,
            out_dim,
            w: vec![0.0; out_dim * word_dim],
            b: vec![0.0; out_dim],
        }
    }

    pub fn init<R: Rng>(word_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        SemanticEncoder {
            word_dim,
            out_dim,
            w: init_weights(out_dim, word_dim, rng),
            b: vec![0.0; out_dim],
        }
    }

    /// Identity map (requires `word_dim == out_dim`); prototypes equal the
    /// raw word vectors.
    pub fn identity(dim: usize) -> Self {
        let mut enc = Self::zeroed(dim, dim);
        for i in 0..dim {
            enc.w[i * dim + i] = 1.0;
        }
        enc
    }

    pub fn forward_word_vector(&self, wv: &[f64]) -> Vec<f64> {
        debug_assert_eq!(wv.len(), self.word_dim);
        affine(&self.w, &self.b, wv, self.out_dim, self.word_dim)
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = self.w.clone();
        p.extend_from_slice(&self.b);
        p
    }

    pub fn set_params(&mut self, flat: &[f64]) {
        let mut it = flat.iter();
        for dst in self.w.iter_mut().chain(&mut self.b) {
            *dst = *it.next().expect("parameter vector too short");
        }
        assert!(it.next().is_none(), "parameter vector too long");
    }

    pub fn all_finite(&self) -> bool {
        self.params().iter().all(|p| p.is_finite())
    }
}

fn word_vector_f64(emb: &WordEmbedding, id: TokenId) -> Vec<f64> {
    emb.vector(id).iter().map(|&v| f64::from(v)).collect()
}

/// Map a feature vector to the joint space.
pub fn encode_audio(enc: &AudioEncoder, x: &[f64]) -> Result<Vec<f64>> {
    enc.forward(x)
}

/// Map a vocabulary token to its prototype vector.
pub fn encode_prototype(
    enc: &SemanticEncoder,
    emb: &WordEmbedding,
    token: &str,
) -> Result<Vec<f64>> {
    if emb.dim() != enc.word_dim {
        return Err(Error::InvalidConfig(format!(
            "semantic encoder expects {}-dim word vectors, embedding has {}",
            enc.word_dim,
            emb.dim()
        )));
    }
    let id = emb
        .vocab()
        .id(token)
        .ok_or_else(|| Error::OovTokens(vec![token.to_string()]))?;
    Ok(enc.forward_word_vector(&word_vector_f64(emb, id)))
}

/// Cosine similarity of two joint vectors, clamped to `[-1, 1]`.
pub fn similarity(a: &[f64], p: &[f64]) -> Result<f64> {
    debug_assert_eq!(a.len(), p.len());
    let dot: f64 = a.iter().zip(p).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let np: f64 = p.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || np == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok((dot / (na * np)).clamp(-1.0, 1.0))
}

fn hinge(margin: f64, sim_pos: f64, sim_neg: f64) -> f64 {
    (margin - sim_pos + sim_neg).max(0.0)
}

/// Max-margin hinge `max(0, margin - sim(a, pos) + sim(a, neg))`.
pub fn triplet_loss(anchor: &[f64], pos: &[f64], neg: &[f64], margin: f64) -> Result<f64> {
    Ok(hinge(
        margin,
        similarity(anchor, pos)?,
        similarity(anchor, neg)?,
    ))
}

/// Weighted sum of the per-supervision batch losses.
pub fn total_loss(l_tag: f64, l_artist: f64, l_track: f64, config: &JointConfig) -> f64 {
    config.lambda_tag * l_tag + config.lambda_artist * l_artist + config.lambda_track * l_track
}

/// One labeled clip: features plus its tag/artist/track tokens.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SupervisionRecord {
    pub clip: ClipFeatures,
    pub tags: Vec<String>,
    pub artist_id: String,
    pub track_id: String,
}

/// A supervision record with all tokens resolved against the vocabulary.
#[derive(Debug, Clone)]
pub struct ResolvedRecord {
    pub clip_id: String,
    pub features: Vec<f64>,
    pub tags: Vec<TokenId>,
    pub artist: TokenId,
    pub track: TokenId,
}

/// Resolve records against the embedding vocabulary; lists every
/// out-of-vocabulary token before failing.
pub fn resolve_records(
    records: &[SupervisionRecord],
    emb: &WordEmbedding,
) -> Result<Vec<ResolvedRecord>> {
    let vocab = emb.vocab();
    let mut oov = BTreeSet::new();
    let mut resolved = Vec::with_capacity(records.len());
    for r in records {
        let mut lookup = |token: &str| match vocab.id(token) {
            Some(id) => id,
            None => {
                oov.insert(token.to_string());
                0
            }
        };
        resolved.push(ResolvedRecord {
            clip_id: r.clip.clip_id.clone(),
            features: r.clip.vector.clone(),
            tags: r.tags.iter().map(|t| lookup(t)).collect(),
            artist: lookup(&r.artist_id),
            track: lookup(&r.track_id),
        });
    }
    if !oov.is_empty() {
        return Err(Error::OovTokens(oov.into_iter().collect()));
    }
    Ok(resolved)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Supervision {
    Tag,
    Artist,
    Track,
}

impl Supervision {
    pub fn name(self) -> &'static str {
        match self {
            Supervision::Tag => "tag",
            Supervision::Artist => "artist",
            Supervision::Track => "track",
        }
    }
}

/// Global prototype pools (sorted, deduplicated token ids).
#[derive(Debug, Clone, Default)]
pub struct PrototypePools {
    pub tags: Vec<TokenId>,
    pub artists: Vec<TokenId>,
    pub tracks: Vec<TokenId>,
}

impl PrototypePools {
    pub fn from_records(records: &[ResolvedRecord]) -> Self {
        let mut tags = BTreeSet::new();
        let mut artists = BTreeSet::new();
        let mut tracks = BTreeSet::new();
        for r in records {
            tags.extend(r.tags.iter().copied());
            artists.insert(r.artist);
            tracks.insert(r.track);
        }
        PrototypePools {
            tags: tags.into_iter().collect(),
            artists: artists.into_iter().collect(),
            tracks: tracks.into_iter().collect(),
        }
    }

    pub fn pool(&self, supervision: Supervision) -> &[TokenId] {
        match supervision {
            Supervision::Tag => &self.tags,
            Supervision::Artist => &self.artists,
            Supervision::Track => &self.tracks,
        }
    }
}

/// One sampled triplet: the anchor record (global index) with positive and
/// negative prototype tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TripletSample {
    pub record: usize,
    pub positive: TokenId,
    pub negative: TokenId,
}

/// Sample one triplet per eligible batch record for the given supervision.
///
/// The positive is the record's own prototype (a uniformly random tag for
/// tag supervision); the negative is a uniform draw over the global pool
/// minus all of the record's positives. Records with no tags (tag
/// supervision) or whose positives cover the whole pool are skipped.
pub fn sample_triplets<R: Rng>(
    records: &[ResolvedRecord],
    batch: &[usize],
    supervision: Supervision,
    pool: &[TokenId],
    rng: &mut R,
) -> Result<Vec<TripletSample>> {
    if pool.len() < 2 {
        return Err(Error::PoolTooSmall {
            supervision: supervision.name(),
            size: pool.len(),
        });
    }
    let mut out = Vec::with_capacity(batch.len());
    for &ri in batch {
        let r = &records[ri];
        let (positive, excluded): (TokenId, &[TokenId]) = match supervision {
            Supervision::Tag => {
                if r.tags.is_empty() {
                    continue;
                }
                let pos = r.tags[rng.gen_range(0..r.tags.len())];
                (pos, &r.tags)
            }
            Supervision::Artist => (r.artist, std::slice::from_ref(&r.artist)),
            Supervision::Track => (r.track, std::slice::from_ref(&r.track)),
        };
        let allowed: Vec<TokenId> = pool
            .iter()
            .copied()
            .filter(|id| !excluded.contains(id))
            .collect();
        if allowed.is_empty() {
            continue;
        }
        let negative = allowed[rng.gen_range(0..allowed.len())];
        out.push(TripletSample {
            record: ri,
            positive,
            negative,
        });
    }
    Ok(out)
}

/// Gradients matching [`AudioEncoder`] / [`SemanticEncoder`] layouts.
#[derive(Debug, Clone)]
pub struct JointGrads {
    pub audio: Vec<f64>,
    pub semantic: Vec<f64>,
}

/// Per-supervision triplet group with its weight.
pub struct TripletGroup<'a> {
    pub weight: f64,
    pub triplets: &'a [TripletSample],
}

fn d_cos_d_a(a: &[f64], p: &[f64], cos: f64) -> Vec<f64> {
    let na2: f64 = a.iter().map(|x| x * x).sum();
    let na = na2.sqrt();
    let np: f64 = p.iter().map(|x| x * x).sum::<f64>().sqrt();
    a.iter()
        .zip(p)
        .map(|(&ai, &pi)| pi / (na * np) - cos * ai / na2)
        .collect()
}

/// Batch objective: `sum_s weight_s * mean(hinge over group s)`.
/// Forward-only; the reference the gradient path is checked against.
pub fn batch_loss(
    audio: &AudioEncoder,
    semantic: &SemanticEncoder,
    emb: &WordEmbedding,
    records: &[ResolvedRecord],
    groups: &[TripletGroup<'_>],
    margin: f64,
) -> Result<f64> {
    let mut total = 0.0;
    for group in groups {
        if group.triplets.is_empty() {
            continue;
        }
        let mut sum = 0.0;
        for t in group.triplets {
            let a = audio.forward(&records[t.record].features)?;
            let p_pos = semantic.forward_word_vector(&word_vector_f64(emb, t.positive));
            let p_neg = semantic.forward_word_vector(&word_vector_f64(emb, t.negative));
            sum += triplet_loss(&a, &p_pos, &p_neg, margin)?;
        }
        total += group.weight * sum / group.triplets.len() as f64;
    }
    Ok(total)
}

/// Batch loss plus analytic gradients for every encoder parameter.
///
/// Forward results are cached per record and per token; gradient
/// accumulation iterates in deterministic (BTreeMap) order so training is
/// bit-reproducible. A triplet whose hinge is inactive (`<= 0`) contributes
/// exactly zero gradient.
pub fn batch_gradients(
    audio: &AudioEncoder,
    semantic: &SemanticEncoder,
    emb: &WordEmbedding,
    records: &[ResolvedRecord],
    groups: &[TripletGroup<'_>],
    margin: f64,
) -> Result<(f64, JointGrads)> {
    let mut audio_fwd: BTreeMap<usize, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    let mut sem_fwd: BTreeMap<TokenId, Vec<f64>> = BTreeMap::new();
    let mut audio_grad: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut sem_grad: BTreeMap<TokenId, Vec<f64>> = BTreeMap::new();

    let mut total = 0.0;
    for group in groups {
        if group.triplets.is_empty() {
            continue;
        }
        let scale = group.weight / group.triplets.len() as f64;
        for t in group.triplets {
            if let std::collections::btree_map::Entry::Vacant(e) = audio_fwd.entry(t.record)
            {
                e.insert(audio.forward_cached(&records[t.record].features)?);
            }
            for token in [t.positive, t.negative] {
                sem_fwd
                    .entry(token)
                    .or_insert_with(|| semantic.forward_word_vector(&word_vector_f64(emb, token)));
            }
            let a = &audio_fwd[&t.record].1;
            let p_pos = &sem_fwd[&t.positive];
            let p_neg = &sem_fwd[&t.negative];
            let s_pos = similarity(a, p_pos)?;
            let s_neg = similarity(a, p_neg)?;
            let loss = hinge(margin, s_pos, s_neg);
            total += scale * loss;
            if loss <= 0.0 {
                continue;
            }
            // d loss / d s_pos = -1, d loss / d s_neg = +1.
            let ga_pos = d_cos_d_a(a, p_pos, s_pos);
            let ga_neg = d_cos_d_a(a, p_neg, s_neg);
            let grad_a = audio_grad
                .entry(t.record)
                .or_insert_with(|| vec![0.0; audio.out_dim]);
            for i in 0..audio.out_dim {
                grad_a[i] += scale * (ga_neg[i] - ga_pos[i]);
            }
            let gp_pos = d_cos_d_a(p_pos, a, s_pos);
            let grad_p = sem_grad
                .entry(t.positive)
                .or_insert_with(|| vec![0.0; semantic.out_dim]);
            for i in 0..semantic.out_dim {
                grad_p[i] -= scale * gp_pos[i];
            }
            let gp_neg = d_cos_d_a(p_neg, a, s_neg);
            let grad_p = sem_grad
                .entry(t.negative)
                .or_insert_with(|| vec![0.0; semantic.out_dim]);
            for i in 0..semantic.out_dim {
                grad_p[i] += scale * gp_neg[i];
            }
        }
    }

    // Backprop through the audio encoder per anchored record.
    let mut g_w1 = vec![0.0; audio.w1.len()];
    let mut g_b1 = vec![0.0; audio.b1.len()];
    let mut g_w2 = vec![0.0; audio.w2.len()];
    let mut g_b2 = vec![0.0; audio.b2.len()];
    for (ri, grad_a) in &audio_grad {
        let (h, _) = &audio_fwd[ri];
        let x = &records[*ri].features;
        let mut grad_h = vec![0.0; audio.hidden];
        for o in 0..audio.out_dim {
            g_b2[o] += grad_a[o];
            for j in 0..audio.hidden {
                g_w2[o * audio.hidden + j] += grad_a[o] * h[j];
                grad_h[j] += audio.w2[o * audio.hidden + j] * grad_a[o];
            }
        }
        for j in 0..audio.hidden {
            let grad_z = grad_h[j] * (1.0 - h[j] * h[j]);
            g_b1[j] += grad_z;
            for i in 0..audio.in_dim {
                g_w1[j * audio.in_dim + i] += grad_z * x[i];
            }
        }
    }

    // Backprop through the semantic affine per touched token.
    let mut g_w = vec![0.0; semantic.w.len()];
    let mut g_b = vec![0.0; semantic.b.len()];
    for (token, grad_p) in &sem_grad {
        let wv = word_vector_f64(emb, *token);
        for o in 0..semantic.out_dim {
            g_b[o] += grad_p[o];
            for i in 0..semantic.word_dim {
                g_w[o * semantic.word_dim + i] += grad_p[o] * wv[i];
            }
        }
    }

    let mut audio_flat = g_w1;
    audio_flat.extend(g_b1);
    audio_flat.extend(g_w2);
    audio_flat.extend(g_b2);
    let mut sem_flat = g_w;
    sem_flat.extend(g_b);
    Ok((
        total,
        JointGrads {
            audio: audio_flat,
            semantic: sem_flat,
        },
    ))
}

/// SGD with Nesterov momentum and inverse-time lr decay.
struct NesterovSgd {
    velocity: Vec<f64>,
    momentum: f64,
    base_lr: f64,
    decay: f64,
}

impl NesterovSgd {
    fn new(n: usize, config: &JointConfig) -> Self {
        NesterovSgd {
            velocity: vec![0.0; n],
            momentum: config.momentum,
            base_lr: config.lr,
            decay: config.lr_decay,
        }
    }

    fn step(&mut self, t: u64, params: &mut [f64], grads: &[f64]) {
        let lr = self.base_lr / (1.0 + self.decay * t as f64);
        for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut self.velocity) {
            *v = self.momentum * *v + g;
            *p -= lr * (g + self.momentum * *v);
        }
    }
}

#[derive(Debug, Clone)]
pub struct JointModel {
    pub audio: AudioEncoder,
    pub semantic: SemanticEncoder,
}

pub struct JointTrainOutcome {
    pub model: JointModel,
    /// Mean batch objective per epoch.
    pub epoch_loss: Vec<f64>,
}

/// Train both encoders on the supervision records. The word embedding is
/// read-only throughout.
pub fn train_joint(
    records: &[SupervisionRecord],
    emb: &WordEmbedding,
    config: &JointConfig,
) -> Result<JointTrainOutcome> {
    config.validate()?;
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let resolved = resolve_records(records, emb)?;
    let in_dim = resolved[0].features.len();
    if let Some(bad) = resolved.iter().find(|r| r.features.len() != in_dim) {
        return Err(Error::InvalidConfig(format!(
            "clip {:?} has {} feature components, expected {in_dim}",
            bad.clip_id,
            bad.features.len()
        )));
    }

    let pools = PrototypePools::from_records(&resolved);
    let active: Vec<(Supervision, f64)> = [
        (Supervision::Tag, config.lambda_tag),
        (Supervision::Artist, config.lambda_artist),
        (Supervision::Track, config.lambda_track),
    ]
    .into_iter()
    .filter(|(_, l)| *l > 0.0)
    .collect();
    for (s, _) in &active {
        let size = pools.pool(*s).len();
        if size < 2 {
            return Err(Error::PoolTooSmall {
                supervision: s.name(),
                size,
            });
        }
    }

    let mut audio = AudioEncoder::init(
        in_dim,
        config.hidden,
        config.joint_dim,
        &mut stream_rng(config.seed, "joint-init-audio", &[]),
    );
    let mut semantic = SemanticEncoder::init(
        emb.dim(),
        config.joint_dim,
        &mut stream_rng(config.seed, "joint-init-sem", &[]),
    );
    let mut opt_audio = NesterovSgd::new(audio.params().len(), config);
    let mut opt_sem = NesterovSgd::new(semantic.params().len(), config);

    let mut epoch_loss = Vec::with_capacity(config.epochs as usize);
    let mut step: u64 = 0;
    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..resolved.len()).collect();
        order.shuffle(&mut stream_rng(config.seed, "joint-shuffle", &[u64::from(epoch)]));
        let mut triplet_rng = stream_rng(config.seed, "joint-triplets", &[u64::from(epoch)]);

        let mut sum = 0.0;
        let mut batches = 0usize;
        for batch in order.chunks(config.batch_size) {
            let sampled: Vec<(f64, Vec<TripletSample>)> = active
                .iter()
                .map(|(s, weight)| {
                    sample_triplets(&resolved, batch, *s, pools.pool(*s), &mut triplet_rng)
                        .map(|t| (*weight, t))
                })
                .collect::<Result<_>>()?;
            let groups: Vec<TripletGroup<'_>> = sampled
                .iter()
                .map(|(weight, triplets)| TripletGroup {
                    weight: *weight,
                    triplets,
                })
                .collect();
            let (loss, grads) =
                batch_gradients(&audio, &semantic, emb, &resolved, &groups, config.margin)?;

            let mut ap = audio.params();
            opt_audio.step(step, &mut ap, &grads.audio);
            audio.set_params(&ap);
            let mut sp = semantic.params();
            opt_sem.step(step, &mut sp, &grads.semantic);
            semantic.set_params(&sp);

            step += 1;
            sum += loss;
            batches += 1;
        }
        epoch_loss.push(if batches == 0 { 0.0 } else { sum / batches as f64 });
    }

    debug_assert!(audio.all_finite() && semantic.all_finite());
    Ok(JointTrainOutcome {
        model: JointModel { audio, semantic },
        epoch_loss,
    })
}

/// Track-level audio embedding: mean of the per-clip encoder outputs.
pub fn track_embedding(enc: &AudioEncoder, clips: &[ClipFeatures]) -> Result<Vec<f64>> {
    if clips.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut acc = vec![0.0f64; enc.out_dim];
    for clip in clips {
        let a = enc.forward(&clip.vector)?;
        for (s, v) in acc.iter_mut().zip(&a) {
            *s += v;
        }
    }
    for s in acc.iter_mut() {
        *s /= clips.len() as f64;
    }
    Ok(acc)
}

/// Trained encoders plus the config they were trained with.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: JointConfig,
    pub audio: AudioEncoder,
    pub semantic: SemanticEncoder,
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    serde_json::to_writer_pretty(BufWriter::new(file), checkpoint)
        .map_err(|e| Error::parse(path, 0, e.to_string()))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::parse(path, 0, e.to_string()))
}

/// Read supervision records (JSON Lines of
/// `{clip_id, track_id, artist_id, tags}`) joined against clip features by
/// `clip_id`.
pub fn read_supervision(path: &Path, features: &[ClipFeatures]) -> Result<Vec<SupervisionRecord>> {
    #[derive(Deserialize)]
    struct Row {
        clip_id: String,
        track_id: String,
        artist_id: String,
        #[serde(default)]
        tags: Vec<String>,
    }
    let by_clip: BTreeMap<&str, &ClipFeatures> = features
        .iter()
        .map(|c| (c.clip_id.as_str(), c))
        .collect();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (lineno, line) in std::io::BufRead::lines(BufReader::new(file)).enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: Row = serde_json::from_str(&line)
            .map_err(|e| Error::parse(path, lineno + 1, e.to_string()))?;
        let clip = by_clip.get(row.clip_id.as_str()).ok_or_else(|| {
            Error::parse(
                path,
                lineno + 1,
                format!("clip_id {:?} not present in the feature file", row.clip_id),
            )
        })?;
        records.push(SupervisionRecord {
            clip: (*clip).clone(),
            tags: row.tags,
            artist_id: row.artist_id,
            track_id: row.track_id,
        });
    }
    Ok(records)
}
