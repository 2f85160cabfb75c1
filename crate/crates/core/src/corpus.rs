//! Corpus ingestion and skip-gram pair generation.
//!
//! Two corpora feed one vocabulary: a general text corpus (one document per
//! line) and a music corpus of per-track bundles (review sentences, tags,
//! artist/track IDs). Tokens are ordered by musical specificity (general
//! words, review words, tags, artist IDs, track IDs), and the ID-like kinds
//! are never frequency-cut or subsampled, so every track and artist stays
//! addressable in the trained space.
//!
//! A per-track training paragraph repeats each review sentence
//! `review_repeat` times (shuffling each copy), appends the track's tags and
//! IDs, and shuffles the whole paragraph so context windows mix token kinds.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::stream_rng;
use crate::sgns::PairSource;
use crate::{Error, Result};

/// Dense vocabulary index of a token.
pub type TokenId = u32;

/// Token kinds, ordered by musical specificity (least to most).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenKind {
    GeneralWord,
    ReviewWord,
    Tag,
    ArtistId,
    TrackId,
}

impl TokenKind {
    /// True for the word kinds, which are subject to `min_count` and
    /// frequent-token subsampling. Tags and IDs are always retained.
    pub fn is_word(self) -> bool {
        matches!(self, TokenKind::GeneralWord | TokenKind::ReviewWord)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TokenKind::GeneralWord => "general",
            TokenKind::ReviewWord => "review",
            TokenKind::Tag => "tag",
            TokenKind::ArtistId => "artist",
            TokenKind::TrackId => "track",
        }
    }

    pub fn parse(s: &str) -> Option<TokenKind> {
        Some(match s {
            "general" => TokenKind::GeneralWord,
            "review" => TokenKind::ReviewWord,
            "tag" => TokenKind::Tag,
            "artist" => TokenKind::ArtistId,
            "track" => TokenKind::TrackId,
            _ => return None,
        })
    }
}

/// Whether a tag describes the audio itself (genre, instrument) or the
/// listening situation (mood, theme, usage).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TagCategory {
    Content,
    Context,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagAnnotation {
    pub name: String,
    pub category: TagCategory,
}

/// One track's bundle of text: the unit a training paragraph is built from.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MusicDocument {
    pub track_id: String,
    pub artist_id: String,
    pub tags: Vec<TagAnnotation>,
    pub review_sentences: Vec<Vec<String>>,
}

/// When music paragraphs are (re)shuffled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShuffleMode {
    /// Shuffle once when the corpus is built.
    Static,
    /// Fresh shuffle of every paragraph each epoch (shuffling augmentation).
    PerEpoch,
}

/// Skip-gram context window policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowMode {
    /// Effective window drawn uniformly from `[1, window_size]` per position.
    Dynamic,
    /// Full `window_size` window at every position.
    Fixed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub window_size: usize,
    pub review_repeat: usize,
    /// Minimum count for word kinds; tags and IDs are exempt.
    pub min_count: u64,
    /// Frequent-token subsampling threshold for word kinds; 0 disables.
    pub subsample_threshold: f64,
    pub shuffle_mode: ShuffleMode,
    pub window_mode: WindowMode,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            window_size: 15,
            review_repeat: 4,
            min_count: 5,
            subsample_threshold: 1e-5,
            shuffle_mode: ShuffleMode::Static,
            window_mode: WindowMode::Dynamic,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_size < 1 {
            return Err(Error::InvalidConfig("window_size must be >= 1".into()));
        }
        if self.review_repeat < 1 {
            return Err(Error::InvalidConfig("review_repeat must be >= 1".into()));
        }
        if self.subsample_threshold.is_nan() || self.subsample_threshold < 0.0 {
            return Err(Error::InvalidConfig(
                "subsample_threshold must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VocabEntry {
    pub token: String,
    pub kind: TokenKind,
    pub count: u64,
}

/// Frozen token ↔ id map with per-token kind and count.
///
/// Ids are dense in `[0, len)`, assigned by descending count with
/// lexicographic tie-break, so a vocabulary built from the same corpus is
/// always identical.
#[derive(Debug, Clone, Default)]
pub struct Vocabulary {
    entries: Vec<VocabEntry>,
    index: HashMap<String, TokenId>,
    total_count: u64,
}

impl Vocabulary {
    pub fn from_entries(entries: Vec<VocabEntry>) -> Result<Self> {
        let mut index = HashMap::with_capacity(entries.len());
        let mut total_count = 0u64;
        for (id, e) in entries.iter().enumerate() {
            if index.insert(e.token.clone(), id as TokenId).is_some() {
                return Err(Error::InvalidConfig(format!(
                    "duplicate token {:?} in vocabulary",
                    e.token
                )));
            }
            total_count += e.count;
        }
        Ok(Vocabulary {
            entries,
            index,
            total_count,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn entry(&self, id: TokenId) -> &VocabEntry {
        &self.entries[id as usize]
    }

    pub fn token(&self, id: TokenId) -> &str {
        &self.entries[id as usize].token
    }

    pub fn kind(&self, id: TokenId) -> TokenKind {
        self.entries[id as usize].kind
    }

    pub fn count(&self, id: TokenId) -> u64 {
        self.entries[id as usize].count
    }

    /// Sum of counts over all retained entries.
    pub fn total_count(&self) -> u64 {
        self.total_count
    }

    pub fn entries(&self) -> &[VocabEntry] {
        &self.entries
    }

    pub fn ids_of_kind(&self, kind: TokenKind) -> Vec<TokenId> {
        (0..self.len() as TokenId)
            .filter(|&id| self.kind(id) == kind)
            .collect()
    }

    /// Probability of keeping one occurrence of `id` under subsampling with
    /// threshold `t`; word kinds only, everything else is always kept.
    pub fn keep_probability(&self, id: TokenId, threshold: f64) -> f64 {
        let e = &self.entries[id as usize];
        if threshold <= 0.0 || !e.kind.is_word() || self.total_count == 0 {
            return 1.0;
        }
        let freq = e.count as f64 / self.total_count as f64;
        if freq > threshold {
            (threshold / freq).sqrt()
        } else {
            1.0
        }
    }

    /// Map a token sentence to ids, dropping out-of-vocabulary tokens.
    pub fn map_sentence(&self, tokens: &[String]) -> Vec<TokenId> {
        tokens.iter().filter_map(|t| self.id(t)).collect()
    }

    /// TSV sidecar: `token<TAB>kind<TAB>count`, one line per id, in id order.
    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for e in &self.entries {
            writeln!(w, "{}\t{}\t{}", e.token, e.kind.as_str(), e.count)
                .map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_tsv(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut entries = Vec::new();
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.is_empty() {
                continue;
            }
            let mut parts = line.splitn(3, '\t');
            let token = parts
                .next()
                .ok_or_else(|| Error::parse(path, lineno + 1, "missing token column"))?;
            let kind = parts
                .next()
                .and_then(TokenKind::parse)
                .ok_or_else(|| Error::parse(path, lineno + 1, "bad kind column"))?;
            let count: u64 = parts
                .next()
                .and_then(|c| c.parse().ok())
                .ok_or_else(|| Error::parse(path, lineno + 1, "bad count column"))?;
            entries.push(VocabEntry {
                token: token.to_string(),
                kind,
                count,
            });
        }
        Vocabulary::from_entries(entries)
            .map_err(|e| Error::parse(path, 0, format!("invalid vocabulary: {e}")))
    }
}

/// Lowercase and split on whitespace runs; no other normalization.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|t| t.to_lowercase())
        .collect()
}

/// Normalize a tag name: lowercase with whitespace runs joined by `_`.
pub fn normalize_tag(name: &str) -> String {
    tokenize(name).join("_")
}

/// Count tokens over both corpora and freeze a vocabulary.
///
/// Words below `min_count` are dropped; tags and IDs are kept regardless of
/// count. A token seen under several kinds keeps the most musically specific
/// one (counts still aggregate across all occurrences).
pub fn build_vocabulary<'a, G, M>(
    general_docs: G,
    music_docs: M,
    config: &CorpusConfig,
) -> Result<Vocabulary>
where
    G: IntoIterator<Item = Vec<String>>,
    M: IntoIterator<Item = &'a MusicDocument>,
{
    config.validate()?;
    let mut counts: HashMap<String, (TokenKind, u64)> = HashMap::new();
    let mut bump = |token: &str, kind: TokenKind| {
        counts
            .entry(token.to_string())
            .and_modify(|(k, c)| {
                *k = (*k).max(kind);
                *c += 1;
            })
            .or_insert((kind, 1));
    };

    for doc in general_docs {
        for token in &doc {
            bump(token, TokenKind::GeneralWord);
        }
    }

    let mut seen_tracks = HashSet::new();
    for doc in music_docs {
        if !seen_tracks.insert(doc.track_id.clone()) {
            return Err(Error::DuplicateTrack(doc.track_id.clone()));
        }
        for sentence in &doc.review_sentences {
            for token in sentence {
                bump(token, TokenKind::ReviewWord);
            }
        }
        for tag in &doc.tags {
            bump(&tag.name, TokenKind::Tag);
        }
        bump(&doc.artist_id, TokenKind::ArtistId);
        bump(&doc.track_id, TokenKind::TrackId);
    }

    let mut entries: Vec<VocabEntry> = counts
        .into_iter()
        .filter(|(_, (kind, count))| !kind.is_word() || *count >= config.min_count)
        .map(|(token, (kind, count))| VocabEntry { token, kind, count })
        .collect();
    entries.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.token.cmp(&b.token)));
    Vocabulary::from_entries(entries)
}

fn assemble_generic<T: Clone, R: Rng>(
    review_sentences: &[Vec<T>],
    extras: &[T],
    review_repeat: usize,
    rng: &mut R,
) -> Vec<T> {
    let review_len: usize = review_sentences.iter().map(Vec::len).sum();
    let mut paragraph = Vec::with_capacity(review_len * review_repeat + extras.len());
    for sentence in review_sentences {
        for _ in 0..review_repeat {
            let mut copy = sentence.clone();
            copy.shuffle(rng);
            paragraph.extend(copy);
        }
    }
    paragraph.extend_from_slice(extras);
    paragraph.shuffle(rng);
    paragraph
}

/// Build one track's training paragraph: every review sentence repeated
/// `review_repeat` times (each copy word-shuffled), plus the track's tags and
/// artist/track IDs, with the combined paragraph shuffled.
pub fn assemble_music_paragraph<R: Rng>(
    doc: &MusicDocument,
    config: &CorpusConfig,
    rng: &mut R,
) -> Vec<String> {
    let mut extras: Vec<String> = doc.tags.iter().map(|t| t.name.clone()).collect();
    extras.push(doc.artist_id.clone());
    extras.push(doc.track_id.clone());
    assemble_generic(&doc.review_sentences, &extras, config.review_repeat, rng)
}

/// Emit skip-gram `(center, context)` pairs for one sentence or paragraph.
///
/// Frequent-token subsampling (word kinds only) runs first, so surviving
/// tokens become adjacent. Each position then draws an effective window `b`
/// (`U[1, window_size]` in dynamic mode, the full window in fixed mode) and
/// pairs the center with every in-range neighbor.
pub fn generate_training_pairs<R, F>(
    sentence: &[TokenId],
    config: &CorpusConfig,
    vocab: &Vocabulary,
    rng: &mut R,
    emit: &mut F,
) where
    R: Rng,
    F: FnMut(TokenId, TokenId) + ?Sized,
{
    let mut kept: Vec<TokenId> = Vec::with_capacity(sentence.len());
    if config.subsample_threshold > 0.0 {
        for &id in sentence {
            let p = vocab.keep_probability(id, config.subsample_threshold);
            if p >= 1.0 || rng.gen::<f64>() < p {
                kept.push(id);
            }
        }
    } else {
        kept.extend_from_slice(sentence);
    }

    let c = config.window_size;
    for t in 0..kept.len() {
        let b = match config.window_mode {
            WindowMode::Dynamic => rng.gen_range(1..=c),
            WindowMode::Fixed => c,
        };
        let lo = t.saturating_sub(b);
        let hi = (t + b).min(kept.len().saturating_sub(1));
        for j in lo..=hi {
            if j != t {
                emit(kept[t], kept[j]);
            }
        }
    }
}

/// A music document with all text mapped to vocabulary ids.
#[derive(Debug, Clone)]
pub struct MusicDocIds {
    pub review_sentences: Vec<Vec<TokenId>>,
    pub tags: Vec<TokenId>,
    pub artist: TokenId,
    pub track: TokenId,
}

impl MusicDocIds {
    pub fn from_doc(doc: &MusicDocument, vocab: &Vocabulary) -> Option<MusicDocIds> {
        Some(MusicDocIds {
            review_sentences: doc
                .review_sentences
                .iter()
                .map(|s| s.iter().filter_map(|t| vocab.id(t)).collect())
                .collect(),
            tags: doc.tags.iter().filter_map(|t| vocab.id(&t.name)).collect(),
            artist: vocab.id(&doc.artist_id)?,
            track: vocab.id(&doc.track_id)?,
        })
    }

    fn assemble<R: Rng>(&self, review_repeat: usize, rng: &mut R) -> Vec<TokenId> {
        let mut extras = self.tags.clone();
        extras.push(self.artist);
        extras.push(self.track);
        assemble_generic(&self.review_sentences, &extras, review_repeat, rng)
    }
}

/// The frozen, id-mapped training corpus: a pair source for the trainer.
///
/// General sentences and music paragraphs are sharded round-robin across
/// workers; every rng stream is derived from `(seed, epoch, index)`, so a
/// single-worker run is exactly reproducible.
pub struct TrainingCorpus {
    vocab: Vocabulary,
    config: CorpusConfig,
    seed: u64,
    general: Vec<Vec<TokenId>>,
    music: Vec<MusicDocIds>,
    /// Pre-assembled paragraphs in `Static` shuffle mode.
    static_paragraphs: Vec<Vec<TokenId>>,
}

impl TrainingCorpus {
    pub fn new(
        vocab: Vocabulary,
        general_docs: Vec<Vec<String>>,
        music_docs: &[MusicDocument],
        config: CorpusConfig,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        let general: Vec<Vec<TokenId>> = general_docs
            .iter()
            .map(|doc| vocab.map_sentence(doc))
            .filter(|s| !s.is_empty())
            .collect();
        let music: Vec<MusicDocIds> = music_docs
            .iter()
            .filter_map(|d| MusicDocIds::from_doc(d, &vocab))
            .collect();
        let static_paragraphs = match config.shuffle_mode {
            ShuffleMode::Static => music
                .iter()
                .enumerate()
                .map(|(i, doc)| {
                    let mut rng = stream_rng(seed, "paragraph", &[0, i as u64]);
                    doc.assemble(config.review_repeat, &mut rng)
                })
                .collect(),
            ShuffleMode::PerEpoch => Vec::new(),
        };
        Ok(TrainingCorpus {
            vocab,
            config,
            seed,
            general,
            music,
            static_paragraphs,
        })
    }

    /// Construct directly from pre-assembled id sentences (already shuffled
    /// paragraphs included); used when loading Static-mode shard files.
    pub fn from_sentences(
        vocab: Vocabulary,
        sentences: Vec<Vec<TokenId>>,
        config: CorpusConfig,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        Ok(TrainingCorpus {
            vocab,
            config,
            seed,
            general: sentences,
            music: Vec::new(),
            static_paragraphs: Vec::new(),
        })
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn config(&self) -> &CorpusConfig {
        &self.config
    }

    pub fn num_sequences(&self) -> usize {
        self.general.len() + self.music.len()
    }

    /// Paragraph for music document `i` in `epoch` (fresh shuffle in
    /// PerEpoch mode, the frozen one in Static mode).
    pub fn paragraph(&self, i: usize, epoch: u32) -> Vec<TokenId> {
        match self.config.shuffle_mode {
            ShuffleMode::Static => self.static_paragraphs[i].clone(),
            ShuffleMode::PerEpoch => {
                let mut rng = stream_rng(self.seed, "paragraph", &[u64::from(epoch), i as u64]);
                self.music[i].assemble(self.config.review_repeat, &mut rng)
            }
        }
    }
}

impl PairSource for TrainingCorpus {
    fn for_each_pair(
        &self,
        epoch: u32,
        worker: usize,
        workers: usize,
        emit: &mut dyn FnMut(TokenId, TokenId),
    ) {
        let mut rng = stream_rng(self.seed, "pairs", &[u64::from(epoch), worker as u64]);
        for (j, sentence) in self.general.iter().enumerate() {
            if j % workers == worker {
                generate_training_pairs(sentence, &self.config, &self.vocab, &mut rng, emit);
            }
        }
        let offset = self.general.len();
        for i in 0..self.music.len() {
            if (offset + i) % workers == worker {
                let paragraph = self.paragraph(i, epoch);
                generate_training_pairs(&paragraph, &self.config, &self.vocab, &mut rng, emit);
            }
        }
    }
}

/// Read a general corpus: plain UTF-8 text, one document per line.
pub fn read_general_corpus(path: &Path) -> Result<Vec<Vec<String>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut docs = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let tokens = tokenize(&line);
        if !tokens.is_empty() {
            docs.push(tokens);
        }
    }
    Ok(docs)
}

#[derive(Deserialize)]
struct MusicDocRecord {
    track_id: String,
    artist_id: String,
    #[serde(default)]
    tags: Vec<TagAnnotation>,
    #[serde(default)]
    review_sentences: Vec<String>,
}

/// Read a music corpus: JSON Lines, one object per track with keys
/// `track_id`, `artist_id`, `tags` (`{name, category}`), `review_sentences`
/// (raw strings; tokenized on load). Tag names are normalized, and tags
/// repeated within one track are dropped.
pub fn read_music_corpus(path: &Path) -> Result<Vec<MusicDocument>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut docs = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: MusicDocRecord = serde_json::from_str(&line)
            .map_err(|e| Error::parse(path, lineno + 1, e.to_string()))?;
        if rec.track_id.is_empty() || rec.artist_id.is_empty() {
            return Err(Error::parse(
                path,
                lineno + 1,
                "track_id and artist_id must be non-empty",
            ));
        }
        let mut seen = HashSet::new();
        let tags = rec
            .tags
            .into_iter()
            .map(|t| TagAnnotation {
                name: normalize_tag(&t.name),
                category: t.category,
            })
            .filter(|t| !t.name.is_empty() && seen.insert(t.name.clone()))
            .collect();
        docs.push(MusicDocument {
            track_id: rec.track_id,
            artist_id: rec.artist_id,
            tags,
            review_sentences: rec.review_sentences.iter().map(|s| tokenize(s)).collect(),
        });
    }
    Ok(docs)
}
