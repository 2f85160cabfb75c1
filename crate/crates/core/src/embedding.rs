//! The published word embedding: similarity queries, multi-word averaging,
//! kind-filtered nearest neighbors, and text-format I/O.
//!
//! The interchange format is the word2vec text layout (`vocab_size dim`
//! header, then one `token v1 .. vd` line each) plus a TSV sidecar carrying
//! per-token kind and count. Vectors are written with nine significant
//! digits, which round-trips f32 exactly.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::corpus::{TokenId, TokenKind, Vocabulary};
use crate::sgns::EmbeddingMatrix;
use crate::{Error, Result};

/// Immutable word embedding over a frozen vocabulary.
#[derive(Debug, Clone)]
pub struct WordEmbedding {
    vocab: Vocabulary,
    dim: usize,
    vectors: Vec<f32>,
}

/// Cosine similarity, clamped to `[-1, 1]` against rounding.
pub fn cosine_similarity(u: &[f32], v: &[f32]) -> Result<f64> {
    debug_assert_eq!(u.len(), v.len());
    let mut dot = 0.0f64;
    let mut nu = 0.0f64;
    let mut nv = 0.0f64;
    for (&a, &b) in u.iter().zip(v) {
        dot += f64::from(a) * f64::from(b);
        nu += f64::from(a) * f64::from(a);
        nv += f64::from(b) * f64::from(b);
    }
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok((dot / (nu.sqrt() * nv.sqrt())).clamp(-1.0, 1.0))
}

impl WordEmbedding {
    pub fn new(vocab: Vocabulary, dim: usize, vectors: Vec<f32>) -> Result<Self> {
        if vectors.len() != vocab.len() * dim {
            return Err(Error::InvalidConfig(format!(
                "vector table has {} entries, expected {} x {}",
                vectors.len(),
                vocab.len(),
                dim
            )));
        }
        Ok(WordEmbedding {
            vocab,
            dim,
            vectors,
        })
    }

    /// Publish the input table of a trained matrix.
    pub fn from_training(vocab: Vocabulary, matrix: EmbeddingMatrix<f32>) -> Result<Self> {
        let dim = matrix.dim();
        Self::new(vocab, dim, matrix.into_input())
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vector(&self, id: TokenId) -> &[f32] {
        let i = id as usize * self.dim;
        &self.vectors[i..i + self.dim]
    }

    pub fn vector_of(&self, token: &str) -> Option<&[f32]> {
        self.vocab.id(token).map(|id| self.vector(id))
    }

    /// FNV-1a over the raw vector bits; used to assert the embedding stays
    /// frozen through joint training.
    pub fn checksum(&self) -> u64 {
        let mut h = 0xcbf2_9ce4_8422_2325u64;
        for v in &self.vectors {
            for b in v.to_le_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }

    /// Mean vector of the in-vocabulary tokens; the second element reports
    /// skipped out-of-vocabulary tokens. Errors if every token is OOV.
    pub fn query_vector(&self, tokens: &[String]) -> Result<(Vec<f32>, Vec<String>)> {
        let mut acc = vec![0.0f64; self.dim];
        let mut hits = 0usize;
        let mut skipped = Vec::new();
        for token in tokens {
            match self.vocab.id(token) {
                Some(id) => {
                    for (a, &v) in acc.iter_mut().zip(self.vector(id)) {
                        *a += f64::from(v);
                    }
                    hits += 1;
                }
                None => skipped.push(token.clone()),
            }
        }
        if hits == 0 {
            return Err(Error::AllTokensOov(skipped));
        }
        let mean = acc.iter().map(|&a| (a / hits as f64) as f32).collect();
        Ok((mean, skipped))
    }

    /// The `k` highest-cosine tokens among candidates passing `kind_filter`,
    /// descending by score with ties broken by ascending token id.
    /// Zero-norm candidate rows are unrankable and skipped.
    pub fn nearest(
        &self,
        query: &[f32],
        k: usize,
        kind_filter: Option<&HashSet<TokenKind>>,
    ) -> Result<Vec<(TokenId, f64)>> {
        let mut scored: Vec<(TokenId, f64)> = Vec::new();
        let mut candidates = 0usize;
        for id in 0..self.vocab.len() as TokenId {
            if let Some(filter) = kind_filter {
                if !filter.contains(&self.vocab.kind(id)) {
                    continue;
                }
            }
            candidates += 1;
            if let Ok(score) = cosine_similarity(query, self.vector(id)) {
                scored.push((id, score));
            }
        }
        if candidates == 0 {
            return Err(Error::EmptyCandidates);
        }
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        scored.truncate(k);
        Ok(scored)
    }

    /// Path of the vocabulary sidecar written next to an embedding file.
    pub fn sidecar_path(path: &Path) -> PathBuf {
        path.with_extension("vocab.tsv")
    }

    /// Write word2vec text format plus the vocabulary sidecar.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        writeln!(w, "{} {}", self.vocab.len(), self.dim).map_err(|e| Error::io(path, e))?;
        for id in 0..self.vocab.len() as TokenId {
            write!(w, "{}", self.vocab.token(id)).map_err(|e| Error::io(path, e))?;
            for v in self.vector(id) {
                write!(w, " {v:.8e}").map_err(|e| Error::io(path, e))?;
            }
            writeln!(w).map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        self.vocab.write_tsv(&Self::sidecar_path(path))
    }

    /// Load an embedding saved by [`WordEmbedding::save`]. The sidecar
    /// supplies kinds and counts and must list the same tokens in the same
    /// order.
    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines().enumerate();

        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::parse(path, 1, "empty file"))?;
        let header = header.map_err(|e| Error::io(path, e))?;
        let mut parts = header.split_whitespace();
        let vocab_size: usize = parts
            .next()
            .and_then(|p| p.parse().ok())
            .ok_or_else(|| Error::parse(path, 1, "bad vocab size in header"))?;
        let dim: usize = parts
            .next()
            .and_then(|p| p.parse().ok())
            .ok_or_else(|| Error::parse(path, 1, "bad dimension in header"))?;

        let mut tokens: Vec<String> = Vec::with_capacity(vocab_size);
        let mut seen: HashSet<String> = HashSet::with_capacity(vocab_size);
        let mut vectors: Vec<f32> = Vec::with_capacity(vocab_size * dim);
        for (lineno, line) in lines {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let token = parts
                .next()
                .ok_or_else(|| Error::parse(path, lineno + 1, "missing token"))?
                .to_string();
            if !seen.insert(token.clone()) {
                return Err(Error::parse(
                    path,
                    lineno + 1,
                    format!("duplicate token {token:?}"),
                ));
            }
            let row: Vec<f32> = parts
                .map(|p| {
                    p.parse::<f32>()
                        .map_err(|e| Error::parse(path, lineno + 1, format!("bad float: {e}")))
                })
                .collect::<Result<_>>()?;
            if row.len() != dim {
                return Err(Error::parse(
                    path,
                    lineno + 1,
                    format!("expected {dim} components, found {}", row.len()),
                ));
            }
            tokens.push(token);
            vectors.extend_from_slice(&row);
        }
        if tokens.len() != vocab_size {
            return Err(Error::parse(
                path,
                0,
                format!("header declares {vocab_size} rows, found {}", tokens.len()),
            ));
        }

        let sidecar = Self::sidecar_path(path);
        let vocab = Vocabulary::read_tsv(&sidecar)?;
        if vocab.len() != tokens.len() {
            return Err(Error::parse(
                &sidecar,
                0,
                format!(
                    "sidecar lists {} tokens, embedding has {}",
                    vocab.len(),
                    tokens.len()
                ),
            ));
        }
        for (id, token) in tokens.iter().enumerate() {
            if vocab.token(id as TokenId) != token {
                return Err(Error::parse(
                    &sidecar,
                    id + 1,
                    format!(
                        "sidecar token {:?} does not match embedding token {token:?}",
                        vocab.token(id as TokenId)
                    ),
                ));
            }
        }
        WordEmbedding::new(vocab, dim, vectors)
    }
}
