//! Evaluation tasks and ranking metrics.
//!
//! Four tasks: tag rank prediction (tag-to-tag nDCG@k graded by tag
//! co-occurrence), query-by-tag (per-tag ROC-AUC over tracks), tagging
//! (per-track ROC-AUC over tags), and query-by-track (recall@k on shared
//! tags), plus the generalized zero-shot split (retrieval on all tracks with
//! unseen tags, tagging on test tracks with all tags).
//!
//! Conventions recorded in every report: nDCG uses linear gain
//! `rel / log2(i + 1)`; AUC uses the exact Mann-Whitney midrank statistic;
//! queries with undefined metrics are excluded and counted rather than
//! crashing the aggregate.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::TagCategory;
use crate::embedding::{cosine_similarity, WordEmbedding};
use crate::{Error, Result};

pub type Annotations = BTreeMap<String, BTreeSet<String>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroShotSplit {
    Seen,
    Unseen,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackSplit {
    Train,
    Valid,
    Test,
}

/// Track annotations plus tag metadata, feeding all four tasks.
#[derive(Debug, Clone)]
pub struct EvalDataset {
    pub annotations: Annotations,
    pub tag_categories: BTreeMap<String, TagCategory>,
    pub tag_split: BTreeMap<String, ZeroShotSplit>,
    pub track_split: BTreeMap<String, TrackSplit>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub track_id: String,
    pub artist_id: String,
    pub tags: Vec<String>,
    pub split: TrackSplit,
}

#[derive(Debug, Clone)]
pub struct TagMetadata {
    pub tag: String,
    pub category: TagCategory,
    pub zs_split: ZeroShotSplit,
}

/// JSON Lines of `{track_id, artist_id, tags, split}`.
pub fn read_annotations(path: &Path) -> Result<Vec<AnnotationRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: AnnotationRecord = serde_json::from_str(&line)
            .map_err(|e| Error::parse(path, lineno + 1, e.to_string()))?;
        out.push(rec);
    }
    Ok(out)
}

/// TSV of `tag<TAB>category<TAB>zs_split` with
/// category in {content, context} and zs_split in {seen, unseen}.
pub fn read_tag_metadata(path: &Path) -> Result<Vec<TagMetadata>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let mut parts = line.splitn(3, '\t');
        let tag = parts
            .next()
            .filter(|t| !t.is_empty())
            .ok_or_else(|| Error::parse(path, lineno + 1, "missing tag column"))?;
        let category = match parts.next() {
            Some("content") => TagCategory::Content,
            Some("context") => TagCategory::Context,
            _ => return Err(Error::parse(path, lineno + 1, "bad category column")),
        };
        let zs_split = match parts.next() {
            Some("seen") => ZeroShotSplit::Seen,
            Some("unseen") => ZeroShotSplit::Unseen,
            _ => return Err(Error::parse(path, lineno + 1, "bad zs_split column")),
        };
        out.push(TagMetadata {
            tag: tag.to_string(),
            category,
            zs_split,
        });
    }
    Ok(out)
}

impl EvalDataset {
    /// Join annotations against tag metadata. Every annotated tag must have
    /// a metadata row.
    pub fn from_parts(records: &[AnnotationRecord], tags: &[TagMetadata]) -> Result<Self> {
        let tag_categories: BTreeMap<String, TagCategory> =
            tags.iter().map(|t| (t.tag.clone(), t.category)).collect();
        let tag_split: BTreeMap<String, ZeroShotSplit> =
            tags.iter().map(|t| (t.tag.clone(), t.zs_split)).collect();
        let mut annotations: Annotations = BTreeMap::new();
        let mut track_split = BTreeMap::new();
        for rec in records {
            for tag in &rec.tags {
                if !tag_categories.contains_key(tag) {
                    return Err(Error::InvalidConfig(format!(
                        "annotated tag {tag:?} has no entry in the tag metadata"
                    )));
                }
            }
            annotations
                .entry(rec.track_id.clone())
                .or_default()
                .extend(rec.tags.iter().cloned());
            track_split.insert(rec.track_id.clone(), rec.split);
        }
        Ok(EvalDataset {
            annotations,
            tag_categories,
            tag_split,
            track_split,
        })
    }

    pub fn tracks(&self) -> Vec<String> {
        self.annotations.keys().cloned().collect()
    }
}

/// Symmetric tag co-occurrence counts with zero diagonal.
#[derive(Debug, Clone)]
pub struct Cooccurrence {
    tags: Vec<String>,
    index: HashMap<String, usize>,
    counts: Vec<Vec<u64>>,
}

impl Cooccurrence {
    pub fn tags(&self) -> &[String] {
        &self.tags
    }

    pub fn count(&self, a: &str, b: &str) -> u64 {
        match (self.index.get(a), self.index.get(b)) {
            (Some(&i), Some(&j)) => self.counts[i][j],
            _ => 0,
        }
    }
}

/// Count tracks annotated with both tags, for every tag pair.
pub fn tag_cooccurrence(annotations: &Annotations) -> Cooccurrence {
    let tags: Vec<String> = annotations
        .values()
        .flat_map(|s| s.iter().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let index: HashMap<String, usize> = tags
        .iter()
        .enumerate()
        .map(|(i, t)| (t.clone(), i))
        .collect();
    let mut counts = vec![vec![0u64; tags.len()]; tags.len()];
    for track_tags in annotations.values() {
        let ids: Vec<usize> = track_tags.iter().map(|t| index[t]).collect();
        for (a, &i) in ids.iter().enumerate() {
            for &j in &ids[a + 1..] {
                counts[i][j] += 1;
                counts[j][i] += 1;
            }
        }
    }
    Cooccurrence {
        tags,
        index,
        counts,
    }
}

/// nDCG@k with linear gain: `DCG = sum rel_i / log2(i + 1)` over the first
/// `k` predictions, normalized by the ideal DCG of the relevance multiset.
pub fn ndcg_at_k<T: Ord>(
    predicted_order: &[T],
    relevance: &BTreeMap<T, f64>,
    k: usize,
) -> Result<f64> {
    let mut ideal: Vec<f64> = relevance.values().copied().collect();
    if !ideal.iter().any(|&r| r > 0.0) {
        return Err(Error::UndefinedNdcg);
    }
    ideal.sort_by(|a, b| b.total_cmp(a));
    let discount = |i: usize| ((i + 2) as f64).log2();
    let dcg: f64 = predicted_order
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, item)| relevance.get(item).copied().unwrap_or(0.0) / discount(i))
        .sum();
    let idcg: f64 = ideal
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, rel)| rel / discount(i))
        .sum();
    Ok(dcg / idcg)
}

/// Exact Mann-Whitney ROC-AUC via midranks:
/// `P(score_pos > score_neg) + 0.5 * P(tie)`.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    assert_eq!(scores.len(), labels.len());
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedAuc);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // Ranks are 1-based; tied scores share the midrank.
        let midrank = (i + 1 + j) as f64 / 2.0;
        for &ix in &order[i..j] {
            if labels[ix] {
                rank_sum_pos += midrank;
            }
        }
        i = j;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// 1 iff any of the top `k` retrieved tracks shares at least one annotated
/// tag with the query; `None` when the query has no tags (excluded upstream).
pub fn recall_at_k(
    query_track: &str,
    retrieved: &[String],
    annotations: &Annotations,
    k: usize,
) -> Option<bool> {
    let query_tags = annotations.get(query_track).filter(|t| !t.is_empty())?;
    debug_assert!(retrieved.iter().all(|t| t != query_track));
    Some(retrieved.iter().take(k).any(|track| {
        annotations
            .get(track)
            .is_some_and(|tags| !tags.is_disjoint(query_tags))
    }))
}

/// Per-query scores with their mean and the excluded queries.
#[derive(Debug, Clone, Serialize)]
pub struct RankingReport {
    pub metric: String,
    pub aggregate: f64,
    pub query_count: usize,
    pub excluded_count: usize,
    pub excluded: Vec<String>,
    pub per_query: BTreeMap<String, f64>,
}

impl RankingReport {
    pub fn from_scores(
        metric: impl Into<String>,
        per_query: BTreeMap<String, f64>,
        excluded: Vec<String>,
    ) -> Self {
        let aggregate = if per_query.is_empty() {
            f64::NAN
        } else {
            per_query.values().sum::<f64>() / per_query.len() as f64
        };
        RankingReport {
            metric: metric.into(),
            aggregate,
            query_count: per_query.len(),
            excluded_count: excluded.len(),
            excluded,
            per_query,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TagRankReport {
    pub k: usize,
    /// Direction key: `{ctn,ctx}_to_{ctn,ctx}`.
    pub directions: BTreeMap<String, RankingReport>,
    /// Mean of the directional aggregates. Directions whose every query was
    /// excluded (no positive co-occurrence) are undefined and left out of
    /// the mean; `defined_directions` says how many contributed.
    pub average: f64,
    pub defined_directions: usize,
}

fn category_tags(
    categories: &BTreeMap<String, TagCategory>,
    want: TagCategory,
    emb: &WordEmbedding,
    annotated: &BTreeSet<String>,
) -> Vec<String> {
    categories
        .iter()
        .filter(|(tag, cat)| {
            **cat == want && annotated.contains(*tag) && emb.vocab().id(tag).is_some()
        })
        .map(|(tag, _)| tag.clone())
        .collect()
}

/// Tag rank prediction: for each query tag, rank the destination-category
/// tags by embedding cosine and score the ranking against co-occurrence
/// counts with nDCG@k. Runs all four direction pairs and averages them.
pub fn tag_rank_prediction(
    emb: &WordEmbedding,
    annotations: &Annotations,
    categories: &BTreeMap<String, TagCategory>,
    k: usize,
) -> Result<TagRankReport> {
    let cooc = tag_cooccurrence(annotations);
    let annotated: BTreeSet<String> = cooc.tags().iter().cloned().collect();
    let ctn = category_tags(categories, TagCategory::Content, emb, &annotated);
    let ctx = category_tags(categories, TagCategory::Context, emb, &annotated);
    if ctn.len() < 2 || ctx.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "need at least 2 tags per category in both embedding and annotations \
             (content: {}, context: {})",
            ctn.len(),
            ctx.len()
        )));
    }

    let mut directions = BTreeMap::new();
    let pairs = [
        ("ctn_to_ctn", &ctn, &ctn),
        ("ctn_to_ctx", &ctn, &ctx),
        ("ctx_to_ctn", &ctx, &ctn),
        ("ctx_to_ctx", &ctx, &ctx),
    ];
    for (name, sources, targets) in pairs {
        let mut per_query = BTreeMap::new();
        let mut excluded = Vec::new();
        for query in sources {
            let candidates: Vec<&String> = targets.iter().filter(|t| *t != query).collect();
            let relevance: BTreeMap<&String, f64> = candidates
                .iter()
                .map(|t| (*t, cooc.count(query, t) as f64))
                .collect();
            if !relevance.values().any(|&r| r > 0.0) {
                excluded.push(query.clone());
                continue;
            }
            let qv = emb.vector_of(query).expect("query filtered to vocab");
            let mut ranked: Vec<(&String, f64)> = candidates
                .iter()
                .map(|t| {
                    let tv = emb.vector_of(t).expect("candidate filtered to vocab");
                    (*t, cosine_similarity(qv, tv).unwrap_or(-1.0))
                })
                .collect();
            ranked.sort_by(|a, b| {
                b.1.total_cmp(&a.1)
                    .then_with(|| emb.vocab().id(a.0).cmp(&emb.vocab().id(b.0)))
            });
            let order: Vec<&String> = ranked.into_iter().map(|(t, _)| t).collect();
            per_query.insert(query.clone(), ndcg_at_k(&order, &relevance, k)?);
        }
        directions.insert(
            name.to_string(),
            RankingReport::from_scores(format!("ndcg@{k} {name}"), per_query, excluded),
        );
    }
    let defined: Vec<f64> = directions
        .values()
        .map(|r| r.aggregate)
        .filter(|a| a.is_finite())
        .collect();
    let average = if defined.is_empty() {
        f64::NAN
    } else {
        defined.iter().sum::<f64>() / defined.len() as f64
    };
    Ok(TagRankReport {
        k,
        directions,
        average,
        defined_directions: defined.len(),
    })
}

/// Mean per-tag ROC-AUC: for each tag, score every track and label it by
/// annotation membership. Tags with a single class are excluded and counted.
pub fn query_by_tag_eval<F>(
    score_fn: F,
    tracks: &[String],
    annotations: &Annotations,
    tags: &[String],
) -> Result<RankingReport>
where
    F: Fn(&str, &str) -> Result<f64>,
{
    let mut per_query = BTreeMap::new();
    let mut excluded = Vec::new();
    for tag in tags {
        let mut scores = Vec::with_capacity(tracks.len());
        let mut labels = Vec::with_capacity(tracks.len());
        for track in tracks {
            scores.push(score_fn(tag, track)?);
            labels.push(
                annotations
                    .get(track)
                    .is_some_and(|tags| tags.contains(tag)),
            );
        }
        match roc_auc(&scores, &labels) {
            Ok(auc) => {
                per_query.insert(tag.clone(), auc);
            }
            Err(Error::UndefinedAuc) => excluded.push(tag.clone()),
            Err(e) => return Err(e),
        }
    }
    if per_query.is_empty() {
        return Err(Error::UndefinedAuc);
    }
    Ok(RankingReport::from_scores(
        "rocauc_tag",
        per_query,
        excluded,
    ))
}

/// Transpose of [`query_by_tag_eval`]: per-track ROC-AUC over the tag set.
/// Tracks annotated with none or all of the tags are excluded and counted.
pub fn tagging_eval<F>(
    score_fn: F,
    tracks: &[String],
    annotations: &Annotations,
    tags: &[String],
) -> Result<RankingReport>
where
    F: Fn(&str, &str) -> Result<f64>,
{
    let mut per_query = BTreeMap::new();
    let mut excluded = Vec::new();
    for track in tracks {
        let mut scores = Vec::with_capacity(tags.len());
        let mut labels = Vec::with_capacity(tags.len());
        for tag in tags {
            scores.push(score_fn(tag, track)?);
            labels.push(
                annotations
                    .get(track)
                    .is_some_and(|tags| tags.contains(tag)),
            );
        }
        match roc_auc(&scores, &labels) {
            Ok(auc) => {
                per_query.insert(track.clone(), auc);
            }
            Err(Error::UndefinedAuc) => excluded.push(track.clone()),
            Err(e) => return Err(e),
        }
    }
    if per_query.is_empty() {
        return Err(Error::UndefinedAuc);
    }
    Ok(RankingReport::from_scores(
        "rocauc_clip",
        per_query,
        excluded,
    ))
}

/// Recall@k per query track, one report per `k`. Candidates are every other
/// track, ranked by `sim_fn` descending (ties by track id). Queries without
/// tags are excluded.
pub fn query_by_track_eval<F>(
    sim_fn: F,
    tracks: &[String],
    annotations: &Annotations,
    ks: &[usize],
) -> Result<BTreeMap<usize, RankingReport>>
where
    F: Fn(&str, &str) -> Result<f64>,
{
    let mut per_k: BTreeMap<usize, BTreeMap<String, f64>> =
        ks.iter().map(|&k| (k, BTreeMap::new())).collect();
    let mut excluded = Vec::new();
    for query in tracks {
        if !annotations.get(query).is_some_and(|t| !t.is_empty()) {
            excluded.push(query.clone());
            continue;
        }
        let mut ranked: Vec<(&String, f64)> = Vec::with_capacity(tracks.len() - 1);
        for candidate in tracks {
            if candidate == query {
                continue;
            }
            ranked.push((candidate, sim_fn(query, candidate)?));
        }
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let retrieved: Vec<String> = ranked.into_iter().map(|(t, _)| t.clone()).collect();
        for (&k, scores) in per_k.iter_mut() {
            if let Some(hit) = recall_at_k(query, &retrieved, annotations, k) {
                scores.insert(query.clone(), if hit { 1.0 } else { 0.0 });
            }
        }
    }
    Ok(per_k
        .into_iter()
        .map(|(k, scores)| {
            (
                k,
                RankingReport::from_scores(format!("recall@{k}"), scores, excluded.clone()),
            )
        })
        .collect())
}

/// Track and tag selections for one evaluation run.
#[derive(Debug, Clone, Serialize)]
pub struct TaskSpec {
    pub tracks: Vec<String>,
    pub tags: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ZeroShotTasks {
    /// Query-by-tag over all tracks, unseen tags only.
    pub retrieval: TaskSpec,
    /// Tagging over test-split tracks, seen and unseen tags.
    pub tagging: TaskSpec,
}

/// The generalized zero-shot protocol: retrieval is evaluated with all
/// tracks and unseen tags, tagging with test tracks and all tags.
pub fn zero_shot_protocol(dataset: &EvalDataset) -> Result<ZeroShotTasks> {
    let unseen: Vec<String> = dataset
        .tag_split
        .iter()
        .filter(|(_, s)| **s == ZeroShotSplit::Unseen)
        .map(|(t, _)| t.clone())
        .collect();
    if unseen.is_empty() {
        return Err(Error::NoUnseenTags);
    }
    let all_tags: Vec<String> = dataset.tag_split.keys().cloned().collect();
    let all_tracks = dataset.tracks();
    let test_tracks: Vec<String> = all_tracks
        .iter()
        .filter(|t| dataset.track_split.get(*t) == Some(&TrackSplit::Test))
        .cloned()
        .collect();
    Ok(ZeroShotTasks {
        retrieval: TaskSpec {
            tracks: all_tracks,
            tags: unseen,
        },
        tagging: TaskSpec {
            tracks: test_tracks,
            tags: all_tags,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn annotations(entries: &[(&str, &[&str])]) -> Annotations {
        entries
            .iter()
            .map(|(track, tags)| {
                (
                    track.to_string(),
                    tags.iter().map(|t| t.to_string()).collect(),
                )
            })
            .collect()
    }

    #[test]
    fn cooccurrence_counts_shared_tracks() {
        let ann = annotations(&[("t1", &["a", "b"]), ("t2", &["a", "b"])]);
        let cooc = tag_cooccurrence(&ann);
        assert_eq!(cooc.count("a", "b"), 2);
        assert_eq!(cooc.count("b", "a"), 2);
        assert_eq!(cooc.count("a", "a"), 0);

        let disjoint = annotations(&[("t1", &["a"]), ("t2", &["b"])]);
        let cooc = tag_cooccurrence(&disjoint);
        assert_eq!(cooc.count("a", "b"), 0);
    }

    #[test]
    fn cooccurrence_matches_enumeration_oracle() {
        let mut rng = stream_rng(1, "cooc", &[]);
        let tags = ["a", "b", "c", "d", "e"];
        let mut ann = Annotations::new();
        for t in 0..20 {
            let set: BTreeSet<String> = tags
                .iter()
                .filter(|_| rng.gen_bool(0.4))
                .map(|s| s.to_string())
                .collect();
            ann.insert(format!("trk{t}"), set);
        }
        let cooc = tag_cooccurrence(&ann);
        for a in tags {
            for b in tags {
                let expected = if a == b {
                    0
                } else {
                    ann.values()
                        .filter(|s| s.contains(a) && s.contains(b))
                        .count() as u64
                };
                assert_eq!(cooc.count(a, b), expected, "{a},{b}");
            }
        }
    }

    #[test]
    fn ndcg_reference_points() {
        let relevance: BTreeMap<&str, f64> = [("x", 3.0), ("y", 2.0), ("z", 0.0)].into();
        let perfect = ndcg_at_k(&["x", "y", "z"], &relevance, 3).unwrap();
        assert!((perfect - 1.0).abs() < 1e-12);

        let got = ndcg_at_k(&["z", "y", "x"], &relevance, 3).unwrap();
        let dcg = 0.0 + 2.0 / 3f64.log2() + 3.0 / 4f64.log2();
        let idcg = 3.0 + 2.0 / 3f64.log2();
        assert!((got - dcg / idcg).abs() < 1e-12);
        assert!((got - 0.6481).abs() < 5e-4);

        let top = ndcg_at_k(&["x", "z", "y"], &relevance, 1).unwrap();
        assert!((top - 1.0).abs() < 1e-12);

        let zero: BTreeMap<&str, f64> = [("x", 0.0)].into();
        assert!(matches!(
            ndcg_at_k(&["x"], &zero, 1),
            Err(Error::UndefinedNdcg)
        ));
    }

    #[test]
    fn auc_reference_points() {
        assert_eq!(roc_auc(&[0.9, 0.1], &[true, false]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.1, 0.9], &[true, false]).unwrap(), 0.0);
        assert_eq!(roc_auc(&[0.5, 0.5], &[true, false]).unwrap(), 0.5);
        assert!(matches!(
            roc_auc(&[0.5, 0.4], &[true, true]),
            Err(Error::UndefinedAuc)
        ));
    }

    /// O(n^2) pair-counting oracle with ties scored 1/2.
    fn auc_oracle(scores: &[f64], labels: &[bool]) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (i, &si) in scores.iter().enumerate() {
            if !labels[i] {
                continue;
            }
            for (j, &sj) in scores.iter().enumerate() {
                if labels[j] {
                    continue;
                }
                pairs += 1.0;
                if si > sj {
                    wins += 1.0;
                } else if si == sj {
                    wins += 0.5;
                }
            }
        }
        wins / pairs
    }

    #[test]
    fn auc_matches_pair_counting_oracle() {
        let mut rng = stream_rng(2, "auc", &[]);
        for _ in 0..200 {
            let n = rng.gen_range(2..20);
            // Quantized scores force plenty of ties.
            let scores: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_range(0..6)) / 5.0).collect();
            let labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
            if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
                continue;
            }
            let got = roc_auc(&scores, &labels).unwrap();
            let want = auc_oracle(&scores, &labels);
            assert!((got - want).abs() < 1e-12, "{scores:?} {labels:?}");
        }
    }

    #[test]
    fn recall_at_k_shares_tags() {
        let ann = annotations(&[
            ("q", &["rock"]),
            ("t1", &["rock", "metal"]),
            ("t2", &["jazz"]),
            ("empty", &[]),
        ]);
        let retrieved = vec!["t1".to_string(), "t2".to_string()];
        assert_eq!(recall_at_k("q", &retrieved, &ann, 1), Some(true));
        let retrieved = vec!["t2".to_string(), "t1".to_string()];
        assert_eq!(recall_at_k("q", &retrieved, &ann, 1), Some(false));
        assert_eq!(recall_at_k("q", &retrieved, &ann, 2), Some(true));
        assert_eq!(recall_at_k("empty", &retrieved, &ann, 2), None);
    }

    #[test]
    fn recall_matches_brute_force_and_is_monotone() {
        let mut rng = stream_rng(3, "recall", &[]);
        let tags = ["a", "b", "c", "d"];
        for _ in 0..50 {
            let mut ann = Annotations::new();
            for t in 0..10 {
                let set: BTreeSet<String> = tags
                    .iter()
                    .filter(|_| rng.gen_bool(0.5))
                    .map(|s| s.to_string())
                    .collect();
                ann.insert(format!("trk{t}"), set);
            }
            let query = "trk0";
            let retrieved: Vec<String> = (1..10).map(|t| format!("trk{t}")).collect();
            let mut prev = false;
            for k in 1..=retrieved.len() {
                let got = recall_at_k(query, &retrieved, &ann, k);
                let oracle = ann.get(query).filter(|s| !s.is_empty()).map(|qt| {
                    retrieved[..k]
                        .iter()
                        .any(|r| ann[r].intersection(qt).count() > 0)
                });
                assert_eq!(got, oracle);
                if let Some(hit) = got {
                    assert!(hit >= prev, "recall@k not monotone");
                    prev = hit;
                }
            }
        }
    }

    fn aligned_embedding() -> (WordEmbedding, Annotations, BTreeMap<String, TagCategory>) {
        use crate::corpus::{TokenKind, VocabEntry, Vocabulary};
        // Two clusters, each with two content and two context tags; cosine
        // order equals co-occurrence order by construction.
        let names = ["c0", "c1", "c2", "c3", "x0", "x1", "x2", "x3"];
        let vocab = Vocabulary::from_entries(
            names
                .iter()
                .map(|t| VocabEntry {
                    token: t.to_string(),
                    kind: TokenKind::Tag,
                    count: 1,
                })
                .collect(),
        )
        .unwrap();
        #[rustfmt::skip]
        let vectors = vec![
            1.0,  0.0,   // c0, cluster one
            0.95, 0.05,  // c1, cluster one
            0.0,  1.0,   // c2, cluster two
            0.05, 0.95,  // c3, cluster two
            0.9,  0.1,   // x0, cluster one
            0.85, 0.15,  // x1, cluster one
            0.1,  0.9,   // x2, cluster two
            0.15, 0.85,  // x3, cluster two
        ];
        let emb = WordEmbedding::new(vocab, 2, vectors).unwrap();
        let ann = annotations(&[
            ("t1", &["c0", "c1", "x0", "x1"]),
            ("t2", &["c0", "c1", "x0", "x1"]),
            ("t3", &["c2", "c3", "x2", "x3"]),
            ("t4", &["c2", "c3", "x2", "x3"]),
        ]);
        let categories: BTreeMap<String, TagCategory> = [
            ("c0", TagCategory::Content),
            ("c1", TagCategory::Content),
            ("c2", TagCategory::Content),
            ("c3", TagCategory::Content),
            ("x0", TagCategory::Context),
            ("x1", TagCategory::Context),
            ("x2", TagCategory::Context),
            ("x3", TagCategory::Context),
        ]
        .into_iter()
        .map(|(t, c)| (t.to_string(), c))
        .collect();
        (emb, ann, categories)
    }

    #[test]
    fn tag_rank_prediction_is_perfect_when_aligned() {
        let (emb, ann, categories) = aligned_embedding();
        let report = tag_rank_prediction(&emb, &ann, &categories, 10).unwrap();
        assert_eq!(report.directions.len(), 4);
        for (name, dir) in &report.directions {
            assert!(
                (dir.aggregate - 1.0).abs() < 1e-12,
                "{name}: {}",
                dir.aggregate
            );
        }
        assert!((report.average - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tag_rank_single_query_equals_plain_ndcg() {
        let (emb, ann, categories) = aligned_embedding();
        let report = tag_rank_prediction(&emb, &ann, &categories, 3).unwrap();
        // ctx category has one query per cluster; each direction report is
        // the mean of well-defined per-query ndcg values in [0, 1].
        for dir in report.directions.values() {
            for score in dir.per_query.values() {
                assert!((0.0..=1.0).contains(score));
            }
        }
    }

    #[test]
    fn query_by_tag_indicator_scores_are_perfect() {
        let ann = annotations(&[
            ("t1", &["rock"]),
            ("t2", &["rock", "jazz"]),
            ("t3", &["jazz"]),
            ("t4", &[]),
        ]);
        let tracks: Vec<String> = ann.keys().cloned().collect();
        let tags = vec!["rock".to_string(), "jazz".to_string()];
        let indicator = |tag: &str, track: &str| -> Result<f64> {
            Ok(if ann[track].contains(tag) { 1.0 } else { 0.0 })
        };
        let report = query_by_tag_eval(indicator, &tracks, &ann, &tags).unwrap();
        assert_eq!(report.aggregate, 1.0);
        assert_eq!(report.query_count, 2);

        let constant = |_: &str, _: &str| -> Result<f64> { Ok(0.42) };
        let report = query_by_tag_eval(constant, &tracks, &ann, &tags).unwrap();
        assert_eq!(report.aggregate, 0.5);
    }

    #[test]
    fn tagging_excludes_degenerate_tracks() {
        let ann = annotations(&[
            ("t1", &["rock"]),
            ("all", &["rock", "jazz"]),
            ("none", &[]),
        ]);
        let tracks: Vec<String> = ann.keys().cloned().collect();
        let tags = vec!["rock".to_string(), "jazz".to_string()];
        let indicator = |tag: &str, track: &str| -> Result<f64> {
            Ok(if ann[track].contains(tag) { 1.0 } else { 0.0 })
        };
        let report = tagging_eval(indicator, &tracks, &ann, &tags).unwrap();
        assert_eq!(report.query_count, 1);
        assert_eq!(report.excluded_count, 2);
        assert_eq!(report.aggregate, 1.0);
    }

    #[test]
    fn query_by_track_counts_top_k_overlap() {
        let ann = annotations(&[
            ("q", &["rock"]),
            ("near", &["rock"]),
            ("far", &["jazz"]),
        ]);
        let tracks: Vec<String> = ann.keys().cloned().collect();
        // Similarity: q is closest to near.
        let sim = |a: &str, b: &str| -> Result<f64> {
            Ok(match (a, b) {
                ("q", "near") | ("near", "q") => 0.9,
                _ => 0.1,
            })
        };
        let reports = query_by_track_eval(sim, &tracks, &ann, &[1, 2]).unwrap();
        assert_eq!(reports[&1].per_query["q"], 1.0);
        assert_eq!(reports[&2].per_query["q"], 1.0);
        // "far" finds no jazz partner anywhere.
        assert_eq!(reports[&2].per_query["far"], 0.0);
    }

    #[test]
    fn zero_shot_specs_select_the_right_sets() {
        let records = vec![
            AnnotationRecord {
                track_id: "t1".into(),
                artist_id: "a1".into(),
                tags: vec!["rock".into()],
                split: TrackSplit::Train,
            },
            AnnotationRecord {
                track_id: "t2".into(),
                artist_id: "a1".into(),
                tags: vec!["jazz".into()],
                split: TrackSplit::Test,
            },
        ];
        let tags = vec![
            TagMetadata {
                tag: "rock".into(),
                category: TagCategory::Content,
                zs_split: ZeroShotSplit::Seen,
            },
            TagMetadata {
                tag: "jazz".into(),
                category: TagCategory::Content,
                zs_split: ZeroShotSplit::Unseen,
            },
        ];
        let dataset = EvalDataset::from_parts(&records, &tags).unwrap();
        let tasks = zero_shot_protocol(&dataset).unwrap();
        assert_eq!(tasks.retrieval.tags, vec!["jazz".to_string()]);
        assert_eq!(tasks.retrieval.tracks.len(), 2);
        assert_eq!(tasks.tagging.tags.len(), 2);
        assert_eq!(tasks.tagging.tracks, vec!["t2".to_string()]);

        let all_seen = vec![
            TagMetadata {
                tag: "rock".into(),
                category: TagCategory::Content,
                zs_split: ZeroShotSplit::Seen,
            },
            TagMetadata {
                tag: "jazz".into(),
                category: TagCategory::Content,
                zs_split: ZeroShotSplit::Seen,
            },
        ];
        let dataset = EvalDataset::from_parts(&records, &all_seen).unwrap();
        assert!(matches!(
            zero_shot_protocol(&dataset),
            Err(Error::NoUnseenTags)
        ));
    }

    #[test]
    fn zero_shot_counts_scale_to_the_reference_split() {
        // 900 seen + 226 unseen tags: the retrieval spec holds exactly the
        // 226 unseen tags and the tagging spec all 1126.
        let tags: Vec<TagMetadata> = (0..1126)
            .map(|i| TagMetadata {
                tag: format!("tag{i:04}"),
                category: TagCategory::Content,
                zs_split: if i < 900 {
                    ZeroShotSplit::Seen
                } else {
                    ZeroShotSplit::Unseen
                },
            })
            .collect();
        let records = vec![AnnotationRecord {
            track_id: "t1".into(),
            artist_id: "a1".into(),
            tags: vec!["tag0000".into()],
            split: TrackSplit::Test,
        }];
        let dataset = EvalDataset::from_parts(&records, &tags).unwrap();
        let tasks = zero_shot_protocol(&dataset).unwrap();
        assert_eq!(tasks.retrieval.tags.len(), 226);
        assert_eq!(tasks.tagging.tags.len(), 1126);
    }

    #[test]
    fn dataset_requires_categories_for_annotated_tags() {
        let records = vec![AnnotationRecord {
            track_id: "t1".into(),
            artist_id: "a1".into(),
            tags: vec!["mystery".into()],
            split: TrackSplit::Train,
        }];
        assert!(matches!(
            EvalDataset::from_parts(&records, &[]),
            Err(Error::InvalidConfig(_))
        ));
    }

    proptest! {
        #[test]
        fn prop_auc_complement_under_label_flip(
            scores in proptest::collection::vec(0.0f64..1.0, 4..16),
            flips in proptest::collection::vec(proptest::bool::ANY, 4..16),
        ) {
            let n = scores.len().min(flips.len());
            let scores = &scores[..n];
            let labels = &flips[..n];
            prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
            let auc = roc_auc(scores, labels).unwrap();
            let flipped: Vec<bool> = labels.iter().map(|&l| !l).collect();
            let auc_flipped = roc_auc(scores, &flipped).unwrap();
            prop_assert!((auc + auc_flipped - 1.0).abs() < 1e-12);
        }

        #[test]
        fn prop_auc_invariant_under_monotone_transform(
            scores in proptest::collection::vec(0.0f64..1.0, 4..16),
            flips in proptest::collection::vec(proptest::bool::ANY, 4..16),
        ) {
            let n = scores.len().min(flips.len());
            let scores = &scores[..n];
            let labels = &flips[..n];
            prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
            let auc = roc_auc(scores, labels).unwrap();
            // exp is strictly increasing and preserves exact ties.
            let transformed: Vec<f64> = scores.iter().map(|s| s.exp() * 3.0 + 1.0).collect();
            let auc2 = roc_auc(&transformed, labels).unwrap();
            prop_assert!((auc - auc2).abs() < 1e-12);
        }

        #[test]
        fn prop_ndcg_in_unit_interval(
            rels in proptest::collection::vec(0.0f64..5.0, 2..12),
            seed in 0u64..100,
            k in 1usize..12,
        ) {
            prop_assume!(rels.iter().any(|&r| r > 0.0));
            let items: Vec<usize> = (0..rels.len()).collect();
            let relevance: BTreeMap<usize, f64> =
                items.iter().map(|&i| (i, rels[i])).collect();
            let mut shuffled = items.clone();
            use rand::seq::SliceRandom;
            shuffled.shuffle(&mut stream_rng(seed, "ndcg", &[]));
            let v = ndcg_at_k(&shuffled, &relevance, k).unwrap();
            prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
        }
    }
}
