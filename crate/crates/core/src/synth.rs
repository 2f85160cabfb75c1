//! Synthetic two-corpus worlds with known genre structure.
//!
//! Tracks belong to one of `genres` clusters; a track's tags, artist, and
//! review words all come from its genre, so co-annotated tags and track IDs
//! genuinely co-occur in training paragraphs. Used by the behavioral test
//! suites and benchmarks; not part of the training pipeline itself.

use std::collections::BTreeMap;

use rand::Rng;

use crate::corpus::{MusicDocument, TagAnnotation, TagCategory};
use crate::eval::{AnnotationRecord, TagMetadata, TrackSplit, ZeroShotSplit};
use crate::rng::stream_rng;

#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub genres: usize,
    /// Tags per genre, split evenly between content and context.
    pub tags_per_genre: usize,
    pub tracks: usize,
    pub artists_per_genre: usize,
    pub review_words_per_genre: usize,
    pub shared_words: usize,
    pub review_sentences_per_track: usize,
    pub sentence_len: usize,
    /// Tags sampled per track (at least one content and one context).
    pub tags_per_track: usize,
    /// Tag popularity skew: index `i` drawn with weight `1/(i+1)^tag_skew`.
    pub tag_skew: f64,
    /// Probability that a review word comes from the genre pool rather than
    /// the shared pool; 0 makes review text carry no genre signal at all.
    pub genre_word_bias: f64,
    pub general_docs: usize,
    pub general_sentence_len: usize,
    /// Tags per genre marked unseen for the zero-shot split.
    pub unseen_per_genre: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            genres: 2,
            tags_per_genre: 10,
            tracks: 200,
            artists_per_genre: 5,
            review_words_per_genre: 30,
            shared_words: 20,
            review_sentences_per_track: 2,
            sentence_len: 6,
            tags_per_track: 3,
            tag_skew: 1.0,
            genre_word_bias: 0.7,
            general_docs: 50,
            general_sentence_len: 12,
            unseen_per_genre: 2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthWorld {
    pub docs: Vec<MusicDocument>,
    pub general: Vec<Vec<String>>,
    pub annotation_records: Vec<AnnotationRecord>,
    pub tag_metadata: Vec<TagMetadata>,
    pub genre_of_tag: BTreeMap<String, usize>,
    pub genre_of_track: BTreeMap<String, usize>,
}

impl SynthWorld {
    pub fn tags_of_genre(&self, genre: usize) -> Vec<String> {
        self.genre_of_tag
            .iter()
            .filter(|(_, g)| **g == genre)
            .map(|(t, _)| t.clone())
            .collect()
    }
}

/// Zipf-ish pick: index `i` drawn with weight `1/(i+1)^skew`, so low indices
/// are popular tags and high indices rare ones (mirrors real tag
/// distributions).
fn weighted_idx<R: Rng>(rng: &mut R, len: usize, skew: f64) -> usize {
    let weight = |i: usize| (i as f64 + 1.0).powf(-skew);
    let total: f64 = (0..len).map(weight).sum();
    let mut u = rng.gen::<f64>() * total;
    for i in 0..len {
        u -= weight(i);
        if u <= 0.0 {
            return i;
        }
    }
    len - 1
}

pub fn generate(spec: &SynthSpec) -> SynthWorld {
    assert!(spec.genres >= 1 && spec.tags_per_genre >= 2);
    assert!(spec.tags_per_track >= 2 && spec.tags_per_track <= spec.tags_per_genre);
    let mut rng = stream_rng(spec.seed, "synth", &[]);

    let per_cat = spec.tags_per_genre / 2;
    let mut content_tags: Vec<Vec<String>> = Vec::new();
    let mut context_tags: Vec<Vec<String>> = Vec::new();
    let mut genre_of_tag = BTreeMap::new();
    let mut tag_metadata = Vec::new();
    for g in 0..spec.genres {
        let ctn: Vec<String> = (0..per_cat).map(|j| format!("g{g}ctn{j}")).collect();
        let ctx: Vec<String> = (0..spec.tags_per_genre - per_cat)
            .map(|j| format!("g{g}ctx{j}"))
            .collect();
        // Unseen tags come from the mid-popularity range of both categories
        // so they still have enough annotated tracks to evaluate.
        let mut unseen_candidates: Vec<&String> = Vec::new();
        for j in 2.. {
            let c = ctn.get(j);
            let x = ctx.get(j);
            if c.is_none() && x.is_none() {
                break;
            }
            unseen_candidates.extend(c);
            unseen_candidates.extend(x);
        }
        let unseen: Vec<String> = unseen_candidates
            .into_iter()
            .take(spec.unseen_per_genre)
            .cloned()
            .collect();
        for (i, tag) in ctn.iter().chain(ctx.iter()).enumerate() {
            genre_of_tag.insert(tag.clone(), g);
            tag_metadata.push(TagMetadata {
                tag: tag.clone(),
                category: if i < per_cat {
                    TagCategory::Content
                } else {
                    TagCategory::Context
                },
                zs_split: if unseen.contains(tag) {
                    ZeroShotSplit::Unseen
                } else {
                    ZeroShotSplit::Seen
                },
            });
        }
        content_tags.push(ctn);
        context_tags.push(ctx);
    }

    let genre_words: Vec<Vec<String>> = (0..spec.genres)
        .map(|g| {
            (0..spec.review_words_per_genre)
                .map(|j| format!("w{g}x{j}"))
                .collect()
        })
        .collect();
    let shared: Vec<String> = (0..spec.shared_words).map(|j| format!("s{j}")).collect();

    let mut docs = Vec::with_capacity(spec.tracks);
    let mut annotation_records = Vec::with_capacity(spec.tracks);
    let mut genre_of_track = BTreeMap::new();
    for i in 0..spec.tracks {
        let g = i % spec.genres;
        let track_id = format!("trk{i:04}");
        let artist_id = format!("art{g}x{}", (i / spec.genres) % spec.artists_per_genre);
        genre_of_track.insert(track_id.clone(), g);

        // At least one tag of each category, remainder drawn from the
        // genre; all draws are popularity-weighted.
        let mut tags: Vec<String> = Vec::with_capacity(spec.tags_per_track);
        let skew = spec.tag_skew;
        tags.push(content_tags[g][weighted_idx(&mut rng, content_tags[g].len(), skew)].clone());
        tags.push(context_tags[g][weighted_idx(&mut rng, context_tags[g].len(), skew)].clone());
        let all: Vec<&String> = content_tags[g].iter().chain(&context_tags[g]).collect();
        while tags.len() < spec.tags_per_track {
            let tag = all[weighted_idx(&mut rng, all.len(), skew)];
            if !tags.contains(tag) {
                tags.push(tag.clone());
            }
        }

        let review_sentences: Vec<Vec<String>> = (0..spec.review_sentences_per_track)
            .map(|_| {
                (0..spec.sentence_len)
                    .map(|_| {
                        if rng.gen_bool(spec.genre_word_bias) {
                            genre_words[g][rng.gen_range(0..genre_words[g].len())].clone()
                        } else {
                            shared[rng.gen_range(0..shared.len())].clone()
                        }
                    })
                    .collect()
            })
            .collect();

        let split = match i % 10 {
            0..=6 => TrackSplit::Train,
            7 => TrackSplit::Valid,
            _ => TrackSplit::Test,
        };
        annotation_records.push(AnnotationRecord {
            track_id: track_id.clone(),
            artist_id: artist_id.clone(),
            tags: tags.clone(),
            split,
        });
        docs.push(MusicDocument {
            track_id,
            artist_id,
            tags: tags
                .into_iter()
                .map(|name| {
                    let category = tag_metadata
                        .iter()
                        .find(|t| t.tag == name)
                        .map(|t| t.category)
                        .unwrap();
                    TagAnnotation { name, category }
                })
                .collect(),
            review_sentences,
        });
    }

    let general: Vec<Vec<String>> = (0..spec.general_docs)
        .map(|_| {
            (0..spec.general_sentence_len)
                .map(|_| {
                    if rng.gen_bool(0.5) {
                        shared[rng.gen_range(0..shared.len())].clone()
                    } else {
                        let g = rng.gen_range(0..spec.genres);
                        genre_words[g][rng.gen_range(0..genre_words[g].len())].clone()
                    }
                })
                .collect()
        })
        .collect();

    SynthWorld {
        docs,
        general,
        annotation_records,
        tag_metadata,
        genre_of_tag,
        genre_of_track,
    }
}
