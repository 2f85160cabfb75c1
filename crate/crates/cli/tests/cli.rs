//! End-to-end tests of the `songvec` binary: exit codes, manifests,
//! determinism, and delegation to the library paths.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use songvec_core::corpus::{TokenKind, VocabEntry, Vocabulary};
use songvec_core::embedding::WordEmbedding;

fn songvec() -> Command {
    Command::new(env!("CARGO_BIN_EXE_songvec"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = songvec().args(args).output().expect("spawn songvec");
    assert!(
        out.status.success(),
        "command {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn exit_code(args: &[&str]) -> (i32, String) {
    let out = songvec().args(args).output().expect("spawn songvec");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stderr).to_string(),
    )
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let f = Fixture { dir };
        fs::write(
            f.path("general.txt"),
            "the warm analog synth pad drifts slowly\n\
             a loud guitar riff crashes like waves\n\
             club lights pulse with deep bass all night\n\
             quiet acoustic strings for a calm morning\n",
        )
        .unwrap();
        fs::write(
            f.path("music.jsonl"),
            concat!(
                r#"{"track_id":"TRK001","artist_id":"ART01","tags":[{"name":"deep_house","category":"content"},{"name":"club","category":"context"}],"review_sentences":["warm analog synth and deep bass","club lights all night"]}"#,
                "\n",
                r#"{"track_id":"TRK002","artist_id":"ART01","tags":[{"name":"deep_house","category":"content"},{"name":"party","category":"context"}],"review_sentences":["deep bass pulse for the club"]}"#,
                "\n",
                r#"{"track_id":"TRK003","artist_id":"ART02","tags":[{"name":"acoustic","category":"content"},{"name":"calm","category":"context"}],"review_sentences":["quiet acoustic strings calm morning"]}"#,
                "\n",
                r#"{"track_id":"TRK004","artist_id":"ART02","tags":[{"name":"acoustic","category":"content"},{"name":"morning","category":"context"}],"review_sentences":["gentle guitar for a quiet morning"]}"#,
                "\n",
            ),
        )
        .unwrap();
        fs::write(
            f.path("cfg.json"),
            r#"{
  "seed": 7,
  "workers": 1,
  "corpus": {"window_size": 5, "review_repeat": 4, "min_count": 1, "subsample_threshold": 0},
  "sgns": {"dim": 16, "epochs": 20, "negatives": 5, "initial_lr": 0.05}
}"#,
        )
        .unwrap();
        fs::write(
            f.path("ann.jsonl"),
            concat!(
                r#"{"track_id":"TRK001","artist_id":"ART01","tags":["deep_house","club"],"split":"train"}"#,
                "\n",
                r#"{"track_id":"TRK002","artist_id":"ART01","tags":["deep_house","party"],"split":"test"}"#,
                "\n",
                r#"{"track_id":"TRK003","artist_id":"ART02","tags":["acoustic","calm"],"split":"train"}"#,
                "\n",
                r#"{"track_id":"TRK004","artist_id":"ART02","tags":["acoustic","morning"],"split":"test"}"#,
                "\n",
            ),
        )
        .unwrap();
        fs::write(
            f.path("tags.tsv"),
            "deep_house\tcontent\tseen\nacoustic\tcontent\tseen\nclub\tcontext\tseen\n\
             party\tcontext\tunseen\ncalm\tcontext\tseen\nmorning\tcontext\tunseen\n",
        )
        .unwrap();
        f
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn arg(&self, name: &str) -> String {
        self.path(name).display().to_string()
    }

    fn build_corpus(&self) {
        run_ok(&[
            "build-corpus",
            "--config",
            &self.arg("cfg.json"),
            "--general",
            &self.arg("general.txt"),
            "--music",
            &self.arg("music.jsonl"),
            "--out",
            &self.arg("corpus"),
        ]);
    }

    fn train_word(&self, out: &str) {
        run_ok(&[
            "train-word",
            "--config",
            &self.arg("cfg.json"),
            "--corpus",
            &self.arg("corpus"),
            "--out",
            &self.arg(out),
        ]);
    }
}

fn read_manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn build_corpus_counts_match_hand_totals() {
    let f = Fixture::new();
    f.build_corpus();
    let manifest = read_manifest(&f.path("corpus"));
    let counts = &manifest["counts"];
    // general.txt: 7 + 7 + 8 + 7 tokens; reviews: 6+4, 6, 5, 6 tokens.
    assert_eq!(counts["general_docs"], 4);
    assert_eq!(counts["general_tokens"], 29);
    assert_eq!(counts["music_docs"], 4);
    assert_eq!(counts["review_tokens"], 27);
    assert_eq!(counts["tag_annotations"], 8);
    // + one artist and one track token per document.
    assert_eq!(counts["total_tokens"], 29 + 27 + 8 + 8);
}

#[test]
fn build_corpus_missing_music_file_exits_2() {
    let f = Fixture::new();
    let missing = f.arg("not-there.jsonl");
    let (code, stderr) = exit_code(&[
        "build-corpus",
        "--music",
        &missing,
        "--out",
        &f.arg("corpus"),
    ]);
    assert_eq!(code, 2);
    assert!(stderr.contains("not-there.jsonl"), "stderr: {stderr}");
}

#[test]
fn build_corpus_rerun_is_byte_identical() {
    let f = Fixture::new();
    f.build_corpus();
    let first: Vec<(String, Vec<u8>)> = ["vocab.tsv", "shards/general-000.txt", "shards/music-000.txt", "manifest.json"]
        .iter()
        .map(|name| (name.to_string(), fs::read(f.path("corpus").join(name)).unwrap()))
        .collect();
    fs::remove_dir_all(f.path("corpus")).unwrap();
    f.build_corpus();
    for (name, bytes) in first {
        assert_eq!(
            bytes,
            fs::read(f.path("corpus").join(&name)).unwrap(),
            "{name} differs between reruns"
        );
    }
}

#[test]
fn train_word_defaults_echo_reference_hyperparameters() {
    let f = Fixture::new();
    // Default config: dim 300, window 15, epochs 15, negatives 20.
    run_ok(&[
        "build-corpus",
        "--general",
        &f.arg("general.txt"),
        "--music",
        &f.arg("music.jsonl"),
        "--out",
        &f.arg("corpus"),
    ]);
    run_ok(&[
        "train-word",
        "--corpus",
        &f.arg("corpus"),
        "--out",
        &f.arg("word-defaults"),
    ]);
    let manifest = read_manifest(&f.path("word-defaults"));
    assert_eq!(manifest["config"]["sgns"]["dim"], 300);
    assert_eq!(manifest["config"]["corpus"]["window_size"], 15);
    assert_eq!(manifest["config"]["sgns"]["epochs"], 15);
    assert_eq!(manifest["config"]["sgns"]["negatives"], 20);
    assert_eq!(manifest["counts"]["dim"], 300);
    assert_eq!(manifest["counts"]["window_size"], 15);
    assert_eq!(manifest["counts"]["negatives"], 20);
}

#[test]
fn train_word_is_deterministic_and_validates_inputs() {
    let f = Fixture::new();
    f.build_corpus();
    f.train_word("word1");
    f.train_word("word2");
    assert_eq!(
        fs::read(f.path("word1/embedding.txt")).unwrap(),
        fs::read(f.path("word2/embedding.txt")).unwrap()
    );
    assert_eq!(
        fs::read(f.path("word1/embedding.vocab.tsv")).unwrap(),
        fs::read(f.path("word2/embedding.vocab.tsv")).unwrap()
    );

    let (code, stderr) = exit_code(&[
        "train-word",
        "--corpus",
        &f.arg("no-such-dir"),
        "--out",
        &f.arg("word3"),
    ]);
    assert_eq!(code, 2, "stderr: {stderr}");
}

fn write_joint_fixtures(f: &Fixture) {
    // Two feature clusters matching the two artists' catalogs.
    let mut features = String::new();
    let mut supervision = String::new();
    for (track, artist, tags, base) in [
        ("TRK001", "ART01", r#"["deep_house","club"]"#, [1.0, 0.5, 0.0, 0.0]),
        ("TRK002", "ART01", r#"["deep_house","party"]"#, [0.9, 0.6, 0.1, 0.0]),
        ("TRK003", "ART02", r#"["acoustic","calm"]"#, [0.0, 0.1, 1.0, 0.5]),
        ("TRK004", "ART02", r#"["acoustic","morning"]"#, [0.1, 0.0, 0.9, 0.6]),
    ] {
        for clip in 0..2 {
            let vec: Vec<f64> = base.iter().map(|v| v + 0.01 * clip as f64).collect();
            features.push_str(&format!(
                r#"{{"clip_id":"{track}_c{clip}","track_id":"{track}","vector":{vec:?}}}"#
            ));
            features.push('\n');
            supervision.push_str(&format!(
                r#"{{"clip_id":"{track}_c{clip}","track_id":"{track}","artist_id":"{artist}","tags":{tags}}}"#
            ));
            supervision.push('\n');
        }
    }
    fs::write(f.path("features.jsonl"), features).unwrap();
    fs::write(f.path("supervision.jsonl"), supervision).unwrap();
    fs::write(
        f.path("joint_cfg.json"),
        r#"{"seed": 7, "joint": {"joint_dim": 8, "hidden": 12, "epochs": 30, "lr": 0.02, "batch_size": 4}}"#,
    )
    .unwrap();
}

#[test]
fn train_joint_lambda_flags_drive_supervision_and_validation() {
    let f = Fixture::new();
    f.build_corpus();
    f.train_word("word");
    write_joint_fixtures(&f);

    run_ok(&[
        "train-joint",
        "--config",
        &f.arg("joint_cfg.json"),
        "--embedding",
        &f.arg("word/embedding.txt"),
        "--features",
        &f.arg("features.jsonl"),
        "--supervision",
        &f.arg("supervision.jsonl"),
        "--lambda-tag",
        "1",
        "--lambda-artist",
        "0",
        "--lambda-track",
        "0",
        "--out",
        &f.arg("joint-tag"),
    ]);
    let manifest = read_manifest(&f.path("joint-tag"));
    assert_eq!(manifest["counts"]["supervision_tag"], 1);
    assert_eq!(manifest["counts"]["supervision_artist"], 0);
    assert_eq!(manifest["counts"]["supervision_track"], 0);
    assert!(f.path("joint-tag/checkpoint.json").exists());

    // The training-curve log ends well below where it starts: the fixture
    // clusters are separable under tag supervision.
    let log = fs::read_to_string(f.path("joint-tag/train_log.tsv")).unwrap();
    let losses: Vec<f64> = log
        .lines()
        .skip(1)
        .map(|l| l.split('\t').nth(1).unwrap().parse().unwrap())
        .collect();
    let (first, last) = (losses[0], *losses.last().unwrap());
    assert!(
        last < 0.5 * first && last < 0.1,
        "training log did not converge: first {first}, last {last}"
    );

    // All-zero weights are rejected before training starts.
    let (code, stderr) = exit_code(&[
        "train-joint",
        "--config",
        &f.arg("joint_cfg.json"),
        "--embedding",
        &f.arg("word/embedding.txt"),
        "--features",
        &f.arg("features.jsonl"),
        "--supervision",
        &f.arg("supervision.jsonl"),
        "--lambda-tag",
        "0",
        "--lambda-artist",
        "0",
        "--lambda-track",
        "0",
        "--out",
        &f.arg("joint-none"),
    ]);
    assert_eq!(code, 2);
    assert!(stderr.contains("supervision weight"), "stderr: {stderr}");
}

#[test]
fn train_joint_is_deterministic() {
    let f = Fixture::new();
    f.build_corpus();
    f.train_word("word");
    write_joint_fixtures(&f);
    for out in ["joint1", "joint2"] {
        run_ok(&[
            "train-joint",
            "--config",
            &f.arg("joint_cfg.json"),
            "--embedding",
            &f.arg("word/embedding.txt"),
            "--features",
            &f.arg("features.jsonl"),
            "--supervision",
            &f.arg("supervision.jsonl"),
            "--out",
            &f.arg(out),
        ]);
    }
    assert_eq!(
        fs::read(f.path("joint1/checkpoint.json")).unwrap(),
        fs::read(f.path("joint2/checkpoint.json")).unwrap()
    );
}

/// A synthetic embedding whose cosine order matches co-occurrence order.
fn write_aligned_embedding(f: &Fixture) {
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
        1.0,  0.0,
        0.95, 0.05,
        0.0,  1.0,
        0.05, 0.95,
        0.9,  0.1,
        0.85, 0.15,
        0.1,  0.9,
        0.15, 0.85,
    ];
    let emb = WordEmbedding::new(vocab, 2, vectors).unwrap();
    emb.save(&f.path("aligned.txt")).unwrap();
    fs::write(
        f.path("aligned-ann.jsonl"),
        concat!(
            r#"{"track_id":"t1","artist_id":"a1","tags":["c0","c1","x0","x1"],"split":"train"}"#,
            "\n",
            r#"{"track_id":"t2","artist_id":"a1","tags":["c0","c1","x0","x1"],"split":"test"}"#,
            "\n",
            r#"{"track_id":"t3","artist_id":"a2","tags":["c2","c3","x2","x3"],"split":"train"}"#,
            "\n",
            r#"{"track_id":"t4","artist_id":"a2","tags":["c2","c3","x2","x3"],"split":"test"}"#,
            "\n",
        ),
    )
    .unwrap();
    fs::write(
        f.path("aligned-tags.tsv"),
        "c0\tcontent\tseen\nc1\tcontent\tseen\nc2\tcontent\tseen\nc3\tcontent\tseen\n\
         x0\tcontext\tseen\nx1\tcontext\tseen\nx2\tcontext\tseen\nx3\tcontext\tseen\n",
    )
    .unwrap();
}

#[test]
fn eval_tag_rank_perfect_on_aligned_embedding_and_reports_are_stable() {
    let f = Fixture::new();
    write_aligned_embedding(&f);
    run_ok(&[
        "eval",
        "tag-rank",
        "--embedding",
        &f.arg("aligned.txt"),
        "--annotations",
        &f.arg("aligned-ann.jsonl"),
        "--tags",
        &f.arg("aligned-tags.tsv"),
        "--k",
        "10",
        "--out",
        &f.arg("report1"),
    ]);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(f.path("report1/report.json")).unwrap()).unwrap();
    assert_eq!(report["average"], 1.0);
    for dir in ["ctn_to_ctn", "ctn_to_ctx", "ctx_to_ctn", "ctx_to_ctx"] {
        assert_eq!(report["directions"][dir]["aggregate"], 1.0, "{dir}");
    }

    run_ok(&[
        "eval",
        "tag-rank",
        "--embedding",
        &f.arg("aligned.txt"),
        "--annotations",
        &f.arg("aligned-ann.jsonl"),
        "--tags",
        &f.arg("aligned-tags.tsv"),
        "--k",
        "10",
        "--out",
        &f.arg("report2"),
    ]);
    assert_eq!(
        fs::read(f.path("report1/report.json")).unwrap(),
        fs::read(f.path("report2/report.json")).unwrap()
    );
}

#[test]
fn eval_zero_shot_without_unseen_tags_exits_2() {
    let f = Fixture::new();
    write_aligned_embedding(&f);
    write_joint_fixtures(&f);
    // aligned-tags.tsv marks every tag seen.
    let (code, stderr) = exit_code(&[
        "eval",
        "zero-shot",
        "--embedding",
        &f.arg("aligned.txt"),
        "--annotations",
        &f.arg("aligned-ann.jsonl"),
        "--tags",
        &f.arg("aligned-tags.tsv"),
        "--checkpoint",
        &f.arg("features.jsonl"), // never reached; split check fires first
        "--features",
        &f.arg("features.jsonl"),
        "--out",
        &f.arg("zs"),
    ]);
    assert_eq!(code, 2);
    assert!(stderr.contains("unseen"), "stderr: {stderr}");
}

#[test]
fn query_delegates_to_nearest_and_handles_oov() {
    let f = Fixture::new();
    f.build_corpus();
    f.train_word("word");
    let emb = WordEmbedding::load(&f.path("word/embedding.txt")).unwrap();

    // Single-tag query with a track filter must match the library ranking.
    let out = run_ok(&[
        "query",
        "--embedding",
        &f.arg("word/embedding.txt"),
        "--kind",
        "track",
        "-k",
        "2",
        "deep_house",
    ]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    let cli_tokens: Vec<&str> = stdout
        .lines()
        .map(|l| l.split('\t').next().unwrap())
        .collect();
    let query = emb.vector_of("deep_house").unwrap().to_vec();
    let filter: HashSet<TokenKind> = [TokenKind::TrackId].into();
    let expected: Vec<String> = emb
        .nearest(&query, 2, Some(&filter))
        .unwrap()
        .into_iter()
        .map(|(id, _)| emb.vocab().token(id).to_string())
        .collect();
    assert_eq!(cli_tokens, expected);

    // k larger than the candidate pool returns the whole pool.
    let out = run_ok(&[
        "query",
        "--embedding",
        &f.arg("word/embedding.txt"),
        "--kind",
        "track",
        "-k",
        "100",
        "deep_house",
    ]);
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 4);

    // Multi-word query equals querying the mean vector directly.
    let out = run_ok(&[
        "query",
        "--embedding",
        &f.arg("word/embedding.txt"),
        "-k",
        "3",
        "deep club",
    ]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    let cli_tokens: Vec<&str> = stdout
        .lines()
        .map(|l| l.split('\t').next().unwrap())
        .collect();
    let (mean, _) = emb
        .query_vector(&["deep".to_string(), "club".to_string()])
        .unwrap();
    let expected: Vec<String> = emb
        .nearest(&mean, 3, None)
        .unwrap()
        .into_iter()
        .map(|(id, _)| emb.vocab().token(id).to_string())
        .collect();
    assert_eq!(cli_tokens, expected);

    // Fully out-of-vocabulary queries list the tokens and exit 2.
    let (code, stderr) = exit_code(&[
        "query",
        "--embedding",
        &f.arg("word/embedding.txt"),
        "zzxqy",
        "qqqzy",
    ]);
    assert_eq!(code, 2);
    assert!(stderr.contains("zzxqy") && stderr.contains("qqqzy"), "{stderr}");
}

#[test]
fn extract_features_produces_deterministic_vectors() {
    let f = Fixture::new();
    // A 5-second 220 Hz tone plus a 5-second 4400 Hz tone.
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: 22_050,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    for (name, freq) in [("low.wav", 220.0f64), ("high.wav", 4400.0)] {
        let mut writer = hound::WavWriter::create(f.path(name), spec).unwrap();
        for n in 0..5 * 22_050u32 {
            let v = (2.0 * std::f64::consts::PI * freq * f64::from(n) / 22_050.0).sin();
            writer.write_sample((v * 20_000.0) as i16).unwrap();
        }
        writer.finalize().unwrap();
    }
    fs::write(
        f.path("clips.jsonl"),
        format!(
            "{}\n{}\n",
            serde_json::json!({"clip_id": "c_low", "track_id": "t_low", "path": f.path("low.wav")}),
            serde_json::json!({"clip_id": "c_high", "track_id": "t_high", "path": f.path("high.wav")}),
        ),
    )
    .unwrap();
    for out in ["feat1", "feat2"] {
        run_ok(&[
            "extract-features",
            "--clips",
            &f.arg("clips.jsonl"),
            "--seed",
            "5",
            "--out",
            &f.arg(out),
        ]);
    }
    assert_eq!(
        fs::read(f.path("feat1/features.jsonl")).unwrap(),
        fs::read(f.path("feat2/features.jsonl")).unwrap()
    );
    let clips = songvec_core::features::read_features(&f.path("feat1/features.jsonl")).unwrap();
    assert_eq!(clips.len(), 2);
    assert_eq!(clips[0].vector.len(), 256);
    // The two tones must light up different mel regions: compare the mean
    // halves of the summaries.
    let peak = |v: &[f64]| {
        v[..128]
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| a.total_cmp(b))
            .unwrap()
            .0
    };
    assert!(peak(&clips[0].vector) < peak(&clips[1].vector));
}

#[test]
fn multi_worker_training_over_multiple_shards() {
    let f = Fixture::new();
    run_ok(&[
        "build-corpus",
        "--config",
        &f.arg("cfg.json"),
        "--general",
        &f.arg("general.txt"),
        "--music",
        &f.arg("music.jsonl"),
        "--workers",
        "2",
        "--out",
        &f.arg("corpus2w"),
    ]);
    assert!(f.path("corpus2w/shards/general-001.txt").exists());
    assert!(f.path("corpus2w/shards/music-001.txt").exists());
    run_ok(&[
        "train-word",
        "--config",
        &f.arg("cfg.json"),
        "--corpus",
        &f.arg("corpus2w"),
        "--workers",
        "2",
        "--out",
        &f.arg("word2w"),
    ]);
    let emb = WordEmbedding::load(&f.path("word2w/embedding.txt")).unwrap();
    assert!(emb.vocab().id("deep_house").is_some());
    assert!(emb.vocab().id("TRK004".to_lowercase().as_str()).is_some() || emb.vocab().id("TRK004").is_some());
}

#[test]
fn music_only_corpus_trains_an_id_heavy_embedding() {
    let f = Fixture::new();
    run_ok(&[
        "build-corpus",
        "--config",
        &f.arg("cfg.json"),
        "--music",
        &f.arg("music.jsonl"),
        "--out",
        &f.arg("corpus-music"),
    ]);
    let manifest = read_manifest(&f.path("corpus-music"));
    assert_eq!(manifest["counts"]["general_docs"], 0);
    run_ok(&[
        "train-word",
        "--config",
        &f.arg("cfg.json"),
        "--corpus",
        &f.arg("corpus-music"),
        "--out",
        &f.arg("word-music"),
    ]);
    let emb = WordEmbedding::load(&f.path("word-music/embedding.txt")).unwrap();
    // Tags and IDs are all present; general-only words are not.
    for token in ["deep_house", "acoustic", "TRK001", "ART02"] {
        assert!(emb.vocab().id(token).is_some(), "{token} missing");
    }
    assert!(emb.vocab().id("drifts").is_none());
}

#[test]
fn static_shards_preserve_verbatim_id_tokens_through_training() {
    // Shard reloading must not re-normalize pre-tokenized lines: uppercase
    // track/artist codes have to keep matching the vocabulary, otherwise
    // they silently drop out of training and keep their random init.
    let f = Fixture::new();
    f.build_corpus();
    f.train_word("word");
    let out = run_ok(&[
        "query",
        "--embedding",
        &f.arg("word/embedding.txt"),
        "--kind",
        "track",
        "-k",
        "2",
        "deep_house",
    ]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    let mut top: Vec<&str> = stdout
        .lines()
        .map(|l| l.split('\t').next().unwrap())
        .collect();
    top.sort_unstable();
    // TRK001 and TRK002 are the two deep_house tracks in the fixture.
    assert_eq!(top, vec!["TRK001", "TRK002"], "got ranking:\n{stdout}");
}

#[test]
fn per_epoch_mode_reshuffles_and_stays_deterministic() {
    let f = Fixture::new();
    fs::write(
        f.path("cfg-aug.json"),
        r#"{
  "seed": 7,
  "workers": 1,
  "corpus": {"window_size": 5, "review_repeat": 4, "min_count": 1, "subsample_threshold": 0, "shuffle_mode": "per_epoch"},
  "sgns": {"dim": 16, "epochs": 20, "negatives": 5, "initial_lr": 0.05}
}"#,
    )
    .unwrap();
    run_ok(&[
        "build-corpus",
        "--config",
        &f.arg("cfg-aug.json"),
        "--general",
        &f.arg("general.txt"),
        "--music",
        &f.arg("music.jsonl"),
        "--out",
        &f.arg("corpus-aug"),
    ]);
    // PerEpoch shards keep structured documents for re-assembly.
    assert!(f.path("corpus-aug/shards/music-000.jsonl").exists());
    assert!(!f.path("corpus-aug/shards/music-000.txt").exists());

    for out in ["word-aug1", "word-aug2"] {
        run_ok(&[
            "train-word",
            "--config",
            &f.arg("cfg-aug.json"),
            "--corpus",
            &f.arg("corpus-aug"),
            "--out",
            &f.arg(out),
        ]);
    }
    assert_eq!(
        fs::read(f.path("word-aug1/embedding.txt")).unwrap(),
        fs::read(f.path("word-aug2/embedding.txt")).unwrap()
    );

    // IDs still train: the deep_house tracks outrank the acoustic ones.
    let out = run_ok(&[
        "query",
        "--embedding",
        &f.arg("word-aug1/embedding.txt"),
        "--kind",
        "track",
        "-k",
        "2",
        "deep_house",
    ]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    let mut top: Vec<&str> = stdout
        .lines()
        .map(|l| l.split('\t').next().unwrap())
        .collect();
    top.sort_unstable();
    assert_eq!(top, vec!["TRK001", "TRK002"], "got ranking:\n{stdout}");
}
