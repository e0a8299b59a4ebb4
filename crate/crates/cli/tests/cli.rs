use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::Path;
use std::process::{Command, Output};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use lyrics_audit::data_model::{load_predictions, save_predictions, save_records, Format};
use lyrics_audit::{PredictionRecord, PromptId, SongRecord, Source};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_lyrics-audit"));
    for var in ["AUDIT_SEED", "AUDIT_ENDPOINT", "AUDIT_MODEL", "AUDIT_API_KEY", "AUDIT_CONFIG"] {
        cmd.env_remove(var);
    }
    cmd
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn song(i: usize, gender: usize, region: usize) -> SongRecord {
    let lyrics = format!("walking down the road number {i} tonight");
    SongRecord {
        song_id: format!("s{i:03}"),
        artist_id: format!("a{i:03}"),
        title: format!("Song {i}"),
        source: Source::Deezer,
        word_count: lyrics.split_whitespace().count() as u32,
        lyrics: Some(lyrics),
        translated_lyrics: None,
        needs_translation: false,
        true_gender: gender,
        true_region: region,
        genre: Some(if i % 2 == 0 { "rap" } else { "pop" }.into()),
    }
}

/// 6 regions × 6 songs, genders alternating; the model gets every label right.
fn perfect_corpus(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let songs: Vec<SongRecord> = (0..36).map(|i| song(i, i % 2, i / 6)).collect();
    let preds: Vec<PredictionRecord> = songs
        .iter()
        .map(|s| {
            let mut p = PredictionRecord::unparsed(&s.song_id, "m1", PromptId::Regular, "", 0.0);
            p.pred_gender = Some(s.true_gender);
            p.pred_region = Some(s.true_region);
            p.refresh_validity();
            p
        })
        .collect();
    let sp = dir.join("songs.jsonl");
    let pp = dir.join("preds.jsonl");
    save_records(&sp, Format::Jsonl, &songs).unwrap();
    save_predictions(&pp, Format::Jsonl, &preds).unwrap();
    (sp, pp)
}

fn tsv_value(tsv: &str, metric: &str) -> f64 {
    tsv.lines()
        .map(|l| l.split('\t').collect::<Vec<_>>())
        .find(|c| c[3] == metric)
        .unwrap_or_else(|| panic!("no {metric} row in\n{tsv}"))[4]
        .parse()
        .unwrap()
}

#[test]
fn balanced_metrics_on_perfect_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let (songs, preds) = perfect_corpus(dir.path());
    let out = dir.path().join("m");
    let o = run(bin()
        .args(["metrics", "--attribute", "ethnicity", "--balanced", "--seed", "3", "--iterations", "50"])
        .arg("--songs")
        .arg(&songs)
        .arg("--predictions")
        .arg(&preds)
        .arg("--out")
        .arg(&out));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let tsv = std::fs::read_to_string(out.join("metrics.tsv")).unwrap();
    assert!(tsv.starts_with("model\tprompt\tattribute\tmetric\tvalue\tci_low\tci_high\tn_valid\tn_invalid\n"));
    assert_eq!(tsv_value(&tsv, "accuracy"), 1.0);
    assert_eq!(tsv_value(&tsv, "mad"), 0.0);
    assert_eq!(tsv_value(&tsv, "rd"), 0.0);
}

#[test]
fn unknown_flag_exits_2() {
    let o = run(bin().args(["metrics", "--no-such-flag"]));
    assert_eq!(o.status.code(), Some(2));
    let o = run(bin().arg("frobnicate"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn resampling_without_seed_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let (songs, preds) = perfect_corpus(dir.path());
    let o = run(bin()
        .args(["tests", "--attribute", "gender"])
        .arg("--songs")
        .arg(&songs)
        .arg("--predictions")
        .arg(&preds)
        .arg("--out")
        .arg(dir.path().join("t")));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--seed"));
}

#[test]
fn seed_from_config_file_and_env() {
    let dir = tempfile::tempdir().unwrap();
    let (songs, preds) = perfect_corpus(dir.path());
    let conf = dir.path().join("audit.conf");
    std::fs::write(&conf, "seed = 11\niterations = 40\n").unwrap();
    let o = run(bin()
        .args(["tests", "--attribute", "gender"])
        .arg("--config")
        .arg(&conf)
        .arg("--songs")
        .arg(&songs)
        .arg("--predictions")
        .arg(&preds)
        .arg("--out")
        .arg(dir.path().join("t1")));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = run(bin()
        .args(["tests", "--attribute", "gender", "--iterations", "40"])
        .env("AUDIT_SEED", "11")
        .arg("--songs")
        .arg(&songs)
        .arg("--predictions")
        .arg(&preds)
        .arg("--out")
        .arg(dir.path().join("t2")));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let a = std::fs::read(dir.path().join("t1/tests.tsv")).unwrap();
    let b = std::fs::read(dir.path().join("t2/tests.tsv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn missing_input_fails_with_stage_name() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(bin()
        .args(["metrics", "--iterations", "0"])
        .arg("--songs")
        .arg(dir.path().join("absent.jsonl"))
        .arg("--predictions")
        .arg(dir.path().join("absent2.jsonl"))
        .arg("--out")
        .arg(dir.path().join("m")));
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("stage `load`"));
}

#[test]
fn report_is_byte_identical_on_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let (songs, preds) = perfect_corpus(dir.path());
    let report = |out: &str| {
        run(bin()
            .args(["report", "--seed", "5", "--iterations", "30", "--stratum-n", "0.5"])
            .arg("--songs")
            .arg(&songs)
            .arg("--predictions")
            .arg(&preds)
            .arg("--out")
            .arg(dir.path().join(out)))
    };
    let (a, b) = (report("r1"), report("r2"));
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert!(b.status.success());
    for f in ["report.json", "metrics.tsv", "tests.tsv", "distributions.tsv", "correlations.tsv"] {
        let x = std::fs::read(dir.path().join("r1").join(f)).unwrap();
        let y = std::fs::read(dir.path().join("r2").join(f)).unwrap();
        assert_eq!(x, y, "{f} differs");
    }
    let json: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("r1/report.json")).unwrap()).unwrap();
    assert_eq!(json["metrics"].as_array().unwrap().len(), 2 * 7);
    assert_eq!(json["failures"].as_array().unwrap().len(), 0);
}

/// Minimal HTTP/1.1 server answering every POST with a fixed chat completion.
/// The first `fail_first` requests get a 503.
fn serve(answer: &'static str, fail_first: usize) -> (String, Arc<AtomicUsize>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = hits.clone();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut length = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 {
                    break;
                }
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap_or(0);
                }
                if line == "\r\n" {
                    break;
                }
            }
            let mut body = vec![0; length];
            let _ = reader.read_exact(&mut body);
            let n = counter.fetch_add(1, Ordering::SeqCst);
            let (status, payload) = if n < fail_first {
                ("503 Service Unavailable", "busy".to_string())
            } else {
                ("200 OK", serde_json::json!({"choices": [{"message": {"content": answer}}]}).to_string())
            };
            let _ = write!(
                stream,
                "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
                payload.len()
            );
        }
    });
    (format!("http://{addr}/v1"), hits)
}

#[test]
fn infer_against_mock_endpoint() {
    let dir = tempfile::tempdir().unwrap();
    let (songs, _) = perfect_corpus(dir.path());
    let (endpoint, hits) = serve("GENDER: male\nCONTINENT: Europe", 1);
    let out = dir.path().join("preds.jsonl");
    let o = run(bin()
        .args(["infer", "--prompt", "regular", "--model", "mock", "--concurrency", "2"])
        .env("AUDIT_ENDPOINT", &endpoint)
        .env("AUDIT_API_KEY", "secret")
        .arg("--songs")
        .arg(&songs)
        .arg("--out")
        .arg(&out)
        .arg("--transcript")
        .arg(dir.path().join("transcript.jsonl")));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let preds = load_predictions(&out, Format::Jsonl).unwrap();
    assert_eq!(preds.len(), 36);
    assert!(preds.iter().all(|p| p.valid && p.pred_gender == Some(0) && p.pred_region == Some(2)));
    // one 503 retried
    assert_eq!(hits.load(Ordering::SeqCst), 37);
    let transcript = std::fs::read_to_string(dir.path().join("transcript.jsonl")).unwrap();
    assert_eq!(transcript.lines().count(), 36);
    assert!(!transcript.contains("secret"));
}

#[test]
fn infer_without_endpoint_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let (songs, _) = perfect_corpus(dir.path());
    let o = run(bin()
        .args(["infer", "--prompt", "regular", "--model", "mock"])
        .arg("--songs")
        .arg(&songs)
        .arg("--out")
        .arg(dir.path().join("p.jsonl")));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn balance_dedup_and_parse_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (songs, preds) = perfect_corpus(dir.path());
    let balanced = dir.path().join("bal.jsonl");
    let o = run(bin()
        .args(["balance", "--attribute", "gender", "--per-class", "4", "--seed", "1"])
        .arg("--songs")
        .arg(&songs)
        .arg("--out")
        .arg(&balanced));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read_to_string(&balanced).unwrap().lines().count(), 8);

    let deduped = dir.path().join("dedup.jsonl");
    let o = run(bin().arg("dedup").arg("--songs").arg(&songs).arg("--out").arg(&deduped));
    assert!(o.status.success());
    assert_eq!(std::fs::read_to_string(&deduped).unwrap().lines().count(), 36);

    let reparsed = dir.path().join("reparsed.jsonl");
    let o = run(bin().arg("parse").arg("--predictions").arg(&preds).arg("--out").arg(&reparsed));
    assert!(o.status.success());
    // empty raw responses parse to nothing
    let p = load_predictions(&reparsed, Format::Jsonl).unwrap();
    assert!(p.iter().all(|r| !r.valid));
}
