use std::path::Path;
use std::process::{Command, Output};

use homotally::ballot::PublicConfig;

fn homotally(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_homotally"))
        .args(args)
        .env_remove("HOMOTALLY_CONFIG")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn setup(dir: &Path, extra: &[&str]) -> Output {
    let d = dir.to_str().unwrap();
    let mut args = vec![
        "setup", "--candidates", "Charles,Bob,Alice", "--voters", "7", "--threshold", "2", "--centers", "3",
        "--out-dir", d, "--seed", "42",
    ];
    args.extend_from_slice(extra);
    homotally(&args)
}

#[test]
fn setup_derives_smallest_safe_prime() {
    let dir = tempfile::tempdir().unwrap();
    let out = setup(dir.path(), &[]);
    assert!(out.status.success(), "{}", stderr(&out));
    let config = PublicConfig::from_json(&std::fs::read_to_string(dir.path().join("config.json")).unwrap()).unwrap();
    assert_eq!(config.prime.get(), 521);
    assert_eq!(config.window_width, 3);
    assert_eq!(config.center_public_keys.len(), 3);
    for j in 1..=3 {
        assert!(dir.path().join(format!("keys/center-{j}.json")).exists());
    }
    let public = std::fs::read_to_string(dir.path().join("config.json")).unwrap();
    assert!(!public.contains("eval_points"));
}

#[test]
fn config_errors_exit_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = homotally(&[
        "setup", "--candidates", "A,B", "--voters", "7", "--threshold", "4", "--centers", "3", "--out-dir", d,
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).starts_with("error: class=config code=2 message="), "{}", stderr(&out));

    let small = setup(dir.path(), &["--prime", "509"]);
    assert_eq!(small.status.code(), Some(2), "{}", stderr(&small));
    let composite = setup(dir.path(), &["--prime", "511"]);
    assert_eq!(composite.status.code(), Some(2), "{}", stderr(&composite));
}

#[test]
fn seeded_simulation_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    assert!(setup(dir.path(), &[]).status.success());
    let config = dir.path().join("config.json");
    let c = config.to_str().unwrap();
    let run = || homotally(&["simulate", "--config", c, "--random", "7", "--seed", "5", "--json"]);
    let a = run();
    let b = run();
    assert!(a.status.success(), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    let report: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    let total: u64 = report["counts"].as_array().unwrap().iter().map(|c| c["votes"].as_u64().unwrap()).sum();
    assert_eq!(total, 7);

    let too_many = homotally(&["simulate", "--config", c, "--random", "8", "--seed", "5"]);
    assert_eq!(too_many.status.code(), Some(7));
    let bad_vote = homotally(&["simulate", "--config", c, "--votes", "Alice,Dora"]);
    assert_eq!(bad_vote.status.code(), Some(5));
}

#[test]
fn worked_transcript_via_field_override() {
    let dir = tempfile::tempdir().unwrap();
    let out = setup(dir.path(), &["--prime", "257", "--relax-field-bound", "--eval-points", "1,2,3"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let config = dir.path().join("config.json");
    let out = homotally(&[
        "simulate", "--config", config.to_str().unwrap(), "--votes", "Alice,Bob,Bob,Alice,Charles,Alice",
        "--coefficients", "233,157,78,255,217,124", "--seed", "1",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("Q(0) from CC1:CC2 = 209"));
    assert!(text.contains("Q(0) from CC2:CC3 = 209"));
    assert!(text.contains("Alice     | 3"));
    assert!(text.contains("Charles   | 1"));
}

#[test]
fn config_path_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    assert!(setup(dir.path(), &[]).status.success());
    let out = Command::new(env!("CARGO_BIN_EXE_homotally"))
        .args(["simulate", "--votes", "Bob", "--seed", "1"])
        .env("HOMOTALLY_CONFIG", dir.path().join("config.json"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("Bob       | 1"));
}

#[test]
fn tally_of_tampered_or_missing_records_fails() {
    use homotally::ballot::{ElectionConfig, OfficerSecrets};

    let dir = tempfile::tempdir().unwrap();
    assert!(setup(dir.path(), &[]).status.success());
    let read = |f: &str| std::fs::read_to_string(dir.path().join(f)).unwrap();
    let public = PublicConfig::from_json(&read("config.json")).unwrap();
    let secrets = OfficerSecrets::from_json(&read("secrets.json")).unwrap();
    let config = ElectionConfig::from_parts(public, &secrets).unwrap();

    // records signed with the keys written by setup
    let key_of = |j: u32| {
        let file: homotally::center::KeyFile = serde_json::from_str(&read(&format!("keys/center-{j}.json"))).unwrap();
        homotally::center::CenterKey::from_hex(&file.secret_key).unwrap()
    };
    let mut paths = Vec::new();
    for j in 1..=3u32 {
        let mut center = homotally::center::CenterState::new(j, Box::new(homotally::center::MemoryJournal::new()));
        center.open_election(config.public().clone()).unwrap();
        center.submit_share("only", config.prime().element(u64::from(j) * 10)).unwrap();
        let record = center.finalize(&key_of(j)).unwrap();
        let path = dir.path().join(format!("r{j}.json"));
        std::fs::write(&path, record.to_canonical_json() + "\n").unwrap();
        paths.push(path);
    }
    let c = dir.path().join("config.json");
    let s = dir.path().join("secrets.json");
    let tally = |records: &[&Path]| {
        let list: Vec<&str> = records.iter().map(|p| p.to_str().unwrap()).collect();
        homotally(&[
            "tally", "--config", c.to_str().unwrap(), "--secrets", s.to_str().unwrap(), "--records", &list.join(","),
        ])
    };
    let single = tally(&[&paths[0]]);
    assert_eq!(single.status.code(), Some(4), "{}", stderr(&single));
    assert!(stderr(&single).contains("class=insufficient-shares"));

    let text = std::fs::read_to_string(&paths[1]).unwrap();
    std::fs::write(&paths[1], text.replace("\"received_count\":1", "\"received_count\":2")).unwrap();
    let tampered = tally(&[&paths[0], &paths[1]]);
    assert_eq!(tampered.status.code(), Some(9), "{}", stderr(&tampered));

}

#[test]
fn minimal_config_and_empty_election() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = homotally(&[
        "setup", "--candidates", "A", "--voters", "1", "--threshold", "1", "--centers", "1", "--out-dir", d,
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let config = PublicConfig::from_json(&std::fs::read_to_string(dir.path().join("config.json")).unwrap()).unwrap();
    assert_eq!((config.window_width, config.prime.get()), (1, 2));

    let out = homotally(&["simulate", "--config", &format!("{d}/config.json"), "--json"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["packed"], "0");
    assert_eq!(report["counts"][0]["votes"], 0);
}

struct Center(std::process::Child, String);

impl Drop for Center {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn run_center(dir: &Path, id: u32) -> Center {
    use std::io::BufRead;
    let mut child = Command::new(env!("CARGO_BIN_EXE_homotally"))
        .args(["run-center", "--center-id", &id.to_string(), "--key"])
        .arg(dir.join(format!("keys/center-{id}.json")))
        .arg("--journal")
        .arg(dir.join(format!("journal-{id}.ndjson")))
        .env("HOMOTALLY_CONFIG", dir.join("config.json"))
        .stdout(std::process::Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    std::io::BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let url = line.split_whitespace().find(|w| w.starts_with("http://")).unwrap().to_string();
    Center(child, url)
}

#[test]
fn networked_verbs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    assert!(setup(dir.path(), &[]).status.success());
    let centers: Vec<Center> = (1..=3).map(|j| run_center(dir.path(), j)).collect();
    let urls = centers.iter().map(|c| c.1.as_str()).collect::<Vec<_>>().join(",");
    let cfg = dir.path().join("config.json");
    let secrets = dir.path().join("secrets.json");
    let (c, s) = (cfg.to_str().unwrap(), secrets.to_str().unwrap());

    for vote in ["Alice", "2", "Alice"] {
        let out = homotally(&["cast", "--config", c, "--secrets", s, "--centers", &urls, "--candidate", vote]);
        assert!(out.status.success(), "{}", stderr(&out));
        assert!(stdout(&out).contains("\"overall\": \"registered\""));
    }
    let bad = homotally(&["cast", "--config", c, "--secrets", s, "--centers", &urls, "--candidate", "4"]);
    assert_eq!(bad.status.code(), Some(5));

    let mut records = Vec::new();
    for (j, center) in centers.iter().enumerate() {
        let path = dir.path().join(format!("record-{}.json", j + 1));
        let first = homotally(&["finalize", "--config", c, "--center", &center.1, "--out", path.to_str().unwrap()]);
        assert!(first.status.success(), "{}", stderr(&first));
        let second = homotally(&["finalize", "--config", c, "--center", &center.1]);
        assert_eq!(first.stdout, second.stdout);
        records.push(path);
    }
    let late = homotally(&["cast", "--config", c, "--secrets", s, "--centers", &urls, "--candidate", "Bob"]);
    assert_eq!(late.status.code(), Some(7), "{}", stderr(&late));

    let two = format!("{},{}", records[0].display(), records[2].display());
    let out = homotally(&["tally", "--config", c, "--secrets", s, "--records", &two]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("Alice     | 2"), "{text}");
    assert!(text.contains("Bob       | 1"), "{text}");
    assert!(text.contains("Q(0) from CC1:CC3 = 136"), "{text}");
}
