//! A collection center that journals every share, survives a restart and
//! signs its final sum.
//!
//! Run with `cargo run --example center_journal`.

use std::fs::File;
use std::io::BufReader;

use homotally::ballot::derive_config;
use homotally::center::{CenterKey, CenterState, FileJournal, FinalizationRecord};
use homotally::tally::verify_with_config;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub fn run_example() -> homotally::Result<()> {
    let mut rng = ChaCha20Rng::seed_from_u64(11);
    let mut config = derive_config(vec!["Yes".into(), "No".into()], 10, 2, 3, &mut rng)?;
    let key = CenterKey::generate(&mut rng);
    let others: Vec<String> = (0..2).map(|_| CenterKey::generate(&mut rng).public_hex()).collect();
    config.set_center_public_keys(vec![key.public_hex(), others[0].clone(), others[1].clone()])?;
    let public = config.public().clone();
    let p = config.prime();

    let dir = std::env::temp_dir().join(format!("homotally-example-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("center-1.ndjson");
    let _ = std::fs::remove_file(&path);

    let mut center = CenterState::new(1, Box::new(FileJournal::open(&path)?));
    center.open_election(public.clone())?;
    center.submit_share("b-1", p.element(17))?;
    center.submit_share("b-2", p.element(400))?;
    println!("before restart: {:?}", center.status());
    drop(center);

    let mut center = CenterState::recover(1, BufReader::new(File::open(&path)?), Box::new(FileJournal::open(&path)?))?;
    println!("after restart:  {:?}", center.status());
    let dup = center.submit_share("b-2", p.element(400)).unwrap_err();
    println!("resubmitting b-2: {dup}");
    center.submit_share("b-3", p.element(5))?;

    let record = center.finalize(&key)?;
    let text = record.to_canonical_json();
    println!("{text}");
    let parsed = FinalizationRecord::from_canonical_json(&text)?;
    verify_with_config(&parsed, &public)?;
    assert_eq!(parsed.received_count, 3);
    assert_eq!(parsed.share_sum, ((17 + 400 + 5) % public.prime.get()).to_string());

    let late = center.submit_share("b-4", p.element(1)).unwrap_err();
    println!("after finalize: {late}");
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> homotally::Result<()> {
    run_example()
}
