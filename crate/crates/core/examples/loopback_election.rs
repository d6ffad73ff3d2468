//! Three center services on loopback, a voting terminal, and the official's
//! tally from signed records fetched over HTTP.
//!
//! Run with `cargo run --example loopback_election`.

use homotally::ballot::derive_config;
use homotally::center::{CenterKey, CenterState, MemoryJournal};
use homotally::netsvc::{collect_records, finalize_all, serve_center, CenterClient, Terminal};
use homotally::tally::{compute_result, verify_with_config};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub async fn run_loopback() -> homotally::Result<()> {
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let names = ["Red", "Green", "Blue"].map(String::from).to_vec();
    let mut config = derive_config(names, 20, 2, 3, &mut rng)?;
    let keys: Vec<CenterKey> = (0..3).map(|_| CenterKey::generate(&mut rng)).collect();
    config.set_center_public_keys(keys.iter().map(CenterKey::public_hex).collect())?;

    let mut handles = Vec::new();
    for (i, key) in keys.into_iter().enumerate() {
        let state = CenterState::new(i as u32 + 1, Box::new(MemoryJournal::new()));
        handles.push(serve_center(state, key, "127.0.0.1:0".parse().unwrap()).await?);
    }
    let clients: Vec<CenterClient> = handles.iter().map(|h| CenterClient::new(h.url())).collect();
    let terminal = Terminal::new(config.clone(), clients.clone())?;
    for r in terminal.open_all().await {
        r.map_err(homotally::Error::from)?;
    }

    let votes = [1, 3, 3, 2, 3, 1, 3];
    for k in votes {
        let (_, outcome) = terminal.cast_ballot(k, &mut rng).await?;
        println!("ballot {} -> {:?}", outcome.ballot_id, outcome.overall);
        assert!(outcome.is_registered());
    }

    let id = &config.public().election_id;
    for r in finalize_all(&clients, id).await {
        r.map_err(homotally::Error::from)?;
    }
    let records = collect_records(&clients, id, 2).await?;
    let verified = records
        .iter()
        .map(|r| verify_with_config(r, config.public()))
        .collect::<homotally::Result<Vec<_>>>()?;
    let report = compute_result(&verified, &config)?;
    print!("{}", report.render_table());
    assert_eq!(report.votes_for("Blue"), Some(4));
    assert_eq!(report.votes_for("Red"), Some(2));
    assert_eq!(report.votes_for("Green"), Some(1));

    for h in handles {
        h.shutdown().await?;
    }
    Ok(())
}

pub fn run_example() -> homotally::Result<()> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?
        .block_on(run_loopback())
}

#[allow(dead_code)]
fn main() -> homotally::Result<()> {
    run_example()
}
