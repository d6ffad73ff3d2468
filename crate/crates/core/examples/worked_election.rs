//! The three-candidate, six-voter, 2-of-3 worked election over Z_257 with
//! fixed polynomial coefficients, reproduced in-process.
//!
//! Z_257 is smaller than the 2^9 - 1 worst case, so the config is built with
//! the explicit field override.
//!
//! Run with `cargo run --example worked_election`.

use homotally::ballot::ElectionConfig;
use homotally::field::Prime;
use homotally::shamir::{ForcedCoefficients, SharingPolicy};
use homotally::sim::LocalElection;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub fn run_example() -> homotally::Result<()> {
    let p = Prime::new(257)?;
    let policy = SharingPolicy::new(2, vec![p.element(1), p.element(2), p.element(3)])?;
    let names = ["Charles", "Bob", "Alice"].map(String::from).to_vec();
    let config = ElectionConfig::with_field_override("worked", names, 7, policy)?;

    let mut rng = ChaCha20Rng::seed_from_u64(0);
    let mut election = LocalElection::open(config, &mut rng)?;
    let mut coeffs = ForcedCoefficients::new([233, 157, 78, 255, 217, 124], 0);

    println!("voter | vote    | CC1 | CC2 | CC3");
    for (i, (name, k)) in [("Alice", 3), ("Bob", 2), ("Bob", 2), ("Alice", 3), ("Charles", 1), ("Alice", 3)]
        .into_iter()
        .enumerate()
    {
        let shares = election.cast(k, &mut coeffs, &mut rng)?.values();
        println!("{:>5} | {name:<7} | {:>3} | {:>3} | {:>3}", i + 1, shares[0], shares[1], shares[2]);
    }
    let sums: Vec<u64> = election
        .centers()
        .iter()
        .map(|c| c.share_sum().expect("open").residue())
        .collect();
    println!("sums  |         | {:>3} | {:>3} | {:>3}", sums[0], sums[1], sums[2]);
    assert_eq!(sums, vec![245, 24, 60]);

    let report = election.tally()?;
    print!("\n{}", report.render_subsets());
    print!("\n{}", report.render_table());
    assert_eq!(report.packed, "209");
    assert_eq!(report.votes_for("Alice"), Some(3));
    assert_eq!(report.votes_for("Bob"), Some(2));
    assert_eq!(report.votes_for("Charles"), Some(1));
    Ok(())
}

#[allow(dead_code)]
fn main() -> homotally::Result<()> {
    run_example()
}
