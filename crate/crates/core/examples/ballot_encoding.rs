//! Packing votes into counter windows and unpacking a tally.
//!
//! Run with `cargo run --example ballot_encoding`.

use homotally::ballot::{decode_tally, derive_config, encode_vote};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub fn run_example() -> homotally::Result<()> {
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let names = ["Charles", "Bob", "Alice"].map(String::from).to_vec();
    let config = derive_config(names, 7, 2, 3, &mut rng)?;
    let public = config.public();
    println!(
        "m={} n={} w={} p={}",
        public.candidate_count(),
        public.voter_count,
        public.window_width,
        public.prime
    );

    let mut packed = config.prime().zero();
    for (name, k) in [("Alice", 3), ("Bob", 2), ("Bob", 2), ("Alice", 3), ("Charles", 1), ("Alice", 3)] {
        let v = encode_vote(public, k)?.value();
        println!("{name:<8} -> {:>3} = {:09b}", v.residue(), v.residue());
        packed = packed.add(v)?;
    }
    let result = decode_tally(public, packed)?;
    println!("packed {} decodes to {:?}", packed.residue(), result.counts);
    assert_eq!(packed.residue(), 209);
    assert_eq!(result.counts, vec![1, 2, 3]);

    let err = encode_vote(public, 4).unwrap_err();
    println!("candidate 4 of 3: {err}");
    Ok(())
}

#[allow(dead_code)]
fn main() -> homotally::Result<()> {
    run_example()
}
