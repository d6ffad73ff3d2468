//! (t, c) threshold sharing: any t shares recover the secret, and sums of
//! shares are shares of the sum.
//!
//! Run with `cargo run --example shamir_threshold`.

use homotally::field::Prime;
use homotally::shamir::{interpolate_at_zero, split, SharingPolicy};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub fn run_example() -> homotally::Result<()> {
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    let p = Prime::new(1_000_003)?;
    let policy = SharingPolicy::random(p, 3, 5, &mut rng)?;

    let a = split(p.element(424_242), &policy, &mut rng)?;
    let b = split(p.element(1_000), &policy, &mut rng)?;

    // any three of the five centers
    for ids in [[1u32, 2, 3], [1, 3, 5], [2, 4, 5]] {
        let points: Vec<_> = ids
            .iter()
            .map(|&id| {
                let x = policy.point_of(id).expect("center exists");
                (x, a.for_center(id).expect("share exists").value)
            })
            .collect();
        let secret = interpolate_at_zero(&points, policy.threshold())?;
        println!("centers {ids:?} recover {}", secret.residue());
        assert_eq!(secret.residue(), 424_242);
    }

    let summed: Vec<_> = [1u32, 4, 5]
        .iter()
        .map(|&id| {
            let x = policy.point_of(id).expect("center exists");
            let y = a.for_center(id).unwrap().value.add(b.for_center(id).unwrap().value)?;
            Ok((x, y))
        })
        .collect::<homotally::Result<_>>()?;
    let total = interpolate_at_zero(&summed, 3)?;
    println!("sum of share sums recovers {}", total.residue());
    assert_eq!(total.residue(), 425_242);

    let too_few = interpolate_at_zero(&summed[..2], 3).unwrap_err();
    println!("two shares of a 3-threshold secret: {too_few}");
    Ok(())
}

#[allow(dead_code)]
fn main() -> homotally::Result<()> {
    run_example()
}
