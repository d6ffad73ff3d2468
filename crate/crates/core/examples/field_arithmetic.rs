//! Prime-field arithmetic and prime selection.
//!
//! Run with `cargo run --example field_arithmetic`.

use homotally::field::{is_prime, smallest_prime_above, Prime};

pub fn run_example() -> homotally::Result<()> {
    let p = Prime::new(257)?;
    let a = p.element(233);
    let b = p.element(64);

    let sum = a.add(b)?;
    let inv = a.inv()?;
    println!("in Z_{}: 233 + 64 = {}", p.get(), sum.residue());
    println!("in Z_{}: 233^-1 = {} (check: {})", p.get(), inv.residue(), a.mul(inv)?.residue());
    assert_eq!(sum.residue(), 40);
    assert_eq!(a.mul(inv)?.residue(), 1);

    // 2^(m*w) - 1 for three candidates and seven voters
    let bound = (1u64 << 9) - 1;
    let q = smallest_prime_above(bound)?;
    println!("smallest prime above {bound}: {}", q.get());
    assert_eq!(q.get(), 521);

    println!("zero has no inverse: {}", p.zero().inv().unwrap_err());
    assert!(!is_prime(511));
    assert!(Prime::new(511).is_err());
    Ok(())
}

#[allow(dead_code)]
fn main() -> homotally::Result<()> {
    run_example()
}
