//! Prime-field arithmetic.
//!
//! Residues are `u64` and products go through `u128`, so any prime below
//! 2^64 is exact. Elections that would need a larger field are refused at
//! setup time rather than silently wrapping.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Bases for Miller-Rabin; deterministic for every n < 3.3 * 10^24.
const MR_WITNESSES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

/// A certified prime modulus.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u64", into = "u64")]
pub struct Prime(u64);

impl Prime {
    pub fn new(value: u64) -> Result<Self> {
        if is_prime(value) {
            Ok(Prime(value))
        } else {
            Err(Error::InvalidConfig(format!("{value} is not prime")))
        }
    }

    pub fn get(self) -> u64 {
        self.0
    }

    /// Reduces `value` into this field.
    pub fn element(self, value: u64) -> FieldElement {
        FieldElement {
            residue: value % self.0,
            modulus: self,
        }
    }

    pub fn zero(self) -> FieldElement {
        self.element(0)
    }

    pub fn one(self) -> FieldElement {
        self.element(1)
    }
}

impl TryFrom<u64> for Prime {
    type Error = Error;

    fn try_from(value: u64) -> Result<Self> {
        Prime::new(value)
    }
}

impl From<Prime> for u64 {
    fn from(p: Prime) -> u64 {
        p.0
    }
}

impl fmt::Display for Prime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A residue modulo a [`Prime`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FieldElement {
    residue: u64,
    modulus: Prime,
}

// Arithmetic is fallible (mismatched moduli), so the std operator traits do not fit.
#[allow(clippy::should_implement_trait)]
impl FieldElement {
    pub fn residue(self) -> u64 {
        self.residue
    }

    pub fn modulus(self) -> Prime {
        self.modulus
    }

    pub fn is_zero(self) -> bool {
        self.residue == 0
    }

    fn same_field(self, other: FieldElement) -> Result<u64> {
        if self.modulus == other.modulus {
            Ok(self.modulus.0)
        } else {
            Err(Error::ModulusMismatch {
                left: self.modulus.0,
                right: other.modulus.0,
            })
        }
    }

    pub fn add(self, other: FieldElement) -> Result<FieldElement> {
        let p = self.same_field(other)?;
        let sum = (self.residue as u128 + other.residue as u128) % p as u128;
        Ok(self.modulus.element(sum as u64))
    }

    pub fn neg(self) -> FieldElement {
        if self.residue == 0 {
            self
        } else {
            FieldElement {
                residue: self.modulus.0 - self.residue,
                modulus: self.modulus,
            }
        }
    }

    pub fn sub(self, other: FieldElement) -> Result<FieldElement> {
        self.same_field(other)?;
        self.add(other.neg())
    }

    pub fn mul(self, other: FieldElement) -> Result<FieldElement> {
        let p = self.same_field(other)?;
        Ok(self.modulus.element(mul_mod(self.residue, other.residue, p)))
    }

    /// Multiplicative inverse by the extended Euclidean algorithm.
    ///
    /// Zero has no inverse; upstream this almost always means two
    /// evaluation points collided.
    pub fn inv(self) -> Result<FieldElement> {
        if self.residue == 0 {
            return Err(Error::ZeroInverse);
        }
        let p = self.modulus.0 as i128;
        let (mut old_r, mut r) = (self.residue as i128, p);
        let (mut old_s, mut s) = (1i128, 0i128);
        while r != 0 {
            let q = old_r / r;
            (old_r, r) = (r, old_r - q * r);
            (old_s, s) = (s, old_s - q * s);
        }
        // old_r == gcd == 1 since p is prime
        Ok(self.modulus.element(old_s.rem_euclid(p) as u64))
    }

    pub fn div(self, other: FieldElement) -> Result<FieldElement> {
        self.mul(other.inv()?)
    }

    pub fn pow(self, mut exp: u64) -> FieldElement {
        let p = self.modulus.0;
        let mut base = self.residue;
        let mut acc = 1 % p;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = mul_mod(acc, base, p);
            }
            base = mul_mod(base, base, p);
            exp >>= 1;
        }
        self.modulus.element(acc)
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.residue)
    }
}

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1 % m;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Deterministic Miller-Rabin primality test for all `u64`.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for &w in &MR_WITNESSES {
        if n == w {
            return true;
        }
        if n.is_multiple_of(w) {
            return false;
        }
    }
    let s = (n - 1).trailing_zeros();
    let d = (n - 1) >> s;
    'witness: for &a in &MR_WITNESSES {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// The least prime strictly greater than `bound`.
pub fn smallest_prime_above(bound: u64) -> Result<Prime> {
    let mut candidate = bound;
    loop {
        candidate = candidate.checked_add(1).ok_or_else(|| {
            Error::UnsupportedScale(format!("no 64-bit prime above {bound}"))
        })?;
        if is_prime(candidate) {
            return Ok(Prime(candidate));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn z(p: u64) -> Prime {
        Prime::new(p).unwrap()
    }

    fn trial_division(n: u64) -> bool {
        n >= 2 && (2..).take_while(|d| d * d <= n).all(|d| !n.is_multiple_of(d))
    }

    #[test]
    fn add_examples() {
        let p = z(257);
        assert_eq!(p.element(245).add(p.element(24)).unwrap().residue(), 12);
        assert_eq!(p.element(0).add(p.element(64)).unwrap().residue(), 64);
        assert_eq!(p.element(200).add(p.element(57)).unwrap().residue(), 0);
    }

    #[test]
    fn mul_examples() {
        let p = z(257);
        assert_eq!(p.element(233).mul(p.element(2)).unwrap().residue(), 209);
        assert_eq!(p.element(1).mul(p.element(249)).unwrap().residue(), 249);
        assert_eq!(p.element(2).mul(p.element(129)).unwrap().residue(), 1);
    }

    #[test]
    fn inv_examples() {
        assert_eq!(z(257).element(2).inv().unwrap().residue(), 129);
        assert_eq!(z(257).element(1).inv().unwrap().residue(), 1);
        assert_eq!(z(7).element(3).inv().unwrap().residue(), 5);
        assert!(matches!(z(7).zero().inv(), Err(Error::ZeroInverse)));
    }

    #[test]
    fn neg_sub_examples() {
        let p = z(257);
        assert_eq!(p.element(24).neg().residue(), 233);
        assert_eq!(p.zero().neg().residue(), 0);
        assert_eq!(p.element(245).sub(p.element(245)).unwrap().residue(), 0);
    }

    #[test]
    fn mismatched_moduli_rejected() {
        let a = z(7).element(3);
        let b = z(11).element(3);
        assert!(matches!(a.add(b), Err(Error::ModulusMismatch { left: 7, right: 11 })));
        assert!(a.mul(b).is_err());
        assert!(a.sub(b).is_err());
    }

    #[test]
    fn field_axioms_exhaustive_small() {
        for p in [7u64, 11] {
            let f = z(p);
            let all: Vec<_> = (0..p).map(|v| f.element(v)).collect();
            for &a in &all {
                assert!(a.add(a.neg()).unwrap().is_zero());
                if !a.is_zero() {
                    assert_eq!(a.mul(a.inv().unwrap()).unwrap(), f.one());
                }
                for &b in &all {
                    assert_eq!(a.add(b).unwrap(), b.add(a).unwrap());
                    assert_eq!(a.mul(b).unwrap(), b.mul(a).unwrap());
                    for &c in &all {
                        assert_eq!(
                            a.add(b).unwrap().add(c).unwrap(),
                            a.add(b.add(c).unwrap()).unwrap()
                        );
                        assert_eq!(
                            a.mul(b).unwrap().mul(c).unwrap(),
                            a.mul(b.mul(c).unwrap()).unwrap()
                        );
                        assert_eq!(
                            a.mul(b.add(c).unwrap()).unwrap(),
                            a.mul(b).unwrap().add(a.mul(c).unwrap()).unwrap()
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn primality_agrees_with_trial_division() {
        for n in 0..20_000u64 {
            assert_eq!(is_prime(n), trial_division(n), "n = {n}");
        }
        // strong pseudoprimes to several small bases
        for n in [3_215_031_751u64, 3_825_123_056_546_413_051, 2_152_302_898_747] {
            assert!(!is_prime(n));
        }
        assert!(is_prime(18_446_744_073_709_551_557)); // largest 64-bit prime
    }

    #[test]
    fn smallest_prime_above_examples() {
        assert_eq!(smallest_prime_above(511).unwrap().get(), 521);
        assert_eq!(smallest_prime_above(1).unwrap().get(), 2);
        assert_eq!(smallest_prime_above(256).unwrap().get(), 257);
        assert!(smallest_prime_above(18_446_744_073_709_551_557).is_err());
    }

    #[test]
    fn smallest_prime_above_leaves_no_gap() {
        for b in 1..3_000u64 {
            let p = smallest_prime_above(b).unwrap().get();
            assert!(p > b && trial_division(p));
            assert!((b + 1..p).all(|q| !trial_division(q)));
        }
    }

    #[test]
    fn inverse_near_64_bits() {
        let p = z(18_446_744_073_709_551_557);
        for v in [2u64, 3, 1 << 40, p.get() - 1] {
            let a = p.element(v);
            assert_eq!(a.mul(a.inv().unwrap()).unwrap(), p.one());
        }
    }

    #[test]
    fn prime_rejects_composites_on_deserialize() {
        assert!(serde_json::from_str::<Prime>("257").is_ok());
        assert!(serde_json::from_str::<Prime>("256").is_err());
    }
}
