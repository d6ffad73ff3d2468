//! Threshold `(t, c)` secret sharing over a prime field.
//!
//! A secret `s` becomes the constant term of a random polynomial of degree at
//! most `t - 1`; center `j` receives its evaluation at a private point `x_j`.
//! Any `t` evaluations pin the polynomial down and reveal `s` through
//! Lagrange interpolation at zero, while `t - 1` of them are consistent with
//! every possible secret equally often.
//!
//! Sharing is additively homomorphic: adding two share vectors point-wise
//! yields a sharing of the sum of the secrets. Collection centers rely on
//! this by keeping nothing but a running sum.

use std::collections::{HashSet, VecDeque};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::field::{FieldElement, Prime};
use crate::{Error, Result};

/// Source of uniformly random polynomial coefficients.
pub trait CoefficientSource {
    /// A uniform draw from the whole field, zero included.
    fn draw(&mut self, prime: Prime) -> FieldElement;
}

impl<R: RngCore + ?Sized> CoefficientSource for R {
    fn draw(&mut self, prime: Prime) -> FieldElement {
        prime.element(self.gen_range(0..prime.get()))
    }
}

/// Replays a fixed list of coefficients, then falls back to a seeded stream.
///
/// Used to reproduce a recorded election transcript exactly.
#[derive(Debug, Clone)]
pub struct ForcedCoefficients {
    forced: VecDeque<u64>,
    fallback: ChaCha20Rng,
}

impl ForcedCoefficients {
    pub fn new(values: impl IntoIterator<Item = u64>, fallback_seed: u64) -> Self {
        Self {
            forced: values.into_iter().collect(),
            fallback: ChaCha20Rng::seed_from_u64(fallback_seed),
        }
    }

    pub fn remaining(&self) -> usize {
        self.forced.len()
    }
}

impl CoefficientSource for ForcedCoefficients {
    fn draw(&mut self, prime: Prime) -> FieldElement {
        match self.forced.pop_front() {
            Some(v) => prime.element(v),
            None => self.fallback.draw(prime),
        }
    }
}

/// Threshold and the private evaluation point of every center.
///
/// Center `j` (1-based) is evaluated at `eval_points[j - 1]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SharingPolicy {
    threshold: usize,
    eval_points: Vec<FieldElement>,
}

impl SharingPolicy {
    pub fn new(threshold: usize, eval_points: Vec<FieldElement>) -> Result<Self> {
        let c = eval_points.len();
        if threshold == 0 || threshold > c {
            return Err(Error::InvalidConfig(format!(
                "threshold must satisfy 1 <= t <= c, got t = {threshold}, c = {c}"
            )));
        }
        let prime = eval_points[0].modulus();
        let mut seen = HashSet::with_capacity(c);
        for x in &eval_points {
            if x.modulus() != prime {
                return Err(Error::ModulusMismatch {
                    left: prime.get(),
                    right: x.modulus().get(),
                });
            }
            if x.is_zero() {
                return Err(Error::InvalidConfig("evaluation point 0 would reveal the secret".into()));
            }
            if !seen.insert(x.residue()) {
                return Err(Error::DuplicatePoint(x.residue()));
            }
        }
        Ok(Self {
            threshold,
            eval_points,
        })
    }

    /// Draws `center_count` distinct nonzero evaluation points.
    pub fn random<R: RngCore + ?Sized>(
        prime: Prime,
        threshold: usize,
        center_count: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if center_count as u64 >= prime.get() {
            return Err(Error::InvalidConfig(format!(
                "field Z_{prime} cannot hold {center_count} distinct nonzero points"
            )));
        }
        let mut seen = HashSet::with_capacity(center_count);
        let mut points = Vec::with_capacity(center_count);
        while points.len() < center_count {
            let x = rng.gen_range(1..prime.get());
            if seen.insert(x) {
                points.push(prime.element(x));
            }
        }
        Self::new(threshold, points)
    }

    pub fn threshold(&self) -> usize {
        self.threshold
    }

    pub fn center_count(&self) -> usize {
        self.eval_points.len()
    }

    pub fn eval_points(&self) -> &[FieldElement] {
        &self.eval_points
    }

    /// Evaluation point of 1-based center `center_id`.
    pub fn point_of(&self, center_id: u32) -> Option<FieldElement> {
        (center_id as usize)
            .checked_sub(1)
            .and_then(|i| self.eval_points.get(i))
            .copied()
    }

    pub fn prime(&self) -> Prime {
        self.eval_points[0].modulus()
    }
}

/// `a_0 + a_1 x + ... + a_{t-1} x^{t-1}` with `a_0` the secret.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Polynomial {
    coefficients: Vec<FieldElement>,
}

impl Polynomial {
    /// Coefficients in ascending order of degree.
    pub fn from_coefficients(coefficients: Vec<FieldElement>) -> Result<Self> {
        let first = coefficients
            .first()
            .ok_or_else(|| Error::InvalidConfig("polynomial needs at least one coefficient".into()))?;
        let prime = first.modulus();
        if let Some(bad) = coefficients.iter().find(|c| c.modulus() != prime) {
            return Err(Error::ModulusMismatch {
                left: prime.get(),
                right: bad.modulus().get(),
            });
        }
        Ok(Self { coefficients })
    }

    pub fn coefficients(&self) -> &[FieldElement] {
        &self.coefficients
    }

    pub fn secret(&self) -> FieldElement {
        self.coefficients[0]
    }

    /// Horner evaluation.
    pub fn evaluate(&self, x: FieldElement) -> Result<FieldElement> {
        let mut acc = x.modulus().zero();
        for &c in self.coefficients.iter().rev() {
            acc = acc.mul(x)?.add(c)?;
        }
        Ok(acc)
    }
}

/// Builds a sharing polynomial for `secret` with `threshold - 1` random
/// higher coefficients. Zero coefficients are allowed: the family must be
/// all polynomials of degree at most `t - 1` for the secrecy argument to hold.
pub fn make_polynomial<S: CoefficientSource + ?Sized>(
    secret: FieldElement,
    threshold: usize,
    randomness: &mut S,
) -> Result<Polynomial> {
    if threshold == 0 {
        return Err(Error::InvalidConfig("threshold must be at least 1".into()));
    }
    let prime = secret.modulus();
    let mut coefficients = Vec::with_capacity(threshold);
    coefficients.push(secret);
    coefficients.extend((1..threshold).map(|_| randomness.draw(prime)));
    Ok(Polynomial { coefficients })
}

/// One center's evaluation of a sharing polynomial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Share {
    /// 1-based center identifier.
    pub point_index: u32,
    pub value: FieldElement,
}

/// The `c` shares of one secret, one per center, in center order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShareBatch {
    shares: Vec<Share>,
}

impl ShareBatch {
    pub fn shares(&self) -> &[Share] {
        &self.shares
    }

    pub fn for_center(&self, center_id: u32) -> Option<Share> {
        self.shares.iter().find(|s| s.point_index == center_id).copied()
    }

    pub fn values(&self) -> Vec<u64> {
        self.shares.iter().map(|s| s.value.residue()).collect()
    }
}

/// Evaluates `poly` at every center's point.
pub fn share_polynomial(poly: &Polynomial, policy: &SharingPolicy) -> Result<ShareBatch> {
    let shares = policy
        .eval_points
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            Ok(Share {
                point_index: i as u32 + 1,
                value: poly.evaluate(x)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(ShareBatch { shares })
}

/// Splits `secret` into one share per center under `policy`.
pub fn split<S: CoefficientSource + ?Sized>(
    secret: FieldElement,
    policy: &SharingPolicy,
    randomness: &mut S,
) -> Result<ShareBatch> {
    if secret.modulus() != policy.prime() {
        return Err(Error::ModulusMismatch {
            left: secret.modulus().get(),
            right: policy.prime().get(),
        });
    }
    let poly = make_polynomial(secret, policy.threshold, randomness)?;
    share_polynomial(&poly, policy)
}

fn check_points(points: &[(FieldElement, FieldElement)]) -> Result<Prime> {
    let prime = points[0].0.modulus();
    let mut seen = HashSet::with_capacity(points.len());
    for &(x, y) in points {
        for v in [x, y] {
            if v.modulus() != prime {
                return Err(Error::ModulusMismatch {
                    left: prime.get(),
                    right: v.modulus().get(),
                });
            }
        }
        if !seen.insert(x.residue()) {
            return Err(Error::DuplicatePoint(x.residue()));
        }
    }
    Ok(prime)
}

/// Value at `at` of the unique polynomial of degree `< points.len()` through
/// `points`.
pub fn interpolate_at(
    points: &[(FieldElement, FieldElement)],
    at: FieldElement,
) -> Result<FieldElement> {
    if points.is_empty() {
        return Err(Error::InsufficientShares { needed: 1, got: 0 });
    }
    let prime = check_points(points)?;
    let mut acc = prime.zero();
    for (i, &(xi, yi)) in points.iter().enumerate() {
        let mut num = prime.one();
        let mut den = prime.one();
        for (j, &(xj, _)) in points.iter().enumerate() {
            if i != j {
                num = num.mul(at.sub(xj)?)?;
                den = den.mul(xi.sub(xj)?)?;
            }
        }
        acc = acc.add(yi.mul(num.div(den)?)?)?;
    }
    Ok(acc)
}

/// Recovers the constant term from exactly `threshold` points:
/// `sum_i y_i * prod_{j != i} x_j / (x_j - x_i)`.
pub fn interpolate_at_zero(
    points: &[(FieldElement, FieldElement)],
    threshold: usize,
) -> Result<FieldElement> {
    if points.len() < threshold || points.is_empty() {
        return Err(Error::InsufficientShares {
            needed: threshold.max(1),
            got: points.len(),
        });
    }
    if points.len() > threshold {
        return Err(Error::InvalidConfig(format!(
            "interpolation takes exactly {threshold} points, got {}",
            points.len()
        )));
    }
    let prime = check_points(points)?;
    let mut acc = prime.zero();
    for (i, &(xi, yi)) in points.iter().enumerate() {
        let mut weight = prime.one();
        for (j, &(xj, _)) in points.iter().enumerate() {
            if i != j {
                weight = weight.mul(xj.div(xj.sub(xi)?)?)?;
            }
        }
        acc = acc.add(yi.mul(weight)?)?;
    }
    Ok(acc)
}

/// Folds one incoming share into a center's running sum.
pub fn accumulate(sum: FieldElement, incoming: Share) -> Result<FieldElement> {
    sum.add(incoming.value)
}
