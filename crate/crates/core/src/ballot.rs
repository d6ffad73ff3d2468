//! Election parameters and the bit-window ballot encoding.
//!
//! With `n` voters every candidate needs a counter of `w = floor(log2 n) + 1`
//! bits. A vote for candidate `k` (1-based, in config order) is the field
//! element `2^((k-1) w)`, so summing ballots increments exactly one window
//! and no window can carry into the next. Decoding the packed tally is a
//! matter of slicing its binary representation into `m` windows.

use std::collections::HashSet;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::field::{smallest_prime_above, FieldElement, Prime};
use crate::shamir::SharingPolicy;
use crate::{Error, Result};

/// Widest packed tally we can decode; keeps `2^(m w)` inside `u64`.
pub const MAX_TALLY_BITS: u32 = 63;

/// Counter width for `voter_count` voters: `floor(log2 n) + 1`.
pub fn window_width(voter_count: u64) -> u32 {
    64 - voter_count.leading_zeros()
}

/// The public election document, as handed to centers and terminals.
///
/// Evaluation points are deliberately absent; they live in
/// [`OfficerSecrets`]. Field order is the serialization order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PublicConfig {
    pub election_id: String,
    pub candidates: Vec<String>,
    pub voter_count: u64,
    pub window_width: u32,
    pub prime: Prime,
    pub threshold: usize,
    pub center_count: usize,
    /// Hex Ed25519 verifying key of each center, in center order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub center_public_keys: Vec<String>,
    /// Set only for fixtures that reproduce a transcript run in a field too
    /// small for every reachable tally.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub relaxed_field_bound: bool,
}

impl PublicConfig {
    pub fn candidate_count(&self) -> usize {
        self.candidates.len()
    }

    /// Total packed width `m * w`.
    pub fn tally_bits(&self) -> u32 {
        self.candidates.len() as u32 * self.window_width
    }

    /// Checks every invariant a center or terminal can check without the
    /// evaluation points.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.election_id.is_empty() {
            return bad("election_id is empty".into());
        }
        if self.candidates.is_empty() {
            return bad("at least one candidate is required".into());
        }
        let mut names = HashSet::new();
        for name in &self.candidates {
            if name.trim().is_empty() {
                return bad("candidate names must be non-empty".into());
            }
            if !names.insert(name.as_str()) {
                return bad(format!("candidate {name:?} listed twice"));
            }
        }
        if self.voter_count == 0 {
            return bad("voter_count must be at least 1".into());
        }
        let w = window_width(self.voter_count);
        if self.window_width != w {
            return bad(format!(
                "window_width must be floor(log2 {}) + 1 = {w}, got {}",
                self.voter_count, self.window_width
            ));
        }
        let bits = self.candidates.len() as u64 * w as u64;
        if bits > MAX_TALLY_BITS as u64 {
            return Err(Error::UnsupportedScale(format!(
                "{} candidates x {w} bits = {bits} bits exceeds the {MAX_TALLY_BITS}-bit limit",
                self.candidates.len()
            )));
        }
        let max_tally = (1u64 << bits) - 1;
        if !self.relaxed_field_bound && self.prime.get() <= max_tally {
            return bad(format!(
                "prime {} cannot represent every tally up to 2^{bits} - 1 = {max_tally}",
                self.prime
            ));
        }
        if self.threshold == 0 || self.threshold > self.center_count {
            return bad(format!(
                "threshold must satisfy 1 <= t <= c, got t = {}, c = {}",
                self.threshold, self.center_count
            ));
        }
        if self.prime.get() <= self.center_count as u64 {
            return bad(format!(
                "prime {} must exceed the center count {}",
                self.prime, self.center_count
            ));
        }
        if !self.center_public_keys.is_empty() && self.center_public_keys.len() != self.center_count {
            return bad(format!(
                "{} public keys for {} centers",
                self.center_public_keys.len(),
                self.center_count
            ));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: PublicConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// 1-based index of a candidate by name.
    pub fn candidate_index(&self, name: &str) -> Option<usize> {
        self.candidates.iter().position(|c| c == name).map(|i| i + 1)
    }
}

/// The officer-only document: each center's private evaluation point.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OfficerSecrets {
    pub election_id: String,
    /// Decimal residues, center `j` at position `j - 1`.
    pub eval_points: Vec<String>,
}

impl OfficerSecrets {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("secrets serialize")
    }

    /// Parses the points into `prime`'s field, rejecting non-canonical residues.
    pub fn points(&self, prime: Prime) -> Result<Vec<FieldElement>> {
        self.eval_points
            .iter()
            .map(|s| parse_residue(s, prime))
            .collect()
    }
}

/// Parses a decimal residue that must already be reduced modulo `prime`.
pub fn parse_residue(text: &str, prime: Prime) -> Result<FieldElement> {
    let canonical = !text.is_empty()
        && text.bytes().all(|b| b.is_ascii_digit())
        && (text == "0" || !text.starts_with('0'));
    let value: u64 = if canonical { text.parse().ok() } else { None }
        .ok_or_else(|| Error::Malformed(format!("{text:?} is not a decimal residue")))?;
    if value >= prime.get() {
        return Err(Error::Malformed(format!("{value} is not reduced modulo {prime}")));
    }
    Ok(prime.element(value))
}

/// The officer's complete view: public parameters plus the sharing policy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ElectionConfig {
    public: PublicConfig,
    policy: SharingPolicy,
}

impl ElectionConfig {
    /// Assembles a config with an explicitly chosen prime and policy.
    /// The prime must still exceed every reachable tally.
    pub fn with_prime(
        election_id: impl Into<String>,
        candidates: Vec<String>,
        voter_count: u64,
        policy: SharingPolicy,
    ) -> Result<Self> {
        Self::assemble(election_id.into(), candidates, voter_count, policy, false)
    }

    /// Like [`ElectionConfig::with_prime`] but accepts a field smaller than
    /// the largest reachable tally. Only suitable for replaying transcripts
    /// whose actual tally is known to fit.
    pub fn with_field_override(
        election_id: impl Into<String>,
        candidates: Vec<String>,
        voter_count: u64,
        policy: SharingPolicy,
    ) -> Result<Self> {
        Self::assemble(election_id.into(), candidates, voter_count, policy, true)
    }

    fn assemble(
        election_id: String,
        candidates: Vec<String>,
        voter_count: u64,
        policy: SharingPolicy,
        relaxed_field_bound: bool,
    ) -> Result<Self> {
        let public = PublicConfig {
            election_id,
            candidates,
            voter_count,
            window_width: window_width(voter_count),
            prime: policy.prime(),
            threshold: policy.threshold(),
            center_count: policy.center_count(),
            center_public_keys: Vec::new(),
            relaxed_field_bound,
        };
        public.validate()?;
        Ok(Self { public, policy })
    }

    /// Rebuilds the officer view from the two documents.
    pub fn from_parts(public: PublicConfig, secrets: &OfficerSecrets) -> Result<Self> {
        public.validate()?;
        if secrets.election_id != public.election_id {
            return Err(Error::InvalidConfig(format!(
                "secrets belong to election {}, config to {}",
                secrets.election_id, public.election_id
            )));
        }
        let points = secrets.points(public.prime)?;
        if points.len() != public.center_count {
            return Err(Error::InvalidConfig(format!(
                "{} evaluation points for {} centers",
                points.len(),
                public.center_count
            )));
        }
        let policy = SharingPolicy::new(public.threshold, points)?;
        Ok(Self { public, policy })
    }

    pub fn public(&self) -> &PublicConfig {
        &self.public
    }

    pub fn policy(&self) -> &SharingPolicy {
        &self.policy
    }

    pub fn prime(&self) -> Prime {
        self.public.prime
    }

    pub fn set_election_id(&mut self, id: impl Into<String>) {
        self.public.election_id = id.into();
    }

    pub fn set_center_public_keys(&mut self, keys: Vec<String>) -> Result<()> {
        let previous = std::mem::replace(&mut self.public.center_public_keys, keys);
        if let Err(e) = self.public.validate() {
            self.public.center_public_keys = previous;
            return Err(e);
        }
        Ok(())
    }

    pub fn secrets(&self) -> OfficerSecrets {
        OfficerSecrets {
            election_id: self.public.election_id.clone(),
            eval_points: self
                .policy
                .eval_points()
                .iter()
                .map(|x| x.residue().to_string())
                .collect(),
        }
    }
}

/// Chooses the field and private evaluation points for a new election.
///
/// The prime is the least one above both the largest packed tally
/// `2^(m w) - 1` and the center count.
pub fn derive_config<R: RngCore + ?Sized>(
    candidates: Vec<String>,
    voter_count: u64,
    threshold: usize,
    center_count: usize,
    rng: &mut R,
) -> Result<ElectionConfig> {
    if candidates.is_empty() || voter_count == 0 || center_count == 0 {
        return Err(Error::InvalidConfig(
            "candidates, voter count and center count must all be positive".into(),
        ));
    }
    if threshold == 0 || threshold > center_count {
        return Err(Error::InvalidConfig(format!(
            "threshold must satisfy 1 <= t <= c, got t = {threshold}, c = {center_count}"
        )));
    }
    let w = window_width(voter_count);
    let bits = candidates.len() as u64 * w as u64;
    if bits > MAX_TALLY_BITS as u64 {
        return Err(Error::UnsupportedScale(format!(
            "{} candidates x {w} bits = {bits} bits needs a field wider than 64 bits",
            candidates.len()
        )));
    }
    let max_tally = (1u64 << bits) - 1;
    let prime = smallest_prime_above(max_tally.max(center_count as u64))?;
    let policy = SharingPolicy::random(prime, threshold, center_count, rng)?;
    let mut id = [0u8; 16];
    rng.fill_bytes(&mut id);
    ElectionConfig::with_prime(hex::encode(id), candidates, voter_count, policy)
}

/// One vote, packed as `2^((k-1) w)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncodedBallot(FieldElement);

impl EncodedBallot {
    pub fn value(self) -> FieldElement {
        self.0
    }
}

/// Encodes a vote for 1-based candidate `candidate`.
pub fn encode_vote(config: &PublicConfig, candidate: usize) -> Result<EncodedBallot> {
    let m = config.candidate_count();
    if candidate == 0 || candidate > m {
        return Err(Error::InvalidCandidate {
            index: candidate,
            candidates: m,
        });
    }
    let shift = (candidate as u32 - 1) * config.window_width;
    Ok(EncodedBallot(config.prime.element(1u64 << shift)))
}

/// Per-candidate counts unpacked from an interpolated tally.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TallyResult {
    pub counts: Vec<u64>,
    pub raw_decoded: FieldElement,
}

impl TallyResult {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Packs the counts back into windows of `window_width` bits.
    pub fn repack(&self, window_width: u32) -> u64 {
        self.counts
            .iter()
            .enumerate()
            .map(|(i, &c)| c << (i as u32 * window_width))
            .sum()
    }
}

/// Slices `packed` into `m` windows of `w` bits, least significant first.
pub fn decode_tally(config: &PublicConfig, packed: FieldElement) -> Result<TallyResult> {
    if packed.modulus() != config.prime {
        return Err(Error::ModulusMismatch {
            left: packed.modulus().get(),
            right: config.prime.get(),
        });
    }
    let w = config.window_width;
    let bits = config.tally_bits();
    let residue = packed.residue();
    if bits < 64 && residue >> bits != 0 {
        return Err(Error::CorruptedTally { residue, bits });
    }
    let mask = (1u64 << w) - 1;
    let counts: Vec<u64> = (0..config.candidate_count())
        .map(|i| (residue >> (i as u32 * w)) & mask)
        .collect();
    for (i, &count) in counts.iter().enumerate() {
        if count > config.voter_count {
            return Err(Error::ImplausibleCount {
                candidate: i + 1,
                count,
                voters: config.voter_count,
            });
        }
    }
    if counts.iter().sum::<u64>() > config.voter_count {
        return Err(Error::ImplausibleCount {
            candidate: 0,
            count: counts.iter().sum(),
            voters: config.voter_count,
        });
    }
    Ok(TallyResult {
        counts,
        raw_decoded: packed,
    })
}
