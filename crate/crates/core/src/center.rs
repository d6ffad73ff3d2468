//! Collection-center node.
//!
//! A center learns nothing but its own share of each ballot and keeps only
//! their running sum. Its lifecycle is `idle -> collecting -> finalized`;
//! every accepted transition is appended to a checksummed journal before it
//! takes effect, so a crashed center can be rebuilt exactly by replay.
//!
//! On close the center emits a [`FinalizationRecord`]: the share sum and
//! ballot count, hashed with SHA-256 and signed with the center's Ed25519
//! key.

use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};

use ed25519_dalek::{Signature, Signer, SigningKey, Verifier, VerifyingKey};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ballot::{parse_residue, PublicConfig};
use crate::field::FieldElement;
use crate::{Error, Result};

const MAX_BALLOT_ID_LEN: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Idle,
    Collecting,
    Finalized,
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Phase::Idle => "idle",
            Phase::Collecting => "collecting",
            Phase::Finalized => "finalized",
        })
    }
}

/// A center's pre-issued Ed25519 signing key.
#[derive(Clone)]
pub struct CenterKey(SigningKey);

impl std::fmt::Debug for CenterKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_tuple("CenterKey").field(&self.public_hex()).finish()
    }
}

impl CenterKey {
    pub fn generate<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        let mut seed = [0u8; 32];
        rng.fill_bytes(&mut seed);
        CenterKey(SigningKey::from_bytes(&seed))
    }

    pub fn from_hex(text: &str) -> Result<Self> {
        let bytes: [u8; 32] = decode_lower_hex(text)?
            .try_into()
            .map_err(|_| Error::Malformed("signing key must be 32 bytes".into()))?;
        Ok(CenterKey(SigningKey::from_bytes(&bytes)))
    }

    pub fn secret_hex(&self) -> String {
        hex::encode(self.0.to_bytes())
    }

    pub fn public_hex(&self) -> String {
        hex::encode(self.0.verifying_key().to_bytes())
    }

    pub fn verifying_key(&self) -> VerifyingKey {
        self.0.verifying_key()
    }
}

/// On-disk form of a center key.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeyFile {
    pub center_id: u32,
    pub secret_key: String,
}

pub fn parse_verifying_key(text: &str) -> Result<VerifyingKey> {
    let bytes: [u8; 32] = decode_lower_hex(text)?
        .try_into()
        .map_err(|_| Error::Malformed("verifying key must be 32 bytes".into()))?;
    VerifyingKey::from_bytes(&bytes).map_err(|e| Error::Malformed(format!("verifying key: {e}")))
}

/// Hex decoding that only accepts the canonical lowercase form.
pub(crate) fn decode_lower_hex(text: &str) -> Result<Vec<u8>> {
    if text.bytes().any(|b| b.is_ascii_uppercase()) {
        return Err(Error::Malformed("hex must be lowercase".into()));
    }
    hex::decode(text).map_err(|e| Error::Malformed(format!("hex: {e}")))
}

/// SHA-256 over `election_id || center_id (u32 LE) || residue (u64 LE) || count (u64 LE)`.
pub fn record_digest(election_id: &str, center_id: u32, residue: u64, count: u64) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(election_id.as_bytes());
    h.update(center_id.to_le_bytes());
    h.update(residue.to_le_bytes());
    h.update(count.to_le_bytes());
    h.finalize().into()
}

/// A center's signed statement of its final share sum.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FinalizationRecord {
    pub election_id: String,
    pub center_id: u32,
    /// Decimal residue of the share sum.
    pub share_sum: String,
    pub received_count: u64,
    /// Lowercase hex SHA-256.
    pub digest: String,
    /// Lowercase hex Ed25519 signature over the raw digest bytes.
    pub signature: String,
}

impl FinalizationRecord {
    /// Hashes and signs a center's final state.
    pub fn new_signed(
        election_id: &str,
        center_id: u32,
        sum: FieldElement,
        count: u64,
        key: &CenterKey,
    ) -> Self {
        let digest = record_digest(election_id, center_id, sum.residue(), count);
        let signature = key.0.sign(&digest);
        FinalizationRecord {
            election_id: election_id.to_string(),
            center_id,
            share_sum: sum.residue().to_string(),
            received_count: count,
            digest: hex::encode(digest),
            signature: hex::encode(signature.to_bytes()),
        }
    }

    /// Compact JSON with fixed field order.
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }

    /// Parses a record, refusing any encoding other than the canonical one.
    pub fn from_canonical_json(text: &str) -> Result<Self> {
        let trimmed = text.strip_suffix('\n').unwrap_or(text);
        let record: FinalizationRecord = serde_json::from_str(trimmed)?;
        if record.to_canonical_json() != trimmed {
            return Err(Error::Malformed("record is not in canonical form".into()));
        }
        Ok(record)
    }

    /// Recomputes the digest from the record's fields.
    pub fn check_digest(&self) -> Result<[u8; 32]> {
        let residue: u64 = parse_decimal(&self.share_sum)?;
        let expected = record_digest(&self.election_id, self.center_id, residue, self.received_count);
        let stated = decode_lower_hex(&self.digest)?;
        if stated.as_slice() != expected.as_slice() {
            return Err(Error::Integrity {
                center_id: self.center_id,
            });
        }
        Ok(expected)
    }

    /// Digest check followed by signature check under `key`.
    pub fn verify(&self, key: &VerifyingKey) -> Result<()> {
        let digest = self.check_digest()?;
        let sig_bytes: [u8; 64] = decode_lower_hex(&self.signature)?
            .try_into()
            .map_err(|_| Error::Authenticity {
                center_id: self.center_id,
            })?;
        key.verify(&digest, &Signature::from_bytes(&sig_bytes))
            .map_err(|_| Error::Authenticity {
                center_id: self.center_id,
            })
    }
}

fn parse_decimal(text: &str) -> Result<u64> {
    let canonical = !text.is_empty()
        && text.bytes().all(|b| b.is_ascii_digit())
        && (text == "0" || !text.starts_with('0'));
    if !canonical {
        return Err(Error::Malformed(format!("{text:?} is not a decimal residue")));
    }
    text.parse()
        .map_err(|_| Error::Malformed(format!("{text:?} is out of range")))
}

/// Destination for journal lines. Each call must make the line durable
/// before returning.
pub trait JournalSink: Send {
    fn append(&mut self, line: &str) -> io::Result<()>;
}

/// Append-only journal file, synced after every line.
#[derive(Debug)]
pub struct FileJournal {
    file: File,
}

impl FileJournal {
    pub fn open(path: impl AsRef<Path>) -> io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self { file })
    }
}

impl JournalSink for FileJournal {
    fn append(&mut self, line: &str) -> io::Result<()> {
        self.file.write_all(line.as_bytes())?;
        self.file.write_all(b"\n")?;
        self.file.sync_data()
    }
}

/// In-memory journal; clones share the same buffer.
#[derive(Debug, Clone, Default)]
pub struct MemoryJournal {
    lines: Arc<Mutex<Vec<String>>>,
}

impl MemoryJournal {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn lines(&self) -> Vec<String> {
        self.lines.lock().unwrap().clone()
    }

    /// The journal as file contents.
    pub fn contents(&self) -> String {
        self.lines().iter().map(|l| format!("{l}\n")).collect()
    }
}

impl JournalSink for MemoryJournal {
    fn append(&mut self, line: &str) -> io::Result<()> {
        self.lines.lock().unwrap().push(line.to_string());
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum JournalEntry {
    Open { center_id: u32, config: PublicConfig },
    Submit { ballot_id: String, value: String },
    Finalize { record: FinalizationRecord },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JournalLine {
    seq: u64,
    entry: JournalEntry,
    checksum: String,
}

fn chain_checksum(previous: &str, seq: u64, entry: &JournalEntry) -> String {
    let mut h = Sha256::new();
    h.update(previous.as_bytes());
    h.update(seq.to_le_bytes());
    h.update(serde_json::to_string(entry).expect("entry serializes").as_bytes());
    hex::encode(h.finalize())
}

/// Returned to the terminal once a share is durably accumulated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub center_id: u32,
    pub ballot_id: String,
    pub received_count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CenterStatus {
    pub center_id: u32,
    pub election_id: Option<String>,
    pub phase: Phase,
    pub received_count: u64,
}

/// One collection center's state for one election.
pub struct CenterState {
    center_id: u32,
    phase: Phase,
    config: Option<PublicConfig>,
    share_sum: Option<FieldElement>,
    seen: HashSet<String>,
    record: Option<FinalizationRecord>,
    journal: Box<dyn JournalSink>,
    seq: u64,
    last_checksum: String,
}

impl std::fmt::Debug for CenterState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CenterState")
            .field("center_id", &self.center_id)
            .field("phase", &self.phase)
            .field("share_sum", &self.share_sum)
            .field("received_count", &self.seen.len())
            .finish_non_exhaustive()
    }
}

impl CenterState {
    pub fn new(center_id: u32, journal: Box<dyn JournalSink>) -> Self {
        Self {
            center_id,
            phase: Phase::Idle,
            config: None,
            share_sum: None,
            seen: HashSet::new(),
            record: None,
            journal,
            seq: 0,
            last_checksum: String::new(),
        }
    }

    pub fn center_id(&self) -> u32 {
        self.center_id
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn config(&self) -> Option<&PublicConfig> {
        self.config.as_ref()
    }

    pub fn election_id(&self) -> Option<&str> {
        self.config.as_ref().map(|c| c.election_id.as_str())
    }

    pub fn share_sum(&self) -> Option<FieldElement> {
        self.share_sum
    }

    pub fn received_count(&self) -> u64 {
        self.seen.len() as u64
    }

    pub fn record(&self) -> Option<&FinalizationRecord> {
        self.record.as_ref()
    }

    pub fn status(&self) -> CenterStatus {
        CenterStatus {
            center_id: self.center_id,
            election_id: self.election_id().map(str::to_string),
            phase: self.phase,
            received_count: self.received_count(),
        }
    }

    fn write(&mut self, entry: &JournalEntry) -> Result<()> {
        let seq = self.seq + 1;
        let checksum = chain_checksum(&self.last_checksum, seq, entry);
        let line = JournalLine {
            seq,
            entry: entry.clone(),
            checksum,
        };
        self.journal
            .append(&serde_json::to_string(&line).expect("journal line serializes"))?;
        self.seq = seq;
        self.last_checksum = line.checksum;
        Ok(())
    }

    fn check_open(&self, config: &PublicConfig) -> Result<()> {
        match self.phase {
            Phase::Idle => {}
            Phase::Collecting => return Err(Error::AlreadyOpen(config.election_id.clone())),
            Phase::Finalized => {
                return Err(Error::Phase("election already finalized".into()));
            }
        }
        config.validate()?;
        if self.center_id == 0 || self.center_id as usize > config.center_count {
            return Err(Error::InvalidConfig(format!(
                "center {} is not one of the election's {} centers",
                self.center_id, config.center_count
            )));
        }
        Ok(())
    }

    fn apply_open(&mut self, config: PublicConfig) {
        self.share_sum = Some(config.prime.zero());
        self.config = Some(config);
        self.phase = Phase::Collecting;
    }

    /// Registers the public election document and starts collecting.
    pub fn open_election(&mut self, config: PublicConfig) -> Result<()> {
        self.check_open(&config)?;
        self.write(&JournalEntry::Open {
            center_id: self.center_id,
            config: config.clone(),
        })?;
        self.apply_open(config);
        Ok(())
    }

    fn check_submit(&self, ballot_id: &str, value: FieldElement) -> Result<()> {
        let config = match (self.phase, &self.config) {
            (Phase::Collecting, Some(c)) => c,
            (phase, _) => return Err(Error::Phase(format!("cannot accept shares while {phase}"))),
        };
        if ballot_id.is_empty()
            || ballot_id.len() > MAX_BALLOT_ID_LEN
            || !ballot_id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
        {
            return Err(Error::Malformed(format!("invalid ballot id {ballot_id:?}")));
        }
        if value.modulus() != config.prime {
            return Err(Error::ModulusMismatch {
                left: config.prime.get(),
                right: value.modulus().get(),
            });
        }
        if self.seen.contains(ballot_id) {
            return Err(Error::DuplicateBallot(ballot_id.to_string()));
        }
        if self.received_count() >= config.voter_count {
            return Err(Error::CapacityExceeded(self.received_count()));
        }
        Ok(())
    }

    fn apply_submit(&mut self, ballot_id: String, value: FieldElement) -> Result<()> {
        let sum = self.share_sum.expect("collecting center has a sum");
        self.share_sum = Some(sum.add(value)?);
        self.seen.insert(ballot_id);
        Ok(())
    }

    /// Accumulates one share. The share is journaled before it is counted,
    /// so a returned [`Ack`] means the vote is durably registered here.
    pub fn submit_share(&mut self, ballot_id: &str, value: FieldElement) -> Result<Ack> {
        self.check_submit(ballot_id, value)?;
        self.write(&JournalEntry::Submit {
            ballot_id: ballot_id.to_string(),
            value: value.residue().to_string(),
        })?;
        self.apply_submit(ballot_id.to_string(), value)?;
        Ok(Ack {
            center_id: self.center_id,
            ballot_id: ballot_id.to_string(),
            received_count: self.received_count(),
        })
    }

    /// Closes collection and signs the final sum. Calling it again returns
    /// the record produced the first time.
    pub fn finalize(&mut self, key: &CenterKey) -> Result<FinalizationRecord> {
        match self.phase {
            Phase::Finalized => {
                return Ok(self.record.clone().expect("finalized center has a record"));
            }
            Phase::Idle => return Err(Error::Phase("no election is open".into())),
            Phase::Collecting => {}
        }
        let config = self.config.as_ref().expect("collecting center has a config");
        if let Some(registered) = config.center_public_keys.get(self.center_id as usize - 1) {
            if *registered != key.public_hex() {
                return Err(Error::InvalidConfig(format!(
                    "signing key does not match the key registered for center {}",
                    self.center_id
                )));
            }
        }
        let record = FinalizationRecord::new_signed(
            &config.election_id,
            self.center_id,
            self.share_sum.expect("collecting center has a sum"),
            self.received_count(),
            key,
        );
        self.write(&JournalEntry::Finalize {
            record: record.clone(),
        })?;
        self.record = Some(record.clone());
        self.phase = Phase::Finalized;
        Ok(record)
    }

    /// Rebuilds a center by replaying its journal, then continues appending
    /// to `sink`. Any malformed, truncated or out-of-chain line aborts the
    /// recovery.
    pub fn recover<R: BufRead>(
        center_id: u32,
        mut reader: R,
        sink: Box<dyn JournalSink>,
    ) -> Result<Self> {
        let mut state = Self::new(center_id, sink);
        let mut line_no = 0usize;
        let mut buf = String::new();
        loop {
            buf.clear();
            if reader.read_line(&mut buf)? == 0 {
                break;
            }
            line_no += 1;
            let fail = |reason: String| Error::JournalIntegrity {
                line: line_no,
                reason,
            };
            let Some(text) = buf.strip_suffix('\n') else {
                return Err(fail("truncated entry".into()));
            };
            let line: JournalLine =
                serde_json::from_str(text).map_err(|e| fail(format!("unparseable entry: {e}")))?;
            if line.seq != state.seq + 1 {
                return Err(fail(format!("expected seq {}, found {}", state.seq + 1, line.seq)));
            }
            if chain_checksum(&state.last_checksum, line.seq, &line.entry) != line.checksum {
                return Err(fail("checksum mismatch".into()));
            }
            state
                .replay(line.entry)
                .map_err(|e| fail(format!("entry rejected on replay: {e}")))?;
            state.seq = line.seq;
            state.last_checksum = line.checksum;
        }
        Ok(state)
    }

    fn replay(&mut self, entry: JournalEntry) -> Result<()> {
        match entry {
            JournalEntry::Open { center_id, config } => {
                if center_id != self.center_id {
                    return Err(Error::InvalidConfig(format!(
                        "journal belongs to center {center_id}"
                    )));
                }
                self.check_open(&config)?;
                self.apply_open(config);
            }
            JournalEntry::Submit { ballot_id, value } => {
                let prime = self
                    .config
                    .as_ref()
                    .ok_or_else(|| Error::Phase("submission before open".into()))?
                    .prime;
                let value = parse_residue(&value, prime)?;
                self.check_submit(&ballot_id, value)?;
                self.apply_submit(ballot_id, value)?;
            }
            JournalEntry::Finalize { record } => {
                if self.phase != Phase::Collecting {
                    return Err(Error::Phase(format!("finalize while {}", self.phase)));
                }
                let sum = self.share_sum.expect("collecting center has a sum");
                if record.share_sum != sum.residue().to_string()
                    || record.received_count != self.received_count()
                    || record.center_id != self.center_id
                {
                    return Err(Error::Integrity {
                        center_id: self.center_id,
                    });
                }
                record.check_digest()?;
                self.record = Some(record);
                self.phase = Phase::Finalized;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ballot::{encode_vote, ElectionConfig};
    use crate::field::Prime;
    use crate::shamir::{split, ForcedCoefficients, SharingPolicy};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    const CC1: [u64; 6] = [40, 165, 86, 62, 218, 188];

    fn table_public() -> PublicConfig {
        let p = Prime::new(257).unwrap();
        let policy = SharingPolicy::new(2, vec![p.element(1), p.element(2), p.element(3)]).unwrap();
        let names = ["Charles", "Bob", "Alice"].map(String::from).to_vec();
        ElectionConfig::with_field_override("sample", names, 7, policy)
            .unwrap()
            .public()
            .clone()
    }

    fn open_center(id: u32) -> (CenterState, MemoryJournal) {
        let journal = MemoryJournal::new();
        let mut c = CenterState::new(id, Box::new(journal.clone()));
        c.open_election(table_public()).unwrap();
        (c, journal)
    }

    fn key(seed: u64) -> CenterKey {
        CenterKey::generate(&mut ChaCha20Rng::seed_from_u64(seed))
    }

    #[test]
    fn open_examples() {
        let (c, _) = open_center(1);
        assert_eq!(c.phase(), Phase::Collecting);
        assert_eq!(c.share_sum().unwrap().residue(), 0);

        let mut bad = table_public();
        bad.threshold = 4;
        let mut idle = CenterState::new(1, Box::new(MemoryJournal::new()));
        assert!(matches!(idle.open_election(bad), Err(Error::InvalidConfig(_))));
        assert_eq!(idle.phase(), Phase::Idle);

        let (mut c, _) = open_center(1);
        assert!(matches!(c.open_election(table_public()), Err(Error::AlreadyOpen(_))));

        let mut outsider = CenterState::new(4, Box::new(MemoryJournal::new()));
        assert!(outsider.open_election(table_public()).is_err());
    }

    #[test]
    fn submit_running_sums() {
        let (mut c, _) = open_center(1);
        let p = Prime::new(257).unwrap();
        let mut sums = vec![];
        for (i, v) in CC1.iter().enumerate() {
            let ack = c.submit_share(&format!("b{i}"), p.element(*v)).unwrap();
            assert_eq!(ack.received_count, i as u64 + 1);
            sums.push(c.share_sum().unwrap().residue());
        }
        assert_eq!(sums, [40, 205, 34, 96, 57, 245]);
    }

    #[test]
    fn submit_errors() {
        let (mut c, _) = open_center(1);
        let p = Prime::new(257).unwrap();
        c.submit_share("b0", p.element(40)).unwrap();
        assert!(matches!(c.submit_share("b0", p.element(40)), Err(Error::DuplicateBallot(_))));
        assert_eq!(c.share_sum().unwrap().residue(), 40);
        assert!(matches!(
            c.submit_share("b1", Prime::new(521).unwrap().element(1)),
            Err(Error::ModulusMismatch { .. })
        ));
        assert!(c.submit_share("bad id", p.element(1)).is_err());
        for i in 1..7 {
            c.submit_share(&format!("b{i}"), p.element(1)).unwrap();
        }
        assert!(matches!(c.submit_share("b8", p.element(1)), Err(Error::CapacityExceeded(7))));
        c.finalize(&key(1)).unwrap();
        assert!(matches!(c.submit_share("b9", p.element(1)), Err(Error::Phase(_))));
    }

    #[test]
    fn finalize_examples() {
        let (mut c, _) = open_center(1);
        let p = Prime::new(257).unwrap();
        for (i, v) in CC1.iter().enumerate() {
            c.submit_share(&format!("b{i}"), p.element(*v)).unwrap();
        }
        let k = key(7);
        let record = c.finalize(&k).unwrap();
        assert_eq!(record.share_sum, "245");
        assert_eq!(record.received_count, 6);
        record.verify(&k.verifying_key()).unwrap();
        assert_eq!(c.finalize(&k).unwrap(), record);

        let mut tampered = record.clone();
        tampered.share_sum = "246".into();
        assert!(matches!(tampered.verify(&k.verifying_key()), Err(Error::Integrity { center_id: 1 })));
        assert!(matches!(record.verify(&key(8).verifying_key()), Err(Error::Authenticity { .. })));

        let (mut empty, _) = open_center(2);
        let r = empty.finalize(&k).unwrap();
        assert_eq!((r.share_sum.as_str(), r.received_count), ("0", 0));

        let mut idle = CenterState::new(1, Box::new(MemoryJournal::new()));
        assert!(matches!(idle.finalize(&k), Err(Error::Phase(_))));
    }

    #[test]
    fn finalize_checks_registered_key() {
        let mut public = table_public();
        let keys: Vec<CenterKey> = (0..3).map(key).collect();
        public.center_public_keys = keys.iter().map(CenterKey::public_hex).collect();
        let mut c = CenterState::new(2, Box::new(MemoryJournal::new()));
        c.open_election(public).unwrap();
        assert!(c.finalize(&keys[0]).is_err());
        c.finalize(&keys[1]).unwrap();
    }

    #[test]
    fn record_digest_layout() {
        let mut bytes = b"sample".to_vec();
        bytes.extend_from_slice(&[1, 0, 0, 0]);
        bytes.extend_from_slice(&[245, 0, 0, 0, 0, 0, 0, 0]);
        bytes.extend_from_slice(&[6, 0, 0, 0, 0, 0, 0, 0]);
        let expected: [u8; 32] = Sha256::digest(&bytes).into();
        assert_eq!(record_digest("sample", 1, 245, 6), expected);
    }

    #[test]
    fn canonical_record_parsing() {
        let (mut c, _) = open_center(1);
        let record = c.finalize(&key(1)).unwrap();
        let json = record.to_canonical_json();
        assert!(json.starts_with(r#"{"election_id":"sample","center_id":1,"share_sum":"0","received_count":0,"digest":""#));
        assert_eq!(FinalizationRecord::from_canonical_json(&json).unwrap(), record);
        assert_eq!(FinalizationRecord::from_canonical_json(&format!("{json}\n")).unwrap(), record);
        let spaced = json.replacen(",", ", ", 1);
        assert!(FinalizationRecord::from_canonical_json(&spaced).is_err());
        let upper = record.to_canonical_json().replace(&record.digest, &record.digest.to_uppercase());
        assert!(FinalizationRecord::from_canonical_json(&upper).unwrap().check_digest().is_err());
    }

    #[test]
    fn recover_replays_table_column() {
        let (mut c, journal) = open_center(1);
        let p = Prime::new(257).unwrap();
        for (i, v) in CC1.iter().enumerate() {
            c.submit_share(&format!("b{i}"), p.element(*v)).unwrap();
        }
        let text = journal.contents();
        let r = CenterState::recover(1, text.as_bytes(), Box::new(MemoryJournal::new())).unwrap();
        assert_eq!(r.share_sum().unwrap().residue(), 245);
        assert_eq!(r.received_count(), 6);
        assert_eq!(r.phase(), Phase::Collecting);

        let empty = CenterState::recover(1, &b""[..], Box::new(MemoryJournal::new())).unwrap();
        assert_eq!(empty.phase(), Phase::Idle);

        let truncated = &text[..text.len() - 10];
        assert!(matches!(
            CenterState::recover(1, truncated.as_bytes(), Box::new(MemoryJournal::new())),
            Err(Error::JournalIntegrity { line: 7, .. })
        ));
        let no_newline = &text[..text.len() - 1];
        assert!(CenterState::recover(1, no_newline.as_bytes(), Box::new(MemoryJournal::new())).is_err());
    }

    #[test]
    fn recover_rejects_edited_journal() {
        let (mut c, journal) = open_center(1);
        let p = Prime::new(257).unwrap();
        c.submit_share("a", p.element(40)).unwrap();
        c.submit_share("b", p.element(165)).unwrap();
        let text = journal.contents();
        let edited = text.replace(r#""value":"40""#, r#""value":"41""#);
        assert_ne!(edited, text);
        assert!(matches!(
            CenterState::recover(1, edited.as_bytes(), Box::new(MemoryJournal::new())),
            Err(Error::JournalIntegrity { line: 2, .. })
        ));
        let lines: Vec<&str> = text.lines().collect();
        let reordered = format!("{}\n{}\n{}\n", lines[0], lines[2], lines[1]);
        assert!(CenterState::recover(1, reordered.as_bytes(), Box::new(MemoryJournal::new())).is_err());
        assert!(CenterState::recover(2, text.as_bytes(), Box::new(MemoryJournal::new())).is_err());
    }

    #[test]
    fn recovered_center_continues_and_refinalizes_identically() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cc1.journal");
        let p = Prime::new(257).unwrap();
        let k = key(3);
        let mut c = CenterState::new(1, Box::new(FileJournal::open(&path).unwrap()));
        c.open_election(table_public()).unwrap();
        c.submit_share("a", p.element(40)).unwrap();
        drop(c);

        let reopen = || {
            let reader = io::BufReader::new(File::open(&path).unwrap());
            CenterState::recover(1, reader, Box::new(FileJournal::open(&path).unwrap())).unwrap()
        };
        let mut c = reopen();
        assert!(matches!(c.submit_share("a", p.element(40)), Err(Error::DuplicateBallot(_))));
        c.submit_share("b", p.element(165)).unwrap();
        let record = c.finalize(&k).unwrap();
        drop(c);

        let mut c = reopen();
        assert_eq!(c.phase(), Phase::Finalized);
        assert_eq!(c.finalize(&k).unwrap(), record);
        assert_eq!(record.share_sum, "205");
    }

    /// Exhaustive state machine: only idle -> collecting -> finalized moves.
    #[test]
    fn phase_operation_table() {
        let p = Prime::new(257).unwrap();
        let k = key(1);
        let fresh = |phase: Phase| {
            let mut c = CenterState::new(1, Box::new(MemoryJournal::new()));
            if phase != Phase::Idle {
                c.open_election(table_public()).unwrap();
            }
            if phase == Phase::Finalized {
                c.finalize(&k).unwrap();
            }
            c
        };
        let table = [
            (Phase::Idle, "open", Some(Phase::Collecting)),
            (Phase::Idle, "submit", None),
            (Phase::Idle, "finalize", None),
            (Phase::Collecting, "open", None),
            (Phase::Collecting, "submit", Some(Phase::Collecting)),
            (Phase::Collecting, "finalize", Some(Phase::Finalized)),
            (Phase::Finalized, "open", None),
            (Phase::Finalized, "submit", None),
            // idempotent re-emission, no transition
            (Phase::Finalized, "finalize", Some(Phase::Finalized)),
        ];
        for (from, op, to) in table {
            let mut c = fresh(from);
            let result = match op {
                "open" => c.open_election(table_public()).map(|_| ()),
                "submit" => c.submit_share("x", p.element(1)).map(|_| ()),
                _ => c.finalize(&k).map(|_| ()),
            };
            match to {
                Some(next) => {
                    assert!(result.is_ok(), "{from} {op}: {result:?}");
                    assert_eq!(c.phase(), next);
                }
                None => {
                    assert!(result.is_err(), "{from} {op} should fail");
                    assert_eq!(c.phase(), from);
                }
            }
        }
    }

    /// A single center sees uniformly distributed shares whatever the votes:
    /// with two voters, Z_5 and t = 2, every pair of shares it could observe
    /// arises from exactly one coefficient pair for every vote sequence.
    #[test]
    fn center_view_independent_of_votes() {
        let p = Prime::new(5).unwrap();
        let policy = SharingPolicy::new(2, vec![p.element(1), p.element(2)]).unwrap();
        let names = vec!["A".to_string(), "B".to_string()];
        let config = ElectionConfig::with_field_override("tiny", names, 2, policy.clone()).unwrap();
        let public = config.public().clone();
        let mut histograms = vec![];
        for votes in [[1, 1], [1, 2], [2, 1], [2, 2]] {
            let mut hist = std::collections::BTreeMap::new();
            for a in 0..5 {
                for b in 0..5 {
                    let mut c = CenterState::new(1, Box::new(MemoryJournal::new()));
                    c.open_election(public.clone()).unwrap();
                    let mut forced = ForcedCoefficients::new([a, b], 0);
                    let mut view = vec![];
                    for (i, &k) in votes.iter().enumerate() {
                        let secret = encode_vote(&public, k).unwrap().value();
                        let share = split(secret, &policy, &mut forced).unwrap().for_center(1).unwrap();
                        c.submit_share(&format!("v{i}"), share.value).unwrap();
                        view.push(share.value.residue());
                    }
                    *hist.entry(view).or_insert(0) += 1;
                }
            }
            assert_eq!(hist.len(), 25);
            assert!(hist.values().all(|&n| n == 1));
            histograms.push(hist);
        }
        assert!(histograms.windows(2).all(|w| w[0] == w[1]));
    }

    proptest! {
        #[test]
        fn sum_is_order_independent(values in prop::collection::vec(0u64..257, 0..7), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let p = Prime::new(257).unwrap();
            let expected = values.iter().fold(0u64, |a, v| (a + v) % 257);
            let mut order: Vec<usize> = (0..values.len()).collect();
            order.shuffle(&mut ChaCha20Rng::seed_from_u64(seed));
            let (mut c, journal) = open_center(1);
            for i in order {
                c.submit_share(&format!("b{i}"), p.element(values[i])).unwrap();
            }
            prop_assert_eq!(c.share_sum().unwrap().residue(), expected);
            let r = CenterState::recover(1, journal.contents().as_bytes(), Box::new(MemoryJournal::new())).unwrap();
            prop_assert_eq!(r.share_sum(), c.share_sum());
        }
    }
}
