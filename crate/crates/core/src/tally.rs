//! Result computation for the election officer.
//!
//! Signed center records are verified, then the packed tally is
//! reconstructed from every `t`-subset of them (up to [`MAX_SUBSETS`]).
//! Honest records give the same value for every subset; a single corrupted
//! sum changes the subsets it belongs to and leaves the others alone, so any
//! disagreement is reported instead of a result.

use std::collections::{BTreeMap, HashSet};

use ed25519_dalek::VerifyingKey;
use serde::{Deserialize, Serialize};

use crate::ballot::{decode_tally, parse_residue, ElectionConfig, PublicConfig};
use crate::center::{parse_verifying_key, FinalizationRecord};
use crate::shamir::interpolate_at_zero;
use crate::{Error, Result};

/// Beyond this many `t`-subsets a deterministic spread of them is checked.
pub const MAX_SUBSETS: usize = 35;

/// A record whose digest and signature have been checked.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifiedRecord(FinalizationRecord);

impl VerifiedRecord {
    pub fn record(&self) -> &FinalizationRecord {
        &self.0
    }

    pub fn center_id(&self) -> u32 {
        self.0.center_id
    }
}

pub fn verify_record(record: &FinalizationRecord, key: &VerifyingKey) -> Result<VerifiedRecord> {
    record.verify(key)?;
    Ok(VerifiedRecord(record.clone()))
}

/// Verifies `record` under the key registered for its center in `config`.
pub fn verify_with_config(record: &FinalizationRecord, config: &PublicConfig) -> Result<VerifiedRecord> {
    if record.election_id != config.election_id {
        return Err(Error::InvalidConfig(format!(
            "record from center {} is for election {}",
            record.center_id, record.election_id
        )));
    }
    let key_hex = (record.center_id as usize)
        .checked_sub(1)
        .and_then(|i| config.center_public_keys.get(i))
        .ok_or_else(|| {
            Error::InvalidConfig(format!("no key registered for center {}", record.center_id))
        })?;
    verify_record(record, &parse_verifying_key(key_hex)?)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateCount {
    pub candidate: String,
    pub votes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetReconstruction {
    pub centers: Vec<u32>,
    /// Decimal residue of the reconstructed packed tally.
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CenterTurnout {
    pub center_id: u32,
    pub received_count: u64,
}

/// The published result. Field order is the serialization order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TallyReport {
    pub election_id: String,
    pub counts: Vec<CandidateCount>,
    /// Decimal residue `Q(0)`.
    pub packed: String,
    pub subsets_checked: Vec<SubsetReconstruction>,
    pub records: Vec<FinalizationRecord>,
    pub turnout: Vec<CenterTurnout>,
}

impl TallyReport {
    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn total_votes(&self) -> u64 {
        self.counts.iter().map(|c| c.votes).sum()
    }

    pub fn votes_for(&self, candidate: &str) -> Option<u64> {
        self.counts.iter().find(|c| c.candidate == candidate).map(|c| c.votes)
    }

    /// Plain-text result table, most votes first.
    pub fn render_table(&self) -> String {
        let mut rows: Vec<&CandidateCount> = self.counts.iter().collect();
        rows.sort_by_key(|c| std::cmp::Reverse(c.votes));
        let width = rows
            .iter()
            .map(|r| r.candidate.chars().count())
            .max()
            .unwrap_or(0)
            .max("Candidate".len());
        let mut out = format!("{:<width$} | Votes Secured\n", "Candidate");
        out.push_str(&format!("{}-+-{}\n", "-".repeat(width), "-".repeat(13)));
        for r in rows {
            out.push_str(&format!("{:<width$} | {}\n", r.candidate, r.votes));
        }
        out
    }

    /// One line per checked subset.
    pub fn render_subsets(&self) -> String {
        self.subsets_checked
            .iter()
            .map(|s| {
                let ids: Vec<String> = s.centers.iter().map(|c| format!("CC{c}")).collect();
                format!("Q(0) from {} = {}\n", ids.join(":"), s.value)
            })
            .collect()
    }
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// The `rank`-th `k`-combination of `0..n` in lexicographic order.
fn unrank_combination(n: usize, k: usize, mut rank: u128) -> Vec<usize> {
    let mut out = Vec::with_capacity(k);
    let mut next = 0;
    for remaining in (1..=k).rev() {
        loop {
            let with_next = binomial(n - next - 1, remaining - 1);
            if rank < with_next {
                break;
            }
            rank -= with_next;
            next += 1;
        }
        out.push(next);
        next += 1;
    }
    out
}

/// Index subsets to cross-check: all of them when there are at most
/// `MAX_SUBSETS`, otherwise `MAX_SUBSETS` ranks spread evenly through the
/// lexicographic order.
pub fn select_subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let total = binomial(n, k);
    if total <= MAX_SUBSETS as u128 {
        (0..total).map(|r| unrank_combination(n, k, r)).collect()
    } else {
        (0..MAX_SUBSETS as u128)
            .map(|i| unrank_combination(n, k, i * total / MAX_SUBSETS as u128))
            .collect()
    }
}

/// Interpolates every selected `t`-subset of `records`, requires them to
/// agree, and decodes the agreed value.
pub fn compute_result(records: &[VerifiedRecord], config: &ElectionConfig) -> Result<TallyReport> {
    let public = config.public();
    let policy = config.policy();
    let t = policy.threshold();

    let mut sorted: Vec<&FinalizationRecord> = records.iter().map(|r| &r.0).collect();
    sorted.sort_by_key(|r| r.center_id);
    let mut seen = HashSet::new();
    for r in &sorted {
        if r.election_id != public.election_id {
            return Err(Error::InvalidConfig(format!(
                "record from center {} is for election {}",
                r.center_id, r.election_id
            )));
        }
        if !seen.insert(r.center_id) {
            return Err(Error::Malformed(format!("two records from center {}", r.center_id)));
        }
    }
    if sorted.len() < t {
        return Err(Error::InsufficientShares {
            needed: t,
            got: sorted.len(),
        });
    }
    let points = sorted
        .iter()
        .map(|r| {
            let x = policy.point_of(r.center_id).ok_or_else(|| {
                Error::InvalidConfig(format!("center {} is not part of this election", r.center_id))
            })?;
            Ok((x, parse_residue(&r.share_sum, public.prime)?))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut subsets_checked = Vec::new();
    for subset in select_subsets(sorted.len(), t) {
        let pts: Vec<_> = subset.iter().map(|&i| points[i]).collect();
        let value = interpolate_at_zero(&pts, t)?;
        subsets_checked.push((subset.iter().map(|&i| sorted[i].center_id).collect::<Vec<_>>(), value));
    }

    let mut by_value: BTreeMap<u64, usize> = BTreeMap::new();
    for (_, v) in &subsets_checked {
        *by_value.entry(v.residue()).or_default() += 1;
    }
    if by_value.len() > 1 {
        let (&majority, _) = by_value.iter().max_by_key(|(_, &n)| n).expect("nonempty");
        let divergent: Vec<String> = subsets_checked
            .iter()
            .filter(|(_, v)| v.residue() != majority)
            .map(|(ids, v)| format!("{ids:?} -> {v}"))
            .collect();
        return Err(Error::Inconsistent(format!(
            "{} of {} subsets disagree with the most common value {majority}: {}",
            divergent.len(),
            subsets_checked.len(),
            divergent.join(", ")
        )));
    }

    let packed = subsets_checked[0].1;
    let decoded = decode_tally(public, packed)?;
    Ok(TallyReport {
        election_id: public.election_id.clone(),
        counts: public
            .candidates
            .iter()
            .zip(&decoded.counts)
            .map(|(name, &votes)| CandidateCount {
                candidate: name.clone(),
                votes,
            })
            .collect(),
        packed: packed.residue().to_string(),
        subsets_checked: subsets_checked
            .into_iter()
            .map(|(centers, v)| SubsetReconstruction {
                centers,
                value: v.residue().to_string(),
            })
            .collect(),
        records: sorted.iter().map(|r| (*r).clone()).collect(),
        turnout: sorted
            .iter()
            .map(|r| CenterTurnout {
                center_id: r.center_id,
                received_count: r.received_count,
            })
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditNote {
    pub center_id: Option<u32>,
    pub message: String,
}

/// Advisory cross-checks on ballot counts: every center should have
/// received the same number of shares, and that number should equal the
/// decoded vote total.
pub fn turnout_check(report: &TallyReport) -> Vec<AuditNote> {
    let mut freq: BTreeMap<u64, usize> = BTreeMap::new();
    for t in &report.turnout {
        *freq.entry(t.received_count).or_default() += 1;
    }
    let Some(majority) = freq
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .map(|(&count, _)| count)
    else {
        return Vec::new();
    };
    let mut notes: Vec<AuditNote> = report
        .turnout
        .iter()
        .filter(|t| t.received_count != majority)
        .map(|t| AuditNote {
            center_id: Some(t.center_id),
            message: format!(
                "center {} received {} shares, most centers received {majority}",
                t.center_id, t.received_count
            ),
        })
        .collect();
    if report.total_votes() != majority {
        notes.push(AuditNote {
            center_id: None,
            message: format!(
                "decoded {} votes but most centers received {majority} ballots",
                report.total_votes()
            ),
        });
    }
    notes
}
