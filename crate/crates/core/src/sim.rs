//! In-process election harness: every center lives in memory, no network.

use rand::RngCore;

use crate::ballot::{encode_vote, ElectionConfig};
use crate::center::{CenterKey, CenterState, FinalizationRecord, MemoryJournal};
use crate::netsvc::mint_ballot_id;
use crate::shamir::{split, CoefficientSource, ShareBatch};
use crate::tally::{compute_result, verify_with_config, TallyReport};
use crate::Result;

/// One center per evaluation point, each with its own key and journal.
pub struct LocalElection {
    config: ElectionConfig,
    centers: Vec<CenterState>,
    journals: Vec<MemoryJournal>,
    keys: Vec<CenterKey>,
}

impl LocalElection {
    /// Generates center keys from `rng`, registers them in the config and
    /// opens every center.
    pub fn open<R: RngCore + ?Sized>(mut config: ElectionConfig, rng: &mut R) -> Result<Self> {
        let c = config.public().center_count;
        let keys: Vec<CenterKey> = (0..c).map(|_| CenterKey::generate(rng)).collect();
        config.set_center_public_keys(keys.iter().map(CenterKey::public_hex).collect())?;
        let mut centers = Vec::with_capacity(c);
        let mut journals = Vec::with_capacity(c);
        for id in 1..=c as u32 {
            let journal = MemoryJournal::new();
            let mut center = CenterState::new(id, Box::new(journal.clone()));
            center.open_election(config.public().clone())?;
            centers.push(center);
            journals.push(journal);
        }
        Ok(Self {
            config,
            centers,
            journals,
            keys,
        })
    }

    pub fn config(&self) -> &ElectionConfig {
        &self.config
    }

    pub fn centers(&self) -> &[CenterState] {
        &self.centers
    }

    pub fn journal(&self, center_id: u32) -> &MemoryJournal {
        &self.journals[center_id as usize - 1]
    }

    /// Encodes, splits and submits one vote; returns the shares sent.
    pub fn cast<S, R>(&mut self, candidate: usize, coefficients: &mut S, ids: &mut R) -> Result<ShareBatch>
    where
        S: CoefficientSource + ?Sized,
        R: RngCore + ?Sized,
    {
        let encoded = encode_vote(self.config.public(), candidate)?;
        let batch = split(encoded.value(), self.config.policy(), coefficients)?;
        let ballot_id = mint_ballot_id(ids);
        for share in batch.shares() {
            self.centers[share.point_index as usize - 1].submit_share(&ballot_id, share.value)?;
        }
        Ok(batch)
    }

    pub fn finalize(&mut self) -> Result<Vec<FinalizationRecord>> {
        self.centers
            .iter_mut()
            .zip(&self.keys)
            .map(|(c, k)| c.finalize(k))
            .collect()
    }

    /// Finalizes (idempotently), verifies every record and tallies.
    pub fn tally(&mut self) -> Result<TallyReport> {
        let records = self.finalize()?;
        let verified = records
            .iter()
            .map(|r| verify_with_config(r, self.config.public()))
            .collect::<Result<Vec<_>>>()?;
        compute_result(&verified, &self.config)
    }
}
