use crate::lead::{Lead, LEAD_COUNT, RECORD_SAMPLES, SAMPLE_RATE};
use crate::textscrub::PageMetadata;

/// Twelve leads of 5,000 millivolt samples at 500 Hz.
///
/// `observed_mask[l][t]` is true exactly where the sample came from the page
/// (or from a reference file) rather than from completion. Samples that are
/// neither observed nor completed hold `0.0`.
#[derive(Clone, Debug, PartialEq)]
pub struct EcgRecord {
    pub leads: Vec<Vec<f64>>,
    pub observed_mask: Vec<Vec<bool>>,
    pub metadata: PageMetadata,
}

impl EcgRecord {
    pub fn sample_rate(&self) -> f64 {
        SAMPLE_RATE
    }

    /// All-zero record with nothing observed.
    pub fn empty() -> Self {
        EcgRecord {
            leads: vec![vec![0.0; RECORD_SAMPLES]; LEAD_COUNT],
            observed_mask: vec![vec![false; RECORD_SAMPLES]; LEAD_COUNT],
            metadata: PageMetadata::default(),
        }
    }

    /// Fully observed record from twelve 5,000-sample leads.
    ///
    /// Panics if the shape is wrong.
    pub fn fully_observed(leads: Vec<Vec<f64>>) -> Self {
        assert_eq!(leads.len(), LEAD_COUNT, "record needs 12 leads");
        assert!(leads.iter().all(|l| l.len() == RECORD_SAMPLES), "each lead needs 5000 samples");
        EcgRecord {
            leads,
            observed_mask: vec![vec![true; RECORD_SAMPLES]; LEAD_COUNT],
            metadata: PageMetadata::default(),
        }
    }

    pub fn lead(&self, lead: Lead) -> &[f64] {
        &self.leads[lead.index()]
    }

    pub fn mask(&self, lead: Lead) -> &[bool] {
        &self.observed_mask[lead.index()]
    }

    pub fn observed_count(&self, lead: Lead) -> usize {
        self.mask(lead).iter().filter(|&&m| m).count()
    }

    pub fn is_fully_observed(&self) -> bool {
        self.observed_mask.iter().flatten().all(|&m| m)
    }
}
