//! Value types shared by the engine: candidates, page-view requests,
//! campaigns and strategy configuration.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::objectives::ObjectiveSpec;

/// Opaque advertiser campaign identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CampaignId(pub String);

/// Opaque item category identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CategoryId(pub String);

impl fmt::Display for CampaignId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Display for CategoryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for CampaignId {
    fn from(s: &str) -> Self {
        CampaignId(s.to_owned())
    }
}

impl From<&str> for CategoryId {
    fn from(s: &str) -> Self {
        CategoryId(s.to_owned())
    }
}

fn default_true() -> bool {
    true
}

fn is_true(b: &bool) -> bool {
    *b
}

/// One eligible ad inside a single page-view auction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdCandidate {
    pub campaign_id: CampaignId,
    pub category_id: CategoryId,
    /// Advertiser bid per click.
    pub bid: f64,
    pub pctr: f64,
    /// Predicted conversion rate. Raw in a bid log, calibrated once the
    /// strategy layer has run.
    pub pcvr: f64,
    /// Predicted pay-per-buy, the seller revenue of one conversion.
    pub ppb: f64,
    /// Campaign baseline conversion rate. `None` defers to the
    /// baseline table of the run, and failing that, to no adjustment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_cvr: Option<f64>,
    /// Maximum relative bid adjustment, in `[0, 1)`.
    pub adjust_range: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pasr: Option<f64>,
    #[serde(default = "default_true", skip_serializing_if = "is_true")]
    pub opt_authorized: bool,
}

impl AdCandidate {
    /// Candidate with neutral defaults: no baseline, no adjustment range.
    pub fn new(campaign_id: impl Into<String>, bid: f64, pctr: f64) -> Self {
        AdCandidate {
            campaign_id: CampaignId(campaign_id.into()),
            category_id: CategoryId("default".to_owned()),
            bid,
            pctr,
            pcvr: 0.0,
            ppb: 0.0,
            expected_cvr: None,
            adjust_range: 0.0,
            pasr: None,
            opt_authorized: true,
        }
    }

    /// eCPM rank score at the original bid.
    pub fn ecpm(&self) -> f64 {
        self.pctr * self.bid
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        let id = || self.campaign_id.clone();
        if !(self.bid > 0.0) || !self.bid.is_finite() {
            return Err(ValidationError::NonPositiveBid { campaign: id(), bid: self.bid });
        }
        check_probability(&self.campaign_id, "pctr", self.pctr)?;
        check_probability(&self.campaign_id, "pcvr", self.pcvr)?;
        if let Some(pasr) = self.pasr {
            check_probability(&self.campaign_id, "pasr", pasr)?;
        }
        if let Some(e) = self.expected_cvr {
            if !(e > 0.0) {
                return Err(ValidationError::NonPositiveExpectedCvr { campaign: id(), value: e });
            }
            check_probability(&self.campaign_id, "expected_cvr", e)?;
        }
        if !(self.ppb >= 0.0) || !self.ppb.is_finite() {
            return Err(ValidationError::NegativeValue { campaign: id(), value: self.ppb });
        }
        if !(0.0..1.0).contains(&self.adjust_range) {
            return Err(ValidationError::AdjustRangeOutOfBounds {
                campaign: id(),
                value: self.adjust_range,
            });
        }
        Ok(())
    }
}

fn check_probability(
    campaign: &CampaignId,
    field: &'static str,
    value: f64,
) -> Result<(), ValidationError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(ValidationError::ProbabilityOutOfRange { campaign: campaign.clone(), field, value })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error("request has no candidates")]
    EmptyCandidates,
    #[error("request asks for zero slots")]
    ZeroSlots,
    #[error("campaign {campaign}: bid must be positive, got {bid}")]
    NonPositiveBid { campaign: CampaignId, bid: f64 },
    #[error("campaign {campaign}: {field} = {value} is outside [0, 1]")]
    ProbabilityOutOfRange { campaign: CampaignId, field: &'static str, value: f64 },
    #[error("campaign {campaign}: expected cvr must be positive, got {value}")]
    NonPositiveExpectedCvr { campaign: CampaignId, value: f64 },
    #[error("campaign {campaign}: pay-per-buy must be non-negative, got {value}")]
    NegativeValue { campaign: CampaignId, value: f64 },
    #[error("campaign {campaign}: adjust range {value} is outside [0, 1)")]
    AdjustRangeOutOfBounds { campaign: CampaignId, value: f64 },
}

/// A page-view request and its eligible ads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PvRequest {
    pub pv_id: String,
    /// Milliseconds since the epoch.
    pub timestamp: i64,
    pub user_id: String,
    pub position_id: String,
    pub n_slots: usize,
    pub candidates: Vec<AdCandidate>,
}

impl PvRequest {
    /// Indices of candidates that can never win under eCPM sorting.
    pub fn zero_ctr_candidates(&self) -> impl Iterator<Item = usize> + '_ {
        self.candidates
            .iter()
            .enumerate()
            .filter(|(_, c)| c.pctr == 0.0)
            .map(|(i, _)| i)
    }
}

/// Checks every invariant of a request. The request is handed back
/// untouched, so validating twice is the same as validating once.
/// Candidates with `pctr == 0` are legal; see
/// [`PvRequest::zero_ctr_candidates`].
pub fn validate(request: PvRequest) -> Result<PvRequest, ValidationError> {
    if request.n_slots == 0 {
        return Err(ValidationError::ZeroSlots);
    }
    if request.candidates.is_empty() {
        return Err(ValidationError::EmptyCandidates);
    }
    for c in &request.candidates {
        c.validate()?;
    }
    Ok(request)
}

/// Campaign budget state known before a replay starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Campaign {
    pub campaign_id: CampaignId,
    pub category_id: CategoryId,
    /// `None` means unlimited.
    pub budget: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    /// Fixed bids, eCPM sort.
    Str0,
    /// Direct sigma bid rule, eCPM sort.
    Str1,
    /// Bounded bid optimization with composite-objective greedy ranking.
    Str2,
    /// Fixed bids, sort by pctr * pcvr * bid.
    Str3,
}

impl Strategy {
    pub fn index(self) -> u8 {
        match self {
            Strategy::Str0 => 0,
            Strategy::Str1 => 1,
            Strategy::Str2 => 2,
            Strategy::Str3 => 3,
        }
    }

    pub fn from_index(i: u8) -> Option<Self> {
        match i {
            0 => Some(Strategy::Str0),
            1 => Some(Strategy::Str1),
            2 => Some(Strategy::Str2),
            3 => Some(Strategy::Str3),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub strategy: Strategy,
    /// Composite index used by Str2.
    pub objective: ObjectiveSpec,
    /// Sigma exponent of the Str1 bid rule.
    pub w: f64,
    /// `None` disables pCVR calibration.
    pub calibration_threshold: Option<f64>,
    pub reserve_score: f64,
    pub enforce_budget: bool,
    /// Replaces every candidate's adjust range when set.
    pub adjust_range_override: Option<f64>,
}

impl StrategyConfig {
    pub fn new(strategy: Strategy) -> Self {
        StrategyConfig {
            strategy,
            objective: ObjectiveSpec::default(),
            w: 2.0,
            calibration_threshold: Some(crate::calibration::DEFAULT_THRESHOLD),
            reserve_score: 0.0,
            enforce_budget: true,
            adjust_range_override: None,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.w > 0.0) {
            return Err(ConfigError::NonPositiveExponent(self.w));
        }
        if let Some(tc) = self.calibration_threshold {
            if !(tc > 0.0 && tc <= 1.0) {
                return Err(ConfigError::BadThreshold(tc));
            }
        }
        if !(self.reserve_score >= 0.0) {
            return Err(ConfigError::NegativeReserve(self.reserve_score));
        }
        if let Some(r) = self.adjust_range_override {
            if !(0.0..1.0).contains(&r) {
                return Err(ConfigError::BadAdjustRange(r));
            }
        }
        self.objective.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("sigma exponent must be positive, got {0}")]
    NonPositiveExponent(f64),
    #[error("trade-off coefficient must be non-negative, got {0}")]
    NegativeAlpha(f64),
    #[error("calibration threshold must be in (0, 1], got {0}")]
    BadThreshold(f64),
    #[error("reserve score must be non-negative, got {0}")]
    NegativeReserve(f64),
    #[error("adjust range must be in [0, 1), got {0}")]
    BadAdjustRange(f64),
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn table1_request() -> PvRequest {
        let mk = |id: &str, pctr: f64, bid: f64| AdCandidate::new(id, bid, pctr);
        PvRequest {
            pv_id: "pv-1".into(),
            timestamp: 0,
            user_id: "u".into(),
            position_id: "p".into(),
            n_slots: 2,
            candidates: vec![
                mk("ad1", 0.04, 2.0),
                mk("ad2", 0.05, 1.5),
                mk("ad3", 0.06, 1.5),
                mk("ad4", 0.04, 1.0),
            ],
        }
    }

    #[test]
    fn table1_inputs_are_valid() {
        let req = table1_request();
        assert_eq!(validate(req.clone()).unwrap(), req);
    }

    #[test]
    fn zero_bid_is_rejected() {
        let mut req = table1_request();
        req.candidates[1].bid = 0.0;
        assert_eq!(
            validate(req),
            Err(ValidationError::NonPositiveBid { campaign: "ad2".into(), bid: 0.0 })
        );
    }

    #[test]
    fn pcvr_above_one_is_rejected() {
        let mut req = table1_request();
        req.candidates[2].pcvr = 1.5;
        match validate(req) {
            Err(ValidationError::ProbabilityOutOfRange { campaign, field, .. }) => {
                assert_eq!(campaign, "ad3".into());
                assert_eq!(field, "pcvr");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_and_zero_slot_requests() {
        let mut req = table1_request();
        req.n_slots = 0;
        assert_eq!(validate(req), Err(ValidationError::ZeroSlots));
        let mut req = table1_request();
        req.candidates.clear();
        assert_eq!(validate(req), Err(ValidationError::EmptyCandidates));
    }

    #[test]
    fn expected_cvr_must_be_positive() {
        let mut req = table1_request();
        req.candidates[0].expected_cvr = Some(0.0);
        assert!(matches!(validate(req), Err(ValidationError::NonPositiveExpectedCvr { .. })));
    }

    #[test]
    fn zero_ctr_is_flagged_not_rejected() {
        let mut req = table1_request();
        req.candidates[3].pctr = 0.0;
        let req = validate(req).unwrap();
        assert_eq!(req.zero_ctr_candidates().collect::<Vec<_>>(), vec![3]);
    }

    #[test]
    fn validation_is_idempotent() {
        let req = table1_request();
        let once = validate(req).unwrap();
        let twice = validate(once.clone()).unwrap();
        assert_eq!(once, twice);
    }
}
