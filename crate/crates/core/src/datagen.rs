//! Seeded synthetic bid logs.
//!
//! Campaigns are drawn once: category, bid, item value (pay-per-buy),
//! click and conversion quality multipliers, adjust range and budget.
//! Each page view then samples a set of distinct campaigns and draws
//! per-request pCTR/pCVR/pASR around the campaign's profile. A campaign's
//! baseline pCVR is the trimmed mean of a separately drawn history from
//! the same distribution, standing in for the previous days' predictions.
//!
//! Every page view has its own ChaCha stream, so any PV can be produced
//! independently of the others and output order never depends on how
//! generation is split up.

use std::io::Write;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bidlog::{BidLogError, BidLogWriter, CampaignEntry, LogHeader};
use crate::calibration::{self, CvrHistory};
use crate::domain::{AdCandidate, CampaignId, CategoryId, PvRequest};

#[derive(Debug, Error)]
pub enum GenError {
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Log(#[from] BidLogError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaParams {
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNormalParams {
    pub mu: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BudgetRule {
    Unlimited,
    Fixed { amount: f64 },
    LogNormal { mu: f64, sigma: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenSpec {
    pub seed: u64,
    pub n_pv: usize,
    /// Inclusive range of candidates per page view.
    pub candidates_per_pv: (usize, usize),
    pub n_campaigns: usize,
    pub n_categories: usize,
    pub n_slots: usize,
    pub n_users: usize,
    pub n_positions: usize,
    pub start_timestamp_ms: i64,
    pub timestamp_step_ms: i64,
    /// Campaign bid.
    pub bid: LogNormalParams,
    pub pctr: BetaParams,
    pub pcvr: BetaParams,
    /// Share of pCVR variation drawn per request; the rest is a fixed
    /// per-campaign draw from the same beta. 1 makes every request an
    /// independent beta draw.
    pub pcvr_request_share: f64,
    /// Pay-per-buy; each category shifts `mu` by a normal draw with
    /// standard deviation `ppb_category_sigma`.
    pub ppb: LogNormalParams,
    pub ppb_category_sigma: f64,
    /// Log-sd of per-category pCTR/pCVR mean multipliers.
    pub category_spread: f64,
    /// Log-sd of the per-campaign pCTR multiplier.
    pub campaign_ctr_sigma: f64,
    /// Log-sd of the per-campaign pCVR multiplier.
    pub campaign_cvr_sigma: f64,
    /// Per-campaign adjust range, chosen uniformly from this set.
    pub adjust_ranges: Vec<f64>,
    pub pasr: Option<BetaParams>,
    pub budget: BudgetRule,
    /// Share of campaigns that allow bid optimization.
    pub opt_authorized_fraction: f64,
    /// Correlation between log bid and log pay-per-buy, in [-1, 1].
    pub gmv_value_correlation: f64,
    /// Length of each campaign's baseline history.
    pub history_len: usize,
    pub trim_fraction: f64,
}

impl Default for GenSpec {
    /// The desk-scale benchmark: 1e5 PVs of 200 candidates from 500
    /// campaigns in 20 categories, three slots, r_a = 0.4, seed 42.
    fn default() -> Self {
        GenSpec {
            seed: 42,
            n_pv: 100_000,
            candidates_per_pv: (200, 200),
            n_campaigns: 500,
            n_categories: 20,
            n_slots: 3,
            n_users: 20_000,
            n_positions: 3,
            start_timestamp_ms: 1_486_771_200_000,
            timestamp_step_ms: 10,
            bid: LogNormalParams { mu: 0.0, sigma: 0.4 },
            pctr: BetaParams { a: 2.0, b: 60.0 },
            pcvr: BetaParams { a: 1.2, b: 150.0 },
            pcvr_request_share: 0.2,
            ppb: LogNormalParams { mu: 5.5, sigma: 0.6 },
            ppb_category_sigma: 0.3,
            category_spread: 0.3,
            campaign_ctr_sigma: 0.2,
            campaign_cvr_sigma: 0.3,
            adjust_ranges: vec![0.4],
            pasr: Some(BetaParams { a: 2.0, b: 40.0 }),
            budget: BudgetRule::LogNormal { mu: 5.0, sigma: 0.6 },
            opt_authorized_fraction: 1.0,
            gmv_value_correlation: 0.0,
            history_len: 1000,
            trim_fraction: calibration::DEFAULT_TRIM,
        }
    }
}

impl GenSpec {
    pub fn validate(&self) -> Result<(), GenError> {
        let bad = |m: &str| Err(GenError::InvalidSpec(m.to_owned()));
        let (lo, hi) = self.candidates_per_pv;
        if lo == 0 || lo > hi {
            return bad("candidates_per_pv must be a non-empty range of positive counts");
        }
        if hi > self.n_campaigns {
            return bad("candidates_per_pv exceeds n_campaigns");
        }
        if self.n_categories == 0 || self.n_slots == 0 || self.n_users == 0 || self.n_positions == 0 {
            return bad("counts must be positive");
        }
        if self.history_len == 0 {
            return bad("history_len must be positive");
        }
        if !(0.0..0.5).contains(&self.trim_fraction) {
            return bad("trim_fraction must be in [0, 0.5)");
        }
        if self.adjust_ranges.is_empty() || self.adjust_ranges.iter().any(|r| !(0.0..1.0).contains(r)) {
            return bad("adjust_ranges must be a non-empty set of values in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.pcvr_request_share) {
            return bad("pcvr_request_share must be in [0, 1]");
        }
        if !(-1.0..=1.0).contains(&self.gmv_value_correlation) {
            return bad("gmv_value_correlation must be in [-1, 1]");
        }
        if !(0.0..=1.0).contains(&self.opt_authorized_fraction) {
            return bad("opt_authorized_fraction must be in [0, 1]");
        }
        let betas = [Some(self.pctr), Some(self.pcvr), self.pasr];
        if betas.iter().flatten().any(|p| !(p.a > 0.0 && p.b > 0.0)) {
            return bad("beta parameters must be positive");
        }
        let sigmas = [
            self.bid.sigma,
            self.ppb.sigma,
            self.ppb_category_sigma,
            self.category_spread,
            self.campaign_ctr_sigma,
            self.campaign_cvr_sigma,
        ];
        if sigmas.iter().any(|s| !(*s >= 0.0)) {
            return bad("log-normal sigmas must be non-negative");
        }
        match self.budget {
            BudgetRule::Fixed { amount } if !(amount >= 0.0) => bad("budget must be non-negative"),
            BudgetRule::LogNormal { sigma, .. } if !(sigma >= 0.0) => bad("budget sigma must be non-negative"),
            _ => Ok(()),
        }
    }
}

/// Values are stored at six decimals so a log written to disk and read
/// back is identical to the in-memory stream.
pub fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

#[derive(Debug, Clone)]
pub struct CampaignProfile {
    pub campaign_id: CampaignId,
    pub category: usize,
    pub bid: f64,
    pub ppb: f64,
    pub ctr_scale: f64,
    pub cvr_scale: f64,
    /// Campaign-level beta draw mixed into every request's pCVR.
    pub cvr_base: f64,
    pub adjust_range: f64,
    pub opt_authorized: bool,
    pub budget: Option<f64>,
    pub history: Vec<f64>,
    pub expected_cvr: Option<f64>,
}

/// Mean-one log-normal multiplier.
fn mean_one(rng: &mut impl Rng, sigma: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    (sigma * z - 0.5 * sigma * sigma).exp()
}

fn unit_clip(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

fn beta(p: BetaParams) -> Beta<f64> {
    Beta::new(p.a, p.b).expect("validated beta parameters")
}

pub fn campaign_id(i: usize) -> CampaignId {
    CampaignId(format!("c{i:05}"))
}

pub fn category_id(i: usize) -> CategoryId {
    CategoryId(format!("k{i:03}"))
}

const SETUP_STREAM: u64 = u64::MAX;

/// Lazily generates one synthetic bid log.
pub struct Generator {
    spec: GenSpec,
    campaigns: Vec<CampaignProfile>,
    category_ctr: Vec<f64>,
    category_cvr: Vec<f64>,
    ids: Vec<CategoryId>,
    pctr: Beta<f64>,
    pcvr: Beta<f64>,
    pasr: Option<Beta<f64>>,
    next_pv: usize,
}

impl Generator {
    pub fn new(spec: GenSpec) -> Result<Self, GenError> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(SETUP_STREAM);

        let category_ctr: Vec<f64> =
            (0..spec.n_categories).map(|_| mean_one(&mut rng, spec.category_spread)).collect();
        let category_cvr: Vec<f64> =
            (0..spec.n_categories).map(|_| mean_one(&mut rng, spec.category_spread)).collect();
        let category_ppb_mu: Vec<f64> = (0..spec.n_categories)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                spec.ppb.mu + spec.ppb_category_sigma * z
            })
            .collect();

        let pcvr = beta(spec.pcvr);
        let rho = spec.gmv_value_correlation;
        let mut campaigns = Vec::with_capacity(spec.n_campaigns);
        for i in 0..spec.n_campaigns {
            let category = rng.random_range(0..spec.n_categories);
            let z_bid: f64 = StandardNormal.sample(&mut rng);
            let z_free: f64 = StandardNormal.sample(&mut rng);
            let z_val = rho * z_bid + (1.0 - rho * rho).sqrt() * z_free;
            let bid = round6((spec.bid.mu + spec.bid.sigma * z_bid).exp()).max(1e-6);
            let ppb = round6((category_ppb_mu[category] + spec.ppb.sigma * z_val).exp());
            let ctr_scale = mean_one(&mut rng, spec.campaign_ctr_sigma);
            let cvr_scale = mean_one(&mut rng, spec.campaign_cvr_sigma);
            let adjust_range = spec.adjust_ranges[rng.random_range(0..spec.adjust_ranges.len())];
            let opt_authorized = rng.random::<f64>() < spec.opt_authorized_fraction;
            let budget = match spec.budget {
                BudgetRule::Unlimited => None,
                BudgetRule::Fixed { amount } => Some(amount),
                BudgetRule::LogNormal { mu, sigma } => {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    Some(round6((mu + sigma * z).exp()))
                }
            };
            let cvr_base = pcvr.sample(&mut rng);
            let scale = category_cvr[category] * cvr_scale;
            let lambda = spec.pcvr_request_share;
            let history: Vec<f64> = (0..spec.history_len)
                .map(|_| {
                    let raw = (1.0 - lambda) * cvr_base + lambda * pcvr.sample(&mut rng);
                    round6(unit_clip(raw * scale))
                })
                .collect();
            let expected_cvr = calibration::trimmed_mean(&history, spec.trim_fraction).ok().map(round6).filter(|e| *e > 0.0);
            campaigns.push(CampaignProfile {
                campaign_id: campaign_id(i),
                category,
                bid,
                ppb,
                ctr_scale,
                cvr_scale,
                cvr_base,
                adjust_range,
                opt_authorized,
                budget,
                history,
                expected_cvr,
            });
        }

        Ok(Generator {
            pctr: beta(spec.pctr),
            pcvr,
            pasr: spec.pasr.map(beta),
            ids: (0..spec.n_categories).map(category_id).collect(),
            spec,
            campaigns,
            category_ctr,
            category_cvr,
            next_pv: 0,
        })
    }

    pub fn spec(&self) -> &GenSpec {
        &self.spec
    }

    pub fn campaigns(&self) -> &[CampaignProfile] {
        &self.campaigns
    }

    pub fn histories(&self) -> Vec<CvrHistory> {
        self.campaigns
            .iter()
            .map(|c| CvrHistory { campaign_id: c.campaign_id.clone(), observations: c.history.clone() })
            .collect()
    }

    pub fn header(&self) -> LogHeader {
        let mut header = LogHeader::new(
            self.campaigns
                .iter()
                .map(|c| CampaignEntry {
                    campaign_id: c.campaign_id.clone(),
                    category_id: self.ids[c.category].clone(),
                    budget: c.budget,
                    expected_cvr: c.expected_cvr,
                })
                .collect(),
        );
        header.generator = serde_json::to_value(&self.spec).ok();
        header
    }

    /// The `i`-th page view, independent of every other one.
    pub fn page_view(&self, i: usize) -> PvRequest {
        let spec = &self.spec;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(i as u64);

        let (lo, hi) = spec.candidates_per_pv;
        let k = rng.random_range(lo..=hi);
        let user = rng.random_range(0..spec.n_users);
        let position = rng.random_range(0..spec.n_positions);
        let picked = index::sample(&mut rng, spec.n_campaigns, k);

        let candidates = picked
            .iter()
            .map(|ci| {
                let c = &self.campaigns[ci];
                let pctr = self.pctr.sample(&mut rng) * self.category_ctr[c.category] * c.ctr_scale;
                let lambda = spec.pcvr_request_share;
                let raw = (1.0 - lambda) * c.cvr_base + lambda * self.pcvr.sample(&mut rng);
                let pcvr = raw * self.category_cvr[c.category] * c.cvr_scale;
                let pasr = self.pasr.as_ref().map(|d| round6(d.sample(&mut rng)));
                AdCandidate {
                    campaign_id: c.campaign_id.clone(),
                    category_id: self.ids[c.category].clone(),
                    bid: c.bid,
                    pctr: round6(unit_clip(pctr)),
                    pcvr: round6(unit_clip(pcvr)),
                    ppb: c.ppb,
                    expected_cvr: None,
                    adjust_range: c.adjust_range,
                    pasr,
                    opt_authorized: c.opt_authorized,
                }
            })
            .collect();

        PvRequest {
            pv_id: format!("pv{i:08}"),
            timestamp: spec.start_timestamp_ms + i as i64 * spec.timestamp_step_ms,
            user_id: format!("u{user:06}"),
            position_id: format!("p{position}"),
            n_slots: spec.n_slots,
            candidates,
        }
    }
}

impl Iterator for Generator {
    type Item = PvRequest;

    fn next(&mut self) -> Option<PvRequest> {
        if self.next_pv >= self.spec.n_pv {
            return None;
        }
        let pv = self.page_view(self.next_pv);
        self.next_pv += 1;
        Some(pv)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.spec.n_pv - self.next_pv;
        (left, Some(left))
    }
}

/// Writes a full log and returns the number of page views written.
pub fn generate<W: Write>(spec: &GenSpec, out: W) -> Result<usize, GenError> {
    let gen = Generator::new(spec.clone())?;
    let mut writer = BidLogWriter::new(out, &gen.header())?;
    for pv in gen {
        writer.write(&pv)?;
    }
    let n = writer.records();
    writer.finish()?;
    Ok(n)
}
