//! Composite ranking indices evaluated on a candidate at a given bid.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bidopt::sigma;
use crate::domain::{AdCandidate, CampaignId, ConfigError};

/// Per-request signal fed through sigma by [`ObjectiveSpec::SigmaComposite`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Signal {
    /// pcvr * ppb
    Gmv,
    /// pcvr alone, for campaigns whose item values vary too much to use
    Cvr,
    /// predicted add-to-cart rate
    Asr,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObjectiveSpec {
    /// Expected GMV, `pctr * pcvr * ppb`.
    F1,
    /// Expected GMV plus `alpha` times expected revenue.
    F2 { alpha: f64 },
    /// `pctr * b * (1 + sigma(signal / mean_signal, w) * r_a)`.
    SigmaComposite { signal: Signal, w: f64 },
}

impl Default for ObjectiveSpec {
    fn default() -> Self {
        ObjectiveSpec::SigmaComposite { signal: Signal::Gmv, w: 6.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ObjectiveError {
    #[error("mean {0:?} signal over the auction is zero")]
    ZeroNormalizer(Signal),
    #[error("campaign {0} has no pasr")]
    MissingAsr(CampaignId),
    #[error("sigma: {0}")]
    Sigma(#[from] crate::bidopt::BidOptError),
}

/// Mean signals over every eligible ad of one auction. Computed once,
/// before any winner is removed, and held fixed for the whole ranking.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AuctionContext {
    pub mean_gmv: f64,
    pub mean_cvr: f64,
    pub mean_asr: f64,
}

impl AuctionContext {
    pub fn from_candidates<'a>(candidates: impl IntoIterator<Item = &'a AdCandidate>) -> Self {
        let (mut n, mut gmv, mut cvr, mut asr) = (0usize, 0.0, 0.0, 0.0);
        for c in candidates {
            n += 1;
            gmv += c.pcvr * c.ppb;
            cvr += c.pcvr;
            asr += c.pasr.unwrap_or(0.0);
        }
        if n == 0 {
            return AuctionContext::default();
        }
        let n = n as f64;
        AuctionContext { mean_gmv: gmv / n, mean_cvr: cvr / n, mean_asr: asr / n }
    }

    fn mean(&self, signal: Signal) -> f64 {
        match signal {
            Signal::Gmv => self.mean_gmv,
            Signal::Cvr => self.mean_cvr,
            Signal::Asr => self.mean_asr,
        }
    }
}

fn own_signal(cand: &AdCandidate, signal: Signal) -> Result<f64, ObjectiveError> {
    match signal {
        Signal::Gmv => Ok(cand.pcvr * cand.ppb),
        Signal::Cvr => Ok(cand.pcvr),
        Signal::Asr => cand.pasr.ok_or_else(|| ObjectiveError::MissingAsr(cand.campaign_id.clone())),
    }
}

impl ObjectiveSpec {
    pub fn validate(&self) -> Result<(), ConfigError> {
        match *self {
            ObjectiveSpec::F1 => Ok(()),
            ObjectiveSpec::F2 { alpha } if alpha >= 0.0 => Ok(()),
            ObjectiveSpec::F2 { alpha } => Err(ConfigError::NegativeAlpha(alpha)),
            ObjectiveSpec::SigmaComposite { w, .. } if w > 0.0 => Ok(()),
            ObjectiveSpec::SigmaComposite { w, .. } => Err(ConfigError::NonPositiveExponent(w)),
        }
    }

    /// Checks that the auction can normalize this objective at all.
    pub fn check_context(&self, ctx: &AuctionContext) -> Result<(), ObjectiveError> {
        if let ObjectiveSpec::SigmaComposite { signal, .. } = *self {
            if !(ctx.mean(signal) > 0.0) {
                return Err(ObjectiveError::ZeroNormalizer(signal));
            }
        }
        Ok(())
    }

    /// Composite index of `cand` charged `b_star` per click. Every variant
    /// is nondecreasing in `b_star`.
    pub fn evaluate(
        &self,
        cand: &AdCandidate,
        b_star: f64,
        ctx: &AuctionContext,
    ) -> Result<f64, ObjectiveError> {
        match *self {
            ObjectiveSpec::F1 => Ok(cand.pctr * cand.pcvr * cand.ppb),
            ObjectiveSpec::F2 { alpha } => {
                Ok(cand.pctr * cand.pcvr * cand.ppb + alpha * cand.pctr * b_star)
            }
            ObjectiveSpec::SigmaComposite { signal, w } => {
                let mean = ctx.mean(signal);
                if !(mean > 0.0) {
                    return Err(ObjectiveError::ZeroNormalizer(signal));
                }
                let x = own_signal(cand, signal)? / mean;
                Ok(cand.pctr * b_star * (1.0 + sigma(x, w)? * cand.adjust_range))
            }
        }
    }
}
