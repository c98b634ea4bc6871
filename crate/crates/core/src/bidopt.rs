//! ROI arithmetic and the feasible region for optimized bids.
//!
//! A request whose predicted conversion rate beats the campaign baseline
//! (quality ratio >= 1) may have its bid raised, but never by more than
//! the ratio itself, so the campaign ROI cannot fall. Below-baseline
//! traffic may have its bid lowered by at most `r_a`.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BidOptError {
    #[error("bid must be positive, got {0}")]
    NonPositiveBid(f64),
    #[error("expected cvr must be positive, got {0}")]
    NonPositiveExpectedCvr(f64),
    #[error("quality ratio must be non-negative, got {0}")]
    NegativeRatio(f64),
    #[error("adjust range must be in [0, 1), got {0}")]
    BadAdjustRange(f64),
    #[error("sigma input must be non-negative, got {0}")]
    NegativeInput(f64),
    #[error("sigma exponent must be positive, got {0}")]
    NonPositiveExponent(f64),
}

/// Feasible region of one candidate's optimized bid and rank score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BidBounds {
    pub lower_bid: f64,
    pub upper_bid: f64,
    pub lower_score: f64,
    pub upper_score: f64,
}

impl BidBounds {
    /// Both ends pinned at `bid`.
    pub fn fixed(bid: f64, pctr: f64) -> Self {
        BidBounds { lower_bid: bid, upper_bid: bid, lower_score: pctr * bid, upper_score: pctr * bid }
    }

    pub fn contains(&self, b: f64) -> bool {
        self.lower_bid <= b && b <= self.upper_bid
    }
}

fn check_bid(bid: f64) -> Result<(), BidOptError> {
    if bid > 0.0 {
        Ok(())
    } else {
        Err(BidOptError::NonPositiveBid(bid))
    }
}

/// Expected ROI of a single click charged at `bid`.
pub fn single_click_roi(pcvr: f64, ppb: f64, bid: f64) -> Result<f64, BidOptError> {
    check_bid(bid)?;
    Ok(pcvr * ppb / bid)
}

/// Campaign-level ROI across users, driven by the baseline conversion rate.
pub fn campaign_roi(expected_cvr: f64, ppb: f64, bid: f64) -> Result<f64, BidOptError> {
    check_bid(bid)?;
    Ok(expected_cvr * ppb / bid)
}

/// Request quality relative to the campaign baseline.
pub fn quality_ratio(pcvr: f64, expected_cvr: f64) -> Result<f64, BidOptError> {
    if !(expected_cvr > 0.0) {
        return Err(BidOptError::NonPositiveExpectedCvr(expected_cvr));
    }
    Ok(pcvr / expected_cvr)
}

pub fn bid_bounds(
    bid: f64,
    pctr: f64,
    ratio: f64,
    adjust_range: f64,
    opt_authorized: bool,
) -> Result<BidBounds, BidOptError> {
    check_bid(bid)?;
    if !(ratio >= 0.0) {
        return Err(BidOptError::NegativeRatio(ratio));
    }
    if !(0.0..1.0).contains(&adjust_range) {
        return Err(BidOptError::BadAdjustRange(adjust_range));
    }
    if !opt_authorized {
        return Ok(BidBounds::fixed(bid, pctr));
    }
    let (lower_bid, upper_bid) = if ratio < 1.0 {
        (bid * (1.0 - adjust_range), bid)
    } else {
        (bid, bid * (1.0 + adjust_range).min(ratio))
    };
    Ok(BidBounds {
        lower_bid,
        upper_bid,
        lower_score: pctr * lower_bid,
        upper_score: pctr * upper_bid,
    })
}

/// `(x^w - 1) / (x^w + 1)`, evaluated as `tanh(w ln(x) / 2)` so that
/// large `x` saturates at 1 instead of overflowing.
pub fn sigma(x: f64, w: f64) -> Result<f64, BidOptError> {
    if !(x >= 0.0) {
        return Err(BidOptError::NegativeInput(x));
    }
    if !(w > 0.0) {
        return Err(BidOptError::NonPositiveExponent(w));
    }
    Ok((0.5 * w * x.ln()).tanh())
}

/// Strategy-1 bid: `bid * (1 + sigma(ratio, w) * r_a)`.
pub fn str1_bid(bid: f64, ratio: f64, w: f64, adjust_range: f64) -> Result<f64, BidOptError> {
    check_bid(bid)?;
    if !(0.0..1.0).contains(&adjust_range) {
        return Err(BidOptError::BadAdjustRange(adjust_range));
    }
    Ok(bid * (1.0 + sigma(ratio, w)? * adjust_range))
}
