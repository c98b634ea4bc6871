//! Winner selection and pricing for a single page-view auction.
//!
//! [`rank`] is the greedy composite-objective ranking: ads stay sorted by
//! eCPM at their final optimized bids, yet the ad shown in each slot is
//! the best one by the objective among those that can still be made to
//! top the eCPM order. [`run_ocpc`] wires calibration, bounds, ranking and
//! GSP pricing together for every strategy.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use crate::bidopt::{self, BidBounds, BidOptError};
use crate::calibration::{self, CalibrationError};
use crate::domain::{self, AdCandidate, CampaignId, PvRequest, Strategy, StrategyConfig, ValidationError};
use crate::objectives::{AuctionContext, ObjectiveError, ObjectiveSpec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AuctionError {
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error("no candidate has a positive rank score")]
    NoEligibleWinner,
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    BidOpt(#[from] BidOptError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error("winner at position {0} outranks its predecessor")]
    UnrankedOutcome(usize),
    #[error("{given} bounds given for {expected} candidates")]
    BoundsMismatch { given: usize, expected: usize },
}

/// One ad's final state after ranking. `candidate` indexes the
/// candidate list the auction was run on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Placement {
    pub candidate: usize,
    pub b_star: f64,
    /// Rank score at `b_star`: eCPM, or `pctr * pcvr * bid` under Str3.
    pub final_score: f64,
    /// `final_score / b_star`, the factor that turns a score back into a bid.
    pub score_per_bid: f64,
    /// Set by [`gsp_price`] for winners.
    pub price_per_click: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AuctionOutcome {
    /// Display order.
    pub winners: Vec<Placement>,
    /// Descending by final score.
    pub losers: Vec<Placement>,
}

impl AuctionOutcome {
    pub fn slots_filled(&self) -> usize {
        self.winners.len()
    }

    pub fn winner_ids<'a>(&self, candidates: &'a [AdCandidate]) -> Vec<&'a CampaignId> {
        self.winners.iter().map(|p| &candidates[p.candidate].campaign_id).collect()
    }
}

/// Order by score descending, then campaign id, then input position.
fn rank_order(candidates: &[AdCandidate], a: (f64, usize), b: (f64, usize)) -> Ordering {
    b.0.total_cmp(&a.0)
        .then_with(|| candidates[a.1].campaign_id.cmp(&candidates[b.1].campaign_id))
        .then(a.1.cmp(&b.1))
}

struct Working {
    idx: usize,
    pctr: f64,
    lower_bid: f64,
    lower_score: f64,
    upper_bid: f64,
    upper_score: f64,
    objective: f64,
}

/// Greedy multi-slot ranking over candidates and their bid bounds.
///
/// Each round takes the best remaining ad by `spec` at its upper bid among
/// those whose upper score reaches the largest remaining lower score, then
/// caps every other ad's upper score at the winner's. All ads end at their
/// (possibly tightened) upper bid. Ads with `pctr == 0` never win.
///
/// Picking the best qualifying ad directly is the same as sorting by the
/// objective and taking the first qualifying one, at O(|A|) per round.
pub fn rank(
    candidates: &[AdCandidate],
    bounds: &[BidBounds],
    spec: &ObjectiveSpec,
    n_slots: usize,
) -> Result<AuctionOutcome, AuctionError> {
    if candidates.len() != bounds.len() {
        return Err(AuctionError::BoundsMismatch { given: bounds.len(), expected: candidates.len() });
    }
    let ctx = AuctionContext::from_candidates(candidates);

    let mut remaining = Vec::with_capacity(candidates.len());
    let mut losers = Vec::new();
    for (idx, (c, b)) in candidates.iter().zip(bounds).enumerate() {
        if c.pctr > 0.0 {
            remaining.push(Working {
                idx,
                pctr: c.pctr,
                lower_bid: b.lower_bid,
                lower_score: b.lower_score,
                upper_bid: b.upper_bid,
                upper_score: b.upper_score,
                objective: spec.evaluate(c, b.upper_bid, &ctx)?,
            });
        } else {
            losers.push(Placement {
                candidate: idx,
                b_star: c.bid,
                final_score: 0.0,
                score_per_bid: 0.0,
                price_per_click: None,
            });
        }
    }
    if remaining.is_empty() {
        return Err(AuctionError::NoEligibleWinner);
    }
    spec.check_context(&ctx)?;

    let mut winners = Vec::with_capacity(n_slots);
    while winners.len() < n_slots && !remaining.is_empty() {
        let threshold = remaining.iter().map(|w| w.lower_score).fold(f64::NEG_INFINITY, f64::max);
        // the ad attaining the threshold always qualifies since lower <= upper
        let pick = remaining
            .iter()
            .enumerate()
            .filter(|(_, w)| w.upper_score >= threshold)
            .min_by(|(_, a), (_, b)| {
                rank_order(candidates, (a.objective, a.idx), (b.objective, b.idx))
            })
            .map(|(pos, _)| pos)
            .expect("threshold ad qualifies");
        let k = remaining.swap_remove(pick);

        for w in remaining.iter_mut() {
            if k.upper_score < w.upper_score {
                w.upper_score = k.upper_score;
                w.upper_bid = w.upper_bid.min(w.upper_score / w.pctr).max(w.lower_bid);
                w.objective = spec.evaluate(&candidates[w.idx], w.upper_bid, &ctx)?;
            }
        }
        winners.push(settle(&k));
    }

    losers.extend(remaining.iter().map(settle));
    sort_placements(candidates, &mut losers);
    Ok(AuctionOutcome { winners, losers })
}

fn settle(w: &Working) -> Placement {
    Placement {
        candidate: w.idx,
        b_star: w.upper_bid,
        final_score: w.upper_score,
        score_per_bid: w.pctr,
        price_per_click: None,
    }
}

fn sort_placements(candidates: &[AdCandidate], placements: &mut [Placement]) {
    placements.sort_by(|a, b| {
        rank_order(candidates, (a.final_score, a.candidate), (b.final_score, b.candidate))
    });
}

/// Sorts fixed bids by `score_per_bid * b_star` and fills the top slots.
/// Ads with a zero score never win.
fn sort_rank(
    candidates: &[AdCandidate],
    bids: impl Iterator<Item = (f64, f64)>,
    n_slots: usize,
) -> Result<AuctionOutcome, AuctionError> {
    let mut all: Vec<Placement> = bids
        .enumerate()
        .map(|(i, (b_star, per_bid))| Placement {
            candidate: i,
            b_star,
            final_score: per_bid * b_star,
            score_per_bid: per_bid,
            price_per_click: None,
        })
        .collect();
    sort_placements(candidates, &mut all);
    let eligible = all.iter().take_while(|p| p.final_score > 0.0).count();
    if eligible == 0 {
        return Err(AuctionError::NoEligibleWinner);
    }
    let losers = all.split_off(eligible.min(n_slots));
    Ok(AuctionOutcome { winners: all, losers })
}

/// Plain eCPM sort at the submitted bids.
pub fn ecpm_rank(candidates: &[AdCandidate], n_slots: usize) -> Result<AuctionOutcome, AuctionError> {
    sort_rank(candidates, candidates.iter().map(|c| (c.bid, c.pctr)), n_slots)
}

/// Ranks by `pctr * pcvr * bid` without touching bids.
pub fn str3_rank(candidates: &[AdCandidate], n_slots: usize) -> Result<AuctionOutcome, AuctionError> {
    sort_rank(candidates, candidates.iter().map(|c| (c.bid, c.pctr * c.pcvr)), n_slots)
}

/// Generalized second price: each winner pays the score of the next ad
/// in the combined ranking, floored at the reserve, converted back to a
/// per-click price. The price never exceeds the winner's own bid.
pub fn gsp_price(mut outcome: AuctionOutcome, reserve_score: f64) -> Result<AuctionOutcome, AuctionError> {
    for j in 1..outcome.winners.len() {
        if outcome.winners[j].final_score > outcome.winners[j - 1].final_score {
            return Err(AuctionError::UnrankedOutcome(j));
        }
    }
    let best_loser = outcome.losers.first().map_or(0.0, |p| p.final_score);
    if let Some(last) = outcome.winners.last() {
        if best_loser > last.final_score {
            return Err(AuctionError::UnrankedOutcome(outcome.winners.len()));
        }
    }
    let n = outcome.winners.len();
    for j in 0..n {
        let next = if j + 1 < n { outcome.winners[j + 1].final_score } else { best_loser };
        let w = &mut outcome.winners[j];
        let price = next.max(reserve_score) / w.score_per_bid;
        w.price_per_click = Some(price.min(w.b_star));
    }
    Ok(outcome)
}

/// Supplies campaign baseline conversion rates to the strategy layer.
pub trait BaselineSource {
    fn expected_cvr(&self, campaign: &CampaignId) -> Option<f64>;
}

/// No baselines: every request is treated as baseline quality.
pub struct NoBaselines;

impl BaselineSource for NoBaselines {
    fn expected_cvr(&self, _: &CampaignId) -> Option<f64> {
        None
    }
}

impl BaselineSource for HashMap<CampaignId, f64> {
    fn expected_cvr(&self, campaign: &CampaignId) -> Option<f64> {
        self.get(campaign).copied()
    }
}

impl BaselineSource for BTreeMap<CampaignId, f64> {
    fn expected_cvr(&self, campaign: &CampaignId) -> Option<f64> {
        self.get(campaign).copied()
    }
}

/// Trimmed-mean baselines for every history that yields one. Campaigns
/// whose history is empty or all zero are left out and so fall back to
/// no adjustment.
pub fn baselines_from_histories<'a>(
    histories: impl IntoIterator<Item = &'a calibration::CvrHistory>,
    trim_fraction: f64,
) -> HashMap<CampaignId, f64> {
    histories
        .into_iter()
        .filter_map(|h| {
            calibration::expected_cvr(h, trim_fraction).ok().map(|e| (h.campaign_id.clone(), e))
        })
        .collect()
}

/// A fully evaluated auction. `request` carries calibrated pCVRs and
/// effective adjust ranges; `ratios` and `bounds` run parallel to its
/// candidates.
#[derive(Debug, Clone, PartialEq)]
pub struct OcpcAuction {
    pub request: PvRequest,
    pub ratios: Vec<f64>,
    pub bounds: Vec<BidBounds>,
    pub outcome: AuctionOutcome,
}

/// Calibrate, bound, rank and price one request under `config`.
pub fn run_ocpc(
    request: PvRequest,
    config: &StrategyConfig,
    baselines: &dyn BaselineSource,
) -> Result<OcpcAuction, AuctionError> {
    let mut request = domain::validate(request)?;
    let n = request.candidates.len();
    let mut ratios = Vec::with_capacity(n);
    let mut bounds = Vec::with_capacity(n);
    for c in request.candidates.iter_mut() {
        if let Some(r) = config.adjust_range_override {
            c.adjust_range = r;
        }
        if let Some(tc) = config.calibration_threshold {
            c.pcvr = calibration::calibrate_cvr(c.pcvr, tc)?;
        }
        let baseline = c.expected_cvr.or_else(|| baselines.expected_cvr(&c.campaign_id));
        let ratio = match baseline {
            Some(e) => bidopt::quality_ratio(c.pcvr, e)?,
            None => 1.0,
        };
        let b = match config.strategy {
            Strategy::Str2 => bidopt::bid_bounds(c.bid, c.pctr, ratio, c.adjust_range, c.opt_authorized)?,
            _ => BidBounds::fixed(c.bid, c.pctr),
        };
        ratios.push(ratio);
        bounds.push(b);
    }

    let cands = &request.candidates;
    let unpriced = match config.strategy {
        Strategy::Str0 => ecpm_rank(cands, request.n_slots)?,
        Strategy::Str1 => {
            let mut bids = Vec::with_capacity(n);
            for (c, &ratio) in cands.iter().zip(&ratios) {
                let b = if c.opt_authorized {
                    bidopt::str1_bid(c.bid, ratio, config.w, c.adjust_range)?
                } else {
                    c.bid
                };
                bids.push((b, c.pctr));
            }
            for (b, &(b_star, _)) in bounds.iter_mut().zip(&bids) {
                b.lower_bid = b.lower_bid.min(b_star);
                b.upper_bid = b.upper_bid.max(b_star);
            }
            sort_rank(cands, bids.into_iter(), request.n_slots)?
        }
        Strategy::Str2 => rank(cands, &bounds, &config.objective, request.n_slots)?,
        Strategy::Str3 => str3_rank(cands, request.n_slots)?,
    };
    let outcome = gsp_price(unpriced, config.reserve_score)?;
    Ok(OcpcAuction { request, ratios, bounds, outcome })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::objectives::Signal;
    use proptest::prelude::{any, prop, prop_assert, prop_assert_eq, prop_assume, prop_oneof, proptest, Just};
    use proptest::strategy::Strategy as _;

    /// The four-ad worked example: (id, pctr, bid, pcvr * ppb, ratio, r_a).
    pub(crate) const TABLE1: [(&str, f64, f64, f64, f64, f64); 4] = [
        ("ad1", 0.04, 2.0, 5.0, 1.5, 0.4),
        ("ad2", 0.05, 1.5, 3.6, 0.8, 0.4),
        ("ad3", 0.06, 1.5, 2.0, 1.3, 0.4),
        ("ad4", 0.04, 1.0, 2.5, 0.5, 0.1),
    ];

    pub(crate) fn table1_candidates() -> Vec<AdCandidate> {
        TABLE1
            .iter()
            .map(|&(id, pctr, bid, gmv, ratio, ra)| {
                let pcvr = gmv / 100.0;
                AdCandidate {
                    pcvr,
                    ppb: 100.0,
                    expected_cvr: Some(pcvr / ratio),
                    adjust_range: ra,
                    ..AdCandidate::new(id, bid, pctr)
                }
            })
            .collect()
    }

    fn table1_bounds() -> Vec<BidBounds> {
        TABLE1
            .iter()
            .map(|&(_, pctr, bid, _, ratio, ra)| bidopt::bid_bounds(bid, pctr, ratio, ra, true).unwrap())
            .collect()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn table1_bounds_match_printed_rows() {
        let b = table1_bounds();
        let printed = [(2.8, 0.112, 0.08), (1.5, 0.075, 0.045), (1.95, 0.117, 0.09), (1.0, 0.04, 0.036)];
        for (b, (ub, us, ls)) in b.iter().zip(printed) {
            assert!(close(b.upper_bid, ub) && close(b.upper_score, us) && close(b.lower_score, ls));
        }
    }

    #[test]
    fn worked_example_two_slots() {
        let cands = table1_candidates();
        let out = rank(&cands, &table1_bounds(), &ObjectiveSpec::F2 { alpha: 1.0 }, 2).unwrap();
        let ids: Vec<_> = out.winner_ids(&cands).iter().map(|c| c.0.as_str()).collect();
        assert_eq!(ids, ["ad1", "ad3"]);
        assert!(close(out.winners[0].b_star, 2.8));
        assert!(close(out.winners[1].b_star, 0.112 / 0.06));
        assert!((out.winners[1].b_star - 1.86).abs() < 0.01);
        assert!(close(out.winners[0].final_score, 0.112));
        assert_eq!(out.winners[0].final_score, out.winners[1].final_score);
        let losers: Vec<_> = out.losers.iter().map(|p| (cands[p.candidate].campaign_id.0.as_str(), p.b_star, p.final_score)).collect();
        assert_eq!(losers[0].0, "ad2");
        assert!(close(losers[0].1, 1.5) && close(losers[0].2, 0.075));
        assert_eq!(losers[1].0, "ad4");
        assert!(close(losers[1].1, 1.0) && close(losers[1].2, 0.04));
    }

    #[test]
    fn worked_example_pricing() {
        let cands = table1_candidates();
        let out = rank(&cands, &table1_bounds(), &ObjectiveSpec::F2 { alpha: 1.0 }, 2).unwrap();
        let out = gsp_price(out, 0.0).unwrap();
        assert!(close(out.winners[0].price_per_click.unwrap(), 2.8));
        assert!(close(out.winners[1].price_per_click.unwrap(), 1.25));
    }

    #[test]
    fn single_candidate_wins_at_upper_bound() {
        let c = vec![AdCandidate::new("solo", 1.0, 0.1)];
        let b = vec![bidopt::bid_bounds(1.0, 0.1, 2.0, 0.4, true).unwrap()];
        let out = rank(&c, &b, &ObjectiveSpec::F1, 1).unwrap();
        assert_eq!(out.winners.len(), 1);
        assert!(close(out.winners[0].b_star, 1.4));
        let priced = gsp_price(out, 0.0).unwrap();
        assert_eq!(priced.winners[0].price_per_click, Some(0.0));
    }

    #[test]
    fn reserve_sets_floor_price() {
        let c = vec![AdCandidate::new("solo", 1.0, 0.04)];
        let out = gsp_price(ecpm_rank(&c, 1).unwrap(), 0.02).unwrap();
        assert!(close(out.winners[0].price_per_click.unwrap(), 0.5));
    }

    #[test]
    fn zero_ctr_never_wins() {
        let c = vec![AdCandidate::new("a", 5.0, 0.0), AdCandidate::new("b", 1.0, 0.01)];
        let b: Vec<_> = c.iter().map(|c| BidBounds::fixed(c.bid, c.pctr)).collect();
        let out = rank(&c, &b, &ObjectiveSpec::F1, 2).unwrap();
        assert_eq!(out.winners.len(), 1);
        assert_eq!(out.winners[0].candidate, 1);
        let none = vec![AdCandidate::new("a", 5.0, 0.0)];
        assert_eq!(
            rank(&none, &[BidBounds::fixed(5.0, 0.0)], &ObjectiveSpec::F1, 1),
            Err(AuctionError::NoEligibleWinner)
        );
        assert_eq!(ecpm_rank(&none, 1), Err(AuctionError::NoEligibleWinner));
    }

    #[test]
    fn unranked_outcome_is_rejected() {
        let p = |s: f64| Placement { candidate: 0, b_star: 1.0, final_score: s, score_per_bid: s, price_per_click: None };
        let bad = AuctionOutcome { winners: vec![p(0.1), p(0.2)], losers: vec![] };
        assert_eq!(gsp_price(bad, 0.0), Err(AuctionError::UnrankedOutcome(1)));
    }

    fn request(cands: Vec<AdCandidate>, n_slots: usize) -> PvRequest {
        PvRequest {
            pv_id: "pv".into(),
            timestamp: 0,
            user_id: "u".into(),
            position_id: "p".into(),
            n_slots,
            candidates: cands,
        }
    }

    fn config(strategy: Strategy, objective: ObjectiveSpec) -> StrategyConfig {
        StrategyConfig {
            objective,
            calibration_threshold: None,
            ..StrategyConfig::new(strategy)
        }
    }

    #[test]
    fn run_ocpc_str0_is_ecpm_sort() {
        let req = request(table1_candidates(), 4);
        let a = run_ocpc(req, &config(Strategy::Str0, ObjectiveSpec::F1), &NoBaselines).unwrap();
        let ids: Vec<_> = a.outcome.winner_ids(&a.request.candidates).iter().map(|c| c.0.clone()).collect();
        assert_eq!(ids, ["ad3", "ad1", "ad2", "ad4"]);
        let scores: Vec<_> = a.outcome.winners.iter().map(|p| p.final_score).collect();
        for (s, e) in scores.iter().zip([0.09, 0.08, 0.075, 0.04]) {
            assert!(close(*s, e));
        }
        for p in &a.outcome.winners {
            assert_eq!(p.b_star, a.request.candidates[p.candidate].bid);
        }
    }

    #[test]
    fn run_ocpc_str2_reproduces_worked_example() {
        let req = request(table1_candidates(), 2);
        let a = run_ocpc(req, &config(Strategy::Str2, ObjectiveSpec::F2 { alpha: 1.0 }), &NoBaselines).unwrap();
        let ids: Vec<_> = a.outcome.winner_ids(&a.request.candidates).iter().map(|c| c.0.clone()).collect();
        assert_eq!(ids, ["ad1", "ad3"]);
        assert!(close(a.outcome.winners[1].b_star, 0.112 / 0.06));
    }

    #[test]
    fn run_ocpc_str1_raises_good_traffic() {
        let req = request(table1_candidates(), 1);
        let mut cfg = config(Strategy::Str1, ObjectiveSpec::F1);
        cfg.w = 2.0;
        let a = run_ocpc(req, &cfg, &NoBaselines).unwrap();
        // ad1: ratio 1.5 -> 2 * (1 + sigma(1.5, 2) * 0.4)
        let s = (1.5f64.powi(2) - 1.0) / (1.5f64.powi(2) + 1.0);
        let all: Vec<_> = a.outcome.winners.iter().chain(&a.outcome.losers).collect();
        let ad1 = all.iter().find(|p| p.candidate == 0).unwrap();
        assert!(close(ad1.b_star, 2.0 * (1.0 + s * 0.4)));
        // ad3: 1.5 * (1 + sigma(1.3, 2) * 0.4) = 1.6539 -> eCPM 0.0992 beats ad1's 0.0923
        assert_eq!(a.outcome.winners[0].candidate, 2);
    }

    #[test]
    fn run_ocpc_str3_sorts_by_expected_conversions() {
        let req = request(table1_candidates(), 2);
        let a = run_ocpc(req, &config(Strategy::Str3, ObjectiveSpec::F1), &NoBaselines).unwrap();
        // keys pctr * pcvr * bid: ad1 .004, ad2 .0027, ad3 .0018, ad4 .001
        let ids: Vec<_> = a.outcome.winner_ids(&a.request.candidates).iter().map(|c| c.0.clone()).collect();
        assert_eq!(ids, ["ad1", "ad2"]);
        for p in &a.outcome.winners {
            assert_eq!(p.b_star, a.request.candidates[p.candidate].bid);
            assert!(p.price_per_click.unwrap() <= p.b_star);
        }
    }

    #[test]
    fn str3_with_equal_pcvr_matches_ecpm() {
        let mut c = table1_candidates();
        for x in &mut c {
            x.pcvr = 0.02;
        }
        let a: Vec<_> = str3_rank(&c, 4).unwrap().winners.iter().map(|p| p.candidate).collect();
        let b: Vec<_> = ecpm_rank(&c, 4).unwrap().winners.iter().map(|p| p.candidate).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn single_candidate_wins_under_every_strategy() {
        for s in [Strategy::Str0, Strategy::Str1, Strategy::Str2, Strategy::Str3] {
            let req = request(vec![table1_candidates().remove(0)], 3);
            let a = run_ocpc(req, &config(s, ObjectiveSpec::F2 { alpha: 1.0 }), &NoBaselines).unwrap();
            assert_eq!(a.outcome.slots_filled(), 1, "{s:?}");
        }
    }

    #[test]
    fn missing_baseline_means_no_adjustment() {
        let mut c = table1_candidates();
        for x in &mut c {
            x.expected_cvr = None;
        }
        let a = run_ocpc(request(c, 2), &config(Strategy::Str2, ObjectiveSpec::default()), &NoBaselines).unwrap();
        assert!(a.ratios.iter().all(|&r| r == 1.0));
        for p in a.outcome.winners.iter().chain(&a.outcome.losers) {
            assert_eq!(p.b_star, a.request.candidates[p.candidate].bid);
        }
    }

    #[test]
    fn baselines_table_is_consulted() {
        let mut c = table1_candidates();
        c[0].expected_cvr = None;
        let table: HashMap<CampaignId, f64> = [("ad1".into(), 0.025)].into_iter().collect();
        let a = run_ocpc(request(c, 2), &config(Strategy::Str2, ObjectiveSpec::default()), &table).unwrap();
        assert!(close(a.ratios[0], 2.0));
    }

    // -- exhaustive oracle for one slot --

    fn random_instance(max_ads: usize) -> impl proptest::strategy::Strategy<Value = (Vec<AdCandidate>, Vec<BidBounds>)> {
        prop::collection::vec(
            (0.001f64..0.2, 0.1f64..5.0, 0.0f64..0.1, 1.0f64..200.0, 0.0f64..3.0, 0.0f64..0.6, any::<bool>()),
            1..=max_ads,
        )
        .prop_map(|rows| {
            let cands: Vec<AdCandidate> = rows
                .iter()
                .enumerate()
                .map(|(i, &(pctr, bid, pcvr, ppb, _, ra, _))| AdCandidate {
                    pcvr,
                    ppb,
                    adjust_range: ra,
                    ..AdCandidate::new(format!("c{i}"), bid, pctr)
                })
                .collect();
            let bounds = rows
                .iter()
                .map(|&(pctr, bid, _, _, ratio, ra, auth)| bidopt::bid_bounds(bid, pctr, ratio, ra, auth).unwrap())
                .collect();
            (cands, bounds)
        })
    }

    fn objective_strategy() -> impl proptest::strategy::Strategy<Value = ObjectiveSpec> {
        prop_oneof![
            Just(ObjectiveSpec::F1),
            (0.0f64..5.0).prop_map(|alpha| ObjectiveSpec::F2 { alpha }),
            (0.5f64..8.0).prop_map(|w| ObjectiveSpec::SigmaComposite { signal: Signal::Gmv, w }),
        ]
    }

    proptest! {
        #[test]
        fn one_slot_matches_exhaustive_oracle(
            (cands, bounds) in random_instance(8),
            spec in objective_strategy(),
        ) {
            let ctx = AuctionContext::from_candidates(&cands);
            prop_assume!(spec.check_context(&ctx).is_ok());
            let out = rank(&cands, &bounds, &spec, 1).unwrap();
            // oracle: of the ads able to reach every other ad's floor, the
            // best by objective at its ceiling
            let floor = bounds.iter().map(|b| b.lower_score).fold(f64::MIN, f64::max);
            let mut best: Option<(f64, usize)> = None;
            for i in 0..cands.len() {
                if bounds[i].upper_score < floor {
                    continue;
                }
                let f = spec.evaluate(&cands[i], bounds[i].upper_bid, &ctx).unwrap();
                best = match best {
                    Some((bf, _)) if bf >= f => best,
                    _ => Some((f, i)),
                };
            }
            let (bf, bi) = best.unwrap();
            let got = out.winners[0].candidate;
            let gf = spec.evaluate(&cands[got], bounds[got].upper_bid, &ctx).unwrap();
            prop_assert_eq!(gf, bf);
            if got != bi {
                // equal objective: lower campaign id wins the tie
                prop_assert!(cands[got].campaign_id < cands[bi].campaign_id);
            }
        }

        #[test]
        fn ranking_constraints_hold(
            (cands, bounds) in random_instance(12),
            spec in objective_strategy(),
            n_slots in 1usize..=3,
        ) {
            let ctx = AuctionContext::from_candidates(&cands);
            prop_assume!(spec.check_context(&ctx).is_ok());
            let out = gsp_price(rank(&cands, &bounds, &spec, n_slots).unwrap(), 0.0).unwrap();
            prop_assert_eq!(out.winners.len(), n_slots.min(cands.len()));
            let min_win = out.winners.iter().map(|p| p.final_score).fold(f64::MAX, f64::min);
            for l in &out.losers {
                prop_assert!(l.final_score <= min_win);
            }
            for p in out.winners.iter().chain(&out.losers) {
                let b = &bounds[p.candidate];
                prop_assert!(b.lower_bid <= p.b_star * (1.0 + 1e-12) && p.b_star <= b.upper_bid);
                prop_assert!(p.final_score <= b.upper_score);
            }
            for p in &out.winners {
                prop_assert!(p.price_per_click.unwrap() <= p.b_star);
            }
        }
    }
}
