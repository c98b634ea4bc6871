//! Offline replay: run a strategy over a logged stream of page views,
//! account every shown ad in expectation, and exclude campaigns once their
//! budget is spent.
//!
//! The replayer pushes one [`LedgerRow`] per impression into a
//! [`LedgerSink`]. Sinks compose as tuples, so a run can write the ledger
//! to disk and fold it into a [`Breakdown`] in the same pass without ever
//! holding the log or the ledger in memory.

use std::collections::{BTreeMap, HashMap};

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::auction::{run_ocpc, AuctionError, BaselineSource};
use crate::domain::{Campaign, CampaignId, CategoryId, ConfigError, PvRequest, StrategyConfig};
use crate::metrics::{
    self, classify_outcome, histogram_from_counts, relative_delta, Delta, Histogram, Impression, MetricsReport,
    MetricsTotals, OutcomeClass,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("page view {pv_id} at {timestamp} comes after {previous}")]
    UnorderedLog { pv_id: String, timestamp: i64, previous: i64 },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("bad ledger row: {0}")]
    BadRow(String),
}

/// One shown ad.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub pv_id: String,
    pub slot: usize,
    pub campaign_id: CampaignId,
    pub category_id: CategoryId,
    pub pctr: f64,
    /// Calibrated.
    pub pcvr: f64,
    pub ppb: f64,
    pub pasr: Option<f64>,
    pub b_star: f64,
    pub price: f64,
    pub bid: f64,
    pub r_a: f64,
    /// Quality ratio the bounds were computed from.
    pub ratio: f64,
}

impl LedgerRow {
    pub const FIELDS: [&'static str; 13] = [
        "pv_id",
        "slot",
        "campaign_id",
        "category_id",
        "pctr",
        "pcvr",
        "ppb",
        "pasr",
        "b_star",
        "price",
        "bid",
        "r_a",
        "ratio",
    ];

    pub fn impression(&self) -> Impression {
        Impression {
            pctr: self.pctr,
            pcvr: self.pcvr,
            ppb: self.ppb,
            pasr: self.pasr,
            price_per_click: self.price,
        }
    }

    /// Expected spend of this impression.
    pub fn expected_cost(&self) -> f64 {
        self.pctr * self.price
    }

    /// Text fields in [`Self::FIELDS`] order, numbers at six decimals.
    pub fn to_fields(&self) -> Vec<String> {
        let f = |x: f64| format!("{x:.6}");
        vec![
            self.pv_id.clone(),
            self.slot.to_string(),
            self.campaign_id.0.clone(),
            self.category_id.0.clone(),
            f(self.pctr),
            f(self.pcvr),
            f(self.ppb),
            metrics::fmt_opt(self.pasr),
            f(self.b_star),
            f(self.price),
            f(self.bid),
            f(self.r_a),
            f(self.ratio),
        ]
    }

    pub fn from_fields<S: AsRef<str>>(fields: &[S]) -> Result<Self, SimError> {
        if fields.len() != Self::FIELDS.len() {
            return Err(SimError::BadRow(format!("expected {} fields, got {}", Self::FIELDS.len(), fields.len())));
        }
        let s = |i: usize| fields[i].as_ref();
        let num = |i: usize| {
            s(i).parse::<f64>().map_err(|_| SimError::BadRow(format!("{}: {:?}", Self::FIELDS[i], s(i))))
        };
        Ok(LedgerRow {
            pv_id: s(0).to_owned(),
            slot: s(1).parse().map_err(|_| SimError::BadRow(format!("slot: {:?}", s(1))))?,
            campaign_id: CampaignId(s(2).to_owned()),
            category_id: CategoryId(s(3).to_owned()),
            pctr: num(4)?,
            pcvr: num(5)?,
            ppb: num(6)?,
            pasr: if s(7) == "NA" { None } else { Some(num(7)?) },
            b_star: num(8)?,
            price: num(9)?,
            bid: num(10)?,
            r_a: num(11)?,
            ratio: num(12)?,
        })
    }
}

pub trait LedgerSink {
    fn record(&mut self, row: &LedgerRow);
}

impl LedgerSink for Vec<LedgerRow> {
    fn record(&mut self, row: &LedgerRow) {
        self.push(row.clone());
    }
}

impl<T: LedgerSink + ?Sized> LedgerSink for &mut T {
    fn record(&mut self, row: &LedgerRow) {
        (**self).record(row);
    }
}

impl<A: LedgerSink, B: LedgerSink> LedgerSink for (A, B) {
    fn record(&mut self, row: &LedgerRow) {
        self.0.record(row);
        self.1.record(row);
    }
}

/// Adapts a closure into a sink.
pub struct FnSink<F>(pub F);

impl<F: FnMut(&LedgerRow)> LedgerSink for FnSink<F> {
    fn record(&mut self, row: &LedgerRow) {
        (self.0)(row);
    }
}

/// Everything a report needs, folded from ledger rows as they stream by.
#[derive(Debug, Clone, PartialEq)]
pub struct Breakdown {
    pub overall: MetricsTotals,
    pub by_campaign: BTreeMap<CampaignId, MetricsTotals>,
    pub by_category: BTreeMap<CategoryId, MetricsTotals>,
    /// Counts of `b_star / bid` over equal-width bins of `[1 - r_a, 1 + r_a]`.
    pub adjustment_counts: Vec<usize>,
}

pub const DEFAULT_HISTOGRAM_BINS: usize = 9;

impl Breakdown {
    pub fn new(n_bins: usize) -> Self {
        Breakdown {
            overall: MetricsTotals::default(),
            by_campaign: BTreeMap::new(),
            by_category: BTreeMap::new(),
            adjustment_counts: vec![0; n_bins.max(1)],
        }
    }

    pub fn merge(&mut self, other: &Breakdown) {
        self.overall.merge(&other.overall);
        for (k, v) in &other.by_campaign {
            self.by_campaign.entry(k.clone()).or_default().merge(v);
        }
        for (k, v) in &other.by_category {
            self.by_category.entry(k.clone()).or_default().merge(v);
        }
        for (a, b) in self.adjustment_counts.iter_mut().zip(&other.adjustment_counts) {
            *a += b;
        }
    }

    pub fn report(&self) -> MetricsReport {
        self.overall.report()
    }

    pub fn histogram(&self) -> Histogram {
        histogram_from_counts(self.adjustment_counts.clone())
    }
}

impl Default for Breakdown {
    fn default() -> Self {
        Breakdown::new(DEFAULT_HISTOGRAM_BINS)
    }
}

impl LedgerSink for Breakdown {
    fn record(&mut self, row: &LedgerRow) {
        let imp = row.impression();
        self.overall.add(&imp);
        // get_mut first: this runs once per impression and cloning the
        // key on every hit is measurable
        match self.by_campaign.get_mut(&row.campaign_id) {
            Some(t) => t.add(&imp),
            None => self.by_campaign.entry(row.campaign_id.clone()).or_default().add(&imp),
        }
        match self.by_category.get_mut(&row.category_id) {
            Some(t) => t.add(&imp),
            None => self.by_category.entry(row.category_id.clone()).or_default().add(&imp),
        }
        let n = self.adjustment_counts.len();
        self.adjustment_counts[metrics::adjustment_bin(row.b_star, row.bid, row.r_a, n)] += 1;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignState {
    pub campaign_id: CampaignId,
    /// `None` is unlimited. Never negative; zero means excluded for the
    /// rest of the run.
    pub budget_remaining: Option<f64>,
    pub cost: f64,
    pub gmv: f64,
    pub pv: u64,
}

impl CampaignState {
    pub fn exhausted(&self) -> bool {
        matches!(self.budget_remaining, Some(b) if b <= 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ReplayStats {
    pub page_views: u64,
    pub auctions: u64,
    pub impressions: u64,
    /// Page views whose auction failed and were skipped.
    pub failed: u64,
    /// Page views left with no candidates after budget exclusion.
    pub starved: u64,
    /// Candidates dropped because their campaign had no budget left.
    pub excluded_candidates: u64,
}

/// Sequential replay state: strategy, baselines and campaign budgets.
pub struct Replayer<'a> {
    config: StrategyConfig,
    baselines: &'a dyn BaselineSource,
    campaigns: HashMap<CampaignId, CampaignState>,
    last_timestamp: Option<i64>,
    stats: ReplayStats,
}

impl<'a> Replayer<'a> {
    /// Campaigns missing from `campaigns` get an unlimited budget.
    pub fn new(
        config: StrategyConfig,
        campaigns: &[Campaign],
        baselines: &'a dyn BaselineSource,
    ) -> Result<Self, SimError> {
        config.validate()?;
        let campaigns = campaigns
            .iter()
            .map(|c| {
                let state = CampaignState {
                    campaign_id: c.campaign_id.clone(),
                    budget_remaining: c.budget.map(|b| b.max(0.0)),
                    cost: 0.0,
                    gmv: 0.0,
                    pv: 0,
                };
                (c.campaign_id.clone(), state)
            })
            .collect();
        Ok(Replayer { config, baselines, campaigns, last_timestamp: None, stats: ReplayStats::default() })
    }

    pub fn config(&self) -> &StrategyConfig {
        &self.config
    }

    pub fn stats(&self) -> ReplayStats {
        self.stats
    }

    pub fn campaign(&self, id: &CampaignId) -> Option<&CampaignState> {
        self.campaigns.get(id)
    }

    pub fn campaigns(&self) -> impl Iterator<Item = &CampaignState> {
        self.campaigns.values()
    }

    fn excluded(&self, id: &CampaignId) -> bool {
        self.config.enforce_budget && self.campaigns.get(id).is_some_and(CampaignState::exhausted)
    }

    /// Runs one page view. Only an out-of-order timestamp is an error;
    /// a failing auction is logged, counted and skipped.
    pub fn step(&mut self, mut pv: PvRequest, sink: &mut dyn LedgerSink) -> Result<(), SimError> {
        if let Some(prev) = self.last_timestamp {
            if pv.timestamp < prev {
                return Err(SimError::UnorderedLog { pv_id: pv.pv_id, timestamp: pv.timestamp, previous: prev });
            }
        }
        self.last_timestamp = Some(pv.timestamp);
        self.stats.page_views += 1;

        if self.config.enforce_budget {
            let before = pv.candidates.len();
            pv.candidates.retain(|c| !self.excluded(&c.campaign_id));
            self.stats.excluded_candidates += (before - pv.candidates.len()) as u64;
            if pv.candidates.is_empty() && before > 0 {
                self.stats.starved += 1;
                return Ok(());
            }
        }

        let pv_id = pv.pv_id.clone();
        let auction = match run_ocpc(pv, &self.config, self.baselines) {
            Ok(a) => a,
            Err(AuctionError::NoEligibleWinner) => {
                self.stats.auctions += 1;
                return Ok(());
            }
            Err(e) => {
                warn!("page view {pv_id} skipped: {e}");
                self.stats.failed += 1;
                return Ok(());
            }
        };
        self.stats.auctions += 1;

        for (slot, w) in auction.outcome.winners.iter().enumerate() {
            let c = &auction.request.candidates[w.candidate];
            let row = LedgerRow {
                pv_id: auction.request.pv_id.clone(),
                slot,
                campaign_id: c.campaign_id.clone(),
                category_id: c.category_id.clone(),
                pctr: c.pctr,
                pcvr: c.pcvr,
                ppb: c.ppb,
                pasr: c.pasr,
                b_star: w.b_star,
                price: w.price_per_click.unwrap_or(w.b_star),
                bid: c.bid,
                r_a: c.adjust_range,
                ratio: auction.ratios[w.candidate],
            };
            let cost = row.expected_cost();
            let state = self.campaigns.entry(c.campaign_id.clone()).or_insert_with(|| CampaignState {
                campaign_id: c.campaign_id.clone(),
                budget_remaining: None,
                cost: 0.0,
                gmv: 0.0,
                pv: 0,
            });
            state.cost += cost;
            state.gmv += row.pctr * row.pcvr * row.ppb;
            state.pv += 1;
            if self.config.enforce_budget {
                if let Some(b) = state.budget_remaining.as_mut() {
                    *b = (*b - cost).max(0.0);
                }
            }
            self.stats.impressions += 1;
            sink.record(&row);
        }
        Ok(())
    }
}

/// Replays a whole log in order.
pub fn replay(
    log: impl IntoIterator<Item = PvRequest>,
    config: &StrategyConfig,
    campaigns: &[Campaign],
    baselines: &dyn BaselineSource,
    sink: &mut dyn LedgerSink,
) -> Result<ReplayStats, SimError> {
    let mut r = Replayer::new(config.clone(), campaigns, baselines)?;
    for pv in log {
        r.step(pv, sink)?;
    }
    Ok(r.stats())
}

pub const DEFAULT_MIN_CONVERSIONS: f64 = 5.0;

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignComparison {
    pub campaign_id: CampaignId,
    pub base: MetricsReport,
    pub test: MetricsReport,
    pub gmv: Delta,
    pub cost: Delta,
    pub pv: Delta,
    pub gpm: Delta,
    pub roi: Delta,
    pub class: OutcomeClass,
}

impl CampaignComparison {
    fn new(campaign_id: CampaignId, base: &MetricsTotals, test: &MetricsTotals) -> Self {
        let (base, test) = (base.report(), test.report());
        let d = |m| relative_delta(base.get(m), test.get(m));
        use crate::metrics::Metric;
        CampaignComparison {
            gmv: d(Metric::Gmv),
            cost: d(Metric::Cost),
            pv: d(Metric::Pv),
            gpm: d(Metric::Gpm),
            roi: d(Metric::Roi),
            class: classify_outcome(&base, &test),
            campaign_id,
            base,
            test,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignReport {
    /// Campaigns passing the conversion filter, by id.
    pub rows: Vec<CampaignComparison>,
    /// Campaigns seen in either run but below the filter.
    pub filtered_out: usize,
    /// Share of `rows` in each outcome class.
    pub proportions: BTreeMap<OutcomeClass, f64>,
}

const CLASSES: [OutcomeClass; 3] =
    [OutcomeClass::Improved, OutcomeClass::QuantityQualityExchange, OutcomeClass::Other];

fn shares(weights: impl Iterator<Item = (OutcomeClass, f64)>) -> BTreeMap<OutcomeClass, f64> {
    let mut out: BTreeMap<OutcomeClass, f64> = CLASSES.iter().map(|&c| (c, 0.0)).collect();
    let mut total = 0.0;
    for (c, w) in weights {
        *out.entry(c).or_default() += w;
        total += w;
    }
    if total > 0.0 {
        out.values_mut().for_each(|v| *v /= total);
    }
    out
}

/// Per-campaign deltas of `test` against `base`. A campaign is kept when
/// its expected conversions in the base run reach `min_conversions`.
pub fn per_campaign_report(
    base: &BTreeMap<CampaignId, MetricsTotals>,
    test: &BTreeMap<CampaignId, MetricsTotals>,
    min_conversions: f64,
) -> CampaignReport {
    let empty = MetricsTotals::default();
    let mut ids: Vec<&CampaignId> = base.keys().chain(test.keys()).collect();
    ids.sort();
    ids.dedup();
    let mut rows = Vec::new();
    let mut filtered_out = 0;
    for id in ids {
        let b = base.get(id).unwrap_or(&empty);
        if b.conversions < min_conversions {
            filtered_out += 1;
            continue;
        }
        rows.push(CampaignComparison::new(id.clone(), b, test.get(id).unwrap_or(&empty)));
    }
    let proportions = shares(rows.iter().map(|r| (r.class, 1.0)));
    CampaignReport { rows, filtered_out, proportions }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CategoryShift {
    pub category_id: CategoryId,
    pub base_pv: f64,
    pub test_pv: f64,
    pub base_share: f64,
    pub test_share: f64,
    /// Relative change of the PV share.
    pub variation: Delta,
    pub gpm: Delta,
    pub roi: Delta,
    pub class: OutcomeClass,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CategoryReport {
    /// Ordered by base-run PV share, largest first.
    pub rows: Vec<CategoryShift>,
    /// Share of categories in each class.
    pub by_count: BTreeMap<OutcomeClass, f64>,
    /// The same, each category weighted by its base-run PV.
    pub by_pv: BTreeMap<OutcomeClass, f64>,
    /// Categories whose GPM rose, by count and by base PV.
    pub gpm_improved_by_count: f64,
    pub gpm_improved_by_pv: f64,
}

pub fn per_category_report(
    base: &BTreeMap<CategoryId, MetricsTotals>,
    test: &BTreeMap<CategoryId, MetricsTotals>,
) -> CategoryReport {
    let empty = MetricsTotals::default();
    let total = |m: &BTreeMap<CategoryId, MetricsTotals>| m.values().map(|t| t.impressions).sum::<f64>();
    let (base_total, test_total) = (total(base), total(test));
    let share = |pv: f64, total: f64| if total > 0.0 { pv / total } else { 0.0 };

    let mut ids: Vec<&CategoryId> = base.keys().chain(test.keys()).collect();
    ids.sort();
    ids.dedup();
    let mut rows: Vec<CategoryShift> = ids
        .into_iter()
        .map(|id| {
            let b = base.get(id).unwrap_or(&empty);
            let t = test.get(id).unwrap_or(&empty);
            let (br, tr) = (b.report(), t.report());
            let base_share = share(b.impressions, base_total);
            let test_share = share(t.impressions, test_total);
            CategoryShift {
                category_id: id.clone(),
                base_pv: b.impressions,
                test_pv: t.impressions,
                base_share,
                test_share,
                variation: relative_delta(Some(base_share), Some(test_share)),
                gpm: relative_delta(br.gpm, tr.gpm),
                roi: relative_delta(br.roi, tr.roi),
                class: classify_outcome(&br, &tr),
            }
        })
        .collect();
    rows.sort_by(|a, b| b.base_share.total_cmp(&a.base_share).then_with(|| a.category_id.cmp(&b.category_id)));

    let by_count = shares(rows.iter().map(|r| (r.class, 1.0)));
    let by_pv = shares(rows.iter().map(|r| (r.class, r.base_pv)));
    let improved = |w: &dyn Fn(&CategoryShift) -> f64| {
        let all: f64 = rows.iter().map(w).sum();
        let up: f64 = rows.iter().filter(|r| r.gpm.value().is_some_and(|g| g > 0.0)).map(w).sum();
        if all > 0.0 {
            up / all
        } else {
            0.0
        }
    };
    let gpm_improved_by_count = improved(&|_| 1.0);
    let gpm_improved_by_pv = improved(&|r| r.base_pv);
    CategoryReport { rows, by_count, by_pv, gpm_improved_by_count, gpm_improved_by_pv }
}
