//! Ranking-quality metrics (AUC, GAUC) and expected-value business
//! metrics (RPM, GPM, ROI, CTR, CVR, PPC, ASR).

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("samples need at least one positive and one negative label")]
    DegenerateLabels,
    #[error("every group is single-class")]
    NoValidGroups,
    #[error("ledger is empty")]
    EmptyLedger,
    #[error("no records to bin")]
    EmptyRecords,
    #[error("bin count must be at least 1")]
    ZeroBins,
}

/// One scored impression for ranking evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledScore {
    pub user_id: String,
    pub position_id: String,
    pub score: f64,
    pub label: bool,
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half. Computed from average ranks in O(n log n).
pub fn auc_scores(samples: &[(f64, bool)]) -> Result<f64, MetricsError> {
    let n_pos = samples.iter().filter(|s| s.1).count();
    let n_neg = samples.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricsError::DegenerateLabels);
    }
    let mut sorted: Vec<(f64, bool)> = samples.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));

    // sum of 1-based ranks of positives, ties sharing their mean rank
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j].0 == sorted[i].0 {
            j += 1;
        }
        let mean_rank = (i + 1 + j) as f64 / 2.0;
        let pos_in_tie = sorted[i..j].iter().filter(|s| s.1).count();
        rank_sum += mean_rank * pos_in_tie as f64;
        i = j;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

pub fn auc(samples: &[LabeledScore]) -> Result<f64, MetricsError> {
    let pairs: Vec<(f64, bool)> = samples.iter().map(|s| (s.score, s.label)).collect();
    auc_scores(&pairs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightMode {
    #[default]
    Impressions,
    Clicks,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaucSummary {
    pub gauc: f64,
    pub groups_used: usize,
    /// Single-class groups dropped before averaging.
    pub groups_removed: usize,
}

/// AUC per (user, position) group, averaged with impression or click
/// weights. Groups holding only one label class are dropped.
pub fn gauc_summary(samples: &[LabeledScore], mode: WeightMode) -> Result<GaucSummary, MetricsError> {
    let mut groups: BTreeMap<(&str, &str), Vec<(f64, bool)>> = BTreeMap::new();
    for s in samples {
        groups
            .entry((s.user_id.as_str(), s.position_id.as_str()))
            .or_default()
            .push((s.score, s.label));
    }
    let (mut num, mut den) = (0.0, 0.0);
    let (mut used, mut removed) = (0, 0);
    let mut last = 0.0;
    for group in groups.values() {
        let Ok(a) = auc_scores(group) else {
            removed += 1;
            continue;
        };
        let w = match mode {
            WeightMode::Impressions => group.len() as f64,
            WeightMode::Clicks => group.iter().filter(|s| s.1).count() as f64,
        };
        num += w * a;
        den += w;
        used += 1;
        last = a;
    }
    let gauc = match used {
        0 => return Err(MetricsError::NoValidGroups),
        // w * a / w can be off by an ulp
        1 => last,
        _ => num / den,
    };
    Ok(GaucSummary { gauc, groups_used: used, groups_removed: removed })
}

pub fn gauc(samples: &[LabeledScore], mode: WeightMode) -> Result<f64, MetricsError> {
    gauc_summary(samples, mode).map(|s| s.gauc)
}

/// What the metric accumulator needs from one winning impression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Impression {
    pub pctr: f64,
    pub pcvr: f64,
    pub ppb: f64,
    pub pasr: Option<f64>,
    pub price_per_click: f64,
}

/// Raw expected-value totals. Each impression contributes its click
/// probability as clicks, and so on down the funnel. Totals merge by
/// addition, so shards can be accumulated independently.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsTotals {
    pub impressions: f64,
    pub clicks: f64,
    pub conversions: f64,
    pub gmv: f64,
    pub cost: f64,
    pub asr_adds: f64,
    /// Expected clicks on impressions that carried a pasr.
    pub asr_clicks: f64,
}

impl MetricsTotals {
    pub fn add(&mut self, imp: &Impression) {
        self.impressions += 1.0;
        self.clicks += imp.pctr;
        self.conversions += imp.pctr * imp.pcvr;
        self.gmv += imp.pctr * imp.pcvr * imp.ppb;
        self.cost += imp.pctr * imp.price_per_click;
        if let Some(pasr) = imp.pasr {
            self.asr_adds += imp.pctr * pasr;
            self.asr_clicks += imp.pctr;
        }
    }

    pub fn merge(&mut self, other: &MetricsTotals) {
        self.impressions += other.impressions;
        self.clicks += other.clicks;
        self.conversions += other.conversions;
        self.gmv += other.gmv;
        self.cost += other.cost;
        self.asr_adds += other.asr_adds;
        self.asr_clicks += other.asr_clicks;
    }

    pub fn report(&self) -> MetricsReport {
        let ratio = |num: f64, den: f64| (den > 0.0).then(|| num / den);
        MetricsReport {
            totals: *self,
            rpm: ratio(1000.0 * self.cost, self.impressions),
            gpm: ratio(1000.0 * self.gmv, self.impressions),
            roi: ratio(self.gmv, self.cost),
            ctr: ratio(self.clicks, self.impressions),
            cvr: ratio(self.conversions, self.clicks),
            ppc: ratio(self.cost, self.clicks),
            asr: ratio(self.asr_adds, self.asr_clicks),
        }
    }
}

/// Derived ratios carry `None` where the denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricsReport {
    pub totals: MetricsTotals,
    pub rpm: Option<f64>,
    pub gpm: Option<f64>,
    pub roi: Option<f64>,
    pub ctr: Option<f64>,
    pub cvr: Option<f64>,
    pub ppc: Option<f64>,
    pub asr: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Metric {
    Pv,
    Clicks,
    Conversions,
    Gmv,
    Cost,
    Rpm,
    Gpm,
    Roi,
    Ctr,
    Cvr,
    Ppc,
    Asr,
}

impl Metric {
    pub const ALL: [Metric; 12] = [
        Metric::Pv,
        Metric::Clicks,
        Metric::Conversions,
        Metric::Gmv,
        Metric::Cost,
        Metric::Rpm,
        Metric::Gpm,
        Metric::Roi,
        Metric::Ctr,
        Metric::Cvr,
        Metric::Ppc,
        Metric::Asr,
    ];

    /// The six headline metrics of a strategy comparison row.
    pub const HEADLINE: [Metric; 6] =
        [Metric::Rpm, Metric::Gpm, Metric::Roi, Metric::Ctr, Metric::Cvr, Metric::Ppc];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Pv => "PV",
            Metric::Clicks => "Clicks",
            Metric::Conversions => "Conversions",
            Metric::Gmv => "GMV",
            Metric::Cost => "Cost",
            Metric::Rpm => "RPM",
            Metric::Gpm => "GPM",
            Metric::Roi => "ROI",
            Metric::Ctr => "CTR",
            Metric::Cvr => "CVR",
            Metric::Ppc => "PPC",
            Metric::Asr => "ASR",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl MetricsReport {
    pub fn get(&self, metric: Metric) -> Option<f64> {
        let t = &self.totals;
        match metric {
            Metric::Pv => Some(t.impressions),
            Metric::Clicks => Some(t.clicks),
            Metric::Conversions => Some(t.conversions),
            Metric::Gmv => Some(t.gmv),
            Metric::Cost => Some(t.cost),
            Metric::Rpm => self.rpm,
            Metric::Gpm => self.gpm,
            Metric::Roi => self.roi,
            Metric::Ctr => self.ctr,
            Metric::Cvr => self.cvr,
            Metric::Ppc => self.ppc,
            Metric::Asr => self.asr,
        }
    }

    /// `metric,value` rows, six decimals, `NA` for undefined ratios.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,value\n");
        for m in Metric::ALL {
            out.push_str(&format!("{},{}\n", m.name(), fmt_opt(self.get(m))));
        }
        out
    }
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_owned(), |x| format!("{x:.6}"))
}

/// Folds impressions into a report.
pub fn aggregate<'a>(impressions: impl IntoIterator<Item = &'a Impression>) -> Result<MetricsReport, MetricsError> {
    let mut totals = MetricsTotals::default();
    for imp in impressions {
        totals.add(imp);
    }
    if totals.impressions == 0.0 {
        return Err(MetricsError::EmptyLedger);
    }
    Ok(totals.report())
}

/// Relative change of one metric against a baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Delta {
    Change(f64),
    /// Baseline value is zero.
    ZeroBaseline,
    /// One side has no defined value.
    Undefined,
}

impl Delta {
    pub fn value(self) -> Option<f64> {
        match self {
            Delta::Change(d) => Some(d),
            _ => None,
        }
    }

    /// Signed percentage with one decimal, as in `+5.6%`.
    pub fn percent(self) -> String {
        match self {
            Delta::Change(d) => format!("{:+.1}%", 100.0 * d),
            Delta::ZeroBaseline => "ZERO_BASE".to_owned(),
            Delta::Undefined => "NA".to_owned(),
        }
    }

    pub fn fixed(self) -> String {
        match self {
            Delta::Change(d) => format!("{d:.6}"),
            Delta::ZeroBaseline => "ZERO_BASE".to_owned(),
            Delta::Undefined => "NA".to_owned(),
        }
    }
}

pub fn relative_delta(base: Option<f64>, test: Option<f64>) -> Delta {
    match (base, test) {
        (Some(0.0), Some(_)) => Delta::ZeroBaseline,
        (Some(b), Some(t)) => Delta::Change((t - b) / b),
        _ => Delta::Undefined,
    }
}

/// `(test - base) / base` for every metric, in [`Metric::ALL`] order.
pub fn compare(base: &MetricsReport, test: &MetricsReport) -> Vec<(Metric, Delta)> {
    Metric::ALL.iter().map(|&m| (m, relative_delta(base.get(m), test.get(m)))).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub counts: Vec<usize>,
    pub proportions: Vec<f64>,
}

impl Histogram {
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &c) in self.counts.iter().enumerate() {
            if c > self.counts[best] {
                best = i;
            }
        }
        best
    }

    pub fn middle(&self) -> usize {
        self.counts.len() / 2
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin,count,proportion\n");
        for (i, (c, p)) in self.counts.iter().zip(&self.proportions).enumerate() {
            out.push_str(&format!("{i},{c},{p:.6}\n"));
        }
        out
    }
}

/// Bin index of `b_star / bid` on the axis `[1 - r_a, 1 + r_a]` mapped
/// to `[0, 1]`. Unadjusted bids (including every bid when `r_a` is 0)
/// land in the middle bin.
pub fn adjustment_bin(b_star: f64, bid: f64, adjust_range: f64, n_bins: usize) -> usize {
    let rel = b_star / bid - 1.0;
    let pos = if adjust_range > 0.0 { (rel + adjust_range) / (2.0 * adjust_range) } else { 0.5 };
    let bin = (pos * n_bins as f64).floor();
    bin.clamp(0.0, (n_bins - 1) as f64) as usize
}

/// Distribution of `b_star / bid` over equal-width bins.
pub fn adjustment_histogram(records: &[(f64, f64, f64)], n_bins: usize) -> Result<Histogram, MetricsError> {
    if n_bins == 0 {
        return Err(MetricsError::ZeroBins);
    }
    if records.is_empty() {
        return Err(MetricsError::EmptyRecords);
    }
    let mut counts = vec![0usize; n_bins];
    for &(b_star, bid, ra) in records {
        counts[adjustment_bin(b_star, bid, ra, n_bins)] += 1;
    }
    Ok(histogram_from_counts(counts))
}

pub fn histogram_from_counts(counts: Vec<usize>) -> Histogram {
    let total: usize = counts.iter().sum();
    let proportions = counts
        .iter()
        .map(|&c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
        .collect();
    Histogram { counts, proportions }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OutcomeClass {
    /// GPM and ROI both up.
    Improved,
    /// ROI down, but by less than the relative PV gain.
    QuantityQualityExchange,
    Other,
}

impl OutcomeClass {
    pub fn name(self) -> &'static str {
        match self {
            OutcomeClass::Improved => "improved",
            OutcomeClass::QuantityQualityExchange => "quantity_quality_exchange",
            OutcomeClass::Other => "other",
        }
    }
}

pub fn classify_deltas(gpm: Delta, roi: Delta, pv: Delta) -> OutcomeClass {
    match (gpm.value(), roi.value(), pv.value()) {
        (Some(g), Some(r), _) if g > 0.0 && r > 0.0 => OutcomeClass::Improved,
        (_, Some(r), Some(p)) if r < 0.0 && p > r.abs() => OutcomeClass::QuantityQualityExchange,
        _ => OutcomeClass::Other,
    }
}

pub fn classify_outcome(base: &MetricsReport, test: &MetricsReport) -> OutcomeClass {
    classify_deltas(
        relative_delta(base.gpm, test.gpm),
        relative_delta(base.roi, test.roi),
        relative_delta(Some(base.totals.impressions), Some(test.totals.impressions)),
    )
}

/// Left-aligned first column, right-aligned rest, separated by two spaces.
pub fn text_table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let cols = headers.len();
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: &mut dyn Iterator<Item = &str>| {
        let mut s = String::new();
        for (i, cell) in cells.enumerate().take(cols) {
            if i == 0 {
                s.push_str(&format!("{cell:<w$}", w = widths[0]));
            } else {
                s.push_str(&format!("  {cell:>w$}", w = widths[i]));
            }
        }
        s.push('\n');
        s
    };
    let mut out = line(&mut headers.iter().copied());
    out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (cols - 1)));
    out.push('\n');
    for row in rows {
        out.push_str(&line(&mut row.iter().map(String::as_str)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pairwise_auc(samples: &[(f64, bool)]) -> f64 {
        let pos: Vec<f64> = samples.iter().filter(|s| s.1).map(|s| s.0).collect();
        let neg: Vec<f64> = samples.iter().filter(|s| !s.1).map(|s| s.0).collect();
        let mut wins = 0.0;
        for p in &pos {
            for n in &neg {
                wins += if p > n { 1.0 } else if p == n { 0.5 } else { 0.0 };
            }
        }
        wins / (pos.len() * neg.len()) as f64
    }

    fn ls(user: &str, score: f64, label: bool) -> LabeledScore {
        LabeledScore { user_id: user.into(), position_id: "p".into(), score, label }
    }

    #[test]
    fn auc_edge_cases() {
        assert_eq!(auc_scores(&[(0.9, true), (0.1, false)]).unwrap(), 1.0);
        assert_eq!(auc_scores(&[(0.5, true), (0.5, false)]).unwrap(), 0.5);
        assert_eq!(auc_scores(&[(0.5, true), (0.7, true)]), Err(MetricsError::DegenerateLabels));
    }

    #[test]
    fn gauc_click_weighting() {
        // group a: AUC 1.0 with 2 clicks, group b: AUC 0.5 with 1 click
        let samples = vec![
            ls("a", 0.9, true),
            ls("a", 0.8, true),
            ls("a", 0.1, false),
            ls("b", 0.5, true),
            ls("b", 0.5, false),
        ];
        let g = gauc(&samples, WeightMode::Clicks).unwrap();
        assert!((g - 2.5 / 3.0).abs() < 1e-15);
        let g = gauc(&samples, WeightMode::Impressions).unwrap();
        assert!((g - (3.0 + 1.0) / 5.0).abs() < 1e-15);
    }

    #[test]
    fn gauc_drops_single_class_groups() {
        let samples = vec![
            ls("a", 0.9, true),
            ls("a", 0.3, false),
            ls("a", 0.4, true),
            ls("b", 0.2, false),
            ls("b", 0.7, false),
        ];
        let s = gauc_summary(&samples, WeightMode::Impressions).unwrap();
        assert_eq!(s.groups_removed, 1);
        assert_eq!(s.gauc, auc(&samples[..3]).unwrap());
        let only_neg = vec![ls("b", 0.2, false)];
        assert_eq!(gauc(&only_neg, WeightMode::Clicks), Err(MetricsError::NoValidGroups));
    }

    fn imp(pctr: f64, pcvr: f64, ppb: f64, price: f64) -> Impression {
        Impression { pctr, pcvr, ppb, pasr: None, price_per_click: price }
    }

    #[test]
    fn aggregate_two_impressions() {
        let r = aggregate(&[imp(0.1, 0.2, 50.0, 1.0), imp(0.05, 0.1, 100.0, 2.0)]).unwrap();
        let t = r.totals;
        let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
        assert!(close(t.clicks, 0.15) && close(t.conversions, 0.025));
        assert!(close(t.gmv, 1.5) && close(t.cost, 0.2));
        assert!(close(r.rpm.unwrap(), 100.0));
        assert!(close(r.gpm.unwrap(), 750.0));
        assert!(close(r.roi.unwrap(), 7.5));
        assert!(close(r.ctr.unwrap(), 0.075));
        assert!(close(r.cvr.unwrap(), 0.025 / 0.15));
        assert!(close(r.ppc.unwrap(), 0.2 / 0.15));
        assert_eq!(r.asr, None);
    }

    #[test]
    fn one_impression_adds_its_click_probability() {
        let r = aggregate(&[imp(0.04, 0.0, 0.0, 0.0)]).unwrap();
        assert_eq!(r.totals.clicks, 0.04);
    }

    #[test]
    fn zero_ctr_ledger_has_undefined_ratios() {
        let r = aggregate(&[imp(0.0, 0.1, 10.0, 1.0)]).unwrap();
        assert_eq!(r.totals.clicks, 0.0);
        assert_eq!(r.totals.cost, 0.0);
        assert_eq!((r.cvr, r.ppc, r.roi), (None, None, None));
        assert!(r.to_csv().contains("CVR,NA"));
        assert_eq!(aggregate(&[]), Err(MetricsError::EmptyLedger));
    }

    #[test]
    fn compare_examples() {
        let a = aggregate(&[imp(0.1, 0.2, 50.0, 1.0)]).unwrap();
        assert!(compare(&a, &a).iter().all(|(m, d)| *m == Metric::Asr || *d == Delta::Change(0.0)));
        assert_eq!(relative_delta(Some(100.0), Some(105.6)).percent(), "+5.6%");
        let zero = aggregate(&[imp(0.1, 0.2, 50.0, 0.0)]).unwrap();
        let d: BTreeMap<Metric, Delta> = compare(&zero, &a).into_iter().collect();
        assert_eq!(d[&Metric::Rpm], Delta::ZeroBaseline);
        assert_eq!(d[&Metric::Ppc], Delta::ZeroBaseline);
        assert_eq!(d[&Metric::Roi], Delta::Undefined);
    }

    #[test]
    fn histogram_examples() {
        let same: Vec<_> = (1..=20).map(|i| (i as f64, i as f64, 0.4)).collect();
        let h = adjustment_histogram(&same, 9).unwrap();
        assert_eq!(h.counts[4], 20);
        assert_eq!(h.argmax(), h.middle());
        assert_eq!(adjustment_bin(1.4, 1.0, 0.4, 9), 8);
        assert_eq!(adjustment_bin(0.6, 1.0, 0.4, 9), 0);
        assert_eq!(adjustment_bin(1.0, 1.0, 0.0, 9), 4);
        assert_eq!(adjustment_histogram(&[], 9), Err(MetricsError::EmptyRecords));
    }

    #[test]
    fn classification_examples() {
        let d = Delta::Change;
        assert_eq!(classify_deltas(d(0.182), d(0.201), d(-0.162)), OutcomeClass::Improved);
        assert_eq!(
            classify_deltas(d(0.101), d(-0.006), d(0.495)),
            OutcomeClass::QuantityQualityExchange
        );
        assert_eq!(classify_deltas(d(-0.01), d(-0.05), d(-0.1)), OutcomeClass::Other);
    }

    #[test]
    fn text_table_aligns() {
        let t = text_table(&["", "RPM"], &[vec!["Str 2".into(), "+5.6%".into()]]);
        assert_eq!(t, "         RPM\n------------\nStr 2  +5.6%\n");
    }

    proptest! {
        #[test]
        fn auc_matches_pairwise(
            samples in prop::collection::vec((0u8..20, any::<bool>()), 2..300),
        ) {
            // coarse scores force plenty of ties
            let s: Vec<(f64, bool)> = samples.iter().map(|&(x, l)| (x as f64 / 20.0, l)).collect();
            match auc_scores(&s) {
                Ok(a) => prop_assert!((a - pairwise_auc(&s)).abs() < 1e-12),
                Err(_) => prop_assert!(s.iter().all(|x| x.1) || s.iter().all(|x| !x.1)),
            }
        }

        #[test]
        fn gauc_invariant_under_monotone_transform(
            samples in prop::collection::vec((0u8..4, 0.0f64..1.0, any::<bool>()), 2..200),
        ) {
            let a: Vec<LabeledScore> = samples.iter().map(|&(u, s, l)| ls(&u.to_string(), s, l)).collect();
            let b: Vec<LabeledScore> = samples.iter().map(|&(u, s, l)| ls(&u.to_string(), (3.0 * s).exp(), l)).collect();
            if let Ok(ga) = gauc(&a, WeightMode::Impressions) {
                prop_assert!((ga - gauc(&b, WeightMode::Impressions).unwrap()).abs() < 1e-12);
            }
        }

        #[test]
        fn single_group_gauc_is_auc(
            samples in prop::collection::vec((0.0f64..1.0, any::<bool>()), 2..200),
        ) {
            let a: Vec<LabeledScore> = samples.iter().map(|&(s, l)| ls("u", s, l)).collect();
            if let Ok(x) = auc(&a) {
                prop_assert_eq!(gauc(&a, WeightMode::Impressions).unwrap(), x);
                prop_assert_eq!(gauc(&a, WeightMode::Clicks).unwrap(), x);
            }
        }

        #[test]
        fn totals_are_additive(
            rows in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0, 0.0f64..100.0, 0.0f64..5.0), 1..100),
            split in 0usize..100,
        ) {
            let imps: Vec<Impression> = rows.iter().map(|&(a, b, c, d)| imp(a, b, c, d)).collect();
            let k = split.min(imps.len());
            let mut left = MetricsTotals::default();
            imps[..k].iter().for_each(|i| left.add(i));
            let mut right = MetricsTotals::default();
            imps[k..].iter().for_each(|i| right.add(i));
            let mut whole = MetricsTotals::default();
            imps.iter().for_each(|i| whole.add(i));
            let mut merged = right;
            merged.merge(&left);
            prop_assert!((merged.gmv - whole.gmv).abs() < 1e-9);
            prop_assert!((merged.cost - whole.cost).abs() < 1e-9);
            prop_assert!((merged.clicks - whole.clicks).abs() < 1e-9);
            prop_assert_eq!(merged.impressions, whole.impressions);
        }

        #[test]
        fn histogram_matches_direct_count(
            rows in prop::collection::vec((0.6f64..=1.4, 0.1f64..10.0), 1..300),
        ) {
            let records: Vec<(f64, f64, f64)> = rows.iter().map(|&(r, bid)| (r * bid, bid, 0.4)).collect();
            let h = adjustment_histogram(&records, 9).unwrap();
            prop_assert!((h.proportions.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            // oracle: count ratios against explicit bin edges
            let mut counts = [0usize; 9];
            for &(b_star, bid, _) in &records {
                let ratio = b_star / bid;
                let mut bin = 8;
                for k in 0..9 {
                    let hi = 0.6 + 0.8 * (k + 1) as f64 / 9.0;
                    if ratio < hi - 1e-9 { bin = k; break; }
                }
                counts[bin] += 1;
            }
            // bins may disagree only for ratios within float noise of an edge
            let diff: usize = counts.iter().zip(&h.counts).map(|(a, b)| a.abs_diff(*b)).sum();
            let near_edge = records.iter().filter(|&&(b, bid, _)| {
                let pos = (b / bid - 0.6) / 0.8 * 9.0;
                (pos - pos.round()).abs() < 1e-6
            }).count();
            prop_assert!(diff <= 2 * near_edge);
        }
    }
}
