//! Python bindings: candidates, single auctions, the bid-bound and
//! calibration primitives, ranking metrics, and log generation/replay.

use std::fs::File;
use std::io::{BufReader, BufWriter};

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use ocpc_core::auction::{run_ocpc, NoBaselines};
use ocpc_core::bidlog::BidLogReader;
use ocpc_core::datagen::{self, GenSpec};
use ocpc_core::metrics::{self, LabeledScore, Metric, WeightMode};
use ocpc_core::objectives::{ObjectiveSpec, Signal};
use ocpc_core::simulator::{Breakdown, Replayer};
use ocpc_core::{bidopt, calibration, AdCandidate, PvRequest, Strategy, StrategyConfig};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// One ad in an auction.
#[pyclass(name = "Candidate", module = "ocpc")]
struct PyCandidate {
    inner: AdCandidate,
}

#[pymethods]
impl PyCandidate {
    #[new]
    #[pyo3(signature = (
        campaign_id, bid, pctr, pcvr=0.0, ppb=0.0, *, expected_cvr=None, adjust_range=0.0,
        pasr=None, opt_authorized=true, category_id="default"
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        campaign_id: &str,
        bid: f64,
        pctr: f64,
        pcvr: f64,
        ppb: f64,
        expected_cvr: Option<f64>,
        adjust_range: f64,
        pasr: Option<f64>,
        opt_authorized: bool,
        category_id: &str,
    ) -> PyResult<Self> {
        let inner = AdCandidate {
            category_id: category_id.into(),
            pcvr,
            ppb,
            expected_cvr,
            adjust_range,
            pasr,
            opt_authorized,
            ..AdCandidate::new(campaign_id, bid, pctr)
        };
        inner.validate().map_err(value_err)?;
        Ok(PyCandidate { inner })
    }

    #[getter]
    fn campaign_id(&self) -> String {
        self.inner.campaign_id.0.clone()
    }

    #[getter]
    fn bid(&self) -> f64 {
        self.inner.bid
    }

    #[getter]
    fn pctr(&self) -> f64 {
        self.inner.pctr
    }

    #[getter]
    fn pcvr(&self) -> f64 {
        self.inner.pcvr
    }

    #[getter]
    fn ppb(&self) -> f64 {
        self.inner.ppb
    }

    #[getter]
    fn expected_cvr(&self) -> Option<f64> {
        self.inner.expected_cvr
    }

    #[getter]
    fn adjust_range(&self) -> f64 {
        self.inner.adjust_range
    }

    fn ecpm(&self) -> f64 {
        self.inner.ecpm()
    }

    fn __repr__(&self) -> String {
        let c = &self.inner;
        format!("Candidate({:?}, bid={}, pctr={}, pcvr={}, ppb={})", c.campaign_id.0, c.bid, c.pctr, c.pcvr, c.ppb)
    }
}

fn parse_objective(name: &str, alpha: f64, w: f64) -> PyResult<ObjectiveSpec> {
    Ok(match name {
        "f1" => ObjectiveSpec::F1,
        "f2" => ObjectiveSpec::F2 { alpha },
        "sigma-gmv" => ObjectiveSpec::SigmaComposite { signal: Signal::Gmv, w },
        "sigma-cvr" => ObjectiveSpec::SigmaComposite { signal: Signal::Cvr, w },
        "sigma-asr" => ObjectiveSpec::SigmaComposite { signal: Signal::Asr, w },
        other => return Err(PyValueError::new_err(format!("unknown objective {other:?}"))),
    })
}

#[allow(clippy::too_many_arguments)]
fn build_config(
    strategy: u8,
    objective: &str,
    alpha: f64,
    w: Option<f64>,
    tc: Option<f64>,
    reserve: f64,
    ra: Option<f64>,
    budget: bool,
) -> PyResult<StrategyConfig> {
    let strategy =
        Strategy::from_index(strategy).ok_or_else(|| PyValueError::new_err(format!("unknown strategy {strategy}")))?;
    let config = StrategyConfig {
        strategy,
        objective: parse_objective(objective, alpha, w.unwrap_or(6.0))?,
        w: w.unwrap_or(2.0),
        calibration_threshold: tc,
        reserve_score: reserve,
        enforce_budget: budget,
        adjust_range_override: ra,
    };
    config.validate().map_err(value_err)?;
    Ok(config)
}

/// Runs one page-view auction. Returns `{"winners": [...], "losers": [...]}`
/// with one dict per ad in rank order.
#[pyfunction]
#[pyo3(signature = (
    candidates, n_slots, *, strategy=2, objective="sigma-gmv", alpha=1.0, w=None,
    tc=Some(calibration::DEFAULT_THRESHOLD), reserve=0.0
))]
#[allow(clippy::too_many_arguments)]
fn run_auction<'py>(
    py: Python<'py>,
    candidates: Vec<PyRef<'py, PyCandidate>>,
    n_slots: usize,
    strategy: u8,
    objective: &str,
    alpha: f64,
    w: Option<f64>,
    tc: Option<f64>,
    reserve: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let config = build_config(strategy, objective, alpha, w, tc, reserve, None, false)?;
    let request = PvRequest {
        pv_id: "pv".into(),
        timestamp: 0,
        user_id: String::new(),
        position_id: String::new(),
        n_slots,
        candidates: candidates.iter().map(|c| c.inner.clone()).collect(),
    };
    let a = run_ocpc(request, &config, &NoBaselines).map_err(value_err)?;
    let placement = |p: &ocpc_core::Placement| -> PyResult<Bound<'py, PyDict>> {
        let d = PyDict::new(py);
        let c = &a.request.candidates[p.candidate];
        d.set_item("campaign_id", &c.campaign_id.0)?;
        d.set_item("index", p.candidate)?;
        d.set_item("b_star", p.b_star)?;
        d.set_item("score", p.final_score)?;
        d.set_item("price", p.price_per_click)?;
        d.set_item("ratio", a.ratios[p.candidate])?;
        Ok(d)
    };
    let out = PyDict::new(py);
    out.set_item("winners", a.outcome.winners.iter().map(placement).collect::<PyResult<Vec<_>>>()?)?;
    out.set_item("losers", a.outcome.losers.iter().map(placement).collect::<PyResult<Vec<_>>>()?)?;
    Ok(out)
}

/// Log-compresses predicted conversion rates above `tc`.
#[pyfunction]
#[pyo3(signature = (p, tc=calibration::DEFAULT_THRESHOLD))]
fn calibrate_cvr(p: f64, tc: f64) -> PyResult<f64> {
    calibration::calibrate_cvr(p, tc).map_err(value_err)
}

/// Trimmed mean of a conversion-rate history.
#[pyfunction]
#[pyo3(signature = (values, trim=calibration::DEFAULT_TRIM))]
fn trimmed_mean(values: Vec<f64>, trim: f64) -> PyResult<f64> {
    calibration::trimmed_mean(&values, trim).map_err(value_err)
}

/// `(lower_bid, upper_bid, lower_score, upper_score)` for one ad.
#[pyfunction]
#[pyo3(signature = (bid, pctr, ratio, adjust_range, authorized=true))]
fn bid_bounds(bid: f64, pctr: f64, ratio: f64, adjust_range: f64, authorized: bool) -> PyResult<(f64, f64, f64, f64)> {
    let b = bidopt::bid_bounds(bid, pctr, ratio, adjust_range, authorized).map_err(value_err)?;
    Ok((b.lower_bid, b.upper_bid, b.lower_score, b.upper_score))
}

#[pyfunction]
fn sigma(x: f64, w: f64) -> PyResult<f64> {
    bidopt::sigma(x, w).map_err(value_err)
}

#[pyfunction]
fn auc(scores: Vec<f64>, labels: Vec<bool>) -> PyResult<f64> {
    if scores.len() != labels.len() {
        return Err(PyValueError::new_err("scores and labels differ in length"));
    }
    let samples: Vec<(f64, bool)> = scores.into_iter().zip(labels).collect();
    metrics::auc_scores(&samples).map_err(value_err)
}

/// Group AUC over (user, position) groups.
#[pyfunction]
#[pyo3(signature = (users, positions, scores, labels, weight="impressions"))]
fn gauc(users: Vec<String>, positions: Vec<String>, scores: Vec<f64>, labels: Vec<bool>, weight: &str) -> PyResult<f64> {
    let n = users.len();
    if positions.len() != n || scores.len() != n || labels.len() != n {
        return Err(PyValueError::new_err("inputs differ in length"));
    }
    let mode = match weight {
        "impressions" => WeightMode::Impressions,
        "clicks" => WeightMode::Clicks,
        other => return Err(PyValueError::new_err(format!("unknown weight mode {other:?}"))),
    };
    let samples: Vec<LabeledScore> = users
        .into_iter()
        .zip(positions)
        .zip(scores.into_iter().zip(labels))
        .map(|((user_id, position_id), (score, label))| LabeledScore { user_id, position_id, score, label })
        .collect();
    metrics::gauc(&samples, mode).map_err(value_err)
}

/// Writes a synthetic bid log; `spec_json` overrides the default spec.
/// Returns the number of page views written.
#[pyfunction]
#[pyo3(signature = (path, *, spec_json=None, n_pv=None, seed=None))]
fn generate_log(path: &str, spec_json: Option<&str>, n_pv: Option<usize>, seed: Option<u64>) -> PyResult<usize> {
    let mut spec = match spec_json {
        Some(s) => serde_json::from_str::<GenSpec>(s).map_err(value_err)?,
        None => GenSpec::default(),
    };
    if let Some(n) = n_pv {
        spec.n_pv = n;
    }
    if let Some(s) = seed {
        spec.seed = s;
    }
    let file = File::create(path).map_err(|e| PyIOError::new_err(format!("{path}: {e}")))?;
    datagen::generate(&spec, BufWriter::new(file)).map_err(value_err)
}

/// Replays a bid log and returns its headline metrics by name.
#[pyfunction]
#[pyo3(signature = (
    path, *, strategy=2, objective="sigma-gmv", alpha=1.0, w=None,
    tc=Some(calibration::DEFAULT_THRESHOLD), reserve=0.0, ra=None, budget=true
))]
#[allow(clippy::too_many_arguments)]
fn simulate_log<'py>(
    py: Python<'py>,
    path: &str,
    strategy: u8,
    objective: &str,
    alpha: f64,
    w: Option<f64>,
    tc: Option<f64>,
    reserve: f64,
    ra: Option<f64>,
    budget: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let config = build_config(strategy, objective, alpha, w, tc, reserve, ra, budget)?;
    let file = File::open(path).map_err(|e| PyIOError::new_err(format!("{path}: {e}")))?;
    let reader = BidLogReader::new(BufReader::new(file)).map_err(value_err)?;
    let header = reader.header().clone();
    let baselines = header.baselines();
    let mut replayer = Replayer::new(config, &header.campaigns(), &baselines).map_err(value_err)?;
    let mut breakdown = Breakdown::default();
    for pv in reader {
        replayer.step(pv.map_err(value_err)?, &mut breakdown).map_err(value_err)?;
    }
    let report = breakdown.report();
    let out = PyDict::new(py);
    for m in Metric::ALL {
        out.set_item(m.name(), report.get(m))?;
    }
    Ok(out)
}

#[pymodule]
fn ocpc(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCandidate>()?;
    m.add_function(wrap_pyfunction!(run_auction, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate_cvr, m)?)?;
    m.add_function(wrap_pyfunction!(trimmed_mean, m)?)?;
    m.add_function(wrap_pyfunction!(bid_bounds, m)?)?;
    m.add_function(wrap_pyfunction!(sigma, m)?)?;
    m.add_function(wrap_pyfunction!(auc, m)?)?;
    m.add_function(wrap_pyfunction!(gauc, m)?)?;
    m.add_function(wrap_pyfunction!(generate_log, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_log, m)?)?;
    Ok(())
}
