//! Strategy settings for `simulate`: an optional JSON file, overridden
//! field by field by command-line flags.

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use ocpc_core::objectives::{ObjectiveSpec, Signal};
use ocpc_core::simulator::DEFAULT_HISTOGRAM_BINS;
use ocpc_core::{Strategy, StrategyConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, IoContext};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveArg {
    F1,
    F2,
    SigmaGmv,
    SigmaCvr,
    SigmaAsr,
}

#[derive(Debug, Clone, Default, Args)]
pub struct StrategyArgs {
    /// JSON file with any of the settings below; flags take precedence
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// 0 fixed bids, 1 sigma bid rule, 2 optimized bids, 3 quality-weighted sort
    #[arg(long, value_parser = clap::value_parser!(u8).range(0..=3))]
    pub strategy: Option<u8>,
    /// Ranking objective for strategy 2
    #[arg(long, value_enum)]
    pub objective: Option<ObjectiveArg>,
    /// Revenue weight of the f2 objective
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Sigma exponent (strategy 1 bid rule and sigma objectives)
    #[arg(long)]
    pub w: Option<f64>,
    /// Override every campaign's adjust range
    #[arg(long)]
    pub ra: Option<f64>,
    /// pCVR calibration threshold
    #[arg(long)]
    pub tc: Option<f64>,
    /// Use raw pCVRs
    #[arg(long, conflicts_with = "tc")]
    pub no_calibration: bool,
    /// Override the slot count of every page view
    #[arg(long)]
    pub slots: Option<usize>,
    /// Reserve rank score
    #[arg(long)]
    pub reserve: Option<f64>,
    /// Exclude campaigns whose budget is spent (default)
    #[arg(long, overrides_with = "no_budget")]
    pub budget: bool,
    #[arg(long, overrides_with = "budget")]
    pub no_budget: bool,
    /// Run one replay per adjust range plus a strategy-0 baseline
    #[arg(long, value_delimiter = ',')]
    pub sweep_ra: Vec<f64>,
    /// Bins of the bid adjustment histogram
    #[arg(long)]
    pub bins: Option<usize>,
}

/// The file form of [`StrategyArgs`].
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct StrategyFile {
    strategy: Option<u8>,
    objective: Option<ObjectiveArg>,
    alpha: Option<f64>,
    w: Option<f64>,
    ra: Option<f64>,
    tc: Option<f64>,
    calibration: Option<bool>,
    slots: Option<usize>,
    reserve: Option<f64>,
    budget: Option<bool>,
    sweep_ra: Option<Vec<f64>>,
    bins: Option<usize>,
}

/// Everything that determines a replay besides the log itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub config: StrategyConfig,
    pub slots: Option<usize>,
    pub histogram_bins: usize,
}

pub struct Resolved {
    pub run: RunSettings,
    pub sweep_ra: Vec<f64>,
}

pub fn resolve(args: &StrategyArgs) -> Result<Resolved, CliError> {
    let file = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).at(path)?;
            serde_json::from_str::<StrategyFile>(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        None => StrategyFile::default(),
    };

    let strategy = args.strategy.or(file.strategy).unwrap_or(2);
    let strategy = Strategy::from_index(strategy)
        .ok_or_else(|| CliError::Config(format!("unknown strategy {strategy}")))?;
    let w = args.w.or(file.w);
    let alpha = args.alpha.or(file.alpha).unwrap_or(1.0);
    let sigma_w = w.unwrap_or(6.0);
    let objective = match args.objective.or(file.objective).unwrap_or(ObjectiveArg::SigmaGmv) {
        ObjectiveArg::F1 => ObjectiveSpec::F1,
        ObjectiveArg::F2 => ObjectiveSpec::F2 { alpha },
        ObjectiveArg::SigmaGmv => ObjectiveSpec::SigmaComposite { signal: Signal::Gmv, w: sigma_w },
        ObjectiveArg::SigmaCvr => ObjectiveSpec::SigmaComposite { signal: Signal::Cvr, w: sigma_w },
        ObjectiveArg::SigmaAsr => ObjectiveSpec::SigmaComposite { signal: Signal::Asr, w: sigma_w },
    };
    let calibrate = !args.no_calibration && file.calibration.unwrap_or(true);
    let tc = args.tc.or(file.tc).unwrap_or(ocpc_core::calibration::DEFAULT_THRESHOLD);
    let enforce_budget = if args.no_budget {
        false
    } else if args.budget {
        true
    } else {
        file.budget.unwrap_or(true)
    };

    let config = StrategyConfig {
        strategy,
        objective,
        w: w.unwrap_or(2.0),
        calibration_threshold: (calibrate || args.tc.is_some()).then_some(tc),
        reserve_score: args.reserve.or(file.reserve).unwrap_or(0.0),
        enforce_budget,
        adjust_range_override: args.ra.or(file.ra),
    };
    config.validate().map_err(|e| CliError::Config(e.to_string()))?;

    let slots = args.slots.or(file.slots);
    if slots == Some(0) {
        return Err(CliError::Config("--slots must be at least 1".into()));
    }
    let histogram_bins = args.bins.or(file.bins).unwrap_or(DEFAULT_HISTOGRAM_BINS);
    if histogram_bins == 0 {
        return Err(CliError::Config("--bins must be at least 1".into()));
    }
    let sweep_ra = if args.sweep_ra.is_empty() { file.sweep_ra.unwrap_or_default() } else { args.sweep_ra.clone() };
    if let Some(r) = sweep_ra.iter().find(|r| !(0.0..1.0).contains(*r)) {
        return Err(CliError::Config(format!("sweep adjust range must be in [0, 1), got {r}")));
    }

    Ok(Resolved { run: RunSettings { config, slots, histogram_bins }, sweep_ra })
}
