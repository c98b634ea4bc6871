use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use ocpc_core::calibration::gap_curve;
use ocpc_core::metrics::{auc, gauc_summary, LabeledScore, WeightMode};
use serde::Deserialize;

use crate::error::{CliError, IoContext};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WeightArg {
    Impressions,
    Clicks,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// CSV with user_id,position_id,score,label,predicted,realized
    #[arg(long)]
    pub scores: PathBuf,
    /// Group weights for GAUC
    #[arg(long, value_enum, default_value = "impressions")]
    pub weight: WeightArg,
    /// Gap curve output CSV
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub buckets: usize,
}

#[derive(Debug, Deserialize)]
struct ScoreRow {
    user_id: String,
    position_id: String,
    score: f64,
    label: u8,
    predicted: f64,
    realized: f64,
}

pub fn run(args: &EvalArgs) -> Result<(), CliError> {
    if args.buckets == 0 {
        return Err(CliError::Config("--buckets must be at least 1".into()));
    }
    let path = &args.scores;
    let file = File::open(path).at(path)?;
    let mut reader = csv::Reader::from_reader(BufReader::new(file));
    let mut samples = Vec::new();
    let mut gaps = Vec::new();
    for (i, row) in reader.deserialize::<ScoreRow>().enumerate() {
        let row = row.map_err(|e| CliError::data(path, e))?;
        if row.label > 1 {
            return Err(CliError::data(path, format!("row {}: label must be 0 or 1", i + 1)));
        }
        samples.push(LabeledScore {
            user_id: row.user_id,
            position_id: row.position_id,
            score: row.score,
            label: row.label == 1,
        });
        gaps.push((row.predicted, row.realized));
    }

    let mode = match args.weight {
        WeightArg::Impressions => WeightMode::Impressions,
        WeightArg::Clicks => WeightMode::Clicks,
    };
    let overall = auc(&samples)?;
    let g = gauc_summary(&samples, mode)?;
    let curve = gap_curve(&gaps, args.buckets).map_err(|e| CliError::data(path, e))?;
    std::fs::write(&args.out, curve.to_csv()).at(&args.out)?;

    println!("samples: {}", samples.len());
    println!("AUC: {overall:.6}");
    println!("GAUC: {:.6} ({} weights)", g.gauc, format!("{:?}", args.weight).to_lowercase());
    println!("groups: {} used, {} removed with a single label class", g.groups_used, g.groups_removed);
    Ok(())
}
