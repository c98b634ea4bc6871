use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::Args;
use ocpc_core::bidlog::{BidLogError, BidLogReader};
use ocpc_core::metrics::{compare, fmt_opt, text_table, Metric, MetricsReport};
use ocpc_core::simulator::{Breakdown, LedgerRow, LedgerSink, ReplayStats, Replayer, SimError};
use ocpc_core::{Strategy, StrategyConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, IoContext};
use crate::hashing::{sha256_hex, HashingReader, HashingWriter};
use crate::settings::{resolve, RunSettings, StrategyArgs};

pub const MANIFEST: &str = "manifest.json";
pub const LEDGER: &str = "ledger.csv";

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Bid log written by `generate`
    #[arg(long)]
    pub log: PathBuf,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub strategy: StrategyArgs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogIdentity {
    /// File name only, so runs from different directories agree.
    pub file: String,
    pub sha256: String,
    pub records: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub log: LogIdentity,
    pub settings: RunSettings,
    pub stats: ReplayStats,
    /// Output file name to its sha256.
    pub outputs: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn read(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).at(&path)?;
        serde_json::from_str(&text).map_err(|e| CliError::data(&path, e))
    }
}

pub fn write_output(dir: &Path, name: &str, contents: &str, hashes: &mut BTreeMap<String, String>) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, contents).at(&path)?;
    hashes.insert(name.to_owned(), sha256_hex(contents.as_bytes()));
    Ok(())
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), CliError> {
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::data(&path, e))?;
    text.push('\n');
    fs::write(&path, text).at(&path)
}

/// Streams ledger rows to CSV, keeping the first write error for later.
struct CsvLedger<W: Write> {
    out: csv::Writer<W>,
    error: Option<csv::Error>,
}

impl<W: Write> LedgerSink for CsvLedger<W> {
    fn record(&mut self, row: &LedgerRow) {
        if self.error.is_none() {
            if let Err(e) = self.out.write_record(row.to_fields()) {
                self.error = Some(e);
            }
        }
    }
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(source) => CliError::Io { path: path.to_owned(), source },
            other => CliError::data(path, format!("{other:?}")),
        }
    } else {
        CliError::data(path, e)
    }
}

fn log_error(path: &Path, e: BidLogError) -> CliError {
    match e {
        BidLogError::Io(source) => CliError::Io { path: path.to_owned(), source },
        other => CliError::data(path, other),
    }
}

/// Replays `log` once under `settings` into `out`.
pub fn run_once(log: &Path, settings: &RunSettings, out: &Path) -> Result<Breakdown, CliError> {
    let file = File::open(log).at(log)?;
    let mut reader = BidLogReader::new(BufReader::new(HashingReader::new(file))).map_err(|e| log_error(log, e))?;
    let header = reader.header().clone();
    let baselines = header.baselines();
    let campaigns = header.campaigns();

    fs::create_dir_all(out).at(out)?;
    let ledger_path = out.join(LEDGER);
    let ledger_file = File::create(&ledger_path).at(&ledger_path)?;
    let mut csv = csv::Writer::from_writer(HashingWriter::new(BufWriter::new(ledger_file)));
    csv.write_record(LedgerRow::FIELDS).map_err(|e| csv_error(&ledger_path, e))?;
    let mut sinks = (CsvLedger { out: csv, error: None }, Breakdown::new(settings.histogram_bins));

    let mut replayer = Replayer::new(settings.config.clone(), &campaigns, &baselines)
        .map_err(|e| CliError::Config(e.to_string()))?;
    for pv in reader.by_ref() {
        let mut pv = pv.map_err(|e| log_error(log, e))?;
        if let Some(n) = settings.slots {
            pv.n_slots = n;
        }
        replayer.step(pv, &mut sinks).map_err(|e| match e {
            SimError::Config(c) => CliError::Config(c.to_string()),
            other => CliError::data(log, other),
        })?;
        if let Some(e) = sinks.0.error.take() {
            return Err(csv_error(&ledger_path, e));
        }
    }
    let log_hash = reader.into_inner().into_inner().finish();
    let (ledger, breakdown) = sinks;
    let ledger_hash = ledger
        .out
        .into_inner()
        .map_err(|e| CliError::Io { path: ledger_path.clone(), source: e.into_error() })?
        .finish()
        .at(&ledger_path)?;

    let stats = replayer.stats();
    if stats.failed > 0 {
        log::warn!("{} page views failed and were skipped", stats.failed);
    }
    let mut outputs = BTreeMap::new();
    outputs.insert(LEDGER.to_owned(), ledger_hash);
    write_output(out, "report.csv", &breakdown.report().to_csv(), &mut outputs)?;
    write_output(out, "histogram.csv", &breakdown.histogram().to_csv(), &mut outputs)?;

    let manifest = RunManifest {
        tool: "ocpc".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        log: LogIdentity {
            file: log.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
            sha256: log_hash,
            records: stats.page_views,
        },
        settings: settings.clone(),
        stats,
        outputs,
    };
    write_json(out, MANIFEST, &manifest)?;
    Ok(breakdown)
}

fn strategy_label(config: &StrategyConfig) -> String {
    format!("Str{}", config.strategy.index())
}

fn summary_row(label: String, r: &MetricsReport) -> Vec<String> {
    std::iter::once(label).chain(Metric::HEADLINE.iter().map(|&m| fmt_opt(r.get(m)))).collect()
}

fn headers(first: &'static str) -> Vec<&'static str> {
    std::iter::once(first).chain(Metric::HEADLINE.iter().map(|m| m.name())).collect()
}

fn ra_dir(ra: f64) -> String {
    format!("ra_{ra:.2}")
}

pub fn run(args: &SimulateArgs) -> Result<(), CliError> {
    let resolved = resolve(&args.strategy)?;
    let settings = resolved.run;
    if !args.log.is_file() {
        return Err(CliError::Io {
            path: args.log.clone(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
        });
    }

    if resolved.sweep_ra.is_empty() {
        let r = run_once(&args.log, &settings, &args.out)?;
        let row = summary_row(strategy_label(&settings.config), &r.report());
        print!("{}", text_table(&headers("strategy"), &[row]));
        return Ok(());
    }

    // adjust-range sweep: one strategy-0 baseline, then one run per value
    let base_settings = RunSettings {
        config: StrategyConfig { strategy: Strategy::Str0, adjust_range_override: None, ..settings.config.clone() },
        ..settings.clone()
    };
    let base = run_once(&args.log, &base_settings, &args.out.join("base"))?;
    let base_report = base.report();

    let mut csv = String::from("ra");
    for m in Metric::HEADLINE {
        csv.push(',');
        csv.push_str(m.name());
    }
    csv.push('\n');
    let mut rows = Vec::new();
    for &ra in &resolved.sweep_ra {
        let s = RunSettings {
            config: StrategyConfig { adjust_range_override: Some(ra), ..settings.config.clone() },
            ..settings.clone()
        };
        let r = run_once(&args.log, &s, &args.out.join(ra_dir(ra)))?;
        let deltas = compare(&base_report, &r.report());
        let pick = |m: Metric| deltas.iter().find(|(k, _)| *k == m).map(|(_, d)| *d).expect("every metric compared");
        csv.push_str(&format!("{ra:.6}"));
        let mut row = vec![format!("{ra:.2}")];
        for m in Metric::HEADLINE {
            csv.push(',');
            csv.push_str(&pick(m).fixed());
            row.push(pick(m).percent());
        }
        csv.push('\n');
        rows.push(row);
    }
    let mut hashes = BTreeMap::new();
    write_output(&args.out, "sweep.csv", &csv, &mut hashes)?;
    let table = text_table(&headers("r_a"), &rows);
    write_output(&args.out, "sweep.txt", &table, &mut hashes)?;
    println!("{} vs Str0", strategy_label(&settings.config));
    print!("{table}");
    Ok(())
}
