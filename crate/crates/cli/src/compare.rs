use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use clap::Args;
use ocpc_core::metrics::{self, compare, fmt_opt, text_table, Metric, OutcomeClass};
use ocpc_core::simulator::{
    per_campaign_report, per_category_report, Breakdown, LedgerRow, LedgerSink, DEFAULT_MIN_CONVERSIONS,
};
use serde::Serialize;

use crate::error::{CliError, IoContext};
use crate::hashing::sha256_hex;
use crate::simulate::{write_json, write_output, RunManifest, LEDGER, MANIFEST};

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Baseline run directory
    #[arg(long)]
    pub base: PathBuf,
    /// Test run directory
    #[arg(long)]
    pub test: PathBuf,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
    /// Campaigns below this many expected base-run conversions are left
    /// out of the per-campaign breakdown
    #[arg(long, default_value_t = DEFAULT_MIN_CONVERSIONS)]
    pub min_conversions: f64,
}

#[derive(Debug, Serialize)]
struct RunRef {
    manifest_sha256: String,
    strategy: u8,
}

#[derive(Debug, Serialize)]
struct CompareManifest {
    tool: String,
    version: String,
    log_sha256: String,
    base: RunRef,
    test: RunRef,
    min_conversions: f64,
    outputs: BTreeMap<String, String>,
}

fn load_ledger(dir: &Path, n_bins: usize) -> Result<Breakdown, CliError> {
    let path = dir.join(LEDGER);
    let file = File::open(&path).at(&path)?;
    let mut reader = csv::Reader::from_reader(BufReader::new(file));
    let mut breakdown = Breakdown::new(n_bins);
    for record in reader.records() {
        let record = record.map_err(|e| CliError::data(&path, e))?;
        let fields: Vec<&str> = record.iter().collect();
        let row = LedgerRow::from_fields(&fields).map_err(|e| CliError::data(&path, e))?;
        breakdown.record(&row);
    }
    Ok(breakdown)
}

fn class_names() -> [OutcomeClass; 3] {
    [OutcomeClass::Improved, OutcomeClass::QuantityQualityExchange, OutcomeClass::Other]
}

pub fn run(args: &CompareArgs) -> Result<(), CliError> {
    if args.min_conversions.is_nan() || args.min_conversions < 0.0 {
        return Err(CliError::Config("--min-conversions must be non-negative".into()));
    }
    let base_manifest = RunManifest::read(&args.base)?;
    let test_manifest = RunManifest::read(&args.test)?;
    if base_manifest.log.sha256 != test_manifest.log.sha256 {
        return Err(CliError::ManifestMismatch {
            base: base_manifest.log.sha256,
            test: test_manifest.log.sha256,
        });
    }
    let base = load_ledger(&args.base, base_manifest.settings.histogram_bins)?;
    let test = load_ledger(&args.test, test_manifest.settings.histogram_bins)?;
    let (base_report, test_report) = (base.report(), test.report());
    let deltas = compare(&base_report, &test_report);

    fs::create_dir_all(&args.out).at(&args.out)?;
    let mut outputs = BTreeMap::new();

    let mut csv = String::from("metric,base,test,delta\n");
    for (m, d) in &deltas {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            m.name(),
            fmt_opt(base_report.get(*m)),
            fmt_opt(test_report.get(*m)),
            d.fixed()
        ));
    }
    write_output(&args.out, "deltas.csv", &csv, &mut outputs)?;

    let campaigns = per_campaign_report(&base.by_campaign, &test.by_campaign, args.min_conversions);
    let mut csv = String::from("campaign_id,base_pv,test_pv,gmv,cost,pv,gpm,roi,class\n");
    for r in &campaigns.rows {
        csv.push_str(&format!(
            "{},{:.6},{:.6},{},{},{},{},{},{}\n",
            r.campaign_id,
            r.base.totals.impressions,
            r.test.totals.impressions,
            r.gmv.fixed(),
            r.cost.fixed(),
            r.pv.fixed(),
            r.gpm.fixed(),
            r.roi.fixed(),
            r.class.name()
        ));
    }
    write_output(&args.out, "campaigns.csv", &csv, &mut outputs)?;

    let categories = per_category_report(&base.by_category, &test.by_category);
    let mut csv = String::from("category_id,base_pv,test_pv,base_share,test_share,variation,gpm,roi,class\n");
    for r in &categories.rows {
        csv.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.6},{},{},{},{}\n",
            r.category_id,
            r.base_pv,
            r.test_pv,
            r.base_share,
            r.test_share,
            r.variation.fixed(),
            r.gpm.fixed(),
            r.roi.fixed(),
            r.class.name()
        ));
    }
    write_output(&args.out, "categories.csv", &csv, &mut outputs)?;

    let mut csv = String::from("class,campaigns,categories_by_count,categories_by_pv\n");
    let mut class_rows = Vec::new();
    for c in class_names() {
        let cells = [campaigns.proportions[&c], categories.by_count[&c], categories.by_pv[&c]];
        csv.push_str(&format!("{},{:.6},{:.6},{:.6}\n", c.name(), cells[0], cells[1], cells[2]));
        class_rows.push(
            std::iter::once(c.name().to_owned()).chain(cells.iter().map(|p| format!("{:.1}%", 100.0 * p))).collect(),
        );
    }
    csv.push_str(&format!(
        "gpm_improved,NA,{:.6},{:.6}\n",
        categories.gpm_improved_by_count, categories.gpm_improved_by_pv
    ));
    class_rows.push(vec![
        "gpm_improved".to_owned(),
        "NA".to_owned(),
        format!("{:.1}%", 100.0 * categories.gpm_improved_by_count),
        format!("{:.1}%", 100.0 * categories.gpm_improved_by_pv),
    ]);
    write_output(&args.out, "classes.csv", &csv, &mut outputs)?;

    let label = |m: &RunManifest| format!("Str{}", m.settings.config.strategy.index());
    let headline: Vec<String> = std::iter::once(format!("{} vs {}", label(&test_manifest), label(&base_manifest)))
        .chain(
            Metric::HEADLINE
                .iter()
                .map(|m| deltas.iter().find(|(k, _)| k == m).map(|(_, d)| d.percent()).unwrap_or_default()),
        )
        .collect();
    let head: Vec<&str> = std::iter::once("").chain(Metric::HEADLINE.iter().map(|m| m.name())).collect();
    let mut text = text_table(&head, &[headline]);
    text.push('\n');
    text.push_str(&text_table(&["outcome", "campaigns", "categories", "categories (PV)"], &class_rows));
    text.push_str(&format!(
        "\n{} campaigns compared, {} below {} expected conversions\n",
        campaigns.rows.len(),
        campaigns.filtered_out,
        metrics::fmt_opt(Some(args.min_conversions))
    ));
    write_output(&args.out, "summary.txt", &text, &mut outputs)?;
    print!("{text}");

    let manifest_hash = |dir: &Path| -> Result<String, CliError> {
        let path = dir.join(MANIFEST);
        Ok(sha256_hex(&fs::read(&path).at(&path)?))
    };
    let manifest = CompareManifest {
        tool: "ocpc".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        log_sha256: base_manifest.log.sha256.clone(),
        base: RunRef { manifest_sha256: manifest_hash(&args.base)?, strategy: base_manifest.settings.config.strategy.index() },
        test: RunRef { manifest_sha256: manifest_hash(&args.test)?, strategy: test_manifest.settings.config.strategy.index() },
        min_conversions: args.min_conversions,
        outputs,
    };
    write_json(&args.out, MANIFEST, &manifest)
}
