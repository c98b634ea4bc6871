use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use clap::Args;
use ocpc_core::bidlog::BidLogWriter;
use ocpc_core::datagen::{GenError, GenSpec, Generator};

use crate::error::{CliError, IoContext};
use crate::hashing::HashingWriter;

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Generator spec (JSON); the desk-scale defaults when omitted
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Output bid log
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n_pv: Option<usize>,
}

pub fn load_spec(args: &GenerateArgs) -> Result<GenSpec, CliError> {
    let mut spec = match &args.spec {
        Some(path) => {
            let text = std::fs::read_to_string(path).at(path)?;
            serde_json::from_str(&text).map_err(|e| CliError::InvalidSpec(format!("{}: {e}", path.display())))?
        }
        None => GenSpec::default(),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if let Some(n) = args.n_pv {
        spec.n_pv = n;
    }
    spec.validate().map_err(|e| CliError::InvalidSpec(e.to_string()))?;
    Ok(spec)
}

pub fn run(args: &GenerateArgs) -> Result<(), CliError> {
    let spec = load_spec(args)?;
    let gen = Generator::new(spec)?;
    let path = &args.out;
    let file = File::create(path).at(path)?;
    let out = HashingWriter::new(BufWriter::new(file));
    let log_err = |e| match e {
        ocpc_core::bidlog::BidLogError::Io(source) => CliError::Io { path: path.clone(), source },
        other => CliError::data(path, other),
    };
    let mut writer = BidLogWriter::new(out, &gen.header()).map_err(log_err)?;
    for pv in gen {
        writer.write(&pv).map_err(log_err)?;
    }
    let records = writer.records();
    let sha256 = writer.finish().map_err(log_err)?.finish().at(path)?;
    log::info!("wrote {records} page views to {}", path.display());
    println!("records: {records}");
    println!("sha256: {sha256}");
    Ok(())
}

impl From<GenError> for CliError {
    fn from(e: GenError) -> Self {
        CliError::InvalidSpec(e.to_string())
    }
}
