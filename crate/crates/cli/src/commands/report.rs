//! `rfidlab report`: merge sweep reports into one CSV + plain-text summary.

use crate::errors::{CliError, CliResult};
use clap::Args;
use rfidlab_core::studies::SweepReport;
use std::path::PathBuf;

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Sweep-report JSON files to merge (same schema)
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: &ReportArgs) -> CliResult<()> {
    let mut reports = Vec::with_capacity(args.inputs.len());
    for path in &args.inputs {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        reports.push(
            SweepReport::from_json(text.trim())
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?,
        );
    }
    let (merged, digest_conflict) = SweepReport::merge(&reports).map_err(|e| CliError::Runtime(e.to_string()))?;

    std::fs::create_dir_all(&args.out)?;
    let mut text = String::new();
    if digest_conflict {
        text.push_str("WARNING: merged reports carry conflicting config digests\n");
    }
    text.push_str(&merged.to_text());
    std::fs::write(args.out.join("merged.txt"), &text)?;

    let mut csv = String::new();
    if digest_conflict {
        csv.push_str("# WARNING: conflicting config digests\n");
    }
    csv.push_str(&merged.to_csv());
    std::fs::write(args.out.join("merged.csv"), csv)?;

    println!(
        "merged {} reports into {} rows{}",
        reports.len(),
        merged.rows.len(),
        if digest_conflict { " (digest conflict flagged)" } else { "" }
    );
    Ok(())
}
