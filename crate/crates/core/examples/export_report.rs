//! Plans the desk instance and writes the report tables as CSV.
//!
//!     cargo run --release --example export_report -- out/desk

use std::path::PathBuf;

use pevplan::benders::{run_prepared, BendersConfig};
use pevplan::io::{build_report, desk_instance, write_report_csv};
use pevplan::model::PreparedModel;

fn main() -> pevplan::Result<()> {
    let dir: PathBuf = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("pevplan-desk-report"));
    let inst = desk_instance()?;
    let prep = PreparedModel::new(&inst)?;
    let (x, state) = run_prepared(&inst, &prep, &BendersConfig::default())?;
    let mut report = build_report(&inst, &prep, &x, 2)?;
    report.history = state.history;
    write_report_csv(&report, &dir)?;

    println!("tables in {}", dir.display());
    for entry in std::fs::read_dir(&dir)? {
        let path = entry?.path();
        let rows = std::fs::read_to_string(&path)?.lines().count().saturating_sub(1);
        println!("  {:<16} {rows} rows", path.file_name().unwrap().to_string_lossy());
    }
    let hot = report.congestion.iter().max_by(|a, b| a.loading_pct.total_cmp(&b.loading_pct)).unwrap();
    println!("most loaded branch {} at {:.1}% ({}, block {})", hot.branch, hot.loading_pct, hot.scenario, hot.hour);
    Ok(())
}
