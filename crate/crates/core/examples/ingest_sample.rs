//! Parse the bundled sample, forward-fill its gaps and flip it to dollars
//! per taka.
//!
//! ```text
//! cargo run --example ingest_sample [path/to/export.csv]
//! ```

use fxcast::dataio::{forward_fill, invert_rates, ohlc_violations, parse_ohlc_csv, Orientation, RateSeries};

fn main() -> fxcast::Result<()> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/data/sample_usdbdt.csv").into());
    let text = std::fs::read_to_string(&path).map_err(|e| fxcast::Error::Format(format!("{path}: {e}")))?;

    let bars = parse_ohlc_csv(&text)?;
    let filled = forward_fill(&bars)?;
    println!(
        "{} rows parsed, {} kept, {} cells forward-filled, {} leading rows dropped, {} OHLC violations",
        bars.len(),
        filled.bars.len(),
        filled.report.filled_cells,
        filled.report.dropped_leading.len(),
        ohlc_violations(&bars).len()
    );

    let raw = RateSeries::from_bars(&filled.bars, Orientation::UsdBdt)?;
    let inverted = invert_rates(&raw)?;
    let (first, last) = (0, raw.len() - 1);
    for i in [first, last] {
        println!(
            "{}  {:>9.4} BDT per USD  {:.6} USD per BDT",
            raw.dates()[i],
            raw.values()[i],
            inverted.values()[i]
        );
    }
    Ok(())
}
