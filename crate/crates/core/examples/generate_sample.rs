//! Regenerates `data/sample_usdbdt.csv`, the synthetic USD/BDT-like series
//! bundled with the crate.
//!
//! The rate follows a managed float: a central parity that crawls, devalues
//! in steps through 2022 and crawls again, plus a deviation from parity that
//! the central bank leans against once it leaves a band. About 1% of rows are
//! published as `null`, like gaps in a vendor download.
//!
//! ```text
//! cargo run --example generate_sample -- crates/core/data/sample_usdbdt.csv
//! ```

use chrono::{Datelike, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const SEED: u64 = 20180101;
/// Half-width of the band as a fraction of parity.
const BAND: f64 = 0.008;
/// Mean daily drift across the band, in half-widths.
const CRAWL: f64 = 1.0 / 6.0;
const RESET_NOISE: f64 = 0.05;

/// Taka per dollar parity on a given date: piecewise linear between anchors.
fn parity(date: NaiveDate) -> f64 {
    const ANCHORS: [(i32, u32, u32, f64); 10] = [
        (2018, 1, 1, 82.9),
        (2018, 12, 31, 83.9),
        (2019, 12, 31, 84.9),
        (2021, 6, 30, 84.8),
        (2021, 12, 31, 85.8),
        (2022, 3, 31, 86.2),
        (2022, 6, 30, 95.0),
        (2022, 8, 31, 110.5),
        (2022, 11, 30, 106.0),
        (2023, 12, 31, 109.0),
    ];
    let t = |(y, m, d, _): (i32, u32, u32, f64)| NaiveDate::from_ymd_opt(y, m, d).unwrap();
    for pair in ANCHORS.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if date <= t(b) {
            let span = (t(b) - t(a)).num_days() as f64;
            let pos = ((date - t(a)).num_days() as f64 / span).clamp(0.0, 1.0);
            return a.3 + (b.3 - a.3) * pos;
        }
    }
    ANCHORS[ANCHORS.len() - 1].3
}

fn business_days(from: NaiveDate, to: NaiveDate) -> Vec<NaiveDate> {
    from.iter_days()
        .take_while(|d| *d <= to)
        .filter(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun))
        .collect()
}

fn main() {
    let path = std::env::args().nth(1).unwrap_or_else(|| "sample_usdbdt.csv".into());
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let shock = Normal::new(0.0, 1.0).unwrap();

    let days = business_days(
        NaiveDate::from_ymd_opt(2018, 1, 1).unwrap(),
        NaiveDate::from_ymd_opt(2023, 12, 29).unwrap(),
    );

    // Position inside the band, from -1 (strong edge) to +1 (weak edge).
    // The taka crawls weaker each day; past the weak edge the central bank
    // resets it to the strong edge.
    let mut u: f64 = 0.0;
    let mut out = String::from("Date,Open,High,Low,Close,Adj Close,Volume\n");
    let mut prev_close: Option<f64> = None;
    for (k, date) in days.iter().enumerate() {
        u = if u > 1.0 {
            -1.0 + RESET_NOISE * shock.sample(&mut rng)
        } else {
            u + CRAWL * (1.0 + 0.3 * shock.sample(&mut rng))
        };
        let close = parity(*date) * (1.0 + BAND * u);
        let open = prev_close.unwrap_or(close);
        let wick = |rng: &mut ChaCha8Rng| 1.0 + 0.0005 * shock.sample(rng).abs();
        let high = open.max(close) * wick(&mut rng);
        let low = open.min(close) / wick(&mut rng);
        prev_close = Some(close);
        if k > 0 && rng.random::<f64>() < 0.01 {
            out.push_str(&format!("{date},null,null,null,null,null,null\n"));
        } else {
            out.push_str(&format!(
                "{date},{open:.6},{high:.6},{low:.6},{close:.6},{close:.6},0\n"
            ));
        }
    }
    std::fs::write(&path, out).expect("write sample");
    eprintln!("wrote {} rows to {path}", days.len());
}
