//! Next-day direction on the sample series with exponential-loss boosting.
//!
//! Features are the previous 50 daily returns; the model stops early once
//! the held-out tail of the training block stops improving.

use fxcast::dataio::{forward_fill, parse_ohlc_csv, Orientation, RateSeries};
use fxcast::gboost::{predict_label, train, GbcConfig};
use fxcast::preprocess::{chrono_split, daily_returns, labeled_windows};
use fxcast::stats::label_accuracy;

fn main() -> fxcast::Result<()> {
    let text = include_str!("../data/sample_usdbdt.csv");
    let bars = forward_fill(&parse_ohlc_csv(text)?)?.bars;
    let series = RateSeries::from_bars(&bars, Orientation::UsdBdt)?;
    let returns = daily_returns(series.values())?;

    let data = labeled_windows(&returns, 50)?;
    let split = chrono_split(data.len(), 0.8)?;
    let (tr, te) = (data.slice(split.train), data.slice(split.test));

    let config = GbcConfig {
        n_estimators: 500,
        ..GbcConfig::default()
    };
    let model = train(&tr.features, &tr.labels, &config)?;
    let preds = predict_label(&model, &te.features, Some(50))?;
    let up = te.labels.iter().filter(|&&l| l == 1).count();
    println!("stages used: {} of {}", model.n_stages_used, config.n_estimators);
    println!(
        "test hit rate: {:.2}% over {} days ({:.1}% up days)",
        100.0 * label_accuracy(&preds, &te.labels)?,
        te.len(),
        100.0 * up as f64 / te.len() as f64
    );
    Ok(())
}
