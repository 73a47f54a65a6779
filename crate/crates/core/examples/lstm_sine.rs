//! Train the LSTM at its default settings on a clean sine wave and show the
//! loss curve and a few predictions.

use fxcast::lstm::{predict_scaled, train, LstmConfig};
use fxcast::preprocess::sliding_windows;

fn main() -> fxcast::Result<()> {
    let series: Vec<f64> = (0..500)
        .map(|t| 0.5 + 0.5 * (2.0 * std::f64::consts::PI * t as f64 / 50.0).sin())
        .collect();
    let config = LstmConfig::default();
    let data = sliding_windows(&series, config.window_len)?;

    let (params, history) = train(&data, &config)?;
    for (epoch, loss) in history.epoch_loss.iter().enumerate().step_by(10) {
        println!("epoch {:>2}  loss {loss:.3e}", epoch + 1);
    }

    let preds = predict_scaled(&params, &data, &config)?;
    println!("\n  t   target  predicted");
    for i in (0..preds.len()).step_by(90) {
        println!("{:>3}  {:.4}   {:.4}", data.origin_indices[i], data.targets[i], preds[i]);
    }
    Ok(())
}
