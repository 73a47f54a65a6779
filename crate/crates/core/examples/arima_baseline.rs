//! Fit ARIMA(1,1,1) to a simulated series with known coefficients, then
//! produce rolling one-step forecasts over the last fifth.

use fxcast::arima::{fit_css, rolling_forecasts};
use fxcast::stats::MetricsReport;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() -> fxcast::Result<()> {
    let (phi, theta) = (0.6, 0.3);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let mut level = 100.0;
    let (mut w_prev, mut e_prev) = (0.0, 0.0);
    let mut series = vec![level];
    for _ in 0..3000 {
        let e = noise.sample(&mut rng);
        let w = phi * w_prev + e + theta * e_prev;
        level += w;
        series.push(level);
        (w_prev, e_prev) = (w, e);
    }

    let start = series.len() * 4 / 5;
    let fit = fit_css(&series[..start])?;
    let p = fit.params;
    println!("true phi {phi}, theta {theta}");
    println!("fit  phi {:.4}, theta {:.4}, sigma2 {:.4}, CSS {:.2}", p.phi, p.theta, p.sigma2, fit.css);

    let forecast = rolling_forecasts(&p, &series, start)?;
    let m = MetricsReport::for_forecast(&forecast, &series[start..])?;
    println!("{} one-step forecasts: RMSE {:.4}, MAE {:.4}", m.n, m.rmse, m.mae);
    Ok(())
}
