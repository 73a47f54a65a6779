//! Replays the last five trades of a published ledger from the equity held
//! before them, then prints the ledger CSV.

use fxcast::backtest::{ledger_csv, replay, summarize, BacktestConfig};

fn main() -> fxcast::Result<()> {
    let rets = [18.2232481296, 11.3434318413, 16.9564592657, 0.6551768047, 6.8456059627];
    let labels = [1, 0, 1, 0, 0];
    let preds = [0, 0, 0, 1, 1];
    let config = BacktestConfig::default();

    let ledger = replay(&rets, &labels, &preds, &config, 44, 292_717.329297)?;
    print!("{}", ledger_csv(&ledger));

    let s = summarize(&ledger, &config)?;
    println!(
        "\n{} trades, {} won ({}), net {:.2}, max drawdown {:.2}",
        s.n_trades,
        s.n_wins,
        s.win_rate_display(),
        s.net_pnl,
        s.max_drawdown
    );
    Ok(())
}
