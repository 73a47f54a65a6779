//! Trade-ledger simulation of directional calls.
//!
//! Every step is a trade. A correct call earns `|ret| · stake_base`, a wrong
//! one loses the same amount, and equity is the running sum from the initial
//! capital. There are no costs and no margin stop, so equity can go negative.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BacktestConfig {
    pub initial_capital: f64,
    /// Multiplier applied to each absolute return to get the trade PnL.
    pub stake_base: f64,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            initial_capital: 10_000.0,
            stake_base: 10_000.0,
        }
    }
}

impl BacktestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.initial_capital > 0.0 && self.stake_base > 0.0 {
            Ok(())
        } else {
            Err(Error::Config(
                "initial_capital and stake_base must be positive".into(),
            ))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeRecord {
    pub index: usize,
    pub ret: f64,
    pub label: u8,
    pub pred: u8,
    pub won: bool,
    pub pnl: f64,
    pub equity: f64,
}

/// Runs the ledger from `config.initial_capital`, numbering trades from 0.
pub fn run_backtest(
    returns: &[f64],
    labels: &[u8],
    preds: &[u8],
    config: &BacktestConfig,
) -> Result<Vec<TradeRecord>> {
    replay(returns, labels, preds, config, 0, config.initial_capital)
}

/// Runs the ledger continuing from an existing position: the first trade is
/// numbered `first_index` and starts from `prior_equity`.
pub fn replay(
    returns: &[f64],
    labels: &[u8],
    preds: &[u8],
    config: &BacktestConfig,
    first_index: usize,
    prior_equity: f64,
) -> Result<Vec<TradeRecord>> {
    config.validate()?;
    if returns.is_empty() || returns.len() != labels.len() || returns.len() != preds.len() {
        return Err(Error::Argument(format!(
            "returns, labels and preds must be equal nonzero lengths, got {}, {}, {}",
            returns.len(),
            labels.len(),
            preds.len()
        )));
    }
    if let Some(i) = returns.iter().position(|r| !r.is_finite()) {
        return Err(Error::NonFiniteReturn(first_index + i));
    }
    let mut equity = prior_equity;
    let mut ledger = Vec::with_capacity(returns.len());
    for (k, ((&ret, &label), &pred)) in returns.iter().zip(labels).zip(preds).enumerate() {
        let won = pred == label;
        let size = ret.abs() * config.stake_base;
        let pnl = if won { size } else { -size };
        equity += pnl;
        ledger.push(TradeRecord {
            index: first_index + k,
            ret,
            label,
            pred,
            won,
            pnl,
            equity,
        });
    }
    Ok(ledger)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestSummary {
    pub n_trades: usize,
    pub n_wins: usize,
    pub win_rate: f64,
    pub net_pnl: f64,
    pub final_equity: f64,
    pub max_drawdown: f64,
}

impl BacktestSummary {
    /// Win rate as a percentage with two decimals, e.g. `40.82%`.
    pub fn win_rate_display(&self) -> String {
        format!("{:.2}%", self.win_rate * 100.0)
    }
}

pub fn summarize(ledger: &[TradeRecord], _config: &BacktestConfig) -> Result<BacktestSummary> {
    let Some(last) = ledger.last() else {
        return Err(Error::Argument("empty ledger".into()));
    };
    let n_wins = ledger.iter().filter(|t| t.won).count();
    let net_pnl: f64 = ledger.iter().map(|t| t.pnl).sum();
    // The peak starts at the equity held before the first trade.
    let mut peak = ledger[0].equity - ledger[0].pnl;
    let mut max_drawdown: f64 = 0.0;
    for t in ledger {
        peak = peak.max(t.equity);
        max_drawdown = max_drawdown.max(peak - t.equity);
    }
    Ok(BacktestSummary {
        n_trades: ledger.len(),
        n_wins,
        win_rate: n_wins as f64 / ledger.len() as f64,
        net_pnl,
        final_equity: last.equity,
        max_drawdown,
    })
}

/// Equity before the first trade followed by the equity after each trade.
pub fn equity_curve(ledger: &[TradeRecord]) -> Vec<f64> {
    let mut curve = Vec::with_capacity(ledger.len() + 1);
    if let Some(first) = ledger.first() {
        curve.push(first.equity - first.pnl);
    }
    curve.extend(ledger.iter().map(|t| t.equity));
    curve
}

/// `index,return,label,pred,won,pnl,equity` with six decimal places.
pub fn ledger_csv(ledger: &[TradeRecord]) -> String {
    let mut out = String::from("index,return,label,pred,won,pnl,equity\n");
    for t in ledger {
        out.push_str(&format!(
            "{},{:.6},{},{},{},{:.6},{:.6}\n",
            t.index,
            t.ret,
            t.label,
            t.pred,
            if t.won { "True" } else { "False" },
            t.pnl,
            t.equity
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_rows_44_and_45() {
        let cfg = BacktestConfig::default();
        let ledger = replay(
            &[18.2232481296, 11.3434318413],
            &[1, 0],
            &[0, 0],
            &cfg,
            44,
            292717.329297,
        )
        .unwrap();
        assert!(!ledger[0].won);
        assert!((ledger[0].pnl + 182232.481296).abs() < 1e-6);
        assert!((ledger[0].equity - 110484.848001).abs() < 1e-6);
        assert!(ledger[1].won);
        assert!((ledger[1].pnl - 113434.318413).abs() < 1e-6);
        assert!((ledger[1].equity - 223919.166414).abs() < 1e-6);
        assert_eq!(ledger[1].index, 45);
    }

    #[test]
    fn zero_return_leaves_equity() {
        let ledger = run_backtest(&[0.0, 0.0], &[1, 0], &[0, 0], &BacktestConfig::default()).unwrap();
        assert!(ledger.iter().all(|t| t.pnl.abs() == 0.0 && t.equity == 10_000.0));
    }

    #[test]
    fn input_errors() {
        let cfg = BacktestConfig::default();
        assert!(matches!(
            run_backtest(&[0.1], &[1, 0], &[0], &cfg),
            Err(Error::Argument(_))
        ));
        assert!(matches!(
            run_backtest(&[0.1, f64::NAN], &[1, 0], &[0, 0], &cfg),
            Err(Error::NonFiniteReturn(1))
        ));
        assert!(summarize(&[], &cfg).is_err());
    }

    #[test]
    fn all_wins_have_no_drawdown() {
        let cfg = BacktestConfig::default();
        let ledger = run_backtest(&[0.01, -0.02, 0.03], &[1, 0, 1], &[1, 0, 1], &cfg).unwrap();
        let s = summarize(&ledger, &cfg).unwrap();
        assert_eq!(s.max_drawdown, 0.0);
        assert_eq!(s.win_rate, 1.0);
    }

    #[test]
    fn drawdown_from_peak() {
        let cfg = BacktestConfig {
            initial_capital: 100.0,
            stake_base: 1.0,
        };
        let ledger = run_backtest(&[10.0, 30.0, 5.0], &[1, 1, 1], &[1, 0, 1], &cfg).unwrap();
        let s = summarize(&ledger, &cfg).unwrap();
        assert_eq!(equity_curve(&ledger), vec![100.0, 110.0, 80.0, 85.0]);
        assert_eq!(s.max_drawdown, 30.0);
        assert_eq!(s.final_equity, 85.0);
        assert_eq!(s.net_pnl, -15.0);
    }

    #[test]
    fn ledger_csv_layout() {
        let ledger = run_backtest(&[0.5], &[1], &[0], &BacktestConfig::default()).unwrap();
        assert_eq!(
            ledger_csv(&ledger),
            "index,return,label,pred,won,pnl,equity\n0,0.500000,1,0,False,-5000.000000,5000.000000\n"
        );
    }
}
