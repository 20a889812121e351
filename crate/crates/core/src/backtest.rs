//! Daily long-short backtest and risk metrics.
//!
//! Each day the stocks are ranked by predicted probability of beating the
//! median; the top `k` are bought and the bottom `k` sold, equally weighted
//! with gross exposure 1. Costs are charged on turnover against the prior
//! day's weights after they drift with realized returns.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::data::{mean_std, ReturnsPanel};
use crate::trainer::classification_scores;
use crate::{Error, Result};

pub const TRADING_DAYS: f64 = 252.0;
pub const DEFAULT_COST_BPS: f64 = 5.0;
// daily std at or below this counts as zero volatility
const DEGENERATE_STD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayPredictions {
    pub date: NaiveDate,
    /// `(ticker, P(class = 1))`.
    pub probs: Vec<(String, f64)>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DailyPredictions {
    pub days: Vec<DayPredictions>,
}

impl DailyPredictions {
    pub fn validate(&self) -> Result<()> {
        if let Some(w) = self.days.windows(2).find(|w| w[1].date <= w[0].date) {
            return Err(Error::domain(format!("prediction dates not increasing at {}", w[1].date)));
        }
        for day in &self.days {
            let mut seen = BTreeSet::new();
            for (t, p) in &day.probs {
                if !(0.0..=1.0).contains(p) {
                    return Err(Error::domain(format!("probability {p} for {t} on {} outside [0, 1]", day.date)));
                }
                if !seen.insert(t.as_str()) {
                    return Err(Error::domain(format!("duplicate prediction for {t} on {}", day.date)));
                }
            }
        }
        Ok(())
    }

    /// Sorted union of every ticker that appears.
    pub fn tickers(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.days.iter().flat_map(|d| d.probs.iter().map(|(t, _)| t.as_str())).collect();
        set.into_iter().map(str::to_string).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["date", "ticker", "prob"])?;
        for day in &self.days {
            for (t, p) in &day.probs {
                w.write_record([day.date.to_string(), t.clone(), p.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_csv_from(file, path)
    }

    pub fn read_csv_from<R: std::io::Read>(input: R, path: &Path) -> Result<Self> {
        let fmt_err = |line: usize, msg: String| Error::Format { path: path.to_path_buf(), line, msg };
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(input);
        let headers = reader.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h.eq_ignore_ascii_case(name))
                .ok_or_else(|| fmt_err(1, format!("missing column `{name}`")))
        };
        let (dc, tc, pc) = (col("date")?, col("ticker")?, col("prob")?);
        let mut by_day: BTreeMap<NaiveDate, Vec<(String, f64)>> = BTreeMap::new();
        for record in reader.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            let date = NaiveDate::parse_from_str(&record[dc], "%Y-%m-%d")
                .map_err(|e| fmt_err(line, format!("bad date `{}`: {e}", &record[dc])))?;
            let p: f64 = record[pc]
                .parse()
                .map_err(|_| fmt_err(line, format!("non-numeric probability `{}`", &record[pc])))?;
            if !(0.0..=1.0).contains(&p) {
                return Err(fmt_err(line, format!("probability {p} outside [0, 1]")));
            }
            by_day.entry(date).or_default().push((record[tc].to_string(), p));
        }
        let preds = DailyPredictions {
            days: by_day.into_iter().map(|(date, probs)| DayPredictions { date, probs }).collect(),
        };
        preds.validate()?;
        Ok(preds)
    }
}

/// Dense day-by-ticker weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioWeights {
    pub tickers: Vec<String>,
    pub dates: Vec<NaiveDate>,
    pub weights: Vec<Vec<f64>>,
    /// False on days skipped for lack of stocks (weights all zero).
    pub traded: Vec<bool>,
}

/// Rank `probs` by probability (descending, ties by ticker) and return the
/// long and short halves as indices into `probs`.
pub fn rank_long_short(probs: &[(String, f64)], k: usize) -> Option<(Vec<usize>, Vec<usize>)> {
    if k == 0 || probs.len() < 2 * k {
        return None;
    }
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].1.total_cmp(&probs[a].1).then_with(|| probs[a].0.cmp(&probs[b].0)));
    let n = order.len();
    Some((order[..k].to_vec(), order[n - k..].to_vec()))
}

/// `+0.5/k` on the top `k`, `-0.5/k` on the bottom `k`. Days with fewer
/// than `2k` stocks are left flat and flagged untraded.
pub fn build_portfolio(preds: &DailyPredictions, k: usize) -> Result<PortfolioWeights> {
    if k == 0 {
        return Err(Error::domain("k must be at least 1"));
    }
    preds.validate()?;
    let tickers = preds.tickers();
    let index: BTreeMap<&str, usize> = tickers.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
    let w = 0.5 / k as f64;
    let mut weights = Vec::with_capacity(preds.days.len());
    let mut traded = Vec::with_capacity(preds.days.len());
    for day in &preds.days {
        let mut row = vec![0.0; tickers.len()];
        match rank_long_short(&day.probs, k) {
            Some((long, short)) => {
                long.iter().for_each(|&i| row[index[day.probs[i].0.as_str()]] = w);
                short.iter().for_each(|&i| row[index[day.probs[i].0.as_str()]] = -w);
                traded.push(true);
            }
            None => {
                log::warn!("{}: {} stocks, need {}; day skipped", day.date, day.probs.len(), 2 * k);
                traded.push(false);
            }
        }
        weights.push(row);
    }
    Ok(PortfolioWeights { tickers, dates: preds.days.iter().map(|d| d.date).collect(), weights, traded })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyPnl {
    pub gross: Vec<f64>,
    pub cost: Vec<f64>,
    pub net: Vec<f64>,
    pub turnover: Vec<f64>,
}

/// Net returns of `weights[t]` held over `next_returns[t]`. A missing return
/// is allowed only where the weight is zero.
pub fn net_returns(weights: &[Vec<f64>], next_returns: &[Vec<Option<f64>>], cost_bps: f64) -> Result<DailyPnl> {
    if weights.len() != next_returns.len() {
        return Err(Error::shape(format!("{} weight days vs {} return days", weights.len(), next_returns.len())));
    }
    if !(cost_bps >= 0.0 && cost_bps.is_finite()) {
        return Err(Error::domain(format!("cost_bps {cost_bps} must be finite and >= 0")));
    }
    let s = weights.first().map_or(0, Vec::len);
    let rate = cost_bps / 1e4;
    let mut pnl = DailyPnl { gross: vec![], cost: vec![], net: vec![], turnover: vec![] };
    let mut drifted = vec![0.0; s];
    for (t, (w, r)) in weights.iter().zip(next_returns).enumerate() {
        if w.len() != s || r.len() != s {
            return Err(Error::shape(format!("day {t}: {} weights, {} returns, expected {s}", w.len(), r.len())));
        }
        let mut gross = 0.0;
        let mut realized = vec![0.0; s];
        for j in 0..s {
            match r[j] {
                Some(v) => realized[j] = v,
                None if w[j] != 0.0 => {
                    return Err(Error::shape(format!("day {t}: position in column {j} has no realized return")));
                }
                None => {}
            }
            gross += w[j] * realized[j];
        }
        let turnover: f64 = w.iter().zip(&drifted).map(|(a, b)| (a - b).abs()).sum();
        let cost = rate * turnover;
        pnl.gross.push(gross);
        pnl.cost.push(cost);
        pnl.net.push(gross - cost);
        pnl.turnover.push(turnover);
        for j in 0..s {
            drifted[j] = w[j] * (1.0 + realized[j]) / (1.0 + gross);
        }
    }
    Ok(pnl)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub days: usize,
    pub avg_daily_return_pct: f64,
    pub annual_return_pct: f64,
    pub annual_vol_pct: f64,
    /// `None` when volatility is zero.
    pub information_ratio: Option<f64>,
    pub downside_risk_pct: f64,
    /// `None` when there is no downside dispersion.
    pub downside_information_ratio: Option<f64>,
    pub ir_degenerate: bool,
    pub dir_degenerate: bool,
}

/// Return and risk statistics of a daily return series, annualized with 252
/// days (geometric for return, `sqrt(252)` for volatility). Standard
/// deviations are population ones.
pub fn metrics(returns: &[f64]) -> Result<Metrics> {
    if returns.len() < 2 {
        return Err(Error::domain(format!("need at least 2 daily returns, got {}", returns.len())));
    }
    if returns.iter().any(|r| !r.is_finite()) {
        return Err(Error::numeric("non-finite daily return"));
    }
    let n = returns.len() as f64;
    let (mean, std) = mean_std(returns);
    let growth: f64 = returns.iter().map(|r| 1.0 + r).product();
    let annual_return = growth.powf(TRADING_DAYS / n) - 1.0;
    let annual_vol = std * TRADING_DAYS.sqrt();
    let negative: Vec<f64> = returns.iter().copied().filter(|&r| r < 0.0).collect();
    let downside_std = if negative.is_empty() { 0.0 } else { mean_std(&negative).1 };
    let downside = downside_std * TRADING_DAYS.sqrt();
    let ir_degenerate = std <= DEGENERATE_STD;
    let dir_degenerate = negative.is_empty() || downside_std <= DEGENERATE_STD;
    Ok(Metrics {
        days: returns.len(),
        avg_daily_return_pct: mean * 100.0,
        annual_return_pct: annual_return * 100.0,
        annual_vol_pct: annual_vol * 100.0,
        information_ratio: (!ir_degenerate).then(|| annual_return / annual_vol),
        downside_risk_pct: downside * 100.0,
        downside_information_ratio: (!dir_degenerate).then(|| annual_return / downside),
        ir_degenerate,
        dir_degenerate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub k: usize,
    pub cost_bps: f64,
    pub dates: Vec<NaiveDate>,
    pub pnl: DailyPnl,
    pub metrics: Metrics,
    pub skipped_days: usize,
    /// Classification quality against next-day median labels.
    pub accuracy: f64,
    pub f1: f64,
}

impl BacktestReport {
    pub fn write_daily_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["date", "gross", "cost", "net", "turnover"])?;
        for (t, date) in self.dates.iter().enumerate() {
            w.write_record([
                date.to_string(),
                self.pnl.gross[t].to_string(),
                self.pnl.cost[t].to_string(),
                self.pnl.net[t].to_string(),
                self.pnl.turnover[t].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Trade `preds` against the panel: a prediction dated `d` earns the
/// returns of the panel's next date.
pub fn run_backtest(preds: &DailyPredictions, panel: &ReturnsPanel, k: usize, cost_bps: f64) -> Result<BacktestReport> {
    let portfolio = build_portfolio(preds, k)?;
    let day_index: BTreeMap<NaiveDate, usize> = panel.dates.iter().enumerate().map(|(i, d)| (*d, i)).collect();
    let stock_index: BTreeMap<&str, usize> = panel.tickers.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
    let columns: Vec<usize> = portfolio
        .tickers
        .iter()
        .map(|t| {
            stock_index
                .get(t.as_str())
                .copied()
                .ok_or_else(|| Error::shape(format!("ticker {t} not in returns panel")))
        })
        .collect::<Result<_>>()?;

    let mut next_returns = Vec::with_capacity(preds.days.len());
    let (mut predicted, mut labels) = (Vec::new(), Vec::new());
    for day in &preds.days {
        let d = *day_index
            .get(&day.date)
            .ok_or_else(|| Error::shape(format!("prediction date {} not in returns panel", day.date)))?;
        if d + 1 >= panel.days() {
            return Err(Error::shape(format!("no realized return after {}", day.date)));
        }
        next_returns.push(columns.iter().map(|&s| panel.get(d + 1, s)).collect::<Vec<_>>());
        if let Some(m) = panel.daily_median(d + 1) {
            for (t, p) in &day.probs {
                if let Some(r) = panel.get(d + 1, stock_index[t.as_str()]) {
                    predicted.push(usize::from(*p > 0.5));
                    labels.push(usize::from(r > m));
                }
            }
        }
    }
    let pnl = net_returns(&portfolio.weights, &next_returns, cost_bps)?;
    let metrics = metrics(&pnl.net)?;
    let (accuracy, f1) = classification_scores(&predicted, &labels, 2);
    Ok(BacktestReport {
        k,
        cost_bps,
        dates: portfolio.dates,
        skipped_days: portfolio.traded.iter().filter(|t| !**t).count(),
        pnl,
        metrics,
        accuracy,
        f1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn day(date: &str, probs: &[(&str, f64)]) -> DayPredictions {
        DayPredictions {
            date: NaiveDate::parse_from_str(date, "%Y-%m-%d").unwrap(),
            probs: probs.iter().map(|(t, p)| (t.to_string(), *p)).collect(),
        }
    }

    #[test]
    fn portfolio_examples() {
        let p = DailyPredictions { days: vec![day("2020-01-02", &[("A", 0.9), ("B", 0.1)])] };
        assert_eq!(build_portfolio(&p, 1).unwrap().weights, vec![vec![0.5, -0.5]]);
        let p = DailyPredictions { days: vec![day("2020-01-02", &[("A", 0.9), ("B", 0.5), ("C", 0.1)])] };
        assert_eq!(build_portfolio(&p, 1).unwrap().weights, vec![vec![0.5, 0.0, -0.5]]);
        let p = DailyPredictions { days: vec![day("2020-01-02", &[("C", 0.5), ("A", 0.5), ("B", 0.5)])] };
        let w = build_portfolio(&p, 1).unwrap();
        assert_eq!(w.tickers, vec!["A", "B", "C"]);
        assert_eq!(w.weights, vec![vec![0.5, 0.0, -0.5]]);
    }

    #[test]
    fn thin_days_are_skipped() {
        let p = DailyPredictions {
            days: vec![day("2020-01-02", &[("A", 0.9), ("B", 0.1)]), day("2020-01-03", &[("A", 0.9)])],
        };
        let w = build_portfolio(&p, 1).unwrap();
        assert_eq!(w.traded, vec![true, false]);
        assert_eq!(w.weights[1], vec![0.0, 0.0]);
    }

    #[test]
    fn gross_return_example() {
        let pnl = net_returns(&[vec![0.5, -0.5]], &[vec![Some(0.01), Some(-0.01)]], 0.0).unwrap();
        assert!((pnl.gross[0] - 0.01).abs() < 1e-15);
        let pnl = net_returns(&[vec![0.5, -0.5]], &[vec![Some(0.01), Some(-0.01)]], 5.0).unwrap();
        assert!((pnl.cost[0] - 5e-4).abs() < 1e-18);
    }

    #[test]
    fn zero_weights_and_no_turnover() {
        let z = net_returns(&[vec![0.0; 2], vec![0.0; 2]], &[vec![Some(0.1), None], vec![None, Some(-0.2)]], 5.0).unwrap();
        assert_eq!(z.net, vec![0.0, 0.0]);
        let w = vec![vec![0.5, -0.5]; 2];
        let r = vec![vec![Some(0.0), Some(0.0)]; 2];
        let pnl = net_returns(&w, &r, 5.0).unwrap();
        assert_eq!(pnl.cost[1], 0.0);
        assert!(matches!(net_returns(&w, &r[..1], 5.0), Err(Error::Shape(_))));
        let missing = vec![vec![Some(0.0), None]; 2];
        assert!(matches!(net_returns(&w, &missing, 5.0), Err(Error::Shape(_))));
    }

    #[test]
    fn metric_degeneracies() {
        let m = metrics(&[0.001; 10]).unwrap();
        assert!(m.ir_degenerate && m.information_ratio.is_none());
        assert!(m.dir_degenerate && m.downside_information_ratio.is_none());
        assert!(m.annual_return_pct.is_finite());
        let alt: Vec<f64> = (0..252).map(|t| if t % 2 == 0 { 0.01 } else { -0.01 }).collect();
        let m = metrics(&alt).unwrap();
        assert!((m.annual_vol_pct - 0.01 * 252f64.sqrt() * 100.0).abs() < 1e-9);
        let expected = ((1.01f64 * 0.99).powi(126) - 1.0) * 100.0;
        assert!((m.annual_return_pct - expected).abs() < 1e-9);
        // every negative day is -1%: no downside dispersion
        assert!(m.dir_degenerate);
        assert!(metrics(&[0.01]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let p = DailyPredictions {
            days: vec![day("2020-01-02", &[("A", 0.9), ("B", 0.1)]), day("2020-01-03", &[("A", 0.2), ("B", 0.7)])],
        };
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let back = DailyPredictions::read_csv_from(std::io::Cursor::new(buf), Path::new("p.csv")).unwrap();
        assert_eq!(back, p);
        let bad = "date,ticker,prob\n2020-01-02,A,1.5\n";
        let err = DailyPredictions::read_csv_from(std::io::Cursor::new(bad), Path::new("p.csv")).unwrap_err();
        assert!(matches!(err, Error::Format { line: 2, .. }));
    }

    #[test]
    fn backtest_against_panel() {
        let panel = crate::data::synth_returns(4, 6, 1).unwrap();
        let days = (0..5)
            .map(|d| DayPredictions {
                date: panel.dates[d],
                probs: panel.tickers.iter().enumerate().map(|(s, t)| (t.clone(), 0.1 + 0.2 * s as f64)).collect(),
            })
            .collect();
        let report = run_backtest(&DailyPredictions { days }, &panel, 1, 5.0).unwrap();
        assert_eq!(report.pnl.net.len(), 5);
        // long S003, short S000 every day
        let gross0 = 0.5 * panel.get(1, 3).unwrap() - 0.5 * panel.get(1, 0).unwrap();
        assert!((report.pnl.gross[0] - gross0).abs() < 1e-15);
        assert!((report.pnl.turnover[0] - 1.0).abs() < 1e-15);
    }
}
