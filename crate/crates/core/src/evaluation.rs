//! Imbalance and best-bound gap metrics, run summaries, and the plot-data
//! CSV files.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ledger::LedgerReport;

/// Final curriculum thresholds used for the summary fractions.
pub const IMBALANCE_THRESHOLD_PCT: f64 = 2.0;
pub const BOUND_THRESHOLD_PCT: f64 = 10.0;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("demand must be positive, got {0}")]
    NonPositiveDemand(f64),
    #[error("actual cost must be positive, got {0}")]
    NonPositiveCost(f64),
    #[error("empty run")]
    EmptyRun,
    #[error("i/o error: {0}")]
    Io(String),
}

/// `|demand - supply| / demand * 100`
pub fn imbalance_gap_pct(demand: f64, supply: f64) -> Result<f64, MetricError> {
    if !(demand > 0.0) {
        return Err(MetricError::NonPositiveDemand(demand));
    }
    Ok((demand - supply).abs() / demand * 100.0)
}

/// `|actual - bound| / actual * 100`
pub fn best_bound_gap_pct(actual_cost: f64, best_bound: f64) -> Result<f64, MetricError> {
    if !(actual_cost > 0.0) {
        return Err(MetricError::NonPositiveCost(actual_cost));
    }
    Ok((actual_cost - best_bound).abs() / actual_cost * 100.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourlyEvaluation {
    pub episode: usize,
    pub hour: usize,
    /// Demand including battery charging.
    pub demand: f64,
    pub supply: f64,
    pub price: f64,
    pub actual_cost: f64,
    pub best_bound: f64,
    pub soc: f64,
    pub solar_mwh: f64,
    pub wind_mwh: f64,
    pub conventional_mwh: f64,
    /// Charge minus discharge.
    pub battery_net_mwh: f64,
}

impl HourlyEvaluation {
    pub fn imbalance_gap(&self) -> Option<f64> {
        imbalance_gap_pct(self.demand, self.supply).ok()
    }

    /// Gap to the bound; a zero-cost hour counts as 0 when the bound is also
    /// zero and 100 otherwise.
    pub fn bound_gap(&self) -> f64 {
        best_bound_gap_pct(self.actual_cost, self.best_bound)
            .unwrap_or(if self.best_bound <= 0.0 { 0.0 } else { 100.0 })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub hours: Vec<HourlyEvaluation>,
    /// Per-hour imbalance gap; `None` for excluded zero-demand hours.
    pub imbalance_gaps: Vec<Option<f64>>,
    pub bound_gaps: Vec<f64>,
    pub mean_imbalance_gap: f64,
    pub max_imbalance_gap: f64,
    pub mean_bound_gap: f64,
    pub max_bound_gap: f64,
    pub frac_imbalance_within: f64,
    pub frac_bound_within: f64,
}

impl RunSummary {
    pub fn fraction_imbalance_within(&self, threshold_pct: f64) -> f64 {
        let valid: Vec<f64> = self.imbalance_gaps.iter().flatten().copied().collect();
        fraction_within(&valid, threshold_pct)
    }

    pub fn fraction_bound_within(&self, threshold_pct: f64) -> f64 {
        fraction_within(&self.bound_gaps, threshold_pct)
    }
}

fn fraction_within(gaps: &[f64], threshold: f64) -> f64 {
    if gaps.is_empty() {
        return 0.0;
    }
    gaps.iter().filter(|&&g| g <= threshold).count() as f64 / gaps.len() as f64
}

pub fn summarize(run: &[HourlyEvaluation]) -> Result<RunSummary, MetricError> {
    if run.is_empty() {
        return Err(MetricError::EmptyRun);
    }
    let imbalance_gaps: Vec<Option<f64>> = run
        .iter()
        .map(|h| {
            let g = h.imbalance_gap();
            if g.is_none() {
                log::warn!("episode {} hour {}: zero demand excluded from gap statistics", h.episode, h.hour);
            }
            g
        })
        .collect();
    let bound_gaps: Vec<f64> = run.iter().map(HourlyEvaluation::bound_gap).collect();
    let valid: Vec<f64> = imbalance_gaps.iter().flatten().copied().collect();
    let stats = |v: &[f64]| {
        if v.is_empty() {
            (0.0, 0.0)
        } else {
            (v.iter().sum::<f64>() / v.len() as f64, v.iter().copied().fold(0.0, f64::max))
        }
    };
    let (mean_imbalance_gap, max_imbalance_gap) = stats(&valid);
    let (mean_bound_gap, max_bound_gap) = stats(&bound_gaps);
    Ok(RunSummary {
        frac_imbalance_within: fraction_within(&valid, IMBALANCE_THRESHOLD_PCT),
        frac_bound_within: fraction_within(&bound_gaps, BOUND_THRESHOLD_PCT),
        hours: run.to_vec(),
        imbalance_gaps,
        bound_gaps,
        mean_imbalance_gap,
        max_imbalance_gap,
        mean_bound_gap,
        max_bound_gap,
    })
}

/// Net battery charging (charge minus discharge) summed over the `k`
/// cheapest and the `k` most expensive hours of each episode, in that order.
pub fn net_charge_by_price(run: &[HourlyEvaluation], k: usize) -> (f64, f64) {
    let mut episodes: Vec<usize> = run.iter().map(|h| h.episode).collect();
    episodes.dedup();
    let (mut cheap, mut dear) = (0.0, 0.0);
    for e in episodes {
        let mut hours: Vec<&HourlyEvaluation> = run.iter().filter(|h| h.episode == e).collect();
        hours.sort_by(|a, b| a.price.total_cmp(&b.price).then(a.hour.cmp(&b.hour)));
        let k = k.min(hours.len());
        cheap += hours[..k].iter().map(|h| h.battery_net_mwh).sum::<f64>();
        dear += hours[hours.len() - k..].iter().map(|h| h.battery_net_mwh).sum::<f64>();
    }
    (cheap, dear)
}

fn f6(v: f64) -> String {
    format!("{v:.6}")
}

fn gap_cell(g: Option<f64>) -> String {
    g.map(f6).unwrap_or_default()
}

/// Writes the plot-data files, `summary.csv` (one row per hour),
/// `metrics.csv` (aggregate statistics) and the ledger report into `out_dir`.
pub fn emit_reports(summary: &RunSummary, ledger: &LedgerReport, out_dir: &Path) -> Result<(), MetricError> {
    let io = |e: std::io::Error| MetricError::Io(e.to_string());
    fs::create_dir_all(out_dir).map_err(io)?;

    let mut imbalance = String::from("hour,gap_pct\n");
    let mut cost = String::from("hour,actual,bound\n");
    let mut renew = String::from("hour,solar,wind\n");
    let mut battery = String::from("hour,soc,net\n");
    let mut hourly = String::from(
        "episode,hour,demand_mwh,supply_mwh,price_usd_per_mwh,imbalance_gap_pct,actual_cost,best_bound,best_bound_gap_pct,soc_mwh,solar_mwh,wind_mwh,conventional_mwh,battery_net_mwh\n",
    );
    for (i, h) in summary.hours.iter().enumerate() {
        let gap = gap_cell(summary.imbalance_gaps[i]);
        imbalance.push_str(&format!("{},{}\n", h.hour, gap));
        cost.push_str(&format!("{},{},{}\n", h.hour, f6(h.actual_cost), f6(h.best_bound)));
        renew.push_str(&format!("{},{},{}\n", h.hour, f6(h.solar_mwh), f6(h.wind_mwh)));
        battery.push_str(&format!("{},{},{}\n", h.hour, f6(h.soc), f6(h.battery_net_mwh)));
        hourly.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            h.episode,
            h.hour,
            f6(h.demand),
            f6(h.supply),
            f6(h.price),
            gap,
            f6(h.actual_cost),
            f6(h.best_bound),
            f6(summary.bound_gaps[i]),
            f6(h.soc),
            f6(h.solar_mwh),
            f6(h.wind_mwh),
            f6(h.conventional_mwh),
            f6(h.battery_net_mwh),
        ));
    }
    let metrics = format!(
        "metric,value\nhours,{}\nmean_imbalance_gap_pct,{}\nmax_imbalance_gap_pct,{}\nmean_best_bound_gap_pct,{}\nmax_best_bound_gap_pct,{}\nfrac_imbalance_gap_le_2pct,{}\nfrac_best_bound_gap_le_10pct,{}\n",
        summary.hours.len(),
        f6(summary.mean_imbalance_gap),
        f6(summary.max_imbalance_gap),
        f6(summary.mean_bound_gap),
        f6(summary.max_bound_gap),
        f6(summary.frac_imbalance_within),
        f6(summary.frac_bound_within),
    );

    for (name, body) in [
        ("imbalance_gap.csv", imbalance),
        ("cost_vs_bound.csv", cost),
        ("renewables.csv", renew),
        ("battery.csv", battery),
        ("summary.csv", hourly),
        ("metrics.csv", metrics),
    ] {
        fs::write(out_dir.join(name), body).map_err(io)?;
    }
    ledger.write(out_dir).map_err(|e| MetricError::Io(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    pub(crate) fn hour(h: usize, demand: f64, supply: f64, actual: f64, bound: f64) -> HourlyEvaluation {
        HourlyEvaluation {
            episode: 0,
            hour: h,
            demand,
            supply,
            price: 30.0,
            actual_cost: actual,
            best_bound: bound,
            soc: 0.0,
            solar_mwh: 0.0,
            wind_mwh: 0.0,
            conventional_mwh: supply,
            battery_net_mwh: 0.0,
        }
    }

    #[test]
    fn imbalance_examples() {
        assert_relative_eq!(imbalance_gap_pct(100.0, 98.0).unwrap(), 2.0, max_relative = 1e-12);
        assert_eq!(imbalance_gap_pct(70.0, 70.0).unwrap(), 0.0);
        assert_relative_eq!(imbalance_gap_pct(50.0, 60.0).unwrap(), 20.0, max_relative = 1e-12);
        assert_eq!(imbalance_gap_pct(0.0, 1.0), Err(MetricError::NonPositiveDemand(0.0)));
    }

    #[test]
    fn bound_examples() {
        assert_relative_eq!(best_bound_gap_pct(110.0, 100.0).unwrap(), 100.0 / 11.0, max_relative = 1e-12);
        assert_eq!(best_bound_gap_pct(5.0, 5.0).unwrap(), 0.0);
        assert_relative_eq!(best_bound_gap_pct(1000.0, 913.0).unwrap(), 8.7, max_relative = 1e-12);
        assert!(best_bound_gap_pct(-1.0, 0.0).is_err());
    }

    #[test]
    fn summary_fractions() {
        let run: Vec<_> = (0..24).map(|h| hour(h, 100.0, 100.0, 50.0, 50.0)).collect();
        let s = summarize(&run).unwrap();
        assert_eq!(s.frac_imbalance_within, 1.0);
        assert_eq!(s.frac_bound_within, 1.0);
        assert_eq!(s.imbalance_gaps.len(), 24);

        let s = summarize(&[hour(0, 100.0, 98.0, 1.0, 1.0)]).unwrap();
        assert_eq!(s.frac_imbalance_within, 1.0);
        assert!(summarize(&[]).is_err());
    }

    #[test]
    fn zero_demand_hours_are_excluded() {
        let s = summarize(&[hour(0, 0.0, 0.0, 0.0, 0.0), hour(1, 100.0, 90.0, 1.0, 1.0)]).unwrap();
        assert_eq!(s.imbalance_gaps[0], None);
        assert_eq!(s.frac_imbalance_within, 0.0);
        assert_eq!(s.mean_imbalance_gap, 10.0);
    }

    #[test]
    fn net_charge_split_by_price() {
        let mut run = Vec::new();
        for episode in 0..2 {
            for h in 0..6 {
                let mut e = hour(h, 100.0, 100.0, 1.0, 1.0);
                e.episode = episode;
                e.price = [40.0, 10.0, 30.0, 10.0, 50.0, 20.0][h];
                e.battery_net_mwh = [-1.0, 5.0, 0.0, 3.0, -4.0, 2.0][h];
                run.push(e);
            }
        }
        // Cheapest two are hours 1 and 3, dearest two are hours 0 and 4.
        assert_eq!(net_charge_by_price(&run, 2), (16.0, -10.0));
        let (all_cheap, all_dear) = net_charge_by_price(&run, 10);
        assert_eq!(all_cheap, all_dear);
    }

    proptest! {
        #[test]
        fn scale_invariance(d in 1.0..1e4f64, s in 0.0..2e4f64, k in 1e-3..1e3f64) {
            let a = imbalance_gap_pct(d, s).unwrap();
            let b = imbalance_gap_pct(k * d, k * s).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a));
            let a = best_bound_gap_pct(d, s).unwrap();
            let b = best_bound_gap_pct(k * d, k * s).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a));
        }

        #[test]
        fn fractions_monotone(gaps in proptest::collection::vec(0.0..30.0f64, 1..48), t1 in 0.0..30.0f64, t2 in 0.0..30.0f64) {
            let run: Vec<_> = gaps.iter().enumerate()
                .map(|(i, g)| hour(i % 24, 100.0, 100.0 - g, 100.0, 100.0 - g))
                .collect();
            let s = summarize(&run).unwrap();
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            for f in [s.fraction_imbalance_within(lo), s.fraction_bound_within(hi)] {
                prop_assert!((0.0..=1.0).contains(&f));
            }
            prop_assert!(s.fraction_imbalance_within(lo) <= s.fraction_imbalance_within(hi));
            prop_assert!(s.fraction_bound_within(lo) <= s.fraction_bound_within(hi));
        }
    }
}
