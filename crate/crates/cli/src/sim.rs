//! Monte Carlo check of each scheme's placement against its exact D-MCCS
//! rate.

use std::io::Write;

use anyhow::{bail, Context};
use dmccs::rate::average_rate;
use dmccs::simulate::empirical_rate;
use dmccs::{build_catalog, Scheme};

use crate::config::{ExperimentConfig, SchemeName};
use crate::experiment::evaluate;

/// Rates are in config units of the unscaled catalog.
#[derive(Debug, Clone, PartialEq)]
pub struct SimRow {
    pub m: f64,
    pub scheme: SchemeName,
    pub analytic_rate: f64,
    pub empirical_rate: f64,
    pub std_error: f64,
    pub trials: usize,
}

impl SimRow {
    /// Distance between the estimate and the exact rate in standard errors.
    pub fn z_score(&self) -> f64 {
        let d = self.empirical_rate - self.analytic_rate;
        if self.std_error > 0.0 {
            d / self.std_error
        } else if d == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// Optimizes each `(M, scheme)` placement, then simulates D-MCCS delivery on
/// a catalog whose sizes are multiplied by `simulation.f_scale`.
pub fn run_simulation(cfg: &ExperimentConfig) -> anyhow::Result<Vec<SimRow>> {
    let Some(sim) = &cfg.simulation else {
        bail!("simulation: section missing from config");
    };
    let scaled_sizes: Vec<f64> = cfg.catalog.sizes().iter().map(|f| (f * sim.f_scale).round()).collect();
    let (scaled, _) = build_catalog(cfg.catalog.popularity(), &scaled_sizes)?;
    let scale = cfg.unit() * sim.f_scale;
    let mut rows = Vec::new();
    for &m in &cfg.m_grid {
        for &scheme in &cfg.schemes {
            let e = evaluate(cfg, m, scheme).with_context(|| format!("scheme {scheme} at M = {}", m / cfg.unit()))?;
            let analytic = average_rate(Scheme::Dmccs, &e.q, &scaled, &cfg.users)?.average_rate;
            let est = empirical_rate(&e.q, &scaled, &cfg.users, sim.trials, cfg.seed)?;
            let row = SimRow {
                m: m / cfg.unit(),
                scheme,
                analytic_rate: analytic / scale,
                empirical_rate: est.mean / scale,
                std_error: est.std_error / scale,
                trials: est.trials,
            };
            log::info!("{scheme} M={}: z = {:.2}", row.m, row.z_score());
            rows.push(row);
        }
    }
    Ok(rows)
}

pub fn write_sim_csv<W: Write>(rows: &[SimRow], out: W) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["M", "scheme", "analytic_rate", "empirical_rate", "std_error", "trials"])?;
    for r in rows {
        w.write_record([
            r.m.to_string(),
            r.scheme.to_string(),
            r.analytic_rate.to_string(),
            r.empirical_rate.to_string(),
            r.std_error.to_string(),
            r.trials.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
