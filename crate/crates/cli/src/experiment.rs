//! Runs every scheme at every cache size and collects a result table.

use std::io::{Read, Write};
use std::time::Instant;

use anyhow::{anyhow, bail, Context};
use dmccs::gp::{successive_gp, GpTarget};
use dmccs::strategies::{pf_baseline, pfsa_search, sf_baseline};
use rayon::prelude::*;

use crate::config::{ExperimentConfig, SchemeName};

/// One scheme at one cache size. Sizes are in config units and `q` is in
/// config file order.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub m: f64,
    pub scheme: SchemeName,
    pub avg_rate: f64,
    pub n1: Option<usize>,
    pub iters: Option<usize>,
    pub seconds: f64,
    pub q: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultTable {
    /// Number of per-file columns, kept so an empty table still has them.
    pub n_files: usize,
    pub rows: Vec<ResultRow>,
}

/// Placement and rate for one scheme, in bits and canonical order.
pub(crate) struct Evaluated {
    pub q: Vec<f64>,
    pub rate: f64,
    pub n1: Option<usize>,
    pub iters: Option<usize>,
}

pub(crate) fn evaluate(cfg: &ExperimentConfig, m: f64, scheme: SchemeName) -> anyhow::Result<Evaluated> {
    let (catalog, users) = (&cfg.catalog, &cfg.users);
    let gp = |target| -> anyhow::Result<Evaluated> {
        let r = successive_gp(target, catalog, users, m, &cfg.solver)?;
        Ok(Evaluated { q: r.q, rate: r.rate, n1: None, iters: Some(r.iterations) })
    };
    let two_group = |r: dmccs::strategies::TwoGroupSearch| Evaluated {
        n1: Some(r.placement.n1),
        q: r.placement.q,
        rate: r.rate,
        iters: None,
    };
    match scheme {
        SchemeName::GpDmccs => gp(GpTarget::P0Dmccs),
        SchemeName::GpLb => gp(GpTarget::P3LowerBound),
        SchemeName::GpDccs => gp(GpTarget::P0Dccs),
        SchemeName::Pfsa => Ok(two_group(pfsa_search(catalog, users, m)?)),
        SchemeName::Pf => Ok(two_group(pf_baseline(catalog, users, m)?)),
        SchemeName::Sf => Ok(two_group(sf_baseline(catalog, users, m)?)),
    }
}

/// Evaluates every `(M, scheme)` pair on the rayon pool. Rows follow the
/// order of the M grid, then the order of the scheme list.
pub fn run_experiment(cfg: &ExperimentConfig) -> anyhow::Result<ResultTable> {
    let unit = cfg.unit();
    let jobs: Vec<(f64, SchemeName)> =
        cfg.m_grid.iter().flat_map(|&m| cfg.schemes.iter().map(move |&s| (m, s))).collect();
    let rows = jobs
        .par_iter()
        .map(|&(m, scheme)| {
            let start = Instant::now();
            let e = evaluate(cfg, m, scheme).with_context(|| format!("scheme {scheme} at M = {}", m / unit))?;
            let seconds = start.elapsed().as_secs_f64();
            log::info!("{scheme} M={}: rate {} in {seconds:.2}s", m / unit, e.rate / unit);
            Ok(ResultRow {
                m: m / unit,
                scheme,
                avg_rate: e.rate / unit,
                n1: e.n1,
                iters: e.iters,
                seconds,
                q: cfg.to_input_order(&e.q),
            })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    Ok(ResultTable { n_files: cfg.catalog.n_files(), rows })
}

fn optional(v: Option<usize>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

impl ResultTable {
    pub fn schemes(&self) -> Vec<SchemeName> {
        let mut s: Vec<SchemeName> = self.rows.iter().map(|r| r.scheme).collect();
        s.sort();
        s.dedup();
        s
    }

    /// CSV with header `M,scheme,avg_rate,n1,iters,seconds,q1,...,qN`.
    pub fn write_csv<W: Write>(&self, out: W) -> anyhow::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> =
            ["M", "scheme", "avg_rate", "n1", "iters", "seconds"].iter().map(|s| s.to_string()).collect();
        header.extend((1..=self.n_files).map(|i| format!("q{i}")));
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![
                r.m.to_string(),
                r.scheme.to_string(),
                r.avg_rate.to_string(),
                optional(r.n1),
                optional(r.iters),
                r.seconds.to_string(),
            ];
            rec.extend(r.q.iter().map(|q| q.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> anyhow::Result<Self> {
        let mut rd = csv::Reader::from_reader(input);
        let header = rd.headers()?.clone();
        let fixed = ["M", "scheme", "avg_rate", "n1", "iters", "seconds"];
        if header.len() < fixed.len() || header.iter().zip(fixed).any(|(h, f)| h != f) {
            bail!("unexpected CSV header {:?}", header.iter().collect::<Vec<_>>());
        }
        let n_files = header.len() - fixed.len();
        let mut rows = Vec::new();
        for (line, rec) in rd.records().enumerate() {
            let rec = rec?;
            let ctx = || format!("CSV row {}", line + 1);
            let num = |i: usize| rec[i].parse::<f64>().with_context(ctx);
            let opt = |i: usize| -> anyhow::Result<Option<usize>> {
                if rec[i].is_empty() {
                    Ok(None)
                } else {
                    Ok(Some(rec[i].parse().with_context(ctx)?))
                }
            };
            rows.push(ResultRow {
                m: num(0)?,
                scheme: rec[1].parse().map_err(|e: String| anyhow!(e)).with_context(ctx)?,
                avg_rate: num(2)?,
                n1: opt(3)?,
                iters: opt(4)?,
                seconds: num(5)?,
                q: (fixed.len()..rec.len()).map(num).collect::<anyhow::Result<_>>()?,
            });
        }
        Ok(Self { n_files, rows })
    }
}
