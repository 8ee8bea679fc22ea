//! Run records, CSV writers, and the JSON run manifest.
//!
//! `records.csv` holds one row per inner iteration; `summary.csv` one row
//! per realization. Both are pure functions of (config, seed), so repeated
//! runs are byte-identical. Wall-clock timing goes only into the manifest,
//! which is otherwise a config echo plus totals.

use std::io::Write;
use std::path::Path;

use serde_json::json;

use super::config::ScenarioConfig;

/// One inner iteration of one algorithm on one channel realization.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub realization: usize,
    pub algorithm: String,
    pub outer_iter: usize,
    pub inner_iter: usize,
    pub mu: f64,
    /// Exact N − μD of the iterate.
    pub objective: f64,
    pub see: f64,
    /// Per-user secrecy rates, semicolon-joined in CSV.
    pub rates: Vec<f64>,
    pub feasible: bool,
    /// Relative rank-one gap; SDR only.
    pub relax_gap: Option<f64>,
}

/// Per-realization outcome row.
#[derive(Debug, Clone)]
pub struct SummaryRecord {
    pub realization: usize,
    pub algorithm: String,
    pub feasible: bool,
    pub see: Option<f64>,
    pub mu_star: Option<f64>,
    pub sum_rate: Option<f64>,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub status: String,
}

fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:.12e}")
    }
}

fn join_rates(rates: &[f64]) -> String {
    rates
        .iter()
        .map(|r| format!("{r:.12e}"))
        .collect::<Vec<_>>()
        .join(";")
}

/// Writes `records.csv` (RFC 4180, header row).
pub fn write_records(path: &Path, records: &[RunRecord]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "realization",
        "algorithm",
        "outer_iter",
        "inner_iter",
        "mu",
        "objective",
        "see",
        "rates",
        "feasible",
        "relax_gap",
    ])?;
    for r in records {
        w.write_record([
            r.realization.to_string(),
            r.algorithm.clone(),
            r.outer_iter.to_string(),
            r.inner_iter.to_string(),
            fmt_f64(r.mu),
            fmt_f64(r.objective),
            fmt_f64(r.see),
            join_rates(&r.rates),
            r.feasible.to_string(),
            r.relax_gap.map(fmt_f64).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `records.csv` back; the schema check used by tests.
pub fn read_records(path: &Path) -> Result<Vec<RunRecord>, String> {
    let mut rd = csv::Reader::from_path(path).map_err(|e| e.to_string())?;
    let headers = rd.headers().map_err(|e| e.to_string())?.clone();
    let expected = [
        "realization",
        "algorithm",
        "outer_iter",
        "inner_iter",
        "mu",
        "objective",
        "see",
        "rates",
        "feasible",
        "relax_gap",
    ];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(format!("unexpected header {headers:?}"));
    }
    let mut out = Vec::new();
    for row in rd.records() {
        let row = row.map_err(|e| e.to_string())?;
        let get = |i: usize| row.get(i).unwrap_or("");
        let parse_f = |s: &str| -> Result<f64, String> {
            if s.is_empty() {
                Ok(f64::NAN)
            } else {
                s.parse().map_err(|_| format!("bad float {s:?}"))
            }
        };
        out.push(RunRecord {
            realization: get(0).parse().map_err(|_| "bad realization")?,
            algorithm: get(1).to_string(),
            outer_iter: get(2).parse().map_err(|_| "bad outer_iter")?,
            inner_iter: get(3).parse().map_err(|_| "bad inner_iter")?,
            mu: parse_f(get(4))?,
            objective: parse_f(get(5))?,
            see: parse_f(get(6))?,
            rates: if get(7).is_empty() {
                Vec::new()
            } else {
                get(7)
                    .split(';')
                    .map(|s| s.parse().map_err(|_| format!("bad rate {s:?}")))
                    .collect::<Result<_, _>>()?
            },
            feasible: get(8).parse().map_err(|_| "bad feasible")?,
            relax_gap: if get(9).is_empty() {
                None
            } else {
                Some(parse_f(get(9))?)
            },
        });
    }
    Ok(out)
}

/// Writes `summary.csv`.
pub fn write_summary(path: &Path, rows: &[SummaryRecord]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "realization",
        "algorithm",
        "feasible",
        "see",
        "mu_star",
        "sum_rate",
        "outer_iterations",
        "inner_iterations",
        "status",
    ])?;
    for r in rows {
        w.write_record([
            r.realization.to_string(),
            r.algorithm.clone(),
            r.feasible.to_string(),
            r.see.map(fmt_f64).unwrap_or_default(),
            r.mu_star.map(fmt_f64).unwrap_or_default(),
            r.sum_rate.map(fmt_f64).unwrap_or_default(),
            r.outer_iterations.to_string(),
            r.inner_iterations.to_string(),
            r.status.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `manifest.json`: config echo, seed, versions, totals. The timing
/// entry is the only field not reproducible bit-for-bit.
pub fn write_manifest(
    path: &Path,
    cfg: &ScenarioConfig,
    totals: &ManifestTotals,
    wall_ms: Option<u128>,
) -> std::io::Result<()> {
    let manifest = json!({
        "format": 1,
        "tool": {
            "name": "lumos",
            "version": env!("CARGO_PKG_VERSION"),
        },
        "seed": cfg.seed,
        "config": cfg.to_manifest_map(),
        "totals": {
            "realizations": totals.realizations,
            "feasible": totals.feasible,
            "records": totals.records,
        },
        "timing": wall_ms.map(|ms| json!({"wall_ms": ms})),
    });
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "{}", serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

#[derive(Debug, Clone, Default)]
pub struct ManifestTotals {
    pub realizations: usize,
    pub feasible: usize,
    pub records: usize,
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_records() -> Vec<RunRecord> {
        vec![
            RunRecord {
                realization: 0,
                algorithm: "cccp".into(),
                outer_iter: 0,
                inner_iter: 1,
                mu: 0.1,
                objective: 1.25,
                see: 0.2,
                rates: vec![0.5, 0.75],
                feasible: true,
                relax_gap: None,
            },
            RunRecord {
                realization: 1,
                algorithm: "cccp_sdr".into(),
                outer_iter: 2,
                inner_iter: 3,
                mu: 0.25,
                objective: -0.5,
                see: 0.19,
                rates: vec![0.4, 0.6],
                feasible: true,
                relax_gap: Some(0.01),
            },
        ]
    }

    #[test]
    fn records_round_trip_and_deterministic_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.csv");
        let p2 = dir.path().join("b.csv");
        let records = sample_records();
        write_records(&p1, &records).unwrap();
        write_records(&p2, &records).unwrap();
        assert_eq!(
            std::fs::read(&p1).unwrap(),
            std::fs::read(&p2).unwrap(),
            "same inputs must give identical bytes"
        );
        let back = read_records(&p1).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].rates, vec![0.5, 0.75]);
        assert_eq!(back[1].relax_gap, Some(0.01));
    }

    #[test]
    fn manifest_contains_config_and_totals() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("manifest.json");
        let cfg = ScenarioConfig::default();
        write_manifest(
            &p,
            &cfg,
            &ManifestTotals {
                realizations: 10,
                feasible: 9,
                records: 123,
            },
            Some(42),
        )
        .unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["seed"], 1);
        assert_eq!(v["totals"]["feasible"], 9);
        assert_eq!(v["config"]["power_dbm"], 30.0);
        assert_eq!(v["format"], 1);
    }
}
