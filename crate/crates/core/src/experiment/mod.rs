//! Monte Carlo experiment harness: feasibility sweeps, convergence traces,
//! and SEE sweeps over scenario grids.
//!
//! Realizations fan out over a worker pool; each owns its solver state and
//! derives every random draw from (seed, realization id), so outputs are
//! independent of the thread count and identical across repeated runs.

pub mod config;
pub mod records;
pub mod runner;

pub use config::{Algorithm, ConfigError, InitStrategy, ScenarioConfig, SweepAxis, SweepSpec};
pub use records::{ManifestTotals, RunRecord, SummaryRecord};
pub use runner::{build_realization, detect_feasible, optimize_realization, OptimizeOutcome};

use rayon::prelude::*;

/// One grid point of a feasibility experiment.
#[derive(Debug, Clone)]
pub struct FeasibilityRow {
    pub label: String,
    pub feasible: usize,
    pub total: usize,
    pub probability: f64,
    /// 95% Wilson interval.
    pub ci_low: f64,
    pub ci_high: f64,
}

fn wilson_interval(successes: usize, total: usize) -> (f64, f64) {
    if total == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959963984540054f64;
    let n = total as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * ((p * (1.0 - p) + z2 / (4.0 * n)) / n).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

fn feasibility_at(cfg: &ScenarioConfig) -> (usize, usize) {
    let feasible: usize = (0..cfg.n_realizations)
        .into_par_iter()
        .map(|id| match build_realization(cfg, id) {
            Some(real) => detect_feasible(&real, cfg).is_some() as usize,
            None => 0,
        })
        .sum();
    (feasible, cfg.n_realizations)
}

/// Fraction of random user drops for which the design problem is feasible,
/// per grid point of the sweep.
pub fn feasibility_probability(cfg: &ScenarioConfig, sweep: &SweepSpec) -> Vec<FeasibilityRow> {
    let points = sweep_points(cfg, sweep);
    points
        .into_iter()
        .map(|(label, point_cfg)| {
            let (feasible, total) = feasibility_at(&point_cfg);
            let probability = feasible as f64 / total.max(1) as f64;
            let (ci_low, ci_high) = wilson_interval(feasible, total);
            FeasibilityRow {
                label,
                feasible,
                total,
                probability,
                ci_low,
                ci_high,
            }
        })
        .collect()
}

/// Expands a sweep into labeled scenario configs (shared seed, so the same
/// realization id reuses the same user drop across grid points).
pub fn sweep_points(cfg: &ScenarioConfig, sweep: &SweepSpec) -> Vec<(String, ScenarioConfig)> {
    match sweep.axis {
        SweepAxis::PowerDbm => sweep
            .values
            .iter()
            .map(|&v| {
                let mut c = cfg.clone();
                c.power_dbm = v;
                (format!("{v}"), c)
            })
            .collect(),
        SweepAxis::Threshold => sweep
            .values
            .iter()
            .map(|&v| {
                let mut c = cfg.clone();
                c.lambda = vec![v];
                (format!("{v}"), c)
            })
            .collect(),
        SweepAxis::Circuitry => sweep
            .values
            .iter()
            .map(|&v| {
                let mut c = cfg.clone();
                c.circuitry_power = v;
                (format!("{v}"), c)
            })
            .collect(),
        SweepAxis::Layout => sweep
            .layouts
            .iter()
            .map(|&(layout, users)| {
                let mut c = cfg.clone();
                c.layout = layout;
                c.users = users;
                (
                    format!("{}/{}", config::layout_name(layout), users),
                    c,
                )
            })
            .collect(),
    }
}

/// Per-realization traces of one convergence study.
#[derive(Debug, Clone)]
pub struct ConvergenceTraces {
    pub realization: usize,
    /// Converged SEE of the direct CCCP design (the figure normalizer).
    pub cccp_final: f64,
    /// (algorithm, cumulative inner-iteration SEE trace, final SEE).
    pub traces: Vec<(Algorithm, Vec<f64>, f64)>,
}

/// Averaged convergence rows: SEE at iteration i normalized by the
/// converged direct-CCCP value, averaged over feasible realizations.
#[derive(Debug, Clone)]
pub struct ConvergenceRow {
    pub algorithm: String,
    pub iteration: usize,
    pub mean_normalized: f64,
    pub n: usize,
}

/// Runs the convergence experiment with the requested initialization for
/// the three iterative designs, keeping only feasible realizations.
pub fn convergence_trace(cfg: &ScenarioConfig, init: InitStrategy) -> Vec<ConvergenceTraces> {
    (0..cfg.n_realizations)
        .into_par_iter()
        .filter_map(|id| {
            let real = build_realization(cfg, id)?;
            detect_feasible(&real, cfg)?;
            let cccp = optimize_realization(&real, cfg, Algorithm::Cccp, init);
            let sdr = optimize_realization(&real, cfg, Algorithm::CccpSdr, init);
            let zf = optimize_realization(&real, cfg, Algorithm::Zf, InitStrategy::Zf);
            // the normalizer is the converged direct-CCCP value; prefer the
            // ZF-initialized run when the requested init failed
            let cccp_final = match (cccp.feasible, cccp.see) {
                (true, Some(s)) => s,
                _ => {
                    let fallback =
                        optimize_realization(&real, cfg, Algorithm::Cccp, InitStrategy::Zf);
                    fallback.see?
                }
            };
            let mut traces = Vec::new();
            for (algo, out) in [
                (Algorithm::Cccp, &cccp),
                (Algorithm::CccpSdr, &sdr),
                (Algorithm::Zf, &zf),
            ] {
                if out.feasible && !out.see_trace.is_empty() {
                    traces.push((algo, out.see_trace.clone(), out.see.unwrap()));
                }
            }
            Some(ConvergenceTraces {
                realization: id,
                cccp_final,
                traces,
            })
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

/// Collapses traces into the averaged normalized rows of the figure.
pub fn convergence_rows(data: &[ConvergenceTraces], horizon: usize) -> Vec<ConvergenceRow> {
    let mut rows = Vec::new();
    for algo in [Algorithm::Cccp, Algorithm::CccpSdr, Algorithm::Zf] {
        for it in 0..horizon {
            let mut sum = 0.0;
            let mut n = 0usize;
            for t in data {
                if t.cccp_final <= 0.0 {
                    continue;
                }
                for (a, trace, _) in &t.traces {
                    if *a != algo || trace.is_empty() {
                        continue;
                    }
                    let v = *trace.get(it).unwrap_or(trace.last().unwrap());
                    sum += v / t.cccp_final;
                    n += 1;
                }
            }
            if n > 0 {
                rows.push(ConvergenceRow {
                    algorithm: algo.to_string(),
                    iteration: it + 1,
                    mean_normalized: sum / n as f64,
                    n,
                });
            }
        }
    }
    rows
}

/// Mean number of inner iterations to reach `fraction` of the trace's own
/// converged value, over realizations where the algorithm ran.
pub fn mean_iterations_to_fraction(
    data: &[ConvergenceTraces],
    algo: Algorithm,
    fraction: f64,
) -> Option<f64> {
    let mut total = 0.0;
    let mut n = 0usize;
    for t in data {
        for (a, trace, final_see) in &t.traces {
            if *a != algo || trace.is_empty() || *final_see <= 0.0 {
                continue;
            }
            let target = fraction * final_see;
            let hit = trace
                .iter()
                .position(|&v| v >= target)
                .unwrap_or(trace.len() - 1);
            total += (hit + 1) as f64;
            n += 1;
        }
    }
    (n > 0).then(|| total / n as f64)
}

/// One grid point × algorithm row of an SEE sweep.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub label: String,
    pub algorithm: String,
    pub mean_see: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub n_feasible: usize,
    pub n_total: usize,
}

/// Mean and quartiles of the SEE per grid point per algorithm. Infeasible
/// realizations are excluded from the statistics and counted.
pub fn see_sweep(
    cfg: &ScenarioConfig,
    sweep: &SweepSpec,
    algorithms: &[Algorithm],
) -> Vec<SweepRow> {
    let points = sweep_points(cfg, sweep);
    let mut rows = Vec::new();
    for (label, point_cfg) in &points {
        for &algo in algorithms {
            let sees: Vec<Option<f64>> = (0..point_cfg.n_realizations)
                .into_par_iter()
                .map(|id| {
                    let real = build_realization(point_cfg, id)?;
                    let out = optimize_realization(&real, point_cfg, algo, InitStrategy::Zf);
                    out.see
                })
                .collect();
            let mut feasible: Vec<f64> = sees.iter().flatten().cloned().collect();
            feasible.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let n_feasible = feasible.len();
            let quantile = |q: f64| -> f64 {
                if feasible.is_empty() {
                    f64::NAN
                } else {
                    let pos = q * (n_feasible - 1) as f64;
                    let lo = pos.floor() as usize;
                    let hi = pos.ceil() as usize;
                    let frac = pos - lo as f64;
                    feasible[lo] * (1.0 - frac) + feasible[hi] * frac
                }
            };
            rows.push(SweepRow {
                label: label.clone(),
                algorithm: algo.to_string(),
                mean_see: if feasible.is_empty() {
                    f64::NAN
                } else {
                    feasible.iter().sum::<f64>() / n_feasible as f64
                },
                q25: quantile(0.25),
                median: quantile(0.5),
                q75: quantile(0.75),
                n_feasible,
                n_total: point_cfg.n_realizations,
            });
        }
    }
    rows
}

/// Runs the configured algorithm over all realizations, producing run
/// records and per-realization summaries in realization order.
pub fn optimize_all(cfg: &ScenarioConfig) -> (Vec<RunRecord>, Vec<SummaryRecord>) {
    let mut outcomes: Vec<(usize, OptimizeOutcome)> = (0..cfg.n_realizations)
        .into_par_iter()
        .map(|id| {
            let outcome = match build_realization(cfg, id) {
                Some(real) => optimize_realization(&real, cfg, cfg.algorithm, InitStrategy::Zf),
                None => OptimizeOutcome::infeasible(id, cfg.algorithm),
            };
            (id, outcome)
        })
        .collect();
    outcomes.sort_by_key(|(id, _)| *id);

    let mut records = Vec::new();
    let mut summaries = Vec::new();
    for (id, out) in outcomes {
        summaries.push(out.summary(id, cfg.algorithm));
        records.extend(out.records);
    }
    (records, summaries)
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg() -> ScenarioConfig {
        ScenarioConfig {
            users: 2,
            n_realizations: 6,
            seed: 5,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn wilson_interval_sane() {
        let (lo, hi) = wilson_interval(90, 100);
        assert!(lo > 0.8 && lo < 0.9);
        assert!(hi > 0.9 && hi < 1.0);
        let (lo, hi) = wilson_interval(0, 10);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0);
    }

    #[test]
    fn feasibility_all_ones_at_zero_threshold() {
        let cfg = ScenarioConfig {
            lambda: vec![0.0],
            ..tiny_cfg()
        };
        let sweep = SweepSpec {
            axis: SweepAxis::Threshold,
            values: vec![0.0],
            layouts: vec![],
        };
        let rows = feasibility_probability(&cfg, &sweep);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].probability, 1.0);
    }

    #[test]
    fn feasibility_monotone_in_threshold() {
        let cfg = tiny_cfg();
        let sweep = SweepSpec {
            axis: SweepAxis::Threshold,
            values: vec![0.2, 3.0],
            layouts: vec![],
        };
        let rows = feasibility_probability(&cfg, &sweep);
        assert!(rows[0].probability >= rows[1].probability);
    }

    #[test]
    fn optimize_all_is_deterministic_and_ordered() {
        let cfg = ScenarioConfig {
            n_realizations: 3,
            algorithm: Algorithm::Zf,
            ..tiny_cfg()
        };
        let (r1, s1) = optimize_all(&cfg);
        let (r2, s2) = optimize_all(&cfg);
        assert_eq!(r1.len(), r2.len());
        for (a, b) in r1.iter().zip(&r2) {
            assert_eq!(a.realization, b.realization);
            assert_eq!(a.see.to_bits(), b.see.to_bits());
        }
        assert_eq!(s1.len(), 3);
        for (a, b) in s1.iter().zip(&s2) {
            assert_eq!(a.see.map(f64::to_bits), b.see.map(f64::to_bits));
        }
        // realization ids ascend in the record stream
        let ids: Vec<usize> = r1.iter().map(|r| r.realization).collect();
        let mut sorted = ids.clone();
        sorted.sort();
        assert_eq!(ids, sorted);
    }

    #[test]
    fn convergence_data_collects_traces() {
        let cfg = ScenarioConfig {
            n_realizations: 2,
            ..tiny_cfg()
        };
        let data = convergence_trace(&cfg, InitStrategy::Zf);
        assert!(!data.is_empty());
        for t in &data {
            assert!(t.cccp_final > 0.0);
            assert!(t.traces.iter().any(|(a, _, _)| *a == Algorithm::Cccp));
        }
        let rows = convergence_rows(&data, 10);
        assert!(!rows.is_empty());
        // traces normalized near 1 at the horizon
        let last_cccp = rows
            .iter()
            .filter(|r| r.algorithm == "cccp")
            .last()
            .unwrap();
        assert!(last_cccp.mean_normalized > 0.9);
        assert!(
            mean_iterations_to_fraction(&data, Algorithm::Cccp, 0.95).unwrap() >= 1.0
        );
    }
}
