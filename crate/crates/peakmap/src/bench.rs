//! Simulation benchmark comparing the four incidence inverse methods.
//!
//! Each replicate draws a prevalence peak pair from a truncated bivariate
//! normal, converts it into ground-truth rates through the prevalence
//! inverse, extracts the true weekly incidence peak from a dense simulation,
//! then times every inverse method on that peak and re-simulates its answer.
//! Error statistics are aggregated per method over successful replicates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::invert::{self, InverseMethod};
use crate::peak::{peak_prevalence, PeakIncidence, PeakPrevalence};
use crate::rng::stream_rng;
use crate::sir::{simulate, InitialConditions};
use crate::zdist::TruncatedBvn;

/// Dense grid used to extract "true" and re-simulated weekly peaks. Fine
/// enough that week-level argmax decisions are not perturbed by integration
/// error.
const EXTRACTION_DT: f64 = 1e-2;
const EXTRACTION_HORIZON: f64 = 40.0;

/// Benchmark configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    /// Number of replicates.
    pub n_reps: usize,
    /// Master seed; each replicate derives an independent stream.
    pub seed: u64,
    /// Mean of the (peak value, peak time) sampling distribution.
    pub mu: [f64; 2],
    /// Covariance of the sampling distribution. The lower-triangle
    /// off-diagonal entry is authoritative if the two disagree.
    pub sigma: [[f64; 2]; 2],
    /// Open truncation interval for the peak value; the lower edge defaults
    /// to the initial infected proportion.
    pub ppv_bounds: [f64; 2],
    /// Open truncation interval for the peak time, in weeks.
    pub ppt_bounds: [f64; 2],
    /// Initial compartment proportions shared by every replicate.
    pub init: InitialConditions,
}

impl Default for BenchConfig {
    fn default() -> Self {
        // The default initial state seeds a small epidemic (0.5% infected)
        // so that the sampling box for the peak value sits inside the bulk
        // of the distribution rather than many standard deviations out.
        let init = InitialConditions::new(0.9, 0.005, 0.095)
            .expect("default initial conditions are valid");
        BenchConfig {
            n_reps: 1000,
            seed: 1729,
            mu: [0.0144, 17.9],
            sigma: [[0.000036, -0.0187], [-0.0187, 16.09]],
            ppv_bounds: [init.i0, 1.0],
            ppt_bounds: [1.0, 35.0],
            init,
        }
    }
}

impl BenchConfig {
    /// Validate and build the peak-pair sampler.
    pub fn sampler(&self) -> Result<TruncatedBvn> {
        if self.n_reps < 1 {
            return Err(Error::invalid("n_reps must be at least 1"));
        }
        TruncatedBvn::new(
            self.mu,
            self.sigma,
            [self.ppv_bounds[0], self.ppt_bounds[0]],
            [self.ppv_bounds[1], self.ppt_bounds[1]],
        )
    }
}

/// Aggregated statistics for one inverse method.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodStats {
    pub method: InverseMethod,
    pub n_success: usize,
    pub n_failures: usize,
    /// Mean and standard deviation of |recovered PIV - true PIV|.
    pub mean_piv_error: f64,
    pub sd_piv_error: f64,
    /// Mean and standard deviation of |recovered peak week - true peak
    /// week|, in integer weeks.
    pub mean_pit_error: f64,
    pub sd_pit_error: f64,
    /// Mean and standard deviation of inversion wall time, seconds.
    pub mean_runtime: f64,
    pub sd_runtime: f64,
    /// Mean outer-solver iterations per inversion.
    pub mean_iterations: f64,
}

/// Full benchmark output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchReport {
    pub n_reps: usize,
    pub seed: u64,
    /// Replicates that failed before any method ran (sampling or truth
    /// construction).
    pub n_draw_failures: usize,
    /// Per-method statistics, in [`InverseMethod::ALL`] order.
    pub methods: Vec<MethodStats>,
}

struct MethodOutcome {
    piv_error: f64,
    pit_error: f64,
    runtime: f64,
    iterations: f64,
}

struct Replicate {
    outcomes: [Option<MethodOutcome>; 4],
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Weekly incidence peak of a dense simulation from the given rates.
fn weekly_peak(
    init: &InitialConditions,
    params: &crate::sir::SirParams,
) -> Result<(f64, u32)> {
    let traj = simulate(init, params, EXTRACTION_HORIZON, EXTRACTION_DT)?;
    traj.weekly_incidence_peak()
}

fn run_replicate(config: &BenchConfig, sampler: &TruncatedBvn, index: u64) -> Result<Replicate> {
    let mut rng = stream_rng(config.seed, index);
    let z = sampler.sample(&mut rng)?;
    let (ppv, ppt) = (z[0], z[1]);
    let truth = invert::prevalence_to_params(&PeakPrevalence::observed(ppv, ppt), &config.init)?;

    // Gate: the truth parameters must reproduce the drawn prevalence peak
    // before any method is timed against them.
    let check = peak_prevalence(&config.init, &truth)?;
    if ((check.ppv - ppv) / ppv).abs() > 1e-6 || (check.ppt - ppt).abs() > 1e-2 {
        return Err(Error::invalid(format!(
            "truth round-trip drifted: drew ({ppv}, {ppt}), recovered ({}, {})",
            check.ppv, check.ppt
        )));
    }

    let (true_piv, true_week) = weekly_peak(&config.init, &truth)?;
    let target = PeakIncidence::observed(true_piv, true_week as f64);

    let mut outcomes: [Option<MethodOutcome>; 4] = [None, None, None, None];
    for (k, method) in InverseMethod::ALL.into_iter().enumerate() {
        let Ok(res) = invert::incidence_to_params(&target, &config.init, method) else {
            continue;
        };
        let Ok((piv_hat, week_hat)) = weekly_peak(&config.init, &res.params) else {
            continue;
        };
        outcomes[k] = Some(MethodOutcome {
            piv_error: (piv_hat - true_piv).abs(),
            pit_error: (week_hat as i64 - true_week as i64).unsigned_abs() as f64,
            runtime: res.wall_time,
            iterations: res.iterations as f64,
        });
    }
    Ok(Replicate { outcomes })
}

/// Run the full benchmark. Replicates execute in parallel on the global
/// worker pool; every replicate owns an rng stream derived from
/// `(seed, index)`, so error statistics are reproducible regardless of
/// scheduling (runtimes, being wall-clock, are not).
pub fn run_benchmark(config: &BenchConfig) -> Result<BenchReport> {
    let sampler = config.sampler()?;
    let replicates: Vec<Result<Replicate>> = (0..config.n_reps as u64)
        .into_par_iter()
        .map(|k| run_replicate(config, &sampler, k))
        .collect();

    let mut n_draw_failures = 0usize;
    let mut per_method: [(Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>); 4] = Default::default();
    let mut failures = [0usize; 4];
    for rep in &replicates {
        match rep {
            Err(_) => n_draw_failures += 1,
            Ok(r) => {
                for k in 0..4 {
                    match &r.outcomes[k] {
                        Some(o) => {
                            per_method[k].0.push(o.piv_error);
                            per_method[k].1.push(o.pit_error);
                            per_method[k].2.push(o.runtime);
                            per_method[k].3.push(o.iterations);
                        }
                        None => failures[k] += 1,
                    }
                }
            }
        }
    }

    let methods = InverseMethod::ALL
        .into_iter()
        .enumerate()
        .map(|(k, method)| {
            let (mean_piv_error, sd_piv_error) = mean_sd(&per_method[k].0);
            let (mean_pit_error, sd_pit_error) = mean_sd(&per_method[k].1);
            let (mean_runtime, sd_runtime) = mean_sd(&per_method[k].2);
            let (mean_iterations, _) = mean_sd(&per_method[k].3);
            MethodStats {
                method,
                n_success: per_method[k].0.len(),
                n_failures: failures[k],
                mean_piv_error,
                sd_piv_error,
                mean_pit_error,
                sd_pit_error,
                mean_runtime,
                sd_runtime,
                mean_iterations,
            }
        })
        .collect();

    Ok(BenchReport { n_reps: config.n_reps, seed: config.seed, n_draw_failures, methods })
}

impl BenchReport {
    /// Aligned-column text table: one column per method, one row per
    /// statistic.
    #[must_use]
    pub fn table(&self) -> String {
        let mut out = String::new();
        let headers: Vec<&str> = self.methods.iter().map(|m| m.method.label()).collect();
        out.push_str(&format!("{:<22}", "Quantity"));
        for h in &headers {
            out.push_str(&format!(" {h:>18}"));
        }
        out.push('\n');
        let rows: [(&str, Box<dyn Fn(&MethodStats) -> String>); 8] = [
            ("Avg. PIV Error", Box::new(|m| format!("{:.3e}", m.mean_piv_error))),
            ("Std. Dev. PIV Error", Box::new(|m| format!("{:.3e}", m.sd_piv_error))),
            ("Avg. PIT Error", Box::new(|m| format!("{:.3}", m.mean_pit_error))),
            ("Std. Dev. PIT Error", Box::new(|m| format!("{:.3}", m.sd_pit_error))),
            ("Avg. Runtime (s)", Box::new(|m| format!("{:.4e}", m.mean_runtime))),
            ("Std. Dev. Runtime (s)", Box::new(|m| format!("{:.4e}", m.sd_runtime))),
            ("Avg. Solver Iters", Box::new(|m| format!("{:.1}", m.mean_iterations))),
            ("Failures", Box::new(|m| m.n_failures.to_string())),
        ];
        for (name, fmt) in rows {
            out.push_str(&format!("{name:<22}"));
            for m in &self.methods {
                out.push_str(&format!(" {:>18}", fmt(m)));
            }
            out.push('\n');
        }
        out.push_str(&format!(
            "replicates: {} (draw failures: {}), seed: {}\n",
            self.n_reps, self.n_draw_failures, self.seed
        ));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn test_default_config_sampler_valid() {
        let config = BenchConfig::default();
        let sampler = config.sampler().unwrap();
        let mut rng = stream_rng(1, 1);
        let z = sampler.sample(&mut rng).unwrap();
        assert!(z[0] > config.init.i0 && z[0] < 1.0);
        assert!(z[1] > 1.0 && z[1] < 35.0);
    }

    #[test]
    fn test_rejects_zero_reps() {
        let config = BenchConfig { n_reps: 0, ..BenchConfig::default() };
        assert!(config.sampler().is_err());
    }

    #[test]
    fn test_bench_error_statistics_deterministic() {
        let config = BenchConfig { n_reps: 4, seed: 7, ..BenchConfig::default() };
        let a = run_benchmark(&config).unwrap();
        let b = run_benchmark(&config).unwrap();
        assert_eq!(a.n_draw_failures, b.n_draw_failures);
        for (ma, mb) in a.methods.iter().zip(&b.methods) {
            assert_eq!(ma.n_success, mb.n_success);
            assert_eq!(ma.mean_piv_error, mb.mean_piv_error);
            assert_eq!(ma.sd_piv_error, mb.sd_piv_error);
            assert_eq!(ma.mean_pit_error, mb.mean_pit_error);
            assert_eq!(ma.sd_pit_error, mb.sd_pit_error);
        }
    }

    #[test]
    #[ignore = "diagnostic: full benchmark table at configurable size"]
    fn diag_bench_table() {
        let n_reps = std::env::var("PEAKMAP_BENCH_REPS")
            .ok()
            .and_then(|v| v.parse().ok())
            .unwrap_or(200);
        let config = BenchConfig { n_reps, ..BenchConfig::default() };
        let begin = std::time::Instant::now();
        let report = run_benchmark(&config).unwrap();
        println!("{}", report.table());
        println!("total wall time: {:.1}s", begin.elapsed().as_secs_f64());
    }

    #[test]
    fn test_small_bench_structure() {
        let config = BenchConfig { n_reps: 6, seed: 3, ..BenchConfig::default() };
        let report = run_benchmark(&config).unwrap();
        assert_eq!(report.methods.len(), 4);
        let ok_reps = config.n_reps - report.n_draw_failures;
        for m in &report.methods {
            assert_eq!(m.n_success + m.n_failures, ok_reps);
            if m.n_success > 0 {
                assert!(m.mean_piv_error.is_finite());
                assert!(m.mean_pit_error.is_finite());
                assert!(m.mean_runtime > 0.0);
            }
        }
        // The exact-time-map and full-simulation methods must reproduce the
        // weekly peak exactly even in a tiny run.
        assert_eq!(report.methods[0].mean_pit_error, 0.0);
        assert_eq!(report.methods[3].mean_pit_error, 0.0);
        let table = report.table();
        assert!(table.contains("Compute Integral"));
        assert!(table.contains("Avg. PIT Error"));
        let json = serde_json::to_string(&report).unwrap();
        let back: BenchReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.methods.len(), 4);
    }
}
