//! Attention kernel benchmark: wall-clock medians, multiply-accumulate
//! counts and log-log scaling fits.

use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::attention::{
    attend, attention_macs, AttentionConfig, AttentionError, AttentionMode, RelativeEmbeddings,
};
use crate::tensor::{mac_count, reset_mac_counter, Tensor};

/// Fitted slope above which windowed scaling is flagged.
pub const WINDOWED_SLOPE_LIMIT: f64 = 1.4;
/// Fitted slope below which dense scaling is flagged.
pub const DENSE_SLOPE_FLOOR: f64 = 1.7;
const MIN_TRIAL_SECONDS: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchConfig {
    pub lengths: Vec<usize>,
    pub window: usize,
    pub heads: usize,
    pub head_dim: usize,
    pub modes: Vec<AttentionMode>,
    pub trials: usize,
    pub seed: u64,
    /// Also time forward + backward.
    pub backward: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            lengths: vec![256, 512, 1024, 2048, 4096],
            window: 64,
            heads: 1,
            head_dim: 64,
            modes: vec![AttentionMode::DenseCausal, AttentionMode::SlidingWindow],
            trials: 5,
            seed: 0,
            backward: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRecord {
    pub mode: AttentionMode,
    pub n: usize,
    pub window: usize,
    pub forward_ms: f64,
    pub forward_backward_ms: Option<f64>,
    /// Calls averaged inside each timed trial.
    pub repetitions: usize,
    pub trials: usize,
    pub macs: u64,
    /// The analytic count from shapes; equal to `macs` for a correct kernel.
    pub predicted_macs: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeFit {
    pub mode: AttentionMode,
    pub forward_slope: f64,
    pub forward_backward_slope: Option<f64>,
    pub mac_slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Speedup {
    pub n: usize,
    /// dense time / windowed time, forward only.
    pub forward: f64,
    pub forward_backward: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub records: Vec<BenchRecord>,
    pub fits: Vec<ModeFit>,
    pub speedups: Vec<Speedup>,
    /// Scaling outside the expected envelope; usually a noisy machine.
    pub anomalies: Vec<String>,
}

/// Least-squares slope of `ln y` on `ln x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = points.iter().map(|&(x, y)| (x.ln(), y.ln())).unzip();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 0 {
        (v[m - 1] + v[m]) / 2.0
    } else {
        v[m]
    }
}

/// Median seconds per call of `f` over `trials` timed trials, after one
/// discarded warmup call. Each trial repeats `f` until it spans at least
/// a millisecond.
fn time_median(trials: usize, mut f: impl FnMut()) -> (f64, usize) {
    f();
    let t = Instant::now();
    f();
    let once = t.elapsed().as_secs_f64();
    let reps = if once >= MIN_TRIAL_SECONDS {
        1
    } else {
        (MIN_TRIAL_SECONDS / once.max(1e-9)).ceil() as usize
    };
    let samples = (0..trials)
        .map(|_| {
            let t = Instant::now();
            for _ in 0..reps {
                f();
            }
            t.elapsed().as_secs_f64() / reps as f64
        })
        .collect();
    (median(samples), reps)
}

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Vec<f32> {
    (0..shape.iter().product()).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Runs every (mode, n) cell on identical inputs, single-threaded.
pub fn bench_attention(cfg: &BenchConfig) -> Result<BenchReport, AttentionError> {
    if cfg.trials < 5 {
        return Err(AttentionError::InvalidConfig(format!("need at least 5 trials, got {}", cfg.trials)));
    }
    let ow = cfg.window / 2;
    if let Some(&bad) = cfg.lengths.iter().find(|&&n| ow == 0 || n % ow != 0) {
        return Err(AttentionError::Precondition(format!("length {bad} is not a multiple of w/2 = {ow}")));
    }
    let (h, s) = (cfg.heads, cfg.head_dim);
    let mut records = Vec::new();
    for &n in &cfg.lengths {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ n as u64);
        let shape = [h, n, s];
        let (qd, kd, vd) = (random(&shape, &mut rng), random(&shape, &mut rng), random(&shape, &mut rng));
        let rel_table = random(&[n, s], &mut rng);
        for &mode in &cfg.modes {
            let acfg = AttentionConfig {
                attention_window: cfg.window,
                ..AttentionConfig::new(mode, h, s)
            };
            let make = |grad: bool| -> Result<_, AttentionError> {
                let t = |d: &Vec<f32>, sh: &[usize]| {
                    if grad {
                        Tensor::parameter(d.clone(), sh)
                    } else {
                        Tensor::from_vec(d.clone(), sh)
                    }
                };
                Ok((
                    t(&qd, &shape)?,
                    t(&kd, &shape)?,
                    t(&vd, &shape)?,
                    RelativeEmbeddings::new(t(&rel_table, &[n, s])?)?,
                ))
            };
            let (q, k, v, rel) = make(false)?;
            let run = |q: &Tensor<f32>, k: &Tensor<f32>, v: &Tensor<f32>, rel: &RelativeEmbeddings<f32>| {
                attend(q, k, v, &acfg, Some(rel), None).expect("validated inputs").output
            };
            reset_mac_counter();
            run(&q, &k, &v, &rel);
            let macs = mac_count();
            let (fwd, reps) = time_median(cfg.trials, || {
                std::hint::black_box(run(&q, &k, &v, &rel));
            });
            let fb = if cfg.backward {
                let (q, k, v, rel) = make(true)?;
                let (t, _) = time_median(cfg.trials, || {
                    let out = run(&q, &k, &v, &rel);
                    std::hint::black_box(out.sum().backward().expect("scalar"));
                });
                Some(t * 1e3)
            } else {
                None
            };
            records.push(BenchRecord {
                mode,
                n,
                window: cfg.window,
                forward_ms: fwd * 1e3,
                forward_backward_ms: fb,
                repetitions: reps,
                trials: cfg.trials,
                macs,
                predicted_macs: attention_macs(mode, n, h, s, cfg.window),
            });
        }
    }

    let mut fits = Vec::new();
    let mut anomalies = Vec::new();
    if cfg.lengths.len() >= 2 {
        for &mode in &cfg.modes {
            let rs: Vec<&BenchRecord> = records.iter().filter(|r| r.mode == mode).collect();
            let pts = |f: &dyn Fn(&BenchRecord) -> f64| rs.iter().map(|r| (r.n as f64, f(r))).collect::<Vec<_>>();
            let fit = ModeFit {
                mode,
                forward_slope: log_log_slope(&pts(&|r| r.forward_ms)),
                forward_backward_slope: cfg
                    .backward
                    .then(|| log_log_slope(&pts(&|r| r.forward_backward_ms.unwrap_or(f64::NAN)))),
                mac_slope: log_log_slope(&pts(&|r| r.macs as f64)),
            };
            match mode {
                AttentionMode::SlidingWindow if fit.forward_slope >= WINDOWED_SLOPE_LIMIT => anomalies.push(format!(
                    "windowed wall-clock slope {:.2} >= {WINDOWED_SLOPE_LIMIT}",
                    fit.forward_slope
                )),
                AttentionMode::DenseCausal if fit.forward_slope <= DENSE_SLOPE_FLOOR => anomalies.push(format!(
                    "dense wall-clock slope {:.2} <= {DENSE_SLOPE_FLOOR}",
                    fit.forward_slope
                )),
                _ => {}
            }
            fits.push(fit);
        }
        if cfg.lengths.len() < 4 {
            anomalies.push(format!("slopes fitted over only {} lengths", cfg.lengths.len()));
        }
    }
    for r in &records {
        if r.macs != r.predicted_macs {
            anomalies.push(format!(
                "{} n={}: counted {} MACs, shapes predict {}",
                r.mode, r.n, r.macs, r.predicted_macs
            ));
        }
    }

    let find = |mode, n| records.iter().find(|r| r.mode == mode && r.n == n);
    let speedups = cfg
        .lengths
        .iter()
        .filter_map(|&n| {
            let d = find(AttentionMode::DenseCausal, n)?;
            let w = find(AttentionMode::SlidingWindow, n)?;
            Some(Speedup {
                n,
                forward: d.forward_ms / w.forward_ms,
                forward_backward: d.forward_backward_ms.zip(w.forward_backward_ms).map(|(a, b)| a / b),
            })
        })
        .collect();

    Ok(BenchReport {
        config: cfg.clone(),
        records,
        fits,
        speedups,
        anomalies,
    })
}

impl BenchReport {
    /// One JSON object per record, fit and speedup.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        let mut line = |kind: &str, v: serde_json::Value| {
            let mut obj = serde_json::json!({ "kind": kind });
            if let (Some(o), serde_json::Value::Object(fields)) = (obj.as_object_mut(), v) {
                o.extend(fields);
            }
            out.push_str(&obj.to_string());
            out.push('\n');
        };
        for r in &self.records {
            line("record", serde_json::to_value(r).expect("serializable"));
        }
        for f in &self.fits {
            line("fit", serde_json::to_value(f).expect("serializable"));
        }
        for s in &self.speedups {
            line("speedup", serde_json::to_value(s).expect("serializable"));
        }
        for a in &self.anomalies {
            line("anomaly", serde_json::json!({ "message": a }));
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut t = String::new();
        let _ = writeln!(
            t,
            "{:<15} {:>6} {:>5} {:>12} {:>12} {:>14}",
            "mode", "n", "w", "fwd ms", "fwd+bwd ms", "MACs"
        );
        for r in &self.records {
            let fb = r.forward_backward_ms.map_or("-".to_string(), |v| format!("{v:.3}"));
            let _ = writeln!(
                t,
                "{:<15} {:>6} {:>5} {:>12.3} {:>12} {:>14}",
                r.mode.to_string(),
                r.n,
                r.window,
                r.forward_ms,
                fb,
                r.macs
            );
        }
        for f in &self.fits {
            let fb = f.forward_backward_slope.map_or("-".to_string(), |v| format!("{v:.2}"));
            let _ = writeln!(
                t,
                "slope {:<15} time {:.2}  fwd+bwd {}  MACs {:.2}",
                f.mode.to_string(),
                f.forward_slope,
                fb,
                f.mac_slope
            );
        }
        for s in &self.speedups {
            let fb = s.forward_backward.map_or("-".to_string(), |v| format!("{v:.2}x"));
            let _ = writeln!(t, "kernel speedup n={:<6} fwd {:.2}x  fwd+bwd {}", s.n, s.forward, fb);
        }
        for a in &self.anomalies {
            let _ = writeln!(t, "ANOMALY: {a}");
        }
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_exact_power_laws() {
        let pts: Vec<(f64, f64)> = [256.0, 512.0, 1024.0, 2048.0].iter().map(|&n| (n, 3.0 * n * n)).collect();
        assert!((log_log_slope(&pts) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn dense_mac_count_at_1024() {
        assert_eq!(attention_macs(AttentionMode::DenseCausal, 1024, 1, 64, 0), 2 * 1024 * 1024 * 64);
    }

    #[test]
    fn small_grid_counts_match_shapes() {
        let cfg = BenchConfig {
            lengths: vec![64, 128, 256, 512],
            window: 16,
            heads: 2,
            head_dim: 8,
            modes: vec![AttentionMode::DenseCausal, AttentionMode::SlidingWindow, AttentionMode::Relative],
            trials: 5,
            seed: 1,
            backward: false,
        };
        let report = bench_attention(&cfg).unwrap();
        assert_eq!(report.records.len(), 12);
        for r in &report.records {
            assert_eq!(r.macs, r.predicted_macs, "{:?}", r);
        }
        let fit = |m| report.fits.iter().find(|f| f.mode == m).unwrap().mac_slope;
        assert!((fit(AttentionMode::DenseCausal) - 2.0).abs() < 1e-9);
        // C = n/ow - 1 chunks bends the curve slightly above 1 at small n
        assert!((fit(AttentionMode::SlidingWindow) - 1.0).abs() < 0.1);
        assert_eq!(report.to_json_lines().lines().count(), 12 + 3 + 4 + report.anomalies.len());
    }

    #[test]
    fn misaligned_lengths_rejected() {
        let cfg = BenchConfig {
            lengths: vec![100],
            window: 64,
            ..BenchConfig::default()
        };
        assert!(bench_attention(&cfg).is_err());
    }
}
