//! Self-contained correctness checks run by the `verify` subcommand and the
//! acceptance suite. Everything here uses synthetic inputs only.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::attention::{
    band_mask_oracle, masked_attention, relative_attention, sliding_window_attention, AttentionConfig, AttentionMode,
    RelativeEmbeddings,
};
use crate::midi::{
    decode_events, encode_events, parse_midi, write_midi, EventVocab, MidiError, Note, WRITE_TEMPO,
    WRITE_TICKS_PER_QUARTER,
};
use crate::model::{LstmConfig, Model, ModelConfig, ModelSpec, ParamRole};
use crate::tensor::{check_gradients, Tensor};
use crate::training::{early_stop_update, init_parameters, xavier_bound, EarlyStopState, InitScheme};

pub const WINDOW_TOLERANCE: f64 = 1e-5;
pub const RELATIVE_TOLERANCE: f64 = 1e-5;
pub const GRADIENT_TOLERANCE: f64 = 1e-4;
pub const GRADIENT_STEP: f64 = 1e-5;
pub const EARLY_STOP_PATIENCE: usize = 200;
/// Allowed relative deviation of the embedding std from `d^-1/2`.
pub const INIT_STD_TOLERANCE: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

fn timed(id: u8, name: &'static str, f: impl FnOnce() -> Result<String, String>) -> CheckResult {
    let t = Instant::now();
    let r = f();
    let seconds = t.elapsed().as_secs_f64();
    let (passed, detail) = match r {
        Ok(d) => (true, d),
        Err(d) => (false, d),
    };
    CheckResult {
        id,
        name,
        passed,
        detail,
        seconds,
    }
}

fn random_vec(len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_vec(random_vec(shape.iter().product(), rng), shape).expect("shape matches data")
}

fn max_abs_diff(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (f64::from(*x) - f64::from(*y)).abs())
        .fold(0.0, f64::max)
}

/// Windowed kernel against dense attention under the explicit band mask,
/// in 32-bit, over the full (n, w, heads, dilation, causal) grid.
pub fn check_window_oracle() -> CheckResult {
    timed(1, "sliding-window kernel matches band-mask oracle", || {
        let head_dim = 16;
        let mut worst = (0.0, String::new());
        let mut cases = 0;
        for n in [16, 32, 64, 128, 256] {
            for w in [2, 4, 8, 16, 64].into_iter().filter(|&w| w <= n) {
                for heads in [1, 4] {
                    for dilation in [1, 2] {
                        for causal in [true, false] {
                            let mut rng = ChaCha8Rng::seed_from_u64((n * 1000 + w * 10 + heads + dilation) as u64);
                            let shape = [heads, n, head_dim];
                            let [q, k, v] = [0; 3].map(|_| random_tensor(&shape, &mut rng).cast::<f32>());
                            let cfg = AttentionConfig::sliding(heads, head_dim, w)
                                .with_dilation(dilation)
                                .with_causal(causal);
                            let label = format!("n={n} w={w} h={heads} d={dilation} causal={causal}");
                            let got = sliding_window_attention(&q, &k, &v, &cfg, None)
                                .map_err(|e| format!("{label}: {e}"))?
                                .output;
                            let mask = band_mask_oracle::<f32>(n, w, dilation, causal);
                            let want = masked_attention(&q, &k, &v, &mask, 0.0, None).map_err(|e| format!("{label}: {e}"))?;
                            let d = max_abs_diff(got.data(), want.data());
                            if d > worst.0 {
                                worst = (d, label);
                            }
                            cases += 1;
                        }
                    }
                }
            }
        }
        let msg = format!("{cases} cases, max abs diff {:.2e} ({})", worst.0, worst.1);
        if worst.0 <= WINDOW_TOLERANCE {
            Ok(msg)
        } else {
            Err(msg)
        }
    })
}

/// Per-pair loop: logits `(q_i·k_j + q_i·E[max_len-1-(i-j)]) / sqrt(s)`
/// for `j <= i`, softmax, weighted sum of values. All in f64.
pub fn relative_attention_loop(q: &[f64], k: &[f64], v: &[f64], table: &[f64], h: usize, n: usize, s: usize) -> Vec<f64> {
    let max_len = table.len() / s;
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut out = vec![0.0; h * n * s];
    for hh in 0..h {
        fn slice(t: &[f64], start: usize, s: usize) -> &[f64] {
            &t[start * s..(start + 1) * s]
        }
        let row = |t, i| slice(t, hh * n + i, s);
        for i in 0..n {
            let qi = row(q, i);
            let logits: Vec<f64> = (0..=i)
                .map(|j| {
                    let e = &table[(max_len - 1 - (i - j)) * s..(max_len - (i - j)) * s];
                    (dot(qi, row(k, j)) + dot(qi, e)) / (s as f64).sqrt()
                })
                .collect();
            let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let ex: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
            let z: f64 = ex.iter().sum();
            for (j, e) in ex.iter().enumerate() {
                for (o, vj) in out[(hh * n + i) * s..][..s].iter_mut().zip(row(v, j)) {
                    *o += e / z * vj;
                }
            }
        }
    }
    out
}

/// Skew-based relative attention against the per-pair loop, 32-bit kernel.
pub fn check_relative_oracle() -> CheckResult {
    timed(2, "relative attention matches per-pair loop", || {
        let (h, s, max_len) = (2, 8, 64);
        let mut worst = 0.0f64;
        let mut cases = 0;
        for seed in 0..24u64 {
            for n in [1, 5, 17, 40, 64] {
                let mut rng = ChaCha8Rng::seed_from_u64(seed * 131 + n as u64);
                let shape = [h, n, s];
                let [q, k, v] = [0; 3].map(|_| random_vec(h * n * s, &mut rng));
                let table = random_vec(max_len * s, &mut rng);
                let want = relative_attention_loop(&q, &k, &v, &table, h, n, s);
                let t = |d: &[f64], sh: &[usize]| Tensor::<f64>::from_vec(d.to_vec(), sh).expect("shape").cast::<f32>();
                let rel = RelativeEmbeddings::new(t(&table, &[max_len, s])).map_err(|e| e.to_string())?;
                let cfg = AttentionConfig::new(AttentionMode::Relative, h, s);
                let got = relative_attention(&t(&q, &shape), &t(&k, &shape), &t(&v, &shape), &rel, &cfg, None)
                    .map_err(|e| format!("seed {seed} n={n}: {e}"))?;
                for (g, w) in got.data().iter().zip(&want) {
                    worst = worst.max((f64::from(*g) - w).abs());
                }
                cases += 1;
            }
        }
        let msg = format!("{cases} cases over 24 seeds, max abs diff {worst:.2e}");
        if worst <= RELATIVE_TOLERANCE {
            Ok(msg)
        } else {
            Err(msg)
        }
    })
}

type LossFn<'a> = Box<dyn Fn(&[Tensor<f64>]) -> crate::tensor::Result<Tensor<f64>> + 'a>;

fn named(ts: Vec<(&str, Tensor<f64>)>) -> Vec<(String, Tensor<f64>)> {
    ts.into_iter().map(|(n, t)| (n.to_string(), t)).collect()
}

fn attention_err(e: crate::attention::AttentionError) -> crate::tensor::TensorError {
    match e {
        crate::attention::AttentionError::Tensor(t) => t,
        other => crate::tensor::TensorError::Dimension(other.to_string()),
    }
}

/// Finite differences for every differentiable op, the three attention
/// kernels, and full two-layer models of each family.
pub fn check_gradient_suite() -> CheckResult {
    timed(3, "finite-difference gradients", || {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut r = |shape: &[usize]| random_tensor(shape, &mut rng);
        let (a, b, c) = (r(&[2, 3, 4]), r(&[4, 5]), r(&[3, 4]));
        let (gamma, beta, table) = (r(&[4]), r(&[4]), r(&[6, 4]));
        let (w5, w3, w4, we) = (r(&[2, 3, 5]), r(&[2, 3, 3]), r(&[2, 3, 4]), r(&[5, 4]));
        let (q, k, v) = (r(&[2, 8, 4]), r(&[2, 8, 4]), r(&[2, 8, 4]));
        let rel_table = r(&[10, 4]);
        let wo = r(&[2, 8, 4]);
        let mask = Tensor::from_f64(&[1.0, 0.0, 1.0, 1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 1.0, 0.0], &[3, 4]).expect("shape");
        let drop_seed: u64 = rng.random();
        let w4d = w4.clone();

        let mut cases: Vec<(String, Vec<(String, Tensor<f64>)>, LossFn)> = vec![
            ("matmul".into(), named(vec![("a", a.clone()), ("b", b.clone())]), Box::new(|p| Ok(p[0].matmul(&p[1])?.mul(&w5)?.sum()))),
            ("matmul_nt".into(), named(vec![("a", a.clone()), ("c", c.clone())]), Box::new(|p| Ok(p[0].matmul_nt(&p[1])?.mul(&w3)?.sum()))),
            (
                "add/sub/mul".into(),
                named(vec![("a", a.clone()), ("c", c.clone())]),
                Box::new(|p| Ok(p[0].add(&p[1])?.mul(&p[1])?.sub(&p[0])?.mul(&w4)?.sum())),
            ),
            (
                "sigmoid/tanh/exp/scale".into(),
                named(vec![("a", a.clone())]),
                Box::new(|p| Ok(p[0].sigmoid().add(&p[0].tanh())?.add(&p[0].exp().scale(0.3))?.mul(&w4)?.mean())),
            ),
            ("relu".into(), named(vec![("a", a.clone())]), Box::new(|p| Ok(p[0].add_scalar(0.05).relu().neg().mul(&w4)?.sum()))),
            (
                "masked_softmax".into(),
                named(vec![("a", a.clone())]),
                Box::new(|p| Ok(p[0].masked_softmax(&mask)?.probs.mul(&w4)?.sum())),
            ),
            (
                "layer_norm".into(),
                named(vec![("a", a.clone()), ("gamma", gamma), ("beta", beta)]),
                Box::new(|p| Ok(p[0].layer_norm(&p[1], &p[2], 1e-5)?.mul(&w4)?.sum())),
            ),
            ("embedding".into(), named(vec![("table", table)]), Box::new(|p| Ok(p[0].embedding(&[0, 3, 3, 5, 1])?.mul(&we)?.sum()))),
            ("cross_entropy".into(), named(vec![("logits", c.clone())]), Box::new(|p| Ok(p[0].cross_entropy(&[1, 0, 3], Some(0))?.0))),
            (
                "permute/transpose/reshape/narrow/concat".into(),
                named(vec![("a", a.clone())]),
                Box::new(|p| {
                    let t = p[0].permute(&[2, 1, 0])?.reshape(&[4, 6])?.narrow(1, 1, 3)?;
                    let both = Tensor::concat(&[t.clone(), t.scale(2.0)])?.reshape(&[8, 3])?.transpose(0, 1)?;
                    Ok(both.mul(&both)?.sum())
                }),
            ),
            (
                "dropout".into(),
                named(vec![("a", a.clone())]),
                Box::new(move |p| {
                    let mut r = ChaCha8Rng::seed_from_u64(drop_seed);
                    Ok(p[0].dropout(0.3, &mut r).mul(&w4d)?.sum())
                }),
            ),
        ];
        for dilation in [1, 2] {
            let wo = wo.clone();
            cases.push((
                format!("sliding_window_attention (dilation {dilation})"),
                named(vec![("q", q.clone()), ("k", k.clone()), ("v", v.clone())]),
                Box::new(move |p| {
                    let cfg = AttentionConfig::sliding(2, 4, 4).with_dilation(dilation);
                    let o = sliding_window_attention(&p[0], &p[1], &p[2], &cfg, None).map_err(attention_err)?;
                    Ok(o.output.mul(&wo)?.sum())
                }),
            ));
        }
        let wo2 = wo.clone();
        cases.push((
            "relative_attention".into(),
            named(vec![("q", q.clone()), ("k", k.clone()), ("v", v.clone()), ("table", rel_table)]),
            Box::new(move |p| {
                let rel = RelativeEmbeddings::new(p[3].clone()).map_err(attention_err)?;
                let cfg = AttentionConfig::new(AttentionMode::Relative, 2, 4);
                Ok(relative_attention(&p[0], &p[1], &p[2], &rel, &cfg, None).map_err(attention_err)?.mul(&wo2)?.sum())
            }),
        ));

        let tokens = [1usize, 4, 9, 2, 2, 7, 0, 10];
        let targets = [4usize, 9, 2, 2, 7, 0, 10, 3];
        let mut specs: Vec<ModelSpec> = [AttentionMode::Relative, AttentionMode::SlidingWindow, AttentionMode::DenseCausal]
            .into_iter()
            .map(|m| ModelSpec::Transformer(ModelConfig::new(11, 2, 2, 8, 12, 8, m).with_window(4)))
            .collect();
        specs.push(ModelSpec::Lstm(LstmConfig {
            vocab_size: 11,
            embed_dim: 6,
            hidden_dim: 5,
            num_layers: 2,
            dropout_p: 0.0,
        }));
        for (i, spec) in specs.iter().enumerate() {
            let mut model = Model::<f64>::new(spec).map_err(|e| e.to_string())?;
            init_parameters(&mut model, InitScheme::XavierSplit, 40 + i as u64);
            // nonzero biases and norm parameters so their gradients are exercised
            let mut prng = ChaCha8Rng::seed_from_u64(70 + i as u64);
            for p in model.params_mut().iter_mut() {
                if matches!(p.role, ParamRole::Bias | ParamRole::NormBias | ParamRole::NormGain) {
                    p.tensor.data_mut().iter_mut().for_each(|x| *x += prng.random_range(-0.3..0.3));
                }
            }
            let params: Vec<(String, Tensor<f64>)> = model.params().iter().map(|p| (p.name.clone(), p.tensor.clone())).collect();
            cases.push((
                format!("2-layer {} model", spec.label()),
                params,
                Box::new(move |ts| {
                    let mut m = model.clone();
                    m.params_mut()
                        .replace_all(ts)
                        .map_err(|e| crate::tensor::TensorError::Dimension(e.to_string()))?;
                    let logits = m.forward(&tokens, None).map_err(|e| crate::tensor::TensorError::Dimension(e.to_string()))?;
                    Ok(logits.cross_entropy(&targets, None)?.0)
                }),
            ));
        }

        let mut worst = (0.0f64, String::new());
        let mut failures = Vec::new();
        for (name, params, f) in &cases {
            let report = check_gradients(params, GRADIENT_STEP, f).map_err(|e| format!("{name}: {e}"))?;
            if report.max_rel_error > worst.0 {
                worst = (report.max_rel_error, name.clone());
            }
            if !report.passes(GRADIENT_TOLERANCE) {
                let (param, err) = report
                    .per_parameter_errors
                    .iter()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .expect("at least one parameter");
                failures.push(format!("{name} ({param}: {err:.2e})"));
            }
        }
        let msg = format!("{} checks, worst rel err {:.2e} ({})", cases.len(), worst.0, worst.1);
        if failures.is_empty() {
            Ok(msg)
        } else {
            Err(format!("{msg}; failing: {}", failures.join(", ")))
        }
    })
}

/// Index at which the state machine must first report `stopped`: the end of
/// the first run of `patience` values none of which beats everything before
/// the run.
pub fn first_stop_reference(losses: &[f64], patience: usize) -> Option<usize> {
    let mut best_before = f64::INFINITY;
    for start in 0..losses.len() {
        let end = start + patience;
        if end > losses.len() {
            return None;
        }
        let run = &losses[start..end];
        if !run.iter().any(|&l| l < best_before) {
            return Some(end - 1);
        }
        if losses[start] < best_before {
            best_before = losses[start];
        }
    }
    None
}

/// Randomized sequences mixing plateaus, improvements at chosen offsets and
/// NaN evaluations.
pub fn check_early_stopping() -> CheckResult {
    timed(6, "early-stopping state machine", || {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p = EARLY_STOP_PATIENCE;
        let mut stops = 0;
        let sequences = 600;
        for case in 0..sequences {
            let len = rng.random_range(1..1200);
            let mut losses = Vec::with_capacity(len);
            let mut level = 5.0;
            while losses.len() < len {
                // a plateau of length near the patience boundary, then maybe an improvement
                let plateau = match rng.random_range(0..4) {
                    0 => p - 1,
                    1 => p,
                    2 => rng.random_range(1..p),
                    _ => rng.random_range(p..2 * p),
                };
                for _ in 0..plateau {
                    let l = match rng.random_range(0..20) {
                        0 => f64::NAN,
                        1 => level, // ties never count as improvement
                        _ => level + rng.random_range(0.0..1.0),
                    };
                    losses.push(l);
                }
                level -= rng.random_range(0.01..0.2);
                losses.push(level);
            }
            losses.truncate(len);
            let want = first_stop_reference(&losses, p);
            let mut state = EarlyStopState::default();
            let got = losses.iter().position(|&l| {
                state = early_stop_update(state, l, p);
                state.stopped
            });
            if got != want {
                return Err(format!("case {case} (len {len}): stopped at {got:?}, expected {want:?}"));
            }
            stops += usize::from(got.is_some());
        }
        Ok(format!("{sequences} sequences agree with the windowed reference ({stops} stop)"))
    })
}

/// Embedding std against `d^-1/2`, and every Xavier-initialised entry
/// inside its bound.
pub fn check_init_statistics() -> CheckResult {
    timed(7, "initialization statistics", || {
        let spec = ModelSpec::Transformer(ModelConfig::default());
        let mut model = Model::<f32>::new(&spec).map_err(|e| e.to_string())?;
        init_parameters(&mut model, InitScheme::XavierSplit, 7);
        let mut detail = Vec::new();
        let mut xavier_entries = 0usize;
        for p in model.params().iter() {
            let shape = p.tensor.shape();
            let data = p.tensor.data();
            match p.role {
                ParamRole::Embedding => {
                    let n = data.len() as f64;
                    if n < 1e4 {
                        return Err(format!("{} has only {n} entries", p.name));
                    }
                    let mean = data.iter().map(|&x| f64::from(x)).sum::<f64>() / n;
                    let std = (data.iter().map(|&x| (f64::from(x) - mean).powi(2)).sum::<f64>() / n).sqrt();
                    let target = (shape[1] as f64).powf(-0.5);
                    let rel = (std - target).abs() / target;
                    detail.push(format!("{} std {std:.4} vs {target:.4}", p.name));
                    if rel > INIT_STD_TOLERANCE {
                        return Err(format!("{} std {std:.4} deviates {:.1}% from {target:.4}", p.name, rel * 100.0));
                    }
                }
                ParamRole::Weight | ParamRole::RelativeTable => {
                    let bound = xavier_bound(shape[0], shape[1]);
                    if let Some(x) = data.iter().find(|&&x| f64::from(x).abs() > bound) {
                        return Err(format!("{} entry {x} exceeds Xavier bound {bound:.4}", p.name));
                    }
                    xavier_entries += data.len();
                }
                _ => {}
            }
        }
        if xavier_entries < 10_000 {
            return Err(format!("only {xavier_entries} Xavier entries sampled"));
        }
        detail.push(format!("{xavier_entries} Xavier entries within bounds"));
        Ok(detail.join("; "))
    })
}

/// Onset error allowed by the token round trip (half a time step is typical).
pub const ONSET_TOLERANCE_SECONDS: f64 = 0.010;
pub const DURATION_TOLERANCE_SECONDS: f64 = 0.020;

/// Worst-case timing errors of one MIDI file through both round trips.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundTripReport {
    pub notes: usize,
    /// parse -> encode -> decode, seconds.
    pub max_onset_error: f64,
    pub max_duration_error: f64,
    /// parse -> write -> parse, in ticks of the written file.
    pub max_write_error_ticks: f64,
    /// Pitches whose note counts differ between stages.
    pub count_mismatches: Vec<String>,
}

impl RoundTripReport {
    pub fn passes(&self) -> bool {
        self.count_mismatches.is_empty()
            && self.max_onset_error <= ONSET_TOLERANCE_SECONDS
            && self.max_duration_error <= DURATION_TOLERANCE_SECONDS
            && self.max_write_error_ticks <= 1.0
    }
}

/// Notes of each pitch in onset order, paired one to one. Returns
/// (max onset error, max duration error) in seconds.
fn compare_notes(stage: &str, a: &[Note], b: &[Note], mismatches: &mut Vec<String>) -> (f64, f64) {
    let (mut onset, mut duration) = (0.0f64, 0.0f64);
    for pitch in 0..=127u8 {
        let pick = |ns: &[Note]| ns.iter().filter(|n| n.pitch == pitch).cloned().collect::<Vec<_>>();
        let (pa, pb) = (pick(a), pick(b));
        if pa.len() != pb.len() {
            mismatches.push(format!("{stage}: pitch {pitch} has {} vs {} notes", pa.len(), pb.len()));
            continue;
        }
        for (x, y) in pa.iter().zip(&pb) {
            onset = onset.max((x.start_seconds - y.start_seconds).abs());
            let (dx, dy) = (x.end_seconds - x.start_seconds, y.end_seconds - y.start_seconds);
            duration = duration.max((dx - dy).abs());
        }
    }
    (onset, duration)
}

pub fn midi_round_trip(bytes: &[u8]) -> Result<RoundTripReport, MidiError> {
    let original = parse_midi(bytes)?;
    let tokens = encode_events(&original, &EventVocab)?;
    let (decoded, _) = decode_events(&tokens, &EventVocab)?;
    let mut count_mismatches = Vec::new();
    let (max_onset_error, max_duration_error) =
        compare_notes("tokens", &original.notes, &decoded.notes, &mut count_mismatches);

    let reparsed = parse_midi(&write_midi(&original)?)?;
    let ticks_per_second = f64::from(WRITE_TICKS_PER_QUARTER) * 1e6 / f64::from(WRITE_TEMPO);
    let (write_onset, _) = compare_notes("write", &original.notes, &reparsed.notes, &mut count_mismatches);
    let write_end = {
        let mut worst = 0.0f64;
        for pitch in 0..=127u8 {
            let ends = |ns: &[Note]| ns.iter().filter(|n| n.pitch == pitch).map(|n| n.end_seconds).collect::<Vec<_>>();
            for (x, y) in ends(&original.notes).iter().zip(ends(&reparsed.notes)) {
                worst = worst.max((x - y).abs());
            }
        }
        worst
    };
    Ok(RoundTripReport {
        notes: original.notes.len(),
        max_onset_error,
        max_duration_error,
        max_write_error_ticks: write_onset.max(write_end) * ticks_per_second,
        count_mismatches,
    })
}

/// Criteria checked by `verify`, in order.
pub fn run_verify() -> Vec<CheckResult> {
    vec![
        check_window_oracle(),
        check_relative_oracle(),
        check_gradient_suite(),
        check_early_stopping(),
        check_init_statistics(),
    ]
}

impl CheckResult {
    pub fn line(&self) -> String {
        format!(
            "[{}] criterion {} {}: {} ({:.1}s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.seconds
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stop_reference_on_hand_cases() {
        let mut v = vec![1.0];
        v.extend(std::iter::repeat_n(2.0, 3));
        assert_eq!(first_stop_reference(&v, 3), Some(3));
        v[2] = 0.5;
        assert_eq!(first_stop_reference(&v, 3), None);
        assert_eq!(first_stop_reference(&[f64::NAN, f64::NAN], 2), Some(1));
    }

    #[test]
    fn relative_loop_single_position_returns_value() {
        let out = relative_attention_loop(&[0.3, 0.1], &[0.2, 0.9], &[4.0, -1.0], &[0.5, 0.5], 1, 1, 2);
        assert_eq!(out, vec![4.0, -1.0]);
    }

    #[test]
    fn early_stopping_check_passes() {
        let r = check_early_stopping();
        assert!(r.passed, "{}", r.detail);
    }

    #[test]
    fn init_check_passes() {
        let r = check_init_statistics();
        assert!(r.passed, "{}", r.detail);
    }
}
