use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{
    adam_step, clip_grad_norm, collect_gradients, early_stop_update, init_parameters, save_checkpoint, AdamState,
    EarlyStopState, InitScheme, Manifest, Result, TrainConfig, TrainError,
};
use crate::midi::EventVocab;
use crate::model::Model;
use crate::tensor::Tensor;

/// Consecutive steps above `DIVERGENCE_FACTOR` × the first loss that abort a run.
pub const DIVERGENCE_STEPS: usize = 100;
pub const DIVERGENCE_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub train: Vec<Vec<usize>>,
    pub val: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxSteps,
    EarlyStopped,
    TargetReached,
    Diverged,
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: u64,
    pub train_nll: f64,
    pub val_nll: Option<f64>,
    pub ms_per_step: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    pub label: String,
    pub steps_run: u64,
    pub stop_reason: StopReason,
    pub records: Vec<StepRecord>,
    pub best_val: Option<f64>,
    /// Steps whose update was skipped, with the parameter holding a
    /// non-finite gradient.
    pub skipped_steps: Vec<(u64, String)>,
    pub checkpoint_path: Option<PathBuf>,
    pub mean_ms_per_step: f64,
}

impl TrainReport {
    pub fn train_curve(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.records.iter().map(|r| (r.step, r.train_nll))
    }

    pub fn val_curve(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.records.iter().filter_map(|r| r.val_nll.map(|v| (r.step, v)))
    }
}

pub struct TrainOutcome {
    pub report: TrainReport,
    /// Final parameters, or the best-validation ones when early stopping is on.
    pub model: Model<f32>,
}

#[derive(Default)]
pub struct TrainOptions<'a> {
    /// Directory receiving `best.bfck` / `final.bfck`.
    pub out_dir: Option<&'a Path>,
    /// Line-delimited JSON, one [`StepRecord`] per step.
    pub log: Option<&'a mut dyn Write>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NllReport {
    pub nll: f64,
    pub tokens: usize,
    /// Windows with no predictable token.
    pub skipped: usize,
}

/// Input and target slices of a window with trailing padding removed, or
/// `None` if fewer than two real tokens remain.
fn split_window(window: &[usize], pad: usize) -> Option<(&[usize], &[usize])> {
    let real = window.iter().rposition(|&t| t != pad)? + 1;
    (real >= 2).then(|| (&window[..real - 1], &window[1..real]))
}

/// Mean natural-log NLL over all non-PAD targets.
pub fn evaluate_nll(model: &Model<f32>, windows: &[Vec<usize>]) -> Result<NllReport> {
    if windows.is_empty() {
        return Err(TrainError::Data("evaluation set is empty".into()));
    }
    let pad = EventVocab.pad();
    let frozen = model.frozen();
    let per_window: Vec<Option<(f64, usize)>> = windows
        .par_iter()
        .map(|w| -> Result<Option<(f64, usize)>> {
            let Some((input, target)) = split_window(w, pad) else {
                return Ok(None);
            };
            let logits = frozen.forward(input, None)?;
            let (loss, count) = logits.cross_entropy(target, Some(pad))?;
            Ok((count > 0).then(|| (f64::from(loss.item()) * count as f64, count)))
        })
        .collect::<Result<_>>()?;
    let skipped = per_window.iter().filter(|w| w.is_none()).count();
    let (sum, tokens) = per_window
        .iter()
        .flatten()
        .fold((0.0, 0usize), |(s, n), &(l, c)| (s + l, n + c));
    if tokens == 0 {
        return Err(TrainError::Data("no non-PAD targets in evaluation set".into()));
    }
    Ok(NllReport {
        nll: sum / tokens as f64,
        tokens,
        skipped,
    })
}

/// Token-weighted mean loss of a batch, as one differentiable scalar.
fn batch_loss(
    model: &Model<f32>,
    windows: &[&Vec<usize>],
    dropout_rng: &mut ChaCha8Rng,
) -> Result<Option<Tensor<f32>>> {
    let pad = EventVocab.pad();
    let mut parts = Vec::with_capacity(windows.len());
    for w in windows {
        let Some((input, target)) = split_window(w, pad) else {
            continue;
        };
        let logits = model.forward(input, Some(dropout_rng))?;
        let (loss, count) = logits.cross_entropy(target, Some(pad))?;
        if count > 0 {
            parts.push((loss, count));
        }
    }
    let total: usize = parts.iter().map(|p| p.1).sum();
    let mut acc: Option<Tensor<f32>> = None;
    for (loss, count) in parts {
        let weighted = loss.scale(count as f64 / total as f64);
        acc = Some(match acc {
            Some(a) => a.add(&weighted)?,
            None => weighted,
        });
    }
    Ok(acc)
}

/// Runs the optimization loop described by `config` on `data`.
pub fn train(config: &TrainConfig, data: &Dataset, options: TrainOptions<'_>) -> Result<TrainOutcome> {
    config.validate()?;
    if data.train.is_empty() {
        return Err(TrainError::Data("no training windows".into()));
    }
    if config.use_early_stopping && data.val.is_empty() {
        return Err(TrainError::Data("early stopping needs validation windows".into()));
    }
    let TrainOptions { out_dir, mut log } = options;
    let label = config.variant_label();

    let mut model = Model::<f32>::new(&config.model)?;
    let scheme = if config.use_xavier_init {
        InitScheme::XavierSplit
    } else {
        InitScheme::Default
    };
    init_parameters(&mut model, scheme, config.seed);
    let mut order_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(2));
    let mut adam = AdamState::default();
    let mut early = EarlyStopState::default();
    let mut best_model: Option<Model<f32>> = None;

    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let mut cursor = order.len();
    let mut records = Vec::new();
    let mut skipped_steps = Vec::new();
    let mut initial_loss: Option<f64> = None;
    let mut diverging = 0usize;
    let mut stop_reason = StopReason::MaxSteps;
    let mut best_path = None;
    let started = Instant::now();
    let mut step = 0u64;

    while step < config.max_steps {
        step += 1;
        let t0 = Instant::now();
        let mut batch = Vec::with_capacity(config.batch_size);
        while batch.len() < config.batch_size {
            if cursor == order.len() {
                order.shuffle(&mut order_rng);
                cursor = 0;
            }
            batch.push(&data.train[order[cursor]]);
            cursor += 1;
        }
        let Some(loss) = batch_loss(&model, &batch, &mut dropout_rng)? else {
            log::warn!("step {step}: batch has no targets");
            continue;
        };
        let train_nll = f64::from(loss.item());
        let reference = *initial_loss.get_or_insert(train_nll);
        if train_nll.is_finite() {
            let grads = loss.backward()?;
            let mut grads = collect_gradients(model.params(), &grads);
            if let Some(max_norm) = config.grad_clip {
                clip_grad_norm(&mut grads, max_norm);
            }
            match adam_step(model.params_mut(), &grads, &mut adam, &config.optimizer) {
                Ok(()) => {}
                Err(TrainError::NonFiniteGradient(name)) => {
                    log::warn!("step {step}: non-finite gradient in {name}; update skipped");
                    skipped_steps.push((step, name));
                }
                Err(e) => return Err(e),
            }
        }
        diverging = if !train_nll.is_finite() || train_nll > DIVERGENCE_FACTOR * reference {
            diverging + 1
        } else {
            0
        };

        let mut val_nll = None;
        if config.use_early_stopping && step % config.eval_interval == 0 {
            let v = evaluate_nll(&model, &data.val)?.nll;
            val_nll = Some(v);
            early = early_stop_update(early, v, config.early_stop_patience);
            if early.improved {
                best_model = Some(model.frozen());
                if let Some(dir) = out_dir {
                    let path = dir.join("best.bfck");
                    save_checkpoint(&path, &model, &Manifest::new(&model, step, Some(v)))?;
                    best_path = Some(path);
                }
            }
        }
        let record = StepRecord {
            step,
            train_nll,
            val_nll,
            ms_per_step: t0.elapsed().as_secs_f64() * 1e3,
        };
        if let Some(w) = log.as_deref_mut() {
            let line = serde_json::to_string(&record).expect("record serializes");
            writeln!(w, "{line}").map_err(|e| TrainError::Io(e.to_string()))?;
        }
        records.push(record);

        if diverging >= DIVERGENCE_STEPS {
            stop_reason = StopReason::Diverged;
            log::error!("{label}: loss above {DIVERGENCE_FACTOR}x its initial value for {DIVERGENCE_STEPS} steps");
            break;
        }
        if early.stopped {
            stop_reason = StopReason::EarlyStopped;
            break;
        }
        if config.target_train_nll.is_some_and(|t| train_nll < t) {
            stop_reason = StopReason::TargetReached;
            break;
        }
    }

    let best_val = early.best_val.is_finite().then_some(early.best_val);
    let mut checkpoint_path = best_path;
    if let Some(dir) = out_dir {
        let path = dir.join("final.bfck");
        save_checkpoint(&path, &model, &Manifest::new(&model, step, best_val))?;
        checkpoint_path.get_or_insert(path);
    }
    let model = match best_model {
        Some(best) if config.use_early_stopping => best,
        _ => model,
    };
    let steps_run = records.len() as u64;
    Ok(TrainOutcome {
        report: TrainReport {
            label,
            steps_run,
            stop_reason,
            records,
            best_val,
            skipped_steps,
            checkpoint_path,
            mean_ms_per_step: started.elapsed().as_secs_f64() * 1e3 / steps_run.max(1) as f64,
        },
        model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention::AttentionMode;
    use crate::model::{ModelConfig, ModelSpec};

    fn tiny_config() -> TrainConfig {
        let mut cfg = TrainConfig::new(ModelSpec::Transformer(ModelConfig::new(
            390,
            1,
            2,
            8,
            32,
            32,
            AttentionMode::Relative,
        )));
        cfg.batch_size = 2;
        cfg.max_steps = 30;
        cfg.eval_interval = 5;
        cfg.optimizer.lr = 3e-3;
        cfg.seed = 11;
        cfg
    }

    fn toy_data() -> Dataset {
        let seq = |o: usize| (0..33).map(|i| 300 + (i * 3 + o) % 40).collect::<Vec<_>>();
        Dataset {
            train: vec![seq(0), seq(1), seq(2)],
            val: vec![seq(3)],
        }
    }

    #[test]
    fn uniform_logits_give_log_vocab() {
        let spec = ModelSpec::Transformer(ModelConfig::new(390, 1, 2, 4, 8, 16, AttentionMode::Relative));
        let model = Model::<f32>::new(&spec).unwrap();
        let r = evaluate_nll(&model, &[vec![1, 2, 3, 4, 5, 388, 388]]).unwrap();
        assert!((r.nll - 390f64.ln()).abs() < 1e-4);
        assert_eq!(r.tokens, 4);
    }

    #[test]
    fn all_pad_windows_are_skipped() {
        let spec = ModelSpec::Transformer(ModelConfig::new(390, 1, 2, 4, 8, 16, AttentionMode::Relative));
        let model = Model::<f32>::new(&spec).unwrap();
        let r = evaluate_nll(&model, &[vec![388; 8], vec![1, 2, 3]]).unwrap();
        assert_eq!((r.skipped, r.tokens), (1, 2));
        assert!(evaluate_nll(&model, &[vec![388; 8]]).is_err());
    }

    #[test]
    fn without_early_stopping_runs_every_step() {
        let mut cfg = tiny_config();
        cfg.use_early_stopping = false;
        let out = train(&cfg, &toy_data(), TrainOptions::default()).unwrap();
        assert_eq!(out.report.steps_run, 30);
        assert_eq!(out.report.stop_reason, StopReason::MaxSteps);
    }

    #[test]
    fn same_seed_same_curve() {
        let cfg = tiny_config();
        let a = train(&cfg, &toy_data(), TrainOptions::default()).unwrap();
        let b = train(&cfg, &toy_data(), TrainOptions::default()).unwrap();
        let curve = |r: &TrainReport| r.train_curve().chain(r.val_curve()).collect::<Vec<_>>();
        assert_eq!(curve(&a.report), curve(&b.report));
    }

    #[test]
    fn early_stopping_halts_on_patience() {
        let mut cfg = tiny_config();
        cfg.optimizer.lr = 1e-12;
        cfg.early_stop_patience = 2;
        cfg.eval_interval = 1;
        cfg.max_steps = 1000;
        let out = train(&cfg, &toy_data(), TrainOptions::default()).unwrap();
        assert_eq!(out.report.stop_reason, StopReason::EarlyStopped);
        assert!(out.report.steps_run < 1000);
    }

    #[test]
    fn writes_log_lines_and_checkpoints() {
        let dir = tempfile::tempdir().unwrap();
        let mut log = Vec::new();
        let cfg = tiny_config();
        let out = train(
            &cfg,
            &toy_data(),
            TrainOptions {
                out_dir: Some(dir.path()),
                log: Some(&mut log),
            },
        )
        .unwrap();
        let lines: Vec<serde_json::Value> = String::from_utf8(log)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(lines.len() as u64, out.report.steps_run);
        assert!(lines[4]["val_nll"].is_number());
        assert!(dir.path().join("best.bfck").exists() && dir.path().join("final.bfck").exists());
        let first = out.report.records[0].train_nll;
        let last = out.report.records.last().unwrap().train_nll;
        assert!(last < first, "{first} -> {last}");
    }
}
