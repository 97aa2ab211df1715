use serde::{Deserialize, Serialize};

/// Patience counter over validation evaluations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopState {
    pub best_val: f64,
    pub batches_since_improvement: usize,
    pub stopped: bool,
    /// Whether the latest update set a new best.
    pub improved: bool,
    /// Non-finite losses seen so far.
    pub non_finite: usize,
}

impl Default for EarlyStopState {
    fn default() -> Self {
        Self {
            best_val: f64::INFINITY,
            batches_since_improvement: 0,
            stopped: false,
            improved: false,
            non_finite: 0,
        }
    }
}

/// The counter resets exactly on a strict improvement; NaN counts as no
/// improvement. `stopped` holds once the counter reaches `patience`.
pub fn early_stop_update(state: EarlyStopState, val_loss: f64, patience: usize) -> EarlyStopState {
    let mut next = state;
    if val_loss.is_nan() {
        next.non_finite += 1;
    }
    next.improved = val_loss < state.best_val;
    if next.improved {
        next.best_val = val_loss;
        next.batches_since_improvement = 0;
    } else {
        next.batches_since_improvement += 1;
    }
    next.stopped = next.batches_since_improvement >= patience;
    next
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn run(losses: &[f64], patience: usize) -> Vec<EarlyStopState> {
        let mut s = EarlyStopState::default();
        losses
            .iter()
            .map(|&l| {
                s = early_stop_update(s, l, patience);
                s
            })
            .collect()
    }

    #[test]
    fn decreasing_losses_never_stop() {
        let losses: Vec<f64> = (0..1000).map(|i| 10.0 - i as f64 * 1e-3).collect();
        assert!(run(&losses, 200).iter().all(|s| !s.stopped));
    }

    #[test]
    fn stops_on_the_200th_non_improvement() {
        let mut losses = vec![1.0];
        losses.extend(std::iter::repeat_n(1.0, 200));
        let states = run(&losses, 200);
        assert!(!states[199].stopped);
        assert!(states[200].stopped);
    }

    #[test]
    fn improvement_at_199_resets() {
        let mut losses = vec![1.0];
        losses.extend(std::iter::repeat_n(2.0, 198));
        losses.push(0.5);
        let states = run(&losses, 200);
        assert_eq!(states[199].batches_since_improvement, 0);
        assert!(states[199].improved);
    }

    #[test]
    fn nan_is_flagged_as_non_improvement() {
        let s = early_stop_update(EarlyStopState::default(), 1.0, 3);
        let s = early_stop_update(s, f64::NAN, 3);
        assert_eq!((s.batches_since_improvement, s.non_finite, s.best_val), (1, 1, 1.0));
    }

    proptest! {
        #[test]
        fn state_machine_matches_reference(
            losses in prop::collection::vec(prop_oneof![0.0f64..10.0, Just(f64::NAN)], 1..400),
            patience in 1usize..50,
        ) {
            let mut best = f64::INFINITY;
            let mut since = 0usize;
            for (l, s) in losses.iter().zip(run(&losses, patience)) {
                if *l < best { best = *l; since = 0 } else { since += 1 }
                prop_assert_eq!(s.batches_since_improvement, since);
                prop_assert_eq!(s.stopped, since >= patience);
                prop_assert!(s.best_val == best || (s.best_val.is_infinite() && best.is_infinite()));
            }
        }
    }
}
