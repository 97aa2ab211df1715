use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::model::{Model, ParamRole};
use crate::tensor::Element;

/// Standard deviation of the baseline scheme.
pub const DEFAULT_INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    /// Every matrix (embeddings included) ~ N(0, 0.02²).
    Default,
    /// Matrices ~ U(±√(6/(fan_in+fan_out))); input embeddings ~ N(0, 1/d).
    XavierSplit,
}

/// Xavier/Glorot uniform bound for a `[fan_in, fan_out]` matrix.
pub fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Overwrites every parameter according to `scheme`. Biases and norm
/// shifts become zero and norm gains one under both schemes.
pub fn init_parameters<T: Element>(model: &mut Model<T>, scheme: InitScheme, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for p in model.params_mut().iter_mut() {
        let shape = p.tensor.shape().to_vec();
        let data = p.tensor.data_mut();
        match (p.role, scheme) {
            (ParamRole::Bias | ParamRole::NormBias, _) => data.fill(T::zero()),
            (ParamRole::NormGain, _) => data.fill(T::one()),
            (ParamRole::Embedding, InitScheme::XavierSplit) => {
                let normal = Normal::new(0.0, (shape[1] as f64).powf(-0.5)).expect("positive std");
                data.iter_mut().for_each(|v| *v = T::of(normal.sample(&mut rng)));
            }
            (ParamRole::Weight | ParamRole::RelativeTable, InitScheme::XavierSplit) => {
                let bound = xavier_bound(shape[0], shape[1]);
                data.iter_mut().for_each(|v| *v = T::of(rng.random_range(-bound..=bound)));
            }
            (_, InitScheme::Default) => {
                let normal = Normal::new(0.0, DEFAULT_INIT_STD).expect("positive std");
                data.iter_mut().for_each(|v| *v = T::of(normal.sample(&mut rng)));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention::AttentionMode;
    use crate::model::{ModelConfig, ModelSpec};

    fn moments(v: &[f32]) -> (f64, f64) {
        let n = v.len() as f64;
        let mean = v.iter().map(|&x| f64::from(x)).sum::<f64>() / n;
        let var = v.iter().map(|&x| (f64::from(x) - mean).powi(2)).sum::<f64>() / n;
        (mean, var.sqrt())
    }

    #[test]
    fn xavier_split_statistics() {
        let c = ModelConfig::new(390, 1, 4, 64, 512, 64, AttentionMode::Relative);
        let mut m = Model::<f32>::new(&ModelSpec::Transformer(c)).unwrap();
        init_parameters(&mut m, InitScheme::XavierSplit, 3);
        let embed = m.params().by_name("embed").unwrap();
        let (_, std) = moments(embed.tensor.data());
        assert!((std - 0.0625).abs() / 0.0625 < 0.1, "std {std}");
        let ff = m.params().by_name("layers.0.ff.in.weight").unwrap();
        assert_eq!(ff.tensor.shape(), &[256, 512]);
        let bound = xavier_bound(256, 512) as f32;
        assert!(ff.tensor.data().iter().all(|v| v.abs() <= bound));
        assert!(m.params().by_name("layers.0.ff.in.bias").unwrap().tensor.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn xavier_bound_for_square_512() {
        assert!((xavier_bound(512, 512) - 0.07655).abs() < 1e-5);
    }

    #[test]
    fn default_scheme_std() {
        let c = ModelConfig::new(390, 1, 2, 32, 128, 16, AttentionMode::DenseCausal);
        let mut m = Model::<f32>::new(&ModelSpec::Transformer(c)).unwrap();
        init_parameters(&mut m, InitScheme::Default, 1);
        let (_, std) = moments(m.params().by_name("out.weight").unwrap().tensor.data());
        assert!((std - 0.02).abs() / 0.02 < 0.1);
    }

    #[test]
    fn same_seed_same_parameters() {
        let spec = ModelSpec::Transformer(ModelConfig::new(50, 1, 2, 4, 8, 8, AttentionMode::Relative));
        let mut a = Model::<f32>::new(&spec).unwrap();
        let mut b = Model::<f32>::new(&spec).unwrap();
        init_parameters(&mut a, InitScheme::XavierSplit, 9);
        init_parameters(&mut b, InitScheme::XavierSplit, 9);
        for (x, y) in a.params().iter().zip(b.params().iter()) {
            assert_eq!(x.tensor.data(), y.tensor.data());
        }
    }
}
