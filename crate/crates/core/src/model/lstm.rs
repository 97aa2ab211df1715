use rand_chacha::ChaCha8Rng;

use super::params::{Linear, ParamRole, ParamStore};
use super::{check_tokens, maybe_dropout, LstmConfig, Result};
use crate::tensor::{Element, Tensor};

#[derive(Debug, Clone, Copy)]
struct LstmLayer {
    /// `[in, 4H]` input weights and the `[4H]` gate bias.
    input: Linear,
    /// `[H, 4H]` recurrent weights.
    recurrent: usize,
}

/// Stacked unidirectional LSTM with gates ordered input, forget, cell, output.
#[derive(Debug, Clone)]
pub struct LstmModel<T: Element> {
    config: LstmConfig,
    pub(crate) params: ParamStore<T>,
    embed: usize,
    layers: Vec<LstmLayer>,
    out: Linear,
}

impl<T: Element> LstmModel<T> {
    pub fn new(config: LstmConfig) -> Result<Self> {
        config.validate()?;
        let hd = config.hidden_dim;
        let mut params = ParamStore::new();
        let embed = params.add("embed", ParamRole::Embedding, &[config.vocab_size, config.embed_dim]);
        let layers = (0..config.num_layers)
            .map(|l| {
                let fan_in = if l == 0 { config.embed_dim } else { hd };
                LstmLayer {
                    input: params.linear(&format!("layers.{l}.input"), fan_in, 4 * hd),
                    recurrent: params.add(format!("layers.{l}.recurrent.weight"), ParamRole::Weight, &[hd, 4 * hd]),
                }
            })
            .collect();
        let out = params.linear("out", hd, config.vocab_size);
        Ok(Self {
            config,
            params,
            embed,
            layers,
            out,
        })
    }

    pub fn config(&self) -> &LstmConfig {
        &self.config
    }

    pub fn forward(&self, tokens: &[usize], mut rng: Option<&mut ChaCha8Rng>) -> Result<Tensor<T>> {
        check_tokens(tokens, self.config.vocab_size, None)?;
        let p = &self.params;
        let mut x = p.get(self.embed).embedding(tokens)?;
        for layer in &self.layers {
            x = maybe_dropout(x, self.config.dropout_p, &mut rng);
            x = self.run_layer(layer, &x)?;
        }
        let x = maybe_dropout(x, self.config.dropout_p, &mut rng);
        self.out.apply(p, &x)
    }

    fn run_layer(&self, layer: &LstmLayer, x: &Tensor<T>) -> Result<Tensor<T>> {
        // input contributions for every step at once
        let projected = layer.input.apply(&self.params, x)?;
        Ok(projected.lstm_sequence(self.params.get(layer.recurrent))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::test_util::randomize;
    use crate::model::{Model, ModelSpec};
    use rand::{Rng, SeedableRng};

    fn tiny() -> LstmConfig {
        LstmConfig {
            vocab_size: 15,
            embed_dim: 6,
            hidden_dim: 5,
            num_layers: 2,
            dropout_p: 0.0,
        }
    }

    #[test]
    fn parameter_count_matches_formula() {
        let c = tiny();
        let (v, e, hd) = (c.vocab_size, c.embed_dim, c.hidden_dim);
        let layer = |fan_in: usize| fan_in * 4 * hd + 4 * hd + hd * 4 * hd;
        let expect = v * e + layer(e) + layer(hd) + hd * v + v;
        assert_eq!(LstmModel::<f32>::new(c).unwrap().params.num_values(), expect);
    }

    #[test]
    fn shape_and_causality() {
        let mut m = LstmModel::<f64>::new(tiny()).unwrap();
        randomize(&mut m.params, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let tokens: Vec<usize> = (0..12).map(|_| rng.random_range(0..15)).collect();
        let base = m.forward(&tokens, None).unwrap();
        assert_eq!(base.shape(), &[12, 15]);
        for j in 1..tokens.len() {
            let mut changed = tokens.clone();
            changed[j] = (changed[j] + 1) % 15;
            let out = m.forward(&changed, None).unwrap();
            assert_eq!(&out.data()[..j * 15], &base.data()[..j * 15]);
        }
    }

    #[test]
    fn hidden_states_stay_bounded_under_saturation() {
        let m = LstmModel::<f64>::new(tiny()).unwrap();
        let hd = m.config.hidden_dim;
        let projected = Tensor::from_f64(
            &(0..3 * 4 * hd).map(|i| (i as f64 - 30.0) * 3.0).collect::<Vec<_>>(),
            &[3, 4 * hd],
        )
        .unwrap();
        let w = Tensor::full(&[hd, 4 * hd], 5.0);
        let h = projected.lstm_sequence(&w).unwrap();
        assert!(h.data().iter().all(|&v| (-1.0..=1.0).contains(&v)));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut model = Model::<f64>::new(&ModelSpec::Lstm(tiny())).unwrap();
        randomize(model.params_mut(), 3);
        let named: Vec<(String, Tensor<f64>)> =
            model.params().iter().map(|p| (p.name.clone(), p.tensor.clone())).collect();
        let tokens = [3, 1, 4, 1, 5, 9];
        let targets = [1, 4, 1, 5, 9, 2];
        let report = crate::tensor::check_gradients(&named, 1e-5, |ts| {
            let mut m = model.clone();
            m.params_mut().replace_all(ts).unwrap();
            Ok(m.forward(&tokens, None).unwrap().cross_entropy(&targets, None)?.0)
        })
        .unwrap();
        assert!(report.passes(1e-4), "{report:?}");
    }
}
