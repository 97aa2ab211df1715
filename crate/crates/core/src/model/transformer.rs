use rand_chacha::ChaCha8Rng;

use super::params::{Linear, ParamRole, ParamStore};
use super::{check_tokens, maybe_dropout, positional_encoding, ModelConfig, Result};
use crate::attention::{attend, chunked_band_attention, AttentionMode, RelativeEmbeddings};
use crate::tensor::{Element, Tensor};

const NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy)]
struct Norm {
    gain: usize,
    bias: usize,
}

#[derive(Debug, Clone, Copy)]
struct DecoderLayer {
    wq: Linear,
    wk: Linear,
    wv: Linear,
    wo: Linear,
    relative: Option<usize>,
    norm_attn: Norm,
    ff_in: Linear,
    ff_out: Linear,
    norm_ff: Norm,
}

/// Token embedding + sinusoidal positions, post-norm decoder layers, a final
/// norm and an untied output projection.
#[derive(Debug, Clone)]
pub struct TransformerModel<T: Element> {
    config: ModelConfig,
    pub(crate) params: ParamStore<T>,
    embed: usize,
    layers: Vec<DecoderLayer>,
    final_norm: Norm,
    out: Linear,
    positions: Tensor<T>,
}

impl<T: Element> TransformerModel<T> {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let d = config.d_model;
        let mut params = ParamStore::new();
        let embed = params.add("embed", ParamRole::Embedding, &[config.vocab_size, d]);
        let norm = |params: &mut ParamStore<T>, name: &str| Norm {
            gain: params.add(format!("{name}.gain"), ParamRole::NormGain, &[d]),
            bias: params.add(format!("{name}.bias"), ParamRole::NormBias, &[d]),
        };
        let mut layers = Vec::with_capacity(config.num_layers);
        for l in 0..config.num_layers {
            let p = format!("layers.{l}");
            let wq = params.linear(&format!("{p}.attn.q"), d, d);
            let wk = params.linear(&format!("{p}.attn.k"), d, d);
            let wv = params.linear(&format!("{p}.attn.v"), d, d);
            let wo = params.linear(&format!("{p}.attn.out"), d, d);
            let relative = (config.attention.mode == AttentionMode::Relative).then(|| {
                params.add(
                    format!("{p}.attn.relative"),
                    ParamRole::RelativeTable,
                    &[config.max_len, config.head_dim],
                )
            });
            let norm_attn = norm(&mut params, &format!("{p}.norm_attn"));
            let ff_in = params.linear(&format!("{p}.ff.in"), d, config.ff_dim);
            let ff_out = params.linear(&format!("{p}.ff.out"), config.ff_dim, d);
            let norm_ff = norm(&mut params, &format!("{p}.norm_ff"));
            layers.push(DecoderLayer {
                wq,
                wk,
                wv,
                wo,
                relative,
                norm_attn,
                ff_in,
                ff_out,
                norm_ff,
            });
        }
        let final_norm = norm(&mut params, "final_norm");
        let out = params.linear("out", d, config.vocab_size);
        let positions = positional_encoding(config.max_len, d)?;
        Ok(Self {
            config,
            params,
            embed,
            layers,
            final_norm,
            out,
            positions,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn forward(&self, tokens: &[usize], mut rng: Option<&mut ChaCha8Rng>) -> Result<Tensor<T>> {
        let c = &self.config;
        check_tokens(tokens, c.vocab_size, Some(c.max_len))?;
        let n = tokens.len();
        let p = &self.params;
        let embedded = p.get(self.embed).embedding(tokens)?.scale((c.d_model as f64).sqrt());
        let mut x = embedded.add(&self.positions.narrow(0, 0, n)?)?;
        x = maybe_dropout(x, c.dropout_p, &mut rng);
        for layer in &self.layers {
            let a = self.attention(layer, &x, &mut rng)?;
            let a = maybe_dropout(a, c.dropout_p, &mut rng);
            x = self.norm(layer.norm_attn, &x.add(&a)?)?;
            let f = layer.ff_out.apply(p, &layer.ff_in.apply(p, &x)?.relu())?;
            let f = maybe_dropout(f, c.dropout_p, &mut rng);
            x = self.norm(layer.norm_ff, &x.add(&f)?)?;
        }
        let x = self.norm(self.final_norm, &x)?;
        self.out.apply(p, &x)
    }

    fn norm(&self, norm: Norm, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(x.layer_norm(self.params.get(norm.gain), self.params.get(norm.bias), NORM_EPS)?)
    }

    fn attention(&self, layer: &DecoderLayer, x: &Tensor<T>, rng: &mut Option<&mut ChaCha8Rng>) -> Result<Tensor<T>> {
        let (n, h, s) = (x.shape()[0], self.config.num_heads, self.config.head_dim);
        let p = &self.params;
        let split = |lin: Linear| -> Result<Tensor<T>> { Ok(lin.apply(p, x)?.reshape(&[n, h, s])?.permute(&[1, 0, 2])?) };
        let (q, k, v) = (split(layer.wq)?, split(layer.wk)?, split(layer.wv)?);
        let cfg = &self.config.attention;
        let rng = rng.as_deref_mut();
        let heads = match cfg.mode {
            // the windowed kernel is used at every length, including short
            // generation prefixes the kernel would otherwise compute densely
            AttentionMode::SlidingWindow => chunked_band_attention(&q, &k, &v, cfg, rng)?,
            _ => {
                let rel = layer
                    .relative
                    .map(|i| RelativeEmbeddings::new(p.get(i).clone()))
                    .transpose()?;
                attend(&q, &k, &v, cfg, rel.as_ref(), rng)?.output
            }
        };
        let merged = heads.permute(&[1, 0, 2])?.reshape(&[n, self.config.d_model])?;
        layer.wo.apply(p, &merged)
    }
}
