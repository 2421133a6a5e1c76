use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::config::{PosMode, TransformerConfig};
use crate::error::{NnError, Result};
use crate::graph::{AttentionSpec, Graph, NodeId};
use crate::params::{Gradients, ParamId, ParameterStore};
use crate::positional::{alibi_slopes, sinusoidal_pe};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

const INIT_STD: f64 = 0.02;

/// Right-padded batch of token sequences, `batch x seq` row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenBatch {
    pub tokens: Vec<u32>,
    pub batch: usize,
    pub seq: usize,
}

impl TokenBatch {
    pub fn new(tokens: Vec<u32>, batch: usize, seq: usize) -> Result<Self> {
        if tokens.len() != batch * seq {
            return Err(NnError::Shape(format!(
                "{} tokens for a {batch}x{seq} batch",
                tokens.len()
            )));
        }
        Ok(Self { tokens, batch, seq })
    }

    /// Pads every sequence on the right with `pad` up to the longest one.
    pub fn from_sequences(seqs: &[Vec<u32>], pad: u32) -> Self {
        let seq = seqs.iter().map(Vec::len).max().unwrap_or(0);
        let mut tokens = Vec::with_capacity(seqs.len() * seq);
        for s in seqs {
            tokens.extend_from_slice(s);
            tokens.extend(std::iter::repeat(pad).take(seq - s.len()));
        }
        Self {
            tokens,
            batch: seqs.len(),
            seq,
        }
    }

    pub fn row(&self, b: usize) -> &[u32] {
        &self.tokens[b * self.seq..(b + 1) * self.seq]
    }
}

#[derive(Debug, Clone)]
pub(crate) struct LayerIds {
    pub ln1_gain: ParamId,
    pub ln1_bias: ParamId,
    pub wq: ParamId,
    pub bq: ParamId,
    pub wk: ParamId,
    pub bk: ParamId,
    pub wv: ParamId,
    pub bv: ParamId,
    pub wo: ParamId,
    pub bo: ParamId,
    pub ln2_gain: ParamId,
    pub ln2_bias: ParamId,
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

/// Pre-norm decoder-only transformer. Weights live in a separate [`ParameterStore`]
/// so one model description can drive any number of read-only inference workers.
#[derive(Debug, Clone)]
pub struct Transformer<F: Scalar> {
    config: TransformerConfig,
    pub(crate) tok_emb: ParamId,
    pub(crate) pos_emb: Option<ParamId>,
    pub(crate) layers: Vec<LayerIds>,
    pub(crate) lnf_gain: ParamId,
    pub(crate) lnf_bias: ParamId,
    pub(crate) head_w: ParamId,
    pub(crate) head_b: ParamId,
    pub(crate) sinusoidal: Option<Tensor<F>>,
    pub(crate) slopes: Option<Vec<f64>>,
}

fn layer_names(i: usize) -> [(String, bool); 16] {
    let p = |s: &str| format!("layers.{i}.{s}");
    [
        (p("ln1.gain"), false),
        (p("ln1.bias"), false),
        (p("attn.wq"), true),
        (p("attn.bq"), false),
        (p("attn.wk"), true),
        (p("attn.bk"), false),
        (p("attn.wv"), true),
        (p("attn.bv"), false),
        (p("attn.wo"), true),
        (p("attn.bo"), false),
        (p("ln2.gain"), false),
        (p("ln2.bias"), false),
        (p("mlp.w1"), true),
        (p("mlp.b1"), false),
        (p("mlp.w2"), true),
        (p("mlp.b2"), false),
    ]
}

impl<F: Scalar> Transformer<F> {
    /// Parameter names and shapes in store order.
    pub fn parameter_layout(config: &TransformerConfig) -> Vec<(String, Vec<usize>)> {
        let (d, ff, v) = (config.d_model, config.d_ff, config.vocab_size);
        let mut out = vec![("tok_emb".to_string(), vec![v, d])];
        if config.pos_mode == PosMode::Learnable {
            out.push(("pos_emb".to_string(), vec![config.max_seq_len, d]));
        }
        for i in 0..config.n_layers {
            let shapes = [
                vec![d],
                vec![d],
                vec![d, d],
                vec![d],
                vec![d, d],
                vec![d],
                vec![d, d],
                vec![d],
                vec![d, d],
                vec![d],
                vec![d],
                vec![d],
                vec![d, ff],
                vec![ff],
                vec![ff, d],
                vec![d],
            ];
            for ((name, _), shape) in layer_names(i).into_iter().zip(shapes) {
                out.push((name, shape));
            }
        }
        out.push(("ln_f.gain".to_string(), vec![d]));
        out.push(("ln_f.bias".to_string(), vec![d]));
        out.push(("head.w".to_string(), vec![d, v]));
        out.push(("head.b".to_string(), vec![v]));
        out
    }

    /// Fresh weights: N(0, 0.02) projections, N(0, 1) embeddings, zero biases, unit gains.
    pub fn init(config: TransformerConfig, seed: u64) -> Result<(Self, ParameterStore<F>)> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let proj = Normal::new(0.0, INIT_STD).expect("valid std");
        let emb = Normal::new(0.0, 1.0).expect("valid std");
        let mut store = ParameterStore::new();
        for (name, shape) in Self::parameter_layout(&config) {
            let tensor = if name.ends_with("emb") {
                Tensor::from_fn(shape, |_| F::of(emb.sample(&mut rng)))
            } else if name.ends_with(".gain") {
                Tensor::from_fn(shape, |_| F::one())
            } else if shape.len() == 2 {
                Tensor::from_fn(shape, |_| F::of(proj.sample(&mut rng)))
            } else {
                Tensor::zeros(shape)
            };
            store.insert(name, tensor)?;
        }
        let model = Self::bind(config, &store)?;
        Ok((model, store))
    }

    /// Attaches a model description to an existing store (for example one read from a checkpoint).
    pub fn bind(config: TransformerConfig, store: &ParameterStore<F>) -> Result<Self> {
        config.validate()?;
        for (name, shape) in Self::parameter_layout(&config) {
            match store.get(&name) {
                Some(t) if t.shape() == shape.as_slice() => {}
                Some(t) => {
                    return Err(NnError::Shape(format!(
                        "parameter {name} has shape {:?}, expected {shape:?}",
                        t.shape()
                    )))
                }
                None => return Err(NnError::Input(format!("missing parameter {name}"))),
            }
        }
        let id = |name: &str| store.id(name).expect("checked above");
        let layers = (0..config.n_layers)
            .map(|i| {
                let n = layer_names(i);
                LayerIds {
                    ln1_gain: id(&n[0].0),
                    ln1_bias: id(&n[1].0),
                    wq: id(&n[2].0),
                    bq: id(&n[3].0),
                    wk: id(&n[4].0),
                    bk: id(&n[5].0),
                    wv: id(&n[6].0),
                    bv: id(&n[7].0),
                    wo: id(&n[8].0),
                    bo: id(&n[9].0),
                    ln2_gain: id(&n[10].0),
                    ln2_bias: id(&n[11].0),
                    w1: id(&n[12].0),
                    b1: id(&n[13].0),
                    w2: id(&n[14].0),
                    b2: id(&n[15].0),
                }
            })
            .collect();
        let sinusoidal = match config.pos_mode {
            PosMode::Sinusoidal => Some(sinusoidal_pe(config.max_seq_len, config.d_model)?),
            _ => None,
        };
        let slopes = (config.pos_mode == PosMode::Alibi).then(|| alibi_slopes(config.n_heads));
        Ok(Self {
            tok_emb: id("tok_emb"),
            pos_emb: store.id("pos_emb"),
            layers,
            lnf_gain: id("ln_f.gain"),
            lnf_bias: id("ln_f.bias"),
            head_w: id("head.w"),
            head_b: id("head.b"),
            sinusoidal,
            slopes,
            config,
        })
    }

    pub fn config(&self) -> &TransformerConfig {
        &self.config
    }

    pub(crate) fn check_tokens(&self, tokens: &[u32], seq: usize) -> Result<()> {
        if seq > self.config.max_seq_len {
            return Err(NnError::Capacity {
                len: seq,
                max: self.config.max_seq_len,
            });
        }
        if let Some(&bad) = tokens
            .iter()
            .find(|&&t| t as usize >= self.config.vocab_size)
        {
            return Err(NnError::Input(format!(
                "token id {bad} outside vocabulary of {}",
                self.config.vocab_size
            )));
        }
        Ok(())
    }

    /// Records the forward pass and returns the logits node, shaped `[batch * seq, vocab]`.
    /// `dropout_rng` is only consulted when the configured dropout is positive.
    pub fn forward(
        &self,
        g: &mut Graph<'_, F>,
        batch: &TokenBatch,
        dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<NodeId> {
        self.check_tokens(&batch.tokens, batch.seq)?;
        let (b, t, d) = (batch.batch, batch.seq, self.config.d_model);
        let p_drop = if dropout_rng.is_some() {
            self.config.dropout
        } else {
            0.0
        };
        let mut local_rng = dropout_rng;

        let ids: Vec<usize> = batch.tokens.iter().map(|&x| x as usize).collect();
        let table = g.param(self.tok_emb);
        let mut x = g.embedding(table, ids)?;
        let positions: Vec<usize> = (0..b * t).map(|r| r % t).collect();
        match self.config.pos_mode {
            PosMode::Sinusoidal => {
                let pe = self.sinusoidal.as_ref().expect("built in bind");
                let table = g.input(Tensor::new(vec![t, d], pe.data()[..t * d].to_vec())?);
                let pos = g.embedding(table, positions)?;
                x = g.add(x, pos)?;
            }
            PosMode::Learnable => {
                let table = g.param(self.pos_emb.expect("bound in bind"));
                let pos = g.embedding(table, positions)?;
                x = g.add(x, pos)?;
            }
            PosMode::None | PosMode::Alibi => {}
        }
        if let Some(rng) = local_rng.as_deref_mut() {
            x = g.dropout(x, p_drop, rng);
        }

        for layer in &self.layers {
            let (gain, bias) = (g.param(layer.ln1_gain), g.param(layer.ln1_bias));
            let h = g.layer_norm(x, gain, bias)?;
            let q = linear(g, h, layer.wq, layer.bq)?;
            let k = linear(g, h, layer.wk, layer.bk)?;
            let v = linear(g, h, layer.wv, layer.bv)?;
            let spec = AttentionSpec {
                batch: b,
                seq: t,
                heads: self.config.n_heads,
                alibi_slopes: self.slopes.clone(),
            };
            let a = g.attention(q, k, v, spec)?;
            let mut o = linear(g, a, layer.wo, layer.bo)?;
            if let Some(rng) = local_rng.as_deref_mut() {
                o = g.dropout(o, p_drop, rng);
            }
            x = g.add(x, o)?;

            let (gain, bias) = (g.param(layer.ln2_gain), g.param(layer.ln2_bias));
            let h = g.layer_norm(x, gain, bias)?;
            let f = linear(g, h, layer.w1, layer.b1)?;
            let f = g.gelu(f);
            let mut f = linear(g, f, layer.w2, layer.b2)?;
            if let Some(rng) = local_rng.as_deref_mut() {
                f = g.dropout(f, p_drop, rng);
            }
            x = g.add(x, f)?;
        }
        let (gain, bias) = (g.param(self.lnf_gain), g.param(self.lnf_bias));
        let x = g.layer_norm(x, gain, bias)?;
        linear(g, x, self.head_w, self.head_b)
    }

    /// Logits `[batch * seq, vocab]` without keeping the graph.
    pub fn logits(&self, store: &ParameterStore<F>, batch: &TokenBatch) -> Result<Tensor<F>> {
        let mut g = Graph::new(store);
        let out = self.forward(&mut g, batch, None)?;
        Ok(g.value(out).clone())
    }

    /// Records forward + masked cross-entropy and runs backward.
    /// `targets[r]` is the token expected from row `r` of the flattened batch.
    pub fn loss_and_gradients(
        &self,
        store: &ParameterStore<F>,
        batch: &TokenBatch,
        targets: Vec<usize>,
        mask: Vec<bool>,
        dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(f64, Gradients<F>)> {
        let mut g = Graph::new(store);
        let logits = self.forward(&mut g, batch, dropout_rng)?;
        let loss = g.cross_entropy(logits, targets, mask)?;
        let value = g.value(loss).data()[0].f64();
        let grads = g.backward(loss)?;
        Ok((value, grads))
    }
}

fn linear<F: Scalar>(g: &mut Graph<'_, F>, x: NodeId, w: ParamId, b: ParamId) -> Result<NodeId> {
    let (w, b) = (g.param(w), g.param(b));
    g.linear(x, w, Some(b))
}
