//! Read-only inference: cached incremental greedy decoding and teacher-forced scoring.

use std::collections::BTreeMap;

use crate::config::PosMode;
use crate::error::{NnError, Result};
use crate::kernels;
use crate::model::{TokenBatch, Transformer};
use crate::params::ParameterStore;
use crate::scalar::Scalar;

/// Rows decoded together in one cached pass.
const DECODE_CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    /// Generated tokens, excluding the end-of-sequence token.
    pub tokens: Vec<u32>,
    /// Max softmax probability at each emitted step (including the end token, if reached).
    pub step_confidences: Vec<f64>,
    pub hit_eos: bool,
}

impl Decoded {
    /// Sequence confidence: the least confident step.
    pub fn confidence(&self) -> f64 {
        self.step_confidences.iter().copied().fold(1.0, f64::min)
    }
}

struct KvCache<F> {
    keys: Vec<Vec<F>>,
    values: Vec<Vec<F>>,
    rows: usize,
    cap: usize,
    d: usize,
}

impl<F: Scalar> KvCache<F> {
    fn new(layers: usize, rows: usize, cap: usize, d: usize) -> Self {
        Self {
            keys: (0..layers)
                .map(|_| vec![F::zero(); rows * cap * d])
                .collect(),
            values: (0..layers)
                .map(|_| vec![F::zero(); rows * cap * d])
                .collect(),
            rows,
            cap,
            d,
        }
    }
}

impl<F: Scalar> Transformer<F> {
    /// Runs every row one position forward, appending to the cache, and returns `[rows, vocab]` logits.
    fn step(
        &self,
        store: &ParameterStore<F>,
        cache: &mut KvCache<F>,
        tokens: &[u32],
        pos: usize,
    ) -> Vec<F> {
        let cfg = self.config();
        let (rows, d, heads) = (cache.rows, cfg.d_model, cfg.n_heads);
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let emb = store.tensor(self.tok_emb).data();
        let mut x: Vec<F> = Vec::with_capacity(rows * d);
        for &t in tokens {
            x.extend_from_slice(&emb[t as usize * d..(t as usize + 1) * d]);
        }
        let pos_row = match cfg.pos_mode {
            PosMode::Sinusoidal => self
                .sinusoidal
                .as_ref()
                .map(|pe| &pe.data()[pos * d..(pos + 1) * d]),
            PosMode::Learnable => self
                .pos_emb
                .map(|id| &store.tensor(id).data()[pos * d..(pos + 1) * d]),
            PosMode::None | PosMode::Alibi => None,
        };
        if let Some(pe) = pos_row {
            for row in x.chunks_exact_mut(d) {
                for (a, &b) in row.iter_mut().zip(pe) {
                    *a += b;
                }
            }
        }
        let data = |id| store.tensor(id).data();
        let mut probs = vec![F::zero(); pos + 1];
        let mut scratch = Vec::with_capacity(pos + 1);
        for (l, layer) in self.layers.iter().enumerate() {
            let (h, _, _) = kernels::layer_norm(&x, data(layer.ln1_gain), data(layer.ln1_bias), d);
            let q = kernels::linear(&h, data(layer.wq), Some(data(layer.bq)), rows, d, d);
            let k = kernels::linear(&h, data(layer.wk), Some(data(layer.bk)), rows, d, d);
            let v = kernels::linear(&h, data(layer.wv), Some(data(layer.bv)), rows, d, d);
            let (kc, vc) = (&mut cache.keys[l], &mut cache.values[l]);
            for r in 0..rows {
                let at = (r * cache.cap + pos) * cache.d;
                kc[at..at + d].copy_from_slice(&k[r * d..(r + 1) * d]);
                vc[at..at + d].copy_from_slice(&v[r * d..(r + 1) * d]);
            }
            let mut attn = vec![F::zero(); rows * d];
            for r in 0..rows {
                let base = r * cache.cap * d;
                for hd in 0..heads {
                    let col = hd * dh;
                    kernels::attend(
                        &q[r * d + col..r * d + col + dh],
                        &kc[base..base + (pos + 1) * d],
                        &vc[base..base + (pos + 1) * d],
                        d,
                        col,
                        pos + 1,
                        scale,
                        self.slopes.as_ref().map(|s| s[hd]),
                        &mut probs,
                        &mut attn[r * d + col..r * d + col + dh],
                        &mut scratch,
                    );
                }
            }
            let o = kernels::linear(&attn, data(layer.wo), Some(data(layer.bo)), rows, d, d);
            for (a, b) in x.iter_mut().zip(&o) {
                *a += *b;
            }
            let (h, _, _) = kernels::layer_norm(&x, data(layer.ln2_gain), data(layer.ln2_bias), d);
            let mut f =
                kernels::linear(&h, data(layer.w1), Some(data(layer.b1)), rows, d, cfg.d_ff);
            for v in f.iter_mut() {
                *v = kernels::gelu(*v);
            }
            let f = kernels::linear(&f, data(layer.w2), Some(data(layer.b2)), rows, cfg.d_ff, d);
            for (a, b) in x.iter_mut().zip(&f) {
                *a += *b;
            }
        }
        let (h, _, _) = kernels::layer_norm(&x, data(self.lnf_gain), data(self.lnf_bias), d);
        kernels::linear(
            &h,
            data(self.head_w),
            Some(data(self.head_b)),
            rows,
            d,
            cfg.vocab_size,
        )
    }

    /// Greedy argmax decoding of a single prompt.
    pub fn predict_greedy(
        &self,
        store: &ParameterStore<F>,
        prompt: &[u32],
        max_new: usize,
        eos: u32,
    ) -> Result<Decoded> {
        let mut out =
            self.predict_greedy_batch(store, std::slice::from_ref(&prompt.to_vec()), max_new, eos)?;
        Ok(out.pop().expect("one prompt in, one result out"))
    }

    /// Greedy decoding for many prompts. Prompts of equal length are decoded together;
    /// results come back in input order and do not depend on how prompts are grouped.
    pub fn predict_greedy_batch(
        &self,
        store: &ParameterStore<F>,
        prompts: &[Vec<u32>],
        max_new: usize,
        eos: u32,
    ) -> Result<Vec<Decoded>> {
        let cfg = self.config();
        for p in prompts {
            if p.is_empty() {
                return Err(NnError::Input("empty prompt".into()));
            }
            let need = p.len() + max_new;
            if need > cfg.max_seq_len {
                return Err(NnError::Capacity {
                    len: need,
                    max: cfg.max_seq_len,
                });
            }
            self.check_tokens(p, p.len())?;
        }
        let mut by_len: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, p) in prompts.iter().enumerate() {
            by_len.entry(p.len()).or_default().push(i);
        }
        let mut results: Vec<Option<Decoded>> = vec![None; prompts.len()];
        for (len, idxs) in by_len {
            for chunk in idxs.chunks(DECODE_CHUNK) {
                let decoded = self.decode_group(store, prompts, chunk, len, max_new, eos);
                for (&i, d) in chunk.iter().zip(decoded) {
                    results[i] = Some(d);
                }
            }
        }
        Ok(results
            .into_iter()
            .map(|d| d.expect("every prompt decoded"))
            .collect())
    }

    fn decode_group(
        &self,
        store: &ParameterStore<F>,
        prompts: &[Vec<u32>],
        rows: &[usize],
        len: usize,
        max_new: usize,
        eos: u32,
    ) -> Vec<Decoded> {
        let cfg = self.config();
        let vocab = cfg.vocab_size;
        let mut cache = KvCache::new(cfg.n_layers, rows.len(), len + max_new, cfg.d_model);
        let mut out: Vec<Decoded> = rows
            .iter()
            .map(|_| Decoded {
                tokens: Vec::new(),
                step_confidences: Vec::new(),
                hit_eos: false,
            })
            .collect();
        let mut logits = Vec::new();
        for pos in 0..len {
            let tokens: Vec<u32> = rows.iter().map(|&i| prompts[i][pos]).collect();
            logits = self.step(store, &mut cache, &tokens, pos);
        }
        for step in 0..max_new {
            let mut next = Vec::with_capacity(rows.len());
            for (r, dec) in out.iter_mut().enumerate() {
                let row = &logits[r * vocab..(r + 1) * vocab];
                let (arg, conf) = argmax_with_prob(row);
                if !dec.hit_eos {
                    dec.step_confidences.push(conf);
                    if arg == eos as usize {
                        dec.hit_eos = true;
                    } else {
                        dec.tokens.push(arg as u32);
                    }
                }
                next.push(arg as u32);
            }
            if out.iter().all(|d| d.hit_eos) || step + 1 == max_new {
                break;
            }
            logits = self.step(store, &mut cache, &next, len + step);
        }
        out
    }

    /// Teacher-forced log-probabilities of each target token given its prompt.
    pub fn target_log_probs(
        &self,
        store: &ParameterStore<F>,
        prompts: &[Vec<u32>],
        targets: &[Vec<u32>],
        pad: u32,
    ) -> Result<Vec<Vec<f64>>> {
        if prompts.len() != targets.len() {
            return Err(NnError::Shape(format!(
                "{} prompts for {} targets",
                prompts.len(),
                targets.len()
            )));
        }
        let vocab = self.config().vocab_size;
        let mut results = Vec::with_capacity(prompts.len());
        let idx: Vec<usize> = (0..prompts.len()).collect();
        for chunk in idx.chunks(64) {
            let seqs: Vec<Vec<u32>> = chunk
                .iter()
                .map(|&i| {
                    let mut s = prompts[i].clone();
                    // The final target token is only ever predicted, never consumed.
                    s.extend_from_slice(&targets[i][..targets[i].len().saturating_sub(1)]);
                    s
                })
                .collect();
            let batch = TokenBatch::from_sequences(&seqs, pad);
            let logits = self.logits(store, &batch)?;
            for (b, &i) in chunk.iter().enumerate() {
                let start = prompts[i].len() - 1;
                let lp: Vec<f64> = targets[i]
                    .iter()
                    .enumerate()
                    .map(|(k, &t)| {
                        let r = b * batch.seq + start + k;
                        log_softmax_at(&logits.data()[r * vocab..(r + 1) * vocab], t as usize)
                    })
                    .collect();
                results.push(lp);
            }
        }
        Ok(results)
    }
}

fn argmax_with_prob<F: Scalar>(row: &[F]) -> (usize, f64) {
    let mut arg = 0;
    let mut max = f64::NEG_INFINITY;
    for (i, v) in row.iter().enumerate() {
        if v.f64() > max {
            max = v.f64();
            arg = i;
        }
    }
    let z: f64 = row.iter().map(|v| (v.f64() - max).exp()).sum();
    (arg, 1.0 / z)
}

fn log_softmax_at<F: Scalar>(row: &[F], target: usize) -> f64 {
    let max = row.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.f64()));
    let z: f64 = row.iter().map(|v| (v.f64() - max).exp()).sum();
    row[target].f64() - max - z.ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::TransformerConfig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg(pos_mode: PosMode) -> TransformerConfig {
        TransformerConfig {
            n_layers: 2,
            n_heads: 2,
            d_model: 16,
            d_ff: 32,
            vocab_size: 9,
            max_seq_len: 24,
            pos_mode,
            dropout: 0.0,
        }
    }

    #[test]
    fn cached_steps_match_full_forward() {
        for pos_mode in [
            PosMode::Sinusoidal,
            PosMode::Learnable,
            PosMode::None,
            PosMode::Alibi,
        ] {
            let (model, store) = Transformer::<f64>::init(cfg(pos_mode), 11).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let seq: Vec<u32> = (0..12).map(|_| rng.gen_range(0..9)).collect();
            let full = model
                .logits(&store, &TokenBatch::new(seq.clone(), 1, 12).unwrap())
                .unwrap();
            let mut cache = KvCache::new(2, 1, 12, 16);
            for (pos, &t) in seq.iter().enumerate() {
                let step = model.step(&store, &mut cache, &[t], pos);
                for (a, b) in step.iter().zip(&full.data()[pos * 9..(pos + 1) * 9]) {
                    assert!((a - b).abs() < 1e-10, "{pos_mode:?} pos {pos}");
                }
            }
        }
    }

    #[test]
    fn greedy_is_deterministic_and_confident_in_unit_interval() {
        let (model, store) = Transformer::<f32>::init(cfg(PosMode::Sinusoidal), 3).unwrap();
        let prompts: Vec<Vec<u32>> = vec![vec![1, 2, 3], vec![4, 5], vec![1, 2, 3], vec![8]];
        let a = model.predict_greedy_batch(&store, &prompts, 6, 0).unwrap();
        let b = model.predict_greedy_batch(&store, &prompts, 6, 0).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0], a[2]);
        for d in &a {
            let c = d.confidence();
            assert!(c > 0.0 && c <= 1.0);
        }
        let single = model.predict_greedy(&store, &prompts[1], 6, 0).unwrap();
        assert_eq!(single, a[1]);
    }

    #[test]
    fn capacity_checked() {
        let (model, store) = Transformer::<f32>::init(cfg(PosMode::Sinusoidal), 3).unwrap();
        let err = model.predict_greedy(&store, &[1; 20], 5, 0).unwrap_err();
        assert!(matches!(err, NnError::Capacity { len: 25, max: 24 }));
    }

    #[test]
    fn teacher_forced_scores_agree_with_greedy_argmax() {
        let (model, store) = Transformer::<f64>::init(cfg(PosMode::Sinusoidal), 5).unwrap();
        let prompt = vec![1u32, 4, 2];
        let dec = model.predict_greedy(&store, &prompt, 5, 0).unwrap();
        let mut target = dec.tokens.clone();
        if dec.hit_eos {
            target.push(0);
        }
        let lp = model
            .target_log_probs(&store, &[prompt], &[target], 8)
            .unwrap();
        for (l, c) in lp[0].iter().zip(&dec.step_confidences) {
            assert!((l.exp() - c).abs() < 1e-9);
        }
    }
}
