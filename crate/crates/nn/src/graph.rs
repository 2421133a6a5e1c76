//! Reverse-mode autodiff over a recorded tape of coarse tensor operations.

use rand::Rng;

use crate::error::{NnError, Result};
use crate::kernels;
use crate::params::{Gradients, ParamId, ParameterStore};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op<F> {
    Input,
    Param(ParamId),
    Embedding {
        table: NodeId,
        ids: Vec<usize>,
    },
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Sum(NodeId),
    Linear {
        x: NodeId,
        w: NodeId,
        b: Option<NodeId>,
    },
    LayerNorm {
        x: NodeId,
        gain: NodeId,
        bias: NodeId,
        means: Vec<f64>,
        rstds: Vec<f64>,
    },
    Gelu(NodeId),
    Dropout {
        x: NodeId,
        mask: Vec<F>,
    },
    Attention(Box<AttentionSaved<F>>),
    CrossEntropy {
        logits: NodeId,
        targets: Vec<usize>,
        mask: Vec<bool>,
        probs: Vec<F>,
        count: usize,
    },
}

#[derive(Debug)]
struct AttentionSaved<F> {
    q: NodeId,
    k: NodeId,
    v: NodeId,
    batch: usize,
    seq: usize,
    heads: usize,
    /// `[batch, heads, seq, seq]`, zero above the diagonal.
    probs: Vec<F>,
}

#[derive(Debug)]
struct Node<F> {
    op: Op<F>,
    /// Empty for parameter nodes, whose values live in the store.
    value: Tensor<F>,
    needs_grad: bool,
}

/// Geometry of a causal attention call over `[batch * seq, d_model]` activations.
#[derive(Debug, Clone)]
pub struct AttentionSpec {
    pub batch: usize,
    pub seq: usize,
    pub heads: usize,
    /// Per-head ALiBi slopes; `None` means no distance bias.
    pub alibi_slopes: Option<Vec<f64>>,
}

/// A recorded forward computation. Parameters are read from the borrowed store;
/// [`Graph::backward`] returns their gradients, which the caller folds back into the store.
pub struct Graph<'a, F: Scalar> {
    store: &'a ParameterStore<F>,
    nodes: Vec<Node<F>>,
    param_nodes: Vec<Option<NodeId>>,
    backward_done: bool,
}

impl<'a, F: Scalar> Graph<'a, F> {
    pub fn new(store: &'a ParameterStore<F>) -> Self {
        Self {
            store,
            nodes: Vec::new(),
            param_nodes: vec![None; store.len()],
            backward_done: false,
        }
    }

    fn push(&mut self, op: Op<F>, value: Tensor<F>, needs_grad: bool) -> NodeId {
        self.nodes.push(Node {
            op,
            value,
            needs_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Tensor<F> {
        match self.nodes[id.0].op {
            Op::Param(pid) => self.store.tensor(pid),
            _ => &self.nodes[id.0].value,
        }
    }

    fn data(&self, id: NodeId) -> &[F] {
        self.value(id).data()
    }

    fn shape(&self, id: NodeId) -> &[usize] {
        self.value(id).shape()
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A constant (no gradient flows into it).
    pub fn input(&mut self, value: Tensor<F>) -> NodeId {
        self.push(Op::Input, value, false)
    }

    pub fn param(&mut self, id: ParamId) -> NodeId {
        if let Some(node) = self.param_nodes[id.0] {
            return node;
        }
        let node = self.push(Op::Param(id), Tensor::zeros(vec![0]), true);
        self.param_nodes[id.0] = Some(node);
        node
    }

    pub fn param_by_name(&mut self, name: &str) -> Result<NodeId> {
        let id = self
            .store
            .id(name)
            .ok_or_else(|| NnError::Usage(format!("unknown parameter {name}")))?;
        Ok(self.param(id))
    }

    /// Gathers rows of a `[rows, d]` table.
    pub fn embedding(&mut self, table: NodeId, ids: Vec<usize>) -> Result<NodeId> {
        let shape = self.shape(table);
        if shape.len() != 2 {
            return Err(NnError::Shape(format!(
                "embedding table must be 2-D, got {shape:?}"
            )));
        }
        let (rows, d) = (shape[0], shape[1]);
        if let Some(&bad) = ids.iter().find(|&&i| i >= rows) {
            return Err(NnError::Input(format!(
                "id {bad} out of range for table of {rows} rows"
            )));
        }
        let src = self.data(table);
        let mut out = Vec::with_capacity(ids.len() * d);
        for &i in &ids {
            out.extend_from_slice(&src[i * d..(i + 1) * d]);
        }
        let value = Tensor::new(vec![ids.len(), d], out)?;
        let needs = self.needs(table);
        Ok(self.push(Op::Embedding { table, ids }, value, needs))
    }

    fn same_shape(&self, a: NodeId, b: NodeId) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(NnError::Shape(format!(
                "operands differ: {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b)?;
        let out: Vec<F> = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(&x, &y)| x + y)
            .collect();
        let value = Tensor::new(self.shape(a).to_vec(), out)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Op::Add(a, b), value, needs))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b)?;
        let out: Vec<F> = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(&x, &y)| x * y)
            .collect();
        let value = Tensor::new(self.shape(a).to_vec(), out)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Op::Mul(a, b), value, needs))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let total: f64 = self.data(x).iter().map(|v| v.f64()).sum();
        let needs = self.needs(x);
        self.push(Op::Sum(x), Tensor::scalar(F::of(total)), needs)
    }

    /// `x @ w + b` for `x: [n, d_in]`, `w: [d_in, d_out]`, `b: [d_out]`.
    pub fn linear(&mut self, x: NodeId, w: NodeId, b: Option<NodeId>) -> Result<NodeId> {
        let (xs, ws) = (self.shape(x), self.shape(w));
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[0] {
            return Err(NnError::Shape(format!("linear {xs:?} @ {ws:?}")));
        }
        let (n, d_in, d_out) = (xs[0], xs[1], ws[1]);
        if let Some(b) = b {
            if self.shape(b) != [d_out] {
                return Err(NnError::Shape(format!(
                    "bias {:?} for width {d_out}",
                    self.shape(b)
                )));
            }
        }
        let out = kernels::linear(
            self.data(x),
            self.data(w),
            b.map(|b| self.data(b)),
            n,
            d_in,
            d_out,
        );
        let value = Tensor::new(vec![n, d_out], out)?;
        let needs = self.needs(x) || self.needs(w) || b.is_some_and(|b| self.needs(b));
        Ok(self.push(Op::Linear { x, w, b }, value, needs))
    }

    pub fn layer_norm(&mut self, x: NodeId, gain: NodeId, bias: NodeId) -> Result<NodeId> {
        let xs = self.shape(x).to_vec();
        let d = *xs
            .last()
            .ok_or_else(|| NnError::Shape("layer norm of a scalar".into()))?;
        if self.shape(gain) != [d] || self.shape(bias) != [d] {
            return Err(NnError::Shape(format!(
                "layer norm affine params for width {d}"
            )));
        }
        let (out, means, rstds) =
            kernels::layer_norm(self.data(x), self.data(gain), self.data(bias), d);
        let value = Tensor::new(xs, out)?;
        let needs = self.needs(x) || self.needs(gain) || self.needs(bias);
        Ok(self.push(
            Op::LayerNorm {
                x,
                gain,
                bias,
                means,
                rstds,
            },
            value,
            needs,
        ))
    }

    pub fn gelu(&mut self, x: NodeId) -> NodeId {
        let mut out = vec![F::zero(); self.data(x).len()];
        kernels::gelu_slice(self.data(x), &mut out);
        let value = Tensor::new(self.shape(x).to_vec(), out).expect("same shape");
        let needs = self.needs(x);
        self.push(Op::Gelu(x), value, needs)
    }

    /// Inverted dropout; identity when `p == 0`.
    pub fn dropout<R: Rng>(&mut self, x: NodeId, p: f64, rng: &mut R) -> NodeId {
        if p <= 0.0 {
            return x;
        }
        let keep = F::of(1.0 / (1.0 - p));
        let mask: Vec<F> = (0..self.data(x).len())
            .map(|_| {
                if rng.gen::<f64>() < p {
                    F::zero()
                } else {
                    keep
                }
            })
            .collect();
        let out: Vec<F> = self
            .data(x)
            .iter()
            .zip(&mask)
            .map(|(&v, &m)| v * m)
            .collect();
        let value = Tensor::new(self.shape(x).to_vec(), out).expect("same shape");
        let needs = self.needs(x);
        self.push(Op::Dropout { x, mask }, value, needs)
    }

    /// Causal multi-head attention over `[batch * seq, d_model]` projections.
    pub fn attention(
        &mut self,
        q: NodeId,
        k: NodeId,
        v: NodeId,
        spec: AttentionSpec,
    ) -> Result<NodeId> {
        self.same_shape(q, k)?;
        self.same_shape(q, v)?;
        let qs = self.shape(q).to_vec();
        let AttentionSpec {
            batch,
            seq,
            heads,
            alibi_slopes,
        } = spec;
        if qs.len() != 2 || qs[0] != batch * seq || qs[1] % heads != 0 {
            return Err(NnError::Shape(format!(
                "attention input {qs:?} for {batch}x{seq}, {heads} heads"
            )));
        }
        if alibi_slopes.as_ref().is_some_and(|s| s.len() != heads) {
            return Err(NnError::Shape("one ALiBi slope per head required".into()));
        }
        let d = qs[1];
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let (qd, kd, vd) = (self.data(q), self.data(k), self.data(v));
        let mut out = vec![F::zero(); batch * seq * d];
        let mut probs = vec![F::zero(); batch * heads * seq * seq];
        let mut scores = vec![F::zero(); seq * seq];
        let dims = (seq, dh, seq);
        for b in 0..batch {
            let base = b * seq * d;
            for h in 0..heads {
                let col = base + h * dh;
                // scores = Q_h K_h^T
                kernels::gemm_strided(
                    dims,
                    &qd[col..],
                    kernels::Strides(d, 1),
                    &kd[col..],
                    kernels::Strides(1, d),
                    F::zero(),
                    &mut scores,
                    seq,
                );
                let slope = alibi_slopes.as_ref().map(|s| s[h]);
                let pb = (b * heads + h) * seq * seq;
                for i in 0..seq {
                    causal_softmax_row(
                        &scores[i * seq..i * seq + i + 1],
                        i,
                        scale,
                        slope,
                        &mut probs[pb + i * seq..pb + i * seq + i + 1],
                    );
                }
                kernels::gemm_strided(
                    (seq, seq, dh),
                    &probs[pb..pb + seq * seq],
                    kernels::Strides(seq, 1),
                    &vd[col..],
                    kernels::Strides(d, 1),
                    F::zero(),
                    &mut out[col..],
                    d,
                );
            }
        }
        let value = Tensor::new(qs, out)?;
        let needs = self.needs(q) || self.needs(k) || self.needs(v);
        let saved = AttentionSaved {
            q,
            k,
            v,
            batch,
            seq,
            heads,
            probs,
        };
        Ok(self.push(Op::Attention(Box::new(saved)), value, needs))
    }

    /// Softmax weights recorded by an attention node, laid out `[batch, heads, seq, seq]`.
    pub fn attention_probs(&self, id: NodeId) -> Option<&[F]> {
        match &self.nodes[id.0].op {
            Op::Attention(saved) => Some(&saved.probs),
            _ => None,
        }
    }

    /// Mean next-token negative log-likelihood over rows whose mask flag is set.
    pub fn cross_entropy(
        &mut self,
        logits: NodeId,
        targets: Vec<usize>,
        mask: Vec<bool>,
    ) -> Result<NodeId> {
        let ls = self.shape(logits).to_vec();
        if ls.len() != 2 || ls[0] != targets.len() || ls[0] != mask.len() {
            return Err(NnError::Shape(format!(
                "logits {ls:?} with {} targets and {} mask flags",
                targets.len(),
                mask.len()
            )));
        }
        let vocab = ls[1];
        let count = mask.iter().filter(|&&m| m).count();
        if count == 0 {
            return Err(NnError::Input(
                "every position is masked out of the loss".into(),
            ));
        }
        if let Some((_, &t)) = targets.iter().zip(&mask).find(|(&t, &m)| m && t >= vocab) {
            return Err(NnError::Input(format!(
                "target id {t} outside vocabulary of {vocab}"
            )));
        }
        let data = self.data(logits);
        let mut probs = vec![F::zero(); data.len()];
        let mut total = 0f64;
        for (r, row) in data.chunks_exact(vocab).enumerate() {
            if !mask[r] {
                continue;
            }
            let max = row.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.f64()));
            let z: f64 = row.iter().map(|v| (v.f64() - max).exp()).sum();
            let log_z = max + z.ln();
            total += log_z - row[targets[r]].f64();
            for (p, v) in probs[r * vocab..(r + 1) * vocab].iter_mut().zip(row) {
                *p = F::of((v.f64() - log_z).exp());
            }
        }
        let loss = total / count as f64;
        let needs = self.needs(logits);
        Ok(self.push(
            Op::CrossEntropy {
                logits,
                targets,
                mask,
                probs,
                count,
            },
            Tensor::scalar(F::of(loss)),
            needs,
        ))
    }

    /// Reverse pass from a scalar node. Usable once per recorded forward.
    pub fn backward(&mut self, loss: NodeId) -> Result<Gradients<F>> {
        if self.backward_done {
            return Err(NnError::Usage(
                "backward already ran on this graph; record a new forward pass".into(),
            ));
        }
        if self.value(loss).numel() != 1 {
            return Err(NnError::Usage(format!(
                "backward from non-scalar of shape {:?}",
                self.shape(loss)
            )));
        }
        self.backward_done = true;
        let mut grads: Vec<Option<Vec<F>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![F::one()]);
        let mut per_param: Vec<Option<Vec<F>>> = vec![None; self.store.len()];

        for idx in (0..=loss.0).rev() {
            let Some(gout) = grads[idx].take() else {
                continue;
            };
            if !self.nodes[idx].needs_grad {
                continue;
            }
            match &self.nodes[idx].op {
                Op::Input => {}
                Op::Param(pid) => per_param[pid.0] = Some(gout),
                Op::Embedding { table, ids } => {
                    let d = self.shape(*table)[1];
                    let g = slot(&mut grads, *table, self.value(*table).numel());
                    for (r, &i) in ids.iter().enumerate() {
                        for (a, &b) in g[i * d..(i + 1) * d]
                            .iter_mut()
                            .zip(&gout[r * d..(r + 1) * d])
                        {
                            *a += b;
                        }
                    }
                }
                Op::Add(a, b) => {
                    for &n in &[*a, *b] {
                        if self.needs(n) {
                            add_into(slot(&mut grads, n, gout.len()), &gout);
                        }
                    }
                }
                Op::Mul(a, b) => {
                    let (a, b) = (*a, *b);
                    if self.needs(a) {
                        let g = slot(&mut grads, a, gout.len());
                        for ((acc, &go), &bv) in g.iter_mut().zip(&gout).zip(self.data(b)) {
                            *acc += go * bv;
                        }
                    }
                    if self.needs(b) {
                        let g = slot(&mut grads, b, gout.len());
                        for ((acc, &go), &av) in g.iter_mut().zip(&gout).zip(self.data(a)) {
                            *acc += go * av;
                        }
                    }
                }
                Op::Sum(x) => {
                    let g = slot(&mut grads, *x, self.value(*x).numel());
                    for acc in g.iter_mut() {
                        *acc += gout[0];
                    }
                }
                Op::Linear { x, w, b } => {
                    let (x, w, b) = (*x, *w, *b);
                    let (n, d_in) = (self.shape(x)[0], self.shape(x)[1]);
                    let d_out = self.shape(w)[1];
                    if self.needs(x) {
                        let g = slot(&mut grads, x, n * d_in);
                        kernels::matmul(&gout, false, self.data(w), true, g, n, d_out, d_in, true);
                    }
                    if self.needs(w) {
                        let g = slot(&mut grads, w, d_in * d_out);
                        kernels::matmul(self.data(x), true, &gout, false, g, d_in, n, d_out, true);
                    }
                    if let Some(b) = b.filter(|&b| self.needs(b)) {
                        let g = slot(&mut grads, b, d_out);
                        for row in gout.chunks_exact(d_out) {
                            add_into(g, row);
                        }
                    }
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    means,
                    rstds,
                } => {
                    let (x, gain, bias) = (*x, *gain, *bias);
                    let d = self.shape(gain)[0];
                    let xd = self.data(x);
                    let gd = self.data(gain);
                    let mut dgain = vec![0f64; d];
                    let mut dbias = vec![0f64; d];
                    let mut dx = vec![F::zero(); xd.len()];
                    let mut xhat = vec![0f64; d];
                    let mut dxhat = vec![0f64; d];
                    for r in 0..xd.len() / d {
                        let (mean, rstd) = (means[r], rstds[r]);
                        let xr = &xd[r * d..(r + 1) * d];
                        let gr = &gout[r * d..(r + 1) * d];
                        let (mut s1, mut s2) = (0f64, 0f64);
                        for j in 0..d {
                            xhat[j] = (xr[j].f64() - mean) * rstd;
                            dgain[j] += gr[j].f64() * xhat[j];
                            dbias[j] += gr[j].f64();
                            dxhat[j] = gr[j].f64() * gd[j].f64();
                            s1 += dxhat[j];
                            s2 += dxhat[j] * xhat[j];
                        }
                        for j in 0..d {
                            let v = rstd * (dxhat[j] - s1 / d as f64 - xhat[j] * s2 / d as f64);
                            dx[r * d + j] = F::of(v);
                        }
                    }
                    if self.needs(x) {
                        add_into(slot(&mut grads, x, dx.len()), &dx);
                    }
                    if self.needs(gain) {
                        add_f64_into(slot(&mut grads, gain, d), &dgain);
                    }
                    if self.needs(bias) {
                        add_f64_into(slot(&mut grads, bias, d), &dbias);
                    }
                }
                Op::Gelu(x) => {
                    let x = *x;
                    let xd = self.data(x);
                    let g = slot(&mut grads, x, xd.len());
                    kernels::gelu_backward(xd, &gout, g);
                }
                Op::Dropout { x, mask } => {
                    let g = slot(&mut grads, *x, gout.len());
                    for ((acc, &go), &m) in g.iter_mut().zip(&gout).zip(mask) {
                        *acc += go * m;
                    }
                }
                Op::Attention(saved) => {
                    let (dq, dk, dv) = attention_backward(self, saved, &gout);
                    for (n, d) in [(saved.q, dq), (saved.k, dk), (saved.v, dv)] {
                        if self.needs(n) {
                            add_into(slot(&mut grads, n, d.len()), &d);
                        }
                    }
                }
                Op::CrossEntropy {
                    logits,
                    targets,
                    mask,
                    probs,
                    count,
                } => {
                    let vocab = self.shape(*logits)[1];
                    let scale = gout[0] / F::of(*count as f64);
                    let g = slot(&mut grads, *logits, probs.len());
                    for (r, &t) in targets.iter().enumerate() {
                        if !mask[r] {
                            continue;
                        }
                        let row = &mut g[r * vocab..(r + 1) * vocab];
                        for (acc, &p) in row.iter_mut().zip(&probs[r * vocab..(r + 1) * vocab]) {
                            *acc += p * scale;
                        }
                        row[t] -= scale;
                    }
                }
            }
        }
        Ok(Gradients { per_param })
    }
}

fn slot<F: Scalar>(grads: &mut [Option<Vec<F>>], id: NodeId, len: usize) -> &mut Vec<F> {
    grads[id.0].get_or_insert_with(|| vec![F::zero(); len])
}

fn add_into<F: Scalar>(acc: &mut [F], g: &[F]) {
    for (a, &b) in acc.iter_mut().zip(g) {
        *a += b;
    }
}

fn add_f64_into<F: Scalar>(acc: &mut [F], g: &[f64]) {
    for (a, &b) in acc.iter_mut().zip(g) {
        *a += F::of(b);
    }
}

/// Softmax over the scaled (and optionally distance-biased) scores of query `i`
/// against keys `0..=i`.
fn causal_softmax_row<F: Scalar>(
    scores: &[F],
    i: usize,
    scale: f64,
    slope: Option<f64>,
    out: &mut [F],
) {
    let biased = |j: usize| {
        let s = scores[j].f64() * scale;
        match slope {
            Some(m) => s - m * (i - j) as f64,
            None => s,
        }
    };
    let max = (0..=i).map(biased).fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = (0..=i).map(|j| (biased(j) - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    for (o, e) in out.iter_mut().zip(exps) {
        *o = F::of(e / total);
    }
}

fn attention_backward<F: Scalar>(
    graph: &Graph<'_, F>,
    saved: &AttentionSaved<F>,
    gout: &[F],
) -> (Vec<F>, Vec<F>, Vec<F>) {
    let AttentionSaved {
        q,
        k,
        v,
        batch,
        seq,
        heads,
        probs,
        ..
    } = saved;
    let (batch, seq, heads) = (*batch, *seq, *heads);
    let (qd, kd, vd) = (graph.data(*q), graph.data(*k), graph.data(*v));
    let d = graph.shape(*q)[1];
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut dq = vec![F::zero(); qd.len()];
    let mut dk = vec![F::zero(); kd.len()];
    let mut dv = vec![F::zero(); vd.len()];
    let mut dp = vec![F::zero(); seq * seq];
    let one = F::one();
    for b in 0..batch {
        let base = b * seq * d;
        for h in 0..heads {
            let col = base + h * dh;
            let p = &probs[(b * heads + h) * seq * seq..][..seq * seq];
            // dV_h += P^T dO_h
            kernels::gemm_strided(
                (seq, seq, dh),
                p,
                kernels::Strides(1, seq),
                &gout[col..],
                kernels::Strides(d, 1),
                one,
                &mut dv[col..],
                d,
            );
            // dP = dO_h V_h^T
            kernels::gemm_strided(
                (seq, dh, seq),
                &gout[col..],
                kernels::Strides(d, 1),
                &vd[col..],
                kernels::Strides(1, d),
                F::zero(),
                &mut dp,
                seq,
            );
            for i in 0..seq {
                let row = &mut dp[i * seq..(i + 1) * seq];
                let pr = &p[i * seq..(i + 1) * seq];
                let weighted: f64 = (0..=i).map(|j| pr[j].f64() * row[j].f64()).sum();
                for j in 0..=i {
                    row[j] = F::of(pr[j].f64() * (row[j].f64() - weighted) * scale);
                }
                for v in &mut row[i + 1..] {
                    *v = F::zero();
                }
            }
            // dQ_h += dS K_h, dK_h += dS^T Q_h
            kernels::gemm_strided(
                (seq, seq, dh),
                &dp,
                kernels::Strides(seq, 1),
                &kd[col..],
                kernels::Strides(d, 1),
                one,
                &mut dq[col..],
                d,
            );
            kernels::gemm_strided(
                (seq, seq, dh),
                &dp,
                kernels::Strides(1, seq),
                &qd[col..],
                kernels::Strides(d, 1),
                one,
                &mut dk[col..],
                d,
            );
        }
    }
    (dq, dk, dv)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(values: &[(&str, Vec<usize>, Vec<f64>)]) -> ParameterStore<f64> {
        let mut store = ParameterStore::new();
        for (name, shape, data) in values {
            store
                .insert(*name, Tensor::new(shape.clone(), data.clone()).unwrap())
                .unwrap();
        }
        store
    }

    #[test]
    fn sum_gradient_is_all_ones() {
        let store = store_with(&[("x", vec![3], vec![0.5, -2.0, 7.0])]);
        let mut g = Graph::new(&store);
        let x = g.param_by_name("x").unwrap();
        let loss = g.sum(x);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(store.id("x").unwrap()).unwrap(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn square_gradient_is_twice_x() {
        let store = store_with(&[("x", vec![1], vec![3.5])]);
        let mut g = Graph::new(&store);
        let x = g.param_by_name("x").unwrap();
        let sq = g.mul(x, x).unwrap();
        let loss = g.sum(sq);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(store.id("x").unwrap()).unwrap(), &[7.0]);
    }

    #[test]
    fn second_backward_is_a_usage_error() {
        let store = store_with(&[("x", vec![2], vec![1.0, 2.0])]);
        let mut g = Graph::new(&store);
        let x = g.param_by_name("x").unwrap();
        let loss = g.sum(x);
        g.backward(loss).unwrap();
        assert!(matches!(g.backward(loss), Err(NnError::Usage(_))));
    }

    #[test]
    fn cross_entropy_two_class_by_hand() {
        let store = ParameterStore::<f64>::new();
        let mut g = Graph::new(&store);
        let logits = g.input(Tensor::new(vec![1, 2], vec![0.0, 3f64.ln()]).unwrap());
        let loss = g.cross_entropy(logits, vec![1], vec![true]).unwrap();
        let expected = (4.0f64 / 3.0).ln();
        assert!((g.value(loss).data()[0] - expected).abs() < 1e-12);
        assert!((expected - 0.2877).abs() < 1e-4);
    }

    #[test]
    fn cross_entropy_uniform_logits_is_log_vocab() {
        let store = ParameterStore::<f64>::new();
        let mut g = Graph::new(&store);
        let logits = g.input(Tensor::zeros(vec![3, 7]));
        let loss = g
            .cross_entropy(logits, vec![0, 3, 6], vec![true, false, true])
            .unwrap();
        assert!((g.value(loss).data()[0] - 7f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_confident_logits_near_zero() {
        let store = ParameterStore::<f64>::new();
        let mut g = Graph::new(&store);
        let logits = g.input(Tensor::new(vec![1, 3], vec![-50.0, 50.0, -50.0]).unwrap());
        let loss = g.cross_entropy(logits, vec![1], vec![true]).unwrap();
        assert!(g.value(loss).data()[0] < 1e-20);
    }

    #[test]
    fn fully_masked_loss_rejected() {
        let store = ParameterStore::<f64>::new();
        let mut g = Graph::new(&store);
        let logits = g.input(Tensor::zeros(vec![2, 3]));
        assert!(matches!(
            g.cross_entropy(logits, vec![0, 1], vec![false, false]),
            Err(NnError::Input(_))
        ));
    }

    #[test]
    fn attention_rows_are_causal_distributions() {
        let store = ParameterStore::<f64>::new();
        let mut g = Graph::new(&store);
        let (batch, seq, d) = (2, 5, 8);
        let mk = |s: f64| Tensor::from_fn(vec![batch * seq, d], |i| ((i as f64) * s).sin());
        let q = g.input(mk(0.37));
        let k = g.input(mk(0.91));
        let v = g.input(mk(1.3));
        let spec = AttentionSpec {
            batch,
            seq,
            heads: 2,
            alibi_slopes: None,
        };
        let out = g.attention(q, k, v, spec).unwrap();
        let probs = g.attention_probs(out).unwrap();
        for (r, row) in probs.chunks_exact(seq).enumerate() {
            let i = r % seq;
            let total: f64 = row.iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
            assert!(row[i + 1..].iter().all(|&p| p == 0.0));
        }
    }
}
