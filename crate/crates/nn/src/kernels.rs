//! Numeric kernels shared by the taped forward pass and incremental decoding,
//! so that both paths produce the same arithmetic.

use crate::scalar::Scalar;

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// `out[m x n] (+)= a[m x k] @ b[k x n]`, all row-major, optionally reading `a`/`b` transposed.
#[allow(clippy::too_many_arguments)]
pub fn matmul<F: Scalar>(
    a: &[F],
    a_transposed: bool,
    b: &[F],
    b_transposed: bool,
    out: &mut [F],
    m: usize,
    k: usize,
    n: usize,
    accumulate: bool,
) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(out.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if a_transposed {
        (1, m as isize)
    } else {
        (k as isize, 1)
    };
    let (rsb, csb) = if b_transposed {
        (1, k as isize)
    } else {
        (n as isize, 1)
    };
    let beta = if accumulate { F::one() } else { F::zero() };
    // SAFETY: the asserted lengths match the described strided views.
    unsafe {
        F::gemm(
            m,
            k,
            n,
            F::one(),
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Row/column strides of a matrix view.
#[derive(Debug, Clone, Copy)]
pub struct Strides(pub usize, pub usize);

/// `c = a @ b + beta * c` over strided views of `[m x k]`, `[k x n]` and `[m x n]`.
/// `c` is row-major with row stride `rsc`.
#[allow(clippy::too_many_arguments)]
pub fn gemm_strided<F: Scalar>(
    (m, k, n): (usize, usize, usize),
    a: &[F],
    sa: Strides,
    b: &[F],
    sb: Strides,
    beta: F,
    c: &mut [F],
    rsc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    let last = |rows: usize, cols: usize, s: Strides| (rows - 1) * s.0 + (cols.max(1) - 1) * s.1;
    if k > 0 {
        assert!(last(m, k, sa) < a.len() && last(k, n, sb) < b.len());
    }
    assert!(last(m, n, Strides(rsc, 1)) < c.len());
    // SAFETY: every index touched by the views was bounds-checked above.
    unsafe {
        F::gemm(
            m,
            k,
            n,
            F::one(),
            a.as_ptr(),
            sa.0 as isize,
            sa.1 as isize,
            b.as_ptr(),
            sb.0 as isize,
            sb.1 as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            1,
        );
    }
}

/// `out = x @ w + bias` for `x: [rows x d_in]`, `w: [d_in x d_out]`.
pub fn linear<F: Scalar>(
    x: &[F],
    w: &[F],
    bias: Option<&[F]>,
    rows: usize,
    d_in: usize,
    d_out: usize,
) -> Vec<F> {
    let mut out = vec![F::zero(); rows * d_out];
    if let Some(b) = bias {
        for row in out.chunks_exact_mut(d_out) {
            row.copy_from_slice(b);
        }
    }
    matmul(
        x,
        false,
        w,
        false,
        &mut out,
        rows,
        d_in,
        d_out,
        bias.is_some(),
    );
    out
}

/// Row-wise layer normalization. Returns the output plus per-row mean and reciprocal std.
pub fn layer_norm<F: Scalar>(
    x: &[F],
    gain: &[F],
    bias: &[F],
    d: usize,
) -> (Vec<F>, Vec<f64>, Vec<f64>) {
    let rows = x.len() / d;
    let mut out = vec![F::zero(); x.len()];
    let mut means = Vec::with_capacity(rows);
    let mut rstds = Vec::with_capacity(rows);
    for (xr, or) in x.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
        let mean = xr.iter().map(|v| v.f64()).sum::<f64>() / d as f64;
        let var = xr.iter().map(|v| (v.f64() - mean).powi(2)).sum::<f64>() / d as f64;
        let rstd = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        for j in 0..d {
            let xhat = (xr[j].f64() - mean) * rstd;
            or[j] = F::of(xhat) * gain[j] + bias[j];
        }
        means.push(mean);
        rstds.push(rstd);
    }
    (out, means, rstds)
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)

/// Rational minimax approximation of `tanh`, accurate to a few f32 ulps.
/// Branch-free so that slice loops vectorize.
#[inline(always)]
pub fn fast_tanh<F: Scalar>(x: F) -> F {
    let c = F::of(7.905_311_107_635_498);
    let x = if x > c {
        c
    } else if x < -c {
        -c
    } else {
        x
    };
    let x2 = x * x;
    let mut p = F::of(-2.760_768_477_423_55e-16);
    p = p * x2 + F::of(2.000_187_904_824_77e-13);
    p = p * x2 + F::of(-8.604_671_522_137_35e-11);
    p = p * x2 + F::of(5.122_297_090_371_14e-8);
    p = p * x2 + F::of(1.485_722_357_179_79e-5);
    p = p * x2 + F::of(6.372_619_288_754_36e-4);
    p = p * x2 + F::of(4.893_524_558_917_86e-3);
    let mut q = F::of(1.198_258_394_667_02e-6);
    q = q * x2 + F::of(1.185_347_056_866_54e-4);
    q = q * x2 + F::of(2.268_434_632_439e-3);
    q = q * x2 + F::of(4.893_525_185_543_85e-3);
    x * p / q
}

/// Tanh-approximated GELU.
#[inline(always)]
pub fn gelu<F: Scalar>(x: F) -> F {
    let half = F::of(0.5);
    half * x * (F::one() + fast_tanh(F::of(GELU_C) * (x + F::of(0.044715) * x * x * x)))
}

#[inline(always)]
pub fn gelu_grad<F: Scalar>(x: F) -> F {
    let half = F::of(0.5);
    let t = fast_tanh(F::of(GELU_C) * (x + F::of(0.044715) * x * x * x));
    let dinner = F::of(GELU_C) * (F::one() + F::of(3.0 * 0.044715) * x * x);
    half * (F::one() + t) + half * x * (F::one() - t * t) * dinner
}

pub fn gelu_slice<F: Scalar>(x: &[F], out: &mut [F]) {
    for (o, &v) in out.iter_mut().zip(x) {
        *o = gelu(v);
    }
}

/// `acc += gout * gelu'(x)`, elementwise.
pub fn gelu_backward<F: Scalar>(x: &[F], gout: &[F], acc: &mut [F]) {
    for ((a, &g), &v) in acc.iter_mut().zip(gout).zip(x) {
        *a += g * gelu_grad(v);
    }
}

/// ALiBi slope for a zero-based head index: `2^(-8 (h + 1) / H)`.
pub fn alibi_slope(head: usize, n_heads: usize) -> f64 {
    2f64.powf(-8.0 * (head + 1) as f64 / n_heads as f64)
}

/// Attention of one query (the last position of `n_keys`) over keys `0..n_keys` for one head.
///
/// `keys`/`values` are row-major with row stride `stride`; the head occupies columns
/// `col..col + q.len()`. Writes the softmax weights into `probs[..n_keys]` and accumulates
/// the weighted values into `out`. `scores` is scratch space.
#[allow(clippy::too_many_arguments)]
pub fn attend<F: Scalar>(
    q: &[F],
    keys: &[F],
    values: &[F],
    stride: usize,
    col: usize,
    n_keys: usize,
    scale: f64,
    slope: Option<f64>,
    probs: &mut [F],
    out: &mut [F],
    scores: &mut Vec<f64>,
) {
    let dh = q.len();
    let query_pos = n_keys - 1;
    scores.clear();
    let mut max = f64::NEG_INFINITY;
    for j in 0..n_keys {
        let kr = &keys[j * stride + col..j * stride + col + dh];
        let mut dot = 0f64;
        for (a, b) in q.iter().zip(kr) {
            dot += a.f64() * b.f64();
        }
        let mut s = dot * scale;
        if let Some(m) = slope {
            s -= m * (query_pos - j) as f64;
        }
        max = max.max(s);
        scores.push(s);
    }
    let mut total = 0f64;
    for s in scores.iter_mut() {
        *s = (*s - max).exp();
        total += *s;
    }
    for o in out.iter_mut() {
        *o = F::zero();
    }
    for j in 0..n_keys {
        let p = F::of(scores[j] / total);
        probs[j] = p;
        let vr = &values[j * stride + col..j * stride + col + dh];
        for (o, &v) in out.iter_mut().zip(vr) {
            *o += p * v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gelu_grad_matches_finite_difference() {
        for &x in &[-3.0, -1.0, -0.1, 0.0, 0.3, 1.5, 4.0] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            let x: f64 = x;
            assert!((fd - gelu_grad(x)).abs() < 1e-6, "x={x}");
        }
    }

    #[test]
    fn fast_tanh_close_to_std() {
        let mut worst = 0f64;
        for i in -2000..=2000 {
            let x = i as f64 / 100.0;
            worst = worst.max((fast_tanh(x) - x.tanh()).abs());
            worst = worst.max((fast_tanh(x as f32) as f64 - x.tanh()).abs() / 100.0);
        }
        assert!(worst < 1e-6, "{worst}");
    }

    #[test]
    fn matmul_transposes() {
        // a = [[1,2],[3,4]], b = [[5,6],[7,8]]
        let a = [1.0f64, 2.0, 3.0, 4.0];
        let b = [5.0f64, 6.0, 7.0, 8.0];
        let mut out = [0.0; 4];
        matmul(&a, false, &b, false, &mut out, 2, 2, 2, false);
        assert_eq!(out, [19.0, 22.0, 43.0, 50.0]);
        matmul(&a, true, &b, false, &mut out, 2, 2, 2, false);
        assert_eq!(out, [26.0, 30.0, 38.0, 44.0]);
        matmul(&a, false, &b, true, &mut out, 2, 2, 2, false);
        assert_eq!(out, [17.0, 23.0, 39.0, 53.0]);
    }

    #[test]
    fn layer_norm_normalizes() {
        let x = [1.0f64, 2.0, 3.0, 4.0];
        let (y, mean, _) = layer_norm(&x, &[1.0; 4], &[0.0; 4], 4);
        assert!((mean[0] - 2.5).abs() < 1e-12);
        let m: f64 = y.iter().sum::<f64>() / 4.0;
        let v: f64 = y.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / 4.0;
        assert!(m.abs() < 1e-12);
        assert!((v - 1.0).abs() < 1e-4);
    }
}
