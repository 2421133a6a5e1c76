use crate::error::{NnError, Result};
use crate::kernels::alibi_slope;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Fixed sinusoidal table `[seq_len, d_model]`:
/// `pe[pos, 2i] = sin(pos / 10000^(2i/d))`, `pe[pos, 2i+1] = cos(pos / 10000^(2i/d))`.
pub fn sinusoidal_pe<F: Scalar>(seq_len: usize, d_model: usize) -> Result<Tensor<F>> {
    if d_model % 2 != 0 {
        return Err(NnError::Input(format!(
            "sinusoidal encoding needs an even width, got {d_model}"
        )));
    }
    let mut data = vec![F::zero(); seq_len * d_model];
    for pos in 0..seq_len {
        for i in 0..d_model / 2 {
            let angle = pos as f64 / 10000f64.powf(2.0 * i as f64 / d_model as f64);
            data[pos * d_model + 2 * i] = F::of(angle.sin());
            data[pos * d_model + 2 * i + 1] = F::of(angle.cos());
        }
    }
    Tensor::new(vec![seq_len, d_model], data)
}

/// ALiBi slopes `m_h = 2^(-8h/H)` for heads `h = 1..=H`.
pub fn alibi_slopes(n_heads: usize) -> Vec<f64> {
    (0..n_heads).map(|h| alibi_slope(h, n_heads)).collect()
}

/// Additive attention bias `[heads, seq, seq]`: `-m_h (i - j)` on and below the diagonal.
/// Entries above the diagonal are `-inf`, mirroring the causal mask.
pub fn alibi_bias<F: Scalar>(seq_len: usize, n_heads: usize) -> Result<Tensor<F>> {
    if n_heads == 0 {
        return Err(NnError::Input("ALiBi needs at least one head".into()));
    }
    let slopes = alibi_slopes(n_heads);
    let mut data = vec![F::zero(); n_heads * seq_len * seq_len];
    for (h, m) in slopes.iter().enumerate() {
        for i in 0..seq_len {
            for j in 0..seq_len {
                data[(h * seq_len + i) * seq_len + j] = if j <= i {
                    F::of(-m * (i - j) as f64)
                } else {
                    F::neg_infinity()
                };
            }
        }
    }
    Tensor::new(vec![n_heads, seq_len, seq_len], data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn position_zero_alternates_zero_one() {
        let pe = sinusoidal_pe::<f64>(3, 8).unwrap();
        assert_eq!(&pe.data()[..8], &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn first_column_is_sin_pos() {
        let pe = sinusoidal_pe::<f64>(50, 16).unwrap();
        for pos in 0..50 {
            assert!((pe.at(&[pos, 0]) - (pos as f64).sin()).abs() < 1e-15);
        }
    }

    #[test]
    fn closed_form_at_pos_one() {
        // d_model = 4, i = 1: sin(1 / 10000^(2/4)) = sin(0.01)
        let pe = sinusoidal_pe::<f64>(2, 4).unwrap();
        assert!((pe.at(&[1, 2]) - 0.009_999_833_334_166_665).abs() < 1e-15);
        assert!((pe.at(&[1, 2]) - 0.0099998).abs() < 1e-7);
        assert!((pe.at(&[1, 3]) - 0.01f64.cos()).abs() < 1e-15);
    }

    #[test]
    fn odd_width_rejected() {
        assert!(sinusoidal_pe::<f32>(4, 7).is_err());
    }

    #[test]
    fn alibi_zero_on_diagonal_and_monotone() {
        let bias = alibi_bias::<f64>(10, 8).unwrap();
        for h in 0..8 {
            for i in 0..10 {
                assert_eq!(bias.at(&[h, i, i]), 0.0);
                for j in 1..=i {
                    assert!(bias.at(&[h, i, j - 1]) <= bias.at(&[h, i, j]));
                }
                for j in i + 1..10 {
                    assert_eq!(bias.at(&[h, i, j]), f64::NEG_INFINITY);
                }
            }
        }
    }

    #[test]
    fn doubling_head_index_halves_slope_for_eight_heads() {
        // m_h = 2^(-h) when H = 8.
        let s = alibi_slopes(8);
        assert!((s[0] - 0.5).abs() < 1e-15);
        assert!((s[7] - 1.0 / 256.0).abs() < 1e-15);
        for h in [1usize, 2, 4] {
            let (m_h, m_2h) = (s[h - 1], s[2 * h - 1]);
            assert!((m_h / m_2h - 2f64.powi(h as i32)).abs() < 1e-12);
        }
        for w in s.windows(2) {
            assert!((w[0] / w[1] - 2.0).abs() < 1e-12);
        }
    }
}
