//! Shared accumulation kernels.
//!
//! Every dense and sparse path funnels its multiply-adds through these two
//! functions so that they agree bit-for-bit when they see the same operands
//! in the same order. Products of two `f32` values are exact in `f64`; only
//! the summation order can introduce differences.

/// Sum of `a[i] * b[i]` in index order, accumulated in `f64`.
#[inline]
pub fn dot_f64(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0f64;
    for (&x, &y) in a.iter().zip(b) {
        acc += x as f64 * y as f64;
    }
    acc
}

/// `out[o] = bias[o] + weights[o, :] . input` for a row-major
/// `[out.len(), input.len()]` weight matrix.
#[inline]
pub fn matvec_bias(weights: &[f32], bias: &[f32], input: &[f32], out: &mut [f32]) {
    let k = input.len();
    debug_assert_eq!(weights.len(), out.len() * k);
    debug_assert_eq!(bias.len(), out.len());
    for (o, dst) in out.iter_mut().enumerate() {
        let row = &weights[o * k..(o + 1) * k];
        *dst = (dot_f64(row, input) + bias[o] as f64) as f32;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matvec_small() {
        let mut out = [0.0f32; 2];
        matvec_bias(&[1.0, 2.0, 3.0, 4.0], &[0.5, -1.0], &[1.0, 1.0], &mut out);
        assert_eq!(out, [3.5, 6.0]);
    }
}
