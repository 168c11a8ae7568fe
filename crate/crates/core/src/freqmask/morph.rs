use super::BitMask2D;
use crate::error::{Error, Result};

/// Binary dilation with a `k x k` square structuring element. Pixels
/// outside the image count as 0.
///
/// The square element is separable, so this runs a horizontal then a
/// vertical running-count pass.
pub fn dilate(m: &BitMask2D, k: usize) -> Result<BitMask2D> {
    if k.is_multiple_of(2) {
        return Err(Error::invalid(format!("dilation kernel must be odd, got {k}")));
    }
    if k == 1 {
        return Ok(m.clone());
    }
    let r = k / 2;
    let (h, w) = (m.height(), m.width());
    let mut rows = vec![false; h * w];
    for y in 0..h {
        let line = &m.bits()[y * w..(y + 1) * w];
        dilate_line(line, r, &mut rows[y * w..(y + 1) * w]);
    }
    let mut column = vec![false; h];
    let mut dilated = vec![false; h];
    let mut out = vec![false; h * w];
    for x in 0..w {
        for y in 0..h {
            column[y] = rows[y * w + x];
        }
        dilate_line(&column, r, &mut dilated);
        for y in 0..h {
            out[y * w + x] = dilated[y];
        }
    }
    BitMask2D::new(h, w, out)
}

fn dilate_line(src: &[bool], r: usize, dst: &mut [bool]) {
    let n = src.len();
    // prefix counts of ones
    let mut prefix = vec![0usize; n + 1];
    for (i, &b) in src.iter().enumerate() {
        prefix[i + 1] = prefix[i] + b as usize;
    }
    for (i, d) in dst.iter_mut().enumerate() {
        let lo = i.saturating_sub(r);
        let hi = (i + r + 1).min(n);
        *d = prefix[hi] > prefix[lo];
    }
}
