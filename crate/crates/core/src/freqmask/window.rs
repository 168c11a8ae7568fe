use super::BitMask2D;
use crate::error::{Error, Result};

/// One keep bit per non-overlapping `win x win` window, row-major over the
/// window grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowDecision {
    rows: usize,
    cols: usize,
    win: usize,
    bits: Vec<bool>,
}

impl WindowDecision {
    pub fn new(rows: usize, cols: usize, win: usize, bits: Vec<bool>) -> Result<Self> {
        if rows == 0 || cols == 0 || win == 0 {
            return Err(Error::shape("window grid dimensions must be positive"));
        }
        if bits.len() != rows * cols {
            return Err(Error::shape(format!(
                "{} window bits for a {}x{} grid",
                bits.len(),
                rows,
                cols
            )));
        }
        Ok(Self { rows, cols, win, bits })
    }

    pub fn all(rows: usize, cols: usize, win: usize, keep: bool) -> Self {
        Self::new(rows, cols, win, vec![keep; rows * cols]).expect("positive grid")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn win(&self) -> usize {
        self.win
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn kept(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn coverage(&self) -> f64 {
        self.kept() as f64 / self.bits.len() as f64
    }

    #[inline]
    pub fn keep(&self, window: usize) -> bool {
        self.bits[window]
    }
}

/// Keeps a window iff its mean mask value is at least `sigma`.
pub fn window_decision(m: &BitMask2D, win: usize, sigma: f64) -> Result<WindowDecision> {
    if win == 0 {
        return Err(Error::invalid("window size must be positive"));
    }
    for (what, value) in [("mask height", m.height()), ("mask width", m.width())] {
        if value % win != 0 {
            return Err(Error::Divisibility { what, value, by: win });
        }
    }
    let (rows, cols) = (m.height() / win, m.width() / win);
    let area = (win * win) as f64;
    let mut bits = Vec::with_capacity(rows * cols);
    for wy in 0..rows {
        for wx in 0..cols {
            let mut ones = 0usize;
            for y in wy * win..(wy + 1) * win {
                for x in wx * win..(wx + 1) * win {
                    ones += m.get(y, x) as usize;
                }
            }
            bits.push(ones as f64 / area >= sigma);
        }
    }
    WindowDecision::new(rows, cols, win, bits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bounds_of_sigma() {
        let ones = BitMask2D::ones(8, 12);
        assert_eq!(window_decision(&ones, 4, 1.0).unwrap().kept(), 6);

        let m = BitMask2D::from_fn(8, 8, |y, x| (y * 8 + x) % 3 == 0);
        assert_eq!(window_decision(&m, 4, 0.0).unwrap().kept(), 4);
        assert_eq!(window_decision(&m, 4, 1.01).unwrap().kept(), 0);
    }

    #[test]
    fn half_full_window_is_kept_at_half() {
        let m = BitMask2D::from_fn(4, 4, |y, _| y < 2);
        let d = window_decision(&m, 4, 0.5).unwrap();
        assert_eq!(d.bits(), &[true]);
        let d = window_decision(&m, 4, 0.51).unwrap();
        assert_eq!(d.bits(), &[false]);
    }

    #[test]
    fn grid_order_is_row_major() {
        let m = BitMask2D::from_fn(4, 6, |y, x| y >= 2 && x < 2);
        let d = window_decision(&m, 2, 0.5).unwrap();
        assert_eq!((d.rows(), d.cols()), (2, 3));
        assert_eq!(d.bits(), &[false, false, false, true, false, false]);
    }

    #[test]
    fn rejects_non_divisible() {
        let m = BitMask2D::ones(6, 8);
        assert!(matches!(window_decision(&m, 4, 0.5), Err(Error::Divisibility { .. })));
    }

    proptest! {
        #[test]
        fn coverage_non_increasing_in_sigma(bits in prop::collection::vec(any::<bool>(), 64)) {
            let m = BitMask2D::new(8, 8, bits).unwrap();
            let mut last = usize::MAX;
            for s in [0.0, 0.1, 0.25, 0.3, 0.5, 0.7, 0.9, 1.0, 1.2] {
                let kept = window_decision(&m, 2, s).unwrap().kept();
                prop_assert!(kept <= last);
                last = kept;
            }
        }
    }
}
