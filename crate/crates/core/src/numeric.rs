//! Compensated summation, batch-means standard errors and output formatting.

use serde::{Deserialize, Serialize};

use crate::linalg::{CMatrix, C64};

/// Neumaier-compensated sum of `f64`.
#[derive(Clone, Copy, Debug, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Compensated sum of complex values, componentwise.
#[derive(Clone, Copy, Debug, Default)]
pub struct KahanComplex {
    re: KahanSum,
    im: KahanSum,
}

impl KahanComplex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, z: C64) {
        self.re.add(z.re);
        self.im.add(z.im);
    }

    pub fn value(&self) -> C64 {
        C64::new(self.re.value(), self.im.value())
    }
}

/// Compensated entrywise sum of equally sized matrices.
#[derive(Clone, Debug)]
pub struct KahanMatrix {
    acc: Vec<KahanComplex>,
    rows: usize,
    cols: usize,
}

impl KahanMatrix {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            acc: vec![KahanComplex::new(); rows * cols],
            rows,
            cols,
        }
    }

    pub fn add(&mut self, m: &CMatrix) {
        self.add_scaled(m, C64::new(1.0, 0.0));
    }

    pub fn add_scaled(&mut self, m: &CMatrix, w: C64) {
        debug_assert_eq!((m.nrows(), m.ncols()), (self.rows, self.cols));
        for j in 0..self.cols {
            for i in 0..self.rows {
                self.acc[j * self.rows + i].add(m[(i, j)] * w);
            }
        }
    }

    pub fn value(&self) -> CMatrix {
        CMatrix::from_fn(self.rows, self.cols, |i, j| self.acc[j * self.rows + i].value())
    }
}

pub fn kahan_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut k = KahanSum::new();
    for v in values {
        k.add(v);
    }
    k.value()
}

/// Default number of batches for batch-means standard errors.
pub const DEFAULT_BATCHES: usize = 100;

/// Sample mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
}

/// Mean and batch-means standard error. Falls back to the i.i.d. formula when there are
/// fewer than two observations per batch.
pub fn batch_means(values: &[f64], batches: usize) -> MeanSe {
    let n = values.len();
    if n == 0 {
        return MeanSe { mean: f64::NAN, se: f64::NAN };
    }
    let mean = kahan_sum(values.iter().copied()) / n as f64;
    if n < 2 * batches.max(2) {
        return MeanSe { mean, se: iid_se(values, mean) };
    }
    let size = n / batches;
    let used = size * batches;
    let means: Vec<f64> = values[..used]
        .chunks(size)
        .map(|chunk| kahan_sum(chunk.iter().copied()) / size as f64)
        .collect();
    let bm = kahan_sum(means.iter().copied()) / batches as f64;
    let var = kahan_sum(means.iter().map(|m| (m - bm) * (m - bm))) / (batches - 1) as f64;
    MeanSe { mean, se: (var / batches as f64).sqrt() }
}

fn iid_se(values: &[f64], mean: f64) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let var = kahan_sum(values.iter().map(|v| (v - mean) * (v - mean))) / (n - 1) as f64;
    (var / n as f64).sqrt()
}

/// 17 significant digits, the precision used by every CSV writer in this crate.
pub fn fmt17(x: f64) -> String {
    if x.is_finite() {
        format!("{:.16e}", x)
    } else {
        format!("{}", x)
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kahan_recovers_small_terms() {
        let mut k = KahanSum::new();
        k.add(1e16);
        for _ in 0..1000 {
            k.add(1.0);
        }
        k.add(-1e16);
        assert_eq!(k.value(), 1000.0);
    }

    #[test]
    fn batch_means_of_constant_has_zero_se() {
        let v = vec![3.0; 1000];
        let r = batch_means(&v, 100);
        assert_eq!(r.mean, 3.0);
        assert_eq!(r.se, 0.0);
    }

    #[test]
    fn slope_of_power_law() {
        let xs = [1.0, 2.0, 4.0, 8.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(-0.5)).collect();
        assert!((log_log_slope(&xs, &ys) + 0.5).abs() < 1e-12);
    }

    #[test]
    fn fmt17_has_seventeen_digits() {
        let s = fmt17(1.0 / 3.0);
        assert_eq!(s, "3.3333333333333331e-1");
    }
}
