//! Parameter initializers.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::autograd::Tensor;
use crate::error::{Error, Result};

/// Standard deviation of the Gaussian embedding initializer.
pub const GAUSSIAN_STD: f64 = 0.1;

/// Orthogonal matrix of shape `rows x cols`.
///
/// A square Gaussian matrix of side `max(rows, cols)` is orthonormalized
/// (modified Gram-Schmidt, two passes) and its top-left block is kept, so
/// columns are orthonormal when `rows >= cols` and rows otherwise.
pub fn init_orthogonal<R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Result<Tensor> {
    let (rows, cols) = match shape {
        [r, c] => (*r, *c),
        _ => return Err(Error::dim("init_orthogonal", shape, &[2])),
    };
    let n = rows.max(cols);
    // column-major basis vectors
    let mut q: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..n).map(|_| StandardNormal.sample(rng)).collect())
        .collect();
    for j in 0..n {
        for _pass in 0..2 {
            for k in 0..j {
                let dot: f64 = q[j].iter().zip(&q[k]).map(|(a, b)| a * b).sum();
                let (head, tail) = q.split_at_mut(j);
                for (x, y) in tail[0].iter_mut().zip(&head[k]) {
                    *x -= dot * y;
                }
            }
        }
        let norm = q[j].iter().map(|x| x * x).sum::<f64>().sqrt();
        q[j].iter_mut().for_each(|x| *x /= norm);
    }
    let mut data = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for col in q.iter().take(cols) {
            data.push(col[r]);
        }
    }
    Tensor::new(vec![rows, cols], data)
}

/// Glorot normal: variance `2 / (fan_in + fan_out)` where `fan_in` is the
/// first dimension and `fan_out` the product of the rest.
pub fn init_xavier<R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Result<Tensor> {
    let fan_in = *shape.first().ok_or_else(|| Error::dim("init_xavier", shape, &[]))?;
    let fan_out: usize = shape[1..].iter().product::<usize>().max(1);
    let std = (2.0 / (fan_in + fan_out) as f64).sqrt();
    normal(shape, std, rng)
}

/// Zero-mean Gaussian with standard deviation [`GAUSSIAN_STD`].
pub fn init_gaussian<R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Result<Tensor> {
    normal(shape, GAUSSIAN_STD, rng)
}

fn normal<R: Rng + ?Sized>(shape: &[usize], std: f64, rng: &mut R) -> Result<Tensor> {
    let dist = Normal::new(0.0, std).map_err(|e| Error::Contract(e.to_string()))?;
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| dist.sample(rng)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn gram_deviation(t: &Tensor) -> f64 {
        let (r, c) = t.dims2().unwrap();
        let mut worst = 0.0f64;
        for i in 0..c {
            for j in 0..c {
                let dot: f64 = (0..r).map(|k| t.get2(k, i) * t.get2(k, j)).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }

    #[test]
    fn orthogonal_square_and_tall() {
        let q = init_orthogonal(&[4, 4], &mut seeded(1)).unwrap();
        assert!(gram_deviation(&q) < 1e-5);
        let q = init_orthogonal(&[40, 40], &mut seeded(2)).unwrap();
        assert!(gram_deviation(&q) < 1e-12);
        let q = init_orthogonal(&[6, 3], &mut seeded(3)).unwrap();
        assert!(gram_deviation(&q) < 1e-12);
    }

    #[test]
    fn orthogonal_wide_has_orthonormal_rows() {
        let q = init_orthogonal(&[3, 7], &mut seeded(4)).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = q.row_slice(i).iter().zip(q.row_slice(j)).map(|(a, b)| a * b).sum();
                assert!((dot - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
        assert!(init_orthogonal(&[2, 2, 2], &mut seeded(0)).is_err());
    }

    #[test]
    fn same_seed_same_init() {
        let a = init_xavier(&[5, 7], &mut seeded(9)).unwrap();
        let b = init_xavier(&[5, 7], &mut seeded(9)).unwrap();
        assert_eq!(a, b);
        let a = init_orthogonal(&[5, 5], &mut seeded(9)).unwrap();
        let b = init_orthogonal(&[5, 5], &mut seeded(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn xavier_variance() {
        let t = init_xavier(&[300, 300], &mut seeded(11)).unwrap();
        let sample = &t.data()[..10_000];
        let mean = sample.iter().sum::<f64>() / sample.len() as f64;
        let var = sample.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (sample.len() - 1) as f64;
        let target = 2.0 / 600.0;
        assert!((var - target).abs() / target < 0.2, "var {var}");
    }

    #[test]
    fn gaussian_moments() {
        let t = init_gaussian(&[100, 100], &mut seeded(5)).unwrap();
        let n = t.len() as f64;
        let mean = t.data().iter().sum::<f64>() / n;
        let std = (t.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!(mean.abs() < 0.005);
        assert!((std - 0.1).abs() < 0.005);
    }
}
