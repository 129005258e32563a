//! Max-affine approximation of convex functions by tangent planes.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::netspec::MaxoutLayerSpec;
use crate::rng::substream;

/// Tangent-plane centers: the cell centers of the largest `g^dim <= p` grid,
/// topped up with seeded uniform points.
fn fit_points(lo: f64, hi: f64, dim: usize, p: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut g = (p as f64).powf(1.0 / dim as f64).round() as usize;
    while g > 1 && g.checked_pow(dim as u32).is_none_or(|v| v > p) {
        g -= 1;
    }
    let g = g.max(1);
    let cells = g.pow(dim as u32);
    let width = hi - lo;
    let mut points = Vec::with_capacity(p);
    for idx in 0..cells {
        let mut rest = idx;
        let point = (0..dim)
            .map(|_| {
                let j = rest % g;
                rest /= g;
                lo + width * (2 * j + 1) as f64 / (2 * g) as f64
            })
            .collect();
        points.push(point);
    }
    let mut rng = substream(seed, "max_affine_fit");
    while points.len() < p {
        points.push((0..dim).map(|_| rng.gen_range(lo..=hi)).collect());
    }
    points
}

/// Finite-difference step: a power of two near `1e-6 * width`, so steps from
/// dyadic points stay exact.
fn fd_step(width: f64) -> f64 {
    2f64.powi((1e-6 * width).log2().floor() as i32)
}

/// Fit `p` tangent planes of a convex `oracle` on `[lo, hi]^dim`, using
/// central differences for the gradients. Returns one maxout unit of rank `p`.
pub fn max_affine_fit(
    oracle: &dyn Fn(&[f64]) -> f64,
    lo: f64,
    hi: f64,
    dim: usize,
    p: usize,
    seed: u64,
) -> Result<MaxoutLayerSpec<f64>> {
    if p == 0 || dim == 0 || !(hi > lo) {
        return Err(Error::Validation(
            "fit needs p >= 1, dim >= 1 and hi > lo".into(),
        ));
    }
    let h = fd_step(hi - lo);
    let points = fit_points(lo, hi, dim, p, seed);
    let mut rows = Vec::with_capacity(p);
    let mut biases = Vec::with_capacity(p);
    let mut values = Vec::with_capacity(p);
    for x in &points {
        let fx = oracle(x);
        let mut grad = vec![0.0; dim];
        for c in 0..dim {
            let mut up = x.clone();
            let mut down = x.clone();
            up[c] = (x[c] + h).min(hi);
            down[c] = (x[c] - h).max(lo);
            grad[c] = (oracle(&up) - oracle(&down)) / (up[c] - down[c]);
        }
        let bias = fx - grad.iter().zip(x).map(|(g, v)| g * v).sum::<f64>();
        rows.push(grad);
        biases.push(bias);
        values.push(fx);
    }
    // A convex function lies above all of its tangent planes.
    for (i, x) in points.iter().enumerate() {
        for (j, (w, b)) in rows.iter().zip(&biases).enumerate() {
            let plane = w.iter().zip(x).map(|(g, v)| g * v).sum::<f64>() + b;
            let slack = 1e-6 * (1.0 + values[i].abs());
            if plane > values[i] + slack {
                return Err(Error::NonConvex(format!(
                    "tangent plane {j} exceeds the function by {} at fit point {i}",
                    plane - values[i]
                )));
            }
        }
    }
    MaxoutLayerSpec::new(vec![Matrix::from_rows(rows)?], vec![biases])
}

/// Apply a per-token layer `R^n -> R^m` independently to each of `t` tokens,
/// as a sequence layer `R^{nT} -> R^{mT}`.
pub fn lift_tokenwise(layer: &MaxoutLayerSpec<f64>, t: usize) -> Result<MaxoutLayerSpec<f64>> {
    let n = layer.n_in;
    let mut weights = Vec::with_capacity(layer.m_out * t);
    let mut biases = Vec::with_capacity(layer.m_out * t);
    for k in 0..t {
        for (w, b) in layer.weights.iter().zip(&layer.biases) {
            let lifted = Matrix::from_fn(layer.p, n * t, |j, c| {
                if c / n == k {
                    *w.get(j, c % n)
                } else {
                    0.0
                }
            });
            weights.push(lifted);
            biases.push(b.clone());
        }
    }
    MaxoutLayerSpec::new(weights, biases)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maxout_eval::eval_maxout_layer;

    fn sup_error(fit: &MaxoutLayerSpec<f64>, f: impl Fn(f64) -> f64) -> f64 {
        (0..=4096)
            .map(|i| {
                let x = -1.0 + i as f64 / 2048.0;
                (eval_maxout_layer(fit, &[x]).unwrap()[0] - f(x)).abs()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn parabola_error_matches_spacing() {
        for p in [4, 8, 16] {
            let fit = max_affine_fit(&|x: &[f64]| x[0] * x[0], -1.0, 1.0, 1, p, 0).unwrap();
            let err = sup_error(&fit, |x| x * x);
            assert!(err <= 1.0 / (p * p) as f64, "p={p} err={err}");
            assert!(err > 0.9 / (p * p) as f64);
        }
    }

    #[test]
    fn affine_and_abs_are_exact() {
        let fit = max_affine_fit(&|x: &[f64]| 3.0 * x[0] - 1.0, -1.0, 1.0, 1, 3, 0).unwrap();
        assert!(sup_error(&fit, |x| 3.0 * x - 1.0) < 1e-9);
        let fit = max_affine_fit(&|x: &[f64]| x[0].abs(), -1.0, 1.0, 1, 2, 0).unwrap();
        assert_eq!(sup_error(&fit, f64::abs), 0.0);
    }

    #[test]
    fn non_convex_rejected() {
        let err = max_affine_fit(&|x: &[f64]| -x[0] * x[0], -1.0, 1.0, 1, 4, 0);
        assert!(matches!(err, Err(Error::NonConvex(_))));
    }

    #[test]
    fn two_dim_points() {
        let fit = max_affine_fit(&|x: &[f64]| x[0] * x[0] + x[1] * x[1], -1.0, 1.0, 2, 10, 3)
            .unwrap();
        assert_eq!(fit.p, 10);
        assert_eq!(fit.n_in, 2);
    }

    #[test]
    fn lifted_layer_acts_per_token() {
        let fit = max_affine_fit(&|x: &[f64]| x[0].abs(), -1.0, 1.0, 1, 2, 0).unwrap();
        let lifted = lift_tokenwise(&fit, 3).unwrap();
        assert_eq!(
            eval_maxout_layer(&lifted, &[-0.5, 0.25, -1.0]).unwrap(),
            vec![0.5, 0.25, 1.0]
        );
    }
}
