//! Laplace noise via inverse-CDF sampling.
//!
//! `lambda` is the scale parameter `b` of Laplace(0, b): mean 0, mean
//! absolute value `b`, variance `2 b^2`.

use crate::error::{CoreError, Result};
use crate::tensor::Tensor2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Location is fixed at 0; `lambda` is the Laplace scale.
#[derive(Debug, Clone, Copy)]
pub struct PrivacyConfig {
    pub lambda: f64,
    pub seed: u64,
}

/// Laplace(0, b) quantile function on u in (0, 1).
fn laplace_quantile(u: f64, b: f64) -> f64 {
    if u < 0.5 {
        b * (2.0 * u).ln()
    } else {
        -b * (2.0 * (1.0 - u)).ln()
    }
}

/// Laplace(0, b) CDF.
pub fn laplace_cdf(x: f64, b: f64) -> f64 {
    if x < 0.0 {
        0.5 * (x / b).exp()
    } else {
        1.0 - 0.5 * (-x / b).exp()
    }
}

/// I.i.d. Laplace(0, lambda) draws; `lambda = 0` yields a zero matrix.
/// Draws are `lambda * unit_draw`, so the same stream produces perfectly
/// correlated noise across scales (useful for sweep variance control).
pub fn sample_laplace(
    rows: usize,
    cols: usize,
    lambda: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Tensor2> {
    if lambda < 0.0 {
        return Err(CoreError::InvalidArgument(format!(
            "laplace scale must be >= 0, got {lambda}"
        )));
    }
    if lambda == 0.0 {
        return Ok(Tensor2::zeros(rows, cols));
    }
    let data = (0..rows * cols)
        .map(|_| {
            let u: f64 = rng.gen::<f64>().max(1e-300); // keep ln finite at u = 0
            lambda * laplace_quantile(u, 1.0)
        })
        .collect();
    Tensor2::from_vec(rows, cols, data)
}
