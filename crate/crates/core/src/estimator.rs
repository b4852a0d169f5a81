//! The moment estimator `θ̂ = (B_n / (HΓ(2H)))^{-1/(2H)}`.

use libm::tgamma as gamma;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// `g(y) = HΓ(2H) y^{-2H}`, the stationary second moment as a function of the drift.
pub fn g_of(theta: f64, hurst: f64) -> Result<f64> {
    check_hurst(hurst)?;
    if !(theta > 0.0 && theta.is_finite()) {
        return domain(format!("g requires a positive argument, got {theta}"));
    }
    Ok(hurst * gamma(2.0 * hurst) * theta.powf(-2.0 * hurst))
}

/// `f(x) = (x / (HΓ(2H)))^{-1/(2H)}`, the inverse of [`g_of`].
pub fn f_of(x: f64, hurst: f64) -> Result<f64> {
    check_hurst(hurst)?;
    if !(x > 0.0 && x.is_finite()) {
        return domain(format!("f requires a positive argument, got {x}"));
    }
    Ok((x / (hurst * gamma(2.0 * hurst))).powf(-1.0 / (2.0 * hurst)))
}

/// `g'(θ) = -2H² Γ(2H) θ^{-2H-1}`.
pub fn g_prime(theta: f64, hurst: f64) -> f64 {
    -2.0 * hurst * hurst * gamma(2.0 * hurst) * theta.powf(-2.0 * hurst - 1.0)
}

fn check_hurst(hurst: f64) -> Result<()> {
    if hurst > 0.0 && hurst < 1.0 {
        Ok(())
    } else {
        domain(format!("hurst must lie in (0, 1), got {hurst}"))
    }
}

/// `B_n = (1/n) Σ X_{jh}²`.
pub fn b_n(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return domain("b_n of an empty path");
    }
    Ok(values.iter().map(|x| x * x).sum::<f64>() / values.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorResult {
    pub theta_hat: f64,
    pub b_n: f64,
    pub n: usize,
    pub hurst: f64,
}

/// Moment estimate of the drift from one observed path.
pub fn moment_estimate(values: &[f64], hurst: f64) -> Result<EstimatorResult> {
    let b = b_n(values)?;
    if b == 0.0 {
        return Err(Error::Degenerate("b_n is zero; the path is identically zero".into()));
    }
    let theta_hat = f_of(b, hurst)?;
    if !(theta_hat.is_finite() && theta_hat > 0.0) {
        return Err(Error::Numeric(format!("theta_hat = {theta_hat} from b_n = {b}")));
    }
    Ok(EstimatorResult {
        theta_hat,
        b_n: b,
        n: values.len(),
        hurst,
    })
}

/// `W_n = √n (B_n - E B_n)`.
pub fn w_n_realized(values: &[f64], exact_mean_b_n: f64, expected_n: usize) -> Result<f64> {
    if values.len() != expected_n {
        return domain(format!(
            "path length {} does not match n = {expected_n}",
            values.len()
        ));
    }
    Ok((values.len() as f64).sqrt() * (b_n(values)? - exact_mean_b_n))
}
