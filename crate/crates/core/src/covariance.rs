//! Covariance of the discretely observed OU process.
//!
//! For fBm noise the observation covariance is assembled from the
//! stationary covariance `ρ₀` through `X_t = Y_t - e^{-θt} Y_0`:
//!
//! ```text
//! ρ(t,s) = ρ₀(|t-s|) - e^{-θt} ρ₀(s) - e^{-θs} ρ₀(t) + e^{-θ(t+s)} ρ₀(0)
//! ```
//!
//! and `ρ₀(τ)` is a one-dimensional integral over the stationary
//! representation `Y_t = θ ∫_0^∞ e^{-θx} (B_t - B_{t-x}) dx`, written so the
//! large `τ^{2H}` terms cancel analytically rather than in floating point.
//!
//! Other noises differ from fBm by a kernel `R - R^B` with an integrable
//! mixed partial, whose contribution `∫∫ e^{-θ(t-u)} e^{-θ(s-v)} ∂²(R-R^B)`
//! reduces to a 1-D integral for the `(u+v)^{2H}` term and a 2-D integral
//! for the bi-fractional `(u^{2H'} + v^{2H'})^K` term.

use std::collections::HashMap;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::kernels::NoiseSpec;
use crate::quadrature::{decay_breaks, decay_cutoff, over_panels, Estimate, Tolerance};

/// Largest time, in model units, any covariance evaluation may reach.
pub const HORIZON_CAP: f64 = 1e6;

/// Drift, step and sample size of a discretely observed OU model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuModel {
    pub theta: f64,
    pub h: f64,
    pub n: usize,
    pub noise: NoiseSpec,
}

impl OuModel {
    pub fn new(theta: f64, h: f64, n: usize, noise: NoiseSpec) -> Result<Self> {
        OuModel { theta, h, n, noise }.validated()
    }

    pub fn validated(self) -> Result<Self> {
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            return domain(format!("theta must be positive, got {}", self.theta));
        }
        if !(self.h > 0.0 && self.h.is_finite()) {
            return domain(format!("h must be positive, got {}", self.h));
        }
        if self.n == 0 {
            return domain("n must be at least 1");
        }
        self.noise.validated()?;
        Ok(self)
    }

    pub fn hurst(&self) -> f64 {
        self.noise.hurst()
    }

    pub fn with_n(&self, n: usize) -> Result<Self> {
        OuModel { n, ..*self }.validated()
    }

    /// Rate-verification operations need the central limit regime `H < 3/4`.
    pub fn require_clt_regime(&self) -> Result<()> {
        let h = self.hurst();
        if h < 0.75 {
            Ok(())
        } else {
            domain(format!("effective Hurst index {h} must be below 3/4"))
        }
    }

    /// True when the kernel is Brownian motion and closed forms apply.
    fn is_brownian(&self) -> bool {
        self.hurst() == 0.5
            && matches!(
                self.noise,
                NoiseSpec::Fbm { .. } | NoiseSpec::SubFbm { .. } | NoiseSpec::GeneralizedFbm { .. }
            )
    }
}

/// `a = HΓ(2H)θ^{-2H}`, the stationary second moment of the fBm-driven OU.
pub fn stationary_variance(theta: f64, hurst: f64) -> f64 {
    hurst * libm::tgamma(2.0 * hurst) * theta.powf(-2.0 * hurst)
}

/// Classical OU covariance (`H = 1/2`) with `X_0 = 0`.
pub fn brownian_ou_cov(theta: f64, s: f64, t: f64) -> f64 {
    ((-theta * (t - s).abs()).exp() - (-theta * (t + s)).exp()) / (2.0 * theta)
}

/// Stationary covariance `ρ₀(τ) = E[Y_τ Y_0]` of the fBm-driven OU.
///
/// `ρ₀(τ) = (θ/4) ∫_0^∞ e^{-θx} [(τ+x)^{2H} + |τ-x|^{2H} - 2τ^{2H}] dx`.
pub fn stationary_fbm_cov(theta: f64, hurst: f64, tau: f64, tol: Tolerance) -> Result<Estimate> {
    let g = 2.0 * hurst;
    let tau = tau.abs();
    let cutoff = decay_cutoff(theta, tau.powf(g));
    if tau == 0.0 {
        let breaks = decay_breaks(0.0, cutoff, theta, &[]);
        let e = over_panels(|x, _, _| (-theta * x).exp() * x.powf(g), &breaks, tol)?;
        return Ok(e.scale(0.5 * theta));
    }
    let tg = tau.powf(g);
    // x in [0, τ/2]: bracket = τ^{2H} [(1+r)^{2H} + (1-r)^{2H} - 2], r = x/τ
    let inner = |x: f64, _: f64, _: f64| (-theta * x).exp() * tg * even_binomial_gap(g, x / tau);
    let near = over_panels(inner, &decay_breaks(0.0, 0.5 * tau, theta, &[]), tol)?;
    // x in [τ/2, τ], integrated in y = τ - x
    let upper = |y: f64, _: f64, _: f64| {
        let x = tau - y;
        (-theta * x).exp() * tg * ((g * (x / tau).ln_1p()).exp_m1() + (y / tau).powf(g) - 1.0)
    };
    let mut ybreaks: Vec<f64> = decay_breaks(0.5 * tau, tau, theta, &[])
        .into_iter()
        .map(|x| tau - x)
        .collect();
    ybreaks.sort_by(f64::total_cmp);
    let near = near + over_panels(upper, &ybreaks, tol)?;
    // x = τ + y, y in [0, ∞)
    let far_fn = |y: f64, _: f64, _: f64| -> f64 {
        (-theta * y).exp() * ((2.0 * tau + y).powf(g) + y.powf(g) - 2.0 * tg)
    };
    let far_breaks = decay_breaks(0.0, cutoff, theta, &[]);
    let far = over_panels(far_fn, &far_breaks, tol)?.scale((-theta * tau).exp());
    Ok((near + far).scale(0.25 * theta))
}

/// `(1+r)^g + (1-r)^g - 2 = 2 Σ_{m≥1} C(g, 2m) r^{2m}` for `0 ≤ r ≤ 1/2`,
/// summed as a series so the result keeps full relative accuracy.
fn even_binomial_gap(g: f64, r: f64) -> f64 {
    let r2 = r * r;
    let mut coef = g * (g - 1.0) / 2.0;
    let mut pow = r2;
    let mut sum = 0.0;
    for m in 1..200 {
        let term = coef * pow;
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() {
            break;
        }
        let m = m as f64;
        coef *= (g - 2.0 * m) * (g - 2.0 * m - 1.0) / ((2.0 * m + 1.0) * (2.0 * m + 2.0));
        pow *= r2;
    }
    2.0 * sum
}

/// `∫_0^t ∫_0^s e^{-θ(t-u)} e^{-θ(s-v)} γ(γ-1)(u+v)^{γ-2} du dv`.
///
/// Reduced to one dimension along `p = (t-u) + (s-v)`; the cross-section
/// length is `min(p, s, t, t+s-p)`. Integrated in `r = t+s-p` so the
/// singular endpoint `r = 0` is resolved exactly. The range is truncated
/// to `p ≤ decay_cutoff`, beyond which the weight `e^{-θp}` is negligible.
pub fn sum_term_mixed(theta: f64, hurst: f64, s: f64, t: f64, tol: Tolerance) -> Result<Estimate> {
    let g = 2.0 * hurst;
    let coef = g * (g - 1.0);
    if coef == 0.0 || s == 0.0 || t == 0.0 {
        return Ok(Estimate::ZERO);
    }
    let total = s + t;
    let (lo, hi) = (s.min(t), s.max(t));
    let p_end = total.min(decay_cutoff(theta, total.powf(g)));
    let f = |r: f64, _: f64, _: f64| -> f64 {
        let m = r.min(lo).min(total - r);
        (-theta * (total - r)).exp() * r.powf(g - 2.0) * m
    };
    let mut breaks: Vec<f64> = decay_breaks(0.0, p_end, theta, &[lo, hi])
        .into_iter()
        .map(|p| total - p)
        .collect();
    breaks.sort_by(f64::total_cmp);
    if p_end == total {
        // r = 0 exactly, not total - total
        breaks[0] = 0.0;
    }
    Ok(over_panels(f, &breaks, tol)?.scale(coef))
}

/// `∫_0^t ∫_0^s e^{-θ(t-u)} e^{-θ(s-v)} ∂²/∂u∂v (u^{2H'} + v^{2H'})^K du dv`.
///
/// The `v` integral is taken by parts against `ψ_u(v) = (u^{2H'} + v^{2H'})^{K-1}`,
/// which leaves a bounded integrand; the `u^{2H'-1}` factor stays in the
/// outer integral where tanh-sinh resolves it at the endpoint.
pub fn bi_term_mixed(theta: f64, hprime: f64, k: f64, s: f64, t: f64, tol: Tolerance) -> Result<Estimate> {
    let g = 2.0 * hprime;
    let coef = k * g;
    if k == 1.0 || s == 0.0 || t == 0.0 {
        return Ok(Estimate::ZERO);
    }
    let span = decay_cutoff(theta, (s + t).powf(g * k));
    let u_breaks = window_breaks(t, span, theta);
    let v_breaks = window_breaks(s, span, theta);
    let worst = std::cell::Cell::new(0.0f64);
    let failure = std::cell::RefCell::new(None);
    let outer = |u: f64, _: f64, _: f64| -> f64 {
        let ug = u.powf(g);
        let psi = |v: f64| (ug + v.powf(g)).powf(k - 1.0);
        let psi_s = psi(s);
        let w_u = (-theta * (t - u)).exp() * u.powf(g - 1.0);
        let inner = |v: f64, _: f64, _: f64| -> f64 { theta * (-theta * (s - v)).exp() * (psi_s - psi(v)) };
        let mut breaks = v_breaks.clone();
        if u < s && u > breaks[0] && u > 1e-9 * s {
            breaks.push(u);
            breaks.sort_by(f64::total_cmp);
        }
        let inner_tol = Tolerance {
            abs: tol.abs,
            rel: tol.rel,
        };
        match over_panels(inner, &breaks, inner_tol) {
            Ok(e) => {
                let boundary = (-theta * s).exp() * (psi_s - ug.powf(k - 1.0));
                worst.set(worst.get().max(e.error * w_u.abs()));
                w_u * (e.value + boundary)
            }
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                0.0
            }
        }
    };
    let mut est = over_panels(outer, &u_breaks, tol)?;
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    est.error += worst.get() * t.min(span);
    Ok(est.scale(coef))
}

/// Breakpoints on `[max(0, end - span), end]` for a weight `e^{-θ(end - x)}`.
fn window_breaks(end: f64, span: f64, theta: f64) -> Vec<f64> {
    let len = end.min(span);
    let mut b: Vec<f64> = decay_breaks(0.0, len, theta, &[])
        .into_iter()
        .map(|d| end - d)
        .collect();
    b.sort_by(f64::total_cmp);
    if len == end {
        b[0] = 0.0;
    }
    b
}

/// Tuning for covariance evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovOptions {
    pub tol: Tolerance,
    /// Use quadrature even where a closed form exists (for cross-checks).
    pub force_quadrature: bool,
}

impl Default for CovOptions {
    fn default() -> Self {
        CovOptions {
            tol: Tolerance {
                abs: 1e-15,
                rel: 1e-12,
            },
            force_quadrature: false,
        }
    }
}

fn check_times(s: f64, t: f64) -> Result<()> {
    if !(s >= 0.0 && t >= 0.0 && s.is_finite() && t.is_finite()) {
        return domain(format!("times must be finite and nonnegative, got ({s}, {t})"));
    }
    if s.max(t) > HORIZON_CAP {
        return domain(format!("time {} exceeds the horizon cap {HORIZON_CAP}", s.max(t)));
    }
    Ok(())
}

/// `E[X_t X_s]` for fBm noise given the needed `ρ₀` values.
#[inline]
fn fbm_from_stationary(theta: f64, s: f64, t: f64, r_lag: f64, r_s: f64, r_t: f64, r_0: f64) -> f64 {
    let (es, et) = ((-theta * s).exp(), (-theta * t).exp());
    r_lag - et * r_s - es * r_t + et * es * r_0
}

/// Contribution of `R - R^B` to the covariance, on top of the fBm part.
fn noise_correction(model: &OuModel, fbm_part: f64, s: f64, t: f64, tol: Tolerance) -> Result<Estimate> {
    let theta = model.theta;
    let hurst = model.hurst();
    Ok(match model.noise {
        NoiseSpec::Fbm { .. } => Estimate::ZERO,
        NoiseSpec::SubFbm { .. } | NoiseSpec::GeneralizedFbm { .. } => {
            sum_term_mixed(theta, hurst, s, t, tol)?.scale(-model.noise.sum_weight())
        }
        NoiseSpec::SubBiFbm { hprime, k } => {
            bi_term_mixed(theta, hprime, k, s, t, tol)? + sum_term_mixed(theta, hurst, s, t, tol)?.scale(-0.5)
        }
        NoiseSpec::BiFbm { hprime, k } => {
            let w = 0.5f64.powf(k);
            bi_term_mixed(theta, hprime, k, s, t, tol)?.scale(w)
                + Estimate {
                    value: (2.0 * w - 1.0) * fbm_part,
                    error: 0.0,
                }
        }
    })
}

/// `E[X_t X_s]` (or `E[Z_t Z_s]` for non-fBm noise) with `X_0 = 0`.
pub fn ou_cov(model: &OuModel, s: f64, t: f64) -> Result<f64> {
    ou_cov_with(model, s, t, CovOptions::default()).map(|e| e.value)
}

/// [`ou_cov`] with explicit options, returning the error estimate.
pub fn ou_cov_with(model: &OuModel, s: f64, t: f64, opts: CovOptions) -> Result<Estimate> {
    model.validated()?;
    check_times(s, t)?;
    if s == 0.0 || t == 0.0 {
        return Ok(Estimate::ZERO);
    }
    let theta = model.theta;
    if model.is_brownian() && !opts.force_quadrature {
        return Ok(Estimate {
            value: brownian_ou_cov(theta, s, t),
            error: 0.0,
        });
    }
    let hurst = model.hurst();
    let rho = |x: f64| stationary_fbm_cov(theta, hurst, x, opts.tol);
    let (r_lag, r_s, r_t, r_0) = (rho(t - s)?, rho(s)?, rho(t)?, rho(0.0)?);
    let fbm = fbm_from_stationary(theta, s, t, r_lag.value, r_s.value, r_t.value, r_0.value);
    let fbm_err = r_lag.error + r_s.error + r_t.error + r_0.error;
    let corr = noise_correction(model, fbm, s, t, opts.tol)?;
    let out = Estimate {
        value: fbm,
        error: fbm_err,
    } + corr;
    let target = 1e-9 * out.value.abs() + 1e-13;
    if out.error > target {
        return Err(Error::Accuracy {
            context: format!("ou_cov({s}, {t})"),
            achieved: out.error,
            requested: target,
        });
    }
    Ok(out)
}

/// How a Gram matrix was computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovMethod {
    Quadrature,
    ClosedFormHHalf,
}

/// Covariance matrix of `(X_h, …, X_{nh})`.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    pub entries: DMatrix<f64>,
    pub model: OuModel,
    pub method: CovMethod,
}

impl GramMatrix {
    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn max_diagonal(&self) -> f64 {
        self.entries.diagonal().iter().copied().fold(0.0, f64::max)
    }

    /// `E[B_n] = (1/n) Σ_j ρ(jh, jh)`.
    pub fn mean_b_n(&self) -> f64 {
        self.entries.diagonal().iter().sum::<f64>() / self.n() as f64
    }

    /// The Gram matrix of the first `n` observations, which is the leading
    /// block since entries do not depend on the sample size.
    pub fn leading(&self, n: usize) -> Result<GramMatrix> {
        if n == 0 || n > self.n() {
            return domain(format!("leading block of size {n} from a {} matrix", self.n()));
        }
        Ok(GramMatrix {
            entries: self.entries.view((0, 0), (n, n)).into_owned(),
            model: self.model.with_n(n)?,
            method: self.method,
        })
    }

    /// Wraps a matrix after checking the Gram invariants.
    pub fn from_entries(entries: DMatrix<f64>, model: OuModel, method: CovMethod) -> Result<Self> {
        let g = GramMatrix {
            entries,
            model,
            method,
        };
        g.check_invariants()?;
        Ok(g)
    }

    /// Symmetry, positive diagonal, and minimum eigenvalue at least
    /// `-1e-8 · max diagonal` (tested by factoring the shifted matrix).
    pub fn check_invariants(&self) -> Result<()> {
        let n = self.n();
        if self.entries.ncols() != n || n != self.model.n {
            return Err(Error::Numeric(format!(
                "gram shape {}x{} does not match n = {}",
                n,
                self.entries.ncols(),
                self.model.n
            )));
        }
        for i in 0..n {
            if !(self.entries[(i, i)] > 0.0) {
                return Err(Error::Numeric(format!(
                    "gram diagonal entry {i} is not positive: {}",
                    self.entries[(i, i)]
                )));
            }
            for j in 0..i {
                let (a, b) = (self.entries[(i, j)], self.entries[(j, i)]);
                if (a - b).abs() > 1e-12 * a.abs().max(b.abs()) {
                    return Err(Error::Numeric(format!("gram not symmetric at ({i}, {j})")));
                }
            }
        }
        let shift = 1e-8 * self.max_diagonal();
        let mut shifted = self.entries.clone();
        for i in 0..n {
            shifted[(i, i)] += shift;
        }
        if shifted.cholesky().is_none() {
            return Err(Error::Numeric(
                "gram matrix has an eigenvalue below -1e-8 x max diagonal".into(),
            ));
        }
        Ok(())
    }
}

/// Stationary covariance values `ρ₀(kh)` at lattice lags `0..=max_lag`.
fn stationary_lattice(theta: f64, h: f64, hurst: f64, max_lag: usize, tol: Tolerance) -> Result<Vec<Estimate>> {
    (0..=max_lag)
        .into_par_iter()
        .map(|k| stationary_fbm_cov(theta, hurst, k as f64 * h, tol))
        .collect()
}

/// Tabulates [`ou_cov`] on the observation grid `jh, lh` for `1 ≤ j, l ≤ n`.
pub fn gram_matrix(model: &OuModel) -> Result<GramMatrix> {
    gram_matrix_with(model, CovOptions::default())
}

pub fn gram_matrix_with(model: &OuModel, opts: CovOptions) -> Result<GramMatrix> {
    let model = model.validated()?;
    let (n, theta, h) = (model.n, model.theta, model.h);
    let horizon = n as f64 * h + decay_cutoff(theta, 0.0);
    if horizon > HORIZON_CAP {
        return domain(format!("n*h plus burn-in ({horizon}) exceeds the horizon cap {HORIZON_CAP}"));
    }
    if model.is_brownian() && !opts.force_quadrature {
        let m = DMatrix::from_fn(n, n, |i, j| {
            brownian_ou_cov(theta, (i + 1) as f64 * h, (j + 1) as f64 * h)
        });
        return GramMatrix::from_entries(m, model, CovMethod::ClosedFormHHalf);
    }
    let hurst = model.hurst();
    let rho0 = stationary_lattice(theta, h, hurst, n, opts.tol)?;
    let r: Vec<f64> = rho0.iter().map(|e| e.value).collect();
    let fbm = |j: usize, l: usize| {
        fbm_from_stationary(theta, j as f64 * h, l as f64 * h, r[j.abs_diff(l)], r[j], r[l], r[0])
    };

    // Lattice memo for the (u+v)^{2H} term: beyond `kcut` steps from the
    // origin the truncated integral depends only on j + l.
    let sum_weight = model.noise.sum_weight();
    let needs_sum = match model.noise {
        NoiseSpec::SubFbm { .. } | NoiseSpec::GeneralizedFbm { .. } => sum_weight != 0.0,
        NoiseSpec::SubBiFbm { .. } => true,
        _ => false,
    } && hurst != 0.5;
    let sum_memo: HashMap<(usize, usize), f64> = if needs_sum {
        let kcut = (decay_cutoff(theta, (2.0 * n as f64 * h).powf(2.0 * hurst)) / h).ceil() as usize;
        let mut keys: Vec<(usize, usize)> = Vec::new();
        for j in 1..=n {
            for l in 1..=j {
                keys.push((j + l, l.min(kcut)));
            }
        }
        keys.sort_unstable();
        keys.dedup();
        keys.into_par_iter()
            .map(|(total, lo)| {
                let (s, t) = (lo as f64 * h, (total - lo) as f64 * h);
                sum_term_mixed(theta, hurst, s, t, opts.tol).map(|e| ((total, lo), e.value))
            })
            .collect::<Result<HashMap<_, _>>>()?
    } else {
        HashMap::new()
    };
    let kcut_lookup = if needs_sum {
        (decay_cutoff(theta, (2.0 * n as f64 * h).powf(2.0 * hurst)) / h).ceil() as usize
    } else {
        0
    };
    let sum_at = |j: usize, l: usize| -> f64 {
        if !needs_sum {
            return 0.0;
        }
        sum_memo[&(j + l, j.min(l).min(kcut_lookup))]
    };

    let rows: Vec<Vec<f64>> = (1..=n)
        .into_par_iter()
        .map(|j| -> Result<Vec<f64>> {
            (1..=j)
                .map(|l| {
                    let base = fbm(j, l);
                    let (s, t) = (l as f64 * h, j as f64 * h);
                    Ok(match model.noise {
                        NoiseSpec::Fbm { .. } => base,
                        NoiseSpec::SubFbm { .. } | NoiseSpec::GeneralizedFbm { .. } => {
                            base - sum_weight * sum_at(j, l)
                        }
                        NoiseSpec::SubBiFbm { hprime, k } => {
                            base + bi_term_mixed(theta, hprime, k, s, t, opts.tol)?.value - 0.5 * sum_at(j, l)
                        }
                        NoiseSpec::BiFbm { hprime, k } => {
                            let w = 0.5f64.powf(k);
                            2.0 * w * base + w * bi_term_mixed(theta, hprime, k, s, t, opts.tol)?.value
                        }
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let m = DMatrix::from_fn(n, n, |i, j| {
        let (a, b) = if i >= j { (i, j) } else { (j, i) };
        rows[a][b]
    });
    GramMatrix::from_entries(m, model, CovMethod::Quadrature)
}

/// Stationary covariance `ρ₀(kh)`, `k = 0..=max_lag`, with its decay envelope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryCov {
    pub theta: f64,
    pub h: f64,
    pub hurst: f64,
    pub values: Vec<f64>,
    /// Largest quadrature error estimate over the tabulated lags.
    pub max_error: f64,
    /// `max_{k ∈ [K/2, K]} |ρ₀(kh)| (1 + kh)^{2-2H}` with `K = max_lag`.
    pub tail_constant: f64,
}

/// Tabulates `ρ₀(kh)` for `k = 0..=max_lag` to absolute tolerance `tol`.
pub fn stationary_cov(theta: f64, h: f64, hurst: f64, max_lag: usize, tol: f64) -> Result<StationaryCov> {
    if !(hurst > 0.0 && hurst < 1.0) {
        return domain(format!("hurst must lie in (0, 1), got {hurst}"));
    }
    if !(theta > 0.0 && h > 0.0) {
        return domain(format!("theta and h must be positive, got ({theta}, {h})"));
    }
    if max_lag as f64 * h > HORIZON_CAP {
        return domain(format!("max_lag * h exceeds the horizon cap {HORIZON_CAP}"));
    }
    let qtol = Tolerance {
        abs: (0.01 * tol).min(1e-15),
        rel: 1e-13,
    };
    let est = stationary_lattice(theta, h, hurst, max_lag, qtol)?;
    let max_error = est.iter().map(|e| e.error).fold(0.0, f64::max);
    if max_error > tol {
        return Err(Error::Accuracy {
            context: "stationary covariance".into(),
            achieved: max_error,
            requested: tol,
        });
    }
    let values: Vec<f64> = est.iter().map(|e| e.value).collect();
    let tail_constant = (max_lag / 2..=max_lag)
        .map(|k| values[k].abs() * (1.0 + k as f64 * h).powf(2.0 - 2.0 * hurst))
        .fold(0.0, f64::max);
    Ok(StationaryCov {
        theta,
        h,
        hurst,
        values,
        max_error,
        tail_constant,
    })
}

/// Coefficients `c_m` of the large-lag expansion `ρ₀(τ) ~ Σ_m c_m τ^{2H-2m}`,
/// `c_m = ½ θ^{-2m} Π_{k<2m} (2H - k)`.
fn stationary_expansion(theta: f64, hurst: f64, terms: usize) -> Vec<f64> {
    let g = 2.0 * hurst;
    (1..=terms)
        .map(|m| {
            let falling: f64 = (0..2 * m).map(|k| g - k as f64).product();
            0.5 * theta.powi(-2 * m as i32) * falling
        })
        .collect()
}

/// Hurwitz zeta `Σ_{k≥0} (k + q)^{-s}` for `s > 1`, `q > 0`.
pub fn hurwitz_zeta(s: f64, q: f64) -> f64 {
    // Bernoulli numbers B_2 .. B_12
    const B: [f64; 6] = [
        1.0 / 6.0,
        -1.0 / 30.0,
        1.0 / 42.0,
        -1.0 / 30.0,
        5.0 / 66.0,
        -691.0 / 2730.0,
    ];
    let mut head = 0.0;
    let mut q = q;
    while q < 20.0 {
        head += q.powf(-s);
        q += 1.0;
    }
    let mut tail = q.powf(1.0 - s) / (s - 1.0) + 0.5 * q.powf(-s);
    let mut rising = s; // s (s+1) ... (s + 2j - 2)
    let mut fact = 2.0; // (2j)!
    let mut qpow = q.powf(-s - 1.0);
    for (j, b) in B.iter().enumerate() {
        tail += b / fact * rising * qpow;
        let j = j as f64 + 1.0;
        rising *= (s + 2.0 * j - 1.0) * (s + 2.0 * j);
        fact *= (2.0 * j + 1.0) * (2.0 * j + 2.0);
        qpow /= q * q;
    }
    head + tail
}

/// `σ_B² = 2 Σ_{j ∈ ℤ} ρ₀²(jh)` with its truncation bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaB {
    pub value: f64,
    /// Lags summed directly.
    pub lags: usize,
    /// `Σ_{k > K} ρ₀²(kh)` from the large-lag expansion.
    pub tail: f64,
    /// Envelope bound `2C² ∫_{Kh}^∞ x^{4H-4} dx / h` on the same tail.
    pub envelope_tail_bound: f64,
    pub error_bound: f64,
}

/// Computes `σ_B²` to absolute accuracy `tol`.
///
/// Lags up to `K` (with `θKh ≥ 200`) are summed directly; the remainder
/// uses the four-term large-lag expansion of `ρ₀` summed with Hurwitz zeta
/// values. The reported error combines quadrature errors, the gap between
/// the three- and four-term tails, and the mismatch between the expansion
/// and the quadrature value at lag `K`.
pub fn sigma_b_sq(theta: f64, h: f64, hurst: f64, tol: f64) -> Result<SigmaB> {
    if !(hurst > 0.0 && hurst < 0.75) {
        return domain(format!(
            "the series for sigma_B^2 converges only for 0 < H < 3/4, got {hurst}"
        ));
    }
    if !(theta > 0.0 && h > 0.0) {
        return domain(format!("theta and h must be positive, got ({theta}, {h})"));
    }
    let mut lags = ((200.0 / (theta * h)).ceil() as usize).max(64);
    loop {
        if lags as f64 * h > HORIZON_CAP {
            return Err(Error::Accuracy {
                context: "sigma_B^2 truncation".into(),
                achieved: f64::INFINITY,
                requested: tol,
            });
        }
        let sc = stationary_cov(theta, h, hurst, lags, 1e-11)?;
        let r = &sc.values;
        let direct = r[0] * r[0] + 2.0 * r[1..].iter().map(|x| x * x).sum::<f64>();
        let quad_err = 4.0 * r.iter().map(|x| x.abs()).sum::<f64>() * sc.max_error;

        let coeffs = stationary_expansion(theta, hurst, 4);
        let g = 2.0 * hurst;
        let tail_with = |terms: usize| -> f64 {
            let mut acc = 0.0;
            for (i, ci) in coeffs[..terms].iter().enumerate() {
                for (j, cj) in coeffs[..terms].iter().enumerate() {
                    let p = 2.0 * (i + j + 2) as f64 - 2.0 * g;
                    acc += ci * cj * h.powf(-p) * hurwitz_zeta(p, lags as f64 + 1.0);
                }
            }
            acc
        };
        let tail = tail_with(4);
        let tau_k = lags as f64 * h;
        let expansion_at_k: f64 = coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| c * tau_k.powf(g - 2.0 * (i + 1) as f64))
            .sum();
        let mismatch = (r[lags] - expansion_at_k).abs();
        let rel_mismatch = if r[lags].abs() > 0.0 { mismatch / r[lags].abs() } else { 0.0 };
        let brownian_tail = if hurst == 0.5 {
            // exponential decay: geometric bound on Σ_{k>K} ρ₀²
            r[lags] * r[lags] / (1.0 - (-2.0 * theta * h).exp())
        } else {
            0.0
        };
        let tail_err = (tail - tail_with(3)).abs() + 2.0 * rel_mismatch * tail.abs() + brownian_tail;
        let error_bound = 4.0 * tail_err + quad_err;
        let envelope_tail_bound =
            2.0 * sc.tail_constant.powi(2) * tau_k.powf(4.0 * hurst - 3.0) / ((3.0 - 4.0 * hurst) * h);
        if error_bound <= tol {
            return Ok(SigmaB {
                value: 2.0 * (direct + 2.0 * tail),
                lags,
                tail,
                envelope_tail_bound,
                error_bound,
            });
        }
        lags *= 2;
    }
}

/// Limit variances of the moment estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitVariances {
    pub sigma_b_sq: f64,
    /// `θ² σ_B² / (4H² a²)`, the variance of the limit law of `√n(θ̂ - θ)`.
    pub sigma1_sq: f64,
    pub a: f64,
}

pub fn limit_variances(model: &OuModel, tol: f64) -> Result<LimitVariances> {
    let model = model.validated()?;
    model.require_clt_regime()?;
    let (theta, hurst) = (model.theta, model.hurst());
    let sb = sigma_b_sq(theta, model.h, hurst, tol)?;
    let a = stationary_variance(theta, hurst);
    let sigma1_sq = theta * theta * sb.value / (4.0 * hurst * hurst * a * a);
    // delta method: σ_B² = g'(θ)² σ₁² with g(θ) = HΓ(2H)θ^{-2H}
    let g_prime = crate::estimator::g_prime(theta, hurst);
    let via_delta = sb.value / (g_prime * g_prime);
    if (via_delta - sigma1_sq).abs() > 1e-12 * sigma1_sq {
        return Err(Error::Numeric(format!(
            "limit variance mismatch: {sigma1_sq} vs {via_delta}"
        )));
    }
    Ok(LimitVariances {
        sigma_b_sq: sb.value,
        sigma1_sq,
        a,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fbm_model(h_idx: f64, n: usize) -> OuModel {
        OuModel::new(1.0, 1.0, n, NoiseSpec::fbm(h_idx).unwrap()).unwrap()
    }

    /// The integration-by-parts form evaluated by nested quadrature:
    /// R(t,s) - θ∫e^{-θ(s-v)}R(t,v)dv - θ∫e^{-θ(t-u)}R(u,s)du + θ²∫∫ ....
    fn brute_force_cov(model: &OuModel, s: f64, t: f64) -> f64 {
        let th = model.theta;
        let r = |u: f64, v: f64| crate::kernels::cov_raw(&model.noise, u, v);
        let tol = Tolerance {
            abs: 1e-14,
            rel: 1e-12,
        };
        let line = |fixed: f64, end: f64, first: bool| -> f64 {
            let f = |x: f64, _: f64, _: f64| {
                (-th * (end - x)).exp() * if first { r(x, fixed) } else { r(fixed, x) }
            };
            let kinks: Vec<f64> = [0.0, fixed.min(end), end].to_vec();
            over_panels(f, &kinks, tol).unwrap().value
        };
        let term2 = th * line(t, s, false);
        let term3 = th * line(s, t, true);
        let outer = |u: f64, _: f64, _: f64| {
            let inner = |v: f64, _: f64, _: f64| (-th * (s - v)).exp() * r(u, v);
            let breaks = [0.0, u.min(s), s];
            (-th * (t - u)).exp() * over_panels(inner, &breaks, tol).unwrap().value
        };
        let breaks = [0.0, s.min(t), t];
        let term4 = th * th * over_panels(outer, &breaks, tol).unwrap().value;
        r(t, s) - term2 - term3 + term4
    }

    #[test]
    fn brownian_closed_form_values() {
        let m = fbm_model(0.5, 4);
        assert!((ou_cov(&m, 1.0, 1.0).unwrap() - 0.5 * (1.0 - (-2.0f64).exp())).abs() < 1e-15);
        assert!((ou_cov(&m, 1.0, 1.0).unwrap() - 0.432_332).abs() < 1e-6);
        assert!((ou_cov(&m, 1.0, 2.0).unwrap() - 0.159_046).abs() < 1e-6);
        assert_eq!(ou_cov(&fbm_model(0.3, 4), 0.0, 3.0).unwrap(), 0.0);
    }

    #[test]
    fn quadrature_route_matches_brownian_closed_form() {
        let m = fbm_model(0.5, 4);
        let opts = CovOptions {
            force_quadrature: true,
            ..CovOptions::default()
        };
        for &(s, t) in &[(1.0, 1.0), (1.0, 2.0), (0.3, 7.0), (40.0, 41.5)] {
            let q = ou_cov_with(&m, s, t, opts).unwrap().value;
            let exact = brownian_ou_cov(1.0, s, t);
            assert!((q - exact).abs() < 1e-9 * exact.abs() + 1e-14, "({s},{t}) {q} {exact}");
        }
    }

    #[test]
    fn matches_nested_quadrature_of_kernel() {
        let cases = [
            NoiseSpec::fbm(0.3).unwrap(),
            NoiseSpec::fbm(0.7).unwrap(),
            NoiseSpec::sub_fbm(0.3).unwrap(),
            NoiseSpec::sub_fbm(0.7).unwrap(),
            NoiseSpec::generalized_fbm(0.4, 1.0, 3.0).unwrap(),
            NoiseSpec::bi_fbm(0.75, 0.8).unwrap(),
            NoiseSpec::sub_bi_fbm(0.6, 1.2).unwrap(),
        ];
        for noise in cases {
            let m = OuModel::new(0.8, 1.0, 3, noise).unwrap();
            for &(s, t) in &[(1.0, 1.0), (0.5, 2.0), (2.0, 3.5)] {
                let fast = ou_cov(&m, s, t).unwrap();
                let slow = brute_force_cov(&m, s, t);
                assert!(
                    (fast - slow).abs() < 1e-9 * slow.abs().max(1e-3),
                    "{noise:?} ({s},{t}): {fast} vs {slow}"
                );
            }
        }
    }

    #[test]
    fn stationary_variance_matches_integral() {
        for &h in &[0.1, 0.3, 0.5, 0.7, 0.9] {
            for &th in &[0.5, 1.0, 2.5] {
                let q = stationary_fbm_cov(th, h, 0.0, Tolerance::default()).unwrap().value;
                let a = stationary_variance(th, h);
                assert!((q - a).abs() < 1e-12 * a, "H={h} θ={th}: {q} vs {a}");
            }
        }
        assert_eq!(stationary_variance(2.0, 0.5), 0.25);
    }

    #[test]
    fn stationary_brownian_is_exponential() {
        let sc = stationary_cov(1.0, 1.0, 0.5, 30, 1e-12).unwrap();
        for (k, v) in sc.values.iter().enumerate() {
            assert!((v - 0.5 * (-(k as f64)).exp()).abs() < 1e-12, "k={k}");
        }
    }

    #[test]
    fn stationary_matches_large_lag_expansion() {
        for &h in &[0.3, 0.7] {
            let c = stationary_expansion(1.0, h, 4);
            for &tau in &[150.0, 400.0, 2000.0] {
                let q = stationary_fbm_cov(1.0, h, tau, Tolerance::default()).unwrap().value;
                let e: f64 = c
                    .iter()
                    .enumerate()
                    .map(|(i, ci)| ci * f64::powf(tau, 2.0 * h - 2.0 * (i + 1) as f64))
                    .sum();
                assert!((q - e).abs() < 1e-9 * e.abs(), "H={h} τ={tau}: {q} vs {e}");
            }
        }
    }

    #[test]
    fn long_memory_product_approaches_constant() {
        let sc = stationary_cov(1.0, 1.0, 0.7, 800, 1e-12).unwrap();
        let prod = |k: usize| sc.values[k].abs() * (k as f64).powf(2.0 - 1.4);
        let limit = 0.7 * 0.4;
        assert!((prod(800) - limit).abs() < 0.01 * limit);
        assert!((prod(800) - limit).abs() < (prod(100) - limit).abs());
    }

    #[test]
    fn sigma_b_brownian_closed_form() {
        let s = sigma_b_sq(1.0, 1.0, 0.5, 1e-10).unwrap();
        let exact = 1.0 / (1.0f64).tanh() / 2.0;
        assert!((s.value - exact).abs() < 1e-10);
        assert!((s.value - 0.656_518).abs() < 1e-6);
        let s = sigma_b_sq(2.0, 1.0, 0.5, 1e-10).unwrap();
        assert!((s.value - 1.0 / (2.0f64).tanh() / 8.0).abs() < 1e-10);
        assert!((s.value - 0.129_664_340_090_944).abs() < 1e-9);
    }

    #[test]
    fn sigma_b_matches_long_direct_sum() {
        // a direct sum over many lags plus a crude integral tail
        for &h in &[0.3, 0.4] {
            let sb = sigma_b_sq(1.0, 1.0, h, 1e-10).unwrap();
            let sc = stationary_cov(1.0, 1.0, h, 20_000, 1e-12).unwrap();
            let k = 20_000.0f64;
            let c = 0.5 * (2.0 * h) * (2.0 * h - 1.0);
            let tail = c * c * k.powf(4.0 * h - 3.0) / (3.0 - 4.0 * h);
            let v = &sc.values;
            let direct = 2.0 * (v[0] * v[0] + 2.0 * v[1..].iter().map(|x| x * x).sum::<f64>() + 2.0 * tail);
            assert!((sb.value - direct).abs() < 1e-9, "H={h}: {} vs {direct}", sb.value);
        }
    }

    #[test]
    fn sigma_b_tolerance_consistency() {
        let loose = sigma_b_sq(1.0, 1.0, 0.65, 1e-6).unwrap();
        let tight = sigma_b_sq(1.0, 1.0, 0.65, 1e-9).unwrap();
        assert!((loose.value - tight.value).abs() < 1e-6);
    }

    #[test]
    fn sigma_b_rejects_long_memory_boundary() {
        assert!(matches!(sigma_b_sq(1.0, 1.0, 0.75, 1e-8), Err(Error::Domain(_))));
        assert!(matches!(sigma_b_sq(1.0, 1.0, 0.8, 1e-8), Err(Error::Domain(_))));
    }

    #[test]
    fn limit_variances_brownian() {
        let m = OuModel::new(2.0, 1.0, 10, NoiseSpec::fbm(0.5).unwrap()).unwrap();
        let lv = limit_variances(&m, 1e-10).unwrap();
        assert!((lv.a - 0.25).abs() < 1e-15);
        let m = fbm_model(0.5, 10);
        let lv = limit_variances(&m, 1e-10).unwrap();
        let sb = 1.0 / (1.0f64).tanh() / 2.0;
        assert!((lv.sigma1_sq - sb / 0.25).abs() < 1e-9);
        assert!((lv.sigma1_sq - 2.626_070_570_998_66).abs() < 1e-9);
    }

    #[test]
    fn limit_variance_brownian_scaling() {
        // at H = 1/2, σ₁² = 2θ² coth(θh)
        for &(th, h) in &[(0.5, 1.0), (1.0, 0.5), (3.0, 0.2)] {
            let m = OuModel::new(th, h, 4, NoiseSpec::fbm(0.5).unwrap()).unwrap();
            let lv = limit_variances(&m, 1e-10).unwrap();
            let expected = 2.0 * th * th / (th * h).tanh();
            assert!((lv.sigma1_sq - expected).abs() < 1e-8 * expected);
        }
    }

    #[test]
    fn gram_brownian_closed_form_entrywise() {
        let m = OuModel::new(1.0, 1.0, 3, NoiseSpec::fbm(0.5).unwrap()).unwrap();
        let opts = CovOptions {
            force_quadrature: true,
            ..CovOptions::default()
        };
        let g = gram_matrix_with(&m, opts).unwrap();
        assert_eq!(g.method, CovMethod::Quadrature);
        for i in 0..3 {
            for j in 0..3 {
                let exact = brownian_ou_cov(1.0, (i + 1) as f64, (j + 1) as f64);
                assert!((g.entries[(i, j)] - exact).abs() < 1e-9);
            }
        }
        let g = gram_matrix(&m).unwrap();
        assert_eq!(g.method, CovMethod::ClosedFormHHalf);
    }

    #[test]
    fn gram_single_entry() {
        let m = fbm_model(0.3, 1);
        let g = gram_matrix(&m).unwrap();
        assert_eq!(g.n(), 1);
        assert!(g.entries[(0, 0)] > 0.0);
        assert!((g.entries[(0, 0)] - ou_cov(&m, 1.0, 1.0).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn gram_matches_pointwise_for_every_family() {
        let cases = [
            NoiseSpec::sub_fbm(0.3).unwrap(),
            NoiseSpec::generalized_fbm(0.6, 1.0, 0.5).unwrap(),
            NoiseSpec::sub_bi_fbm(0.7, 0.9).unwrap(),
            NoiseSpec::bi_fbm(0.6, 1.1).unwrap(),
        ];
        for noise in cases {
            let m = OuModel::new(1.3, 0.7, 5, noise).unwrap();
            let g = gram_matrix(&m).unwrap();
            for j in 1..=5 {
                for l in 1..=5 {
                    let p = ou_cov(&m, j as f64 * 0.7, l as f64 * 0.7).unwrap();
                    assert!((g.entries[(j - 1, l - 1)] - p).abs() < 1e-12, "{noise:?}");
                }
            }
        }
    }

    #[test]
    fn lattice_memo_is_exact_far_from_origin() {
        // entries far from the axes reuse the memo keyed by j + l
        let m = OuModel::new(1.0, 1.0, 120, NoiseSpec::sub_fbm(0.3).unwrap()).unwrap();
        let g = gram_matrix(&m).unwrap();
        for &(j, l) in &[(120usize, 100usize), (119, 101), (90, 90), (110, 3)] {
            let p = ou_cov(&m, j as f64, l as f64).unwrap();
            assert!((g.entries[(j - 1, l - 1)] - p).abs() < 1e-13, "({j},{l})");
        }
    }

    #[test]
    fn stationarity_cross_check() {
        for &h in &[0.3, 0.6] {
            let m = fbm_model(h, 64);
            let g = gram_matrix(&m).unwrap();
            let sc = stationary_cov(1.0, 1.0, h, 64, 1e-12).unwrap();
            let majorant = |t: f64, s: f64| {
                (-(t + s)).exp() + (-t).exp() * (1.0 + s).powf(2.0 * h - 2.0)
                    + (-s).exp() * (1.0 + t).powf(2.0 * h - 2.0)
            };
            let mut c: f64 = 0.0;
            for j in 1..=64 {
                for l in 1..=64 {
                    let gap = (g.entries[(j - 1, l - 1)] - sc.values[j.abs_diff(l)]).abs();
                    c = c.max(gap / majorant(j as f64, l as f64));
                }
            }
            // one constant of the size of ρ₀(0) covers the whole grid
            assert!(c.is_finite() && c < 3.0 * sc.values[0], "H={h}: C={c}");
        }
    }

    #[test]
    fn mean_b_n_converges_at_rate_one_over_n() {
        for &h in &[0.3, 0.7] {
            let a = stationary_variance(1.0, h);
            let scaled: Vec<f64> = [100usize, 200, 400]
                .iter()
                .map(|&n| {
                    let g = gram_matrix(&fbm_model(h, n)).unwrap();
                    n as f64 * (g.mean_b_n() - a).abs()
                })
                .collect();
            let spread = scaled.iter().cloned().fold(0.0, f64::max) - scaled.iter().cloned().fold(f64::MAX, f64::min);
            assert!(spread < 1e-6 * scaled[0].max(1e-6), "H={h}: {scaled:?}");
        }
    }

    #[test]
    fn hurwitz_zeta_values() {
        // ζ(2, 1) = π²/6, ζ(3.2, 250) against a long direct sum
        assert!((hurwitz_zeta(2.0, 1.0) - std::f64::consts::PI.powi(2) / 6.0).abs() < 1e-13);
        let direct: f64 = (0..2_000_000).map(|k| (k as f64 + 250.0).powf(-3.2)).sum::<f64>()
            + (2_000_250f64).powf(-2.2) / 2.2;
        assert!((hurwitz_zeta(3.2, 250.0) - direct).abs() < 1e-12 * direct);
    }

    #[test]
    fn rejects_bad_models() {
        assert!(OuModel::new(0.0, 1.0, 4, NoiseSpec::fbm(0.3).unwrap()).is_err());
        assert!(OuModel::new(1.0, -1.0, 4, NoiseSpec::fbm(0.3).unwrap()).is_err());
        assert!(OuModel::new(1.0, 1.0, 0, NoiseSpec::fbm(0.3).unwrap()).is_err());
        let m = fbm_model(0.3, 4);
        assert!(ou_cov(&m, -1.0, 1.0).is_err());
        assert!(ou_cov(&m, 2e6, 1.0).is_err());
        let huge = OuModel::new(1.0, 1e3, 2000, NoiseSpec::fbm(0.3).unwrap()).unwrap();
        assert!(gram_matrix(&huge).is_err());
    }
}
