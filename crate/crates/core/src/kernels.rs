//! Covariance kernels `R(s, t)` of the Gaussian noises that may drive the
//! OU model, and finite-difference checks of the mixed-partial growth
//! conditions under which the estimator's Berry-Esseen rate carries over to a noise.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Which Gaussian noise drives the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseFamily {
    Fbm,
    SubFbm,
    BiFbm,
    SubBiFbm,
    GeneralizedFbm,
}

impl NoiseFamily {
    pub const ALL: [NoiseFamily; 5] = [
        NoiseFamily::Fbm,
        NoiseFamily::SubFbm,
        NoiseFamily::BiFbm,
        NoiseFamily::SubBiFbm,
        NoiseFamily::GeneralizedFbm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NoiseFamily::Fbm => "fbm",
            NoiseFamily::SubFbm => "sub_fbm",
            NoiseFamily::BiFbm => "bi_fbm",
            NoiseFamily::SubBiFbm => "sub_bi_fbm",
            NoiseFamily::GeneralizedFbm => "generalized_fbm",
        }
    }
}

impl std::str::FromStr for NoiseFamily {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        NoiseFamily::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| {
                format!(
                    "unknown noise family `{s}` (expected one of fbm, sub_fbm, bi_fbm, sub_bi_fbm, generalized_fbm)"
                )
            })
    }
}

/// A validated noise specification.
///
/// Bi-fractional families carry `(hprime, k)`; their effective Hurst index
/// is `hprime * k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum NoiseSpec {
    Fbm { hurst: f64 },
    SubFbm { hurst: f64 },
    BiFbm { hprime: f64, k: f64 },
    SubBiFbm { hprime: f64, k: f64 },
    GeneralizedFbm { hurst: f64, a: f64, b: f64 },
}

fn open_unit(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x < 1.0 {
        Ok(())
    } else {
        domain(format!("{name} must lie in (0, 1), got {x}"))
    }
}

impl NoiseSpec {
    pub fn fbm(hurst: f64) -> Result<Self> {
        NoiseSpec::Fbm { hurst }.validated()
    }

    pub fn sub_fbm(hurst: f64) -> Result<Self> {
        NoiseSpec::SubFbm { hurst }.validated()
    }

    pub fn bi_fbm(hprime: f64, k: f64) -> Result<Self> {
        NoiseSpec::BiFbm { hprime, k }.validated()
    }

    pub fn sub_bi_fbm(hprime: f64, k: f64) -> Result<Self> {
        NoiseSpec::SubBiFbm { hprime, k }.validated()
    }

    pub fn generalized_fbm(hurst: f64, a: f64, b: f64) -> Result<Self> {
        NoiseSpec::GeneralizedFbm { hurst, a, b }.validated()
    }

    /// Checks the parameter domain and returns `self` unchanged.
    pub fn validated(self) -> Result<Self> {
        match self {
            NoiseSpec::Fbm { hurst } | NoiseSpec::SubFbm { hurst } => open_unit("hurst", hurst)?,
            NoiseSpec::BiFbm { hprime, k } | NoiseSpec::SubBiFbm { hprime, k } => {
                open_unit("hprime", hprime)?;
                if !(k > 0.0 && k < 2.0) {
                    return domain(format!("k must lie in (0, 2), got {k}"));
                }
                open_unit("hprime * k", hprime * k)?;
            }
            NoiseSpec::GeneralizedFbm { hurst, a, b } => {
                open_unit("hurst", hurst)?;
                if !(a.is_finite() && b.is_finite()) || (a == 0.0 && b == 0.0) {
                    return domain(format!("(a, b) must be finite and not both zero, got ({a}, {b})"));
                }
            }
        }
        Ok(self)
    }

    pub fn family(&self) -> NoiseFamily {
        match self {
            NoiseSpec::Fbm { .. } => NoiseFamily::Fbm,
            NoiseSpec::SubFbm { .. } => NoiseFamily::SubFbm,
            NoiseSpec::BiFbm { .. } => NoiseFamily::BiFbm,
            NoiseSpec::SubBiFbm { .. } => NoiseFamily::SubBiFbm,
            NoiseSpec::GeneralizedFbm { .. } => NoiseFamily::GeneralizedFbm,
        }
    }

    /// Effective Hurst index `H` (equal to `H'K` for the bi-fractional families).
    pub fn hurst(&self) -> f64 {
        match *self {
            NoiseSpec::Fbm { hurst }
            | NoiseSpec::SubFbm { hurst }
            | NoiseSpec::GeneralizedFbm { hurst, .. } => hurst,
            NoiseSpec::BiFbm { hprime, k } | NoiseSpec::SubBiFbm { hprime, k } => hprime * k,
        }
    }

    /// Weight `ab / (a² + b²)` of the `s^{2H} + t^{2H} - (s+t)^{2H}` term
    /// in the generalized fBm kernel; zero for other families.
    pub(crate) fn sum_weight(&self) -> f64 {
        match *self {
            NoiseSpec::SubFbm { .. } => 0.5,
            NoiseSpec::GeneralizedFbm { a, b, .. } => a * b / (a * a + b * b),
            _ => 0.0,
        }
    }
}

/// `|Δ|^p`, exactly zero at `Δ = 0`.
#[inline]
pub fn abs_pow(delta: f64, p: f64) -> f64 {
    if delta == 0.0 {
        0.0
    } else {
        delta.abs().powf(p)
    }
}

/// Covariance of fractional Brownian motion with Hurst index `hurst`.
#[inline]
pub fn fbm_cov(hurst: f64, s: f64, t: f64) -> f64 {
    let (lo, hi) = if s <= t { (s, t) } else { (t, s) };
    let g = 2.0 * hurst;
    0.5 * (lo.powf(g) + hi.powf(g) - abs_pow(hi - lo, g))
}

/// Kernel evaluation without domain checks. Arguments are ordered before
/// evaluation so the result is exactly symmetric.
pub(crate) fn cov_raw(noise: &NoiseSpec, s: f64, t: f64) -> f64 {
    let (lo, hi) = if s <= t { (s, t) } else { (t, s) };
    match *noise {
        NoiseSpec::Fbm { hurst } => fbm_cov(hurst, lo, hi),
        NoiseSpec::SubFbm { hurst } => {
            let g = 2.0 * hurst;
            lo.powf(g) + hi.powf(g) - 0.5 * ((lo + hi).powf(g) + abs_pow(hi - lo, g))
        }
        NoiseSpec::GeneralizedFbm { hurst, .. } => {
            let g = 2.0 * hurst;
            let (ls, hs) = (lo.powf(g), hi.powf(g));
            0.5 * (ls + hs - abs_pow(hi - lo, g))
                + noise.sum_weight() * (ls + hs - (lo + hi).powf(g))
        }
        // x^{2H'K} is evaluated as (x^{2H'})^K so that R(0, t) cancels exactly.
        NoiseSpec::BiFbm { hprime, k } => {
            let g = 2.0 * hprime;
            let base = (lo.powf(g) + hi.powf(g)).powf(k);
            (base - abs_pow(hi - lo, g).powf(k)) * 0.5f64.powf(k)
        }
        NoiseSpec::SubBiFbm { hprime, k } => {
            let g = 2.0 * hprime;
            let base = (lo.powf(g) + hi.powf(g)).powf(k);
            base - 0.5 * ((lo + hi).powf(g).powf(k) + abs_pow(hi - lo, g).powf(k))
        }
    }
}

/// Covariance `R(s, t) = E[G_s G_t]` of the driving noise.
pub fn kernel_cov(noise: &NoiseSpec, s: f64, t: f64) -> Result<f64> {
    noise.validated()?;
    if !(s >= 0.0 && t >= 0.0) || !s.is_finite() || !t.is_finite() {
        return domain(format!("times must be finite and nonnegative, got ({s}, {t})"));
    }
    Ok(cov_raw(noise, s, t))
}

/// Kernel minus the fBm kernel with the same effective Hurst index.
fn cov_gap(noise: &NoiseSpec, s: f64, t: f64) -> f64 {
    cov_raw(noise, s, t) - fbm_cov(noise.hurst(), s, t)
}

/// Which majorant the mixed partial of `R - R^B` is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Majorant {
    /// `(ts)^{H-1}`
    Product,
    /// `c1 (t+s)^{2H-2} + c2 (s^{2H'} + t^{2H'})^{K-2} (st)^{2H'-1}`
    SumAndBi { c1: f64, c2: f64 },
}

impl Majorant {
    fn eval(&self, noise: &NoiseSpec, s: f64, t: f64) -> f64 {
        let h = noise.hurst();
        match *self {
            Majorant::Product => (t * s).powf(h - 1.0),
            Majorant::SumAndBi { c1, c2 } => {
                let (hp, k) = match *noise {
                    NoiseSpec::BiFbm { hprime, k } | NoiseSpec::SubBiFbm { hprime, k } => (hprime, k),
                    _ => (h, 1.0),
                };
                let g = 2.0 * hp;
                c1 * (t + s).powf(2.0 * h - 2.0)
                    + c2 * (s.powf(g) + t.powf(g)).powf(k - 2.0) * (s * t).powf(g - 1.0)
            }
        }
    }
}

/// Finite-difference estimate of `∂²(R - R^B)/∂s∂t` at `(s, t)`.
///
/// Central four-point stencil with step `eta`; `richardson` combines steps
/// `eta` and `eta / 2` to cancel the leading `O(eta²)` error.
pub fn mixed_partial_gap(noise: &NoiseSpec, s: f64, t: f64, eta: f64, richardson: bool) -> f64 {
    let stencil = |e: f64| {
        (cov_gap(noise, s + e, t + e) - cov_gap(noise, s + e, t - e) - cov_gap(noise, s - e, t + e)
            + cov_gap(noise, s - e, t - e))
            / (4.0 * e * e)
    };
    if richardson {
        (4.0 * stencil(0.5 * eta) - stencil(eta)) / 3.0
    } else {
        stencil(eta)
    }
}

/// One grid point of a hypothesis check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioPoint {
    pub s: f64,
    pub t: f64,
    pub mixed_partial: f64,
    pub majorant: f64,
    pub ratio: f64,
}

/// Empirical supremum of a ratio over a grid, with a divergence flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub name: String,
    pub sup_ratio: f64,
    /// Supremum over the points farthest from the singular set
    /// (axes and diagonal); compared with `sup_ratio` to detect blow-up.
    pub sup_ratio_interior: f64,
    pub divergent: bool,
    pub points: Vec<RatioPoint>,
}

/// Compares `|∂²(R - R^B)/∂s∂t|` against a majorant on a grid of points
/// with `0 < s < t`.
///
/// The step is `1e-4 · min(s, t, t - s)` with one Richardson refinement.
/// The report flags divergence when the ratio is non-finite, or when the
/// supremum over the quarter of the grid nearest the axes and diagonal
/// exceeds four times the supremum over the rest.
pub fn hypothesis_check(noise: &NoiseSpec, grid: &[(f64, f64)], majorant: Majorant) -> Result<BoundReport> {
    noise.validated()?;
    if grid.is_empty() {
        return domain("hypothesis grid is empty");
    }
    let mut points = Vec::with_capacity(grid.len());
    let mut scales = Vec::with_capacity(grid.len());
    for &(s0, t0) in grid {
        let (s, t) = (s0.min(t0), s0.max(t0));
        if !(s > 0.0) || s == t || !t.is_finite() {
            return domain(format!(
                "grid point ({s0}, {t0}) touches an axis or the diagonal"
            ));
        }
        let scale = s.min(t - s);
        let eta = 1e-4 * scale;
        let d = mixed_partial_gap(noise, s, t, eta, true);
        let m = majorant.eval(noise, s, t);
        points.push(RatioPoint {
            s,
            t,
            mixed_partial: d,
            majorant: m,
            ratio: d.abs() / m,
        });
        scales.push(scale);
    }
    let sup_ratio = points.iter().map(|p| p.ratio).fold(0.0, f64::max);
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| scales[i].total_cmp(&scales[j]));
    let near = points.len() / 4;
    let sup_ratio_interior = order[near..]
        .iter()
        .map(|&i| points[i].ratio)
        .fold(0.0, f64::max);
    let sup_near = order[..near].iter().map(|&i| points[i].ratio).fold(0.0, f64::max);
    let divergent = points.iter().any(|p| !p.ratio.is_finite()) || sup_near > 4.0 * sup_ratio_interior;
    Ok(BoundReport {
        name: format!("{}:{:?}", noise.family().name(), majorant),
        sup_ratio,
        sup_ratio_interior,
        divergent,
        points,
    })
}

/// Off-diagonal grid `{(s, t) : s < t}` built from a list of levels.
pub fn upper_grid(levels: &[f64]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for (i, &s) in levels.iter().enumerate() {
        for &t in &levels[i + 1..] {
            out.push((s.min(t), s.max(t)));
        }
    }
    out
}

/// The default grid for hypothesis checks: levels `2^{-3}, …, 2^{5}`.
pub fn standard_grid() -> Vec<(f64, f64)> {
    let levels: Vec<f64> = (-3..=5).map(|e| 2f64.powi(e)).collect();
    upper_grid(&levels)
}
