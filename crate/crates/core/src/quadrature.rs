//! Double-exponential (tanh-sinh) quadrature on finite panels.
//!
//! The integrands met in this crate have algebraic endpoint singularities
//! (`x^β` with `β > -1`) and kinks at known interior points. Tanh-sinh
//! converges exponentially for both once kinks are placed on panel
//! boundaries. Integrands receive the distance to each endpoint computed
//! without cancellation, so `(b - x)^β` stays accurate near `b`.

use crate::error::{Error, Result};

const T_MAX: f64 = 6.0;
const MIN_LEVEL: usize = 3;
const MAX_LEVEL: usize = 8;

/// A quadrature value together with its estimated absolute error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

impl std::ops::Add for Estimate {
    type Output = Estimate;
    fn add(self, rhs: Estimate) -> Estimate {
        Estimate {
            value: self.value + rhs.value,
            error: self.error + rhs.error,
        }
    }
}

impl Estimate {
    pub const ZERO: Estimate = Estimate {
        value: 0.0,
        error: 0.0,
    };

    pub fn scale(self, c: f64) -> Estimate {
        Estimate {
            value: c * self.value,
            error: c.abs() * self.error,
        }
    }
}

/// Convergence targets: stop when the level-to-level change is below
/// `max(abs, rel * |value|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            abs: 1e-15,
            rel: 1e-13,
        }
    }
}

impl Tolerance {
    fn target(&self, value: f64) -> f64 {
        self.abs.max(self.rel * value.abs())
    }
}

/// Integrates `f(x, x - a, b - x)` over `[a, b]`.
///
/// Returns an accuracy error if the refinement budget runs out before the
/// tolerance is met.
pub fn tanh_sinh<F>(f: F, a: f64, b: f64, tol: Tolerance) -> Result<Estimate>
where
    F: Fn(f64, f64, f64) -> f64,
{
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Domain(format!("non-finite interval [{a}, {b}]")));
    }
    if b == a {
        return Ok(Estimate::ZERO);
    }
    if b < a {
        return forward(&|x, da, db| f(x, db, da), b, a, tol).map(|e| e.scale(-1.0));
    }
    forward(&f, a, b, tol)
}

fn forward(f: &dyn Fn(f64, f64, f64) -> f64, a: f64, b: f64, tol: Tolerance) -> Result<Estimate> {
    let width = b - a;
    let half = 0.5 * width;
    let node = |t: f64| -> f64 {
        let u = std::f64::consts::FRAC_PI_2 * t.sinh();
        let e = (-2.0 * u.abs()).exp();
        let w = std::f64::consts::FRAC_PI_2 * t.cosh() * 4.0 * e / ((1.0 + e) * (1.0 + e));
        if w == 0.0 {
            return 0.0;
        }
        // distance from the nearer endpoint
        let near = half * 2.0 * e / (1.0 + e);
        let far = width - near;
        let y = if t >= 0.0 {
            f(b - near, far, near)
        } else {
            f(a + near, near, far)
        };
        // an integrable endpoint singularity may overflow at the outermost nodes
        if !y.is_finite() && near < 1e-100 * width {
            return 0.0;
        }
        w * y
    };

    let mut step = 1.0;
    let mut sum = node(0.0);
    let mut k = 1;
    while k as f64 * step <= T_MAX {
        let t = k as f64 * step;
        sum += node(t) + node(-t);
        k += 1;
    }
    let mut value = half * step * sum;
    let mut change = f64::INFINITY;
    for level in 1..=MAX_LEVEL {
        step *= 0.5;
        let mut fresh = 0.0;
        let mut k = 1;
        while k as f64 * step <= T_MAX {
            let t = k as f64 * step;
            fresh += node(t) + node(-t);
            k += 2;
        }
        sum += fresh;
        let next = half * step * sum;
        change = (next - value).abs();
        value = next;
        if !value.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite quadrature value on [{a}, {b}]"
            )));
        }
        if level >= MIN_LEVEL && change <= tol.target(value) {
            return Ok(Estimate {
                value,
                error: change,
            });
        }
    }
    Err(Error::Accuracy {
        context: format!("tanh-sinh on [{a}, {b}]"),
        achieved: change,
        requested: tol.target(value),
    })
}

/// Integrates over consecutive panels `[p0, p1], [p1, p2], ...`.
///
/// The integrand receives `(x, x - p_i, p_{i+1} - x)` for the panel that
/// contains `x`.
pub fn over_panels<F>(f: F, breaks: &[f64], tol: Tolerance) -> Result<Estimate>
where
    F: Fn(f64, f64, f64) -> f64,
{
    let mut total = Estimate::ZERO;
    for w in breaks.windows(2) {
        if w[1] > w[0] {
            total = total + tanh_sinh(&f, w[0], w[1], tol)?;
        }
    }
    Ok(total)
}

/// Breakpoints for an integrand that decays like `exp(-rate * (x - a))`.
///
/// Panels double in width from `1 / rate`; everything past `a + 64 / rate`
/// is one final panel. Extra `kinks` inside `[a, b]` are merged in.
pub fn decay_breaks(a: f64, b: f64, rate: f64, kinks: &[f64]) -> Vec<f64> {
    let mut out = vec![a];
    let mut offset = 1.0 / rate;
    while offset <= 64.0 / rate {
        let p = a + offset;
        if p >= b {
            break;
        }
        out.push(p);
        offset *= 2.0;
    }
    out.extend(kinks.iter().copied().filter(|&k| k > a && k < b));
    out.push(b);
    out.sort_by(f64::total_cmp);
    out.dedup();
    out
}

/// Length after which `exp(-rate * x) * x^power` is negligible for
/// semi-infinite integrals starting at zero.
pub fn decay_cutoff(rate: f64, scale: f64) -> f64 {
    (80.0 + 2.0 * (1.0 + scale).ln()) / rate
}
