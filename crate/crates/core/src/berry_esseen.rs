//! Monte Carlo measurement of the Kolmogorov distance between
//! `√n(θ̂_n - θ)` and its normal limit, rate sweeps over `n`, and numeric
//! audits of the covariance bounds the rate proofs rely on.

use serde::{Deserialize, Serialize};

use crate::covariance::{gram_matrix, limit_variances, GramMatrix, OuModel};
use crate::error::{domain, Error, Result};
use crate::estimator::moment_estimate;
use crate::kernels::NoiseSpec;
use crate::quadrature::{decay_breaks, over_panels, Tolerance};
use crate::sampler::{CholeskySampler, SamplerMethod, SeedPlan, SubstepSampler};
use crate::stats::{ls_fit, mean_and_stderr, normal_cdf};

/// Confidence level of the DKW band used to flag noise-floor distances.
pub const DKW_ALPHA: f64 = 0.01;
/// Allowed excess of the fitted slope over the theoretical exponent.
pub const SLOPE_TOLERANCE: f64 = 0.15;

/// Half-width `√(ln(2/α) / (2M))` of the DKW band at level `1 - α`.
pub fn dkw_halfwidth(replicates: usize) -> f64 {
    ((2.0 / DKW_ALPHA).ln() / (2.0 * replicates as f64)).sqrt()
}

/// Rate exponent of the Berry-Esseen bound: `-1/2` for `H ≤ 5/8` and
/// `-(3 - 4H)` for `5/8 < H < 3/4`.
pub fn theoretical_exponent(hurst: f64) -> Result<f64> {
    if !(hurst > 0.0 && hurst < 0.75) {
        return domain(format!("the rate is defined for 0 < H < 3/4, got {hurst}"));
    }
    Ok(if hurst <= 0.625 { -0.5 } else { -(3.0 - 4.0 * hurst) })
}

/// Distance between an empirical distribution and `N(0, σ²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KolmogorovReport {
    pub n: usize,
    pub d_kol_hat: f64,
    pub dkw_halfwidth: f64,
    pub sigma1_sq: f64,
    pub replicates: usize,
    /// Sample mean of the statistic and its standard error.
    pub mean: f64,
    pub mean_stderr: f64,
}

impl KolmogorovReport {
    /// True when the distance is within the resolution of the sample.
    pub fn at_noise_floor(&self) -> bool {
        self.d_kol_hat < 2.0 * self.dkw_halfwidth
    }
}

/// `sup_x |F_M(x) - Φ_σ(x)|`, evaluated on both sides of every jump.
pub fn kolmogorov_distance(samples: &[f64], sigma_sq: f64) -> Result<f64> {
    if samples.is_empty() {
        return domain("no samples");
    }
    if !(sigma_sq > 0.0 && sigma_sq.is_finite()) {
        return domain(format!("sigma_sq must be positive, got {sigma_sq}"));
    }
    if samples.iter().any(|x| x.is_nan()) {
        return Err(Error::Numeric("NaN sample".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let phi = normal_cdf(x, sigma_sq);
        d = d.max(((i + 1) as f64 / m - phi).abs()).max((i as f64 / m - phi).abs());
    }
    Ok(d)
}

pub fn kolmogorov_vs_normal(samples: &[f64], sigma_sq: f64) -> Result<KolmogorovReport> {
    let d = kolmogorov_distance(samples, sigma_sq)?;
    let (mean, mean_stderr) = if samples.len() > 1 {
        mean_and_stderr(samples)
    } else {
        (samples[0], f64::NAN)
    };
    Ok(KolmogorovReport {
        n: 0,
        d_kol_hat: d,
        dkw_halfwidth: dkw_halfwidth(samples.len()),
        sigma1_sq: sigma_sq,
        replicates: samples.len(),
        mean,
        mean_stderr,
    })
}

/// Settings of a Monte Carlo rate experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloConfig {
    /// Drift, step and noise; the sample size is taken from `ns`.
    pub model: OuModel,
    pub replicates: usize,
    pub seed: u64,
    pub method: SamplerMethod,
    pub ns: Vec<usize>,
    /// Fine steps per observation for the substep sampler.
    pub substeps: usize,
    /// Absolute tolerance for `σ_B²`.
    pub tol: f64,
}

impl MonteCarloConfig {
    pub fn validated(&self) -> Result<()> {
        self.model.validated()?;
        self.model.require_clt_regime()?;
        if self.replicates < 100 {
            return domain(format!("replicates must be at least 100, got {}", self.replicates));
        }
        if self.ns.is_empty() || self.ns.windows(2).any(|w| w[1] <= w[0]) || self.ns[0] == 0 {
            return domain("n values must be positive and strictly increasing");
        }
        if self.method == SamplerMethod::SubstepEuler && self.substeps == 0 {
            return domain("substeps must be at least 1");
        }
        Ok(())
    }
}

/// `√n(θ̂_n - θ)` for `replicates` simulated paths at sample size `n`.
fn estimator_statistics(config: &MonteCarloConfig, n: usize, gram: Option<&GramMatrix>) -> Result<Vec<f64>> {
    let model = config.model.with_n(n)?;
    let plan = SeedPlan::new(config.seed);
    let hurst = model.hurst();
    let root_n = (n as f64).sqrt();
    let stat = |_: usize, path: &[f64]| -> Result<f64> {
        Ok(root_n * (moment_estimate(path, hurst)?.theta_hat - model.theta))
    };
    let out: Vec<Result<f64>> = match config.method {
        SamplerMethod::CholeskyExact => {
            let owned;
            let gram = match gram {
                Some(g) => g,
                None => {
                    owned = gram_matrix(&model)?;
                    &owned
                }
            };
            CholeskySampler::new(gram)?.map_replicates(&plan, config.replicates, stat)
        }
        SamplerMethod::SubstepEuler => {
            SubstepSampler::new(&model, config.substeps)?.map_replicates(&plan, config.replicates, stat)
        }
    };
    out.into_iter().collect()
}

fn report_at(config: &MonteCarloConfig, n: usize, sigma1_sq: f64, gram: Option<&GramMatrix>) -> Result<KolmogorovReport> {
    let stats = estimator_statistics(config, n, gram)?;
    let mut r = kolmogorov_vs_normal(&stats, sigma1_sq)?;
    r.n = n;
    Ok(r)
}

/// Kolmogorov distance of `√n(θ̂_n - θ)` from `N(0, σ₁²)` at one `n`.
pub fn mc_experiment(config: &MonteCarloConfig, n: usize) -> Result<KolmogorovReport> {
    config.validated()?;
    let sigma1_sq = limit_variances(&config.model, config.tol)?.sigma1_sq;
    report_at(config, n, sigma1_sq, None)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

/// Distances over a sweep of `n` with the fitted log-log slope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub model: OuModel,
    pub replicates: usize,
    pub seed: u64,
    pub points: Vec<KolmogorovReport>,
    /// Whether each point entered the fit (false at the noise floor).
    pub included: Vec<bool>,
    pub fitted_slope: Option<f64>,
    pub fitted_intercept: Option<f64>,
    pub theoretical_exponent: f64,
    pub slope_tolerance: f64,
    /// No distance exceeds its predecessor by more than two DKW half-widths.
    pub monotone: bool,
    pub verdict: Verdict,
}

/// Runs the experiment at every `n` in the config and judges the rate.
///
/// Points below twice the DKW half-width are excluded from the fit. With
/// fewer than three points left the verdict is inconclusive. Otherwise the
/// sweep passes when the slope is at most `exponent + 0.15` and the
/// distances are nonincreasing within two half-widths.
pub fn rate_sweep(config: &MonteCarloConfig) -> Result<RateReport> {
    config.validated()?;
    let ns = &config.ns;
    if ns.len() < 4 || ns[ns.len() - 1] < 8 * ns[0] {
        return domain("a rate sweep needs at least 4 n values spanning a factor of 8");
    }
    let exponent = theoretical_exponent(config.model.hurst())?;
    let sigma1_sq = limit_variances(&config.model, config.tol)?.sigma1_sq;
    let full = match config.method {
        SamplerMethod::CholeskyExact => Some(gram_matrix(&config.model.with_n(*ns.last().unwrap())?)?),
        SamplerMethod::SubstepEuler => None,
    };
    let mut points = Vec::with_capacity(ns.len());
    for &n in ns {
        let block = match &full {
            Some(g) => Some(g.leading(n)?),
            None => None,
        };
        points.push(report_at(config, n, sigma1_sq, block.as_ref())?);
    }
    Ok(judge_rate(config, points, exponent))
}

/// Applies the slope and monotonicity rules to measured points.
pub fn judge_rate(config: &MonteCarloConfig, points: Vec<KolmogorovReport>, exponent: f64) -> RateReport {
    let included: Vec<bool> = points.iter().map(|p| !p.at_noise_floor()).collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = points
        .iter()
        .zip(&included)
        .filter(|(_, &keep)| keep)
        .map(|(p, _)| ((p.n as f64).ln(), p.d_kol_hat.ln()))
        .unzip();
    let monotone = points
        .windows(2)
        .all(|w| w[1].d_kol_hat <= w[0].d_kol_hat + 2.0 * w[1].dkw_halfwidth.max(w[0].dkw_halfwidth));
    let fit = if xs.len() >= 3 { ls_fit(&xs, &ys) } else { None };
    let verdict = match fit {
        None => Verdict::Inconclusive,
        Some((slope, _)) if slope <= exponent + SLOPE_TOLERANCE && monotone => Verdict::Pass,
        Some(_) => Verdict::Fail,
    };
    RateReport {
        model: config.model,
        replicates: config.replicates,
        seed: config.seed,
        points,
        included,
        fitted_slope: fit.map(|f| f.0),
        fitted_intercept: fit.map(|f| f.1),
        theoretical_exponent: exponent,
        slope_tolerance: SLOPE_TOLERANCE,
        monotone,
        verdict,
    }
}

/// Which covariance inequality an audit checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AuditKind {
    /// `|ρ(t,s)| (1 + (t-s))^{2(1-H)}` for fBm noise.
    StationaryDecay { hurst: f64 },
    /// `|ρ̃(t,s) - ρ(t,s)| / (1 ∧ s^{2(H-1)} ∧ (t-s)^{H-1})`, short memory.
    NoiseGap { noise: NoiseSpec },
    /// `|E Z_t² - E X_t²| / (1 ∧ t^{2(H-1)})`.
    VarianceGap { noise: NoiseSpec },
    /// `|ρ̃(t,s) - ρ(t,s)| / (1 ∧ s^{2(H-1)} ∧ (t-s)^{2(H-1)})`, long memory.
    NoiseGapLongMemory { noise: NoiseSpec },
    /// `|E Z_t² - E X_t²| / (1 ∧ t^{2(H-1)})` for `H > 1/2`.
    VarianceGapLongMemory { noise: NoiseSpec },
    /// `∫_0^t e^{-θx} x^β dx / (1 ∧ t^{β+1})`.
    DampedPowerHead { beta: f64 },
    /// `∫_0^t e^{-θ(t-x)} x^β dx / (t^β ∧ t^{β+1})`.
    DampedPowerTail { beta: f64 },
    /// `∫_0^t e^{-θ(t-x)} x^β dx / (1 ∧ t^β)` for `β ∈ (-1, 0)`.
    DampedPowerTailNegative { beta: f64 },
}

impl AuditKind {
    pub fn name(&self) -> &'static str {
        match self {
            AuditKind::StationaryDecay { .. } => "stationary_decay",
            AuditKind::NoiseGap { .. } => "noise_gap",
            AuditKind::VarianceGap { .. } => "variance_gap",
            AuditKind::NoiseGapLongMemory { .. } => "noise_gap_long_memory",
            AuditKind::VarianceGapLongMemory { .. } => "variance_gap_long_memory",
            AuditKind::DampedPowerHead { .. } => "damped_power_head",
            AuditKind::DampedPowerTail { .. } => "damped_power_tail",
            AuditKind::DampedPowerTailNegative { .. } => "damped_power_tail_negative",
        }
    }
}

/// One audit: an inequality, a drift, a lattice step and nested extents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditConfig {
    pub kind: AuditKind,
    pub theta: f64,
    /// Lattice step for the two-dimensional audits.
    pub h: f64,
    /// Increasing upper limits of the time grid.
    pub extents: Vec<f64>,
}

/// Empirical suprema of a bound ratio over nested grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub name: String,
    pub config: AuditConfig,
    pub sups: Vec<f64>,
    /// Largest relative increase of the supremum from one extent to the next.
    pub growth: f64,
    /// Point `(t, s)` attaining the supremum on the largest extent.
    pub argmax: (f64, f64),
    pub pass: bool,
}

/// Largest growth of the supremum allowed between nested extents.
pub const AUDIT_GROWTH_LIMIT: f64 = 0.10;

fn min_pow(base: f64, exponent: f64) -> f64 {
    if base == 0.0 {
        f64::INFINITY
    } else {
        base.powf(exponent)
    }
}

/// `A₁(t) = ∫_0^t e^{-θx} x^β dx`.
pub fn damped_power_head(theta: f64, beta: f64, t: f64) -> Result<f64> {
    let breaks = decay_breaks(0.0, t, theta, &[]);
    Ok(over_panels(|x, _, _| (-theta * x).exp() * x.powf(beta), &breaks, Tolerance::default())?.value)
}

/// `A₂(t) = ∫_0^t e^{-θ(t-x)} x^β dx`.
pub fn damped_power_tail(theta: f64, beta: f64, t: f64) -> Result<f64> {
    let mut breaks: Vec<f64> = decay_breaks(0.0, t, theta, &[]).into_iter().map(|d| t - d).collect();
    breaks.sort_by(f64::total_cmp);
    breaks[0] = 0.0;
    Ok(over_panels(|x, _, _| (-theta * (t - x)).exp() * x.powf(beta), &breaks, Tolerance::default())?.value)
}

/// Evaluates one audit and applies the 10% growth rule.
pub fn bound_audit(config: &AuditConfig) -> Result<AuditReport> {
    let ext = &config.extents;
    if ext.len() < 2 || ext.windows(2).any(|w| w[1] <= w[0]) || !(ext[0] > 0.0) {
        return domain("an audit needs at least two increasing positive extents");
    }
    if !(config.theta > 0.0 && config.h > 0.0) {
        return domain("audit theta and h must be positive");
    }
    // (t, s, ratio) triples over the largest extent
    let points = audit_points(config)?;
    let mut sups = Vec::with_capacity(ext.len());
    let mut argmax = (f64::NAN, f64::NAN);
    for &e in ext {
        let mut best = 0.0f64;
        for &(t, s, r) in &points {
            if t <= e * (1.0 + 1e-12) && r > best {
                best = r;
                argmax = (t, s);
            }
        }
        sups.push(best);
    }
    let growth = sups
        .windows(2)
        .map(|w| if w[0] > 0.0 { w[1] / w[0] - 1.0 } else if w[1] > 0.0 { f64::INFINITY } else { 0.0 })
        .fold(0.0, f64::max);
    let pass = sups.iter().all(|s| s.is_finite()) && growth <= AUDIT_GROWTH_LIMIT;
    Ok(AuditReport {
        name: config.kind.name().to_string(),
        config: config.clone(),
        sups,
        growth,
        argmax,
        pass,
    })
}

fn audit_points(config: &AuditConfig) -> Result<Vec<(f64, f64, f64)>> {
    let top = *config.extents.last().unwrap();
    let theta = config.theta;
    let lattice = |noise: NoiseSpec| -> Result<GramMatrix> {
        let n = (top / config.h).round() as usize;
        gram_matrix(&OuModel::new(theta, config.h, n, noise)?)
    };
    let log_grid = || -> Vec<f64> {
        let start = 0.01f64;
        let steps = (20.0 * (top / start).log10()).ceil() as usize;
        (0..=steps)
            .map(|i| (start * 10f64.powf(i as f64 / 20.0)).min(top))
            .collect()
    };
    let mut out = Vec::new();
    match config.kind {
        AuditKind::StationaryDecay { hurst } => {
            let g = lattice(NoiseSpec::fbm(hurst)?)?;
            for j in 0..g.n() {
                for l in 0..=j {
                    let (t, s) = ((j + 1) as f64 * config.h, (l + 1) as f64 * config.h);
                    out.push((t, s, g.entries[(j, l)].abs() * (1.0 + t - s).powf(2.0 * (1.0 - hurst))));
                }
            }
        }
        AuditKind::NoiseGap { noise }
        | AuditKind::NoiseGapLongMemory { noise }
        | AuditKind::VarianceGap { noise }
        | AuditKind::VarianceGapLongMemory { noise } => {
            let hurst = noise.hurst();
            let z = lattice(noise)?;
            let x = lattice(NoiseSpec::fbm(hurst)?)?;
            let lag_exponent = match config.kind {
                AuditKind::NoiseGap { .. } => hurst - 1.0,
                _ => 2.0 * (hurst - 1.0),
            };
            let diagonal_only = matches!(
                config.kind,
                AuditKind::VarianceGap { .. } | AuditKind::VarianceGapLongMemory { .. }
            );
            for j in 0..z.n() {
                let lo = if diagonal_only { j } else { 0 };
                for l in lo..=j {
                    let (t, s) = ((j + 1) as f64 * config.h, (l + 1) as f64 * config.h);
                    let gap = (z.entries[(j, l)] - x.entries[(j, l)]).abs();
                    let majorant = if diagonal_only {
                        1f64.min(t.powf(2.0 * (hurst - 1.0)))
                    } else {
                        1f64.min(s.powf(2.0 * (hurst - 1.0))).min(min_pow(t - s, lag_exponent))
                    };
                    out.push((t, s, gap / majorant));
                }
            }
        }
        AuditKind::DampedPowerHead { beta } => {
            for t in log_grid() {
                out.push((t, 0.0, damped_power_head(theta, beta, t)? / 1f64.min(t.powf(beta + 1.0))));
            }
        }
        AuditKind::DampedPowerTail { beta } => {
            for t in log_grid() {
                let m = t.powf(beta).min(t.powf(beta + 1.0));
                out.push((t, 0.0, damped_power_tail(theta, beta, t)? / m));
            }
        }
        AuditKind::DampedPowerTailNegative { beta } => {
            if !(beta > -1.0 && beta < 0.0) {
                return domain(format!("this bound needs beta in (-1, 0), got {beta}"));
            }
            for t in log_grid() {
                out.push((t, 0.0, damped_power_tail(theta, beta, t)? / 1f64.min(t.powf(beta))));
            }
        }
    }
    Ok(out)
}

/// The audit configurations checked by default.
pub fn standard_audits() -> Vec<AuditConfig> {
    let at = |kind| AuditConfig {
        kind,
        theta: 1.0,
        h: 1.0,
        extents: vec![50.0, 100.0],
    };
    let sub = |h| NoiseSpec::SubFbm { hurst: h };
    vec![
        at(AuditKind::StationaryDecay { hurst: 0.3 }),
        at(AuditKind::StationaryDecay { hurst: 0.7 }),
        at(AuditKind::NoiseGap { noise: sub(0.3) }),
        at(AuditKind::VarianceGap { noise: sub(0.3) }),
        at(AuditKind::NoiseGapLongMemory { noise: sub(0.6) }),
        at(AuditKind::VarianceGapLongMemory { noise: sub(0.6) }),
        at(AuditKind::DampedPowerHead { beta: -0.4 }),
        at(AuditKind::DampedPowerHead { beta: 0.4 }),
        at(AuditKind::DampedPowerTail { beta: -0.4 }),
        at(AuditKind::DampedPowerTail { beta: 0.4 }),
        at(AuditKind::DampedPowerTailNegative { beta: -0.4 }),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::StreamTag;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn single_sample_at_zero() {
        let r = kolmogorov_vs_normal(&[0.0], 1.0).unwrap();
        assert_eq!(r.d_kol_hat, 0.5);
        assert!(kolmogorov_vs_normal(&[0.0], 0.0).is_err());
        assert!(kolmogorov_vs_normal(&[], 1.0).is_err());
    }

    #[test]
    fn far_tail_mass() {
        let d = kolmogorov_distance(&[10.0; 5], 1.0).unwrap();
        assert!((d - 1.0).abs() < 1e-15);
    }

    #[test]
    fn exact_normal_draws_sit_inside_the_band() {
        let plan = SeedPlan::new(2024);
        let mut rng = plan.rng(StreamTag::Test, 0);
        let xs: Vec<f64> = (0..100_000).map(|_| rng.sample(StandardNormal)).collect();
        let r = kolmogorov_vs_normal(&xs, 1.0).unwrap();
        assert!((r.dkw_halfwidth - 0.005_146_997_846_583_986).abs() < 1e-15);
        assert!(r.d_kol_hat < r.dkw_halfwidth);
    }

    #[test]
    fn exponent_rule() {
        assert_eq!(theoretical_exponent(0.3).unwrap(), -0.5);
        assert_eq!(theoretical_exponent(0.625).unwrap(), -0.5);
        assert!((theoretical_exponent(0.7).unwrap() + 0.2).abs() < 1e-15);
        assert!((theoretical_exponent(0.625 + 1e-12).unwrap() + 0.5).abs() < 1e-11);
        assert!(theoretical_exponent(0.75).is_err());
    }

    fn config(ns: Vec<usize>, m: usize) -> MonteCarloConfig {
        MonteCarloConfig {
            model: OuModel::new(1.0, 1.0, 8, NoiseSpec::fbm(0.5).unwrap()).unwrap(),
            replicates: m,
            seed: 1,
            method: SamplerMethod::CholeskyExact,
            ns,
            substeps: 0,
            tol: 1e-10,
        }
    }

    #[test]
    fn config_validation() {
        assert!(config(vec![8, 16], 50).validated().is_err());
        assert!(config(vec![16, 8], 200).validated().is_err());
        assert!(config(vec![8, 16], 200).validated().is_ok());
        assert!(rate_sweep(&config(vec![8, 16, 32], 200)).is_err());
    }

    #[test]
    fn replicate_prefix_is_stable() {
        let a = estimator_statistics(&config(vec![32], 200), 32, None).unwrap();
        let b = estimator_statistics(&config(vec![32], 400), 32, None).unwrap();
        assert_eq!(a[..], b[..200]);
    }

    fn point(n: usize, d: f64, m: usize) -> KolmogorovReport {
        KolmogorovReport {
            n,
            d_kol_hat: d,
            dkw_halfwidth: dkw_halfwidth(m),
            sigma1_sq: 1.0,
            replicates: m,
            mean: 0.0,
            mean_stderr: 0.0,
        }
    }

    #[test]
    fn judge_rules() {
        let cfg = config(vec![128, 256, 512, 1024], 100_000);
        let ds = |c: f64, e: f64| -> Vec<KolmogorovReport> {
            cfg.ns.iter().map(|&n| point(n, c * (n as f64).powf(e), 100_000)).collect()
        };
        assert_eq!(judge_rate(&cfg, ds(0.8, -0.5), -0.5).verdict, Verdict::Pass);
        assert_eq!(judge_rate(&cfg, ds(0.8, -0.2), -0.5).verdict, Verdict::Fail);
        let floor = ds(0.01, -0.5);
        let r = judge_rate(&cfg, floor, -0.5);
        assert_eq!(r.verdict, Verdict::Inconclusive);
        assert!(r.included.iter().all(|k| !k));
        // a jump upward beyond the band breaks monotonicity
        let mut bumpy = ds(0.8, -0.6);
        bumpy[2].d_kol_hat = bumpy[1].d_kol_hat + 0.05;
        assert!(!judge_rate(&cfg, bumpy, -0.5).monotone);
    }

    #[test]
    fn damped_power_integrals() {
        // A₁(∞) = Γ(β+1) θ^{-(β+1)}
        let a = damped_power_head(1.0, -0.4, 200.0).unwrap();
        assert!((a - libm::tgamma(0.6)).abs() < 1e-12);
        // A₂ at β = 0 is (1 - e^{-θt}) / θ
        let b = damped_power_tail(2.0, 0.0, 3.0).unwrap();
        assert!((b - (1.0 - (-6.0f64).exp()) / 2.0).abs() < 1e-14);
        // large t: A₂(t) ≈ t^β / θ
        let c = damped_power_tail(1.0, 0.4, 1000.0).unwrap();
        assert!((c / 1000f64.powf(0.4) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn one_dimensional_audits_pass() {
        for cfg in standard_audits().into_iter().filter(|c| {
            matches!(
                c.kind,
                AuditKind::DampedPowerHead { .. } | AuditKind::DampedPowerTail { .. } | AuditKind::DampedPowerTailNegative { .. }
            )
        }) {
            let r = bound_audit(&cfg).unwrap();
            assert!(r.pass, "{r:?}");
        }
    }

    #[test]
    fn audit_input_checks() {
        let mut cfg = standard_audits()[0].clone();
        cfg.extents = vec![100.0];
        assert!(bound_audit(&cfg).is_err());
        let bad = AuditConfig {
            kind: AuditKind::DampedPowerTailNegative { beta: 0.3 },
            theta: 1.0,
            h: 1.0,
            extents: vec![1.0, 2.0],
        };
        assert!(bound_audit(&bad).is_err());
    }
}
