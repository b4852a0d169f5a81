//! Cumulants of `W_n = √n (B_n - E B_n)`.
//!
//! `W_n` is a centered Gaussian quadratic form with Gram matrix `P`, so
//!
//! ```text
//! k2 = (2/n) tr(P²),   k3 = (8/n^{3/2}) tr(P³),   k4 = (48/n²) tr(P⁴).
//! ```
//!
//! All three traces come from one product `Q = P²`: `tr(P²)` is the squared
//! Frobenius norm of `P`, `tr(P³) = Σ Q∘P` and `tr(P⁴) = ‖Q‖_F²`.

use serde::{Deserialize, Serialize};

use crate::covariance::{gram_matrix, limit_variances, GramMatrix, OuModel};
use crate::error::{domain, Error, Result};
use crate::sampler::{CholeskySampler, SeedPlan};
use crate::stats::{k_statistics_batched, log_log_slope, KStatsWithErrors};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CumulantMethod {
    ExactSum,
    MonteCarlo,
}

/// The second moment and third and fourth cumulants of `W_n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cumulants {
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
}

/// `(2/n) Σ ρ²(jh, lh)`.
pub fn k2_exact(gram: &GramMatrix) -> f64 {
    let n = gram.n() as f64;
    2.0 / n * gram.entries.iter().map(|x| x * x).sum::<f64>()
}

/// `(8/n^{3/2}) tr(P³)`.
pub fn k3_exact(gram: &GramMatrix) -> f64 {
    8.0 * traces(gram).0 / (gram.n() as f64).powf(1.5)
}

/// `(48/n²) tr(P⁴)`; an error if the result is not positive.
pub fn k4_exact(gram: &GramMatrix) -> Result<f64> {
    exact_cumulants(gram).map(|c| c.k4)
}

/// All three cumulants from a single matrix product.
pub fn exact_cumulants(gram: &GramMatrix) -> Result<Cumulants> {
    let n = gram.n() as f64;
    let (tr3, tr4) = traces(gram);
    let k4 = 48.0 * tr4 / (n * n);
    if !(k4 > 0.0) {
        return Err(Error::Numeric(format!("fourth cumulant is not positive: {k4}")));
    }
    Ok(Cumulants {
        k2: k2_exact(gram),
        k3: 8.0 * tr3 / n.powf(1.5),
        k4,
    })
}

/// `(tr(P³), tr(P⁴))` from one product `Q = P²`.
fn traces(gram: &GramMatrix) -> (f64, f64) {
    let p = &gram.entries;
    let q = p * p;
    let tr3 = q.iter().zip(p.iter()).map(|(a, b)| a * b).sum();
    let tr4 = q.iter().map(|x| x * x).sum();
    (tr3, tr4)
}

/// Cumulants at one sample size together with the distance to the limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CumulantReport {
    pub n: usize,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    pub sigma_b_sq_ref: f64,
    pub k2_gap: f64,
    pub abs_k3: f64,
    pub method: CumulantMethod,
    /// Standard errors, present for Monte Carlo reports.
    pub stderr: Option<Cumulants>,
}

/// Cumulants over a range of sample sizes with fitted log-log slopes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CumulantTable {
    pub model: OuModel,
    pub reports: Vec<CumulantReport>,
    pub slope_k2_gap: Option<f64>,
    pub slope_abs_k3: Option<f64>,
    pub slope_k4: Option<f64>,
}

/// Exact cumulants for each `n` in `ns`, computed from leading blocks of
/// one Gram matrix at the largest `n`.
pub fn cumulant_decay_table(model_base: &OuModel, ns: &[usize], tol: f64) -> Result<CumulantTable> {
    if ns.is_empty() {
        return domain("cumulant table needs at least one n");
    }
    model_base.require_clt_regime()?;
    let n_max = *ns.iter().max().unwrap();
    let full = gram_matrix(&model_base.with_n(n_max)?)?;
    let sigma_b = limit_variances(model_base, tol)?.sigma_b_sq;
    let mut reports = Vec::with_capacity(ns.len());
    for &n in ns {
        let c = exact_cumulants(&full.leading(n)?)?;
        reports.push(CumulantReport {
            n,
            k2: c.k2,
            k3: c.k3,
            k4: c.k4,
            sigma_b_sq_ref: sigma_b,
            k2_gap: (c.k2 - sigma_b).abs(),
            abs_k3: c.k3.abs(),
            method: CumulantMethod::ExactSum,
            stderr: None,
        });
    }
    let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    let slope = |f: fn(&CumulantReport) -> f64| {
        let ys: Vec<f64> = reports.iter().map(f).collect();
        log_log_slope(&xs, &ys)
    };
    Ok(CumulantTable {
        model: model_base.with_n(n_max)?,
        slope_k2_gap: slope(|r| r.k2_gap),
        slope_abs_k3: slope(|r| r.abs_k3),
        slope_k4: slope(|r| r.k4),
        reports,
    })
}

/// Monte Carlo draws of `W_n`, in replicate order.
pub fn simulate_w_n(gram: &GramMatrix, replicates: usize, seed: u64) -> Result<Vec<f64>> {
    let sampler = CholeskySampler::new(gram)?;
    let mean = gram.mean_b_n();
    let root_n = (gram.n() as f64).sqrt();
    Ok(sampler.map_replicates(&SeedPlan::new(seed), replicates, |_, path| {
        root_n * (path.iter().map(|x| x * x).sum::<f64>() / path.len() as f64 - mean)
    }))
}

/// k-statistics of simulated `W_n` with batch-means standard errors.
pub fn mc_cumulants(gram: &GramMatrix, replicates: usize, seed: u64, batches: usize) -> Result<KStatsWithErrors> {
    if replicates < 4 * batches || batches < 2 {
        return domain("need at least two batches of four replicates");
    }
    Ok(k_statistics_batched(&simulate_w_n(gram, replicates, seed)?, batches))
}
