//! One function per subcommand. Each writes its outputs and reports a status.

use std::fs;
use std::path::Path;

use fou_core::berry_esseen::{bound_audit, mc_experiment, rate_sweep, Verdict};
use fou_core::covariance::{gram_matrix, limit_variances};
use fou_core::cumulants::{cumulant_decay_table, mc_cumulants, CumulantMethod, CumulantReport, CumulantTable};
use fou_core::estimator::moment_estimate;
use fou_core::kernels::{hypothesis_check, upper_grid};
use fou_core::sampler::{CholeskySampler, PathSample, SamplerMethod, SeedPlan, SubstepSampler};
use fou_core::stats::{log_log_slope, mean_and_stderr};
use serde::Serialize;

use crate::config::{substeps_for, ConfigError, CumulantSource, RunConfig};
use crate::output::{num, OutDir, Table};
use crate::plot::rate_plot;
use crate::Failure;

/// How a completed run judged its result.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    Inconclusive,
    Fail,
}

fn flag(b: bool) -> String {
    b.to_string()
}

fn section<'a, T>(s: &'a Option<T>, name: &str, key: &str) -> Result<&'a T, Failure> {
    s.as_ref()
        .ok_or_else(|| Failure::from(ConfigError(format!("missing key `{key}` in section [{name}]"))))
}

fn draw_paths(
    cfg: &RunConfig,
    method: SamplerMethod,
    substeps: Option<usize>,
    section_name: &str,
    replicates: usize,
    seed: u64,
) -> Result<Vec<PathSample>, Failure> {
    let model = cfg.model()?;
    let substeps = substeps_for(method, substeps, section_name)?;
    let plan = SeedPlan::new(seed);
    Ok(match method {
        SamplerMethod::CholeskyExact => CholeskySampler::new(&gram_matrix(&model)?)?.sample(&plan, replicates),
        SamplerMethod::SubstepEuler => SubstepSampler::new(&model, substeps)?.sample(&plan, replicates),
    })
}

pub fn simulate(cfg: &RunConfig, seed: u64, out: &mut OutDir) -> Result<Status, Failure> {
    let s = section(&cfg.simulate, "simulate", "replicates")?;
    let paths = draw_paths(cfg, s.method(), s.substeps, "simulate", s.require_replicates()?, seed)?;
    let n = cfg.model()?.n;
    let mut header = vec!["replicate".to_string(), "seed".to_string()];
    header.extend((1..=n).map(|j| format!("x_{j}")));
    let mut t = Table::new(&header);
    for p in &paths {
        let mut row = vec![p.replicate.to_string(), p.seed.to_string()];
        row.extend(p.values.iter().map(|&v| num(v)));
        t.row(row);
    }
    out.csv("paths.csv", &t)?;
    out.json("paths.json", &paths)?;
    Ok(Status::Ok)
}

/// Paths stored by `simulate`: columns `x_1..x_n` after any leading columns.
fn read_paths(path: &Path) -> Result<Vec<Vec<f64>>, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let bad = |msg: String| Failure::Usage(format!("{}: {msg}", path.display()));
    let header = r.headers().map_err(|e| bad(e.to_string()))?.clone();
    let cols: Vec<usize> = header
        .iter()
        .enumerate()
        .filter(|(_, h)| h.starts_with("x_"))
        .map(|(i, _)| i)
        .collect();
    if cols.is_empty() {
        return Err(bad("no x_ columns".into()));
    }
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let row: Result<Vec<f64>, _> = cols.iter().map(|&c| rec[c].parse::<f64>()).collect();
        out.push(row.map_err(|e| bad(format!("row {}: {e}", line + 1)))?);
    }
    Ok(out)
}

#[derive(Serialize)]
struct EstimateSummary {
    hurst: f64,
    replicates: usize,
    mean_theta_hat: f64,
    stderr_theta_hat: f64,
    estimates: Vec<fou_core::EstimatorResult>,
}

pub fn estimate(cfg: &RunConfig, seed: u64, out: &mut OutDir) -> Result<Status, Failure> {
    let s = section(&cfg.estimate, "estimate", "replicates")?;
    let hurst = cfg.noise()?.hurst();
    let paths: Vec<Vec<f64>> = match &s.input {
        Some(input) => {
            if s.replicates.is_some() || s.method.is_some() || s.substeps.is_some() {
                return Err(ConfigError("key `input` in [estimate] excludes replicates, method and substeps".into()).into());
            }
            read_paths(Path::new(input))?
        }
        None => draw_paths(cfg, s.method(), s.substeps, "estimate", s.require_replicates()?, seed)?
            .into_iter()
            .map(|p| p.values)
            .collect(),
    };
    let estimates: Vec<_> = paths
        .iter()
        .map(|p| moment_estimate(p, hurst))
        .collect::<Result<_, _>>()?;
    let mut t = Table::new(&["replicate", "n", "b_n", "theta_hat"]);
    for (i, e) in estimates.iter().enumerate() {
        t.row(vec![i.to_string(), e.n.to_string(), num(e.b_n), num(e.theta_hat)]);
    }
    out.csv("estimates.csv", &t)?;
    let thetas: Vec<f64> = estimates.iter().map(|e| e.theta_hat).collect();
    let (mean, se) = if thetas.len() > 1 {
        mean_and_stderr(&thetas)
    } else {
        (thetas.first().copied().unwrap_or(f64::NAN), f64::NAN)
    };
    out.json(
        "estimates.json",
        &EstimateSummary {
            hurst,
            replicates: estimates.len(),
            mean_theta_hat: mean,
            stderr_theta_hat: se,
            estimates,
        },
    )?;
    Ok(Status::Ok)
}

pub fn cumulants(cfg: &RunConfig, seed: u64, out: &mut OutDir) -> Result<Status, Failure> {
    let s = section(&cfg.cumulants, "cumulants", "ns")?;
    let ns = s.require_ns()?;
    let model = cfg.model()?;
    let table = match s.source.unwrap_or(CumulantSource::Exact) {
        CumulantSource::Exact => {
            if s.replicates.is_some() || s.batches.is_some() {
                return Err(ConfigError("keys `replicates` and `batches` in [cumulants] need source = monte_carlo".into()).into());
            }
            cumulant_decay_table(&model, &ns, cfg.sigma_b_tol())?
        }
        CumulantSource::MonteCarlo => {
            let replicates = s.require_replicates()?;
            let batches = s.batches.unwrap_or(100);
            model.require_clt_regime()?;
            let sigma_b = limit_variances(&model, cfg.sigma_b_tol())?.sigma_b_sq;
            let mut reports = Vec::new();
            for &n in &ns {
                let g = gram_matrix(&model.with_n(n)?)?;
                let k = mc_cumulants(&g, replicates, seed, batches)?;
                reports.push(CumulantReport {
                    n,
                    k2: k.value.k2,
                    k3: k.value.k3,
                    k4: k.value.k4,
                    sigma_b_sq_ref: sigma_b,
                    k2_gap: (k.value.k2 - sigma_b).abs(),
                    abs_k3: k.value.k3.abs(),
                    method: CumulantMethod::MonteCarlo,
                    stderr: Some(fou_core::cumulants::Cumulants {
                        k2: k.stderr.k2,
                        k3: k.stderr.k3,
                        k4: k.stderr.k4,
                    }),
                });
            }
            let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
            let slope = |f: fn(&CumulantReport) -> f64| log_log_slope(&xs, &reports.iter().map(f).collect::<Vec<_>>());
            CumulantTable {
                model: model.with_n(*ns.iter().max().unwrap_or(&model.n))?,
                slope_k2_gap: slope(|r| r.k2_gap),
                slope_abs_k3: slope(|r| r.abs_k3),
                slope_k4: slope(|r| r.k4),
                reports,
            }
        }
    };
    let mut t = Table::new(&[
        "n", "method", "k2", "k3", "k4", "sigma_b_sq", "k2_gap", "abs_k3", "k2_stderr", "k3_stderr", "k4_stderr",
    ]);
    for r in &table.reports {
        let se = |f: fn(&fou_core::cumulants::Cumulants) -> f64| r.stderr.as_ref().map_or(String::new(), |c| num(f(c)));
        t.row(vec![
            r.n.to_string(),
            match r.method {
                CumulantMethod::ExactSum => "exact".into(),
                CumulantMethod::MonteCarlo => "monte_carlo".into(),
            },
            num(r.k2),
            num(r.k3),
            num(r.k4),
            num(r.sigma_b_sq_ref),
            num(r.k2_gap),
            num(r.abs_k3),
            se(|c| c.k2),
            se(|c| c.k3),
            se(|c| c.k4),
        ]);
    }
    out.csv("cumulants.csv", &t)?;
    out.json("cumulants.json", &table)?;
    Ok(Status::Ok)
}

fn kolmogorov_header() -> Table {
    Table::new(&[
        "n",
        "replicates",
        "d_kol_hat",
        "dkw_halfwidth",
        "at_noise_floor",
        "sigma1_sq",
        "mean",
        "mean_stderr",
    ])
}

fn kolmogorov_row(r: &fou_core::berry_esseen::KolmogorovReport) -> Vec<String> {
    vec![
        r.n.to_string(),
        r.replicates.to_string(),
        num(r.d_kol_hat),
        num(r.dkw_halfwidth),
        flag(r.at_noise_floor()),
        num(r.sigma1_sq),
        num(r.mean),
        num(r.mean_stderr),
    ]
}

pub fn kolmogorov(cfg: &RunConfig, seed: u64, out: &mut OutDir) -> Result<Status, Failure> {
    let mc = cfg.monte_carlo(seed, false)?;
    let r = mc_experiment(&mc, mc.model.n)?;
    let mut t = kolmogorov_header();
    t.row(kolmogorov_row(&r));
    out.csv("kolmogorov.csv", &t)?;
    out.json("kolmogorov.json", &r)?;
    Ok(Status::Ok)
}

pub fn rate(cfg: &RunConfig, seed: u64, out: &mut OutDir) -> Result<Status, Failure> {
    let mc = cfg.monte_carlo(seed, true)?;
    let report = rate_sweep(&mc)?;
    let mut t = Table::new(&[
        "n",
        "replicates",
        "d_kol_hat",
        "dkw_halfwidth",
        "included",
        "sigma1_sq",
        "mean",
        "mean_stderr",
    ]);
    for (p, &inc) in report.points.iter().zip(&report.included) {
        t.row(vec![
            p.n.to_string(),
            p.replicates.to_string(),
            num(p.d_kol_hat),
            num(p.dkw_halfwidth),
            flag(inc),
            num(p.sigma1_sq),
            num(p.mean),
            num(p.mean_stderr),
        ]);
    }
    out.json("rate_report.json", &report)?;
    out.csv("rate_points.csv", &t)?;
    out.write("rate_plot.svg", rate_plot(&report).as_bytes())?;
    Ok(match report.verdict {
        Verdict::Pass => Status::Ok,
        Verdict::Fail => Status::Fail,
        Verdict::Inconclusive => Status::Inconclusive,
    })
}

pub fn audit(cfg: &RunConfig, out: &mut OutDir) -> Result<Status, Failure> {
    let configs = cfg.audits()?;
    let mut reports = Vec::with_capacity(configs.len());
    for c in &configs {
        reports.push(bound_audit(c)?);
    }
    let mut t = Table::new(&["name", "parameters", "theta", "h", "extent", "sup", "growth", "pass"]);
    for r in &reports {
        let params = serde_json::to_string(&r.config.kind).unwrap_or_default();
        for (e, s) in r.config.extents.iter().zip(&r.sups) {
            t.row(vec![
                r.name.clone(),
                params.clone(),
                num(r.config.theta),
                num(r.config.h),
                num(*e),
                num(*s),
                num(r.growth),
                flag(r.pass),
            ]);
        }
    }
    out.csv("audits.csv", &t)?;
    out.json("audits.json", &reports)?;
    Ok(if reports.iter().all(|r| r.pass) { Status::Ok } else { Status::Fail })
}

pub fn kernels(cfg: &RunConfig, out: &mut OutDir) -> Result<Status, Failure> {
    let noise = cfg.noise()?;
    let (majorant, levels) = cfg.majorant()?;
    let report = hypothesis_check(&noise, &upper_grid(&levels), majorant)?;
    let mut t = Table::new(&["s", "t", "mixed_partial", "majorant", "ratio"]);
    for p in &report.points {
        t.row(vec![num(p.s), num(p.t), num(p.mixed_partial), num(p.majorant), num(p.ratio)]);
    }
    out.csv("kernels_check.csv", &t)?;
    out.json("kernels_check.json", &report)?;
    Ok(if report.divergent { Status::Fail } else { Status::Ok })
}
