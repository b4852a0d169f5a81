//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the test fails if any criterion fails.

use std::time::{Duration, Instant};

use fou_core::berry_esseen::{
    bound_audit, rate_sweep, standard_audits, MonteCarloConfig, RateReport, Verdict,
};
use fou_core::covariance::{
    brownian_ou_cov, gram_matrix, gram_matrix_with, limit_variances, sigma_b_sq, stationary_variance, CovOptions,
    OuModel,
};
use fou_core::cumulants::{cumulant_decay_table, exact_cumulants, mc_cumulants};
use fou_core::kernels::{hypothesis_check, standard_grid, Majorant, NoiseSpec};
use fou_core::sampler::{CholeskySampler, SamplerMethod, SeedPlan};

// Tolerances, pinned.
const SIGMA_B_TOL: f64 = 1e-8;
const SIGMA1_TOL: f64 = 1e-6;
const GRAM_CLOSED_FORM_TOL: f64 = 1e-9;
const MC_SE_GRAM: f64 = 4.0;
const PROP1_VARIATION: f64 = 0.25;
const K2_SLOPE_SHORT: f64 = -0.9;
const SLOPE_MARGIN: f64 = 0.1;
const OCTAVE_VARIATION: f64 = 0.25;
const MC_SE_CUMULANTS: f64 = 5.0;
const H3_SLACK: f64 = 1.05;

struct Outcome {
    id: usize,
    pass: bool,
    detail: String,
    elapsed: Duration,
}

fn timed<F: FnOnce() -> (bool, String)>(id: usize, limit: Duration, f: F) -> Outcome {
    let start = Instant::now();
    let (ok, detail) = f();
    let elapsed = start.elapsed();
    let in_time = elapsed <= limit;
    let detail = if in_time {
        detail
    } else {
        format!("{detail}; runtime {:.1}s over limit {:.0}s", elapsed.as_secs_f64(), limit.as_secs_f64())
    };
    Outcome {
        id,
        pass: ok && in_time,
        detail,
        elapsed,
    }
}

fn fbm_model(hurst: f64, n: usize) -> OuModel {
    OuModel::new(1.0, 1.0, n, NoiseSpec::fbm(hurst).unwrap()).unwrap()
}

fn criterion_1() -> (bool, String) {
    let sb = sigma_b_sq(1.0, 1.0, 0.5, 1e-10).unwrap();
    let coth1 = 1.0 / 1f64.tanh();
    let sb_gap = (sb.value - coth1 / 2.0).abs();
    let lv = limit_variances(&fbm_model(0.5, 1), 1e-10).unwrap();
    let s1_gap = (lv.sigma1_sq - 2.0 * coth1).abs();
    (
        sb_gap < SIGMA_B_TOL && s1_gap < SIGMA1_TOL,
        format!(
            "sigma_B^2 = {:.12} (gap {sb_gap:.1e}), sigma1^2 = {:.9} (gap {s1_gap:.1e})",
            sb.value, lv.sigma1_sq
        ),
    )
}

fn empirical_cov_check(hurst: f64) -> (bool, f64) {
    let g = gram_matrix(&fbm_model(hurst, 16)).unwrap();
    let n = 16;
    let m = 100_000;
    let sampler = CholeskySampler::new(&g).unwrap();
    let paths: Vec<Vec<f64>> = sampler.map_replicates(&SeedPlan::new(1000 + (hurst * 10.0) as u64), m, |_, p| p.to_vec());
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..=i {
            let prods: Vec<f64> = paths.iter().map(|p| p[i] * p[j]).collect();
            let mean = prods.iter().sum::<f64>() / m as f64;
            let var = prods.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
            let se = (var / m as f64).sqrt();
            worst = worst.max((mean - g.entries[(i, j)]).abs() / se);
        }
    }
    (worst < MC_SE_GRAM, worst)
}

fn criterion_2() -> (bool, String) {
    let m = fbm_model(0.5, 16);
    let closed = gram_matrix(&m).unwrap();
    let quad = gram_matrix_with(
        &m,
        CovOptions {
            force_quadrature: true,
            ..CovOptions::default()
        },
    )
    .unwrap();
    let mut gap: f64 = 0.0;
    for i in 0..16 {
        for j in 0..16 {
            let exact = brownian_ou_cov(1.0, (i + 1) as f64, (j + 1) as f64);
            gap = gap.max((closed.entries[(i, j)] - exact).abs()).max((quad.entries[(i, j)] - exact).abs());
        }
    }
    let (ok3, z3) = empirical_cov_check(0.3);
    let (ok7, z7) = empirical_cov_check(0.7);
    (
        gap < GRAM_CLOSED_FORM_TOL && ok3 && ok7,
        format!("H=1/2 max entry gap {gap:.1e}; max |z| H=0.3 {z3:.2}, H=0.7 {z7:.2}"),
    )
}

fn criterion_3() -> (bool, String) {
    let mut ok = true;
    let mut parts = Vec::new();
    for &h in &[0.3, 0.5, 0.7] {
        let a = stationary_variance(1.0, h);
        let g = gram_matrix(&fbm_model(h, 1600)).unwrap();
        let scaled = |n: usize| n as f64 * (g.leading(n).unwrap().mean_b_n() - a).abs();
        let (s800, s1600) = (scaled(800), scaled(1600));
        let variation = (s1600 - s800).abs() / s800;
        ok &= variation < PROP1_VARIATION;
        parts.push(format!("H={h}: {s800:.6} -> {s1600:.6}"));
    }
    (ok, parts.join(", "))
}

fn criterion_4() -> (bool, String) {
    let ns = [128, 256, 512, 1024, 2048];
    let t4 = cumulant_decay_table(&fbm_model(0.4, 8), &ns, 1e-10).unwrap();
    let t65 = cumulant_decay_table(&fbm_model(0.65, 8), &ns, 1e-10).unwrap();
    let s4 = t4.slope_k2_gap.unwrap_or(f64::NAN);
    let s65 = t65.slope_k2_gap.unwrap_or(f64::NAN);
    let limit65 = -(3.0 - 4.0 * 0.65) + SLOPE_MARGIN;
    (
        s4 <= K2_SLOPE_SHORT && s65 <= limit65,
        format!("slope H=0.4 {s4:.3} (<= {K2_SLOPE_SHORT}), H=0.65 {s65:.3} (<= {limit65:.2})"),
    )
}

fn criterion_5() -> (bool, String) {
    let ns = [128, 256, 512, 1024, 2048];
    let t5 = cumulant_decay_table(&fbm_model(0.5, 8), &ns, 1e-10).unwrap();
    let r = &t5.reports;
    let (a, b) = (&r[3], &r[4]);
    let k3a = a.abs_k3 * (a.n as f64).sqrt();
    let k3b = b.abs_k3 * (b.n as f64).sqrt();
    let k4a = a.k4 * (a.n as f64).sqrt();
    let k4b = b.k4 * (b.n as f64).sqrt();
    let k3_var = (k3b - k3a).abs() / k3a;
    // bounded: the scaled fourth cumulant may not grow by more than the allowance
    let k4_growth = (k4b - k4a) / k4a;
    let t7 = cumulant_decay_table(&fbm_model(0.7, 8), &ns, 1e-10).unwrap();
    let s7 = t7.slope_k4.unwrap_or(f64::NAN);
    let limit7 = 2.0 * (4.0 * 0.7 - 3.0) + SLOPE_MARGIN;
    (
        k3_var < OCTAVE_VARIATION && k4_growth < OCTAVE_VARIATION && s7 <= limit7,
        format!(
            "H=0.5 |k3|sqrt(n) {k3a:.5}->{k3b:.5}, k4 sqrt(n) {k4a:.5}->{k4b:.5}; H=0.7 k4 slope {s7:.3} (<= {limit7:.2})"
        ),
    )
}

fn criterion_6() -> (bool, String) {
    let mut ok = true;
    let mut parts = Vec::new();
    for (i, &(h, n)) in [(0.5, 32usize), (0.3, 64usize)].iter().enumerate() {
        let g = gram_matrix(&fbm_model(h, n)).unwrap();
        let exact = exact_cumulants(&g).unwrap();
        let mc = mc_cumulants(&g, 1_000_000, 600 + i as u64, 100).unwrap();
        let z2 = (mc.value.k2 - exact.k2) / mc.stderr.k2;
        let z3 = (mc.value.k3 - exact.k3) / mc.stderr.k3;
        let z4 = (mc.value.k4 - exact.k4) / mc.stderr.k4;
        ok &= z2.abs() < MC_SE_CUMULANTS && z3.abs() < MC_SE_CUMULANTS && z4.abs() < MC_SE_CUMULANTS;
        parts.push(format!("(H={h}, n={n}) z = ({z2:.2}, {z3:.2}, {z4:.2})"));
    }
    let g1 = gram_matrix(&fbm_model(0.3, 1)).unwrap();
    let v = g1.entries[(0, 0)];
    let c1 = exact_cumulants(&g1).unwrap();
    let single = c1.k2 == 2.0 * v * v && c1.k3 == 8.0 * v * v * v && c1.k4 == 48.0 * v * v * v * v;
    ok &= single;
    parts.push(format!("n=1 identities {}", if single { "exact" } else { "broken" }));
    (ok, parts.join("; "))
}

fn sweep(noise: NoiseSpec, seed: u64, workers: usize) -> RateReport {
    let config = MonteCarloConfig {
        model: OuModel::new(1.0, 1.0, 128, noise).unwrap(),
        replicates: 100_000,
        seed,
        method: SamplerMethod::CholeskyExact,
        ns: vec![128, 256, 512, 1024],
        substeps: 0,
        tol: 1e-10,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .unwrap()
        .install(|| rate_sweep(&config).unwrap())
}

fn describe(r: &RateReport) -> String {
    let ds: Vec<String> = r.points.iter().map(|p| format!("{:.4}", p.d_kol_hat)).collect();
    format!(
        "d = [{}], slope {:.3} vs exponent {:.2} + 0.15, monotone {}, verdict {:?}",
        ds.join(", "),
        r.fitted_slope.unwrap_or(f64::NAN),
        r.theoretical_exponent,
        r.monotone,
        r.verdict
    )
}

fn criterion_10() -> (bool, String) {
    let mut ok = true;
    let mut parts = Vec::new();
    for &h in &[0.3, 0.7] {
        let r = hypothesis_check(&NoiseSpec::sub_fbm(h).unwrap(), &standard_grid(), Majorant::Product).unwrap();
        let bound = h * (2.0 * h - 1.0).abs() * 2f64.powf(2.0 * h - 2.0) * H3_SLACK;
        ok &= r.sup_ratio <= bound && !r.divergent;
        parts.push(format!("sub_fbm H={h} sup {:.5} (<= {bound:.5})", r.sup_ratio));
    }
    let mut failed = Vec::new();
    for cfg in standard_audits() {
        let r = bound_audit(&cfg).unwrap();
        if !r.pass {
            failed.push(format!("{} growth {:.3}", r.name, r.growth));
        }
        ok &= r.pass;
    }
    parts.push(if failed.is_empty() {
        format!("{} bound audits pass", standard_audits().len())
    } else {
        format!("failed audits: {}", failed.join(", "))
    });
    (ok, parts.join("; "))
}

fn main() {
    let min = |m: u64| Duration::from_secs(60 * m);
    let mut outcomes = vec![
        timed(1, Duration::from_secs(1), criterion_1),
        timed(2, min(2), criterion_2),
        timed(3, min(5), criterion_3),
        timed(4, min(5), criterion_4),
        timed(5, min(5), criterion_5),
        timed(6, min(10), criterion_6),
    ];

    let configs = [
        (7, NoiseSpec::fbm(0.5).unwrap(), 7001u64, min(30)),
        (8, NoiseSpec::sub_fbm(0.3).unwrap(), 8001, min(45)),
        (9, NoiseSpec::sub_fbm(0.7).unwrap(), 9001, min(45)),
    ];
    let mut reports = Vec::new();
    for (id, noise, seed, limit) in configs {
        let mut report = None;
        outcomes.push(timed(id, limit, || {
            let r = sweep(noise, seed, 2);
            let out = (r.verdict == Verdict::Pass, describe(&r));
            report = Some(r);
            out
        }));
        reports.push((noise, seed, report.unwrap()));
    }

    outcomes.push(timed(10, min(10), criterion_10));

    outcomes.push(timed(11, min(90), || {
        let mut same = true;
        for (noise, seed, first) in &reports {
            let again = sweep(*noise, *seed, 1);
            same &= serde_json::to_string(first).unwrap() == serde_json::to_string(&again).unwrap();
            same &= first
                .points
                .iter()
                .zip(&again.points)
                .all(|(a, b)| a.d_kol_hat.to_bits() == b.d_kol_hat.to_bits());
        }
        (same, format!("reruns with 1 worker vs 2 workers identical: {same}"))
    }));

    println!();
    for o in &outcomes {
        println!(
            "criterion {:>2}: {} [{:.1}s] {}",
            o.id,
            if o.pass { "PASS" } else { "FAIL" },
            o.elapsed.as_secs_f64(),
            o.detail
        );
    }
    let failed: Vec<usize> = outcomes.iter().filter(|o| !o.pass).map(|o| o.id).collect();
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
    println!("all {} criteria pass", outcomes.len());
}
