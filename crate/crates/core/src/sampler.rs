//! Gaussian path generation with reproducible random streams.
//!
//! Each replicate owns an independent ChaCha stream keyed by the master seed
//! and a stream tag, with the replicate index as the stream number. Work is
//! split into fixed chunks and results are collected in replicate order, so
//! output does not depend on the number of worker threads.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::covariance::{GramMatrix, OuModel};
use crate::error::{domain, Error, Result};
use crate::kernels::NoiseSpec;

/// Replicates simulated together; each lane keeps its own summation order.
const LANES: usize = 8;
/// Replicates per parallel task.
const CHUNK: usize = 64 * LANES;

/// Purpose of a random stream, so different uses of one seed never overlap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamTag {
    Paths,
    Increments,
    Test,
}

impl StreamTag {
    fn code(self) -> u64 {
        match self {
            StreamTag::Paths => 1,
            StreamTag::Increments => 2,
            StreamTag::Test => 3,
        }
    }
}

/// Derives per-replicate generators from one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedPlan {
    pub master: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl SeedPlan {
    pub fn new(master: u64) -> Self {
        SeedPlan { master }
    }

    /// A 64-bit label for replicate `index`; injective in `index`.
    pub fn derived_seed(&self, index: u64) -> u64 {
        splitmix64(self.master.wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15)))
    }

    pub fn rng(&self, tag: StreamTag, index: u64) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.master.to_le_bytes());
        key[8..16].copy_from_slice(&tag.code().to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(index);
        rng
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerMethod {
    CholeskyExact,
    SubstepEuler,
}

/// One simulated observation vector `(X_h, …, X_{nh})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    pub values: Vec<f64>,
    pub model: OuModel,
    pub seed: u64,
    pub replicate: u64,
    pub method: SamplerMethod,
    /// Diagonal jitter added before factoring, if any.
    pub jitter: Option<f64>,
    /// Set when circulant embedding failed and Toeplitz Cholesky was used.
    pub fgn_fallback: bool,
}

/// Lower-triangular Cholesky factor of a Gram matrix, packed by rows.
#[derive(Debug, Clone)]
pub struct CholeskySampler {
    n: usize,
    packed: Vec<f64>,
    model: OuModel,
    pub jitter: Option<f64>,
}

impl CholeskySampler {
    /// Factors the Gram matrix once. If plain factorization fails a single
    /// diagonal jitter of `1e-10 · max diagonal` is tried and recorded.
    pub fn new(gram: &GramMatrix) -> Result<Self> {
        gram.check_invariants()?;
        let (l, jitter) = factor_with_jitter(&gram.entries)?;
        let n = gram.n();
        let mut packed = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            for k in 0..=i {
                packed.push(l[(i, k)]);
            }
        }
        Ok(CholeskySampler {
            n,
            packed,
            model: gram.model,
            jitter,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Writes `L z` for `LANES` replicates whose normals are interleaved in
    /// `z[k * LANES + lane]`; output goes to `out[lane][i]`.
    fn apply_lanes(&self, z: &[f64], out: &mut [Vec<f64>]) {
        let n = self.n;
        let mut row_start = 0;
        for i in 0..n {
            let row = &self.packed[row_start..row_start + i + 1];
            let mut acc = [0.0f64; LANES];
            for (k, &l) in row.iter().enumerate() {
                let zk = &z[k * LANES..(k + 1) * LANES];
                for lane in 0..LANES {
                    acc[lane] += l * zk[lane];
                }
            }
            for lane in 0..LANES {
                out[lane][i] = acc[lane];
            }
            row_start += i + 1;
        }
    }

    /// Runs `f` on replicates `0..count`, in parallel, and returns the
    /// results in replicate order. Replicate `i` always sees the same path.
    pub fn map_replicates<T, F>(&self, plan: &SeedPlan, count: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize, &[f64]) -> T + Sync,
    {
        let n = self.n;
        let chunks = count.div_ceil(CHUNK);
        let per_chunk: Vec<Vec<T>> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let start = c * CHUNK;
                let end = (start + CHUNK).min(count);
                let mut z = vec![0.0f64; n * LANES];
                let mut paths = vec![vec![0.0f64; n]; LANES];
                let mut results = Vec::with_capacity(end - start);
                let mut base = start;
                while base < end {
                    let width = (end - base).min(LANES);
                    for lane in 0..LANES {
                        if lane < width {
                            let mut rng = plan.rng(StreamTag::Paths, (base + lane) as u64);
                            for k in 0..n {
                                z[k * LANES + lane] = rng.sample(StandardNormal);
                            }
                        } else {
                            for k in 0..n {
                                z[k * LANES + lane] = 0.0;
                            }
                        }
                    }
                    self.apply_lanes(&z, &mut paths);
                    for (lane, path) in paths.iter().enumerate().take(width) {
                        results.push(f(base + lane, path));
                    }
                    base += width;
                }
                results
            })
            .collect();
        per_chunk.into_iter().flatten().collect()
    }

    /// Materializes `count` paths.
    pub fn sample(&self, plan: &SeedPlan, count: usize) -> Vec<PathSample> {
        self.map_replicates(plan, count, |i, path| PathSample {
            values: path.to_vec(),
            model: self.model,
            seed: plan.derived_seed(i as u64),
            replicate: i as u64,
            method: SamplerMethod::CholeskyExact,
            jitter: self.jitter,
            fgn_fallback: false,
        })
    }
}

fn factor_with_jitter(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, Option<f64>)> {
    if let Some(c) = m.clone().cholesky() {
        return Ok((c.l(), None));
    }
    let scale = m.diagonal().iter().copied().fold(0.0, f64::max);
    let jitter = 1e-10 * scale;
    let mut shifted = m.clone();
    for i in 0..m.nrows() {
        shifted[(i, i)] += jitter;
    }
    shifted
        .cholesky()
        .map(|c| (c.l(), Some(jitter)))
        .ok_or_else(|| Error::Numeric("Cholesky factorization failed after jitter".into()))
}

/// Draws `count` exact samples of `N(0, gram)`.
pub fn cholesky_sample(gram: &GramMatrix, seed: u64, count: usize) -> Result<Vec<PathSample>> {
    if count == 0 {
        return domain("sample count must be at least 1");
    }
    Ok(CholeskySampler::new(gram)?.sample(&SeedPlan::new(seed), count))
}

/// Autocovariance `γ(k)` of fractional Gaussian noise with step `h`.
pub fn fgn_autocov(hurst: f64, h: f64, k: usize) -> f64 {
    let g = 2.0 * hurst;
    let k = k as f64;
    let lower = if k == 0.0 { 1.0 } else { (k - 1.0).powf(g) };
    0.5 * h.powf(g) * ((k + 1.0).powf(g) - 2.0 * k.powf(g) + lower)
}

/// Precomputed generator of fractional Gaussian noise.
#[derive(Debug, Clone)]
pub struct FgnGenerator {
    n: usize,
    method: FgnMethod,
}

#[derive(Debug, Clone)]
enum FgnMethod {
    /// `sqrt(λ_k / m)` for the circulant embedding of size `m = 2n`.
    Circulant(Vec<f64>),
    /// Lower Cholesky factor of the Toeplitz covariance.
    Toeplitz(DMatrix<f64>),
}

impl FgnGenerator {
    pub fn new(hurst: f64, h: f64, n_steps: usize) -> Result<Self> {
        if !(hurst > 0.0 && hurst < 1.0) {
            return domain(format!("hurst must lie in (0, 1), got {hurst}"));
        }
        if n_steps == 0 || !(h > 0.0) {
            return domain("fGn needs n_steps >= 1 and h > 0");
        }
        let n = n_steps;
        let m = 2 * n;
        let mut row: Vec<Complex<f64>> = (0..m)
            .map(|j| {
                let lag = if j <= n { j } else { m - j };
                Complex::new(fgn_autocov(hurst, h, lag), 0.0)
            })
            .collect();
        FftPlanner::new().plan_fft_forward(m).process(&mut row);
        let top = row.iter().map(|c| c.re).fold(0.0, f64::max);
        let low = row.iter().map(|c| c.re).fold(f64::INFINITY, f64::min);
        if low >= -1e-10 * top {
            let scales = row.iter().map(|c| (c.re.max(0.0) / m as f64).sqrt()).collect();
            return Ok(FgnGenerator {
                n,
                method: FgnMethod::Circulant(scales),
            });
        }
        let cov = DMatrix::from_fn(n, n, |i, j| fgn_autocov(hurst, h, i.abs_diff(j)));
        let (l, _) = factor_with_jitter(&cov)?;
        Ok(FgnGenerator {
            n,
            method: FgnMethod::Toeplitz(l),
        })
    }

    pub fn used_fallback(&self) -> bool {
        matches!(self.method, FgnMethod::Toeplitz(_))
    }

    pub fn generate<R: Rng>(&self, rng: &mut R, planner: &mut FftPlanner<f64>) -> Vec<f64> {
        match &self.method {
            FgnMethod::Circulant(scales) => {
                let mut w: Vec<Complex<f64>> = scales
                    .iter()
                    .map(|&s| {
                        let a: f64 = rng.sample(StandardNormal);
                        let b: f64 = rng.sample(StandardNormal);
                        Complex::new(s * a, s * b)
                    })
                    .collect();
                planner.plan_fft_forward(w.len()).process(&mut w);
                w.iter().take(self.n).map(|c| c.re).collect()
            }
            FgnMethod::Toeplitz(l) => {
                let z: Vec<f64> = (0..self.n).map(|_| rng.sample(StandardNormal)).collect();
                (0..self.n)
                    .map(|i| (0..=i).map(|k| l[(i, k)] * z[k]).sum())
                    .collect()
            }
        }
    }
}

/// One draw of `n_steps` fractional Gaussian noise increments with step `h`.
pub fn fgn_circulant(hurst: f64, h: f64, n_steps: usize, seed: u64) -> Result<(Vec<f64>, bool)> {
    let gen = FgnGenerator::new(hurst, h, n_steps)?;
    let mut rng = SeedPlan::new(seed).rng(StreamTag::Increments, 0);
    Ok((gen.generate(&mut rng, &mut FftPlanner::new()), gen.used_fallback()))
}

/// Approximate OU paths from fBm increments on a fine grid.
#[derive(Debug, Clone)]
pub struct SubstepSampler {
    model: OuModel,
    substeps: usize,
    fgn: FgnGenerator,
}

impl SubstepSampler {
    /// Only fBm noise is supported; other families are sampled exactly from
    /// their Gram matrix.
    pub fn new(model: &OuModel, substeps_per_h: usize) -> Result<Self> {
        let model = model.validated()?;
        if substeps_per_h == 0 {
            return domain("substeps_per_h must be at least 1");
        }
        let hurst = match model.noise {
            NoiseSpec::Fbm { hurst } => hurst,
            other => {
                return domain(format!(
                    "substep sampling supports fbm noise only, got {}",
                    other.family().name()
                ))
            }
        };
        let delta = model.h / substeps_per_h as f64;
        let fgn = FgnGenerator::new(hurst, delta, model.n * substeps_per_h)?;
        Ok(SubstepSampler {
            model,
            substeps: substeps_per_h,
            fgn,
        })
    }

    fn path<R: Rng>(&self, rng: &mut R, planner: &mut FftPlanner<f64>) -> Vec<f64> {
        let delta = self.model.h / self.substeps as f64;
        let decay = (-self.model.theta * delta).exp();
        let weight = (-0.5 * self.model.theta * delta).exp();
        let increments = self.fgn.generate(rng, planner);
        let mut x = 0.0;
        let mut out = Vec::with_capacity(self.model.n);
        for (k, db) in increments.iter().enumerate() {
            x = decay * x + weight * db;
            if (k + 1) % self.substeps == 0 {
                out.push(x);
            }
        }
        out
    }

    pub fn map_replicates<T, F>(&self, plan: &SeedPlan, count: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize, &[f64]) -> T + Sync,
    {
        let chunks = count.div_ceil(CHUNK);
        let per_chunk: Vec<Vec<T>> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut planner = FftPlanner::new();
                (c * CHUNK..((c + 1) * CHUNK).min(count))
                    .map(|i| {
                        let mut rng = plan.rng(StreamTag::Increments, i as u64);
                        f(i, &self.path(&mut rng, &mut planner))
                    })
                    .collect()
            })
            .collect();
        per_chunk.into_iter().flatten().collect()
    }

    pub fn sample(&self, plan: &SeedPlan, count: usize) -> Vec<PathSample> {
        let fallback = self.fgn.used_fallback();
        self.map_replicates(plan, count, |i, path| PathSample {
            values: path.to_vec(),
            model: self.model,
            seed: plan.derived_seed(i as u64),
            replicate: i as u64,
            method: SamplerMethod::SubstepEuler,
            jitter: None,
            fgn_fallback: fallback,
        })
    }
}

/// One approximate path with `substeps_per_h` fine steps per observation.
pub fn ou_path_substep(model: &OuModel, substeps_per_h: usize, seed: u64) -> Result<PathSample> {
    let sampler = SubstepSampler::new(model, substeps_per_h)?;
    Ok(sampler.sample(&SeedPlan::new(seed), 1).remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::{gram_matrix, CovMethod};

    fn brownian(n: usize) -> OuModel {
        OuModel::new(1.0, 1.0, n, NoiseSpec::fbm(0.5).unwrap()).unwrap()
    }

    #[test]
    fn derived_seeds_are_distinct() {
        let plan = SeedPlan::new(42);
        let mut seen: Vec<u64> = (0..10_000).map(|i| plan.derived_seed(i)).collect();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 10_000);
    }

    #[test]
    fn streams_differ_by_tag_and_index() {
        let plan = SeedPlan::new(7);
        let a: f64 = plan.rng(StreamTag::Paths, 0).sample(StandardNormal);
        let b: f64 = plan.rng(StreamTag::Paths, 1).sample(StandardNormal);
        let c: f64 = plan.rng(StreamTag::Increments, 0).sample(StandardNormal);
        assert!(a != b && a != c);
    }

    #[test]
    fn scalar_gram_variance() {
        let m = brownian(1);
        let g = gram_matrix(&m).unwrap();
        let v = g.entries[(0, 0)];
        let s = CholeskySampler::new(&g).unwrap();
        let m2: Vec<f64> = s.map_replicates(&SeedPlan::new(1), 100_000, |_, p| p[0] * p[0]);
        let var = m2.iter().sum::<f64>() / m2.len() as f64;
        assert!((var - v).abs() < 4.0 * v * (2.0 / 1e5f64).sqrt(), "{var} vs {v}");
    }

    #[test]
    fn lag_one_autocovariance_brownian() {
        let g = gram_matrix(&brownian(4)).unwrap();
        assert_eq!(g.method, CovMethod::ClosedFormHHalf);
        let s = CholeskySampler::new(&g).unwrap();
        let prods: Vec<f64> = s.map_replicates(&SeedPlan::new(3), 100_000, |_, p| p[0] * p[1]);
        let m = prods.iter().sum::<f64>() / prods.len() as f64;
        let sd = (prods.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (prods.len() - 1) as f64).sqrt();
        let se = sd / (prods.len() as f64).sqrt();
        let exact = crate::covariance::brownian_ou_cov(1.0, 1.0, 2.0);
        assert!((m - exact).abs() < 4.0 * se, "{m} vs {exact} ± {se}");
    }

    #[test]
    fn deterministic_and_lane_independent() {
        let g = gram_matrix(&brownian(5)).unwrap();
        let a = cholesky_sample(&g, 9, 3).unwrap();
        let b = cholesky_sample(&g, 9, 3).unwrap();
        assert_eq!(a, b);
        // replicate 2 is the same whether it is drawn alone or in a full chunk
        let many = cholesky_sample(&g, 9, 1000).unwrap();
        assert_eq!(many[2].values, a[2].values);
        assert_eq!(many[999].replicate, 999);
    }

    #[test]
    fn thread_count_does_not_change_output() {
        let g = gram_matrix(&brownian(16)).unwrap();
        let s = CholeskySampler::new(&g).unwrap();
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| s.map_replicates(&SeedPlan::new(5), 3000, |_, p| p.iter().sum::<f64>()))
        };
        let one = run(1);
        let three = run(3);
        assert!(one.iter().zip(&three).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn fgn_brownian_increments_uncorrelated() {
        let gen = FgnGenerator::new(0.5, 1.0, 64).unwrap();
        assert!(!gen.used_fallback());
        let plan = SeedPlan::new(11);
        let mut planner = FftPlanner::new();
        let mut prods = Vec::new();
        let mut sq = Vec::new();
        for i in 0..20_000 {
            let x = gen.generate(&mut plan.rng(StreamTag::Test, i), &mut planner);
            prods.push(x[10] * x[11]);
            sq.push(x[10] * x[10]);
        }
        let m = prods.iter().sum::<f64>() / prods.len() as f64;
        let v = sq.iter().sum::<f64>() / sq.len() as f64;
        let se = 1.0 / (prods.len() as f64).sqrt();
        assert!(m.abs() < 4.0 * se, "{m}");
        assert!((v - 1.0).abs() < 4.0 * (2.0 / sq.len() as f64).sqrt());
    }

    #[test]
    fn fgn_long_memory_lag_one() {
        let exact = 0.5 * (2f64.powf(1.4) - 2.0);
        assert!((exact - 0.319_507_910_772_894_3).abs() < 1e-15);
        assert_eq!(fgn_autocov(0.7, 1.0, 1), exact);
        let gen = FgnGenerator::new(0.7, 1.0, 32).unwrap();
        let plan = SeedPlan::new(12);
        let mut planner = FftPlanner::new();
        let mut prods = Vec::new();
        let mut totals = Vec::new();
        for i in 0..20_000 {
            let x = gen.generate(&mut plan.rng(StreamTag::Test, i), &mut planner);
            prods.push(x[3] * x[4]);
            totals.push(x.iter().sum::<f64>().powi(2));
        }
        let m = prods.iter().sum::<f64>() / prods.len() as f64;
        let sd = (prods.iter().map(|x| (x - m).powi(2)).sum::<f64>() / prods.len() as f64).sqrt();
        assert!((m - exact).abs() < 4.0 * sd / (prods.len() as f64).sqrt(), "{m}");
        let var = totals.iter().sum::<f64>() / totals.len() as f64;
        let target = 32f64.powf(1.4);
        assert!((var - target).abs() < 4.0 * target * (2.0 / totals.len() as f64).sqrt());
    }

    #[test]
    fn toeplitz_fallback_matches_autocovariance() {
        let l = match FgnGenerator::new(0.3, 0.5, 4).unwrap().method {
            FgnMethod::Circulant(_) => {
                let cov = DMatrix::from_fn(4, 4, |i, j| fgn_autocov(0.3, 0.5, i.abs_diff(j)));
                factor_with_jitter(&cov).unwrap().0
            }
            FgnMethod::Toeplitz(l) => l,
        };
        let back = &l * l.transpose();
        for i in 0..4 {
            for j in 0..4 {
                assert!((back[(i, j)] - fgn_autocov(0.3, 0.5, i.abs_diff(j))).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn substep_rejects_other_noises() {
        let m = OuModel::new(1.0, 1.0, 4, NoiseSpec::sub_fbm(0.3).unwrap()).unwrap();
        assert!(SubstepSampler::new(&m, 8).is_err());
        assert!(SubstepSampler::new(&brownian(4), 0).is_err());
    }

    #[test]
    fn substep_brownian_mean_b_n() {
        let m = brownian(16);
        let exact = gram_matrix(&m).unwrap().mean_b_n();
        let s = SubstepSampler::new(&m, 64).unwrap();
        let b: Vec<f64> = s.map_replicates(&SeedPlan::new(21), 20_000, |_, p| crate::estimator::b_n(p).unwrap());
        let mean = b.iter().sum::<f64>() / b.len() as f64;
        let sd = (b.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (b.len() - 1) as f64).sqrt();
        assert!((mean - exact).abs() < 4.0 * sd / (b.len() as f64).sqrt(), "{mean} vs {exact}");
        let one = ou_path_substep(&m, 64, 21).unwrap();
        assert_eq!(one.values.len(), 16);
        assert_eq!(one.method, SamplerMethod::SubstepEuler);
    }
}
