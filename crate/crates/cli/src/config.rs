//! INI run configuration.
//!
//! ```ini
//! seed = 42
//! workers = 4
//! out = results
//!
//! [model]
//! theta = 1
//! h = 1
//! n = 256
//! family = sub_fbm
//! hurst = 0.3
//!
//! [monte_carlo]
//! replicates = 100000
//! method = cholesky_exact
//! ns = 128, 256, 512, 1024
//! ```
//!
//! Every key is optional at parse time; each subcommand asks for the keys it
//! needs and reports the first one missing. Unknown sections and keys are
//! rejected.

use std::collections::BTreeMap;
use std::fmt::{Display, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use fou_core::berry_esseen::{AuditConfig, AuditKind, MonteCarloConfig};
use fou_core::covariance::OuModel;
use fou_core::kernels::{Majorant, NoiseFamily, NoiseSpec};
use fou_core::sampler::SamplerMethod;
use ini::Ini;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError(pub String);

impl Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

type Res<T> = std::result::Result<T, ConfigError>;

fn err<T>(msg: impl Into<String>) -> Res<T> {
    Err(ConfigError(msg.into()))
}

fn missing(section: &str, key: &str) -> ConfigError {
    if section.is_empty() {
        ConfigError(format!("missing key `{key}`"))
    } else {
        ConfigError(format!("missing key `{key}` in section [{section}]"))
    }
}

/// Sampler choice as written in a config file.
fn parse_method(s: &str) -> Result<SamplerMethod, String> {
    match s {
        "cholesky_exact" => Ok(SamplerMethod::CholeskyExact),
        "substep_euler" => Ok(SamplerMethod::SubstepEuler),
        _ => Err(format!("unknown sampler `{s}` (expected cholesky_exact or substep_euler)")),
    }
}

fn method_name(m: SamplerMethod) -> &'static str {
    match m {
        SamplerMethod::CholeskyExact => "cholesky_exact",
        SamplerMethod::SubstepEuler => "substep_euler",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Method(pub SamplerMethod);

impl FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        parse_method(s).map(Method)
    }
}

impl Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(method_name(self.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Family(pub NoiseFamily);

impl FromStr for Family {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        s.parse().map(Family)
    }
}

impl Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.0.name())
    }
}

/// Comma-separated list.
#[derive(Debug, Clone, PartialEq)]
pub struct List<T>(pub Vec<T>);

impl<T: FromStr> FromStr for List<T>
where
    T::Err: Display,
{
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .map(|p| p.trim().parse::<T>().map_err(|e| format!("`{}`: {e}", p.trim())))
            .collect::<Result<Vec<T>, String>>()
            .map(List)
    }
}

impl<T: Display> Display for List<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|v| v.to_string()).collect();
        f.write_str(&parts.join(", "))
    }
}

/// A float written back in shortest round-trip form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Real(pub f64);

impl FromStr for Real {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
        if v.is_finite() {
            Ok(Real(v))
        } else {
            Err("value must be finite".into())
        }
    }
}

impl Display for Real {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

macro_rules! keyword {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq)]
        pub enum $name { $($variant),+ }

        impl FromStr for $name {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($text => Ok($name::$variant),)+
                    _ => Err(format!("unknown value `{s}` (expected one of {})", [$($text),+].join(", "))),
                }
            }
        }

        impl Display for $name {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.write_str(match self { $($name::$variant => $text),+ })
            }
        }
    };
}

keyword!(CumulantSource { Exact => "exact", MonteCarlo => "monte_carlo" });
keyword!(AuditSuite { Standard => "standard", Custom => "custom" });
keyword!(AuditName {
    StationaryDecay => "stationary_decay",
    NoiseGap => "noise_gap",
    VarianceGap => "variance_gap",
    NoiseGapLongMemory => "noise_gap_long_memory",
    VarianceGapLongMemory => "variance_gap_long_memory",
    DampedPowerHead => "damped_power_head",
    DampedPowerTail => "damped_power_tail",
    DampedPowerTailNegative => "damped_power_tail_negative",
});
keyword!(MajorantName { Product => "product", SumAndBi => "sum_and_bi" });

/// Reads typed values out of one section and remembers what was used.
struct Reader {
    section: String,
    raw: BTreeMap<String, String>,
}

impl Reader {
    fn get<T: FromStr>(&mut self, key: &str) -> Res<Option<T>>
    where
        T::Err: Display,
    {
        match self.raw.remove(key) {
            None => Ok(None),
            Some(text) => text.parse::<T>().map(Some).map_err(|e| {
                ConfigError(format!("invalid value for `{key}` in {}: {e}", self.label()))
            }),
        }
    }

    fn label(&self) -> String {
        if self.section.is_empty() {
            "the top-level section".into()
        } else {
            format!("section [{}]", self.section)
        }
    }

    fn finish(self) -> Res<()> {
        match self.raw.keys().next() {
            None => Ok(()),
            Some(k) => err(format!("unknown key `{k}` in {}", self.label())),
        }
    }
}

/// Appends `key = value` for present values.
struct Emitter<'a>(&'a mut String);

impl Emitter<'_> {
    fn put<T: Display>(&mut self, key: &str, v: &Option<T>) {
        if let Some(v) = v {
            let _ = writeln!(self.0, "{key} = {v}");
        }
    }
}

trait Section: Sized + Default {
    const NAME: &'static str;
    fn read(r: &mut Reader) -> Res<Self>;
    fn write(&self, e: &mut Emitter<'_>);
}

macro_rules! section {
    ($ty:ident, $name:literal, { $($field:ident : $t:ty),+ $(,)? }) => {
        #[derive(Debug, Clone, PartialEq, Default)]
        pub struct $ty { $(pub $field: Option<$t>),+ }

        impl Section for $ty {
            const NAME: &'static str = $name;
            fn read(r: &mut Reader) -> Res<Self> {
                Ok($ty { $($field: r.get(stringify!($field))?),+ })
            }
            fn write(&self, e: &mut Emitter<'_>) {
                $(e.put(stringify!($field), &self.$field);)+
            }
        }

        impl $ty {
            #[allow(dead_code)]
            fn need<T: Clone>(&self, v: &Option<T>, key: &str) -> Res<T> {
                v.clone().ok_or_else(|| missing($name, key))
            }
        }
    };
}

section!(ModelSection, "model", {
    theta: Real,
    h: Real,
    n: usize,
    family: Family,
    hurst: Real,
    hprime: Real,
    k: Real,
    a: Real,
    b: Real,
});

section!(MonteCarloSection, "monte_carlo", {
    replicates: usize,
    method: Method,
    ns: List<usize>,
    substeps: usize,
});

section!(SimulateSection, "simulate", {
    replicates: usize,
    method: Method,
    substeps: usize,
});

section!(EstimateSection, "estimate", {
    input: String,
    replicates: usize,
    method: Method,
    substeps: usize,
});

section!(CumulantsSection, "cumulants", {
    ns: List<usize>,
    source: CumulantSource,
    replicates: usize,
    batches: usize,
});

section!(AuditSection, "audit", {
    suite: AuditSuite,
    kind: AuditName,
    hurst: Real,
    beta: Real,
    theta: Real,
    h: Real,
    extents: List<Real>,
});

section!(KernelsSection, "kernels", {
    majorant: MajorantName,
    c1: Real,
    c2: Real,
    levels: List<Real>,
});

section!(ToleranceSection, "tolerance", {
    sigma_b: Real,
});

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub model: Option<ModelSection>,
    pub monte_carlo: Option<MonteCarloSection>,
    pub simulate: Option<SimulateSection>,
    pub estimate: Option<EstimateSection>,
    pub cumulants: Option<CumulantsSection>,
    pub audit: Option<AuditSection>,
    pub kernels: Option<KernelsSection>,
    pub tolerance: Option<ToleranceSection>,
}

fn read_section<S: Section>(sections: &mut BTreeMap<String, BTreeMap<String, String>>) -> Res<Option<S>> {
    match sections.remove(S::NAME) {
        None => Ok(None),
        Some(raw) => {
            let mut r = Reader {
                section: S::NAME.into(),
                raw,
            };
            let s = S::read(&mut r)?;
            r.finish()?;
            Ok(Some(s))
        }
    }
}

fn write_section<S: Section>(out: &mut String, s: &Option<S>) {
    if let Some(s) = s {
        let _ = writeln!(out, "\n[{}]", S::NAME);
        s.write(&mut Emitter(out));
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Res<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| ConfigError(format!("malformed config: {e}")))?;
        let mut sections: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        for (name, props) in ini.iter() {
            let name = name.unwrap_or("").to_string();
            let entry = sections.entry(name.clone()).or_default();
            for (k, v) in props.iter() {
                if entry.insert(k.to_string(), v.to_string()).is_some() {
                    let place = if name.is_empty() { "top level".to_string() } else { format!("[{name}]") };
                    return err(format!("duplicate key `{k}` at {place}"));
                }
            }
        }
        let mut top = Reader {
            section: String::new(),
            raw: sections.remove("").unwrap_or_default(),
        };
        let cfg = RunConfig {
            seed: top.get("seed")?,
            workers: top.get("workers")?,
            out: top.get("out")?,
            model: read_section(&mut sections)?,
            monte_carlo: read_section(&mut sections)?,
            simulate: read_section(&mut sections)?,
            estimate: read_section(&mut sections)?,
            cumulants: read_section(&mut sections)?,
            audit: read_section(&mut sections)?,
            kernels: read_section(&mut sections)?,
            tolerance: read_section(&mut sections)?,
        };
        top.finish()?;
        if let Some(name) = sections.keys().next() {
            return err(format!("unknown section [{name}]"));
        }
        Ok(cfg)
    }

    /// Canonical text; parsing it gives back an equal config.
    pub fn to_ini(&self) -> String {
        let mut out = String::new();
        let mut e = Emitter(&mut out);
        e.put("seed", &self.seed);
        e.put("workers", &self.workers);
        e.put("out", &self.out.as_ref().map(|p| p.display()));
        write_section(&mut out, &self.model);
        write_section(&mut out, &self.monte_carlo);
        write_section(&mut out, &self.simulate);
        write_section(&mut out, &self.estimate);
        write_section(&mut out, &self.cumulants);
        write_section(&mut out, &self.audit);
        write_section(&mut out, &self.kernels);
        write_section(&mut out, &self.tolerance);
        out
    }

    fn section<'a, S: Section>(s: &'a Option<S>, first_key: &str) -> Res<&'a S> {
        s.as_ref().ok_or_else(|| missing(S::NAME, first_key))
    }

    pub fn noise(&self) -> Res<NoiseSpec> {
        let m = Self::section(&self.model, "family")?;
        m.noise()
    }

    pub fn model(&self) -> Res<OuModel> {
        let m = Self::section(&self.model, "theta")?;
        let theta = m.need(&m.theta, "theta")?.0;
        let h = m.need(&m.h, "h")?.0;
        let n = m.need(&m.n, "n")?;
        let noise = m.noise()?;
        OuModel::new(theta, h, n, noise).map_err(|e| ConfigError(format!("[model]: {e}")))
    }

    pub fn sigma_b_tol(&self) -> f64 {
        self.tolerance
            .as_ref()
            .and_then(|t| t.sigma_b)
            .map_or(1e-10, |r| r.0)
    }

    pub fn monte_carlo(&self, seed: u64, with_ns: bool) -> Res<MonteCarloConfig> {
        let model = self.model()?;
        let s = Self::section(&self.monte_carlo, "replicates")?;
        let replicates = s.need(&s.replicates, "replicates")?;
        let method = s.method.map_or(SamplerMethod::CholeskyExact, |m| m.0);
        let ns = if with_ns { s.need(&s.ns, "ns")?.0 } else { vec![model.n] };
        let substeps = substeps_for(method, s.substeps, "monte_carlo")?;
        let cfg = MonteCarloConfig {
            model,
            replicates,
            seed,
            method,
            ns,
            substeps,
            tol: self.sigma_b_tol(),
        };
        cfg.validated().map_err(|e| ConfigError(format!("[monte_carlo]: {e}")))?;
        Ok(cfg)
    }

    pub fn audits(&self) -> Res<Vec<AuditConfig>> {
        let s = match &self.audit {
            None => return Ok(fou_core::berry_esseen::standard_audits()),
            Some(s) => s,
        };
        if s.suite.unwrap_or(AuditSuite::Standard) == AuditSuite::Standard {
            if let Some(k) = [
                ("kind", s.kind.is_some()),
                ("hurst", s.hurst.is_some()),
                ("beta", s.beta.is_some()),
                ("theta", s.theta.is_some()),
                ("h", s.h.is_some()),
                ("extents", s.extents.is_some()),
            ]
            .iter()
            .find(|(_, set)| *set)
            {
                return err(format!("key `{}` in [audit] needs suite = custom", k.0));
            }
            return Ok(fou_core::berry_esseen::standard_audits());
        }
        let kind = match s.need(&s.kind, "kind")? {
            AuditName::StationaryDecay => AuditKind::StationaryDecay {
                hurst: s.need(&s.hurst, "hurst")?.0,
            },
            AuditName::DampedPowerHead => AuditKind::DampedPowerHead {
                beta: s.need(&s.beta, "beta")?.0,
            },
            AuditName::DampedPowerTail => AuditKind::DampedPowerTail {
                beta: s.need(&s.beta, "beta")?.0,
            },
            AuditName::DampedPowerTailNegative => AuditKind::DampedPowerTailNegative {
                beta: s.need(&s.beta, "beta")?.0,
            },
            AuditName::NoiseGap => AuditKind::NoiseGap { noise: self.noise()? },
            AuditName::VarianceGap => AuditKind::VarianceGap { noise: self.noise()? },
            AuditName::NoiseGapLongMemory => AuditKind::NoiseGapLongMemory { noise: self.noise()? },
            AuditName::VarianceGapLongMemory => AuditKind::VarianceGapLongMemory { noise: self.noise()? },
        };
        Ok(vec![AuditConfig {
            kind,
            theta: s.theta.map_or(1.0, |r| r.0),
            h: s.h.map_or(1.0, |r| r.0),
            extents: s.need(&s.extents, "extents")?.0.into_iter().map(|r| r.0).collect(),
        }])
    }

    pub fn majorant(&self) -> Res<(Majorant, Vec<f64>)> {
        let default_levels: Vec<f64> = (-3..=5).map(|e| 2f64.powi(e)).collect();
        let s = match &self.kernels {
            None => return Ok((Majorant::Product, default_levels)),
            Some(s) => s,
        };
        let majorant = match s.majorant.unwrap_or(MajorantName::Product) {
            MajorantName::Product => {
                if s.c1.is_some() || s.c2.is_some() {
                    return err("keys `c1` and `c2` in [kernels] need majorant = sum_and_bi");
                }
                Majorant::Product
            }
            MajorantName::SumAndBi => Majorant::SumAndBi {
                c1: s.c1.map_or(1.0, |r| r.0),
                c2: s.c2.map_or(1.0, |r| r.0),
            },
        };
        let levels = s
            .levels
            .as_ref()
            .map_or(default_levels, |l| l.0.iter().map(|r| r.0).collect());
        Ok((majorant, levels))
    }
}

/// Substeps are required for the substep sampler and meaningless otherwise.
pub fn substeps_for(method: SamplerMethod, substeps: Option<usize>, section: &str) -> Res<usize> {
    match (method, substeps) {
        (SamplerMethod::SubstepEuler, Some(s)) => Ok(s),
        (SamplerMethod::SubstepEuler, None) => Err(missing(section, "substeps")),
        (SamplerMethod::CholeskyExact, None) => Ok(0),
        (SamplerMethod::CholeskyExact, Some(_)) => {
            err(format!("key `substeps` in [{section}] needs method = substep_euler"))
        }
    }
}

impl ModelSection {
    pub fn noise(&self) -> Res<NoiseSpec> {
        let family = self.family.map_or(NoiseFamily::Fbm, |f| f.0);
        let (used, spec): (&[&str], Res<fou_core::Result<NoiseSpec>>) = match family {
            NoiseFamily::Fbm => (&["hurst"], self.need(&self.hurst, "hurst").map(|h| NoiseSpec::fbm(h.0))),
            NoiseFamily::SubFbm => (&["hurst"], self.need(&self.hurst, "hurst").map(|h| NoiseSpec::sub_fbm(h.0))),
            NoiseFamily::BiFbm | NoiseFamily::SubBiFbm => (&["hprime", "k"], {
                let hp = self.need(&self.hprime, "hprime");
                let k = self.need(&self.k, "k");
                hp.and_then(|hp| {
                    k.map(|k| {
                        if family == NoiseFamily::BiFbm {
                            NoiseSpec::bi_fbm(hp.0, k.0)
                        } else {
                            NoiseSpec::sub_bi_fbm(hp.0, k.0)
                        }
                    })
                })
            }),
            NoiseFamily::GeneralizedFbm => (&["hurst", "a", "b"], {
                let h = self.need(&self.hurst, "hurst");
                let a = self.need(&self.a, "a");
                let b = self.need(&self.b, "b");
                h.and_then(|h| a.and_then(|a| b.map(|b| NoiseSpec::generalized_fbm(h.0, a.0, b.0))))
            }),
        };
        let present = [
            ("hurst", self.hurst.is_some()),
            ("hprime", self.hprime.is_some()),
            ("k", self.k.is_some()),
            ("a", self.a.is_some()),
            ("b", self.b.is_some()),
        ];
        if let Some((k, _)) = present.iter().find(|(k, set)| *set && !used.contains(k)) {
            return err(format!("key `{k}` in [model] does not apply to family {}", family.name()));
        }
        spec?.map_err(|e| ConfigError(format!("[model]: {e}")))
    }
}

impl SimulateSection {
    pub fn method(&self) -> SamplerMethod {
        self.method.map_or(SamplerMethod::CholeskyExact, |m| m.0)
    }

    pub fn require_replicates(&self) -> Res<usize> {
        self.need(&self.replicates, "replicates")
    }
}

impl EstimateSection {
    pub fn method(&self) -> SamplerMethod {
        self.method.map_or(SamplerMethod::CholeskyExact, |m| m.0)
    }

    pub fn require_replicates(&self) -> Res<usize> {
        self.need(&self.replicates, "replicates")
    }
}

impl CumulantsSection {
    pub fn require_ns(&self) -> Res<Vec<usize>> {
        self.need(&self.ns, "ns").map(|l| l.0)
    }

    pub fn require_replicates(&self) -> Res<usize> {
        self.need(&self.replicates, "replicates")
    }
}
