//! Run configuration files (TOML).
//!
//! Parsing never stops at the first problem: every section is read, each
//! violation is recorded with its key path, and the caller gets either a fully
//! resolved [`RunConfig`] or the complete list of [`ConfigIssue`]s.

use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};

use navslip_core::basis::CertificationTolerances;
use navslip_core::operators::ConvectionPath;
use navslip_core::{DomainSpec, GridResolution, PhysicsParams, Scheme};
use serde::Serialize;
use toml::{Table, Value};

use crate::error::CliError;

pub const CONFIG_FORMAT_VERSION: i64 = 1;

/// One validation failure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfigIssue {
    /// Dotted key path, e.g. `physics.damping_exponent`.
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MmsCaseId {
    HarmonicPair,
    SingleDecay,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ForcingSpec {
    None,
    StaticMode { mode: usize, amplitude: f64 },
    Mms { case: MmsCaseId, rate: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialSpec {
    Zero,
    Modes {
        modes: Vec<usize>,
        values: Vec<f64>,
    },
    Random {
        seed: u64,
        decay: f64,
        amplitude: f64,
    },
    /// Analytic smooth field (torus only).
    Smooth,
    /// Analytic field with an algebraically decaying spectrum (torus only).
    Rough,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeSpec {
    pub final_time: f64,
    /// `None`: chosen automatically.
    pub dt: Option<f64>,
    pub scheme: Scheme,
    pub picard_tol: f64,
    pub picard_max_iter: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputSpec {
    /// Left out of the manifest so that runs written to different places
    /// produce identical manifests.
    #[serde(skip_serializing)]
    pub directory: PathBuf,
    pub record_every: usize,
    pub csv: bool,
    pub json: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudySpec {
    pub schemes: Vec<Scheme>,
    pub dts: Vec<f64>,
    pub rk4_dts: Vec<f64>,
    pub mode_counts: Vec<usize>,
    pub epsilons: Vec<f64>,
    pub seed: u64,
    /// Initial field of spatial studies; only smooth data is judged pass/fail.
    pub field: AnalyticField,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AnalyticField {
    Smooth,
    Rough,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationSpec {
    pub certification: CertificationTolerances,
    pub energy_rel_tol: f64,
    pub monotone_rel_tol: f64,
}

/// A validated run description with every default filled in.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub format_version: i64,
    pub domain: DomainSpec,
    pub modes: usize,
    pub resolution: GridResolution,
    pub convection: ConvectionPath,
    pub params: PhysicsParams,
    pub time: TimeSpec,
    pub forcing: ForcingSpec,
    pub initial: InitialSpec,
    pub output: OutputSpec,
    pub study: StudySpec,
    pub verification: VerificationSpec,
}

/// Read and validate a configuration file.
pub fn parse_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::ConfigRead {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    parse_config_str(&text).map_err(CliError::Invalid)
}

/// Validate configuration text.
pub fn parse_config_str(text: &str) -> Result<RunConfig, Vec<ConfigIssue>> {
    let root: Table = text.parse().map_err(|e: toml::de::Error| {
        vec![ConfigIssue {
            path: "<document>".into(),
            message: e.message().trim().to_string(),
        }]
    })?;
    let mut p = Parser::default();
    let cfg = p.run(&root);
    match cfg {
        Some(cfg) if p.issues.is_empty() => Ok(cfg),
        _ => Err(p.issues),
    }
}

const SECTIONS: &[&str] = &[
    "format_version",
    "domain",
    "discretization",
    "physics",
    "time",
    "forcing",
    "initial",
    "output",
    "study",
    "verification",
];

/// Symbols shown next to key suggestions.
fn symbol(key: &str) -> Option<&'static str> {
    match key {
        "viscosity" => Some("μ"),
        "damping_coefficient" => Some("ϑ"),
        "damping_exponent" => Some("β"),
        "friction" => Some("α"),
        "final_time" => Some("T"),
        _ => None,
    }
}

fn suggest(unknown: &str, known: &[&str]) -> Option<String> {
    known
        .iter()
        .map(|k| (strsim::jaro_winkler(unknown, k), *k))
        .filter(|(score, _)| *score > 0.8)
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, k)| match symbol(k) {
            Some(s) => format!("{s}/{k}"),
            None => k.to_string(),
        })
}

#[derive(Default)]
struct Parser {
    issues: Vec<ConfigIssue>,
}

/// Typed access to one table that remembers which keys were asked for.
struct Section<'t> {
    name: &'static str,
    table: Option<&'t Table>,
    known: Vec<&'static str>,
}

impl Parser {
    fn issue(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.issues.push(ConfigIssue {
            path: path.into(),
            message: message.into(),
        });
    }

    fn section<'t>(&mut self, root: &'t Table, name: &'static str, required: bool) -> Section<'t> {
        let table = match root.get(name) {
            Some(Value::Table(t)) => Some(t),
            Some(_) => {
                self.issue(name, "expected a table");
                None
            }
            None => {
                if required {
                    self.issue(name, "required section is missing");
                }
                None
            }
        };
        Section {
            name,
            table,
            known: Vec::new(),
        }
    }

    fn finish(&mut self, s: Section<'_>) {
        let Some(t) = s.table else { return };
        for key in t.keys() {
            if !s.known.contains(&key.as_str()) {
                let mut msg = "unknown key".to_string();
                if let Some(k) = suggest(key, &s.known) {
                    msg.push_str(&format!("; did you mean `{k}`?"));
                }
                self.issue(format!("{}.{key}", s.name), msg);
            }
        }
    }

    fn get<'t>(&mut self, s: &mut Section<'t>, key: &'static str) -> Option<&'t Value> {
        s.known.push(key);
        s.table.and_then(|t| t.get(key))
    }

    fn float(&mut self, s: &mut Section<'_>, key: &'static str) -> Option<f64> {
        let v = self.get(s, key)?;
        match v {
            Value::Float(f) => Some(*f),
            Value::Integer(i) => Some(*i as f64),
            _ => {
                self.issue(format!("{}.{key}", s.name), "expected a number");
                None
            }
        }
    }

    fn required_float(&mut self, s: &mut Section<'_>, key: &'static str) -> Option<f64> {
        let v = self.float(s, key);
        if v.is_none() && s.table.is_some_and(|t| !t.contains_key(key)) {
            self.issue(format!("{}.{key}", s.name), "required key is missing");
        }
        v
    }

    fn uint(&mut self, s: &mut Section<'_>, key: &'static str) -> Option<u64> {
        let v = self.get(s, key)?;
        match v {
            Value::Integer(i) if *i >= 0 => Some(*i as u64),
            _ => {
                self.issue(format!("{}.{key}", s.name), "expected a non-negative integer");
                None
            }
        }
    }

    fn string(&mut self, s: &mut Section<'_>, key: &'static str) -> Option<String> {
        let v = self.get(s, key)?;
        match v {
            Value::String(x) => Some(x.clone()),
            _ => {
                self.issue(format!("{}.{key}", s.name), "expected a string");
                None
            }
        }
    }

    fn array<T>(
        &mut self,
        s: &mut Section<'_>,
        key: &'static str,
        what: &str,
        item: impl Fn(&Value) -> Option<T>,
    ) -> Option<Vec<T>> {
        let v = self.get(s, key)?;
        let parsed = match v {
            Value::Array(items) => items.iter().map(&item).collect::<Option<Vec<T>>>(),
            _ => None,
        };
        if parsed.is_none() {
            self.issue(format!("{}.{key}", s.name), format!("expected an array of {what}"));
        }
        parsed
    }

    fn floats(&mut self, s: &mut Section<'_>, key: &'static str) -> Option<Vec<f64>> {
        self.array(s, key, "numbers", |v| match v {
            Value::Float(f) => Some(*f),
            Value::Integer(i) => Some(*i as f64),
            _ => None,
        })
    }

    fn uints(&mut self, s: &mut Section<'_>, key: &'static str) -> Option<Vec<usize>> {
        self.array(s, key, "non-negative integers", |v| match v {
            Value::Integer(i) if *i >= 0 => Some(*i as usize),
            _ => None,
        })
    }

    /// Record `message` unless `ok`.
    fn check(&mut self, ok: bool, s: &Section<'_>, key: &str, message: String) -> bool {
        if !ok {
            self.issue(format!("{}.{key}", s.name), message);
        }
        ok
    }

    fn run(&mut self, root: &Table) -> Option<RunConfig> {
        for key in root.keys() {
            if !SECTIONS.contains(&key.as_str()) {
                let mut msg = "unknown key".to_string();
                if let Some(k) = suggest(key, SECTIONS) {
                    msg.push_str(&format!("; did you mean `{k}`?"));
                }
                self.issue(key.clone(), msg);
            }
        }
        let version = match root.get("format_version") {
            Some(Value::Integer(v)) => Some(*v),
            Some(_) => {
                self.issue("format_version", "expected an integer");
                None
            }
            None => {
                self.issue("format_version", "required key is missing");
                None
            }
        };
        if let Some(v) = version {
            if v != CONFIG_FORMAT_VERSION {
                self.issue(
                    "format_version",
                    format!("unsupported version {v}; this build reads version {CONFIG_FORMAT_VERSION}"),
                );
            }
        }

        let domain = self.domain(root);
        let (modes, resolution, convection) = self.discretization(root);
        let params = self.physics(root);
        let time = self.time(root);
        let forcing = self.forcing(root, modes);
        let initial = self.initial(root, modes, domain.as_ref());
        let output = self.output(root);
        let study = self.study(root);
        let verification = self.verification(root);
        Some(RunConfig {
            format_version: version?,
            domain: domain?,
            modes: modes?,
            resolution: resolution?,
            convection: convection?,
            params: params?,
            time: time?,
            forcing: forcing?,
            initial: initial?,
            output: output?,
            study: study?,
            verification: verification?,
        })
    }

    fn domain(&mut self, root: &Table) -> Option<DomainSpec> {
        let mut s = self.section(root, "domain", true);
        let geometry = self.string(&mut s, "geometry");
        if s.table.is_some_and(|t| !t.contains_key("geometry")) {
            self.issue("domain.geometry", "required key is missing");
        }
        let lengths = self.floats(&mut s, "lengths");
        let half_height = self.float(&mut s, "half_height");
        let friction = self.float(&mut s, "friction");
        let domain = match geometry.as_deref() {
            Some("torus") => {
                for (key, v) in [("half_height", half_height), ("friction", friction)] {
                    if v.is_some() {
                        self.issue(format!("domain.{key}"), "only valid for geometry = \"slab\"");
                    }
                }
                let l = lengths.unwrap_or_else(|| vec![2.0 * PI; 3]);
                let ok = self.check(
                    l.len() == 3,
                    &s,
                    "lengths",
                    format!("torus needs 3 lengths, got {}", l.len()),
                );
                let ok = ok
                    && self.check(
                        l.iter().all(|x| x.is_finite() && *x > 0.0),
                        &s,
                        "lengths",
                        "lengths must be positive".into(),
                    );
                ok.then(|| DomainSpec::Torus {
                    periods: [l[0], l[1], l[2]],
                })
            }
            Some("slab") => {
                let l = lengths.unwrap_or_else(|| vec![2.0 * PI; 2]);
                let h = half_height.unwrap_or(1.0);
                let alpha = friction.unwrap_or(1.0);
                let mut ok = self.check(
                    l.len() == 2,
                    &s,
                    "lengths",
                    format!("slab needs 2 lengths, got {}", l.len()),
                );
                ok &= self.check(
                    l.iter().all(|x| x.is_finite() && *x > 0.0),
                    &s,
                    "lengths",
                    "lengths must be positive".into(),
                );
                ok &= self.check(
                    h.is_finite() && h > 0.0,
                    &s,
                    "half_height",
                    format!("h > 0 required, got {h}"),
                );
                ok &= self.check(
                    alpha.is_finite() && alpha >= 0.0,
                    &s,
                    "friction",
                    format!("α ≥ 0 required, got {alpha}"),
                );
                ok.then(|| DomainSpec::Slab {
                    periods: [l[0], l[1]],
                    half_height: h,
                    friction: alpha,
                })
            }
            Some(other) => {
                self.issue(
                    "domain.geometry",
                    format!("expected \"torus\" or \"slab\", got \"{other}\""),
                );
                None
            }
            None => None,
        };
        self.finish(s);
        domain
    }

    #[allow(clippy::type_complexity)]
    fn discretization(&mut self, root: &Table) -> (Option<usize>, Option<GridResolution>, Option<ConvectionPath>) {
        let mut s = self.section(root, "discretization", true);
        let modes = self.uint(&mut s, "modes").map(|m| m as usize);
        if s.table.is_some_and(|t| !t.contains_key("modes")) {
            self.issue("discretization.modes", "required key is missing");
        }
        let modes = modes.filter(|m| self.check(*m >= 1, &s, "modes", "at least one mode required".into()));
        let os = self.float(&mut s, "oversampling").unwrap_or(2.0);
        let os_ok = self.check(
            os.is_finite() && os >= 1.0,
            &s,
            "oversampling",
            format!("oversampling ≥ 1 required, got {os}"),
        );
        let grid = self.uints(&mut s, "grid");
        let grid_ok = match &grid {
            Some(g) => self.check(
                g.len() == 3 && g.iter().all(|n| *n >= 1),
                &s,
                "grid",
                "expected three positive node counts".into(),
            ),
            None => true,
        };
        let convection = match self.string(&mut s, "convection").as_deref() {
            None | Some("transform") => Some(ConvectionPath::Transform),
            Some("tensor") => Some(ConvectionPath::Tensor),
            Some(other) => {
                self.issue(
                    "discretization.convection",
                    format!("expected \"transform\" or \"tensor\", got \"{other}\""),
                );
                None
            }
        };
        self.finish(s);
        let resolution = (os_ok && grid_ok).then(|| GridResolution {
            oversampling: os,
            nodes: grid.map(|g| [g[0], g[1], g[2]]),
        });
        (modes, resolution, convection)
    }

    fn physics(&mut self, root: &Table) -> Option<PhysicsParams> {
        let mut s = self.section(root, "physics", true);
        let mu = self.required_float(&mut s, "viscosity");
        let theta = self.float(&mut s, "damping_coefficient").unwrap_or(0.0);
        let beta = self.float(&mut s, "damping_exponent").unwrap_or(3.0);
        let mut ok = mu.is_some();
        if let Some(mu) = mu {
            ok &= self.check(
                mu.is_finite() && mu > 0.0,
                &s,
                "viscosity",
                format!("μ > 0 required, got {mu}"),
            );
        }
        ok &= self.check(
            theta.is_finite() && theta >= 0.0,
            &s,
            "damping_coefficient",
            format!("ϑ ≥ 0 required, got {theta}"),
        );
        ok &= self.check(
            beta.is_finite() && beta >= 1.0,
            &s,
            "damping_exponent",
            format!("β ≥ 1 required, got {beta}"),
        );
        self.finish(s);
        ok.then(|| PhysicsParams {
            viscosity: mu.unwrap_or_default(),
            damping_coefficient: theta,
            damping_exponent: beta,
        })
    }

    fn scheme(&mut self, path: String, name: &str) -> Option<Scheme> {
        match name {
            "imex_cn" => Some(Scheme::ImexCn),
            "rk4_explicit" | "rk4" => Some(Scheme::Rk4Explicit),
            other => {
                self.issue(
                    path,
                    format!("expected \"imex_cn\" or \"rk4_explicit\", got \"{other}\""),
                );
                None
            }
        }
    }

    fn time(&mut self, root: &Table) -> Option<TimeSpec> {
        let mut s = self.section(root, "time", true);
        let t = self.required_float(&mut s, "final_time");
        let dt = self.float(&mut s, "dt");
        let scheme = match self.string(&mut s, "scheme") {
            Some(name) => self.scheme("time.scheme".into(), &name),
            None => Some(Scheme::ImexCn),
        };
        let tol = self.float(&mut s, "picard_tol").unwrap_or(1e-10);
        let iters = self.uint(&mut s, "picard_max_iter").unwrap_or(50) as usize;
        let mut ok = t.is_some() && scheme.is_some();
        if let Some(t) = t {
            ok &= self.check(
                t.is_finite() && t > 0.0,
                &s,
                "final_time",
                format!("T > 0 required, got {t}"),
            );
            if let Some(dt) = dt {
                ok &= self.check(
                    dt.is_finite() && dt > 0.0 && dt < t,
                    &s,
                    "dt",
                    format!("0 < dt < T required, got dt = {dt}, T = {t}"),
                );
            }
        }
        ok &= self.check(
            tol.is_finite() && tol > 0.0,
            &s,
            "picard_tol",
            format!("must be positive, got {tol}"),
        );
        ok &= self.check(iters >= 1, &s, "picard_max_iter", "must be at least 1".into());
        self.finish(s);
        ok.then(|| TimeSpec {
            final_time: t.unwrap_or_default(),
            dt,
            scheme: scheme.unwrap_or(Scheme::ImexCn),
            picard_tol: tol,
            picard_max_iter: iters,
        })
    }

    fn forcing(&mut self, root: &Table, modes: Option<usize>) -> Option<ForcingSpec> {
        let mut s = self.section(root, "forcing", false);
        let kind = self.string(&mut s, "kind");
        let mode = self.uint(&mut s, "mode").map(|m| m as usize);
        let amplitude = self.float(&mut s, "amplitude");
        let case = self.string(&mut s, "case");
        let rate = self.float(&mut s, "rate");
        let out = match kind.as_deref().unwrap_or("none") {
            "none" => Some(ForcingSpec::None),
            "static_mode" => match mode {
                Some(mode) => {
                    let ok = modes.is_none_or(|m| {
                        self.check(
                            mode < m,
                            &s,
                            "mode",
                            format!("mode index {mode} outside a basis of {m} modes"),
                        )
                    });
                    ok.then(|| ForcingSpec::StaticMode {
                        mode,
                        amplitude: amplitude.unwrap_or(1.0),
                    })
                }
                None => {
                    self.issue("forcing.mode", "required when kind = \"static_mode\"");
                    None
                }
            },
            "mms" => {
                let case = match case.as_deref().unwrap_or("harmonic_pair") {
                    "harmonic_pair" => Some(MmsCaseId::HarmonicPair),
                    "single_decay" => Some(MmsCaseId::SingleDecay),
                    other => {
                        self.issue(
                            "forcing.case",
                            format!("expected \"harmonic_pair\" or \"single_decay\", got \"{other}\""),
                        );
                        None
                    }
                };
                let needed = if case == Some(MmsCaseId::HarmonicPair) { 2 } else { 1 };
                let span_ok = modes.is_none_or(|m| {
                    self.check(
                        m >= needed,
                        &s,
                        "case",
                        format!("case needs {needed} modes, basis has {m}"),
                    )
                });
                case.filter(|_| span_ok).map(|case| ForcingSpec::Mms {
                    case,
                    rate: rate.unwrap_or(1.0),
                })
            }
            other => {
                self.issue(
                    "forcing.kind",
                    format!("expected \"none\", \"static_mode\" or \"mms\", got \"{other}\""),
                );
                None
            }
        };
        self.finish(s);
        out
    }

    fn initial(&mut self, root: &Table, modes: Option<usize>, domain: Option<&DomainSpec>) -> Option<InitialSpec> {
        let mut s = self.section(root, "initial", false);
        let kind = self.string(&mut s, "kind");
        let indices = self.uints(&mut s, "modes");
        let values = self.floats(&mut s, "values");
        let seed = self.uint(&mut s, "seed").unwrap_or(0);
        let decay = self.float(&mut s, "decay").unwrap_or(1.0);
        let amplitude = self.float(&mut s, "amplitude").unwrap_or(1.0);
        let out = match kind.as_deref().unwrap_or("zero") {
            "zero" => Some(InitialSpec::Zero),
            "modes" => {
                let (i, v) = (indices.unwrap_or_default(), values.unwrap_or_default());
                let mut ok = self.check(
                    i.len() == v.len(),
                    &s,
                    "values",
                    format!("{} values for {} mode indices", v.len(), i.len()),
                );
                if let Some(m) = modes {
                    ok &= self.check(
                        i.iter().all(|k| *k < m),
                        &s,
                        "modes",
                        format!("mode indices must be below {m}"),
                    );
                }
                ok.then_some(InitialSpec::Modes { modes: i, values: v })
            }
            "random" => {
                let ok = self.check(
                    amplitude.is_finite() && amplitude >= 0.0,
                    &s,
                    "amplitude",
                    format!("must be non-negative, got {amplitude}"),
                ) & self.check(decay.is_finite(), &s, "decay", "must be finite".into());
                ok.then_some(InitialSpec::Random { seed, decay, amplitude })
            }
            k @ ("smooth" | "rough") => {
                let torus = domain.is_none_or(|d| d.is_torus());
                self.check(
                    torus,
                    &s,
                    "kind",
                    format!("\"{k}\" initial data is defined on the torus only"),
                )
                .then_some(if k == "smooth" {
                    InitialSpec::Smooth
                } else {
                    InitialSpec::Rough
                })
            }
            other => {
                self.issue(
                    "initial.kind",
                    format!("expected \"zero\", \"modes\", \"random\", \"smooth\" or \"rough\", got \"{other}\""),
                );
                None
            }
        };
        self.finish(s);
        out
    }

    fn output(&mut self, root: &Table) -> Option<OutputSpec> {
        let mut s = self.section(root, "output", false);
        let dir = self.string(&mut s, "directory").unwrap_or_else(|| "navslip-out".into());
        let every = self.uint(&mut s, "record_every").unwrap_or(1) as usize;
        let formats = self
            .array(&mut s, "formats", "strings", |v| v.as_str().map(str::to_string))
            .unwrap_or_else(|| vec!["csv".into(), "json".into()]);
        let mut ok = self.check(every >= 1, &s, "record_every", "must be at least 1".into());
        for f in &formats {
            ok &= self.check(
                f == "csv" || f == "json",
                &s,
                "formats",
                format!("unknown format \"{f}\"; expected \"csv\" or \"json\""),
            );
        }
        self.finish(s);
        ok.then(|| OutputSpec {
            directory: PathBuf::from(dir),
            record_every: every,
            csv: formats.iter().any(|f| f == "csv"),
            json: formats.iter().any(|f| f == "json"),
        })
    }

    fn study(&mut self, root: &Table) -> Option<StudySpec> {
        let mut s = self.section(root, "study", false);
        let schemes = match self.array(&mut s, "schemes", "strings", |v| v.as_str().map(str::to_string)) {
            Some(names) => names
                .iter()
                .map(|n| self.scheme("study.schemes".into(), n))
                .collect::<Option<Vec<_>>>(),
            None => Some(vec![Scheme::ImexCn, Scheme::Rk4Explicit]),
        };
        let dts = self
            .floats(&mut s, "dts")
            .unwrap_or_else(|| vec![0.04, 0.02, 0.01, 0.005]);
        let rk4_dts = self
            .floats(&mut s, "rk4_dts")
            .unwrap_or_else(|| vec![0.2, 0.1, 0.05, 0.025]);
        let mode_counts = self.uints(&mut s, "mode_counts").unwrap_or_else(|| vec![16, 32, 64]);
        let epsilons = self
            .floats(&mut s, "epsilons")
            .unwrap_or_else(|| vec![1e-3, 5e-4, 2.5e-4]);
        let seed = self.uint(&mut s, "seed").unwrap_or(0);
        let field = match self.string(&mut s, "field").as_deref() {
            None | Some("smooth") => Some(AnalyticField::Smooth),
            Some("rough") => Some(AnalyticField::Rough),
            Some(other) => {
                self.issue(
                    "study.field",
                    format!("expected \"smooth\" or \"rough\", got \"{other}\""),
                );
                None
            }
        };
        let mut ok = true;
        for (key, v) in [("dts", &dts), ("rk4_dts", &rk4_dts), ("epsilons", &epsilons)] {
            ok &= self.check(
                v.iter().all(|x| x.is_finite() && *x >= 0.0),
                &s,
                key,
                "values must be finite and non-negative".into(),
            );
        }
        ok &= self.check(
            mode_counts.windows(2).all(|w| w[1] > w[0]) && mode_counts.first().is_some_and(|m| *m >= 1),
            &s,
            "mode_counts",
            "mode counts must be positive and increasing".into(),
        );
        self.finish(s);
        let schemes = schemes?;
        let field = field?;
        ok.then_some(StudySpec {
            schemes,
            dts,
            rk4_dts,
            mode_counts,
            epsilons,
            seed,
            field,
        })
    }

    fn verification(&mut self, root: &Table) -> Option<VerificationSpec> {
        let mut s = self.section(root, "verification", false);
        let mut tol = |p: &mut Self, key: &'static str, default: f64| {
            let v = p.float(&mut s, key).unwrap_or(default);
            (v.is_finite() && v > 0.0).then_some(v).or_else(|| {
                p.issue(format!("verification.{key}"), format!("must be positive, got {v}"));
                None
            })
        };
        let div = tol(self, "divergence_tol", 1e-8);
        let normal = tol(self, "normal_trace_tol", 1e-8);
        let slip = tol(self, "slip_tol", 1e-6);
        let gram = tol(self, "gram_tol", 1e-10);
        let energy = tol(self, "energy_rel_tol", 1e-8);
        let monotone = tol(self, "monotone_rel_tol", 1e-12);
        self.finish(s);
        Some(VerificationSpec {
            certification: CertificationTolerances {
                divergence: div?,
                normal_trace: normal?,
                slip: slip?,
                gram: gram?,
            },
            energy_rel_tol: energy?,
            monotone_rel_tol: monotone?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
format_version = 1

[domain]
geometry = "torus"

[discretization]
modes = 16

[physics]
viscosity = 0.1

[time]
final_time = 1.0
"#;

    fn issues(text: &str) -> Vec<ConfigIssue> {
        parse_config_str(text).unwrap_err()
    }

    #[test]
    fn minimal_torus_gets_defaults() {
        let c = parse_config_str(MINIMAL).unwrap();
        assert_eq!(c.domain, DomainSpec::Torus { periods: [2.0 * PI; 3] });
        assert_eq!(c.modes, 16);
        assert_eq!(c.resolution, GridResolution::default());
        assert_eq!(c.params.damping_coefficient, 0.0);
        assert_eq!(c.params.damping_exponent, 3.0);
        assert_eq!(c.time.scheme, Scheme::ImexCn);
        assert_eq!(c.time.dt, None);
        assert_eq!(c.forcing, ForcingSpec::None);
        assert_eq!(c.initial, InitialSpec::Zero);
        assert_eq!(c.output.record_every, 1);
        assert!(c.output.csv && c.output.json);
        assert_eq!(c.verification.certification.slip, 1e-6);
    }

    #[test]
    fn beta_below_one_names_the_key() {
        let text = MINIMAL.replace("viscosity = 0.1", "viscosity = 0.1\ndamping_exponent = 0.5");
        let i = issues(&text);
        assert_eq!(i.len(), 1);
        assert_eq!(i[0].path, "physics.damping_exponent");
        assert!(i[0].message.contains("β ≥ 1 required"));
    }

    #[test]
    fn misspelled_key_gets_a_suggestion() {
        let text = MINIMAL.replace("viscosity = 0.1", "viscosity = 0.1\nviscocity = 0.2");
        let i = issues(&text);
        assert_eq!(i[0].path, "physics.viscocity");
        assert!(i[0].message.contains("μ/viscosity"), "{}", i[0].message);
    }

    #[test]
    fn all_violations_are_reported() {
        let text = r#"
format_version = 1
[domain]
geometry = "slab"
friction = -1.0
[discretization]
modes = 0
[physics]
viscosity = 0.0
damping_coefficient = -2.0
[time]
final_time = 1.0
dt = 2.0
[output]
colour = "blue"
"#;
        let paths: Vec<String> = issues(text).into_iter().map(|i| i.path).collect();
        for p in [
            "domain.friction",
            "discretization.modes",
            "physics.viscosity",
            "physics.damping_coefficient",
            "time.dt",
            "output.colour",
        ] {
            assert!(paths.iter().any(|x| x == p), "{p} missing from {paths:?}");
        }
    }

    #[test]
    fn missing_sections_and_version() {
        let i = issues("[domain]\ngeometry = \"torus\"\n");
        let paths: Vec<&str> = i.iter().map(|i| i.path.as_str()).collect();
        assert!(paths.contains(&"format_version"));
        assert!(paths.contains(&"discretization"));
        assert!(paths.contains(&"physics"));
        assert!(paths.contains(&"time"));
        let i = issues(&MINIMAL.replace("format_version = 1", "format_version = 2"));
        assert!(i[0].message.contains("unsupported version 2"));
    }

    #[test]
    fn geometry_specific_keys() {
        let text = MINIMAL.replace("geometry = \"torus\"", "geometry = \"torus\"\nfriction = 1.0");
        assert_eq!(issues(&text)[0].path, "domain.friction");
        let text = MINIMAL.replace("geometry = \"torus\"", "geometry = \"slab\"") + "[initial]\nkind = \"smooth\"\n";
        assert_eq!(issues(&text)[0].path, "initial.kind");
    }

    #[test]
    fn forcing_and_initial_indices_are_bounded() {
        let text = MINIMAL.to_string()
            + "[forcing]\nkind = \"static_mode\"\nmode = 40\n[initial]\nkind = \"modes\"\nmodes = [0, 99]\nvalues = [1.0, 2.0]\n";
        let paths: Vec<String> = issues(&text).into_iter().map(|i| i.path).collect();
        assert_eq!(paths, vec!["forcing.mode", "initial.modes"]);
    }

    #[test]
    fn malformed_toml_is_one_issue() {
        let i = issues("format_version = = 1");
        assert_eq!(i.len(), 1);
        assert_eq!(i[0].path, "<document>");
    }

    #[test]
    fn shipped_configs_parse() {
        let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
        for name in ["torus_default.toml", "slab_default.toml"] {
            parse_config(&root.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }
}
