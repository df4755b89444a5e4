//! Run configuration: a TOML document resolved into a fully defaulted [`RunConfig`].
//!
//! Complex numbers are written as `[re, im]`, matrices as arrays of rows of complex numbers.
//! Validation walks the whole document and reports every problem it finds.

use std::fmt;
use std::path::PathBuf;

use num_complex::Complex64;
use serde::Serialize;
use toml::{Table, Value};

use crate::chain::{
    self, Integrator, Monomial, NeighborRule, Observable, ReformatParams, SamplerParams,
    StepParams, Transport,
};
use crate::hilbert::{self, CMatrix};
use crate::model::{FieldMode, ModelSpec};
use crate::oracle;

pub type ComplexPair = [f64; 2];
pub type MatrixRows = Vec<Vec<ComplexPair>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Chain,
    Oracle,
    Both,
}

impl Engine {
    pub fn uses_chain(self) -> bool {
        matches!(self, Engine::Chain | Engine::Both)
    }

    pub fn uses_oracle(self) -> bool {
        matches!(self, Engine::Oracle | Engine::Both)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ReformatPolicy {
    Auto,
    Never,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeConfig {
    pub omega: f64,
    pub current: MatrixRows,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelConfig {
    pub h0: MatrixRows,
    pub modes: Vec<ModeConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InitialConfig {
    pub atomic: Vec<ComplexPair>,
    pub alpha0: Vec<ComplexPair>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainConfig {
    pub n: usize,
    pub eps: f64,
    pub step_cap: f64,
    pub delta_min: f64,
    pub burn_in: usize,
    pub thin: usize,
    pub batches: usize,
    pub reformat: ReformatPolicy,
    pub gate_sigma: f64,
    pub transport: String,
    pub neighbor_rule: String,
    pub integrator: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleConfig {
    pub cutoffs: Vec<usize>,
    pub dt: f64,
    pub tail_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScheduleConfig {
    pub t_final: f64,
    pub record_every: f64,
    pub checkpoint_every: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonomialConfig {
    pub coeff: ComplexPair,
    pub alpha: Vec<u32>,
    pub conj: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObservableConfig {
    pub name: String,
    pub operator: MatrixRows,
    pub poly: Vec<MonomialConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

/// A validated configuration with every default filled in.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub seed: u64,
    pub engine: Engine,
    pub model: ModelConfig,
    pub initial: InitialConfig,
    pub chain: ChainConfig,
    pub oracle: OracleConfig,
    pub schedule: ScheduleConfig,
    pub observables: Vec<ObservableConfig>,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigIssue {
    /// Dotted field path, or `line N, column M` for syntax errors.
    pub location: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigErrors(pub Vec<ConfigIssue>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} configuration error(s):", self.0.len())?;
        for issue in &self.0 {
            writeln!(f, "  {}: {}", issue.location, issue.message)?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

/// Settings applied on top of the document before validation.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

pub const DEFAULT_EPS: f64 = 1e-3;
pub const DEFAULT_N: usize = 20_000;

fn pair(z: Complex64) -> ComplexPair {
    [z.re, z.im]
}

fn complex(p: &ComplexPair) -> Complex64 {
    Complex64::new(p[0], p[1])
}

pub fn rows_to_matrix(rows: &MatrixRows) -> CMatrix {
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.len());
    CMatrix::from_fn(n, m, |i, j| complex(&rows[i][j]))
}

pub fn matrix_to_rows(a: &CMatrix) -> MatrixRows {
    (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| pair(a[(i, j)])).collect())
        .collect()
}

struct Reader {
    issues: Vec<ConfigIssue>,
}

impl Reader {
    fn issue(&mut self, location: impl Into<String>, message: impl Into<String>) {
        self.issues.push(ConfigIssue {
            location: location.into(),
            message: message.into(),
        });
    }

    fn check_keys(&mut self, table: &Table, path: &str, allowed: &[&str]) {
        for key in table.keys() {
            if !allowed.contains(&key.as_str()) {
                let loc = if path.is_empty() {
                    key.clone()
                } else {
                    format!("{path}.{key}")
                };
                self.issue(
                    loc,
                    format!("unknown field (expected one of: {})", allowed.join(", ")),
                );
            }
        }
    }

    fn table<'a>(&mut self, parent: &'a Table, key: &str, path: &str) -> Option<&'a Table> {
        match parent.get(key) {
            None => None,
            Some(Value::Table(t)) => Some(t),
            Some(_) => {
                self.issue(join(path, key), "expected a table");
                None
            }
        }
    }

    fn number(&mut self, v: &Value, loc: &str) -> Option<f64> {
        match v {
            Value::Float(x) if x.is_finite() => Some(*x),
            Value::Integer(i) => Some(*i as f64),
            _ => {
                self.issue(loc, "expected a finite number");
                None
            }
        }
    }

    fn positive(&mut self, t: &Table, key: &str, path: &str, default: Option<f64>) -> Option<f64> {
        let loc = join(path, key);
        let x = match t.get(key) {
            Some(v) => self.number(v, &loc)?,
            None => match default {
                Some(d) => return Some(d),
                None => {
                    self.issue(loc, "missing required field");
                    return None;
                }
            },
        };
        if x <= 0.0 {
            self.issue(loc, format!("must be positive, got {x}"));
            return None;
        }
        Some(x)
    }

    fn count(
        &mut self,
        t: &Table,
        key: &str,
        path: &str,
        default: usize,
        min: usize,
    ) -> Option<usize> {
        let loc = join(path, key);
        match t.get(key) {
            None => Some(default),
            Some(Value::Integer(i)) if *i >= min as i64 => Some(*i as usize),
            Some(_) => {
                self.issue(loc, format!("expected an integer >= {min}"));
                None
            }
        }
    }

    fn choice(
        &mut self,
        t: &Table,
        key: &str,
        path: &str,
        default: &str,
        options: &[&str],
    ) -> Option<String> {
        let loc = join(path, key);
        match t.get(key) {
            None => Some(default.to_string()),
            Some(Value::String(s)) if options.contains(&s.as_str()) => Some(s.clone()),
            Some(_) => {
                self.issue(loc, format!("expected one of: {}", options.join(", ")));
                None
            }
        }
    }

    fn complex(&mut self, v: &Value, loc: &str) -> Option<ComplexPair> {
        match v {
            Value::Array(a) if a.len() == 2 => {
                let re = self.number(&a[0], &format!("{loc}[0]"));
                let im = self.number(&a[1], &format!("{loc}[1]"));
                Some([re?, im?])
            }
            Value::Float(_) | Value::Integer(_) => self.number(v, loc).map(|x| [x, 0.0]),
            _ => {
                self.issue(loc, "expected a complex number [re, im]");
                None
            }
        }
    }

    fn vector(&mut self, v: &Value, loc: &str) -> Option<Vec<ComplexPair>> {
        let Value::Array(items) = v else {
            self.issue(loc, "expected an array of complex numbers");
            return None;
        };
        let out: Vec<_> = items
            .iter()
            .enumerate()
            .map(|(i, x)| self.complex(x, &format!("{loc}[{i}]")))
            .collect();
        out.into_iter().collect()
    }

    fn matrix(&mut self, v: &Value, loc: &str) -> Option<MatrixRows> {
        let Value::Array(rows) = v else {
            self.issue(loc, "expected a matrix (array of rows)");
            return None;
        };
        let parsed: Vec<_> = rows
            .iter()
            .enumerate()
            .map(|(i, r)| self.vector(r, &format!("{loc}[{i}]")))
            .collect();
        let parsed: Vec<_> = parsed.into_iter().collect::<Option<_>>()?;
        let n = parsed.len();
        if n == 0 || parsed.iter().any(|r| r.len() != n) {
            self.issue(
                loc,
                format!(
                    "expected a non-empty square matrix, got {n} rows of lengths {:?}",
                    parsed.iter().map(|r| r.len()).collect::<Vec<_>>()
                ),
            );
            return None;
        }
        Some(parsed)
    }

    fn powers(&mut self, t: &Table, key: &str, loc: &str) -> Option<Vec<u32>> {
        match t.get(key) {
            None => Some(vec![]),
            Some(Value::Array(a)) => a
                .iter()
                .enumerate()
                .map(|(i, x)| match x {
                    Value::Integer(p) if (0..=64).contains(p) => Some(*p as u32),
                    _ => {
                        self.issue(
                            format!("{loc}.{key}[{i}]"),
                            "expected an integer power between 0 and 64",
                        );
                        None
                    }
                })
                .collect::<Vec<_>>()
                .into_iter()
                .collect(),
            Some(_) => {
                self.issue(
                    format!("{loc}.{key}"),
                    "expected an array of integer powers",
                );
                None
            }
        }
    }
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

fn line_col(raw: &str, offset: usize) -> (usize, usize) {
    let before = &raw[..offset.min(raw.len())];
    let line = before.matches('\n').count() + 1;
    let col = before
        .rfind('\n')
        .map_or(before.len(), |p| before.len() - p - 1)
        + 1;
    (line, col)
}

fn named_operator(name: &str, dim: usize) -> Option<CMatrix> {
    match (name, dim) {
        ("identity", d) => Some(CMatrix::identity(d, d)),
        ("sigma_z", 2) => Some(hilbert::pauli_z()),
        ("sigma_minus", 2) => Some(hilbert::sigma_minus()),
        ("sigma_plus", 2) => Some(hilbert::sigma_plus()),
        _ => None,
    }
}

/// Parses and validates a configuration document.
pub fn validate_config(raw: &str, overrides: &Overrides) -> Result<RunConfig, ConfigErrors> {
    let doc: Table = match raw.parse::<Table>() {
        Ok(t) => t,
        Err(e) => {
            let location = match e.span() {
                Some(span) => {
                    let (line, col) = line_col(raw, span.start);
                    format!("line {line}, column {col}")
                }
                None => "document".into(),
            };
            return Err(ConfigErrors(vec![ConfigIssue {
                location,
                message: e.message().to_string(),
            }]));
        }
    };
    let mut r = Reader { issues: Vec::new() };
    r.check_keys(
        &doc,
        "",
        &[
            "seed",
            "engine",
            "model",
            "initial",
            "chain",
            "oracle",
            "schedule",
            "observables",
            "output",
        ],
    );

    let seed = match (overrides.seed, doc.get("seed")) {
        (Some(s), _) => Some(s),
        (None, Some(Value::Integer(i))) if *i >= 0 => Some(*i as u64),
        (None, Some(_)) => {
            r.issue("seed", "expected a non-negative integer");
            None
        }
        (None, None) => {
            r.issue(
                "seed",
                "missing required field (runs must be reproducible; pass --seed or set seed)",
            );
            None
        }
    };
    let engine = match doc.get("engine") {
        None => Some(Engine::Both),
        Some(Value::String(s)) => match s.as_str() {
            "chain" => Some(Engine::Chain),
            "oracle" => Some(Engine::Oracle),
            "both" => Some(Engine::Both),
            _ => {
                r.issue("engine", "expected one of: chain, oracle, both");
                None
            }
        },
        Some(_) => {
            r.issue("engine", "expected one of: chain, oracle, both");
            None
        }
    };

    let model = read_model(&mut r, &doc);
    let dims = model.as_ref().map(|(m, _)| (m.h0.len(), m.modes.len()));
    let initial = read_initial(&mut r, &doc, dims);
    let chain = read_chain(&mut r, &doc);
    let oracle = read_oracle(&mut r, &doc, dims.map(|d| d.1));
    let schedule = read_schedule(&mut r, &doc, chain.as_ref().map(|c| c.eps));
    let observables = read_observables(&mut r, &doc, dims);
    let output = {
        let t = r.table(&doc, "output", "");
        if let Some(t) = t {
            r.check_keys(t, "output", &["dir"]);
        }
        let dir = match t.and_then(|t| t.get("dir")) {
            None => Some(PathBuf::from("out")),
            Some(Value::String(s)) => Some(PathBuf::from(s)),
            Some(_) => {
                r.issue("output.dir", "expected a path string");
                None
            }
        };
        dir.map(|d| OutputConfig {
            dir: overrides.out_dir.clone().unwrap_or(d),
        })
    };

    if !r.issues.is_empty() {
        return Err(ConfigErrors(r.issues));
    }
    let (model, spec) = model.expect("no issues");
    let config = RunConfig {
        seed: seed.expect("no issues"),
        engine: engine.expect("no issues"),
        model,
        initial: initial.expect("no issues"),
        chain: chain.expect("no issues"),
        oracle: oracle.expect("no issues"),
        schedule: schedule.expect("no issues"),
        observables: observables.unwrap_or_else(|| default_observables(spec.dim(), spec.n_modes())),
        output: output.expect("no issues"),
    };
    Ok(config)
}

fn read_model(r: &mut Reader, doc: &Table) -> Option<(ModelConfig, ModelSpec)> {
    let Some(t) = r.table(doc, "model", "") else {
        if doc.get("model").is_none() {
            r.issue("model", "missing required table");
        }
        return None;
    };
    r.check_keys(t, "model", &["h0", "modes"]);
    let h0 = match t.get("h0") {
        Some(v) => r.matrix(v, "model.h0"),
        None => {
            r.issue("model.h0", "missing required field");
            None
        }
    };
    let modes: Option<Vec<ModeConfig>> = match t.get("modes") {
        Some(Value::Array(items)) if !items.is_empty() => items
            .iter()
            .enumerate()
            .map(|(i, item)| {
                let loc = format!("model.modes[{i}]");
                let Value::Table(mt) = item else {
                    r.issue(&loc, "expected a table with omega and current");
                    return None;
                };
                r.check_keys(mt, &loc, &["omega", "current"]);
                let omega = match mt.get("omega") {
                    Some(v) => r.number(v, &format!("{loc}.omega")),
                    None => {
                        r.issue(format!("{loc}.omega"), "missing required field");
                        None
                    }
                };
                let current = match mt.get("current") {
                    Some(v) => r.matrix(v, &format!("{loc}.current")),
                    None => {
                        r.issue(format!("{loc}.current"), "missing required field");
                        None
                    }
                };
                Some(ModeConfig {
                    omega: omega?,
                    current: current?,
                })
            })
            .collect::<Vec<_>>()
            .into_iter()
            .collect(),
        Some(_) => {
            r.issue("model.modes", "expected a non-empty array of modes");
            None
        }
        None => {
            r.issue("model.modes", "missing required field");
            None
        }
    };
    let (h0, modes) = (h0?, modes?);
    let d = h0.len();
    let mut ok = true;
    for (i, m) in modes.iter().enumerate() {
        if m.current.len() != d {
            r.issue(
                format!("model.modes[{i}].current"),
                format!(
                    "dimension mismatch: current is {0}x{0} but h0 is {d}x{d}",
                    m.current.len()
                ),
            );
            ok = false;
        }
    }
    if !ok {
        return None;
    }
    let fields = modes
        .iter()
        .map(|m| FieldMode::new(m.omega, rows_to_matrix(&m.current)))
        .collect();
    match ModelSpec::new(rows_to_matrix(&h0), fields) {
        Ok(spec) => Some((ModelConfig { h0, modes }, spec)),
        Err(e) => {
            r.issue("model.h0", e.to_string());
            None
        }
    }
}

fn read_initial(
    r: &mut Reader,
    doc: &Table,
    dims: Option<(usize, usize)>,
) -> Option<InitialConfig> {
    let Some(t) = r.table(doc, "initial", "") else {
        if doc.get("initial").is_none() {
            r.issue("initial", "missing required table");
        }
        return None;
    };
    r.check_keys(t, "initial", &["atomic", "alpha0"]);
    let atomic = match t.get("atomic") {
        Some(v) => r.vector(v, "initial.atomic"),
        None => {
            r.issue("initial.atomic", "missing required field");
            None
        }
    };
    let alpha0 = match t.get("alpha0") {
        Some(v) => r.vector(v, "initial.alpha0"),
        None => {
            r.issue("initial.alpha0", "missing required field");
            None
        }
    };
    let (atomic, alpha0) = (atomic?, alpha0?);
    let mut ok = true;
    if let Some((d, m)) = dims {
        if atomic.len() != d {
            r.issue(
                "initial.atomic",
                format!("dimension mismatch: {} entries for d = {d}", atomic.len()),
            );
            ok = false;
        }
        if alpha0.len() != m {
            r.issue(
                "initial.alpha0",
                format!("dimension mismatch: {} entries for {m} modes", alpha0.len()),
            );
            ok = false;
        }
    }
    let norm: f64 = atomic.iter().map(|p| p[0] * p[0] + p[1] * p[1]).sum();
    if (norm - 1.0).abs() > 1e-9 {
        r.issue(
            "initial.atomic",
            format!("must be normalized, squared norm is {norm}"),
        );
        ok = false;
    }
    ok.then_some(InitialConfig { atomic, alpha0 })
}

fn read_chain(r: &mut Reader, doc: &Table) -> Option<ChainConfig> {
    let empty = Table::new();
    let t = r.table(doc, "chain", "").unwrap_or(&empty);
    r.check_keys(
        t,
        "chain",
        &[
            "n",
            "eps",
            "step_cap",
            "delta_min",
            "burn_in",
            "thin",
            "batches",
            "reformat",
            "gate_sigma",
            "transport",
            "neighbor_rule",
            "integrator",
        ],
    );
    let p = "chain";
    let defaults = SamplerParams::default();
    let n = r.count(t, "n", p, DEFAULT_N, 2);
    let eps = r.positive(t, "eps", p, Some(DEFAULT_EPS));
    let step_cap = r.positive(t, "step_cap", p, Some(defaults.step_cap));
    let delta_min = r.positive(t, "delta_min", p, Some(chain::DEFAULT_DELTA_MIN));
    let burn_in = r.count(t, "burn_in", p, defaults.burn_in_factor, 0);
    let thin = r.count(t, "thin", p, defaults.thin, 1);
    let batches = r.count(t, "batches", p, chain::DEFAULT_BATCHES, 2);
    let reformat = r
        .choice(t, "reformat", p, "auto", &["auto", "never"])
        .map(|s| match s.as_str() {
            "auto" => ReformatPolicy::Auto,
            _ => ReformatPolicy::Never,
        });
    let gate_sigma = r.positive(
        t,
        "gate_sigma",
        p,
        Some(ReformatParams::default().gate_sigma),
    );
    let transport = r.choice(t, "transport", p, "comoving", &["comoving", "fixed"]);
    let neighbor_rule = r.choice(t, "neighbor_rule", p, "upwind", &["upwind", "forward"]);
    let integrator = r.choice(t, "integrator", p, "euler", &["euler", "midpoint"]);
    if let (Some(n), Some(b)) = (n, batches) {
        if b > n {
            r.issue(
                "chain.batches",
                format!("{b} batches exceed chain length {n}"),
            );
            return None;
        }
    }
    Some(ChainConfig {
        n: n?,
        eps: eps?,
        step_cap: step_cap?,
        delta_min: delta_min?,
        burn_in: burn_in?,
        thin: thin?,
        batches: batches?,
        reformat: reformat?,
        gate_sigma: gate_sigma?,
        transport: transport?,
        neighbor_rule: neighbor_rule?,
        integrator: integrator?,
    })
}

fn read_oracle(r: &mut Reader, doc: &Table, modes: Option<usize>) -> Option<OracleConfig> {
    let empty = Table::new();
    let t = r.table(doc, "oracle", "").unwrap_or(&empty);
    r.check_keys(t, "oracle", &["cutoffs", "dt", "tail_threshold"]);
    let cutoffs = match t.get("cutoffs") {
        None => modes.map(|m| vec![oracle::DEFAULT_CUTOFF; m]),
        Some(Value::Array(a)) => {
            let parsed: Option<Vec<usize>> = a
                .iter()
                .map(|x| match x {
                    Value::Integer(c) if *c >= 1 => Some(*c as usize),
                    _ => None,
                })
                .collect();
            match (parsed, modes) {
                (None, _) => {
                    r.issue("oracle.cutoffs", "expected positive integers");
                    None
                }
                (Some(c), Some(m)) if c.len() != m => {
                    r.issue(
                        "oracle.cutoffs",
                        format!("dimension mismatch: {} cutoffs for {m} modes", c.len()),
                    );
                    None
                }
                (Some(c), _) => Some(c),
            }
        }
        Some(_) => {
            r.issue("oracle.cutoffs", "expected an array of positive integers");
            None
        }
    };
    let dt = r.positive(t, "dt", "oracle", Some(DEFAULT_EPS));
    let tail = r.positive(
        t,
        "tail_threshold",
        "oracle",
        Some(oracle::DEFAULT_TAIL_THRESHOLD),
    );
    if tail.is_some_and(|x| x >= 1.0) {
        r.issue("oracle.tail_threshold", "must be below 1");
        return None;
    }
    Some(OracleConfig {
        cutoffs: cutoffs?,
        dt: dt?,
        tail_threshold: tail?,
    })
}

fn is_multiple(x: f64, unit: f64) -> bool {
    let q = x / unit;
    (q - q.round()).abs() <= 1e-9 * q.abs().max(1.0) && q.round() >= 1.0
}

fn read_schedule(r: &mut Reader, doc: &Table, eps: Option<f64>) -> Option<ScheduleConfig> {
    let Some(t) = r.table(doc, "schedule", "") else {
        if doc.get("schedule").is_none() {
            r.issue("schedule", "missing required table");
        }
        return None;
    };
    r.check_keys(
        t,
        "schedule",
        &["t_final", "record_every", "checkpoint_every"],
    );
    let t_final = r.positive(t, "t_final", "schedule", None)?;
    let record_every = r.positive(t, "record_every", "schedule", Some(t_final / 10.0))?;
    let checkpoint_every = r.positive(t, "checkpoint_every", "schedule", Some(record_every))?;
    let mut ok = true;
    if let Some(eps) = eps {
        if !is_multiple(record_every, eps) {
            r.issue(
                "schedule.record_every",
                format!("must be a whole number of chain steps (eps = {eps})"),
            );
            ok = false;
        }
    }
    if !is_multiple(t_final, record_every) {
        r.issue(
            "schedule.t_final",
            "must be a whole number of record intervals",
        );
        ok = false;
    }
    if !is_multiple(checkpoint_every, record_every) {
        r.issue(
            "schedule.checkpoint_every",
            "must be a whole number of record intervals",
        );
        ok = false;
    }
    ok.then_some(ScheduleConfig {
        t_final,
        record_every,
        checkpoint_every,
    })
}

fn read_observables(
    r: &mut Reader,
    doc: &Table,
    dims: Option<(usize, usize)>,
) -> Option<Vec<ObservableConfig>> {
    let items = match doc.get("observables") {
        None => return None,
        Some(Value::Array(items)) => items,
        Some(_) => {
            r.issue("observables", "expected an array of tables");
            return None;
        }
    };
    let mut out = Vec::new();
    let mut names = std::collections::HashSet::new();
    for (i, item) in items.iter().enumerate() {
        let loc = format!("observables[{i}]");
        let Value::Table(t) = item else {
            r.issue(&loc, "expected a table");
            continue;
        };
        r.check_keys(t, &loc, &["name", "operator", "poly"]);
        let name = match t.get("name") {
            Some(Value::String(s)) if !s.is_empty() && !s.contains([',', '"', '\n', '\r']) => {
                if !names.insert(s.clone()) {
                    r.issue(
                        format!("{loc}.name"),
                        format!("duplicate observable name `{s}`"),
                    );
                }
                Some(s.clone())
            }
            Some(_) => {
                r.issue(
                    format!("{loc}.name"),
                    "expected a non-empty name without commas, quotes or newlines",
                );
                None
            }
            None => {
                r.issue(format!("{loc}.name"), "missing required field");
                None
            }
        };
        let operator = match (t.get("operator"), dims) {
            (None, Some((d, _))) => Some(CMatrix::identity(d, d)),
            (Some(Value::String(s)), Some((d, _))) => {
                let op = named_operator(s, d);
                if op.is_none() {
                    r.issue(
                        format!("{loc}.operator"),
                        format!("unknown operator `{s}` for d = {d} (identity; sigma_z, sigma_minus, sigma_plus need d = 2)"),
                    );
                }
                op
            }
            (Some(v @ Value::Array(_)), dims) => {
                let m = r
                    .matrix(v, &format!("{loc}.operator"))
                    .map(|rows| rows_to_matrix(&rows));
                if let (Some(m), Some((d, _))) = (&m, dims) {
                    if m.nrows() != d {
                        r.issue(
                            format!("{loc}.operator"),
                            format!("dimension mismatch: {0}x{0} for d = {d}", m.nrows()),
                        );
                    }
                }
                m
            }
            (Some(_), _) => {
                r.issue(
                    format!("{loc}.operator"),
                    "expected a matrix or an operator name",
                );
                None
            }
            (None, None) => None,
        };
        let poly = match t.get("poly") {
            None => Some(vec![MonomialConfig {
                coeff: [1.0, 0.0],
                alpha: vec![],
                conj: vec![],
            }]),
            Some(Value::Array(terms)) => terms
                .iter()
                .enumerate()
                .map(|(j, term)| {
                    let tloc = format!("{loc}.poly[{j}]");
                    let Value::Table(tt) = term else {
                        r.issue(&tloc, "expected a table with coeff, alpha, conj");
                        return None;
                    };
                    r.check_keys(tt, &tloc, &["coeff", "alpha", "conj"]);
                    let coeff = match tt.get("coeff") {
                        Some(v) => r.complex(v, &format!("{tloc}.coeff")),
                        None => Some([1.0, 0.0]),
                    };
                    let alpha = r.powers(tt, "alpha", &tloc);
                    let conj = r.powers(tt, "conj", &tloc);
                    if let (Some(a), Some(c), Some((_, m))) = (&alpha, &conj, dims) {
                        if a.len() > m || c.len() > m {
                            r.issue(&tloc, format!("powers given for more than {m} modes"));
                            return None;
                        }
                    }
                    Some(MonomialConfig {
                        coeff: coeff?,
                        alpha: alpha?,
                        conj: conj?,
                    })
                })
                .collect::<Vec<_>>()
                .into_iter()
                .collect(),
            Some(_) => {
                r.issue(format!("{loc}.poly"), "expected an array of monomials");
                None
            }
        };
        if let (Some(name), Some(op), Some(poly)) = (name, operator, poly) {
            out.push(ObservableConfig {
                name,
                operator: matrix_to_rows(&op),
                poly,
            });
        }
    }
    if items.is_empty() {
        r.issue(
            "observables",
            "list is empty; omit it to record the default suite",
        );
    }
    Some(out)
}

fn default_observables(dim: usize, n_modes: usize) -> Vec<ObservableConfig> {
    chain::standard_observables(dim, n_modes)
        .into_iter()
        .map(|(name, obs)| ObservableConfig {
            name,
            operator: matrix_to_rows(&obs.operator),
            poly: obs
                .poly
                .iter()
                .map(|m| MonomialConfig {
                    coeff: pair(m.coeff),
                    alpha: m.alpha_powers.clone(),
                    conj: m.conj_powers.clone(),
                })
                .collect(),
        })
        .collect()
}

impl RunConfig {
    pub fn model_spec(&self) -> ModelSpec {
        let modes = self
            .model
            .modes
            .iter()
            .map(|m| FieldMode::new(m.omega, rows_to_matrix(&m.current)))
            .collect();
        ModelSpec::new(rows_to_matrix(&self.model.h0), modes).expect("validated model")
    }

    pub fn observables(&self) -> Vec<(String, Observable)> {
        self.observables
            .iter()
            .map(|o| {
                let poly = o
                    .poly
                    .iter()
                    .map(|m| Monomial::new(complex(&m.coeff), m.alpha.clone(), m.conj.clone()))
                    .collect();
                (
                    o.name.clone(),
                    Observable::new(rows_to_matrix(&o.operator), poly),
                )
            })
            .collect()
    }

    pub fn atomic(&self) -> Vec<Complex64> {
        self.initial.atomic.iter().map(complex).collect()
    }

    pub fn alpha0(&self) -> Vec<Complex64> {
        self.initial.alpha0.iter().map(complex).collect()
    }

    pub fn sampler_params(&self) -> SamplerParams {
        SamplerParams {
            step_cap: self.chain.step_cap,
            burn_in_factor: self.chain.burn_in,
            thin: self.chain.thin,
            ..SamplerParams::default()
        }
    }

    pub fn reformat_params(&self) -> ReformatParams {
        ReformatParams {
            sampler: self.sampler_params(),
            gate_sigma: self.chain.gate_sigma,
            batches: self.chain.batches,
        }
    }

    pub fn step_params(&self) -> StepParams {
        StepParams {
            eps: self.chain.eps,
            transport: match self.chain.transport.as_str() {
                "fixed" => Transport::Fixed,
                _ => Transport::Comoving,
            },
            neighbor_rule: match self.chain.neighbor_rule.as_str() {
                "forward" => NeighborRule::Forward,
                _ => NeighborRule::Upwind,
            },
            integrator: match self.chain.integrator.as_str() {
                "midpoint" => Integrator::Midpoint,
                _ => Integrator::Euler,
            },
            delta_min: self.chain.delta_min,
        }
    }

    /// Number of record intervals up to `t_final`.
    pub fn record_count(&self) -> u64 {
        (self.schedule.t_final / self.schedule.record_every).round() as u64
    }

    /// Chain steps per record interval.
    pub fn steps_per_record(&self) -> u64 {
        (self.schedule.record_every / self.chain.eps).round() as u64
    }

    pub fn records_per_checkpoint(&self) -> u64 {
        (self.schedule.checkpoint_every / self.schedule.record_every).round() as u64
    }

    /// The resolved configuration as a TOML document that validates back to `self`.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }
}
