//! Experiment configuration: TOML in, a fully normalized [`Config`] out.
//!
//! Validation walks the parsed document by hand so that every problem is
//! reported at once with its field path, unknown keys included.

use serde::Serialize;
use toml::{Table, Value};

use crate::ops;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Gibbs,
    Kms,
    Modular,
    OpenqsBalance,
    Ruelle,
    Ttmep,
    Bmv,
    Ancilla,
    Lattice,
    Lindblad,
    WeakCoupling,
    Fermi,
    Instruments,
}

impl Experiment {
    pub const ALL: [Experiment; 13] = [
        Experiment::Gibbs,
        Experiment::Kms,
        Experiment::Modular,
        Experiment::OpenqsBalance,
        Experiment::Ruelle,
        Experiment::Ttmep,
        Experiment::Bmv,
        Experiment::Ancilla,
        Experiment::Lattice,
        Experiment::Lindblad,
        Experiment::WeakCoupling,
        Experiment::Fermi,
        Experiment::Instruments,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Gibbs => "gibbs",
            Experiment::Kms => "kms",
            Experiment::Modular => "modular",
            Experiment::OpenqsBalance => "openqs-balance",
            Experiment::Ruelle => "ruelle",
            Experiment::Ttmep => "ttmep",
            Experiment::Bmv => "bmv",
            Experiment::Ancilla => "ancilla",
            Experiment::Lattice => "lattice",
            Experiment::Lindblad => "lindblad",
            Experiment::WeakCoupling => "weak-coupling",
            Experiment::Fermi => "fermi",
            Experiment::Instruments => "instruments",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Experiment::ALL.into_iter().find(|e| e.name() == s)
    }

    pub fn summary(self) -> &'static str {
        match self {
            Experiment::Gibbs => "Gibbs variational principle: P(beta) = max_nu [S(nu) - beta nu(H)], attained only at the Gibbs state",
            Experiment::Kms => "KMS boundary condition of the Gibbs state along the time axis",
            Experiment::Modular => "Tomita-Takesaki modular group, Connes cocycle relation and natural cone",
            Experiment::OpenqsBalance => "entropy balance Ent(omega_t|omega) = -int_0^t omega_s(sigma) ds for reservoir-coupled systems",
            Experiment::Ruelle => "Ruelle decomposition of entropy production into entropy and heat parts",
            Experiment::Ttmep => "two-time measurement entropy production law, mean and characteristic function",
            Experiment::Bmv => "BMV functional against the two-time measurement characteristic function",
            Experiment::Ancilla => "reconstruction of the characteristic function from a qubit ancilla",
            Experiment::Lattice => "lattice pressure, derivative bounds and open-lattice entropy production",
            Experiment::Lindblad => "Lindblad semigroups: Choi positivity, invariant state, detailed balance",
            Experiment::WeakCoupling => "effective generators of a qubit weakly coupled to a finite Fermi gas",
            Experiment::Fermi => "quasi-free fermions: characteristic function, Wick theorem, KMS",
            Experiment::Instruments => "repeated measurements: entropy production of outcome paths and upper decoupling",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Term {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pauli: Option<String>,
    pub coeff: f64,
    pub sites: Vec<usize>,
    pub translate: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<[f64; 2]>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PartKindCfg {
    System,
    Reservoir,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartCfg {
    pub label: String,
    pub kind: PartKindCfg,
    pub sites: Vec<usize>,
    pub beta: f64,
    pub hamiltonian: Vec<Term>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum InstrumentKind {
    Coin,
    Lueders,
    Kraus,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutcomeCfg {
    pub label: String,
    pub kraus: Vec<Term>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstrumentCfg {
    pub kind: InstrumentKind,
    pub probs: Vec<f64>,
    pub theta: Vec<usize>,
    pub observable: Vec<Term>,
    pub outcomes: Vec<OutcomeCfg>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Model {
    pub sites: usize,
    pub local_dim: usize,
    pub beta: f64,
    pub modes: usize,
    pub mode_energies: Vec<f64>,
    pub hopping: f64,
    pub hamiltonian: Vec<Term>,
    pub couplings: Vec<Term>,
    pub jumps: Vec<Term>,
    pub parts: Vec<PartCfg>,
    pub instrument: InstrumentCfg,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Run {
    pub times: Vec<f64>,
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub sizes: Vec<usize>,
    pub tolerance: f64,
    pub quad_tol: f64,
    pub seed: u64,
    pub samples: usize,
    pub pairs: usize,
    pub horizon: usize,
    pub bootstrap: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Output {
    pub dir: String,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Config {
    pub experiment: Experiment,
    pub model: Model,
    pub run: Run,
    pub output: Output,
}

impl Config {
    /// Canonical TOML form; feeding it back to [`validate`] reproduces `self`.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("normalized config always serializes")
    }

    /// Hilbert-space dimension the experiment will allocate.
    pub fn hilbert_dim(&self) -> usize {
        let lattice = (self.model.local_dim as u128).saturating_pow(self.model.sites as u32);
        let d = match self.experiment {
            Experiment::Fermi => 1u128 << self.model.modes.min(100),
            Experiment::WeakCoupling => 2u128 << self.model.mode_energies.len().min(100),
            _ => lattice,
        };
        d.min(usize::MAX as u128) as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.path.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

struct V {
    errors: Vec<ConfigError>,
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

impl V {
    fn err(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.errors.push(ConfigError {
            path: path.into(),
            message: message.into(),
        });
    }

    fn keys(&mut self, t: &Table, path: &str, allowed: &[&str]) {
        for k in t.keys() {
            if !allowed.contains(&k.as_str()) {
                self.err(join(path, k), format!("unknown key (expected one of: {})", allowed.join(", ")));
            }
        }
    }

    fn sub_table<'a>(&mut self, t: &'a Table, key: &str, path: &str) -> Option<&'a Table> {
        match t.get(key) {
            None => None,
            Some(Value::Table(s)) => Some(s),
            Some(_) => {
                self.err(join(path, key), "expected a table");
                None
            }
        }
    }

    fn f64_value(&mut self, v: &Value, path: &str) -> Option<f64> {
        match v {
            Value::Float(x) if x.is_finite() => Some(*x),
            Value::Integer(i) => Some(*i as f64),
            _ => {
                self.err(path, "expected a finite number");
                None
            }
        }
    }

    fn f64(&mut self, t: &Table, key: &str, path: &str, default: f64) -> f64 {
        match t.get(key) {
            None => default,
            Some(v) => self.f64_value(v, &join(path, key)).unwrap_or(default),
        }
    }

    fn uint_value(&mut self, v: &Value, path: &str) -> Option<u64> {
        match v {
            Value::Integer(i) if *i >= 0 => Some(*i as u64),
            _ => {
                self.err(path, "expected a nonnegative integer");
                None
            }
        }
    }

    fn usize(&mut self, t: &Table, key: &str, path: &str, default: usize) -> usize {
        match t.get(key) {
            None => default,
            Some(v) => self.uint_value(v, &join(path, key)).map_or(default, |x| x as usize),
        }
    }

    fn u64(&mut self, t: &Table, key: &str, path: &str, default: u64) -> u64 {
        match t.get(key) {
            None => default,
            Some(v) => self.uint_value(v, &join(path, key)).unwrap_or(default),
        }
    }

    fn bool(&mut self, t: &Table, key: &str, path: &str, default: bool) -> bool {
        match t.get(key) {
            None => default,
            Some(Value::Boolean(b)) => *b,
            Some(_) => {
                self.err(join(path, key), "expected true or false");
                default
            }
        }
    }

    fn string(&mut self, t: &Table, key: &str, path: &str) -> Option<String> {
        match t.get(key) {
            None => None,
            Some(Value::String(s)) => Some(s.clone()),
            Some(_) => {
                self.err(join(path, key), "expected a string");
                None
            }
        }
    }

    fn array<'a>(&mut self, t: &'a Table, key: &str, path: &str) -> Option<&'a Vec<Value>> {
        match t.get(key) {
            None => None,
            Some(Value::Array(a)) => Some(a),
            Some(_) => {
                self.err(join(path, key), "expected an array");
                None
            }
        }
    }

    fn f64_list(&mut self, t: &Table, key: &str, path: &str, default: Vec<f64>) -> Vec<f64> {
        match self.array(t, key, path) {
            None => default,
            Some(a) => a
                .iter()
                .enumerate()
                .filter_map(|(i, v)| self.f64_value(v, &format!("{}[{i}]", join(path, key))))
                .collect(),
        }
    }

    fn usize_list(&mut self, t: &Table, key: &str, path: &str, default: Vec<usize>) -> Vec<usize> {
        match self.array(t, key, path) {
            None => default,
            Some(a) => a
                .iter()
                .enumerate()
                .filter_map(|(i, v)| {
                    self.uint_value(v, &format!("{}[{i}]", join(path, key)))
                        .map(|x| x as usize)
                })
                .collect(),
        }
    }

    fn tables<'a>(&mut self, t: &'a Table, key: &str, path: &str) -> Vec<(String, &'a Table)> {
        let Some(a) = self.array(t, key, path) else {
            return Vec::new();
        };
        let mut out = Vec::new();
        for (i, v) in a.iter().enumerate() {
            let p = format!("{}[{i}]", join(path, key));
            match v {
                Value::Table(tt) => out.push((p, tt)),
                _ => self.err(p, "expected a table"),
            }
        }
        out
    }
}

struct Lattice {
    sites: usize,
    local_dim: usize,
}

fn matrix_literal(v: &mut V, value: &Value, path: &str) -> Option<Vec<Vec<[f64; 2]>>> {
    let Value::Array(rows) = value else {
        v.err(path, "expected an array of rows of [re, im] pairs");
        return None;
    };
    let mut out = Vec::new();
    let mut ok = true;
    for (i, row) in rows.iter().enumerate() {
        let Value::Array(entries) = row else {
            v.err(format!("{path}[{i}]"), "expected a row of [re, im] pairs");
            ok = false;
            continue;
        };
        let mut r = Vec::new();
        for (j, e) in entries.iter().enumerate() {
            let p = format!("{path}[{i}][{j}]");
            match e {
                Value::Array(pair) if pair.len() == 2 => {
                    let re = v.f64_value(&pair[0], &p);
                    let im = v.f64_value(&pair[1], &p);
                    match (re, im) {
                        (Some(re), Some(im)) => r.push([re, im]),
                        _ => ok = false,
                    }
                }
                Value::Integer(_) | Value::Float(_) => match v.f64_value(e, &p) {
                    Some(re) => r.push([re, 0.0]),
                    None => ok = false,
                },
                _ => {
                    v.err(p, "expected a number or an [re, im] pair");
                    ok = false;
                }
            }
        }
        out.push(r);
    }
    if !ok {
        return None;
    }
    if let Err(e) = ops::dense_from_literal(&out) {
        v.err(path, e);
        return None;
    }
    Some(out)
}

fn term(v: &mut V, t: &Table, path: &str, lat: &Lattice) -> Option<Term> {
    v.keys(t, path, &["pauli", "matrix", "coeff", "sites", "translate"]);
    let coeff = v.f64(t, "coeff", path, 1.0);
    let translate = v.bool(t, "translate", path, false);
    let explicit_sites = t.contains_key("sites");
    let mut sites = v.usize_list(t, "sites", path, Vec::new());
    let pauli = v.string(t, "pauli", path);
    let matrix = t.get("matrix").and_then(|m| matrix_literal(v, m, &join(path, "matrix")));
    let before = v.errors.len();
    match (&pauli, t.contains_key("matrix")) {
        (Some(_), true) => v.err(path, "give either pauli or matrix, not both"),
        (None, false) => v.err(path, "missing operator: give pauli or matrix"),
        _ => {}
    }
    let width = if let Some(p) = &pauli {
        if lat.local_dim != 2 {
            v.err(join(path, "pauli"), "Pauli strings need local_dim = 2");
        }
        if let Err(e) = ops::parse_pauli(p) {
            v.err(join(path, "pauli"), e);
        }
        Some(p.chars().count())
    } else {
        matrix.as_ref().map(|m| {
            let mut w = 0;
            let mut d = 1usize;
            while d < m.len() && w < 64 {
                d = d.saturating_mul(lat.local_dim.max(2));
                w += 1;
            }
            if d != m.len() {
                v.err(join(path, "matrix"), format!("size {} is not a power of local_dim {}", m.len(), lat.local_dim));
            }
            w
        })
    };
    if let Some(w) = width {
        if !explicit_sites {
            if w > lat.sites {
                v.err(path, format!("operator spans {w} sites but the model has {}", lat.sites));
            }
            sites = (0..w).collect();
        } else if sites.len() != w {
            v.err(join(path, "sites"), format!("operator acts on {w} sites but {} are listed", sites.len()));
        }
    }
    for (i, &s) in sites.iter().enumerate() {
        if s >= lat.sites {
            v.err(format!("{}[{i}]", join(path, "sites")), format!("site {s} out of range 0..{}", lat.sites));
        }
        if sites[..i].contains(&s) {
            v.err(format!("{}[{i}]", join(path, "sites")), format!("site {s} repeated"));
        }
    }
    if v.errors.len() > before {
        return None;
    }
    Some(Term {
        pauli,
        coeff,
        sites,
        translate,
        matrix,
    })
}

fn terms(v: &mut V, t: &Table, key: &str, path: &str, lat: &Lattice) -> Vec<Term> {
    v.tables(t, key, path)
        .into_iter()
        .filter_map(|(p, tt)| term(v, tt, &p, lat))
        .collect()
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
}

fn lueders_alphabet(obs: &[Term], lat: &Lattice) -> Option<usize> {
    let d = lat.local_dim.checked_pow(lat.sites as u32)?;
    if d > 4096 {
        return None;
    }
    let m = crate::experiments::assemble(obs, lat.sites, lat.local_dim).ok()?;
    let eig = qtherm::linalg::eig_hermitian(&m).ok()?;
    Some(eig.clusters(1e-9).len())
}

fn instrument(v: &mut V, t: Option<&Table>, path: &str, lat: &Lattice) -> InstrumentCfg {
    let empty = Table::new();
    let t = t.unwrap_or(&empty);
    v.keys(t, path, &["kind", "probs", "theta", "observable", "outcomes"]);
    let kind = match v.string(t, "kind", path).as_deref() {
        None | Some("coin") => InstrumentKind::Coin,
        Some("lueders") => InstrumentKind::Lueders,
        Some("kraus") => InstrumentKind::Kraus,
        Some(other) => {
            v.err(join(path, "kind"), format!("unknown instrument kind {other:?} (coin, lueders, kraus)"));
            InstrumentKind::Coin
        }
    };
    let probs = v.f64_list(t, "probs", path, if kind == InstrumentKind::Coin { vec![0.5, 0.5] } else { Vec::new() });
    let observable = terms(v, t, "observable", path, lat);
    let mut outcomes = Vec::new();
    for (p, ot) in v.tables(t, "outcomes", path) {
        v.keys(ot, &p, &["label", "kraus"]);
        let label = v.string(ot, "label", &p).unwrap_or_else(|| outcomes.len().to_string());
        let kraus = terms(v, ot, "kraus", &p, lat);
        if kraus.is_empty() {
            v.err(join(&p, "kraus"), "each outcome needs at least one Kraus operator");
        }
        outcomes.push(OutcomeCfg { label, kraus });
    }
    let alphabet = match kind {
        InstrumentKind::Coin => {
            if probs.is_empty() || probs.iter().any(|&p| p < 0.0) {
                v.err(join(path, "probs"), "coin probabilities must be nonempty and nonnegative");
            }
            Some(probs.len())
        }
        InstrumentKind::Lueders => {
            if observable.is_empty() {
                v.err(join(path, "observable"), "lueders instrument needs an observable");
                None
            } else {
                lueders_alphabet(&observable, lat)
            }
        }
        InstrumentKind::Kraus => {
            if outcomes.is_empty() {
                v.err(join(path, "outcomes"), "kraus instrument needs outcomes");
            }
            Some(outcomes.len())
        }
    };
    let theta = v.usize_list(t, "theta", path, alphabet.map_or(Vec::new(), |k| (0..k).collect()));
    if let Some(k) = alphabet {
        if theta.len() != k || theta.iter().any(|&x| x >= k) || (0..k).any(|a| theta[theta[a]] != a) {
            v.err(join(path, "theta"), format!("theta must be an involution of 0..{k}"));
        }
    }
    InstrumentCfg {
        kind,
        probs,
        theta,
        observable,
        outcomes,
    }
}

fn parts(v: &mut V, t: &Table, path: &str, lat: &Lattice, beta: f64) -> Vec<PartCfg> {
    let mut out = Vec::new();
    for (k, (p, pt)) in v.tables(t, "parts", path).into_iter().enumerate() {
        v.keys(pt, &p, &["label", "kind", "sites", "beta", "hamiltonian"]);
        let label = v.string(pt, "label", &p).unwrap_or_else(|| format!("part{k}"));
        let kind = match v.string(pt, "kind", &p).as_deref() {
            None | Some("reservoir") => PartKindCfg::Reservoir,
            Some("system") => PartKindCfg::System,
            Some(other) => {
                v.err(join(&p, "kind"), format!("unknown part kind {other:?} (system, reservoir)"));
                PartKindCfg::Reservoir
            }
        };
        let sites = v.usize_list(pt, "sites", &p, Vec::new());
        if sites.is_empty() {
            v.err(join(&p, "sites"), "missing or empty site list");
        }
        if sites.windows(2).any(|w| w[0] >= w[1]) {
            v.err(join(&p, "sites"), "sites must be strictly ascending");
        }
        if let Some(&s) = sites.iter().find(|&&s| s >= lat.sites) {
            v.err(join(&p, "sites"), format!("site {s} out of range 0..{}", lat.sites));
        }
        let pbeta = v.f64(pt, "beta", &p, beta);
        let ham = terms(v, pt, "hamiltonian", &p, lat);
        for (i, term) in ham.iter().enumerate() {
            if term.sites.iter().any(|s| !sites.contains(s)) {
                v.err(format!("{p}.hamiltonian[{i}].sites"), "term leaves the part's sites");
            }
        }
        out.push(PartCfg {
            label,
            kind,
            sites,
            beta: pbeta,
            hamiltonian: ham,
        });
    }
    if !out.is_empty() {
        let mut owner = vec![0usize; lat.sites];
        for part in &out {
            for &s in &part.sites {
                if s < lat.sites {
                    owner[s] += 1;
                }
            }
        }
        for (s, &n) in owner.iter().enumerate() {
            if n != 1 {
                v.err(join(path, "parts"), format!("site {s} belongs to {n} parts (need exactly one)"));
            }
        }
        if out.iter().filter(|p| p.kind == PartKindCfg::System).count() > 1 {
            v.err(join(path, "parts"), "at most one system part");
        }
    }
    out
}

fn default_tolerance(e: Experiment) -> f64 {
    match e {
        Experiment::Gibbs | Experiment::Lindblad | Experiment::Ttmep => 1e-10,
        Experiment::Kms
        | Experiment::Modular
        | Experiment::Ruelle
        | Experiment::Ancilla
        | Experiment::Fermi => 1e-9,
        Experiment::OpenqsBalance | Experiment::Lattice => 1e-7,
        Experiment::Bmv => 1e-6,
        // number of bootstrap standard errors
        Experiment::Instruments => 3.0,
        Experiment::WeakCoupling => 0.0,
    }
}

fn default_times(e: Experiment) -> Vec<f64> {
    match e {
        Experiment::Kms => vec![-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0],
        Experiment::Modular => vec![-2.0, -1.0, 0.0, 1.0, 2.0],
        Experiment::OpenqsBalance | Experiment::Ruelle | Experiment::Ttmep | Experiment::Lattice => {
            vec![0.5, 2.0, 5.0]
        }
        Experiment::Bmv | Experiment::WeakCoupling => vec![1.0],
        Experiment::Ancilla | Experiment::Lindblad | Experiment::Fermi => vec![0.5, 1.0, 2.0],
        _ => Vec::new(),
    }
}

fn default_alphas(e: Experiment) -> Vec<f64> {
    match e {
        Experiment::Ttmep | Experiment::Bmv => linspace(0.0, 1.0, 11),
        // imaginary parts
        Experiment::Ancilla => vec![-1.3, -0.5, 0.4, 0.9, 1.7],
        _ => Vec::new(),
    }
}

/// Parses and normalizes a configuration, returning every error found.
pub fn validate(text: &str) -> Result<Config, Vec<ConfigError>> {
    let mut v = V { errors: Vec::new() };
    let root: Table = match text.parse::<Table>() {
        Ok(t) => t,
        Err(e) => {
            return Err(vec![ConfigError {
                path: String::new(),
                message: format!("not valid TOML: {}", e.message()),
            }])
        }
    };
    v.keys(&root, "", &["experiment", "model", "run", "output"]);
    let experiment = match root.get("experiment") {
        None => {
            v.err("experiment", format!("missing required field (one of: {})", names().join(", ")));
            None
        }
        Some(Value::String(s)) => match Experiment::parse(s) {
            Some(e) => Some(e),
            None => {
                v.err("experiment", format!("unknown experiment {s:?} (one of: {})", names().join(", ")));
                None
            }
        },
        Some(_) => {
            v.err("experiment", "expected a string");
            None
        }
    };
    let exp = experiment.unwrap_or(Experiment::Gibbs);
    let empty = Table::new();

    let mt = v.sub_table(&root, "model", "").unwrap_or(&empty);
    v.keys(
        mt,
        "model",
        &[
            "sites",
            "local_dim",
            "beta",
            "modes",
            "mode_energies",
            "hopping",
            "hamiltonian",
            "couplings",
            "jumps",
            "parts",
            "instrument",
        ],
    );
    let sites = v.usize(mt, "sites", "model", 1);
    let local_dim = v.usize(mt, "local_dim", "model", 2);
    if sites == 0 {
        v.err("model.sites", "need at least one site");
    }
    if local_dim < 2 {
        v.err("model.local_dim", "local dimension must be at least 2");
    }
    let lat = Lattice {
        sites: sites.max(1),
        local_dim: local_dim.max(2),
    };
    let beta = v.f64(mt, "beta", "model", 1.0);
    let modes = v.usize(mt, "modes", "model", if exp == Experiment::WeakCoupling { 4 } else { 2 });
    if modes == 0 {
        v.err("model.modes", "need at least one mode");
    }
    let default_energies = if exp == Experiment::WeakCoupling {
        vec![1.4, 1.8, 2.2, 2.6]
    } else {
        linspace(-1.0, 1.0, modes.max(1))
    };
    let mode_energies = v.f64_list(mt, "mode_energies", "model", default_energies);
    if exp == Experiment::Fermi && mode_energies.len() != modes {
        v.err("model.mode_energies", format!("need {modes} energies, one per mode"));
    }
    let hopping = v.f64(mt, "hopping", "model", 0.5);
    let hamiltonian = terms(&mut v, mt, "hamiltonian", "model", &lat);
    let couplings = terms(&mut v, mt, "couplings", "model", &lat);
    let jumps = terms(&mut v, mt, "jumps", "model", &lat);
    let part_list = parts(&mut v, mt, "model", &lat, beta);
    let needs_h = matches!(exp, Experiment::Gibbs | Experiment::Kms | Experiment::Modular | Experiment::Lattice)
        || (matches!(exp, Experiment::Ttmep | Experiment::Bmv | Experiment::Ancilla) && part_list.is_empty());
    if experiment.is_some() && needs_h && !mt.contains_key("hamiltonian") {
        v.err("model.hamiltonian", format!("experiment {} needs at least one Hamiltonian term", exp.name()));
    }
    let it = v.sub_table(mt, "instrument", "model");
    let inst = instrument(&mut v, it, "model.instrument", &lat);

    if experiment.is_some()
        && matches!(exp, Experiment::OpenqsBalance | Experiment::Ruelle)
        && !part_list.iter().any(|p| p.kind == PartKindCfg::Reservoir)
    {
        v.err("model.parts", format!("experiment {} needs at least one reservoir part", exp.name()));
    }

    let rt = v.sub_table(&root, "run", "").unwrap_or(&empty);
    v.keys(
        rt,
        "run",
        &[
            "times",
            "alphas",
            "betas",
            "lambdas",
            "sizes",
            "tolerance",
            "quad_tol",
            "seed",
            "samples",
            "pairs",
            "horizon",
            "bootstrap",
        ],
    );
    let times = v.f64_list(rt, "times", "run", default_times(exp));
    let alphas = v.f64_list(rt, "alphas", "run", default_alphas(exp));
    let betas = v.f64_list(rt, "betas", "run", if exp == Experiment::Gibbs { vec![beta] } else { Vec::new() });
    let lambdas = v.f64_list(
        rt,
        "lambdas",
        "run",
        if exp == Experiment::WeakCoupling { vec![0.4, 0.2, 0.1] } else { Vec::new() },
    );
    let sizes = v.usize_list(
        rt,
        "sizes",
        "run",
        if exp == Experiment::Lattice { (1..=sites).collect() } else { Vec::new() },
    );
    if let Some(&s) = sizes.iter().find(|&&s| s == 0 || s > sites) {
        v.err("run.sizes", format!("region size {s} outside 1..={sites}"));
    }
    let tolerance = v.f64(rt, "tolerance", "run", default_tolerance(exp));
    let quad_tol = v.f64(rt, "quad_tol", "run", 1e-10);
    if quad_tol <= 0.0 {
        v.err("run.quad_tol", "must be positive");
    }
    let seed = v.u64(rt, "seed", "run", 0);
    let samples = v.usize(rt, "samples", "run", if exp == Experiment::Instruments { 100_000 } else { 100 });
    let pairs = v.usize(rt, "pairs", "run", 20);
    let horizon = v.usize(rt, "horizon", "run", 4);
    let bootstrap = v.usize(rt, "bootstrap", "run", 200);
    if exp == Experiment::Instruments && horizon == 0 {
        v.err("run.horizon", "must be at least 1");
    }
    if exp == Experiment::WeakCoupling {
        if lambdas.windows(2).any(|w| w[1] >= w[0]) {
            v.err("run.lambdas", "must be strictly decreasing");
        }
        if times.is_empty() {
            v.err("run.times", "need a rescaled time");
        }
    }

    let ot = v.sub_table(&root, "output", "").unwrap_or(&empty);
    v.keys(ot, "output", &["dir", "name"]);
    let dir = v.string(ot, "dir", "output").unwrap_or_else(|| "results".into());
    let name = v.string(ot, "name", "output").unwrap_or_else(|| exp.name().into());
    if name.is_empty() || name.contains(['/', '\\']) {
        v.err("output.name", "must be a nonempty file stem without path separators");
    }

    if !v.errors.is_empty() {
        return Err(v.errors);
    }
    Ok(Config {
        experiment: exp,
        model: Model {
            sites,
            local_dim,
            beta,
            modes,
            mode_energies,
            hopping,
            hamiltonian,
            couplings,
            jumps,
            parts: part_list,
            instrument: inst,
        },
        run: Run {
            times,
            alphas,
            betas,
            lambdas,
            sizes,
            tolerance,
            quad_tol,
            seed,
            samples,
            pairs,
            horizon,
            bootstrap,
        },
        output: Output { dir, name },
    })
}

fn names() -> Vec<&'static str> {
    Experiment::ALL.iter().map(|e| e.name()).collect()
}
