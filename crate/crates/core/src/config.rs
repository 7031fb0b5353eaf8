//! Run configuration and its sectioned `key = value` file format.
//!
//! ```text
//! # comment
//! [optimizer]
//! kind = "demo"
//! k = 8            # integers, reals, true/false, "quoted strings"
//! ```
//!
//! Sections: `[model]`, `[data]`, `[optimizer]`, `[transport]`, `[run]`.
//! Unknown sections and keys are errors. Every key has a default.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::compaction::MergeRule;
use crate::harness::model::Activation;
use crate::tensor::DType;

#[derive(Debug, Clone, PartialEq, Error)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub message: String,
}

impl ConfigError {
    pub fn new(message: impl Into<String>) -> Self {
        Self {
            line: None,
            column: None,
            message: message.into(),
        }
    }

    fn at(line: usize, column: usize, message: impl Into<String>) -> Self {
        Self {
            line: Some(line),
            column: Some(column),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.line, self.column) {
            (Some(l), Some(c)) => write!(f, "line {l}, column {c}: {}", self.message),
            (Some(l), None) => write!(f, "line {l}: {}", self.message),
            _ => f.write_str(&self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Bool(bool),
    Int(i128),
    Real(f64),
    Str(String),
}

impl Value {
    fn describe(&self) -> &'static str {
        match self {
            Value::Bool(_) => "boolean",
            Value::Int(_) => "integer",
            Value::Real(_) => "real",
            Value::Str(_) => "string",
        }
    }

    /// Parses a literal. With `bare_strings`, anything that is not a bool or
    /// number is taken as a string even without quotes.
    pub fn parse(raw: &str, bare_strings: bool) -> Result<Value, String> {
        let raw = raw.trim();
        if raw.is_empty() {
            return Err("missing value".into());
        }
        if let Some(rest) = raw.strip_prefix('"') {
            let mut out = String::new();
            let mut chars = rest.chars();
            loop {
                match chars.next() {
                    None => return Err("unterminated string".into()),
                    Some('"') => break,
                    Some('\\') => match chars.next() {
                        Some('"') => out.push('"'),
                        Some('\\') => out.push('\\'),
                        Some('n') => out.push('\n'),
                        Some(c) => return Err(format!("unknown escape \\{c}")),
                        None => return Err("unterminated string".into()),
                    },
                    Some(c) => out.push(c),
                }
            }
            if !chars.as_str().trim().is_empty() {
                return Err("unexpected text after string".into());
            }
            return Ok(Value::Str(out));
        }
        match raw {
            "true" => return Ok(Value::Bool(true)),
            "false" => return Ok(Value::Bool(false)),
            _ => {}
        }
        if let Ok(i) = i128::from_str(raw) {
            return Ok(Value::Int(i));
        }
        if raw.chars().next().is_some_and(|c| c.is_ascii_digit() || c == '-' || c == '+' || c == '.') {
            if let Ok(r) = f64::from_str(raw) {
                if r.is_finite() {
                    return Ok(Value::Real(r));
                }
            }
        }
        if bare_strings {
            return Ok(Value::Str(raw.to_string()));
        }
        Err(format!("cannot parse value `{raw}` (strings must be quoted)"))
    }

    fn as_bool(&self) -> Result<bool, String> {
        match self {
            Value::Bool(b) => Ok(*b),
            v => Err(format!("expected boolean, found {}", v.describe())),
        }
    }

    fn as_real(&self) -> Result<f64, String> {
        match self {
            Value::Real(r) => Ok(*r),
            Value::Int(i) => Ok(*i as f64),
            v => Err(format!("expected number, found {}", v.describe())),
        }
    }

    fn as_uint(&self) -> Result<u64, String> {
        match self {
            Value::Int(i) if *i < 0 => Err(format!("expected non-negative integer, found {i}")),
            Value::Int(i) => u64::try_from(*i).map_err(|_| format!("integer {i} is too large")),
            v => Err(format!("expected integer, found {}", v.describe())),
        }
    }

    fn as_usize(&self) -> Result<usize, String> {
        self.as_uint()
            .and_then(|v| usize::try_from(v).map_err(|_| format!("integer {v} is too large")))
    }

    fn as_str(&self) -> Result<&str, String> {
        match self {
            Value::Str(s) => Ok(s),
            v => Err(format!("expected string, found {}", v.describe())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Quadratic,
    Linear,
    Logistic,
    Mlp,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Quadratic => "quadratic",
            ModelKind::Linear => "linear",
            ModelKind::Logistic => "logistic",
            ModelKind::Mlp => "mlp",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub hidden: usize,
    /// Hidden layer count for the MLP (1 or 2).
    pub layers: usize,
    pub activation: Activation,
    pub bias: bool,
    /// Parameter shape of the quadratic bowl; `cols = 1` makes it a vector.
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub features: usize,
    pub classes: usize,
    pub outputs: usize,
    pub samples: usize,
    pub eval_samples: usize,
    /// Per-worker batch size.
    pub batch: usize,
    pub noise: f64,
    pub separation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Demo,
    Sgd,
    Signum,
    AdamW,
}

impl OptimizerKind {
    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Demo => "demo",
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Signum => "signum",
            OptimizerKind::AdamW => "adamw",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    /// Momentum decay; `None` picks 0.999 for DeMo and 0.9 otherwise.
    pub beta: Option<f64>,
    pub chunk: usize,
    pub k: usize,
    pub signum: bool,
    pub merge: MergeRule,
    /// `None` picks 0.1 for AdamW and 0 otherwise.
    pub weight_decay: Option<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub warmup_steps: u64,
}

impl OptimizerConfig {
    pub fn beta(&self) -> f64 {
        self.beta.unwrap_or(match self.kind {
            OptimizerKind::Demo => 0.999,
            _ => 0.9,
        })
    }

    pub fn weight_decay(&self) -> f64 {
        self.weight_decay.unwrap_or(match self.kind {
            OptimizerKind::AdamW => 0.1,
            _ => 0.0,
        })
    }

    /// Learning rate for 1-based `step` under linear warmup.
    pub fn lr_at(&self, step: u64) -> f64 {
        if self.warmup_steps == 0 {
            self.lr
        } else {
            self.lr * (step as f64 / self.warmup_steps as f64).min(1.0)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransportKind {
    /// Worker threads meeting at an in-process rendezvous.
    Memory,
    /// Worker threads connected by a loopback TCP mesh.
    Tcp,
    /// All workers stepped in turn on the calling thread.
    Local,
}

impl TransportKind {
    pub fn name(self) -> &'static str {
        match self {
            TransportKind::Memory => "memory",
            TransportKind::Tcp => "tcp",
            TransportKind::Local => "local",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportConfig {
    pub kind: TransportKind,
    pub host: String,
    /// Rank `r` listens on `base_port + r`; 0 picks ephemeral ports.
    pub base_port: u16,
    pub timeout_secs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSection {
    pub workers: usize,
    pub steps: u64,
    pub seed: u64,
    pub dtype: DType,
    /// Evaluate on held-out data every this many steps; 0 = first and last only.
    pub eval_every: u64,
    pub record_wall_clock: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub data: DataConfig,
    pub optimizer: OptimizerConfig,
    pub transport: TransportConfig,
    pub run: RunSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig {
                kind: ModelKind::Mlp,
                hidden: 64,
                layers: 1,
                activation: Activation::Tanh,
                bias: true,
                rows: 8,
                cols: 8,
            },
            data: DataConfig {
                features: 64,
                classes: 8,
                outputs: 8,
                samples: 8192,
                eval_samples: 1024,
                batch: 64,
                noise: 0.1,
                separation: 0.5,
            },
            optimizer: OptimizerConfig {
                kind: OptimizerKind::Demo,
                lr: 0.01,
                beta: None,
                chunk: 8,
                k: 4,
                signum: true,
                merge: MergeRule::ContributorAverage,
                weight_decay: None,
                beta1: 0.9,
                beta2: 0.95,
                eps: 1e-8,
                warmup_steps: 0,
            },
            transport: TransportConfig {
                kind: TransportKind::Memory,
                host: "127.0.0.1".into(),
                base_port: 0,
                timeout_secs: 30.0,
            },
            run: RunSection {
                workers: 4,
                steps: 2000,
                seed: 0,
                dtype: DType::F32,
                eval_every: 0,
                record_wall_clock: false,
            },
        }
    }
}

fn pick<T: Copy>(s: &str, options: &[(&str, T)]) -> Result<T, String> {
    options.iter().find(|(n, _)| *n == s).map(|(_, v)| *v).ok_or_else(|| {
        let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
        format!("unknown value \"{s}\", expected one of {}", names.join(", "))
    })
}

impl RunConfig {
    pub const SECTIONS: [&'static str; 5] = ["model", "data", "optimizer", "transport", "run"];

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        let mut section: Option<String> = None;
        for (i, raw_line) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = strip_comment(raw_line);
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            let indent = line.len() - line.trim_start().len() + 1;
            if let Some(inner) = trimmed.strip_prefix('[') {
                let name = inner
                    .strip_suffix(']')
                    .ok_or_else(|| ConfigError::at(line_no, indent, "unterminated section header"))?
                    .trim();
                if !Self::SECTIONS.contains(&name) {
                    return Err(ConfigError::at(line_no, indent + 1, format!("unknown section [{name}]")));
                }
                section = Some(name.to_string());
                continue;
            }
            let eq = line
                .find('=')
                .ok_or_else(|| ConfigError::at(line_no, indent, "expected `key = value`"))?;
            let key = line[..eq].trim();
            if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(ConfigError::at(line_no, indent, format!("malformed key `{key}`")));
            }
            let sec = section
                .as_deref()
                .ok_or_else(|| ConfigError::at(line_no, indent, "key outside of any section"))?;
            let value_col = eq + 2 + (line[eq + 1..].len() - line[eq + 1..].trim_start().len());
            let value = Value::parse(&line[eq + 1..], false).map_err(|m| ConfigError::at(line_no, value_col, m))?;
            cfg.set(sec, key, &value).map_err(|(on_key, m)| {
                ConfigError::at(line_no, if on_key { indent } else { value_col }, m)
            })?;
        }
        Ok(cfg)
    }

    /// Applies `section.key=value`; bare words are accepted as strings.
    pub fn apply_override(&mut self, spec: &str) -> Result<(), ConfigError> {
        let (path, raw) = spec
            .split_once('=')
            .ok_or_else(|| ConfigError::new(format!("override `{spec}` is not section.key=value")))?;
        let (sec, key) = path
            .trim()
            .split_once('.')
            .ok_or_else(|| ConfigError::new(format!("override `{spec}` is not section.key=value")))?;
        if !Self::SECTIONS.contains(&sec) {
            return Err(ConfigError::new(format!("override `{spec}`: unknown section [{sec}]")));
        }
        let value = Value::parse(raw, true).map_err(|m| ConfigError::new(format!("override `{spec}`: {m}")))?;
        self.set(sec, key, &value)
            .map_err(|(_, m)| ConfigError::new(format!("override `{spec}`: {m}")))
    }

    /// Sets one key. The error flag tells whether the key (true) or the
    /// value (false) was at fault.
    fn set(&mut self, section: &str, key: &str, v: &Value) -> Result<(), (bool, String)> {
        let val = |r: Result<(), String>| r.map_err(|m| (false, format!("{section}.{key}: {m}")));
        let unknown = || Err((true, format!("unknown key `{key}` in [{section}]")));
        match section {
            "model" => {
                let m = &mut self.model;
                match key {
                    "kind" => val(v.as_str().and_then(|s| {
                        m.kind = pick(
                            s,
                            &[
                                ("quadratic", ModelKind::Quadratic),
                                ("linear", ModelKind::Linear),
                                ("logistic", ModelKind::Logistic),
                                ("mlp", ModelKind::Mlp),
                            ],
                        )?;
                        Ok(())
                    })),
                    "hidden" => val(v.as_usize().map(|x| m.hidden = x)),
                    "layers" => val(v.as_usize().map(|x| m.layers = x)),
                    "activation" => val(v.as_str().and_then(|s| {
                        m.activation = Activation::parse(s).ok_or_else(|| format!("unknown activation \"{s}\""))?;
                        Ok(())
                    })),
                    "bias" => val(v.as_bool().map(|x| m.bias = x)),
                    "rows" => val(v.as_usize().map(|x| m.rows = x)),
                    "cols" => val(v.as_usize().map(|x| m.cols = x)),
                    _ => unknown(),
                }
            }
            "data" => {
                let d = &mut self.data;
                match key {
                    "features" => val(v.as_usize().map(|x| d.features = x)),
                    "classes" => val(v.as_usize().map(|x| d.classes = x)),
                    "outputs" => val(v.as_usize().map(|x| d.outputs = x)),
                    "samples" => val(v.as_usize().map(|x| d.samples = x)),
                    "eval_samples" => val(v.as_usize().map(|x| d.eval_samples = x)),
                    "batch" => val(v.as_usize().map(|x| d.batch = x)),
                    "noise" => val(v.as_real().map(|x| d.noise = x)),
                    "separation" => val(v.as_real().map(|x| d.separation = x)),
                    _ => unknown(),
                }
            }
            "optimizer" => {
                let o = &mut self.optimizer;
                match key {
                    "kind" => val(v.as_str().and_then(|s| {
                        o.kind = pick(
                            s,
                            &[
                                ("demo", OptimizerKind::Demo),
                                ("sgd", OptimizerKind::Sgd),
                                ("signum", OptimizerKind::Signum),
                                ("adamw", OptimizerKind::AdamW),
                            ],
                        )?;
                        Ok(())
                    })),
                    "lr" => val(v.as_real().map(|x| o.lr = x)),
                    "beta" => val(v.as_real().map(|x| o.beta = Some(x))),
                    "chunk" => val(v.as_usize().map(|x| o.chunk = x)),
                    "k" => val(v.as_usize().map(|x| o.k = x)),
                    "signum" => val(v.as_bool().map(|x| o.signum = x)),
                    "merge" => val(v.as_str().and_then(|s| {
                        o.merge = MergeRule::parse(s).ok_or_else(|| format!("unknown merge rule \"{s}\""))?;
                        Ok(())
                    })),
                    "weight_decay" => val(v.as_real().map(|x| o.weight_decay = Some(x))),
                    "beta1" => val(v.as_real().map(|x| o.beta1 = x)),
                    "beta2" => val(v.as_real().map(|x| o.beta2 = x)),
                    "eps" => val(v.as_real().map(|x| o.eps = x)),
                    "warmup_steps" => val(v.as_uint().map(|x| o.warmup_steps = x)),
                    _ => unknown(),
                }
            }
            "transport" => {
                let t = &mut self.transport;
                match key {
                    "kind" => val(v.as_str().and_then(|s| {
                        t.kind = pick(
                            s,
                            &[
                                ("memory", TransportKind::Memory),
                                ("tcp", TransportKind::Tcp),
                                ("local", TransportKind::Local),
                            ],
                        )?;
                        Ok(())
                    })),
                    "host" => val(v.as_str().map(|s| t.host = s.to_string())),
                    "base_port" => val(v.as_uint().and_then(|x| {
                        t.base_port = u16::try_from(x).map_err(|_| format!("port {x} out of range"))?;
                        Ok(())
                    })),
                    "timeout_secs" => val(v.as_real().map(|x| t.timeout_secs = x)),
                    _ => unknown(),
                }
            }
            "run" => {
                let r = &mut self.run;
                match key {
                    "workers" => val(v.as_usize().map(|x| r.workers = x)),
                    "steps" => val(v.as_uint().map(|x| r.steps = x)),
                    "seed" => val(v.as_uint().map(|x| r.seed = x)),
                    "dtype" => val(v.as_str().and_then(|s| {
                        r.dtype = pick(s, &[("f32", DType::F32), ("f64", DType::F64)])?;
                        Ok(())
                    })),
                    "eval_every" => val(v.as_uint().map(|x| r.eval_every = x)),
                    "record_wall_clock" => val(v.as_bool().map(|x| r.record_wall_clock = x)),
                    _ => unknown(),
                }
            }
            _ => Err((true, format!("unknown section [{section}]"))),
        }
    }

    /// Checks cross-field constraints before a run.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let e = |m: String| Err(ConfigError::new(m));
        let (m, d, o, t, r) = (&self.model, &self.data, &self.optimizer, &self.transport, &self.run);
        if r.workers == 0 || r.workers > u16::MAX as usize {
            return e(format!("run.workers must be in [1, {}]", u16::MAX));
        }
        if d.batch == 0 {
            return e("data.batch must be at least 1".into());
        }
        if d.samples < r.workers {
            return e(format!("data.samples ({}) must be at least run.workers ({})", d.samples, r.workers));
        }
        if d.eval_samples == 0 {
            return e("data.eval_samples must be at least 1".into());
        }
        if !(d.noise >= 0.0) || !(d.separation >= 0.0) {
            return e("data.noise and data.separation must be non-negative".into());
        }
        match m.kind {
            ModelKind::Quadratic if m.rows == 0 || m.cols == 0 => return e("model.rows and model.cols must be >= 1".into()),
            ModelKind::Linear if d.features == 0 || d.outputs == 0 => {
                return e("data.features and data.outputs must be >= 1".into())
            }
            ModelKind::Logistic | ModelKind::Mlp if d.features == 0 || d.classes < 2 => {
                return e("blob data needs features >= 1 and classes >= 2".into())
            }
            ModelKind::Mlp if !(1..=2).contains(&m.layers) || m.hidden == 0 => {
                return e("model.layers must be 1 or 2 and model.hidden >= 1".into())
            }
            _ => {}
        }
        if !(o.lr > 0.0 && o.lr.is_finite()) {
            return e(format!("optimizer.lr must be positive, got {}", o.lr));
        }
        let beta = o.beta();
        match o.kind {
            OptimizerKind::Demo if !(beta > 0.0 && beta < 1.0) => {
                return e(format!("optimizer.beta must be in (0, 1), got {beta}"))
            }
            OptimizerKind::Sgd | OptimizerKind::Signum if !(0.0..1.0).contains(&beta) => {
                return e(format!("optimizer.beta must be in [0, 1), got {beta}"))
            }
            OptimizerKind::AdamW
                if !(0.0..1.0).contains(&o.beta1) || !(0.0..1.0).contains(&o.beta2) || !(o.eps > 0.0) =>
            {
                return e("optimizer.beta1/beta2 must be in [0, 1) and eps > 0".into())
            }
            _ => {}
        }
        if o.k == 0 || o.chunk == 0 {
            return e("optimizer.k and optimizer.chunk must be >= 1".into());
        }
        if !(o.weight_decay() >= 0.0) {
            return e("optimizer.weight_decay must be non-negative".into());
        }
        if !(t.timeout_secs > 0.0 && t.timeout_secs.is_finite()) {
            return e("transport.timeout_secs must be positive".into());
        }
        if t.base_port != 0 && (t.base_port as usize + r.workers - 1) > u16::MAX as usize {
            return e("transport.base_port + workers exceeds the port range".into());
        }
        if r.steps > u32::MAX as u64 {
            return e("run.steps must fit in 32 bits".into());
        }
        Ok(())
    }

    /// Canonical text form; parsing it yields the same config.
    pub fn to_text(&self) -> String {
        let (m, d, o, t, r) = (&self.model, &self.data, &self.optimizer, &self.transport, &self.run);
        let act = match m.activation {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        };
        let mut s = String::new();
        s += &format!(
            "[model]\nkind = \"{}\"\nhidden = {}\nlayers = {}\nactivation = \"{act}\"\nbias = {}\nrows = {}\ncols = {}\n\n",
            m.kind.name(),
            m.hidden,
            m.layers,
            m.bias,
            m.rows,
            m.cols
        );
        s += &format!(
            "[data]\nfeatures = {}\nclasses = {}\noutputs = {}\nsamples = {}\neval_samples = {}\nbatch = {}\nnoise = {:?}\nseparation = {:?}\n\n",
            d.features, d.classes, d.outputs, d.samples, d.eval_samples, d.batch, d.noise, d.separation
        );
        s += &format!(
            "[optimizer]\nkind = \"{}\"\nlr = {:?}\nbeta = {:?}\nchunk = {}\nk = {}\nsignum = {}\nmerge = \"{}\"\nweight_decay = {:?}\nbeta1 = {:?}\nbeta2 = {:?}\neps = {:?}\nwarmup_steps = {}\n\n",
            o.kind.name(),
            o.lr,
            o.beta(),
            o.chunk,
            o.k,
            o.signum,
            o.merge.name(),
            o.weight_decay(),
            o.beta1,
            o.beta2,
            o.eps,
            o.warmup_steps
        );
        s += &format!(
            "[transport]\nkind = \"{}\"\nhost = \"{}\"\nbase_port = {}\ntimeout_secs = {:?}\n\n",
            t.kind.name(),
            t.host.replace('\\', "\\\\").replace('"', "\\\""),
            t.base_port,
            t.timeout_secs
        );
        s += &format!(
            "[run]\nworkers = {}\nsteps = {}\nseed = {}\ndtype = \"{}\"\neval_every = {}\nrecord_wall_clock = {}\n",
            r.workers,
            r.steps,
            r.seed,
            r.dtype.name(),
            r.eval_every,
            r.record_wall_clock
        );
        s
    }
}

/// Drops a trailing `#` comment that is not inside a quoted string.
fn strip_comment(line: &str) -> &str {
    let mut in_str = false;
    let mut escaped = false;
    for (i, c) in line.char_indices() {
        match c {
            _ if escaped => escaped = false,
            '\\' if in_str => escaped = true,
            '"' => in_str = !in_str,
            '#' if !in_str => return &line[..i],
            _ => {}
        }
    }
    line
}
