//! Reaction terms `f` with `f(0) > 0`, `f' ≥ 0` and superlinear growth.

use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum NonlinearityKind {
    /// `e^u`.
    Exponential,
    /// `(1+u)^p`.
    Power(f64),
    /// Monotone cubic interpolant of tabulated `(u, f(u))` pairs.
    Table(MonotoneCubic),
}

/// A reaction term with its derivative.
#[derive(Debug, Clone, PartialEq)]
pub struct Nonlinearity {
    kind: NonlinearityKind,
    spec: String,
}

impl Nonlinearity {
    pub fn exponential() -> Self {
        Self { kind: NonlinearityKind::Exponential, spec: "exp".into() }
    }

    pub fn power(p: f64) -> Result<Self> {
        let f = Self { kind: NonlinearityKind::Power(p), spec: format!("power:{p}") };
        f.validate()?;
        Ok(f)
    }

    /// Interpolates tabulated samples; `us` strictly increasing and `fs` nondecreasing.
    pub fn from_table(us: Vec<f64>, fs: Vec<f64>, label: &str) -> Result<Self> {
        let table = MonotoneCubic::new(us, fs)?;
        let f = Self { kind: NonlinearityKind::Table(table), spec: format!("table:{label}") };
        f.validate()?;
        Ok(f)
    }

    /// Parses `exp`, `power:p` or `table:path` (CSV lines `u,f`, `#` comments allowed).
    pub fn parse(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        if spec == "exp" {
            return Ok(Self::exponential());
        }
        if let Some(p) = spec.strip_prefix("power:") {
            let p: f64 = p
                .trim()
                .parse()
                .map_err(|_| Error::Nonlinearity(format!("cannot parse exponent in `{spec}`")))?;
            return Self::power(p);
        }
        if let Some(path) = spec.strip_prefix("table:") {
            return Self::load_table(Path::new(path.trim()));
        }
        Err(Error::Nonlinearity(format!("unknown nonlinearity `{spec}` (expected exp, power:p or table:path)")))
    }

    fn load_table(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut us = Vec::new();
        let mut fs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split(',').map(str::trim);
            let parsed = (parts.next().map(str::parse::<f64>), parts.next().map(str::parse::<f64>));
            match parsed {
                (Some(Ok(u)), Some(Ok(f))) => {
                    us.push(u);
                    fs.push(f);
                }
                // a header row is tolerated on the first data line
                _ if us.is_empty() && i < 2 => continue,
                _ => return Err(Error::Nonlinearity(format!("{}: bad table row {}", path.display(), i + 1))),
            }
        }
        Self::from_table(us, fs, &path.display().to_string())
    }

    pub fn kind(&self) -> &NonlinearityKind {
        &self.kind
    }

    pub fn spec(&self) -> &str {
        &self.spec
    }

    pub fn eval(&self, u: f64) -> f64 {
        match &self.kind {
            NonlinearityKind::Exponential => u.exp(),
            NonlinearityKind::Power(p) => (1.0 + u).max(0.0).powf(*p),
            NonlinearityKind::Table(t) => t.eval(u),
        }
    }

    pub fn deriv(&self, u: f64) -> f64 {
        match &self.kind {
            NonlinearityKind::Exponential => u.exp(),
            NonlinearityKind::Power(p) => {
                let b = (1.0 + u).max(0.0);
                if b == 0.0 {
                    0.0
                } else {
                    p * b.powf(p - 1.0)
                }
            }
            NonlinearityKind::Table(t) => t.deriv(u),
        }
    }

    /// Checks `f(0) > 0`, `f' ≥ 0` on `[0, 100]` and the superlinearity proxy
    /// `f(100)/100 > f(1)`.
    pub fn validate(&self) -> Result<()> {
        let f0 = self.eval(0.0);
        if !(f0 > 0.0) {
            return Err(Error::Nonlinearity(format!("f(0) = {f0} must be positive")));
        }
        for i in 0..=1000 {
            let u = i as f64 * 0.1;
            let d = self.deriv(u);
            if !(d >= 0.0) {
                return Err(Error::Nonlinearity(format!("f'({u}) = {d} is negative")));
            }
        }
        if !(self.eval(100.0) / 100.0 > self.eval(1.0)) {
            return Err(Error::Nonlinearity("f(u)/u does not grow between u = 1 and u = 100".into()));
        }
        Ok(())
    }
}

impl fmt::Display for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.spec)
    }
}

/// Fritsch–Carlson monotone cubic Hermite interpolant, extended linearly past the ends.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneCubic {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl MonotoneCubic {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() || x.len() < 2 {
            return Err(Error::Nonlinearity("table needs at least two (u, f) pairs".into()));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Nonlinearity("table u values must be strictly increasing".into()));
        }
        if y.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Nonlinearity("table f values must be nondecreasing".into()));
        }
        let n = x.len();
        let d: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / (x[i + 1] - x[i])).collect();
        let mut m = vec![0.0; n];
        m[0] = d[0];
        m[n - 1] = d[n - 2];
        for i in 1..n - 1 {
            m[i] = if d[i - 1] * d[i] <= 0.0 { 0.0 } else { 0.5 * (d[i - 1] + d[i]) };
        }
        for i in 0..n - 1 {
            if d[i] == 0.0 {
                m[i] = 0.0;
                m[i + 1] = 0.0;
                continue;
            }
            let a = m[i] / d[i];
            let b = m[i + 1] / d[i];
            let r = a * a + b * b;
            if r > 9.0 {
                let t = 3.0 / r.sqrt();
                m[i] = t * a * d[i];
                m[i + 1] = t * b * d[i];
            }
        }
        Ok(Self { x, y, m })
    }

    fn segment(&self, u: f64) -> usize {
        match self.x.binary_search_by(|v| v.total_cmp(&u)) {
            Ok(i) => i.min(self.x.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.x.len() - 2),
        }
    }

    pub fn eval(&self, u: f64) -> f64 {
        let n = self.x.len();
        if u <= self.x[0] {
            return self.y[0] + self.m[0] * (u - self.x[0]);
        }
        if u >= self.x[n - 1] {
            return self.y[n - 1] + self.m[n - 1] * (u - self.x[n - 1]);
        }
        let i = self.segment(u);
        let h = self.x[i + 1] - self.x[i];
        let t = (u - self.x[i]) / h;
        let (t2, t3) = (t * t, t * t * t);
        (2.0 * t3 - 3.0 * t2 + 1.0) * self.y[i]
            + (t3 - 2.0 * t2 + t) * h * self.m[i]
            + (-2.0 * t3 + 3.0 * t2) * self.y[i + 1]
            + (t3 - t2) * h * self.m[i + 1]
    }

    pub fn deriv(&self, u: f64) -> f64 {
        let n = self.x.len();
        if u <= self.x[0] {
            return self.m[0];
        }
        if u >= self.x[n - 1] {
            return self.m[n - 1];
        }
        let i = self.segment(u);
        let h = self.x[i + 1] - self.x[i];
        let t = (u - self.x[i]) / h;
        let t2 = t * t;
        (6.0 * t2 - 6.0 * t) / h * self.y[i]
            + (3.0 * t2 - 4.0 * t + 1.0) * self.m[i]
            + (-6.0 * t2 + 6.0 * t) / h * self.y[i + 1]
            + (3.0 * t2 - 2.0 * t) * self.m[i + 1]
    }
}
