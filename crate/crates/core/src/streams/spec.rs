//! Benchmark specification and its flat key-value file format.
//!
//! ```text
//! # comment
//! name = synth-4
//! dims = 16
//! classes = 4
//! seed = 7
//! noise = 1.0
//! separation = 5.0
//! sizes = 2000, 1000, 500        # source train, per-target train, per-domain test
//! targets = 3
//! domains[1].rotation = 20       # degrees; domain 0 is the source
//! domains[1].translation = 0.4   # scalar (broadcast) or comma-separated vector
//! domains[1].scale = 1.1
//! domains[1].noise = 1.5         # multiplies the class-conditional std
//! domains[1].flip = 0.0
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Affine shift applied to a domain: `x' = scale * R(rotation) x + translation`,
/// where `R` rotates every coordinate plane `(2i, 2i+1)` by the same angle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub rotation_deg: f64,
    /// Either one value broadcast to every coordinate, or one per coordinate.
    pub translation: Vec<f64>,
    pub scale: f64,
    /// Multiplier on the class-conditional standard deviation.
    pub noise: f64,
    /// Probability of replacing a label by the next class (conditional shift).
    pub flip: f64,
}

impl DomainSpec {
    pub fn identity() -> Self {
        Self { rotation_deg: 0.0, translation: vec![0.0], scale: 1.0, noise: 1.0, flip: 0.0 }
    }

    pub fn is_identity(&self) -> bool {
        self.rotation_deg == 0.0 && self.translation.iter().all(|&t| t == 0.0) && self.scale == 1.0
            && self.noise == 1.0
            && self.flip == 0.0
    }

    pub fn translation_at(&self, i: usize) -> f64 {
        if self.translation.len() == 1 {
            self.translation[0]
        } else {
            self.translation[i]
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let (s, c) = self.rotation_deg.to_radians().sin_cos();
        let mut out = x.to_vec();
        for pair in out.chunks_exact_mut(2) {
            let (a, b) = (pair[0], pair[1]);
            pair[0] = c * a - s * b;
            pair[1] = s * a + c * b;
        }
        for (i, v) in out.iter_mut().enumerate() {
            *v = self.scale * *v + self.translation_at(i);
        }
        out
    }

    fn validate(&self, dims: usize, which: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::config(format!("domains[{which}]: {msg}")));
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return bad(format!("scale must be positive (got {})", self.scale));
        }
        if !(self.noise > 0.0 && self.noise.is_finite()) {
            return bad(format!("noise must be positive (got {})", self.noise));
        }
        if !(0.0..0.5).contains(&self.flip) {
            return bad(format!("flip must lie in [0, 0.5) (got {})", self.flip));
        }
        if self.translation.len() != 1 && self.translation.len() != dims {
            return bad(format!("translation needs 1 or {dims} values (got {})", self.translation.len()));
        }
        if !self.rotation_deg.is_finite() || self.translation.iter().any(|t| !t.is_finite()) {
            return bad("values must be finite".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSpec {
    pub name: String,
    pub dims: usize,
    pub classes: usize,
    /// Data seed; fixes class means and every generated sample.
    pub seed: u64,
    /// Per-coordinate standard deviation of the class-conditional Gaussians.
    pub noise: f64,
    /// Norm of every class mean.
    pub separation: f64,
    pub source_train: usize,
    pub target_train: usize,
    pub test_size: usize,
    /// Index 0 is the source domain; the rest are targets in stream order.
    pub domains: Vec<DomainSpec>,
}

impl BenchmarkSpec {
    /// The default benchmark: 16-D, 4 classes, source plus 3 rotated and
    /// contracted targets. The rotations are not nested, so no single drift
    /// direction carries one target into the next.
    pub fn synth4() -> Self {
        let target = |rotation_deg: f64, scale: f64| DomainSpec { rotation_deg, scale, ..DomainSpec::identity() };
        Self {
            name: "synth-4".into(),
            dims: 16,
            classes: 4,
            seed: 7,
            noise: 1.0,
            separation: 5.0,
            source_train: 2000,
            target_train: 1000,
            test_size: 500,
            domains: vec![DomainSpec::identity(), target(40.0, 0.8), target(-40.0, 0.7), target(90.0, 0.6)],
        }
    }

    pub fn targets(&self) -> usize {
        self.domains.len() - 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims == 0 {
            return Err(Error::config("dims must be positive"));
        }
        if self.classes < 2 {
            return Err(Error::config("classes must be at least 2"));
        }
        if self.classes > self.dims {
            return Err(Error::config("classes must not exceed dims (class means are orthogonal)"));
        }
        if !(self.noise > 0.0 && self.noise.is_finite()) {
            return Err(Error::config("noise must be positive"));
        }
        if !(self.separation >= 0.0 && self.separation.is_finite()) {
            return Err(Error::config("separation must be non-negative"));
        }
        if self.source_train == 0 || self.test_size == 0 {
            return Err(Error::config("source train and test sizes must be positive"));
        }
        if self.domains.is_empty() {
            return Err(Error::config("at least the source domain is required"));
        }
        for (i, d) in self.domains.iter().enumerate() {
            d.validate(self.dims, i)?;
        }
        Ok(())
    }

    pub fn parse(text: &str, path: &str) -> Result<Self> {
        let kv = parse_kv(text, path)?;
        let mut spec = Self::synth4();
        let mut targets = None;
        let mut overrides: BTreeMap<usize, Vec<(String, String, usize)>> = BTreeMap::new();
        for (key, (value, line)) in &kv {
            let err = |msg: String| Error::Parse { path: path.into(), line: *line, msg };
            let num = |v: &str| v.parse::<f64>().map_err(|_| err(format!("{key}: expected a number, got {v:?}")));
            let count = |v: &str| v.parse::<usize>().map_err(|_| err(format!("{key}: expected a count, got {v:?}")));
            match key.as_str() {
                "name" => spec.name = value.clone(),
                "dims" => spec.dims = count(value)?,
                "classes" => spec.classes = count(value)?,
                "seed" => spec.seed = value.parse().map_err(|_| err(format!("seed: expected u64, got {value:?}")))?,
                "noise" => spec.noise = num(value)?,
                "separation" => spec.separation = num(value)?,
                "sizes" => {
                    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
                    if parts.len() != 3 {
                        return Err(err("sizes needs three counts: source_train, target_train, test".into()));
                    }
                    spec.source_train = count(parts[0])?;
                    spec.target_train = count(parts[1])?;
                    spec.test_size = count(parts[2])?;
                }
                "targets" => targets = Some(count(value)?),
                k if k.starts_with("domains[") => {
                    let (idx, field) = k["domains[".len()..]
                        .split_once("].")
                        .ok_or_else(|| err(format!("malformed key {k:?}")))?;
                    let idx = count(idx)?;
                    overrides.entry(idx).or_default().push((field.to_string(), value.clone(), *line));
                }
                other => return Err(err(format!("unknown key {other:?}"))),
            }
        }
        // Any explicit domain layout starts from identity transforms.
        let n_targets = targets.unwrap_or_else(|| overrides.keys().max().copied().unwrap_or(0));
        if targets.is_some() || !overrides.is_empty() {
            spec.domains = vec![DomainSpec::identity(); n_targets + 1];
        }
        for (idx, fields) in overrides {
            let Some(d) = spec.domains.get_mut(idx) else {
                let line = fields[0].2;
                return Err(Error::Parse { path: path.into(), line, msg: format!("domains[{idx}] exceeds targets = {n_targets}") });
            };
            for (field, value, line) in fields {
                let err = |msg: String| Error::Parse { path: path.into(), line, msg };
                let num = |v: &str| v.trim().parse::<f64>().map_err(|_| err(format!("{field}: expected a number, got {v:?}")));
                match field.as_str() {
                    "rotation" => d.rotation_deg = num(&value)?,
                    "translation" => d.translation = value.split(',').map(num).collect::<Result<_>>()?,
                    "scale" => d.scale = num(&value)?,
                    "noise" => d.noise = num(&value)?,
                    "flip" => d.flip = num(&value)?,
                    other => return Err(err(format!("unknown domain field {other:?}"))),
                }
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Serialises back into the key-value format; `parse(to_kv())` is lossless.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        let list = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ");
        out.push_str(&format!("name = {}\n", self.name));
        out.push_str(&format!("dims = {}\nclasses = {}\nseed = {}\n", self.dims, self.classes, self.seed));
        out.push_str(&format!("noise = {:?}\nseparation = {:?}\n", self.noise, self.separation));
        out.push_str(&format!("sizes = {}, {}, {}\n", self.source_train, self.target_train, self.test_size));
        out.push_str(&format!("targets = {}\n", self.targets()));
        for (i, d) in self.domains.iter().enumerate() {
            out.push_str(&format!("domains[{i}].rotation = {:?}\n", d.rotation_deg));
            out.push_str(&format!("domains[{i}].translation = {}\n", list(&d.translation)));
            out.push_str(&format!("domains[{i}].scale = {:?}\n", d.scale));
            out.push_str(&format!("domains[{i}].noise = {:?}\n", d.noise));
            out.push_str(&format!("domains[{i}].flip = {:?}\n", d.flip));
        }
        out
    }
}

/// Parses `key = value` lines; `#` starts a comment. Later duplicates are an error.
pub(crate) fn parse_kv(text: &str, path: &str) -> Result<BTreeMap<String, (String, usize)>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (k, v) = content.split_once('=').ok_or_else(|| Error::Parse {
            path: path.into(),
            line,
            msg: format!("expected `key = value`, got {content:?}"),
        })?;
        let (k, v) = (k.trim().to_string(), v.trim().to_string());
        if k.is_empty() {
            return Err(Error::Parse { path: path.into(), line, msg: "empty key".into() });
        }
        if out.insert(k.clone(), (v, line)).is_some() {
            return Err(Error::Parse { path: path.into(), line, msg: format!("duplicate key {k:?}") });
        }
    }
    Ok(out)
}
