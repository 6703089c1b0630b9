use std::fmt;
use std::path::{Path, PathBuf};

use icb_core::combinatorics::{TheoremInstance, LATTICE_MAX_DIM, LATTICE_MAX_RADIUS};
use icb_core::seprank::{TemplateKind, DEFAULT_TAU_REL, MAX_GRID};
use icb_designer::Arrangement;
use serde::{Deserialize, Serialize};

/// A validation failure tied to a dotted field path.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: String,
    pub msg: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.msg)
    }
}

impl std::error::Error for ConfigError {}

fn fail(path: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError { path: path.to_string(), msg: msg.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub seed: u64,
    pub gap: GapSection,
    pub bounds: BoundsSection,
    pub sphere: SphereSection,
    pub design: DesignSection,
}

impl Default for Config {
    fn default() -> Self {
        Self { seed: 1, gap: GapSection::default(), bounds: BoundsSection::default(), sphere: SphereSection::default(), design: DesignSection::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GapSection {
    /// Swept depths; every depth runs every `eta`.
    pub layers: Vec<usize>,
    pub width: usize,
    pub heads: usize,
    pub seq_len: usize,
    pub vocab: usize,
    pub etas: Vec<f64>,
    pub grid: usize,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub templates: TemplateKind,
    pub tau_rel: f64,
}

impl Default for GapSection {
    fn default() -> Self {
        Self {
            layers: vec![2],
            width: 4,
            heads: 2,
            seq_len: 2,
            vocab: 8,
            etas: vec![1e-1, 1e-2, 1e-3, 1e-4],
            grid: 24,
            lambda_min: 0.3,
            lambda_max: 0.7,
            templates: TemplateKind::Sphere,
            tau_rel: DEFAULT_TAU_REL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinomCase {
    pub k: u64,
    pub eta: f64,
    pub s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundsSection {
    /// Sweeps run `K = 0..=k_max`.
    pub k_max: u64,
    pub ms: Vec<u64>,
    pub etas: Vec<f64>,
    pub s_values: Vec<f64>,
    pub lattice_dims: Vec<usize>,
    pub lattice_radii: Vec<f64>,
    pub binom: Vec<BinomCase>,
    pub theorems: Vec<TheoremInstance>,
}

fn theorem(width: u64, seq_len: u64, heads: u64, layers: u32, eta: f64) -> TheoremInstance {
    TheoremInstance { width, seq_len, heads, layers, eta, lambda_min: 1.0, lambda_max: 1.0, eps: 1.0, coeff_bound: 1.0 }
}

impl Default for BoundsSection {
    fn default() -> Self {
        Self {
            k_max: 16,
            ms: vec![2, 3],
            etas: vec![0.1, 0.5, 1.0],
            s_values: vec![0.05, 0.2, (-1.5f64).exp()],
            lattice_dims: (2..=6).collect(),
            lattice_radii: (2..=8).map(f64::from).collect(),
            binom: vec![BinomCase { k: 30, eta: 0.5, s: 0.1 }],
            theorems: vec![theorem(3, 2, 1, 4, 0.5), theorem(4, 2, 1, 6, 0.5), theorem(6, 2, 1, 6, 0.5), theorem(8, 2, 1, 6, 0.5)],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrobeniusCase {
    pub d: usize,
    pub lambda: u32,
    pub n: usize,
    pub trials: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstructionCase {
    pub n: usize,
    pub width: usize,
    pub heads: usize,
    pub seq_len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SphereSection {
    pub moment_dims: Vec<usize>,
    pub moment_samples: usize,
    pub bound_dims: Vec<usize>,
    pub bound_lambda_max: u32,
    pub bound_samples: usize,
    pub integrand_dims: Vec<usize>,
    pub integrand_lambda_max: u32,
    pub integrand_grid: usize,
    pub frobenius: Vec<FrobeniusCase>,
    pub gram_count: usize,
    pub construction: Vec<ConstructionCase>,
}

impl Default for SphereSection {
    fn default() -> Self {
        Self {
            moment_dims: (1..=8).collect(),
            moment_samples: 1_000_000,
            bound_dims: vec![2, 3],
            bound_lambda_max: 10,
            bound_samples: 100_000,
            integrand_dims: (1..=8).collect(),
            integrand_lambda_max: 10,
            integrand_grid: 10_000,
            frobenius: vec![FrobeniusCase { d: 2, lambda: 2, n: 8, trials: 200 }],
            gram_count: 100,
            construction: vec![ConstructionCase { n: 4, width: 8, heads: 2, seq_len: 3 }],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DesignSection {
    pub tasks: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    /// Regular examples for batch mixing, one per sentence.
    pub regular: Option<PathBuf>,
    pub variant: Arrangement,
    pub k: usize,
    pub threshold: f64,
    pub max_tokens: usize,
    pub sep_token: u32,
    pub batch_size: Option<usize>,
    pub dedup: bool,
    pub anchors_as_neighbors: bool,
    pub approximate: bool,
    pub nsw_m: usize,
    pub nsw_ef: usize,
}

impl Default for DesignSection {
    fn default() -> Self {
        Self {
            tasks: None,
            corpus: None,
            regular: None,
            variant: Arrangement::NeighborsInContext,
            k: 10,
            threshold: icb_designer::DEFAULT_THRESHOLD,
            max_tokens: icb_designer::DEFAULT_BUDGET,
            sep_token: 0,
            batch_size: None,
            dedup: false,
            anchors_as_neighbors: true,
            approximate: false,
            nsw_m: 12,
            nsw_ef: 64,
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| fail("<config>", format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let de = toml::Deserializer::new(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let msg = e.into_inner().message().trim().to_string();
            fail(if path == "." { "<config>" } else { &path }, msg)
        })
    }
}

fn positive_finite(path: &str, x: f64) -> Result<(), ConfigError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(fail(path, format!("must be positive and finite, got {x}")))
    }
}

impl GapSection {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.layers.contains(&0) {
            return Err(fail("gap.layers", "depths must be positive"));
        }
        if self.heads == 0 || self.width == 0 || !self.width.is_multiple_of(self.heads) {
            return Err(fail("gap.heads", format!("must be positive and divide width {}", self.width)));
        }
        if self.seq_len == 0 {
            return Err(fail("gap.seq_len", "must be positive"));
        }
        if self.vocab == 0 {
            return Err(fail("gap.vocab", "must be positive"));
        }
        for (i, &e) in self.etas.iter().enumerate() {
            positive_finite(&format!("gap.etas[{i}]"), e)?;
        }
        if self.grid == 0 || self.grid > MAX_GRID {
            return Err(fail("gap.grid", format!("must lie in 1..={MAX_GRID}, got {}", self.grid)));
        }
        positive_finite("gap.lambda_min", self.lambda_min)?;
        if self.lambda_max < self.lambda_min || !self.lambda_max.is_finite() {
            return Err(fail("gap.lambda_max", "must be finite and at least lambda_min"));
        }
        if !(self.tau_rel > 0.0 && self.tau_rel < 1.0) {
            return Err(fail("gap.tau_rel", format!("must lie in (0, 1), got {}", self.tau_rel)));
        }
        Ok(())
    }
}

impl BoundsSection {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.k_max > 24 {
            return Err(fail("bounds.k_max", format!("enumeration is limited to 24, got {}", self.k_max)));
        }
        for (i, &m) in self.ms.iter().enumerate() {
            if !(1..=4).contains(&m) {
                return Err(fail(&format!("bounds.ms[{i}]"), format!("must lie in 1..=4, got {m}")));
            }
        }
        for (i, &e) in self.etas.iter().enumerate() {
            positive_finite(&format!("bounds.etas[{i}]"), e)?;
        }
        for (i, &s) in self.s_values.iter().enumerate() {
            if !(s > 0.0 && s <= 1.0) {
                return Err(fail(&format!("bounds.s_values[{i}]"), format!("must lie in (0, 1], got {s}")));
            }
        }
        for (i, &d) in self.lattice_dims.iter().enumerate() {
            if d == 0 || d > LATTICE_MAX_DIM {
                return Err(fail(&format!("bounds.lattice_dims[{i}]"), format!("must lie in 1..={LATTICE_MAX_DIM}")));
            }
        }
        for (i, &r) in self.lattice_radii.iter().enumerate() {
            if !(0.0..=LATTICE_MAX_RADIUS).contains(&r) {
                return Err(fail(&format!("bounds.lattice_radii[{i}]"), format!("must lie in [0, {LATTICE_MAX_RADIUS}]")));
            }
        }
        for (i, c) in self.binom.iter().enumerate() {
            positive_finite(&format!("bounds.binom[{i}].eta"), c.eta)?;
            if !(c.s > 0.0 && c.s <= 1.0) {
                return Err(fail(&format!("bounds.binom[{i}].s"), "must lie in (0, 1]"));
            }
        }
        for (i, t) in self.theorems.iter().enumerate() {
            if t.width < 2 {
                return Err(fail(&format!("bounds.theorems[{i}].width"), "must be at least 2"));
            }
            positive_finite(&format!("bounds.theorems[{i}].eta"), t.eta)?;
        }
        Ok(())
    }
}

impl SphereSection {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let dims = [("sphere.moment_dims", &self.moment_dims), ("sphere.bound_dims", &self.bound_dims), ("sphere.integrand_dims", &self.integrand_dims)];
        for (name, ds) in dims {
            if let Some(i) = ds.iter().position(|&d| d == 0) {
                return Err(fail(&format!("{name}[{i}]"), "sphere dimension must be positive"));
            }
        }
        if self.moment_samples < 2 {
            return Err(fail("sphere.moment_samples", "need at least two samples"));
        }
        if self.bound_samples < 2 {
            return Err(fail("sphere.bound_samples", "need at least two samples"));
        }
        if self.integrand_grid < 2 {
            return Err(fail("sphere.integrand_grid", "need at least two grid points"));
        }
        for (i, c) in self.frobenius.iter().enumerate() {
            if c.trials < 2 || c.n == 0 || c.d == 0 || c.lambda == 0 {
                return Err(fail(&format!("sphere.frobenius[{i}]"), "need d, lambda, n positive and at least two trials"));
            }
        }
        for (i, c) in self.construction.iter().enumerate() {
            let ok = c.heads > 0 && c.width % c.heads == 0 && c.width > c.heads && (c.width - c.heads) % 2 == 0 && c.n > 0 && c.seq_len > 0;
            if !ok {
                return Err(fail(&format!("sphere.construction[{i}]"), "need H | width, width − H even and positive, n and seq_len positive"));
            }
        }
        Ok(())
    }
}

impl DesignSection {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.tasks.is_none() {
            return Err(fail("design.tasks", "an input path is required (--tasks)"));
        }
        if !(-1.0..=1.0).contains(&self.threshold) {
            return Err(fail("design.threshold", format!("must lie in [-1, 1], got {}", self.threshold)));
        }
        if self.max_tokens == 0 {
            return Err(fail("design.max_tokens", "must be positive"));
        }
        if let Some(b) = self.batch_size {
            if b == 0 || b % 2 != 0 {
                return Err(fail("design.batch_size", format!("must be even and positive, got {b}")));
            }
        }
        if self.approximate && (self.nsw_m == 0 || self.nsw_ef == 0) {
            return Err(fail("design.nsw_m", "graph parameters must be positive"));
        }
        Ok(())
    }
}
