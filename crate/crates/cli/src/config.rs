//! Run configuration: TOML text with one table per section, layered on top of
//! a named preset.

use std::path::Path;

use fraclap::assembly::CoefficientField;
use fraclap::dn::ObservationSet;
use fraclap::kernel::{DomainGeometry, FracExponent};
use fraclap::mesh::{build_mesh, Mesh1D, NodeClass};
use fraclap::regional::Subdomain;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn bad(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub problem: ProblemSection,
    pub geometry: GeometrySection,
    pub coefficients: CoefficientSection,
    pub sources: SourceSection,
    pub observations: ObservationSection,
    pub forward: ForwardSection,
    pub recover: RecoverSection,
    pub runge: RungeSection,
    pub verify: VerifySection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProblemSection {
    pub t: f64,
    pub s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometrySection {
    pub omega_lo: f64,
    pub omega_hi: f64,
    #[serde(rename = "R")]
    pub r: f64,
    pub h: f64,
}

/// Coefficients used to solve forward problems and to synthesize data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoefficientSection {
    pub b_edges: Vec<f64>,
    pub b_values: Vec<f64>,
    pub q_edges: Vec<f64>,
    pub q_values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceKind {
    /// `count` cos^2 bumps tiling the window
    Bumps,
    /// one source whose solution vanishes on `vanishing_cell`
    Vanishing,
    /// no exterior data
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SourceSection {
    pub kind: SourceKind,
    pub window: [f64; 2],
    pub count: usize,
    pub vanishing_cell: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObservationSection {
    pub points: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rhs {
    None,
    /// `F = Gamma(1 + 2t)` on the domain
    Getoor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForwardSection {
    pub rhs: Rhs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecoverMode {
    All,
    Single,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LambdaRule {
    Fixed,
    /// `1e-6 (data scale)^2`
    DataScale,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Start {
    Zero,
    Truth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RecoverSection {
    pub mode: RecoverMode,
    /// cell edges of the unknown b
    pub b_cells: Vec<f64>,
    pub q_cells: Vec<f64>,
    pub lambda_rule: LambdaRule,
    pub lambda: f64,
    pub max_iter: usize,
    pub start: Start,
    /// relative Gaussian noise on the synthetic data
    pub noise: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RungeDemo {
    /// regional-harmonic extensions on `interior`
    Regional,
    /// regional solutions on `first` driven from `second`
    TwoSet,
    /// `(-Delta)^{s/2}_Omega u_f` on `interior`
    Halfop,
    /// `u_f` on the domain
    Solution,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Target {
    Sin,
    Cos,
    Parabola,
    One,
    Bump,
}

impl Target {
    /// `set` is the hull of the set the target lives on; `Bump` is the
    /// `cos^2` bump filling it.
    pub fn eval(self, x: f64, set: (f64, f64)) -> f64 {
        use std::f64::consts::PI;
        match self {
            Target::Sin => (PI * x).sin(),
            Target::Cos => (PI * x).cos(),
            Target::Parabola => 1.0 - x * x,
            Target::One => 1.0,
            Target::Bump => {
                let r = (2.0 * x - set.0 - set.1) / (set.1 - set.0);
                if r.abs() < 1.0 {
                    (0.5 * PI * r).cos().powi(2)
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RungeSection {
    pub demos: Vec<RungeDemo>,
    pub sizes: Vec<usize>,
    pub target: Target,
    /// exponent of the regional operator in the regional demos
    pub exponent: f64,
    pub interior: Vec<[f64; 2]>,
    pub first: Vec<[f64; 2]>,
    pub second: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    pub exponents: Vec<f64>,
    pub symbol_tol: f64,
    /// factor applied to the kernel constant in the symbol check
    pub corrupt_constant: f64,
    pub getoor_tol: f64,
    pub ln_tol: f64,
    pub gap_tol: f64,
    pub invariance_tol: f64,
    pub random_sources: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            problem: ProblemSection::default(),
            geometry: GeometrySection::default(),
            coefficients: CoefficientSection::default(),
            sources: SourceSection::default(),
            observations: ObservationSection::default(),
            forward: ForwardSection::default(),
            recover: RecoverSection::default(),
            runge: RungeSection::default(),
            verify: VerifySection::default(),
        }
    }
}

impl Default for ProblemSection {
    fn default() -> Self {
        ProblemSection { t: 0.7, s: 0.4 }
    }
}

impl Default for GeometrySection {
    fn default() -> Self {
        GeometrySection {
            omega_lo: -1.0,
            omega_hi: 1.0,
            r: 4.0,
            h: 1.0 / 128.0,
        }
    }
}

fn quarter_cells() -> Vec<f64> {
    vec![-0.75, -0.375, 0.0, 0.375, 0.75]
}

impl Default for CoefficientSection {
    fn default() -> Self {
        CoefficientSection {
            b_edges: quarter_cells(),
            b_values: vec![1.0, 2.0, 0.5, 1.5],
            q_edges: quarter_cells(),
            q_values: vec![2.0, -1.0, 1.0, 3.0],
        }
    }
}

impl Default for SourceSection {
    fn default() -> Self {
        SourceSection {
            kind: SourceKind::Bumps,
            window: [2.0, 3.0],
            count: 16,
            vanishing_cell: [0.375, 0.390625],
        }
    }
}

impl Default for ObservationSection {
    fn default() -> Self {
        ObservationSection {
            points: (0..5).map(|k| 1.5 + 0.1 * k as f64).collect(),
        }
    }
}

impl Default for ForwardSection {
    fn default() -> Self {
        ForwardSection { rhs: Rhs::None }
    }
}

impl Default for RecoverSection {
    fn default() -> Self {
        RecoverSection {
            mode: RecoverMode::All,
            b_cells: quarter_cells(),
            q_cells: quarter_cells(),
            lambda_rule: LambdaRule::Fixed,
            lambda: 0.0,
            max_iter: 30,
            start: Start::Zero,
            noise: 0.0,
        }
    }
}

impl Default for RungeSection {
    fn default() -> Self {
        RungeSection {
            demos: vec![RungeDemo::Regional, RungeDemo::TwoSet, RungeDemo::Halfop, RungeDemo::Solution],
            sizes: (1..=8).map(|k| 5 * k).collect(),
            target: Target::Bump,
            exponent: 0.3,
            interior: vec![[-0.5, 0.5]],
            first: vec![[-0.75, -0.125]],
            second: vec![[0.125, 0.75]],
        }
    }
}

impl Default for VerifySection {
    fn default() -> Self {
        VerifySection {
            exponents: vec![0.25, 0.4, 0.5, 0.6, 0.75],
            symbol_tol: 1e-4,
            corrupt_constant: 1.0,
            getoor_tol: 0.05,
            ln_tol: 1e-6,
            gap_tol: 1e-8,
            invariance_tol: 1e-10,
            random_sources: 5,
        }
    }
}

pub const PRESETS: &[&str] = &[
    "paper-desk",
    "getoor",
    "zero",
    "synthetic",
    "truth-start",
    "single-measurement",
    "counterexample",
    "runge",
    "verify",
];

/// Two-sided observation points `+-1.1, ..., +-3.0`.
pub fn two_sided_points() -> Vec<f64> {
    (0..20)
        .flat_map(|k| {
            let x = 1.1 + 0.1 * k as f64;
            [-x, x]
        })
        .collect()
}

pub fn preset(name: &str) -> Result<RunConfig, ConfigError> {
    let mut c = RunConfig::default();
    match name {
        "paper-desk" | "synthetic" | "runge" | "verify" => {}
        "getoor" => {
            c.coefficients = CoefficientSection {
                b_edges: vec![],
                b_values: vec![],
                q_edges: vec![],
                q_values: vec![],
            };
            c.sources.kind = SourceKind::None;
            c.forward.rhs = Rhs::Getoor;
        }
        "zero" => {
            c.sources.kind = SourceKind::None;
        }
        "truth-start" => {
            c.recover.start = Start::Truth;
        }
        "single-measurement" | "counterexample" => {
            c.geometry.h = 1.0 / 64.0;
            c.observations.points = two_sided_points();
            c.recover.mode = RecoverMode::Single;
            c.recover.max_iter = 60;
            c.coefficients.b_edges = vec![-0.75, 0.0, 0.75];
            c.coefficients.b_values = vec![1.0, 2.0];
            c.recover.b_cells = c.coefficients.b_edges.clone();
            if name == "single-measurement" {
                c.sources.count = 1;
                c.coefficients.q_edges = vec![-0.75, 0.0, 0.75];
                c.coefficients.q_values = vec![2.0, 1.0];
            } else {
                let [lo, hi] = c.sources.vanishing_cell;
                c.sources.kind = SourceKind::Vanishing;
                c.coefficients.q_edges = vec![-0.75, 0.0, lo, hi, 0.75];
                c.coefficients.q_values = vec![2.0, 1.0, 4.0, 1.0];
            }
            c.recover.q_cells = c.coefficients.q_edges.clone();
        }
        other => {
            return Err(bad(format!(
                "unknown preset '{other}' (known: {})",
                PRESETS.join(", ")
            )))
        }
    }
    Ok(c)
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

impl RunConfig {
    /// `text` overrides the named preset key by key.
    pub fn layered(preset_name: &str, text: Option<&str>) -> Result<Self, ConfigError> {
        let base = preset(preset_name)?;
        let Some(text) = text else {
            base.validate()?;
            return Ok(base);
        };
        let over: toml::Table = text.parse().map_err(|e| bad(format!("config syntax: {e}")))?;
        let mut table = toml::Table::try_from(&base).map_err(|e| bad(e.to_string()))?;
        merge(&mut table, over);
        let cfg: RunConfig = table.try_into().map_err(|e: toml::de::Error| bad(format!("config: {}", e.message())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(preset_name: &str, path: Option<&Path>) -> Result<Self, ConfigError> {
        match path {
            None => Self::layered(preset_name, None),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| bad(format!("cannot read {}: {e}", p.display())))?;
                Self::layered(preset_name, Some(&text))
            }
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn geometry(&self) -> Result<DomainGeometry, ConfigError> {
        let g = &self.geometry;
        DomainGeometry::new(g.omega_lo, g.omega_hi, g.r)
            .map_err(|e| bad(format!("geometry: need omega_lo < omega_hi inside the box [-R, R]: {e}")))
    }

    pub fn mesh(&self) -> Result<Mesh1D, ConfigError> {
        build_mesh(&self.geometry()?, self.geometry.h)
            .map_err(|e| bad(format!("geometry.h: the mesh must resolve the domain and the box with a uniform step: {e}")))
    }

    pub fn truth(&self) -> Result<(CoefficientField, CoefficientField), ConfigError> {
        let c = &self.coefficients;
        let field = |edges: &Vec<f64>, values: &Vec<f64>, name: &str| {
            if edges.is_empty() && values.is_empty() {
                return Ok(CoefficientField::zero());
            }
            CoefficientField::new(edges.clone(), values.clone())
                .map_err(|e| bad(format!("coefficients.{name}: piecewise-constant cells need increasing edges and one value per cell: {e}")))
        };
        Ok((field(&c.b_edges, &c.b_values, "b")?, field(&c.q_edges, &c.q_values, "q")?))
    }

    pub fn observations(&self, mesh: &Mesh1D) -> Result<ObservationSet, ConfigError> {
        ObservationSet::new(mesh, self.observations.points.clone()).map_err(|e| {
            bad(format!(
                "observations.points: measurements are taken in the exterior, at least one cell away from the closed domain: {e}"
            ))
        })
    }

    pub fn subdomain(&self, mesh: &Mesh1D, ivs: &[[f64; 2]], name: &str) -> Result<Subdomain, ConfigError> {
        Subdomain::new(mesh, ivs.iter().map(|&[a, b]| (a, b)).collect()).map_err(|e| {
            bad(format!(
                "runge.{name}: the subdomain must be at most two disjoint mesh-aligned intervals compactly inside the domain: {e}"
            ))
        })
    }

    /// Every precondition that can be checked without assembling.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let (t, s) = (self.problem.t, self.problem.s);
        if !(0.0 < s && s < t && t < 1.0) {
            return Err(bad(format!(
                "problem: invariant 0 < s < t < 1 violated (the perturbation must be of lower order than the fractional Laplacian), got s = {s}, t = {t}"
            )));
        }
        let mesh = self.mesh()?;
        let (b, q) = self.truth()?;
        let support = |f: &CoefficientField, name: &str| {
            f.check_support(&mesh, name)
                .map_err(|e| bad(format!("coefficients.{name}: coefficients are compactly supported in the domain: {e}")))
        };
        support(&b, "b")?;
        support(&q, "q")?;
        let [w0, w1] = self.sources.window;
        if !(w0 < w1) {
            return Err(bad("sources.window: the source window needs lo < hi"));
        }
        let exterior_nodes = (0..mesh.n_nodes())
            .filter(|&i| mesh.nodes[i] > w0 && mesh.nodes[i] < w1 && mesh.classes[i] == NodeClass::Exterior)
            .count();
        if self.sources.kind != SourceKind::None && exterior_nodes == 0 {
            return Err(bad(
                "sources.window: exterior data live in the exterior, away from the closed domain; the window holds no such node",
            ));
        }
        if self.sources.kind == SourceKind::Bumps && self.sources.count == 0 {
            return Err(bad("sources.count: at least one source is needed"));
        }
        if self.sources.kind != SourceKind::None || !self.observations.points.is_empty() {
            self.observations(&mesh)?;
        }
        let r = &self.recover;
        let cells = |edges: &Vec<f64>, name: &str| {
            let f = CoefficientField::new(edges.clone(), vec![1.0; edges.len().saturating_sub(1)])
                .map_err(|e| bad(format!("recover.{name}: unknown cells need increasing edges: {e}")))?;
            f.check_support(&mesh, name)
                .map_err(|e| bad(format!("recover.{name}: the unknown coefficients have known compact support in the domain: {e}")))
        };
        cells(&r.b_cells, "b_cells")?;
        cells(&r.q_cells, "q_cells")?;
        if r.lambda < 0.0 {
            return Err(bad("recover.lambda: the Tikhonov weight must be non-negative"));
        }
        if r.noise < 0.0 {
            return Err(bad("recover.noise: the noise level must be non-negative"));
        }
        if r.mode == RecoverMode::Single {
            let n = match self.sources.kind {
                SourceKind::Bumps => self.sources.count,
                SourceKind::Vanishing => 1,
                SourceKind::None => 0,
            };
            if n != 1 {
                return Err(bad(format!("recover.mode: single-measurement recovery takes exactly one source, got {n}")));
            }
        }
        if self.sources.kind == SourceKind::Vanishing {
            let [lo, hi] = self.sources.vanishing_cell;
            if !(lo < hi) || !self.geometry()?.contains(lo) || !self.geometry()?.contains(hi) {
                return Err(bad("sources.vanishing_cell: the zero set must be an interval inside the domain"));
            }
        }
        let rg = &self.runge;
        FracExponent::new(rg.exponent).map_err(|e| bad(format!("runge.exponent: {e}")))?;
        if rg.sizes.is_empty() || rg.sizes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(bad("runge.sizes: basis sizes must be non-empty and strictly increasing"));
        }
        if !rg.demos.is_empty() {
            self.subdomain(&mesh, &rg.interior, "interior")?;
            if rg.demos.contains(&RungeDemo::TwoSet) {
                let o1 = self.subdomain(&mesh, &rg.first, "first")?;
                let o2 = self.subdomain(&mesh, &rg.second, "second")?;
                if !o1.is_disjoint_from(&o2) {
                    return Err(bad("runge.second: the source set must be disjoint from the target set"));
                }
            }
        }
        let v = &self.verify;
        for &a in &v.exponents {
            FracExponent::new(a).map_err(|e| bad(format!("verify.exponents: {e}")))?;
        }
        if !(v.corrupt_constant > 0.0) {
            return Err(bad("verify.corrupt_constant: the kernel constant factor must be positive"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_validates() {
        for p in PRESETS {
            RunConfig::layered(p, None).unwrap_or_else(|e| panic!("{p}: {e}"));
        }
    }

    #[test]
    fn file_overrides_preset() {
        let c = RunConfig::layered("paper-desk", Some("seed = 9\n[problem]\ns = 0.3\n")).unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.problem.s, 0.3);
        assert_eq!(c.problem.t, 0.7);
        assert_eq!(c.sources.count, 16);
    }

    #[test]
    fn ordering_violation_names_invariant() {
        let e = RunConfig::layered("paper-desk", Some("[problem]\ns = 0.8\n")).unwrap_err();
        assert!(e.0.contains("0 < s < t < 1"), "{e}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::layered("paper-desk", Some("[problem]\nsigma = 0.8\n")).is_err());
        assert!(RunConfig::layered("nope", None).is_err());
    }

    #[test]
    fn round_trip() {
        let c = preset("counterexample").unwrap();
        let back = RunConfig::layered("paper-desk", Some(&c.to_toml())).unwrap();
        assert_eq!(back, c);
    }
}
