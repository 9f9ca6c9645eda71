//! Scenario files: a TOML document describing a space, a field and an
//! ordered list of tasks. See `docs/scenario-grammar.md`.

use std::collections::BTreeMap;

use conformal_jets::fixtures::{self, unit};
use conformal_jets::{FlatConformalField, MetricSpace};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_GRID: usize = 7;
pub const DEFAULT_BUDGET: usize = 5000;
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_HALF_WIDTH: f64 = 1.0;

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("schema error in `{field}`: {message}")]
    Schema { field: String, message: String },
    #[error("dimension mismatch in `{field}`: expected {expected}, found {found}")]
    Dimension {
        field: String,
        expected: usize,
        found: usize,
    },
    #[error("in `{field}`: {source}")]
    Core {
        field: String,
        source: conformal_jets::Error,
    },
}

fn schema(field: impl Into<String>, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Schema {
        field: field.into(),
        message: message.into(),
    }
}

fn expect_len(field: &str, v: &[f64], n: usize) -> Result<(), ScenarioError> {
    if v.len() != n {
        return Err(ScenarioError::Dimension {
            field: field.into(),
            expected: n,
            found: v.len(),
        });
    }
    Ok(())
}

fn expect_square(field: &str, m: &[Vec<f64>], n: usize) -> Result<(), ScenarioError> {
    if m.len() != n {
        return Err(ScenarioError::Dimension {
            field: field.into(),
            expected: n,
            found: m.len(),
        });
    }
    for (i, row) in m.iter().enumerate() {
        expect_len(&format!("{field}[{i}]"), row, n)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceSpec {
    pub n: usize,
    pub p: usize,
    pub q: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<Vec<Vec<f64>>>,
}

/// `b` is either a matrix (rows) or a named generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Named(String),
    Rows(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constructor: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<MatrixSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_grid")]
    pub grid: usize,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_tol() -> f64 {
    DEFAULT_TOL
}
fn default_grid() -> usize {
    DEFAULT_GRID
}
fn default_budget() -> usize {
    DEFAULT_BUDGET
}
fn default_seed() -> u64 {
    DEFAULT_SEED
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            grid: DEFAULT_GRID,
            budget: DEFAULT_BUDGET,
            seed: DEFAULT_SEED,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    FindZeros,
    Classify,
    LocalModel,
    ComponentScan,
    CharPoly,
    Quintuple,
    Equivalence,
    Xi,
    VerifyTheorem,
}

impl TaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::FindZeros => "find-zeros",
            TaskKind::Classify => "classify",
            TaskKind::LocalModel => "local-model",
            TaskKind::ComponentScan => "component-scan",
            TaskKind::CharPoly => "char-poly",
            TaskKind::Quintuple => "quintuple",
            TaskKind::Equivalence => "equivalence",
            TaskKind::Xi => "xi",
            TaskKind::VerifyTheorem => "verify-theorem",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Theorem {
    Tnv,
    Charp,
    Esszr,
    Zcu,
    EssenRank,
    EssenDim,
    PtiesIi,
    PtiesIii,
    Nyw,
    QuintupleInvariance,
    LemmaEquiv,
}

impl Theorem {
    pub const ALL: [Theorem; 11] = [
        Theorem::Tnv,
        Theorem::Charp,
        Theorem::Esszr,
        Theorem::Zcu,
        Theorem::EssenRank,
        Theorem::EssenDim,
        Theorem::PtiesIi,
        Theorem::PtiesIii,
        Theorem::Nyw,
        Theorem::QuintupleInvariance,
        Theorem::LemmaEquiv,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Theorem::Tnv => "tnv",
            Theorem::Charp => "charp",
            Theorem::Esszr => "esszr",
            Theorem::Zcu => "zcu",
            Theorem::EssenRank => "essen-rank",
            Theorem::EssenDim => "essen-dim",
            Theorem::PtiesIi => "pties-ii",
            Theorem::PtiesIii => "pties-iii",
            Theorem::Nyw => "nyw",
            Theorem::QuintupleInvariance => "quintuple-invariance",
            Theorem::LemmaEquiv => "lemma-equiv",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.as_str() == name)
    }
}

/// The other side of an `equivalence` task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub space: SpaceSpec,
    pub field: FieldSpec,
    pub at: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct TaskSpec {
    pub kind: TaskKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub at: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hi: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub half_width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jets: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theorem: Option<Theorem>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<TargetSpec>,
}

impl TaskSpec {
    pub fn new(kind: TaskKind) -> Self {
        Self {
            kind,
            at: None,
            lo: None,
            hi: None,
            half_width: None,
            grid: None,
            tol: None,
            budget: None,
            seed: None,
            jets: None,
            theorem: None,
            target: None,
        }
    }

    // accessors for resolved tasks

    pub fn tol(&self) -> f64 {
        self.tol.unwrap_or(DEFAULT_TOL)
    }

    pub fn grid(&self) -> usize {
        self.grid.unwrap_or(DEFAULT_GRID)
    }

    pub fn budget(&self) -> usize {
        self.budget.unwrap_or(DEFAULT_BUDGET)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    #[default]
    Human,
    Machine,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(default)]
    pub format: Format,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub space: SpaceSpec,
    pub field: FieldSpec,
    #[serde(default)]
    pub defaults: Settings,
    #[serde(default)]
    pub tasks: Vec<TaskSpec>,
    #[serde(default)]
    pub output: OutputSpec,
}

/// Parses and validates a scenario document, filling every task parameter
/// from `[defaults]`.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    parse_scenario_with_seed(text, None)
}

/// As [`parse_scenario`], with `seed` replacing the built-in default seed
/// when the document does not set one.
pub fn parse_scenario_with_seed(text: &str, seed: Option<u64>) -> Result<Scenario, ScenarioError> {
    let raw: toml::Table = text.parse().map_err(|e: toml::de::Error| ScenarioError::Parse(e.to_string()))?;
    let has_seed = raw
        .get("defaults")
        .and_then(|d| d.as_table())
        .is_some_and(|d| d.contains_key("seed"));
    let mut sc: Scenario = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    if let (Some(s), false) = (seed, has_seed) {
        sc.defaults.seed = s;
    }
    sc.resolve()?;
    Ok(sc)
}

/// Inverse of [`parse_scenario`] on resolved scenarios.
pub fn serialize_scenario(sc: &Scenario) -> String {
    toml::to_string(sc).expect("scenarios serialize to TOML")
}

impl Scenario {
    /// A scenario with the given space and field and no tasks.
    pub fn new(space: SpaceSpec, field: FieldSpec) -> Self {
        Self {
            space,
            field,
            defaults: Settings::default(),
            tasks: Vec::new(),
            output: OutputSpec::default(),
        }
    }

    /// Validates the document and expands task defaults in place.
    pub fn resolve(&mut self) -> Result<(), ScenarioError> {
        let n = self.space.n;
        build_space(&self.space, "space")?;
        build_field(&self.space, &self.field, "field")?;
        if !(self.defaults.tol > 0.0) {
            return Err(schema("defaults.tol", "must be positive"));
        }
        if self.defaults.grid < 2 {
            return Err(schema("defaults.grid", "needs at least 2 points per axis"));
        }
        let d = self.defaults.clone();
        for (i, t) in self.tasks.iter_mut().enumerate() {
            let name = |f: &str| format!("tasks[{i}].{f}");
            t.tol.get_or_insert(d.tol);
            t.grid.get_or_insert(d.grid);
            t.budget.get_or_insert(d.budget);
            t.seed.get_or_insert(d.seed);
            if !(t.tol() > 0.0) {
                return Err(schema(name("tol"), "must be positive"));
            }
            if t.grid() < 2 {
                return Err(schema(name("grid"), "needs at least 2 points per axis"));
            }
            if let Some(at) = &t.at {
                expect_len(&name("at"), at, n)?;
            }
            match t.kind {
                TaskKind::FindZeros | TaskKind::ComponentScan => {
                    resolve_box(t, n, &name)?;
                }
                TaskKind::Classify | TaskKind::LocalModel | TaskKind::Quintuple | TaskKind::Xi | TaskKind::CharPoly => {
                    if t.at.is_none() {
                        return Err(schema(name("at"), format!("required for {}", t.kind.as_str())));
                    }
                }
                TaskKind::Equivalence => {
                    if t.at.is_none() {
                        return Err(schema(name("at"), "required for equivalence"));
                    }
                    let target = t
                        .target
                        .as_ref()
                        .ok_or_else(|| schema(name("target"), "required for equivalence"))?;
                    build_field(&target.space, &target.field, &name("target.field"))?;
                    expect_len(&name("target.at"), &target.at, target.space.n)?;
                    let jets = *t.jets.get_or_insert(2);
                    if !(1..=2).contains(&jets) {
                        return Err(schema(name("jets"), "must be 1 or 2"));
                    }
                }
                TaskKind::VerifyTheorem => {
                    if t.theorem.is_none() {
                        return Err(schema(name("theorem"), "required for verify-theorem"));
                    }
                    if t.lo.is_some() || t.hi.is_some() || t.half_width.is_some() {
                        resolve_box(t, n, &name)?;
                    }
                }
            }
            if t.kind != TaskKind::Equivalence && (t.target.is_some() || t.jets.is_some()) {
                return Err(schema(name("target"), "only equivalence tasks take a target"));
            }
            if t.kind != TaskKind::VerifyTheorem && t.theorem.is_some() {
                return Err(schema(name("theorem"), "only verify-theorem tasks take a theorem"));
            }
        }
        Ok(())
    }

    pub fn build(&self) -> Result<FlatConformalField, ScenarioError> {
        build_field(&self.space, &self.field, "field")
    }
}

fn resolve_box(t: &mut TaskSpec, n: usize, name: &dyn Fn(&str) -> String) -> Result<(), ScenarioError> {
    match (&t.lo, &t.hi) {
        (Some(lo), Some(hi)) => {
            if t.half_width.is_some() {
                return Err(schema(name("half-width"), "give either lo/hi or half-width"));
            }
            expect_len(&name("lo"), lo, n)?;
            expect_len(&name("hi"), hi, n)?;
            if lo.iter().zip(hi).any(|(a, b)| !(a < b)) {
                return Err(schema(name("hi"), "every hi entry must exceed lo"));
            }
        }
        (None, None) => {
            let h = t.half_width.take().unwrap_or(DEFAULT_HALF_WIDTH);
            if !(h > 0.0) {
                return Err(schema(name("half-width"), "must be positive"));
            }
            t.lo = Some(vec![-h; n]);
            t.hi = Some(vec![h; n]);
        }
        _ => return Err(schema(name("lo"), "lo and hi must be given together")),
    }
    Ok(())
}

pub fn build_space(spec: &SpaceSpec, field: &str) -> Result<MetricSpace, ScenarioError> {
    if spec.p + spec.q != spec.n {
        return Err(schema(
            format!("{field}.n"),
            format!("p + q = {} does not equal n = {}", spec.p + spec.q, spec.n),
        ));
    }
    let core = |source| ScenarioError::Core {
        field: field.to_string(),
        source,
    };
    match &spec.g {
        None => MetricSpace::diagonal(spec.p, spec.q).map_err(core),
        Some(rows) => {
            expect_square(&format!("{field}.g"), rows, spec.n)?;
            let g = DMatrix::from_fn(spec.n, spec.n, |i, j| rows[i][j]);
            let space = MetricSpace::from_matrix(g).map_err(core)?;
            if space.signature() != (spec.p, spec.q) {
                return Err(schema(
                    format!("{field}.g"),
                    format!("signature {:?} does not match (p, q) = ({}, {})", space.signature(), spec.p, spec.q),
                ));
            }
            Ok(space)
        }
    }
}

/// A named constructor call `name` or `name(key=value, ...)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedCall {
    pub name: String,
    pub args: BTreeMap<String, f64>,
}

pub fn parse_call(text: &str, field: &str) -> Result<NamedCall, ScenarioError> {
    let text = text.trim();
    let (name, rest) = match text.find('(') {
        None => (text, None),
        Some(i) => {
            let inner = text[i + 1..]
                .strip_suffix(')')
                .ok_or_else(|| schema(field, format!("unbalanced parentheses in `{text}`")))?;
            (&text[..i], Some(inner))
        }
    };
    let mut args = BTreeMap::new();
    for part in rest.unwrap_or("").split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| schema(field, format!("expected key=value, found `{part}`")))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| schema(field, format!("`{}` is not a number", v.trim())))?;
        args.insert(k.trim().to_string(), v);
    }
    Ok(NamedCall {
        name: name.trim().to_string(),
        args,
    })
}

impl NamedCall {
    fn take(&mut self, key: &str, default: f64) -> f64 {
        self.args.remove(key).unwrap_or(default)
    }

    fn index(&mut self, key: &str, default: usize, n: usize, field: &str) -> Result<usize, ScenarioError> {
        let v = self.take(key, default as f64);
        if v < 0.0 || v.fract() != 0.0 || v as usize >= n {
            return Err(schema(field, format!("`{key}` must be an axis index below {n}")));
        }
        Ok(v as usize)
    }

    fn finish(&self, field: &str) -> Result<(), ScenarioError> {
        match self.args.keys().next() {
            Some(k) => Err(schema(field, format!("unknown argument `{k}` for `{}`", self.name))),
            None => Ok(()),
        }
    }
}

/// `B = rate · g⁻¹ (e_j e_iᵀ − e_i e_jᵀ)`: a rotation in the `(i, j)` plane
/// for definite blocks, a boost for mixed ones.
fn plane_generator(space: &MetricSpace, i: usize, j: usize, rate: f64) -> DMatrix<f64> {
    let n = space.dim();
    let mut a = DMatrix::zeros(n, n);
    a[(j, i)] = rate;
    a[(i, j)] = -rate;
    space.g_inv() * a
}

fn named_matrix(space: &MetricSpace, text: &str, field: &str) -> Result<DMatrix<f64>, ScenarioError> {
    let n = space.dim();
    let mut call = parse_call(text, field)?;
    let m = match call.name.as_str() {
        "zero" => DMatrix::zeros(n, n),
        "rotation" => {
            let i = call.index("i", 0, n, field)?;
            let j = call.index("j", 1, n, field)?;
            if i == j {
                return Err(schema(field, "rotation needs two distinct axes"));
            }
            let rate = call.take("rate", 1.0);
            plane_generator(space, i, j, rate)
        }
        other => return Err(schema(field, format!("unknown matrix constructor `{other}`"))),
    };
    call.finish(field)?;
    Ok(m)
}

fn check_signature(space: &SpaceSpec, needed: (usize, usize), what: &str, field: &str) -> Result<(), ScenarioError> {
    if (space.p, space.q) != needed || space.g.is_some() {
        return Err(schema(
            field,
            format!("{what} lives in the standard diagonal metric with (p, q) = {needed:?}"),
        ));
    }
    Ok(())
}

/// Builds the field described by `spec` on `space`.
pub fn build_field(space_spec: &SpaceSpec, spec: &FieldSpec, field: &str) -> Result<FlatConformalField, ScenarioError> {
    let space = build_space(space_spec, "space")?;
    let n = space.dim();
    let core = |source| ScenarioError::Core {
        field: field.to_string(),
        source,
    };
    let cfield = format!("{field}.constructor");
    if let Some(text) = &spec.constructor {
        if spec.w.is_some() || spec.b.is_some() || spec.c.is_some() || spec.u.is_some() {
            return Err(schema(cfield, "a named constructor cannot be combined with w, b, c or u"));
        }
        let mut call = parse_call(text, &cfield)?;
        let dim_arg = |call: &mut NamedCall| -> Result<(), ScenarioError> {
            let m = call.take("n", n as f64);
            if m != n as f64 {
                return Err(ScenarioError::Dimension {
                    field: cfield.clone(),
                    expected: n,
                    found: m as usize,
                });
            }
            Ok(())
        };
        let f = match call.name.as_str() {
            "rotation" => {
                dim_arg(&mut call)?;
                let i = call.index("i", 0, n, &cfield)?;
                let j = call.index("j", 1, n, &cfield)?;
                let rate = call.take("rate", 1.0);
                if i == j {
                    return Err(schema(cfield, "rotation needs two distinct axes"));
                }
                FlatConformalField::new(space.clone(), DVector::zeros(n), plane_generator(&space, i, j, rate), 0.0, DVector::zeros(n))
                    .map_err(core)?
            }
            "dilation" => {
                dim_arg(&mut call)?;
                let c = call.take("c", 1.0);
                fixtures::dilation(space, c).map_err(core)?
            }
            "special-conformal" => {
                dim_arg(&mut call)?;
                let axis = call.index("axis", 0, n, &cfield)?;
                let scale = call.take("scale", 1.0);
                fixtures::special_conformal(space, unit(n, axis) * scale).map_err(core)?
            }
            "lorentz-cone" => {
                dim_arg(&mut call)?;
                let f = fixtures::lorentz_cone(n).map_err(core)?;
                check_signature(space_spec, f.space().signature(), "lorentz-cone", &cfield)?;
                f
            }
            "neutral-counterexample" => {
                dim_arg(&mut call)?;
                let c = call.take("c", 1.0);
                if n % 2 != 0 {
                    return Err(schema(cfield, "neutral-counterexample needs even n"));
                }
                check_signature(space_spec, (n / 2, n / 2), "neutral-counterexample", &cfield)?;
                fixtures::neutral_counterexample(n, c).map_err(core)?.field
            }
            "null-plane" => {
                dim_arg(&mut call)?;
                check_signature(space_spec, (3, 2), "null-plane", &cfield)?;
                fixtures::null_plane_fixture().map_err(core)?.field
            }
            other => return Err(schema(cfield, format!("unknown field constructor `{other}`"))),
        };
        call.finish(&cfield)?;
        return Ok(f);
    }
    let w = match &spec.w {
        Some(w) => {
            expect_len(&format!("{field}.w"), w, n)?;
            DVector::from_column_slice(w)
        }
        None => DVector::zeros(n),
    };
    let u = match &spec.u {
        Some(u) => {
            expect_len(&format!("{field}.u"), u, n)?;
            DVector::from_column_slice(u)
        }
        None => DVector::zeros(n),
    };
    let b = match &spec.b {
        None => DMatrix::zeros(n, n),
        Some(MatrixSpec::Named(text)) => named_matrix(&space, text, &format!("{field}.b"))?,
        Some(MatrixSpec::Rows(rows)) => {
            expect_square(&format!("{field}.b"), rows, n)?;
            DMatrix::from_fn(n, n, |i, j| rows[i][j])
        }
    };
    let c = spec.c.unwrap_or(0.0);
    FlatConformalField::new(space, w, b, c, u).map_err(|source| ScenarioError::Core {
        field: format!("{field}.b"),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[space]
n = 3
p = 3
q = 0

[field]
constructor = "rotation"

[[tasks]]
kind = "find-zeros"
"#;

    #[test]
    fn minimal_gets_defaults() {
        let sc = parse_scenario(MINIMAL).unwrap();
        let t = &sc.tasks[0];
        assert_eq!((t.tol(), t.grid(), t.budget(), t.seed()), (1e-9, 7, 5000, 42));
        assert_eq!(t.lo.as_deref(), Some(&[-1.0, -1.0, -1.0][..]));
        assert_eq!(sc.defaults, Settings::default());
    }

    #[test]
    fn counterexample_constructor_expands() {
        let text = r#"
[space]
n = 4
p = 2
q = 2
[field]
constructor = "neutral-counterexample(n=4,c=1)"
"#;
        let f = parse_scenario(text).unwrap().build().unwrap();
        let expected = fixtures::neutral_counterexample(4, 1.0).unwrap().field;
        assert_eq!(f, expected);
    }

    #[test]
    fn signature_must_add_up() {
        let text = MINIMAL.replace("q = 0", "q = 1");
        let err = parse_scenario(&text).unwrap_err();
        assert!(matches!(err, ScenarioError::Schema { ref field, .. } if field == "space.n"), "{err}");
    }

    #[test]
    fn wrong_u_length() {
        let text = r#"
[space]
n = 3
p = 3
q = 0
[field]
u = [1.0, 0.0]
"#;
        let err = parse_scenario(text).unwrap_err();
        assert!(
            matches!(err, ScenarioError::Dimension { ref field, expected: 3, found: 2 } if field == "field.u"),
            "{err}"
        );
    }

    #[test]
    fn unknown_kind_reports_location() {
        let text = MINIMAL.replace("find-zeros", "find-poles");
        let err = parse_scenario(&text).unwrap_err().to_string();
        assert!(err.contains("line 11, column 8"), "{err}");
        assert!(err.contains("find-poles"), "{err}");
    }

    #[test]
    fn unknown_key_rejected() {
        let text = MINIMAL.replace("q = 0", "q = 0\nr = 2");
        let err = parse_scenario(&text).unwrap_err().to_string();
        assert!(err.contains("unknown field `r`"), "{err}");
    }

    #[test]
    fn named_call_parsing() {
        let c = parse_call(" special-conformal( axis = 2, scale=0.5 )", "f").unwrap();
        assert_eq!(c.name, "special-conformal");
        assert_eq!(c.args["axis"], 2.0);
        assert_eq!(c.args["scale"], 0.5);
        assert!(parse_call("rotation(i=0", "f").is_err());
        assert!(parse_call("rotation(i)", "f").is_err());
    }

    #[test]
    fn named_b_is_skew() {
        let text = r#"
[space]
n = 3
p = 2
q = 1
[field]
b = "rotation(i=0, j=2, rate=0.5)"
"#;
        let f = parse_scenario(text).unwrap().build().unwrap();
        assert!(f.space().skew_defect(f.b()) < 1e-15);
    }
}
