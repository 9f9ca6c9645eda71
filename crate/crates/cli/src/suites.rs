//! Named verification suites. Each runs on a built-in fixture, or on the
//! field of a scenario when one is supplied.

use conformal_jets::fixtures::{
    self, lorentz_cone, neutral_counterexample, null_plane_fixture, planted_pair, random_field,
    random_skew_with_kernel, random_vector, special_conformal,
};
use conformal_jets::jets::{
    build_two_jet_witness, char_poly, extract_quintuple, invariant_battery, search_witness,
    validate_witness, verify_sys, Status, Witness,
};
use conformal_jets::sigma::{
    sym_dxi_divisibility, unique_continuation_check, xi_at_point, xi_kernel_transport, XiSample,
};
use conformal_jets::zeros::{
    classify_zero, component_scan, find_zeros, jet_rank, local_model, null_geodesic_jet_transport,
    Region, ZeroReport,
};
use conformal_jets::{Check, FlatConformalField, MetricSpace, PointJet, Rescaling, Subspace};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::report::{vector_json, CheckRecord, SuiteOutcome, SuiteStatus};
use crate::scenario::Theorem;

/// Inputs a suite takes from a scenario.
#[derive(Debug, Clone)]
pub struct Context {
    pub field: FlatConformalField,
    pub region: Region,
    pub grid: usize,
    pub tol: f64,
    pub budget: usize,
}

impl Context {
    pub fn new(field: FlatConformalField, region: Region, grid: usize, tol: f64, budget: usize) -> Self {
        Self {
            field,
            region,
            grid,
            tol,
            budget,
        }
    }
}

const BUILTIN_TOL: f64 = 1e-9;
const BUILTIN_BUDGET: usize = 5000;

/// Signatures the randomized suites cycle through.
fn builtin_spaces() -> Vec<MetricSpace> {
    [(3, 0), (2, 1), (3, 1), (2, 2), (4, 1), (3, 2), (3, 3)]
        .into_iter()
        .map(|(p, q)| MetricSpace::diagonal(p, q).expect("valid signature"))
        .collect()
}

fn rng_for(theorem: Theorem, seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(theorem as u64 + 1);
    rng
}

struct Builder {
    theorem: Theorem,
    fixture: String,
    checks: Vec<CheckRecord>,
    data: serde_json::Map<String, Value>,
}

impl Builder {
    fn new(theorem: Theorem, fixture: impl Into<String>) -> Self {
        Self {
            theorem,
            fixture: fixture.into(),
            checks: Vec::new(),
            data: serde_json::Map::new(),
        }
    }

    fn check(&mut self, c: Check) {
        self.checks.push(c.into());
    }

    fn data(&mut self, key: &str, v: Value) {
        self.data.insert(key.to_string(), v);
    }

    fn finish(self) -> SuiteOutcome {
        let status = if self.checks.iter().all(|c| c.passed) {
            SuiteStatus::Pass
        } else {
            SuiteStatus::Fail
        };
        SuiteOutcome {
            theorem: self.theorem.as_str().to_string(),
            status,
            fixture: self.fixture,
            reason: None,
            checks: self.checks,
            data: Value::Object(self.data),
        }
    }

    fn inapplicable(self, reason: impl Into<String>) -> SuiteOutcome {
        SuiteOutcome {
            theorem: self.theorem.as_str().to_string(),
            status: SuiteStatus::Inapplicable,
            fixture: self.fixture,
            reason: Some(reason.into()),
            checks: self.checks,
            data: Value::Object(self.data),
        }
    }
}

/// Runs one suite.
pub fn verify(theorem: Theorem, ctx: Option<&Context>, seed: u64) -> SuiteOutcome {
    let mut rng = rng_for(theorem, seed);
    match theorem {
        Theorem::Tnv => tnv(ctx, &mut rng),
        Theorem::Charp => charp(ctx),
        Theorem::Esszr => esszr(ctx),
        Theorem::Zcu => zcu(ctx, &mut rng),
        Theorem::EssenRank => essen(theorem, "rank-relation", ctx),
        Theorem::EssenDim => essen(theorem, "dimension-relation", ctx),
        Theorem::PtiesIi => pties_ii(ctx),
        Theorem::PtiesIii => pties_iii(ctx, &mut rng),
        Theorem::Nyw => nyw(ctx, &mut rng),
        Theorem::QuintupleInvariance => quintuple_invariance(ctx, &mut rng),
        Theorem::LemmaEquiv => lemma_equiv(ctx, &mut rng, seed),
    }
}

/// Runs every suite in a fixed order.
pub fn verify_all(ctx: Option<&Context>, seed: u64) -> Vec<SuiteOutcome> {
    Theorem::ALL.into_iter().map(|t| verify(t, ctx, seed)).collect()
}

fn fixture_name(ctx: Option<&Context>, builtin: &str) -> String {
    match ctx {
        Some(_) => "scenario".to_string(),
        None => format!("built-in: {builtin}"),
    }
}

fn tnv(ctx: Option<&Context>, rng: &mut ChaCha8Rng) -> SuiteOutcome {
    const FIELDS: usize = 100;
    const POINTS: usize = 20;
    let mut b = Builder::new(Theorem::Tnv, fixture_name(ctx, "100 random fields, n = 3..6"));
    let spaces = match ctx {
        Some(c) => vec![c.field.space().clone()],
        None => builtin_spaces(),
    };
    let mut fields: Vec<FlatConformalField> = ctx.map(|c| vec![c.field.clone()]).unwrap_or_default();
    while fields.len() < FIELDS {
        let space = &spaces[fields.len() % spaces.len()];
        fields.push(random_field(space, rng));
    }
    let mut killing: f64 = 0.0;
    let mut trace: f64 = 0.0;
    for f in &fields {
        let n = f.dim() as f64;
        for _ in 0..POINTS {
            let x = random_vector(f.dim(), 1.0, rng);
            let jet = f.jet_at(&x);
            let scale = jet.j.amax().max(1.0);
            killing = killing.max(jet.killing_defect(f.space()) / scale);
            trace = trace.max((jet.phi - 2.0 * jet.j.trace() / n).abs() / jet.phi.abs().max(1.0));
        }
    }
    b.check(Check::below("killing-identity", killing, 1e-9).with_detail("relative to max(1, |∇v|)"));
    b.check(Check::below("phi-trace", trace, 1e-12));
    b.data("fields", json!(fields.len()));
    b.data("points_per_field", json!(POINTS));
    b.finish()
}

fn scan(ctx: &Context) -> conformal_jets::Result<ZeroReport> {
    component_scan(&ctx.field, &ctx.region, ctx.grid, ctx.tol)
}

fn charp(ctx: Option<&Context>) -> SuiteOutcome {
    let mut b = Builder::new(Theorem::Charp, fixture_name(ctx, "neutral counterexample n = 4, c = 1"));
    match ctx {
        None => {
            let cx = neutral_counterexample(4, 1.0).expect("fixture");
            let ts: Vec<f64> = (0..11).map(|i| -0.5 + 0.1 * i as f64).collect();
            let mut polys = Vec::new();
            let mut kernels = Vec::new();
            let mut worst_zero: f64 = 0.0;
            for &t in &ts {
                let x = &cx.m2 * t;
                let jet = cx.field.jet_at(&x);
                worst_zero = worst_zero.max(jet.v.norm());
                polys.push(char_poly(&jet.j));
                kernels.push(4 - jet_rank(&jet.j, BUILTIN_TOL));
            }
            let mut spread: f64 = 0.0;
            for p in &polys {
                for q in &polys {
                    spread = spread.max(p.distance(q));
                }
            }
            b.check(Check::below("samples-are-zeros", worst_zero, 1e-12));
            b.check(Check::below("charpoly-constant", spread, 1e-8));
            let at_zero = kernels[5];
            let elsewhere_ok = kernels.iter().enumerate().all(|(i, &k)| i == 5 || k == 1);
            b.check(Check::flag(
                "kernel-drop",
                at_zero == 2 && elsewhere_ok,
                format!("dim Ker ∇v along t·m2: {kernels:?}"),
            ));
            b.data("eigenspaces", json!("B has two null eigenspaces of dimension n/2 = 2, for +c and -c"));
            b.data("charpoly_t0", json!(polys[5].coeffs));
            b.data("charpoly_t05", json!(polys[10].coeffs));
            b.finish()
        }
        Some(c) => {
            let report = match scan(c) {
                Ok(r) => r,
                Err(e) => return b.inapplicable(format!("no zeros to compare: {e}")),
            };
            let mut comps = Vec::new();
            for (i, comp) in report.components.iter().enumerate() {
                if comp.members.len() < 2 {
                    continue;
                }
                if let Some(ch) = comp.check("charpoly-constant") {
                    let mut ch = ch.clone();
                    ch.name = format!("component[{i}].charpoly-constant");
                    b.check(ch);
                }
                let first = &report.zeros[comp.members[0]];
                let last = &report.zeros[*comp.members.last().expect("nonempty")];
                comps.push(json!({
                    "component": i,
                    "members": comp.members.len(),
                    "charpoly_first": char_poly(&first.jet.j).coeffs,
                    "charpoly_last": char_poly(&last.jet.j).coeffs,
                }));
            }
            if comps.is_empty() {
                return b.inapplicable("no component with two or more sampled zeros");
            }
            b.data("components", Value::from(comps));
            b.finish()
        }
    }
}

fn esszr(ctx: Option<&Context>) -> SuiteOutcome {
    const MARGIN: f64 = 1e3;
    let mut b = Builder::new(Theorem::Esszr, fixture_name(ctx, "rotation, dilation, special-conformal in R^3"));
    match ctx {
        None => {
            let tol = BUILTIN_TOL;
            let e3 = MetricSpace::euclidean(3).expect("space");
            let origin = DVector::zeros(3);
            let cases: [(&str, FlatConformalField, bool); 3] = [
                ("rotation", fixtures::rotation(3).expect("fixture"), false),
                ("dilation", fixtures::dilation(e3.clone(), 1.0).expect("fixture"), true),
                (
                    "special-conformal",
                    special_conformal(e3, fixtures::unit(3, 0)).expect("fixture"),
                    true,
                ),
            ];
            for (name, f, essential) in cases {
                let class = classify_zero(&f.jet_at(&origin), f.space(), tol).expect("origin is a zero");
                let kind = class.kind.as_str();
                b.check(Check::flag(
                    format!("{name}-{}", if essential { "essential" } else { "nonessential" }),
                    class.is_essential() == essential,
                    format!("classified {kind}, |φ| = {:.3e}, range residual = {:.3e}", class.phi_abs, class.range_residual),
                ));
                b.check(Check::above(format!("{name}-margin"), class.margin(tol), MARGIN));
            }
            b.finish()
        }
        Some(c) => {
            let zeros = find_zeros(&c.field, &c.region, c.grid, c.tol);
            if zeros.is_empty() {
                return b.inapplicable("no zeros in the region");
            }
            let mut min_margin = f64::INFINITY;
            let mut essential = Vec::new();
            let mut nonessential = 0usize;
            for x in &zeros {
                let class = match classify_zero(&c.field.jet_at(x), c.field.space(), c.tol) {
                    Ok(cl) => cl,
                    Err(_) => continue,
                };
                min_margin = min_margin.min(class.margin(c.tol));
                if class.is_essential() {
                    essential.push(vector_json(x));
                } else {
                    nonessential += 1;
                }
            }
            b.check(Check::above("decision-margin", min_margin, MARGIN).with_detail("smallest over all sampled zeros"));
            b.data("essential_zeros", Value::from(essential));
            b.data("nonessential_count", json!(nonessential));
            b.finish()
        }
    }
}

/// Relative distance from the model that counts as "outside" it.
const OUTSIDE_MARGIN: f64 = 0.25;

/// Unit vectors `d` for which `x + 0.1·d` is far from the model.
fn outside_directions(model: &conformal_jets::zeros::LocalZeroModel, n: usize, count: usize, rng: &mut ChaCha8Rng) -> Vec<DVector<f64>> {
    let mut out = Vec::new();
    let mut tries = 0;
    while out.len() < count && tries < 100 * count {
        tries += 1;
        let d = random_vector(n, 1.0, rng).normalize();
        if model.membership_residual(&(&model.x + &d * 0.1)) > OUTSIDE_MARGIN {
            out.push(d);
        }
    }
    out
}

fn zcu(ctx: Option<&Context>, rng: &mut ChaCha8Rng) -> SuiteOutcome {
    const DIRECTIONS: usize = 50;
    let mut b = Builder::new(Theorem::Zcu, fixture_name(ctx, "Lorentzian special-conformal field, n = 4"));
    let (field, region, grid, tol, bases, radius) = match ctx {
        None => {
            let f = lorentz_cone(4).expect("fixture");
            (f, Region::cube(4, 1.0), 7, BUILTIN_TOL, vec![DVector::zeros(4)], f64::INFINITY)
        }
        Some(c) => {
            let zeros = find_zeros(&c.field, &c.region, c.grid, c.tol);
            let essential: Vec<DVector<f64>> = zeros
                .into_iter()
                .filter(|x| {
                    classify_zero(&c.field.jet_at(x), c.field.space(), c.tol).is_ok_and(|cl| cl.is_essential())
                })
                .take(3)
                .collect();
            (c.field.clone(), c.region.clone(), c.grid, c.tol, essential, 0.5)
        }
    };
    if bases.is_empty() {
        return b.inapplicable("no essential zeros in the region");
    }
    let n = field.dim();
    let all_zeros = find_zeros(&field, &region, grid, tol);
    let mut inside: f64 = 0.0;
    let mut outside = f64::INFINITY;
    let mut membership: f64 = 0.0;
    let mut counts = Vec::new();
    for x in &bases {
        let model = match local_model(&field.jet_at(x), field.space(), tol) {
            Ok(m) => m,
            Err(e) => return b.inapplicable(format!("no cone model: {e}")),
        };
        let dirs = model.sample_directions(DIRECTIONS, rng);
        for d in &dirs {
            let d = d.normalize();
            for t in [-0.3, -0.1, 0.05, 0.1, 0.3] {
                inside = inside.max(field.evaluate(&(x + &d * t)).norm());
            }
        }
        let outs = outside_directions(&model, n, DIRECTIONS, rng);
        for d in &outs {
            outside = outside.min(field.evaluate(&(x + d * 0.1)).norm());
        }
        let near: Vec<&DVector<f64>> = all_zeros.iter().filter(|z| (*z - x).norm() <= radius).collect();
        for z in &near {
            membership = membership.max(model.membership_residual(z));
        }
        counts.push(json!({
            "zero": vector_json(x),
            "cone_directions": dirs.len(),
            "outside_directions": outs.len(),
            "newton_zeros": near.len(),
        }));
    }
    b.check(Check::below("cone-directions-are-zeros", inside, 1e-8));
    b.check(Check::above("outside-directions-not-zeros", outside, 1e-3).with_detail("|v| at t = 0.1"));
    b.check(Check::below("newton-zeros-in-model", membership, 1e-6));
    b.data("samples", Value::from(counts));
    b.finish()
}

fn essen(theorem: Theorem, check: &str, ctx: Option<&Context>) -> SuiteOutcome {
    let mut b = Builder::new(theorem, fixture_name(ctx, "Lorentzian special-conformal field, n = 4"));
    let report = match ctx {
        None => component_scan(&lorentz_cone(4).expect("fixture"), &Region::cube(4, 1.0), 7, BUILTIN_TOL),
        Some(c) => scan(c),
    };
    let report = match report {
        Ok(r) => r,
        Err(e) => return b.inapplicable(format!("component scan failed: {e}")),
    };
    let mut dims = Vec::new();
    for (i, comp) in report.components.iter().enumerate() {
        let (Some(d), Some(ch)) = (comp.dims, comp.check(check)) else {
            continue;
        };
        let mut ch = ch.clone();
        ch.name = format!("component[{i}].{check}");
        b.check(ch);
        dims.push(json!({
            "component": i,
            "dim_sigma": d.dim_sigma,
            "dim_regular": d.dim_regular,
            "restricted_rank": d.restricted_rank,
            "sign_pattern": [d.sign_pattern.0, d.sign_pattern.1, d.sign_pattern.2],
        }));
    }
    if dims.is_empty() {
        return b.inapplicable("no nonessential component with essential zeros");
    }
    b.data("components", Value::from(dims));
    if !report.warnings.is_empty() {
        b.data("warnings", json!(report.warnings));
    }
    b.finish()
}

/// A point of `Σ` with the tangent space used as its chart.
type ChartPoint = (DVector<f64>, Subspace);

/// Points of an essential stratum with `dim TΣ ≥ 1`, and a chart for it.
fn sigma_points(ctx: Option<&Context>) -> Result<(FlatConformalField, Vec<ChartPoint>), String> {
    match ctx {
        None => {
            let fx = null_plane_fixture().expect("fixture");
            let chart = Subspace::from_vectors(&[fx.p1.clone(), fx.p2.clone()], 5, 1e-12);
            let pts = [(0.1, 0.05), (-0.2, 0.1), (0.15, -0.25), (0.3, 0.2), (-0.1, -0.3)]
                .into_iter()
                .map(|(a, b)| (&fx.p1 * a + &fx.p2 * b, chart.clone()))
                .collect();
            Ok((fx.field, pts))
        }
        Some(c) => {
            let report = scan(c).map_err(|e| format!("component scan failed: {e}"))?;
            let mut pts = Vec::new();
            for comp in &report.components {
                for &i in comp.sigma.iter().take(5) {
                    let z = &report.zeros[i];
                    if let Ok(model) = local_model(&z.jet, c.field.space(), c.tol) {
                        if model.sing.dim() > 0 {
                            pts.push((z.x.clone(), model.sing.clone()));
                        }
                    }
                }
            }
            Ok((c.field.clone(), pts))
        }
    }
}

fn pties_ii(ctx: Option<&Context>) -> SuiteOutcome {
    let mut b = Builder::new(Theorem::PtiesIi, fixture_name(ctx, "signature (3,2) field with a null plane of essential zeros"));
    let tol = ctx.map_or(BUILTIN_TOL, |c| c.tol);
    let (field, pts) = match sigma_points(ctx) {
        Ok(v) => v,
        Err(e) => return b.inapplicable(e),
    };
    if pts.is_empty() {
        return b.inapplicable("no essential zeros with a positive-dimensional stratum");
    }
    let mut worst: f64 = 0.0;
    let mut lines = 0usize;
    let mut failures = Vec::new();
    for (x, _) in &pts {
        let s = match xi_at_point(&field, x, None, tol) {
            Ok(s) => s,
            Err(e) => {
                failures.push(format!("ξ undefined at {}: {e}", fmt_point(x)));
                continue;
            }
        };
        let Some(dir) = kernel_direction(&s) else { continue };
        match xi_kernel_transport(&field, x, &dir, 0.3, 15, None, tol) {
            Ok(r) => {
                worst = worst.max(r);
                lines += 1;
            }
            Err(e) => failures.push(format!("transport from {}: {e}", fmt_point(x))),
        }
    }
    if lines == 0 && failures.is_empty() {
        return b.inapplicable("Ker ξ ∩ TΣ is trivial at every sample");
    }
    b.check(Check::below("xi-kernel-transport", worst, 1e-7).with_detail(format!("{lines} lines, |t| ≤ 0.3")));
    b.check(Check::flag("transport-defined", failures.is_empty(), failures.join("; ")));
    b.finish()
}

/// A unit vector of `TΣ` annihilated by `ξ`.
fn kernel_direction(s: &XiSample) -> Option<DVector<f64>> {
    let k = s.tangent_basis.dim();
    if k == 0 {
        return None;
    }
    let coeffs = if s.xi.amax() == 0.0 {
        let mut e = DVector::zeros(k);
        e[0] = 1.0;
        e
    } else {
        let row = DMatrix::from_row_slice(1, k, s.xi.as_slice());
        let ker = conformal_jets::metric::kernel(&row, 1e-12);
        if ker.dim() == 0 {
            return None;
        }
        ker.vector(0)
    };
    Some((s.tangent_basis.basis() * coeffs).normalize())
}

fn fmt_point(x: &DVector<f64>) -> String {
    format!("[{}]", x.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(", "))
}

/// A gauge `τ = ⟨a, x⟩ + xᵀQx` with moderate coefficients.
fn random_gauge(n: usize, rng: &mut ChaCha8Rng) -> Rescaling {
    let a = random_vector(n, 0.5, rng);
    let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-0.3..0.3));
    Rescaling::quadratic(a, m)
}

fn pties_iii(ctx: Option<&Context>, rng: &mut ChaCha8Rng) -> SuiteOutcome {
    let mut b = Builder::new(Theorem::PtiesIii, fixture_name(ctx, "signature (3,2) field with a null plane of essential zeros, curved gauge"));
    let tol = ctx.map_or(BUILTIN_TOL, |c| c.tol);
    let (field, pts) = match sigma_points(ctx) {
        Ok(v) => v,
        Err(e) => return b.inapplicable(e),
    };
    if pts.is_empty() {
        return b.inapplicable("no essential zeros with a positive-dimensional stratum");
    }
    let gauge = random_gauge(field.dim(), rng);
    let mut samples = Vec::new();
    let mut restricted: f64 = 0.0;
    let mut fit: f64 = 0.0;
    let mut mu_gap: f64 = 0.0;
    let mut used = 0usize;
    for (x, chart) in &pts {
        let Ok(s) = xi_at_point(&field, x, Some(&gauge), tol) else { continue };
        let nonzero = !s.is_zero(1e-9);
        samples.push(s);
        if !nonzero {
            continue;
        }
        match sym_dxi_divisibility(&field, x, chart, 1e-4, Some(&gauge), tol) {
            Ok(d) => {
                restricted = restricted.max(d.restricted_residual);
                fit = fit.max(d.mu_fit_residual);
                let expected = chart.basis().tr_mul(&gauge.dtau(x));
                mu_gap = mu_gap.max((&d.mu - expected).amax());
                used += 1;
            }
            Err(e) => {
                b.check(Check::flag("divisibility-defined", false, format!("at {}: {e}", fmt_point(x))));
            }
        }
    }
    if used == 0 {
        return b.inapplicable("ξ vanishes at every sampled point of Σ");
    }
    b.check(Check::below("sym-dxi-on-ker-xi", restricted, 1e-6).with_detail(format!("{used} points")));
    b.check(Check::below("mu-fit", fit, 1e-6));
    b.check(Check::below("mu-matches-gauge", mu_gap, 1e-6).with_detail("μ against dτ restricted to TΣ"));
    let dim = pts[0].1.dim();
    if let Some(uc) = unique_continuation_check(&samples, dim) {
        b.check(uc);
    }
    b.data("gauge_linear", vector_json(&gauge.a));
    b.finish()
}

fn nyw(ctx: Option<&Context>, rng: &mut ChaCha8Rng) -> SuiteOutcome {
    let mut b = Builder::new(Theorem::Nyw, fixture_name(ctx, "cone apex, counterexample line, null plane"));
    let tol = ctx.map_or(BUILTIN_TOL, |c| c.tol);
    // (field, base point, direction)
    let mut lines: Vec<(FlatConformalField, DVector<f64>, DVector<f64>)> = Vec::new();
    match ctx {
        None => {
            let cone = lorentz_cone(4).expect("fixture");
            let apex = DVector::zeros(4);
            let model = local_model(&cone.jet_at(&apex), cone.space(), tol).expect("apex is essential");
            for d in model.sample_directions(4, rng) {
                lines.push((cone.clone(), apex.clone(), d.normalize()));
            }
            let cx = neutral_counterexample(4, 1.0).expect("fixture");
            for t in [0.0, -0.3] {
                lines.push((cx.field.clone(), &cx.m2 * t, cx.m2.clone()));
            }
            let np = null_plane_fixture().expect("fixture");
            let base = [(0.1, 0.05), (-0.2, 0.1), (0.0, 0.0), (0.2, -0.2)];
            let dirs = [
                np.p1.clone(),
                np.p2.clone(),
                (&np.p1 + &np.p2).normalize(),
                (&np.p1 - &np.p2 * 0.5).normalize(),
            ];
            for ((s, t), d) in base.into_iter().zip(dirs) {
                lines.push((np.field.clone(), &np.p1 * s + &np.p2 * t, d));
            }
        }
        Some(c) => {
            let zeros = find_zeros(&c.field, &c.region, c.grid, c.tol);
            for x in zeros.iter() {
                let Ok(model) = local_model(&c.field.jet_at(x), c.field.space(), c.tol) else { continue };
                for d in model.sample_directions(2, rng) {
                    lines.push((c.field.clone(), x.clone(), d.normalize()));
                }
                if lines.len() >= 10 {
                    break;
                }
            }
        }
    }
    let mut derivative: f64 = 0.0;
    let mut pairing: f64 = 0.0;
    let mut done = 0usize;
    let mut skipped = Vec::new();
    for (f, x, d) in &lines {
        match null_geodesic_jet_transport(f, x, d, 0.3, 12, tol) {
            Ok(r) => {
                derivative = derivative.max(r.derivative);
                pairing = pairing.max(r.pairing);
                done += 1;
            }
            Err(e) => skipped.push(format!("{}: {e}", fmt_point(x))),
        }
    }
    if done == 0 {
        return b.inapplicable("no null line of zeros through a sampled zero");
    }
    b.check(Check::below("nyw-derivative", derivative, 1e-7).with_detail(format!("{done} lines")));
    b.check(Check::below("nyw-pairing", pairing, 1e-7));
    if ctx.is_none() {
        b.check(Check::flag("all-lines-admissible", skipped.is_empty(), skipped.join("; ")));
    } else if !skipped.is_empty() {
        b.data("skipped", json!(skipped));
    }
    b.finish()
}

/// A zero at the origin whose `Ker(B + λ)` is nontrivial.
fn kernel_zero(space: &MetricSpace, rng: &mut ChaCha8Rng) -> (FlatConformalField, DVector<f64>) {
    let n = space.dim();
    let b = random_skew_with_kernel(space, rng);
    let u = random_vector(n, 1.0, rng);
    let f = FlatConformalField::new(space.clone(), DVector::zeros(n), b, 0.0, u).expect("valid parameters");
    (f, DVector::zeros(n))
}

fn quintuple_invariance(ctx: Option<&Context>, rng: &mut ChaCha8Rng) -> SuiteOutcome {
    const ZEROS: usize = 20;
    const GAUGES: usize = 20;
    let mut b = Builder::new(Theorem::QuintupleInvariance, fixture_name(ctx, "20 random zeros with nontrivial Ker(B + λ)"));
    let tol = ctx.map_or(BUILTIN_TOL, |c| c.tol);
    let zeros: Vec<(FlatConformalField, DVector<f64>)> = match ctx {
        None => {
            let spaces = builtin_spaces();
            (0..ZEROS).map(|i| kernel_zero(&spaces[i % spaces.len()], rng)).collect()
        }
        Some(c) => find_zeros(&c.field, &c.region, c.grid, c.tol)
            .into_iter()
            .take(ZEROS)
            .map(|x| (c.field.clone(), x))
            .collect(),
    };
    if zeros.is_empty() {
        return b.inapplicable("no zeros in the region");
    }
    let mut witness_res: f64 = 0.0;
    let mut delta_gap: f64 = 0.0;
    let mut battery_ok = true;
    let mut errors = Vec::new();
    for (f, x) in &zeros {
        let jet = f.jet_at(x);
        let q1 = match extract_quintuple(&jet, f.space(), tol) {
            Ok(q) => q,
            Err(e) => {
                errors.push(e.to_string());
                continue;
            }
        };
        for _ in 0..GAUGES {
            let gauge = Rescaling::linear(random_vector(f.dim(), 1.0, rng));
            let q2 = match conformal_jets::field::rescaled_jet(&jet, &gauge).and_then(|j| extract_quintuple(&j, f.space(), tol)) {
                Ok(q) => q,
                Err(e) => {
                    errors.push(e.to_string());
                    continue;
                }
            };
            battery_ok &= invariant_battery(&q1, &q2).iter().all(|c| c.passed);
            witness_res = witness_res.max(validate_witness(&q1, &q2, &Witness::identity(f.dim())));
            delta_gap = delta_gap.max((q1.delta_covector() - q2.delta_covector()).amax());
        }
    }
    b.check(Check::flag("battery", battery_ok, ""));
    b.check(Check::below("identity-witness", witness_res, 1e-10));
    b.check(Check::below("delta-difference", delta_gap, 1e-10));
    b.check(Check::flag("quintuples-defined", errors.is_empty(), errors.join("; ")));
    b.data("zeros", json!(zeros.len()));
    b.data("rescalings_per_zero", json!(GAUGES));
    b.finish()
}

/// Breaks a planted pair: even `i` shifts `λ`, odd `i` kills `∇v`.
fn break_pair(jet: &PointJet, space: &MetricSpace, i: usize) -> PointJet {
    let n = space.dim();
    let j = if i.is_multiple_of(2) {
        &jet.j + DMatrix::identity(n, n) * 0.25
    } else {
        DMatrix::zeros(n, n)
    };
    PointJet::at_origin(space, j, jet.dphi.clone())
}

fn lemma_equiv(ctx: Option<&Context>, rng: &mut ChaCha8Rng, seed: u64) -> SuiteOutcome {
    const PAIRS: usize = 20;
    let mut b = Builder::new(Theorem::LemmaEquiv, fixture_name(ctx, "20 planted pairs in signatures (3,0), (2,1), (2,2), (3,2)"));
    let (tol, budget) = ctx.map_or((BUILTIN_TOL, BUILTIN_BUDGET), |c| (c.tol, c.budget));
    let setups: Vec<(MetricSpace, bool)> = match ctx {
        None => [(3, 0, false), (2, 1, false), (2, 2, false), (2, 2, true), (3, 2, true)]
            .into_iter()
            .map(|(p, q, s)| (MetricSpace::diagonal(p, q).expect("signature"), s))
            .collect(),
        Some(c) => {
            let space = c.field.space();
            if !space.is_diagonal_standard() {
                return b.inapplicable("planted pairs need the standard diagonal metric");
            }
            let (p, q) = space.signature();
            vec![(space.clone(), false), (space.clone(), p == q)]
        }
    };
    let mut battery_ok = 0usize;
    let mut recovered = 0usize;
    let mut objective: f64 = 0.0;
    let mut blocks = [0.0f64; 4];
    let mut refuted = 0usize;
    let mut obstructions = std::collections::BTreeMap::<String, usize>::new();
    let mut problems = Vec::new();
    for i in 0..PAIRS {
        let (space, swap) = &setups[i % setups.len()];
        let pair = match planted_pair(space, *swap, rng) {
            Ok(p) => p,
            Err(e) => {
                problems.push(e.to_string());
                continue;
            }
        };
        let q1 = extract_quintuple(&pair.jet1, &pair.space1, tol);
        let q2 = extract_quintuple(&pair.jet2, &pair.space2, tol);
        let (Ok(q1), Ok(q2)) = (q1, q2) else {
            problems.push(format!("pair {i}: quintuple extraction failed"));
            continue;
        };
        if invariant_battery(&q1, &q2).iter().all(|c| c.passed) {
            battery_ok += 1;
        }
        match search_witness(&q1, &q2, budget, seed.wrapping_add(i as u64)) {
            Ok(v) if v.status == Status::Equivalent => {
                objective = objective.max(v.residual);
                let w = v.witness.expect("equivalent verdicts carry a witness");
                match build_two_jet_witness(&w, &pair.jet1, &pair.jet2, &pair.space1, &pair.space2) {
                    Ok(tw) => {
                        let r = verify_sys(&tw, &pair.jet1, &pair.jet2, &pair.space1, &pair.space2);
                        for (slot, val) in blocks.iter_mut().zip([r.first_order, r.second_order, r.metric, r.metric_derivative]) {
                            *slot = slot.max(val);
                        }
                        recovered += 1;
                    }
                    Err(e) => problems.push(format!("pair {i}: {e}")),
                }
            }
            Ok(v) => problems.push(format!("pair {i}: search {} (objective {:.3e})", v.status.as_str(), v.residual)),
            Err(e) => problems.push(format!("pair {i}: {e}")),
        }

        let broken = break_pair(&pair.jet2, &pair.space2, i);
        if let Ok(q3) = extract_quintuple(&broken, &pair.space2, tol) {
            let battery = invariant_battery(&q1, &q3);
            if let Some(first) = battery.iter().find(|c| !c.passed) {
                refuted += 1;
                *obstructions.entry(first.name.clone()).or_default() += 1;
            }
        }
    }
    b.check(Check::flag("battery-passes", battery_ok == PAIRS, format!("{battery_ok}/{PAIRS}")));
    b.check(Check::flag("witness-recovered", recovered == PAIRS, format!("{recovered}/{PAIRS}; {}", problems.join("; "))));
    b.check(Check::below("search-objective", objective, 1e-14));
    for (name, val) in ["sys-first-order", "sys-second-order", "sys-metric", "sys-metric-derivative"].into_iter().zip(blocks) {
        b.check(Check::below(name, val, 1e-8));
    }
    b.check(Check::flag("inequivalent-refuted", refuted == PAIRS, format!("{refuted}/{PAIRS}")));
    b.data("obstructions", json!(obstructions));
    b.finish()
}
