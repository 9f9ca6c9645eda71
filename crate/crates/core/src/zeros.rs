//! Zeros of a conformal field: location, classification, local models and
//! the structure of sampled zero-set components.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::checks::Check;
use crate::error::{Error, Result};
use crate::field::{FlatConformalField, PointJet};
use crate::jets::char_poly;
use crate::metric::{
    intersect, is_null, kernel, kernel_with_floor, lstsq, lstsq_with_floor, orth_complement,
    rank_with_floor, signature, MetricSpace, Subspace,
};

/// Points closer than this are reported as one zero.
pub const DEDUP_RADIUS: f64 = 1e-6;
const NEWTON_MAX_ITER: usize = 120;
const PINV_TOL: f64 = 1e-12;
/// Absolute scale below which jet data counts as zero in rank decisions;
/// fields are assumed to have parameters of order one.
pub const JET_FLOOR: f64 = 1.0;

/// `Ker ∇v_x` with the jet rank convention.
pub fn jet_kernel(j: &DMatrix<f64>, tol: f64) -> Subspace {
    kernel_with_floor(j, tol, JET_FLOOR)
}

/// `rank ∇v_x` with the jet rank convention.
pub fn jet_rank(j: &DMatrix<f64>, tol: f64) -> usize {
    rank_with_floor(j, tol, JET_FLOOR)
}

/// Axis-aligned box `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub lo: DVector<f64>,
    pub hi: DVector<f64>,
}

impl Region {
    pub fn new(lo: DVector<f64>, hi: DVector<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch {
                what: "region upper corner",
                expected: lo.len(),
                got: hi.len(),
            });
        }
        if lo.iter().zip(hi.iter()).any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
            return Err(Error::InvalidMetric("region needs finite lo < hi on every axis".into()));
        }
        Ok(Self { lo, hi })
    }

    /// `[−half, half]^n`.
    pub fn cube(n: usize, half: f64) -> Self {
        Self {
            lo: DVector::from_element(n, -half),
            hi: DVector::from_element(n, half),
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &DVector<f64>, slack: f64) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(self.hi.iter()))
            .all(|(v, (a, b))| *v >= a - slack && *v <= b + slack)
    }

    /// Largest grid step over the axes.
    pub fn spacing(&self, grid_per_axis: usize) -> f64 {
        let steps = grid_per_axis.max(2) as f64 - 1.0;
        (&self.hi - &self.lo).max() / steps
    }

    /// All `grid^n` lattice points, last axis fastest.
    pub fn grid(&self, grid_per_axis: usize) -> Vec<DVector<f64>> {
        let n = self.dim();
        let g = grid_per_axis.max(2);
        let total = g.pow(n as u32);
        (0..total)
            .map(|mut idx| {
                let mut x = DVector::zeros(n);
                for axis in (0..n).rev() {
                    let i = idx % g;
                    idx /= g;
                    let t = i as f64 / (g - 1) as f64;
                    x[axis] = self.lo[axis] + t * (self.hi[axis] - self.lo[axis]);
                }
                x
            })
            .collect()
    }
}

/// Newton iteration on `v(x) = 0` with minimum-norm steps, so that rank
/// deficient Jacobians (zero manifolds) are handled by the pseudo-inverse.
/// Returns the limit point if `|v| < tol` there.
pub fn newton(f: &FlatConformalField, x0: &DVector<f64>, tol: f64) -> Option<DVector<f64>> {
    let mut x = x0.clone();
    let mut res = f.evaluate(&x).norm();
    let escape = 1e3 * (1.0 + x0.norm());
    // near singular zeros convergence is only linear, so iterate until the
    // steps stall instead of stopping at the first point below `tol`
    for _ in 0..NEWTON_MAX_ITER {
        if res == 0.0 {
            break;
        }
        let v = f.evaluate(&x);
        let step = lstsq(&f.jacobian(&x), &(-v), PINV_TOL);
        let next = &x + &step;
        let next_res = f.evaluate(&next).norm();
        if !next_res.is_finite() || next.norm() > escape {
            return None;
        }
        if res < tol && next_res >= res {
            break;
        }
        x = next;
        res = next_res;
        if step.norm() <= 1e-15 * (1.0 + x.norm()) {
            break;
        }
    }
    (res < tol).then_some(x)
}

fn lex_cmp(a: &DVector<f64>, b: &DVector<f64>) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b.iter()) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            other => return other,
        }
    }
    std::cmp::Ordering::Equal
}

/// Sorted, deduplicated points.
fn dedup_sorted(mut pts: Vec<DVector<f64>>, radius: f64) -> Vec<DVector<f64>> {
    pts.sort_by(lex_cmp);
    let mut kept: Vec<DVector<f64>> = Vec::with_capacity(pts.len());
    for p in pts {
        let dup = kept
            .iter()
            .rev()
            .take_while(|k| k[0] >= p[0] - radius)
            .any(|k| (k - &p).norm() < radius);
        if !dup {
            kept.push(p);
        }
    }
    kept
}

/// Newton from every grid point of the region; converged points inside the
/// region, deduplicated and sorted lexicographically.
pub fn find_zeros(
    f: &FlatConformalField,
    region: &Region,
    grid_per_axis: usize,
    tol: f64,
) -> Vec<DVector<f64>> {
    let slack = 1e-9 * (&region.hi - &region.lo).max();
    let found: Vec<DVector<f64>> = region
        .grid(grid_per_axis)
        .par_iter()
        .filter_map(|seed| newton(f, seed, tol))
        .filter(|x| region.contains(x, slack))
        .collect();
    dedup_sorted(found, DEDUP_RADIUS)
}

/// `H = Ker ∇v ∩ Ker dφ`.
pub fn simultaneous_kernel(jet: &PointJet, tol: f64) -> Subspace {
    let n = jet.dim();
    let mut stacked = DMatrix::zeros(n + 1, n);
    stacked.view_mut((0, 0), (n, n)).copy_from(&jet.j);
    stacked.row_mut(n).copy_from(&jet.dphi.transpose());
    kernel_with_floor(&stacked, tol, JET_FLOOR)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ZeroKind {
    Nonessential,
    Essential,
}

impl ZeroKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ZeroKind::Nonessential => "nonessential",
            ZeroKind::Essential => "essential",
        }
    }
}

/// `Alpha`: nonessential. `Beta`: essential, `g` semidefinite on `H`.
/// `Gamma`: essential, `g` indefinite on `H` (singular zero).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ZeroCase {
    Alpha,
    Beta,
    Gamma,
}

impl ZeroCase {
    pub fn as_str(self) -> &'static str {
        match self {
            ZeroCase::Alpha => "alpha",
            ZeroCase::Beta => "beta",
            ZeroCase::Gamma => "gamma",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZeroClassification {
    pub kind: ZeroKind,
    pub case: ZeroCase,
    pub singular: bool,
    /// Measured `|φ(x)|`.
    pub phi_abs: f64,
    /// Relative least-squares residual of `∇v_x · y = ∇φ_x` (0 when `∇φ = 0`).
    pub range_residual: f64,
    /// Signature `(pos, neg, zero)` of `g` on `H`.
    pub h_signature: (usize, usize, usize),
}

impl ZeroClassification {
    pub fn is_essential(&self) -> bool {
        self.kind == ZeroKind::Essential
    }

    /// Factor by which the deciding quantity `max(|φ|, range residual)`
    /// clears `tol` on the side of the decision taken.
    pub fn margin(&self, tol: f64) -> f64 {
        let decisive = self.phi_abs.max(self.range_residual);
        if self.is_essential() {
            decisive / tol
        } else if decisive == 0.0 {
            f64::INFINITY
        } else {
            tol / decisive
        }
    }
}

/// Relative residual of the best solution of `J y = b`.
fn range_residual(j: &DMatrix<f64>, b: &DVector<f64>, tol: f64) -> f64 {
    let bn = b.norm();
    if bn == 0.0 {
        return 0.0;
    }
    let y = lstsq_with_floor(j, b, tol, JET_FLOOR);
    (j * y - b).norm() / bn
}

/// Nonessential iff `|φ| < tol` and `∇φ ∈ ∇v(T_xM)`; among essential zeros
/// the sign behaviour of `g` on `H` separates the two remaining cases.
pub fn classify_zero(jet: &PointJet, space: &MetricSpace, tol: f64) -> Result<ZeroClassification> {
    let norm = jet.v.norm();
    if norm > tol {
        return Err(Error::NotAZero { norm });
    }
    let phi_abs = jet.phi.abs();
    let rr = range_residual(&jet.j, &jet.grad_phi(space), tol);
    let h = simultaneous_kernel(jet, tol);
    let h_signature = signature(&h.gram(space), tol);
    let nonessential = phi_abs < tol && rr < tol;
    let (kind, case) = if nonessential {
        (ZeroKind::Nonessential, ZeroCase::Alpha)
    } else if h_signature.0 == 0 || h_signature.1 == 0 {
        (ZeroKind::Essential, ZeroCase::Beta)
    } else {
        (ZeroKind::Essential, ZeroCase::Gamma)
    };
    Ok(ZeroClassification {
        kind,
        case,
        singular: case == ZeroCase::Gamma,
        phi_abs,
        range_residual: rr,
        h_signature,
    })
}

/// Local description of the zero set near `x`: `x + (C ∩ H)` for essential
/// zeros, `x + H` for zeros of Killing fields.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalZeroModel {
    pub x: DVector<f64>,
    pub h: Subspace,
    pub h_perp: Subspace,
    /// `H ∩ H⊥`.
    pub sing: Subspace,
    pub phi_x: f64,
    /// Whether membership also requires `y − x` to be null.
    pub cone: bool,
    space: MetricSpace,
}

impl LocalZeroModel {
    fn build(jet: &PointJet, space: &MetricSpace, h: Subspace, cone: bool, tol: f64) -> Self {
        let h_perp = orth_complement(&h, space);
        let sing = intersect(&h, &h_perp, tol.max(1e-9));
        Self {
            x: jet.x.clone(),
            h,
            h_perp,
            sing,
            phi_x: jet.phi,
            cone,
            space: space.clone(),
        }
    }

    /// Predicted membership of `y` in the zero set.
    pub fn contains(&self, y: &DVector<f64>, tol: f64) -> bool {
        self.membership_residual(y) <= tol
    }

    /// Distance of `y − x` from `H` plus, for cone models, the null defect
    /// `|g(d,d)|`; both relative to `|d|`. Points within [`DEDUP_RADIUS`]
    /// of `x` are `x`.
    pub fn membership_residual(&self, y: &DVector<f64>) -> f64 {
        let d = y - &self.x;
        let dn = d.norm();
        if dn <= DEDUP_RADIUS {
            return 0.0;
        }
        let off = self.h.distance(&d) / dn;
        if self.cone {
            off + self.space.quad(&d).abs() / (dn * dn)
        } else {
            off
        }
    }

    /// Unit (Euclidean) directions in `C ∩ H` (or in `H` for non-cone
    /// models). Empty when the model is the isolated point `{x}`.
    pub fn sample_directions<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<DVector<f64>> {
        let k = self.h.dim();
        if k == 0 {
            return Vec::new();
        }
        let basis = self.h.basis();
        if !self.cone {
            return (0..count)
                .map(|_| {
                    let c = DVector::from_fn(k, |_, _| rng.sample::<f64, _>(StandardNormal));
                    (basis * c).normalize()
                })
                .collect();
        }
        let eig = self.h.gram(&self.space).symmetric_eigen();
        let scale = eig.eigenvalues.amax().max(1.0);
        let thr = 1e-9 * scale;
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        let mut rad = Vec::new();
        for i in 0..k {
            let ev = eig.eigenvalues[i];
            let col = basis * eig.eigenvectors.column(i);
            if ev > thr {
                pos.push(col / ev.sqrt());
            } else if ev < -thr {
                neg.push(col / (-ev).sqrt());
            } else {
                rad.push(col);
            }
        }
        let indefinite = !pos.is_empty() && !neg.is_empty();
        if !indefinite && rad.is_empty() {
            return Vec::new();
        }
        let n = self.x.len();
        let unit_combo = |vs: &[DVector<f64>], rng: &mut R| {
            let c = DVector::from_fn(vs.len(), |_, _| rng.sample::<f64, _>(StandardNormal)).normalize();
            vs.iter().zip(c.iter()).fold(DVector::zeros(n), |acc, (v, a)| acc + v * *a)
        };
        (0..count)
            .map(|_| {
                let mut d = DVector::zeros(n);
                if indefinite {
                    d += unit_combo(&pos, rng) + unit_combo(&neg, rng);
                }
                if !rad.is_empty() {
                    let weight = if indefinite { rng.sample::<f64, _>(StandardNormal) } else { 1.0 };
                    d += unit_combo(&rad, rng) * weight;
                }
                d.normalize()
            })
            .collect()
    }
}

fn require_essential(jet: &PointJet, space: &MetricSpace, tol: f64) -> Result<ZeroClassification> {
    let class = classify_zero(jet, space, tol)?;
    if !class.is_essential() {
        return Err(Error::WrongZeroKind {
            found: "nonessential",
            required: "essential",
        });
    }
    Ok(class)
}

/// Cone model `x + (C ∩ H)` at an essential zero.
pub fn local_model(jet: &PointJet, space: &MetricSpace, tol: f64) -> Result<LocalZeroModel> {
    require_essential(jet, space, tol)?;
    let h = simultaneous_kernel(jet, tol);
    Ok(LocalZeroModel::build(jet, space, h, true, tol))
}

/// Linear model `x + Ker ∇v_x` at a zero of a Killing field (`φ ≡ 0`,
/// recognised from `φ(x) = 0` and `dφ = 0`).
pub fn kobayashi_model(jet: &PointJet, space: &MetricSpace, tol: f64) -> Result<LocalZeroModel> {
    let class = classify_zero(jet, space, tol)?;
    if class.is_essential() {
        return Err(Error::WrongZeroKind {
            found: "essential",
            required: "nonessential",
        });
    }
    if jet.dphi.amax() > tol {
        return Err(Error::Unsupported(
            "linear model needs a Killing representative (dφ = 0)".into(),
        ));
    }
    let h = jet_kernel(&jet.j, tol);
    Ok(LocalZeroModel::build(jet, space, h, false, tol))
}

/// Residuals of the two transport relations along a null line of zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportResiduals {
    /// `max |d/dt[∇v_y(t) w] − ½ g(w, ∇φ) ẏ|`.
    pub derivative: f64,
    /// `max |g(w, ∇φ(y(t))) − g(w, ∇φ(y(0)))|`.
    pub pairing: f64,
    pub samples: usize,
}

/// Checks the transport relations along `y(t) = x + t·dir`, `|t| ≤ t_max`,
/// for a basis of vectors `w` with `g(dir, w) = 0`.
pub fn null_geodesic_jet_transport(
    f: &FlatConformalField,
    x: &DVector<f64>,
    dir: &DVector<f64>,
    t_max: f64,
    steps: usize,
    tol: f64,
) -> Result<TransportResiduals> {
    let space = f.space();
    let n = f.dim();
    let jet = f.jet_at(x);
    let norm = jet.v.norm();
    if norm > tol {
        return Err(Error::NotAZero { norm });
    }
    let h = simultaneous_kernel(&jet, tol);
    if !h.contains(dir, 1e-8) || !is_null(dir, space, 1e-10) {
        return Err(Error::InadmissibleDirection(
            "direction must be null and lie in Ker ∇v ∩ Ker dφ".into(),
        ));
    }
    let steps = steps.max(2);
    let ts: Vec<f64> = (0..=steps)
        .map(|i| -t_max + 2.0 * t_max * i as f64 / steps as f64)
        .collect();
    for &t in &ts {
        let y = x + dir * t;
        let scale = 1.0 + y.norm_squared();
        if f.evaluate(&y).norm() > 1e-8 * scale {
            return Err(Error::LeavesStratum { t });
        }
    }
    let dir_flat = space.lower(dir);
    let ws = kernel(&DMatrix::from_row_slice(1, n, dir_flat.as_slice()), 1e-12);
    let h_step = (t_max / steps as f64).max(1e-6);
    let grad0 = jet.grad_phi(space);
    let mut derivative: f64 = 0.0;
    let mut pairing: f64 = 0.0;
    for &t in &ts {
        let y = x + dir * t;
        let jp = f.jacobian(&(&y + dir * h_step));
        let jm = f.jacobian(&(&y - dir * h_step));
        let dj = (jp - jm) / (2.0 * h_step);
        let grad = space.raise(&gradient_of_phi(f, &y, h_step));
        for i in 0..ws.dim() {
            let w = ws.vector(i);
            let pred = dir * (0.5 * space.inner(&w, &grad));
            derivative = derivative.max((&dj * &w - pred).amax());
            pairing = pairing.max((space.inner(&w, &grad) - space.inner(&w, &grad0)).abs());
        }
    }
    Ok(TransportResiduals {
        derivative,
        pairing,
        samples: ts.len(),
    })
}

/// `dφ_y` from centered differences of `φ`.
fn gradient_of_phi(f: &FlatConformalField, y: &DVector<f64>, h: f64) -> DVector<f64> {
    let n = y.len();
    DVector::from_fn(n, |k, _| {
        let mut e = DVector::zeros(n);
        e[k] = h;
        (f.phi(&(y + &e)) - f.phi(&(y - &e))) / (2.0 * h)
    })
}

/// A located zero with its jet and classification.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroSample {
    pub x: DVector<f64>,
    pub jet: PointJet,
    pub class: ZeroClassification,
}

/// Essential (every sample essential) or nonessential component.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComponentKind {
    Essential,
    Nonessential,
}

impl ComponentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ComponentKind::Essential => "essential",
            ComponentKind::Nonessential => "nonessential",
        }
    }
}

/// Dimension data of a nonessential component with nonempty essential set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ComponentDims {
    pub dim_sigma: usize,
    pub dim_regular: usize,
    /// Rank of `g` restricted to the tangent space of the regular part.
    pub restricted_rank: usize,
    /// Signature `(pos, neg, zero)` of that restriction.
    pub sign_pattern: (usize, usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentReport {
    /// Indices into [`ZeroReport::zeros`].
    pub members: Vec<usize>,
    pub kind: ComponentKind,
    /// Members that are essential zeros.
    pub sigma: Vec<usize>,
    pub dims: Option<ComponentDims>,
    pub checks: Vec<Check>,
}

impl ComponentReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZeroReport {
    pub zeros: Vec<ZeroSample>,
    pub components: Vec<ComponentReport>,
    pub grid_spacing: f64,
    pub warnings: Vec<String>,
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        Self((0..n).collect())
    }

    fn find(&mut self, i: usize) -> usize {
        let mut r = i;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut c = i;
        while self.0[c] != r {
            let next = self.0[c];
            self.0[c] = r;
            c = next;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Whether the segment from `a` to `b` can be followed through zeros by
/// repeated bisection and Newton refinement down to `min_step`.
fn refinable_path(
    f: &FlatConformalField,
    a: &DVector<f64>,
    b: &DVector<f64>,
    min_step: f64,
    tol: f64,
    depth: usize,
) -> bool {
    let d = (a - b).norm();
    if d <= min_step {
        return true;
    }
    if depth == 0 {
        return false;
    }
    let mid = (a + b) * 0.5;
    let z = match newton(f, &mid, tol) {
        Some(z) => z,
        None => return false,
    };
    if (&z - &mid).norm() > 0.4 * d {
        return false;
    }
    refinable_path(f, a, &z, min_step, tol, depth - 1)
        && refinable_path(f, &z, b, min_step, tol, depth - 1)
}

type Cell = Vec<i64>;

fn cell_of(x: &DVector<f64>, size: f64) -> Cell {
    x.iter().map(|v| (v / size).floor() as i64).collect()
}

fn neighbour_cells(c: &Cell) -> Vec<Cell> {
    let mut out = vec![c.clone()];
    for axis in 0..c.len() {
        let mut next = Vec::with_capacity(out.len() * 3);
        for base in &out {
            for off in [-1i64, 0, 1] {
                let mut cc = base.clone();
                cc[axis] += off;
                next.push(cc);
            }
        }
        out = next;
    }
    out
}

/// Groups zeros by adjacency at sampling resolution: two zeros within three
/// grid steps are joined when the segment between them refines to a path
/// of zeros.
fn group_components(f: &FlatConformalField, pts: &[DVector<f64>], spacing: f64, tol: f64) -> Vec<Vec<usize>> {
    let radius = 3.0 * spacing;
    let mut cells: HashMap<Cell, Vec<usize>> = HashMap::new();
    for (i, p) in pts.iter().enumerate() {
        cells.entry(cell_of(p, radius)).or_default().push(i);
    }
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, p) in pts.iter().enumerate() {
        for c in neighbour_cells(&cell_of(p, radius)) {
            if let Some(list) = cells.get(&c) {
                for &j in list {
                    if j > i {
                        let d = (p - &pts[j]).norm();
                        if d < radius {
                            pairs.push((d, i, j));
                        }
                    }
                }
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut uf = UnionFind::new(pts.len());
    let min_step = spacing / 8.0;
    for (_, i, j) in pairs {
        if uf.find(i) == uf.find(j) {
            continue;
        }
        if refinable_path(f, &pts[i], &pts[j], min_step, tol, 10) {
            uf.union(i, j);
        }
    }
    let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
    for i in 0..pts.len() {
        let r = uf.find(i);
        groups.entry(r).or_default().push(i);
    }
    let mut out: Vec<Vec<usize>> = groups.into_values().collect();
    out.sort_by_key(|g| g[0]);
    out
}

/// Locates zeros on a grid, groups them into sampled components and
/// evaluates the structure relations on each component.
pub fn component_scan(
    f: &FlatConformalField,
    region: &Region,
    grid_per_axis: usize,
    tol: f64,
) -> Result<ZeroReport> {
    let space = f.space();
    let pts = find_zeros(f, region, grid_per_axis, tol);
    if pts.is_empty() {
        return Err(Error::NoZeros);
    }
    let zeros: Vec<ZeroSample> = pts
        .par_iter()
        .map(|x| {
            let jet = f.jet_at(x);
            classify_zero(&jet, space, tol).map(|class| ZeroSample {
                x: x.clone(),
                jet,
                class,
            })
        })
        .collect::<Result<_>>()?;
    let spacing = region.spacing(grid_per_axis);
    let groups = group_components(f, &pts, spacing, tol);
    let components: Vec<ComponentReport> = groups
        .into_iter()
        .map(|members| analyze_component(f, &zeros, members, spacing, tol))
        .collect();
    let warnings = sampling_warnings(&zeros, &components, spacing);
    Ok(ZeroReport {
        zeros,
        components,
        grid_spacing: spacing,
        warnings,
    })
}

fn sampling_warnings(zeros: &[ZeroSample], comps: &[ComponentReport], spacing: f64) -> Vec<String> {
    let mut out = Vec::new();
    let radius = 3.0 * spacing;
    for (a, ca) in comps.iter().enumerate() {
        for (b, cb) in comps.iter().enumerate().skip(a + 1) {
            let mut best = f64::INFINITY;
            for &i in &ca.members {
                for &j in &cb.members {
                    best = best.min((&zeros[i].x - &zeros[j].x).norm());
                }
            }
            if best < 2.0 * radius {
                out.push(format!(
                    "components {a} and {b} are {best:.3e} apart, within two adjacency radii; \
                     connectivity is not resolved at this grid"
                ));
            }
        }
        if ca.members.len() == 1 {
            let s = &zeros[ca.members[0]];
            let positive_dim = match s.class.kind {
                ZeroKind::Nonessential => s.jet.j.nrows() - jet_rank(&s.jet.j, 1e-9) > 0,
                ZeroKind::Essential => s.class.case == ZeroCase::Gamma,
            };
            if positive_dim {
                out.push(format!(
                    "component {a} has a single sample but its local model is positive-dimensional"
                ));
            }
        }
    }
    out
}

fn analyze_component(
    f: &FlatConformalField,
    zeros: &[ZeroSample],
    members: Vec<usize>,
    spacing: f64,
    tol: f64,
) -> ComponentReport {
    let space = f.space();
    let sigma: Vec<usize> = members
        .iter()
        .copied()
        .filter(|&i| zeros[i].class.is_essential())
        .collect();
    let regular: Vec<usize> = members
        .iter()
        .copied()
        .filter(|&i| !zeros[i].class.is_essential())
        .collect();
    let kind = if regular.is_empty() {
        ComponentKind::Essential
    } else {
        ComponentKind::Nonessential
    };
    let mut checks = Vec::new();

    let phis: Vec<f64> = members.iter().map(|&i| zeros[i].jet.phi).collect();
    let phi_spread = spread(&phis);
    checks.push(Check::below("phi-constant", phi_spread, 1e-8));

    let polys: Vec<_> = members.iter().map(|&i| char_poly(&zeros[i].jet.j)).collect();
    let cp_spread = polys
        .iter()
        .map(|p| p.distance(&polys[0]))
        .fold(0.0, f64::max);
    checks.push(Check::below("charpoly-constant", cp_spread, 1e-8));

    // nonessential zeros are Killing zeros for a rescaled metric, where ∇v is
    // skew-adjoint and has even rank
    let odd = regular
        .iter()
        .filter(|&&i| jet_rank(&zeros[i].jet.j, tol) % 2 == 1)
        .count();
    checks.push(Check::flag(
        "even-codimension",
        odd == 0,
        format!("{odd} nonessential samples with odd rank"),
    ));

    // semidefiniteness of g on H along Σ
    let expect_semidefinite = kind == ComponentKind::Essential;
    let wrong_case = sigma
        .iter()
        .filter(|&&i| (zeros[i].class.case == ZeroCase::Beta) != expect_semidefinite)
        .count();
    checks.push(Check::flag(
        "sigma-case",
        wrong_case == 0,
        format!(
            "{wrong_case} essential samples where g|H is {}semidefinite",
            if expect_semidefinite { "not " } else { "" }
        ),
    ));

    checks.push(totally_geodesic_check(f, zeros, &sigma, tol));

    let mut dims = None;
    if kind == ComponentKind::Nonessential && !sigma.is_empty() {
        let sigma_dims: Vec<usize> = sigma
            .iter()
            .map(|&i| sing_dim(&zeros[i].jet, space, tol))
            .collect();
        let patterns: Vec<(usize, (usize, usize, usize))> = regular
            .iter()
            .map(|&i| {
                let k = jet_kernel(&zeros[i].jet.j, tol);
                (k.dim(), signature(&k.gram(space), tol))
            })
            .collect();
        let uniform_sigma = sigma_dims.iter().all(|&d| d == sigma_dims[0]);
        let uniform_pattern = patterns.iter().all(|p| *p == patterns[0]);
        checks.push(Check::flag(
            "sign-pattern-constant",
            uniform_sigma && uniform_pattern,
            format!("sigma dims {:?}, regular patterns {:?}", dedup_small(&sigma_dims), dedup_small(&patterns)),
        ));
        let (dim_regular, sign_pattern) = patterns[0];
        let restricted_rank = sign_pattern.0 + sign_pattern.1;
        let d = ComponentDims {
            dim_sigma: sigma_dims[0],
            dim_regular,
            restricted_rank,
            sign_pattern,
        };
        let lhs = d.dim_regular as i64 - d.dim_sigma as i64;
        checks.push(Check::flag(
            "dimension-relation",
            lhs == d.restricted_rank as i64 + 1,
            format!(
                "dim(N\\Sigma) - dim(Sigma) = {lhs}, r + 1 = {}",
                d.restricted_rank + 1
            ),
        ));
        let sigma_ranks: Vec<usize> = sigma.iter().map(|&i| jet_rank(&zeros[i].jet.j, tol)).collect();
        let reg_ranks: Vec<usize> = regular.iter().map(|&i| jet_rank(&zeros[i].jet.j, tol)).collect();
        let bad = reg_ranks
            .iter()
            .flat_map(|ry| sigma_ranks.iter().map(move |rx| (*ry, *rx)))
            .filter(|(ry, rx)| *ry != rx + 2)
            .count();
        checks.push(Check::flag(
            "rank-relation",
            bad == 0,
            format!(
                "ranks on N\\Sigma {:?}, on Sigma {:?}",
                dedup_small(&reg_ranks),
                dedup_small(&sigma_ranks)
            ),
        ));
        checks.push(tangent_check(f, zeros, &regular, &sigma, tol));
        checks.push(refined_sigma_check(f, zeros, &sigma, spacing, tol));
        dims = Some(d);
    }

    ComponentReport {
        members,
        kind,
        sigma,
        dims,
        checks,
    }
}

fn spread(xs: &[f64]) -> f64 {
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if xs.is_empty() {
        0.0
    } else {
        hi - lo
    }
}

fn dedup_small<T: PartialEq + Clone>(xs: &[T]) -> Vec<T> {
    let mut out: Vec<T> = Vec::new();
    for x in xs {
        if !out.contains(x) {
            out.push(x.clone());
        }
    }
    out
}

fn sing_dim(jet: &PointJet, space: &MetricSpace, tol: f64) -> usize {
    let h = simultaneous_kernel(jet, tol);
    let hp = orth_complement(&h, space);
    intersect(&h, &hp, tol.max(1e-9)).dim()
}

/// Segments between essential samples consist of zeros (20 interior points,
/// at most 20 pairs).
fn totally_geodesic_check(f: &FlatConformalField, zeros: &[ZeroSample], sigma: &[usize], tol: f64) -> Check {
    let mut worst: f64 = 0.0;
    let mut pairs = 0;
    'outer: for (a, &i) in sigma.iter().enumerate() {
        for &j in sigma.iter().skip(a + 1) {
            if pairs == 20 {
                break 'outer;
            }
            pairs += 1;
            for k in 1..=20 {
                let t = k as f64 / 21.0;
                let y = &zeros[i].x * (1.0 - t) + &zeros[j].x * t;
                let scale = 1.0 + y.norm_squared();
                worst = worst.max(f.evaluate(&y).norm() / scale);
            }
        }
    }
    Check::below("sigma-totally-geodesic", worst, 1e-8_f64.max(10.0 * tol))
        .with_detail(format!("{pairs} segments"))
}

/// At regular samples, kernel directions of `∇v` are tangent to the zero
/// set: a small step along them is corrected by Newton only to second order.
fn tangent_check(
    f: &FlatConformalField,
    zeros: &[ZeroSample],
    regular: &[usize],
    sigma: &[usize],
    tol: f64,
) -> Check {
    let mut worst: f64 = 0.0;
    for &i in regular.iter().take(50) {
        let y = &zeros[i].x;
        let dist = sigma
            .iter()
            .map(|&s| (&zeros[s].x - y).norm())
            .fold(f64::INFINITY, f64::min)
            .min(1.0);
        if dist < 1e-6 {
            continue;
        }
        let eps = 1e-4 * dist;
        let k = jet_kernel(&zeros[i].jet.j, tol);
        for c in 0..k.dim() {
            let start = y + k.vector(c) * eps;
            let ratio = match newton(f, &start, tol) {
                Some(z) => (&z - &start).norm() / eps,
                None => f64::INFINITY,
            };
            worst = worst.max(ratio);
        }
    }
    Check::below("tangent-kernel", worst, 1e-2)
}

/// Re-samples around each essential sample at a quarter of the grid step
/// and checks that essential zeros found there lie in `x + H ∩ H⊥`.
fn refined_sigma_check(
    f: &FlatConformalField,
    zeros: &[ZeroSample],
    sigma: &[usize],
    spacing: f64,
    tol: f64,
) -> Check {
    let space = f.space();
    let mut worst: f64 = 0.0;
    let mut found = 0;
    for &i in sigma.iter().take(20) {
        let x = &zeros[i].x;
        let h = simultaneous_kernel(&zeros[i].jet, tol);
        let sing = intersect(&h, &orth_complement(&h, space), tol.max(1e-9));
        let n = x.len();
        for axis in 0..n {
            for sgn in [-1.0, 1.0] {
                let mut seed = x.clone();
                seed[axis] += sgn * spacing / 4.0;
                if let Some(z) = newton(f, &seed, tol) {
                    let jet = f.jet_at(&z);
                    if let Ok(c) = classify_zero(&jet, space, tol) {
                        if c.is_essential() && (&z - x).norm() < spacing {
                            found += 1;
                            worst = worst.max(sing.distance(&(&z - x)));
                        }
                    }
                }
            }
        }
    }
    Check::below("sigma-refined", worst, 1e-6).with_detail(format!("{found} refined essential zeros"))
}
