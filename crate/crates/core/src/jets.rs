//! Characteristic polynomials, associated quintuples and conformal
//! equivalence of 1- and 2-jets at zeros.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::checks::Check;
use crate::error::{Error, Result};
use crate::field::PointJet;
use crate::metric::{
    isometry_from_params, lstsq, signature, skew_param_count, MetricSpace, Subspace,
};
use crate::zeros::{jet_kernel, jet_rank};

/// Objective value below which a search result counts as a witness.
pub const WITNESS_OBJECTIVE: f64 = 1e-14;
/// Largest transport residual accepted when validating a witness.
pub const WITNESS_RESIDUAL: f64 = 1e-7;
/// Candidates worse conditioned than this are runaways toward the boundary
/// of the group, not witnesses, however small their objective.
pub const MAX_WITNESS_CONDITION: f64 = 1e6;
/// Local searches per discrete branch of the group.
pub const DEFAULT_STARTS: usize = 16;
pub const DEFAULT_BUDGET: usize = 5000;
const RANK_TOL: f64 = 1e-9;
const POLY_TOL: f64 = 1e-7;

/// Monic characteristic polynomial `det(t·Id − J)`, coefficients from the
/// leading term down: `coeffs[0] = 1`, `coeffs[n] = (−1)^n det J`.
#[derive(Debug, Clone, PartialEq)]
pub struct CharPoly {
    pub coeffs: Vec<f64>,
}

impl CharPoly {
    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Horner evaluation.
    pub fn eval(&self, t: f64) -> f64 {
        self.coeffs.iter().fold(0.0, |acc, &c| acc * t + c)
    }

    /// Max coefficient difference, scaled by the larger coefficient
    /// magnitude (at least 1).
    pub fn distance(&self, other: &CharPoly) -> f64 {
        if self.coeffs.len() != other.coeffs.len() {
            return f64::INFINITY;
        }
        let scale = self
            .coeffs
            .iter()
            .chain(other.coeffs.iter())
            .fold(1.0_f64, |m, c| m.max(c.abs()));
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
            / scale
    }
}

/// Faddeev–LeVerrier recursion; exact in rational arithmetic and well
/// behaved for the small matrices used here.
pub fn char_poly(j: &DMatrix<f64>) -> CharPoly {
    let n = j.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let mut coeffs = vec![0.0; n + 1];
    coeffs[0] = 1.0;
    let mut m = DMatrix::<f64>::zeros(n, n);
    for k in 1..=n {
        m = j * &m + &id * coeffs[k - 1];
        coeffs[k] = -(j * &m).trace() / k as f64;
    }
    CharPoly { coeffs }
}


/// Conformal 2-jet invariant at a zero: `η`, `B = 2·skew(∇v)`,
/// `λ = (2/n) tr ∇v` and `δ = dφ` restricted to `Ker(B + λ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quintuple {
    pub n: usize,
    pub eta: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub lambda: f64,
    pub delta_basis: Subspace,
    /// `δ` evaluated on the columns of `delta_basis`.
    pub delta: DVector<f64>,
}

impl Quintuple {
    /// `δ` as a covector on the whole space, vanishing on the Euclidean
    /// complement of `Ker(B + λ)`.
    pub fn delta_covector(&self) -> DVector<f64> {
        self.delta_basis.basis() * &self.delta
    }

    pub fn space(&self) -> Result<MetricSpace> {
        MetricSpace::from_matrix(self.eta.clone())
    }
}

pub fn extract_quintuple(jet: &PointJet, space: &MetricSpace, tol: f64) -> Result<Quintuple> {
    let norm = jet.v.norm();
    if norm > tol {
        return Err(Error::NotAZero { norm });
    }
    let n = jet.dim();
    let b = crate::metric::skew_part(&jet.j, space) * 2.0;
    let lambda = 2.0 * jet.j.trace() / n as f64;
    let shifted = &b + DMatrix::identity(n, n) * lambda;
    let delta_basis = jet_kernel(&shifted, tol);
    let delta = delta_basis.basis().tr_mul(&jet.dphi);
    Ok(Quintuple {
        n,
        eta: space.g().clone(),
        b,
        lambda,
        delta_basis,
        delta,
    })
}

fn metric_signature(eta: &DMatrix<f64>) -> (usize, usize) {
    let (p, q, _) = signature(eta, 1e-12);
    (p, q)
}

/// `None` if the signatures are incompatible, otherwise whether a sign swap
/// `(p,q) ↔ (q,p)` is forced (`Some(Some(true))`), excluded
/// (`Some(Some(false))`) or optional (`Some(None)`, when `p = q`).
fn swap_mode(eta1: &DMatrix<f64>, eta2: &DMatrix<f64>) -> Option<Option<bool>> {
    let (p1, q1) = metric_signature(eta1);
    let (p2, q2) = metric_signature(eta2);
    match ((p1, q1) == (p2, q2), (p1, q1) == (q2, p2)) {
        (true, true) => Some(None),
        (true, false) => Some(Some(false)),
        (false, true) => Some(Some(true)),
        (false, false) => None,
    }
}

fn restricted_signature(eta: &DMatrix<f64>, s: &Subspace) -> (usize, usize) {
    let g = s.basis().transpose() * eta * s.basis();
    let (p, q, _) = signature(&g, 1e-9);
    (p, q)
}

fn delta_scale(d: &DVector<f64>) -> f64 {
    d.amax()
}

/// `rank Mᵏ` for `k = 1..n`, from the chain `Ker Mᵏ = {x : Mx ∈ Ker Mᵏ⁻¹}`.
/// Forming the powers would raise the spread of singular values to the
/// k-th power and push genuine directions under the rank tolerance.
pub fn power_ranks(m: &DMatrix<f64>) -> Vec<usize> {
    let n = m.nrows();
    let mut ker = DMatrix::<f64>::zeros(n, 0);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let proj = DMatrix::identity(n, n) - &ker * ker.transpose();
        let next = jet_kernel(&(proj * m), RANK_TOL);
        ker = next.basis().clone();
        out.push(n - next.dim());
    }
    out
}

/// Necessary conditions for algebraic equivalence, in a fixed order. Any
/// failure refutes equivalence.
pub fn invariant_battery(q1: &Quintuple, q2: &Quintuple) -> Vec<Check> {
    let mut out = Vec::new();
    out.push(Check::flag(
        "dimension",
        q1.n == q2.n,
        format!("{} vs {}", q1.n, q2.n),
    ));
    if q1.n != q2.n {
        return out;
    }
    let dl = (q1.lambda - q2.lambda).abs();
    out.push(Check::below(
        "lambda",
        dl,
        1e-9 * q1.lambda.abs().max(q2.lambda.abs()).max(1.0),
    ));
    let mode = swap_mode(&q1.eta, &q2.eta);
    out.push(Check::flag(
        "signature",
        mode.is_some(),
        format!(
            "{:?} vs {:?}",
            metric_signature(&q1.eta),
            metric_signature(&q2.eta)
        ),
    ));
    let (r1, r2) = (jet_rank(&q1.b, RANK_TOL), jet_rank(&q2.b, RANK_TOL));
    out.push(Check::flag("rank-B", r1 == r2, format!("{r1} vs {r2}")));
    let (k1, k2) = (q1.delta_basis.dim(), q2.delta_basis.dim());
    out.push(Check::flag("kernel-dim", k1 == k2, format!("{k1} vs {k2}")));
    let z1 = delta_scale(&q1.delta) <= 1e-9;
    let z2 = delta_scale(&q2.delta) <= 1e-9;
    out.push(Check::flag(
        "delta-vanishing",
        z1 == z2,
        format!("delta zero: {z1} vs {z2}"),
    ));
    let ranks = (power_ranks(&q1.b), power_ranks(&q2.b));
    out.push(Check::flag(
        "rank-powers",
        ranks.0 == ranks.1,
        format!("{:?} vs {:?}", ranks.0, ranks.1),
    ));
    let d = char_poly(&q1.b).distance(&char_poly(&q2.b));
    out.push(Check::below("char-poly-B", d, POLY_TOL));
    let s1 = restricted_signature(&q1.eta, &q1.delta_basis);
    let s2 = restricted_signature(&q2.eta, &q2.delta_basis);
    let kernel_ok = match mode {
        Some(Some(false)) => s1 == s2,
        Some(Some(true)) => s1 == (s2.1, s2.0),
        Some(None) => s1 == s2 || s1 == (s2.1, s2.0),
        None => false,
    };
    out.push(Check::flag(
        "kernel-signature",
        kernel_ok,
        format!("{s1:?} vs {s2:?}"),
    ));
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Equivalent,
    Inequivalent,
    Undecided,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Equivalent => "equivalent",
            Status::Inequivalent => "inequivalent",
            Status::Undecided => "undecided",
        }
    }
}

/// Linear map `Φ` with `Φᵀ η₂ Φ = scale · η₁`; `scale < 0` for maps that
/// swap the signature.
#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub phi: DMatrix<f64>,
    pub scale: f64,
}

impl Witness {
    pub fn identity(n: usize) -> Self {
        Self {
            phi: DMatrix::identity(n, n),
            scale: 1.0,
        }
    }

    pub fn inverse(&self) -> Option<Self> {
        Some(Self {
            phi: self.phi.clone().try_inverse()?,
            scale: 1.0 / self.scale,
        })
    }

    /// `other ∘ self`.
    pub fn then(&self, other: &Witness) -> Self {
        Self {
            phi: &other.phi * &self.phi,
            scale: self.scale * other.scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceVerdict {
    pub status: Status,
    pub witness: Option<Witness>,
    /// Name of the first failed invariant, for refuted pairs.
    pub obstruction: Option<String>,
    /// Best search objective, or the validation residual of the witness.
    pub residual: f64,
    pub battery: Vec<Check>,
}

impl EquivalenceVerdict {
    fn refuted(battery: Vec<Check>) -> Self {
        let obstruction = battery.iter().find(|c| !c.passed).map(|c| c.name.clone());
        Self {
            status: Status::Inequivalent,
            witness: None,
            obstruction,
            residual: f64::INFINITY,
            battery,
        }
    }
}

/// What a witness must transport: `η₁ → η₂` up to scale, `M₁ → M₂` by
/// conjugation and optionally `δ₁ → δ₂` on the kernels.
struct Problem {
    eta1: DMatrix<f64>,
    eta2: DMatrix<f64>,
    m1: DMatrix<f64>,
    m2: DMatrix<f64>,
    delta: Option<DeltaData>,
}

struct DeltaData {
    /// `δ₁` on the whole space.
    full1: DVector<f64>,
    k2: DMatrix<f64>,
    d2: DVector<f64>,
}

impl Problem {
    fn from_quintuples(q1: &Quintuple, q2: &Quintuple) -> Self {
        Self {
            eta1: q1.eta.clone(),
            eta2: q2.eta.clone(),
            m1: q1.b.clone(),
            m2: q2.b.clone(),
            delta: Some(DeltaData {
                full1: q1.delta_covector(),
                k2: q2.delta_basis.basis().clone(),
                d2: q2.delta.clone(),
            }),
        }
    }

    fn residual_with_inverse(&self, phi: &DMatrix<f64>, phi_inv: &DMatrix<f64>) -> DVector<f64> {
        let conj = phi * &self.m1 * phi_inv - &self.m2;
        let mut r: Vec<f64> = conj.iter().copied().collect();
        if let Some(d) = &self.delta {
            let pulled = (phi_inv * &d.k2).tr_mul(&d.full1);
            r.extend((pulled - &d.d2).iter().copied());
        }
        DVector::from_vec(r)
    }

    /// Max-abs transport residual of a candidate witness, including the
    /// metric condition.
    fn validate(&self, w: &Witness) -> f64 {
        let inv = match w.phi.clone().try_inverse() {
            Some(i) => i,
            None => return f64::INFINITY,
        };
        let metric = (w.phi.transpose() * &self.eta2 * &w.phi - &self.eta1 * w.scale).amax()
            / w.scale.abs().max(1.0);
        metric.max(self.residual_with_inverse(&w.phi, &inv).amax())
    }
}

/// One connected piece of the search space: `Φ = e^ℓ · left · Q · right`
/// with `Q` an isometry of the diagonal form `d1`.
struct Branch {
    left: DMatrix<f64>,
    left_inv: DMatrix<f64>,
    right: DMatrix<f64>,
    right_inv: DMatrix<f64>,
    d1: MetricSpace,
    sign: f64,
}

impl Branch {
    fn phi(&self, q: &DMatrix<f64>, ell: f64) -> (DMatrix<f64>, DMatrix<f64>) {
        // Q⁻¹ = D Qᵀ D for an isometry of a diagonal ±1 form
        let d = self.d1.g();
        let q_inv = d * q.transpose() * d;
        let phi = &self.left * q * &self.right * ell.exp();
        let inv = &self.right_inv * q_inv * &self.left_inv * (-ell).exp();
        (phi, inv)
    }
}

/// Canonical frames of both metrics combined with the discrete components
/// of the isometry group and, where allowed, the signature swap.
fn branches(eta1: &DMatrix<f64>, eta2: &DMatrix<f64>) -> Result<Vec<Branch>> {
    let s1 = MetricSpace::from_matrix(eta1.clone())?;
    let s2 = MetricSpace::from_matrix(eta2.clone())?;
    let n = s1.dim();
    let (p, q) = s1.signature();
    let l1 = s1.canonical_frame();
    let l2 = s2.canonical_frame();
    let l1_inv = l1.clone().try_inverse().ok_or_else(|| Error::InvalidMetric("frame".into()))?;
    let d1 = MetricSpace::diagonal(p, q)?;
    let mut swaps: Vec<(DMatrix<f64>, f64)> = Vec::new();
    match swap_mode(eta1, eta2) {
        None => return Ok(Vec::new()),
        Some(Some(false)) => swaps.push((DMatrix::identity(n, n), 1.0)),
        Some(Some(true)) => swaps.push((swap_permutation(p, q), -1.0)),
        Some(None) => {
            swaps.push((DMatrix::identity(n, n), 1.0));
            if p > 0 && q > 0 {
                swaps.push((swap_permutation(p, q), -1.0));
            }
        }
    }
    // reflections in the first positive and first negative canonical axis
    let mut reflections = vec![DMatrix::identity(n, n)];
    let flip = |i: usize| {
        let mut r = DMatrix::identity(n, n);
        r[(i, i)] = -1.0;
        r
    };
    if p > 0 {
        reflections.push(flip(0));
    }
    if q > 0 {
        reflections.push(flip(p));
    }
    if p > 0 && q > 0 {
        let mut r = flip(0);
        r[(p, p)] = -1.0;
        reflections.push(r);
    }
    let mut out = Vec::new();
    for (sw, sign) in &swaps {
        for r in &reflections {
            let left = &l2 * sw * r;
            let left_inv = left.clone().try_inverse().expect("product of invertible matrices");
            out.push(Branch {
                left,
                left_inv,
                right: l1_inv.clone(),
                right_inv: l1.clone(),
                d1: d1.clone(),
                sign: *sign,
            });
        }
    }
    Ok(out)
}

/// Permutation `S` with `Sᵀ diag(+1 (q), −1 (p)) S = −diag(+1 (p), −1 (q))`.
pub fn swap_permutation(p: usize, q: usize) -> DMatrix<f64> {
    let n = p + q;
    let mut s = DMatrix::zeros(n, n);
    for i in 0..n {
        let target = if i < p { q + i } else { i - p };
        s[(target, i)] = 1.0;
    }
    s
}

struct LocalResult {
    objective: f64,
    phi: DMatrix<f64>,
    scale: f64,
}

impl LocalResult {
    fn converged(&self) -> bool {
        self.objective < WITNESS_OBJECTIVE && self.condition() < MAX_WITNESS_CONDITION
    }

    /// Condition number of `Φ`. Converged witnesses differ by elements of
    /// a possibly noncompact stabilizer, and a badly conditioned one
    /// amplifies every later residual.
    fn condition(&self) -> f64 {
        let sv = self.phi.clone().singular_values();
        let lo = sv.min();
        if lo > 0.0 {
            sv.max() / lo
        } else {
            f64::INFINITY
        }
    }

    fn better_than(&self, other: &LocalResult) -> bool {
        match (self.converged(), other.converged()) {
            (true, true) => self.condition() < other.condition(),
            (a, b) if a != b => a,
            _ => self.objective < other.objective,
        }
    }
}

const FD_STEP: f64 = 1e-6;
const MAX_LOG_SCALE: f64 = 20.0;

/// Levenberg–Marquardt in the chart `Q ↦ Q·exp(K(θ))`, `ℓ ↦ ℓ + δ`,
/// re-centred after every accepted step.
fn local_search(problem: &Problem, br: &Branch, mut q: DMatrix<f64>, mut ell: f64, budget: usize) -> LocalResult {
    let m = skew_param_count(q.nrows());
    let params = m + 1;
    let eval = |q: &DMatrix<f64>, ell: f64| {
        let (phi, inv) = br.phi(q, ell);
        problem.residual_with_inverse(&phi, &inv)
    };
    let perturb = |q: &DMatrix<f64>, ell: f64, delta: &DVector<f64>| {
        let k = isometry_from_params(&delta.as_slice()[..m], &br.d1);
        (q * k, (ell + delta[m]).clamp(-MAX_LOG_SCALE, MAX_LOG_SCALE))
    };
    let mut r = eval(&q, ell);
    let mut obj = r.norm_squared();
    let mut evals = 1;
    let mut mu = 1e-3;
    while evals + 2 * params < budget && obj > 1e-30 {
        let mut jac = DMatrix::zeros(r.len(), params);
        for i in 0..params {
            let mut d = DVector::zeros(params);
            d[i] = FD_STEP;
            let (qp, lp) = perturb(&q, ell, &d);
            let (qm, lm) = perturb(&q, ell, &(-d));
            let col = (eval(&qp, lp) - eval(&qm, lm)) / (2.0 * FD_STEP);
            jac.set_column(i, &col);
        }
        evals += 2 * params;
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * &r;
        let mut improved = false;
        while evals < budget {
            let lhs = &jtj + DMatrix::identity(params, params) * mu;
            let step = match lhs.clone().cholesky() {
                Some(ch) => ch.solve(&(-&grad)),
                None => lstsq(&lhs, &(-&grad), 1e-14),
            };
            let (qn, ln) = perturb(&q, ell, &step);
            let rn = eval(&qn, ln);
            evals += 1;
            let on = rn.norm_squared();
            if on.is_finite() && on < obj {
                q = qn;
                ell = ln;
                r = rn;
                obj = on;
                mu = (mu / 3.0).max(1e-15);
                improved = true;
                break;
            }
            mu *= 4.0;
            if mu > 1e12 {
                break;
            }
        }
        if !improved {
            break;
        }
    }
    let (phi, _) = br.phi(&q, ell);
    LocalResult {
        objective: obj,
        phi,
        scale: br.sign * (2.0 * ell).exp(),
    }
}

fn run_search(problem: &Problem, budget: usize, seed: u64, starts: usize) -> Result<Option<LocalResult>> {
    let brs = branches(&problem.eta1, &problem.eta2)?;
    if brs.is_empty() {
        return Ok(None);
    }
    let n = problem.m1.nrows();
    let m = skew_param_count(n);
    let ell0 = match &problem.delta {
        Some(d) if d.d2.amax() > 0.0 && d.full1.amax() > 0.0 => {
            (d.full1.norm() / d.d2.norm()).ln().clamp(-MAX_LOG_SCALE, MAX_LOG_SCALE)
        }
        _ => 0.0,
    };
    let mut best: Option<LocalResult> = None;
    // batches of starts across all branches, stopping once a batch succeeds
    const BATCH: usize = 4;
    let mut start = 0;
    while start < starts {
        let end = (start + BATCH).min(starts);
        let jobs: Vec<(usize, usize)> = (start..end)
            .flat_map(|s| (0..brs.len()).map(move |b| (s, b)))
            .collect();
        let results: Vec<LocalResult> = jobs
            .par_iter()
            .map(|&(s, b)| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream((s * brs.len() + b) as u64);
                let (q0, l0) = if s == 0 {
                    (DMatrix::identity(n, n), ell0)
                } else {
                    let theta: Vec<f64> = (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                    let l = ell0 + 0.5 * rng.sample::<f64, _>(StandardNormal);
                    (isometry_from_params(&theta, &brs[b].d1), l)
                };
                local_search(problem, &brs[b], q0, l0, budget)
            })
            .collect();
        for r in results {
            if best.as_ref().is_none_or(|b| r.better_than(b)) {
                best = Some(r);
            }
        }
        if best.as_ref().is_some_and(LocalResult::converged) {
            break;
        }
        start = end;
    }
    Ok(best)
}

fn verdict_from_search(problem: &Problem, best: Option<LocalResult>, battery: Vec<Check>) -> EquivalenceVerdict {
    match best {
        Some(b) if b.converged() => {
            let w = Witness {
                phi: b.phi,
                scale: b.scale,
            };
            let res = problem.validate(&w);
            if res < WITNESS_RESIDUAL {
                EquivalenceVerdict {
                    status: Status::Equivalent,
                    witness: Some(w),
                    obstruction: None,
                    residual: b.objective,
                    battery,
                }
            } else {
                EquivalenceVerdict {
                    status: Status::Undecided,
                    witness: None,
                    obstruction: Some("witness-validation".into()),
                    residual: res,
                    battery,
                }
            }
        }
        other => EquivalenceVerdict {
            status: Status::Undecided,
            witness: None,
            obstruction: None,
            residual: other.map_or(f64::INFINITY, |b| b.objective),
            battery,
        },
    }
}

/// Searches for a witness of algebraic equivalence. Never concludes
/// inequivalence except through the invariant battery.
pub fn search_witness(q1: &Quintuple, q2: &Quintuple, budget: usize, seed: u64) -> Result<EquivalenceVerdict> {
    search_witness_with_starts(q1, q2, budget, seed, DEFAULT_STARTS)
}

pub fn search_witness_with_starts(
    q1: &Quintuple,
    q2: &Quintuple,
    budget: usize,
    seed: u64,
    starts: usize,
) -> Result<EquivalenceVerdict> {
    let battery = invariant_battery(q1, q2);
    if battery.iter().any(|c| !c.passed) {
        return Ok(EquivalenceVerdict::refuted(battery));
    }
    let problem = Problem::from_quintuples(q1, q2);
    let best = run_search(&problem, budget, seed, starts.max(1))?;
    Ok(verdict_from_search(&problem, best, battery))
}

/// Max-abs residual of the three transport conditions for `w`.
pub fn validate_witness(q1: &Quintuple, q2: &Quintuple, w: &Witness) -> f64 {
    Problem::from_quintuples(q1, q2).validate(w)
}

/// Necessary conditions for 1-jet equivalence at zeros.
pub fn one_jet_battery(jet1: &PointJet, eta1: &DMatrix<f64>, jet2: &PointJet, eta2: &DMatrix<f64>) -> Vec<Check> {
    let mut out = Vec::new();
    let (n1, n2) = (jet1.dim(), jet2.dim());
    out.push(Check::flag("dimension", n1 == n2, format!("{n1} vs {n2}")));
    if n1 != n2 {
        return out;
    }
    out.push(Check::below(
        "phi",
        (jet1.phi - jet2.phi).abs(),
        1e-9 * jet1.phi.abs().max(jet2.phi.abs()).max(1.0),
    ));
    out.push(Check::flag(
        "signature",
        swap_mode(eta1, eta2).is_some(),
        format!("{:?} vs {:?}", metric_signature(eta1), metric_signature(eta2)),
    ));
    let d = char_poly(&jet1.j).distance(&char_poly(&jet2.j));
    out.push(Check::below("char-poly", d, POLY_TOL));
    let ranks = (power_ranks(&jet1.j), power_ranks(&jet2.j));
    out.push(Check::flag(
        "kernel-dim",
        ranks.0[0] == ranks.1[0],
        format!("rank {} vs {}", ranks.0[0], ranks.1[0]),
    ));
    out.push(Check::flag(
        "rank-powers",
        ranks.0 == ranks.1,
        format!("{:?} vs {:?}", ranks.0, ranks.1),
    ));
    out
}

/// Whether a nonzero multiple of an isometry conjugates `∇v_x` to `∇w_y`.
pub fn one_jet_equivalent(
    jet1: &PointJet,
    jet2: &PointJet,
    space1: &MetricSpace,
    space2: &MetricSpace,
    budget: usize,
    seed: u64,
    tol: f64,
) -> Result<EquivalenceVerdict> {
    for jet in [jet1, jet2] {
        let norm = jet.v.norm();
        if norm > tol {
            return Err(Error::NotAZero { norm });
        }
    }
    let battery = one_jet_battery(jet1, space1.g(), jet2, space2.g());
    if battery.iter().any(|c| !c.passed) {
        return Ok(EquivalenceVerdict::refuted(battery));
    }
    let problem = Problem {
        eta1: space1.g().clone(),
        eta2: space2.g().clone(),
        m1: jet1.j.clone(),
        m2: jet2.j.clone(),
        delta: None,
    };
    let best = run_search(&problem, budget, seed, DEFAULT_STARTS)?;
    Ok(verdict_from_search(&problem, best, battery))
}

/// Solution of the 2-jet system: `F = Φ`, second derivatives `F2[a][(j,k)]`,
/// the signed metric factor (`e^τ` up to sign), `τ = ln|scale|`, `τ_j`
/// and the auxiliary covector `σ`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoJetWitness {
    pub f: DMatrix<f64>,
    pub f2: Vec<DMatrix<f64>>,
    pub scale: f64,
    pub tau: f64,
    pub tau1: DVector<f64>,
    pub sigma: DVector<f64>,
}

/// Max-abs residual of each block of the 2-jet system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SysResiduals {
    pub first_order: f64,
    pub second_order: f64,
    pub metric: f64,
    pub metric_derivative: f64,
}

impl SysResiduals {
    pub fn max(&self) -> f64 {
        self.first_order
            .max(self.second_order)
            .max(self.metric)
            .max(self.metric_derivative)
    }
}

pub const SIGMA_TOL: f64 = 1e-8;

/// Builds the second-order part of a 2-jet witness from a quintuple
/// witness: `σ` with `2 ∇v_xᵀ σ = dφ_x − Fᵀ dψ_y` (minimum norm), then
/// `F2^a_jk = F^a_l σ^l g_jk − σ_j F^a_k − σ_k F^a_j` and `τ_j = −2σ_j`.
pub fn build_two_jet_witness(
    w: &Witness,
    jet1: &PointJet,
    jet2: &PointJet,
    space1: &MetricSpace,
    space2: &MetricSpace,
) -> Result<TwoJetWitness> {
    let n = jet1.dim();
    let f = &w.phi;
    let metric = (f.transpose() * space2.g() * f - space1.g() * w.scale).amax();
    let conj = (&jet2.j * f - f * &jet1.j).amax();
    let first = metric.max(conj);
    if first > WITNESS_RESIDUAL * f.amax().max(1.0).powi(2) {
        return Err(Error::InvalidWitness(first));
    }
    let rhs = (&jet1.dphi - f.transpose() * &jet2.dphi) * 0.5;
    let jt = jet1.j.transpose();
    let sigma = lstsq(&jt, &rhs, 1e-12);
    let res = (&jt * &sigma - &rhs).amax();
    if res > SIGMA_TOL * rhs.amax().max(1.0) {
        return Err(Error::SigmaResidual(res));
    }
    let sigma_up = space1.raise(&sigma);
    let g = space1.g();
    let f_sigma = f * &sigma_up;
    let f2 = (0..n)
        .map(|a| {
            DMatrix::from_fn(n, n, |j, k| {
                f_sigma[a] * g[(j, k)] - sigma[j] * f[(a, k)] - sigma[k] * f[(a, j)]
            })
        })
        .collect();
    Ok(TwoJetWitness {
        f: f.clone(),
        f2,
        scale: w.scale,
        tau: w.scale.abs().ln(),
        tau1: &sigma * -2.0,
        sigma,
    })
}

/// Evaluates the four blocks of the 2-jet system, with second derivatives
/// of both fields from the flat closed form.
pub fn verify_sys(
    w: &TwoJetWitness,
    jet1: &PointJet,
    jet2: &PointJet,
    space1: &MetricSpace,
    space2: &MetricSpace,
) -> SysResiduals {
    let n = jet1.dim();
    let f = &w.f;
    let g = space1.g();
    let h = space2.g();
    let t1 = jet1.second_derivatives(space1);
    let t2 = jet2.second_derivatives(space2);
    let j1 = &jet1.j;
    let j2 = &jet2.j;

    let first_order = (j2 * f - f * j1).amax();

    let mut second_order: f64 = 0.0;
    for a in 0..n {
        let mut lhs = DMatrix::zeros(n, n);
        for l in 0..n {
            lhs += &t1[l] * f[(a, l)];
        }
        let f2j = &w.f2[a] * j1;
        lhs += &f2j + f2j.transpose();
        let mut rhs = f.transpose() * &t2[a] * f;
        for c in 0..n {
            rhs += &w.f2[c] * j2[(a, c)];
        }
        second_order = second_order.max((lhs - rhs).amax());
    }

    let metric = (f.transpose() * h * f - g * w.scale).amax();

    let mut metric_derivative: f64 = 0.0;
    for l in 0..n {
        // column l of F2, as a matrix over (c, k)
        let f2l = DMatrix::from_fn(n, n, |c, k| w.f2[c][(k, l)]);
        let m = f.transpose() * h * &f2l;
        let total = &m + m.transpose() - g * (w.scale * w.tau1[l]);
        metric_derivative = metric_derivative.max(total.amax());
    }

    SysResiduals {
        first_order,
        second_order,
        metric,
        metric_derivative,
    }
}

/// 2-jet equivalence through the associated quintuples; on success the
/// full 2-jet witness is built and checked.
pub fn two_jet_equivalent(
    jet1: &PointJet,
    jet2: &PointJet,
    space1: &MetricSpace,
    space2: &MetricSpace,
    budget: usize,
    seed: u64,
    tol: f64,
) -> Result<(EquivalenceVerdict, Option<TwoJetWitness>)> {
    let q1 = extract_quintuple(jet1, space1, tol)?;
    let q2 = extract_quintuple(jet2, space2, tol)?;
    let mut verdict = search_witness(&q1, &q2, budget, seed)?;
    if verdict.status != Status::Equivalent {
        return Ok((verdict, None));
    }
    let w = verdict.witness.as_ref().expect("equivalent verdicts carry a witness");
    match build_two_jet_witness(w, jet1, jet2, space1, space2) {
        Ok(tw) if verify_sys(&tw, jet1, jet2, space1, space2).max() < SIGMA_TOL => Ok((verdict, Some(tw))),
        Ok(tw) => {
            verdict.status = Status::Undecided;
            verdict.obstruction = Some("two-jet-system".into());
            verdict.residual = verify_sys(&tw, jet1, jet2, space1, space2).max();
            Ok((verdict, None))
        }
        Err(e) => {
            verdict.status = Status::Undecided;
            verdict.obstruction = Some(format!("two-jet-witness: {e}"));
            Ok((verdict, None))
        }
    }
}
