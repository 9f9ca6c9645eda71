//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails. Run with `cargo test --test acceptance`.

mod common;

use std::process::{Command, ExitCode};
use std::time::Instant;

use common::*;
use conformal_jets::field::rescaled_jet;
use conformal_jets::fixtures::{
    dilation, lorentz_cone, neutral_counterexample, null_plane_fixture, planted_pair, random_field,
    random_skew_with_kernel, random_vector, rotation, special_conformal, unit,
};
use conformal_jets::jets::{
    build_two_jet_witness, char_poly, extract_quintuple, invariant_battery, search_witness, validate_witness,
    verify_sys, Status, Witness, DEFAULT_BUDGET,
};
use conformal_jets::sigma::{sym_dxi_divisibility, xi_at_point};
use conformal_jets::zeros::{classify_zero, component_scan, find_zeros, local_model, Region};
use conformal_jets::{FlatConformalField, MetricSpace, PointJet, Rescaling, Subspace};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-9;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn rng(stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(20_261_019);
    r.set_stream(stream);
    r
}

fn spaces() -> Vec<MetricSpace> {
    [(3, 0), (2, 1), (1, 2), (3, 1), (2, 2), (4, 1), (3, 2), (5, 1), (3, 3), (4, 2)]
        .into_iter()
        .map(|(p, q)| MetricSpace::diagonal(p, q).unwrap())
        .collect()
}

/// Numerical rank from singular values, independent of the library.
fn svd_rank(m: &DMatrix<f64>, tol: f64) -> usize {
    let sv = m.clone().singular_values();
    let top = sv.max().max(1.0);
    sv.iter().filter(|s| **s > tol * top).count()
}

/// Null space of a matrix as orthonormal columns, from the SVD of `mᵀm`.
fn null_space(m: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let n = m.ncols();
    let eig = (m.transpose() * m).symmetric_eigen();
    let top = eig.eigenvalues.amax().max(1.0);
    let cols: Vec<DVector<f64>> = (0..n)
        .filter(|&i| eig.eigenvalues[i].abs() <= tol * top)
        .map(|i| eig.eigenvectors.column(i).into_owned())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Characteristic polynomial coefficients (leading first) by Vandermonde
/// interpolation of cofactor determinants at `t = 0..n`.
fn charpoly_by_interpolation(j: &DMatrix<f64>) -> Vec<f64> {
    let n = j.nrows();
    let nodes: Vec<f64> = (0..=n).map(|k| k as f64).collect();
    let vals = DVector::from_iterator(n + 1, nodes.iter().map(|&t| char_poly_at(j, t)));
    let vander = DMatrix::from_fn(n + 1, n + 1, |r, c| nodes[r].powi((n - c) as i32));
    vander.lu().solve(&vals).expect("distinct nodes").iter().copied().collect()
}

fn killing_identity() -> Outcome {
    let mut r = rng(1);
    let spaces = spaces();
    let (mut defect, mut trace): (f64, f64) = (0.0, 0.0);
    for i in 0..100 {
        let space = &spaces[i % spaces.len()];
        let f = random_field(space, &mut r);
        let n = space.dim() as f64;
        for _ in 0..20 {
            let x = random_vector(space.dim(), 1.0, &mut r);
            let jet = f.jet_at(&x);
            let gj = space.g() * &jet.j;
            defect = defect.max((&gj + gj.transpose() - space.g() * jet.phi).amax());
            trace = trace.max((jet.phi - 2.0 * jet.j.trace() / n).abs());
        }
    }
    outcome(
        defect < 1e-9 && trace < 1e-12,
        format!("max |gJ + (gJ)^T - phi g| = {defect:.2e} (< 1e-9), max |phi - (2/n) tr J| = {trace:.2e} (< 1e-12)"),
    )
}

fn jet_oracle() -> Outcome {
    let mut r = rng(2);
    let spaces = spaces();
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let space = &spaces[i % spaces.len()];
        let f = random_field(space, &mut r);
        let x = random_vector(space.dim(), 1.0, &mut r);
        let jet = f.jet_at(&x);
        worst = worst
            .max(rel_err_mat(&jet.j, &fd_jacobian(&f, &x, FD_STEP)))
            .max((jet.phi - fd_phi(&f, &x)).abs() / jet.phi.abs().max(1.0))
            .max(rel_err_vec(&jet.dphi, &fd_dphi(&f, &x)));
    }
    outcome(worst < 1e-7, format!("max relative error of J, phi, dphi = {worst:.2e} (< 1e-7) over 100 pairs"))
}

fn classification() -> Outcome {
    let e3 = MetricSpace::euclidean(3).unwrap();
    let origin = DVector::zeros(3);
    let cases = [
        ("rotation", rotation(3).unwrap(), false),
        ("dilation", dilation(e3.clone(), 1.0).unwrap(), true),
        ("special-conformal", special_conformal(e3, unit(3, 0)).unwrap(), true),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, f, essential) in cases {
        let jet = f.jet_at(&origin);
        let class = classify_zero(&jet, f.space(), TOL).unwrap();
        // the distinguishing quantity, measured here
        let decisive = if essential && jet.phi.abs() <= TOL {
            let rank_j = svd_rank(&jet.j, 1e-12);
            let aug = DMatrix::from_fn(3, 4, |r, c| if c < 3 { jet.j[(r, c)] } else { jet.dphi[r] });
            (svd_rank(&aug, 1e-12) - rank_j) as f64
        } else {
            jet.phi.abs()
        };
        let margin = class.margin(TOL);
        let right = class.is_essential() == essential;
        ok &= right && margin >= 1e3;
        parts.push(format!("{name}: {} (margin {margin:.1e}, decisive {decisive:.2})", class.kind.as_str()));
    }
    outcome(ok, parts.join("; "))
}

fn cone_model() -> Outcome {
    let mut r = rng(4);
    let n = 4;
    let f = lorentz_cone(n).unwrap();
    let space = f.space().clone();
    let u = unit(n, n - 1);
    // null directions of u⊥ = span(e0, e1, e2), signature (1, 2)
    let mut inside: f64 = 0.0;
    for _ in 0..50 {
        let th: f64 = r.random_range(0.0..std::f64::consts::TAU);
        let h = DVector::from_vec(vec![1.0, th.cos(), th.sin(), 0.0]).normalize();
        for t in [-0.3, -0.1, 0.05, 0.1, 0.3] {
            inside = inside.max(f.evaluate(&(&h * t)).norm());
        }
    }
    let mut outside = f64::INFINITY;
    let mut count = 0;
    while count < 50 {
        let d = random_vector(n, 1.0, &mut r).normalize();
        if space.quad(&d).abs().max(space.inner(&d, &u).abs()) > 0.25 {
            outside = outside.min(f.evaluate(&(&d * 0.1)).norm());
            count += 1;
        }
    }
    let apex = DVector::zeros(n);
    let model = local_model(&f.jet_at(&apex), &space, TOL).unwrap();
    let zeros = find_zeros(&f, &Region::cube(n, 1.0), 7, TOL);
    let membership = zeros.iter().map(|z| model.membership_residual(z)).fold(0.0, f64::max);
    let on_cone = zeros
        .iter()
        .map(|z| space.quad(z).abs().max(space.inner(z, &u).abs()))
        .fold(0.0, f64::max);
    outcome(
        inside < 1e-8 && outside > 1e-3 && membership < 1e-6 && !zeros.is_empty(),
        format!(
            "cone |v| = {inside:.2e} (< 1e-8), outside |v| >= {outside:.2e} (> 1e-3), {} Newton zeros with membership {membership:.2e} (< 1e-6), |g(z,z)|, |g(u,z)| <= {on_cone:.2e}",
            zeros.len()
        ),
    )
}

fn counterexample() -> Outcome {
    let cx = neutral_counterexample(4, 1.0).unwrap();
    let mut polys = Vec::new();
    let mut kernels = Vec::new();
    let mut zero: f64 = 0.0;
    let mut lib_gap: f64 = 0.0;
    for i in 0..11 {
        let t = -0.5 + 0.1 * i as f64;
        let x = &cx.m2 * t;
        zero = zero.max(cx.field.evaluate(&x).norm());
        let j = fd_jacobian(&cx.field, &x, FD_STEP);
        let oracle = charpoly_by_interpolation(&j);
        let lib = char_poly(&cx.field.jet_at(&x).j).coeffs;
        lib_gap = lib_gap.max(lib.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        kernels.push(4 - svd_rank(&j, 1e-8));
        polys.push(oracle);
    }
    let mut spread: f64 = 0.0;
    for p in &polys {
        for q in &polys {
            spread = spread.max(p.iter().zip(q).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        }
    }
    let drop = kernels[5] == 2 && kernels.iter().enumerate().all(|(i, &k)| i == 5 || k == 1);
    outcome(
        zero < 1e-12 && spread < 1e-8 && lib_gap < 1e-8 && drop,
        format!("pairwise coefficient spread {spread:.2e} (< 1e-8), library vs cofactor {lib_gap:.2e}, dim Ker along t*m2 {kernels:?}"),
    )
}

fn stratum_relations() -> Outcome {
    let f = lorentz_cone(4).unwrap();
    let space = f.space();
    let report = match component_scan(&f, &Region::cube(4, 1.0), 7, TOL) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("scan failed: {e}")),
    };
    let mut ok = true;
    let mut parts = Vec::new();
    let mut found = false;
    for comp in &report.components {
        let Some(d) = comp.dims else { continue };
        found = true;
        let regular: Vec<usize> = comp.members.iter().copied().filter(|i| !comp.sigma.contains(i)).collect();
        let mut r_seen = Vec::new();
        let mut dims_reg = Vec::new();
        let mut bad_rank = 0;
        for &iy in &regular {
            let jy = fd_jacobian(&f, &report.zeros[iy].x, FD_STEP);
            let ry = svd_rank(&jy, 1e-6);
            let k = null_space(&jy, 1e-10);
            dims_reg.push(k.ncols());
            r_seen.push(svd_rank(&(k.transpose() * space.g() * &k), 1e-8));
            for &ix in &comp.sigma {
                let rx = svd_rank(&fd_jacobian(&f, &report.zeros[ix].x, FD_STEP), 1e-6);
                if ry != rx + 2 {
                    bad_rank += 1;
                }
            }
        }
        r_seen.sort_unstable();
        r_seen.dedup();
        dims_reg.sort_unstable();
        dims_reg.dedup();
        let dims_ok = dims_reg == [d.dim_regular]
            && r_seen == [d.restricted_rank]
            && d.dim_regular as i64 - d.dim_sigma as i64 == d.restricted_rank as i64 + 1;
        ok &= dims_ok && bad_rank == 0 && !regular.is_empty();
        parts.push(format!(
            "dim(N\\Sigma) = {}, dim Sigma = {}, r = {}, rank mismatches {bad_rank}/{} pairs",
            d.dim_regular,
            d.dim_sigma,
            d.restricted_rank,
            regular.len() * comp.sigma.len()
        ));
    }
    outcome(ok && found, if found { parts.join("; ") } else { "no component with essential zeros".into() })
}

fn quintuple_invariance() -> Outcome {
    let mut r = rng(7);
    let spaces = spaces();
    let (mut witness, mut delta): (f64, f64) = (0.0, 0.0);
    let mut battery = true;
    for i in 0..20 {
        let space = &spaces[i % spaces.len()];
        let n = space.dim();
        let b = random_skew_with_kernel(space, &mut r);
        let u = random_vector(n, 1.0, &mut r);
        let f = FlatConformalField::new(space.clone(), DVector::zeros(n), b, 0.0, u).unwrap();
        let jet = f.jet_at(&DVector::zeros(n));
        let q1 = extract_quintuple(&jet, space, TOL).unwrap();
        for _ in 0..20 {
            let gauge = Rescaling::linear(random_vector(n, 1.0, &mut r));
            let q2 = extract_quintuple(&rescaled_jet(&jet, &gauge).unwrap(), space, TOL).unwrap();
            battery &= invariant_battery(&q1, &q2).iter().all(|c| c.passed);
            witness = witness.max(validate_witness(&q1, &q2, &Witness::identity(n)));
            delta = delta.max((q1.delta_covector() - q2.delta_covector()).amax());
        }
    }
    outcome(
        battery && witness < 1e-10 && delta < 1e-10,
        format!("battery {battery}, identity witness residual {witness:.2e}, delta difference {delta:.2e} (< 1e-10)"),
    )
}

fn break_pair(jet: &PointJet, space: &MetricSpace, i: usize) -> PointJet {
    let n = space.dim();
    let j = if i.is_multiple_of(2) {
        &jet.j + DMatrix::identity(n, n) * 0.25
    } else {
        DMatrix::zeros(n, n)
    };
    PointJet::at_origin(space, j, jet.dphi.clone())
}

fn planted_round_trip() -> Outcome {
    let mut r = rng(8);
    let setups: Vec<(MetricSpace, bool)> = [(3, 0, false), (2, 1, false), (2, 2, false), (2, 2, true), (3, 2, true)]
        .into_iter()
        .map(|(p, q, s)| (MetricSpace::diagonal(p, q).unwrap(), s))
        .collect();
    let (mut battery, mut recovered, mut refuted) = (0, 0, 0);
    let mut objective: f64 = 0.0;
    let mut blocks = [0.0f64; 4];
    let mut transport: f64 = 0.0;
    let mut problems = Vec::new();
    for i in 0..20 {
        let (space, swap) = &setups[i % setups.len()];
        let pair = planted_pair(space, *swap, &mut r).unwrap();
        let q1 = extract_quintuple(&pair.jet1, &pair.space1, TOL).unwrap();
        let q2 = extract_quintuple(&pair.jet2, &pair.space2, TOL).unwrap();
        if invariant_battery(&q1, &q2).iter().all(|c| c.passed) {
            battery += 1;
        }
        match search_witness(&q1, &q2, DEFAULT_BUDGET, 1000 + i as u64) {
            Ok(v) if v.status == Status::Equivalent => {
                objective = objective.max(v.residual);
                let w = v.witness.unwrap();
                // conjugation and metric transport, measured directly
                let inv = w.phi.clone().try_inverse().unwrap();
                transport = transport
                    .max((&w.phi * &pair.jet1.j * &inv - &pair.jet2.j).amax())
                    .max((w.phi.transpose() * pair.space2.g() * &w.phi - pair.space1.g() * w.scale).amax());
                match build_two_jet_witness(&w, &pair.jet1, &pair.jet2, &pair.space1, &pair.space2) {
                    Ok(tw) => {
                        let s = verify_sys(&tw, &pair.jet1, &pair.jet2, &pair.space1, &pair.space2);
                        for (slot, v) in blocks.iter_mut().zip([s.first_order, s.second_order, s.metric, s.metric_derivative]) {
                            *slot = slot.max(v);
                        }
                        recovered += 1;
                    }
                    Err(e) => problems.push(format!("pair {i}: {e}")),
                }
            }
            Ok(v) => problems.push(format!("pair {i}: {} ({:.2e})", v.status.as_str(), v.residual)),
            Err(e) => problems.push(format!("pair {i}: {e}")),
        }
        let broken = break_pair(&pair.jet2, &pair.space2, i);
        let q3 = extract_quintuple(&broken, &pair.space2, TOL).unwrap();
        if invariant_battery(&q1, &q3).iter().any(|c| !c.passed) {
            refuted += 1;
        }
    }
    let blocks_max = blocks.iter().copied().fold(0.0, f64::max);
    outcome(
        battery == 20 && recovered == 20 && objective < 1e-14 && blocks_max < 1e-8 && refuted == 20,
        format!(
            "battery {battery}/20, recovered {recovered}/20, objective {objective:.2e} (< 1e-14), sys blocks [{:.1e}, {:.1e}, {:.1e}, {:.1e}] (< 1e-8), transport {transport:.1e}, inequivalent refuted {refuted}/20{}",
            blocks[0],
            blocks[1],
            blocks[2],
            blocks[3],
            if problems.is_empty() { String::new() } else { format!("; {}", problems.join("; ")) }
        ),
    )
}

fn stratum_one_form() -> Outcome {
    let fx = null_plane_fixture().unwrap();
    let f = &fx.field;
    let chart = Subspace::from_vectors(&[fx.p1.clone(), fx.p2.clone()], 5, 1e-12);
    let points = [(0.1, 0.05), (-0.2, 0.1), (0.15, -0.25), (0.3, 0.2), (-0.1, -0.3)];
    let mut r = rng(9);
    let a = random_vector(5, 0.5, &mut r);
    let m = DMatrix::from_fn(5, 5, |_, _| r.random_range(-0.3..0.3));
    let gauge = Rescaling::quadratic(a, m);
    let mut transport: f64 = 0.0;
    let mut sym: f64 = 0.0;
    let mut fit: f64 = 0.0;
    let mut nonzero = 0;
    for (s, t) in points {
        let x = &fx.p1 * s + &fx.p2 * t;
        let sample = match xi_at_point(f, &x, None, TOL) {
            Ok(v) => v,
            Err(e) => return outcome(false, format!("xi undefined: {e}")),
        };
        if !sample.is_zero(1e-9) {
            nonzero += 1;
        }
        // a unit direction of T Sigma annihilated by xi
        let basis = sample.tangent_basis.basis();
        let row = DMatrix::from_row_slice(1, sample.xi.len(), sample.xi.as_slice());
        let ker = null_space(&row, 1e-14);
        let dir = (basis * ker.column(0)).normalize();
        for k in 0..=30 {
            let tt = -0.3 + 0.02 * k as f64;
            let y = &x + &dir * tt;
            if f.evaluate(&y).norm() > 1e-9 {
                return outcome(false, format!("line leaves the zero set at t = {tt}"));
            }
            let s_y = xi_at_point(f, &y, None, TOL).unwrap();
            transport = transport.max(s_y.covector.dot(&dir).abs());
        }
        match sym_dxi_divisibility(f, &x, &chart, 1e-4, Some(&gauge), TOL) {
            Ok(d) => {
                sym = sym.max(d.restricted_residual);
                fit = fit.max(d.mu_fit_residual);
            }
            Err(e) => return outcome(false, format!("divisibility failed: {e}")),
        }
    }
    outcome(
        nonzero > 0 && transport < 1e-7 && sym < 1e-6 && fit < 1e-6,
        format!("xi nonzero at {nonzero}/5 points, |xi(gamma')| <= {transport:.2e} (< 1e-7), sym D xi on Ker xi {sym:.2e}, mu fit {fit:.2e} (< 1e-6, curved gauge)"),
    )
}

/// Residuals of both transport relations along `x + t·dir`, from finite
/// differences only.
fn nyw_residuals(f: &FlatConformalField, x: &DVector<f64>, dir: &DVector<f64>) -> Result<(f64, f64), String> {
    let space = f.space();
    let n = f.dim();
    if space.quad(dir).abs() > 1e-10 {
        return Err("direction is not null".into());
    }
    let w_basis = null_space(&DMatrix::from_row_slice(1, n, space.lower(dir).as_slice()), 1e-14);
    let grad0 = space.raise(&fd_dphi(f, x));
    let (mut der, mut pair): (f64, f64) = (0.0, 0.0);
    for k in 0..=12 {
        let t = -0.3 + 0.05 * k as f64;
        let y = x + dir * t;
        if f.evaluate(&y).norm() > 1e-8 {
            return Err(format!("not a line of zeros at t = {t}"));
        }
        let dj = fd_jacobian_derivative(f, &y, dir);
        let grad = space.raise(&fd_dphi(f, &y));
        for c in 0..w_basis.ncols() {
            let w = w_basis.column(c).into_owned();
            let gw = space.inner(&w, &grad);
            der = der.max((&dj * &w - dir * (0.5 * gw)).amax());
            pair = pair.max((gw - space.inner(&w, &grad0)).abs());
        }
    }
    Ok((der, pair))
}

fn null_line_transport() -> Outcome {
    let mut lines: Vec<(FlatConformalField, DVector<f64>, DVector<f64>)> = Vec::new();
    let cone = lorentz_cone(4).unwrap();
    for th in [0.3f64, 1.7, 3.1, 4.9] {
        let h = DVector::from_vec(vec![1.0, th.cos(), th.sin(), 0.0]).normalize();
        lines.push((cone.clone(), DVector::zeros(4), h));
    }
    let cx = neutral_counterexample(4, 1.0).unwrap();
    for t in [0.0, -0.3] {
        lines.push((cx.field.clone(), &cx.m2 * t, cx.m2.clone()));
    }
    let np = null_plane_fixture().unwrap();
    let dirs = [
        np.p1.clone(),
        np.p2.clone(),
        (&np.p1 + &np.p2).normalize(),
        (&np.p1 - &np.p2 * 0.5).normalize(),
    ];
    for ((s, t), d) in [(0.1, 0.05), (-0.2, 0.1), (0.0, 0.0), (0.2, -0.2)].into_iter().zip(dirs) {
        lines.push((np.field.clone(), &np.p1 * s + &np.p2 * t, d));
    }
    let (mut der, mut pair): (f64, f64) = (0.0, 0.0);
    for (f, x, d) in &lines {
        match nyw_residuals(f, x, d) {
            Ok((a, b)) => {
                der = der.max(a);
                pair = pair.max(b);
            }
            Err(e) => return outcome(false, e),
        }
    }
    outcome(
        der < 1e-7 && pair < 1e-7,
        format!("{} lines, derivative relation {der:.2e}, pairing relation {pair:.2e} (< 1e-7)", lines.len()),
    )
}

fn determinism() -> Outcome {
    let run = || {
        Command::new(env!("CARGO_BIN_EXE_conformal-jets"))
            .args(["verify", "all", "--format", "machine", "--seed", "42"])
            .env_remove("CONFORMAL_JETS_SEED")
            .output()
            .expect("binary runs")
    };
    let (a, b) = (run(), run());
    let same = a.stdout == b.stdout && !a.stdout.is_empty();
    outcome(
        same && a.status.success(),
        format!("{} bytes, identical: {same}, exit {:?}", a.stdout.len(), a.status.code()),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("conformal Killing identity", killing_identity),
        ("jet oracle", jet_oracle),
        ("zero classification", classification),
        ("cone model", cone_model),
        ("char-poly versus kernel dimension", counterexample),
        ("stratum dimension and rank relations", stratum_relations),
        ("quintuple invariance", quintuple_invariance),
        ("planted 2-jet round trip", planted_round_trip),
        ("one-form on the essential stratum", stratum_one_form),
        ("null-line transport", null_line_transport),
        ("determinism", determinism),
    ];
    let start = Instant::now();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let o = run();
        if !o.passed {
            failed += 1;
        }
        println!(
            "{} {:>2}. {name}: {} [{:.2}s]",
            if o.passed { "PASS" } else { "FAIL" },
            i + 1,
            o.detail,
            t.elapsed().as_secs_f64()
        );
    }
    println!("{}/{} criteria passed in {:.1}s", criteria.len() - failed, criteria.len(), start.elapsed().as_secs_f64());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
