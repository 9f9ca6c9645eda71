//! The 1-form `ξ` on the essential stratum `Σ` and the nullspace
//! distribution of the regular stratum.

use nalgebra::{DMatrix, DVector};

use crate::checks::Check;
use crate::error::{Error, Result};
use crate::field::{FlatConformalField, PointJet, Rescaling};
use crate::metric::{kernel, lstsq, MetricSpace, Subspace};
use crate::zeros::{classify_zero, jet_kernel, local_model, LocalZeroModel};

const WELL_DEFINED_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XiRule {
    /// `φ = 0` on `Σ`: `ξ = g(u, ·)` for `u ∈ Ker ∇v` with `g(u, ∇φ) = 1`.
    PhiZero,
    /// `φ ≠ 0` on `Σ`: `ξ = 0`.
    PhiNonzero,
}

impl XiRule {
    pub fn as_str(self) -> &'static str {
        match self {
            XiRule::PhiZero => "phi_zero_rule",
            XiRule::PhiNonzero => "phi_nonzero_rule",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct XiSample {
    pub x: DVector<f64>,
    /// `T_xΣ = H ∩ H⊥`.
    pub tangent_basis: Subspace,
    /// `ξ` on the columns of `tangent_basis`.
    pub xi: DVector<f64>,
    /// `g(u, ·)` on the whole tangent space (zero under the `φ ≠ 0` rule).
    pub covector: DVector<f64>,
    pub defined_by: XiRule,
}

impl XiSample {
    pub fn is_zero(&self, tol: f64) -> bool {
        self.xi.iter().all(|c| c.abs() <= tol)
    }
}

/// Minimum-norm `u ∈ Ker ∇v` with `dφ(u) = 1`, the kernel basis and the
/// coefficient vector `a = (dφ(k_i))`.
fn admissible_section(jet: &PointJet, tol: f64) -> Result<(DVector<f64>, Subspace, DVector<f64>)> {
    let k = jet_kernel(&jet.j, tol);
    let a = k.basis().tr_mul(&jet.dphi);
    let an = a.norm_squared();
    if an <= tol * tol {
        return Err(Error::NoAdmissibleSection);
    }
    let u = k.basis() * (&a / an);
    Ok((u, k, a))
}

/// `ξ` at an essential zero, optionally for the conformally related metric
/// `e^τ g`, under which the admissible sections are unchanged and
/// `ξ ↦ e^{τ(x)} ξ`. The value is recomputed from a second admissible
/// section and the two must agree.
pub fn xi_at(
    jet: &PointJet,
    model: &LocalZeroModel,
    space: &MetricSpace,
    gauge: Option<&Rescaling>,
    tol: f64,
) -> Result<XiSample> {
    let tangent_basis = model.sing.clone();
    let n = jet.dim();
    if jet.phi.abs() > tol {
        return Ok(XiSample {
            x: jet.x.clone(),
            xi: DVector::zeros(tangent_basis.dim()),
            tangent_basis,
            covector: DVector::zeros(n),
            defined_by: XiRule::PhiNonzero,
        });
    }
    let (u, k, a) = admissible_section(jet, tol)?;
    let factor = gauge.map_or(1.0, |r| r.tau(&jet.x).exp());
    let covector = space.lower(&u) * factor;
    let xi = tangent_basis.basis().tr_mul(&covector);

    // any u + h with h ∈ H is admissible too; H ⊥ T_xΣ, so ξ is unchanged
    let h_coeffs = kernel(&DMatrix::from_row_slice(1, a.len(), a.as_slice()), 1e-12);
    let mut u2 = u.clone();
    for i in 0..h_coeffs.dim() {
        let weight = 0.7 - 0.45 * i as f64;
        u2 += k.basis() * h_coeffs.vector(i) * weight;
    }
    let xi2 = tangent_basis.basis().tr_mul(&(space.lower(&u2) * factor));
    let diff = (&xi2 - &xi).amax();
    if diff > WELL_DEFINED_TOL * (1.0 + xi.amax()) {
        return Err(Error::SectionDisagreement(diff));
    }
    Ok(XiSample {
        x: jet.x.clone(),
        tangent_basis,
        xi,
        covector,
        defined_by: XiRule::PhiZero,
    })
}

/// `ξ` at a point of `Σ`, with the zero classified and modelled first.
pub fn xi_at_point(
    f: &FlatConformalField,
    x: &DVector<f64>,
    gauge: Option<&Rescaling>,
    tol: f64,
) -> Result<XiSample> {
    let jet = f.jet_at(x);
    let model = local_model(&jet, f.space(), tol)?;
    xi_at(&jet, &model, f.space(), gauge, tol)
}

/// `max |ξ(dir)|` along `x + t·dir`, `|t| ≤ t_max`, with every sample
/// required to be an essential zero.
pub fn xi_kernel_transport(
    f: &FlatConformalField,
    x: &DVector<f64>,
    dir: &DVector<f64>,
    t_max: f64,
    steps: usize,
    gauge: Option<&Rescaling>,
    tol: f64,
) -> Result<f64> {
    let steps = steps.max(1);
    let mut worst: f64 = 0.0;
    for i in 0..=2 * steps {
        let t = -t_max + t_max * i as f64 / steps as f64;
        let y = x + dir * t;
        let jet = f.jet_at(&y);
        let essential = classify_zero(&jet, f.space(), tol)
            .map(|c| c.is_essential())
            .unwrap_or(false);
        if !essential {
            return Err(Error::LeavesStratum { t });
        }
        let s = xi_at_point(f, &y, gauge, tol)?;
        worst = worst.max(s.covector.dot(dir).abs());
    }
    Ok(worst)
}

/// Outcome of the divisibility test for `sym Dξ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Divisibility {
    /// `ξ` at the base point, in chart coordinates.
    pub xi: DVector<f64>,
    /// `ξ_{j,k} + ξ_{k,j}` in chart coordinates.
    pub sym: DMatrix<f64>,
    /// Max-abs of `sym Dξ` on `Ker ξ ⊗ Ker ξ`.
    pub restricted_residual: f64,
    /// Least-squares `μ` with `sym Dξ ≈ μ ⊙ ξ`.
    pub mu: DVector<f64>,
    pub mu_fit_residual: f64,
}

/// Centered difference of `g` along axis `j` with Richardson extrapolation.
fn richardson(
    g: &dyn Fn(&DVector<f64>) -> Result<DVector<f64>>,
    y: &DVector<f64>,
    j: usize,
    h: f64,
) -> Result<DVector<f64>> {
    let diff = |step: f64| -> Result<DVector<f64>> {
        let mut e = DVector::zeros(y.len());
        e[j] = step;
        Ok((g(&(y + &e))? - g(&(y - &e))?) / (2.0 * step))
    };
    let coarse = diff(h)?;
    let fine = diff(h / 2.0)?;
    Ok((fine * 4.0 - coarse) / 3.0)
}

/// Divisibility of `sym Dξ` by `ξ` for a 1-form given in an affine chart:
/// `xi(y)` returns the chart components of `ξ` at chart point `y`; the
/// derivative is taken at `y = 0`.
pub fn sym_derivative_divisibility(
    xi: &dyn Fn(&DVector<f64>) -> Result<DVector<f64>>,
    k: usize,
    h: f64,
) -> Result<Divisibility> {
    let origin = DVector::zeros(k);
    let xi0 = xi(&origin)?;
    if xi0.amax() == 0.0 {
        return Err(Error::Unsupported("divisibility test needs ξ ≠ 0 at the base point".into()));
    }
    let mut d = DMatrix::zeros(k, k);
    for j in 0..k {
        // column j: ∂_j ξ
        d.set_column(j, &richardson(xi, &origin, j, h)?);
    }
    let sym = &d + d.transpose();
    let ker_xi = kernel(&DMatrix::from_row_slice(1, k, xi0.as_slice()), 1e-12);
    let restricted = ker_xi.basis().transpose() * &sym * ker_xi.basis();
    let restricted_residual = if restricted.is_empty() { 0.0 } else { restricted.amax() };

    // μ ⊙ ξ entries are linear in μ: (μ⊙ξ)_{jk} = μ_j ξ_k + μ_k ξ_j
    let mut a = DMatrix::zeros(k * k, k);
    let mut rhs = DVector::zeros(k * k);
    for jj in 0..k {
        for kk in 0..k {
            let row = jj * k + kk;
            a[(row, jj)] += xi0[kk];
            a[(row, kk)] += xi0[jj];
            rhs[row] = sym[(jj, kk)];
        }
    }
    let mu = lstsq(&a, &rhs, 1e-12);
    let mu_fit_residual = (&a * &mu - &rhs).amax();
    Ok(Divisibility {
        xi: xi0,
        sym,
        restricted_residual,
        mu,
        mu_fit_residual,
    })
}

/// [`sym_derivative_divisibility`] for the `ξ` of `f` on the affine chart
/// `x + chart·y` of `Σ`.
pub fn sym_dxi_divisibility(
    f: &FlatConformalField,
    x: &DVector<f64>,
    chart: &Subspace,
    h: f64,
    gauge: Option<&Rescaling>,
    tol: f64,
) -> Result<Divisibility> {
    let basis = chart.basis().clone();
    let xi = move |y: &DVector<f64>| -> Result<DVector<f64>> {
        let p = x + &basis * y;
        let s = xi_at_point(f, &p, gauge, tol)?;
        Ok(basis.tr_mul(&s.covector))
    };
    sym_derivative_divisibility(&xi, chart.dim(), h)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NullspaceReport {
    pub samples: usize,
    /// Dimension of the null space of `g` on `T_y(N∖Σ)`, per sample.
    pub nullities: Vec<usize>,
    /// True when every sample has nullity 0.
    pub vacuous: bool,
    pub checks: Vec<Check>,
}

/// At each regular zero `y`, `T_y(N∖Σ) = Ker ∇v_y` and `𝒫_y` is the null
/// space of `g` restricted to it. Checks that `𝒫_y` is null, that straight
/// lines in `𝒫_y` directions stay in the zero set, and, given a point `x`
/// of `Σ`, that the generator `y − x` lies in `𝒫_y`.
pub fn nullspace_distribution_check(
    f: &FlatConformalField,
    samples: &[DVector<f64>],
    base: Option<&DVector<f64>>,
    tol: f64,
) -> NullspaceReport {
    let space = f.space();
    let mut nullities = Vec::new();
    let mut null_defect: f64 = 0.0;
    let mut line_residual: f64 = 0.0;
    let mut generator_residual: f64 = 0.0;
    for y in samples {
        let t = jet_kernel(&f.jacobian(y), tol);
        let gram = t.gram(space);
        let scale = gram.amax().max(1.0);
        let rad = kernel(&gram, 1e-9 * scale);
        let p_basis = t.basis() * rad.basis();
        let p = Subspace::span(&p_basis, 1e-12);
        nullities.push(p.dim());
        for i in 0..p.dim() {
            let w = p.vector(i);
            null_defect = null_defect.max(space.quad(&w).abs());
            for s in [-1e-2, -1e-3, 1e-3, 1e-2] {
                let z = y + &w * s;
                line_residual = line_residual.max(f.evaluate(&z).norm());
            }
        }
        if let Some(x) = base {
            let gen = y - x;
            let gn = gen.norm();
            if gn > 0.0 {
                generator_residual = generator_residual.max(p.distance(&gen) / gn);
            }
        }
    }
    let vacuous = nullities.iter().all(|&k| k == 0);
    let mut checks = vec![
        Check::below("null-directions", null_defect, 1e-9),
        Check::below("null-lines-in-zero-set", line_residual, 1e-8),
    ];
    if base.is_some() {
        checks.push(Check::below("generators-in-distribution", generator_residual, 1e-7));
    }
    NullspaceReport {
        samples: samples.len(),
        nullities,
        vacuous,
        checks,
    }
}

/// Unique continuation on a sampled component of `Σ`: if the samples where
/// `ξ = 0` affinely span a patch of codimension at most one, every sample
/// must have `ξ = 0`. Returns `None` when no such patch is present.
pub fn unique_continuation_check(samples: &[XiSample], sigma_dim: usize) -> Option<Check> {
    const ZERO: f64 = 1e-9;
    let zeros: Vec<&XiSample> = samples.iter().filter(|s| s.is_zero(ZERO)).collect();
    if zeros.is_empty() {
        return None;
    }
    let needed = sigma_dim.saturating_sub(1);
    let spread = if zeros.len() > 1 {
        let x0 = &zeros[0].x;
        let diffs: Vec<DVector<f64>> = zeros[1..].iter().map(|s| &s.x - x0).collect();
        Subspace::from_vectors(&diffs, x0.len(), 1e-6).dim()
    } else {
        0
    };
    if spread < needed || zeros.len() < needed + 1 {
        return None;
    }
    let worst = samples
        .iter()
        .map(|s| s.xi.amax())
        .fold(0.0, f64::max);
    Some(Check::below("xi-unique-continuation", worst, ZERO).with_detail(format!(
        "{} of {} samples vanish on a patch of dimension {spread}",
        zeros.len(),
        samples.len()
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{lorentz_cone, neutral_counterexample, null_plane_fixture, special_conformal};

    #[test]
    fn counterexample_xi_declared_zero() {
        let cx = neutral_counterexample(4, 1.0).unwrap();
        let s = xi_at_point(&cx.field, &DVector::zeros(4), None, 1e-9).unwrap();
        assert_eq!(s.defined_by, XiRule::PhiNonzero);
        assert_eq!(s.xi.amax(), 0.0);
        assert_eq!(s.tangent_basis.dim(), 1);
    }

    #[test]
    fn isolated_zero_has_empty_xi() {
        let e3 = MetricSpace::euclidean(3).unwrap();
        let f = special_conformal(e3, DVector::from_vec(vec![1.0, 0.0, 0.0])).unwrap();
        let s = xi_at_point(&f, &DVector::zeros(3), None, 1e-9).unwrap();
        assert_eq!(s.defined_by, XiRule::PhiZero);
        assert_eq!(s.xi.len(), 0);
    }

    #[test]
    fn null_plane_xi_nonzero_and_well_defined() {
        let fx = null_plane_fixture().unwrap();
        let x = &fx.p1 * 0.1 + &fx.p2 * 0.05;
        let s = xi_at_point(&fx.field, &x, None, 1e-9).unwrap();
        assert_eq!(s.tangent_basis.dim(), 2);
        assert!(s.xi.amax() > 0.1);
    }

    #[test]
    fn flat_gauge_has_vanishing_sym_derivative() {
        let fx = null_plane_fixture().unwrap();
        let chart = Subspace::from_vectors(&[fx.p1.clone(), fx.p2.clone()], 5, 1e-12);
        let x = &fx.p1 * 0.1 + &fx.p2 * 0.05;
        let d = sym_dxi_divisibility(&fx.field, &x, &chart, 1e-4, None, 1e-9).unwrap();
        assert!(d.sym.amax() < 1e-8, "{}", d.sym);
    }

    #[test]
    fn cone_nullspace_contains_generators() {
        let f = lorentz_cone(4).unwrap();
        let y = DVector::from_vec(vec![0.5, 0.3, 0.4, 0.0]);
        assert!(f.evaluate(&y).norm() < 1e-15);
        let r = nullspace_distribution_check(&f, &[y], Some(&DVector::zeros(4)), 1e-9);
        assert_eq!(r.nullities, vec![1]);
        assert!(r.checks.iter().all(|c| c.passed), "{:?}", r.checks);
    }
}
