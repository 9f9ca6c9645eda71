//! The conformal algebra of flat space:
//! `v(x) = w + Bx + cx + 2⟨u,x⟩x − ⟨x,x⟩u`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::metric::{lstsq, MetricSpace};

const SKEW_TOL: f64 = 1e-10;
/// Largest |v| accepted as "at a zero" by jet transforms.
pub const ZERO_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct FlatConformalField {
    space: MetricSpace,
    w: DVector<f64>,
    b: DMatrix<f64>,
    c: f64,
    u: DVector<f64>,
}

impl FlatConformalField {
    pub fn new(
        space: MetricSpace,
        w: DVector<f64>,
        b: DMatrix<f64>,
        c: f64,
        u: DVector<f64>,
    ) -> Result<Self> {
        let n = space.dim();
        if n < 3 {
            return Err(Error::DimensionMismatch {
                what: "conformal fields need dimension at least 3",
                expected: 3,
                got: n,
            });
        }
        check_len("w", &w, n)?;
        check_len("u", &u, n)?;
        if b.nrows() != n || b.ncols() != n {
            return Err(Error::DimensionMismatch {
                what: "B rows/cols",
                expected: n,
                got: b.nrows().max(b.ncols()),
            });
        }
        let residual = space.skew_defect(&b);
        if residual > SKEW_TOL * b.amax().max(1.0) {
            return Err(Error::NotSkewAdjoint { residual });
        }
        Ok(Self { space, w, b, c, u })
    }

    pub fn zero(space: MetricSpace) -> Self {
        let n = space.dim();
        Self {
            w: DVector::zeros(n),
            b: DMatrix::zeros(n, n),
            c: 0.0,
            u: DVector::zeros(n),
            space,
        }
    }

    pub fn space(&self) -> &MetricSpace {
        &self.space
    }
    pub fn dim(&self) -> usize {
        self.space.dim()
    }
    pub fn w(&self) -> &DVector<f64> {
        &self.w
    }
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    pub fn c(&self) -> f64 {
        self.c
    }
    pub fn u(&self) -> &DVector<f64> {
        &self.u
    }

    /// Killing fields are those with `c = 0` and `u = 0`.
    pub fn is_killing(&self) -> bool {
        self.c == 0.0 && self.u.iter().all(|&x| x == 0.0)
    }

    pub fn evaluate(&self, x: &DVector<f64>) -> DVector<f64> {
        let g = &self.space;
        let ux = g.inner(&self.u, x);
        let xx = g.quad(x);
        &self.w + &self.b * x + x * self.c + x * (2.0 * ux) - &self.u * xx
    }

    /// `∇v_x = B + (c + 2⟨u,x⟩) Id + 2 x⊗u♭ − 2 u⊗x♭`.
    pub fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let g = &self.space;
        let n = self.dim();
        let ux = g.inner(&self.u, x);
        let u_flat = g.lower(&self.u);
        let x_flat = g.lower(x);
        &self.b
            + DMatrix::identity(n, n) * (self.c + 2.0 * ux)
            + (x * u_flat.transpose()) * 2.0
            - (&self.u * x_flat.transpose()) * 2.0
    }

    /// `φ(x) = 2c + 4⟨u,x⟩`.
    pub fn phi(&self, x: &DVector<f64>) -> f64 {
        2.0 * self.c + 4.0 * self.space.inner(&self.u, x)
    }

    /// `dφ = 4u♭`, constant in `x`.
    pub fn dphi(&self) -> DVector<f64> {
        self.space.lower(&self.u) * 4.0
    }

    pub fn jet_at(&self, x: &DVector<f64>) -> PointJet {
        PointJet {
            x: x.clone(),
            v: self.evaluate(x),
            j: self.jacobian(x),
            phi: self.phi(x),
            dphi: self.dphi(),
        }
    }

    /// Lie bracket `[f1, f2](x) = J2(x) v1(x) − J1(x) v2(x)`, re-expressed in
    /// the `(w, B, c, u)` parameters and checked at 20 sample points.
    pub fn bracket(&self, other: &Self) -> Result<Self> {
        if self.space != other.space {
            return Err(Error::InvalidMetric(
                "bracket requires both fields on the same space".into(),
            ));
        }
        let eval = |x: &DVector<f64>| {
            other.jacobian(x) * self.evaluate(x) - self.jacobian(x) * other.evaluate(x)
        };
        let result = recover_parameters(&self.space, eval)?;
        let n = self.dim();
        let mut residual: f64 = 0.0;
        let mut scale: f64 = 1.0;
        for k in 0..20 {
            // deterministic spread of points in [-1, 1]^n
            let x = DVector::from_fn(n, |i, _| {
                let t = ((k * 7 + i * 13 + 3) % 29) as f64 / 14.0 - 1.0;
                t * (1.0 + 0.1 * i as f64)
            });
            let direct = eval(&x);
            scale = scale.max(direct.amax());
            residual = residual.max((direct - result.evaluate(&x)).amax());
        }
        if residual > 1e-8 * scale {
            return Err(Error::BracketRecovery { residual });
        }
        Ok(result)
    }
}

fn check_len(what: &'static str, v: &DVector<f64>, n: usize) -> Result<()> {
    if v.len() != n {
        return Err(Error::DimensionMismatch {
            what,
            expected: n,
            got: v.len(),
        });
    }
    Ok(())
}

/// Reads off `(w, B, c, u)` from a field known (or assumed) to lie in the
/// family, using exact polynomial identities at coordinate points.
fn recover_parameters(
    space: &MetricSpace,
    eval: impl Fn(&DVector<f64>) -> DVector<f64>,
) -> Result<FlatConformalField> {
    let n = space.dim();
    let zero = DVector::zeros(n);
    let w = eval(&zero);
    let mut linear = DMatrix::zeros(n, n);
    let mut rows = DMatrix::zeros(n * n, n);
    let mut rhs = DVector::zeros(n * n);
    for i in 0..n {
        let mut e = DVector::zeros(n);
        e[i] = 1.0;
        let plus = eval(&e);
        let minus = eval(&(-&e));
        linear.set_column(i, &((&plus - &minus) * 0.5));
        // quadratic part Q(e) = 2⟨u,e⟩e − ⟨e,e⟩u, linear in u
        let quad = (&plus + &minus) * 0.5 - &w;
        let e_flat = space.lower(&e);
        let op = (&e * e_flat.transpose()) * 2.0 - DMatrix::identity(n, n) * space.quad(&e);
        rows.view_mut((i * n, 0), (n, n)).copy_from(&op);
        rhs.rows_mut(i * n, n).copy_from(&quad);
    }
    let u = lstsq(&rows, &rhs, 1e-12);
    let c = linear.trace() / n as f64;
    let b = &linear - DMatrix::identity(n, n) * c;
    FlatConformalField::new(space.clone(), w, b, c, u)
}

/// First-order data of a conformal field at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointJet {
    pub x: DVector<f64>,
    pub v: DVector<f64>,
    /// Jacobian `∇v_x`.
    pub j: DMatrix<f64>,
    pub phi: f64,
    /// `dφ_x` as a covector (coefficient vector).
    pub dphi: DVector<f64>,
}

impl PointJet {
    /// Jet at the origin of the field `B + c·Id` with `dφ = dphi`, which is
    /// realized by `w = 0` and `u = g⁻¹ dphi / 4`.
    pub fn at_origin(space: &MetricSpace, j: DMatrix<f64>, dphi: DVector<f64>) -> Self {
        let n = space.dim();
        let phi = 2.0 * j.trace() / n as f64;
        Self {
            x: DVector::zeros(n),
            v: DVector::zeros(n),
            j,
            phi,
            dphi,
        }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn is_zero(&self, tol: f64) -> bool {
        self.v.norm() <= tol
    }

    /// `∇φ = g⁻¹ dφ`.
    pub fn grad_phi(&self, space: &MetricSpace) -> DVector<f64> {
        space.raise(&self.dphi)
    }

    /// Max-abs entry of `gJ + (gJ)ᵀ − φ g`.
    pub fn killing_defect(&self, space: &MetricSpace) -> f64 {
        let gj = space.g() * &self.j;
        (&gj + gj.transpose() - space.g() * self.phi).amax()
    }

    /// `A = 2 ∇v − φ Id`, the skew-adjoint part appearing in `2∇v = A + φ Id`.
    pub fn skew_generator(&self) -> DMatrix<f64> {
        let n = self.dim();
        &self.j * 2.0 - DMatrix::identity(n, n) * self.phi
    }

    /// Second derivatives of the flat field, `T[l][(j,k)] = ∂_j ∂_k v^l =
    /// ½(φ_k δ_j^l − φ^l g_jk + φ_j δ_k^l)`.
    pub fn second_derivatives(&self, space: &MetricSpace) -> Vec<DMatrix<f64>> {
        let n = self.dim();
        let grad = self.grad_phi(space);
        let g = space.g();
        (0..n)
            .map(|l| {
                DMatrix::from_fn(n, n, |j, k| {
                    let mut t = -grad[l] * g[(j, k)];
                    if j == l {
                        t += self.dphi[k];
                    }
                    if k == l {
                        t += self.dphi[j];
                    }
                    0.5 * t
                })
            })
            .collect()
    }

    /// Derivative of `x ↦ ∇v_x` in direction `z`:
    /// `½[dφ⊗z − g(z,·)⊗∇φ + g(z,∇φ) Id]`.
    pub fn jacobian_derivative(&self, space: &MetricSpace, z: &DVector<f64>) -> DMatrix<f64> {
        let n = self.dim();
        let grad = self.grad_phi(space);
        let zf = space.lower(z);
        (z * self.dphi.transpose() - &grad * zf.transpose()
            + DMatrix::identity(n, n) * space.inner(z, &grad))
            * 0.5
    }
}

/// Conformal gauge `τ(x) = ⟨a, x⟩ + xᵀ Q x` (as in `e^τ g`), with `τ(0) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rescaling {
    /// Linear coefficient, a covector.
    pub a: DVector<f64>,
    /// Optional symmetric quadratic coefficient.
    pub q: Option<DMatrix<f64>>,
}

impl Rescaling {
    pub fn linear(a: DVector<f64>) -> Self {
        Self { a, q: None }
    }

    pub fn quadratic(a: DVector<f64>, q: DMatrix<f64>) -> Self {
        let sym = (&q + q.transpose()) * 0.5;
        Self { a, q: Some(sym) }
    }

    pub fn is_linear(&self) -> bool {
        self.q.is_none()
    }

    pub fn tau(&self, x: &DVector<f64>) -> f64 {
        let lin = self.a.dot(x);
        match &self.q {
            Some(q) => lin + (x.transpose() * q * x)[(0, 0)],
            None => lin,
        }
    }

    /// `dτ_x` as a covector.
    pub fn dtau(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.q {
            Some(q) => &self.a + q * x * 2.0,
            None => self.a.clone(),
        }
    }
}

/// Jet of the same field at a zero after `g ↦ e^τ g`: `φ` and `∇v` are
/// unchanged, `dφ ↦ dφ + dτ_x ∘ ∇v_x`.
pub fn rescaled_jet(jet: &PointJet, r: &Rescaling) -> Result<PointJet> {
    let norm = jet.v.norm();
    if norm > ZERO_TOL {
        return Err(Error::NotAZero { norm });
    }
    let dtau = r.dtau(&jet.x);
    let correction = jet.j.transpose() * dtau;
    Ok(PointJet {
        dphi: &jet.dphi + correction,
        ..jet.clone()
    })
}
