//! Named fields used by the examples, the CLI and the verification suites.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::field::{FlatConformalField, PointJet};
use crate::jets::{swap_permutation, Witness};
use crate::metric::{isometry_from_params, skew_param_count, MetricSpace};

pub fn unit(n: usize, i: usize) -> DVector<f64> {
    let mut v = DVector::zeros(n);
    v[i] = 1.0;
    v
}

/// Rotation generator in the `(e_i, e_j)` plane for the Euclidean metric:
/// `e_i ↦ e_j`, `e_j ↦ −e_i`.
pub fn plane_rotation(n: usize, i: usize, j: usize, rate: f64) -> DMatrix<f64> {
    let mut b = DMatrix::zeros(n, n);
    b[(j, i)] = rate;
    b[(i, j)] = -rate;
    b
}

/// Rotation about the `span(e_3, …, e_n)` axis of Euclidean `R^n`.
pub fn rotation(n: usize) -> Result<FlatConformalField> {
    let space = MetricSpace::euclidean(n)?;
    FlatConformalField::new(
        space,
        DVector::zeros(n),
        plane_rotation(n, 0, 1, 1.0),
        0.0,
        DVector::zeros(n),
    )
}

/// Two independent rotation blocks, `(e1,e2)` and `(e3,e4)`, in Euclidean
/// `R^n`, `n ≥ 5`.
pub fn double_rotation(n: usize) -> Result<FlatConformalField> {
    let space = MetricSpace::euclidean(n)?;
    let b = plane_rotation(n, 0, 1, 1.0) + plane_rotation(n, 2, 3, 2.0);
    FlatConformalField::new(space, DVector::zeros(n), b, 0.0, DVector::zeros(n))
}

pub fn dilation(space: MetricSpace, c: f64) -> Result<FlatConformalField> {
    let n = space.dim();
    FlatConformalField::new(space, DVector::zeros(n), DMatrix::zeros(n, n), c, DVector::zeros(n))
}

pub fn special_conformal(space: MetricSpace, u: DVector<f64>) -> Result<FlatConformalField> {
    let n = space.dim();
    FlatConformalField::new(space, DVector::zeros(n), DMatrix::zeros(n, n), 0.0, u)
}

/// Pure special-conformal field in signature `(1, n−1)` with `u = e_n`
/// spacelike; its zero set is the null cone of `u⊥` through the origin.
pub fn lorentz_cone(n: usize) -> Result<FlatConformalField> {
    let space = MetricSpace::lorentzian(n)?;
    special_conformal(space, unit(n, n - 1))
}

/// The neutral-signature field whose kernel dimension drops along a line of
/// zeros while the characteristic polynomial stays fixed.
#[derive(Debug, Clone)]
pub struct NeutralCounterexample {
    pub field: FlatConformalField,
    /// Null basis of the `−c` eigenspace of `B`; `m2 ⊥ u`.
    pub m1: DVector<f64>,
    pub m2: DVector<f64>,
}

/// `n = 2k` even, `g = diag(+1 (k), −1 (k))`, `B e_i = c e_{i+k}`,
/// `B e_{i+k} = c e_i`, so that `span(e_i ± e_{i+k})` are the null
/// eigenspaces for `±c`. `u = e_1` lies outside the `−c` eigenspace and
/// `w = 0`.
pub fn neutral_counterexample(n: usize, c: f64) -> Result<NeutralCounterexample> {
    let space = MetricSpace::neutral(n)?;
    let k = n / 2;
    let mut b = DMatrix::zeros(n, n);
    for i in 0..k {
        b[(i + k, i)] = c;
        b[(i, i + k)] = c;
    }
    let u = unit(n, 0);
    let field = FlatConformalField::new(space, DVector::zeros(n), b, c, u)?;
    let m1 = unit(n, 0) - unit(n, k);
    let m2 = unit(n, 1) - unit(n, k + 1);
    Ok(NeutralCounterexample { field, m1, m2 })
}

/// Field in signature `(3, 2)` with an essential component containing the
/// null plane `P = span(p1, p2)`, on which `φ = 0` and the induced 1-form
/// is nonzero and nonconstant.
#[derive(Debug, Clone)]
pub struct NullPlaneFixture {
    pub field: FlatConformalField,
    pub p1: DVector<f64>,
    pub p2: DVector<f64>,
}

/// Null frame `p1, q1, p2, q2` (with `g(p_i, q_j) = δ_ij`) plus the unit
/// spacelike `e = e_3`; `B` annihilates `p1, p2` and acts on
/// `q1, q2, e` through the 2-form with `ω(q1,q2) = 0.6`, `ω(q1,e) = −0.4`,
/// `ω(q2,e) = −1`; `u = p1 + p2/2 + 0.7 e`.
pub fn null_plane_fixture() -> Result<NullPlaneFixture> {
    let n = 5;
    let space = MetricSpace::diagonal(3, 2)?;
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let p1 = (unit(n, 0) + unit(n, 3)) * r;
    let q1 = (unit(n, 0) - unit(n, 3)) * r;
    let p2 = (unit(n, 1) + unit(n, 4)) * r;
    let q2 = (unit(n, 1) - unit(n, 4)) * r;
    let e = unit(n, 2);
    let frame = DMatrix::from_columns(&[p1.clone(), p2.clone(), q1, q2, e.clone()]);
    let mut omega = DMatrix::zeros(n, n);
    let mut set = |i: usize, j: usize, val: f64| {
        omega[(i, j)] = val;
        omega[(j, i)] = -val;
    };
    set(2, 3, 0.6);
    set(2, 4, -0.4);
    set(3, 4, -1.0);
    let inv = frame.clone().try_inverse().expect("null frame is a basis");
    // ω(x, y) = g(Bx, y)  ⇒  Bᵀ g = Ω in standard coordinates
    let omega_std = inv.transpose() * omega * &inv;
    let b = space.g_inv() * omega_std.transpose();
    let u = &p1 + &p2 * 0.5 + &e * 0.7;
    let field = FlatConformalField::new(space, DVector::zeros(n), b, 0.0, u)?;
    Ok(NullPlaneFixture { field, p1, p2 })
}

pub fn random_vector<R: Rng + ?Sized>(n: usize, scale: f64, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(n, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

/// Random g-skew endomorphism `g⁻¹ A`, `A` antisymmetric Gaussian.
pub fn random_skew<R: Rng + ?Sized>(space: &MetricSpace, scale: f64, rng: &mut R) -> DMatrix<f64> {
    let n = space.dim();
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let x: f64 = scale * rng.sample::<f64, _>(StandardNormal);
            a[(i, j)] = x;
            a[(j, i)] = -x;
        }
    }
    space.g_inv() * a
}

/// Random member of the family with all four parameters Gaussian.
pub fn random_field<R: Rng + ?Sized>(space: &MetricSpace, rng: &mut R) -> FlatConformalField {
    let n = space.dim();
    let w = random_vector(n, 1.0, rng);
    let b = random_skew(space, 1.0, rng);
    let c: f64 = rng.sample(StandardNormal);
    let u = random_vector(n, 1.0, rng);
    FlatConformalField::new(space.clone(), w, b, c, u).expect("random parameters are valid")
}

/// Random field with a zero at the origin (`w = 0`).
pub fn random_field_vanishing_at_origin<R: Rng + ?Sized>(
    space: &MetricSpace,
    c: f64,
    rng: &mut R,
) -> FlatConformalField {
    let n = space.dim();
    let b = random_skew(space, 1.0, rng);
    let u = random_vector(n, 1.0, rng);
    FlatConformalField::new(space.clone(), DVector::zeros(n), b, c, u)
        .expect("random parameters are valid")
}

/// Random g-skew endomorphism with kernel of dimension 1 (odd `n`) or 2
/// (even `n`).
pub fn random_skew_with_kernel<R: Rng + ?Sized>(space: &MetricSpace, rng: &mut R) -> DMatrix<f64> {
    let n = space.dim();
    let r = if n.is_multiple_of(2) { n - 2 } else { n - 1 };
    let m = DMatrix::from_fn(r, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut a0 = DMatrix::zeros(r, r);
    for i in 0..r {
        for j in (i + 1)..r {
            let x: f64 = rng.sample(StandardNormal);
            a0[(i, j)] = x;
            a0[(j, i)] = -x;
        }
    }
    space.g_inv() * m.transpose() * a0 * m
}

/// Two zeros related by a known conformal linear map, for plant-and-recover
/// tests.
#[derive(Debug, Clone)]
pub struct PlantedPair {
    pub space1: MetricSpace,
    pub jet1: PointJet,
    pub space2: MetricSpace,
    pub jet2: PointJet,
    /// The planted map, with `Φᵀ g₂ Φ = scale · g₁`.
    pub witness: Witness,
}

/// A zero of a Killing field with nontrivial `Ker ∇v` on a diagonal
/// `space`, and its image under `Φ = a·S·R·exp(K)` with random `a`, `K`,
/// reflection `R` and (when `swap`) the signature swap `S`. The target
/// `dφ` also receives a random term vanishing on `Ker ∇v`.
pub fn planted_pair<R: Rng + ?Sized>(space: &MetricSpace, swap: bool, rng: &mut R) -> Result<PlantedPair> {
    if !space.is_diagonal_standard() {
        return Err(Error::Unsupported("planted pairs need a diagonal metric".into()));
    }
    let n = space.dim();
    let (p, q) = space.signature();
    let b = random_skew_with_kernel(space, rng);
    let u = random_vector(n, 1.0, rng);
    let jet1 = PointJet::at_origin(space, b, space.lower(&u) * 4.0);

    let theta: Vec<f64> = (0..skew_param_count(n))
        .map(|_| 0.4 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let mut phi = isometry_from_params(&theta, space);
    for i in 0..n {
        if rng.random_bool(0.3) {
            phi.row_mut(i).neg_mut();
        }
    }
    let a: f64 = rng.random_range(0.5..2.0);
    phi *= a;
    let (space2, scale) = if swap {
        if p == 0 || q == 0 {
            return Err(Error::Unsupported("signature swap needs an indefinite metric".into()));
        }
        phi = swap_permutation(p, q) * phi;
        (MetricSpace::diagonal(q, p)?, -a * a)
    } else {
        (space.clone(), a * a)
    };
    let inv = phi.clone().try_inverse().expect("conformal maps are invertible");
    let j2 = &phi * &jet1.j * &inv;
    let zeta = random_vector(n, 1.0, rng);
    let dphi2 = inv.transpose() * &jet1.dphi + j2.transpose() * zeta;
    let jet2 = PointJet::at_origin(&space2, j2, dphi2);
    Ok(PlantedPair {
        space1: space.clone(),
        jet1,
        space2,
        jet2,
        witness: Witness { phi, scale },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counterexample_structure() {
        let cx = neutral_counterexample(4, 1.0).unwrap();
        let f = &cx.field;
        let g = f.space();
        assert_eq!(g.quad(&cx.m1), 0.0);
        assert_eq!(g.quad(&cx.m2), 0.0);
        assert_eq!(g.inner(&cx.m1, &cx.m2), 0.0);
        assert_eq!(g.inner(f.u(), &cx.m2), 0.0);
        // m1, m2 span the −c eigenspace
        assert!((f.b() * &cx.m1 + &cx.m1).amax() < 1e-15);
        assert!((f.b() * &cx.m2 + &cx.m2).amax() < 1e-15);
        for t in [-0.5, 0.0, 0.3] {
            assert!(f.evaluate(&(&cx.m2 * t)).amax() < 1e-15);
        }
    }

    #[test]
    fn null_plane_fixture_vanishes_on_plane() {
        let fx = null_plane_fixture().unwrap();
        let g = fx.field.space();
        assert!(g.quad(&fx.p1).abs() < 1e-15 && g.inner(&fx.p1, &fx.p2).abs() < 1e-15);
        for (a, b) in [(0.2, -0.1), (-0.4, 0.3), (0.0, 0.5)] {
            let x = &fx.p1 * a + &fx.p2 * b;
            assert!(fx.field.evaluate(&x).amax() < 1e-14);
            assert!(fx.field.phi(&x).abs() < 1e-14);
        }
    }
}
