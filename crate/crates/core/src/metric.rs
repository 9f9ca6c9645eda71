//! Linear algebra over a flat pseudo-Euclidean inner product.
//!
//! Subspaces are stored with a Euclidean-orthonormal basis. The metric may be
//! degenerate on a subspace (null subspaces are common here), so a
//! g-orthonormal basis would not exist in general.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Default relative threshold for numerical rank decisions.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Flat metric `g` of signature `(p, q)` on `R^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSpace {
    n: usize,
    p: usize,
    q: usize,
    g: DMatrix<f64>,
    g_inv: DMatrix<f64>,
}

impl MetricSpace {
    /// `diag(+1 (p times), -1 (q times))`.
    pub fn diagonal(p: usize, q: usize) -> Result<Self> {
        let n = p + q;
        if n < 2 {
            return Err(Error::InvalidMetric(format!("dimension {n} is too small")));
        }
        let g = DMatrix::from_fn(n, n, |i, j| match (i == j, i < p) {
            (false, _) => 0.0,
            (true, true) => 1.0,
            (true, false) => -1.0,
        });
        Ok(Self {
            n,
            p,
            q,
            g_inv: g.clone(),
            g,
        })
    }

    pub fn euclidean(n: usize) -> Result<Self> {
        Self::diagonal(n, 0)
    }

    /// Lorentzian signature `(1, n-1)`.
    pub fn lorentzian(n: usize) -> Result<Self> {
        Self::diagonal(1, n.saturating_sub(1))
    }

    pub fn neutral(n: usize) -> Result<Self> {
        if !n.is_multiple_of(2) {
            return Err(Error::InvalidMetric(format!(
                "neutral signature needs even dimension, got {n}"
            )));
        }
        Self::diagonal(n / 2, n / 2)
    }

    /// Arbitrary symmetric nondegenerate Gram matrix; the signature is read
    /// off the eigenvalues.
    pub fn from_matrix(g: DMatrix<f64>) -> Result<Self> {
        let n = g.nrows();
        if g.ncols() != n {
            return Err(Error::InvalidMetric("metric matrix is not square".into()));
        }
        if n < 2 {
            return Err(Error::InvalidMetric(format!("dimension {n} is too small")));
        }
        let scale = g.amax().max(1.0);
        let asym = (&g - g.transpose()).amax();
        if asym > 1e-12 * scale {
            return Err(Error::InvalidMetric(format!(
                "metric matrix is not symmetric (asymmetry {asym:.3e})"
            )));
        }
        let (p, q, zero) = signature(&g, 1e-12 * scale);
        if zero > 0 {
            return Err(Error::InvalidMetric("metric matrix is degenerate".into()));
        }
        let g_inv = g
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::InvalidMetric("metric matrix is singular".into()))?;
        let check = (&g * &g_inv - DMatrix::identity(n, n)).amax();
        if check > 1e-12 {
            return Err(Error::InvalidMetric(format!(
                "metric inverse is inaccurate (residual {check:.3e})"
            )));
        }
        Ok(Self { n, p, q, g, g_inv })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn signature(&self) -> (usize, usize) {
        (self.p, self.q)
    }

    pub fn g(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn g_inv(&self) -> &DMatrix<f64> {
        &self.g_inv
    }

    pub fn is_diagonal_standard(&self) -> bool {
        Self::diagonal(self.p, self.q)
            .map(|d| d.g == self.g)
            .unwrap_or(false)
    }

    pub fn inner(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        (x.transpose() * &self.g * y)[(0, 0)]
    }

    pub fn quad(&self, x: &DVector<f64>) -> f64 {
        self.inner(x, x)
    }

    /// Index lowering: `x ↦ g(x, ·)` as a coefficient vector.
    pub fn lower(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.g * x
    }

    /// Index raising of a covector.
    pub fn raise(&self, xi: &DVector<f64>) -> DVector<f64> {
        &self.g_inv * xi
    }

    /// g-adjoint `A* = g⁻¹ Aᵀ g`.
    pub fn adjoint(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        &self.g_inv * a.transpose() * &self.g
    }

    /// Max-abs entry of `g A + (g A)ᵀ`; zero iff `A` is skew-adjoint.
    pub fn skew_defect(&self, a: &DMatrix<f64>) -> f64 {
        let ga = &self.g * a;
        (&ga + ga.transpose()).amax()
    }

    /// Matrix `L` with `Lᵀ g L = diag(+1 (p), -1 (q))`.
    pub fn canonical_frame(&self) -> DMatrix<f64> {
        let eig = self.g.clone().symmetric_eigen();
        let mut order: Vec<usize> = (0..self.n).collect();
        // positive eigenvalues first, each group in index order
        order.sort_by(|&a, &b| {
            let sa = eig.eigenvalues[a] < 0.0;
            let sb = eig.eigenvalues[b] < 0.0;
            sa.cmp(&sb).then(a.cmp(&b))
        });
        let mut l = DMatrix::zeros(self.n, self.n);
        for (col, &k) in order.iter().enumerate() {
            let scale = eig.eigenvalues[k].abs().sqrt();
            l.set_column(col, &(eig.eigenvectors.column(k) / scale));
        }
        l
    }

    /// The standard diagonal form `diag(+1 (p), -1 (q))`.
    pub fn canonical_form(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| {
            if i != j {
                0.0
            } else if i < self.p {
                1.0
            } else {
                -1.0
            }
        })
    }
}

/// Signature `(positive, negative, zero)` of a symmetric matrix with
/// eigenvalues in `(-tol, tol)` counted as zero.
pub fn signature(s: &DMatrix<f64>, tol: f64) -> (usize, usize, usize) {
    if s.nrows() == 0 {
        return (0, 0, 0);
    }
    let sym = (s + s.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut pos = 0;
    let mut neg = 0;
    let mut zero = 0;
    for &ev in eig.eigenvalues.iter() {
        if ev > tol {
            pos += 1;
        } else if ev < -tol {
            neg += 1;
        } else {
            zero += 1;
        }
    }
    (pos, neg, zero)
}

/// Linear subspace of `R^n` with a Euclidean-orthonormal column basis.
#[derive(Debug, Clone, PartialEq)]
pub struct Subspace {
    basis: DMatrix<f64>,
}

impl Subspace {
    pub fn zero(n: usize) -> Self {
        Self {
            basis: DMatrix::zeros(n, 0),
        }
    }

    pub fn full(n: usize) -> Self {
        Self {
            basis: DMatrix::identity(n, n),
        }
    }

    /// Span of the given columns, orthonormalized; columns below `tol`
    /// (relative to the largest singular value) are dropped.
    pub fn span(vectors: &DMatrix<f64>, tol: f64) -> Self {
        let n = vectors.nrows();
        if vectors.ncols() == 0 {
            return Self::zero(n);
        }
        let (u, s, _) = sorted_svd(vectors);
        let smax = s.first().copied().unwrap_or(0.0);
        if smax == 0.0 {
            return Self::zero(n);
        }
        let rank = s.iter().filter(|&&x| x > tol * smax).count();
        Self {
            basis: u.columns(0, rank).into_owned(),
        }
    }

    pub fn from_vectors(vectors: &[DVector<f64>], n: usize, tol: f64) -> Self {
        if vectors.is_empty() {
            return Self::zero(n);
        }
        Self::span(&DMatrix::from_columns(vectors), tol)
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn vector(&self, i: usize) -> DVector<f64> {
        self.basis.column(i).into_owned()
    }

    /// Euclidean orthogonal projector onto the subspace.
    pub fn projector(&self) -> DMatrix<f64> {
        &self.basis * self.basis.transpose()
    }

    /// Euclidean distance from `x` to the subspace.
    pub fn distance(&self, x: &DVector<f64>) -> f64 {
        (x - self.projector() * x).norm()
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        self.distance(x) <= tol * x.norm().max(1.0)
    }

    /// Whether `other` is contained in `self` to tolerance.
    pub fn contains_subspace(&self, other: &Subspace, tol: f64) -> bool {
        (0..other.dim()).all(|i| self.contains(&other.vector(i), tol))
    }

    pub fn same_as(&self, other: &Subspace, tol: f64) -> bool {
        self.dim() == other.dim()
            && self.contains_subspace(other, tol)
            && other.contains_subspace(self, tol)
    }

    /// Gram matrix of the metric restricted to this subspace.
    pub fn gram(&self, space: &MetricSpace) -> DMatrix<f64> {
        self.basis.transpose() * space.g() * &self.basis
    }

    /// Coordinates of `x` in the stored basis (least squares).
    pub fn coordinates(&self, x: &DVector<f64>) -> DVector<f64> {
        self.basis.transpose() * x
    }
}

/// SVD with singular values sorted in decreasing order. Returns the leading
/// `min(m, n)` columns of `U` when `m ≥ n`, the singular values, and a full
/// n×n `V`. Wide inputs are padded with zero rows, which leaves `V` and the
/// kernel unchanged.
fn sorted_svd(a: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let (m, n) = a.shape();
    let work = if m < n {
        let mut padded = DMatrix::zeros(n, n);
        padded.view_mut((0, 0), (m, n)).copy_from(a);
        padded
    } else {
        a.clone()
    };
    let rows = work.nrows();
    let svd = work.svd(true, true);
    let u = svd.u.expect("u requested");
    let vt = svd.v_t.expect("v_t requested");
    let k = svd.singular_values.len();
    let mut idx: Vec<usize> = (0..k).collect();
    idx.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let s: Vec<f64> = idx.iter().map(|&i| svd.singular_values[i]).collect();
    let mut us = DMatrix::zeros(m, k);
    let mut vs = DMatrix::zeros(n, k);
    for (col, &i) in idx.iter().enumerate() {
        us.set_column(col, &u.column(i).rows(0, m.min(rows)));
        vs.set_column(col, &vt.row(i).transpose());
    }
    (us, s, vs)
}

/// Kernel of `A` (any shape with `n` columns): right singular vectors with
/// singular value below `tol · σ_max` (or `tol` when `A = 0`).
pub fn kernel(a: &DMatrix<f64>, tol: f64) -> Subspace {
    kernel_with_floor(a, tol, 0.0)
}

/// As [`kernel`], with threshold `tol · max(σ_max, floor)`. A positive
/// floor makes a uniformly tiny matrix count as zero rather than as a
/// well-conditioned one.
pub fn kernel_with_floor(a: &DMatrix<f64>, tol: f64, floor: f64) -> Subspace {
    let n = a.ncols();
    if n == 0 {
        return Subspace::zero(0);
    }
    if a.nrows() == 0 {
        return Subspace::full(n);
    }
    let (_, s, v) = sorted_svd(a);
    let scale = s[0].max(floor);
    let cut = if scale > 0.0 { tol * scale } else { tol };
    let rank = s.iter().take(a.nrows().min(n)).filter(|&&x| x >= cut && x > 0.0).count();
    let basis = v.columns(rank, n - rank).into_owned();
    Subspace { basis }
}

/// Numerical rank with the threshold rule of [`kernel_with_floor`].
pub fn rank_with_floor(a: &DMatrix<f64>, tol: f64, floor: f64) -> usize {
    a.ncols() - kernel_with_floor(a, tol, floor).dim()
}

/// Numerical rank with the same threshold rule as [`kernel`].
pub fn rank(a: &DMatrix<f64>, tol: f64) -> usize {
    a.ncols() - kernel(a, tol).dim()
}

/// Column space of `A`.
pub fn range(a: &DMatrix<f64>, tol: f64) -> Subspace {
    Subspace::span(a, tol)
}

/// Singular values of `A` in decreasing order.
pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    let (_, s, _) = sorted_svd(a);
    s.into_iter().take(a.nrows().min(a.ncols())).collect()
}

/// `{ y : g(y, s) = 0 for all s ∈ S }`.
pub fn orth_complement(s: &Subspace, space: &MetricSpace) -> Subspace {
    let n = space.dim();
    if s.dim() == 0 {
        return Subspace::full(n);
    }
    let constraints = s.basis().transpose() * space.g();
    kernel(&constraints, DEFAULT_TOL)
}

/// Intersection of two subspaces of the same ambient space.
pub fn intersect(s1: &Subspace, s2: &Subspace, tol: f64) -> Subspace {
    let n = s1.ambient_dim();
    let id = DMatrix::<f64>::identity(n, n);
    let mut stacked = DMatrix::zeros(2 * n, n);
    stacked
        .view_mut((0, 0), (n, n))
        .copy_from(&(&id - s1.projector()));
    stacked
        .view_mut((n, 0), (n, n))
        .copy_from(&(&id - s2.projector()));
    // projector differences have unit scale; without the floor rounding
    // noise in `I − P` for a full subspace would count as rank
    kernel_with_floor(&stacked, tol, 1.0)
}

/// Sum `S1 + S2`.
pub fn sum(s1: &Subspace, s2: &Subspace, tol: f64) -> Subspace {
    let n = s1.ambient_dim();
    let mut cols = DMatrix::zeros(n, s1.dim() + s2.dim());
    cols.view_mut((0, 0), (n, s1.dim())).copy_from(s1.basis());
    cols.view_mut((0, s1.dim()), (n, s2.dim()))
        .copy_from(s2.basis());
    Subspace::span(&cols, tol)
}

/// Null cone membership: `|g(x,x)| ≤ tol (1 + |x|²)`.
pub fn is_null(x: &DVector<f64>, space: &MetricSpace, tol: f64) -> bool {
    space.quad(x).abs() <= tol * (1.0 + x.norm_squared())
}

/// Skew-adjoint part `(A - A*)/2` with respect to `g`.
pub fn skew_part(a: &DMatrix<f64>, space: &MetricSpace) -> DMatrix<f64> {
    (a - space.adjoint(a)) * 0.5
}

/// Self-adjoint part `(A + A*)/2` with respect to `g`.
pub fn sym_part(a: &DMatrix<f64>, space: &MetricSpace) -> DMatrix<f64> {
    (a + space.adjoint(a)) * 0.5
}

/// Number of independent parameters of a g-skew endomorphism.
pub fn skew_param_count(n: usize) -> usize {
    n * (n - 1) / 2
}

/// g-skew matrix `K = g⁻¹ A` where `A` is antisymmetric with upper-triangle
/// entries `theta` (row-major).
pub fn skew_from_params(theta: &[f64], space: &MetricSpace) -> DMatrix<f64> {
    let n = space.dim();
    assert_eq!(theta.len(), skew_param_count(n), "parameter count");
    let mut a = DMatrix::zeros(n, n);
    let mut k = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            a[(i, j)] = theta[k];
            a[(j, i)] = -theta[k];
            k += 1;
        }
    }
    space.g_inv() * a
}

/// `exp(K)` for the g-skew `K` built from `theta`; always a g-isometry.
pub fn isometry_from_params(theta: &[f64], space: &MetricSpace) -> DMatrix<f64> {
    skew_from_params(theta, space).exp()
}

/// Minimum-norm least-squares solution of `A x = b` using a truncated SVD.
pub fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>, tol: f64) -> DVector<f64> {
    lstsq_with_floor(a, b, tol, 0.0)
}

/// As [`lstsq`], truncating singular values below `tol · max(σ_max, floor)`.
pub fn lstsq_with_floor(a: &DMatrix<f64>, b: &DVector<f64>, tol: f64, floor: f64) -> DVector<f64> {
    let n = a.ncols();
    if a.nrows() == 0 || n == 0 {
        return DVector::zeros(n);
    }
    let (u, s, v) = sorted_svd(a);
    let scale = s[0].max(floor);
    let mut x = DVector::zeros(n);
    if scale == 0.0 {
        return x;
    }
    for (i, &si) in s.iter().enumerate().take(a.nrows().min(n)) {
        if si > tol * scale {
            let coef = u.column(i).dot(b) / si;
            x += v.column(i) * coef;
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn e(n: usize, i: usize) -> DVector<f64> {
        let mut v = DVector::zeros(n);
        v[i] = 1.0;
        v
    }

    #[test]
    fn kernel_of_zero_and_identity() {
        let z = DMatrix::<f64>::zeros(4, 4);
        assert_eq!(kernel(&z, 1e-9).dim(), 4);
        let id = DMatrix::<f64>::identity(4, 4);
        assert_eq!(kernel(&id, 1e-9).dim(), 0);
    }

    #[test]
    fn kernel_of_covector_row() {
        let row = DMatrix::from_row_slice(1, 3, &[0.0, 0.0, 2.0]);
        let k = kernel(&row, 1e-9);
        assert_eq!(k.dim(), 2);
        assert!(k.contains(&e(3, 0), 1e-12));
        assert!(k.contains(&e(3, 1), 1e-12));
    }

    #[test]
    fn rank_plus_kernel_is_n() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0, 0.0, 1.0, 1.0]);
        assert_eq!(rank(&a, 1e-9) + kernel(&a, 1e-9).dim(), 3);
        assert_eq!(rank(&a, 1e-9), 2);
    }

    #[test]
    fn complement_in_euclidean_space() {
        let m = MetricSpace::euclidean(3).unwrap();
        let s = Subspace::from_vectors(&[e(3, 0)], 3, 1e-12);
        let c = orth_complement(&s, &m);
        let expected = Subspace::from_vectors(&[e(3, 1), e(3, 2)], 3, 1e-12);
        assert!(c.same_as(&expected, 1e-10));
        assert_eq!(orth_complement(&Subspace::full(3), &m).dim(), 0);
    }

    #[test]
    fn complement_of_null_line_contains_it() {
        let m = MetricSpace::diagonal(2, 2).unwrap();
        let n1 = DVector::from_vec(vec![1.0, 0.0, 1.0, 0.0]);
        let s = Subspace::from_vectors(std::slice::from_ref(&n1), 4, 1e-12);
        let c = orth_complement(&s, &m);
        assert_eq!(c.dim(), 3);
        assert!(c.contains(&n1, 1e-10));
        // H ∩ H⊥ for H = n1⊥ contains n1
        let sing = intersect(&c, &orth_complement(&c, &m), 1e-9);
        assert!(sing.contains(&n1, 1e-10));
    }

    #[test]
    fn intersection_of_coordinate_planes() {
        let a = Subspace::from_vectors(&[e(3, 0), e(3, 1)], 3, 1e-12);
        let b = Subspace::from_vectors(&[e(3, 1), e(3, 2)], 3, 1e-12);
        let c = intersect(&a, &b, 1e-9);
        assert_eq!(c.dim(), 1);
        assert!(c.contains(&e(3, 1), 1e-12));
        assert!(intersect(&a, &a, 1e-9).same_as(&a, 1e-10));
    }

    #[test]
    fn null_cone_membership() {
        let m = MetricSpace::diagonal(2, 2).unwrap();
        assert!(is_null(&DVector::zeros(4), &m, 1e-12));
        assert!(is_null(&DVector::from_vec(vec![1.0, 0.0, 1.0, 0.0]), &m, 1e-12));
        let eu = MetricSpace::euclidean(3).unwrap();
        assert!(!is_null(&e(3, 0), &eu, 1e-9));
    }

    #[test]
    fn skew_and_sym_parts() {
        let m = MetricSpace::euclidean(2).unwrap();
        let rot = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        assert_abs_diff_eq!(skew_part(&rot, &m), rot.clone(), epsilon = 1e-15);
        assert_eq!(sym_part(&rot, &m).amax(), 0.0);
        let id = DMatrix::<f64>::identity(2, 2);
        assert_eq!(skew_part(&id, &m).amax(), 0.0);
    }

    #[test]
    fn skew_part_is_g_antisymmetric() {
        let m = MetricSpace::diagonal(1, 2).unwrap();
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, -1.0, 0.5, 2.0, 4.0, 0.0, -2.0]);
        let k = skew_part(&a, &m);
        let s = sym_part(&a, &m);
        assert!(m.skew_defect(&k) < 1e-14);
        let gs = m.g() * &s;
        assert!((&gs - gs.transpose()).amax() < 1e-14);
        assert!((k + s - a).amax() < 1e-14);
    }

    #[test]
    fn isometry_parametrization() {
        let m = MetricSpace::euclidean(3).unwrap();
        assert!((isometry_from_params(&[0.0; 3], &m) - DMatrix::identity(3, 3)).amax() < 1e-15);
        let r = isometry_from_params(&[0.3, 0.0, 0.0], &m);
        let expected = DMatrix::from_row_slice(
            3,
            3,
            &[0.3f64.cos(), 0.3f64.sin(), 0.0, -(0.3f64.sin()), 0.3f64.cos(), 0.0, 0.0, 0.0, 1.0],
        );
        assert!((r - expected).amax() < 1e-14);
    }

    #[test]
    fn isometry_preserves_lorentz_metric() {
        let m = MetricSpace::diagonal(1, 2).unwrap();
        let phi = isometry_from_params(&[0.7, -1.1, 0.4], &m);
        let defect = (phi.transpose() * m.g() * &phi - m.g()).amax();
        assert!(defect < 1e-10, "{defect}");
    }

    #[test]
    fn canonical_frame_diagonalizes() {
        let g = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 2.0]);
        let m = MetricSpace::from_matrix(g).unwrap();
        assert_eq!(m.signature(), (2, 1));
        let l = m.canonical_frame();
        let d = l.transpose() * m.g() * &l;
        assert!((d - m.canonical_form()).amax() < 1e-12);
    }

    #[test]
    fn rejects_degenerate_or_asymmetric_metric() {
        let g = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(MetricSpace::from_matrix(g).is_err());
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(MetricSpace::from_matrix(g).is_err());
    }

    #[test]
    fn lstsq_min_norm() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let b = DVector::from_vec(vec![2.0, 3.0]);
        let x = lstsq(&a, &b, 1e-12);
        assert_abs_diff_eq!(x, DVector::from_vec(vec![2.0, 3.0, 0.0]), epsilon = 1e-14);
    }
}
