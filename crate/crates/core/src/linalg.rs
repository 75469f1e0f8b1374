//! Dense small-matrix kernel.
//!
//! Everything here works on `n x n` matrices with `2 <= n <= 8`. The Iwasawa
//! factorization `g = k a n` is computed column by column with a
//! re-orthogonalizing Gram-Schmidt pass; the exponential uses a degree 13
//! Pade approximant with scaling and squaring; eigenvalues come from a real
//! Schur form and are grouped into clusters whose generalized eigenspaces are
//! recovered as SVD null spaces.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type CMat = DMatrix<Complex64>;

/// Largest supported matrix dimension.
pub const MAX_DIM: usize = 8;

/// Eigenvalues closer than this (times `max(1, |X|_F)`) belong to one cluster.
pub const CLUSTER_TOL: f64 = 1e-7;

/// Distinct clusters must be at least this many cluster tolerances apart.
const CLUSTER_SEPARATION: f64 = 100.0;

/// Search radius (times `max(1, |X|_F)`) for smeared defective eigenvalues.
const DEFECT_RADIUS: f64 = 1e-3;
const DEFECT_RANK_TOL: f64 = 1e-9;

/// Bound on `|Xv - lambda v|` for unit eigenvectors.
pub const EIGEN_RESIDUAL_TOL: f64 = 1e-8;

/// Relative Gram-Schmidt pivot below which the factorization is rejected.
pub const PIVOT_FLOOR: f64 = 1e-14;

/// The global tolerance policy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TolerancePolicy {
    /// `|det g - 1|` allowed for a group element.
    pub det: f64,
    /// `max |k^T k - I|` allowed for a compact point.
    pub orth: f64,
    /// Fixed point and membership tests.
    pub fix: f64,
    /// Gradient residuals.
    pub grad: f64,
    /// Factorization reconstruction (max norm).
    pub recon: f64,
    /// Finite difference step.
    pub fd_step: f64,
}

impl TolerancePolicy {
    pub const DEFAULT: TolerancePolicy = TolerancePolicy {
        det: 1e-9,
        orth: 1e-10,
        fix: 1e-8,
        grad: 1e-5,
        recon: 1e-12,
        fd_step: 1e-5,
    };

    /// All tolerances positive and `recon < orth < fix`.
    pub fn validate(&self) -> Result<()> {
        let all = [self.det, self.orth, self.fix, self.grad, self.recon, self.fd_step];
        if all.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(Error::InvalidInput("tolerances must be finite and positive".into()));
        }
        if !(self.recon < self.orth && self.orth < self.fix) {
            return Err(Error::InvalidInput(
                "tolerances must satisfy recon < orth < fix".into(),
            ));
        }
        Ok(())
    }
}

impl Default for TolerancePolicy {
    fn default() -> Self {
        Self::DEFAULT
    }
}

pub const TOL: TolerancePolicy = TolerancePolicy::DEFAULT;

// ---------------------------------------------------------------------------
// small helpers

pub fn max_abs(m: &Mat) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn max_abs_diff(a: &Mat, b: &Mat) -> f64 {
    max_abs(&(a - b))
}

/// Frobenius distance, the bi-invariant metric used on `SO(n)`.
pub fn distance(a: &Mat, b: &Mat) -> f64 {
    (a - b).norm()
}

/// Cartan inner product `trace(X Y^T)`.
pub fn cartan_inner(x: &Mat, y: &Mat) -> f64 {
    x.dot(y)
}

pub fn commutator(x: &Mat, y: &Mat) -> Mat {
    x * y - y * x
}

pub fn diag(entries: &[f64]) -> Mat {
    Mat::from_diagonal(&DVector::from_column_slice(entries))
}

/// Elementary matrix `E_ij`.
pub fn elementary(n: usize, i: usize, j: usize) -> Mat {
    let mut e = Mat::zeros(n, n);
    e[(i, j)] = 1.0;
    e
}

pub fn from_rows(rows: &[Vec<f64>]) -> Result<Mat> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != rows[0].len()) {
        return Err(Error::InvalidInput("ragged or empty matrix".into()));
    }
    let m = rows[0].len();
    Ok(Mat::from_fn(n, m, |i, j| rows[i][j]))
}

pub fn to_rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// `max |k^T k - I|`.
pub fn orthogonality_residual(k: &Mat) -> f64 {
    let n = k.nrows();
    max_abs(&(k.transpose() * k - Mat::identity(n, n)))
}

pub fn check_dimension(m: &Mat) -> Result<usize> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::InvalidInput(format!("matrix is {}x{}, not square", n, m.ncols())));
    }
    if !(2..=MAX_DIM).contains(&n) {
        return Err(Error::InvalidInput(format!("dimension {n} outside 2..=8")));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite matrix entry".into()));
    }
    Ok(n)
}

/// Checks that `g` is an element of `SL(n, R)`.
pub fn check_group_element(g: &Mat, tol: &TolerancePolicy) -> Result<()> {
    check_dimension(g)?;
    let det = g.determinant();
    if (det - 1.0).abs() > tol.det {
        return Err(Error::NonUnimodular { det });
    }
    Ok(())
}

/// Checks that `k` is in `SO(n)`.
pub fn check_compact_point(k: &Mat, tol: &TolerancePolicy) -> Result<()> {
    check_dimension(k)?;
    let r = orthogonality_residual(k);
    if r > tol.orth || k.determinant() <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "not a special orthogonal matrix (residual {r:e})"
        )));
    }
    Ok(())
}

pub fn inverse(g: &Mat) -> Result<Mat> {
    g.clone()
        .try_inverse()
        .ok_or_else(|| Error::IllConditioned("singular matrix".into()))
}

/// `Ad(g) Y = g Y g^{-1}`.
pub fn adjoint(g: &Mat, y: &Mat) -> Result<Mat> {
    Ok(g * y * inverse(g)?)
}

/// Integer power by repeated squaring; negative exponents invert first.
pub fn powi(g: &Mat, exponent: i64) -> Result<Mat> {
    let n = g.nrows();
    let mut base = if exponent < 0 { inverse(g)? } else { g.clone() };
    let mut e = exponent.unsigned_abs();
    let mut acc = Mat::identity(n, n);
    while e > 0 {
        if e & 1 == 1 {
            acc = &acc * &base;
        }
        e >>= 1;
        if e > 0 {
            base = &base * &base;
        }
    }
    Ok(acc)
}

/// Nearest orthogonal matrix (orthogonal polar factor).
pub fn nearest_orthogonal(m: &Mat) -> Mat {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    u * v_t
}

// ---------------------------------------------------------------------------
// Iwasawa factorization

/// The factors of `g = k a n`.
#[derive(Clone, Debug)]
pub struct Iwasawa {
    pub k: Mat,
    /// Diagonal of `a`, all strictly positive.
    pub a: Vec<f64>,
    /// Unit upper triangular.
    pub n: Mat,
}

impl Iwasawa {
    pub fn a_matrix(&self) -> Mat {
        diag(&self.a)
    }

    pub fn reconstruct(&self) -> Mat {
        &self.k * self.a_matrix() * &self.n
    }
}

/// Iwasawa factorization of `g` in `SL(n, R)` with the default tolerances.
pub fn iwasawa_project(g: &Mat) -> Result<Iwasawa> {
    iwasawa_project_with(g, &TOL)
}

pub fn iwasawa_project_with(g: &Mat, tol: &TolerancePolicy) -> Result<Iwasawa> {
    check_group_element(g, tol)?;
    let (k, r) = gram_schmidt(g)?;
    let a: Vec<f64> = (0..r.nrows()).map(|i| r[(i, i)]).collect();
    let n = Mat::from_fn(r.nrows(), r.ncols(), |i, j| r[(i, j)] / a[i]);
    Ok(Iwasawa { k, a, n })
}

/// The compact factor `kappa(g)`. Only requires linearly independent
/// columns; the orientation of the result follows `sign(det g)`.
pub fn kappa(g: &Mat) -> Result<Mat> {
    Ok(gram_schmidt(g)?.0)
}

/// Modified Gram-Schmidt with one re-orthogonalization pass.
/// Returns `(q, r)` with `g = q r`, `r` upper triangular with positive diagonal.
fn gram_schmidt(g: &Mat) -> Result<(Mat, Mat)> {
    let n = g.nrows();
    let mut q = Mat::zeros(n, n);
    let mut r = Mat::zeros(n, n);
    for j in 0..n {
        let mut v = g.column(j).clone_owned();
        let scale = v.norm();
        for _pass in 0..2 {
            for i in 0..j {
                let qi = q.column(i);
                let c = qi.dot(&v);
                r[(i, j)] += c;
                v.axpy(-c, &qi, 1.0);
            }
        }
        let pivot = v.norm();
        if !(scale > 0.0) || pivot <= PIVOT_FLOOR * scale {
            return Err(Error::NumericalBreakdown {
                column: j,
                pivot: if scale > 0.0 { pivot / scale } else { 0.0 },
            });
        }
        r[(j, j)] = pivot;
        q.set_column(j, &(v / pivot));
    }
    Ok((q, r))
}

// ---------------------------------------------------------------------------
// exponential

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

fn one_norm(x: &Mat) -> f64 {
    (0..x.ncols())
        .map(|j| x.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential. `expm(0)` is exactly the identity.
pub fn expm(x: &Mat) -> Mat {
    let n = x.nrows();
    let identity = Mat::identity(n, n);
    if x.iter().all(|v| *v == 0.0) {
        return identity;
    }
    let norm = one_norm(x);
    let squarings = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let a = x / 2f64.powi(squarings);
    let b = &PADE13;
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_tail = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9])
        + &a6 * b[7]
        + &a4 * b[5]
        + &a2 * b[3]
        + &identity * b[1];
    let u = &a * u_tail;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8])
        + &a6 * b[6]
        + &a4 * b[4]
        + &a2 * b[2]
        + &identity * b[0];
    let numerator = &v + &u;
    let denominator = &v - &u;
    let mut result = denominator
        .lu()
        .solve(&numerator)
        .expect("Pade denominator is nonsingular after scaling");
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

// ---------------------------------------------------------------------------
// eigendecomposition

/// One cluster of (numerically) equal eigenvalues.
#[derive(Clone, Debug)]
pub struct EigenCluster {
    pub value: Complex64,
    pub multiplicity: usize,
    pub geometric_multiplicity: usize,
    /// Columns span the generalized eigenspace.
    pub basis: CMat,
    /// Columns span the eigenspace proper.
    pub eigenvectors: CMat,
}

impl EigenCluster {
    pub fn is_real(&self) -> bool {
        self.value.im == 0.0
    }

    pub fn is_defective(&self) -> bool {
        self.geometric_multiplicity < self.multiplicity
    }
}

/// Clustered spectrum with a generalized eigenbasis.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub clusters: Vec<EigenCluster>,
    basis: CMat,
    basis_inverse: CMat,
}

impl Spectrum {
    pub fn dimension(&self) -> usize {
        self.basis.nrows()
    }

    /// Eigenvalues repeated by algebraic multiplicity.
    pub fn eigenvalues(&self) -> Vec<Complex64> {
        self.clusters
            .iter()
            .flat_map(|c| std::iter::repeat_n(c.value, c.multiplicity))
            .collect()
    }

    pub fn is_diagonalizable(&self) -> bool {
        self.clusters.iter().all(|c| !c.is_defective())
    }

    /// Columns: generalized eigenbasis, cluster by cluster.
    pub fn basis(&self) -> &CMat {
        &self.basis
    }

    /// Applies `f` to the semisimple part: `V diag(f(lambda)) V^{-1}`.
    /// `f` must commute with complex conjugation so the result is real.
    pub fn map<F: Fn(Complex64) -> Complex64>(&self, f: F) -> Result<Mat> {
        let values: Vec<Complex64> = self
            .clusters
            .iter()
            .flat_map(|c| std::iter::repeat_n(f(c.value), c.multiplicity))
            .collect();
        let d = CMat::from_diagonal(&nalgebra::DVector::from_vec(values));
        let m = &self.basis * d * &self.basis_inverse;
        let scale = m.iter().fold(1.0_f64, |acc, z| acc.max(z.norm()));
        let imag = m.iter().fold(0.0_f64, |acc, z| acc.max(z.im.abs()));
        if imag > 1e-8 * scale {
            return Err(Error::IllConditioned(format!(
                "spectral function has imaginary residue {imag:e}"
            )));
        }
        Ok(m.map(|z| z.re))
    }
}

fn complex(m: &Mat) -> CMat {
    m.map(|v| Complex64::new(v, 0.0))
}

/// Singular vectors for the `count` smallest singular values of `a`, and all
/// singular values in ascending order.
fn complex_null_space(a: &CMat, count: usize) -> (CMat, Vec<f64>) {
    let n = a.ncols();
    let svd = a.clone().svd(false, true);
    let v_t = svd.v_t.expect("v_t requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let mut out = CMat::zeros(n, count);
    for (c, &i) in order.iter().take(count).enumerate() {
        for r in 0..n {
            out[(r, c)] = v_t[(i, r)].conj();
        }
    }
    let sv = order.iter().map(|&i| svd.singular_values[i]).collect();
    (out, sv)
}

/// Right singular vectors for the `count` smallest singular values of `a`,
/// with all singular values in ascending order.
pub fn real_null_space(a: &Mat, count: usize) -> (Mat, Vec<f64>) {
    let n = a.ncols();
    let svd = a.clone().svd(false, true);
    let v_t = svd.v_t.expect("v_t requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let mut out = Mat::zeros(n, count);
    for (c, &i) in order.iter().take(count).enumerate() {
        for r in 0..n {
            out[(r, c)] = v_t[(i, r)];
        }
    }
    let sv = order.iter().map(|&i| svd.singular_values[i]).collect();
    (out, sv)
}

/// Null space of a real matrix: right singular vectors with singular value
/// at most `tol` (absolute).
pub fn null_space(a: &Mat, tol: f64) -> Mat {
    let (basis, sv) = real_null_space(a, a.ncols());
    let count = sv.iter().take_while(|s| **s <= tol).count();
    basis.columns(0, count).into_owned()
}

fn cmat_pow(a: &CMat, m: usize) -> CMat {
    let mut acc = a.clone();
    for _ in 1..m {
        acc = &acc * a;
    }
    acc
}

fn linkage(values: &[Complex64], radius: f64) -> Vec<Vec<usize>> {
    let n = values.len();
    let mut label: Vec<usize> = (0..n).collect();
    // at most 8 values: repeated relabeling is cheap
    let mut changed = true;
    while changed {
        changed = false;
        for i in 0..n {
            for j in 0..n {
                if label[j] > label[i] && (values[i] - values[j]).norm() <= radius {
                    label[j] = label[i];
                    changed = true;
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for l in 0..n {
        let g: Vec<usize> = (0..n).filter(|&i| label[i] == l).collect();
        if !g.is_empty() {
            groups.push(g);
        }
    }
    groups
}

fn is_defective_ring(x: &Mat, raw: &[Complex64], members: &[usize], scale: f64) -> bool {
    let m = members.len();
    let n = x.nrows();
    let centroid = members.iter().map(|&i| raw[i]).sum::<Complex64>() / m as f64;
    let radius = members
        .iter()
        .map(|&i| (raw[i] - centroid).norm())
        .fold(0.0, f64::max);
    if radius > 10.0 * 1e-15f64.powf(1.0 / m as f64) * scale {
        return false;
    }
    let shifted = complex(x) - CMat::identity(n, n) * centroid;
    let (_, sv) = complex_null_space(&cmat_pow(&shifted, m), n);
    sv.iter().filter(|s| **s <= DEFECT_RANK_TOL * scale.powi(m as i32)).count() >= m
}

/// Clustered eigendecomposition with generalized eigenspaces.
pub fn eig(x: &Mat) -> Result<Spectrum> {
    let n = check_dimension(x)?;
    let scale = x.norm().max(1.0);
    let tol = CLUSTER_TOL * scale;
    let raw: Vec<Complex64> = x.complex_eigenvalues().iter().copied().collect();

    let mut groups = linkage(&raw, tol);
    // A defective eigenvalue of multiplicity m is smeared by roundoff into a
    // ring of radius ~eps^(1/m). Merge such rings when the centroid passes a
    // rank test on (X - lambda)^m.
    for coarse in linkage(&raw, DEFECT_RADIUS * scale) {
        let inside: Vec<usize> = (0..groups.len())
            .filter(|&g| coarse.contains(&groups[g][0]))
            .collect();
        if inside.len() > 1 && is_defective_ring(x, &raw, &coarse, scale) {
            groups = groups
                .into_iter()
                .enumerate()
                .filter(|(g, _)| !inside.contains(g))
                .map(|(_, v)| v)
                .collect();
            groups.push(coarse);
        }
    }
    for (a, ga) in groups.iter().enumerate() {
        for gb in groups.iter().skip(a + 1) {
            for &i in ga {
                for &j in gb {
                    let d = (raw[i] - raw[j]).norm();
                    if d < CLUSTER_SEPARATION * tol {
                        return Err(Error::IllConditioned(format!(
                            "eigenvalues {} and {} are neither equal nor separated ({d:e})",
                            raw[i], raw[j]
                        )));
                    }
                }
            }
        }
    }

    let mut clusters = Vec::with_capacity(groups.len());
    for g in &groups {
        let m = g.len();
        let mut value = g.iter().map(|&i| raw[i]).sum::<Complex64>() / m as f64;
        if value.im.abs() <= tol {
            value.im = 0.0;
        }
        let identity = Mat::identity(n, n);
        let (basis, eigenvectors, geometric) = if value.im == 0.0 {
            let shifted = x - &identity * value.re;
            let mut power = shifted.clone();
            for _ in 1..m {
                power = &power * &shifted;
            }
            let (basis, _) = real_null_space(&power, m);
            let (vectors, sv) = real_null_space(&shifted, n);
            let geometric = sv.iter().take_while(|s| **s <= tol).count().clamp(1, m);
            let vectors = vectors.columns(0, geometric).into_owned();
            (complex(&basis), complex(&vectors), geometric)
        } else {
            let shifted = complex(x) - CMat::identity(n, n) * value;
            let (basis, _) = complex_null_space(&cmat_pow(&shifted, m), m);
            let (vectors, sv) = complex_null_space(&shifted, n);
            let geometric = sv.iter().take_while(|s| **s <= tol).count().clamp(1, m);
            (basis, vectors.columns(0, geometric).into_owned(), geometric)
        };
        let cx = complex(x);
        for c in 0..eigenvectors.ncols() {
            let v = eigenvectors.column(c);
            let residual = (&cx * v - v * value).norm();
            if residual > EIGEN_RESIDUAL_TOL * scale {
                return Err(Error::IllConditioned(format!(
                    "eigenpair residual {residual:e} for eigenvalue {value}"
                )));
            }
        }
        clusters.push(EigenCluster {
            value,
            multiplicity: m,
            geometric_multiplicity: geometric,
            basis,
            eigenvectors,
        });
    }
    clusters.sort_by(|a, b| {
        b.value
            .re
            .total_cmp(&a.value.re)
            .then(b.value.im.total_cmp(&a.value.im))
    });

    let mut basis = CMat::zeros(n, n);
    let mut col = 0;
    for c in &clusters {
        for j in 0..c.multiplicity {
            basis.set_column(col, &c.basis.column(j));
            col += 1;
        }
    }
    let sv = basis.clone().svd(false, false).singular_values;
    let (smin, smax) = sv
        .iter()
        .fold((f64::INFINITY, 0.0_f64), |(lo, hi), s| (lo.min(*s), hi.max(*s)));
    if !(smin > 1e-12 * smax) {
        return Err(Error::IllConditioned(
            "generalized eigenspaces are not independent".into(),
        ));
    }
    let basis_inverse = basis
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::IllConditioned("singular eigenbasis".into()))?;
    Ok(Spectrum {
        clusters,
        basis,
        basis_inverse,
    })
}

/// Logarithm of a diagonalizable matrix with positive real spectrum.
pub fn logm_positive(x: &Mat) -> Result<Mat> {
    let spectrum = eig(x)?;
    if !spectrum.is_diagonalizable() {
        return Err(Error::IllConditioned("logarithm of a defective matrix".into()));
    }
    if spectrum.clusters.iter().any(|c| !c.is_real() || c.value.re <= 0.0) {
        return Err(Error::InvalidInput("spectrum is not positive real".into()));
    }
    spectrum.map(|z| Complex64::new(z.re.ln(), 0.0))
}

/// Logarithm of a unipotent matrix via the terminating series.
pub fn log_unipotent(u: &Mat) -> Mat {
    let n = u.nrows();
    let x = u - Mat::identity(n, n);
    let mut term = x.clone();
    let mut acc = Mat::zeros(n, n);
    for k in 1..=n {
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        acc += &term * (sign / k as f64);
        term = &term * &x;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{E, FRAC_PI_2};

    fn rot2(a: f64) -> Mat {
        Mat::from_row_slice(2, 2, &[a.cos(), -a.sin(), a.sin(), a.cos()])
    }

    #[test]
    fn tolerance_policy_ordering() {
        TOL.validate().unwrap();
        let bad = TolerancePolicy { recon: 1.0, ..TOL };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn iwasawa_of_identity() {
        let f = iwasawa_project(&Mat::identity(3, 3)).unwrap();
        assert_eq!(f.k, Mat::identity(3, 3));
        assert_eq!(f.a, vec![1.0; 3]);
        assert_eq!(f.n, Mat::identity(3, 3));
    }

    #[test]
    fn iwasawa_rejects_non_unimodular() {
        let g = diag(&[2.0, 1.0]);
        assert!(matches!(iwasawa_project(&g), Err(Error::NonUnimodular { .. })));
    }

    #[test]
    fn iwasawa_breakdown_on_collinear_columns() {
        let g = Mat::from_row_slice(2, 2, &[1.0, 2.0, 1.0, 2.0]);
        assert!(matches!(kappa(&g), Err(Error::NumericalBreakdown { column: 1, .. })));
    }

    #[test]
    fn iwasawa_first_column_closed_form() {
        for t in [0.0, 1.0, 2.0] {
            for i in 0..24 {
                let a = i as f64 * std::f64::consts::PI / 12.0;
                let g = diag(&[f64::exp(t), f64::exp(-t)]) * rot2(a);
                let k = iwasawa_project(&g).unwrap().k;
                let c0 = a.cos() / (a.cos().powi(2) + (-4.0 * t).exp() * a.sin().powi(2)).sqrt();
                let c1 = a.sin() / ((4.0 * t).exp() * a.cos().powi(2) + a.sin().powi(2)).sqrt();
                assert!((k[(0, 0)] - c0).abs() < 1e-12);
                assert!((k[(1, 0)] - c1).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn expm_examples() {
        assert_eq!(expm(&Mat::zeros(3, 3)), Mat::identity(3, 3));
        let t = 3.5;
        let x = elementary(2, 0, 1) * t;
        let mut expected = Mat::identity(2, 2);
        expected[(0, 1)] = t;
        assert!(max_abs_diff(&expm(&x), &expected) < 1e-14);
        let h = expm(&diag(&[1.0, -1.0]));
        assert!(max_abs_diff(&h, &diag(&[E, 1.0 / E])) < 1e-14);
    }

    #[test]
    fn expm_of_rotation_generator() {
        let z = Mat::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]) * 20.0;
        assert!(max_abs_diff(&expm(&z), &rot2(20.0)) < 1e-12);
    }

    #[test]
    fn eig_diagonal_and_nilpotent() {
        let s = eig(&diag(&[2.0, -1.0, -1.0])).unwrap();
        assert_eq!(s.clusters.len(), 2);
        assert_eq!(s.clusters[0].value, Complex64::new(2.0, 0.0));
        assert_eq!(s.clusters[1].multiplicity, 2);
        assert!(!s.clusters[1].is_defective());

        let s = eig(&elementary(2, 0, 1)).unwrap();
        assert_eq!(s.clusters.len(), 1);
        assert_eq!(s.clusters[0].multiplicity, 2);
        assert_eq!(s.clusters[0].geometric_multiplicity, 1);
        assert!(!s.is_diagonalizable());
    }

    #[test]
    fn eig_rotation_matches_characteristic_polynomial() {
        // char poly of rot(pi/2): x^2 + 1 => roots +-i
        let s = eig(&rot2(FRAC_PI_2)).unwrap();
        let mut v = s.eigenvalues();
        v.sort_by(|a, b| a.im.total_cmp(&b.im));
        assert!((v[0] - Complex64::new(0.0, -1.0)).norm() < 1e-12);
        assert!((v[1] - Complex64::new(0.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn eig_rejects_ambiguous_clusters() {
        let x = diag(&[1.0, 1.0 + 1e-6, -2.0 - 1e-6]);
        assert!(matches!(eig(&x), Err(Error::IllConditioned(_))));
    }

    #[test]
    fn eig_recovers_large_jordan_block() {
        // 2 * (I + N) with a single 4x4 Jordan chain, conjugated
        let mut j = Mat::identity(4, 4) * 2.0;
        for i in 0..3 {
            j[(i, i + 1)] = 1.0;
        }
        let p = Mat::from_row_slice(4, 4, &[
            1.0, 0.2, 0.0, -0.3, 0.1, 1.0, 0.4, 0.0, 0.0, -0.2, 1.0, 0.1, 0.3, 0.0, 0.2, 1.0,
        ]);
        let x = &p * j * inverse(&p).unwrap();
        let s = eig(&x).unwrap();
        assert_eq!(s.clusters.len(), 1);
        assert_eq!(s.clusters[0].multiplicity, 4);
        assert_eq!(s.clusters[0].geometric_multiplicity, 1);
        let semisimple = s.map(|z| z).unwrap();
        assert!(max_abs_diff(&semisimple, &(Mat::identity(4, 4) * 2.0)) < 1e-9);
    }

    #[test]
    fn spectral_map_reproduces_input() {
        let x = Mat::from_row_slice(3, 3, &[1.0, 2.0, 0.5, -1.0, 0.3, 0.0, 0.2, 0.1, -1.3]);
        let s = eig(&x).unwrap();
        let back = s.map(|z| z).unwrap();
        assert!(max_abs_diff(&back, &x) < 1e-10);
    }

    #[test]
    fn logs() {
        let h = diag(&[E * E, 1.0 / E, 1.0 / E]);
        assert!(max_abs_diff(&logm_positive(&h).unwrap(), &diag(&[2.0, -1.0, -1.0])) < 1e-12);
        let u = Mat::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 0.0, 1.0, 4.0, 0.0, 0.0, 1.0]);
        assert!(max_abs_diff(&expm(&log_unipotent(&u)), &u) < 1e-12);
    }

    #[test]
    fn power_by_squaring() {
        let g = Mat::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        let p = powi(&g, -5).unwrap();
        assert_eq!(p, Mat::from_row_slice(2, 2, &[1.0, -5.0, 0.0, 1.0]));
    }
}
