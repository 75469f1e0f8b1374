//! Height function, Borel metric, gradient checks and normal hyperbolicity.
//!
//! Tangent vectors at `k` are written `k (X - X^T)` with `X` strictly lower
//! triangular; the metric at `k` is the `K`-translate of the Borel form on
//! strictly lower triangular matrices.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::{self, project_to_fixed_set};
use crate::jordan::{FlowSpec, TimeMode};
use crate::linalg::{self, Mat, TOL};
use crate::structure::{self, ChamberElement, Subalgebra};

/// Consistency bound between the two Borel metric formulas.
const METRIC_AGREEMENT: f64 = 1e-10;
/// Slack for monotonicity of the height along hyperbolic orbits.
pub const MONOTONE_SLACK: f64 = 1e-10;
/// Rate fits ignore samples before this time.
pub const FIT_START: f64 = 2.0;
pub const MAX_RATE_HORIZON: f64 = 20.0;
/// Principal-angle cosine above which two directions are identified.
const INTERSECTION_COS: f64 = 1.0 - 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct MetricSpec {
    /// Regular element, strictly decreasing.
    pub h_r: Vec<f64>,
    /// Weight on `m`, which is zero for `sl(n, R)`; kept for completeness.
    pub c0: f64,
}

impl MetricSpec {
    /// `H_r = diag(n-1, n-3, ..., 1-n)`.
    pub fn standard(n: usize) -> Self {
        MetricSpec {
            h_r: (0..n).map(|i| (n as f64 - 1.0) - 2.0 * i as f64).collect(),
            c0: 1.0,
        }
    }

    pub fn new(h_r: Vec<f64>, c0: f64) -> Result<Self> {
        if h_r.windows(2).any(|w| !(w[0] > w[1])) {
            return Err(Error::InvalidInput("H_r must be strictly decreasing".into()));
        }
        if h_r.iter().sum::<f64>().abs() > 1e-9 * h_r.iter().map(|v| v.abs()).sum::<f64>().max(1.0) {
            return Err(Error::InvalidInput("H_r must be traceless".into()));
        }
        if !(c0 > 0.0) {
            return Err(Error::InvalidInput("c0 must be positive".into()));
        }
        Ok(MetricSpec { h_r, c0 })
    }

    pub fn n(&self) -> usize {
        self.h_r.len()
    }

    pub fn h_r_matrix(&self) -> Mat {
        linalg::diag(&self.h_r)
    }
}

/// `f_H(k) = <Ad(k) H_r, H>`.
pub fn height(k: &Mat, spec: &MetricSpec, h: &ChamberElement) -> f64 {
    linalg::cartan_inner(&(k * spec.h_r_matrix() * k.transpose()), &h.matrix())
}

fn strictly_lower(m: &Mat) -> Mat {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| if i > j { m[(i, j)] } else { 0.0 })
}

fn skew_from_lower(x: &Mat) -> Mat {
    x - x.transpose()
}

/// Velocity of `k` under `exp(tH)`, as a matrix `k (Y_- - Y_-^T)` with `Y_-`
/// the strictly lower part of `Ad(k^{-1}) H`.
pub fn induced_field(h: &ChamberElement, k: &Mat) -> Mat {
    k * skew_from_lower(&induced_lower(h, k))
}

/// `Y_-` for the induced field at `k`.
pub fn induced_lower(h: &ChamberElement, k: &Mat) -> Mat {
    strictly_lower(&(k.transpose() * h.matrix() * k))
}

/// Central finite difference of `kappa(exp(tH) k)`.
pub fn induced_field_fd(h: &ChamberElement, k: &Mat, delta: f64) -> Result<Mat> {
    let hm = h.matrix();
    let plus = flow::act(&linalg::expm(&(&hm * delta)), k)?;
    let minus = flow::act(&linalg::expm(&(&hm * -delta)), k)?;
    Ok((plus - minus) / (2.0 * delta))
}

/// Borel metric on strictly lower triangular `X, Y`, computed from the
/// eigenspace weights `-2 lambda` of `ad(H_r)` and from `2 <[X, H_r], Y>`;
/// the two must agree.
pub fn borel_metric(x: &Mat, y: &Mat, spec: &MetricSpec) -> Result<f64> {
    let n = spec.n();
    let h = &spec.h_r;
    let mut eigen_sum = 0.0;
    for i in 0..n {
        for j in 0..i {
            let lambda = h[i] - h[j];
            eigen_sum += -2.0 * lambda * x[(i, j)] * y[(i, j)];
        }
    }
    let bracket = 2.0 * linalg::cartan_inner(&linalg::commutator(x, &spec.h_r_matrix()), y);
    let scale = x.norm().max(1.0) * y.norm().max(1.0) * h[0].abs().max(1.0);
    if (eigen_sum - bracket).abs() > METRIC_AGREEMENT * scale {
        return Err(Error::DisagreementBug {
            eigenspace: eigen_sum,
            bracket,
        });
    }
    Ok(bracket)
}

/// Norm of the difference between the finite-difference Borel gradient of
/// `f_H` at `k` and the induced field.
pub fn gradient_residual(h: &ChamberElement, spec: &MetricSpec, k: &Mat) -> Result<f64> {
    let n = spec.n();
    let basis = structure::subalgebra_basis(n, Subalgebra::NMinus);
    let d = basis.len();
    let delta = TOL.fd_step;
    let mut gram = DMatrix::<f64>::zeros(d, d);
    let mut rhs = nalgebra::DVector::<f64>::zeros(d);
    for (a, xa) in basis.iter().enumerate() {
        for (b, xb) in basis.iter().enumerate() {
            gram[(a, b)] = borel_metric(xa, xb, spec)?;
        }
        let z = skew_from_lower(xa);
        let up = k * linalg::expm(&(&z * delta));
        let down = k * linalg::expm(&(&z * -delta));
        rhs[a] = (height(&up, spec, h) - height(&down, spec, h)) / (2.0 * delta);
    }
    let coeffs = gram
        .cholesky()
        .ok_or_else(|| Error::IllConditioned("Borel metric is not positive definite".into()))?
        .solve(&rhs);
    let mut gradient = Mat::zeros(n, n);
    for (c, xa) in coeffs.iter().zip(&basis) {
        gradient += xa * *c;
    }
    let diff = skew_from_lower(&(gradient - induced_lower(h, k)));
    Ok((k * diff).norm())
}

/// Heights along the orbit of `exp(tH)` sampled with step 0.1.
pub fn height_profile(h: &ChamberElement, spec: &MetricSpec, k0: &Mat, horizon: f64) -> Result<Vec<f64>> {
    let flow = FlowSpec::continuous(&h.matrix())?;
    let traj = flow::trajectory(&flow, k0, horizon, None)?;
    Ok(traj.points.iter().map(|k| height(k, spec, h)).collect())
}

/// Whether `f_H` is nondecreasing along the hyperbolic orbit, up to
/// `MONOTONE_SLACK`.
pub fn monotonicity_check(h: &ChamberElement, spec: &MetricSpec, k0: &Mat, horizon: f64) -> Result<bool> {
    let values = height_profile(h, spec, k0, horizon)?;
    Ok(values.windows(2).all(|w| w[1] - w[0] >= -MONOTONE_SLACK))
}

// ---------------------------------------------------------------------------
// tangent splitting

/// Splitting of the tangent space along a Morse component, each direction
/// given by a Lie algebra element `Y` acting as `Y x`.
#[derive(Clone, Debug)]
pub struct TangentSplitting {
    pub base: Mat,
    pub tm: Vec<Mat>,
    pub v_minus: Vec<Mat>,
    pub v_plus: Vec<Mat>,
}

impl TangentSplitting {
    pub fn dimensions(&self) -> (usize, usize, usize) {
        (self.tm.len(), self.v_minus.len(), self.v_plus.len())
    }
}

fn vectorize(ms: &[Mat], n: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(n * n, ms.len());
    for (c, m) in ms.iter().enumerate() {
        out.set_column(c, &nalgebra::DVector::from_column_slice(m.as_slice()));
    }
    out
}

fn orthonormalize(ms: &[Mat], n: usize) -> DMatrix<f64> {
    if ms.is_empty() {
        return DMatrix::zeros(n * n, 0);
    }
    let v = vectorize(ms, n);
    let svd = v.svd(true, false);
    let u = svd.u.expect("u requested");
    let rank = svd.singular_values.iter().filter(|s| **s > 1e-12).count();
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    DMatrix::from_fn(n * n, rank, |r, c| u[(r, order[c])])
}

/// Orthonormal basis of the intersection of two subspaces, aligned with the
/// eigenvectors of `ad(H)` restricted to it.
fn intersect(a: &[Mat], b: &DMatrix<f64>, h: &Mat, n: usize) -> Vec<Mat> {
    let qa = orthonormalize(a, n);
    if qa.ncols() == 0 || b.ncols() == 0 {
        return Vec::new();
    }
    let cross = qa.transpose() * b;
    let svd = cross.svd(true, false);
    let u = svd.u.expect("u requested");
    let picked: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > INTERSECTION_COS)
        .collect();
    if picked.is_empty() {
        return Vec::new();
    }
    let w = DMatrix::from_fn(qa.ncols(), picked.len(), |r, c| u[(r, picked[c])]);
    let space = &qa * w;
    // ad(H) is self-adjoint for the Cartan inner product
    let d = space.ncols();
    let vecs: Vec<Mat> = (0..d)
        .map(|c| Mat::from_column_slice(n, n, space.column(c).as_slice()))
        .collect();
    let mut restricted = DMatrix::zeros(d, d);
    for (j, v) in vecs.iter().enumerate() {
        let image = linalg::commutator(h, v);
        for (i, w) in vecs.iter().enumerate() {
            restricted[(i, j)] = linalg::cartan_inner(w, &image);
        }
    }
    let sym = (&restricted + restricted.transpose()) * 0.5;
    let eigen = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eigen.eigenvalues[a].total_cmp(&eigen.eigenvalues[b]));
    order
        .iter()
        .map(|&c| {
            let mut m = Mat::zeros(n, n);
            for (i, v) in vecs.iter().enumerate() {
                m += v * eigen.eigenvectors[(i, c)];
            }
            m
        })
        .collect()
}

/// `TK_x = TM_x + V^-_x + V^+_x` at a point `x` of the fixed set of
/// `exp(H)`, via intersections with `g_x^perp = Ad(x) n^-`.
pub fn tangent_splitting(x: &Mat, h: &ChamberElement) -> Result<TangentSplitting> {
    let n = h.n();
    let p = project_to_fixed_set(x, h);
    if p.distance > TOL.fix {
        return Err(Error::NotOnComponent { distance: p.distance });
    }
    let perp: Vec<Mat> = structure::subalgebra_basis(n, Subalgebra::NMinus)
        .iter()
        .map(|y| x * y * x.transpose())
        .collect();
    let perp = orthonormalize(&perp, n);
    let hm = h.matrix();
    // roundoff outside each coordinate pattern would be amplified by Ad(h^t)
    let mask = |ms: Vec<Mat>, keep: &dyn Fn(usize, usize) -> bool| -> Vec<Mat> {
        ms.into_iter()
            .map(|m| Mat::from_fn(n, n, |i, j| if keep(i, j) { m[(i, j)] } else { 0.0 }))
            .collect()
    };
    let tm = mask(
        intersect(&structure::subalgebra_basis(n, Subalgebra::GH(h)), &perp, &hm, n),
        &|i, j| h.same_block(i, j),
    );
    let v_minus = mask(
        intersect(&structure::subalgebra_basis(n, Subalgebra::NMinusH(h)), &perp, &hm, n),
        &|i, j| i > j && !h.same_block(i, j),
    );
    let v_plus = mask(
        intersect(&structure::subalgebra_basis(n, Subalgebra::NPlusH(h)), &perp, &hm, n),
        &|i, j| i < j && !h.same_block(i, j),
    );
    let total = tm.len() + v_minus.len() + v_plus.len();
    if total != n * (n - 1) / 2 {
        return Err(Error::IllConditioned(format!(
            "tangent splitting has dimension {total}, expected {}",
            n * (n - 1) / 2
        )));
    }
    Ok(TangentSplitting {
        base: x.clone(),
        tm,
        v_minus,
        v_plus,
    })
}

// ---------------------------------------------------------------------------
// rates

#[derive(Clone, Debug, Serialize)]
pub struct Violation {
    pub bundle: String,
    pub index: usize,
    pub time: f64,
    pub observed: f64,
    pub bound: f64,
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RateReport {
    pub mu: f64,
    /// Largest fitted forward exponent on `V^-` (absent when `V^-` is zero).
    pub lambda_minus: Option<f64>,
    /// Smallest fitted backward expansion rate on `V^+`.
    pub lambda_plus: Option<f64>,
    /// Largest absolute fitted exponent on `TM`.
    pub nu: Option<f64>,
    pub c: f64,
    pub violations: Vec<Violation>,
}

impl RateReport {
    pub fn first_violation(&self) -> Option<Error> {
        self.violations.first().map(|v| Error::BoundViolated {
            bundle: v.bundle.clone(),
            index: v.index,
            time: v.time,
            observed: v.observed,
            bound: v.bound,
        })
    }
}

/// Operator-norm bound `p(t) = sum_k |t|^k / k! |ad(N)^k|` for `Ad(exp(tN))`.
fn unipotent_growth(nilpotent: &Mat) -> impl Fn(f64) -> f64 {
    let n = nilpotent.nrows();
    let dim = n * n;
    // ad(N) acting on column-major vectorized matrices
    let mut ad = DMatrix::<f64>::zeros(dim, dim);
    for c in 0..dim {
        let mut e = Mat::zeros(n, n);
        e.as_mut_slice()[c] = 1.0;
        let image = linalg::commutator(nilpotent, &e);
        ad.set_column(c, &nalgebra::DVector::from_column_slice(image.as_slice()));
    }
    let mut norms = vec![1.0];
    let mut power = DMatrix::<f64>::identity(dim, dim);
    for _ in 0..2 * n {
        power = &power * &ad;
        let s = power.clone().svd(false, false).singular_values.max();
        if s <= 1e-14 {
            break;
        }
        norms.push(s);
    }
    move |t: f64| {
        let mut term = 1.0;
        let mut total = 0.0;
        for (k, norm) in norms.iter().enumerate() {
            if k > 0 {
                term *= t.abs() / k as f64;
            }
            total += term * norm;
        }
        total
    }
}

fn fit_slope(samples: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .filter(|(t, v)| t.abs() >= FIT_START && *v > 0.0)
        .map(|(t, v)| (t.abs(), v.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let mv = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let cov: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - mv)).sum();
    let var: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    Some(cov / var)
}

/// `|Ad(g^t) Y| / |Y|` at `t = 0, dt, 2dt, ...` up to `horizon` (negative
/// direction when `backward`). The elliptic factor is an isometry, so only
/// `Ad(h^t) Ad(u^t)` is applied, with `Ad(h^t)` as an exact entrywise scaling.
fn norm_series(flow: &FlowSpec, y: &Mat, horizon: f64, backward: bool) -> Result<Vec<(f64, f64)>> {
    let dt = flow.default_step();
    let h = flow.chamber().entries();
    let y0 = y.norm();
    let steps = (horizon / dt + 1e-9).floor() as usize;
    let mut out = Vec::with_capacity(steps + 1);
    for i in 0..=steps {
        let t = if backward { -(i as f64) * dt } else { i as f64 * dt };
        let u = flow.unipotent_at(t);
        let mut image = &u * y * linalg::inverse(&u)?;
        for ((r, c), v) in image.iter_mut().enumerate().map(|(k, v)| ((k % y.nrows(), k / y.nrows()), v)) {
            *v *= ((h[r] - h[c]) * t).exp();
        }
        out.push((t, image.norm() / y0));
    }
    Ok(out)
}

/// Exponential envelopes of `Ad(g^t)` on the three bundles over `[0, T]`
/// (`[-T, T]` on `TM`), with constant `c = sup e^{-mu t/2} p(t)` over both
/// transverse and tangential envelopes.
pub fn rate_estimates(flow: &FlowSpec, splitting: &TangentSplitting, horizon: f64) -> Result<RateReport> {
    if !(horizon > 0.0 && horizon <= MAX_RATE_HORIZON) {
        return Err(Error::InvalidInput(format!("rate horizon must lie in (0, 20], got {horizon}")));
    }
    let mu = structure::mu(flow.chamber())?;
    let p = unipotent_growth(&flow.nilpotent);
    let mut c: f64 = 1.0;
    let mut t = 0.0;
    while t <= 400.0 {
        c = c.max((-mu * t / 2.0).exp() * p(t)).max((-mu * t / 4.0).exp() * p(t));
        t += 0.01;
    }
    let tol = 1.0 + 1e-9;
    let mut violations = Vec::new();
    let mut check = |bundle: &str, index: usize, series: &[(f64, f64)], rate: f64| {
        for &(t, v) in series {
            let bound = c * (rate * t.abs()).exp();
            if v > bound * tol {
                violations.push(Violation {
                    bundle: bundle.to_string(),
                    index,
                    time: t,
                    observed: v,
                    bound,
                });
            }
        }
    };
    let mut lambda_minus: Option<f64> = None;
    for (i, y) in splitting.v_minus.iter().enumerate() {
        let s = norm_series(flow, y, horizon, false)?;
        check("V-", i, &s, -mu / 2.0);
        if let Some(slope) = fit_slope(&s) {
            lambda_minus = Some(lambda_minus.map_or(slope, |m| m.max(slope)));
        }
    }
    let mut lambda_plus: Option<f64> = None;
    for (i, y) in splitting.v_plus.iter().enumerate() {
        let s = norm_series(flow, y, horizon, true)?;
        check("V+", i, &s, -mu / 2.0);
        if let Some(slope) = fit_slope(&s) {
            lambda_plus = Some(lambda_plus.map_or(-slope, |m| m.min(-slope)));
        }
    }
    let mut nu: Option<f64> = None;
    for (i, y) in splitting.tm.iter().enumerate() {
        for backward in [false, true] {
            let s = norm_series(flow, y, horizon, backward)?;
            check("TM", i, &s, mu / 4.0);
            if let Some(slope) = fit_slope(&s) {
                nu = Some(nu.map_or(slope.abs(), |m| m.max(slope.abs())));
            }
        }
    }
    if flow.mode == TimeMode::Discrete && horizon < FIT_START + 1.0 {
        // too few integer samples in the fit window
        lambda_minus = None;
        lambda_plus = None;
        nu = None;
    }
    Ok(RateReport {
        mu,
        lambda_minus,
        lambda_plus,
        nu,
        c,
        violations,
    })
}
