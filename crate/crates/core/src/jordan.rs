//! Jordan decomposition of translations and frame adaptation.
//!
//! The semisimple part comes from the clustered spectrum: on each generalized
//! eigenspace with eigenvalue `lambda`, the hyperbolic factor acts by
//! `|lambda|` and the elliptic factor by `lambda / |lambda|`. Adapting the
//! frame means conjugating so that the hyperbolic factor is `exp(H)` with `H`
//! diagonal nonincreasing and the elliptic factor is orthogonal. The
//! orthogonalizing change of basis is the Cholesky factor of a positive form
//! preserved by the elliptic factor.

use std::fs;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, TOL};
use crate::structure::{ChamberElement, SignedPermutation};

/// Pairwise commutation, nilpotency and product checks.
const TRIPLE_TOL: f64 = 1e-9;
/// Allowed `|e^T e - I|` after block orthogonalization.
const ADAPT_TOL: f64 = 1e-7;

/// `g = e h u` with commuting elliptic, hyperbolic and unipotent factors.
///
/// The factors are expressed in the frame reached by `conjugator`: if `g` is
/// the input element then `conjugator * g * conjugator^{-1} = e h u`.
#[derive(Clone, Debug)]
pub struct JordanTriple {
    pub e: Mat,
    pub h: Mat,
    pub u: Mat,
    /// `H` with `h` conjugate to `exp(H)`.
    pub chamber: ChamberElement,
    pub conjugator: Mat,
}

impl JordanTriple {
    pub fn n(&self) -> usize {
        self.e.nrows()
    }

    pub fn product(&self) -> Mat {
        &self.e * &self.h * &self.u
    }

    /// Whether `h = exp(H)` is diagonal and `e` orthogonal.
    pub fn is_adapted(&self) -> bool {
        let target = linalg::diag(&self.chamber.entries().iter().map(|v| v.exp()).collect::<Vec<_>>());
        let scale = self.h.norm().max(1.0);
        linalg::max_abs_diff(&self.h, &target) <= TRIPLE_TOL * scale
            && linalg::orthogonality_residual(&self.e) <= TRIPLE_TOL
    }

    /// Checks the structural invariants against `g` (in this triple's frame).
    pub fn check(&self, g: &Mat) -> Result<()> {
        let n = self.n();
        let scale = g.norm().max(1.0);
        let id = Mat::identity(n, n);
        let pairs = [(&self.e, &self.h), (&self.e, &self.u), (&self.h, &self.u)];
        for (a, b) in pairs {
            let c = linalg::max_abs(&linalg::commutator(a, b));
            if c > TRIPLE_TOL * scale * scale {
                return Err(Error::IllConditioned(format!("Jordan factors fail to commute ({c:e})")));
            }
        }
        let nil = linalg::powi(&(&self.u - &id), n as i64)?;
        if linalg::max_abs(&nil) > TRIPLE_TOL * scale.powi(n as i32) {
            return Err(Error::IllConditioned("unipotent factor is not unipotent".into()));
        }
        let p = linalg::max_abs_diff(&self.product(), g);
        if p > TRIPLE_TOL * scale {
            return Err(Error::IllConditioned(format!("Jordan product residual {p:e}")));
        }
        Ok(())
    }
}

fn chamber_from_levels(levels: &mut [f64]) -> Result<ChamberElement> {
    levels.sort_by(|a, b| b.total_cmp(a));
    let trace: f64 = levels.iter().sum();
    let n = levels.len() as f64;
    levels.iter_mut().for_each(|v| *v -= trace / n);
    ChamberElement::new(levels)
}

/// Nearest chamber entry, used to snap per-cluster values to level sets.
fn nearest_level(chamber: &ChamberElement, value: f64) -> f64 {
    *chamber
        .entries()
        .iter()
        .min_by(|a, b| (*a - value).abs().total_cmp(&(*b - value).abs()))
        .expect("nonempty")
}

/// Multiplicative Jordan decomposition in the input frame (`conjugator = I`).
pub fn jordan_multiplicative(g: &Mat) -> Result<JordanTriple> {
    linalg::check_group_element(g, &TOL)?;
    let n = g.nrows();
    let spectrum = linalg::eig(g)?;
    let mut levels: Vec<f64> = spectrum
        .clusters
        .iter()
        .flat_map(|c| std::iter::repeat_n(c.value.norm().ln(), c.multiplicity))
        .collect();
    let chamber = chamber_from_levels(&mut levels)?;
    let h = spectrum.map(|z| Complex64::new(nearest_level(&chamber, z.norm().ln()).exp(), 0.0))?;
    let e = spectrum.map(|z| z / z.norm())?;
    let u = linalg::inverse(&(&e * &h))? * g;
    let triple = JordanTriple {
        e,
        h,
        u,
        chamber,
        conjugator: Mat::identity(n, n),
    };
    triple.check(g)?;
    Ok(triple)
}

/// Additive Jordan parts `X = E + H + N`.
#[derive(Clone, Debug)]
pub struct AdditiveParts {
    pub e: Mat,
    pub h: Mat,
    pub n: Mat,
}

/// Additive Jordan decomposition: imaginary semisimple, real semisimple and
/// nilpotent parts, pairwise commuting.
pub fn jordan_additive(x: &Mat) -> Result<AdditiveParts> {
    let spectrum = linalg::eig(x)?;
    let e = spectrum.map(|z| Complex64::new(0.0, z.im))?;
    let h = spectrum.map(|z| Complex64::new(z.re, 0.0))?;
    let n = x - &e - &h;
    let scale = x.norm().max(1.0);
    for (a, b) in [(&e, &h), (&e, &n), (&h, &n)] {
        let c = linalg::max_abs(&linalg::commutator(a, b));
        if c > TRIPLE_TOL * scale * scale {
            return Err(Error::IllConditioned(format!("additive parts fail to commute ({c:e})")));
        }
    }
    Ok(AdditiveParts { e, h, n })
}

/// Positive definite `M` with `a^T M a = M` (or `a^T M + M a = 0`) for a
/// semisimple `a` with unimodular (or imaginary) spectrum.
fn invariant_form(a: &Mat) -> Result<Mat> {
    let m = a.nrows();
    if m == 1 {
        return Ok(Mat::identity(1, 1));
    }
    let spectrum = linalg::eig(a)?;
    let v = spectrum.basis();
    let w = v * v.adjoint();
    let w_inv = w
        .try_inverse()
        .ok_or_else(|| Error::IllConditioned("singular elliptic eigenbasis".into()))?;
    let form = w_inv.map(|z| z.re);
    Ok((&form + form.transpose()) * 0.5)
}

/// Change of basis `p` (det 1) such that `p^{-1} hyp p` is diagonal with the
/// chamber's level values and `p^{-1} ell p` preserves the standard form
/// blockwise.
fn adapted_basis(chamber: &ChamberElement, hyp: &Mat, hyp_values: &[f64], ell: &Mat) -> Result<Mat> {
    let n = chamber.n();
    let mut p = Mat::zeros(n, n);
    for (b, block) in chamber.blocks().iter().enumerate() {
        let lambda = hyp_values[b];
        let shifted = hyp - Mat::identity(n, n) * lambda;
        let (space, sv) = linalg::real_null_space(&shifted, block.len());
        let worst = sv[block.len() - 1];
        if worst > ADAPT_TOL * hyp.norm().max(1.0) {
            return Err(Error::FrameAdaptationFailed { residual: worst });
        }
        p.columns_mut(block.start, block.len()).copy_from(&space);
    }
    let p_inv = linalg::inverse(&p)?;
    let local = &p_inv * ell * &p;
    for block in chamber.blocks() {
        let m = block.len();
        let sub = local.view((block.start, block.start), (m, m)).into_owned();
        let form = invariant_form(&sub)?;
        let chol = form
            .cholesky()
            .ok_or(Error::FrameAdaptationFailed { residual: f64::INFINITY })?;
        let l_inv_t = chol
            .l()
            .try_inverse()
            .ok_or(Error::FrameAdaptationFailed { residual: f64::INFINITY })?
            .transpose();
        let cols = p.columns(block.start, m) * l_inv_t;
        p.columns_mut(block.start, m).copy_from(&cols);
    }
    let det = p.determinant();
    if det < 0.0 {
        p.column_mut(0).neg_mut();
    }
    let det = p.determinant().abs();
    Ok(p / det.powf(1.0 / n as f64))
}

/// Zeroes entries outside the diagonal blocks of `chamber`.
fn block_part(m: &Mat, chamber: &ChamberElement) -> Mat {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| {
        if chamber.same_block(i, j) {
            m[(i, j)]
        } else {
            0.0
        }
    })
}

fn off_block(m: &Mat, chamber: &ChamberElement) -> f64 {
    linalg::max_abs(&(m - block_part(m, chamber)))
}

/// Conjugates a triple so that `h = exp(H)` is diagonal nonincreasing and `e`
/// is orthogonal. Already adapted input keeps its frame.
pub fn adapt_frame(triple: &JordanTriple) -> Result<JordanTriple> {
    let chamber = triple.chamber.clone();
    let exp_h: Vec<f64> = chamber.entries().iter().map(|v| v.exp()).collect();
    let g = triple.product();
    if triple.is_adapted() {
        let h = linalg::diag(&exp_h);
        let e = linalg::nearest_orthogonal(&block_part(&triple.e, &chamber));
        let u = linalg::inverse(&(&e * &h))? * &g;
        let out = JordanTriple { e, h, u, chamber, conjugator: triple.conjugator.clone() };
        out.check(&g)?;
        return Ok(out);
    }
    let level_values: Vec<f64> = chamber.blocks().iter().map(|b| exp_h[b.start]).collect();
    let p = adapted_basis(&chamber, &triple.h, &level_values, &triple.e)?;
    let q = linalg::inverse(&p)?;
    let local_g = &q * &g * &p;
    let local_e = &q * &triple.e * &p;
    let residual = linalg::orthogonality_residual(&local_e).max(off_block(&local_e, &chamber));
    if residual > ADAPT_TOL {
        return Err(Error::FrameAdaptationFailed { residual });
    }
    let e = linalg::nearest_orthogonal(&block_part(&local_e, &chamber));
    let h = linalg::diag(&exp_h);
    let u = linalg::inverse(&(&e * &h))? * &local_g;
    let out = JordanTriple {
        e,
        h,
        u,
        chamber,
        conjugator: &q * &triple.conjugator,
    };
    out.check(&local_g)?;
    Ok(out)
}

/// Additive decomposition in an adapted frame: `H` diagonal nonincreasing,
/// `E` skew symmetric. Returns the parts and the conjugator.
pub fn adapt_additive(x: &Mat) -> Result<(AdditiveParts, ChamberElement, Mat)> {
    let n = x.nrows();
    let parts = jordan_additive(x)?;
    let spectrum = linalg::eig(&parts.h)?;
    let mut levels: Vec<f64> = spectrum
        .clusters
        .iter()
        .flat_map(|c| std::iter::repeat_n(c.value.re, c.multiplicity))
        .collect();
    let chamber = chamber_from_levels(&mut levels)?;
    let target = chamber.matrix();
    let scale = x.norm().max(1.0);
    let already = linalg::max_abs_diff(&parts.h, &target) <= TRIPLE_TOL * scale
        && linalg::max_abs(&(&parts.e + parts.e.transpose())) <= TRIPLE_TOL * scale;
    let (p, q) = if already {
        (Mat::identity(n, n), Mat::identity(n, n))
    } else {
        let values: Vec<f64> = chamber.blocks().iter().map(|b| chamber.entries()[b.start]).collect();
        let p = adapted_basis(&chamber, &parts.h, &values, &parts.e)?;
        let q = linalg::inverse(&p)?;
        (p, q)
    };
    let local_x = &q * x * &p;
    let local_e = &q * &parts.e * &p;
    let residual = linalg::max_abs(&(&local_e + local_e.transpose())).max(off_block(&local_e, &chamber));
    if residual > ADAPT_TOL * scale {
        return Err(Error::FrameAdaptationFailed { residual });
    }
    let e = block_part(&((&local_e - local_e.transpose()) * 0.5), &chamber);
    let h = target;
    let nil = &local_x - &e - &h;
    Ok((AdditiveParts { e, h, n: nil }, chamber, q))
}

/// Diagonal sign matrix recording the sign of each block determinant of `g`
/// over the level sets of `H` (sign placed at the first index of the block).
pub fn component_sign(g: &Mat, chamber: &ChamberElement) -> Result<SignedPermutation> {
    let hm = chamber.matrix();
    let scale = g.norm().max(1.0) * hm.norm().max(1.0);
    let residual = linalg::max_abs(&linalg::commutator(g, &hm));
    if residual > TOL.fix * scale {
        return Err(Error::NotInCentralizer { residual });
    }
    let mut negative = vec![false; chamber.n()];
    for block in chamber.blocks() {
        let m = block.len();
        let det = g.view((block.start, block.start), (m, m)).determinant();
        negative[block.start] = det < 0.0;
    }
    SignedPermutation::diagonal(&negative)
}

// ---------------------------------------------------------------------------
// flows

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeMode {
    Discrete,
    Continuous,
}

/// A translation flow with its adapted Jordan data.
///
/// Everything except `generator` lives in the adapted frame; simulations run
/// there.
#[derive(Clone, Debug)]
pub struct FlowSpec {
    pub mode: TimeMode,
    /// As supplied, in the caller's frame.
    pub generator: Mat,
    /// `q g q^{-1}` or `q X q^{-1}`.
    pub adapted_generator: Mat,
    pub triple: JordanTriple,
    /// Continuous flows only.
    pub additive: Option<AdditiveParts>,
    /// `N` with `u^t = exp(t N)`.
    pub nilpotent: Mat,
    /// Rotation angles of `e` per unit time, one per eigenvalue.
    pub frequencies: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JordanFile {
    pub e: Vec<Vec<f64>>,
    pub h: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
}

/// On-disk flow description.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSpecFile {
    pub n: usize,
    pub time: TimeMode,
    pub generator: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jordan: Option<JordanFile>,
}

impl FlowSpec {
    /// Iterates of `g`.
    pub fn discrete(g: &Mat) -> Result<Self> {
        let triple = adapt_frame(&jordan_multiplicative(g)?)?;
        Self::from_adapted_discrete(g, triple)
    }

    /// Discrete flow with caller-supplied Jordan factors (checked).
    pub fn discrete_with_parts(g: &Mat, e: &Mat, h: &Mat, u: &Mat) -> Result<Self> {
        linalg::check_group_element(g, &TOL)?;
        let spectrum = linalg::eig(h)?;
        if spectrum.clusters.iter().any(|c| !c.is_real() || c.value.re <= 0.0) {
            return Err(Error::InvalidInput("hyperbolic factor must have positive spectrum".into()));
        }
        let mut levels: Vec<f64> = spectrum
            .eigenvalues()
            .iter()
            .map(|z| z.re.ln())
            .collect();
        let chamber = chamber_from_levels(&mut levels)?;
        let n = g.nrows();
        let supplied = JordanTriple {
            e: e.clone(),
            h: h.clone(),
            u: u.clone(),
            chamber,
            conjugator: Mat::identity(n, n),
        };
        supplied.check(g)?;
        let triple = adapt_frame(&supplied)?;
        Self::from_adapted_discrete(g, triple)
    }

    fn from_adapted_discrete(g: &Mat, triple: JordanTriple) -> Result<Self> {
        let q = &triple.conjugator;
        let adapted_generator = q * g * linalg::inverse(q)?;
        let nilpotent = linalg::log_unipotent(&triple.u);
        let frequencies = linalg::eig(&triple.e)?
            .eigenvalues()
            .iter()
            .map(|z| z.im.atan2(z.re))
            .collect();
        Ok(FlowSpec {
            mode: TimeMode::Discrete,
            generator: g.clone(),
            adapted_generator,
            triple,
            additive: None,
            nilpotent,
            frequencies,
        })
    }

    /// `exp(t X)` for traceless `X`.
    pub fn continuous(x: &Mat) -> Result<Self> {
        let n = linalg::check_dimension(x)?;
        let scale = x.norm().max(1.0);
        if x.trace().abs() > TOL.det * scale {
            return Err(Error::InvalidInput(format!("generator has trace {:e}", x.trace())));
        }
        let (parts, chamber, q) = adapt_additive(x)?;
        let adapted_generator = &parts.e + &parts.h + &parts.n;
        let e = linalg::expm(&parts.e);
        let h = linalg::diag(&chamber.entries().iter().map(|v| v.exp()).collect::<Vec<_>>());
        let u = linalg::expm(&parts.n);
        let triple = JordanTriple { e, h, u, chamber, conjugator: q };
        triple.check(&linalg::expm(&adapted_generator))?;
        let frequencies = linalg::eig(&parts.e)?.eigenvalues().iter().map(|z| z.im).collect();
        debug_assert_eq!(triple.n(), n);
        Ok(FlowSpec {
            mode: TimeMode::Continuous,
            generator: x.clone(),
            adapted_generator,
            nilpotent: parts.n.clone(),
            additive: Some(parts),
            triple,
            frequencies,
        })
    }

    pub fn from_file_spec(spec: &FlowSpecFile) -> Result<Self> {
        let g = linalg::from_rows(&spec.generator)?;
        if g.nrows() != spec.n || g.ncols() != spec.n {
            return Err(Error::InvalidInput(format!(
                "generator is {}x{}, expected n = {}",
                g.nrows(),
                g.ncols(),
                spec.n
            )));
        }
        match (spec.time, &spec.jordan) {
            (TimeMode::Discrete, None) => Self::discrete(&g),
            (TimeMode::Discrete, Some(j)) => Self::discrete_with_parts(
                &g,
                &linalg::from_rows(&j.e)?,
                &linalg::from_rows(&j.h)?,
                &linalg::from_rows(&j.u)?,
            ),
            (TimeMode::Continuous, jordan) => {
                let flow = Self::continuous(&g)?;
                if let Some(j) = jordan {
                    // supplied factors describe the time-one map
                    let product = linalg::from_rows(&j.e)? * linalg::from_rows(&j.h)? * linalg::from_rows(&j.u)?;
                    let target = linalg::expm(&g);
                    let r = linalg::max_abs_diff(&product, &target);
                    if r > TRIPLE_TOL * target.norm().max(1.0) {
                        return Err(Error::InvalidInput(format!(
                            "supplied Jordan factors do not multiply to exp(X) (residual {r:e})"
                        )));
                    }
                }
                Ok(flow)
            }
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: FlowSpecFile = serde_json::from_str(text)?;
        Self::from_file_spec(&spec)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn n(&self) -> usize {
        self.generator.nrows()
    }

    pub fn chamber(&self) -> &ChamberElement {
        &self.triple.chamber
    }

    pub fn conjugator(&self) -> &Mat {
        &self.triple.conjugator
    }

    /// The flow at time `t` in the adapted frame. Discrete flows require
    /// integer `t`.
    pub fn at_time(&self, t: f64) -> Result<Mat> {
        match self.mode {
            TimeMode::Discrete => {
                if t.fract() != 0.0 {
                    return Err(Error::InvalidInput(format!("discrete flow at non-integer time {t}")));
                }
                linalg::powi(&self.adapted_generator, t as i64)
            }
            TimeMode::Continuous => Ok(linalg::expm(&(&self.adapted_generator * t))),
        }
    }

    /// Native step: one iterate, or the given `dt` for continuous flows.
    pub fn default_step(&self) -> f64 {
        match self.mode {
            TimeMode::Discrete => 1.0,
            TimeMode::Continuous => 0.1,
        }
    }

    pub fn hyperbolic_at(&self, t: f64) -> Mat {
        linalg::diag(&self.chamber().entries().iter().map(|v| (v * t).exp()).collect::<Vec<_>>())
    }

    pub fn unipotent_at(&self, t: f64) -> Mat {
        linalg::expm(&(&self.nilpotent * t))
    }

    pub fn elliptic_at(&self, t: f64) -> Result<Mat> {
        match (&self.additive, self.mode) {
            (Some(parts), TimeMode::Continuous) => Ok(linalg::expm(&(&parts.e * t))),
            _ => {
                if t.fract() != 0.0 {
                    return Err(Error::InvalidInput(format!("discrete flow at non-integer time {t}")));
                }
                linalg::powi(&self.triple.e, t as i64)
            }
        }
    }

    /// `|e^s - I|_F` from the rotation angles, exact for orthogonal `e`.
    pub fn elliptic_return(&self, s: f64) -> f64 {
        self.frequencies
            .iter()
            .map(|w| {
                let a = w * s;
                (a.cos() - 1.0).powi(2) + a.sin().powi(2)
            })
            .sum::<f64>()
            .sqrt()
    }

    /// `c_g`: identity for continuous flows (connected to the identity).
    pub fn component_sign(&self) -> Result<SignedPermutation> {
        match self.mode {
            TimeMode::Continuous => Ok(SignedPermutation::identity(self.n())),
            TimeMode::Discrete => component_sign(&self.adapted_generator, self.chamber()),
        }
    }

    pub fn has_unipotent_part(&self) -> bool {
        linalg::max_abs(&self.nilpotent) > TOL.fix
    }

    pub fn to_file_spec(&self) -> FlowSpecFile {
        FlowSpecFile {
            n: self.n(),
            time: self.mode,
            generator: linalg::to_rows(&self.generator),
            jordan: None,
        }
    }
}
