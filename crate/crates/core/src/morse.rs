//! Fixed components, minimal Morse components and their basins.
//!
//! Components of the fixed set of `exp(H)` are `K_H^0 u` for `u` ranging over
//! `U_H \ U`. For a discrete flow whose generator has block-determinant signs
//! `c_g`, the generator swaps `K_H^0 u` and `K_H^0 c_g u`, so the minimal
//! Morse components are indexed by cosets of `U_H^g = U_H + c_g U_H`.

use std::collections::BTreeMap;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::{self, Direction};
use crate::jordan::FlowSpec;
use crate::linalg::{self, Mat, TOL};
use crate::structure::{
    self, principal_involution, ChamberElement, CosetLabel, SignedPermutation, Subalgebra,
    SubgroupTag,
};

/// Tolerance for limit detection during basin classification.
pub const LIMIT_TOL: f64 = 1e-6;
/// Retries multiply the horizon by this factor.
pub const RETRY_FACTOR: f64 = 4.0;

/// One minimal Morse component.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct MorseLabel {
    pub coset: CosetLabel,
    pub attractor: bool,
    pub repeller: bool,
    /// Number of connected pieces: 2 when the generator swaps two fixed
    /// components.
    pub component_count: u8,
    /// `dim K_H^0`.
    pub dimension: usize,
}

/// The `U_H`-coset of the fixed component containing `k`, if any.
pub fn fixed_component_of(k: &Mat, chamber: &ChamberElement) -> Option<CosetLabel> {
    let p = flow::project_to_fixed_set(k, chamber);
    (p.distance <= TOL.fix).then_some(CosetLabel {
        representative: p.representative,
        tag: SubgroupTag::UH,
    })
}

/// Components of the fixed set of `exp(H)`, one per coset in `U_H \ U`.
pub fn fixed_set(chamber: &ChamberElement) -> Result<Vec<CosetLabel>> {
    if chamber.is_zero() {
        return Err(Error::ZeroElement);
    }
    let uh = structure::enumerate_uh(chamber);
    Ok(structure::right_cosets(&uh, &structure::enumerate_u(chamber.n()), SubgroupTag::UH))
}

/// Everything needed to name Morse components of one flow.
#[derive(Clone, Debug)]
pub struct MorseAnalysis {
    pub chamber: ChamberElement,
    pub mu: f64,
    pub c_g: SignedPermutation,
    uh: Vec<SignedPermutation>,
    labels: Vec<MorseLabel>,
}

impl MorseAnalysis {
    pub fn new(flow: &FlowSpec) -> Result<Self> {
        let chamber = flow.chamber().clone();
        let mu = structure::mu(&chamber)?;
        let c_g = flow.component_sign()?;
        let uh = structure::enumerate_uh(&chamber);
        let n = chamber.n();
        let u_minus = principal_involution(n);
        let c = structure::enumerate_c(n);
        let swaps = !uh.contains(&c_g);
        let mut cosets: BTreeMap<SignedPermutation, (bool, bool)> = BTreeMap::new();
        for u in structure::enumerate_u(n) {
            let rep = Self::rep_in(&uh, &c_g, &u);
            let entry = cosets.entry(rep).or_insert((false, false));
            if u.is_diagonal() {
                entry.0 = true;
            }
            if c.iter().any(|ci| ci.compose(&u_minus) == u) {
                entry.1 = true;
            }
        }
        let dimension = chamber.centralizer_dimension();
        let labels = cosets
            .into_iter()
            .map(|(representative, (attractor, repeller))| MorseLabel {
                coset: CosetLabel {
                    representative,
                    tag: SubgroupTag::UHg,
                },
                attractor,
                repeller,
                component_count: if swaps { 2 } else { 1 },
                dimension,
            })
            .collect();
        Ok(MorseAnalysis {
            chamber,
            mu,
            c_g,
            uh,
            labels,
        })
    }

    fn rep_in(uh: &[SignedPermutation], c_g: &SignedPermutation, u: &SignedPermutation) -> SignedPermutation {
        let a = structure::coset_label(uh, u, SubgroupTag::UH).representative;
        let b = structure::coset_label(uh, &c_g.compose(u), SubgroupTag::UH).representative;
        a.min(b)
    }

    pub fn labels(&self) -> &[MorseLabel] {
        &self.labels
    }

    pub fn u_h(&self) -> &[SignedPermutation] {
        &self.uh
    }

    /// Label of the Morse component containing `fix(H, u)`.
    pub fn label_of(&self, u: &SignedPermutation) -> MorseLabel {
        let rep = Self::rep_in(&self.uh, &self.c_g, u);
        *self
            .labels
            .iter()
            .find(|l| l.coset.representative == rep)
            .expect("every element of U lies in some coset")
    }

    /// Morse label of a point of the fixed set, if it is one.
    pub fn label_of_point(&self, k: &Mat) -> Option<MorseLabel> {
        fixed_component_of(k, &self.chamber).map(|c| self.label_of(&c.representative))
    }

    /// Deterministic sample points `l u` of each component: `l` runs over a
    /// 24-step rotation grid in two-dimensional blocks and over block signed
    /// permutations in larger ones.
    pub fn component_samples(&self, label: &MorseLabel) -> Vec<Mat> {
        let n = self.chamber.n();
        let mut ls = vec![Mat::identity(n, n)];
        for block in self.chamber.blocks() {
            let m = block.len();
            let locals: Vec<Mat> = match m {
                1 => vec![Mat::identity(1, 1)],
                2 => (0..24)
                    .map(|j| {
                        let a = j as f64 * std::f64::consts::PI / 12.0;
                        Mat::from_row_slice(2, 2, &[a.cos(), -a.sin(), a.sin(), a.cos()])
                    })
                    .collect(),
                _ => structure::enumerate_u(m).iter().map(|p| p.matrix()).collect(),
            };
            let mut next = Vec::with_capacity(ls.len() * locals.len());
            for l in &ls {
                for local in &locals {
                    let mut out = l.clone();
                    out.view_mut((block.start, block.start), (m, m)).copy_from(local);
                    next.push(out);
                }
            }
            ls = next;
        }
        let mut members = vec![label.coset.representative];
        if label.component_count == 2 {
            members.push(self.c_g.compose(&label.coset.representative));
        }
        members
            .iter()
            .flat_map(|u| ls.iter().map(move |l| l * u.matrix()))
            .collect()
    }
}

/// Minimal Morse components of the flow.
pub fn morse_components(flow: &FlowSpec) -> Result<Vec<MorseLabel>> {
    Ok(MorseAnalysis::new(flow)?.labels)
}

/// Forward and backward limit components of a point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BasinLabels {
    pub forward: MorseLabel,
    pub backward: MorseLabel,
    /// Whether either direction needed the enlarged horizon.
    pub retried: bool,
}

fn limit_label(
    analysis: &MorseAnalysis,
    flow: &FlowSpec,
    k: &Mat,
    horizon: f64,
    direction: Direction,
) -> Result<(MorseLabel, bool)> {
    match flow::omega_limit(flow, k, LIMIT_TOL, horizon, direction) {
        Ok(lim) => Ok((analysis.label_of(&lim.representative), false)),
        Err(Error::NotConverged { .. }) => {
            let lim = flow::omega_limit(flow, k, LIMIT_TOL, RETRY_FACTOR * horizon, direction)?;
            Ok((analysis.label_of(&lim.representative), true))
        }
        Err(e) => Err(e),
    }
}

/// Classifies `k` by its forward and backward limits, retrying once with
/// `RETRY_FACTOR` times the horizon.
pub fn classify_basin_with(
    analysis: &MorseAnalysis,
    flow: &FlowSpec,
    k: &Mat,
    horizon: f64,
) -> Result<BasinLabels> {
    let (forward, r1) = limit_label(analysis, flow, k, horizon, Direction::Forward)?;
    let (backward, r2) = limit_label(analysis, flow, k, horizon, Direction::Backward)?;
    Ok(BasinLabels {
        forward,
        backward,
        retried: r1 || r2,
    })
}

pub fn classify_basin(flow: &FlowSpec, k: &Mat) -> Result<BasinLabels> {
    let analysis = MorseAnalysis::new(flow)?;
    classify_basin_with(&analysis, flow, k, flow::DEFAULT_MAX_TIME)
}

/// Random element of `K_H^0`: exponential of a skew block matrix with
/// uniform coefficients in `[-pi, pi]`.
pub fn random_centralizer_element<R: Rng + ?Sized>(chamber: &ChamberElement, rng: &mut R) -> Mat {
    let n = chamber.n();
    let mut x = Mat::zeros(n, n);
    for b in structure::subalgebra_basis(n, Subalgebra::KH(chamber)) {
        x += b * rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    }
    linalg::expm(&x)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Manifold {
    Stable,
    Unstable,
}

/// Points `kappa(exp(Y) l u)` with `Y` in `n^-_H` (stable) or `n^+_H`
/// (unstable), coefficients uniform in `[-1, 1]`, and `l` random in `K_H^0`.
pub fn manifold_sample<R: Rng + ?Sized>(
    label: &MorseLabel,
    count: usize,
    chamber: &ChamberElement,
    which: Manifold,
    rng: &mut R,
) -> Result<Vec<Mat>> {
    let n = chamber.n();
    let basis = match which {
        Manifold::Stable => structure::subalgebra_basis(n, Subalgebra::NMinusH(chamber)),
        Manifold::Unstable => structure::subalgebra_basis(n, Subalgebra::NPlusH(chamber)),
    };
    let u = label.coset.representative.matrix();
    (0..count)
        .map(|_| {
            let mut y = Mat::zeros(n, n);
            for b in &basis {
                y += b * rng.random_range(-1.0..=1.0);
            }
            let l = random_centralizer_element(chamber, rng);
            flow::act(&linalg::expm(&y), &(l * &u))
        })
        .collect()
}

pub fn stable_manifold_sample<R: Rng + ?Sized>(
    label: &MorseLabel,
    count: usize,
    flow: &FlowSpec,
    rng: &mut R,
) -> Result<Vec<Mat>> {
    manifold_sample(label, count, flow.chamber(), Manifold::Stable, rng)
}

// ---------------------------------------------------------------------------
// report

#[derive(Clone, Debug, Serialize)]
pub struct CosetEntry {
    pub representative: Vec<Vec<i8>>,
    pub attractor: bool,
    pub repeller: bool,
    pub components: u8,
    pub dimension: usize,
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct MorseReport {
    #[serde(rename = "H")]
    pub h: Vec<f64>,
    pub mu: f64,
    pub cosets: Vec<CosetEntry>,
    pub recurrent_points: Vec<Vec<Vec<f64>>>,
}

/// Recurrent points among the deterministic component samples.
pub fn recurrent_samples(analysis: &MorseAnalysis, flow: &FlowSpec) -> Result<Vec<Mat>> {
    let mut out = Vec::new();
    for label in analysis.labels() {
        for k in analysis.component_samples(label) {
            if flow::is_recurrent(flow, &k)? {
                out.push(k);
            }
        }
    }
    Ok(out)
}

pub fn morse_report(flow: &FlowSpec) -> Result<MorseReport> {
    let analysis = MorseAnalysis::new(flow)?;
    let cosets = analysis
        .labels()
        .iter()
        .map(|l| CosetEntry {
            representative: l.coset.representative.rows(),
            attractor: l.attractor,
            repeller: l.repeller,
            components: l.component_count,
            dimension: l.dimension,
        })
        .collect();
    let recurrent_points = recurrent_samples(&analysis, flow)?
        .iter()
        .map(|k| linalg::to_rows(&k.map(|v| if v == 0.0 { 0.0 } else { v })))
        .collect();
    Ok(MorseReport {
        h: analysis.chamber.entries().to_vec(),
        mu: analysis.mu,
        cosets,
        recurrent_points,
    })
}
