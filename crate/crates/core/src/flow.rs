//! The induced action `k -> kappa(g k)` on `SO(n)`, trajectories, limit sets,
//! recurrence and explicit chains.
//!
//! Orbits are always advanced one step at a time with a fixed step matrix;
//! `kappa(g^t k)` is never formed for large `t`, since the hyperbolic factor
//! would amplify roundoff off the attracting components.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jordan::{FlowSpec, TimeMode};
use crate::linalg::{self, Mat, TOL};
use crate::structure::{ChamberElement, SignedPermutation};

/// Stabilization window for limit detection.
pub const WINDOW: usize = 10;
pub const DEFAULT_MAX_TIME: f64 = 1e3;
/// Upper bound on chain jump times.
pub const CHAIN_TIME_CAP: f64 = 1e5;

/// `kappa(g k)`.
pub fn act(g: &Mat, k: &Mat) -> Result<Mat> {
    linalg::kappa(&(g * k))
}

/// Bi-invariant distance on `SO(n)`.
pub fn distance(a: &Mat, b: &Mat) -> f64 {
    linalg::distance(a, b)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// Step matrix `g^{+-dt}` in the adapted frame.
fn step_matrix(flow: &FlowSpec, dt: f64, direction: Direction) -> Result<Mat> {
    if !(dt > 0.0) {
        return Err(Error::InvalidInput(format!("step must be positive, got {dt}")));
    }
    if flow.mode == TimeMode::Discrete && dt.fract() != 0.0 {
        return Err(Error::InvalidInput(format!("discrete step must be an integer, got {dt}")));
    }
    let signed = match direction {
        Direction::Forward => dt,
        Direction::Backward => -dt,
    };
    flow.at_time(signed)
}

// ---------------------------------------------------------------------------
// trajectories

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub step: f64,
    pub times: Vec<f64>,
    pub points: Vec<Mat>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn last(&self) -> &Mat {
        self.points.last().expect("trajectory holds the initial point")
    }

    /// `time,k00,k01,...` with row-major entries.
    pub fn to_csv(&self) -> String {
        let n = self.points.first().map_or(0, |k| k.nrows());
        let mut out = String::from("time");
        for i in 0..n {
            for j in 0..n {
                write!(out, ",k{i}{j}").unwrap();
            }
        }
        out.push('\n');
        for (t, k) in self.times.iter().zip(&self.points) {
            write!(out, "{t}").unwrap();
            for i in 0..n {
                for j in 0..n {
                    write!(out, ",{:.17e}", k[(i, j)]).unwrap();
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Samples the orbit of `k0` on `[0, horizon]` with the given step (native
/// step when `None`).
pub fn trajectory(flow: &FlowSpec, k0: &Mat, horizon: f64, step: Option<f64>) -> Result<Trajectory> {
    trajectory_in(flow, k0, horizon, step, Direction::Forward)
}

pub fn trajectory_in(
    flow: &FlowSpec,
    k0: &Mat,
    horizon: f64,
    step: Option<f64>,
    direction: Direction,
) -> Result<Trajectory> {
    if !(horizon > 0.0) {
        return Err(Error::InvalidInput(format!("horizon must be positive, got {horizon}")));
    }
    linalg::check_compact_point(k0, &TOL)?;
    let dt = step.unwrap_or_else(|| flow.default_step());
    let m = step_matrix(flow, dt, direction)?;
    let steps = (horizon / dt + 1e-9).floor() as usize;
    let sign = if direction == Direction::Forward { 1.0 } else { -1.0 };
    let mut times = Vec::with_capacity(steps + 1);
    let mut points = Vec::with_capacity(steps + 1);
    times.push(0.0);
    points.push(k0.clone());
    for i in 1..=steps {
        let next = act(&m, points.last().expect("nonempty"))?;
        times.push(sign * i as f64 * dt);
        points.push(next);
    }
    Ok(Trajectory { step: dt, times, points })
}

// ---------------------------------------------------------------------------
// fixed set of the hyperbolic part

/// Nearest point of the fixed set of `exp(H)` in a canonical component.
#[derive(Clone, Debug)]
pub struct FixedProjection {
    pub point: Mat,
    /// Canonical (least) representative of the `U_H` coset naming the
    /// component `K_H^0 u`.
    pub representative: SignedPermutation,
    pub distance: f64,
}

/// Projects `k` onto `fix(exp H) = K_H^0 U`.
///
/// A fixed point has the form `l u` with `l` block rotations over the level
/// sets of `H`, so each column of `k` is supported on one level set. Columns
/// are assigned to level sets by mass (respecting block sizes), `u` is the
/// order-preserving signed permutation realizing the assignment, and the
/// blocks of `k u^T` are replaced by their orthogonal polar factors.
pub fn project_to_fixed_set(k: &Mat, chamber: &ChamberElement) -> FixedProjection {
    let n = k.nrows();
    let blocks = chamber.blocks();
    let mut mass: Vec<(f64, usize, usize)> = Vec::with_capacity(n * blocks.len());
    for j in 0..n {
        for (b, block) in blocks.iter().enumerate() {
            let w: f64 = block.clone().map(|i| k[(i, j)] * k[(i, j)]).sum();
            mass.push((w, j, b));
        }
    }
    mass.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut capacity: Vec<usize> = blocks.iter().map(|b| b.len()).collect();
    let mut owner: Vec<Option<usize>> = vec![None; n];
    for &(_, j, b) in &mass {
        if owner[j].is_none() && capacity[b] > 0 {
            owner[j] = Some(b);
            capacity[b] -= 1;
        }
    }
    let mut images = vec![0usize; n];
    let mut first_column: Vec<Option<usize>> = vec![None; blocks.len()];
    let mut next_row: Vec<usize> = blocks.iter().map(|b| b.start).collect();
    for j in 0..n {
        let b = owner[j].expect("every column assigned");
        images[j] = next_row[b];
        next_row[b] += 1;
        first_column[b].get_or_insert(j);
    }
    let mut negative = vec![false; n];
    let plain = SignedPermutation::new(&images, &negative).expect("valid permutation");
    let l = k * plain.matrix().transpose();
    for (b, block) in blocks.iter().enumerate() {
        let m = block.len();
        if l.view((block.start, block.start), (m, m)).determinant() < 0.0 {
            negative[first_column[b].expect("block has columns")] = true;
        }
    }
    let mut u = SignedPermutation::new(&images, &negative).expect("valid permutation");
    if u.det() != 1 {
        // only reachable far from the fixed set
        negative[0] = !negative[0];
        u = SignedPermutation::new(&images, &negative).expect("valid permutation");
    }
    let l = k * u.matrix().transpose();
    let mut rot = Mat::zeros(n, n);
    for block in blocks {
        let m = block.len();
        let sub = l.view((block.start, block.start), (m, m)).into_owned();
        rot.view_mut((block.start, block.start), (m, m))
            .copy_from(&linalg::nearest_orthogonal(&sub));
    }
    let point = rot * u.matrix();
    let distance = distance(k, &point);
    FixedProjection {
        point,
        representative: u,
        distance,
    }
}

// ---------------------------------------------------------------------------
// limits

#[derive(Clone, Debug)]
pub struct OmegaLimit {
    /// Limit point projected onto the fixed set.
    pub point: Mat,
    pub representative: SignedPermutation,
    /// Time at which the window closed.
    pub time: f64,
}

/// Forward (or backward) limit of `k0`: runs until the orbit stays within
/// `tol` of the fixed set of the hyperbolic part for `WINDOW` consecutive
/// steps, then reports the projected point.
pub fn omega_limit(
    flow: &FlowSpec,
    k0: &Mat,
    tol: f64,
    max_time: f64,
    direction: Direction,
) -> Result<OmegaLimit> {
    if tol < TOL.fix {
        return Err(Error::InvalidInput(format!("limit tolerance {tol:e} below the fixed-point tolerance")));
    }
    linalg::check_compact_point(k0, &TOL)?;
    let dt = flow.default_step();
    let m = step_matrix(flow, dt, direction)?;
    let chamber = flow.chamber();
    let mut k = k0.clone();
    let mut streak = 0;
    let mut t = 0.0;
    let mut step = 0usize;
    loop {
        let p = project_to_fixed_set(&k, chamber);
        if p.distance <= tol {
            streak += 1;
            if streak >= WINDOW {
                return Ok(OmegaLimit {
                    point: p.point,
                    representative: p.representative,
                    time: t,
                });
            }
        } else {
            streak = 0;
        }
        if t >= max_time {
            return Err(Error::NotConverged { time: t });
        }
        k = act(&m, &k)?;
        step += 1;
        t = step as f64 * dt;
    }
}

// ---------------------------------------------------------------------------
// recurrence

/// Whether the unipotent `u` fixes `k`.
pub fn is_fixed_unipotent(u: &Mat, k: &Mat) -> Result<bool> {
    Ok(distance(&act(u, k)?, k) <= TOL.fix)
}

/// Whether `k` is fixed by both the hyperbolic and the unipotent parts.
pub fn is_recurrent(flow: &FlowSpec, k: &Mat) -> Result<bool> {
    let h = &flow.triple.h;
    Ok(distance(&act(h, k)?, k) <= TOL.fix && is_fixed_unipotent(&flow.triple.u, k)?)
}

// ---------------------------------------------------------------------------
// chains

/// An `(epsilon, T)`-chain: the flow carries `points[i]` over `times[i]` to
/// within `epsilon` of `points[i + 1]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Chain {
    pub points: Vec<Vec<Vec<f64>>>,
    pub times: Vec<f64>,
    pub epsilon: f64,
    #[serde(rename = "T")]
    pub min_time: f64,
}

impl Chain {
    pub fn point(&self, i: usize) -> Result<Mat> {
        linalg::from_rows(&self.points[i])
    }

    pub fn jumps(&self) -> usize {
        self.times.len()
    }
}

/// Smallest admissible time `>= t` in the flow's native time set.
fn admissible(flow: &FlowSpec, t: f64) -> f64 {
    match flow.mode {
        TimeMode::Discrete => t.ceil(),
        TimeMode::Continuous => t,
    }
}

/// `phi^t(k)`. On the fixed set of the hyperbolic part the flow acts through
/// `e^t u^t` alone, which is evaluated directly; elsewhere the orbit is
/// stepped.
pub fn evolve(flow: &FlowSpec, k: &Mat, t: f64) -> Result<Mat> {
    let p = project_to_fixed_set(k, flow.chamber());
    if p.distance <= TOL.fix {
        let g = flow.elliptic_at(t)? * flow.unipotent_at(t);
        return act(&g, k);
    }
    let direction = if t >= 0.0 { Direction::Forward } else { Direction::Backward };
    let dt = flow.default_step();
    let m = step_matrix(flow, dt, direction)?;
    let whole = (t.abs() / dt).floor();
    let mut out = k.clone();
    for _ in 0..whole as usize {
        out = act(&m, &out)?;
    }
    let rest = t.abs() - whole * dt;
    if rest > 0.0 {
        out = act(&step_matrix(flow, rest, direction)?, &out)?;
    }
    Ok(out)
}

/// Checks every time against `T` and every jump against `epsilon`.
pub fn verify_chain(chain: &Chain, flow: &FlowSpec) -> Result<bool> {
    if chain.points.len() != chain.times.len() + 1 {
        return Ok(false);
    }
    for (i, &t) in chain.times.iter().enumerate() {
        if t < chain.min_time {
            return Ok(false);
        }
        let moved = evolve(flow, &chain.point(i)?, t)?;
        if distance(&moved, &chain.point(i + 1)?) >= chain.epsilon {
            return Ok(false);
        }
    }
    Ok(true)
}

fn nearest_sign_diagonal(m: &Mat) -> Mat {
    let n = m.nrows();
    linalg::diag(&(0..n).map(|i| if m[(i, i)] < 0.0 { -1.0 } else { 1.0 }).collect::<Vec<_>>())
}

/// Candidate times `>= start` at which the elliptic part returns close to
/// the identity, in increasing order.
fn elliptic_returns(flow: &FlowSpec, start: f64, radius: f64) -> Box<dyn Iterator<Item = f64> + '_> {
    let omega = flow
        .frequencies
        .iter()
        .fold(0.0_f64, |a, w| a.max(w.abs()));
    match flow.mode {
        TimeMode::Discrete => {
            let first = start.ceil() as i64;
            Box::new(
                (first..)
                    .map(|s| s as f64)
                    .take_while(|s| *s <= CHAIN_TIME_CAP)
                    .filter(move |s| flow.elliptic_return(*s) <= radius),
            )
        }
        TimeMode::Continuous if omega <= 1e-14 => Box::new(
            std::iter::successors(Some(start), |s| Some(s * 1.5 + 1.0))
                .take_while(|s| *s <= CHAIN_TIME_CAP),
        ),
        TimeMode::Continuous => {
            let period = 2.0 * std::f64::consts::PI / omega;
            let first = (start / period).ceil().max(1.0) as i64;
            Box::new(
                (first..)
                    .map(move |j| j as f64 * period)
                    .take_while(|s| *s <= CHAIN_TIME_CAP)
                    .filter(move |s| flow.elliptic_return(*s) <= radius),
            )
        }
    }
}

/// Builds a closed `(epsilon, T)`-chain at a point of the fixed set of the
/// hyperbolic part.
///
/// With `s > T` such that `e^s` is `epsilon/8`-close to the identity and
/// `kappa(u^s k)` is `epsilon/8`-close to `kappa(u^{-s} k) m` for a sign
/// matrix `m`, the points `k, e^{-s}u^{-s} k m, k m, e^{-s}u^{-s} k, k`
/// (or `k, e^{-s}u^{-s}k, k` when `m = I`) form the chain.
pub fn build_chain(flow: &FlowSpec, k: &Mat, epsilon: f64, min_time: f64) -> Result<Chain> {
    if !(epsilon > 0.0 && min_time > 0.0) {
        return Err(Error::InvalidInput("chain needs positive epsilon and T".into()));
    }
    linalg::check_compact_point(k, &TOL)?;
    let p = project_to_fixed_set(k, flow.chamber());
    if p.distance > TOL.fix {
        return Err(Error::InvalidInput(format!(
            "chain base point is {:e} away from the fixed set of the hyperbolic part",
            p.distance
        )));
    }
    let rows = linalg::to_rows;
    let s0 = admissible(flow, min_time);
    if distance(&evolve(flow, k, s0)?, k) < epsilon {
        return Ok(Chain {
            points: vec![rows(k), rows(k)],
            times: vec![s0],
            epsilon,
            min_time,
        });
    }
    let radius = epsilon / 8.0;
    for s in elliptic_returns(flow, s0, radius) {
        if s < min_time {
            continue;
        }
        let back = act(&flow.unipotent_at(-s), k)?;
        let ahead = act(&flow.unipotent_at(s), k)?;
        let m = nearest_sign_diagonal(&(back.transpose() * &ahead));
        if distance(&ahead, &(&back * &m)) > radius {
            continue;
        }
        let pullback = flow.elliptic_at(-s)? * flow.unipotent_at(-s);
        let mut points = vec![rows(k)];
        let n = k.nrows();
        if linalg::max_abs_diff(&m, &Mat::identity(n, n)) > 0.0 {
            let km = k * &m;
            points.push(rows(&act(&pullback, &km)?));
            points.push(rows(&km));
        }
        points.push(rows(&act(&pullback, k)?));
        points.push(rows(k));
        let times = vec![s; points.len() - 1];
        let chain = Chain {
            points,
            times,
            epsilon,
            min_time,
        };
        if verify_chain(&chain, flow)? {
            return Ok(chain);
        }
    }
    Err(Error::SearchExhausted { cap: CHAIN_TIME_CAP })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structure::{enumerate_u, ChamberElement};
    use std::f64::consts::{E, FRAC_PI_2, FRAC_PI_4};

    fn rot2(a: f64) -> Mat {
        Mat::from_row_slice(2, 2, &[a.cos(), -a.sin(), a.sin(), a.cos()])
    }

    fn hyperbolic_sl2() -> FlowSpec {
        FlowSpec::continuous(&linalg::diag(&[1.0, -1.0])).unwrap()
    }

    #[test]
    fn base_point_isotropy() {
        let an = Mat::from_row_slice(3, 3, &[2.0, 1.0, -3.0, 0.0, 0.25, 4.0, 0.0, 0.0, 2.0]);
        let k = act(&an, &Mat::identity(3, 3)).unwrap();
        assert!(linalg::max_abs_diff(&k, &Mat::identity(3, 3)) < 1e-15);
    }

    #[test]
    fn u_is_fixed_by_hyperbolic_elements() {
        let h = linalg::diag(&[E * E, 1.0 / E, 1.0 / E]);
        for u in enumerate_u(3) {
            let k = u.matrix();
            assert!(linalg::max_abs_diff(&act(&h, &k).unwrap(), &k) < 1e-15);
        }
    }

    #[test]
    fn fixed_point_trajectory_is_constant() {
        let flow = hyperbolic_sl2();
        let k = -Mat::identity(2, 2);
        let t = trajectory(&flow, &k, 2.0, None).unwrap();
        assert_eq!(t.len(), 21);
        assert!(t.points.iter().all(|p| linalg::max_abs_diff(p, &k) < 1e-15));
    }

    #[test]
    fn hyperbolic_angle_decreases() {
        let flow = hyperbolic_sl2();
        let t = trajectory(&flow, &rot2(FRAC_PI_4), 5.0, None).unwrap();
        let angles: Vec<f64> = t.points.iter().map(|k| k[(1, 0)].atan2(k[(0, 0)])).collect();
        assert!(angles.windows(2).all(|w| w[1] < w[0] && w[1] > 0.0));
    }

    #[test]
    fn unipotent_flow_moves_toward_first_axis() {
        let flow = FlowSpec::continuous(&linalg::elementary(2, 0, 1)).unwrap();
        let t = trajectory(&flow, &rot2(FRAC_PI_2), 200.0, Some(1.0)).unwrap();
        let k = t.last();
        assert!(k[(1, 0)].abs() < 0.01 && k[(0, 0)] > 0.0);
    }

    #[test]
    fn csv_header() {
        let flow = hyperbolic_sl2();
        let csv = trajectory(&flow, &Mat::identity(2, 2), 0.1, None).unwrap().to_csv();
        assert!(csv.starts_with("time,k00,k01,k10,k11\n"));
        assert_eq!(csv.lines().count(), 3);
    }

    #[test]
    fn projection_recovers_components() {
        let h = ChamberElement::new(&[2.0, -1.0, -1.0]).unwrap();
        let a = 0.7f64;
        let l = Mat::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, a.cos(), -a.sin(), 0.0, a.sin(), a.cos()]);
        for u in enumerate_u(3) {
            let k = &l * u.matrix();
            let p = project_to_fixed_set(&k, &h);
            assert!(p.distance < 1e-14);
            let uh = crate::structure::enumerate_uh(&h);
            let label = crate::structure::coset_label(&uh, &u, crate::structure::SubgroupTag::UH);
            assert_eq!(label.representative, p.representative);
        }
    }

    #[test]
    fn omega_limits_in_sl2() {
        let flow = hyperbolic_sl2();
        let lim = omega_limit(&flow, &rot2(FRAC_PI_4), 1e-6, DEFAULT_MAX_TIME, Direction::Forward).unwrap();
        assert!(distance(&lim.point, &Mat::identity(2, 2)) < 1e-9);
        let lim = omega_limit(&flow, &rot2(FRAC_PI_4), 1e-6, DEFAULT_MAX_TIME, Direction::Backward).unwrap();
        assert!(distance(&lim.point, &rot2(FRAC_PI_2)) < 1e-9);
        let u = rot2(-FRAC_PI_2);
        let lim = omega_limit(&flow, &u, 1e-6, DEFAULT_MAX_TIME, Direction::Forward).unwrap();
        assert!(distance(&lim.point, &u) < 1e-12);
        assert!(matches!(
            omega_limit(&flow, &u, 1e-12, 1.0, Direction::Forward),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn unipotent_fixed_points() {
        let u = Mat::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        assert!(is_fixed_unipotent(&u, &Mat::identity(2, 2)).unwrap());
        let mut u3 = Mat::identity(3, 3);
        u3[(1, 2)] = 1.0;
        assert!(is_fixed_unipotent(&u3, &linalg::diag(&[1.0, -1.0, -1.0])).unwrap());
        let a = 0.9f64;
        let k = Mat::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, a.cos(), -a.sin(), 0.0, a.sin(), a.cos()]);
        assert!(!is_fixed_unipotent(&u3, &k).unwrap());
    }

    #[test]
    fn chains_in_sl2() {
        let flow = FlowSpec::discrete(&Mat::from_row_slice(2, 2, &[-1.0, -1.0, 0.0, -1.0])).unwrap();
        let chain = build_chain(&flow, &rot2(FRAC_PI_2), 0.1, 10.0).unwrap();
        assert!(verify_chain(&chain, &flow).unwrap());
        let mut bad = chain.clone();
        bad.times[0] = 9.0;
        assert!(!verify_chain(&bad, &flow).unwrap());

        let hyper = hyperbolic_sl2();
        let trivial = build_chain(&hyper, &Mat::identity(2, 2), 0.1, 10.0).unwrap();
        assert_eq!(trivial.jumps(), 1);
        assert!(verify_chain(&trivial, &hyper).unwrap());
        assert!(build_chain(&hyper, &rot2(0.3), 0.1, 10.0).is_err());
    }

    #[test]
    fn chain_json_shape() {
        let hyper = hyperbolic_sl2();
        let chain = build_chain(&hyper, &Mat::identity(2, 2), 0.1, 1.0).unwrap();
        let v: serde_json::Value = serde_json::to_value(&chain).unwrap();
        for key in ["points", "times", "epsilon", "T"] {
            assert!(v.get(key).is_some());
        }
    }
}
