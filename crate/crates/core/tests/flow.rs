mod common;

use std::f64::consts::{E, FRAC_PI_2, FRAC_PI_4, PI};

use kdyn::flow::{self, Direction};
use kdyn::jordan::FlowSpec;
use kdyn::linalg::{self, Mat, TOL};
use kdyn::structure::{self, ChamberElement, Subalgebra};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::rot2;

fn angle(k: &Mat) -> f64 {
    k[(1, 0)].atan2(k[(0, 0)])
}

fn sl3_flow() -> FlowSpec {
    FlowSpec::continuous(&Mat::from_row_slice(3, 3, &[2.0, 0.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0, -1.0])).unwrap()
}

#[test]
fn base_point_isotropy_and_fixed_signed_permutations() {
    let an = linalg::diag(&[2.0, 0.25, 2.0]) * linalg::expm(&(linalg::elementary(3, 0, 2) * 1.7 + linalg::elementary(3, 1, 2)));
    assert!(linalg::max_abs_diff(&flow::act(&an, &Mat::identity(3, 3)).unwrap(), &Mat::identity(3, 3)) < 1e-14);
    let h = linalg::expm(&linalg::diag(&[1.5, 0.5, -2.0]));
    for u in structure::enumerate_u(3) {
        let k = u.matrix();
        assert!(linalg::max_abs_diff(&flow::act(&h, &k).unwrap(), &k) < 1e-14);
    }
}

#[test]
fn semigroup_property() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for n in 2..=5 {
        for _ in 0..10 {
            let g = common::random_sl(n, 0.7, &mut rng);
            let g2 = common::random_sl(n, 0.7, &mut rng);
            let k = common::haar_rotation(n, &mut rng);
            let lhs = flow::act(&g, &flow::act(&g2, &k).unwrap()).unwrap();
            let rhs = flow::act(&(&g * &g2), &k).unwrap();
            assert!(flow::distance(&lhs, &rhs) < TOL.fix);
        }
    }
}

#[test]
fn trajectory_samples_are_consecutive_translates() {
    let flow = sl3_flow();
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let k0 = common::haar_rotation(3, &mut rng);
    let traj = flow::trajectory(&flow, &k0, 3.0, Some(0.25)).unwrap();
    assert_eq!(traj.len(), 13);
    let step = flow.at_time(0.25).unwrap();
    for w in traj.points.windows(2) {
        assert!(linalg::orthogonality_residual(&w[1]) < TOL.orth);
        assert!(flow::distance(&flow::act(&step, &w[0]).unwrap(), &w[1]) < 1e-10);
    }
    let csv = traj.to_csv();
    assert!(csv.starts_with("time,k00,k01,k02,k10,"));
    assert_eq!(csv.lines().count(), 14);
}

#[test]
fn fixed_point_trajectory_is_constant() {
    let flow = sl3_flow();
    for k in [Mat::identity(3, 3), linalg::diag(&[1.0, -1.0, -1.0])] {
        let traj = flow::trajectory(&flow, &k, 5.0, None).unwrap();
        for p in &traj.points {
            assert!(flow::distance(p, &k) < 1e-12);
        }
    }
}

#[test]
fn sl2_hyperbolic_angle_decreases_to_zero() {
    let flow = FlowSpec::continuous(&linalg::diag(&[1.0, -1.0])).unwrap();
    let traj = flow::trajectory(&flow, &rot2(FRAC_PI_4), 10.0, Some(0.5)).unwrap();
    let angles: Vec<f64> = traj.points.iter().map(angle).collect();
    assert!(angles.windows(2).all(|w| w[1] < w[0] && w[1] >= 0.0));
    // closed form: tan(alpha_t) = e^{-2t} tan(alpha_0)
    for (t, a) in traj.times.iter().zip(&angles) {
        assert!((a.tan() - (-2.0 * t).exp()).abs() < 1e-12);
    }
    let lim = flow::omega_limit(&flow, &rot2(FRAC_PI_4), 1e-6, 100.0, Direction::Forward).unwrap();
    assert!(flow::distance(&lim.point, &Mat::identity(2, 2)) < 1e-12);
}

#[test]
fn sl2_unipotent_flow_moves_quarter_turn_to_identity() {
    let flow = FlowSpec::continuous(&linalg::elementary(2, 0, 1)).unwrap();
    let traj = flow::trajectory(&flow, &rot2(FRAC_PI_2), 1000.0, Some(10.0)).unwrap();
    let angles: Vec<f64> = traj.points.iter().map(angle).collect();
    assert!(angles.windows(2).all(|w| w[1] < w[0] && w[1] > 0.0));
    // first column of u^t k is (t, 1) up to scale
    assert!((angles.last().unwrap() - (1.0f64 / 1000.0).atan()).abs() < 1e-12);
}

#[test]
fn limit_of_a_fixed_point_is_itself() {
    let flow = FlowSpec::discrete(&linalg::diag(&[E, 1.0 / E])).unwrap();
    for u in structure::enumerate_u(2) {
        let lim = flow::omega_limit(&flow, &u.matrix(), 1e-6, 100.0, Direction::Forward).unwrap();
        assert_eq!(lim.representative, u);
    }
}

#[test]
fn random_point_lands_on_an_attractor() {
    let flow = sl3_flow();
    let analysis = kdyn::morse::MorseAnalysis::new(&flow).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    for _ in 0..20 {
        let k = common::haar_rotation(3, &mut rng);
        let lim = flow::omega_limit(&flow, &k, 1e-6, 1e3, Direction::Forward).unwrap();
        let via_fixed = kdyn::morse::fixed_component_of(&lim.point, flow.chamber()).unwrap();
        assert_eq!(
            analysis.label_of(&via_fixed.representative),
            analysis.label_of(&lim.representative)
        );
        assert!(analysis.label_of(&lim.representative).attractor);
    }
}

#[test]
fn recurrence_examples() {
    let u = Mat::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
    assert!(flow::is_fixed_unipotent(&u, &Mat::identity(2, 2)).unwrap());
    let flow = sl3_flow();
    assert!(flow::is_recurrent(&flow, &linalg::diag(&[1.0, -1.0, -1.0])).unwrap());
    assert!(flow::is_recurrent(&flow, &Mat::identity(3, 3)).unwrap());
    let mut l = Mat::identity(3, 3);
    l.view_mut((1, 1), (2, 2)).copy_from(&rot2(0.9));
    assert!(!flow::is_recurrent(&flow, &l).unwrap());

    // SL(2) unipotent flow: exactly the two diagonal points on a circle grid
    let flow = FlowSpec::continuous(&linalg::elementary(2, 0, 1)).unwrap();
    let hits: Vec<usize> = (0..48)
        .filter(|&j| flow::is_recurrent(&flow, &rot2(j as f64 * PI / 24.0)).unwrap())
        .collect();
    assert_eq!(hits, vec![0, 24]);

    // pure hyperbolic flow: every fixed point is recurrent
    let flow = FlowSpec::continuous(&linalg::diag(&[1.0, 0.0, -1.0])).unwrap();
    for u in structure::enumerate_u(3) {
        assert!(flow::is_recurrent(&flow, &u.matrix()).unwrap());
    }
}

#[test]
fn contraction_and_stable_manifold_convergence() {
    let h = ChamberElement::new(&[2.0, -1.0, -1.0]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    let basis = structure::subalgebra_basis(3, Subalgebra::NMinusH(&h));
    for _ in 0..10 {
        let mut y = Mat::zeros(3, 3);
        for b in &basis {
            y += b * rng.random_range(-2.0..2.0);
        }
        let n = linalg::expm(&y);
        let x = Mat::identity(3, 3);
        let start = flow::act(&n, &x).unwrap();
        let mut last = f64::INFINITY;
        for t in [2.0, 4.0, 6.0, 8.0] {
            let ht = linalg::expm(&(h.matrix() * t));
            let conj = &ht * &n * linalg::inverse(&ht).unwrap();
            assert!(linalg::max_abs_diff(&conj, &Mat::identity(3, 3)) <= (-3.0 * t).exp() * y.norm() * 2.0);
            let d = flow::distance(&flow::act(&ht, &start).unwrap(), &x);
            assert!(d < last);
            last = d;
        }
        assert!(last < 1e-8);
    }
}

#[test]
fn chain_examples() {
    // fixed by the whole flow: a single jump closes the chain
    let flow = FlowSpec::discrete(&linalg::diag(&[E, 1.0 / E])).unwrap();
    let chain = flow::build_chain(&flow, &Mat::identity(2, 2), 0.1, 10.0).unwrap();
    assert_eq!(chain.jumps(), 1);
    assert!(flow::verify_chain(&chain, &flow).unwrap());

    let flow = FlowSpec::discrete(&Mat::from_row_slice(2, 2, &[-1.0, -1.0, 0.0, -1.0])).unwrap();
    let chain = flow::build_chain(&flow, &rot2(FRAC_PI_2), 0.1, 10.0).unwrap();
    assert!(flow::verify_chain(&chain, &flow).unwrap());

    let flow = sl3_flow();
    let mut l = Mat::identity(3, 3);
    l.view_mut((1, 1), (2, 2)).copy_from(&rot2(1.1));
    assert!(!flow::is_recurrent(&flow, &l).unwrap());
    let chain = flow::build_chain(&flow, &l, 0.05, 5.0).unwrap();
    assert!(flow::verify_chain(&chain, &flow).unwrap());
    let json = serde_json::to_value(&chain).unwrap();
    assert!(json.get("T").is_some() && json.get("epsilon").is_some());

    // a tampered chain fails verification
    let mut bad = chain.clone();
    bad.epsilon = 1e-9;
    assert!(!flow::verify_chain(&bad, &flow).unwrap() || bad.jumps() == 1);
}

#[test]
fn chain_base_must_be_fixed_by_h() {
    let flow = sl3_flow();
    let mut rng = ChaCha8Rng::seed_from_u64(35);
    let k = common::haar_rotation(3, &mut rng);
    assert!(flow::build_chain(&flow, &k, 0.1, 10.0).is_err());
}
