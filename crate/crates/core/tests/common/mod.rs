#![allow(dead_code)]

use kdyn::linalg::{self, Mat};
use kdyn::structure::ChamberElement;
use rand::Rng;
use rand_distr::StandardNormal;

/// Haar-distributed rotation: orthogonal factor of a Gaussian matrix.
pub fn haar_rotation<R: Rng>(n: usize, rng: &mut R) -> Mat {
    let mut g = Mat::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    if g.determinant() < 0.0 {
        g.column_mut(0).neg_mut();
    }
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Unimodular matrix `I + scale * G` with Gaussian `G`, rescaled to det one.
pub fn random_sl<R: Rng>(n: usize, scale: f64, rng: &mut R) -> Mat {
    loop {
        let mut g = Mat::identity(n, n) + Mat::from_fn(n, n, |_, _| scale * rng.sample::<f64, _>(StandardNormal));
        let d = g.determinant();
        if d.abs() < 0.2 {
            continue;
        }
        if d < 0.0 {
            g.column_mut(0).neg_mut();
        }
        let d = g.determinant();
        return g / d.powf(1.0 / n as f64);
    }
}

pub fn rot2(a: f64) -> Mat {
    Mat::from_row_slice(2, 2, &[a.cos(), -a.sin(), a.sin(), a.cos()])
}

/// A triple `(e, h, u)` already in adapted form, plus its chamber element.
pub struct AdaptedTriple {
    pub e: Mat,
    pub h: Mat,
    pub u: Mat,
    pub chamber: ChamberElement,
}

/// Random composition: block sizes and levels are random; inside each block
/// the elliptic factor is either a rotation (with `u = I` there) or a sign
/// times the identity (with a random upper unipotent `u`).
pub fn random_adapted_triple<R: Rng>(n: usize, rng: &mut R, allow_unipotent: bool) -> AdaptedTriple {
    let mut sizes = Vec::new();
    let mut left = n;
    while left > 0 {
        let m = rng.random_range(1..=left.min(3));
        sizes.push(m);
        left -= m;
    }
    let mut levels: Vec<f64> = Vec::new();
    let mut v = 0.0;
    for _ in &sizes {
        levels.push(v);
        v -= rng.random_range(0.4..1.5);
    }
    let mut entries = Vec::new();
    for (m, l) in sizes.iter().zip(&levels) {
        entries.extend(std::iter::repeat_n(*l, *m));
    }
    let mean = entries.iter().sum::<f64>() / n as f64;
    entries.iter_mut().for_each(|x| *x -= mean);
    let chamber = ChamberElement::new(&entries).expect("valid chamber");

    let mut e = Mat::identity(n, n);
    let mut u = Mat::identity(n, n);
    let mut start = 0;
    for &m in &sizes {
        let rotate = m >= 2 && (!allow_unipotent || rng.random_bool(0.5));
        if rotate {
            let a = rng.random_range(0.3..3.0);
            e.view_mut((start, start), (2, 2)).copy_from(&rot2(a));
        } else if allow_unipotent && m >= 2 {
            if m % 2 == 0 && rng.random_bool(0.5) {
                for i in start..start + m {
                    e[(i, i)] = -1.0;
                }
            }
            let mut nil = Mat::zeros(n, n);
            for i in start..start + m {
                for j in i + 1..start + m {
                    nil[(i, j)] = rng.random_range(-1.0..1.0);
                }
            }
            // keep the superdiagonal away from zero so the block is a single Jordan block
            for i in start..start + m - 1 {
                nil[(i, i + 1)] = nil[(i, i + 1)].signum() * (0.5 + nil[(i, i + 1)].abs());
            }
            u *= linalg::expm(&nil);
        }
        start += m;
    }
    let h = linalg::diag(&entries.iter().map(|x| x.exp()).collect::<Vec<_>>());
    AdaptedTriple { e, h, u, chamber }
}
