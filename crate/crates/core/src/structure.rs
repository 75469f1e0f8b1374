//! Root data of `sl(n, R)` and the finite groups `U`, `C`, `W`.
//!
//! `U` is realized as the signed permutation matrices of determinant one and
//! `C` as its diagonal subgroup. A chamber element `H` splits `{0..n}` into
//! level sets (blocks of equal diagonal entries); the centralizer subgroups
//! `U_H`, `C_H` are the elements acting inside blocks with determinant one on
//! every block.

use std::collections::HashSet;
use std::fmt;
use std::ops::Range;

use itertools::Itertools;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, MAX_DIM, TOL};

/// Combinatorics of the root system of type `A_{n-1}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RootDatum {
    pub n: usize,
}

/// The root `alpha_ij(H) = H_ii - H_jj`, with root space spanned by `E_ij`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Root {
    pub i: usize,
    pub j: usize,
}

impl Root {
    pub fn value(&self, h: &[f64]) -> f64 {
        h[self.i] - h[self.j]
    }

    pub fn is_positive(&self) -> bool {
        self.i < self.j
    }

    pub fn negative(&self) -> Root {
        Root { i: self.j, j: self.i }
    }

    pub fn root_vector(&self, n: usize) -> Mat {
        linalg::elementary(n, self.i, self.j)
    }
}

impl RootDatum {
    pub fn new(n: usize) -> Result<Self> {
        if !(2..=MAX_DIM).contains(&n) {
            return Err(Error::InvalidInput(format!("dimension {n} outside 2..=8")));
        }
        Ok(RootDatum { n })
    }

    pub fn roots(&self) -> Vec<Root> {
        (0..self.n)
            .cartesian_product(0..self.n)
            .filter(|(i, j)| i != j)
            .map(|(i, j)| Root { i, j })
            .collect()
    }

    pub fn positive_roots(&self) -> Vec<Root> {
        self.roots().into_iter().filter(Root::is_positive).collect()
    }

    pub fn simple_roots(&self) -> Vec<Root> {
        (0..self.n - 1).map(|i| Root { i, j: i + 1 }).collect()
    }

    /// Cartan involution `X -> -X^T`.
    pub fn cartan_involution(&self, x: &Mat) -> Mat {
        -x.transpose()
    }

    pub fn inner(&self, x: &Mat, y: &Mat) -> f64 {
        linalg::cartan_inner(x, y)
    }

    /// `n(n-1)/2`.
    pub fn compact_dimension(&self) -> usize {
        self.n * (self.n - 1) / 2
    }
}

// ---------------------------------------------------------------------------
// chamber elements

/// Result of sorting a diagonal element into the closed chamber.
#[derive(Clone, Debug, PartialEq)]
pub struct ChamberProjection {
    pub in_chamber: bool,
    pub sorted: Vec<f64>,
    /// `sorted[i] = entries[permutation[i]]`.
    pub permutation: Vec<usize>,
}

/// Whether the diagonal `entries` lie in the closed chamber, together with
/// the nonincreasing rearrangement.
pub fn chamber_projectable(entries: &[f64]) -> ChamberProjection {
    let mut permutation: Vec<usize> = (0..entries.len()).collect();
    permutation.sort_by(|&a, &b| entries[b].total_cmp(&entries[a]));
    let sorted: Vec<f64> = permutation.iter().map(|&i| entries[i]).collect();
    let in_chamber = entries.windows(2).all(|w| w[0] >= w[1]);
    ChamberProjection {
        in_chamber,
        sorted,
        permutation,
    }
}

/// A traceless diagonal element of the closed chamber, with its level sets.
#[derive(Clone, Debug, PartialEq)]
pub struct ChamberElement {
    entries: Vec<f64>,
    blocks: Vec<Range<usize>>,
}

impl ChamberElement {
    /// Accepts nonincreasing traceless entries. Entries equal up to
    /// `TOL.fix` (relative) are merged into one level set and replaced by
    /// their mean.
    pub fn new(entries: &[f64]) -> Result<Self> {
        let n = entries.len();
        if !(2..=MAX_DIM).contains(&n) {
            return Err(Error::InvalidInput(format!("dimension {n} outside 2..=8")));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite chamber entry".into()));
        }
        let scale = entries.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
        let tol = TOL.fix * scale;
        let trace: f64 = entries.iter().sum();
        if trace.abs() > TOL.det * scale * n as f64 {
            return Err(Error::InvalidInput(format!("chamber element has trace {trace:e}")));
        }
        if entries.windows(2).any(|w| w[1] > w[0] + tol) {
            return Err(Error::InvalidInput(
                "chamber element entries must be nonincreasing".into(),
            ));
        }
        let mut blocks = Vec::new();
        let mut start = 0;
        for i in 1..=n {
            if i == n || entries[i - 1] - entries[i] > tol {
                blocks.push(start..i);
                start = i;
            }
        }
        let mut snapped = entries.to_vec();
        for b in &blocks {
            let mean = entries[b.clone()].iter().sum::<f64>() / b.len() as f64;
            snapped[b.clone()].iter_mut().for_each(|v| *v = mean);
        }
        Ok(ChamberElement {
            entries: snapped,
            blocks,
        })
    }

    pub fn from_matrix(h: &Mat) -> Result<Self> {
        linalg::check_dimension(h)?;
        let off = (0..h.nrows())
            .cartesian_product(0..h.ncols())
            .filter(|(i, j)| i != j)
            .fold(0.0_f64, |a, (i, j)| a.max(h[(i, j)].abs()));
        if off > TOL.fix {
            return Err(Error::InvalidInput("chamber element must be diagonal".into()));
        }
        Self::new(&(0..h.nrows()).map(|i| h[(i, i)]).collect::<Vec<_>>())
    }

    pub fn zero(n: usize) -> Result<Self> {
        Self::new(&vec![0.0; n])
    }

    pub fn n(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn matrix(&self) -> Mat {
        linalg::diag(&self.entries)
    }

    /// Level sets, in order.
    pub fn blocks(&self) -> &[Range<usize>] {
        &self.blocks
    }

    pub fn block_of(&self, index: usize) -> usize {
        self.blocks
            .iter()
            .position(|b| b.contains(&index))
            .expect("index inside dimension")
    }

    pub fn same_block(&self, i: usize, j: usize) -> bool {
        self.block_of(i) == self.block_of(j)
    }

    pub fn is_zero(&self) -> bool {
        self.blocks.len() == 1
    }

    pub fn is_regular(&self) -> bool {
        self.blocks.len() == self.n()
    }

    pub fn multiplicities(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.len()).collect()
    }

    /// `dim K_H^0 = sum m(m-1)/2`.
    pub fn centralizer_dimension(&self) -> usize {
        self.multiplicities().iter().map(|m| m * (m - 1) / 2).sum()
    }

    /// `alpha_ij(H)`, exactly zero inside a level set.
    pub fn root_value(&self, i: usize, j: usize) -> f64 {
        if self.same_block(i, j) {
            0.0
        } else {
            self.entries[i] - self.entries[j]
        }
    }
}

/// Smallest strictly positive root value of `H`.
pub fn mu(h: &ChamberElement) -> Result<f64> {
    let n = h.n();
    (0..n)
        .cartesian_product(0..n)
        .map(|(i, j)| h.root_value(i, j))
        .filter(|v| *v > 0.0)
        .min_by(f64::total_cmp)
        .ok_or(Error::ZeroElement)
}

// ---------------------------------------------------------------------------
// subalgebras

#[derive(Clone, Copy, Debug)]
pub enum Subalgebra<'a> {
    A,
    NPlus,
    NMinus,
    NPlusH(&'a ChamberElement),
    NMinusH(&'a ChamberElement),
    GH(&'a ChamberElement),
    KH(&'a ChamberElement),
}

/// Cartan-orthonormal basis of traceless diagonal matrices.
fn cartan_basis(n: usize) -> Vec<Mat> {
    let mut out: Vec<Mat> = Vec::with_capacity(n - 1);
    for i in 0..n - 1 {
        // e_1 + ... + e_{i+1} - (i+1) e_{i+2}, normalized: orthogonal by construction
        let mut d = vec![0.0; n];
        d[..=i].iter_mut().for_each(|v| *v = 1.0);
        d[i + 1] = -((i + 1) as f64);
        let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        out.push(linalg::diag(&d) / norm);
    }
    out
}

/// Orthonormal basis (Cartan inner product) of the requested subalgebra.
/// Root spaces are represented by elementary matrices `E_ij`, listed column
/// by column.
pub fn subalgebra_basis(n: usize, kind: Subalgebra<'_>) -> Vec<Mat> {
    let pairs = |pred: &dyn Fn(usize, usize) -> bool| -> Vec<Mat> {
        (0..n)
            .cartesian_product(0..n)
            .map(|(j, i)| (i, j))
            .filter(|&(i, j)| i != j && pred(i, j))
            .map(|(i, j)| linalg::elementary(n, i, j))
            .collect()
    };
    match kind {
        Subalgebra::A => cartan_basis(n),
        Subalgebra::NPlus => pairs(&|i, j| i < j),
        Subalgebra::NMinus => pairs(&|i, j| i > j),
        Subalgebra::NPlusH(h) => pairs(&|i, j| h.root_value(i, j) > 0.0),
        Subalgebra::NMinusH(h) => pairs(&|i, j| h.root_value(i, j) < 0.0),
        Subalgebra::GH(h) => {
            let mut basis = cartan_basis(n);
            basis.extend(pairs(&|i, j| h.same_block(i, j)));
            basis
        }
        Subalgebra::KH(h) => (0..n)
            .tuple_combinations()
            .filter(|&(i, j)| h.same_block(i, j))
            .map(|(i, j)| {
                (linalg::elementary(n, j, i) - linalg::elementary(n, i, j)) / 2f64.sqrt()
            })
            .collect(),
    }
}

// ---------------------------------------------------------------------------
// signed permutations

/// A signed permutation matrix: column `j` is `sign_j * e_{image_j}`.
///
/// The derived order (dimension, images, sign mask) is the total order used
/// to pick coset representatives; the identity is minimal.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SignedPermutation {
    n: u8,
    images: [u8; MAX_DIM],
    negatives: u8,
}

impl SignedPermutation {
    pub fn identity(n: usize) -> Self {
        let mut images = [0u8; MAX_DIM];
        for (j, v) in images.iter_mut().enumerate().take(n) {
            *v = j as u8;
        }
        SignedPermutation {
            n: n as u8,
            images,
            negatives: 0,
        }
    }

    /// `images[j]` is the row of the nonzero entry in column `j`; `signs[j]`
    /// its sign (`true` for negative).
    pub fn new(images: &[usize], negative: &[bool]) -> Result<Self> {
        let n = images.len();
        if !(2..=MAX_DIM).contains(&n) || negative.len() != n {
            return Err(Error::InvalidInput("bad signed permutation size".into()));
        }
        let mut seen = [false; MAX_DIM];
        let mut out = Self::identity(n);
        for (j, &i) in images.iter().enumerate() {
            if i >= n || seen[i] {
                return Err(Error::InvalidInput("not a permutation".into()));
            }
            seen[i] = true;
            out.images[j] = i as u8;
            if negative[j] {
                out.negatives |= 1 << j;
            }
        }
        Ok(out)
    }

    pub fn diagonal(negative: &[bool]) -> Result<Self> {
        Self::new(&(0..negative.len()).collect::<Vec<_>>(), negative)
    }

    /// Reads a signed permutation matrix, entries within `tol` of `0, +-1`.
    pub fn from_matrix(m: &Mat, tol: f64) -> Option<Self> {
        let n = m.nrows();
        let mut images = vec![0; n];
        let mut negative = vec![false; n];
        for j in 0..n {
            let mut found = None;
            for i in 0..n {
                let v = m[(i, j)];
                if (v.abs() - 1.0).abs() <= tol {
                    if found.is_some() {
                        return None;
                    }
                    found = Some((i, v < 0.0));
                } else if v.abs() > tol {
                    return None;
                }
            }
            let (i, neg) = found?;
            images[j] = i;
            negative[j] = neg;
        }
        Self::new(&images, &negative).ok()
    }

    pub fn n(&self) -> usize {
        self.n as usize
    }

    pub fn image(&self, j: usize) -> usize {
        self.images[j] as usize
    }

    pub fn sign(&self, j: usize) -> f64 {
        if self.negatives & (1 << j) != 0 {
            -1.0
        } else {
            1.0
        }
    }

    pub fn is_diagonal(&self) -> bool {
        (0..self.n()).all(|j| self.image(j) == j)
    }

    pub fn permutation_sign(&self) -> i32 {
        let n = self.n();
        let mut visited = [false; MAX_DIM];
        let mut sign = 1;
        for start in 0..n {
            if visited[start] {
                continue;
            }
            let mut len = 0;
            let mut j = start;
            while !visited[j] {
                visited[j] = true;
                j = self.image(j);
                len += 1;
            }
            if len % 2 == 0 {
                sign = -sign;
            }
        }
        sign
    }

    pub fn det(&self) -> i32 {
        let flips = self.negatives.count_ones() as i32;
        self.permutation_sign() * if flips % 2 == 0 { 1 } else { -1 }
    }

    /// Matrix product `self * other`.
    pub fn compose(&self, other: &Self) -> Self {
        debug_assert_eq!(self.n, other.n);
        let mut out = Self::identity(self.n());
        for j in 0..self.n() {
            let mid = other.image(j);
            out.images[j] = self.images[mid];
            if other.sign(j) * self.sign(mid) < 0.0 {
                out.negatives |= 1 << j;
            }
        }
        out
    }

    pub fn inverse(&self) -> Self {
        let mut out = Self::identity(self.n());
        for j in 0..self.n() {
            let i = self.image(j);
            out.images[i] = j as u8;
            if self.sign(j) < 0.0 {
                out.negatives |= 1 << i;
            }
        }
        out
    }

    pub fn matrix(&self) -> Mat {
        let n = self.n();
        let mut m = Mat::zeros(n, n);
        for j in 0..n {
            m[(self.image(j), j)] = self.sign(j);
        }
        m
    }

    pub fn rows(&self) -> Vec<Vec<i8>> {
        let n = self.n();
        let mut rows = vec![vec![0i8; n]; n];
        for j in 0..n {
            rows[self.image(j)][j] = self.sign(j) as i8;
        }
        rows
    }

    /// Whether every level set of `h` is mapped to itself with determinant
    /// one on the block.
    pub fn preserves_blocks(&self, h: &ChamberElement) -> bool {
        h.blocks().iter().all(|b| {
            b.clone().all(|j| b.contains(&self.image(j))) && self.block_det(b.clone()) > 0
        })
    }

    fn block_det(&self, block: Range<usize>) -> i32 {
        let start = block.start;
        let images: Vec<usize> = block.clone().map(|j| self.image(j) - start).collect();
        let negs: Vec<bool> = block.map(|j| self.sign(j) < 0.0).collect();
        if images.len() == 1 {
            return if negs[0] { -1 } else { 1 };
        }
        Self::new(&images, &negs).map(|p| p.det()).unwrap_or(0)
    }
}

impl fmt::Debug for SignedPermutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for j in 0..self.n() {
            if j > 0 {
                write!(f, " ")?;
            }
            let s = if self.sign(j) < 0.0 { "-" } else { "+" };
            write!(f, "{s}{}", self.image(j) + 1)?;
        }
        write!(f, "]")
    }
}

fn all_signed(n: usize, mut keep: impl FnMut(&SignedPermutation) -> bool) -> Vec<SignedPermutation> {
    let mut out = Vec::new();
    for perm in (0..n).permutations(n) {
        for mask in 0u16..(1 << n) {
            let negative: Vec<bool> = (0..n).map(|j| mask & (1 << j) != 0).collect();
            let p = SignedPermutation::new(&perm, &negative).expect("valid permutation");
            if p.det() == 1 && keep(&p) {
                out.push(p);
            }
        }
    }
    out.sort();
    out
}

/// Signed permutation matrices with determinant one.
pub fn enumerate_u(n: usize) -> Vec<SignedPermutation> {
    all_signed(n, |_| true)
}

/// Diagonal sign matrices with determinant one.
pub fn enumerate_c(n: usize) -> Vec<SignedPermutation> {
    let mut out: Vec<SignedPermutation> = (0u16..(1 << n))
        .filter(|m| m.count_ones() % 2 == 0)
        .map(|mask| {
            let negative: Vec<bool> = (0..n).map(|j| mask & (1 << j) != 0).collect();
            SignedPermutation::diagonal(&negative).expect("valid size")
        })
        .collect();
    out.sort();
    out
}

/// Elements of `U` preserving every level set of `h` with block determinant one.
pub fn enumerate_uh(h: &ChamberElement) -> Vec<SignedPermutation> {
    let n = h.n();
    let mut group = vec![SignedPermutation::identity(n)];
    for block in h.blocks() {
        let m = block.len();
        let local: Vec<(Vec<usize>, u16)> = (0..m)
            .permutations(m)
            .cartesian_product(0u16..(1 << m))
            .collect();
        let mut next = Vec::new();
        for base in &group {
            for (perm, mask) in &local {
                let mut images: Vec<usize> = (0..n).map(|j| base.image(j)).collect();
                let mut negative: Vec<bool> = (0..n).map(|j| base.sign(j) < 0.0).collect();
                for (k, &p) in perm.iter().enumerate() {
                    images[block.start + k] = block.start + p;
                    negative[block.start + k] = mask & (1 << k) != 0;
                }
                let candidate = SignedPermutation::new(&images, &negative).expect("valid");
                if candidate.block_det(block.clone()) == 1 {
                    next.push(candidate);
                }
            }
        }
        group = next;
    }
    group.sort();
    group
}

/// Diagonal elements of `U_H`.
pub fn enumerate_ch(h: &ChamberElement) -> Vec<SignedPermutation> {
    enumerate_c(h.n())
        .into_iter()
        .filter(|c| c.preserves_blocks(h))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize)]
pub enum SubgroupTag {
    #[serde(rename = "U_H")]
    UH,
    #[serde(rename = "U_H^g")]
    UHg,
    #[serde(rename = "C_H")]
    CH,
    #[serde(rename = "C_H^g")]
    CHg,
}

/// A right coset `S u`, named by its least element.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CosetLabel {
    pub representative: SignedPermutation,
    pub tag: SubgroupTag,
}

/// The right coset `S u` as a sorted list.
pub fn right_coset(subgroup: &[SignedPermutation], u: &SignedPermutation) -> Vec<SignedPermutation> {
    let mut coset: Vec<_> = subgroup.iter().map(|s| s.compose(u)).collect();
    coset.sort();
    coset.dedup();
    coset
}

pub fn coset_label(
    subgroup: &[SignedPermutation],
    u: &SignedPermutation,
    tag: SubgroupTag,
) -> CosetLabel {
    let representative = subgroup
        .iter()
        .map(|s| s.compose(u))
        .min()
        .expect("subgroup contains the identity");
    CosetLabel {
        representative,
        tag,
    }
}

/// Right cosets of `subgroup` partitioning `group`, sorted by representative.
pub fn right_cosets(
    subgroup: &[SignedPermutation],
    group: &[SignedPermutation],
    tag: SubgroupTag,
) -> Vec<CosetLabel> {
    let mut visited = HashSet::new();
    let mut out = Vec::new();
    for u in group {
        if visited.contains(u) {
            continue;
        }
        let coset = right_coset(subgroup, u);
        out.push(CosetLabel {
            representative: coset[0],
            tag,
        });
        visited.extend(coset);
    }
    out.sort_by_key(|c| c.representative);
    out
}

/// Forgets the signs.
pub fn weyl_project(u: &SignedPermutation) -> Vec<usize> {
    (0..u.n()).map(|j| u.image(j)).collect()
}

/// Order-reversing permutation with alternating signs `(-1)^j`, which
/// always has determinant one.
pub fn principal_involution(n: usize) -> SignedPermutation {
    let images: Vec<usize> = (0..n).map(|j| n - 1 - j).collect();
    let negative: Vec<bool> = (0..n).map(|j| j % 2 == 1).collect();
    SignedPermutation::new(&images, &negative).expect("valid size")
}
