//! Dynamics of translation flows of `SL(n, R)` acting on `SO(n) = G/AN`.
//!
//! The crate works in the concrete realization `G = SL(n, R)` with `K = SO(n)`,
//! `A` the positive diagonal matrices and `N` the unit upper triangular ones,
//! for `2 <= n <= 8`. A point of `K` stands for the coset `kAN`; a group
//! element `g` moves it to `kappa(g k)`, the orthogonal factor of the QR
//! factorization of `g k`.
//!
//! Modules, bottom-up:
//!
//! * [`linalg`]: Iwasawa factorization, matrix exponential, clustered
//!   eigendecomposition and the tolerance policy.
//! * [`structure`]: roots of `sl(n)`, chamber elements, signed permutation
//!   groups `U`, `C`, their centralizer subgroups and right cosets.
//! * [`jordan`]: multiplicative and additive Jordan decompositions, frame
//!   adaptation and the [`jordan::FlowSpec`] description of a flow.
//! * [`flow`]: the action on `K`, trajectories, omega limits, recurrence and
//!   explicit `(eps, T)`-chains.
//! * [`morse`]: fixed components, minimal Morse components and basins.
//! * [`geometry`]: height function, Borel metric, gradient checks, tangent
//!   splittings and normal hyperbolicity rates.
//! * [`cli`]: scenario files and the `kdyn` command line entry point.

// `!(x > 0.0)` is used deliberately so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod flow;
pub mod geometry;
pub mod jordan;
pub mod linalg;
pub mod morse;
pub mod structure;

pub use error::{Error, Result};
pub use linalg::Mat;
