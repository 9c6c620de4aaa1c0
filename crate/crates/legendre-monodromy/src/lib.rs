//! Monodromy of periods and elliptic logarithms for sections of elliptic
//! schemes pulled back from the Legendre family y² = x(x−1)(x−λ).
//!
//! The library builds loops in the base that act trivially on the period
//! lattice but move the elliptic logarithm of a section by a nonzero period,
//! and certifies them numerically: free-group combinatorics on the word side,
//! Picard–Fuchs continuation on the period side, root tracking on covers, and
//! lattice-snapped logarithm continuation on the section side.

pub mod cover;
pub mod elog;
pub mod paths;
pub mod periods;
pub mod pipeline;
pub mod rep;
pub mod shell;
pub mod words;
