//! Exact integer-matrix representations: the period representation into the
//! level-2 congruence subgroup of SL2(Z), the cocycle algebra on logarithm
//! offsets, and the combined 3×3 block representation.
//!
//! Convention, imported by every other module: coordinates (n, m) of a
//! period n·ω₁ + m·ω₂ are column vectors acted on the left by rho(g).
//! Analytic continuation operators act on period *values* by the transposed
//! matrices; continuation along a concatenated path composes the value
//! matrices in traversal order.

use crate::words::{LetterKind, Word};
use num_rational::Rational64;
use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum RepError {
    #[error("integer overflow in exact matrix arithmetic")]
    Overflow,
}

/// 2×2 integer matrix with determinant 1, row-major entries.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct Mat2 {
    pub entries: [i128; 4],
}

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2 { entries: [1, 0, 0, 1] };

    pub fn new(a: i128, b: i128, c: i128, d: i128) -> Self {
        Mat2 { entries: [a, b, c, d] }
    }

    pub fn det(&self) -> i128 {
        let [a, b, c, d] = self.entries;
        a * d - b * c
    }

    pub fn mul(&self, rhs: &Mat2) -> Result<Mat2, RepError> {
        let [a, b, c, d] = self.entries;
        let [e, f, g, h] = rhs.entries;
        let prod = |x: i128, y: i128| x.checked_mul(y).ok_or(RepError::Overflow);
        let add = |x: i128, y: i128| x.checked_add(y).ok_or(RepError::Overflow);
        Ok(Mat2 {
            entries: [
                add(prod(a, e)?, prod(b, g)?)?,
                add(prod(a, f)?, prod(b, h)?)?,
                add(prod(c, e)?, prod(d, g)?)?,
                add(prod(c, f)?, prod(d, h)?)?,
            ],
        })
    }

    /// Inverse of a determinant-1 matrix.
    pub fn inverse(&self) -> Mat2 {
        debug_assert_eq!(self.det(), 1);
        let [a, b, c, d] = self.entries;
        Mat2::new(d, -b, -c, a)
    }

    pub fn transpose(&self) -> Mat2 {
        let [a, b, c, d] = self.entries;
        Mat2::new(a, c, b, d)
    }

    pub fn is_identity(&self) -> bool {
        *self == Mat2::IDENTITY
    }
}

/// Integer coordinates (n, m) of the period n·ω₁ + m·ω₂.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct PeriodCoeff {
    pub n: i128,
    pub m: i128,
}

impl PeriodCoeff {
    pub const ZERO: PeriodCoeff = PeriodCoeff { n: 0, m: 0 };

    pub fn new(n: i128, m: i128) -> Self {
        PeriodCoeff { n, m }
    }

    pub fn is_zero(&self) -> bool {
        self.n == 0 && self.m == 0
    }
}

/// Integer pair (u, v): the logarithm offset u·ω₁ + v·ω₂ attached to a loop.
pub type CocycleValue = PeriodCoeff;

/// Image of the generator loop around λ = 0.
pub const RHO_A0: Mat2 = Mat2 { entries: [1, 2, 0, 1] };
/// Image of the generator loop around λ = 1.
pub const RHO_A1: Mat2 = Mat2 { entries: [1, 0, 2, 1] };

/// The period representation on words; d-letters map to the identity.
pub fn rho(w: &Word) -> Result<Mat2, RepError> {
    let mut out = Mat2::IDENTITY;
    for l in w.letters() {
        let base = match l.kind {
            LetterKind::A0 => RHO_A0,
            LetterKind::A1 => RHO_A1,
            LetterKind::D(_) => Mat2::IDENTITY,
        };
        let m = if l.inverted { base.inverse() } else { base };
        out = out.mul(&m)?;
    }
    Ok(out)
}

/// Membership in the free congruence subgroup: congruent to the identity
/// mod 2 with both diagonal entries congruent to 1 mod 4.
pub fn in_gamma2(m: &Mat2) -> bool {
    debug_assert_eq!(m.det(), 1);
    let [a, b, c, d] = m.entries;
    b % 2 == 0 && c % 2 == 0 && a.rem_euclid(4) == 1 && d.rem_euclid(4) == 1
}

/// Left action on period coordinates.
pub fn act_on_period(m: &Mat2, c: &PeriodCoeff) -> PeriodCoeff {
    let [a, b, cc, d] = m.entries;
    PeriodCoeff::new(a * c.n + b * c.m, cc * c.n + d * c.m)
}

/// Composition law of (matrix, offset) pairs:
/// (u_gh, v_gh) = (u_g, v_g) + (u_h, v_h)·ρ(g)ᵗ, matrices multiplying.
pub fn cocycle_compose(
    g: (Mat2, CocycleValue),
    h: (Mat2, CocycleValue),
) -> Result<(Mat2, CocycleValue), RepError> {
    let m = g.0.mul(&h.0)?;
    // Row vector times ρ(g)ᵗ equals ρ(g) applied to the column.
    let transported = act_on_period(&g.0, &h.1);
    let w = PeriodCoeff::new(g.1.n + transported.n, g.1.m + transported.m);
    Ok((m, w))
}

/// Solve for a single integer pair (u, v) with
/// (u_g, v_g) = (u, v)·(ρ(g)ᵗ − I) for every supplied generator pair;
/// None when no integer solution exists.
pub fn solve_coboundary(gens: &[(Mat2, CocycleValue)]) -> Option<PeriodCoeff> {
    // As columns: w_g = (ρ(g) − I)·x with x = (u, v)ᵗ. Gather all generator
    // equations into one rational least-constrained solve, then verify.
    let mut rows: Vec<([Rational64; 2], Rational64)> = Vec::new();
    let coeff = |x: i128| -> Option<Rational64> {
        Some(Rational64::from_integer(i64::try_from(x).ok()?))
    };
    for (m, w) in gens {
        let [a, b, c, d] = m.entries;
        rows.push(([coeff(a - 1)?, coeff(b)?], coeff(w.n)?));
        rows.push(([coeff(c)?, coeff(d - 1)?], coeff(w.m)?));
    }

    // Gaussian elimination on the (2-unknown) system.
    let zero = Rational64::from_integer(0);
    let mut pivot_rows: Vec<([Rational64; 2], Rational64)> = Vec::new();
    for col in 0..2 {
        if let Some(pos) = rows.iter().position(|(r, _)| r[col] != zero) {
            let (prow, prhs) = rows.remove(pos);
            for (r, rhs) in rows.iter_mut().chain(pivot_rows.iter_mut()) {
                if r[col] != zero {
                    let factor = r[col] / prow[col];
                    for c2 in 0..2 {
                        r[c2] -= factor * prow[c2];
                    }
                    *rhs -= factor * prhs;
                }
            }
            pivot_rows.push((prow, prhs));
        }
    }
    // Remaining rows must be consistent.
    if rows.iter().any(|(r, rhs)| r[0] == zero && r[1] == zero && *rhs != zero) {
        return None;
    }
    // Back out the solution; free variables default to 0.
    let mut x = [zero, zero];
    for (r, rhs) in pivot_rows.iter().rev() {
        let col = (0..2).find(|&c| r[c] != zero)?;
        let mut acc = *rhs;
        for c2 in col + 1..2 {
            acc -= r[c2] * x[c2];
        }
        x[col] = acc / r[col];
    }
    if !x[0].is_integer() || !x[1].is_integer() {
        return None;
    }
    let sol = PeriodCoeff::new(*x[0].numer() as i128, *x[1].numer() as i128);
    // Verify by substitution, exactly.
    for (m, w) in gens {
        let mx = act_on_period(m, &sol);
        if mx.n - sol.n != w.n || mx.m - sol.m != w.m {
            return None;
        }
    }
    Some(sol)
}

/// 3×3 block matrix [[ρ, w],[0, 1]] in SL3(Z).
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Mat3 {
    pub block: Mat2,
    pub w: CocycleValue,
}

impl Mat3 {
    pub const IDENTITY: Mat3 = Mat3 { block: Mat2::IDENTITY, w: PeriodCoeff::ZERO };

    pub fn mul(&self, rhs: &Mat3) -> Result<Mat3, RepError> {
        let (block, w) = cocycle_compose((self.block, self.w), (rhs.block, rhs.w))?;
        Ok(Mat3 { block, w })
    }

    pub fn rows(&self) -> [[i128; 3]; 3] {
        let [a, b, c, d] = self.block.entries;
        [[a, b, self.w.n], [c, d, self.w.m], [0, 0, 1]]
    }
}

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum ThetaError {
    #[error("no cocycle value supplied for letter `{0}`")]
    MissingCocycleValue(String),
    #[error(transparent)]
    Rep(#[from] RepError),
}

/// The combined representation: per-letter matrices ρ with supplied offsets.
pub fn theta(
    w: &Word,
    section_cocycle: &dyn Fn(crate::words::Letter) -> Option<CocycleValue>,
) -> Result<Mat3, ThetaError> {
    let mut out = Mat3::IDENTITY;
    for &l in w.letters() {
        let base_letter = crate::words::Letter { kind: l.kind, inverted: false };
        let base_rho = rho(&Word::from_letter(base_letter))?;
        let base_w = section_cocycle(base_letter)
            .ok_or_else(|| ThetaError::MissingCocycleValue(base_letter.to_string()))?;
        let m3 = if l.inverted {
            // Inverse of [[ρ, w],[0,1]] is [[ρ⁻¹, −ρ⁻¹w],[0,1]].
            let inv = base_rho.inverse();
            let neg = act_on_period(&inv, &base_w);
            Mat3 { block: inv, w: PeriodCoeff::new(-neg.n, -neg.m) }
        } else {
            Mat3 { block: base_rho, w: base_w }
        };
        out = out.mul(&m3)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::words::{Alphabet, Letter};

    fn ab() -> Alphabet {
        Alphabet::new(1)
    }

    #[test]
    fn rho_on_generators() {
        assert_eq!(rho(&ab().parse("a0").unwrap()).unwrap(), Mat2::new(1, 2, 0, 1));
        assert_eq!(rho(&ab().parse("a1").unwrap()).unwrap(), Mat2::new(1, 0, 2, 1));
        assert_eq!(rho(&ab().parse("d1").unwrap()).unwrap(), Mat2::IDENTITY);
    }

    #[test]
    fn rho_is_a_homomorphism() {
        let u = ab().parse("a0 a1 A0").unwrap();
        let v = ab().parse("a1 a1 a0").unwrap();
        let lhs = rho(&u.mul(&v)).unwrap();
        let rhs = rho(&u).unwrap().mul(&rho(&v).unwrap()).unwrap();
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn gamma2_membership() {
        assert!(in_gamma2(&Mat2::IDENTITY));
        assert!(in_gamma2(&RHO_A0));
        assert!(in_gamma2(&RHO_A1));
        assert!(!in_gamma2(&Mat2::new(0, -1, 1, 0)));
        let w = ab().parse("a0 A1 a0 a1 A0").unwrap();
        assert!(in_gamma2(&rho(&w).unwrap()));
        assert_eq!(rho(&w).unwrap().det(), 1);
    }

    #[test]
    fn period_action_matches_continuation_relations() {
        // Around 0 the second period gains twice the first.
        assert_eq!(act_on_period(&RHO_A0, &PeriodCoeff::new(0, 1)), PeriodCoeff::new(2, 1));
        // Around 1 the first period gains twice the second.
        assert_eq!(act_on_period(&RHO_A1, &PeriodCoeff::new(1, 0)), PeriodCoeff::new(1, 2));
        assert_eq!(
            act_on_period(&Mat2::IDENTITY, &PeriodCoeff::new(5, -3)),
            PeriodCoeff::new(5, -3)
        );
    }

    #[test]
    fn cocycle_composition() {
        let (m, w) = cocycle_compose(
            (Mat2::IDENTITY, PeriodCoeff::new(1, 0)),
            (Mat2::IDENTITY, PeriodCoeff::new(0, 1)),
        )
        .unwrap();
        assert_eq!(m, Mat2::IDENTITY);
        assert_eq!(w, PeriodCoeff::new(1, 1));

        let (m, w) = cocycle_compose(
            (RHO_A0, PeriodCoeff::ZERO),
            (Mat2::IDENTITY, PeriodCoeff::new(0, 1)),
        )
        .unwrap();
        assert_eq!(m, RHO_A0);
        assert_eq!(w, PeriodCoeff::new(2, 1));

        let x = (RHO_A1, PeriodCoeff::new(3, -2));
        let id = (Mat2::IDENTITY, PeriodCoeff::ZERO);
        assert_eq!(cocycle_compose(x, id).unwrap(), x);
    }

    #[test]
    fn coboundary_solved_and_verified() {
        let sol = solve_coboundary(&[(RHO_A0, PeriodCoeff::new(2, 0))]).unwrap();
        assert_eq!(sol, PeriodCoeff::new(0, 1));
        assert_eq!(solve_coboundary(&[]).unwrap_or(PeriodCoeff::ZERO), PeriodCoeff::ZERO);
        assert_eq!(
            solve_coboundary(&[(RHO_A0, PeriodCoeff::ZERO), (RHO_A1, PeriodCoeff::ZERO)]),
            Some(PeriodCoeff::ZERO)
        );
        assert_eq!(solve_coboundary(&[(Mat2::IDENTITY, PeriodCoeff::new(1, 0))]), None);
    }

    #[test]
    fn coboundary_detects_non_integer_solutions() {
        // (ρ(a0) − I)x = (1, 0)ᵗ gives 2m = 1: rational but not integral.
        assert_eq!(solve_coboundary(&[(RHO_A0, PeriodCoeff::new(1, 0))]), None);
    }

    #[test]
    fn theta_is_homomorphic_and_blocked() {
        let cocycle = |l: Letter| {
            Some(match l.kind {
                LetterKind::A0 => PeriodCoeff::new(1, 0),
                LetterKind::A1 => PeriodCoeff::new(0, 1),
                LetterKind::D(_) => PeriodCoeff::new(1, 1),
            })
        };
        assert_eq!(theta(&Word::identity(), &cocycle).unwrap(), Mat3::IDENTITY);

        let single = theta(&ab().parse("a0").unwrap(), &cocycle).unwrap();
        assert_eq!(single.block, RHO_A0);
        assert_eq!(single.w, PeriodCoeff::new(1, 0));

        let cancel = theta(&ab().parse("a0").unwrap().mul(&ab().parse("A0").unwrap()), &cocycle)
            .unwrap();
        assert_eq!(cancel, Mat3::IDENTITY);

        // Explicit inverse letter (word already reduced).
        let w = ab().parse("A0").unwrap();
        let inv = theta(&w, &cocycle).unwrap();
        assert_eq!(single.mul(&inv).unwrap(), Mat3::IDENTITY);
    }

    #[test]
    fn theta_on_kernel_words_is_pure_translation() {
        let cocycle = |l: Letter| {
            Some(match l.kind {
                LetterKind::A0 => PeriodCoeff::new(2, -1),
                LetterKind::A1 => PeriodCoeff::new(0, 3),
                LetterKind::D(_) => PeriodCoeff::new(1, 1),
            })
        };
        let gamma = ab().parse("a1 d1 A1 D1").unwrap();
        let m = theta(&gamma, &cocycle).unwrap();
        assert!(m.block.is_identity());
        // Offset computed by hand: w_a1 + ρ(a1)w_d − w_d − 0 transported.
        assert!(!matches!(m.w, PeriodCoeff { n: 0, m: 0 }));
    }

    #[test]
    fn theta_reports_missing_values() {
        let cocycle = |_l: Letter| None;
        assert!(matches!(
            theta(&ab().parse("a0").unwrap(), &cocycle),
            Err(ThetaError::MissingCocycleValue(_))
        ));
    }
}
