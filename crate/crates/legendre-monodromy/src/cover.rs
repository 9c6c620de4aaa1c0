//! Finite covers of the punctured λ-line cut out by a bivariate polynomial
//! P(λ, w): numerical fibers, branch locus via the discriminant, path
//! lifting by predictor–corrector root tracking, fiber-monodromy
//! permutations, kernel-word searches for sheet transport, ζ-loops, and
//! ramification-index arithmetic.

use crate::paths::{realize, PathError, Piece, PlanePath, PuncturedPlane};
use crate::words::{in_kernel, Letter, LetterKind, Word};
use num_complex::Complex64;
use num_rational::Rational64;
use num_traits::ToPrimitive;
use std::collections::{HashMap, HashSet, VecDeque};
use thiserror::Error;

type C = Complex64;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum CoverError {
    #[error("cover polynomial must have w-degree at least 2 and be squarefree in w")]
    DegenerateSpec,
    #[error("two fiber points collide near λ = {0}: gap {1} below tolerance {2}")]
    NearBranchPoint(C, f64, f64),
    #[error("sheet collision while tracking roots near λ = {0}")]
    SheetCollision(C),
    #[error("point (λ, w) = ({0}, {1}) does not lie over the path start {2}")]
    LiftStartMismatch(C, C, C),
    #[error("no transporting kernel word found within bounds; searched {frontier} words")]
    NotFound { frontier: usize },
    #[error("lift expected to close did not close (internal consistency failure)")]
    LiftNotClosed,
    #[error(transparent)]
    Path(#[from] PathError),
    #[error("basepoint {0} is within tolerance of the branch locus")]
    BadBasepoint(C),
}

/// Bivariate polynomial Σ c_{ij} λⁱ wʲ with exact rational coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct CoverSpec {
    terms: Vec<(u32, u32, Rational64)>,
    degree_w: u32,
}

impl CoverSpec {
    pub fn new(terms: Vec<(u32, u32, Rational64)>) -> Result<Self, CoverError> {
        let degree_w = terms
            .iter()
            .filter(|(_, _, c)| *c != Rational64::from_integer(0))
            .map(|&(_, j, _)| j)
            .max()
            .unwrap_or(0);
        if degree_w < 2 {
            return Err(CoverError::DegenerateSpec);
        }
        let spec = CoverSpec { terms, degree_w };
        // Squarefree in w: the discriminant must not vanish identically.
        if discriminant_poly(&spec).iter().all(|c| c.norm() < 1e-12) {
            return Err(CoverError::DegenerateSpec);
        }
        Ok(spec)
    }

    /// The Masser cover w² = 2 − λ.
    pub fn masser() -> Self {
        let one = Rational64::from_integer(1);
        CoverSpec::new(vec![
            (0, 2, one),
            (1, 0, one),
            (0, 0, Rational64::from_integer(-2)),
        ])
        .expect("fixed fixture")
    }

    /// The degree-4 cyclic cover w⁴ = 2 − λ.
    pub fn quartic() -> Self {
        let one = Rational64::from_integer(1);
        CoverSpec::new(vec![
            (0, 4, one),
            (1, 0, one),
            (0, 0, Rational64::from_integer(-2)),
        ])
        .expect("fixed fixture")
    }

    pub fn terms(&self) -> &[(u32, u32, Rational64)] {
        &self.terms
    }

    pub fn degree_w(&self) -> u32 {
        self.degree_w
    }

    /// Coefficients of P(λ, ·) as a univariate polynomial in w.
    pub fn w_poly(&self, lambda: C) -> Vec<C> {
        let mut coeffs = vec![C::new(0.0, 0.0); self.degree_w as usize + 1];
        for &(i, j, c) in &self.terms {
            let cv = c.to_f64().expect("rational fits in f64");
            coeffs[j as usize] += lambda.powu(i) * cv;
        }
        coeffs
    }

    pub fn eval(&self, lambda: C, w: C) -> C {
        self.terms
            .iter()
            .map(|&(i, j, c)| lambda.powu(i) * w.powu(j) * c.to_f64().unwrap())
            .sum()
    }

    pub fn eval_dw(&self, lambda: C, w: C) -> C {
        self.terms
            .iter()
            .filter(|&&(_, j, _)| j > 0)
            .map(|&(i, j, c)| lambda.powu(i) * w.powu(j - 1) * (j as f64 * c.to_f64().unwrap()))
            .sum()
    }

    pub fn eval_dlambda(&self, lambda: C, w: C) -> C {
        self.terms
            .iter()
            .filter(|&&(i, _, _)| i > 0)
            .map(|&(i, j, c)| lambda.powu(i - 1) * w.powu(j) * (i as f64 * c.to_f64().unwrap()))
            .sum()
    }

    fn lambda_degree(&self) -> u32 {
        self.terms
            .iter()
            .filter(|(_, _, c)| *c != Rational64::from_integer(0))
            .map(|&(i, _, _)| i)
            .max()
            .unwrap_or(0)
    }
}

/// A point of the cover with its stable sheet label (1-based, fixed by
/// lexicographic (re, im) order of the fiber at the labeling point).
#[derive(Clone, Copy, Debug)]
pub struct FiberPoint {
    pub lambda: C,
    pub w: C,
    pub sheet: usize,
}

/// Roots of a complex polynomial by the Aberth–Ehrlich iteration.
pub fn poly_roots(coeffs: &[C]) -> Vec<C> {
    // Trim leading (high-order) zeros.
    let mut c: Vec<C> = coeffs.to_vec();
    let scale = c.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
    while c.len() > 1 && c.last().unwrap().norm() < 1e-14 * scale {
        c.pop();
    }
    let n = c.len() - 1;
    if n == 0 {
        return Vec::new();
    }
    if n == 1 {
        return vec![-c[0] / c[1]];
    }
    // Initial guesses on a circle of the Cauchy bound radius.
    let lead = c[n].norm();
    let r = 1.0 + c[..n].iter().map(|z| z.norm()).fold(0.0, f64::max) / lead;
    let mut z: Vec<C> = (0..n)
        .map(|k| C::from_polar(r, 2.0 * std::f64::consts::PI * (k as f64 + 0.27) / n as f64 + 0.61))
        .collect();
    let eval = |x: C| -> (C, C) {
        let mut p = C::new(0.0, 0.0);
        let mut dp = C::new(0.0, 0.0);
        for &ck in c.iter().rev() {
            dp = dp * x + p;
            p = p * x + ck;
        }
        (p, dp)
    };
    for _ in 0..300 {
        let mut max_move = 0.0_f64;
        let zs = z.clone();
        for i in 0..n {
            let (p, dp) = eval(zs[i]);
            if p.norm() == 0.0 {
                continue;
            }
            let newton = if dp.norm() > 0.0 { p / dp } else { C::new(1e-8, 0.0) };
            let mut s = C::new(0.0, 0.0);
            for (j, &zj) in zs.iter().enumerate() {
                if j != i {
                    s += (zs[i] - zj).finv();
                }
            }
            let denom = C::new(1.0, 0.0) - newton * s;
            let step = if denom.norm() > 1e-300 { newton / denom } else { newton };
            z[i] -= step;
            max_move = max_move.max(step.norm());
        }
        if max_move < 1e-14 * (1.0 + r) {
            break;
        }
    }
    // Polish with plain Newton.
    for zi in z.iter_mut() {
        for _ in 0..4 {
            let (p, dp) = eval(*zi);
            if dp.norm() > 0.0 {
                *zi -= p / dp;
            }
        }
    }
    z
}

fn lex_sort(points: &mut [C]) {
    points.sort_by(|a, b| {
        a.re.partial_cmp(&b.re)
            .unwrap()
            .then(a.im.partial_cmp(&b.im).unwrap())
    });
}

/// The N fiber points over λ₀ with stable lexicographic sheet labels.
pub fn fiber(spec: &CoverSpec, lambda0: C) -> Result<Vec<FiberPoint>, CoverError> {
    let mut roots = poly_roots(&spec.w_poly(lambda0));
    if roots.len() != spec.degree_w as usize {
        return Err(CoverError::NearBranchPoint(lambda0, 0.0, 0.0));
    }
    lex_sort(&mut roots);
    let tol = collision_tolerance(&roots);
    for (i, a) in roots.iter().enumerate() {
        for b in &roots[..i] {
            let gap = (a - b).norm();
            if gap < tol {
                return Err(CoverError::NearBranchPoint(lambda0, gap, tol));
            }
        }
    }
    Ok(roots
        .into_iter()
        .enumerate()
        .map(|(k, w)| FiberPoint { lambda: lambda0, w, sheet: k + 1 })
        .collect())
}

fn collision_tolerance(roots: &[C]) -> f64 {
    let mut min_gap = f64::INFINITY;
    for (i, a) in roots.iter().enumerate() {
        for b in &roots[..i] {
            min_gap = min_gap.min((a - b).norm());
        }
    }
    if min_gap.is_finite() {
        1e-6 * min_gap
    } else {
        1e-12
    }
}

/// Coefficients (in λ) of the discriminant-carrying resultant
/// Res_w(P, ∂P/∂w), computed by evaluation at scaled roots of unity and
/// inverse discrete Fourier interpolation.
fn discriminant_poly(spec: &CoverSpec) -> Vec<C> {
    let n = spec.degree_w as usize;
    let dl = spec.lambda_degree() as usize;
    let size = 2 * n - 1;
    let deg_bound = dl * size;
    let m = deg_bound + 1;
    let radius = 1.2799137;
    let samples: Vec<C> = (0..m)
        .map(|k| {
            let lam = C::from_polar(radius, 2.0 * std::f64::consts::PI * k as f64 / m as f64);
            sylvester_det(spec, lam)
        })
        .collect();
    // Inverse DFT, then undo the radius scaling per coefficient.
    let mut coeffs = Vec::with_capacity(m);
    for j in 0..m {
        let mut acc = C::new(0.0, 0.0);
        for (k, s) in samples.iter().enumerate() {
            let ang = -2.0 * std::f64::consts::PI * (j * k % m) as f64 / m as f64;
            acc += s * C::from_polar(1.0, ang);
        }
        coeffs.push(acc / m as f64 / radius.powi(j as i32));
    }
    let scale = coeffs.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
    while coeffs.len() > 1 && coeffs.last().unwrap().norm() < 1e-8 * scale {
        coeffs.pop();
    }
    coeffs
}

fn sylvester_det(spec: &CoverSpec, lambda: C) -> C {
    let p = spec.w_poly(lambda);
    let n = p.len() - 1;
    let q: Vec<C> = (1..=n).map(|j| p[j] * j as f64).collect();
    let nq = q.len() - 1;
    let size = n + nq;
    let mut m = vec![vec![C::new(0.0, 0.0); size]; size];
    for (row, row_vals) in m.iter_mut().enumerate().take(nq) {
        for (k, &pk) in p.iter().enumerate() {
            row_vals[row + n - k] = pk;
        }
    }
    for row in 0..n {
        for (k, &qk) in q.iter().enumerate() {
            m[nq + row][row + nq - k] = qk;
        }
    }
    // LU with partial pivoting.
    let mut det = C::new(1.0, 0.0);
    for col in 0..size {
        let (pivot, pv) = (col..size)
            .map(|r| (r, m[r][col].norm()))
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap();
        if pv < 1e-300 {
            return C::new(0.0, 0.0);
        }
        if pivot != col {
            m.swap(pivot, col);
            det = -det;
        }
        det *= m[col][col];
        for r in col + 1..size {
            let f = m[r][col] / m[col][col];
            let (top, rest) = m.split_at_mut(r);
            for (pivot_row, entry) in top[col][col..size].iter().zip(&mut rest[0][col..size]) {
                *entry -= pivot_row * f;
            }
        }
    }
    det
}

/// A branch point of the cover, tagged by membership in {0, 1}.
#[derive(Clone, Copy, Debug)]
pub struct BranchPoint {
    pub location: C,
    pub in_bad_set: bool,
}

/// Roots of the w-discriminant of P, with multiple-root clusters merged.
///
/// A root of multiplicity m comes back from the solver as a cluster of m
/// points spread over roughly eps^(1/m), far wider than machine precision,
/// so nearby roots are grouped with a relative tolerance of 1e-4 and each
/// cluster is replaced by its centroid (accurate to higher order).
pub fn branch_locus(spec: &CoverSpec) -> Vec<BranchPoint> {
    let disc = discriminant_poly(spec);
    let mut roots = poly_roots(&disc);
    lex_sort(&mut roots);
    let mut clusters: Vec<Vec<C>> = Vec::new();
    for r in roots {
        let tol = 1e-4 * r.norm().max(1.0);
        match clusters
            .iter_mut()
            .find(|c| c.iter().any(|o| (o - r).norm() < tol))
        {
            Some(c) => c.push(r),
            None => clusters.push(vec![r]),
        }
    }
    clusters
        .into_iter()
        .map(|c| {
            let location = c.iter().sum::<C>() / c.len() as f64;
            BranchPoint {
                location,
                in_bad_set: (location.norm() < 1e-4)
                    || ((location - C::new(1.0, 0.0)).norm() < 1e-4),
            }
        })
        .collect()
}

/// A path lifted to the cover by root tracking.
#[derive(Clone, Debug)]
pub struct LiftedPath {
    pub base: PlanePath,
    /// Sampled w-values of the tracked sheet.
    pub sheet_trace: Vec<C>,
    pub start: FiberPoint,
    pub end: FiberPoint,
}

/// Track the whole fiber along one sub-interval of a piece. `ws` is updated
/// in place; returns the λ reached.
fn track_fiber_segment(
    spec: &CoverSpec,
    piece: &Piece,
    t0: f64,
    t1: f64,
    ws: &mut [C],
    collision_tol: f64,
    mut on_sample: impl FnMut(f64, &[C]),
) -> Result<(), CoverError> {
    let mut t = t0;
    let span = t1 - t0;
    if span == 0.0 {
        return Ok(());
    }
    let mut dt = span * 0.05;
    let min_dt = span.abs() * 1e-9;
    while (t1 - t) / span > 1e-15 {
        if dt.abs() > (t1 - t).abs() {
            dt = t1 - t;
        }
        let lam0 = piece.point(t);
        let lam1 = piece.point(t + dt);
        let mut proposal: Vec<C> = Vec::with_capacity(ws.len());
        let mut ok = true;
        for &w in ws.iter() {
            // Predictor: implicit-derivative Euler step.
            let dw = -spec.eval_dlambda(lam0, w) / spec.eval_dw(lam0, w);
            let mut wn = w + dw * (lam1 - lam0);
            // Corrector: Newton on P(λ₁, ·).
            let mut converged = false;
            for _ in 0..20 {
                let pv = spec.eval(lam1, wn);
                let dv = spec.eval_dw(lam1, wn);
                if dv.norm() < 1e-300 {
                    break;
                }
                let step = pv / dv;
                wn -= step;
                if step.norm() < 1e-13 * (1.0 + wn.norm()) {
                    converged = true;
                    break;
                }
            }
            // Reject steps that moved suspiciously far: possible sheet jump.
            if !converged || (wn - w).norm() > 0.25 * nearest_other_gap(ws, w).max(collision_tol) {
                ok = false;
                break;
            }
            proposal.push(wn);
        }
        if ok {
            // Pairwise separation of the updated fiber.
            'outer: for (i, a) in proposal.iter().enumerate() {
                for b in &proposal[..i] {
                    if (a - b).norm() < collision_tol {
                        ok = false;
                        break 'outer;
                    }
                }
            }
        }
        if ok {
            ws.copy_from_slice(&proposal);
            t += dt;
            on_sample(t, ws);
            dt *= 1.6;
        } else {
            dt *= 0.5;
            if dt.abs() < min_dt {
                return Err(CoverError::SheetCollision(piece.point(t)));
            }
        }
    }
    Ok(())
}

fn nearest_other_gap(ws: &[C], w: C) -> f64 {
    ws.iter()
        .filter(|&&o| o != w)
        .map(|o| (o - w).norm())
        .fold(f64::INFINITY, f64::min)
}

/// A permutation of sheets 0..N−1. `compose` applies `self` first, then
/// `other`, matching left-to-right path traversal.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Perm(pub Vec<usize>);

impl Perm {
    pub fn identity(n: usize) -> Self {
        Perm((0..n).collect())
    }

    pub fn apply(&self, s: usize) -> usize {
        self.0[s]
    }

    pub fn compose(&self, other: &Perm) -> Perm {
        Perm(self.0.iter().map(|&s| other.0[s]).collect())
    }

    pub fn inverse(&self) -> Perm {
        let mut inv = vec![0; self.0.len()];
        for (i, &v) in self.0.iter().enumerate() {
            inv[v] = i;
        }
        Perm(inv)
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().enumerate().all(|(i, &v)| i == v)
    }

    pub fn cycle_lengths(&self) -> Vec<usize> {
        let n = self.0.len();
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            let mut len = 0;
            let mut cur = start;
            while !seen[cur] {
                seen[cur] = true;
                cur = self.0[cur];
                len += 1;
            }
            out.push(len);
        }
        out
    }
}

/// A cover anchored at a basepoint, with the branch-point plane, the labeled
/// base fiber, and the fiber monodromy of every generator letter
/// precomputed.
#[derive(Clone, Debug)]
pub struct Cover {
    pub spec: CoverSpec,
    pub plane: PuncturedPlane,
    pub radius: f64,
    base_fiber: Vec<FiberPoint>,
    letter_perms: HashMap<(LetterKind, bool), Perm>,
    collision_tol: f64,
}

impl Cover {
    pub fn new(spec: CoverSpec, basepoint: C) -> Result<Self, CoverError> {
        let branch: Vec<C> = branch_locus(&spec)
            .into_iter()
            .filter(|b| !b.in_bad_set)
            .map(|b| b.location)
            .collect();
        for b in &branch {
            if (basepoint - b).norm() < 1e-6 {
                return Err(CoverError::BadBasepoint(basepoint));
            }
        }
        let plane = PuncturedPlane::new(&branch, basepoint)?;
        let radius = plane.default_radius();
        let base_fiber = fiber(&spec, basepoint)?;
        let roots: Vec<C> = base_fiber.iter().map(|f| f.w).collect();
        let collision_tol = collision_tolerance(&roots);
        let mut cover = Cover {
            spec,
            plane,
            radius,
            base_fiber,
            letter_perms: HashMap::new(),
            collision_tol,
        };
        let mut kinds = vec![LetterKind::A0, LetterKind::A1];
        kinds.extend((1..=branch.len() as u32).map(LetterKind::D));
        for kind in kinds {
            let letter = Letter { kind, inverted: false };
            let perm = cover.perm_of_loop(&Word::from_letter(letter))?;
            cover.letter_perms.insert((kind, true), perm.inverse());
            cover.letter_perms.insert((kind, false), perm);
        }
        Ok(cover)
    }

    pub fn degree(&self) -> usize {
        self.spec.degree_w as usize
    }

    pub fn base_fiber(&self) -> &[FiberPoint] {
        &self.base_fiber
    }

    pub fn base_point(&self, sheet: usize) -> FiberPoint {
        self.base_fiber[sheet - 1]
    }

    pub fn k(&self) -> u32 {
        (self.plane.punctures().len() - 2) as u32
    }

    /// Track the whole fiber around a realized loop and read off the sheet
    /// permutation by matching against the labeled base fiber.
    fn perm_of_loop(&self, w: &Word) -> Result<Perm, CoverError> {
        let path = realize(w, &self.plane, self.radius)?;
        let mut ws: Vec<C> = self.base_fiber.iter().map(|f| f.w).collect();
        for piece in path.pieces() {
            track_fiber_segment(&self.spec, piece, 0.0, 1.0, &mut ws, self.collision_tol, |_, _| {})?;
        }
        let mut images = Vec::with_capacity(ws.len());
        for wv in &ws {
            let (best, gap) = self
                .base_fiber
                .iter()
                .map(|f| (f.sheet, (f.w - wv).norm()))
                .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
                .unwrap();
            if gap > 0.4 * nearest_other_gap(&self.base_fiber.iter().map(|f| f.w).collect::<Vec<_>>(), self.base_fiber[best - 1].w) {
                return Err(CoverError::SheetCollision(path.end()));
            }
            images.push(best - 1);
        }
        Ok(Perm(images))
    }

    /// The sheet permutation of an arbitrary word, composed from the cached
    /// generator permutations (left-to-right traversal).
    pub fn fiber_monodromy(&self, w: &Word) -> Perm {
        let mut perm = Perm::identity(self.degree());
        for l in w.letters() {
            let p = &self.letter_perms[&(l.kind, l.inverted)];
            perm = perm.compose(p);
        }
        perm
    }

    /// Lift a realized path from a fiber point by root tracking.
    pub fn lift_path(&self, path: &PlanePath, start: &FiberPoint) -> Result<LiftedPath, CoverError> {
        if (start.lambda - path.start()).norm() > 1e-8 {
            return Err(CoverError::LiftStartMismatch(start.lambda, start.w, path.start()));
        }
        let start_fiber = fiber(&self.spec, path.start())?;
        let mut ws: Vec<C> = start_fiber.iter().map(|f| f.w).collect();
        // Locate the tracked index.
        let (idx, gap) = ws
            .iter()
            .enumerate()
            .map(|(i, w)| (i, (w - start.w).norm()))
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap();
        if gap > self.collision_tol.max(1e-8) {
            return Err(CoverError::LiftStartMismatch(start.lambda, start.w, path.start()));
        }
        let mut trace = vec![ws[idx]];
        for piece in path.pieces() {
            track_fiber_segment(&self.spec, piece, 0.0, 1.0, &mut ws, self.collision_tol, |_, cur| {
                trace.push(cur[idx]);
            })?;
        }
        let end_fiber = fiber(&self.spec, path.end())?;
        let (end_sheet, egap) = end_fiber
            .iter()
            .map(|f| (f.sheet, (f.w - ws[idx]).norm()))
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap();
        if egap > 1e-6 {
            return Err(CoverError::SheetCollision(path.end()));
        }
        Ok(LiftedPath {
            base: path.clone(),
            sheet_trace: trace,
            start: *start,
            end: end_fiber[end_sheet - 1],
        })
    }

    /// Galois test: the monodromy group acts freely, equivalently its order
    /// equals the degree for a transitive action.
    pub fn is_galois(&self) -> bool {
        let n = self.degree();
        let gens: Vec<&Perm> = self.letter_perms.values().collect();
        let mut group: HashSet<Perm> = HashSet::new();
        let mut queue = vec![Perm::identity(n)];
        group.insert(Perm::identity(n));
        while let Some(p) = queue.pop() {
            for g in &gens {
                let q = p.compose(g);
                if group.insert(q.clone()) {
                    queue.push(q);
                }
            }
        }
        let transitive = {
            let mut reach = HashSet::new();
            for p in &group {
                reach.insert(p.apply(0));
            }
            reach.len() == n
        };
        let free = group.iter().all(|p| p.is_identity() || (0..n).all(|s| p.apply(s) != s));
        transitive && free && group.len() == n
    }

    /// Breadth-first search for a kernel word whose sheet transport takes
    /// `from` to `to` (1-based), first over d-only words up to `max_len`,
    /// then over iterated-commutator generators up to `max_level`.
    pub fn find_delta(
        &self,
        from: usize,
        to: usize,
        max_level: u32,
        max_len: usize,
    ) -> Result<Word, CoverError> {
        if from == to {
            return Ok(Word::identity());
        }
        let target = |perm: &Perm| perm.apply(from - 1) == to - 1;
        let mut searched = 0usize;

        // Phase 1: words in d-letters only.
        let mut d_letters = Vec::new();
        for i in 1..=self.k() {
            d_letters.push(Letter::d(i));
            d_letters.push(Letter::d(i).inverse());
        }
        let mut frontier: VecDeque<(Word, Perm)> =
            VecDeque::from([(Word::identity(), Perm::identity(self.degree()))]);
        let mut seen: HashSet<Perm> = HashSet::from([Perm::identity(self.degree())]);
        while let Some((word, perm)) = frontier.pop_front() {
            if word.len() > max_len {
                break;
            }
            searched += 1;
            if target(&perm) {
                return Ok(word);
            }
            for &l in &d_letters {
                let next = word.mul(&Word::from_letter(l));
                if next.len() <= word.len() || next.len() > max_len {
                    continue;
                }
                let p = perm.compose(&self.letter_perms[&(l.kind, l.inverted)]);
                if seen.insert(p.clone()) {
                    frontier.push_back((next, p));
                }
            }
        }

        // Phase 2: products of iterated commutator generators.
        let mut gens: Vec<Word> = d_letters.iter().map(|&l| Word::from_letter(l)).collect();
        for _level in 1..=max_level {
            let mut next_gens = Vec::new();
            for a in [Letter::a0(), Letter::a1(), Letter::a0().inverse(), Letter::a1().inverse()] {
                for g in &gens {
                    next_gens.push(Word::commutator(&Word::from_letter(a), g));
                }
            }
            gens.extend(next_gens);
        }
        let gen_perms: Vec<Perm> = gens.iter().map(|g| self.fiber_monodromy(g)).collect();
        let mut frontier: VecDeque<(Word, Perm)> =
            VecDeque::from([(Word::identity(), Perm::identity(self.degree()))]);
        // Deduplicating on the permutation (at most degree! states) keeps the
        // search bounded even when the generator set cannot reach the target.
        let mut seen: HashSet<Perm> = HashSet::from([Perm::identity(self.degree())]);
        for _depth in 0..max_len {
            let mut next_frontier = VecDeque::new();
            while let Some((word, perm)) = frontier.pop_front() {
                searched += 1;
                if target(&perm) {
                    debug_assert!(in_kernel(&word));
                    return Ok(word);
                }
                for (g, gp) in gens.iter().zip(&gen_perms) {
                    let p = perm.compose(gp);
                    if seen.insert(p.clone()) {
                        next_frontier.push_back((word.mul(g), p));
                    }
                }
            }
            frontier = next_frontier;
        }
        Err(CoverError::NotFound { frontier: searched })
    }

    /// Ramification profile over λ = 0 or λ = 1: cycle lengths of the local
    /// monodromy permutation.
    pub fn ramification_profile(&self, over: LetterKind) -> RamificationProfile {
        let perm = &self.letter_perms[&(over, false)];
        RamificationProfile {
            base: match over {
                LetterKind::A0 => "0".into(),
                LetterKind::A1 => "1".into(),
                LetterKind::D(i) => format!("r{i}"),
            },
            indices: perm.cycle_lengths().into_iter().map(|l| l as u32).collect(),
        }
    }

    /// The loops a0^z and a1^z with z the lcm of all ramification indices
    /// over 0 and over 1; verifies closedness by lifting from `base`.
    pub fn zeta_loops(&self, base: &FiberPoint) -> Result<(Word, Word), CoverError> {
        let mut z: usize = 1;
        for kind in [LetterKind::A0, LetterKind::A1] {
            for len in self.letter_perms[&(kind, false)].cycle_lengths() {
                z = lcm(z, len);
            }
        }
        let w0 = Word::from_letter(Letter::a0()).pow(z as i32);
        let w1 = Word::from_letter(Letter::a1()).pow(z as i32);
        for w in [&w0, &w1] {
            if self.fiber_monodromy(w).apply(base.sheet - 1) != base.sheet - 1 {
                return Err(CoverError::LiftNotClosed);
            }
            let path = realize(w, &self.plane, self.radius)?;
            let lifted = self.lift_path(&path, base)?;
            if lifted.end.sheet != base.sheet {
                return Err(CoverError::LiftNotClosed);
            }
        }
        Ok((w0, w1))
    }
}

fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Multiset of ramification indices over a named base point.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RamificationProfile {
    pub base: String,
    pub indices: Vec<u32>,
}

impl RamificationProfile {
    pub fn new(base: &str, indices: Vec<u32>) -> Self {
        RamificationProfile { base: base.into(), indices }
    }

    pub fn total_degree(&self) -> u32 {
        self.indices.iter().sum()
    }
}

/// One row of the composite-index table.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CompositeIndex {
    pub e1: u32,
    pub e2: u32,
    /// lcm(e1, e2): the ramification index in the compositum.
    pub composite: u32,
    /// composite / e1: relative index over the first factor.
    pub rel_over_first: u32,
    /// composite / e2: relative index over the second factor.
    pub rel_over_second: u32,
}

/// Composite ramification indices for every pairing of the two profiles
/// (tame case: always satisfied in characteristic zero).
pub fn abhyankar_lcm(p1: &RamificationProfile, p2: &RamificationProfile) -> Vec<CompositeIndex> {
    assert_eq!(p1.base, p2.base, "profiles must sit over the same base point");
    let mut out = Vec::new();
    for &e1 in &p1.indices {
        for &e2 in &p2.indices {
            let composite = (lcm(e1 as usize, e2 as usize)) as u32;
            out.push(CompositeIndex {
                e1,
                e2,
                composite,
                rel_over_first: composite / e1,
                rel_over_second: composite / e2,
            });
        }
    }
    out
}

/// All genus-zero regular dessin types (l, 2, n) with l ≤ n ≤ max_n,
/// filtered by the positivity test 1/l + 1/2 + 1/n > 1.
pub fn regular_dessin_types(max_n: u32) -> Vec<(u32, u32, u32)> {
    assert!(max_n >= 2);
    let mut out = Vec::new();
    for l in 2..=max_n {
        for n in l..=max_n {
            if 1.0 / l as f64 + 0.5 + 1.0 / n as f64 > 1.0 + 1e-12 {
                out.push((l, 2, n));
            }
        }
    }
    // Conventional reading order: the (3,2,n) sporadic types after the
    // (2,2,n) tower.
    out.sort();
    out
}
