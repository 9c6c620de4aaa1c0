//! Elliptic logarithms of algebraic sections along lifted paths: principal
//! values by direct quadrature of dx/y, lattice-snapped continuation, Betti
//! coordinates, loop variations, the fiberwise group law and trace.

use num_complex::Complex64 as C;
use thiserror::Error;

use crate::cover::{fiber, poly_roots, CoverError, CoverSpec, FiberPoint, LiftedPath};
use crate::periods::{continue_frame_segment, PeriodError, PeriodFrame, DEFAULT_ODE_TOL};
use crate::words::Word;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum ElogError {
    #[error("period frame is R-degenerate, cannot solve for Betti coordinates")]
    DegenerateFrame,
    #[error("lattice snap ambiguous near λ = {0}: margin condition failed at minimum step")]
    AmbiguousSnap(C),
    #[error("lattice snap residual {0} exceeds tolerance")]
    SnapFailure(f64),
    #[error("loop did not restore the period frame (deviation {0}); not a period-trivial loop")]
    FrameNotRestored(f64),
    #[error("variation endpoints lie on different fiber points")]
    EndpointMismatch,
    #[error("fiber log sum has Betti coordinates ({0}, {1}) not near-rational within the denominator bound")]
    TraceNotTorsion(f64, f64),
    #[error("quadrature failed near x = {0}: step below minimum or value blew up")]
    QuadratureFailure(C),
    #[error("sheet tracking lost the root near λ = {0}")]
    SheetLost(C),
    #[error(transparent)]
    Period(#[from] PeriodError),
    #[error(transparent)]
    Cover(#[from] CoverError),
}

/// A point of the fiber curve y² = x(x−1)(x−λ), with the identity O kept
/// formal.
#[derive(Clone, Copy, Debug)]
pub enum CurvePoint {
    Infinity,
    Affine { x: C, y: C },
}

impl CurvePoint {
    pub fn is_infinity(&self) -> bool {
        matches!(self, CurvePoint::Infinity)
    }
}

/// Right-hand side x³ − (1+λ)x² + λx of the fiber curve.
pub fn curve_rhs(lambda: C, x: C) -> C {
    x * (x - 1.0) * (x - lambda)
}

fn curve_rhs_d(lambda: C, x: C) -> C {
    x * x * 3.0 - (lambda + 1.0) * x * 2.0 + lambda
}

/// A section of the pulled-back scheme given by polynomial expressions
/// X(λ, w), Y(λ, w) with complex coefficients, stored as monomial triples
/// (i, j, c) for c·λⁱwʲ. The zero section is kept as a flag since its value
/// is the point at infinity on every fiber.
#[derive(Clone, Debug)]
pub struct SectionSpec {
    x_terms: Vec<(u32, u32, C)>,
    y_terms: Vec<(u32, u32, C)>,
    pub name: String,
    zero: bool,
}

fn eval_terms(terms: &[(u32, u32, C)], lambda: C, w: C) -> C {
    terms
        .iter()
        .map(|&(i, j, c)| lambda.powu(i) * w.powu(j) * c)
        .sum()
}

impl SectionSpec {
    pub fn new(name: &str, x_terms: Vec<(u32, u32, C)>, y_terms: Vec<(u32, u32, C)>) -> Self {
        SectionSpec { x_terms, y_terms, name: name.into(), zero: false }
    }

    pub fn zero() -> Self {
        SectionSpec { x_terms: Vec::new(), y_terms: Vec::new(), name: "zero".into(), zero: true }
    }

    /// X = 2, Y = √2·w on the cover w² = 2 − λ.
    pub fn masser() -> Self {
        let s = C::new(2.0_f64.sqrt(), 0.0);
        SectionSpec::new("masser", vec![(0, 0, C::new(2.0, 0.0))], vec![(0, 1, s)])
    }

    /// X = 2, Y = √2·w² on the cover w⁴ = 2 − λ.
    pub fn quartic() -> Self {
        let s = C::new(2.0_f64.sqrt(), 0.0);
        SectionSpec::new("quartic", vec![(0, 0, C::new(2.0, 0.0))], vec![(0, 2, s)])
    }

    /// The constant 2-torsion section (0, 0).
    pub fn torsion_zero() -> Self {
        SectionSpec::new("torsion(0,0)", Vec::new(), Vec::new())
    }

    /// The constant 2-torsion section (1, 0).
    pub fn torsion_one() -> Self {
        SectionSpec::new("torsion(1,0)", vec![(0, 0, C::new(1.0, 0.0))], Vec::new())
    }

    /// The 2-torsion section (λ, 0).
    pub fn torsion_lambda() -> Self {
        SectionSpec::new("torsion(λ,0)", vec![(1, 0, C::new(1.0, 0.0))], Vec::new())
    }

    pub fn is_zero(&self) -> bool {
        self.zero
    }

    pub fn eval(&self, lambda: C, w: C) -> CurvePoint {
        if self.zero {
            return CurvePoint::Infinity;
        }
        CurvePoint::Affine {
            x: eval_terms(&self.x_terms, lambda, w),
            y: eval_terms(&self.y_terms, lambda, w),
        }
    }

    /// Negated section (X, −Y).
    pub fn negated(&self) -> Self {
        SectionSpec {
            x_terms: self.x_terms.clone(),
            y_terms: self.y_terms.iter().map(|&(i, j, c)| (i, j, -c)).collect(),
            name: format!("-({})", self.name),
            zero: self.zero,
        }
    }

    /// Maximum of |Y² − X(X−1)(X−λ)| over `samples` cover points on a fixed
    /// circle off the branch locus; the on-curve check for the section.
    pub fn curve_residual(&self, spec: &CoverSpec, samples: usize) -> Result<f64, ElogError> {
        if self.zero {
            return Ok(0.0);
        }
        let mut worst = 0.0_f64;
        for k in 0..samples {
            let theta = 2.0 * std::f64::consts::PI * (k as f64 + 0.31) / samples as f64;
            let lambda = C::new(0.51, 0.13) + C::from_polar(0.37, theta);
            for pt in fiber(spec, lambda)? {
                if let CurvePoint::Affine { x, y } = self.eval(lambda, pt.w) {
                    worst = worst.max((y * y - curve_rhs(lambda, x)).norm());
                }
            }
        }
        Ok(worst)
    }
}

/// A determination of the elliptic logarithm at one cover point, with the
/// co-continued period frame and the real Betti coordinates of z.
#[derive(Clone, Copy, Debug)]
pub struct LogBranch {
    pub at: FiberPoint,
    pub z: C,
    pub frame: PeriodFrame,
    pub betti: (f64, f64),
}

pub fn log_branch(at: FiberPoint, z: C, frame: PeriodFrame) -> Result<LogBranch, ElogError> {
    let betti = betti_coords(z, &frame)?;
    Ok(LogBranch { at, z, frame, betti })
}

/// Integer lattice coordinates of the logarithm change around a loop.
#[derive(Clone, Debug)]
pub struct VariationReport {
    pub word: Word,
    pub coords: (i64, i64),
    pub residual: f64,
    pub nonzero: bool,
}

/// Real coordinates (β₁, β₂) with z = β₁ω₁ + β₂ω₂, from the 2×2 real system.
pub fn betti_coords(z: C, frame: &PeriodFrame) -> Result<(f64, f64), ElogError> {
    let (o1, o2) = (frame.omega1, frame.omega2);
    let det = o1.re * o2.im - o2.re * o1.im;
    if det.abs() < 1e-12 * (o1.norm() * o2.norm()).max(1e-300) {
        return Err(ElogError::DegenerateFrame);
    }
    let b1 = (z.re * o2.im - z.im * o2.re) / det;
    let b2 = (z.im * o1.re - z.re * o1.im) / det;
    Ok((b1, b2))
}

/// Shortest nonzero lattice vector length, up to the four obvious candidates.
fn shortest_period(frame: &PeriodFrame) -> f64 {
    [(1, 0), (0, 1), (1, 1), (1, -1)]
        .iter()
        .map(|&(n, m)| frame.period_value(n, m).norm())
        .fold(f64::INFINITY, f64::min)
}

fn lattice_reduce(z: C, frame: &PeriodFrame) -> Result<C, ElogError> {
    let (b1, b2) = betti_coords(z, frame)?;
    Ok(z - frame.period_value(b1.round() as i64, b2.round() as i64))
}

/// Classic fourth-order Runge–Kutta with step doubling and Richardson
/// extrapolation, for the small complex systems of this module. `project`
/// may renormalize the state after every accepted step.
fn adaptive_rk<const N: usize>(
    deriv: &dyn Fn(f64, &[C; N]) -> [C; N],
    mut project: impl FnMut(f64, &mut [C; N]),
    t0: f64,
    t1: f64,
    y0: [C; N],
    tol: f64,
) -> Result<[C; N], ()> {
    let rk4 = |t: f64, h: f64, y: &[C; N]| -> [C; N] {
        let k1 = deriv(t, y);
        let mut s = *y;
        for i in 0..N {
            s[i] = y[i] + k1[i] * (h / 2.0);
        }
        let k2 = deriv(t + h / 2.0, &s);
        for i in 0..N {
            s[i] = y[i] + k2[i] * (h / 2.0);
        }
        let k3 = deriv(t + h / 2.0, &s);
        for i in 0..N {
            s[i] = y[i] + k3[i] * h;
        }
        let k4 = deriv(t + h, &s);
        let mut out = *y;
        for i in 0..N {
            out[i] = y[i] + (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (h / 6.0);
        }
        out
    };
    let span = t1 - t0;
    if span == 0.0 {
        return Ok(y0);
    }
    let dir = span.signum();
    let mut t = t0;
    let mut y = y0;
    let mut h = span * 0.05;
    let min_h = span.abs() * 1e-12;
    let mut steps = 0usize;
    while (t1 - t) * dir > span.abs() * 1e-14 {
        steps += 1;
        if steps > 1_000_000 {
            return Err(());
        }
        if h.abs() > (t1 - t).abs() {
            h = t1 - t;
        }
        let big = rk4(t, h, &y);
        let mid = rk4(t, h / 2.0, &y);
        let small = rk4(t + h / 2.0, h / 2.0, &mid);
        let scale = 1.0;
        let finite = big.iter().chain(small.iter()).all(|v| v.is_finite());
        let err = if finite {
            (0..N)
                .map(|i| (big[i] - small[i]).norm() / (1.0 + y[i].norm()))
                .fold(0.0, f64::max)
        } else {
            f64::INFINITY
        };
        if err <= tol * scale {
            t += h;
            y = small;
            for i in 0..N {
                y[i] += (small[i] - big[i]) / 15.0;
            }
            project(t, &mut y);
            let grow = if err > 0.0 { 0.9 * (tol * scale / err).powf(0.2) } else { 2.0 };
            h *= grow.clamp(1.0, 2.0);
        } else {
            let factor = if err.is_finite() {
                (0.9 * (tol * scale / err).powf(0.2)).clamp(0.1, 0.7)
            } else {
                0.1
            };
            h *= factor;
            if h.abs() < min_h {
                return Err(());
            }
        }
    }
    Ok(y)
}

/// Distance from point q to the segment [a, b].
fn segment_distance(a: C, b: C, q: C) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_sqr();
    if len2 == 0.0 {
        return (q - a).norm();
    }
    let t = (((q - a) * ab.conj()).re / len2).clamp(0.0, 1.0);
    (q - (a + ab * t)).norm()
}

const X_REF_NORM: f64 = 1e6;

/// Pick a far reference point x_ref = 10⁶·e^{iθ} whose straight segment to
/// `x` stays as clear of the cubic's roots as possible.
fn choose_reference(lambda: C, x: C) -> C {
    let roots = [C::new(0.0, 0.0), C::new(1.0, 0.0), lambda];
    let mut best = (f64::NEG_INFINITY, C::new(X_REF_NORM, 0.0));
    for k in 0..16 {
        let theta = 2.0 * std::f64::consts::PI * k as f64 / 16.0 + 0.19;
        let xr = C::from_polar(X_REF_NORM, theta);
        let clearance = roots
            .iter()
            .map(|&r| segment_distance(x, xr, r))
            .fold(f64::INFINITY, f64::min);
        if clearance > best.0 {
            best = (clearance, xr);
        }
    }
    best.1
}

/// Quadrature of dx/y along the segment from x_ref to `x`, with the branch
/// of y tracked continuously from the asymptotic branch at x_ref. Returns
/// (z for the tracked branch, tracked y at the endpoint).
fn log_by_quadrature(lambda: C, x: C, x_ref: C) -> Result<(C, C), ElogError> {
    let s = x_ref.sqrt();
    // y ~ x^{3/2}√(1 − (1+λ)/x + λ/x²) and z ~ −2/√x·(1 + (1+λ)/(6x)) at
    // the reference; the dropped terms are O(|x_ref|^{-5/2}).
    let corr = (C::new(1.0, 0.0) - (lambda + 1.0) / x_ref + lambda / (x_ref * x_ref)).sqrt();
    let y_ref = s * s * s * corr;
    let z_ref = C::new(-2.0, 0.0) / s * (C::new(1.0, 0.0) + (lambda + 1.0) / (x_ref * 6.0));
    let dx = x - x_ref;
    let pos = |t: f64| x_ref + dx * t;
    let deriv = |t: f64, state: &[C; 2]| -> [C; 2] {
        let xt = pos(t);
        let y = state[1];
        [dx / y, curve_rhs_d(lambda, xt) * dx / (y * 2.0)]
    };
    let project = |t: f64, state: &mut [C; 2]| {
        let exact = curve_rhs(lambda, pos(t)).sqrt();
        state[1] = if (state[1] - exact).norm() <= (state[1] + exact).norm() { exact } else { -exact };
    };
    let out = adaptive_rk(&deriv, project, 0.0, 1.0, [C::new(0.0, 0.0), y_ref], 1e-12)
        .map_err(|_| ElogError::QuadratureFailure(x))?;
    Ok((z_ref + out[0], out[1]))
}

/// The logarithm of a 2-torsion point (e, 0) is a half period; identify
/// which of the three nonzero classes by flowing each candidate through the
/// exponential map and matching the landing abscissa against the root e.
/// This sidesteps quadrature through the root cluster, where the integrand
/// is nearly singular and accuracy degrades.
fn torsion_log(lambda: C, e: C, frame: &PeriodFrame) -> Result<C, ElogError> {
    let mut best = (f64::INFINITY, C::new(0.0, 0.0));
    for (n, m) in [(1i64, 0i64), (0, 1), (1, 1)] {
        let zc = frame.period_value(n, m) / 2.0;
        if let Ok(CurvePoint::Affine { x, .. }) = point_from_log(lambda, zc, frame) {
            let d = (x - e).norm();
            if d < best.0 {
                best = (d, zc);
            }
        }
    }
    if best.0 > 1e-6 {
        return Err(ElogError::QuadratureFailure(e));
    }
    Ok(best.1)
}

/// A determination z of the elliptic logarithm of `point` on the fiber at
/// λ: the exponential map sends z back to the point, with the sign fixed by
/// matching y. Deterministic for fixed inputs; the result is reduced so its
/// Betti coordinates lie in [−½, ½].
pub fn principal_log(lambda: C, point: &CurvePoint, frame: &PeriodFrame) -> Result<C, ElogError> {
    let (x, y) = match point {
        CurvePoint::Infinity => return Ok(C::new(0.0, 0.0)),
        CurvePoint::Affine { x, y } => (*x, *y),
    };
    let roots = [C::new(0.0, 0.0), C::new(1.0, 0.0), lambda];
    let torsion = roots.iter().copied().find(|e| (x - e).norm() < 1e-8);
    // The Abel integral ∫dx/y has lattice ⟨2ω₁, 2ω₂⟩ in the series
    // normalization (the full real cycle is 2ω₁ = 4K); the logarithm is
    // half of it so that (ω₁, ω₂) is a genuine lattice basis.
    let abel = match torsion {
        None => {
            let x_ref = choose_reference(lambda, x);
            let (z_trk, y_trk) = log_by_quadrature(lambda, x, x_ref)?;
            if (y_trk - y).norm() <= (y_trk + y).norm() {
                z_trk
            } else {
                -z_trk
            }
        }
        // Sign is immaterial at 2-torsion: ±z differ by a full period and
        // reduce to the same Betti class.
        Some(e) => return lattice_reduce(torsion_log(lambda, e, frame)?, frame),
    };
    lattice_reduce(abel / 2.0, frame)
}

/// Exponential map: the curve point with logarithm z, by flowing
/// x′ = y, y′ = f′(x)/2 from the pole expansion x = 4/z² + (1+λ)/3 − pz²/20.
pub fn point_from_log(lambda: C, z: C, _frame: &PeriodFrame) -> Result<CurvePoint, ElogError> {
    // The flow runs in the Abel variable u = 2z (see principal_log).
    let z = z * 2.0;
    if z.norm() < 1e-9 {
        return Ok(CurvePoint::Infinity);
    }
    let eps = 1e-3;
    let z0 = z / z.norm() * eps;
    let a = lambda + 1.0;
    let p = lambda - a * a / 3.0;
    let x0 = C::new(4.0, 0.0) / (z0 * z0) + a / 3.0 - p * z0 * z0 / 20.0;
    let y0 = C::new(-8.0, 0.0) / (z0 * z0 * z0) - p * z0 / 10.0;
    let dz = z - z0;
    let deriv = |_t: f64, state: &[C; 2]| -> [C; 2] {
        [state[1] * dz, curve_rhs_d(lambda, state[0]) * dz / 2.0]
    };
    // Keep the flow on its invariant y² = f(x); otherwise the energy drift
    // steers the trajectory into a spurious pole.
    let project = |_t: f64, state: &mut [C; 2]| {
        let exact = curve_rhs(lambda, state[0]).sqrt();
        state[1] = if (state[1] - exact).norm() <= (state[1] + exact).norm() { exact } else { -exact };
    };
    let out = adaptive_rk(&deriv, project, 0.0, 1.0, [x0, y0], 1e-12)
        .map_err(|_| ElogError::QuadratureFailure(z))?;
    if out[0].norm() > 1e9 {
        return Err(ElogError::QuadratureFailure(z));
    }
    Ok(CurvePoint::Affine { x: out[0], y: out[1] })
}

/// One sheet-tracking step: predict w over λ₀ → λ₁ by the implicit
/// derivative, then pick the nearest root of P(λ₁, ·) provided it is
/// unambiguous.
fn step_sheet(spec: &CoverSpec, lambda0: C, lambda1: C, w: C) -> Option<C> {
    let dv = spec.eval_dw(lambda0, w);
    if dv.norm() < 1e-300 {
        return None;
    }
    let predicted = w - spec.eval_dlambda(lambda0, w) / dv * (lambda1 - lambda0);
    let roots = poly_roots(&spec.w_poly(lambda1));
    let mut dists: Vec<(f64, C)> = roots.iter().map(|&r| ((r - predicted).norm(), r)).collect();
    dists.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    if dists.len() > 1 && dists[0].0 > 0.3 * dists[1].0 {
        return None;
    }
    Some(dists[0].1)
}

/// One sampled state of a continuation, for CSV export.
#[derive(Clone, Debug)]
pub struct LogTrace(pub Vec<(f64, C, C, f64, f64)>);

impl LogTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,re_lambda,im_lambda,re_z,im_z,beta1,beta2\n");
        for (t, lam, z, b1, b2) in &self.0 {
            out.push_str(&format!(
                "{t},{},{},{},{},{b1},{b2}\n",
                lam.re, lam.im, z.re, z.im
            ));
        }
        out
    }
}

/// Continue a logarithm branch along a lifted path. At every step the
/// principal value is recomputed and snapped by the sign and lattice vector
/// nearest to the running value; a step is accepted only when the runner-up
/// candidate is at least 3× farther, otherwise the step is halved.
pub fn continue_log(
    spec: &CoverSpec,
    sec: &SectionSpec,
    start: &LogBranch,
    lifted: &LiftedPath,
    tol: f64,
) -> Result<LogBranch, ElogError> {
    Ok(continue_log_traced(spec, sec, start, lifted, tol)?.0)
}

pub fn continue_log_traced(
    spec: &CoverSpec,
    sec: &SectionSpec,
    start: &LogBranch,
    lifted: &LiftedPath,
    tol: f64,
) -> Result<(LogBranch, LogTrace), ElogError> {
    if (start.at.lambda - lifted.start.lambda).norm() > 1e-8
        || (start.at.w - lifted.start.w).norm() > 1e-6
    {
        return Err(ElogError::EndpointMismatch);
    }
    let mut w = start.at.w;
    let mut frame = start.frame;
    let mut z = start.z;
    let pieces = lifted.base.pieces();
    let mut trace = vec![(0.0, frame.lambda, z, start.betti.0, start.betti.1)];
    for (pi, piece) in pieces.iter().enumerate() {
        let mut t = 0.0_f64;
        let mut dt = 0.05_f64;
        while t < 1.0 - 1e-12 {
            if t + dt > 1.0 {
                dt = 1.0 - t;
            }
            let lambda1 = piece.point(t + dt);
            let attempt = (|| -> Result<Option<(C, PeriodFrame, C)>, ElogError> {
                let w1 = match step_sheet(spec, piece.point(t), lambda1, w) {
                    Some(w1) => w1,
                    None => return Ok(None),
                };
                let frame1 = continue_frame_segment(&frame, piece, t, t + dt, DEFAULT_ODE_TOL)?;
                let value = sec.eval(lambda1, w1);
                let zp = principal_log(lambda1, &value, &frame1)?;
                // Candidate logs: zp is already sign-matched to the section
                // value, so lattice translates of zp suffice; only when the
                // y-coordinate nearly vanishes is the sign itself ambiguous
                // (and then ±z agree modulo the lattice anyway).
                let signs: &[f64] = match value {
                    CurvePoint::Affine { y, .. } if y.norm() > 1e-6 => &[1.0],
                    _ => &[1.0, -1.0],
                };
                let mut cands: Vec<C> = Vec::new();
                for &sign in signs {
                    let base = zp * sign;
                    let (b1, b2) = betti_coords(z - base, &frame1)?;
                    for dn in -1..=1 {
                        for dm in -1..=1 {
                            let cand = base
                                + frame1.period_value(b1.round() as i64 + dn, b2.round() as i64 + dm);
                            if !cands.iter().any(|c| (c - cand).norm() < 1e-6) {
                                cands.push(cand);
                            }
                        }
                    }
                }
                cands.sort_by(|a, b| {
                    (a - z).norm().partial_cmp(&(b - z).norm()).unwrap()
                });
                let best = cands[0];
                let best_d = (best - z).norm();
                if cands.len() > 1 && (cands[1] - z).norm() < 3.0 * best_d {
                    return Ok(None);
                }
                // Continuity certificate: the accepted move stays well
                // inside one lattice cell.
                if best_d > 0.5 * shortest_period(&frame1) {
                    return Ok(None);
                }
                Ok(Some((w1, frame1, best)))
            })()?;
            match attempt {
                Some((w1, frame1, z1)) => {
                    w = w1;
                    frame = frame1;
                    z = z1;
                    t += dt;
                    dt = (dt * 1.4).min(0.05);
                    let (b1, b2) = betti_coords(z, &frame)?;
                    let global_t = (pi as f64 + t) / pieces.len() as f64;
                    trace.push((global_t, frame.lambda, z, b1, b2));
                }
                None => {
                    dt *= 0.5;
                    if dt < 1e-5 {
                        return Err(ElogError::AmbiguousSnap(piece.point(t)));
                    }
                }
            }
        }
    }
    if (w - lifted.end.w).norm() > 1e-6 {
        return Err(ElogError::SheetLost(frame.lambda));
    }
    let _ = tol;
    let branch = log_branch(lifted.end, z, frame)?;
    Ok((branch, LogTrace(trace)))
}

/// The lattice coordinates of z_end − z_start for a loop that restored the
/// period frame.
pub fn variation(
    word: &Word,
    start: &LogBranch,
    end: &LogBranch,
    tol: f64,
) -> Result<VariationReport, ElogError> {
    if (start.at.lambda - end.at.lambda).norm() > 1e-8 || (start.at.w - end.at.w).norm() > 1e-6 {
        return Err(ElogError::EndpointMismatch);
    }
    let drift = (start.frame.omega1 - end.frame.omega1)
        .norm()
        .max((start.frame.omega2 - end.frame.omega2).norm());
    if drift > tol * (1.0 + start.frame.omega1.norm() + start.frame.omega2.norm()) {
        return Err(ElogError::FrameNotRestored(drift));
    }
    let dz = end.z - start.z;
    let (b1, b2) = betti_coords(dz, &start.frame)?;
    let (n, m) = (b1.round() as i64, b2.round() as i64);
    let residual = (dz - start.frame.period_value(n, m)).norm();
    if residual > tol * (1.0 + start.frame.omega1.norm()) {
        return Err(ElogError::SnapFailure(residual));
    }
    Ok(VariationReport { word: word.clone(), coords: (n, m), residual, nonzero: (n, m) != (0, 0) })
}

/// Chord-tangent sum on y² = x(x−1)(x−λ).
pub fn curve_add(lambda: C, p: &CurvePoint, q: &CurvePoint) -> CurvePoint {
    let (x1, y1) = match p {
        CurvePoint::Infinity => return *q,
        CurvePoint::Affine { x, y } => (*x, *y),
    };
    let (x2, y2) = match q {
        CurvePoint::Infinity => return *p,
        CurvePoint::Affine { x, y } => (*x, *y),
    };
    let scale = 1.0 + x1.norm() + x2.norm();
    let m = if (x1 - x2).norm() < 1e-9 * scale {
        if (y1 + y2).norm() < 1e-9 * (1.0 + y1.norm()) {
            return CurvePoint::Infinity;
        }
        curve_rhs_d(lambda, x1) / (y1 * 2.0)
    } else {
        (y2 - y1) / (x2 - x1)
    };
    let x3 = m * m + (lambda + 1.0) - x1 - x2;
    let y3 = -(y1 + m * (x3 - x1));
    CurvePoint::Affine { x: x3, y: y3 }
}

pub fn curve_neg(p: &CurvePoint) -> CurvePoint {
    match p {
        CurvePoint::Infinity => CurvePoint::Infinity,
        CurvePoint::Affine { x, y } => CurvePoint::Affine { x: *x, y: -*y },
    }
}

/// Fiberwise sum of the section over all sheets at λ₀, by the group law.
pub fn trace_section(spec: &CoverSpec, sec: &SectionSpec, lambda0: C) -> Result<CurvePoint, ElogError> {
    let mut acc = CurvePoint::Infinity;
    for pt in fiber(spec, lambda0)? {
        let val = sec.eval(lambda0, pt.w);
        acc = curve_add(lambda0, &acc, &val);
    }
    Ok(acc)
}

pub const DEFAULT_DENOMINATOR_BOUND: u32 = 24;

/// Detect the (torsion) lattice class of the fiber log sum and shift the
/// first branch so the shifted logs sum to zero: with N the smallest
/// denominator making the sum's Betti coordinates integral, the returned
/// branch carries N·z(b₁) − ω for the detected period ω.
pub fn normalize_by_trace(
    _sec: &SectionSpec,
    fiber_logs: &[LogBranch],
    denom_bound: u32,
    tol: f64,
) -> Result<(i64, LogBranch), ElogError> {
    let first = &fiber_logs[0];
    let sum: C = fiber_logs.iter().map(|b| b.z).sum();
    let (b1, b2) = betti_coords(sum, &first.frame)?;
    for q in 1..=denom_bound as i64 {
        let (s1, s2) = (b1 * q as f64, b2 * q as f64);
        if (s1 - s1.round()).abs() < tol && (s2 - s2.round()).abs() < tol {
            let omega = first.frame.period_value(s1.round() as i64, s2.round() as i64);
            let shifted = first.z * q as f64 - omega;
            return Ok((q, log_branch(first.at, shifted, first.frame)?));
        }
    }
    Err(ElogError::TraceNotTorsion(b1, b2))
}

/// Subtract half the period with the given coordinates: the logarithm-level
/// form of adding a 2-torsion section.
pub fn shift_by_half_period(branch: &LogBranch, coords: (i64, i64)) -> Result<LogBranch, ElogError> {
    let z = branch.z - branch.frame.period_value(coords.0, coords.1) / 2.0;
    log_branch(branch.at, z, branch.frame)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cover::Cover;
    use crate::paths::{realize, Piece, PlanePath, PuncturedPlane};
    use crate::periods::series_frame;
    use crate::words::Alphabet;

    fn base() -> C {
        C::new(0.5, 0.0)
    }

    fn frame_at_base() -> PeriodFrame {
        series_frame(base()).unwrap()
    }

    #[test]
    fn sections_lie_on_the_curve() {
        assert!(SectionSpec::masser().curve_residual(&CoverSpec::masser(), 20).unwrap() < 1e-9);
        assert!(SectionSpec::quartic().curve_residual(&CoverSpec::quartic(), 20).unwrap() < 1e-9);
        for sec in [
            SectionSpec::torsion_zero(),
            SectionSpec::torsion_one(),
            SectionSpec::torsion_lambda(),
            SectionSpec::zero(),
        ] {
            assert!(sec.curve_residual(&CoverSpec::masser(), 20).unwrap() < 1e-12);
        }
    }

    #[test]
    fn betti_of_basis_vectors() {
        let f = frame_at_base();
        let (b1, b2) = betti_coords(f.omega1, &f).unwrap();
        assert!((b1 - 1.0).abs() < 1e-12 && b2.abs() < 1e-12);
        let (b1, b2) = betti_coords(C::new(0.0, 0.0), &f).unwrap();
        assert!(b1.abs() < 1e-12 && b2.abs() < 1e-12);
        let (b1, b2) = betti_coords(f.period_value(3, -2), &f).unwrap();
        assert!((b1 - 3.0).abs() < 1e-10 && (b2 + 2.0).abs() < 1e-10);
    }

    #[test]
    fn zero_section_log_is_zero() {
        let f = frame_at_base();
        let z = principal_log(base(), &CurvePoint::Infinity, &f).unwrap();
        assert_eq!(z, C::new(0.0, 0.0));
    }

    #[test]
    fn log_round_trip_at_generic_points() {
        for lambda in [base(), C::new(0.3, 0.2), C::new(0.7, -0.4)] {
            let frame = series_frame(lambda).unwrap();
            let x = C::new(2.0, 0.0);
            let y = curve_rhs(lambda, x).sqrt();
            let p = CurvePoint::Affine { x, y };
            let z = principal_log(lambda, &p, &frame).unwrap();
            match point_from_log(lambda, z, &frame).unwrap() {
                CurvePoint::Affine { x: xr, y: yr } => {
                    assert!((xr - x).norm() < 1e-8, "x mismatch at λ = {lambda}: {xr}");
                    assert!((yr - y).norm() < 1e-8, "y mismatch at λ = {lambda}: {yr}");
                }
                CurvePoint::Infinity => panic!("round trip hit infinity"),
            }
            // The opposite point gets the opposite log, mod lattice.
            let zn = principal_log(lambda, &CurvePoint::Affine { x, y: -y }, &frame).unwrap();
            let (b1, b2) = betti_coords(z + zn, &frame).unwrap();
            assert!((b1 - b1.round()).abs() < 1e-9 && (b2 - b2.round()).abs() < 1e-9);
        }
    }

    #[test]
    fn log_round_trip_outside_series_domain() {
        // Walk the frame out to λ = −1 along a route clear of 0 and 1, then
        // check the log of (2, √6) there.
        let plane = PuncturedPlane::new(&[], base()).unwrap();
        let path = PlanePath::from_pieces(
            vec![
                Piece::Line { from: base(), to: C::new(0.5, 1.0) },
                Piece::Line { from: C::new(0.5, 1.0), to: C::new(-1.0, 0.0) },
            ],
            &plane,
        )
        .unwrap();
        let frame = crate::periods::continue_frame_values(&frame_at_base(), &path, 1e-12).unwrap();
        let lambda = C::new(-1.0, 0.0);
        let x = C::new(2.0, 0.0);
        let y = curve_rhs(lambda, x).sqrt();
        let z = principal_log(lambda, &CurvePoint::Affine { x, y }, &frame).unwrap();
        match point_from_log(lambda, z, &frame).unwrap() {
            CurvePoint::Affine { x: xr, y: yr } => {
                assert!((xr - x).norm() < 1e-8 && (yr - y).norm() < 1e-8);
            }
            CurvePoint::Infinity => panic!("round trip hit infinity"),
        }
    }

    #[test]
    fn two_torsion_logs_are_half_periods() {
        let lambda = C::new(0.4, 0.0);
        let frame = series_frame(lambda).unwrap();
        for e in [C::new(0.0, 0.0), C::new(1.0, 0.0), lambda] {
            let p = CurvePoint::Affine { x: e, y: C::new(0.0, 0.0) };
            let z = principal_log(lambda, &p, &frame).unwrap();
            let (b1, b2) = betti_coords(z, &frame).unwrap();
            let frac = |b: f64| (b * 2.0 - (b * 2.0).round()).abs();
            assert!(frac(b1) < 1e-8 && frac(b2) < 1e-8, "({b1}, {b2}) not half-integral");
            let half = |b: f64| ((b * 2.0).round() as i64).rem_euclid(2) == 1;
            assert!(half(b1) || half(b2), "2-torsion log reduced to a full period");
        }
    }

    #[test]
    fn group_law_identities() {
        let lambda = C::new(0.3, 0.1);
        let x = C::new(2.0, 0.0);
        let y = curve_rhs(lambda, x).sqrt();
        let p = CurvePoint::Affine { x, y };
        match curve_add(lambda, &p, &CurvePoint::Infinity) {
            CurvePoint::Affine { x: xr, y: yr } => assert!((xr - x).norm() + (yr - y).norm() < 1e-14),
            _ => panic!("P + O ≠ P"),
        }
        assert!(curve_add(lambda, &p, &curve_neg(&p)).is_infinity());
        let t = CurvePoint::Affine { x: C::new(0.0, 0.0), y: C::new(0.0, 0.0) };
        assert!(curve_add(lambda, &t, &t).is_infinity());
        // Associativity spot check: (P+P)+(-P) = P.
        let double = curve_add(lambda, &p, &p);
        match curve_add(lambda, &double, &curve_neg(&p)) {
            CurvePoint::Affine { x: xr, y: yr } => {
                assert!((xr - x).norm() < 1e-9 && (yr - y).norm() < 1e-9);
            }
            _ => panic!("(2P) − P ≠ P"),
        }
    }

    #[test]
    fn trace_of_masser_section_vanishes() {
        let spec = CoverSpec::masser();
        let sec = SectionSpec::masser();
        for k in 0..10 {
            let lambda = C::new(0.45, 0.1) + C::from_polar(0.3, 0.7 * k as f64);
            let tr = trace_section(&spec, &sec, lambda).unwrap();
            match tr {
                CurvePoint::Infinity => {}
                CurvePoint::Affine { x, y } => panic!("trace ({x}, {y}) ≠ O at λ = {lambda}"),
            }
        }
    }

    #[test]
    fn constant_path_continuation_is_identity() {
        let spec = CoverSpec::masser();
        let sec = SectionSpec::masser();
        let cover = Cover::new(spec.clone(), base()).unwrap();
        let b1 = cover.base_point(1);
        let frame = frame_at_base();
        let z = principal_log(base(), &sec.eval(base(), b1.w), &frame).unwrap();
        let start = log_branch(b1, z, frame).unwrap();
        let path = PlanePath::constant(base());
        let lifted = cover.lift_path(&path, &b1).unwrap();
        let end = continue_log(&spec, &sec, &start, &lifted, 1e-9).unwrap();
        assert!((end.z - start.z).norm() < 1e-12);
    }

    #[test]
    fn sheet_swap_negates_the_log_modulo_periods() {
        let spec = CoverSpec::masser();
        let sec = SectionSpec::masser();
        let cover = Cover::new(spec.clone(), base()).unwrap();
        let b1 = cover.base_point(1);
        let frame = frame_at_base();
        let z = principal_log(base(), &sec.eval(base(), b1.w), &frame).unwrap();
        let start = log_branch(b1, z, frame).unwrap();
        let ab = Alphabet::new(1);
        let path = realize(&ab.parse("d1").unwrap(), &cover.plane, cover.radius).unwrap();
        let lifted = cover.lift_path(&path, &b1).unwrap();
        assert_eq!(lifted.end.sheet, 2);
        let end = continue_log(&spec, &sec, &start, &lifted, 1e-9).unwrap();
        // Section value on sheet 2 is the negative of sheet 1, so the logs
        // sum to a period.
        let (b1c, b2c) = betti_coords(end.z + start.z, &start.frame).unwrap();
        assert!((b1c - b1c.round()).abs() < 1e-8 && (b2c - b2c.round()).abs() < 1e-8);
    }

    #[test]
    fn zero_section_stays_zero_along_loops() {
        let spec = CoverSpec::masser();
        let sec = SectionSpec::zero();
        let cover = Cover::new(spec.clone(), base()).unwrap();
        let b1 = cover.base_point(1);
        let start = log_branch(b1, C::new(0.0, 0.0), frame_at_base()).unwrap();
        let ab = Alphabet::new(1);
        let path = realize(&ab.parse("a0").unwrap(), &cover.plane, cover.radius).unwrap();
        let lifted = cover.lift_path(&path, &b1).unwrap();
        let end = continue_log(&spec, &sec, &start, &lifted, 1e-9).unwrap();
        assert_eq!(end.z, C::new(0.0, 0.0));
    }

    #[test]
    fn torsion_section_variation_vanishes() {
        let spec = CoverSpec::masser();
        let sec = SectionSpec::torsion_zero();
        let cover = Cover::new(spec.clone(), base()).unwrap();
        let b1 = cover.base_point(1);
        let frame = frame_at_base();
        let z = principal_log(base(), &sec.eval(base(), b1.w), &frame).unwrap();
        let start = log_branch(b1, z, frame).unwrap();
        let ab = Alphabet::new(1);
        // A kernel loop with closed lift: the commutator of a1 and d1.
        let w = Word::commutator(&ab.parse("a1").unwrap(), &ab.parse("d1").unwrap());
        let path = realize(&w, &cover.plane, cover.radius).unwrap();
        let lifted = cover.lift_path(&path, &b1).unwrap();
        assert_eq!(lifted.end.sheet, 1);
        let end = continue_log(&spec, &sec, &start, &lifted, 1e-9).unwrap();
        let report = variation(&w, &start, &end, 1e-6).unwrap();
        assert_eq!(report.coords, (0, 0));
        assert!(!report.nonzero);
        assert!((end.betti.0 - start.betti.0).abs() < 1e-9);
        assert!((end.betti.1 - start.betti.1).abs() < 1e-9);
    }

    #[test]
    fn trace_normalization_on_the_sheet_pair() {
        let spec = CoverSpec::masser();
        let sec = SectionSpec::masser();
        let cover = Cover::new(spec.clone(), base()).unwrap();
        let b1 = cover.base_point(1);
        let frame = frame_at_base();
        let z = principal_log(base(), &sec.eval(base(), b1.w), &frame).unwrap();
        let start = log_branch(b1, z, frame).unwrap();
        let ab = Alphabet::new(1);
        let path = realize(&ab.parse("d1").unwrap(), &cover.plane, cover.radius).unwrap();
        let lifted = cover.lift_path(&path, &b1).unwrap();
        let at_b2 = continue_log(&spec, &sec, &start, &lifted, 1e-9).unwrap();
        let (n, shifted) =
            normalize_by_trace(&sec, &[start, at_b2], DEFAULT_DENOMINATOR_BOUND, 1e-7).unwrap();
        assert_eq!(n, 1);
        assert!((shifted.z + at_b2.z).norm() < 1e-7);
    }

    #[test]
    fn negated_section_gets_negated_log() {
        let spec = CoverSpec::masser();
        let sec = SectionSpec::masser();
        let neg = sec.negated();
        let cover = Cover::new(spec.clone(), base()).unwrap();
        let b1 = cover.base_point(1);
        let frame = frame_at_base();
        let zp = principal_log(base(), &sec.eval(base(), b1.w), &frame).unwrap();
        let zn = principal_log(base(), &neg.eval(base(), b1.w), &frame).unwrap();
        let (c1, c2) = betti_coords(zp + zn, &frame).unwrap();
        assert!((c1 - c1.round()).abs() < 1e-9 && (c2 - c2.round()).abs() < 1e-9);
    }

    #[test]
    fn half_period_shift_moves_the_log() {
        let frame = frame_at_base();
        let b = log_branch(
            FiberPoint { lambda: base(), w: C::new(1.0, 0.0), sheet: 1 },
            C::new(0.3, 0.1),
            frame,
        )
        .unwrap();
        let shifted = shift_by_half_period(&b, (1, 0)).unwrap();
        assert!((shifted.z - (b.z - frame.omega1 / 2.0)).norm() < 1e-14);
    }
}
