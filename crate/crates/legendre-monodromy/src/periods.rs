//! Numerical period functions of the Legendre family y² = x(x−1)(x−λ).
//!
//! Local values come from the hypergeometric power series
//! ω₁ = π Σ binom(−½,n)² λⁿ and ω₂ = iπ Σ binom(−½,n)² (1−λ)ⁿ.
//! Continuation integrates the hypergeometric equation
//! λ(1−λ)ω″ + (1−2λ)ω′ − ω/4 = 0 along realized paths with an adaptive
//! embedded Runge–Kutta pair, stepping no farther than half the distance to
//! the nearest singular point. Loop matrices are recovered from the values
//! and λ-derivatives of both periods and snapped to integers.

use crate::paths::{Piece, PlanePath};
use crate::rep::Mat2;
use num_complex::Complex64;
use thiserror::Error;

type C = Complex64;

pub const DEFAULT_ODE_TOL: f64 = 1e-12;
pub const DEFAULT_SNAP_TOL: f64 = 1e-6;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum PeriodError {
    #[error("λ = {0} is outside the series domain max(|λ|, |1−λ|) < 1")]
    OutOfDomain(C),
    #[error("adaptive integrator failed near λ = {0}: step below minimum")]
    StepFailure(C),
    #[error("loop matrix residual {0} exceeds snap tolerance {1}")]
    SnapFailure(f64, f64),
    #[error("path starts at λ = {0} but the frame sits at λ = {1}")]
    PathMismatch(C, C),
    #[error("cover point at λ = {0} does not lie over frame λ = {1}")]
    BasePointMismatch(C, C),
}

/// A continued branch of the period basis and its λ-derivatives at a point.
#[derive(Clone, Copy, Debug)]
pub struct PeriodFrame {
    pub lambda: C,
    pub omega1: C,
    pub omega2: C,
    pub domega1: C,
    pub domega2: C,
}

impl PeriodFrame {
    pub fn wronskian(&self) -> C {
        self.omega1 * self.domega2 - self.omega2 * self.domega1
    }

    /// The ODE invariant λ(1−λ)·W, constant along continuations.
    pub fn scaled_wronskian(&self) -> C {
        self.lambda * (C::new(1.0, 0.0) - self.lambda) * self.wronskian()
    }

    /// Value of the period with integer coordinates (n, m).
    pub fn period_value(&self, n: i64, m: i64) -> C {
        self.omega1 * n as f64 + self.omega2 * m as f64
    }
}

/// Result of continuing a frame along a path.
#[derive(Clone, Debug)]
pub struct ContinuationResult {
    pub end_frame: PeriodFrame,
    /// Integer coefficient-transport matrix for loops: period coordinates
    /// (n, m) at the start map to this matrix times (n, m) after the loop.
    pub transported_start_basis: Option<Mat2>,
    pub residual: f64,
}

/// ω₁ and dω₁/dλ alone; converges for |λ| < 1.
pub fn omega1_series(lambda: C) -> Result<(C, C), PeriodError> {
    if lambda.norm() >= 0.95 {
        return Err(PeriodError::OutOfDomain(lambda));
    }
    let (s, d) = binomial_series(lambda);
    let pi = std::f64::consts::PI;
    Ok((s * pi, d * pi))
}

/// ω₂ and dω₂/dλ alone; converges for |1−λ| < 1.
pub fn omega2_series(lambda: C) -> Result<(C, C), PeriodError> {
    let mu = C::new(1.0, 0.0) - lambda;
    if mu.norm() >= 0.95 {
        return Err(PeriodError::OutOfDomain(lambda));
    }
    let (s, d) = binomial_series(mu);
    let i_pi = C::new(0.0, std::f64::consts::PI);
    // d/dλ of f(1−λ) is −f′(1−λ).
    Ok((s * i_pi, -d * i_pi))
}

/// Evaluate the period basis and its derivatives from the power series;
/// needs λ inside both convergence discs.
pub fn series_frame(lambda: C) -> Result<PeriodFrame, PeriodError> {
    let (omega1, domega1) = omega1_series(lambda)?;
    let (omega2, domega2) = omega2_series(lambda)?;
    Ok(PeriodFrame { lambda, omega1, omega2, domega1, domega2 })
}

/// Σ binom(−½,n)² zⁿ and its derivative, truncated below 1e−16.
fn binomial_series(z: C) -> (C, C) {
    let mut coeff = 1.0_f64;
    let mut zn = C::new(1.0, 0.0);
    let mut sum = C::new(0.0, 0.0);
    let mut dsum = C::new(0.0, 0.0);
    for n in 0..4000 {
        if n > 0 {
            let r = (2.0 * n as f64 - 1.0) / (2.0 * n as f64);
            coeff *= r * r;
            dsum += zn * (coeff * n as f64);
            zn *= z;
        }
        let term = zn * coeff;
        sum += term;
        if n > 4 && term.norm() < 1e-16 {
            break;
        }
    }
    (sum, dsum)
}

/// Independent oracle for ω₁ on the real interval (0, 1): π over the
/// arithmetic–geometric mean of 1 and √(1−λ).
pub fn agm_check(lambda: f64) -> C {
    assert!(lambda > 0.0 && lambda < 1.0, "AGM oracle needs 0 < λ < 1");
    let mut a = 1.0_f64;
    let mut b = (1.0 - lambda).sqrt();
    for _ in 0..60 {
        let (an, bn) = ((a + b) / 2.0, (a * b).sqrt());
        a = an;
        b = bn;
        if (a - b).abs() < 1e-17 * a.abs() {
            break;
        }
    }
    C::new(std::f64::consts::PI / a, 0.0)
}

/// Right-hand side of the first-order system for (ω, ω′) stacked for both
/// periods: state = (ω₁, ω₁′, ω₂, ω₂′), driven along λ(t).
fn rhs(lambda: C, dlambda: C, y: &[C; 4]) -> [C; 4] {
    let one = C::new(1.0, 0.0);
    let denom = lambda * (one - lambda);
    let second = |w: C, dw: C| (w * 0.25 - (one - lambda * 2.0) * dw) / denom;
    [
        y[1] * dlambda,
        second(y[0], y[1]) * dlambda,
        y[3] * dlambda,
        second(y[2], y[3]) * dlambda,
    ]
}

fn err_norm(e: &[C; 4], y: &[C; 4], tol: f64) -> f64 {
    let mut m = 0.0_f64;
    for i in 0..4 {
        let scale = tol * (1.0 + y[i].norm());
        m = m.max(e[i].norm() / scale);
    }
    m
}

/// One Dormand–Prince 5(4) step attempt; returns (solution, error estimate).
fn dp54_step(piece: &Piece, t: f64, h: f64, y: &[C; 4]) -> ([C; 4], [C; 4]) {
    const A: [[f64; 6]; 6] = [
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const CNODES: [f64; 6] = [0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
    const B5: [f64; 7] = [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
        0.0,
    ];
    const B4: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];

    let eval = |tt: f64, yy: &[C; 4]| rhs(piece.point(tt), piece.velocity(tt), yy);
    let mut k: [[C; 4]; 7] = [[C::new(0.0, 0.0); 4]; 7];
    k[0] = eval(t, y);
    for stage in 0..6 {
        let mut ys = *y;
        for (j, kj) in k.iter().enumerate().take(stage + 1) {
            let a = A[stage][j];
            if a != 0.0 {
                for c in 0..4 {
                    ys[c] += kj[c] * (h * a);
                }
            }
        }
        k[stage + 1] = eval(t + CNODES[stage] * h, &ys);
    }
    let mut y5 = *y;
    let mut y4 = *y;
    for (j, kj) in k.iter().enumerate() {
        for c in 0..4 {
            y5[c] += kj[c] * (h * B5[j]);
            y4[c] += kj[c] * (h * B4[j]);
        }
    }
    let mut err = [C::new(0.0, 0.0); 4];
    for c in 0..4 {
        err[c] = y5[c] - y4[c];
    }
    (y5, err)
}

/// Integrate one sub-interval [t0, t1] of a piece.
pub fn continue_frame_segment(
    frame: &PeriodFrame,
    piece: &Piece,
    t0: f64,
    t1: f64,
    tol: f64,
) -> Result<PeriodFrame, PeriodError> {
    let mut y = [frame.omega1, frame.domega1, frame.omega2, frame.domega2];
    let mut t = t0;
    let dir = if t1 >= t0 { 1.0 } else { -1.0 };
    let mut h = (t1 - t0) * 0.1;
    if h == 0.0 {
        return Ok(*frame);
    }
    let min_h = (t1 - t0).abs() * 1e-13;
    let singulars = [C::new(0.0, 0.0), C::new(1.0, 0.0)];
    let mut steps = 0usize;
    while (t1 - t) * dir > 1e-15 {
        steps += 1;
        if steps > 2_000_000 {
            return Err(PeriodError::StepFailure(piece.point(t)));
        }
        // Cap the λ-step at half the distance to the nearest singularity.
        let lam = piece.point(t);
        let speed = piece.velocity(t).norm().max(1e-300);
        let dist = singulars.iter().map(|s| (lam - s).norm()).fold(f64::INFINITY, f64::min);
        let cap = 0.5 * dist / speed;
        if h.abs() > cap {
            h = cap * dir;
        }
        if (t + h - t1) * dir > 0.0 {
            h = t1 - t;
        }
        let (ynew, err) = dp54_step(piece, t, h, &y);
        let e = err_norm(&err, &y, tol);
        if e <= 1.0 {
            t += h;
            y = ynew;
            let grow = (0.9 * e.powf(-0.2)).min(4.0);
            h *= grow.max(0.2);
        } else {
            h *= (0.9 * e.powf(-0.2)).max(0.1);
            if h.abs() < min_h {
                return Err(PeriodError::StepFailure(piece.point(t)));
            }
        }
    }
    Ok(PeriodFrame {
        lambda: piece.point(t1),
        omega1: y[0],
        domega1: y[1],
        omega2: y[2],
        domega2: y[3],
    })
}

/// Continue a frame along an entire path.
pub fn continue_frame_values(
    start: &PeriodFrame,
    path: &PlanePath,
    tol: f64,
) -> Result<PeriodFrame, PeriodError> {
    if (path.start() - start.lambda).norm() > 1e-9 {
        return Err(PeriodError::PathMismatch(path.start(), start.lambda));
    }
    let mut frame = *start;
    for piece in path.pieces() {
        frame = continue_frame_segment(&frame, piece, 0.0, 1.0, tol)?;
    }
    Ok(frame)
}

/// Solve for the integer coefficient-transport matrix of a closed loop and
/// report the end frame, the matrix, and the snap residual.
pub fn continue_frame(
    start: &PeriodFrame,
    path: &PlanePath,
    snap_tol: f64,
) -> Result<ContinuationResult, PeriodError> {
    let end = continue_frame_values(start, path, DEFAULT_ODE_TOL)?;
    if !path.is_loop() {
        return Ok(ContinuationResult { end_frame: end, transported_start_basis: None, residual: 0.0 });
    }
    // Each continued period is an integer combination of the start basis:
    // ω_i_end = a·ω₁ + b·ω₂ with the same (a, b) on values and derivatives.
    let det = start.omega1 * start.domega2 - start.omega2 * start.domega1;
    let solve_row = |v: C, dv: C| -> (C, C) {
        let a = (v * start.domega2 - dv * start.omega2) / det;
        let b = (dv * start.omega1 - v * start.domega1) / det;
        (a, b)
    };
    let (a11, a12) = solve_row(end.omega1, end.domega1);
    let (a21, a22) = solve_row(end.omega2, end.domega2);
    let value_matrix = [a11, a12, a21, a22];
    let mut residual = 0.0_f64;
    let mut ints = [0i128; 4];
    for (slot, v) in ints.iter_mut().zip(value_matrix.iter()) {
        let r = v.re.round();
        residual = residual.max((v.re - r).abs()).max(v.im.abs());
        *slot = r as i128;
    }
    if residual > snap_tol {
        return Err(PeriodError::SnapFailure(residual, snap_tol));
    }
    // Coefficient transport is the transpose of the value-transport matrix.
    let m = Mat2::new(ints[0], ints[2], ints[1], ints[3]);
    Ok(ContinuationResult { end_frame: end, transported_start_basis: Some(m), residual })
}

/// A frame tagged with the cover point it was pulled back through. Periods
/// upstairs are compositions with the covering map, so the numbers agree.
#[derive(Clone, Copy, Debug)]
pub struct PulledBackFrame {
    pub frame: PeriodFrame,
    pub w: C,
}

pub fn pullback_frame(
    frame: &PeriodFrame,
    point_lambda: C,
    point_w: C,
) -> Result<PulledBackFrame, PeriodError> {
    if (point_lambda - frame.lambda).norm() > 1e-8 {
        return Err(PeriodError::BasePointMismatch(point_lambda, frame.lambda));
    }
    Ok(PulledBackFrame { frame: *frame, w: point_w })
}
