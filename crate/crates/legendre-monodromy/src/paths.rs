//! Geometric realization of symbolic words as piecewise paths (line segments
//! and circular arcs) in the punctured λ-plane.
//!
//! Each generator letter becomes tail–circle–tail: a radial spoke from the
//! basepoint to a circle of the configured radius around the letter's
//! puncture, a full counterclockwise turn (clockwise for inverse letters),
//! and the spoke back. Spokes that would pass near another puncture detour
//! along an arc around the obstruction. Words are traversed left to right.

use crate::words::{LetterKind, Word};
use num_complex::Complex64;
use std::f64::consts::PI;
use std::fmt::Write as _;
use thiserror::Error;

type C = Complex64;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum PathError {
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("concatenation endpoints differ: {0} vs {1}")]
    EndpointMismatch(C, C),
    #[error("letter refers to puncture index {0} but the plane has {1} extra punctures")]
    MissingPuncture(u32, usize),
}

/// The λ-plane with punctures removed. The first two punctures are always
/// 0 and 1; the rest are the extra branch points r_1..r_k in order.
#[derive(Clone, Debug)]
pub struct PuncturedPlane {
    punctures: Vec<C>,
    basepoint: C,
}

impl PuncturedPlane {
    /// `extra` lists r_1..r_k.
    pub fn new(extra: &[C], basepoint: C) -> Result<Self, PathError> {
        let mut punctures = vec![C::new(0.0, 0.0), C::new(1.0, 0.0)];
        punctures.extend_from_slice(extra);
        for (i, p) in punctures.iter().enumerate() {
            if (basepoint - p).norm() < 1e-12 {
                return Err(PathError::Geometry(format!("basepoint coincides with puncture {p}")));
            }
            for q in &punctures[..i] {
                if (p - q).norm() < 1e-12 {
                    return Err(PathError::Geometry(format!("repeated puncture {p}")));
                }
            }
        }
        Ok(PuncturedPlane { punctures, basepoint })
    }

    pub fn punctures(&self) -> &[C] {
        &self.punctures
    }

    pub fn basepoint(&self) -> C {
        self.basepoint
    }

    pub fn min_puncture_gap(&self) -> f64 {
        let mut gap = f64::INFINITY;
        for (i, p) in self.punctures.iter().enumerate() {
            for q in &self.punctures[..i] {
                gap = gap.min((p - q).norm());
            }
        }
        gap
    }

    /// Default loop radius: min(0.1, a quarter of the smallest puncture gap).
    pub fn default_radius(&self) -> f64 {
        (0.1f64).min(self.min_puncture_gap() / 4.0)
    }

    fn puncture_of(&self, kind: LetterKind) -> Result<C, PathError> {
        match kind {
            LetterKind::A0 => Ok(self.punctures[0]),
            LetterKind::A1 => Ok(self.punctures[1]),
            LetterKind::D(i) => self
                .punctures
                .get(1 + i as usize)
                .copied()
                .ok_or(PathError::MissingPuncture(i, self.punctures.len() - 2)),
        }
    }
}

/// One parameterized piece, t in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub enum Piece {
    Line { from: C, to: C },
    /// Angles in radians; theta runs linearly from theta0 to theta1, so
    /// theta1 > theta0 is counterclockwise.
    Arc { center: C, radius: f64, theta0: f64, theta1: f64 },
}

impl Piece {
    pub fn start(&self) -> C {
        self.point(0.0)
    }

    pub fn end(&self) -> C {
        self.point(1.0)
    }

    pub fn point(&self, t: f64) -> C {
        match self {
            Piece::Line { from, to } => from + (to - from) * t,
            Piece::Arc { center, radius, theta0, theta1 } => {
                let th = theta0 + (theta1 - theta0) * t;
                center + C::from_polar(*radius, th)
            }
        }
    }

    /// dλ/dt.
    pub fn velocity(&self, t: f64) -> C {
        match self {
            Piece::Line { from, to } => to - from,
            Piece::Arc { center: _, radius, theta0, theta1 } => {
                let dth = theta1 - theta0;
                let th = theta0 + dth * t;
                C::from_polar(*radius, th) * C::new(0.0, dth)
            }
        }
    }

    pub fn arclength(&self) -> f64 {
        match self {
            Piece::Line { from, to } => (to - from).norm(),
            Piece::Arc { radius, theta0, theta1, .. } => radius * (theta1 - theta0).abs(),
        }
    }

    pub fn reversed(&self) -> Piece {
        match *self {
            Piece::Line { from, to } => Piece::Line { from: to, to: from },
            Piece::Arc { center, radius, theta0, theta1 } => {
                Piece::Arc { center, radius, theta0: theta1, theta1: theta0 }
            }
        }
    }

    /// Exact distance from a point to the piece.
    pub fn distance_to(&self, q: C) -> f64 {
        match self {
            Piece::Line { from, to } => {
                let d = to - from;
                let len2 = d.norm_sqr();
                if len2 == 0.0 {
                    return (q - from).norm();
                }
                let t = ((q - from).re * d.re + (q - from).im * d.im) / len2;
                let t = t.clamp(0.0, 1.0);
                (q - (from + d * t)).norm()
            }
            Piece::Arc { center, radius, theta0, theta1 } => {
                let rel = q - center;
                let phi = rel.im.atan2(rel.re);
                let lo = theta0.min(*theta1);
                let hi = theta0.max(*theta1);
                // Shift phi by multiples of 2π into [lo, lo + 2π).
                let mut ph = phi;
                while ph < lo {
                    ph += 2.0 * PI;
                }
                while ph >= lo + 2.0 * PI {
                    ph -= 2.0 * PI;
                }
                if ph <= hi {
                    (rel.norm() - radius).abs()
                } else {
                    let e0 = (q - self.start()).norm();
                    let e1 = (q - self.end()).norm();
                    e0.min(e1)
                }
            }
        }
    }
}

/// A piecewise path with a recorded clearance to every puncture.
#[derive(Clone, Debug)]
pub struct PlanePath {
    pieces: Vec<Piece>,
    start: C,
    clearance: f64,
}

impl PlanePath {
    pub fn constant(at: C) -> Self {
        PlanePath { pieces: Vec::new(), start: at, clearance: f64::INFINITY }
    }

    pub fn from_pieces(pieces: Vec<Piece>, plane: &PuncturedPlane) -> Result<Self, PathError> {
        let start = pieces.first().map(|p| p.start()).unwrap_or(plane.basepoint());
        for w in pieces.windows(2) {
            let gap = (w[0].end() - w[1].start()).norm();
            if gap > 1e-9 {
                return Err(PathError::EndpointMismatch(w[0].end(), w[1].start()));
            }
        }
        let clearance = pieces
            .iter()
            .flat_map(|piece| plane.punctures().iter().map(move |&q| piece.distance_to(q)))
            .fold(f64::INFINITY, f64::min);
        Ok(PlanePath { pieces, start, clearance })
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn start(&self) -> C {
        self.start
    }

    pub fn end(&self) -> C {
        self.pieces.last().map(|p| p.end()).unwrap_or(self.start)
    }

    pub fn is_loop(&self) -> bool {
        (self.end() - self.start()).norm() < 1e-9
    }

    pub fn clearance(&self) -> f64 {
        self.clearance
    }

    pub fn arclength(&self) -> f64 {
        self.pieces.iter().map(|p| p.arclength()).sum()
    }

    /// Concatenation; clearance is the minimum of the two.
    pub fn concat(&self, other: &PlanePath) -> Result<PlanePath, PathError> {
        if other.pieces.is_empty() {
            return Ok(self.clone());
        }
        if self.pieces.is_empty() {
            if (other.start() - self.start).norm() > 1e-9 {
                return Err(PathError::EndpointMismatch(self.start, other.start()));
            }
            return Ok(other.clone());
        }
        if (self.end() - other.start()).norm() > 1e-9 {
            return Err(PathError::EndpointMismatch(self.end(), other.start()));
        }
        let mut pieces = self.pieces.clone();
        pieces.extend(other.pieces.iter().cloned());
        Ok(PlanePath {
            pieces,
            start: self.start,
            clearance: self.clearance.min(other.clearance),
        })
    }

    /// The reversed path.
    pub fn invert(&self) -> PlanePath {
        let pieces: Vec<Piece> = self.pieces.iter().rev().map(|p| p.reversed()).collect();
        PlanePath { pieces, start: self.end(), clearance: self.clearance }
    }

    /// Uniform-in-arclength samples as (t, λ) rows for plotting.
    pub fn sample(&self, count: usize) -> Vec<(f64, C)> {
        if self.pieces.is_empty() {
            return vec![(0.0, self.start), (1.0, self.start)];
        }
        let total: f64 = self.arclength();
        let mut rows = Vec::with_capacity(count + 1);
        let mut done = 0.0;
        for piece in &self.pieces {
            let len = piece.arclength();
            let n = ((len / total) * count as f64).ceil().max(1.0) as usize;
            for i in 0..n {
                let t_local = i as f64 / n as f64;
                rows.push(((done + t_local * len) / total, piece.point(t_local)));
            }
            done += len;
        }
        rows.push((1.0, self.end()));
        rows
    }

    /// CSV trace with columns t, re, im.
    pub fn to_csv(&self, count: usize) -> String {
        let mut out = String::from("t,re,im\n");
        for (t, z) in self.sample(count) {
            let _ = writeln!(out, "{t},{},{}", z.re, z.im);
        }
        out
    }
}

/// Build the spoke from `from` toward the circle entry `to`, detouring
/// around any puncture that the straight segment approaches closer than
/// `detour_radius`. `avoid` excludes the target puncture itself.
fn route_segment(
    from: C,
    to: C,
    plane: &PuncturedPlane,
    detour_radius: f64,
    avoid: C,
) -> Result<Vec<Piece>, PathError> {
    let d = to - from;
    let len = d.norm();
    if len < 1e-15 {
        return Ok(Vec::new());
    }
    // Collect obstructions sorted by position along the segment.
    let mut cuts: Vec<(f64, f64, C)> = Vec::new();
    for &q in plane.punctures() {
        if (q - avoid).norm() < 1e-12 {
            continue;
        }
        let proj = ((q - from).re * d.re + (q - from).im * d.im) / (len * len);
        let dist = (q - (from + d * proj.clamp(0.0, 1.0))).norm();
        if dist >= detour_radius {
            continue;
        }
        if (q - from).norm() < detour_radius || (q - to).norm() < detour_radius {
            return Err(PathError::Geometry(format!(
                "spoke endpoint within detour radius of puncture {q}"
            )));
        }
        // Chord parameters where |λ(t) − q| = detour_radius.
        let perp = (q - (from + d * proj)).norm();
        let half = (detour_radius * detour_radius - perp * perp).sqrt() / len;
        cuts.push((proj - half, proj + half, q));
    }
    cuts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    for w in cuts.windows(2) {
        if w[0].1 > w[1].0 {
            return Err(PathError::Geometry(
                "overlapping detours; punctures too close for the chosen radius".into(),
            ));
        }
    }

    let mut pieces = Vec::new();
    let mut t_prev = 0.0;
    for &(t1, t2, q) in &cuts {
        let p1 = from + d * t1;
        let p2 = from + d * t2;
        if t1 > t_prev {
            pieces.push(Piece::Line { from: from + d * t_prev, to: p1 });
        }
        let a1 = (p1 - q).im.atan2((p1 - q).re);
        let a2 = (p2 - q).im.atan2((p2 - q).re);
        // Shorter angular route; ties break counterclockwise.
        let mut dth = a2 - a1;
        while dth <= -PI {
            dth += 2.0 * PI;
        }
        while dth > PI {
            dth -= 2.0 * PI;
        }
        if (dth + PI).abs() < 1e-9 {
            dth = PI;
        }
        pieces.push(Piece::Arc { center: q, radius: detour_radius, theta0: a1, theta1: a1 + dth });
        t_prev = t2;
    }
    if t_prev < 1.0 {
        pieces.push(Piece::Line { from: from + d * t_prev, to });
    }
    Ok(pieces)
}

/// Realize a single letter loop: spoke, full circle, spoke back.
fn letter_path(
    letter: crate::words::Letter,
    plane: &PuncturedPlane,
    radius: f64,
) -> Result<Vec<Piece>, PathError> {
    let p = plane.puncture_of(letter.kind)?;
    let s = plane.basepoint();
    let dir = (s - p) / (s - p).norm();
    let entry = p + dir * radius;
    let mut pieces = route_segment(s, entry, plane, radius, p)?;
    let th0 = dir.im.atan2(dir.re);
    // With the series normalization of (ω₁, ω₂), the loop class carrying the
    // standard generator matrix is counterclockwise around 0 but clockwise
    // around 1; extra punctures turn counterclockwise.
    let base_turn = match letter.kind {
        LetterKind::A1 => -2.0 * PI,
        _ => 2.0 * PI,
    };
    let turn = if letter.inverted { -base_turn } else { base_turn };
    pieces.push(Piece::Arc { center: p, radius, theta0: th0, theta1: th0 + turn });
    let back: Vec<Piece> = route_segment(s, entry, plane, radius, p)?
        .iter()
        .rev()
        .map(|pc| pc.reversed())
        .collect();
    pieces.extend(back);
    Ok(pieces)
}

/// Realize a word as a closed path at the basepoint, letters traversed left
/// to right: counterclockwise circles for generators, clockwise for
/// inverses.
pub fn realize(w: &Word, plane: &PuncturedPlane, radius: f64) -> Result<PlanePath, PathError> {
    if radius <= 0.0 || radius >= plane.min_puncture_gap() / 2.0 {
        return Err(PathError::Geometry(format!(
            "radius {radius} must be positive and below half the minimum puncture gap"
        )));
    }
    let eps_geom = radius / 4.0;
    let mut pieces = Vec::new();
    for &l in w.letters() {
        pieces.extend(letter_path(l, plane, radius)?);
    }
    let path = if pieces.is_empty() {
        PlanePath::constant(plane.basepoint())
    } else {
        PlanePath::from_pieces(pieces, plane)?
    };
    if !path.pieces.is_empty() && path.clearance() < eps_geom {
        return Err(PathError::Geometry(format!(
            "realized clearance {} below required {eps_geom}",
            path.clearance()
        )));
    }
    Ok(path)
}
