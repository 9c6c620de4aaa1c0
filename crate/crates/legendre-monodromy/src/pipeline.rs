//! End-to-end orchestration: pick a generator loop α with nonzero logarithm
//! variation, a kernel word δ moving the base sheet, assemble the commutator
//! Γ = α δ α⁻¹ δ⁻¹ and its companion Γ′ = ζ Γ ζ⁻¹ Γ⁻¹, and certify both
//! numerically (trivial period action, nonzero integral logarithm variation,
//! kernel certificates, and the four-step continuation ledger).

use std::collections::{HashSet, VecDeque};

use num_complex::Complex64 as C;
use thiserror::Error;

use crate::cover::{Cover, CoverError, CoverSpec, FiberPoint, LiftedPath};
use crate::elog::{
    betti_coords, continue_log, log_branch, normalize_by_trace, principal_log, ElogError,
    LogBranch, SectionSpec, VariationReport, DEFAULT_DENOMINATOR_BOUND,
};
use crate::paths::{realize, PathError};
use crate::periods::{
    continue_frame, series_frame, PeriodError, PeriodFrame, DEFAULT_SNAP_TOL,
};
use crate::rep::Mat2;
use crate::words::{
    decompose_kernel, in_kernel, Alphabet, KernelCertificate, Word, WordError,
};

#[derive(Error, Debug)]
pub enum PipelineError {
    #[error("stage {stage}: {source}")]
    At {
        stage: &'static str,
        #[source]
        source: Box<PipelineError>,
    },
    #[error(transparent)]
    Cover(#[from] CoverError),
    #[error(transparent)]
    Path(#[from] PathError),
    #[error(transparent)]
    Period(#[from] PeriodError),
    #[error(transparent)]
    Elog(#[from] ElogError),
    #[error(transparent)]
    Word(#[from] WordError),
    #[error("no generator word of length <= {max_len} has a nonzero logarithm variation")]
    AlphaNotFound { max_len: usize },
    #[error("every sheet carries the same transported alpha-period; contradicts the sum-zero relation for a nonzero first period")]
    IndexNotFound,
    #[error("cover is not Galois: not all lifts of alpha are closed, refusing")]
    NotGalois,
    #[error("lattice snap residual {0:.3e} exceeds tolerance")]
    Snap(f64),
    #[error("{stage}: measured value differs from the predicted one by {residual:.3e}")]
    PredictionMismatch { stage: &'static str, residual: f64 },
    #[error("inconsistent input: {0}")]
    Inconsistency(String),
}

fn at(stage: &'static str) -> impl Fn(PipelineError) -> PipelineError {
    move |e| PipelineError::At { stage, source: Box::new(e) }
}

/// A section together with a tracked logarithm determination at one cover
/// point. `half_shift` records the 2-torsion normalization: the working
/// logarithm is ℓ = z − (n·ω₁ + m·ω₂)/2 with the coordinates (n, m) fixed and
/// the period values taken in the branch's own (co-continued) frame, which is
/// exactly how the half period itself continues.
#[derive(Clone, Debug)]
pub struct SectionBranch {
    pub sec: SectionSpec,
    pub branch: LogBranch,
    pub half_shift: (i64, i64),
}

impl SectionBranch {
    pub fn log(&self) -> C {
        let (n, m) = self.half_shift;
        self.branch.z - self.branch.frame.period_value(n, m) / 2.0
    }

    pub fn continue_along(
        &self,
        cover: &Cover,
        lifted: &LiftedPath,
        tol: f64,
    ) -> Result<SectionBranch, PipelineError> {
        let branch = continue_log(&cover.spec, &self.sec, &self.branch, lifted, tol)?;
        Ok(SectionBranch { sec: self.sec.clone(), branch, half_shift: self.half_shift })
    }
}

/// Snap a complex value to the nearest lattice vector of `frame`; errors when
/// the value is not a period to within the (scaled) tolerance.
fn snap_lattice(dz: C, frame: &PeriodFrame, tol: f64) -> Result<((i64, i64), f64), PipelineError> {
    let (b1, b2) = betti_coords(dz, frame)?;
    let (n, m) = (b1.round() as i64, b2.round() as i64);
    let residual = (dz - frame.period_value(n, m)).norm();
    if residual > tol * (1.0 + frame.omega1.norm() + frame.omega2.norm()) {
        return Err(PipelineError::Snap(residual));
    }
    Ok(((n, m), residual))
}

/// Full verification record for one kernel loop.
#[derive(Clone, Debug)]
pub struct LoopReport {
    pub word: Word,
    pub period_matrix: Mat2,
    pub log_variation: (i64, i64),
    pub residuals: Vec<(String, f64)>,
    pub certificate: KernelCertificate,
    pub lift_closed: bool,
}

impl LoopReport {
    pub fn nonzero(&self) -> bool {
        self.log_variation != (0, 0)
    }
}

/// Two loop reports and the 2×2 integer matrix of their variations.
#[derive(Clone, Debug)]
pub struct RankReport {
    pub first: LoopReport,
    pub second: LoopReport,
    pub matrix: [[i64; 2]; 2],
    pub determinant: i64,
    pub rank_two: bool,
}

/// Shortest word in the generator letters whose lift from the branch's sheet
/// is closed and whose logarithm variation around it is a nonzero lattice
/// vector. Breadth-first, fixed letter order, so the result is deterministic.
pub fn find_alpha(
    cover: &Cover,
    sb: &SectionBranch,
    max_len: usize,
    tol: f64,
) -> Result<(Word, VariationReport), PipelineError> {
    let letters = Alphabet::new(cover.k()).letters();
    let sheet0 = sb.branch.at.sheet - 1;
    let mut frontier: VecDeque<Word> = VecDeque::from([Word::identity()]);
    let mut seen: HashSet<Word> = HashSet::from([Word::identity()]);
    while let Some(word) = frontier.pop_front() {
        if !word.is_empty() && cover.fiber_monodromy(&word).apply(sheet0) == sheet0 {
            let path = realize(&word, &cover.plane, cover.radius)?;
            let lifted = cover.lift_path(&path, &sb.branch.at)?;
            let moved = sb.continue_along(cover, &lifted, tol)?;
            let dz = moved.log() - sb.log();
            let (coords, residual) = snap_lattice(dz, &sb.branch.frame, tol)?;
            if coords != (0, 0) {
                let report = VariationReport { word: word.clone(), coords, residual, nonzero: true };
                return Ok((word, report));
            }
        }
        if word.len() < max_len {
            for &l in &letters {
                let next = word.mul(&Word::from_letter(l));
                if next.len() > word.len() && seen.insert(next.clone()) {
                    frontier.push_back(next);
                }
            }
        }
    }
    Err(PipelineError::AlphaNotFound { max_len })
}

/// The period a loop adds to the working logarithm, measured by continuing
/// the branch around the realized lift of `word` starting at the branch's own
/// fiber point. Returns the complex value; the lift must be closed.
fn loop_offset(
    cover: &Cover,
    sb: &SectionBranch,
    word: &Word,
    tol: f64,
) -> Result<C, PipelineError> {
    let path = realize(word, &cover.plane, cover.radius)?;
    let lifted = cover.lift_path(&path, &sb.branch.at)?;
    if lifted.end.sheet != sb.branch.at.sheet {
        return Err(CoverError::LiftNotClosed.into());
    }
    let moved = sb.continue_along(cover, &lifted, tol)?;
    Ok(moved.log() - sb.log())
}

/// Coefficient-transport matrix of a realized loop, read off a full period
/// continuation. Applies to period coordinates in the loop's start frame.
fn transport_matrix(cover: &Cover, frame: &PeriodFrame, word: &Word) -> Result<Mat2, PipelineError> {
    let path = realize(word, &cover.plane, cover.radius)?;
    let cont = continue_frame(frame, &path, DEFAULT_SNAP_TOL)?;
    cont.transported_start_basis
        .ok_or_else(|| PipelineError::Inconsistency("realized word is not a loop".into()))
}

fn apply_transport(m: &Mat2, frame: &PeriodFrame, v: C, tol: f64) -> Result<C, PipelineError> {
    let ((n, mm), _) = snap_lattice(v, frame, tol)?;
    let [a, b, c, d] = m.entries;
    Ok(frame.period_value(a as i64 * n + b as i64 * mm, c as i64 * n + d as i64 * mm))
}

/// Smallest sheet index i ≥ 2 whose α-period differs from the δᵢ-transported
/// α-period of the base sheet. `deltas[j]` must join the base sheet to sheet
/// j + 2.
pub fn choose_index(
    cover: &Cover,
    sb: &SectionBranch,
    alpha: &Word,
    deltas: &[Word],
    tol: f64,
) -> Result<usize, PipelineError> {
    let omega_a1 = loop_offset(cover, sb, alpha, tol)?;
    let (c1, _) = snap_lattice(omega_a1, &sb.branch.frame, tol)?;
    for (j, delta) in deltas.iter().enumerate() {
        let i = j + 2;
        let d_path = realize(delta, &cover.plane, cover.radius)?;
        let lifted = cover.lift_path(&d_path, &sb.branch.at)?;
        if lifted.end.sheet != i {
            return Err(PipelineError::Inconsistency(format!(
                "delta word for sheet {i} ends on sheet {}",
                lifted.end.sheet
            )));
        }
        let sb_i = sb.continue_along(cover, &lifted, tol)?;
        let omega_ai = loop_offset(cover, &sb_i, alpha, tol)?;
        let (ci, _) = snap_lattice(omega_ai, &sb_i.branch.frame, tol)?;
        let m = transport_matrix(cover, &sb.branch.frame, delta)?;
        let transported = apply_transport(&m, &sb.branch.frame, omega_a1, tol)?;
        let (c1_t, _) = snap_lattice(transported, &sb.branch.frame, tol)?;
        if ci != c1_t {
            return Ok(i);
        }
    }
    let _ = c1;
    Err(PipelineError::IndexNotFound)
}

/// The commutator word α δ α⁻¹ δ⁻¹, with δ required to be a kernel word and
/// the lift from `base` verified closed.
pub fn build_gamma(
    cover: &Cover,
    base: &FiberPoint,
    alpha: &Word,
    delta: &Word,
) -> Result<Word, PipelineError> {
    if !in_kernel(delta) {
        return Err(PipelineError::Inconsistency(
            "delta word is not in the kernel of the period representation".into(),
        ));
    }
    let gamma = Word::commutator(alpha, delta);
    if cover.fiber_monodromy(&gamma).apply(base.sheet - 1) != base.sheet - 1 {
        return Err(CoverError::LiftNotClosed.into());
    }
    Ok(gamma)
}

/// Generic certification of a kernel loop: kernel certificate, numerically
/// continued period matrix, and the snapped logarithm variation of one full
/// continuation around the lifted loop.
pub fn verify_loop(
    cover: &Cover,
    sb: &SectionBranch,
    word: &Word,
    tol: f64,
) -> Result<LoopReport, PipelineError> {
    if !in_kernel(word) {
        return Err(PipelineError::Inconsistency("not a kernel word".into()));
    }
    let certificate = decompose_kernel(word)?;
    let path = realize(word, &cover.plane, cover.radius)?;
    let cont = continue_frame(&sb.branch.frame, &path, DEFAULT_SNAP_TOL)?;
    let period_matrix = cont
        .transported_start_basis
        .ok_or_else(|| PipelineError::Inconsistency("realized word is not a loop".into()))?;
    let lifted = cover.lift_path(&path, &sb.branch.at)?;
    let lift_closed = lifted.end.sheet == sb.branch.at.sheet;
    if !lift_closed {
        return Err(CoverError::LiftNotClosed.into());
    }
    let moved = sb.continue_along(cover, &lifted, tol)?;
    let (log_variation, snap_res) = snap_lattice(moved.log() - sb.log(), &sb.branch.frame, tol)?;
    Ok(LoopReport {
        word: word.clone(),
        period_matrix,
        log_variation,
        residuals: vec![
            ("period matrix snap".into(), cont.residual),
            ("variation snap".into(), snap_res),
        ],
        certificate,
        lift_closed,
    })
}

/// Certification of Γ = α δ α⁻¹ δ⁻¹ with the four-step continuation ledger:
/// the working logarithm after each of the four factors is compared against
/// its closed form built from independently measured quantities (the
/// logarithms at both sheets, the two α-periods, and the transport matrix of
/// the α⁻¹ loop).
pub fn verify_gamma(
    cover: &Cover,
    sb: &SectionBranch,
    alpha: &Word,
    delta: &Word,
    tol: f64,
) -> Result<LoopReport, PipelineError> {
    let gamma = build_gamma(cover, &sb.branch.at, alpha, delta)?;
    let frame = &sb.branch.frame;
    let scale = 1.0 + frame.omega1.norm() + frame.omega2.norm();

    // Independent ingredients.
    let l_b1 = sb.log();
    let alpha_path = realize(alpha, &cover.plane, cover.radius)?;
    let lift_a_b1 = cover.lift_path(&alpha_path, &sb.branch.at)?;
    if lift_a_b1.end.sheet != sb.branch.at.sheet {
        return Err(CoverError::LiftNotClosed.into());
    }
    let after_a = sb.continue_along(cover, &lift_a_b1, tol)?;
    let omega_a1 = after_a.log() - l_b1;
    let delta_path = realize(delta, &cover.plane, cover.radius)?;
    let lift_d_b1 = cover.lift_path(&delta_path, &sb.branch.at)?;
    let sb_i = sb.continue_along(cover, &lift_d_b1, tol)?;
    let l_bi = sb_i.log();
    let omega_ai = loop_offset(cover, &sb_i, alpha, tol)?;
    let c = transport_matrix(cover, frame, &alpha.inverse())?;
    let c_of = |v: C| apply_transport(&c, frame, v, tol);

    // Period continuation around the full commutator.
    let gamma_path = realize(&gamma, &cover.plane, cover.radius)?;
    let cont = continue_frame(frame, &gamma_path, DEFAULT_SNAP_TOL)?;
    let period_matrix = cont
        .transported_start_basis
        .ok_or_else(|| PipelineError::Inconsistency("realized word is not a loop".into()))?;

    // Staged continuation with the ledger.
    let mut residuals: Vec<(String, f64)> =
        vec![("period matrix snap".into(), cont.residual)];
    let mut cur = sb.continue_along(cover, &lift_a_b1, tol)?;
    residuals.push((
        "ledger after alpha".into(),
        (cur.log() - (l_b1 + omega_a1)).norm(),
    ));
    let lift_d_after = cover.lift_path(&delta_path, &cur.branch.at)?;
    cur = cur.continue_along(cover, &lift_d_after, tol)?;
    residuals.push((
        "ledger after delta".into(),
        (cur.log() - (l_bi + omega_a1)).norm(),
    ));
    let inv_alpha_path = realize(&alpha.inverse(), &cover.plane, cover.radius)?;
    let lift_ai_inv = cover.lift_path(&inv_alpha_path, &cur.branch.at)?;
    cur = cur.continue_along(cover, &lift_ai_inv, tol)?;
    residuals.push((
        "ledger after alpha_i inverse".into(),
        (cur.log() - (l_bi - c_of(omega_ai)? + c_of(omega_a1)?)).norm(),
    ));
    let inv_delta_path = realize(&delta.inverse(), &cover.plane, cover.radius)?;
    let lift_d_inv = cover.lift_path(&inv_delta_path, &cur.branch.at)?;
    cur = cur.continue_along(cover, &lift_d_inv, tol)?;
    let predicted = c_of(omega_a1 - omega_ai)?;
    residuals.push((
        "ledger after delta inverse".into(),
        (cur.log() - (l_b1 + predicted)).norm(),
    ));

    // Measured variation and the closed-form prediction.
    let measured = cur.log() - l_b1;
    let (log_variation, snap_res) = snap_lattice(measured, frame, tol)?;
    residuals.push(("variation snap".into(), snap_res));
    let mismatch = (measured - predicted).norm();
    residuals.push(("transport prediction".into(), mismatch));
    if mismatch > tol * scale {
        return Err(PipelineError::PredictionMismatch {
            stage: "gamma variation vs transported alpha-periods",
            residual: mismatch,
        });
    }
    for (name, r) in &residuals {
        if name.starts_with("ledger") && *r > tol * scale {
            return Err(PipelineError::PredictionMismatch {
                stage: "continuation ledger",
                residual: *r,
            });
        }
    }

    let certificate = decompose_kernel(&gamma)?;
    Ok(LoopReport {
        word: gamma,
        period_matrix,
        log_variation,
        residuals,
        certificate,
        lift_closed: true,
    })
}

/// The companion loop ζ Γ ζ⁻¹ Γ⁻¹ with ζ the closed power of the generator
/// chosen by the first nonzero coordinate of Γ's variation. Returns the word
/// and the exponent z of ζ.
pub fn build_gamma_prime(
    cover: &Cover,
    base: &FiberPoint,
    gamma: &Word,
    gamma_coords: (i64, i64),
) -> Result<(Word, usize), PipelineError> {
    if gamma_coords == (0, 0) {
        return Err(PipelineError::Inconsistency(
            "gamma has zero variation, no companion loop exists".into(),
        ));
    }
    let (z0, z1) = cover.zeta_loops(base)?;
    let zeta = if gamma_coords.0 != 0 { z1 } else { z0 };
    let z = zeta.len();
    Ok((Word::commutator(&zeta, gamma), z))
}

pub fn rank_check(first: LoopReport, second: LoopReport) -> RankReport {
    let matrix = [
        [first.log_variation.0, first.log_variation.1],
        [second.log_variation.0, second.log_variation.1],
    ];
    let determinant = matrix[0][0] * matrix[1][1] - matrix[0][1] * matrix[1][0];
    RankReport { first, second, matrix, determinant, rank_two: determinant != 0 }
}

#[derive(Clone, Debug)]
pub struct PipelineOptions {
    pub basepoint: C,
    pub tol: f64,
    pub alpha_max_len: usize,
    pub delta_max_level: u32,
    pub delta_max_len: usize,
    pub denom_bound: u32,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            basepoint: C::new(0.5, 0.0),
            tol: 1e-8,
            alpha_max_len: 2,
            delta_max_level: 2,
            delta_max_len: 8,
            denom_bound: DEFAULT_DENOMINATOR_BOUND,
        }
    }
}

/// Everything one full run certifies, stage by stage.
#[derive(Clone, Debug)]
pub struct PipelineReport {
    pub degree: usize,
    pub galois: bool,
    pub trace_multiplier: i64,
    pub half_shift: (i64, i64),
    /// Degree-2 walkthrough check: after the 2-torsion normalization the
    /// δ-continued logarithm is the negative of the starting one.
    pub sign_residual: Option<f64>,
    pub deltas: Vec<Word>,
    pub alpha: Word,
    pub omega_alpha: VariationReport,
    pub index: usize,
    pub gamma: LoopReport,
    pub zeta_power: usize,
    pub gamma_prime: LoopReport,
    pub rank: RankReport,
}

/// Run the whole construction on one cover + section pair.
pub fn run_pipeline(
    spec: CoverSpec,
    sec: SectionSpec,
    opts: &PipelineOptions,
) -> Result<PipelineReport, PipelineError> {
    let tol = opts.tol;
    let cover = Cover::new(spec, opts.basepoint).map_err(|e| at("cover")(e.into()))?;
    let degree = cover.degree();
    if !cover.is_galois() {
        return Err(PipelineError::NotGalois);
    }

    // Base logarithm branch on sheet 1.
    let b1 = cover.base_point(1);
    let frame = series_frame(opts.basepoint).map_err(|e| at("base frame")(e.into()))?;
    let value = sec.eval(opts.basepoint, b1.w);
    let z1 = principal_log(opts.basepoint, &value, &frame).map_err(|e| at("base log")(e.into()))?;
    let branch1 = log_branch(b1, z1, frame).map_err(|e| at("base log")(e.into()))?;

    // Kernel words joining sheet 1 to every other sheet, and the fiber logs.
    let mut deltas = Vec::new();
    let mut fiber_logs = vec![branch1];
    let plain = SectionBranch { sec: sec.clone(), branch: branch1, half_shift: (0, 0) };
    for i in 2..=degree {
        let delta = cover
            .find_delta(1, i, opts.delta_max_level, opts.delta_max_len)
            .map_err(|e| at("find_delta")(e.into()))?;
        let path = realize(&delta, &cover.plane, cover.radius).map_err(|e| at("find_delta")(e.into()))?;
        let lifted = cover.lift_path(&path, &b1).map_err(|e| at("find_delta")(e.into()))?;
        let moved = plain.continue_along(&cover, &lifted, tol).map_err(at("fiber logs"))?;
        fiber_logs.push(moved.branch);
        deltas.push(delta);
    }

    // Trace normalization, then the 2-torsion shift of the two-sheet
    // walkthrough: with z₁ + z₂ = ω a period, ℓ = z₁ − ω/2 satisfies
    // c_δ(ℓ) = −ℓ.
    let (trace_multiplier, _shifted) =
        normalize_by_trace(&sec, &fiber_logs, opts.denom_bound, 1e-6)
            .map_err(|e| at("trace normalization")(e.into()))?;
    let sum: C = fiber_logs.iter().map(|b| b.z).sum();
    let (omega_coords, _) = snap_lattice(sum, &frame, 1e-6).map_err(at("trace normalization"))?;
    let half_shift = if degree == 2 { omega_coords } else { (0, 0) };
    let mut sb = SectionBranch { sec: sec.clone(), branch: branch1, half_shift };
    let sign_residual = if degree == 2 {
        let moved = SectionBranch {
            sec: sec.clone(),
            branch: fiber_logs[1],
            half_shift,
        };
        Some((moved.log() + sb.log()).norm())
    } else {
        None
    };

    // The generator search runs on the normalized branch. On covers of
    // degree > 2 the shift starts at zero; if no generator moves the raw
    // logarithm, retry once with the detected trace period halved (still a
    // 2-torsion move), mirroring the two-sheet normalization.
    let (alpha, omega_alpha) = match find_alpha(&cover, &sb, opts.alpha_max_len, tol) {
        Ok(found) => found,
        Err(PipelineError::AlphaNotFound { .. })
            if sb.half_shift == (0, 0) && omega_coords != (0, 0) =>
        {
            sb.half_shift = omega_coords;
            find_alpha(&cover, &sb, opts.alpha_max_len, tol).map_err(at("find_alpha"))?
        }
        Err(e) => return Err(at("find_alpha")(e)),
    };
    let half_shift = sb.half_shift;
    let index = choose_index(&cover, &sb, &alpha, &deltas, tol).map_err(at("choose_index"))?;
    let gamma_report =
        verify_gamma(&cover, &sb, &alpha, &deltas[index - 2], tol).map_err(at("verify_gamma"))?;
    if !gamma_report.period_matrix.is_identity() {
        return Err(PipelineError::Inconsistency(
            "period matrix around gamma is not the identity".into(),
        ));
    }
    if !gamma_report.nonzero() {
        return Err(PipelineError::Inconsistency(
            "gamma variation is zero; section behaves as torsion".into(),
        ));
    }

    let (gp_word, zeta_power) =
        build_gamma_prime(&cover, &b1, &gamma_report.word, gamma_report.log_variation)
            .map_err(at("build_gamma_prime"))?;
    let mut gp_report = verify_loop(&cover, &sb, &gp_word, tol).map_err(at("verify_gamma_prime"))?;
    if gp_report.certificate.witness_level() as usize > zeta_power + 1 {
        return Err(PipelineError::Inconsistency(format!(
            "gamma_prime certificate level {} exceeds z + 1 = {}",
            gp_report.certificate.witness_level(),
            zeta_power + 1
        )));
    }
    // Predicted companion variation (0, −2·n₁·z) for ζ a power of the second
    // generator, i.e. when the first coordinate n₁ is nonzero.
    let (n1, _) = gamma_report.log_variation;
    if n1 != 0 {
        let predicted = (0i64, -2 * n1 * zeta_power as i64);
        let diff = ((gp_report.log_variation.0 - predicted.0).pow(2)
            + (gp_report.log_variation.1 - predicted.1).pow(2)) as f64;
        gp_report.residuals.push(("companion variation prediction".into(), diff.sqrt()));
        if gp_report.log_variation != predicted {
            return Err(PipelineError::PredictionMismatch {
                stage: "gamma_prime variation",
                residual: diff.sqrt(),
            });
        }
    }

    let rank = rank_check(gamma_report.clone(), gp_report.clone());
    Ok(PipelineReport {
        degree,
        galois: true,
        trace_multiplier,
        half_shift,
        sign_residual,
        deltas,
        alpha,
        omega_alpha,
        index,
        gamma: gamma_report,
        zeta_power,
        gamma_prime: gp_report,
        rank,
    })
}

/// The two-sheeted demonstration instance: P defined by w² = 2 − λ with the
/// section (2, √2·w), run through the whole construction with defaults.
pub fn masser_demo() -> Result<PipelineReport, PipelineError> {
    run_pipeline(CoverSpec::masser(), SectionSpec::masser(), &PipelineOptions::default())
}
