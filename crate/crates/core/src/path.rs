//! The collapsing continuity path w(t) = w0 - (1 - e^{-t}) Ric(w(t)) in
//! reparametrized time, its reference forms and volume form, the marching
//! loop, and the anticanonical restart path on the base after collapse.

use crate::mesh::{solve_banded, BandedSystem, Mesh};
use crate::newton::{
    continuation_step_capped, linearization, newton_solve, newton_solve_capped,
    NewtonReport, Normalization, DEFAULT_MAX_ITERATIONS,
    ReducedMAProblem, SolveError,
};
use crate::radial::{
    reference_potential, ricci_profile, softplus, AnsatzBase, GeometryError, Model,
    ModelProfile, ModelSpec, ProfileKind, RadialPotential,
};
use std::sync::Arc;
use thiserror::Error;

/// Solver tolerance used along the path, well below discretization error.
pub const PATH_TOLERANCE: f64 = 1e-10;

const MAX_REFINEMENTS: usize = 10;

/// Newton controls threaded from run configurations.
#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: PATH_TOLERANCE,
            max_iter: DEFAULT_MAX_ITERATIONS,
        }
    }
}

#[derive(Debug, Error)]
pub enum PathError {
    #[error(
        "volume form not smooth: boundary exponents p = {p:.6}, q = {q:.6} must vanish \
         (class consistency b0 = kappa + 2 - a, binf = kappa + 2 + a)"
    )]
    SmoothnessCheckFailed { p: f64, q: f64 },
    #[error("geometric time {0} outside [0, 1)")]
    OutOfRange(f64),
    #[error("step refinement exhausted near t = {t}")]
    StepRefinementExhausted { t: f64 },
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Smooth volume form Omega with sqrt(-1) d dbar log Omega = f*chi - w0.
#[derive(Debug, Clone)]
pub struct VolumeForm {
    pub gauge: f64,
    /// log of Omega against the Euclidean density at the nodes (for the
    /// product model: the fiber slice through the base point rho_base = 0).
    pub log_density: Vec<f64>,
}

/// Builds Omega = gauge e^{kappa rho - u0} dV and verifies that it extends
/// to a smooth positive volume form across both degenerate ends.
pub fn build_volume_form(
    spec: &ModelSpec,
    gauge: f64,
    mesh: &Arc<Mesh>,
) -> Result<VolumeForm, PathError> {
    spec.validate()?;
    assert!(gauge > 0.0, "gauge must be positive");
    match spec.model {
        Model::Hirzebruch { .. } => {
            let a = spec.a();
            // Omega / (smooth reference volume) ~ x^p (1-x)^q near the ends
            let p = (spec.kappa + 2.0 - spec.b0) / a - 1.0;
            let q = (spec.binf - spec.kappa - 2.0) / a - 1.0;
            if p.abs() > 1e-9 || q.abs() > 1e-9 {
                return Err(PathError::SmoothnessCheckFailed { p, q });
            }
            let u0 = reference_potential(spec, mesh);
            let vals = u0.values();
            let log_density: Vec<f64> = (0..mesh.n)
                .map(|i| gauge.ln() + spec.kappa * mesh.rho(i) - vals[i])
                .collect();
            Ok(VolumeForm { gauge, log_density })
        }
        Model::ProductP1xP1 => {
            // Omega = gauge e^{-2 u_base} e^{-2 u_fiber} dV is smooth for any
            // gauge; store the fiber slice at the base midpoint.
            let u_fs0 = 2.0f64.ln();
            let log_density: Vec<f64> = (0..mesh.n)
                .map(|i| gauge.ln() - 2.0 * softplus(mesh.rho(i)) - 2.0 * u_fs0)
                .collect();
            Ok(VolumeForm { gauge, log_density })
        }
    }
}

/// Reference potential of w_t = e^{-t} w0 + (1 - e^{-t}) f*chi. For the
/// product model this is the fiber factor 2 e^{-t} u_FS; the base factor is
/// the pinned coefficient `product_base_coeff`.
pub fn reference_form(spec: &ModelSpec, t: f64, mesh: &Arc<Mesh>) -> Result<RadialPotential, PathError> {
    assert!(t >= 0.0, "t must be nonnegative");
    let e = (-t).exp();
    let u = match spec.model {
        Model::Hirzebruch { .. } => {
            let base = AnsatzBase::new(
                e * spec.b0 + (1.0 - e) * spec.kappa,
                e * (spec.binf - spec.b0),
            );
            RadialPotential::new(mesh.clone(), ProfileKind::Surface, base, vec![0.0; mesh.n])
        }
        Model::ProductP1xP1 => RadialPotential::new(
            mesh.clone(),
            ProfileKind::Curve,
            AnsatzBase::new(0.0, (spec.binf - spec.b0) * e),
            vec![0.0; mesh.n],
        ),
    };
    if !u.is_admissible() {
        return Err(PathError::Geometry(GeometryError::NonAdmissible(format!(
            "reference form at t = {t} leaves the positivity window"
        ))));
    }
    Ok(u)
}

/// Base-factor coefficient of the product-model reference: kappa + 2 e^{-t}.
pub fn product_base_coeff(spec: &ModelSpec, t: f64) -> f64 {
    spec.kappa + (spec.binf - spec.b0) * (-t).exp()
}

/// The reduced Monge-Ampère problem of the path at time t.
pub fn path_problem(
    spec: &ModelSpec,
    omega: &VolumeForm,
    t: f64,
    mesh: &Arc<Mesh>,
) -> Result<ReducedMAProblem, PathError> {
    if t <= 0.0 {
        return Err(PathError::InvalidSchedule(format!(
            "path problem needs t > 0, got {t}"
        )));
    }
    let u_ref = reference_form(spec, t, mesh)?;
    let c_exp = 1.0 / (1.0 - (-t).exp());
    let log_rhs = match spec.model {
        Model::Hirzebruch { .. } => {
            vec![(omega.gauge / (2.0 * spec.a())).ln() - t; mesh.n]
        }
        Model::ProductP1xP1 => {
            let c_a = product_base_coeff(spec, t);
            vec![(omega.gauge / (2.0 * c_a)).ln() - t; mesh.n]
        }
    };
    Ok(ReducedMAProblem {
        u_ref,
        log_rhs,
        c_exp,
        normalization: Normalization::None,
    })
}

/// One solved time slice of the path.
#[derive(Debug, Clone)]
pub struct PathState {
    pub t: f64,
    pub phi: Vec<f64>,
    pub phi_dot: Vec<f64>,
    pub profile: ModelProfile,
    pub report: NewtonReport,
}

/// -dF/dt at the solved phi, the right-hand side of the linearized
/// phi_dot system.
fn phi_dot_rhs(
    spec: &ModelSpec,
    omega_profile: &RadialPotential,
    t: f64,
    phi: &[f64],
) -> Vec<f64> {
    let e = (-t).exp();
    let mesh = &omega_profile.mesh;
    let cdot_coeff = e / (1.0 - e).powi(2);
    let up = omega_profile.u_prime();
    let q = omega_profile.q();
    match spec.model {
        Model::Hirzebruch { .. } => {
            let alpha0 = spec.binf - spec.b0;
            (0..mesh.n)
                .map(|i| {
                    let x = mesh.nodes[i];
                    let u0p = spec.b0 + alpha0 * x;
                    let dlog_up = e * (spec.kappa - u0p) / up[i];
                    let dlog_q = -e * alpha0 / q[i];
                    -(dlog_up + dlog_q + 1.0 + cdot_coeff * phi[i])
                })
                .collect()
        }
        Model::ProductP1xP1 => {
            let c_a = product_base_coeff(spec, t);
            let amp = spec.binf - spec.b0;
            (0..mesh.n)
                .map(|i| {
                    let dlog_q = -amp * e / q[i];
                    let dlog_rhs = -amp * e / c_a;
                    -(dlog_q + dlog_rhs + 1.0 + cdot_coeff * phi[i])
                })
                .collect()
        }
    }
}

fn assemble_state(
    spec: &ModelSpec,
    p: &ReducedMAProblem,
    t: f64,
    phi: Vec<f64>,
    report: NewtonReport,
) -> Result<PathState, PathError> {
    let solved = p.perturbed(&phi);
    let rhs = phi_dot_rhs(spec, &solved, t, &phi);
    let jac = linearization(p, &phi)?;
    let phi_dot =
        solve_banded(&BandedSystem { matrix: jac, rhs }).map_err(SolveError::Linear)?;
    let profile = match spec.model {
        Model::Hirzebruch { .. } => ModelProfile::Hirzebruch(solved),
        Model::ProductP1xP1 => ModelProfile::Product {
            base_coeff: product_base_coeff(spec, t),
            fiber: solved,
        },
    };
    Ok(PathState {
        t,
        phi,
        phi_dot,
        profile,
        report,
    })
}

/// Solves the path equation at time t; `warm` seeds the Newton iteration
/// (zeros when absent, matching phi(0) = 0).
pub fn solve_at(
    spec: &ModelSpec,
    omega: &VolumeForm,
    t: f64,
    mesh: &Arc<Mesh>,
    warm: Option<&[f64]>,
) -> Result<PathState, PathError> {
    solve_at_with(spec, omega, t, mesh, warm, SolveOptions::default())
}

/// `solve_at` with explicit Newton controls.
pub fn solve_at_with(
    spec: &ModelSpec,
    omega: &VolumeForm,
    t: f64,
    mesh: &Arc<Mesh>,
    warm: Option<&[f64]>,
    opts: SolveOptions,
) -> Result<PathState, PathError> {
    let p = path_problem(spec, omega, t, mesh)?;
    let zeros = vec![0.0; mesh.n];
    let start = warm.unwrap_or(&zeros);
    let (phi, report) = newton_solve_capped(&p, start, opts.tol, opts.max_iter)?;
    assemble_state(spec, &p, t, phi, report)
}

fn advance(
    spec: &ModelSpec,
    omega: &VolumeForm,
    mesh: &Arc<Mesh>,
    prev_phi: &[f64],
    prev_t: f64,
    target_t: f64,
    opts: SolveOptions,
    depth: usize,
) -> Result<(Vec<f64>, NewtonReport), PathError> {
    let p = path_problem(spec, omega, target_t, mesh)?;
    match continuation_step_capped(prev_phi, &p, opts.tol, opts.max_iter) {
        Ok(done) => Ok(done),
        Err(
            SolveError::NonAdmissibleBasin
            | SolveError::LineSearchStall { .. }
            | SolveError::MaxIterations { .. },
        ) => {
            if depth >= MAX_REFINEMENTS {
                return Err(PathError::StepRefinementExhausted { t: target_t });
            }
            let mid = 0.5 * (prev_t + target_t);
            let (phi_mid, _) =
                advance(spec, omega, mesh, prev_phi, prev_t, mid, opts, depth + 1)?;
            advance(spec, omega, mesh, &phi_mid, mid, target_t, opts, depth + 1)
        }
        Err(e) => Err(e.into()),
    }
}

/// Warm-started march over an increasing schedule, emitting every solved
/// state to `sink` as it completes. With `warm = Some((t0, phi0))` the march
/// continues a previous run from its last persisted slice; every schedule
/// entry must then lie beyond t0.
pub fn march_resume(
    spec: &ModelSpec,
    omega: &VolumeForm,
    mesh: &Arc<Mesh>,
    schedule: &[f64],
    warm: Option<(f64, &[f64])>,
    opts: SolveOptions,
    sink: &mut dyn FnMut(&PathState),
) -> Result<Vec<PathState>, PathError> {
    if schedule.is_empty() {
        return Err(PathError::InvalidSchedule("empty schedule".into()));
    }
    if schedule[0] < 0.1 {
        return Err(PathError::InvalidSchedule(format!(
            "schedule must start at t >= 0.1, got {}",
            schedule[0]
        )));
    }
    if schedule.windows(2).any(|w| w[1] <= w[0]) {
        return Err(PathError::InvalidSchedule("schedule must increase".into()));
    }
    if let Some((t0, phi0)) = warm {
        if schedule[0] <= t0 {
            return Err(PathError::InvalidSchedule(format!(
                "resume schedule must start beyond the persisted t = {t0}"
            )));
        }
        if phi0.len() != mesh.n {
            return Err(PathError::InvalidSchedule(
                "persisted potential does not match the mesh".into(),
            ));
        }
    }
    let mut states = Vec::with_capacity(schedule.len());
    let mut prev: Option<(f64, Vec<f64>)> = warm.map(|(t, p)| (t, p.to_vec()));
    for &t in schedule {
        let state = match &prev {
            None => solve_at_with(spec, omega, t, mesh, None, opts)?,
            Some((pt, pphi)) => {
                let (phi, report) = advance(spec, omega, mesh, pphi, *pt, t, opts, 0)?;
                let p = path_problem(spec, omega, t, mesh)?;
                assemble_state(spec, &p, t, phi, report)?
            }
        };
        sink(&state);
        prev = Some((state.t, state.phi.clone()));
        states.push(state);
    }
    Ok(states)
}

/// Warm-started march over an increasing schedule from a cold start.
pub fn march_with(
    spec: &ModelSpec,
    omega: &VolumeForm,
    mesh: &Arc<Mesh>,
    schedule: &[f64],
    sink: &mut dyn FnMut(&PathState),
) -> Result<Vec<PathState>, PathError> {
    march_resume(spec, omega, mesh, schedule, None, SolveOptions::default(), sink)
}

/// March without a sink.
pub fn march(
    spec: &ModelSpec,
    omega: &VolumeForm,
    mesh: &Arc<Mesh>,
    schedule: &[f64],
) -> Result<Vec<PathState>, PathError> {
    march_with(spec, omega, mesh, schedule, &mut |_| {})
}

/// Default schedule: t from 0.1 by 0.05 to 1, then by 0.25 to 12.
pub fn default_schedule() -> Vec<f64> {
    let mut ts = Vec::new();
    let mut k = 2;
    while k <= 20 {
        ts.push(k as f64 * 0.05);
        k += 1;
    }
    let mut m = 5;
    while m <= 48 {
        ts.push(m as f64 * 0.25);
        m += 1;
    }
    ts
}

/// Geometric time s in [0,1) to reparametrized time t = -log(1-s),
/// computed through ln_1p for accuracy near s = 0.
pub fn reparametrize(t_geometric: f64) -> Result<f64, PathError> {
    if !(0.0..1.0).contains(&t_geometric) {
        return Err(PathError::OutOfRange(t_geometric));
    }
    Ok(-(-t_geometric).ln_1p())
}

/// Minimum eigenvalue of Ric(w(t)) + 2 w(t) relative to w(t) over the nodes.
pub fn ricci_bound_check(state: &PathState) -> Result<f64, GeometryError> {
    match &state.profile {
        ModelProfile::Hirzebruch(u) => {
            let r = ricci_profile(u)?;
            let up = u.u_prime();
            let q = u.q();
            let rp = r.u_prime();
            let rq = r.q();
            let mut min = f64::INFINITY;
            for i in 0..u.mesh.n {
                min = min.min(rp[i] / up[i] + 2.0).min(rq[i] / q[i] + 2.0);
            }
            Ok(min)
        }
        ModelProfile::Product { base_coeff, fiber } => {
            let r = ricci_profile(fiber)?;
            let q = fiber.q();
            let rq = r.q();
            let mut min = 2.0 / base_coeff + 2.0;
            for i in 0..fiber.mesh.n {
                min = min.min(rq[i] / q[i] + 2.0);
            }
            Ok(min)
        }
    }
}

/// One slice of the anticanonical restart path on the base curve.
#[derive(Debug, Clone)]
pub struct AubinState {
    pub t: f64,
    pub phi: Vec<f64>,
    pub metric: RadialPotential,
    pub report: NewtonReport,
    /// sup |Ric(w) - w| / w over the nodes.
    pub ricci_gap: f64,
}

/// Scales a curve potential into the anticanonical class 2 pi c1(P1)
/// (the class of 2 w_FS).
pub fn rescale_to_anticanonical(v: &RadialPotential) -> Result<RadialPotential, PathError> {
    if v.kind != ProfileKind::Curve || v.base.rho_coeff != 0.0 {
        return Err(PathError::Geometry(GeometryError::NonAdmissible(
            "restart base metric must be a curve profile with moment interval (0, amp)".into(),
        )));
    }
    if v.base.log_amp <= 0.0 {
        return Err(PathError::Geometry(GeometryError::NonAdmissible(
            "restart base metric must have positive area".into(),
        )));
    }
    let c = 2.0 / v.base.log_amp;
    let pert: Vec<f64> = v.pert.iter().map(|w| c * w).collect();
    Ok(RadialPotential::new(
        v.mesh.clone(),
        ProfileKind::Curve,
        AnsatzBase::new(0.0, 2.0),
        pert,
    ))
}

/// sup |Ric(w) - w| / w for a curve metric.
pub fn ricci_deviation(v: &RadialPotential) -> Result<f64, GeometryError> {
    let r = ricci_profile(v)?;
    let q = v.q();
    let rq = r.q();
    Ok((0..v.mesh.n)
        .map(|i| (rq[i] / q[i] - 1.0).abs())
        .fold(0.0, f64::max))
}

/// Marches the normalized anticanonical path Ric(w(t)) = (1/t) w0 + (1 - 1/t) w(t)
/// on the base curve, starting from w0 = the rescaled `base_metric`; as t
/// grows the metric approaches the Einstein solution Ric = w.
pub fn aubin_restart(
    base_metric: &RadialPotential,
    schedule: &[f64],
) -> Result<Vec<AubinState>, PathError> {
    if schedule.is_empty() || schedule[0] < 1.0 {
        return Err(PathError::InvalidSchedule(
            "restart schedule must lie in [1, infinity)".into(),
        ));
    }
    if schedule.windows(2).any(|w| w[1] <= w[0]) {
        return Err(PathError::InvalidSchedule("schedule must increase".into()));
    }
    let v0 = rescale_to_anticanonical(base_metric)?;
    let n = v0.mesh.n;
    // reduced equation: log Q + w0 + (1 - 1/t) phi = log 2 - log Z with
    // Z = int e^{-w0} dx. The area int Q dx = 2 is a class invariant, so the
    // prescribed density must carry the same total mass; without the Z factor
    // the t = 1 slice (no phi term) is obstructed by exactly the mass defect.
    // For t > 1 the factor only shifts phi by a constant the metric ignores.
    let expw: Vec<f64> = v0.pert.iter().map(|w| (-w).exp()).collect();
    let z = v0.mesh.quad_x(&expw);
    let log_rhs: Vec<f64> = v0
        .pert
        .iter()
        .map(|w| 2.0f64.ln() - w - z.ln())
        .collect();
    let mut states: Vec<AubinState> = Vec::with_capacity(schedule.len());
    for &t in schedule {
        let c_exp = -(1.0 - 1.0 / t);
        let normalization = if c_exp == 0.0 {
            Normalization::MeanZero(vec![1.0; n])
        } else {
            Normalization::None
        };
        let p = ReducedMAProblem {
            u_ref: v0.clone(),
            log_rhs: log_rhs.clone(),
            c_exp,
            normalization,
        };
        let start: Vec<f64> = states
            .last()
            .map(|s| s.phi.clone())
            .unwrap_or_else(|| vec![0.0; n]);
        let (phi, report) = newton_solve(&p, &start, PATH_TOLERANCE)?;
        let metric = p.perturbed(&phi);
        let ricci_gap = ricci_deviation(&metric)?;
        states.push(AubinState {
            t,
            phi,
            metric,
            report,
            ricci_gap,
        });
    }
    Ok(states)
}
