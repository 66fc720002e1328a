//! Limit geometry on the base of the fibration.
//!
//! The collapsed limit of the continuity path is a metric on the base alone.
//! It is assembled in four steps, all reduced to the compactified grid:
//! the fiberwise Ricci potential rho of the restricted reference metric, the
//! fiberwise Calabi correction u (so that Ric of the corrected fiber metric
//! is the original one), the density G obtained by dividing the fixed volume
//! form Omega by the corrected metric wedged with the pulled-back base form,
//! and finally the twisted equation on the base
//!
//! ```text
//! (chi + i d dbar psi) = e^psi G chi,   w_Y = chi + i d dbar psi.
//! ```
//!
//! G must be constant along each fiber for the division to descend to the
//! base; the module measures that constancy instead of assuming it, and
//! cross-checks the pointwise G against the fiber integral of Omega, which
//! never sees the Calabi solution.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use thiserror::Error;

use crate::mesh::{build_mesh, Mesh, MeshError};
use crate::newton::{
    newton_solve, residual, NewtonReport, Normalization, ReducedMAProblem, SolveError,
};
use crate::path::{build_volume_form, PathError, VolumeForm};
use crate::radial::{
    fiber_restriction, positivity_check, reference_potential, ricci_profile, softplus,
    AnsatzBase, GeometryError, Model, ModelProfile, ModelSpec, ProfileKind, RadialPotential,
};

/// Newton tolerance for the fiber and base solves.
const LIMIT_TOL: f64 = 1e-12;
/// Relative slack for the anticanonical fiber area 4 pi. A genuine class
/// mismatch shows at 1e-2; the slack only absorbs the h^4 edge-stencil noise
/// in the derived density at moderate resolutions.
const CLASS_TOL: f64 = 1e-6;
/// Relative slack for the prescribed fiber mass against the class mass.
const MASS_TOL: f64 = 1e-9;
/// Relative agreement required between the two G computations.
const G_CROSS_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum LimitError {
    #[error("fiber class mismatch: {0}")]
    ClassMismatch(String),
    #[error("prescribed fiber mass defect {defect:.3e} exceeds tolerance")]
    MassMismatch { defect: f64 },
    #[error(
        "pointwise G = {pointwise:.12e} and pushforward G = {pushforward:.12e} disagree"
    )]
    InconsistentG { pointwise: f64, pushforward: f64 },
    #[error("limit solve: {0}")]
    Solve(#[from] SolveError),
    #[error("limit geometry: {0}")]
    Geometry(#[from] GeometryError),
    #[error("limit mesh: {0}")]
    Mesh(#[from] MeshError),
    #[error("limit input: {0}")]
    Path(#[from] PathError),
}

/// Integrability report for G on the base (Y, chi).
#[derive(Debug, Clone)]
pub struct LpReport {
    /// Positive lower bound of G.
    pub delta: f64,
    /// Exponent margin of the integrability norm below.
    pub epsilon: f64,
    /// L^{1+epsilon} norm of G against the chi area form.
    pub norm: f64,
}

/// The density G = Omega / (2 omega_bar ^ f*chi) descended to the base.
#[derive(Debug, Clone)]
pub struct GReport {
    /// Fiber average of the pointwise route.
    pub value: f64,
    /// Fiber integral of Omega divided by 2 V0 chi; independent of the
    /// Calabi solution, so agreement certifies it.
    pub pushforward: f64,
    /// Sup deviation of log G along the fiber. G only descends to the base
    /// if this vanishes; it is measured, not assumed.
    pub fiber_spread: f64,
    /// Pointwise G over the fiber nodes.
    pub profile: Vec<f64>,
    pub lp: LpReport,
}

/// The assembled limit: fiber potentials, the descended density, and the
/// base metric.
#[derive(Debug, Clone)]
pub struct LimitData {
    /// Fiberwise Ricci potential, normalized by int e^rho w_y = int w_y.
    pub rho: Vec<f64>,
    /// Fiberwise Calabi correction, normalized by int u w_y = 0.
    pub u_fiber: Vec<f64>,
    /// Corrected total-space metric w0 + i d dbar u.
    pub omega_bar: ModelProfile,
    pub g: GReport,
    /// Potential of the limit metric on the base grid.
    pub psi: Vec<f64>,
    /// w_Y = chi + i d dbar psi as a curve profile on the base.
    pub omega_y: RadialPotential,
    /// Fiber volume of the reference metric.
    pub v0: f64,
    pub fiber_report: NewtonReport,
    pub base_report: NewtonReport,
}

/// A fiber metric must be a curve profile in the fiber coordinate
/// sigma (unit dilation), anticanonically normalized: ansatz base (0, 2)
/// and area 4 pi.
fn check_fiber_class(fiber: &RadialPotential) -> Result<(), LimitError> {
    if fiber.kind != ProfileKind::Curve {
        return Err(LimitError::ClassMismatch(
            "fiber profile must be a curve".into(),
        ));
    }
    if fiber.mesh.a != 1.0 {
        return Err(LimitError::ClassMismatch(
            "fiber profile must live on the unit-dilation sigma mesh".into(),
        ));
    }
    if fiber.base.rho_coeff != 0.0 || fiber.base.log_amp != 2.0 {
        return Err(LimitError::ClassMismatch(format!(
            "fiber ansatz base ({}, {}) is not the anticanonical (0, 2)",
            fiber.base.rho_coeff, fiber.base.log_amp
        )));
    }
    let area = TAU * fiber.mesh.quad_x(fiber.q());
    if (area - 2.0 * TAU).abs() > CLASS_TOL * 2.0 * TAU {
        return Err(LimitError::ClassMismatch(format!(
            "fiber area {area:.12} is not 4 pi"
        )));
    }
    Ok(())
}

/// Fiberwise Ricci potential: Ric(w_y) - w_y = i d dbar rho on the fiber,
/// normalized by int e^rho w_y = int w_y. Also returns the fiber volume V0.
///
/// Both the Ricci potential and the fiber potential have ansatz base (0, 2)
/// in the anticanonical class, so their difference is a genuine function on
/// the fiber; the d dbar equation then holds with zero discretization error
/// because the reduced second-order operator is linear in the perturbation.
pub fn fiber_ricci_potential(fiber: &RadialPotential) -> Result<(Vec<f64>, f64), LimitError> {
    check_fiber_class(fiber)?;
    let r = ricci_profile(fiber)?;
    let m = &fiber.mesh;
    let q = fiber.q();
    let raw: Vec<f64> = (0..m.n).map(|i| r.pert[i] - fiber.pert[i]).collect();
    let weighted: Vec<f64> = (0..m.n).map(|i| raw[i].exp() * q[i]).collect();
    let c = (m.quad_x(q) / m.quad_x(&weighted)).ln();
    let rho: Vec<f64> = raw.iter().map(|v| v + c).collect();
    let v0 = TAU * m.quad_x(q);
    Ok((rho, v0))
}

/// Result of the fiberwise Calabi solve.
#[derive(Debug, Clone)]
pub struct FiberCalabi {
    pub u_fiber: Vec<f64>,
    /// The corrected fiber metric w_y + i d dbar u.
    pub metric: RadialPotential,
    /// Constant part of the solved equation: the corrected density is
    /// e^{offset} times the prescribed one, a pure quadrature artifact of
    /// order h^4 that no potential can remove and no curvature can see.
    pub mass_offset: f64,
    pub report: NewtonReport,
}

/// Fiberwise Calabi solve: w_y + i d dbar u = e^rho w_y with the
/// normalization int u w_y = 0.
///
/// The prescribed density e^rho w_y must carry the class mass of w_y; the
/// normalization of `fiber_ricci_potential` guarantees that, and anything
/// else is rejected, since the defect is orthogonal to the solvable range.
pub fn fiber_calabi_solve(
    fiber: &RadialPotential,
    rho: &[f64],
) -> Result<FiberCalabi, LimitError> {
    check_fiber_class(fiber)?;
    let m = fiber.mesh.clone();
    assert_eq!(rho.len(), m.n, "rho length must match the fiber mesh");
    let q = fiber.q();
    let target: Vec<f64> = (0..m.n).map(|i| rho[i].exp() * q[i]).collect();
    let class_mass = m.quad_x(q);
    let defect = (m.quad_x(&target) - class_mass).abs() / class_mass;
    if defect > MASS_TOL {
        return Err(LimitError::MassMismatch { defect });
    }
    let weights: Vec<f64> = m
        .quad_weights()
        .iter()
        .zip(q)
        .map(|(w, qi)| w * qi)
        .collect();
    let log_rhs: Vec<f64> = (0..m.n).map(|i| rho[i] + q[i].ln()).collect();
    let problem = ReducedMAProblem {
        u_ref: fiber.clone(),
        log_rhs,
        c_exp: 0.0,
        normalization: Normalization::MeanZero(weights),
    };
    let (u_fiber, report) = newton_solve(&problem, &vec![0.0; m.n], LIMIT_TOL)?;
    let metric = problem.perturbed(&u_fiber);
    let raw = residual(&problem, &u_fiber)?;
    let mass_offset = match &problem.normalization {
        Normalization::MeanZero(w) => {
            let total: f64 = w.iter().sum();
            w.iter().zip(&raw).map(|(a, b)| a * b).sum::<f64>() / total
        }
        _ => raw.iter().sum::<f64>() / raw.len() as f64,
    };
    Ok(FiberCalabi {
        u_fiber,
        metric,
        mass_offset,
        report,
    })
}

/// Sup relative defect of Ric(metric) = target for two curve profiles in the
/// same anticanonical class (so comparing reduced densities compares forms).
pub fn calabi_residual(
    metric: &RadialPotential,
    target: &RadialPotential,
) -> Result<f64, LimitError> {
    let r = ricci_profile(metric)?;
    let rq = r.q();
    let tq = target.q();
    Ok((0..metric.mesh.n)
        .map(|i| (rq[i] / tq[i] - 1.0).abs())
        .fold(0.0, f64::max))
}

/// The density G = Omega / (2 omega_bar ^ f*chi), computed two independent
/// ways.
///
/// Pointwise route: the ratio of densities at every node, using the stored
/// log density of Omega and the fiber restriction of omega_bar. Its
/// variation along the fiber (`fiber_spread`) measures whether G descends.
///
/// Pushforward route: G = f_* Omega / (2 V0 chi) by fiber quadrature of
/// Omega alone, never touching omega_bar. Disagreement beyond the cross
/// tolerance is an error, since the two must coincide for the true Calabi
/// correction.
pub fn compute_g(
    spec: &ModelSpec,
    omega: &VolumeForm,
    omega_bar: &ModelProfile,
    v0: f64,
) -> Result<GReport, LimitError> {
    spec.validate()?;
    let a = spec.a();
    let kappa = spec.kappa;
    let (fiber_bar, m): (RadialPotential, Arc<Mesh>) = match omega_bar {
        ModelProfile::Hirzebruch(u) => (fiber_restriction(u, spec)?, u.mesh.clone()),
        ModelProfile::Product { fiber, .. } => (fiber.clone(), fiber.mesh.clone()),
    };
    assert_eq!(
        omega.log_density.len(),
        m.n,
        "volume form and profile meshes must agree"
    );
    let qf = fiber_bar.q();
    // log G at the nodes; the rho-linear parts cancel by the class identity
    // that made Omega smooth, leaving a bounded expression.
    let logg: Vec<f64> = match spec.model {
        Model::Hirzebruch { .. } => (0..m.n)
            .map(|i| {
                let rho = m.rho(i);
                omega.log_density[i] + (2.0 - a) * rho + 2.0 * softplus(a * rho)
                    - (2.0 * a * kappa).ln()
                    - (a * qf[i]).ln()
            })
            .collect(),
        Model::ProductP1xP1 => (0..m.n)
            .map(|i| {
                let rho = m.rho(i);
                omega.log_density[i] + 2.0 * softplus(rho) + 2.0 * 2.0f64.ln()
                    - (2.0 * kappa).ln()
                    - qf[i].ln()
            })
            .collect(),
    };
    let mean_logg = logg.iter().sum::<f64>() / m.n as f64;
    let fiber_spread = logg
        .iter()
        .map(|v| (v - mean_logg).abs())
        .fold(0.0, f64::max);
    let value = mean_logg.exp();
    let pushforward = match spec.model {
        Model::Hirzebruch { .. } => {
            // f_* Omega against kappa FS: the fiber measure of Omega relative
            // to the radial direction of f*chi, integrated in x.
            let integrand: Vec<f64> = (0..m.n)
                .map(|i| {
                    let rho = m.rho(i);
                    (omega.log_density[i] + (spec.b0 - kappa) * rho + 2.0 * softplus(a * rho))
                        .exp()
                })
                .collect();
            PI * m.quad_x(&integrand) / (a * a * kappa * v0)
        }
        Model::ProductP1xP1 => {
            let integrand: Vec<f64> = (0..m.n)
                .map(|i| (omega.log_density[i] + 2.0 * softplus(m.rho(i))).exp())
                .collect();
            2.0 * TAU * m.quad_x(&integrand) / (kappa * v0)
        }
    };
    if (value - pushforward).abs() > G_CROSS_TOL * value.max(pushforward) {
        return Err(LimitError::InconsistentG {
            pointwise: value,
            pushforward,
        });
    }
    let profile: Vec<f64> = logg.iter().map(|v| v.exp()).collect();
    let delta = profile.iter().cloned().fold(f64::INFINITY, f64::min);
    // chi has base area 2 pi kappa and G is constant on the base by symmetry
    let norm = value * (TAU * kappa).sqrt();
    Ok(GReport {
        value,
        pushforward,
        fiber_spread,
        profile,
        lp: LpReport {
            delta,
            epsilon: 1.0,
            norm,
        },
    })
}

/// Twisted equation on the base: (chi + i d dbar psi) = e^psi G chi.
/// Returns psi, the limit metric w_Y = chi + i d dbar psi, and the solver
/// report. For constant G the exact solution is psi = -log G.
pub fn solve_limit_equation(
    spec: &ModelSpec,
    g_base: &[f64],
    mesh: &Arc<Mesh>,
) -> Result<(Vec<f64>, RadialPotential, NewtonReport), LimitError> {
    spec.validate()?;
    if mesh.a != 1.0 {
        return Err(LimitError::ClassMismatch(
            "base mesh must have unit dilation".into(),
        ));
    }
    assert_eq!(g_base.len(), mesh.n, "G length must match the base mesh");
    if g_base.iter().any(|g| !(*g > 0.0) || !g.is_finite()) {
        return Err(LimitError::ClassMismatch(
            "G must be positive and finite on the base".into(),
        ));
    }
    let kappa = spec.kappa;
    let chi = RadialPotential::new(
        mesh.clone(),
        ProfileKind::Curve,
        AnsatzBase::new(0.0, kappa),
        vec![0.0; mesh.n],
    );
    let log_rhs: Vec<f64> = g_base.iter().map(|g| (kappa * g).ln()).collect();
    let problem = ReducedMAProblem {
        u_ref: chi,
        log_rhs,
        c_exp: 1.0,
        normalization: Normalization::None,
    };
    let mean_lg = g_base.iter().map(|g| g.ln()).sum::<f64>() / mesh.n as f64;
    let psi0 = vec![-mean_lg; mesh.n];
    let (psi, report) = newton_solve(&problem, &psi0, LIMIT_TOL)?;
    let omega_y = problem.perturbed(&psi);
    if !positivity_check(&omega_y).admissible {
        return Err(LimitError::Geometry(GeometryError::NonAdmissible(
            "limit metric is not positive".into(),
        )));
    }
    Ok((psi, omega_y, report))
}

/// Runs the whole pipeline for a model at resolution n: restrict the
/// reference metric to a fiber, solve for rho and the Calabi correction,
/// descend G, and solve the base equation.
pub fn build_limit_data(spec: &ModelSpec, n: usize) -> Result<LimitData, LimitError> {
    spec.validate()?;
    let mesh = Arc::new(build_mesh(n, spec.a())?);
    let u0 = reference_potential(spec, &mesh);
    let omega = build_volume_form(spec, spec.omega_gauge, &mesh)?;
    let v = fiber_restriction(&u0, spec)?;
    let (rho, v0) = fiber_ricci_potential(&v)?;
    let fc = fiber_calabi_solve(&v, &rho)?;
    let omega_bar = match spec.model {
        Model::Hirzebruch { .. } => {
            // the fiber correction lifts to the surface grid unchanged: the
            // fiber nodes coincide with the surface nodes
            let pert: Vec<f64> = u0
                .pert
                .iter()
                .zip(&fc.u_fiber)
                .map(|(p, u)| p + u)
                .collect();
            ModelProfile::Hirzebruch(RadialPotential::new(
                mesh.clone(),
                ProfileKind::Surface,
                u0.base,
                pert,
            ))
        }
        Model::ProductP1xP1 => ModelProfile::Product {
            base_coeff: spec.kappa + (spec.binf - spec.b0),
            fiber: fc.metric.clone(),
        },
    };
    let g = compute_g(spec, &omega, &omega_bar, v0)?;
    let base_mesh = Arc::new(build_mesh(n, 1.0)?);
    let g_base = vec![g.value; n];
    let (psi, omega_y, base_report) = solve_limit_equation(spec, &g_base, &base_mesh)?;
    Ok(LimitData {
        rho,
        u_fiber: fc.u_fiber,
        omega_bar,
        g,
        psi,
        omega_y,
        v0,
        fiber_report: fc.report,
        base_report,
    })
}
