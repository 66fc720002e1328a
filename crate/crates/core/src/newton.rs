//! Damped Newton solver for the reduced scalar Monge-Ampère family: the
//! continuity-path equation, the fiber Calabi equation, and the base limiting
//! equation.
//!
//! All three reduce to
//!
//! ```text
//! F(phi) = [log u'] + log Q - log_rhs - c_exp phi = 0
//! ```
//!
//! for u = u_ref + phi, where Q = u''(rho)/(a x(1-x)) and the [log u'] term
//! is present only for surface profiles. log_rhs is stored relative to the
//! same reduction, i.e. it is the log of the right-hand density divided by
//! a x(1-x) e^{-2 rho} (surface) or a x(1-x) e^{-rho} (curve), so that it is
//! bounded across the degenerate ends whenever the class data is consistent.

use crate::mesh::{BandedMatrix, BandedSystem, MeshError, solve_banded};
use crate::radial::{ProfileKind, RadialPotential};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("iterate not admissible at node {node}")]
    NonAdmissible { node: usize },
    #[error("no admissible Newton step exists")]
    NonAdmissibleBasin,
    #[error("line search stalled below 2^-20 (residual {residual:.3e})")]
    LineSearchStall { residual: f64 },
    #[error("no convergence in {max} iterations (residual {residual:.3e})")]
    MaxIterations { max: usize, residual: f64 },
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error(transparent)]
    Linear(#[from] MeshError),
}

/// Constant-direction gauge handling for c_exp = 0 problems.
#[derive(Debug, Clone)]
pub enum Normalization {
    None,
    /// Enforce sum(w_i phi_i) = 0.
    MeanZero(Vec<f64>),
    /// Enforce phi[node] = value.
    FixedValue(usize, f64),
}

/// One reduced Monge-Ampère problem on the grid of `u_ref`.
#[derive(Debug, Clone)]
pub struct ReducedMAProblem {
    pub u_ref: RadialPotential,
    /// Reduced log right-hand density (see module docs); finite at all nodes.
    pub log_rhs: Vec<f64>,
    /// Coefficient of phi in the exponential zeroth-order term. Nonnegative
    /// on the collapse path (1/(1-e^{-t})), the limiting equation (1) and the
    /// Calabi equation (0, with a normalization); the anticanonical restart
    /// path uses the Fano sign -(1-1/t), where uniqueness is only local.
    pub c_exp: f64,
    pub normalization: Normalization,
}

impl ReducedMAProblem {
    pub fn validate(&self) -> Result<(), SolveError> {
        let n = self.u_ref.mesh.n;
        if self.log_rhs.len() != n {
            return Err(SolveError::InvalidProblem(format!(
                "log_rhs has {} nodes, mesh has {n}",
                self.log_rhs.len()
            )));
        }
        if !self.log_rhs.iter().all(|v| v.is_finite()) {
            return Err(SolveError::InvalidProblem("log_rhs not finite".into()));
        }
        if !self.c_exp.is_finite() {
            return Err(SolveError::InvalidProblem(format!(
                "c_exp = {} must be finite",
                self.c_exp
            )));
        }
        if self.c_exp == 0.0 && matches!(self.normalization, Normalization::None) {
            return Err(SolveError::InvalidProblem(
                "c_exp = 0 needs a normalization to pin the constant".into(),
            ));
        }
        match &self.normalization {
            Normalization::MeanZero(w) => {
                if w.len() != n {
                    return Err(SolveError::InvalidProblem("weight length mismatch".into()));
                }
                if w.iter().sum::<f64>().abs() < 1e-300 {
                    return Err(SolveError::InvalidProblem("weights sum to zero".into()));
                }
            }
            Normalization::FixedValue(node, _) => {
                if *node >= n {
                    return Err(SolveError::InvalidProblem("fixed node out of range".into()));
                }
            }
            Normalization::None => {}
        }
        Ok(())
    }

    /// u_ref + phi as a radial potential.
    pub fn perturbed(&self, phi: &[f64]) -> RadialPotential {
        let pert: Vec<f64> = self
            .u_ref
            .pert
            .iter()
            .zip(phi)
            .map(|(a, b)| a + b)
            .collect();
        RadialPotential::new(
            self.u_ref.mesh.clone(),
            self.u_ref.kind,
            self.u_ref.base,
            pert,
        )
    }

    fn project(&self, phi: &mut [f64]) {
        match &self.normalization {
            Normalization::MeanZero(w) => {
                let s: f64 = w.iter().zip(phi.iter()).map(|(a, b)| a * b).sum();
                let total: f64 = w.iter().sum();
                let shift = s / total;
                for v in phi.iter_mut() {
                    *v -= shift;
                }
            }
            Normalization::FixedValue(node, value) => {
                let shift = phi[*node] - value;
                for v in phi.iter_mut() {
                    *v -= shift;
                }
            }
            Normalization::None => {}
        }
    }

    /// `project` in the split representation: only the mean moves.
    fn project_split(&self, mean: &mut f64, psi: &[f64]) {
        match &self.normalization {
            Normalization::MeanZero(w) => {
                let total: f64 = w.iter().sum();
                let s: f64 = w.iter().zip(psi).map(|(a, b)| a * b).sum();
                *mean = -s / total;
            }
            Normalization::FixedValue(node, value) => {
                *mean = value - psi[*node];
            }
            Normalization::None => {}
        }
    }
}

/// Solver convergence record.
#[derive(Debug, Clone)]
pub struct NewtonReport {
    pub iterations: usize,
    pub residual_sup: f64,
    pub damping_history: Vec<f64>,
    pub converged: bool,
    pub warm_start: bool,
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn mean_of(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// F(phi) nodewise; errors on the first node where positivity fails.
pub fn residual(p: &ReducedMAProblem, phi: &[f64]) -> Result<Vec<f64>, SolveError> {
    residual_split(p, 0.0, phi)
}

/// F at phi = mean + psi with the constant part carried as a scalar.
///
/// U' and Q depend on phi only through derivatives, so the mean enters F
/// solely via the analytic -c_exp * mean term. Keeping psi small keeps its
/// floating-point lattice fine enough to place Q to full relative accuracy
/// even when Q ~ e^{-t}; a recombined iterate instead caps the attainable
/// residual near |J|_row * ulp(|phi|), which grows like e^t along the path.
fn residual_split(p: &ReducedMAProblem, mean: f64, psi: &[f64]) -> Result<Vec<f64>, SolveError> {
    let u = p.perturbed(psi);
    let n = u.mesh.n;
    let up = u.u_prime();
    let q = u.q();
    for i in 0..n {
        if q[i] <= 0.0 || (u.kind == ProfileKind::Surface && up[i] <= 0.0) {
            return Err(SolveError::NonAdmissible { node: i });
        }
    }
    Ok((0..n)
        .map(|i| {
            let log_det = match u.kind {
                ProfileKind::Surface => up[i].ln() + q[i].ln(),
                ProfileKind::Curve => q[i].ln(),
            };
            log_det - p.log_rhs[i] - p.c_exp * (mean + psi[i])
        })
        .collect())
}

/// Jacobian of the residual at phi, as a banded matrix (bandwidth 5 from the
/// one-sided boundary stencils).
pub fn linearization(p: &ReducedMAProblem, phi: &[f64]) -> Result<BandedMatrix, SolveError> {
    let u = p.perturbed(phi);
    let n = u.mesh.n;
    let up = u.u_prime();
    let q = u.q();
    for i in 0..n {
        if q[i] <= 0.0 || (u.kind == ProfileKind::Surface && up[i] <= 0.0) {
            return Err(SolveError::NonAdmissible { node: i });
        }
    }
    let mesh = &u.mesh;
    let a = mesh.a;
    let mut jac = BandedMatrix::zeros(n, 5, 5);
    let d1 = mesh.d1_op().rows();
    let d2 = mesh.d2_op().rows();
    for i in 0..n {
        let x = mesh.nodes[i];
        let xw = mesh.xw[i];
        // d log Q term: a[(1-2x) delta_x + xw delta_xx]/Q
        let c1q = a * (1.0 - 2.0 * x) / q[i];
        let c2q = a * xw / q[i];
        // d log u' term (surface): a xw delta_x / u'
        let c1u = if u.kind == ProfileKind::Surface {
            a * xw / up[i]
        } else {
            0.0
        };
        let r1 = &d1[i];
        for (j, &c) in r1.coeffs.iter().enumerate() {
            jac.add(i, r1.start + j, (c1q + c1u) * c);
        }
        let r2 = &d2[i];
        for (j, &c) in r2.coeffs.iter().enumerate() {
            jac.add(i, r2.start + j, c2q * c);
        }
        jac.add(i, i, -p.c_exp);
    }
    Ok(jac)
}

/// Newton step in split form for c_exp != 0: solve
///
/// ```text
/// J dpsi - c_exp dm 1 = -f,   sum(dpsi) = 0
/// ```
///
/// by deflating the constant direction. J responds to constants only at the
/// scale c_exp (its stencil part annihilates them), so a direct solve leaves
/// its forward error almost entirely in that one weak mode. Writing
/// dpsi = -y1 + c_exp dm y2 with y1 = J^{-1} f, y2 = J^{-1} 1 cancels the
/// weak-mode error in the ratio dm = sum(y1) / (c_exp sum(y2)) and the final
/// projection removes what is left of it in dpsi, leaving a step accurate in
/// every mode.
fn solve_step_deflated(
    jac: &BandedMatrix,
    c_exp: f64,
    f: &[f64],
) -> Result<(f64, Vec<f64>), SolveError> {
    let n = f.len();
    let y1 = solve_banded(&BandedSystem {
        matrix: jac.clone(),
        rhs: f.to_vec(),
    })?;
    let y2 = solve_banded(&BandedSystem {
        matrix: jac.clone(),
        rhs: vec![1.0; n],
    })?;
    let s1: f64 = y1.iter().sum();
    let s2: f64 = y2.iter().sum();
    let denom = c_exp * s2;
    if !denom.is_finite() || denom.abs() < 1e-300 {
        return Err(SolveError::InvalidProblem(
            "constant-mode response vanished in deflated step".into(),
        ));
    }
    let dm = s1 / denom;
    let mut dpsi: Vec<f64> = y1.iter().zip(&y2).map(|(a, b)| -a + c_exp * dm * b).collect();
    let drift = mean_of(&dpsi);
    for v in dpsi.iter_mut() {
        *v -= drift;
    }
    Ok((dm, dpsi))
}

/// Newton step for c_exp = 0: constants span the null direction, so border
/// the Jacobian with the normalization row and a compensating column.
fn solve_step_bordered(
    p: &ReducedMAProblem,
    jac: &BandedMatrix,
    f: &[f64],
) -> Result<Vec<f64>, SolveError> {
    let n = f.len();
    let mut a = nalgebra::DMatrix::<f64>::zeros(n + 1, n + 1);
    for i in 0..n {
        let lo = i.saturating_sub(5);
        let hi = (i + 5).min(n - 1);
        for j in lo..=hi {
            a[(i, j)] = jac.get(i, j);
        }
        a[(i, n)] = 1.0;
    }
    match &p.normalization {
        Normalization::MeanZero(w) => {
            for j in 0..n {
                a[(n, j)] = w[j];
            }
        }
        Normalization::FixedValue(node, _) => {
            a[(n, *node)] = 1.0;
        }
        Normalization::None => unreachable!("validated"),
    }
    let mut rhs = nalgebra::DVector::<f64>::zeros(n + 1);
    for i in 0..n {
        rhs[i] = -f[i];
    }
    let sol = a
        .lu()
        .solve(&rhs)
        .ok_or(SolveError::InvalidProblem("singular bordered system".into()))?;
    Ok(sol.as_slice()[..n].to_vec())
}

/// For c_exp = 0 the equation pins the potential only modulo the mass
/// compatibility constant: every reachable residual direction changes the
/// total prescribed mass except the constant one, and the constant is
/// invisible to the metric. The discrete masses on the two sides each carry
/// their own quadrature defect, so the residual is driven to zero in the
/// quotient by its weighted mean; the leftover constant (order h^4) is the
/// mass offset a caller can recover from the unprojected residual.
fn quotient_project(p: &ReducedMAProblem, f: &mut [f64]) {
    if p.c_exp != 0.0 {
        return;
    }
    let c = match &p.normalization {
        Normalization::MeanZero(w) => {
            let total: f64 = w.iter().sum();
            w.iter().zip(f.iter()).map(|(a, b)| a * b).sum::<f64>() / total
        }
        _ => f.iter().sum::<f64>() / f.len() as f64,
    };
    for v in f.iter_mut() {
        *v -= c;
    }
}

pub const DEFAULT_MAX_ITERATIONS: usize = 50;
const MIN_DAMPING: f64 = 9.5367431640625e-7; // 2^-20

/// Damped Newton iteration to sup-norm tolerance `tol` with the default
/// iteration cap.
pub fn newton_solve(
    p: &ReducedMAProblem,
    phi0: &[f64],
    tol: f64,
) -> Result<(Vec<f64>, NewtonReport), SolveError> {
    newton_solve_capped(p, phi0, tol, DEFAULT_MAX_ITERATIONS)
}

/// Damped Newton iteration to sup-norm tolerance `tol`.
///
/// The iterate is stored split as mean + psi (see `residual_split`); the
/// recombination happens once on return, so the exponentially stiff terms
/// never meet the coarse floating-point lattice of the O(1) mean.
///
/// For c_exp = 0 convergence is measured in the quotient modulo constants
/// (see `quotient_project`).
pub fn newton_solve_capped(
    p: &ReducedMAProblem,
    phi0: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, NewtonReport), SolveError> {
    p.validate()?;
    assert!(tol > 0.0, "tolerance must be positive");
    assert!(max_iter > 0, "iteration cap must be positive");
    let mut phi = phi0.to_vec();
    p.project(&mut phi);
    let mut mean = mean_of(&phi);
    let mut psi: Vec<f64> = phi.iter().map(|v| v - mean).collect();
    let mut f = residual_split(p, mean, &psi).map_err(|e| match e {
        SolveError::NonAdmissible { .. } => SolveError::NonAdmissibleBasin,
        other => other,
    })?;
    quotient_project(p, &mut f);
    let mut fsup = sup(&f);
    let mut history = Vec::new();
    for iter in 0..max_iter {
        if fsup <= tol {
            let out: Vec<f64> = psi.iter().map(|v| mean + v).collect();
            return Ok((
                out,
                NewtonReport {
                    iterations: iter,
                    residual_sup: fsup,
                    damping_history: history,
                    converged: true,
                    warm_start: false,
                },
            ));
        }
        let jac = linearization(p, &psi)?;
        let (dm, dpsi) = if p.c_exp != 0.0 {
            solve_step_deflated(&jac, p.c_exp, &f)?
        } else {
            let delta = solve_step_bordered(p, &jac, &f)?;
            let dm = mean_of(&delta);
            let dpsi: Vec<f64> = delta.iter().map(|v| v - dm).collect();
            (dm, dpsi)
        };
        let mut lambda = 1.0f64;
        let mut seen_admissible = false;
        loop {
            let cand_mean = mean + lambda * dm;
            let cand_psi: Vec<f64> = psi
                .iter()
                .zip(&dpsi)
                .map(|(a, b)| a + lambda * b)
                .collect();
            match residual_split(p, cand_mean, &cand_psi) {
                Ok(mut fc) => {
                    seen_admissible = true;
                    quotient_project(p, &mut fc);
                    let fcs = sup(&fc);
                    if fcs < fsup || fcs <= tol {
                        mean = cand_mean;
                        psi = cand_psi;
                        // fold accumulated drift back into the mean so psi
                        // keeps its fine lattice
                        let drift = mean_of(&psi);
                        if drift != 0.0 {
                            mean += drift;
                            for v in psi.iter_mut() {
                                *v -= drift;
                            }
                        }
                        p.project_split(&mut mean, &psi);
                        f = fc;
                        fsup = fcs;
                        history.push(lambda);
                        break;
                    }
                }
                Err(SolveError::NonAdmissible { .. }) => {}
                Err(other) => return Err(other),
            }
            lambda *= 0.5;
            if lambda < MIN_DAMPING {
                return Err(if seen_admissible {
                    SolveError::LineSearchStall { residual: fsup }
                } else {
                    SolveError::NonAdmissibleBasin
                });
            }
        }
    }
    Err(SolveError::MaxIterations {
        max: max_iter,
        residual: fsup,
    })
}

/// Warm-started solve for the next problem along a continuation path.
pub fn continuation_step(
    prev: &[f64],
    p_next: &ReducedMAProblem,
    tol: f64,
) -> Result<(Vec<f64>, NewtonReport), SolveError> {
    continuation_step_capped(prev, p_next, tol, DEFAULT_MAX_ITERATIONS)
}

/// `continuation_step` with an explicit iteration cap.
pub fn continuation_step_capped(
    prev: &[f64],
    p_next: &ReducedMAProblem,
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, NewtonReport), SolveError> {
    let (phi, mut report) = newton_solve_capped(p_next, prev, tol, max_iter)?;
    report.warm_start = true;
    Ok((phi, report))
}
