//! Cohomogeneity-one Kähler metrics on the model fibrations as radial profiles.
//!
//! A metric potential is u(rho) with rho = log|z|^2 on the Z_a-cover of the
//! Hirzebruch surface H_a (or the fiber coordinate of P1 x P1). To keep every
//! assembled quantity bounded on the compactified grid, a potential is stored
//! as a closed-form ansatz part
//!
//! ```text
//! beta rho + (alpha/a) log(1 + e^{a rho})
//! ```
//!
//! plus a smooth perturbation w(x) of the compactified coordinate
//! x = e^{a rho}/(1 + e^{a rho}). Then
//!
//! ```text
//! u'(rho)  = beta + alpha x + a x(1-x) w_x            (bounded),
//! u''(rho) = a x(1-x) Q,  Q = alpha + a[(1-2x) w_x + x(1-x) w_xx],
//! ```
//!
//! and Q stays bounded across the degenerate ends, so no log-singular
//! function is ever differentiated numerically.

use crate::mesh::{build_mesh, Mesh, MeshError};
use num_complex::Complex64;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("potential not admissible: {0}")]
    NonAdmissible(String),
    #[error("second derivative below resolvable threshold (min interior u'' = {0:.3e})")]
    DerivativeNoise(f64),
    #[error("quadrature integrand not finite")]
    QuadratureDivergence,
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// The two model fibrations over P1.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum Model {
    /// The a-th Hirzebruch surface, fibers collapsing as t -> infinity.
    Hirzebruch { a: u32 },
    /// P1 x P1, first factor the base.
    ProductP1xP1,
}

/// Fibration model with its class data and volume-form gauge.
///
/// `b0 < binf` are the endpoints of the fiber moment interval of [w0];
/// `kappa` is the coefficient of the base class chi in units of the
/// Fubini-Study form normalized by Ric(w_FS) = 2 w_FS (area 2 pi);
/// `omega_gauge` scales the reference volume form Omega.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct ModelSpec {
    pub model: Model,
    pub n: u32,
    pub k: u32,
    pub b0: f64,
    pub binf: f64,
    pub kappa: f64,
    pub omega_gauge: f64,
    pub t_collapse: f64,
}

impl ModelSpec {
    pub fn hirzebruch(a: u32, b0: f64, binf: f64, kappa: f64) -> Self {
        ModelSpec {
            model: Model::Hirzebruch { a },
            n: 2,
            k: 1,
            b0,
            binf,
            kappa,
            omega_gauge: 1.0,
            t_collapse: 1.0,
        }
    }

    /// Product model; b0/binf describe the fiber factor 2 w_FS and the base
    /// carries kappa + 2 at t = 0.
    pub fn product(kappa: f64) -> Self {
        ModelSpec {
            model: Model::ProductP1xP1,
            n: 2,
            k: 1,
            b0: 0.0,
            binf: 2.0,
            kappa,
            omega_gauge: 4.0,
            t_collapse: 1.0,
        }
    }

    pub fn a(&self) -> f64 {
        match self.model {
            Model::Hirzebruch { a } => a as f64,
            Model::ProductP1xP1 => 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.n != 2 || self.k != 1 {
            return Err(GeometryError::InvalidSpec(format!(
                "only surfaces over curves are supported (n={}, k={})",
                self.n, self.k
            )));
        }
        if let Model::Hirzebruch { a } = self.model {
            if a < 1 {
                return Err(GeometryError::InvalidSpec("twisting a must be >= 1".into()));
            }
        }
        if !(self.b0 >= 0.0 && self.b0 < self.binf) {
            return Err(GeometryError::InvalidSpec(format!(
                "moment interval [{}, {}] invalid",
                self.b0, self.binf
            )));
        }
        if self.kappa <= 0.0 {
            return Err(GeometryError::InvalidSpec("kappa must be positive".into()));
        }
        if self.omega_gauge <= 0.0 {
            return Err(GeometryError::InvalidSpec("omega_gauge must be positive".into()));
        }
        if self.t_collapse != 1.0 {
            return Err(GeometryError::InvalidSpec(
                "collapse time is normalized to 1".into(),
            ));
        }
        Ok(())
    }
}

/// log(1 + e^s), stable for large |s|.
pub fn softplus(s: f64) -> f64 {
    if s > 0.0 {
        s + (-s).exp().ln_1p()
    } else {
        s.exp().ln_1p()
    }
}

/// x = e^{a rho}/(1 + e^{a rho}).
pub fn x_of_rho(a: f64, rho: f64) -> f64 {
    1.0 / (1.0 + (-a * rho).exp())
}

/// Closed-form part of a potential: beta rho + (alpha/a) log(1 + e^{a rho}).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AnsatzBase {
    pub rho_coeff: f64,
    pub log_amp: f64,
}

impl AnsatzBase {
    pub const ZERO: AnsatzBase = AnsatzBase {
        rho_coeff: 0.0,
        log_amp: 0.0,
    };

    pub fn new(rho_coeff: f64, log_amp: f64) -> Self {
        AnsatzBase { rho_coeff, log_amp }
    }

    pub fn scale(self, c: f64) -> Self {
        AnsatzBase {
            rho_coeff: c * self.rho_coeff,
            log_amp: c * self.log_amp,
        }
    }

    pub fn plus(self, o: AnsatzBase) -> Self {
        AnsatzBase {
            rho_coeff: self.rho_coeff + o.rho_coeff,
            log_amp: self.log_amp + o.log_amp,
        }
    }

    pub fn eval(self, a: f64, rho: f64) -> f64 {
        self.rho_coeff * rho + self.log_amp / a * softplus(a * rho)
    }

    /// d/d rho at compactified coordinate x.
    pub fn d1_at(self, x: f64) -> f64 {
        self.rho_coeff + self.log_amp * x
    }

    /// d^2/d rho^2 divided by a x(1-x).
    pub fn q_at(self) -> f64 {
        self.log_amp
    }
}

/// Whether a profile is the potential of a metric on the fibered surface or
/// on a single curve (a fiber or the base).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum ProfileKind {
    Surface,
    Curve,
}

/// A radial metric potential on the compactified grid.
#[derive(Debug, Clone)]
pub struct RadialPotential {
    pub mesh: Arc<Mesh>,
    pub kind: ProfileKind,
    pub base: AnsatzBase,
    /// Smooth perturbation w(x) at the nodes.
    pub pert: Vec<f64>,
    u_prime: Vec<f64>,
    q: Vec<f64>,
}

impl RadialPotential {
    pub fn new(mesh: Arc<Mesh>, kind: ProfileKind, base: AnsatzBase, pert: Vec<f64>) -> Self {
        assert_eq!(pert.len(), mesh.n, "perturbation length must match mesh");
        // the stencils annihilate constants analytically; differencing
        // mean-removed data keeps that exact in floating point, which decides
        // convergence when Q is exponentially small under an O(1) perturbation
        let mean = pert.iter().sum::<f64>() / mesh.n as f64;
        let centered: Vec<f64> = pert.iter().map(|v| v - mean).collect();
        let wx = mesh.dx(&centered);
        let qw = mesh.q_reduced(&centered);
        let u_prime: Vec<f64> = (0..mesh.n)
            .map(|i| base.d1_at(mesh.nodes[i]) + mesh.a * mesh.xw[i] * wx[i])
            .collect();
        let q: Vec<f64> = (0..mesh.n).map(|i| base.log_amp + qw[i]).collect();
        RadialPotential {
            mesh,
            kind,
            base,
            pert,
            u_prime,
            q,
        }
    }

    /// Potential built from raw grid values with no closed-form part.
    pub fn from_values(mesh: Arc<Mesh>, kind: ProfileKind, values: Vec<f64>) -> Self {
        RadialPotential::new(mesh, kind, AnsatzBase::ZERO, values)
    }

    /// u'(rho) at the nodes, bounded across the ends.
    pub fn u_prime(&self) -> &[f64] {
        &self.u_prime
    }

    /// u''(rho)/(a x(1-x)) at the nodes.
    pub fn q(&self) -> &[f64] {
        &self.q
    }

    /// u''(rho) at the nodes.
    pub fn u_second(&self) -> Vec<f64> {
        let m = &self.mesh;
        (0..m.n).map(|i| m.a * m.xw[i] * self.q[i]).collect()
    }

    /// u at the nodes (finite there; diverges only at the open ends).
    pub fn values(&self) -> Vec<f64> {
        let m = &self.mesh;
        (0..m.n)
            .map(|i| self.base.eval(m.a, m.rho(i)) + self.pert[i])
            .collect()
    }

    /// u evaluated at an arbitrary rho through the closed-form part plus
    /// interpolated perturbation.
    pub fn eval(&self, rho: f64) -> Result<f64, MeshError> {
        let x = x_of_rho(self.mesh.a, rho);
        Ok(self.base.eval(self.mesh.a, rho) + self.mesh.interpolate(&self.pert, x)?)
    }

    pub fn u_prime_at(&self, x: f64) -> Result<f64, MeshError> {
        self.mesh.interpolate(&self.u_prime, x)
    }

    pub fn q_at(&self, x: f64) -> Result<f64, MeshError> {
        self.mesh.interpolate(&self.q, x)
    }

    pub fn u_second_at(&self, x: f64) -> Result<f64, MeshError> {
        Ok(self.mesh.a * x * (1.0 - x) * self.q_at(x)?)
    }

    /// Same geometry with the perturbation shifted by a constant.
    pub fn shift(&self, c: f64) -> Self {
        let pert = self.pert.iter().map(|v| v + c).collect();
        RadialPotential::new(self.mesh.clone(), self.kind, self.base, pert)
    }

    pub fn min_u_prime(&self) -> f64 {
        self.u_prime.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn min_q(&self) -> f64 {
        self.q.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn is_admissible(&self) -> bool {
        self.min_u_prime() > 0.0 && self.min_q() > 0.0
    }

    /// Momentum representation: tau = u'(rho), phi(tau) = u''(rho).
    pub fn moment_profile(&self) -> Result<MomentProfile, GeometryError> {
        if !self.is_admissible() {
            return Err(GeometryError::NonAdmissible(
                "moment profile needs u' strictly increasing".into(),
            ));
        }
        let m = &self.mesh;
        let tau0 = self.base.rho_coeff;
        let tauinf = self.base.rho_coeff + self.base.log_amp;
        let mut taus = Vec::with_capacity(m.n + 2);
        let mut phis = Vec::with_capacity(m.n + 2);
        taus.push(tau0);
        phis.push(0.0);
        let usec = self.u_second();
        for i in 0..m.n {
            taus.push(self.u_prime[i]);
            phis.push(usec[i]);
        }
        taus.push(tauinf);
        phis.push(0.0);
        for w in taus.windows(2) {
            if w[1] <= w[0] {
                return Err(GeometryError::NonAdmissible(
                    "u' not strictly increasing on the grid".into(),
                ));
            }
        }
        Ok(MomentProfile { tau0, tauinf, taus, phis })
    }
}

/// phi(tau) = u''(rho(tau)) on the moment interval [tau0, tauinf].
#[derive(Debug, Clone)]
pub struct MomentProfile {
    pub tau0: f64,
    pub tauinf: f64,
    taus: Vec<f64>,
    phis: Vec<f64>,
}

impl MomentProfile {
    /// Local quartic Lagrange interpolation on the monotone tau samples.
    pub fn eval(&self, tau: f64) -> Result<f64, GeometryError> {
        if !(self.tau0..=self.tauinf).contains(&tau) {
            return Err(GeometryError::NonAdmissible(format!(
                "tau {tau} outside [{}, {}]",
                self.tau0, self.tauinf
            )));
        }
        let n = self.taus.len();
        let idx = self.taus.partition_point(|&t| t < tau).min(n - 1);
        let start = idx.saturating_sub(2).min(n - 5);
        let xs = &self.taus[start..start + 5];
        let mut acc = 0.0;
        for j in 0..5 {
            let mut l = 1.0;
            for k in 0..5 {
                if k != j {
                    l *= (tau - xs[k]) / (xs[j] - xs[k]);
                }
            }
            acc += l * self.phis[start + j];
        }
        Ok(acc)
    }

    /// One-sided slope estimates at the interval ends (quadratic extrapolation).
    pub fn boundary_slopes(&self) -> (f64, f64) {
        let two_point = |d0: f64, p0: f64, d1: f64, p1: f64| {
            (p0 * d1 * d1 - p1 * d0 * d0) / (d0 * d1 * (d1 - d0))
        };
        let s0 = two_point(
            self.taus[1] - self.tau0,
            self.phis[1],
            self.taus[2] - self.tau0,
            self.phis[2],
        );
        let n = self.taus.len();
        let sinf = two_point(
            self.tauinf - self.taus[n - 2],
            self.phis[n - 2],
            self.tauinf - self.taus[n - 3],
            self.phis[n - 3],
        );
        (s0, -sinf)
    }
}

/// Admissibility data reported by positivity_check.
#[derive(Debug, Clone, Copy)]
pub struct AdmissibilityReport {
    pub min_u_prime: f64,
    pub min_u_second: f64,
    pub min_q: f64,
    /// Moment-profile slope estimates at tau0 and tauinf (signed).
    pub slope0: f64,
    pub slope_inf: f64,
    pub admissible: bool,
}

/// Cohomology pairings of the Kähler class.
#[derive(Debug, Clone, Copy)]
pub struct KahlerData {
    pub fiber_area: f64,
    pub zero_section_area: f64,
    pub infinity_section_area: f64,
    pub total_volume: f64,
}

/// A solved metric on the total space: a single surface profile for a
/// Hirzebruch model, or a pinned base coefficient plus a fiber profile
/// for the product model.
#[derive(Debug, Clone)]
pub enum ModelProfile {
    Hirzebruch(RadialPotential),
    Product { base_coeff: f64, fiber: RadialPotential },
}

impl ModelProfile {
    pub fn is_admissible(&self) -> bool {
        match self {
            ModelProfile::Hirzebruch(u) => u.is_admissible(),
            ModelProfile::Product { base_coeff, fiber } => {
                *base_coeff > 0.0 && fiber.is_admissible()
            }
        }
    }
}

/// The closed-form reference potential of the class:
/// u = b0 rho + ((binf - b0)/a) log(1 + e^{a rho}).
pub fn reference_potential(spec: &ModelSpec, mesh: &Arc<Mesh>) -> RadialPotential {
    assert_eq!(
        mesh.a,
        spec.a(),
        "mesh dilation must match the model twisting"
    );
    let kind = match spec.model {
        Model::Hirzebruch { .. } => ProfileKind::Surface,
        Model::ProductP1xP1 => ProfileKind::Curve,
    };
    RadialPotential::new(
        mesh.clone(),
        kind,
        AnsatzBase::new(spec.b0, spec.binf - spec.b0),
        vec![0.0; mesh.n],
    )
}

/// Complex Hessian of u(log|z|^2) at z, no admissibility gate:
/// g_{i jbar} = e^{-rho} u' delta_{ij} + e^{-2 rho} zbar_i z_j (u'' - u').
pub fn hessian_components(
    u: &RadialPotential,
    z: [Complex64; 2],
) -> Result<[[Complex64; 2]; 2], GeometryError> {
    let r2 = z[0].norm_sqr() + z[1].norm_sqr();
    if r2 == 0.0 {
        return Err(GeometryError::NonAdmissible("z must be nonzero".into()));
    }
    let rho = r2.ln();
    let x = x_of_rho(u.mesh.a, rho);
    let up = u.u_prime_at(x)?;
    let us = u.u_second_at(x)?;
    let e1 = 1.0 / r2;
    let e2 = e1 * e1;
    let mut g = [[Complex64::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let mut v = z[i].conj() * z[j] * Complex64::new(e2 * (us - up), 0.0);
            if i == j {
                v += Complex64::new(e1 * up, 0.0);
            }
            g[i][j] = v;
        }
    }
    Ok(g)
}

/// Metric tensor at a point of C^2 minus 0; errors if the profile fails
/// positivity there.
pub fn metric_components(
    u: &RadialPotential,
    z: [Complex64; 2],
) -> Result<[[Complex64; 2]; 2], GeometryError> {
    let r2 = z[0].norm_sqr() + z[1].norm_sqr();
    if r2 == 0.0 {
        return Err(GeometryError::NonAdmissible("z must be nonzero".into()));
    }
    let x = x_of_rho(u.mesh.a, r2.ln());
    let up = u.u_prime_at(x)?;
    let us = u.u_second_at(x)?;
    if up <= 0.0 || us <= 0.0 {
        return Err(GeometryError::NonAdmissible(format!(
            "u' = {up:.3e}, u'' = {us:.3e} at x = {x:.4}"
        )));
    }
    hessian_components(u, z)
}

/// Eigenvalues (radial, tangential) of the ansatz Hessian at z.
pub fn hessian_eigenvalues(u: &RadialPotential, z: [Complex64; 2]) -> Result<(f64, f64), GeometryError> {
    let r2 = z[0].norm_sqr() + z[1].norm_sqr();
    if r2 == 0.0 {
        return Err(GeometryError::NonAdmissible("z must be nonzero".into()));
    }
    let x = x_of_rho(u.mesh.a, r2.ln());
    Ok((u.u_second_at(x)? / r2, u.u_prime_at(x)? / r2))
}

/// det g = e^{-2 rho} u' u'' as a grid function.
pub fn det_metric(u: &RadialPotential) -> Result<Vec<f64>, GeometryError> {
    if !u.is_admissible() {
        return Err(GeometryError::NonAdmissible(format!(
            "min u' = {:.3e}, min Q = {:.3e}",
            u.min_u_prime(),
            u.min_q()
        )));
    }
    let m = &u.mesh;
    let usec = u.u_second();
    Ok((0..m.n)
        .map(|i| (-2.0 * m.rho(i)).exp() * u.u_prime[i] * usec[i])
        .collect())
}

/// Ricci potential r with Ric(w_u) = sqrt(-1) d dbar r.
///
/// Surface profiles: r = 2 rho - log u' - log u''; curve profiles:
/// r = rho - log u''. Both are assembled in bounded form, with the
/// logarithmic part carried by the closed-form ansatz.
pub fn ricci_profile(u: &RadialPotential) -> Result<RadialPotential, GeometryError> {
    if !u.is_admissible() {
        return Err(GeometryError::NonAdmissible(format!(
            "min u' = {:.3e}, min Q = {:.3e}",
            u.min_u_prime(),
            u.min_q()
        )));
    }
    let qsup = u.q.iter().cloned().fold(0.0f64, f64::max);
    let qmin = u.min_q();
    if qmin < 1e-10 * qsup {
        return Err(GeometryError::DerivativeNoise(qmin));
    }
    let m = &u.mesh;
    let a = m.a;
    // log u'' = log(a x(1-x)) + log Q and log x(1-x) = a rho - 2 log(1+e^{a rho})
    let (base, pert): (AnsatzBase, Vec<f64>) = match u.kind {
        ProfileKind::Surface => (
            AnsatzBase::new(2.0 - a, 2.0 * a),
            (0..m.n)
                .map(|i| -u.u_prime[i].ln() - u.q[i].ln() - a.ln())
                .collect(),
        ),
        ProfileKind::Curve => (
            AnsatzBase::new(1.0 - a, 2.0 * a),
            (0..m.n).map(|i| -u.q[i].ln() - a.ln()).collect(),
        ),
    };
    Ok(RadialPotential::new(m.clone(), u.kind, base, pert))
}

/// Cohomology pairings by quadrature.
pub fn class_pairings(
    profile: &ModelProfile,
    spec: &ModelSpec,
) -> Result<KahlerData, GeometryError> {
    match profile {
        ModelProfile::Hirzebruch(u) => {
            let a = spec.a();
            let m = &u.mesh;
            if u.u_prime.iter().chain(u.q.iter()).any(|v| !v.is_finite()) {
                return Err(GeometryError::QuadratureDivergence);
            }
            let tau = std::f64::consts::TAU;
            // restricted fiber form integrates as u'' d rho = Q dx
            let fiber_area = tau / a * m.quad_x(&u.q);
            let zero_section_area = tau * u.u_prime_at(0.0)?;
            let infinity_section_area = tau * u.u_prime_at(1.0)?;
            // w^2 = 2 det g dV and the cover integral gives (4 pi^2/a) int 2 u' u'' d rho
            let integrand: Vec<f64> = (0..m.n).map(|i| 2.0 * u.u_prime[i] * u.q[i]).collect();
            let total_volume = tau * tau / a * m.quad_x(&integrand);
            Ok(KahlerData {
                fiber_area,
                zero_section_area,
                infinity_section_area,
                total_volume,
            })
        }
        ModelProfile::Product { base_coeff, fiber } => {
            let m = &fiber.mesh;
            if fiber.u_prime.iter().chain(fiber.q.iter()).any(|v| !v.is_finite()) {
                return Err(GeometryError::QuadratureDivergence);
            }
            let tau = std::f64::consts::TAU;
            let fiber_area = tau * m.quad_x(&fiber.q);
            let base_area = tau * base_coeff;
            Ok(KahlerData {
                fiber_area,
                zero_section_area: base_area,
                infinity_section_area: base_area,
                total_volume: 2.0 * base_area * fiber_area,
            })
        }
    }
}

/// Restriction of a surface metric to one fiber, as a curve profile in the
/// fiber coordinate sigma = a rho; the compactified fiber node set coincides
/// with the surface node set.
pub fn fiber_restriction(
    u: &RadialPotential,
    spec: &ModelSpec,
) -> Result<RadialPotential, GeometryError> {
    if !u.is_admissible() {
        return Err(GeometryError::NonAdmissible(format!(
            "min u' = {:.3e}, min Q = {:.3e}",
            u.min_u_prime(),
            u.min_q()
        )));
    }
    let a = spec.a();
    if u.kind == ProfileKind::Curve {
        return Ok(u.clone());
    }
    let fiber_mesh = Arc::new(build_mesh(u.mesh.n, 1.0)?);
    // u''(rho) = a^2 v''(sigma): the fiber Q is Q/a and the rho-linear part
    // of the potential is pluriharmonic on the fiber.
    Ok(RadialPotential::new(
        fiber_mesh,
        ProfileKind::Curve,
        AnsatzBase::new(0.0, u.base.log_amp / a),
        u.pert.clone(),
    ))
}

/// Positivity and boundary-slope report; never errors.
pub fn positivity_check(u: &RadialPotential) -> AdmissibilityReport {
    let usec = u.u_second();
    let min_u_second = usec.iter().cloned().fold(f64::INFINITY, f64::min);
    let (slope0, slope_inf) = match u.moment_profile() {
        Ok(mp) => mp.boundary_slopes(),
        Err(_) => (f64::NAN, f64::NAN),
    };
    AdmissibilityReport {
        min_u_prime: u.min_u_prime(),
        min_u_second,
        min_q: u.min_q(),
        slope0,
        slope_inf,
        admissible: u.is_admissible(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};

    fn mesh(n: usize, a: f64) -> Arc<Mesh> {
        Arc::new(build_mesh(n, a).unwrap())
    }

    fn fs_potential(n: usize) -> RadialPotential {
        // u = log(1 + e^rho): the Fubini-Study potential with area 2 pi
        RadialPotential::new(
            mesh(n, 1.0),
            ProfileKind::Curve,
            AnsatzBase::new(0.0, 1.0),
            vec![0.0; n],
        )
    }

    /// Random admissible surface potential with a closed-form perturbation,
    /// returning the potential and u(rho) as a closure for oracles.
    fn random_potential(
        n: usize,
        a: f64,
        rng: &mut impl Rng,
    ) -> (RadialPotential, impl Fn(f64) -> f64) {
        let b0 = rng.gen_range(0.5..2.0);
        let alpha = rng.gen_range(1.0..3.0);
        let c1 = rng.gen_range(-0.05..0.05);
        let c2 = rng.gen_range(-0.05..0.05);
        let c3 = rng.gen_range(-0.05..0.05);
        let w = move |x: f64| {
            c1 * (std::f64::consts::PI * x).sin()
                + c2 * x * x * (1.0 - x) * (1.0 - x)
                + c3 * (2.0 * x).cos()
        };
        let m = mesh(n, a);
        let pert: Vec<f64> = m.nodes.iter().map(|&x| w(x)).collect();
        let base = AnsatzBase::new(b0, alpha);
        let u = RadialPotential::new(m, ProfileKind::Surface, base, pert);
        assert!(u.is_admissible());
        let eval = move |rho: f64| base.eval(a, rho) + w(x_of_rho(a, rho));
        (u, eval)
    }

    /// Centered finite-difference Wirtinger Hessian d^2 f / dz_i dzbar_j of a
    /// real function of (z1, z2).
    fn fd_complex_hessian(
        f: &dyn Fn([Complex64; 2]) -> f64,
        z: [Complex64; 2],
        h: f64,
    ) -> [[Complex64; 2]; 2] {
        // real coordinates (x1, y1, x2, y2)
        let at = |d: [f64; 4]| {
            f([
                Complex64::new(z[0].re + d[0], z[0].im + d[1]),
                Complex64::new(z[1].re + d[2], z[1].im + d[3]),
            ])
        };
        let second = |p: usize, q: usize| {
            if p == q {
                let mut dp = [0.0; 4];
                dp[p] = h;
                let mut dm = [0.0; 4];
                dm[p] = -h;
                (at(dp) - 2.0 * at([0.0; 4]) + at(dm)) / (h * h)
            } else {
                let mut pp = [0.0; 4];
                pp[p] = h;
                pp[q] = h;
                let mut pm = [0.0; 4];
                pm[p] = h;
                pm[q] = -h;
                let mut mp = [0.0; 4];
                mp[p] = -h;
                mp[q] = h;
                let mut mm = [0.0; 4];
                mm[p] = -h;
                mm[q] = -h;
                (at(pp) - at(pm) - at(mp) + at(mm)) / (4.0 * h * h)
            }
        };
        let mut g = [[Complex64::new(0.0, 0.0); 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                let (xi, yi) = (2 * i, 2 * i + 1);
                let (xj, yj) = (2 * j, 2 * j + 1);
                let re = 0.25 * (second(xi, xj) + second(yi, yj));
                let im = 0.25 * (second(xi, yj) - second(yi, xj));
                g[i][j] = Complex64::new(re, im);
            }
        }
        g
    }

    fn random_point(rng: &mut impl Rng) -> [Complex64; 2] {
        // |z|^2 = e^rho with rho in a band where interpolation is comfortable
        let rho: f64 = rng.gen_range(-2.5..2.5);
        let r = (rho / 2.0).exp();
        let theta: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let p1: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let p2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        [
            Complex64::from_polar(r * theta.cos(), p1),
            Complex64::from_polar(r * theta.sin(), p2),
        ]
    }

    #[test]
    fn reference_matches_closed_form() {
        let spec = ModelSpec::hirzebruch(1, 1.0, 3.0, 1.0);
        let u = reference_potential(&spec, &mesh(64, 1.0));
        assert_abs_diff_eq!(u.u_prime_at(0.5).unwrap(), 2.0, epsilon = 1e-12);

        let fs = fs_potential(64);
        assert_abs_diff_eq!(fs.u_prime_at(0.5).unwrap(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(fs.u_second_at(0.5).unwrap(), 0.25, epsilon = 1e-12);
    }

    #[test]
    fn moment_profile_closed_form() {
        // a = 2, (b0, binf) = (1, 3): phi(tau) = (tau - 1)(3 - tau)
        let spec = ModelSpec::hirzebruch(2, 1.0, 3.0, 1.0);
        let u = reference_potential(&spec, &mesh(64, 2.0));
        let mp = u.moment_profile().unwrap();
        assert_abs_diff_eq!(mp.eval(2.0).unwrap(), 1.0, epsilon = 1e-10);
        for tau in [1.1, 1.5, 2.7, 2.95] {
            assert_abs_diff_eq!(
                mp.eval(tau).unwrap(),
                (tau - 1.0) * (3.0 - tau),
                epsilon = 1e-10
            );
        }
        let (s0, sinf) = mp.boundary_slopes();
        assert_abs_diff_eq!(s0, 2.0, epsilon = 1e-8);
        assert_abs_diff_eq!(sinf, -2.0, epsilon = 1e-8);
        // generic reference family: phi(tau) = a (tau-b0)(binf-tau)/(binf-b0)
        let spec = ModelSpec::hirzebruch(3, 0.5, 4.0, 1.0);
        let u = reference_potential(&spec, &mesh(96, 3.0));
        let mp = u.moment_profile().unwrap();
        for tau in [0.7, 2.0, 3.9] {
            assert_abs_diff_eq!(
                mp.eval(tau).unwrap(),
                3.0 * (tau - 0.5) * (4.0 - tau) / 3.5,
                epsilon = 1e-9
            );
        }
    }

    #[test]
    fn fubini_study_metric_components() {
        let fs = fs_potential(256);
        let z = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)];
        let g = metric_components(&fs, z).unwrap();
        assert_abs_diff_eq!(g[0][0].re, 0.25, epsilon = 1e-10);
        assert_abs_diff_eq!(g[1][1].re, 0.5, epsilon = 1e-10);
        assert_abs_diff_eq!(g[0][1].norm(), 0.0, epsilon = 1e-12);

        // U(2) phase invariance of the eigenvalues
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let z = random_point(&mut rng);
            let lam = Complex64::from_polar(1.0, rng.gen_range(0.0..6.28));
            let zs = [z[0] * lam, z[1] * lam];
            let (r1, t1) = hessian_eigenvalues(&fs, z).unwrap();
            let (r2, t2) = hessian_eigenvalues(&fs, zs).unwrap();
            assert_abs_diff_eq!(r1, r2, epsilon = 1e-12);
            assert_abs_diff_eq!(t1, t2, epsilon = 1e-12);
        }
    }

    #[test]
    fn hessian_matches_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for trial in 0..20 {
            let a = if trial % 3 == 0 { 2.0 } else { 1.0 };
            let (u, ueval) = random_potential(512, a, &mut rng);
            let z = random_point(&mut rng);
            let g = metric_components(&u, z).unwrap();
            let f = |p: [Complex64; 2]| ueval((p[0].norm_sqr() + p[1].norm_sqr()).ln());
            let fd = fd_complex_hessian(&f, z, 3e-4);
            let scale = g[0][0].norm().max(g[1][1].norm());
            for i in 0..2 {
                for j in 0..2 {
                    assert!(
                        (g[i][j] - fd[i][j]).norm() <= 1e-6 * scale,
                        "entry ({i},{j}): ansatz {} vs fd {}",
                        g[i][j],
                        fd[i][j]
                    );
                }
            }
        }
    }

    #[test]
    fn det_metric_consistency() {
        let fs = fs_potential(128);
        // closed form at rho = 0: 1 * (1/2) * (1/4)
        let x_mid = 0.5;
        let up = fs.u_prime_at(x_mid).unwrap();
        let us = fs.u_second_at(x_mid).unwrap();
        assert_abs_diff_eq!(up * us, 0.125, epsilon = 1e-12);

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        let (u, _) = random_potential(256, 1.0, &mut rng);
        let det = det_metric(&u).unwrap();
        for _ in 0..20 {
            let i = rng.gen_range(40..216);
            let rho = u.mesh.rho(i);
            let r = (rho / 2.0).exp();
            let th: f64 = rng.gen_range(0.2..1.4);
            let z = [
                Complex64::new(r * th.cos(), 0.0),
                Complex64::new(0.0, r * th.sin()),
            ];
            let g = metric_components(&u, z).unwrap();
            let d = (g[0][0] * g[1][1] - g[0][1] * g[1][0]).re;
            assert!((d - det[i]).abs() <= 1e-6 * det[i].abs());
        }

        // constant shifts do not change the metric
        let shifted = u.shift(3.7);
        let det2 = det_metric(&shifted).unwrap();
        for i in 0..u.mesh.n {
            assert_abs_diff_eq!(det[i], det2[i], epsilon = 1e-9 * det[i].abs().max(1.0));
        }
    }

    #[test]
    fn fubini_study_is_ricci_fixed_point() {
        // Ric(w_FS) = 2 w_FS: r - 2u is constant, exactly in this representation
        let fs = fs_potential(64);
        let r = ricci_profile(&fs).unwrap();
        assert_abs_diff_eq!(r.base.rho_coeff, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.base.log_amp, 2.0, epsilon = 1e-15);
        let diff: Vec<f64> = (0..64).map(|i| r.pert[i] - 2.0 * fs.pert[i]).collect();
        for v in &diff {
            assert_abs_diff_eq!(*v, diff[0], epsilon = 1e-14);
        }
    }

    #[test]
    fn ricci_form_scale_invariant() {
        // c * w_FS has the same Ricci form for every c > 0
        let m = mesh(64, 1.0);
        for c in [0.5, 2.0, 7.0] {
            let u = RadialPotential::new(
                m.clone(),
                ProfileKind::Curve,
                AnsatzBase::new(0.0, c),
                vec![0.0; 64],
            );
            let r = ricci_profile(&u).unwrap();
            let r1 = RadialPotential::new(
                m.clone(),
                ProfileKind::Curve,
                AnsatzBase::new(0.0, 1.0),
                vec![0.0; 64],
            );
            let rr = ricci_profile(&r1).unwrap();
            for i in 0..64 {
                assert_abs_diff_eq!(r.u_prime()[i], rr.u_prime()[i], epsilon = 1e-12);
                assert_abs_diff_eq!(r.q()[i], rr.q()[i], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn ricci_matches_fd_log_det() {
        // Hirzebruch a=1, (1,3) reference: ansatz Hessian of the Ricci
        // potential against finite differences of -log det g
        let spec = ModelSpec::hirzebruch(1, 1.0, 3.0, 1.0);
        let u = reference_potential(&spec, &mesh(512, 1.0));
        let r = ricci_profile(&u).unwrap();
        let logdet = |p: [Complex64; 2]| {
            let rho = (p[0].norm_sqr() + p[1].norm_sqr()).ln();
            let x = x_of_rho(1.0, rho);
            -2.0 * rho + (1.0 + 2.0 * x).ln() + (2.0 * x * (1.0 - x)).ln()
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let z = random_point(&mut rng);
            let g = hessian_components(&r, z).unwrap();
            let fd = fd_complex_hessian(&logdet, z, 3e-4);
            for i in 0..2 {
                for j in 0..2 {
                    assert!(
                        (g[i][j] + fd[i][j]).norm() <= 1e-5,
                        "entry ({i},{j}): {} vs {}",
                        g[i][j],
                        -fd[i][j]
                    );
                }
            }
        }
    }

    #[test]
    fn class_pairings_examples() {
        // product fiber factor 2 w_FS: fiber area 4 pi
        let m = mesh(128, 1.0);
        let fiber = RadialPotential::new(
            m.clone(),
            ProfileKind::Curve,
            AnsatzBase::new(0.0, 2.0),
            vec![0.0; 128],
        );
        let spec = ModelSpec::product(1.0);
        let pd = class_pairings(
            &ModelProfile::Product { base_coeff: 3.0, fiber },
            &spec,
        )
        .unwrap();
        assert_abs_diff_eq!(pd.fiber_area, 4.0 * std::f64::consts::PI, epsilon = 1e-10);

        // Hirzebruch reference pairings
        let spec = ModelSpec::hirzebruch(2, 1.0, 3.0, 1.0);
        let hm = mesh(128, 2.0);
        let u = reference_potential(&spec, &hm);
        let kd = class_pairings(&ModelProfile::Hirzebruch(u.clone()), &spec).unwrap();
        let pi = std::f64::consts::PI;
        assert_abs_diff_eq!(kd.fiber_area, 2.0 * pi / 2.0 * 2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(kd.zero_section_area, 2.0 * pi, epsilon = 1e-9);
        assert_abs_diff_eq!(kd.infinity_section_area, 6.0 * pi, epsilon = 1e-9);
        assert_abs_diff_eq!(
            kd.total_volume,
            4.0 * pi * pi / 2.0 * (9.0 - 1.0),
            epsilon = 1e-8
        );

        // two metrics in one class pair identically
        let bump: Vec<f64> = hm
            .nodes
            .iter()
            .map(|&x| 0.1 * (x * (1.0 - x)).powi(2) * (5.0 * x).sin())
            .collect();
        let u2 = RadialPotential::new(hm.clone(), ProfileKind::Surface, u.base, bump);
        let kd2 = class_pairings(&ModelProfile::Hirzebruch(u2), &spec).unwrap();
        assert_abs_diff_eq!(kd.fiber_area, kd2.fiber_area, epsilon = 1e-7);
        assert_abs_diff_eq!(kd.total_volume, kd2.total_volume, epsilon = 1e-6);
        assert_abs_diff_eq!(kd.zero_section_area, kd2.zero_section_area, epsilon = 1e-7);
    }

    #[test]
    fn fiber_area_scales_like_class_identity() {
        // fiber_area(w_t)/fiber_area(w_0) = e^{-t} with w_t = e^{-t} w_0 + (1-e^{-t}) kappa chi
        let spec = ModelSpec::hirzebruch(1, 1.0, 3.0, 1.0);
        let m = mesh(128, 1.0);
        let u0 = reference_potential(&spec, &m);
        let kd0 = class_pairings(&ModelProfile::Hirzebruch(u0.clone()), &spec).unwrap();
        for t in [0.3, 1.0, 4.0] {
            let e = (-t as f64).exp();
            let base = u0.base.scale(e).plus(AnsatzBase::new((1.0 - e) * spec.kappa, 0.0));
            let ut = RadialPotential::new(m.clone(), ProfileKind::Surface, base, vec![0.0; m.n]);
            let kdt = class_pairings(&ModelProfile::Hirzebruch(ut), &spec).unwrap();
            assert_abs_diff_eq!(kdt.fiber_area / kd0.fiber_area, e, epsilon = 1e-8);
        }
    }

    #[test]
    fn fiber_restriction_properties() {
        // product: restriction is the fiber profile unchanged
        let m = mesh(64, 1.0);
        let fiber = RadialPotential::new(
            m.clone(),
            ProfileKind::Curve,
            AnsatzBase::new(0.0, 2.0),
            vec![0.0; 64],
        );
        let spec = ModelSpec::product(1.0);
        let restr = fiber_restriction(&fiber, &spec).unwrap();
        assert_eq!(restr.base, fiber.base);

        // Hirzebruch: fiber area (binf-b0) 2 pi / a through the curve profile
        let spec = ModelSpec::hirzebruch(2, 1.0, 3.0, 1.0);
        let hm = mesh(128, 2.0);
        let u = reference_potential(&spec, &hm);
        let v = fiber_restriction(&u, &spec).unwrap();
        let area = std::f64::consts::TAU * v.mesh.quad_x(v.q());
        assert_abs_diff_eq!(
            area,
            (3.0 - 1.0) * std::f64::consts::TAU / 2.0,
            epsilon = 1e-9
        );

        // restriction of w_t equals e^{-t} times restriction of w_0 pointwise
        let t = 1.7f64;
        let e = (-t).exp();
        let base = u.base.scale(e).plus(AnsatzBase::new((1.0 - e) * spec.kappa, 0.0));
        let ut = RadialPotential::new(hm.clone(), ProfileKind::Surface, base, vec![0.0; hm.n]);
        let vt = fiber_restriction(&ut, &spec).unwrap();
        for i in 0..hm.n {
            assert_abs_diff_eq!(vt.u_second()[i], e * v.u_second()[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn positivity_reports() {
        let spec = ModelSpec::hirzebruch(1, 1.0, 3.0, 1.0);
        let m = mesh(64, 1.0);
        let u0 = reference_potential(&spec, &m);
        let rep = positivity_check(&u0);
        assert!(rep.admissible);
        assert_abs_diff_eq!(rep.slope0, 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(rep.slope_inf, -1.0, epsilon = 1e-6);

        // u(x) = -x is not a metric
        let bad = RadialPotential::from_values(
            m.clone(),
            ProfileKind::Surface,
            m.nodes.iter().map(|x| -x).collect(),
        );
        assert!(!positivity_check(&bad).admissible);

        // w_t at t = 5: moment interval [1, 1 + 2 e^{-5}]
        let t = 5.0f64;
        let e = (-t).exp();
        let base = u0.base.scale(e).plus(AnsatzBase::new((1.0 - e) * spec.kappa, 0.0));
        let ut = RadialPotential::new(m.clone(), ProfileKind::Surface, base, vec![0.0; m.n]);
        let rep = positivity_check(&ut);
        assert!(rep.admissible);
        let mp = ut.moment_profile().unwrap();
        assert_abs_diff_eq!(mp.tau0, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(mp.tauinf, 1.0 + 2.0 * e, epsilon = 1e-12);
    }

    #[test]
    fn reference_admissible_along_whole_path() {
        for spec in [
            ModelSpec::hirzebruch(1, 2.0, 4.0, 1.0),
            ModelSpec::hirzebruch(2, 1.0, 3.0, 0.7),
        ] {
            let m = mesh(64, spec.a());
            let u0 = reference_potential(&spec, &m);
            let mut t = 0.0;
            while t < 12.0 {
                let e = (-t as f64).exp();
                let base = u0
                    .base
                    .scale(e)
                    .plus(AnsatzBase::new((1.0 - e) * spec.kappa, 0.0));
                let ut =
                    RadialPotential::new(m.clone(), ProfileKind::Surface, base, vec![0.0; m.n]);
                assert!(ut.is_admissible(), "w_t inadmissible at t = {t}");
                t += 0.5;
            }
        }
    }

    #[test]
    fn spec_validation() {
        assert!(ModelSpec::hirzebruch(1, 2.0, 4.0, 1.0).validate().is_ok());
        assert!(ModelSpec::product(1.0).validate().is_ok());
        assert!(ModelSpec::hirzebruch(0, 2.0, 4.0, 1.0).validate().is_err());
        assert!(ModelSpec::hirzebruch(1, 3.0, 2.0, 1.0).validate().is_err());
        assert!(ModelSpec::hirzebruch(1, 2.0, 4.0, -1.0).validate().is_err());
        let mut s = ModelSpec::product(1.0);
        s.omega_gauge = 0.0;
        assert!(s.validate().is_err());
    }
}
