//! Numerical bifurcation decisions at conjugate points: miss-map shooting,
//! branch tracing toward a conjugate parameter, and integral certificates
//! that exclude nontrivial boundary-value solutions.
//!
//! The miss map sends an initial transverse velocity pair `w` to the
//! transverse position of the integrated trajectory at parameter `lambda`;
//! its zeros are exactly the two-point boundary-value solutions pinned to the
//! axis at both ends. A scenario is certified non-bifurcating only when a
//! scan floor, an all-trivial Newton basin, and the pointwise positivity of
//! the certificate integrand hold together; the scan alone can never prove
//! the negative.

use crate::dynamics::{simpson, Tolerances, Trajectory};
use crate::fields::ScalarField;
use crate::geometry::{MechanicalOde, MechanicalSystem, Vec3};
use crate::integrate::{dopri5, OdeOptions, OdeSolution};
use crate::{Error, Result};

/// Which typesetting of the conformal-scenario equations drives a run: the
/// equations as printed, or the signs obtained from the potential
/// `c - exp(2 rho)` directly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignVariant {
    Derived,
    Printed,
}

impl SignVariant {
    pub fn name(self) -> &'static str {
        match self {
            SignVariant::Derived => "derived",
            SignVariant::Printed => "printed",
        }
    }
}

/// Integrator for a fixed mechanical system, start point and longitudinal
/// speed; transverse initial velocities vary.
pub struct Shooter {
    ode: MechanicalOde,
    q0: Vec3,
    vz: f64,
    opts: OdeOptions,
}

/// Escape bound for shooting trajectories. Conformal-weight potentials grow
/// like `exp(2 rho)` with polynomial `rho`, so solutions that leave this box
/// blow up in finite time; the integration is truncated there and the huge
/// transverse position speaks for itself.
pub const SHOOTER_ESCAPE: f64 = 4.0;

impl Shooter {
    pub fn new(sys: &MechanicalSystem, q0: Vec3, longitudinal_speed: f64, tol: Tolerances) -> Self {
        Shooter {
            ode: MechanicalOde::new(sys),
            q0,
            vz: longitudinal_speed,
            opts: OdeOptions {
                rtol: tol.rtol,
                atol: tol.atol,
                escape_norm: Some(SHOOTER_ESCAPE),
                ..OdeOptions::default()
            },
        }
    }

    pub fn integrate(&self, w: [f64; 2], t_end: f64) -> Result<OdeSolution<6>> {
        let ode = &self.ode;
        let f = move |_t: f64, y: &[f64; 6]| {
            let a = ode.accel([y[0], y[1], y[2]]);
            [y[3], y[4], y[5], a[0], a[1], a[2]]
        };
        dopri5(
            f,
            (0.0, t_end),
            [self.q0[0], self.q0[1], self.q0[2], w[0], w[1], self.vz],
            &self.opts,
        )
    }

    /// Transverse position at `lambda`, relative to the start point.
    pub fn miss(&self, w: [f64; 2], lambda: f64) -> Result<[f64; 2]> {
        let sol = self.integrate(w, lambda)?;
        let y = sol.sample(lambda);
        Ok([y[0] - self.q0[0], y[1] - self.q0[1]])
    }
}

/// Transverse coordinates of the integrated trajectory at `lambda`.
pub fn miss_map(
    sys: &MechanicalSystem,
    q0: Vec3,
    w: [f64; 2],
    longitudinal_speed: f64,
    lambda: f64,
    tol: Tolerances,
) -> Result<[f64; 2]> {
    Shooter::new(sys, q0, longitudinal_speed, tol).miss(w, lambda)
}

/// Successful shooting outcome. `SingularFamily` flags a solution reached
/// through a rank-deficient Jacobian (condition above 1e8), i.e. a point on a
/// one-parameter family of boundary-value solutions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ShootOutcome {
    Converged { w: [f64; 2], iterations: usize },
    SingularFamily { w: [f64; 2], iterations: usize },
}

impl ShootOutcome {
    pub fn w(&self) -> [f64; 2] {
        match self {
            ShootOutcome::Converged { w, .. } | ShootOutcome::SingularFamily { w, .. } => *w,
        }
    }

    pub fn is_singular_family(&self) -> bool {
        matches!(self, ShootOutcome::SingularFamily { .. })
    }
}

const NEWTON_FD_STEP: f64 = 1e-6;
const SINGULAR_CONDITION: f64 = 1e8;
/// Largest singular value below which a finite-difference Jacobian is
/// numerically indistinguishable from zero (integration noise over 2h).
const SINGULAR_SIGMA_FLOOR: f64 = 1e-4;

fn norm2(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

/// Damped Newton iteration on the miss map at fixed `lambda`.
///
/// The Jacobian comes from central differences; when its condition number
/// exceeds 1e8 the step is restricted to the least-singular direction
/// (truncated SVD). Backtracking halves the step at most 20 times.
#[allow(clippy::too_many_arguments)]
pub fn newton_shoot(
    sys: &MechanicalSystem,
    q0: Vec3,
    longitudinal_speed: f64,
    lambda: f64,
    w_guess: [f64; 2],
    tol: f64,
    max_iter: usize,
    integration_tol: Tolerances,
) -> Result<ShootOutcome> {
    let shooter = Shooter::new(sys, q0, longitudinal_speed, integration_tol);
    newton_shoot_with(&shooter, lambda, w_guess, tol, max_iter)
}

pub(crate) fn newton_shoot_with(
    shooter: &Shooter,
    lambda: f64,
    w_guess: [f64; 2],
    tol: f64,
    max_iter: usize,
) -> Result<ShootOutcome> {
    let fd_jacobian = |w: [f64; 2]| -> Result<nalgebra::Matrix2<f64>> {
        let h = NEWTON_FD_STEP;
        let mut jac = [[0.0f64; 2]; 2];
        for j in 0..2 {
            let mut wp = w;
            let mut wm = w;
            wp[j] += h;
            wm[j] -= h;
            let mp = shooter.miss(wp, lambda)?;
            let mm = shooter.miss(wm, lambda)?;
            for i in 0..2 {
                jac[i][j] = (mp[i] - mm[i]) / (2.0 * h);
            }
        }
        Ok(nalgebra::Matrix2::new(
            jac[0][0], jac[0][1], jac[1][0], jac[1][1],
        ))
    };

    // a solution sits on a one-parameter family exactly when the Jacobian
    // there is rank-deficient
    let finish = |w: [f64; 2], iterations: usize, used_singular: bool| -> Result<ShootOutcome> {
        let singular = used_singular || {
            let nj = fd_jacobian(w)?;
            let svd = nj.svd(false, false);
            let s0 = svd.singular_values[0].max(svd.singular_values[1]);
            let s1 = svd.singular_values[0].min(svd.singular_values[1]);
            s0 < SINGULAR_SIGMA_FLOOR || s0 / s1.max(f64::MIN_POSITIVE) > SINGULAR_CONDITION
        };
        Ok(if singular {
            ShootOutcome::SingularFamily { w, iterations }
        } else {
            ShootOutcome::Converged { w, iterations }
        })
    };

    let mut w = w_guess;
    let mut m = shooter.miss(w, lambda)?;
    let mut used_singular = false;

    for iter in 0..max_iter {
        let miss_norm = norm2(m);
        if miss_norm <= tol {
            return finish(w, iter, used_singular);
        }

        let nj = fd_jacobian(w)?;
        let svd = nj.svd(true, true);
        let mut s = [svd.singular_values[0], svd.singular_values[1]];
        let mut order = [0usize, 1usize];
        if s[1] > s[0] {
            s.swap(0, 1);
            order.swap(0, 1);
        }
        let cond = s[0] / s[1].max(f64::MIN_POSITIVE);

        let mv = nalgebra::Vector2::new(m[0], m[1]);
        let u = svd.u.unwrap();
        let vt = svd.v_t.unwrap();
        let truncated_step = |used: &mut bool| {
            *used = true;
            let k = order[0];
            let uk = u.column(k);
            let coeff = (uk[0] * mv[0] + uk[1] * mv[1]) / s[0].max(f64::MIN_POSITIVE);
            let vk = vt.row(k);
            nalgebra::Vector2::new(-coeff * vk[0], -coeff * vk[1])
        };
        let mut delta =
            if cond > SINGULAR_CONDITION || s[0] < SINGULAR_SIGMA_FLOOR || !cond.is_finite() {
                truncated_step(&mut used_singular)
            } else {
                match nj.lu().solve(&mv) {
                    Some(d) => -d,
                    None => truncated_step(&mut used_singular),
                }
            };
        // near-singular Jacobians can request absurd steps
        let cap = (2.0 * norm2(w)).max(1.0);
        let dn = delta.norm();
        if dn > cap {
            delta *= cap / dn;
        }

        // backtracking line search on |miss|
        let mut lam = 1.0f64;
        let mut accepted = false;
        for _ in 0..=20 {
            let w_try = [w[0] + lam * delta[0], w[1] + lam * delta[1]];
            let m_try = shooter.miss(w_try, lambda)?;
            let n_try = norm2(m_try);
            if n_try.is_finite() && (n_try <= tol || n_try < miss_norm * (1.0 - 1e-4 * lam)) {
                w = w_try;
                m = m_try;
                accepted = true;
                break;
            }
            lam *= 0.5;
        }
        if !accepted {
            return Err(Error::NoConvergence {
                iterations: iter,
                miss: miss_norm,
            });
        }
    }

    let miss_norm = norm2(m);
    if miss_norm <= tol {
        return finish(w, max_iter, used_singular);
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        miss: miss_norm,
    })
}

/// One traced point of a bifurcation branch.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BranchPoint {
    pub alpha: f64,
    pub t_alpha: f64,
    pub miss_norm: f64,
}

/// One-parameter family `(alpha, T(alpha))` of nontrivial boundary-value
/// solutions along a fixed transverse ray.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Branch {
    pub ray: [f64; 2],
    pub points: Vec<BranchPoint>,
}

/// Tolerance for the invariant-plane probe residual.
pub const PLANE_TOL: f64 = 1e-10;

/// Traces first-return times along the ray `u`: for each alpha the first
/// positive parameter where the in-plane transverse coordinate vanishes.
///
/// Requires the plane spanned by `u` and the longitudinal axis to be
/// invariant; a probe integration checks the off-plane residual first.
pub fn trace_branch(
    sys: &MechanicalSystem,
    q0: Vec3,
    longitudinal_speed: f64,
    ray: [f64; 2],
    alphas: &[f64],
    t_window: (f64, f64),
    tol: Tolerances,
) -> Result<Branch> {
    if alphas.is_empty() {
        return Err(Error::InvalidParameter {
            msg: "branch needs at least one alpha".into(),
        });
    }
    for pair in alphas.windows(2) {
        if pair[1] >= pair[0] {
            return Err(Error::InvalidParameter {
                msg: "alphas must be strictly decreasing".into(),
            });
        }
    }
    if *alphas.last().unwrap() <= 0.0 {
        return Err(Error::InvalidParameter {
            msg: "alphas must stay positive".into(),
        });
    }
    let nr = norm2(ray);
    if nr == 0.0 {
        return Err(Error::InvalidParameter {
            msg: "ray direction must be non-zero".into(),
        });
    }
    let u = [ray[0] / nr, ray[1] / nr];
    let normal = [-u[1], u[0]];
    let (lo, hi) = t_window;

    let shooter = Shooter::new(sys, q0, longitudinal_speed, tol);

    // invariance probe at the largest amplitude
    let probe = shooter.integrate([alphas[0] * u[0], alphas[0] * u[1]], hi)?;
    let mut off: f64 = 0.0;
    for k in 0..=512 {
        let t = hi * k as f64 / 512.0;
        let y = probe.sample(t);
        off = off.max((normal[0] * (y[0] - q0[0]) + normal[1] * (y[1] - q0[1])).abs());
    }
    if off > PLANE_TOL {
        return Err(Error::PlaneNotInvariant {
            residual: off,
            tol: PLANE_TOL,
        });
    }

    let mut points = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let sol = shooter.integrate([alpha * u[0], alpha * u[1]], hi)?;
        let coord = |t: f64| {
            let y = sol.sample(t);
            u[0] * (y[0] - q0[0]) + u[1] * (y[1] - q0[1])
        };
        // first positive zero of the in-plane transverse coordinate
        let n = 4096;
        let eps = hi * 1e-6;
        let mut t_return = None;
        let mut prev_t = eps;
        let mut prev_c = coord(eps);
        for k in 1..=n {
            let t = eps + (hi - eps) * k as f64 / n as f64;
            let c = coord(t);
            if prev_c != 0.0 && (c == 0.0 || (prev_c < 0.0) != (c < 0.0)) {
                let (mut a, mut b) = (prev_t, t);
                let mut fa = prev_c;
                for _ in 0..80 {
                    if b - a < 1e-13 * b.max(1.0) {
                        break;
                    }
                    let mid = 0.5 * (a + b);
                    let fm = coord(mid);
                    if fm == 0.0 {
                        a = mid;
                        b = mid;
                        break;
                    }
                    if (fa < 0.0) == (fm < 0.0) {
                        a = mid;
                        fa = fm;
                    } else {
                        b = mid;
                    }
                }
                t_return = Some(0.5 * (a + b));
                break;
            }
            prev_t = t;
            prev_c = c;
        }
        let t_alpha = t_return.ok_or(Error::NoReturnInWindow { lo, hi, alpha })?;
        if t_alpha < lo || t_alpha > hi {
            return Err(Error::NoReturnInWindow { lo, hi, alpha });
        }
        let y = sol.sample(t_alpha);
        let miss = norm2([y[0] - q0[0], y[1] - q0[1]]);
        points.push(BranchPoint {
            alpha,
            t_alpha,
            miss_norm: miss,
        });
    }

    Ok(Branch {
        ray: [u[0], u[1]],
        points,
    })
}

/// Counts branch points within 0.05 of the conjugate parameter whose gaps do
/// not increase as alpha decreases.
pub fn branch_support(t_star: f64, branch: &Branch) -> usize {
    let mut count = 0;
    let mut prev_gap = f64::INFINITY;
    for p in &branch.points {
        let gap = (p.t_alpha - t_star).abs();
        if gap <= 0.05 && gap <= prev_gap + 1e-9 {
            count += 1;
        }
        prev_gap = gap;
    }
    count
}

/// Certificate integrand family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CertificateVariant {
    /// `x^2 y^4 + x^4 y^2`: nonnegative but vanishing on either axis plane.
    Mpp,
    /// `x^4 + y^4 + 6 x^2 y^2`: vanishes only where both coordinates do.
    New,
}

impl CertificateVariant {
    pub fn density(self, x: f64, y: f64) -> f64 {
        let x2 = x * x;
        let y2 = y * y;
        match self {
            CertificateVariant::Mpp => x2 * y2 * (x2 + y2),
            CertificateVariant::New => x2 * x2 + y2 * y2 + 6.0 * x2 * y2,
        }
    }
}

/// Fits the constant of the cross-Wronskian identity
/// `d/dt (y x' - x y') = kappa * weight * density` along a probe trajectory
/// of the system, and returns it when the identity actually holds.
///
/// This is what gives a certificate exclusion force: integrating the
/// identity over a solution pinned to the axis at both ends kills the
/// boundary term, so the weighted density must integrate to zero — and a
/// pointwise-nonnegative density then vanishes identically. For a system
/// that does not satisfy the identity the certificate proves nothing, and
/// certification must not be claimed.
pub fn certificate_identity_constant(
    sys: &MechanicalSystem,
    q0: Vec3,
    longitudinal_speed: f64,
    variant: CertificateVariant,
    weight: &ScalarField,
    t_end: f64,
    tol: Tolerances,
) -> Result<Option<f64>> {
    let shooter = Shooter::new(sys, q0, longitudinal_speed, tol);
    let sol = shooter.integrate([0.13, 0.19], t_end)?;
    let ode = MechanicalOde::new(sys);
    let n = 256;
    let hi = sol.t_end();
    let mut rates = Vec::with_capacity(n + 1);
    let mut densities = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let t = hi * k as f64 / n as f64;
        let y = sol.sample(t);
        let q = [y[0], y[1], y[2]];
        let a = ode.accel(q);
        rates.push(q[1] * a[0] - q[0] * a[1]);
        densities.push(weight.eval(q) * variant.density(q[0], q[1]));
    }
    let sd2: f64 = densities.iter().map(|d| d * d).sum();
    if sd2 < 1e-30 {
        return Ok(None);
    }
    let kappa = rates
        .iter()
        .zip(densities.iter())
        .map(|(r, d)| r * d)
        .sum::<f64>()
        / sd2;
    let scale = 1.0 + densities.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    let resid = rates
        .iter()
        .zip(densities.iter())
        .map(|(r, d)| (r - kappa * d).abs())
        .fold(0.0f64, f64::max);
    if resid <= 1e-7 * scale && kappa.abs() > 1e-6 {
        Ok(Some(kappa))
    } else {
        Ok(None)
    }
}

/// Weighted integral of a certificate density along a trajectory.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Certificate {
    pub variant: CertificateVariant,
    pub lambda: f64,
    pub value: f64,
    pub integrand_min: f64,
    pub weight: String,
}

fn certificate_over(
    variant: CertificateVariant,
    weight: &ScalarField,
    position: impl Fn(f64) -> Vec3,
    lambda: f64,
) -> Certificate {
    let f = |t: f64| {
        let q = position(t);
        weight.eval(q) * variant.density(q[0], q[1])
    };
    let mut integrand_min = f64::INFINITY;
    let n = 2048usize;
    for k in 0..=n {
        let t = lambda * k as f64 / n as f64;
        integrand_min = integrand_min.min(f(t));
    }
    let value = simpson(f, 0.0, lambda, 256);
    Certificate {
        variant,
        lambda,
        value,
        integrand_min,
        weight: weight.render(),
    }
}

/// Simpson quadrature of the weighted certificate integrand over `[0, lambda]`.
pub fn certificate_integral(
    variant: CertificateVariant,
    weight: &ScalarField,
    traj: &Trajectory,
    lambda: f64,
) -> Certificate {
    certificate_over(variant, weight, |t| traj.position(t), lambda)
}

/// One row of the polar miss-map scan.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ScanRow {
    pub lambda: f64,
    pub angle: f64,
    pub radius: f64,
    pub miss_norm: f64,
}

/// One Newton run of the scan.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NewtonRecord {
    pub lambda: f64,
    pub seed: [f64; 2],
    pub outcome: String,
    pub w: Option<[f64; 2]>,
    pub miss: f64,
    pub iterations: usize,
    pub nontrivial: bool,
}

/// A nontrivial boundary-value solution found by the scan, together with the
/// certificate evaluated along it.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NontrivialSolution {
    pub lambda: f64,
    pub w: [f64; 2],
    pub miss: f64,
    pub certificate: Certificate,
    /// Certificate value divided by the quadrature noise floor; values well
    /// above one contradict the solution, values near zero are consistent
    /// with a genuine family.
    pub contradiction_margin: f64,
}

/// Scan configuration.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ScanParams {
    pub window: (f64, f64),
    pub lambda_samples: usize,
    pub radius: f64,
    pub grid_n: usize,
    pub newton_seeds: usize,
    pub seed_radius: f64,
    pub shoot_tol: f64,
    pub max_iter: usize,
    /// Frozen empirical floor for the outer-ring miss norm.
    pub miss_floor: f64,
    /// |w| above this counts as a nontrivial solution.
    pub nontrivial_threshold: f64,
}

impl ScanParams {
    pub fn around(t_star: f64) -> Self {
        ScanParams {
            window: (t_star - 0.3, t_star + 0.3),
            lambda_samples: 17,
            radius: 0.4,
            grid_n: 64,
            newton_seeds: 16,
            seed_radius: 0.3,
            shoot_tol: 1e-10,
            max_iter: 60,
            miss_floor: 1e-4,
            nontrivial_threshold: 1e-2,
        }
    }
}

/// Summary evidence of a scan, embedded in reports.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ScanEvidence {
    pub window: (f64, f64),
    pub lambda_samples: usize,
    pub radius: f64,
    pub grid_n: usize,
    pub miss_floor: f64,
    /// Minimum miss norm over the outermost ring (|w| = radius); the floor
    /// applies here, where the calibration was done.
    pub min_miss_outer_ring: f64,
    /// Minimum miss norm over the whole off-origin grid (informational; near
    /// the conjugate parameter this decays like |w|^3).
    pub min_miss_grid: f64,
    pub floor_met: bool,
    pub newton_runs: usize,
    pub newton_all_trivial: bool,
    pub newton: Vec<NewtonRecord>,
    pub nontrivial_solutions: Vec<NontrivialSolution>,
}

/// Full scan output: evidence summary plus the raw grid rows (for CSV).
#[derive(Debug, Clone)]
pub struct ScanResult {
    pub evidence: ScanEvidence,
    pub rows: Vec<ScanRow>,
}

/// Scans the miss map over a window of boundary parameters and a polar grid
/// of transverse velocities, and runs multi-seed Newton shooting at each
/// parameter sample. Any nontrivial solution found gets the certificate
/// evaluated along it.
pub fn nonbifurcation_scan(
    sys: &MechanicalSystem,
    q0: Vec3,
    longitudinal_speed: f64,
    params: &ScanParams,
    certificate_variant: CertificateVariant,
    certificate_weight: &ScalarField,
    tol: Tolerances,
) -> Result<ScanResult> {
    if params.radius <= 0.0 {
        return Err(Error::InvalidParameter {
            msg: "scan radius must be positive".into(),
        });
    }
    if params.grid_n < 16 {
        return Err(Error::InvalidParameter {
            msg: "scan grid must be at least 16".into(),
        });
    }
    if params.lambda_samples < 2 || params.window.1 <= params.window.0 || params.window.0 <= 0.0 {
        return Err(Error::InvalidParameter {
            msg: "scan window must be positive and ordered".into(),
        });
    }

    let (lo, hi) = params.window;
    let lambdas: Vec<f64> = (0..params.lambda_samples)
        .map(|k| lo + (hi - lo) * k as f64 / (params.lambda_samples - 1) as f64)
        .collect();

    let shooter = Shooter::new(sys, q0, longitudinal_speed, tol);

    // polar grid: one integration per velocity, all lambdas from dense output
    let mut rows = Vec::with_capacity(params.grid_n * params.grid_n * lambdas.len());
    let mut min_grid = f64::INFINITY;
    let mut min_outer = f64::INFINITY;
    for ri in 1..=params.grid_n {
        let r = params.radius * ri as f64 / params.grid_n as f64;
        for ai in 0..params.grid_n {
            let angle = 2.0 * std::f64::consts::PI * ai as f64 / params.grid_n as f64;
            let w = [r * angle.cos(), r * angle.sin()];
            let sol = shooter.integrate(w, hi)?;
            for &lambda in &lambdas {
                let y = sol.sample(lambda);
                let miss = norm2([y[0] - q0[0], y[1] - q0[1]]);
                min_grid = min_grid.min(miss);
                if ri == params.grid_n {
                    min_outer = min_outer.min(miss);
                }
                rows.push(ScanRow {
                    lambda,
                    angle,
                    radius: r,
                    miss_norm: miss,
                });
            }
        }
    }
    rows.sort_by(|a, b| {
        a.lambda
            .partial_cmp(&b.lambda)
            .unwrap()
            .then(a.radius.partial_cmp(&b.radius).unwrap())
            .then(a.angle.partial_cmp(&b.angle).unwrap())
    });

    // Newton basin per lambda
    let mut newton = Vec::with_capacity(lambdas.len() * params.newton_seeds);
    let mut all_trivial = true;
    let mut nontrivial: Vec<(f64, [f64; 2], f64)> = Vec::new();
    for &lambda in &lambdas {
        for s in 0..params.newton_seeds {
            let angle = 2.0 * std::f64::consts::PI * s as f64 / params.newton_seeds as f64;
            let seed = [
                params.seed_radius * angle.cos(),
                params.seed_radius * angle.sin(),
            ];
            let record = match newton_shoot_with(
                &shooter,
                lambda,
                seed,
                params.shoot_tol,
                params.max_iter,
            ) {
                Ok(outcome) => {
                    let w = outcome.w();
                    let miss = norm2(shooter.miss(w, lambda)?);
                    let is_nontrivial = norm2(w) > params.nontrivial_threshold;
                    if is_nontrivial {
                        all_trivial = false;
                        if !nontrivial.iter().any(|(l, v, _)| {
                            *l == lambda && norm2([v[0] - w[0], v[1] - w[1]]) < 1e-4
                        }) {
                            nontrivial.push((lambda, w, miss));
                        }
                    }
                    NewtonRecord {
                        lambda,
                        seed,
                        outcome: if outcome.is_singular_family() {
                            "singular-family".into()
                        } else {
                            "converged".into()
                        },
                        w: Some(w),
                        miss,
                        iterations: match outcome {
                            ShootOutcome::Converged { iterations, .. }
                            | ShootOutcome::SingularFamily { iterations, .. } => iterations,
                        },
                        nontrivial: is_nontrivial,
                    }
                }
                Err(Error::NoConvergence { iterations, miss }) => NewtonRecord {
                    lambda,
                    seed,
                    outcome: "no-convergence".into(),
                    w: None,
                    miss,
                    iterations,
                    nontrivial: false,
                },
                Err(other) => return Err(other),
            };
            newton.push(record);
        }
    }

    // certificates along any nontrivial solution
    let mut nontrivial_solutions = Vec::with_capacity(nontrivial.len());
    for (lambda, w, miss) in nontrivial {
        let sol = shooter.integrate(w, lambda)?;
        let certificate = certificate_over(
            certificate_variant,
            certificate_weight,
            |t| {
                let y = sol.sample(t);
                [y[0], y[1], y[2]]
            },
            lambda,
        );
        let quad_floor = 1e-10 * (1.0 + lambda);
        let contradiction_margin = certificate.value / quad_floor;
        nontrivial_solutions.push(NontrivialSolution {
            lambda,
            w,
            miss,
            certificate,
            contradiction_margin,
        });
    }
    nontrivial_solutions.sort_by(|a, b| {
        a.lambda.partial_cmp(&b.lambda).unwrap().then(
            a.w[1]
                .atan2(a.w[0])
                .partial_cmp(&b.w[1].atan2(b.w[0]))
                .unwrap(),
        )
    });

    let evidence = ScanEvidence {
        window: params.window,
        lambda_samples: params.lambda_samples,
        radius: params.radius,
        grid_n: params.grid_n,
        miss_floor: params.miss_floor,
        min_miss_outer_ring: min_outer,
        min_miss_grid: min_grid,
        floor_met: min_outer >= params.miss_floor,
        newton_runs: newton.len(),
        newton_all_trivial: all_trivial,
        newton,
        nontrivial_solutions,
    };
    Ok(ScanResult { evidence, rows })
}

/// Scenario-level decision for one conjugate point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    Bifurcating,
    CertifiedNonBifurcating,
    Undecided,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::parse;
    use crate::geometry::Signature;
    use std::f64::consts::PI;

    fn mpp_perturbed() -> MechanicalSystem {
        MechanicalSystem::new(
            Signature::parse("+-+").unwrap(),
            parse("(+ (* 1/2 (^ x 2)) (* -1/2 (^ y 2)) (* 1/3 (^ x 3) (^ y 3)))").unwrap(),
        )
    }

    fn new_perturbed() -> MechanicalSystem {
        MechanicalSystem::new(
            Signature::parse("-++").unwrap(),
            parse("(+ (* -1/2 (^ x 2)) (* 1/2 (^ y 2)) (* (^ x 3) y) (* x (^ y 3)))").unwrap(),
        )
    }

    fn old_reduced() -> MechanicalSystem {
        let metric = crate::geometry::ConformalMetric::new(
            Signature::parse("+-+").unwrap(),
            parse("(+ (* 1/2 (^ y 2)) (* -1/2 (^ x 2)) (* 1/3 (^ x 3) (^ y 3)))").unwrap(),
        )
        .unwrap();
        crate::dynamics::mechanical_from_conformal(&metric, 0.0)
    }

    #[test]
    fn trivial_velocity_stays_on_axis() {
        let m = miss_map(
            &mpp_perturbed(),
            [0.0; 3],
            [0.0, 0.0],
            1.0,
            PI,
            Tolerances::default(),
        )
        .unwrap();
        assert_eq!(m, [0.0, 0.0]);
    }

    #[test]
    fn explicit_family_hits_axis_at_pi() {
        for alpha in [0.1, 0.3, 0.7] {
            let m = miss_map(
                &mpp_perturbed(),
                [0.0; 3],
                [alpha, 0.0],
                1.0,
                PI,
                Tolerances::from_scalar(1e-12),
            )
            .unwrap();
            assert!(norm2(m) <= 1e-9, "alpha {alpha}: miss {m:?}");
        }
    }

    #[test]
    fn second_system_misses_at_pi() {
        let m = miss_map(
            &new_perturbed(),
            [0.0; 3],
            [0.1, 0.1],
            1.0,
            PI,
            Tolerances::default(),
        )
        .unwrap();
        assert!(norm2(m) > 1e-4, "miss {m:?}");
    }

    #[test]
    fn newton_basin_of_second_system_is_trivial() {
        let sys = new_perturbed();
        for s in 0..16 {
            let angle = 2.0 * PI * s as f64 / 16.0;
            let seed = [0.3 * angle.cos(), 0.3 * angle.sin()];
            let out = newton_shoot(
                &sys,
                [0.0; 3],
                1.0,
                PI,
                seed,
                1e-10,
                60,
                Tolerances::default(),
            )
            .unwrap();
            let w = out.w();
            assert!(norm2(w) <= 1e-2, "seed {seed:?} landed at {w:?}");
        }
    }

    #[test]
    fn newton_slides_onto_singular_family() {
        // at lambda = pi the zero set is one-dimensional (two families), so
        // a solution is reached with a rank-deficient Jacobian
        let out = newton_shoot(
            &mpp_perturbed(),
            [0.0; 3],
            1.0,
            PI,
            [0.2, 0.05],
            1e-9,
            80,
            Tolerances::default(),
        )
        .unwrap();
        let w = out.w();
        assert!(out.is_singular_family(), "outcome {out:?}");
        // lies near one of the coordinate families
        assert!(w[0].abs().min(w[1].abs()) <= 1e-2, "w = {w:?}");
        let m = miss_map(
            &mpp_perturbed(),
            [0.0; 3],
            w,
            1.0,
            PI,
            Tolerances::default(),
        )
        .unwrap();
        assert!(norm2(m) <= 1e-9);
    }

    #[test]
    fn family_seed_is_flagged_singular() {
        // an exact family member solves the boundary problem for every
        // amplitude, so its Jacobian has a vanishing row
        let out = newton_shoot(
            &mpp_perturbed(),
            [0.0; 3],
            1.0,
            PI,
            [0.3, 0.0],
            1e-9,
            40,
            Tolerances::default(),
        )
        .unwrap();
        assert!(out.is_singular_family(), "outcome {out:?}");
        assert!((out.w()[0] - 0.3).abs() < 1e-12 && out.w()[1] == 0.0);
    }

    #[test]
    fn newton_away_from_conjugate_parameter_finds_origin() {
        let out = newton_shoot(
            &mpp_perturbed(),
            [0.0; 3],
            1.0,
            PI / 2.0,
            [0.1, 0.1],
            1e-10,
            60,
            Tolerances::default(),
        )
        .unwrap();
        assert!(norm2(out.w()) <= 1e-6, "w = {:?}", out.w());
    }

    #[test]
    fn isochronous_branch_of_first_system() {
        let branch = trace_branch(
            &mpp_perturbed(),
            [0.0; 3],
            1.0,
            [1.0, 0.0],
            &[0.4, 0.2, 0.1, 0.05],
            (2.6, 3.7),
            Tolerances::from_scalar(1e-12),
        )
        .unwrap();
        for p in &branch.points {
            assert!(
                (p.t_alpha - PI).abs() <= 1e-9,
                "T({}) = {}",
                p.alpha,
                p.t_alpha
            );
            assert!(p.miss_norm <= 1e-9);
        }
        assert_eq!(branch_support(PI, &branch), 4);
    }

    #[test]
    fn branch_needs_invariant_plane() {
        let err = trace_branch(
            &new_perturbed(),
            [0.0; 3],
            1.0,
            [1.0, 0.0],
            &[0.4, 0.2],
            (2.6, 3.7),
            Tolerances::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::PlaneNotInvariant { .. }));
    }

    // quadrature oracle for the reduced oscillator x'' + 2 exp(-x^2) x = 0:
    // half period T(alpha) = sqrt(2) e^{A^2/2} int_0^{pi/2}
    //   A cos(phi) / sqrt(exp(A^2 cos^2 phi) - 1) dphi,  A^2 = -ln(1 - alpha^2/2)
    fn half_period_oracle(alpha: f64) -> f64 {
        let a2 = -(1.0 - alpha * alpha / 2.0).ln();
        let a = a2.sqrt();
        let n = 1 << 14;
        let h = PI / 2.0 / n as f64;
        let f = |phi: f64| {
            let c = phi.cos();
            let den = (a2 * c * c).exp_m1();
            if den <= 0.0 {
                // phi -> pi/2 limit of the integrand
                1.0
            } else {
                a * c / den.sqrt()
            }
        };
        let mut acc = f(0.0) + f(PI / 2.0);
        for k in 1..n {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(k as f64 * h);
        }
        std::f64::consts::SQRT_2 * (a2 / 2.0).exp() * acc * h / 3.0
    }

    #[test]
    fn reduced_branch_matches_quadrature_oracle() {
        let alphas = [0.4, 0.2, 0.1, 0.05, 0.025];
        let branch = trace_branch(
            &old_reduced(),
            [0.0; 3],
            std::f64::consts::SQRT_2,
            [1.0, 0.0],
            &alphas,
            (1.5, 3.6),
            Tolerances::from_scalar(1e-12),
        )
        .unwrap();
        let t_star = PI / std::f64::consts::SQRT_2;
        let mut prev = f64::INFINITY;
        for p in &branch.points {
            let oracle = half_period_oracle(p.alpha);
            assert!(
                (p.t_alpha - oracle).abs() <= 1e-8,
                "T({}) = {} vs oracle {}",
                p.alpha,
                p.t_alpha,
                oracle
            );
            assert!(p.t_alpha > t_star);
            assert!(p.t_alpha < prev, "return times must decrease");
            prev = p.t_alpha;
        }
    }

    #[test]
    fn branch_points_reverify_by_shooting() {
        let alphas = [0.4, 0.2, 0.1, 0.05];
        let branch = trace_branch(
            &old_reduced(),
            [0.0; 3],
            std::f64::consts::SQRT_2,
            [1.0, 0.0],
            &alphas,
            (1.5, 3.6),
            Tolerances::from_scalar(1e-12),
        )
        .unwrap();
        for p in &branch.points {
            let out = newton_shoot(
                &old_reduced(),
                [0.0; 3],
                std::f64::consts::SQRT_2,
                p.t_alpha,
                [p.alpha, 0.0],
                1e-11,
                40,
                Tolerances::from_scalar(1e-12),
            )
            .unwrap();
            let w = out.w();
            let gap = norm2([w[0] - p.alpha, w[1]]);
            assert!(gap <= 1e-8, "alpha {}: reverified w {:?}", p.alpha, w);
        }
    }

    #[test]
    fn certificate_examples() {
        let w_one = ScalarField::constant(1.0);
        // y == 0 family: the first-variant integrand vanishes identically
        let traj = crate::dynamics::integrate_pgeodesic(
            &mpp_perturbed(),
            [0.0; 3],
            [0.3, 0.0, 1.0],
            (0.0, PI),
            Tolerances::from_scalar(1e-12),
        )
        .unwrap();
        let rho_old =
            parse("(+ (* 1/2 (^ y 2)) (* -1/2 (^ x 2)) (* 1/3 (^ x 3) (^ y 3)))").unwrap();
        let w_exp = ScalarField::exp2(rho_old.as_poly().unwrap());
        let cert = certificate_integral(CertificateVariant::Mpp, &w_exp, &traj, PI);
        assert!(cert.value.abs() <= 1e-12, "value {}", cert.value);

        // same trajectory, strict variant, weight 1: int 0.3^4 sin^4 = 0.0081 * 3pi/8
        let cert = certificate_integral(CertificateVariant::New, &w_one, &traj, PI);
        let want = 0.0081 * 3.0 * PI / 8.0;
        assert!((cert.value - want).abs() <= 1e-9, "value {}", cert.value);
        assert!(cert.integrand_min >= -1e-15);

        // x = y = alpha sin t: integrand 8 alpha^4 sin^4, integral 3 pi alpha^4
        let alpha = 0.45f64;
        let cert = certificate_over(
            CertificateVariant::New,
            &w_one,
            |t| [alpha * t.sin(), alpha * t.sin(), t],
            PI,
        );
        let want = 3.0 * PI * alpha.powi(4);
        assert!(
            (cert.value - want).abs() <= 1e-9 * (1.0 + want),
            "value {}",
            cert.value
        );
    }

    #[test]
    fn strict_certificate_density_is_positive_off_origin() {
        let mut seed = 5u64;
        let mut rnd = || {
            seed = seed
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((seed >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        for _ in 0..200 {
            let x = rnd();
            let y = rnd();
            let d = CertificateVariant::New.density(x, y);
            assert!(d >= 0.0);
            if x.abs() > 1e-12 || y.abs() > 1e-12 {
                assert!(d > 0.0);
            }
        }
        // the weaker variant vanishes on the whole x-axis
        assert_eq!(CertificateVariant::Mpp.density(0.7, 0.0), 0.0);
    }

    // d/dt (y x' - x y') computed from the equations of motion must match the
    // certificate density up to the per-system constant.
    #[test]
    fn wronskian_identity_along_solutions() {
        let rho_old_weight = ScalarField::scale(
            2.0,
            ScalarField::exp2(
                parse("(+ (* 1/2 (^ y 2)) (* -1/2 (^ x 2)) (* 1/3 (^ x 3) (^ y 3)))")
                    .unwrap()
                    .as_poly()
                    .unwrap(),
            ),
        );
        let cases: Vec<(MechanicalSystem, CertificateVariant, ScalarField, f64)> = vec![
            // (system, variant, weight, kappa): d/dt W = kappa * weight * density
            (
                new_perturbed(),
                CertificateVariant::New,
                ScalarField::constant(1.0),
                1.0,
            ),
            (old_reduced(), CertificateVariant::Mpp, rho_old_weight, 1.0),
        ];
        for (sys, variant, weight, kappa) in cases {
            let ode = MechanicalOde::new(&sys);
            let traj = crate::dynamics::integrate_pgeodesic(
                &sys,
                [0.0; 3],
                [0.11, 0.07, 1.0],
                (0.0, 2.0),
                Tolerances::default(),
            )
            .unwrap();
            for k in 0..=64 {
                let t = 2.0 * k as f64 / 64.0;
                let (q, _v) = traj.state(t);
                let a = ode.accel(q);
                let rate = q[1] * a[0] - q[0] * a[1];
                let density = weight.eval(q) * variant.density(q[0], q[1]);
                assert!(
                    (rate - kappa * density).abs() <= 1e-8 * (1.0 + density.abs()),
                    "t={t}: rate {rate} vs {kappa} * {density}"
                );
            }
        }
    }

    #[test]
    fn certificate_identity_detection() {
        // holds with constant 1 for the second perturbed system
        let k = certificate_identity_constant(
            &new_perturbed(),
            [0.0; 3],
            1.0,
            CertificateVariant::New,
            &ScalarField::constant(1.0),
            PI,
            Tolerances::default(),
        )
        .unwrap();
        assert!(k.is_some());
        assert!((k.unwrap() - 1.0).abs() < 1e-9, "kappa {k:?}");

        // holds with constant -1 for the derived conformal reduction
        let metric = crate::geometry::ConformalMetric::new(
            Signature::parse("-++").unwrap(),
            parse("(+ (* 1/2 (^ x 2)) (* -1/2 (^ y 2)) (* (^ x 3) y) (* x (^ y 3)))").unwrap(),
        )
        .unwrap();
        let sys = crate::dynamics::mechanical_from_conformal(&metric, 0.0);
        let weight = ScalarField::scale(2.0, metric.weight_field());
        let k = certificate_identity_constant(
            &sys,
            [0.0; 3],
            std::f64::consts::SQRT_2,
            CertificateVariant::New,
            &weight,
            2.5,
            Tolerances::default(),
        )
        .unwrap();
        assert!(k.is_some());
        assert!((k.unwrap() + 1.0).abs() < 1e-7, "kappa {k:?}");

        // fails for a mismatched pairing: the first perturbed system does
        // not satisfy the strict-variant identity
        let k = certificate_identity_constant(
            &mpp_perturbed(),
            [0.0; 3],
            1.0,
            CertificateVariant::New,
            &ScalarField::constant(1.0),
            PI,
            Tolerances::default(),
        )
        .unwrap();
        assert!(k.is_none(), "kappa {k:?}");
    }

    #[test]
    fn scan_parameter_validation() {
        let sys = new_perturbed();
        let w_one = ScalarField::constant(1.0);
        let mut params = ScanParams::around(PI);
        params.radius = 0.0;
        assert!(matches!(
            nonbifurcation_scan(
                &sys,
                [0.0; 3],
                1.0,
                &params,
                CertificateVariant::New,
                &w_one,
                Tolerances::default()
            ),
            Err(Error::InvalidParameter { .. })
        ));
        let mut params = ScanParams::around(PI);
        params.grid_n = 8;
        assert!(matches!(
            nonbifurcation_scan(
                &sys,
                [0.0; 3],
                1.0,
                &params,
                CertificateVariant::New,
                &w_one,
                Tolerances::default()
            ),
            Err(Error::InvalidParameter { .. })
        ));
    }

    #[test]
    fn small_scan_of_second_system_is_all_trivial() {
        let sys = new_perturbed();
        let w_one = ScalarField::constant(1.0);
        let mut params = ScanParams::around(PI);
        params.grid_n = 16;
        let result = nonbifurcation_scan(
            &sys,
            [0.0; 3],
            1.0,
            &params,
            CertificateVariant::New,
            &w_one,
            Tolerances::default(),
        )
        .unwrap();
        let e = &result.evidence;
        assert!(e.newton_all_trivial);
        assert!(e.nontrivial_solutions.is_empty());
        assert!(
            e.min_miss_outer_ring >= e.miss_floor,
            "outer min {}",
            e.min_miss_outer_ring
        );
        assert!(e.floor_met);
        assert_eq!(e.newton_runs, 17 * 16);
        assert_eq!(result.rows.len(), 17 * 16 * 16);
        // rows are sorted by (lambda, radius, angle)
        for pair in result.rows.windows(2) {
            let key = |r: &ScanRow| (r.lambda, r.radius, r.angle);
            assert!(key(&pair[0]) <= key(&pair[1]));
        }
    }

    #[test]
    fn small_scan_of_first_system_finds_families() {
        let sys = mpp_perturbed();
        let rho_old =
            parse("(+ (* 1/2 (^ y 2)) (* -1/2 (^ x 2)) (* 1/3 (^ x 3) (^ y 3)))").unwrap();
        let weight = ScalarField::exp2(rho_old.as_poly().unwrap());
        let mut params = ScanParams::around(PI);
        params.grid_n = 16;
        let result = nonbifurcation_scan(
            &sys,
            [0.0; 3],
            1.0,
            &params,
            CertificateVariant::Mpp,
            &weight,
            Tolerances::default(),
        )
        .unwrap();
        let e = &result.evidence;
        assert!(!e.newton_all_trivial);
        assert!(!e.nontrivial_solutions.is_empty());
        // the family solutions do not contradict the (degenerate) certificate
        for sol in &e.nontrivial_solutions {
            assert!(
                sol.contradiction_margin < 1.0,
                "family solution flagged as contradiction: {sol:?}"
            );
        }
    }
}
