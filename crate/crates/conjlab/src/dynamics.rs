//! Integration of perturbed-geodesic and conformal-geodesic initial value
//! problems, energy functionals, residual checks, and the correspondence that
//! identifies p-geodesics at energy `c` with geodesics of `(c - V) g` up to
//! reparametrization.

use crate::fields::ScalarField;
use crate::geometry::{
    ConformalMetric, ConformalOde, Mat3, MechanicalOde, MechanicalSystem, System, Vec3, AXIS_TOL,
};
use crate::integrate::{dopri5, OdeOptions, OdeSolution};
use crate::{Error, Result};

/// Integrator tolerances. The defaults match the scenario pipelines.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            rtol: 1e-10,
            atol: 1e-12,
        }
    }
}

impl Tolerances {
    /// Maps a single tolerance knob onto the pair used by the controller.
    pub fn from_scalar(tol: f64) -> Self {
        Tolerances {
            rtol: (tol * 100.0).clamp(1e-13, 1e-3),
            atol: tol.clamp(1e-14, 1e-3),
        }
    }

    fn options(&self) -> OdeOptions {
        OdeOptions {
            rtol: self.rtol,
            atol: self.atol,
            ..OdeOptions::default()
        }
    }
}

/// A numerically integrated curve with dense output in `t`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    sol: OdeSolution<6>,
    pub interval: (f64, f64),
    pub tol: Tolerances,
    /// Max ODE residual of the dense output sampled between nodes, in units
    /// of the controller tolerance `atol + rtol * scale`. The integration
    /// contract keeps this below 10.
    pub max_residual: f64,
}

impl Trajectory {
    pub fn position(&self, t: f64) -> Vec3 {
        let y = self.sol.sample(t);
        [y[0], y[1], y[2]]
    }

    pub fn velocity(&self, t: f64) -> Vec3 {
        let y = self.sol.sample(t);
        [y[3], y[4], y[5]]
    }

    pub fn state(&self, t: f64) -> (Vec3, Vec3) {
        let y = self.sol.sample(t);
        ([y[0], y[1], y[2]], [y[3], y[4], y[5]])
    }

    /// Accepted integration nodes as `(t, q, v)`.
    pub fn samples(&self) -> Vec<(f64, Vec3, Vec3)> {
        self.sol
            .ts
            .iter()
            .zip(self.sol.ys.iter())
            .map(|(&t, y)| (t, [y[0], y[1], y[2]], [y[3], y[4], y[5]]))
            .collect()
    }

    pub fn solution(&self) -> &OdeSolution<6> {
        &self.sol
    }
}

fn integrate_second_order<F>(
    rhs: F,
    q0: Vec3,
    v0: Vec3,
    interval: (f64, f64),
    tol: Tolerances,
) -> Result<Trajectory>
where
    F: Fn(Vec3) -> Vec3 + Copy,
{
    let f = move |_t: f64, y: &[f64; 6]| {
        let a = rhs([y[0], y[1], y[2]]);
        [y[3], y[4], y[5], a[0], a[1], a[2]]
    };
    let sol = dopri5(
        f,
        interval,
        [q0[0], q0[1], q0[2], v0[0], v0[1], v0[2]],
        &tol.options(),
    )?;

    let worst = dense_residual_units(&sol, f, tol);
    Ok(Trajectory {
        sol,
        interval,
        tol,
        max_residual: worst,
    })
}

/// Max residual of the dense interpolant against the ODE, between nodes, in
/// units of the controller tolerance.
fn dense_residual_units<F>(sol: &OdeSolution<6>, f: F, tol: Tolerances) -> f64
where
    F: Fn(f64, &[f64; 6]) -> [f64; 6],
{
    let mut worst: f64 = 0.0;
    for (a, b) in sol.step_bounds() {
        for m in 1..4 {
            let t = a + (b - a) * m as f64 / 4.0;
            let y = sol.sample(t);
            let dy = sol.sample_derivative(t);
            let fy = f(t, &y);
            let mut scale: f64 = 0.0;
            for i in 0..6 {
                scale = scale.max(y[i].abs()).max(fy[i].abs());
            }
            let unit = tol.atol + tol.rtol * scale;
            for i in 0..6 {
                worst = worst.max((dy[i] - fy[i]).abs() / unit);
            }
        }
    }
    worst
}

fn velocity_dependent_accel_integrate<F>(
    rhs: F,
    q0: Vec3,
    v0: Vec3,
    interval: (f64, f64),
    tol: Tolerances,
) -> Result<Trajectory>
where
    F: Fn(Vec3, Vec3) -> Vec3 + Copy,
{
    let f = move |_t: f64, y: &[f64; 6]| {
        let a = rhs([y[0], y[1], y[2]], [y[3], y[4], y[5]]);
        [y[3], y[4], y[5], a[0], a[1], a[2]]
    };
    let sol = dopri5(
        f,
        interval,
        [q0[0], q0[1], q0[2], v0[0], v0[1], v0[2]],
        &tol.options(),
    )?;
    let worst = dense_residual_units(&sol, f, tol);
    Ok(Trajectory {
        sol,
        interval,
        tol,
        max_residual: worst,
    })
}

/// Integrates `q'' = -(grad V)(q)` from `(q0, v0)`.
pub fn integrate_pgeodesic(
    sys: &MechanicalSystem,
    q0: Vec3,
    v0: Vec3,
    interval: (f64, f64),
    tol: Tolerances,
) -> Result<Trajectory> {
    let ode = MechanicalOde::new(sys);
    integrate_second_order(|q| ode.accel(q), q0, v0, interval, tol)
}

/// Integrates the geodesic equation `q''^i + Gamma^i_{jk} q'^j q'^k = 0`.
pub fn integrate_geodesic(
    metric: &ConformalMetric,
    q0: Vec3,
    v0: Vec3,
    interval: (f64, f64),
    tol: Tolerances,
) -> Result<Trajectory> {
    let ode = ConformalOde::new(metric);
    velocity_dependent_accel_integrate(|q, v| ode.accel(q, v), q0, v0, interval, tol)
}

/// Composite Simpson rule with at least 2048 panels per 2*pi of parameter.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, min_panels: usize) -> f64 {
    let span = b - a;
    if span <= 0.0 {
        return 0.0;
    }
    let mut n = ((span / (2.0 * std::f64::consts::PI) * 2048.0).ceil() as usize).max(min_panels);
    if n % 2 == 1 {
        n += 1;
    }
    let h = span / n as f64;
    let mut acc = f(a) + f(b);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + k as f64 * h);
    }
    acc * h / 3.0
}

/// Energy of a curve in a conformal metric: `1/2 * int exp(2 rho) g0(v, v)`.
pub fn conformal_energy(metric: &ConformalMetric, traj: &Trajectory) -> f64 {
    let (a, b) = traj.interval;
    simpson(
        |t| {
            let (q, v) = traj.state(t);
            0.5 * metric.dot(q, v, v)
        },
        a,
        b,
        512,
    )
}

/// Conserved mechanical energy `1/2 sum eps_i v_i^2 + V(q)` at parameter `t`.
pub fn mechanical_energy(sys: &MechanicalSystem, traj: &Trajectory, t: f64) -> f64 {
    let (q, v) = traj.state(t);
    0.5 * sys.signature.dot(v, v) + sys.potential.eval(q)
}

/// An analytically sampled curve with second derivatives, for residual checks.
#[derive(Debug, Clone)]
pub struct CurveSamples {
    pub t: Vec<f64>,
    pub q: Vec<Vec3>,
    pub qdd: Vec<Vec3>,
}

impl CurveSamples {
    pub fn from_closures(
        q: impl Fn(f64) -> Vec3,
        qdd: impl Fn(f64) -> Vec3,
        interval: (f64, f64),
        n: usize,
    ) -> Self {
        let mut ts = Vec::with_capacity(n + 1);
        let mut qs = Vec::with_capacity(n + 1);
        let mut qdds = Vec::with_capacity(n + 1);
        for k in 0..=n {
            let t = interval.0 + (interval.1 - interval.0) * k as f64 / n as f64;
            ts.push(t);
            qs.push(q(t));
            qdds.push(qdd(t));
        }
        CurveSamples {
            t: ts,
            q: qs,
            qdd: qdds,
        }
    }
}

/// Sup-norm residual `max_t |q''(t) + (grad V)(q(t))|` over the samples.
pub fn residual_pgeodesic(sys: &MechanicalSystem, curve: &CurveSamples) -> f64 {
    let ode = MechanicalOde::new(sys);
    let mut worst: f64 = 0.0;
    for (q, qdd) in curve.q.iter().zip(curve.qdd.iter()) {
        let a = ode.accel(*q);
        for i in 0..3 {
            worst = worst.max((qdd[i] - a[i]).abs());
        }
    }
    worst
}

/// The mechanical system whose p-geodesics at energy `c` correspond to
/// geodesics of the conformal metric: `V = c - exp(2 rho)`.
pub fn mechanical_from_conformal(metric: &ConformalMetric, c: f64) -> MechanicalSystem {
    let potential = ScalarField::sum(vec![
        ScalarField::constant(c),
        ScalarField::scale(-1.0, metric.weight_field()),
    ]);
    MechanicalSystem::new(metric.signature, potential)
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ReparamSample {
    pub s: f64,
    pub q: Vec3,
    pub dq: Vec3,
}

/// Outcome of checking the correspondence between a p-geodesic and the
/// conformal geodesic it should become after reparametrization.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct CorrespondenceReport {
    /// Samples of the map from mechanical parameter `t` to arc parameter `s`.
    pub time_map: Vec<(f64, f64)>,
    /// Max geodesic-equation residual of the reparametrized curve.
    pub max_residual: f64,
    /// Mechanical energy found on the input trajectory.
    pub energy: f64,
    #[serde(skip)]
    pub reparametrized: Vec<ReparamSample>,
}

/// Reparametrizes a p-geodesic of `(g0, c - exp(2 rho))` by
/// `ds/dt = sqrt(2) (c - V)` and measures the geodesic-equation residual of
/// the result in the conformal metric. The `sqrt(2)` normalizes the conformal
/// speed-squared to one, which is what constant unit energy per unit interval
/// requires.
pub fn verify_correspondence(
    metric: &ConformalMetric,
    c: f64,
    ptraj: &Trajectory,
    tol: f64,
) -> Result<CorrespondenceReport> {
    let sys = mechanical_from_conformal(metric, c);
    let (t0, t1) = ptraj.interval;

    // precondition: mechanical energy equals c along the trajectory
    let mut energy_worst = 0.0f64;
    let mut energy_mean = 0.0;
    let n_check = 32;
    for k in 0..=n_check {
        let t = t0 + (t1 - t0) * k as f64 / n_check as f64;
        let e = mechanical_energy(&sys, ptraj, t);
        energy_mean += e;
        energy_worst = energy_worst.max((e - c).abs());
    }
    energy_mean /= (n_check + 1) as f64;
    if energy_worst > tol {
        return Err(Error::EnergyMismatch {
            found: energy_mean,
            expected: c,
            diff: energy_worst,
            tol,
        });
    }

    let ode = MechanicalOde::new(&sys);
    let conf = ConformalOde::new(metric);
    let speed = |t: f64| {
        let q = ptraj.position(t);
        std::f64::consts::SQRT_2 * (c - ode.potential_value(q))
    };

    // cumulative arc parameter on a fine grid (Simpson per panel pair)
    let n = 4096;
    let h = (t1 - t0) / n as f64;
    let mut s_nodes = vec![0.0f64; n + 1];
    for k in 0..n / 2 {
        let a = t0 + 2.0 * k as f64 * h;
        let s0 = s_nodes[2 * k];
        let f0 = speed(a);
        let fm = speed(a + h);
        let f1 = speed(a + 2.0 * h);
        // Simpson over [a, a+h] and [a, a+2h] using a 3-point refinement
        let fq = speed(a + 0.5 * h);
        s_nodes[2 * k + 1] = s0 + h / 6.0 * (f0 + 4.0 * fq + fm);
        s_nodes[2 * k + 2] = s0 + 2.0 * h / 6.0 * (f0 + 4.0 * fm + f1);
    }
    let time_map: Vec<(f64, f64)> = (0..=64)
        .map(|k| {
            let idx = k * n / 64;
            (t0 + idx as f64 * h, s_nodes[idx])
        })
        .collect();

    // invert the monotone map on a uniform s-grid and measure the residual
    let s_total = s_nodes[n];
    let m = 512;
    let mut reparametrized = Vec::with_capacity(m + 1);
    let mut max_residual = 0.0f64;
    for j in 0..=m {
        let s = s_total * j as f64 / m as f64;
        // locate bracketing node
        let mut lo = 0usize;
        let mut hi = n;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if s_nodes[mid] <= s {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mut t = t0 + lo as f64 * h;
        // Newton refinement of s(t) = s
        for _ in 0..8 {
            let mut slo = s_nodes[lo];
            // integrate from the node with one Simpson panel to t
            let dt = t - (t0 + lo as f64 * h);
            if dt != 0.0 {
                let a = t0 + lo as f64 * h;
                slo += dt / 6.0 * (speed(a) + 4.0 * speed(a + 0.5 * dt) + speed(t));
            }
            let err = slo - s;
            let ds = speed(t);
            if ds <= 0.0 {
                break;
            }
            t -= err / ds;
            if err.abs() < 1e-13 * (1.0 + s.abs()) {
                break;
            }
        }
        let t = t.clamp(t0, t1);

        let (q, v) = ptraj.state(t);
        let w = speed(t);
        let dq = [v[0] / w, v[1] / w, v[2] / w];
        // sigma'' = (q'' - dq * dw/dt) / w^2
        let acc = ode.accel(q);
        let grad_v = ode.gradient_fields();
        // dw/dt = -sqrt(2) * sum_i (d_i V) v^i; note grad fields are
        // index-raised, so undo the signature factor
        let eps = sys.signature.eps();
        let mut dvdt = 0.0;
        for i in 0..3 {
            dvdt += eps[i] * grad_v[i].eval(q) * v[i];
        }
        let dw = -std::f64::consts::SQRT_2 * dvdt;
        let mut sigma_dd = [0.0; 3];
        for i in 0..3 {
            sigma_dd[i] = (acc[i] - dq[i] * dw) / (w * w);
        }
        let geo = conf.accel(q, dq);
        for i in 0..3 {
            max_residual = max_residual.max((sigma_dd[i] - geo[i]).abs());
        }
        reparametrized.push(ReparamSample { s, q, dq });
    }

    Ok(CorrespondenceReport {
        time_map,
        max_residual,
        energy: energy_mean,
        reparametrized,
    })
}

/// Jacobi coefficient matrix along a base trajectory at parameter `t`.
///
/// For a conformal metric the whole trajectory must satisfy the vanishing-
/// Christoffel condition; the check samples the curve before evaluating.
pub fn jacobi_coefficients(system: &System, base: &Trajectory, t: f64) -> Result<Mat3> {
    if let System::Conformal(metric) = system {
        let ode = ConformalOde::new(metric);
        let (a, b) = base.interval;
        for k in 0..=64 {
            let tk = a + (b - a) * k as f64 / 64.0;
            let g = ode.max_abs_christoffel(base.position(tk));
            if g > AXIS_TOL {
                return Err(Error::AxisConditionViolated {
                    max_gamma: g,
                    t: tk,
                    tol: AXIS_TOL,
                });
            }
        }
    }
    crate::geometry::jacobi_coefficients_at(system, base.position(t), base.velocity(t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::parse;
    use crate::geometry::Signature;
    use std::f64::consts::{PI, SQRT_2};

    fn g0() -> Signature {
        Signature::parse("+-+").unwrap()
    }

    fn gm() -> Signature {
        Signature::parse("-++").unwrap()
    }

    fn mpp_perturbed() -> MechanicalSystem {
        MechanicalSystem::new(
            g0(),
            parse("(+ (* 1/2 (^ x 2)) (* -1/2 (^ y 2)) (* 1/3 (^ x 3) (^ y 3)))").unwrap(),
        )
    }

    fn new_perturbed() -> MechanicalSystem {
        MechanicalSystem::new(
            gm(),
            parse("(+ (* -1/2 (^ x 2)) (* 1/2 (^ y 2)) (* (^ x 3) y) (* x (^ y 3)))").unwrap(),
        )
    }

    fn new_metric() -> ConformalMetric {
        ConformalMetric::new(
            gm(),
            parse("(+ (* 1/2 (^ x 2)) (* -1/2 (^ y 2)) (* (^ x 3) y) (* x (^ y 3)))").unwrap(),
        )
        .unwrap()
    }

    fn old_metric() -> ConformalMetric {
        ConformalMetric::new(
            g0(),
            parse("(+ (* 1/2 (^ y 2)) (* -1/2 (^ x 2)) (* 1/3 (^ x 3) (^ y 3)))").unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn explicit_family_is_reproduced() {
        let traj = integrate_pgeodesic(
            &mpp_perturbed(),
            [0.0, 0.0, 0.0],
            [0.3, 0.0, 1.0],
            (0.0, 2.0 * PI),
            Tolerances::from_scalar(1e-12),
        )
        .unwrap();
        let mut worst: f64 = 0.0;
        for k in 0..=512 {
            let t = 2.0 * PI * k as f64 / 512.0;
            let q = traj.position(t);
            worst = worst
                .max((q[0] - 0.3 * t.sin()).abs())
                .max(q[1].abs())
                .max((q[2] - t).abs());
        }
        assert!(worst <= 1e-9, "sup deviation {worst}");
        assert_eq!(traj.samples().last().unwrap().0, 2.0 * PI);
    }

    #[test]
    fn axis_solution_is_exact() {
        let traj = integrate_pgeodesic(
            &mpp_perturbed(),
            [0.0, 0.0, 0.0],
            [0.0, 0.0, 1.0],
            (0.0, 2.0 * PI),
            Tolerances::default(),
        )
        .unwrap();
        for k in 0..=32 {
            let t = 2.0 * PI * k as f64 / 32.0;
            let q = traj.position(t);
            assert!(q[0].abs() < 1e-13 && q[1].abs() < 1e-13);
            assert!((q[2] - t).abs() < 1e-10);
        }
    }

    #[test]
    fn dense_output_residual_meets_contract() {
        let traj = integrate_pgeodesic(
            &mpp_perturbed(),
            [0.0, 0.0, 0.0],
            [0.3, 0.2, 1.0],
            (0.0, 2.0 * PI),
            Tolerances::from_scalar(1e-12),
        )
        .unwrap();
        assert!(
            traj.max_residual <= 10.0,
            "dense residual {} tolerance units",
            traj.max_residual
        );
    }

    #[test]
    fn mechanical_energy_is_conserved() {
        let sys = new_perturbed();
        let traj = integrate_pgeodesic(
            &sys,
            [0.0, 0.0, 0.0],
            [0.2, 0.1, 1.0],
            (0.0, 2.0 * PI),
            Tolerances::from_scalar(1e-12),
        )
        .unwrap();
        let e0 = mechanical_energy(&sys, &traj, 0.0);
        let mut drift: f64 = 0.0;
        for k in 1..=128 {
            let t = 2.0 * PI * k as f64 / 128.0;
            drift = drift.max((mechanical_energy(&sys, &traj, t) - e0).abs());
        }
        assert!(drift <= 1e-10, "energy drift {drift}");
    }

    #[test]
    fn conformal_axis_geodesic() {
        let metric = new_metric();
        let v = 1.0 / PI.sqrt();
        let traj = integrate_geodesic(
            &metric,
            [0.0, 0.0, 0.0],
            [0.0, 0.0, v],
            (0.0, 2.0 * PI),
            Tolerances::default(),
        )
        .unwrap();
        for k in 0..=64 {
            let t = 2.0 * PI * k as f64 / 64.0;
            let q = traj.position(t);
            assert!(q[0].abs() < 1e-12 && q[1].abs() < 1e-12);
            assert!((q[2] - v * t).abs() < 1e-10);
        }
        // g-speed along the geodesic is constant
        let g0 = metric.dot(traj.position(0.0), traj.velocity(0.0), traj.velocity(0.0));
        for k in 0..=64 {
            let t = 2.0 * PI * k as f64 / 64.0;
            let (q, vv) = traj.state(t);
            assert!((metric.dot(q, vv, vv) - g0).abs() < 1e-10);
        }
    }

    #[test]
    fn flat_geodesics_are_straight_lines() {
        let flat = ConformalMetric::new(gm(), ScalarField::zero()).unwrap();
        let traj = integrate_geodesic(
            &flat,
            [0.4, -0.3, 0.1],
            [0.2, 0.5, -0.1],
            (0.0, 3.0),
            Tolerances::default(),
        )
        .unwrap();
        for k in 0..=16 {
            let t = 3.0 * k as f64 / 16.0;
            let q = traj.position(t);
            assert!((q[0] - (0.4 + 0.2 * t)).abs() < 1e-11);
            assert!((q[1] - (-0.3 + 0.5 * t)).abs() < 1e-11);
            assert!((q[2] - (0.1 - 0.1 * t)).abs() < 1e-11);
        }
    }

    #[test]
    fn generic_conformal_geodesic_conserves_speed() {
        let metric = new_metric();
        let traj = integrate_geodesic(
            &metric,
            [0.1, 0.2, 0.0],
            [0.05, -0.1, 0.5],
            (0.0, 2.0 * PI),
            Tolerances::default(),
        )
        .unwrap();
        let s0 = metric.dot(traj.position(0.0), traj.velocity(0.0), traj.velocity(0.0));
        for k in 0..=64 {
            let t = 2.0 * PI * k as f64 / 64.0;
            let (q, v) = traj.state(t);
            assert!(
                (metric.dot(q, v, v) - s0).abs() < 1e-9,
                "speed drift at t={t}"
            );
        }
    }

    #[test]
    fn base_geodesic_energy_is_one() {
        let metric = new_metric();
        let traj = integrate_geodesic(
            &metric,
            [0.0, 0.0, 0.0],
            [0.0, 0.0, 1.0 / PI.sqrt()],
            (0.0, 2.0 * PI),
            Tolerances::default(),
        )
        .unwrap();
        let e = conformal_energy(&metric, &traj);
        assert!((e - 1.0).abs() < 1e-10, "energy {e}");
    }

    #[test]
    fn straight_line_energy_formula() {
        let flat = ConformalMetric::new(gm(), ScalarField::zero()).unwrap();
        let v = [0.3, 0.4, 0.5];
        let traj =
            integrate_geodesic(&flat, [0.0; 3], v, (0.0, 2.0), Tolerances::default()).unwrap();
        let want = 0.5 * flat.signature.dot(v, v) * 2.0;
        assert!((conformal_energy(&flat, &traj) - want).abs() < 1e-12);
    }

    #[test]
    fn axis_energy_of_corresponding_mechanical_system_is_zero() {
        let sys = mechanical_from_conformal(&new_metric(), 0.0);
        let traj = integrate_pgeodesic(
            &sys,
            [0.0, 0.0, 0.0],
            [0.0, 0.0, SQRT_2],
            (0.0, 2.0),
            Tolerances::default(),
        )
        .unwrap();
        for k in 0..=16 {
            let t = 2.0 * k as f64 / 16.0;
            assert!(mechanical_energy(&sys, &traj, t).abs() < 1e-12);
        }
    }

    #[test]
    fn residual_of_explicit_families() {
        let sys = mpp_perturbed();
        for (alpha, swap) in [(0.7, false), (1.3, true)] {
            let curve = CurveSamples::from_closures(
                |t| {
                    let s = alpha * t.sin();
                    if swap {
                        [0.0, s, t]
                    } else {
                        [s, 0.0, t]
                    }
                },
                |t| {
                    let s = -alpha * t.sin();
                    if swap {
                        [0.0, s, 0.0]
                    } else {
                        [s, 0.0, 0.0]
                    }
                },
                (0.0, 2.0 * PI),
                1000,
            );
            assert!(residual_pgeodesic(&sys, &curve) <= 1e-12);
        }
    }

    #[test]
    fn residual_of_free_straight_line_is_zero() {
        let free = MechanicalSystem::new(gm(), ScalarField::zero());
        let curve = CurveSamples::from_closures(
            |t| [0.1 * t, -0.2 * t, t],
            |_| [0.0, 0.0, 0.0],
            (0.0, 5.0),
            100,
        );
        assert_eq!(residual_pgeodesic(&free, &curve), 0.0);
    }

    #[test]
    fn mechanical_from_conformal_matches_weight() {
        let metric = new_metric();
        let sys = mechanical_from_conformal(&metric, 0.0);
        // c - V == exp(2 rho) pointwise, and V < c on a sample grid
        for x in [-1.0, -0.3, 0.0, 0.5, 1.0] {
            for y in [-1.0, 0.0, 0.7] {
                let q = [x, y, 0.3];
                let lhs = -sys.potential.eval(q);
                let rhs = metric.weight_field().eval(q);
                assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
                assert!(sys.potential.eval(q) < 0.0);
            }
        }

        // flat case: V is the constant -1
        let flat = ConformalMetric::new(gm(), ScalarField::zero()).unwrap();
        let sys = mechanical_from_conformal(&flat, 0.0);
        assert_eq!(sys.potential, ScalarField::constant(-1.0));
    }

    #[test]
    fn correspondence_on_flat_axis_line() {
        let flat = ConformalMetric::new(gm(), ScalarField::zero()).unwrap();
        let sys = mechanical_from_conformal(&flat, 0.0);
        let traj = integrate_pgeodesic(
            &sys,
            [0.0; 3],
            [0.0, 0.0, SQRT_2],
            (0.0, 2.0),
            Tolerances::default(),
        )
        .unwrap();
        let report = verify_correspondence(&flat, 0.0, &traj, 1e-9).unwrap();
        assert!(report.max_residual < 1e-10);
        // sigma(s) = (0, 0, s)
        for sample in &report.reparametrized {
            assert!((sample.q[2] - sample.s).abs() < 1e-9);
        }
    }

    #[test]
    fn correspondence_on_new_conformal_axis() {
        let metric = new_metric();
        let sys = mechanical_from_conformal(&metric, 0.0);
        let traj = integrate_pgeodesic(
            &sys,
            [0.0; 3],
            [0.0, 0.0, SQRT_2],
            (0.0, 2.55),
            Tolerances::default(),
        )
        .unwrap();
        let report = verify_correspondence(&metric, 0.0, &traj, 1e-9).unwrap();
        assert!(
            report.max_residual <= 1e-8,
            "residual {}",
            report.max_residual
        );

        // the conjugate parameter of the mechanical picture lands at z = pi
        let t_star = PI / SQRT_2;
        let z = traj.position(t_star)[2];
        assert!((z - PI).abs() < 1e-9);
        // and the arc parameter there is pi as well
        let (t_near, s_near) = report
            .time_map
            .iter()
            .min_by(|a, b| {
                (a.0 - t_star)
                    .abs()
                    .partial_cmp(&(b.0 - t_star).abs())
                    .unwrap()
            })
            .copied()
            .unwrap();
        assert!((s_near - SQRT_2 * t_near).abs() < 1e-9);
    }

    #[test]
    fn correspondence_off_axis() {
        // an off-axis p-geodesic with mechanical energy exactly c = 0
        // exercises the time-map inversion and the chain-rule residual
        let metric = new_metric();
        let sys = mechanical_from_conformal(&metric, 0.0);
        let q0 = [0.1, 0.2, 0.0];
        let (vx, vy) = (0.1, 0.2);
        let e2rho = metric.weight_field().eval(q0);
        let vz = (2.0 * e2rho - (-vx * vx + vy * vy)).sqrt();
        let traj =
            integrate_pgeodesic(&sys, q0, [vx, vy, vz], (0.0, 1.5), Tolerances::default()).unwrap();
        let report = verify_correspondence(&metric, 0.0, &traj, 1e-8).unwrap();
        assert!(
            report.max_residual <= 1e-8,
            "off-axis residual {}",
            report.max_residual
        );
        // time map is strictly increasing
        for pair in report.time_map.windows(2) {
            assert!(pair[1].1 > pair[0].1);
        }
    }

    #[test]
    fn correspondence_rejects_wrong_energy() {
        // axis p-geodesic with the wrong speed has mechanical energy -1/2
        let metric = new_metric();
        let sys = mechanical_from_conformal(&metric, 0.0);
        let traj = integrate_pgeodesic(
            &sys,
            [0.0; 3],
            [0.0, 0.0, 1.0],
            (0.0, 2.0),
            Tolerances::default(),
        )
        .unwrap();
        let err = verify_correspondence(&metric, 0.0, &traj, 1e-9).unwrap_err();
        assert!(matches!(err, Error::EnergyMismatch { .. }));
    }

    #[test]
    fn correspondence_on_old_conformal_axis() {
        let metric = old_metric();
        let sys = mechanical_from_conformal(&metric, 0.0);
        let traj = integrate_pgeodesic(
            &sys,
            [0.0; 3],
            [0.0, 0.0, SQRT_2],
            (0.0, 2.0 * PI),
            Tolerances::default(),
        )
        .unwrap();
        let report = verify_correspondence(&metric, 0.0, &traj, 1e-9).unwrap();
        assert!(
            report.max_residual <= 1e-8,
            "residual {}",
            report.max_residual
        );
    }

    #[test]
    fn jacobi_coefficients_along_trajectories() {
        // mechanical: Hessian on the axis
        let sys = System::Mechanical(mpp_perturbed());
        let traj = integrate_pgeodesic(
            &mpp_perturbed(),
            [0.0; 3],
            [0.0, 0.0, 1.0],
            (0.0, 2.0 * PI),
            Tolerances::default(),
        )
        .unwrap();
        let a = jacobi_coefficients(&sys, &traj, 1.0).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j && i < 2 { 1.0 } else { 0.0 };
                assert!((a[i][j] - want).abs() < 1e-12);
            }
        }

        // conformal along the axis: diag(1/pi, 1/pi, 0)
        let metric = new_metric();
        let base = integrate_geodesic(
            &metric,
            [0.0; 3],
            [0.0, 0.0, 1.0 / PI.sqrt()],
            (0.0, 2.0 * PI),
            Tolerances::default(),
        )
        .unwrap();
        let a = jacobi_coefficients(&System::Conformal(metric), &base, 2.0).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j && i < 2 { 1.0 / PI } else { 0.0 };
                assert!((a[i][j] - want).abs() < 1e-12);
            }
        }

        // off-axis conformal base violates the shortcut's precondition
        let metric = new_metric();
        let off = integrate_geodesic(
            &metric,
            [0.2, 0.1, 0.0],
            [0.0, 0.0, 0.5],
            (0.0, 1.0),
            Tolerances::default(),
        )
        .unwrap();
        let err = jacobi_coefficients(&System::Conformal(new_metric()), &off, 0.5).unwrap_err();
        assert!(matches!(err, Error::AxisConditionViolated { .. }));
    }
}
