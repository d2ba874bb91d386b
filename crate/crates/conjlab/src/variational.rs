//! Linearized flow along a base trajectory (the derivative of the endpoint
//! map with respect to the initial velocity) and conjugate-point detection
//! with multiplicity.
//!
//! The flow matrix `M(t)` solves the linearization of the integrated ODE with
//! `M(a) = 0`, `M'(a) = I`; parameters where `det M` vanishes inside the open
//! interval are conjugate. Odd-order zeros are bracketed by sign changes of a
//! scale-normalized determinant; even-order zeros (the generic case here,
//! where two transverse Jacobi fields vanish together) are located through
//! interior minima of its absolute value and polished with a multiplicity-
//! aware Newton step on `det M` using `d det = tr(adj M * M')`.

use crate::dynamics::Tolerances;
use crate::geometry::{ConformalOde, Mat3, MechanicalOde, System, Vec3};
use crate::integrate::{dopri5, OdeOptions, OdeSolution};
use crate::{Error, Result};

/// Relative singular-value threshold for counting kernel dimensions.
pub const RANK_RTOL: f64 = 1e-7;

/// Normalized-determinant threshold under which a refined interior minimum is
/// accepted as an even-order zero.
pub const EVEN_ROOT_TOL: f64 = 1e-12;

const SCAN_POINTS: usize = 2048;

/// Matrix solution of the linearized equations along a base trajectory.
///
/// State layout: base `(q, v)` in components `0..6`, `M` row-major in
/// `6..15`, `M'` row-major in `15..24`.
#[derive(Debug, Clone)]
pub struct VariationalFlow {
    sol: OdeSolution<24>,
    pub interval: (f64, f64),
}

impl VariationalFlow {
    pub fn base_position(&self, t: f64) -> Vec3 {
        let y = self.sol.sample(t);
        [y[0], y[1], y[2]]
    }

    pub fn base_velocity(&self, t: f64) -> Vec3 {
        let y = self.sol.sample(t);
        [y[3], y[4], y[5]]
    }

    pub fn m(&self, t: f64) -> Mat3 {
        let y = self.sol.sample(t);
        std::array::from_fn(|r| std::array::from_fn(|c| y[6 + 3 * r + c]))
    }

    pub fn mdot(&self, t: f64) -> Mat3 {
        let y = self.sol.sample(t);
        std::array::from_fn(|r| std::array::from_fn(|c| y[15 + 3 * r + c]))
    }

    pub fn det_m(&self, t: f64) -> f64 {
        det3(&self.m(t))
    }
}

/// A parameter conjugate to the start of the base trajectory.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ConjugatePoint {
    pub t_star: f64,
    pub multiplicity: usize,
    pub position: Vec3,
}

fn det3(m: &Mat3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

fn adjugate(m: &Mat3) -> Mat3 {
    let c =
        |r1: usize, c1: usize, r2: usize, c2: usize| m[r1][c1] * m[r2][c2] - m[r1][c2] * m[r2][c1];
    [
        [c(1, 1, 2, 2), -c(0, 1, 2, 2), c(0, 1, 1, 2)],
        [-c(1, 0, 2, 2), c(0, 0, 2, 2), -c(0, 0, 1, 2)],
        [c(1, 0, 2, 1), -c(0, 0, 2, 1), c(0, 0, 1, 1)],
    ]
}

fn frobenius(m: &Mat3) -> f64 {
    let mut acc = 0.0;
    for row in m {
        for v in row {
            acc += v * v;
        }
    }
    acc.sqrt()
}

fn singular_values(m: &Mat3) -> [f64; 3] {
    let nm = nalgebra::Matrix3::from_fn(|r, c| m[r][c]);
    let svd = nm.svd(false, false);
    let mut s = [
        svd.singular_values[0],
        svd.singular_values[1],
        svd.singular_values[2],
    ];
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    s
}

fn kernel_dimension(m: &Mat3) -> usize {
    let s = singular_values(m);
    let cutoff = RANK_RTOL * s[0].max(f64::MIN_POSITIVE);
    s.iter().filter(|&&v| v < cutoff).count()
}

/// Integrates base trajectory and flow matrices together at the same
/// tolerance, with `M(a) = 0`, `M'(a) = I` exactly.
pub fn variational_flow(
    system: &System,
    q0: Vec3,
    v0: Vec3,
    interval: (f64, f64),
    tol: Tolerances,
) -> Result<VariationalFlow> {
    let mut y0 = [0.0f64; 24];
    y0[0..3].copy_from_slice(&q0);
    y0[3..6].copy_from_slice(&v0);
    for r in 0..3 {
        y0[15 + 3 * r + r] = 1.0;
    }
    let opts = OdeOptions {
        rtol: tol.rtol,
        atol: tol.atol,
        ..OdeOptions::default()
    };

    let sol = match system {
        System::Mechanical(sys) => {
            let ode = MechanicalOde::new(sys);
            let f = move |_t: f64, y: &[f64; 24]| {
                let q = [y[0], y[1], y[2]];
                let a = ode.accel(q);
                let jac = ode.jacobi_matrix(q);
                let mut dy = [0.0f64; 24];
                dy[0] = y[3];
                dy[1] = y[4];
                dy[2] = y[5];
                dy[3] = a[0];
                dy[4] = a[1];
                dy[5] = a[2];
                for r in 0..3 {
                    for c in 0..3 {
                        dy[6 + 3 * r + c] = y[15 + 3 * r + c];
                        let mut acc = 0.0;
                        for k in 0..3 {
                            acc += jac[r][k] * y[6 + 3 * k + c];
                        }
                        dy[15 + 3 * r + c] = -acc;
                    }
                }
                dy
            };
            dopri5(f, interval, y0, &opts)?
        }
        System::Conformal(metric) => {
            let ode = ConformalOde::new(metric);
            let f = move |_t: f64, y: &[f64; 24]| {
                let q = [y[0], y[1], y[2]];
                let v = [y[3], y[4], y[5]];
                let gamma = ode.christoffel(q);
                let dgamma = ode.christoffel_partials(q);
                let a = {
                    let mut a = [0.0; 3];
                    for i in 0..3 {
                        let mut acc = 0.0;
                        for j in 0..3 {
                            for k in 0..3 {
                                acc += gamma[i][j][k] * v[j] * v[k];
                            }
                        }
                        a[i] = -acc;
                    }
                    a
                };
                // b[i][m] = d_m Gamma^i_{jk} v^j v^k ; d[i][k] = Gamma^i_{jk} v^j
                let mut b = [[0.0; 3]; 3];
                let mut d = [[0.0; 3]; 3];
                for i in 0..3 {
                    for m in 0..3 {
                        let mut acc = 0.0;
                        for j in 0..3 {
                            for k in 0..3 {
                                acc += dgamma[m][i][j][k] * v[j] * v[k];
                            }
                        }
                        b[i][m] = acc;
                    }
                    for k in 0..3 {
                        let mut acc = 0.0;
                        for j in 0..3 {
                            acc += gamma[i][j][k] * v[j];
                        }
                        d[i][k] = acc;
                    }
                }
                let mut dy = [0.0f64; 24];
                dy[0] = y[3];
                dy[1] = y[4];
                dy[2] = y[5];
                dy[3] = a[0];
                dy[4] = a[1];
                dy[5] = a[2];
                for r in 0..3 {
                    for c in 0..3 {
                        dy[6 + 3 * r + c] = y[15 + 3 * r + c];
                        let mut acc = 0.0;
                        for m in 0..3 {
                            acc += b[r][m] * y[6 + 3 * m + c];
                            acc += 2.0 * d[r][m] * y[15 + 3 * m + c];
                        }
                        dy[15 + 3 * r + c] = -acc;
                    }
                }
                dy
            };
            dopri5(f, interval, y0, &opts)?
        }
    };

    Ok(VariationalFlow { sol, interval })
}

fn normalized_det(flow: &VariationalFlow, t: f64) -> f64 {
    let m = flow.m(t);
    let n = frobenius(&m).max(f64::MIN_POSITIVE);
    det3(&m) / (n * n * n)
}

fn bisect_root(flow: &VariationalFlow, mut lo: f64, mut hi: f64) -> f64 {
    let mut flo = normalized_det(flow, lo);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if hi - lo < 1e-12 * mid.abs().max(1.0) {
            return mid;
        }
        let fm = normalized_det(flow, mid);
        if fm == 0.0 {
            return mid;
        }
        if (flo < 0.0) == (fm < 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Golden-section minimization of |normalized det| over [lo, hi]; returns the
/// refined argmin and the signed normalized det there.
fn refine_minimum(flow: &VariationalFlow, mut lo: f64, mut hi: f64) -> (f64, f64) {
    const PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = hi - PHI * (hi - lo);
    let mut x2 = lo + PHI * (hi - lo);
    let mut f1 = normalized_det(flow, x1).abs();
    let mut f2 = normalized_det(flow, x2).abs();
    for _ in 0..64 {
        if hi - lo < 1e-11 {
            break;
        }
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - PHI * (hi - lo);
            f1 = normalized_det(flow, x1).abs();
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + PHI * (hi - lo);
            f2 = normalized_det(flow, x2).abs();
        }
    }
    let t = 0.5 * (lo + hi);
    (t, normalized_det(flow, t))
}

/// Multiplicity-aware Newton polish of a root of `det M` of order `mult`.
fn polish_root(flow: &VariationalFlow, mut t: f64, mult: usize, max_step: f64) -> f64 {
    for _ in 0..12 {
        let m = flow.m(t);
        let md = flow.mdot(t);
        let d = det3(&m);
        let adj = adjugate(&m);
        let mut dd = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                dd += adj[i][j] * md[j][i];
            }
        }
        if dd == 0.0 || !dd.is_finite() {
            break;
        }
        let step = -(mult as f64) * d / dd;
        let step = step.clamp(-max_step, max_step);
        t += step;
        if step.abs() < 1e-13 * t.abs().max(1.0) {
            break;
        }
    }
    t
}

/// Detects all conjugate parameters strictly inside the flow's interval.
pub fn conjugate_points_from_flow(flow: &VariationalFlow) -> Result<Vec<ConjugatePoint>> {
    let (a, b) = flow.interval;
    let n = SCAN_POINTS;
    let dt = (b - a) / n as f64;
    let ts: Vec<f64> = (1..n).map(|i| a + i as f64 * dt).collect();
    let ss: Vec<f64> = ts.iter().map(|&t| normalized_det(flow, t)).collect();

    // (root, found_by_even_minimum)
    let mut roots: Vec<(f64, bool)> = Vec::new();
    let mut sign_cells: Vec<usize> = Vec::new();

    for i in 0..ts.len() - 1 {
        if ss[i] == 0.0 {
            roots.push((polish_root(flow, ts[i], 1, dt), false));
            sign_cells.push(i);
        } else if (ss[i] < 0.0) != (ss[i + 1] < 0.0) {
            let t = bisect_root(flow, ts[i], ts[i + 1]);
            roots.push((polish_root(flow, t, 1, dt), false));
            sign_cells.push(i);
        }
    }

    // interior minima of |s|: candidates for even-order zeros
    for i in 1..ts.len() - 1 {
        if sign_cells
            .iter()
            .any(|&c| c + 1 == i || c == i || c == i + 1)
        {
            continue;
        }
        if ss[i].abs() <= ss[i - 1].abs() && ss[i].abs() <= ss[i + 1].abs() {
            let (tmin, smin) = refine_minimum(flow, ts[i - 1], ts[i + 1]);
            if smin.abs() < EVEN_ROOT_TOL && smin >= -EVEN_ROOT_TOL {
                let t = polish_root(flow, tmin, 2, dt);
                roots.push((t, true));
            } else if smin < -EVEN_ROOT_TOL {
                // hidden pair of sign changes inside one grid cell: one
                // refinement pass at 64x the scan resolution
                let mut resolved = false;
                let fine = 128usize;
                let lo = ts[i - 1];
                let hi = ts[i + 1];
                let fs: Vec<f64> = (0..=fine)
                    .map(|k| normalized_det(flow, lo + (hi - lo) * k as f64 / fine as f64))
                    .collect();
                for k in 0..fine {
                    if (fs[k] < 0.0) != (fs[k + 1] < 0.0) {
                        let tl = lo + (hi - lo) * k as f64 / fine as f64;
                        let tr = lo + (hi - lo) * (k + 1) as f64 / fine as f64;
                        let t = bisect_root(flow, tl, tr);
                        roots.push((polish_root(flow, t, 1, dt), false));
                        resolved = true;
                    }
                }
                if !resolved {
                    return Err(Error::GridTooCoarse { t: tmin });
                }
            }
        }
    }

    // deduplicate, keep strictly interior roots, attach multiplicities
    roots.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    roots.dedup_by(|x, y| (x.0 - y.0).abs() < 1e-8 * (1.0 + y.0.abs()));
    let margin = 1e-9 * (b - a).max(1.0);
    let mut out = Vec::new();
    for (t, from_even_min) in roots {
        if t <= a + margin || t >= b - margin {
            continue;
        }
        let mult = kernel_dimension(&flow.m(t));
        if from_even_min && mult < 2 {
            // the determinant nearly vanishes without the matching kernel:
            // an unresolved cluster of distinct roots inside one cell
            return Err(Error::GridTooCoarse { t });
        }
        if mult == 0 {
            continue;
        }
        out.push(ConjugatePoint {
            t_star: t,
            multiplicity: mult,
            position: flow.base_position(t),
        });
    }
    Ok(out)
}

/// Integrates the flow and detects conjugate parameters in one call.
pub fn conjugate_points(
    system: &System,
    q0: Vec3,
    v0: Vec3,
    interval: (f64, f64),
    tol: Tolerances,
) -> Result<Vec<ConjugatePoint>> {
    let flow = variational_flow(system, q0, v0, interval, tol)?;
    conjugate_points_from_flow(&flow)
}
