//! Adaptive embedded Runge-Kutta 5(4) (Dormand-Prince) with dense output,
//! plus a fixed-step classical RK4 used for order verification.
//!
//! The step controller accepts a step only when the embedded error estimate
//! is a factor [`ERR_GUARD`] below the requested tolerance. The extra margin
//! keeps the *derivative* of the quartic dense-output polynomial accurate
//! enough that the ODE residual sampled between nodes stays within an order
//! of magnitude of the tolerance itself.

use crate::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Error-estimate acceptance margin relative to the tolerance.
pub const ERR_GUARD: f64 = 50.0;

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: Option<f64>,
    pub h_max: Option<f64>,
    pub max_steps: usize,
    /// Stop cleanly once any state component exceeds this bound (the
    /// solution is truncated at the last accepted node). Shooting scans use
    /// this to survive trajectories that escape in finite time.
    pub escape_norm: Option<f64>,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rtol: 1e-10,
            atol: 1e-12,
            h_init: None,
            h_max: None,
            max_steps: 1_000_000,
            escape_norm: None,
        }
    }
}

#[derive(Debug, Clone)]
struct DenseStep<const N: usize> {
    t0: f64,
    h: f64,
    cont: [[f64; N]; 5],
}

/// Result of an adaptive integration: accepted nodes plus per-step dense
/// output coefficients.
#[derive(Debug, Clone)]
pub struct OdeSolution<const N: usize> {
    pub ts: Vec<f64>,
    pub ys: Vec<[f64; N]>,
    steps: Vec<DenseStep<N>>,
    pub nfev: usize,
}

impl<const N: usize> OdeSolution<N> {
    pub fn t_start(&self) -> f64 {
        self.ts[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.ts.last().unwrap()
    }

    fn locate(&self, t: f64) -> &DenseStep<N> {
        // index of the last step with t0 <= t
        let mut lo = 0usize;
        let mut hi = self.steps.len() - 1;
        while lo < hi {
            let mid = (lo + hi).div_ceil(2);
            if self.steps[mid].t0 <= t {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        &self.steps[lo]
    }

    /// Dense-output value at `t` (clamped to the integration interval).
    pub fn sample(&self, t: f64) -> [f64; N] {
        let t = t.clamp(self.t_start(), self.t_end());
        if self.steps.is_empty() {
            return self.ys[0];
        }
        let step = self.locate(t);
        let theta = ((t - step.t0) / step.h).clamp(0.0, 1.0);
        let th1 = 1.0 - theta;
        let c = &step.cont;
        let mut out = [0.0; N];
        for i in 0..N {
            out[i] =
                c[0][i] + theta * (c[1][i] + th1 * (c[2][i] + theta * (c[3][i] + th1 * c[4][i])));
        }
        out
    }

    /// Time derivative of the dense-output polynomial at `t`.
    pub fn sample_derivative(&self, t: f64) -> [f64; N] {
        if self.steps.is_empty() {
            return [0.0; N];
        }
        let t = t.clamp(self.t_start(), self.t_end());
        let step = self.locate(t);
        let theta = ((t - step.t0) / step.h).clamp(0.0, 1.0);
        let c = &step.cont;
        let mut out = [0.0; N];
        for i in 0..N {
            // d/dtheta of c1 + th*c2 + th(1-th)c3 + th^2(1-th)c4 + th^2(1-th)^2 c5
            let d = c[1][i]
                + (1.0 - 2.0 * theta) * c[2][i]
                + (2.0 * theta - 3.0 * theta * theta) * c[3][i]
                + (2.0 * theta - 6.0 * theta * theta + 4.0 * theta * theta * theta) * c[4][i];
            out[i] = d / step.h;
        }
        out
    }

    /// Step start times (useful for residual sampling between nodes).
    pub fn step_bounds(&self) -> Vec<(f64, f64)> {
        self.steps.iter().map(|s| (s.t0, s.t0 + s.h)).collect()
    }
}

fn rms_norm<const N: usize>(err: &[f64; N], sc: &[f64; N]) -> f64 {
    let mut acc = 0.0;
    for i in 0..N {
        let e = err[i] / sc[i];
        acc += e * e;
    }
    (acc / N as f64).sqrt()
}

fn initial_step<const N: usize, F>(
    f: &F,
    t0: f64,
    y0: &[f64; N],
    k1: &[f64; N],
    span: f64,
    opts: &OdeOptions,
) -> f64
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let mut sc = [0.0; N];
    for i in 0..N {
        sc[i] = opts.atol + opts.rtol * y0[i].abs();
    }
    let d0 = rms_norm(y0, &sc);
    let d1 = rms_norm(k1, &sc);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    let h0 = h0.min(span);
    let mut y1 = [0.0; N];
    for i in 0..N {
        y1[i] = y0[i] + h0 * k1[i];
    }
    let f1 = f(t0 + h0, &y1);
    let mut diff = [0.0; N];
    for i in 0..N {
        diff[i] = f1[i] - k1[i];
    }
    let d2 = rms_norm(&diff, &sc) / h0;
    let dm = d1.max(d2);
    let h1 = if dm <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / dm).powf(0.2)
    };
    h1.min(100.0 * h0).min(span)
}

/// Integrates `y' = f(t, y)` from `t0` to `t1` (forward) with dense output.
pub fn dopri5<const N: usize, F>(
    f: F,
    interval: (f64, f64),
    y0: [f64; N],
    opts: &OdeOptions,
) -> Result<OdeSolution<N>>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let (t0, t1) = interval;
    if !t0.is_finite() || !t1.is_finite() || t1 <= t0 {
        return Err(Error::InvalidParameter {
            msg: format!("integration interval ({t0}, {t1}) must be finite and forward"),
        });
    }
    let escaped = |y: &[f64; N]| {
        opts.escape_norm
            .is_some_and(|r| y.iter().any(|v| !v.is_finite() || v.abs() > r))
    };
    if escaped(&y0) {
        return Ok(OdeSolution {
            ts: vec![t0],
            ys: vec![y0],
            steps: Vec::new(),
            nfev: 0,
        });
    }
    let span = t1 - t0;
    let mut t = t0;
    let mut y = y0;
    let mut k1 = f(t, &y);
    let mut nfev = 1;

    let mut h = opts.h_init.unwrap_or_else(|| {
        nfev += 2;
        initial_step(&f, t0, &y0, &k1, span, opts)
    });
    if let Some(hm) = opts.h_max {
        h = h.min(hm);
    }

    let mut ts = vec![t0];
    let mut ys = vec![y0];
    let mut steps: Vec<DenseStep<N>> = Vec::new();
    let mut rejected_last = false;
    let mut nsteps = 0usize;

    while t < t1 {
        nsteps += 1;
        if nsteps > opts.max_steps {
            return Err(Error::MaxStepsExceeded {
                t,
                max_steps: opts.max_steps,
            });
        }
        let mut last = false;
        if t + h >= t1 {
            h = t1 - t;
            last = true;
        }
        if h <= f64::EPSILON * t.abs().max(1.0) * 4.0 {
            return Err(Error::StepSizeUnderflow { t });
        }

        macro_rules! stage {
            ($ti:expr, $($a:expr => $k:expr),+) => {{
                let mut ytmp = [0.0; N];
                for i in 0..N {
                    let mut acc = 0.0;
                    $(acc += $a * $k[i];)+
                    ytmp[i] = y[i] + h * acc;
                }
                nfev += 1;
                f($ti, &ytmp)
            }};
        }

        let k2 = stage!(t + C2 * h, A21 => k1);
        let k3 = stage!(t + C3 * h, A31 => k1, A32 => k2);
        let k4 = stage!(t + C4 * h, A41 => k1, A42 => k2, A43 => k3);
        let k5 = stage!(t + C5 * h, A51 => k1, A52 => k2, A53 => k3, A54 => k4);
        let k6 = stage!(t + h, A61 => k1, A62 => k2, A63 => k3, A64 => k4, A65 => k5);

        let mut ynew = [0.0; N];
        for i in 0..N {
            ynew[i] =
                y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        nfev += 1;
        let k7 = f(t + h, &ynew);

        let mut err = [0.0; N];
        let mut sc = [0.0; N];
        for i in 0..N {
            err[i] =
                h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            sc[i] = opts.atol + opts.rtol * y[i].abs().max(ynew[i].abs());
        }
        let err_norm = rms_norm(&err, &sc) * ERR_GUARD;

        if err_norm.is_finite() && err_norm <= 1.0 {
            // accept: store dense coefficients
            let mut cont = [[0.0; N]; 5];
            for i in 0..N {
                let ydiff = ynew[i] - y[i];
                let bspl = h * k1[i] - ydiff;
                cont[0][i] = y[i];
                cont[1][i] = ydiff;
                cont[2][i] = bspl;
                cont[3][i] = ydiff - h * k7[i] - bspl;
                cont[4][i] = h
                    * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
            }
            steps.push(DenseStep { t0: t, h, cont });
            t = if last { t1 } else { t + h };
            y = ynew;
            k1 = k7;
            ts.push(t);
            ys.push(y);

            if escaped(&y) {
                break;
            }

            let fac = (1.0 / err_norm.max(1e-30)).powf(0.2) * 0.9;
            let fac = if rejected_last {
                fac.clamp(0.2, 1.0)
            } else {
                fac.clamp(0.2, 10.0)
            };
            h *= fac;
            if let Some(hm) = opts.h_max {
                h = h.min(hm);
            }
            rejected_last = false;
        } else {
            let fac = if err_norm.is_finite() {
                ((1.0 / err_norm).powf(0.2) * 0.9).clamp(0.1, 0.9)
            } else {
                0.1
            };
            h *= fac;
            rejected_last = true;
        }
    }

    Ok(OdeSolution {
        ts,
        ys,
        steps,
        nfev,
    })
}

/// Classical fixed-step fourth-order Runge-Kutta; returns all nodes.
pub fn rk4_fixed<const N: usize, F>(
    f: F,
    interval: (f64, f64),
    y0: [f64; N],
    n_steps: usize,
) -> Vec<(f64, [f64; N])>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let (t0, t1) = interval;
    let h = (t1 - t0) / n_steps as f64;
    let mut t = t0;
    let mut y = y0;
    let mut out = Vec::with_capacity(n_steps + 1);
    out.push((t, y));
    for step in 0..n_steps {
        let k1 = f(t, &y);
        let mut ytmp = [0.0; N];
        for i in 0..N {
            ytmp[i] = y[i] + 0.5 * h * k1[i];
        }
        let k2 = f(t + 0.5 * h, &ytmp);
        for i in 0..N {
            ytmp[i] = y[i] + 0.5 * h * k2[i];
        }
        let k3 = f(t + 0.5 * h, &ytmp);
        for i in 0..N {
            ytmp[i] = y[i] + h * k3[i];
        }
        let k4 = f(t + h, &ytmp);
        for i in 0..N {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        t = t0 + (step + 1) as f64 * h;
        out.push((t, y));
    }
    out
}
