//! Semi-Riemannian structure on R^3 with a diagonal +/-1 base metric:
//! index-raised gradients, Christoffel symbols of conformally flat metrics,
//! the curvature tensor, and the coefficient matrix of the Jacobi equation.
//!
//! Curvature follows the sign convention
//! `R(X,Y)Z = -D_X D_Y Z + D_Y D_X Z + D_[X,Y] Z`,
//! i.e. the negative of the usual coordinate-formula convention. The sign is
//! pinned by the scenario identities `R(e_z,e_x)e_z = e_x` and
//! `R(e_z,e_y)e_z = e_y` on the axis of the conformal systems.

use crate::fields::{Axis, Poly3, ScalarField};
use crate::{Error, Result};

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

/// Diagonal +/-1 pattern of the flat base metric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Signature {
    eps: [f64; 3],
}

impl Signature {
    pub fn new(eps: [i8; 3]) -> Result<Self> {
        for e in eps {
            if e != 1 && e != -1 {
                return Err(Error::InvalidParameter {
                    msg: format!("signature entries must be +1 or -1, got {e}"),
                });
            }
        }
        Ok(Signature {
            eps: [eps[0] as f64, eps[1] as f64, eps[2] as f64],
        })
    }

    /// Parses a pattern like `+-+`.
    pub fn parse(text: &str) -> Result<Self> {
        let chars: Vec<char> = text.trim().chars().collect();
        if chars.len() != 3 {
            return Err(Error::InvalidParameter {
                msg: format!("signature must have three entries, got '{text}'"),
            });
        }
        let mut eps = [0i8; 3];
        for (i, c) in chars.iter().enumerate() {
            eps[i] = match c {
                '+' => 1,
                '-' => -1,
                _ => {
                    return Err(Error::InvalidParameter {
                        msg: format!("signature entries must be '+' or '-', got '{c}'"),
                    })
                }
            };
        }
        Signature::new(eps)
    }

    pub fn eps(&self) -> [f64; 3] {
        self.eps
    }

    pub fn render(&self) -> String {
        self.eps
            .iter()
            .map(|&e| if e > 0.0 { '+' } else { '-' })
            .collect()
    }

    /// Flat inner product `sum_i eps_i a_i b_i`.
    pub fn dot(&self, a: Vec3, b: Vec3) -> f64 {
        self.eps[0] * a[0] * b[0] + self.eps[1] * a[1] * b[1] + self.eps[2] * a[2] * b[2]
    }
}

/// Flat metric plus a potential: the data of a perturbed-geodesic problem.
#[derive(Debug, Clone)]
pub struct MechanicalSystem {
    pub signature: Signature,
    pub potential: ScalarField,
}

impl MechanicalSystem {
    pub fn new(signature: Signature, potential: ScalarField) -> Self {
        MechanicalSystem {
            signature,
            potential: potential.normalize(),
        }
    }
}

/// Conformally flat metric `exp(2*rho) * g0` over a diagonal base metric.
///
/// The exponent must lie in the polynomial part of the field class so that
/// `exp(2*rho)` itself stays inside the class.
#[derive(Debug, Clone)]
pub struct ConformalMetric {
    pub signature: Signature,
    exponent: Poly3,
}

impl ConformalMetric {
    pub fn new(signature: Signature, exponent: ScalarField) -> Result<Self> {
        let p = exponent.as_poly().ok_or_else(|| Error::InvalidParameter {
            msg: "conformal exponent must be polynomial".into(),
        })?;
        Ok(ConformalMetric {
            signature,
            exponent: p,
        })
    }

    pub fn exponent(&self) -> &Poly3 {
        &self.exponent
    }

    pub fn exponent_field(&self) -> ScalarField {
        ScalarField::poly(self.exponent.clone())
    }

    /// The conformal factor `exp(2*rho)` as a field.
    pub fn weight_field(&self) -> ScalarField {
        ScalarField::exp2(self.exponent.clone())
    }

    /// Metric inner product at `q`.
    pub fn dot(&self, q: Vec3, a: Vec3, b: Vec3) -> f64 {
        (2.0 * self.exponent.eval(q)).exp() * self.signature.dot(a, b)
    }
}

/// Either kind of scenario system.
#[derive(Debug, Clone)]
pub enum System {
    Mechanical(MechanicalSystem),
    Conformal(ConformalMetric),
}

/// Index-raised gradient components: `(grad f)^i = eps_i d_i f`.
pub fn metric_gradient(sig: &Signature, f: &ScalarField) -> [ScalarField; 3] {
    let eps = sig.eps();
    [
        ScalarField::scale(eps[0], f.partial(Axis::X)),
        ScalarField::scale(eps[1], f.partial(Axis::Y)),
        ScalarField::scale(eps[2], f.partial(Axis::Z)),
    ]
}

/// Cached exact fields for the right-hand side of a perturbed-geodesic
/// problem and its linearization.
#[derive(Debug, Clone)]
pub struct MechanicalOde {
    eps: [f64; 3],
    grad: [ScalarField; 3],
    hess: [[ScalarField; 3]; 3],
    potential: ScalarField,
}

impl MechanicalOde {
    pub fn new(sys: &MechanicalSystem) -> Self {
        let grad = metric_gradient(&sys.signature, &sys.potential);
        let hess =
            std::array::from_fn(|i| std::array::from_fn(|j| grad[i].partial(Axis::from_index(j))));
        MechanicalOde {
            eps: sys.signature.eps(),
            grad,
            hess,
            potential: sys.potential.clone(),
        }
    }

    pub fn eps(&self) -> [f64; 3] {
        self.eps
    }

    pub fn gradient_fields(&self) -> &[ScalarField; 3] {
        &self.grad
    }

    /// Acceleration `q'' = -(grad V)(q)`.
    pub fn accel(&self, q: Vec3) -> Vec3 {
        [
            -self.grad[0].eval(q),
            -self.grad[1].eval(q),
            -self.grad[2].eval(q),
        ]
    }

    pub fn potential_value(&self, q: Vec3) -> f64 {
        self.potential.eval(q)
    }

    /// Coefficient matrix of the linearized system `xi'' + A xi = 0`,
    /// `A_ij = eps_i d_i d_j V`.
    pub fn jacobi_matrix(&self, q: Vec3) -> Mat3 {
        std::array::from_fn(|i| std::array::from_fn(|j| self.hess[i][j].eval(q)))
    }
}

/// Cached exact fields for a conformal metric's connection and curvature.
#[derive(Debug, Clone)]
pub struct ConformalOde {
    eps: [f64; 3],
    rho1: [ScalarField; 3],
    rho2: [[ScalarField; 3]; 3],
}

impl ConformalOde {
    pub fn new(metric: &ConformalMetric) -> Self {
        let rho = metric.exponent_field();
        let rho1: [ScalarField; 3] = std::array::from_fn(|i| rho.partial(Axis::from_index(i)));
        let rho2 = std::array::from_fn(|i: usize| {
            std::array::from_fn(|j| rho1[i].partial(Axis::from_index(j)))
        });
        ConformalOde {
            eps: metric.signature.eps(),
            rho1,
            rho2,
        }
    }

    fn drho(&self, q: Vec3) -> Vec3 {
        [
            self.rho1[0].eval(q),
            self.rho1[1].eval(q),
            self.rho1[2].eval(q),
        ]
    }

    fn ddrho(&self, q: Vec3) -> Mat3 {
        std::array::from_fn(|i| std::array::from_fn(|j| self.rho2[i][j].eval(q)))
    }

    /// Christoffel symbols `Gamma[i][j][k] = Gamma^i_{jk}` at `q`:
    /// `delta^i_j d_k rho + delta^i_k d_j rho - eps_j delta_jk eps_i d_i rho`.
    pub fn christoffel(&self, q: Vec3) -> [[[f64; 3]; 3]; 3] {
        let d = self.drho(q);
        self.assemble_gamma(&d)
    }

    fn assemble_gamma(&self, d: &Vec3) -> [[[f64; 3]; 3]; 3] {
        let mut g = [[[0.0; 3]; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    let mut v = 0.0;
                    if i == j {
                        v += d[k];
                    }
                    if i == k {
                        v += d[j];
                    }
                    if j == k {
                        v -= self.eps[j] * self.eps[i] * d[i];
                    }
                    g[i][j][k] = v;
                }
            }
        }
        g
    }

    /// Partial derivatives `dGamma[m][i][j][k] = d_m Gamma^i_{jk}` at `q`.
    pub fn christoffel_partials(&self, q: Vec3) -> [[[[f64; 3]; 3]; 3]; 3] {
        let dd = self.ddrho(q);
        let mut out = [[[[0.0; 3]; 3]; 3]; 3];
        for m in 0..3 {
            // d_m of the gradient components
            let dm = [dd[0][m], dd[1][m], dd[2][m]];
            out[m] = self.assemble_gamma(&dm);
        }
        out
    }

    /// Geodesic acceleration `q''^i = -Gamma^i_{jk} v^j v^k`.
    pub fn accel(&self, q: Vec3, v: Vec3) -> Vec3 {
        let g = self.christoffel(q);
        let mut a = [0.0; 3];
        for i in 0..3 {
            let mut acc = 0.0;
            for j in 0..3 {
                for k in 0..3 {
                    acc += g[i][j][k] * v[j] * v[k];
                }
            }
            a[i] = -acc;
        }
        a
    }

    /// Curvature operator `R(X,Y)Z` in the scenario sign convention.
    pub fn curvature(&self, q: Vec3, x: Vec3, y: Vec3, z: Vec3) -> Vec3 {
        let g = self.christoffel(q);
        let dg = self.christoffel_partials(q);
        let mut out = [0.0; 3];
        for i in 0..3 {
            let mut acc = 0.0;
            for a in 0..3 {
                for b in 0..3 {
                    for c in 0..3 {
                        let xyz = x[a] * y[b] * z[c];
                        if xyz == 0.0 {
                            continue;
                        }
                        let mut r = dg[a][i][b][c] - dg[b][i][a][c];
                        for m in 0..3 {
                            r += g[i][a][m] * g[m][b][c] - g[i][b][m] * g[m][a][c];
                        }
                        acc += r * xyz;
                    }
                }
            }
            // map the coordinate-formula convention onto the scenario one
            out[i] = -acc;
        }
        out
    }

    /// Coefficient matrix `A` with `A xi = R(v, xi) v`, valid as the Jacobi
    /// coefficient matrix where the Christoffel symbols vanish.
    pub fn curvature_jacobi_matrix(&self, q: Vec3, v: Vec3) -> Mat3 {
        let mut a = [[0.0; 3]; 3];
        for j in 0..3 {
            let mut e = [0.0; 3];
            e[j] = 1.0;
            let col = self.curvature(q, v, e, v);
            for i in 0..3 {
                a[i][j] = col[i];
            }
        }
        a
    }

    pub fn max_abs_christoffel(&self, q: Vec3) -> f64 {
        let g = self.christoffel(q);
        let mut m: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    m = m.max(g[i][j][k].abs());
                }
            }
        }
        m
    }
}

/// Christoffel symbols of a conformal metric at a point.
pub fn christoffel(metric: &ConformalMetric, q: Vec3) -> [[[f64; 3]; 3]; 3] {
    ConformalOde::new(metric).christoffel(q)
}

/// Curvature operator `R(X,Y)Z` of a conformal metric at a point.
pub fn curvature(metric: &ConformalMetric, q: Vec3, x: Vec3, y: Vec3, z: Vec3) -> Vec3 {
    ConformalOde::new(metric).curvature(q, x, y, z)
}

/// Tolerance for the vanishing-Christoffel precondition of the curvature-form
/// Jacobi matrix.
pub const AXIS_TOL: f64 = 1e-12;

/// Jacobi coefficient matrix at a point of a base solution.
///
/// For a mechanical system this is the index-raised Hessian of the potential.
/// For a conformal metric the curvature form `A xi = R(v, xi) v` is used; that
/// shortcut requires the Christoffel symbols to vanish at the point.
pub fn jacobi_coefficients_at(system: &System, q: Vec3, v: Vec3) -> Result<Mat3> {
    match system {
        System::Mechanical(sys) => Ok(MechanicalOde::new(sys).jacobi_matrix(q)),
        System::Conformal(metric) => {
            let ode = ConformalOde::new(metric);
            let g = ode.max_abs_christoffel(q);
            if g > AXIS_TOL {
                return Err(Error::AxisConditionViolated {
                    max_gamma: g,
                    t: f64::NAN,
                    tol: AXIS_TOL,
                });
            }
            Ok(ode.curvature_jacobi_matrix(q, v))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::parse;

    fn g0() -> Signature {
        Signature::parse("+-+").unwrap()
    }

    fn gm() -> Signature {
        Signature::parse("-++").unwrap()
    }

    fn v_old() -> ScalarField {
        parse("(+ (* 1/2 (^ x 2)) (* -1/2 (^ y 2)) (* 1/3 (^ x 3) (^ y 3)))").unwrap()
    }

    fn rho_old() -> ScalarField {
        parse("(+ (* 1/2 (^ y 2)) (* -1/2 (^ x 2)) (* 1/3 (^ x 3) (^ y 3)))").unwrap()
    }

    fn v_new() -> ScalarField {
        parse("(+ (* -1/2 (^ x 2)) (* 1/2 (^ y 2)) (* (^ x 3) y) (* x (^ y 3)))").unwrap()
    }

    fn rho_new() -> ScalarField {
        parse("(+ (* 1/2 (^ x 2)) (* -1/2 (^ y 2)) (* (^ x 3) y) (* x (^ y 3)))").unwrap()
    }

    fn old_metric() -> ConformalMetric {
        ConformalMetric::new(g0(), rho_old()).unwrap()
    }

    fn new_metric() -> ConformalMetric {
        ConformalMetric::new(gm(), rho_new()).unwrap()
    }

    // deterministic pseudo-random stream for property-style checks
    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        ((*seed >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    }

    fn rand_vec(seed: &mut u64) -> Vec3 {
        [lcg(seed), lcg(seed), lcg(seed)]
    }

    #[test]
    fn gradient_of_first_potential() {
        let grad = metric_gradient(&g0(), &v_old());
        // (x + x^2 y^3, y - x^3 y^2, 0)
        let gx = parse("(+ x (* (^ x 2) (^ y 3)))").unwrap();
        let gy = parse("(+ y (* -1 (^ x 3) (^ y 2)))").unwrap();
        assert_eq!(grad[0], gx);
        assert_eq!(grad[1], gy);
        assert!(grad[2].is_zero());
    }

    #[test]
    fn gradient_of_second_potential() {
        let grad = metric_gradient(&gm(), &v_new());
        // (x - y^3 - 3x^2 y, y + x^3 + 3y^2 x, 0)
        let gx = parse("(+ x (* -1 (^ y 3)) (* -3 (^ x 2) y))").unwrap();
        let gy = parse("(+ y (^ x 3) (* 3 (^ y 2) x))").unwrap();
        assert_eq!(grad[0], gx);
        assert_eq!(grad[1], gy);
        assert!(grad[2].is_zero());
    }

    #[test]
    fn gradient_of_constant_vanishes() {
        let grad = metric_gradient(&gm(), &ScalarField::constant(3.5));
        for g in &grad {
            assert!(g.is_zero());
        }
    }

    #[test]
    fn christoffel_vanishes_on_axis() {
        let ode = ConformalOde::new(&new_metric());
        for z in [0.0, 0.5, 1.0, 2.0] {
            assert!(ode.max_abs_christoffel([0.0, 0.0, z]) == 0.0);
        }
    }

    #[test]
    fn christoffel_of_flat_metric_is_zero() {
        let flat = ConformalMetric::new(gm(), ScalarField::zero()).unwrap();
        let ode = ConformalOde::new(&flat);
        let mut seed = 7u64;
        for _ in 0..5 {
            assert_eq!(ode.max_abs_christoffel(rand_vec(&mut seed)), 0.0);
        }
    }

    #[test]
    fn christoffel_symmetry() {
        let ode = ConformalOde::new(&new_metric());
        let mut seed = 42u64;
        for _ in 0..10 {
            let q = rand_vec(&mut seed);
            let g = ode.christoffel(q);
            for i in 0..3 {
                for j in 0..3 {
                    for k in 0..3 {
                        assert_eq!(g[i][j][k], g[i][k][j]);
                    }
                }
            }
        }
    }

    #[test]
    fn christoffel_partials_match_central_differences() {
        let ode = ConformalOde::new(&new_metric());
        let h = 1e-5;
        let mut seed = 3u64;
        for _ in 0..5 {
            let q = rand_vec(&mut seed);
            let dg = ode.christoffel_partials(q);
            for m in 0..3 {
                let mut qp = q;
                let mut qm = q;
                qp[m] += h;
                qm[m] -= h;
                let gp = ode.christoffel(qp);
                let gm_ = ode.christoffel(qm);
                for i in 0..3 {
                    for j in 0..3 {
                        for k in 0..3 {
                            let fd = (gp[i][j][k] - gm_[i][j][k]) / (2.0 * h);
                            assert!(
                                (dg[m][i][j][k] - fd).abs() <= 1e-6 * (1.0 + fd.abs()),
                                "d_{m} Gamma^{i}_{j}{k}: {} vs {}",
                                dg[m][i][j][k],
                                fd
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn curvature_identities_on_axis() {
        let ode = ConformalOde::new(&new_metric());
        let ez = [0.0, 0.0, 1.0];
        let ex = [1.0, 0.0, 0.0];
        let ey = [0.0, 1.0, 0.0];
        for z in [0.2, 0.7, 1.0, 2.4, 3.1] {
            let q = [0.0, 0.0, z];
            let rx = ode.curvature(q, ez, ex, ez);
            let ry = ode.curvature(q, ez, ey, ez);
            for i in 0..3 {
                let want_x = if i == 0 { 1.0 } else { 0.0 };
                let want_y = if i == 1 { 1.0 } else { 0.0 };
                assert!((rx[i] - want_x).abs() < 1e-10, "R(ez,ex)ez = {rx:?}");
                assert!((ry[i] - want_y).abs() < 1e-10, "R(ez,ey)ez = {ry:?}");
            }
        }
    }

    #[test]
    fn curvature_antisymmetry_and_degeneracy() {
        let ode = ConformalOde::new(&old_metric());
        let mut seed = 99u64;
        for _ in 0..8 {
            let q = rand_vec(&mut seed);
            let x = rand_vec(&mut seed);
            let y = rand_vec(&mut seed);
            let z = rand_vec(&mut seed);
            let rxy = ode.curvature(q, x, y, z);
            let ryx = ode.curvature(q, y, x, z);
            let rxx = ode.curvature(q, x, x, z);
            for i in 0..3 {
                assert!((rxy[i] + ryx[i]).abs() <= 1e-12 * (1.0 + rxy[i].abs()));
                assert!(rxx[i].abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn first_bianchi_identity() {
        for metric in [old_metric(), new_metric()] {
            let ode = ConformalOde::new(&metric);
            let mut seed = 1234u64;
            for _ in 0..8 {
                let q = rand_vec(&mut seed);
                let x = rand_vec(&mut seed);
                let y = rand_vec(&mut seed);
                let z = rand_vec(&mut seed);
                let a = ode.curvature(q, x, y, z);
                let b = ode.curvature(q, y, z, x);
                let c = ode.curvature(q, z, x, y);
                for i in 0..3 {
                    assert!(
                        (a[i] + b[i] + c[i]).abs() <= 1e-10,
                        "bianchi defect {}",
                        a[i] + b[i] + c[i]
                    );
                }
            }
        }
    }

    #[test]
    fn mechanical_jacobi_matrix_examples() {
        // Hessian of the first potential on the axis
        let sys = MechanicalSystem::new(g0(), v_old());
        let a = MechanicalOde::new(&sys).jacobi_matrix([0.0, 0.0, 1.3]);
        let expect = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 0.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((a[i][j] - expect[i][j]).abs() < 1e-14);
            }
        }

        // zero potential
        let free = MechanicalSystem::new(gm(), ScalarField::zero());
        let a = MechanicalOde::new(&free).jacobi_matrix([0.4, -0.2, 0.9]);
        for row in a {
            for v in row {
                assert_eq!(v, 0.0);
            }
        }
    }

    #[test]
    fn conformal_jacobi_matrix_on_axis() {
        use std::f64::consts::PI;
        let system = System::Conformal(new_metric());
        let v = [0.0, 0.0, 1.0 / PI.sqrt()];
        let a = jacobi_coefficients_at(&system, [0.0, 0.0, 1.0], v).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j && i < 2 { 1.0 / PI } else { 0.0 };
                assert!((a[i][j] - want).abs() < 1e-12, "A[{i}][{j}] = {}", a[i][j]);
            }
        }
    }

    #[test]
    fn conformal_jacobi_matrix_rejects_off_axis_points() {
        let system = System::Conformal(new_metric());
        let err = jacobi_coefficients_at(&system, [0.3, 0.1, 0.0], [0.0, 0.0, 1.0]).unwrap_err();
        assert!(matches!(err, Error::AxisConditionViolated { .. }));
    }
}
