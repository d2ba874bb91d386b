use std::collections::BTreeMap;
use std::ops::{Add, Mul};

/// Coordinate axis of R^3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    pub fn from_index(i: usize) -> Axis {
        Axis::ALL[i]
    }

    pub fn name(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        }
    }
}

/// Sparse polynomial in (x, y, z) with real coefficients, keyed by exponent
/// triple. Zero coefficients are never stored.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Poly3 {
    terms: BTreeMap<(u32, u32, u32), f64>,
}

impl Poly3 {
    pub fn zero() -> Self {
        Poly3::default()
    }

    pub fn constant(c: f64) -> Self {
        let mut p = Poly3::zero();
        p.add_term((0, 0, 0), c);
        p
    }

    pub fn variable(axis: Axis) -> Self {
        let e = match axis {
            Axis::X => (1, 0, 0),
            Axis::Y => (0, 1, 0),
            Axis::Z => (0, 0, 1),
        };
        let mut p = Poly3::zero();
        p.add_term(e, 1.0);
        p
    }

    pub fn monomial(exp: (u32, u32, u32), coeff: f64) -> Self {
        let mut p = Poly3::zero();
        p.add_term(exp, coeff);
        p
    }

    fn add_term(&mut self, exp: (u32, u32, u32), coeff: f64) {
        if coeff == 0.0 {
            return;
        }
        let entry = self.terms.entry(exp).or_insert(0.0);
        *entry += coeff;
        if *entry == 0.0 {
            self.terms.remove(&exp);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn as_constant(&self) -> Option<f64> {
        if self.terms.is_empty() {
            return Some(0.0);
        }
        if self.terms.len() == 1 {
            if let Some(c) = self.terms.get(&(0, 0, 0)) {
                return Some(*c);
            }
        }
        None
    }

    pub fn terms(&self) -> impl Iterator<Item = (&(u32, u32, u32), &f64)> {
        self.terms.iter()
    }

    pub fn eval(&self, q: [f64; 3]) -> f64 {
        let mut acc = 0.0;
        for (&(i, j, k), &c) in &self.terms {
            acc += c * q[0].powi(i as i32) * q[1].powi(j as i32) * q[2].powi(k as i32);
        }
        acc
    }

    pub fn partial(&self, axis: Axis) -> Poly3 {
        let mut out = Poly3::zero();
        for (&(i, j, k), &c) in &self.terms {
            match axis {
                Axis::X if i > 0 => out.add_term((i - 1, j, k), c * i as f64),
                Axis::Y if j > 0 => out.add_term((i, j - 1, k), c * j as f64),
                Axis::Z if k > 0 => out.add_term((i, j, k - 1), c * k as f64),
                _ => {}
            }
        }
        out
    }

    pub fn scale(&self, c: f64) -> Poly3 {
        let mut out = Poly3::zero();
        if c == 0.0 {
            return out;
        }
        for (&e, &a) in &self.terms {
            out.add_term(e, a * c);
        }
        out
    }
}

impl Add<&Poly3> for &Poly3 {
    type Output = Poly3;
    fn add(self, rhs: &Poly3) -> Poly3 {
        let mut out = self.clone();
        for (&e, &c) in &rhs.terms {
            out.add_term(e, c);
        }
        out
    }
}

impl Mul<&Poly3> for &Poly3 {
    type Output = Poly3;
    fn mul(self, rhs: &Poly3) -> Poly3 {
        let mut out = Poly3::zero();
        for (&(i1, j1, k1), &c1) in &self.terms {
            for (&(i2, j2, k2), &c2) in &rhs.terms {
                out.add_term((i1 + i2, j1 + j2, k1 + k2), c1 * c2);
            }
        }
        out
    }
}
