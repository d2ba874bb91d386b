//! Exact scalar calculus for the closed function class used by the scenario
//! systems: polynomials in (x, y, z), exponentials `exp(2p)` of a polynomial,
//! and their sums, products and scalar multiples.
//!
//! The class is closed under partial differentiation, since
//! `d/dx exp(2p) = 2 p_x exp(2p)`.

mod parse;
mod poly;

pub use parse::parse;
pub use poly::{Axis, Poly3};

use std::cmp::Ordering;
use std::fmt::Write as _;

/// Expression tree over the closed field class.
///
/// Construction goes through [`ScalarField::normalize`]d smart constructors,
/// so structural equality of two normalized trees implies pointwise equality.
#[derive(Debug, Clone, PartialEq)]
pub enum ScalarField {
    Poly(Poly3),
    /// `exp(2 * p)` for a polynomial `p`.
    Exp2(Poly3),
    Sum(Vec<ScalarField>),
    Product(Vec<ScalarField>),
    Scale(f64, Box<ScalarField>),
}

impl From<Poly3> for ScalarField {
    fn from(p: Poly3) -> Self {
        ScalarField::Poly(p)
    }
}

impl ScalarField {
    pub fn zero() -> Self {
        ScalarField::Poly(Poly3::zero())
    }

    pub fn constant(c: f64) -> Self {
        ScalarField::Poly(Poly3::constant(c))
    }

    pub fn poly(p: Poly3) -> Self {
        ScalarField::Poly(p)
    }

    pub fn exp2(p: Poly3) -> Self {
        ScalarField::Exp2(p).normalize()
    }

    pub fn sum(fs: Vec<ScalarField>) -> Self {
        ScalarField::Sum(fs).normalize()
    }

    pub fn product(fs: Vec<ScalarField>) -> Self {
        ScalarField::Product(fs).normalize()
    }

    pub fn scale(c: f64, f: ScalarField) -> Self {
        ScalarField::Scale(c, Box::new(f)).normalize()
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, ScalarField::Poly(p) if p.is_zero())
    }

    pub fn eval(&self, q: [f64; 3]) -> f64 {
        match self {
            ScalarField::Poly(p) => p.eval(q),
            ScalarField::Exp2(p) => (2.0 * p.eval(q)).exp(),
            ScalarField::Sum(fs) => fs.iter().map(|f| f.eval(q)).sum(),
            ScalarField::Product(fs) => fs.iter().map(|f| f.eval(q)).product(),
            ScalarField::Scale(c, f) => c * f.eval(q),
        }
    }

    /// Exact partial derivative; the result is again in the field class.
    pub fn partial(&self, axis: Axis) -> ScalarField {
        let raw = match self {
            ScalarField::Poly(p) => ScalarField::Poly(p.partial(axis)),
            ScalarField::Exp2(p) => ScalarField::Product(vec![
                ScalarField::Poly(p.partial(axis).scale(2.0)),
                ScalarField::Exp2(p.clone()),
            ]),
            ScalarField::Sum(fs) => ScalarField::Sum(fs.iter().map(|f| f.partial(axis)).collect()),
            ScalarField::Product(fs) => {
                let mut terms = Vec::with_capacity(fs.len());
                for i in 0..fs.len() {
                    let mut factors = fs.clone();
                    factors[i] = fs[i].partial(axis);
                    terms.push(ScalarField::Product(factors));
                }
                ScalarField::Sum(terms)
            }
            ScalarField::Scale(c, f) => ScalarField::Scale(*c, Box::new(f.partial(axis))),
        };
        raw.normalize()
    }

    /// Returns the polynomial this field reduces to, if it contains no
    /// exponential factor.
    pub fn as_poly(&self) -> Option<Poly3> {
        match self {
            ScalarField::Poly(p) => Some(p.clone()),
            ScalarField::Exp2(_) => None,
            ScalarField::Sum(fs) => {
                let mut acc = Poly3::zero();
                for f in fs {
                    acc = &acc + &f.as_poly()?;
                }
                Some(acc)
            }
            ScalarField::Product(fs) => {
                let mut acc = Poly3::constant(1.0);
                for f in fs {
                    acc = &acc * &f.as_poly()?;
                }
                Some(acc)
            }
            ScalarField::Scale(c, f) => Some(f.as_poly()?.scale(*c)),
        }
    }

    /// Canonicalization: flatten nested sums/products, merge polynomial
    /// leaves, prune zero subtrees, fold constants into scalar multiples and
    /// combine exponential factors. Sorted deterministically.
    pub fn normalize(self) -> ScalarField {
        match self {
            ScalarField::Poly(p) => ScalarField::Poly(p),
            ScalarField::Exp2(p) => {
                if p.is_zero() {
                    ScalarField::Poly(Poly3::constant(1.0))
                } else {
                    ScalarField::Exp2(p)
                }
            }
            ScalarField::Scale(c, f) => scale_normalized(c, f.normalize()),
            ScalarField::Sum(fs) => {
                let mut poly_acc = Poly3::zero();
                let mut others: Vec<ScalarField> = Vec::new();
                let mut stack: Vec<ScalarField> = fs.into_iter().map(|f| f.normalize()).collect();
                stack.reverse();
                while let Some(f) = stack.pop() {
                    match f {
                        ScalarField::Sum(inner) => {
                            for g in inner.into_iter().rev() {
                                stack.push(g);
                            }
                        }
                        ScalarField::Poly(p) => poly_acc = &poly_acc + &p,
                        other => others.push(other),
                    }
                }
                if !poly_acc.is_zero() {
                    others.push(ScalarField::Poly(poly_acc));
                }
                others.sort_by(field_cmp);
                match others.len() {
                    0 => ScalarField::zero(),
                    1 => others.pop().unwrap(),
                    _ => ScalarField::Sum(others),
                }
            }
            ScalarField::Product(fs) => {
                let mut scalar = 1.0;
                let mut poly_acc = Poly3::constant(1.0);
                let mut exp_acc = Poly3::zero();
                let mut others: Vec<ScalarField> = Vec::new();
                let mut stack: Vec<ScalarField> = fs.into_iter().map(|f| f.normalize()).collect();
                stack.reverse();
                while let Some(f) = stack.pop() {
                    match f {
                        ScalarField::Product(inner) => {
                            for g in inner.into_iter().rev() {
                                stack.push(g);
                            }
                        }
                        ScalarField::Scale(c, g) => {
                            scalar *= c;
                            stack.push(*g);
                        }
                        ScalarField::Poly(p) => {
                            if let Some(c) = p.as_constant() {
                                scalar *= c;
                            } else {
                                poly_acc = &poly_acc * &p;
                            }
                        }
                        ScalarField::Exp2(p) => exp_acc = &exp_acc + &p,
                        other => others.push(other),
                    }
                }
                if scalar == 0.0 || poly_acc.is_zero() {
                    return ScalarField::zero();
                }
                let mut factors: Vec<ScalarField> = Vec::new();
                if poly_acc.as_constant() != Some(1.0) {
                    factors.push(ScalarField::Poly(poly_acc));
                }
                if !exp_acc.is_zero() {
                    factors.push(ScalarField::Exp2(exp_acc));
                }
                others.sort_by(field_cmp);
                factors.extend(others);
                let body = match factors.len() {
                    0 => ScalarField::Poly(Poly3::constant(1.0)),
                    1 => factors.pop().unwrap(),
                    _ => ScalarField::Product(factors),
                };
                scale_normalized(scalar, body)
            }
        }
    }

    /// Renders the field in the prefix expression grammar. The output parses
    /// back to a structurally identical normalized field.
    pub fn render(&self) -> String {
        let mut s = String::new();
        render_into(self, &mut s);
        s
    }
}

fn scale_normalized(c: f64, f: ScalarField) -> ScalarField {
    if c == 0.0 {
        return ScalarField::zero();
    }
    match f {
        ScalarField::Poly(p) => ScalarField::Poly(p.scale(c)),
        ScalarField::Scale(d, g) => scale_normalized(c * d, *g),
        other if c == 1.0 => other,
        other => ScalarField::Scale(c, Box::new(other)),
    }
}

fn variant_rank(f: &ScalarField) -> u8 {
    match f {
        ScalarField::Poly(_) => 0,
        ScalarField::Exp2(_) => 1,
        ScalarField::Product(_) => 2,
        ScalarField::Scale(..) => 3,
        ScalarField::Sum(_) => 4,
    }
}

fn poly_cmp(a: &Poly3, b: &Poly3) -> Ordering {
    let mut ta = a.terms();
    let mut tb = b.terms();
    loop {
        match (ta.next(), tb.next()) {
            (None, None) => return Ordering::Equal,
            (None, Some(_)) => return Ordering::Less,
            (Some(_), None) => return Ordering::Greater,
            (Some((ea, ca)), Some((eb, cb))) => {
                let ord = ea
                    .cmp(eb)
                    .then(ca.partial_cmp(cb).unwrap_or(Ordering::Equal));
                if ord != Ordering::Equal {
                    return ord;
                }
            }
        }
    }
}

fn field_cmp(a: &ScalarField, b: &ScalarField) -> Ordering {
    let rank = variant_rank(a).cmp(&variant_rank(b));
    if rank != Ordering::Equal {
        return rank;
    }
    match (a, b) {
        (ScalarField::Poly(p), ScalarField::Poly(q)) => poly_cmp(p, q),
        (ScalarField::Exp2(p), ScalarField::Exp2(q)) => poly_cmp(p, q),
        (ScalarField::Scale(c, f), ScalarField::Scale(d, g)) => c
            .partial_cmp(d)
            .unwrap_or(Ordering::Equal)
            .then_with(|| field_cmp(f, g)),
        (ScalarField::Sum(fs), ScalarField::Sum(gs))
        | (ScalarField::Product(fs), ScalarField::Product(gs)) => {
            for (f, g) in fs.iter().zip(gs.iter()) {
                let ord = field_cmp(f, g);
                if ord != Ordering::Equal {
                    return ord;
                }
            }
            fs.len().cmp(&gs.len())
        }
        _ => Ordering::Equal,
    }
}

fn render_number(v: f64, out: &mut String) {
    if v == v.trunc() && v.abs() < 1e15 {
        let _ = write!(out, "{}", v as i64);
    } else {
        let _ = write!(out, "{}", v);
    }
}

fn render_poly(p: &Poly3, out: &mut String) {
    if p.is_zero() {
        out.push('0');
        return;
    }
    let terms: Vec<_> = p.terms().collect();
    let many = terms.len() > 1;
    if many {
        out.push_str("(+ ");
    }
    for (n, (&(i, j, k), &c)) in terms.iter().enumerate() {
        if n > 0 {
            out.push(' ');
        }
        let mut parts: Vec<String> = Vec::new();
        if c != 1.0 || (i, j, k) == (0, 0, 0) {
            let mut s = String::new();
            render_number(c, &mut s);
            parts.push(s);
        }
        for (axis, e) in [("x", i), ("y", j), ("z", k)] {
            if e == 1 {
                parts.push(axis.to_string());
            } else if e > 1 {
                parts.push(format!("(^ {} {})", axis, e));
            }
        }
        if parts.len() == 1 {
            out.push_str(&parts[0]);
        } else {
            out.push_str("(* ");
            out.push_str(&parts.join(" "));
            out.push(')');
        }
    }
    if many {
        out.push(')');
    }
}

fn render_into(f: &ScalarField, out: &mut String) {
    match f {
        ScalarField::Poly(p) => render_poly(p, out),
        ScalarField::Exp2(p) => {
            out.push_str("(exp2 ");
            render_poly(p, out);
            out.push(')');
        }
        ScalarField::Sum(fs) => {
            out.push_str("(+");
            for g in fs {
                out.push(' ');
                render_into(g, out);
            }
            out.push(')');
        }
        ScalarField::Product(fs) => {
            out.push_str("(*");
            for g in fs {
                out.push(' ');
                render_into(g, out);
            }
            out.push(')');
        }
        ScalarField::Scale(c, g) => {
            out.push_str("(* ");
            render_number(*c, out);
            out.push(' ');
            render_into(g, out);
            out.push(')');
        }
    }
}
