//! Forward-mode jets whose components live on a [`Tape`].
//!
//! A [`Jet`] carries a value, its first directional derivatives along a set
//! of input directions, and optionally mixed second derivatives for chosen
//! direction pairs. Every component is an ordinary tape node, so anything
//! computed from the derivatives (gradient norms, curvatures, depth slopes)
//! can itself be back-propagated to the parameters.

use std::sync::Arc;

use super::tape::{Tape, Tensor, Var};

#[derive(Clone, Debug)]
pub struct Jet {
    pub value: Var,
    pub first: Vec<Var>,
    /// Mixed second derivatives, aligned with `pairs`.
    pub second: Vec<Var>,
    pub pairs: Arc<[(usize, usize)]>,
}

impl Jet {
    /// A jet whose components are all constants.
    pub fn constant(tape: &mut Tape, value: Tensor, first: Vec<Tensor>, second: Vec<Tensor>, pairs: Arc<[(usize, usize)]>) -> Self {
        assert_eq!(second.len(), pairs.len());
        let value = tape.constant(value);
        let first = first.into_iter().map(|t| tape.constant(t)).collect();
        let second = second.into_iter().map(|t| tape.constant(t)).collect();
        Self { value, first, second, pairs }
    }

    /// A jet with zero derivatives along `dirs` directions.
    pub fn lift(tape: &mut Tape, value: Var, dirs: usize, pairs: Arc<[(usize, usize)]>) -> Self {
        let (r, c) = tape.shape(value);
        let zero = tape.constant(Tensor::zeros(r, c));
        Self { value, first: vec![zero; dirs], second: vec![zero; pairs.len()], pairs }
    }

    pub fn dirs(&self) -> usize {
        self.first.len()
    }

    fn map(&self, tape: &mut Tape, mut f: impl FnMut(&mut Tape, Var) -> Var) -> Jet {
        let value = f(tape, self.value);
        let first = self.first.iter().map(|&v| f(tape, v)).collect();
        let second = self.second.iter().map(|&v| f(tape, v)).collect();
        Jet { value, first, second, pairs: self.pairs.clone() }
    }

    fn zip(&self, other: &Jet, tape: &mut Tape, mut f: impl FnMut(&mut Tape, Var, Var) -> Var) -> Jet {
        assert_eq!(self.first.len(), other.first.len(), "jets along different directions");
        assert_eq!(self.pairs, other.pairs, "jets with different pair sets");
        let value = f(tape, self.value, other.value);
        let first = self.first.iter().zip(&other.first).map(|(&a, &b)| f(tape, a, b)).collect();
        let second = self.second.iter().zip(&other.second).map(|(&a, &b)| f(tape, a, b)).collect();
        Jet { value, first, second, pairs: self.pairs.clone() }
    }

    /// Restricts the jet to a subset of its first-order directions, dropping
    /// second-order terms.
    pub fn select(&self, dirs: &[usize]) -> Jet {
        Jet { value: self.value, first: dirs.iter().map(|&d| self.first[d]).collect(), second: Vec::new(), pairs: Arc::from(Vec::new()) }
    }

    /// Second derivative for the pair `(a, b)` in either order.
    pub fn mixed(&self, a: usize, b: usize) -> Option<Var> {
        self.pairs.iter().position(|&p| p == (a, b) || p == (b, a)).map(|i| self.second[i])
    }
}

/// `x · W + b` (bias only enters the value).
pub fn linear(tape: &mut Tape, x: &Jet, w: Var, b: Option<Var>) -> Jet {
    let mut out = x.map(tape, |t, v| t.matmul(v, w));
    if let Some(b) = b {
        out.value = tape.add(out.value, b);
    }
    out
}

pub fn add(tape: &mut Tape, a: &Jet, b: &Jet) -> Jet {
    a.zip(b, tape, |t, x, y| t.add(x, y))
}

pub fn sub(tape: &mut Tape, a: &Jet, b: &Jet) -> Jet {
    a.zip(b, tape, |t, x, y| t.sub(x, y))
}

pub fn scale(tape: &mut Tape, a: &Jet, k: f64) -> Jet {
    a.map(tape, |t, v| t.scale(v, k))
}

pub fn shift(tape: &mut Tape, a: &Jet, k: f64) -> Jet {
    let mut out = a.clone();
    out.value = tape.shift(a.value, k);
    out
}

/// Multiplies by a node that does not depend on the jet's directions.
pub fn mul_const(tape: &mut Tape, a: &Jet, c: Var) -> Jet {
    a.map(tape, |t, v| t.mul(v, c))
}

pub fn mul(tape: &mut Tape, a: &Jet, b: &Jet) -> Jet {
    assert_eq!(a.first.len(), b.first.len());
    assert_eq!(a.pairs, b.pairs);
    let value = tape.mul(a.value, b.value);
    let first = (0..a.first.len())
        .map(|k| {
            let x = tape.mul(a.first[k], b.value);
            let y = tape.mul(a.value, b.first[k]);
            tape.add(x, y)
        })
        .collect();
    let second = a
        .pairs
        .iter()
        .enumerate()
        .map(|(p, &(i, j))| {
            let t1 = tape.mul(a.second[p], b.value);
            let t2 = tape.mul(a.first[i], b.first[j]);
            let t3 = tape.mul(a.first[j], b.first[i]);
            let t4 = tape.mul(a.value, b.second[p]);
            let s = tape.add(t1, t2);
            let s = tape.add(s, t3);
            tape.add(s, t4)
        })
        .collect();
    Jet { value, first, second, pairs: a.pairs.clone() }
}

/// Chain rule for an elementwise map given `f(x)`, `f'(x)` and, when the jet
/// carries second-order terms, `f''(x)`.
fn chain(tape: &mut Tape, x: &Jet, f0: Var, f1: Var, f2: Option<Var>) -> Jet {
    let first: Vec<Var> = x.first.iter().map(|&d| tape.mul(f1, d)).collect();
    let second = x
        .pairs
        .iter()
        .enumerate()
        .map(|(p, &(i, j))| {
            let f2 = f2.expect("second derivative required");
            let lin = tape.mul(f1, x.second[p]);
            let di = tape.mul(x.first[i], x.first[j]);
            let quad = tape.mul(f2, di);
            tape.add(lin, quad)
        })
        .collect();
    Jet { value: f0, first, second, pairs: x.pairs.clone() }
}

fn one_minus(tape: &mut Tape, v: Var) -> Var {
    let n = tape.neg(v);
    tape.shift(n, 1.0)
}

pub fn softplus(tape: &mut Tape, x: &Jet) -> Jet {
    let f0 = tape.softplus(x.value);
    let s = tape.sigmoid(x.value);
    let f2 = if x.pairs.is_empty() {
        None
    } else {
        let om = one_minus(tape, s);
        Some(tape.mul(s, om))
    };
    chain(tape, x, f0, s, f2)
}

pub fn sigmoid(tape: &mut Tape, x: &Jet) -> Jet {
    let s = tape.sigmoid(x.value);
    let om = one_minus(tape, s);
    let f1 = tape.mul(s, om);
    let f2 = if x.pairs.is_empty() {
        None
    } else {
        let two_s = tape.scale(s, -2.0);
        let k = tape.shift(two_s, 1.0);
        Some(tape.mul(f1, k))
    };
    chain(tape, x, s, f1, f2)
}

pub fn exp(tape: &mut Tape, x: &Jet) -> Jet {
    let e = tape.exp(x.value);
    let f2 = if x.pairs.is_empty() { None } else { Some(e) };
    chain(tape, x, e, e, f2)
}

/// Laplace CDF with scale `beta`.
pub fn laplace_cdf(tape: &mut Tape, x: &Jet, beta: f64) -> Jet {
    assert!(x.pairs.is_empty(), "laplace_cdf jets are first order only");
    let f0 = tape.laplace_cdf(x.value, beta);
    // density 0.5/β · exp(-|s|/β)
    let a = tape.abs(x.value);
    let a = tape.scale(a, -1.0 / beta);
    let e = tape.exp(a);
    let f1 = tape.scale(e, 0.5 / beta);
    chain(tape, x, f0, f1, None)
}

pub fn cumsum_exclusive(tape: &mut Tape, x: &Jet) -> Jet {
    x.map(tape, |t, v| t.cumsum_exclusive(v))
}

pub fn row_sums(tape: &mut Tape, x: &Jet) -> Jet {
    x.map(tape, |t, v| t.row_sums(v))
}

pub fn reshape(tape: &mut Tape, x: &Jet, rows: usize, cols: usize) -> Jet {
    x.map(tape, |t, v| t.reshape(v, rows, cols))
}

pub fn slice_cols(tape: &mut Tape, x: &Jet, start: usize, len: usize) -> Jet {
    x.map(tape, |t, v| t.slice_cols(v, start, len))
}

pub fn concat_cols(tape: &mut Tape, parts: &[&Jet]) -> Jet {
    let head = parts[0];
    let value = tape.concat_cols(&parts.iter().map(|p| p.value).collect::<Vec<_>>());
    let first = (0..head.first.len())
        .map(|k| tape.concat_cols(&parts.iter().map(|p| p.first[k]).collect::<Vec<_>>()))
        .collect();
    let second = (0..head.second.len())
        .map(|k| tape.concat_cols(&parts.iter().map(|p| p.second[k]).collect::<Vec<_>>()))
        .collect();
    Jet { value, first, second, pairs: head.pairs.clone() }
}
