//! Directional derivatives, gradients and Hessians of maps written against
//! [`Real`]. Every function here is itself generic over the scalar, so the
//! results stay differentiable when the caller runs them on dual numbers.

use super::{AutodiffError, Dual, Dual2};
use crate::scalar::{track_nonfinite, Real};

/// A map `R^n -> R^m` that can be evaluated on any [`Real`] scalar.
pub trait DiffMap {
    fn call<S: Real>(&self, x: &[S]) -> Vec<S>;
}

/// A map `R^n -> R` that can be evaluated on any [`Real`] scalar.
pub trait ScalarMap {
    fn call<S: Real>(&self, x: &[S]) -> S;
}

fn guarded<R>(f: impl FnOnce() -> R, finite: impl Fn(&R) -> bool) -> Result<R, AutodiffError> {
    let (out, hit) = track_nonfinite(f);
    if let Some(primitive) = hit {
        return Err(AutodiffError::NonFinite { primitive });
    }
    if !finite(&out) {
        return Err(AutodiffError::NonFinite { primitive: "input" });
    }
    Ok(out)
}

fn check_dims(x: usize, u: usize) -> Result<(), AutodiffError> {
    if x != u {
        return Err(AutodiffError::Dimension(format!("point has {x} components, direction has {u}")));
    }
    Ok(())
}

/// `Df(x)[u]`.
pub fn jvp<S: Real, F: DiffMap + ?Sized>(f: &F, x: &[S], u: &[S]) -> Result<Vec<S>, AutodiffError> {
    check_dims(x.len(), u.len())?;
    let seeded: Vec<Dual<S>> = x.iter().zip(u).map(|(&a, &b)| Dual::new(a, b)).collect();
    let out = guarded(|| f.call(&seeded), |y: &Vec<Dual<S>>| y.iter().all(|d| d.all_finite()))?;
    Ok(out.into_iter().map(|d| d.tangent).collect())
}

/// Directional derivative of a scalar map.
pub fn directional<S: Real, F: ScalarMap + ?Sized>(f: &F, x: &[S], u: &[S]) -> Result<(S, S), AutodiffError> {
    check_dims(x.len(), u.len())?;
    let seeded: Vec<Dual<S>> = x.iter().zip(u).map(|(&a, &b)| Dual::new(a, b)).collect();
    let out = guarded(|| f.call(&seeded), |d: &Dual<S>| d.all_finite())?;
    Ok((out.value, out.tangent))
}

/// `∇f(x)`, one forward pass per canonical direction.
pub fn gradient<S: Real, F: ScalarMap + ?Sized>(f: &F, x: &[S]) -> Result<Vec<S>, AutodiffError> {
    value_and_gradient(f, x).map(|(_, g)| g)
}

pub fn value_and_gradient<S: Real, F: ScalarMap + ?Sized>(f: &F, x: &[S]) -> Result<(S, Vec<S>), AutodiffError> {
    let n = x.len();
    let mut grad = Vec::with_capacity(n);
    let mut value = S::zero();
    for k in 0..n {
        let u: Vec<S> = (0..n).map(|i| if i == k { S::one() } else { S::zero() }).collect();
        let (v, d) = directional(f, x, &u)?;
        value = v;
        grad.push(d);
    }
    if n == 0 {
        value = f.call(x);
    }
    Ok((value, grad))
}

fn second_directional<S: Real, F: ScalarMap + ?Sized>(f: &F, x: &[S], u: &[S]) -> Result<Dual2<S>, AutodiffError> {
    let seeded: Vec<Dual2<S>> = x.iter().zip(u).map(|(&a, &b)| Dual2::seeded(a, b)).collect();
    guarded(|| f.call(&seeded), |d: &Dual2<S>| d.all_finite())
}

/// Value, gradient and Hessian of `f` at `x`.
///
/// The Hessian is assembled from second directional derivatives: diagonal
/// entries from `D²f[e_a]`, off-diagonal ones by polarization
/// `(D²f[e_a + e_b] - D²f[e_a] - D²f[e_b]) / 2`.
pub fn value_gradient_hessian<S: Real, F: ScalarMap + ?Sized>(
    f: &F,
    x: &[S],
) -> Result<(S, Vec<S>, Vec<Vec<S>>), AutodiffError> {
    let n = x.len();
    let basis = |idx: &[usize]| -> Vec<S> {
        (0..n).map(|i| if idx.contains(&i) { S::one() } else { S::zero() }).collect()
    };
    let mut value = f.call(x);
    let mut grad = vec![S::zero(); n];
    let mut hess = vec![vec![S::zero(); n]; n];
    let mut diag = vec![S::zero(); n];
    for a in 0..n {
        let d = second_directional(f, x, &basis(&[a]))?;
        value = d.value;
        grad[a] = d.first;
        diag[a] = d.second;
        hess[a][a] = d.second;
    }
    let half = S::lift(0.5);
    for a in 0..n {
        for b in (a + 1)..n {
            let d = second_directional(f, x, &basis(&[a, b]))?;
            let h = (d.second - diag[a] - diag[b]) * half;
            hess[a][b] = h;
            hess[b][a] = h;
        }
    }
    Ok((value, grad, hess))
}

pub fn hessian<S: Real, F: ScalarMap + ?Sized>(f: &F, x: &[S]) -> Result<Vec<Vec<S>>, AutodiffError> {
    value_gradient_hessian(f, x).map(|(_, _, h)| h)
}
