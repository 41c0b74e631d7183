//! Small fixed-size vector and matrix helpers over any [`Real`].

use crate::scalar::Real;

pub type V3<S> = [S; 3];
pub type M3<S> = [[S; 3]; 3];

#[inline]
pub fn lift3<S: Real>(v: [f64; 3]) -> V3<S> {
    [S::lift(v[0]), S::lift(v[1]), S::lift(v[2])]
}

#[inline]
pub fn value3<S: Real>(v: &V3<S>) -> [f64; 3] {
    [v[0].value(), v[1].value(), v[2].value()]
}

#[inline]
pub fn add<S: Real>(a: &V3<S>, b: &V3<S>) -> V3<S> {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub<S: Real>(a: &V3<S>, b: &V3<S>) -> V3<S> {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn scale<S: Real>(a: &V3<S>, k: S) -> V3<S> {
    [a[0] * k, a[1] * k, a[2] * k]
}

/// `o + t v`
#[inline]
pub fn axpy<S: Real>(o: &V3<S>, t: S, v: &V3<S>) -> V3<S> {
    [o[0] + t * v[0], o[1] + t * v[1], o[2] + t * v[2]]
}

#[inline]
pub fn dot<S: Real>(a: &V3<S>, b: &V3<S>) -> S {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross<S: Real>(a: &V3<S>, b: &V3<S>) -> V3<S> {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

#[inline]
pub fn norm_sq<S: Real>(a: &V3<S>) -> S {
    dot(a, a)
}

#[inline]
pub fn norm<S: Real>(a: &V3<S>) -> S {
    norm_sq(a).sqrt()
}

pub fn normalize<S: Real>(a: &V3<S>) -> V3<S> {
    let n = norm(a);
    scale(a, S::one() / n)
}

pub fn mat_vec<S: Real>(m: &M3<S>, v: &V3<S>) -> V3<S> {
    [dot(&m[0], v), dot(&m[1], v), dot(&m[2], v)]
}

pub fn transpose<S: Real>(m: &M3<S>) -> M3<S> {
    let mut t = *m;
    for (r, row) in m.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            t[c][r] = v;
        }
    }
    t
}

pub fn mat_mul(a: &M3<f64>, b: &M3<f64>) -> M3<f64> {
    let mut out = [[0.0; 3]; 3];
    for (r, row) in out.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = (0..3).map(|k| a[r][k] * b[k][c]).sum();
        }
    }
    out
}

pub fn trace<S: Real>(m: &M3<S>) -> S {
    m[0][0] + m[1][1] + m[2][2]
}

pub fn det<S: Real>(m: &M3<S>) -> S {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Adjugate (transpose of the cofactor matrix). `m · adj(m) = det(m) I`
/// holds even when `m` is singular.
pub fn adjugate<S: Real>(m: &M3<S>) -> M3<S> {
    let c = |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
    [
        [c(1, 2, 1, 2), -c(0, 2, 1, 2), c(0, 1, 1, 2)],
        [-c(1, 2, 0, 2), c(0, 2, 0, 2), -c(0, 1, 0, 2)],
        [c(1, 2, 0, 1), -c(0, 2, 0, 1), c(0, 1, 0, 1)],
    ]
}
