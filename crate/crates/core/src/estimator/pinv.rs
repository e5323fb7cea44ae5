//! Moore–Penrose inverse of 2×2 matrices through a closed-form SVD.

use crate::error::{Error, Result};

/// Row-major 2×2 matrix.
pub type Mat2 = [[f64; 2]; 2];

pub const DEFAULT_PINV_RTOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PseudoInverse {
    pub inverse: Mat2,
    pub rank: usize,
    pub min_singular: f64,
    pub max_singular: f64,
}

impl PseudoInverse {
    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        mat_vec(&self.inverse, v)
    }
}

/// Singular value decomposition `m = rot(phi) · diag(s1, s2) · rot(theta)`.
///
/// `s1 >= |s2|`; `s2` carries the sign of the determinant.
#[derive(Debug, Clone, Copy)]
pub struct Svd2 {
    pub phi: f64,
    pub theta: f64,
    pub s1: f64,
    pub s2: f64,
}

pub fn svd2(m: &Mat2) -> Svd2 {
    let [[a, b], [c, d]] = *m;
    let e = 0.5 * (a + d);
    let f = 0.5 * (a - d);
    let g = 0.5 * (c + b);
    let h = 0.5 * (c - b);
    let q = e.hypot(h);
    let r = f.hypot(g);
    let a1 = g.atan2(f);
    let a2 = h.atan2(e);
    Svd2 {
        phi: 0.5 * (a2 + a1),
        theta: 0.5 * (a2 - a1),
        s1: q + r,
        s2: q - r,
    }
}

/// `[[cos x, -sin x], [sin x, cos x]]`
pub fn rotation(x: f64) -> Mat2 {
    let (s, c) = x.sin_cos();
    [[c, -s], [s, c]]
}

pub fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    [
        [
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
        ],
        [
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        ],
    ]
}

pub fn mat_vec(a: &Mat2, v: [f64; 2]) -> [f64; 2] {
    [a[0][0] * v[0] + a[0][1] * v[1], a[1][0] * v[0] + a[1][1] * v[1]]
}

pub fn transpose(a: &Mat2) -> Mat2 {
    [[a[0][0], a[1][0]], [a[0][1], a[1][1]]]
}

/// Moore–Penrose inverse with singular values `<= rel_tol * sigma_max` set to zero.
pub fn pinv2(m: &Mat2, rel_tol: f64) -> Result<PseudoInverse> {
    if m.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::invalid(format!("non-finite matrix entry in {m:?}")));
    }
    if !(rel_tol > 0.0) {
        return Err(Error::invalid(format!(
            "pseudo-inverse tolerance {rel_tol} must be positive"
        )));
    }
    let svd = svd2(m);
    let sigma_max = svd.s1;
    let sigma_min = svd.s2.abs();
    if sigma_max == 0.0 {
        return Ok(PseudoInverse {
            inverse: [[0.0; 2]; 2],
            rank: 0,
            min_singular: 0.0,
            max_singular: 0.0,
        });
    }
    let cut = rel_tol * sigma_max;
    let inv1 = 1.0 / svd.s1;
    let (inv2, rank) = if sigma_min > cut { (1.0 / svd.s2, 2) } else { (0.0, 1) };
    // m = U S V^T with U = rot(phi), V^T = rot(theta); m^+ = V S^+ U^T.
    let v = transpose(&rotation(svd.theta));
    let ut = transpose(&rotation(svd.phi));
    let scaled = [[v[0][0] * inv1, v[0][1] * inv2], [v[1][0] * inv1, v[1][1] * inv2]];
    Ok(PseudoInverse {
        inverse: mat_mul(&scaled, &ut),
        rank,
        min_singular: sigma_min,
        max_singular: sigma_max,
    })
}

/// Scalar Moore–Penrose inverse; `value` is treated as zero when it is
/// within rounding of the magnitude `scale` of the terms that produced it.
pub fn pinv_scalar(value: f64, scale: f64) -> f64 {
    if value == 0.0 || value.abs() <= 8.0 * f64::EPSILON * scale {
        0.0
    } else {
        1.0 / value
    }
}
