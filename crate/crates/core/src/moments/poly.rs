//! Minimal polynomial of a generator, its deflation `q`, and polynomial roots.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::chains::GeneratorMatrix;
use crate::error::{Error, Result};

/// Singular-value ratio below which Krylov vectors count as dependent.
pub const KRYLOV_TOL: f64 = 1e-9;
/// Ratios in `[KRYLOV_TOL, AMBIGUOUS_TOL)` are too close to call, and the
/// characteristic polynomial is used instead.
pub const AMBIGUOUS_TOL: f64 = 1e-6;

/// `p_min(lambda) = lambda q(lambda)` and the nonzero roots of `q`.
///
/// Coefficient lists run from the constant term upwards and are monic.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PolySpec {
    pub pmin_coeffs: Vec<f64>,
    pub q_coeffs: Vec<f64>,
    pub nonzero_roots: Vec<Complex64>,
    /// True when the characteristic polynomial stood in for the minimal one.
    pub characteristic_fallback: bool,
    /// `q` for `H = G / scale`, which is what the numerics run on.
    #[serde(skip)]
    pub(crate) scaled_q: Vec<f64>,
    #[serde(skip)]
    pub(crate) scale: f64,
}

impl PolySpec {
    pub fn degree(&self) -> usize {
        self.q_coeffs.len() - 1
    }

    /// `q(x)` by Horner's rule.
    pub fn q_at(&self, x: f64) -> f64 {
        horner(&self.q_coeffs, x)
    }
}

pub(crate) fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

fn unit_columns(cols: &[DVector<f64>]) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(cols[0].len(), cols.len());
    for (j, c) in cols.iter().enumerate() {
        let norm = c.norm();
        let c = if norm > 0.0 { c / norm } else { c.clone() };
        a.set_column(j, &c);
    }
    a
}

fn singular_ratio(a: DMatrix<f64>) -> f64 {
    let sv = a.singular_values();
    let max = sv.max();
    if max == 0.0 {
        return 0.0;
    }
    sv.min() / max
}

enum Krylov {
    Found(Vec<f64>),
    Ambiguous,
}

/// Smallest `d` with `H^0 .. H^d` dependent, and the monic annihilating
/// coefficients found by least squares.
fn krylov_minimal(h: &DMatrix<f64>) -> Result<Krylov> {
    let k = h.nrows();
    let mut powers = vec![DMatrix::<f64>::identity(k, k)];
    let mut cols: Vec<DVector<f64>> = vec![DVector::from_column_slice(powers[0].as_slice())];
    for d in 1..=k {
        let next = &powers[d - 1] * h;
        cols.push(DVector::from_column_slice(next.as_slice()));
        powers.push(next);
        let ratio = singular_ratio(unit_columns(&cols));
        if ratio >= AMBIGUOUS_TOL {
            continue;
        }
        if ratio >= KRYLOV_TOL {
            return Ok(Krylov::Ambiguous);
        }
        let mut a = DMatrix::zeros(k * k, d);
        for (j, c) in cols[..d].iter().enumerate() {
            a.set_column(j, c);
        }
        let b = -&cols[d];
        let sol = a
            .clone()
            .svd(true, true)
            .solve(&b, 1e-14)
            .map_err(|e| Error::Numeric(e.to_string()))?;
        let residual = (&a * &sol - &b).norm() / b.norm().max(1.0);
        if residual > 1e-8 {
            return Ok(Krylov::Ambiguous);
        }
        let mut coeffs: Vec<f64> = sol.iter().copied().collect();
        coeffs.push(1.0);
        return Ok(Krylov::Found(coeffs));
    }
    Ok(Krylov::Ambiguous)
}

/// Characteristic polynomial of `h` from its eigenvalues.
fn characteristic(h: &DMatrix<f64>) -> Vec<f64> {
    let eig = h.clone().complex_eigenvalues();
    let mut coeffs = vec![Complex64::new(1.0, 0.0)];
    for e in eig.iter() {
        let e = Complex64::new(e.re, e.im);
        let mut next = vec![Complex64::new(0.0, 0.0); coeffs.len() + 1];
        for (i, c) in coeffs.iter().enumerate() {
            next[i + 1] += c;
            next[i] -= c * e;
        }
        coeffs = next;
    }
    coeffs.into_iter().map(|c| c.re).collect()
}

/// Roots of a polynomial given low-to-high coefficients, via the companion
/// matrix.
pub fn poly_roots(coeffs: &[f64]) -> Result<Vec<Complex64>> {
    let mut coeffs = coeffs.to_vec();
    while coeffs.len() > 1 && *coeffs.last().unwrap() == 0.0 {
        coeffs.pop();
    }
    let n = coeffs.len() - 1;
    if n == 0 {
        return Ok(Vec::new());
    }
    let lead = coeffs[n];
    if n == 1 {
        return Ok(vec![Complex64::new(-coeffs[0] / lead, 0.0)]);
    }
    let mut c = DMatrix::zeros(n, n);
    for i in 1..n {
        c[(i, i - 1)] = 1.0;
    }
    for i in 0..n {
        c[(i, n - 1)] = -coeffs[i] / lead;
    }
    let eig = c.complex_eigenvalues();
    let roots: Vec<Complex64> = eig.iter().map(|e| Complex64::new(e.re, e.im)).collect();
    if roots.iter().any(|r| !r.re.is_finite() || !r.im.is_finite()) {
        return Err(Error::Numeric(
            "companion eigensolve produced non-finite roots".into(),
        ));
    }
    Ok(roots)
}

/// Minimal polynomial of `g`, deflated by its zero root.
pub fn minimal_and_q(g: &GeneratorMatrix) -> Result<PolySpec> {
    let scale = g.theta_min();
    if scale == 0.0 {
        return Err(Error::Inadmissible("generator is identically zero".into()));
    }
    let h = g.as_matrix() / scale;
    let (mut pmin_h, fallback) = match krylov_minimal(&h)? {
        Krylov::Found(c) => (c, false),
        Krylov::Ambiguous => (characteristic(&h), true),
    };
    let max_c = pmin_h.iter().fold(0.0f64, |a, c| a.max(c.abs()));
    if pmin_h.len() < 2 || pmin_h[0].abs() > 1e-8 * max_c {
        return Err(Error::Inadmissible(
            "zero is not a root of the minimal polynomial".into(),
        ));
    }
    pmin_h[0] = 0.0;
    let scaled_q = pmin_h[1..].to_vec();
    if scaled_q[0].abs() <= 1e-8 * max_c {
        return Err(Error::Inadmissible(
            "zero is a repeated root of the minimal polynomial".into(),
        ));
    }
    let d = pmin_h.len() - 1;
    // back to the scale of G: coefficient i picks up scale^(d - i)
    let pmin_coeffs: Vec<f64> = pmin_h
        .iter()
        .enumerate()
        .map(|(i, c)| c * scale.powi((d - i) as i32))
        .collect();
    let q_coeffs = pmin_coeffs[1..].to_vec();
    let nonzero_roots: Vec<Complex64> = poly_roots(&scaled_q)?.into_iter().map(|r| r * scale).collect();
    if let Some(r) = nonzero_roots.iter().find(|r| !(r.re < 0.0)) {
        return Err(Error::Inadmissible(format!(
            "nonzero root {r} has nonnegative real part"
        )));
    }
    Ok(PolySpec {
        pmin_coeffs,
        q_coeffs,
        nonzero_roots,
        characteristic_fallback: fallback,
        scaled_q,
        scale,
    })
}
