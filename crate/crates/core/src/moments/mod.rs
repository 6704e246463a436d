//! Exact moments of the limiting occupation law.
//!
//! Everything is driven by the kernels `K_j = (I - G/j)^{-1}`, evaluated as
//! `p_j(G) / q(j)` from the minimal polynomial, with `K_0` the matrix whose
//! rows are the stationary law.

mod poly;

pub use poly::{minimal_and_q, poly_roots, PolySpec, AMBIGUOUS_TOL, KRYLOV_TOL};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::chains::{stationary_distribution, GeneratorMatrix, StochasticKernel};
use crate::error::{Error, Result};
use crate::numeric::{multinomial, neumaier_sum};
use poly::horner;

/// Allowed disagreement between the polynomial kernel and a direct inverse.
pub const KERNEL_CHECK_TOL: f64 = 1e-9;

/// Rising factorial `a (a+1) .. (a+n-1)`, as a plain product.
pub fn pochhammer(a: Complex64, n: u32) -> Complex64 {
    (0..n).fold(Complex64::new(1.0, 0.0), |acc, j| acc * (a + j as f64))
}

pub fn pochhammer_real(a: f64, n: u32) -> f64 {
    (0..n).fold(1.0, |acc, j| acc * (a + j as f64))
}

/// Dirichlet moment `prod (theta mu_j)_{m_j} / (theta)_N`.
pub fn dirichlet_moment(theta: f64, mu: &[f64], m: &[usize]) -> f64 {
    let n: usize = m.iter().sum();
    let num: f64 = mu
        .iter()
        .zip(m)
        .map(|(&w, &mj)| pochhammer_real(theta * w, mj as u32))
        .product();
    num / pochhammer_real(theta, n as u32)
}

/// Every multi-index of length `k` with `|m| = order`, in lexicographic order
/// with the first coordinate largest first.
pub fn multi_indices(k: usize, order: usize) -> Vec<Vec<usize>> {
    fn rec(k: usize, left: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if prefix.len() + 1 == k {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for v in (0..=left).rev() {
            prefix.push(v);
            rec(k, left - v, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if k > 0 {
        rec(k, order, &mut Vec::with_capacity(k), &mut out);
    }
    out
}

/// Precomputed state for moment queries on one generator.
///
/// Requires the generator to be irreducible, so that the stationary law is
/// unique and zero is a simple root of the minimal polynomial.
#[derive(Clone, Debug)]
pub struct MomentEngine {
    g: GeneratorMatrix,
    poly: PolySpec,
    mu: Vec<f64>,
}

impl MomentEngine {
    pub fn new(g: &GeneratorMatrix) -> Result<Self> {
        if !g.is_irreducible() {
            return Err(Error::Inadmissible(
                "generator is reducible; the occupation law is not determined by G alone".into(),
            ));
        }
        let poly = minimal_and_q(g)?;
        let mu = stationary_distribution(g)?.unique()?.to_vec();
        Ok(Self {
            g: g.clone(),
            poly,
            mu,
        })
    }

    pub fn generator(&self) -> &GeneratorMatrix {
        &self.g
    }

    pub fn poly(&self) -> &PolySpec {
        &self.poly
    }

    pub fn stationary(&self) -> &[f64] {
        &self.mu
    }

    pub fn dim(&self) -> usize {
        self.g.dim()
    }

    /// `p_j(G) / q(j)` from the coefficient formula, checked against a
    /// direct inverse (or the stationary rows when `j = 0`).
    pub fn kernel_matrix(&self, j: u32) -> Result<DMatrix<f64>> {
        let s = self.poly.scale;
        let h = self.g.as_matrix() / s;
        let t = j as f64 / s;
        let a = &self.poly.scaled_q;
        let n = a.len() - 1;
        // b_k = sum_{l >= k} a_l t^(l-k), then sum_k b_k H^k by Horner
        let mut b = vec![0.0; n + 1];
        b[n] = a[n];
        for k in (0..n).rev() {
            b[k] = a[k] + t * b[k + 1];
        }
        let k = self.dim();
        let id = DMatrix::<f64>::identity(k, k);
        let mut p = &id * b[n];
        for bk in b[..n].iter().rev() {
            p = &p * &h + &id * *bk;
        }
        let qj = horner(a, t);
        if qj == 0.0 || !qj.is_finite() {
            return Err(Error::Numeric(format!("q({j}) vanished")));
        }
        let kernel = p / qj;

        let reference = if j == 0 {
            DMatrix::from_fn(k, k, |_, c| self.mu[c])
        } else {
            (&id - &h / t)
                .try_inverse()
                .ok_or_else(|| Error::Singular(format!("I - G/{j} is not invertible")))?
        };
        let err = (&kernel - &reference).amax();
        if !(err <= KERNEL_CHECK_TOL) {
            return Err(Error::Numeric(format!(
                "kernel {j} from the minimal polynomial differs from the direct value by {err:e}"
            )));
        }
        Ok(kernel)
    }

    /// The kernel as a stochastic matrix, with rounding residue clipped.
    pub fn moment_kernel(&self, j: u32) -> Result<StochasticKernel> {
        let m = self
            .kernel_matrix(j)?
            .map(|v| if v < 0.0 && v > -1e-12 { 0.0 } else { v });
        StochasticKernel::from_matrix(m)
    }

    fn kernels(&self, count: usize) -> Result<Vec<DMatrix<f64>>> {
        (0..count as u32).map(|j| self.kernel_matrix(j)).collect()
    }

    fn check_query(&self, m: &[usize]) -> Result<usize> {
        if m.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: m.len(),
            });
        }
        let n: usize = m.iter().sum();
        if n == 0 {
            return Err(Error::InvalidInput("moment order must be at least 1".into()));
        }
        Ok(n)
    }

    /// `E[prod nu_i^{m_i}]`.
    pub fn joint_moment(&self, m: &[usize]) -> Result<f64> {
        self.joint_moment_from(m, 0)
    }

    /// Same sum with the fixed starting index `sigma0` in place of the first
    /// state. The value does not depend on it because `K_0` has equal rows.
    pub fn joint_moment_from(&self, m: &[usize], sigma0: usize) -> Result<f64> {
        let n = self.check_query(m)?;
        if sigma0 >= self.dim() {
            return Err(Error::StateOutOfRange {
                state: sigma0,
                dim: self.dim(),
            });
        }
        let kernels = self.kernels(n)?;
        Ok(permutation_sum_dp(&kernels, m, sigma0) / multinomial(m))
    }

    /// Roots in `j` of `[p_j(G)]_ii`.
    pub fn marginal_roots(&self, i: usize) -> Result<Vec<Complex64>> {
        if i >= self.dim() {
            return Err(Error::StateOutOfRange {
                state: i,
                dim: self.dim(),
            });
        }
        let s = self.poly.scale;
        let h = self.g.as_matrix() / s;
        let a = &self.poly.scaled_q;
        let n = a.len() - 1;
        // coefficient of t^r is sum_k [H^k]_ii a_{k+r}
        let k = self.dim();
        let mut diag = Vec::with_capacity(n + 1);
        let mut power = DMatrix::<f64>::identity(k, k);
        for _ in 0..=n {
            diag.push(power[(i, i)]);
            power = &power * &h;
        }
        let coeffs: Vec<f64> = (0..=n)
            .map(|r| neumaier_sum((0..=n - r).map(|kk| diag[kk] * a[kk + r])))
            .collect();
        Ok(poly_roots(&coeffs)?.into_iter().map(|r| r * s).collect())
    }

    /// `E[nu_i^N] = prod_l (-gamma_l)_N / (-lambda_l)_N`.
    pub fn marginal_moment(&self, i: usize, order: u32) -> Result<f64> {
        if order == 0 {
            return Err(Error::InvalidInput("moment order must be at least 1".into()));
        }
        let gammas = self.marginal_roots(i)?;
        let mut value = Complex64::new(1.0, 0.0);
        for g in &gammas {
            value *= pochhammer(-*g, order);
        }
        for l in &self.poly.nonzero_roots {
            value /= pochhammer(-*l, order);
        }
        if !value.re.is_finite() || value.im.abs() > 1e-9 * value.re.abs().max(1.0) {
            return Err(Error::Numeric(format!(
                "marginal moment has imaginary part {:e}",
                value.im
            )));
        }
        Ok(value.re)
    }

    /// `mu_i prod_{j=1}^{N-1} [K_j]_ii`, the probability the dual chain
    /// stays at `i` for `N` steps.
    pub fn duality_moment(&self, i: usize, order: u32) -> Result<f64> {
        if i >= self.dim() {
            return Err(Error::StateOutOfRange {
                state: i,
                dim: self.dim(),
            });
        }
        let mut v = self.mu[i];
        for j in 1..order {
            v *= self.kernel_matrix(j)?[(i, i)];
        }
        Ok(v)
    }

    /// All moments with `|m| <= max_order`, starting with the empty index.
    pub fn moment_table(&self, max_order: usize) -> Result<Vec<(Vec<usize>, f64)>> {
        let kernels = self.kernels(max_order.max(1))?;
        let mut rows = vec![(vec![0; self.dim()], 1.0)];
        for order in 1..=max_order {
            for m in multi_indices(self.dim(), order) {
                let v = permutation_sum_dp(&kernels, &m, 0) / multinomial(&m);
                rows.push((m, v));
            }
        }
        Ok(rows)
    }
}

/// `sum over distinct arrangements sigma of m` of
/// `prod_{j=0}^{N-1} [K_j]_{sigma_j sigma_{j+1}}` with `sigma_0` fixed.
///
/// Dynamic programme over (counts used so far, last state), so the cost is
/// `O(k^2 N prod(m_i + 1))` instead of factorial.
pub(crate) fn permutation_sum_dp(kernels: &[DMatrix<f64>], m: &[usize], sigma0: usize) -> f64 {
    let k = m.len();
    let n: usize = m.iter().sum();
    // mixed-radix encoding of the used-count vector
    let mut stride = vec![1usize; k];
    for i in 1..k {
        stride[i] = stride[i - 1] * (m[i - 1] + 1);
    }
    let size = stride[k - 1] * (m[k - 1] + 1);
    let mut f = vec![0.0f64; size * k];
    let k0 = &kernels[0];
    for s in 0..k {
        if m[s] > 0 {
            f[stride[s] * k + s] = k0[(sigma0, s)];
        }
    }
    // codes in increasing order visit every count vector after its predecessors
    let mut counts = vec![0usize; k];
    for code in 0..size {
        let used: usize = counts.iter().sum();
        if used >= 1 && used < n {
            let kj = &kernels[used];
            for s in 0..k {
                let v = f[code * k + s];
                if v == 0.0 {
                    continue;
                }
                for t in 0..k {
                    if counts[t] < m[t] {
                        f[(code + stride[t]) * k + t] += v * kj[(s, t)];
                    }
                }
            }
        }
        // advance the mixed-radix counter
        for i in 0..k {
            if counts[i] < m[i] {
                counts[i] += 1;
                break;
            }
            counts[i] = 0;
        }
    }
    neumaier_sum((0..k).map(|s| f[(size - 1) * k + s]))
}

/// Moment engine on `g`; one-shot form of [`MomentEngine::joint_moment`].
pub fn joint_moment(g: &GeneratorMatrix, m: &[usize]) -> Result<f64> {
    MomentEngine::new(g)?.joint_moment(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn gen(rows: &[&[f64]]) -> GeneratorMatrix {
        GeneratorMatrix::new(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn two_state() -> MomentEngine {
        MomentEngine::new(&gen(&[&[-1.0, 1.0], &[2.0, -2.0]])).unwrap()
    }

    fn cycle() -> MomentEngine {
        MomentEngine::new(&gen(&[&[-1.0, 1.0, 0.0], &[0.0, -1.0, 1.0], &[1.0, 0.0, -1.0]])).unwrap()
    }

    /// Direct sum over distinct arrangements, for small orders only.
    fn brute_force(e: &MomentEngine, m: &[usize], sigma0: usize) -> f64 {
        let n: usize = m.iter().sum();
        let kernels: Vec<_> = (0..n as u32).map(|j| e.kernel_matrix(j).unwrap()).collect();
        fn rec(kernels: &[DMatrix<f64>], left: &mut Vec<usize>, prev: usize, depth: usize, acc: f64) -> f64 {
            if left.iter().all(|&c| c == 0) {
                return acc;
            }
            let mut total = 0.0;
            for t in 0..left.len() {
                if left[t] > 0 {
                    left[t] -= 1;
                    total += rec(kernels, left, t, depth + 1, acc * kernels[depth][(prev, t)]);
                    left[t] += 1;
                }
            }
            total
        }
        rec(&kernels, &mut m.to_vec(), sigma0, 0, 1.0) / multinomial(m)
    }

    #[test]
    fn pochhammer_examples() {
        assert_eq!(pochhammer(Complex64::new(0.7, 2.0), 0), Complex64::new(1.0, 0.0));
        assert_eq!(pochhammer_real(2.0, 3), 24.0);
        assert_eq!(pochhammer_real(-3.0, 2), 6.0);
        let z = Complex64::new(1.5, -(3f64.sqrt()) / 2.0);
        assert_abs_diff_eq!(pochhammer(z, 2).norm_sqr(), 21.0, epsilon = 1e-12);
    }

    #[test]
    fn multi_index_enumeration() {
        assert_eq!(multi_indices(2, 2), vec![vec![2, 0], vec![1, 1], vec![0, 2]]);
        assert_eq!(multi_indices(3, 4).len(), 15);
    }

    #[test]
    fn kernel_examples() {
        let e = two_state();
        let k1 = e.kernel_matrix(1).unwrap();
        assert_abs_diff_eq!(k1[(0, 0)], 0.75, epsilon = 1e-14);
        assert_abs_diff_eq!(k1[(0, 1)], 0.25, epsilon = 1e-14);
        assert_abs_diff_eq!(k1[(1, 0)], 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(k1[(1, 1)], 0.5, epsilon = 1e-14);
        let k0 = e.kernel_matrix(0).unwrap();
        for r in 0..2 {
            assert_abs_diff_eq!(k0[(r, 0)], 2.0 / 3.0, epsilon = 1e-14);
            assert_abs_diff_eq!(k0[(r, 1)], 1.0 / 3.0, epsilon = 1e-14);
        }
        // this generator is theta (Q - I) with theta = 3 and rows mu
        let k4 = e.moment_kernel(4).unwrap();
        let g = e.generator();
        for r in 0..2 {
            for c in 0..2 {
                let id = if r == c { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(k4.get(r, c), id + g.get(r, c) / 7.0, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn joint_examples() {
        let e = two_state();
        assert_abs_diff_eq!(e.joint_moment(&[1, 0]).unwrap(), 2.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(e.joint_moment(&[1, 1]).unwrap(), 1.0 / 6.0, epsilon = 1e-14);
        assert_abs_diff_eq!(e.joint_moment(&[2, 0]).unwrap(), 0.5, epsilon = 1e-14);
        assert!(e.joint_moment(&[0, 0]).is_err());
        assert!(e.joint_moment(&[1]).is_err());
    }

    #[test]
    fn marginal_examples() {
        let e = two_state();
        let gam = e.marginal_roots(0).unwrap();
        assert_abs_diff_eq!(gam[0].re, -2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.marginal_moment(0, 3).unwrap(), 0.4, epsilon = 1e-12);

        let c = cycle();
        assert_abs_diff_eq!(c.marginal_moment(0, 1).unwrap(), 1.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.marginal_moment(0, 2).unwrap(), 4.0 / 21.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.joint_moment(&[2, 0, 0]).unwrap(), 4.0 / 21.0, epsilon = 1e-12);
    }

    #[test]
    fn reducible_generator_rejected() {
        let g = gen(&[&[0.0, 0.0], &[1.0, -1.0]]);
        assert!(matches!(MomentEngine::new(&g), Err(Error::Inadmissible(_))));
    }

    #[test]
    fn table_includes_empty_index() {
        let t = two_state().moment_table(3).unwrap();
        assert_eq!(t.len(), 10);
        assert_eq!(t[0], (vec![0, 0], 1.0));
        assert_eq!(t[1].0, vec![1, 0]);
        assert_abs_diff_eq!(t[1].1, 2.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn dp_matches_brute_force() {
        let g = gen(&[&[-3.0, 1.0, 2.0], &[0.5, -1.0, 0.5], &[1.0, 1.0, -2.0]]);
        let e = MomentEngine::new(&g).unwrap();
        for n in 1..=6 {
            for m in multi_indices(3, n) {
                let dp = e.joint_moment(&m).unwrap();
                let bf = brute_force(&e, &m, 0);
                assert_abs_diff_eq!(dp, bf, epsilon = 1e-13);
            }
        }
    }

    fn generator_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
        (2usize..5).prop_flat_map(|k| {
            proptest::collection::vec(proptest::collection::vec(0.05f64..3.0, k), k).prop_map(
                move |mut rows| {
                    for (i, row) in rows.iter_mut().enumerate() {
                        row[i] = 0.0;
                        let s: f64 = row.iter().sum();
                        row[i] = -s;
                    }
                    rows
                },
            )
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn start_index_is_immaterial(rows in generator_strategy()) {
            let e = MomentEngine::new(&GeneratorMatrix::new(&rows).unwrap()).unwrap();
            let k = e.dim();
            for m in multi_indices(k, 3) {
                let base = e.joint_moment(&m).unwrap();
                for s in 1..k {
                    prop_assert!((e.joint_moment_from(&m, s).unwrap() - base).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn moments_are_normalized(rows in generator_strategy()) {
            let e = MomentEngine::new(&GeneratorMatrix::new(&rows).unwrap()).unwrap();
            for n in 1..=4 {
                let total: f64 = multi_indices(e.dim(), n)
                    .iter()
                    .map(|m| multinomial(m) * e.joint_moment(m).unwrap())
                    .sum();
                prop_assert!((total - 1.0).abs() < 1e-9);
            }
        }

        #[test]
        fn marginal_matches_duality(rows in generator_strategy()) {
            let e = MomentEngine::new(&GeneratorMatrix::new(&rows).unwrap()).unwrap();
            for i in 0..e.dim() {
                for n in 1..=5u32 {
                    let d = e.duality_moment(i, n).unwrap();
                    prop_assert!((e.marginal_moment(i, n).unwrap() - d).abs() < 1e-8);
                }
            }
        }
    }
}
