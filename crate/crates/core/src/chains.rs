//! Finite-state homogeneous chains and generator-matrix algebra.
//!
//! States are 0-based indices throughout the library; the CLI and the file
//! formats shift them to 1-based labels.

use nalgebra::{DMatrix, DVector};
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::neumaier_sum;
use crate::rng;

/// Rows whose sum drifts further than this from the target are rejected.
pub const ROW_SUM_TOL: f64 = 1e-9;

/// Tolerance for the stationarity check in [`reverse_generator`].
pub const STATIONARY_TOL: f64 = 1e-9;

fn to_matrix(rows: &[Vec<f64>], min_dim: usize) -> Result<DMatrix<f64>> {
    let k = rows.len();
    for r in rows {
        if r.len() != k {
            return Err(Error::BadShape {
                rows: k,
                cols: r.len(),
                min: min_dim,
            });
        }
    }
    if k < min_dim {
        return Err(Error::BadShape {
            rows: k,
            cols: k,
            min: min_dim,
        });
    }
    for r in rows {
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("matrix entries must be finite".into()));
        }
    }
    Ok(DMatrix::from_fn(k, k, |i, j| rows[i][j]))
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Validates a probability vector of length `dim`.
pub fn check_probability(v: &[f64], dim: usize) -> Result<()> {
    if v.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: v.len(),
        });
    }
    if let Some(x) = v.iter().find(|x| !(**x >= 0.0) || !x.is_finite()) {
        return Err(Error::NotProbability(format!(
            "entry {x} is negative or not finite"
        )));
    }
    let s = neumaier_sum(v.iter().copied());
    if (s - 1.0).abs() > ROW_SUM_TOL {
        return Err(Error::NotProbability(format!("entries sum to {s}")));
    }
    Ok(())
}

/// Square matrix with nonnegative off-diagonal entries and zero row sums.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorMatrix {
    m: DMatrix<f64>,
}

/// Result of [`validate_generator`].
#[derive(Clone, Debug)]
pub struct GeneratorReport {
    pub generator: GeneratorMatrix,
    /// Absorbing states.
    pub zero_rows: Vec<usize>,
    /// `max_i |G_ii|`, the smallest theta with `I + G / theta` nonnegative.
    pub theta_min: f64,
}

/// Checks the generator conditions and reports absorbing rows and the
/// minimal normalization.
pub fn validate_generator(rows: &[Vec<f64>]) -> Result<GeneratorReport> {
    let generator = GeneratorMatrix::from_matrix(to_matrix(rows, 2)?)?;
    Ok(GeneratorReport {
        zero_rows: generator.zero_rows(),
        theta_min: generator.theta_min(),
        generator,
    })
}

impl GeneratorMatrix {
    pub fn new(rows: &[Vec<f64>]) -> Result<Self> {
        Self::from_matrix(to_matrix(rows, 2)?)
    }

    /// Validates `m`. Rows within tolerance have their diagonal reset to
    /// minus the off-diagonal sum so row sums are exact.
    pub fn from_matrix(mut m: DMatrix<f64>) -> Result<Self> {
        let k = m.nrows();
        if k != m.ncols() || k < 2 {
            return Err(Error::BadShape {
                rows: m.nrows(),
                cols: m.ncols(),
                min: 2,
            });
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("matrix entries must be finite".into()));
        }
        for i in 0..k {
            let mut off = Vec::with_capacity(k - 1);
            for j in 0..k {
                if i != j {
                    let v = m[(i, j)];
                    if v < 0.0 {
                        return Err(Error::NegativeOffDiagonal {
                            row: i,
                            col: j,
                            value: v,
                        });
                    }
                    off.push(v);
                }
            }
            let off_sum = neumaier_sum(off);
            let sum = off_sum + m[(i, i)];
            let scale = off_sum.max(1.0);
            if sum.abs() > ROW_SUM_TOL * scale {
                return Err(Error::RowSum {
                    row: i,
                    sum,
                    expected: 0.0,
                });
            }
            m[(i, i)] = -off_sum;
        }
        Ok(Self { m })
    }

    /// `theta (Q - I)`.
    pub fn from_kernel(q: &StochasticKernel, theta: f64) -> Result<Self> {
        if !(theta > 0.0) || !theta.is_finite() {
            return Err(Error::InvalidInput(format!(
                "theta must be positive, got {theta}"
            )));
        }
        let k = q.dim();
        Self::from_matrix(DMatrix::from_fn(k, k, |i, j| {
            let id = if i == j { 1.0 } else { 0.0 };
            theta * (q.m[(i, j)] - id)
        }))
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        matrix_rows(&self.m)
    }

    pub fn zero_rows(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&i| self.m[(i, i)] == 0.0).collect()
    }

    pub fn theta_min(&self) -> f64 {
        (0..self.dim()).map(|i| self.m[(i, i)].abs()).fold(0.0, f64::max)
    }

    /// `I + G / theta`, requiring `theta >= theta_min`.
    pub fn to_kernel(&self, theta: f64) -> Result<StochasticKernel> {
        if !(theta > 0.0) || theta < self.theta_min() {
            return Err(Error::InvalidInput(format!(
                "theta = {theta} is below the minimal normalization {}",
                self.theta_min()
            )));
        }
        let k = self.dim();
        let mut m = DMatrix::from_fn(k, k, |i, j| {
            let id = if i == j { 1.0 } else { 0.0 };
            (id + self.m[(i, j)] / theta).max(0.0)
        });
        for i in 0..k {
            let off: f64 = neumaier_sum((0..k).filter(|&j| j != i).map(|j| m[(i, j)]));
            m[(i, i)] = (1.0 - off).max(0.0);
        }
        StochasticKernel::from_matrix(m)
    }

    /// Jump-chain kernel `K_G(w, z) = G_wz / (-G_ww)`, with `K_G(w, w) = 1`
    /// on zero rows.
    pub fn jump_kernel(&self) -> StochasticKernel {
        let k = self.dim();
        let mut m = DMatrix::zeros(k, k);
        for w in 0..k {
            let rate = -self.m[(w, w)];
            if rate == 0.0 {
                m[(w, w)] = 1.0;
            } else {
                for z in 0..k {
                    if z != w {
                        m[(w, z)] = self.m[(w, z)] / rate;
                    }
                }
            }
        }
        StochasticKernel { m }
    }

    /// Graph with an edge `i -> j` whenever `G_ij > 0`.
    pub(crate) fn positive_graph(&self) -> Vec<Vec<usize>> {
        positive_graph(&self.m)
    }

    /// True when every state reaches every other state.
    pub fn is_irreducible(&self) -> bool {
        communicating_classes(&self.positive_graph()).len() == 1
    }

    /// `mu^T G` as a vector.
    pub fn left_apply(&self, mu: &[f64]) -> Vec<f64> {
        let k = self.dim();
        (0..k)
            .map(|j| neumaier_sum((0..k).map(|i| mu[i] * self.m[(i, j)])))
            .collect()
    }
}

/// Row-stochastic matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct StochasticKernel {
    m: DMatrix<f64>,
}

impl StochasticKernel {
    pub fn new(rows: &[Vec<f64>]) -> Result<Self> {
        Self::from_matrix(to_matrix(rows, 1)?)
    }

    pub fn from_matrix(mut m: DMatrix<f64>) -> Result<Self> {
        let k = m.nrows();
        if k != m.ncols() || k == 0 {
            return Err(Error::BadShape {
                rows: m.nrows(),
                cols: m.ncols(),
                min: 1,
            });
        }
        for i in 0..k {
            for j in 0..k {
                let v = m[(i, j)];
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(Error::NegativeEntry {
                        row: i,
                        col: j,
                        value: v,
                    });
                }
            }
            let sum = neumaier_sum(m.row(i).iter().copied());
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::RowSum {
                    row: i,
                    sum,
                    expected: 1.0,
                });
            }
            if sum != 1.0 {
                for j in 0..k {
                    m[(i, j)] /= sum;
                }
            }
        }
        Ok(Self { m })
    }

    pub fn identity(k: usize) -> Self {
        Self {
            m: DMatrix::identity(k, k),
        }
    }

    /// Every row equal to `mu`.
    pub fn constant_rows(mu: &[f64]) -> Result<Self> {
        check_probability(mu, mu.len())?;
        let k = mu.len();
        Self::from_matrix(DMatrix::from_fn(k, k, |_, j| mu[j]))
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        matrix_rows(&self.m)
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.m.row(i).iter().copied().collect()
    }

    /// `Q - I`, which has the same stationary laws as `Q`.
    pub fn generator(&self) -> GeneratorMatrix {
        let k = self.dim();
        let mut m = DMatrix::from_fn(k, k, |i, j| if i == j { 0.0 } else { self.m[(i, j)] });
        for i in 0..k {
            let off = neumaier_sum((0..k).filter(|&j| j != i).map(|j| m[(i, j)]));
            m[(i, i)] = -off;
        }
        GeneratorMatrix { m }
    }

    /// Kernel of the chain observed at its switch times:
    /// `K(z, w) = Q_zw / (1 - Q_zz)` for `w != z`, and `K(z, z) = 1` when
    /// `Q_zz = 1`.
    pub fn jump_kernel(&self) -> StochasticKernel {
        let k = self.dim();
        let mut m = DMatrix::zeros(k, k);
        for z in 0..k {
            let stay = self.m[(z, z)];
            if stay == 1.0 {
                m[(z, z)] = 1.0;
                continue;
            }
            let leave = neumaier_sum((0..k).filter(|&w| w != z).map(|w| self.m[(z, w)]));
            for w in 0..k {
                if w != z {
                    m[(z, w)] = self.m[(z, w)] / leave;
                }
            }
        }
        StochasticKernel { m }
    }

    /// States belonging to a closed communicating class.
    pub fn recurrent_states(&self) -> Vec<usize> {
        let graph = positive_graph(&self.m);
        let mut out: Vec<usize> = closed_classes(&graph).into_iter().flatten().collect();
        out.sort_unstable();
        out
    }

    pub(crate) fn cumulative_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim()).map(|i| rng::cumulative(&self.row(i))).collect()
    }
}

fn positive_graph(m: &DMatrix<f64>) -> Vec<Vec<usize>> {
    let k = m.nrows();
    (0..k)
        .map(|i| (0..k).filter(|&j| j != i && m[(i, j)] > 0.0).collect())
        .collect()
}

/// Strongly connected components of the positive-entry graph.
pub(crate) fn communicating_classes(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut g = DiGraph::<(), ()>::new();
    let nodes: Vec<_> = (0..adj.len()).map(|_| g.add_node(())).collect();
    for (i, out) in adj.iter().enumerate() {
        for &j in out {
            g.add_edge(nodes[i], nodes[j], ());
        }
    }
    tarjan_scc(&g)
        .into_iter()
        .map(|c| {
            let mut c: Vec<usize> = c.into_iter().map(|n| n.index()).collect();
            c.sort_unstable();
            c
        })
        .collect()
}

/// Communicating classes with no edge leaving them, ordered by smallest state.
pub(crate) fn closed_classes(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let classes = communicating_classes(adj);
    let mut class_of = vec![0usize; adj.len()];
    for (c, members) in classes.iter().enumerate() {
        for &s in members {
            class_of[s] = c;
        }
    }
    let mut closed: Vec<Vec<usize>> = classes
        .iter()
        .enumerate()
        .filter(|(c, members)| members.iter().all(|&s| adj[s].iter().all(|&t| class_of[t] == *c)))
        .map(|(_, m)| m.clone())
        .collect();
    closed.sort_by_key(|c| c[0]);
    closed
}

/// Extreme stationary laws, one per closed class.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StationaryLaws {
    pub extremes: Vec<Vec<f64>>,
}

impl StationaryLaws {
    /// The stationary law when it is unique.
    pub fn unique(&self) -> Result<&[f64]> {
        match self.extremes.as_slice() {
            [only] => Ok(only),
            _ => Err(Error::InvalidInput(format!(
                "{} recurrent classes; the stationary law is not unique",
                self.extremes.len()
            ))),
        }
    }
}

/// Solves `mu^T G = 0`, `sum mu = 1` on every closed class.
pub fn stationary_distribution(g: &GeneratorMatrix) -> Result<StationaryLaws> {
    let k = g.dim();
    let classes = closed_classes(&g.positive_graph());
    let mut extremes = Vec::with_capacity(classes.len());
    for class in classes {
        let c = class.len();
        let mut mu = vec![0.0; k];
        if c == 1 {
            mu[class[0]] = 1.0;
            extremes.push(mu);
            continue;
        }
        // G_C^T with an appended normalization row, solved in least squares
        let mut a = DMatrix::zeros(c + 1, c);
        for (r, &i) in class.iter().enumerate() {
            for (s, &j) in class.iter().enumerate() {
                a[(s, r)] = g.get(i, j);
            }
            a[(c, r)] = 1.0;
        }
        let mut b = DVector::zeros(c + 1);
        b[c] = 1.0;
        let svd = a.clone().svd(true, true);
        let x = svd.solve(&b, 1e-14).map_err(|e| Error::Singular(e.to_string()))?;
        let residual = (&a * &x - &b).amax();
        if !residual.is_finite() || residual > 1e-10 * g.theta_min().max(1.0) {
            return Err(Error::Singular(format!(
                "stationary solve residual {residual:e} on class {class:?}"
            )));
        }
        let mut total = 0.0;
        for (r, &i) in class.iter().enumerate() {
            mu[i] = x[r].max(0.0);
            total += mu[i];
        }
        for v in &mut mu {
            *v /= total;
        }
        extremes.push(mu);
    }
    Ok(StationaryLaws { extremes })
}

/// Stationary laws of a stochastic kernel.
pub fn stationary_distribution_kernel(q: &StochasticKernel) -> Result<StationaryLaws> {
    if q.dim() == 1 {
        return Ok(StationaryLaws {
            extremes: vec![vec![1.0]],
        });
    }
    stationary_distribution(&q.generator())
}

/// Time-reversed generator `G'_ij = (mu_j / mu_i) G_ji 1(mu_i != 0)`.
pub fn reverse_generator(g: &GeneratorMatrix, mu: &[f64]) -> Result<GeneratorMatrix> {
    let k = g.dim();
    check_probability(mu, k)?;
    let residual = g.left_apply(mu).into_iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if residual > STATIONARY_TOL * g.theta_min().max(1.0) {
        return Err(Error::NotStationary { residual });
    }
    let mut m = DMatrix::zeros(k, k);
    for i in 0..k {
        if mu[i] == 0.0 {
            continue;
        }
        for j in 0..k {
            if i != j {
                m[(i, j)] = mu[j] / mu[i] * g.get(j, i);
            }
        }
        let off = neumaier_sum((0..k).filter(|&j| j != i).map(|j| m[(i, j)]));
        m[(i, i)] = -off;
    }
    GeneratorMatrix::from_matrix(m)
}

/// Finite trajectory of 0-based states.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ChainPath {
    states: Vec<usize>,
    dim: usize,
}

impl ChainPath {
    pub fn new(states: Vec<usize>, dim: usize) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::InvalidInput("chain path must be nonempty".into()));
        }
        if let Some(&s) = states.iter().find(|&&s| s >= dim) {
            return Err(Error::StateOutOfRange { state: s, dim });
        }
        Ok(Self { states, dim })
    }

    pub(crate) fn from_parts_unchecked(states: Vec<usize>, dim: usize) -> Self {
        Self { states, dim }
    }

    pub fn states(&self) -> &[usize] {
        &self.states
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// First `n` states.
    pub fn prefix(&self, n: usize) -> Result<ChainPath> {
        if n == 0 || n > self.len() {
            return Err(Error::InvalidInput(format!(
                "prefix length {n} outside 1..={}",
                self.len()
            )));
        }
        Ok(Self {
            states: self.states[..n].to_vec(),
            dim: self.dim,
        })
    }

    /// CSV with header `step,state`, 1-based steps and states.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,state\n");
        for (i, s) in self.states.iter().enumerate() {
            out.push_str(&format!("{},{}\n", i + 1, s + 1));
        }
        out
    }
}

/// Samples `n` states of the homogeneous chain `q` started from `init`.
pub fn sample_homogeneous_with<R: Rng + ?Sized>(
    q: &StochasticKernel,
    init: &[f64],
    n: usize,
    rng: &mut R,
) -> Result<ChainPath> {
    let k = q.dim();
    check_probability(init, k)?;
    if n == 0 {
        return Err(Error::InvalidInput("path length must be at least 1".into()));
    }
    let cum = q.cumulative_rows();
    let mut states = Vec::with_capacity(n);
    let mut s = rng::pick(&rng::cumulative(init), rng.random());
    states.push(s);
    for _ in 1..n {
        s = rng::pick(&cum[s], rng.random());
        states.push(s);
    }
    Ok(ChainPath { states, dim: k })
}

pub fn sample_homogeneous(q: &StochasticKernel, init: &[f64], n: usize, seed: u64) -> Result<ChainPath> {
    sample_homogeneous_with(q, init, n, &mut rng::stream(seed, 0))
}

/// Switch times `V`, return times `W` and the jump chain `Y`, all 0-based.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SwitchTimes {
    pub switches: Vec<usize>,
    pub returns: Vec<usize>,
    pub jump_states: Vec<usize>,
}

pub fn switch_and_return_times(path: &ChainPath) -> SwitchTimes {
    let t = &path.states;
    let mut switches = vec![0];
    let mut returns = vec![0];
    for i in 1..t.len() {
        if t[i] != t[i - 1] {
            switches.push(i);
        }
        if t[i] == t[0] {
            returns.push(i);
        }
    }
    let jump_states = switches.iter().map(|&v| t[v]).collect();
    SwitchTimes {
        switches,
        returns,
        jump_states,
    }
}
