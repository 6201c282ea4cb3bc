//! Domain types and the shifted-exponential delay model.
//!
//! Times are milliseconds, loads are (real-valued) coded rows. Worker `n`
//! computing `l` rows for master `m` finishes at `a[m][n]·l + Exp(rate u[m][n]/l)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{exp_clamped, Real};

/// Dense row-major matrix indexed by (master, worker).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Copy> Matrix<T> {
    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidInstance(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds from nested rows; panics on ragged input (test and literal use).
    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), cols, "ragged matrix rows");
            data.extend_from_slice(r.as_ref());
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, value: T) {
        self.data[r * self.cols + c] = value;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }
}

impl<T: Real> Matrix<T> {
    pub fn column_sum(&self, c: usize) -> T {
        (0..self.rows).map(|r| self.get(r, c)).sum()
    }

    pub fn row_sum(&self, r: usize) -> T {
        self.row(r).iter().copied().sum()
    }
}

/// Full description of the heterogeneous system: `M` masters, `N > M`
/// workers, per-pair straggle rates `u` (1/ms) and shifts `a` (ms per row),
/// and the number of rows `L_m` each master must recover.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance<T> {
    u: Matrix<T>,
    a: Matrix<T>,
    rows: Vec<u64>,
    cols: Vec<u64>,
}

impl<T: Real> ProblemInstance<T> {
    /// `cols` are the column dimensions `s_m`; metadata only.
    pub fn new(u: Matrix<T>, a: Matrix<T>, rows: Vec<u64>, cols: Vec<u64>) -> Result<Self> {
        let (m, n) = (u.rows(), u.cols());
        if m == 0 {
            return Err(Error::InvalidInstance("no masters".into()));
        }
        if n <= m {
            return Err(Error::InvalidInstance(format!(
                "need more workers than masters, got N={n}, M={m}"
            )));
        }
        if a.rows() != m || a.cols() != n {
            return Err(Error::InvalidInstance("shape of a differs from u".into()));
        }
        if rows.len() != m || cols.len() != m {
            return Err(Error::InvalidInstance(
                "row-count and column-count vectors must have one entry per master".into(),
            ));
        }
        for (name, mat) in [("u", &u), ("a", &a)] {
            if let Some(bad) = mat
                .as_slice()
                .iter()
                .find(|x| !(x.is_finite() && **x > T::zero()))
            {
                return Err(Error::InvalidInstance(format!(
                    "{name} entries must be finite and positive, found {bad}"
                )));
            }
        }
        if rows.contains(&0) {
            return Err(Error::InvalidInstance(
                "every L_m must be at least 1".into(),
            ));
        }
        Ok(Self { u, a, rows, cols })
    }

    #[inline]
    pub fn num_masters(&self) -> usize {
        self.u.rows()
    }

    #[inline]
    pub fn num_workers(&self) -> usize {
        self.u.cols()
    }

    #[inline]
    pub fn u(&self, m: usize, n: usize) -> T {
        self.u.get(m, n)
    }

    #[inline]
    pub fn a(&self, m: usize, n: usize) -> T {
        self.a.get(m, n)
    }

    /// Required row count `L_m` as a scalar.
    #[inline]
    pub fn rows(&self, m: usize) -> T {
        T::lit(self.rows[m] as f64)
    }

    pub fn row_counts(&self) -> &[u64] {
        &self.rows
    }

    pub fn col_counts(&self) -> &[u64] {
        &self.cols
    }

    pub fn u_matrix(&self) -> &Matrix<T> {
        &self.u
    }

    pub fn a_matrix(&self) -> &Matrix<T> {
        &self.a
    }

    pub(crate) fn check_master(&self, m: usize) -> Result<()> {
        if m >= self.num_masters() {
            return Err(Error::IndexOutOfRange {
                what: "master",
                index: m,
                len: self.num_masters(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AssignmentMode {
    Dedicated,
    Probabilistic,
}

/// Worker-to-master assignment `k`. Dedicated entries are exactly 0 or 1;
/// probabilistic entries are selection probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment<T> {
    mode: AssignmentMode,
    k: Matrix<T>,
}

impl<T: Real> Assignment<T> {
    /// `owners[n]` is the master worker `n` serves, if any.
    pub fn dedicated(num_masters: usize, owners: &[Option<usize>]) -> Result<Self> {
        let mut k = Matrix::filled(num_masters, owners.len(), T::zero());
        for (n, owner) in owners.iter().enumerate() {
            if let Some(m) = *owner {
                if m >= num_masters {
                    return Err(Error::IndexOutOfRange {
                        what: "master",
                        index: m,
                        len: num_masters,
                    });
                }
                k.set(m, n, T::one());
            }
        }
        Ok(Self {
            mode: AssignmentMode::Dedicated,
            k,
        })
    }

    pub fn new(mode: AssignmentMode, k: Matrix<T>) -> Result<Self> {
        let slack = match mode {
            AssignmentMode::Dedicated => T::zero(),
            AssignmentMode::Probabilistic => T::lit(1e-9),
        };
        for &x in k.as_slice() {
            if !(x >= T::zero() && x <= T::one()) {
                return Err(Error::InvalidAssignment(format!(
                    "entry {x} outside [0, 1]"
                )));
            }
            if mode == AssignmentMode::Dedicated && x != T::zero() && x != T::one() {
                return Err(Error::InvalidAssignment(format!(
                    "dedicated entries must be 0 or 1, found {x}"
                )));
            }
        }
        for n in 0..k.cols() {
            let s = k.column_sum(n);
            if s > T::one() + slack {
                return Err(Error::InvalidAssignment(format!(
                    "worker {n} has total selection mass {s} > 1"
                )));
            }
        }
        Ok(Self { mode, k })
    }

    #[inline]
    pub fn mode(&self) -> AssignmentMode {
        self.mode
    }

    #[inline]
    pub fn k(&self, m: usize, n: usize) -> T {
        self.k.get(m, n)
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.k
    }

    pub fn num_masters(&self) -> usize {
        self.k.rows()
    }

    pub fn num_workers(&self) -> usize {
        self.k.cols()
    }

    /// Workers with `k[m][n] > 0` (the set Ω_m in dedicated mode).
    pub fn workers_of(&self, m: usize) -> Vec<usize> {
        (0..self.k.cols())
            .filter(|&n| self.k.get(m, n) > T::zero())
            .collect()
    }

    /// Serving master of worker `n` in dedicated mode.
    pub fn owner(&self, n: usize) -> Option<usize> {
        (0..self.k.rows()).find(|&m| self.k.get(m, n) == T::one())
    }
}

/// Coded rows `l[m][n]` per (master, worker) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadAllocation<T> {
    l: Matrix<T>,
}

impl<T: Real> LoadAllocation<T> {
    pub fn new(l: Matrix<T>, assignment: &Assignment<T>) -> Result<Self> {
        if l.rows() != assignment.num_masters() || l.cols() != assignment.num_workers() {
            return Err(Error::InvalidAssignment(
                "load matrix shape mismatch".into(),
            ));
        }
        for m in 0..l.rows() {
            for n in 0..l.cols() {
                let x = l.get(m, n);
                if !(x >= T::zero() && x.is_finite()) {
                    return Err(Error::InvalidAssignment(format!(
                        "load ({m}, {n}) = {x} is not a finite non-negative value"
                    )));
                }
                if x > T::zero() && assignment.k(m, n) <= T::zero() {
                    return Err(Error::InvalidAssignment(format!(
                        "load on unassigned pair ({m}, {n})"
                    )));
                }
            }
        }
        Ok(Self { l })
    }

    #[inline]
    pub fn l(&self, m: usize, n: usize) -> T {
        self.l.get(m, n)
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.l
    }

    pub fn total(&self, m: usize) -> T {
        self.l.row_sum(m)
    }

    /// MDS feasibility: every master holds at least `L_m` coded rows.
    pub fn covers_rows(&self, instance: &ProblemInstance<T>) -> bool {
        (0..instance.num_masters()).all(|m| self.total(m) >= instance.rows(m))
    }
}

/// How a master recovers its product from worker results.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Recovery {
    /// Any `L_m` coded rows suffice.
    Coded,
    /// Every assigned partition is needed.
    Uncoded,
}

/// Provenance of a schedule's completion-time figures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Estimate {
    /// Expectation-based objective of the optimizer.
    Predicted,
    /// Filled in from a simulation.
    Empirical,
    /// Not yet available (uncoded schedules before simulation); values are NaN.
    Pending,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule<T> {
    pub assignment: Assignment<T>,
    pub loads: LoadAllocation<T>,
    pub t_approx: T,
    pub per_master_t: Vec<T>,
    pub recovery: Recovery,
    pub estimate: Estimate,
}

impl<T: Real> Schedule<T> {
    pub fn predicted(
        assignment: Assignment<T>,
        loads: LoadAllocation<T>,
        per_master_t: Vec<T>,
    ) -> Self {
        let t_approx = per_master_t.iter().copied().fold(T::neg_infinity(), T::max);
        Self {
            assignment,
            loads,
            t_approx,
            per_master_t,
            recovery: Recovery::Coded,
            estimate: Estimate::Predicted,
        }
    }

    pub fn pending(
        assignment: Assignment<T>,
        loads: LoadAllocation<T>,
        recovery: Recovery,
    ) -> Self {
        let m = assignment.num_masters();
        Self {
            assignment,
            loads,
            t_approx: T::nan(),
            per_master_t: vec![T::nan(); m],
            recovery,
            estimate: Estimate::Pending,
        }
    }

    /// Replaces the completion-time figures with simulated ones.
    pub fn with_empirical(mut self, overall: T, per_master: Vec<T>) -> Self {
        self.t_approx = overall;
        self.per_master_t = per_master;
        self.estimate = Estimate::Empirical;
        self
    }

    pub fn mode(&self) -> AssignmentMode {
        self.assignment.mode()
    }
}

/// Expected number of results from one worker by time `t`:
/// `k·l·(1 − exp(−(u/l)(t − a·l)))` for `t > a·l`, else 0.
pub fn expected_results<T: Real>(l: T, k: T, u: T, a: T, t: T) -> T {
    if l <= T::zero() || k <= T::zero() || t <= a * l {
        return T::zero();
    }
    let exponent = -(u / l) * (t - a * l);
    -k * l * exponent.max(T::lit(-700.0)).exp_m1()
}

/// The expected-results formula without the `t ≥ a·l` branch, as it appears
/// in the simplified per-master constraint. Negative when `t < a·l`.
pub fn relaxed_expected_results<T: Real>(l: T, k: T, u: T, a: T, t: T) -> T {
    if l <= T::zero() || k <= T::zero() {
        return T::zero();
    }
    let exponent = (-(u / l) * (t - a * l)).min(T::lit(700.0));
    -k * l * exponent.max(T::lit(-700.0)).exp_m1()
}

/// `E[X_m(t)]`, the sum of [`expected_results`] over every worker.
pub fn expected_results_master<T: Real>(
    instance: &ProblemInstance<T>,
    assignment: &Assignment<T>,
    loads: &LoadAllocation<T>,
    m: usize,
    t: T,
) -> Result<T> {
    instance.check_master(m)?;
    Ok((0..instance.num_workers())
        .map(|n| {
            expected_results(
                loads.l(m, n),
                assignment.k(m, n),
                instance.u(m, n),
                instance.a(m, n),
                t,
            )
        })
        .sum())
}

/// Inverse-CDF draw of a worker's processing time for `l` rows.
pub fn sample_completion_time<T: Real>(l: T, u: T, a: T, unit_uniform: T) -> Result<T> {
    if !(unit_uniform > T::zero() && unit_uniform < T::one()) {
        return Err(Error::UniformOutOfRange(unit_uniform.to_f64_lossy()));
    }
    Ok(a * l - (l / u) * unit_uniform.ln())
}

/// CDF of a worker's processing time.
pub fn completion_cdf<T: Real>(l: T, u: T, a: T, t: T) -> T {
    if t <= a * l {
        return T::zero();
    }
    T::one() - exp_clamped(-(u / l) * (t - a * l))
}

/// `f(x, t) = −x·(1 − exp(−(u/x)(t − a·x)))`, i.e. minus the expected
/// results of a single fully-assigned worker.
pub fn f_value<T: Real>(x: T, t: T, u: T, a: T) -> T {
    let exponent = -(u / x) * (t - a * x);
    x * exponent.max(T::lit(-700.0)).exp_m1()
}

/// Gradient of [`f_value`] in `(x, t)`.
pub fn f_gradient<T: Real>(x: T, t: T, u: T, a: T) -> [T; 2] {
    let exponent = (-(u / x) * (t - a * x)).max(T::lit(-700.0));
    let e = exponent.exp();
    [exponent.exp_m1() + e * u * t / x, -u * e]
}

/// Analytic Hessian of [`f_value`] in `(x, t)`. Rank one with eigenvalues
/// `0` and `exp(−(u/x)(t − a·x))·u²(x² + t²)/x³`.
pub fn f_hessian<T: Real>(x: T, t: T, u: T, a: T) -> [[T; 2]; 2] {
    let e = exp_clamped(-(u / x) * (t - a * x));
    let u2 = u * u;
    let xt = -e * u2 * t / (x * x);
    [[e * u2 * t * t / (x * x * x), xt], [xt, e * u2 / x]]
}

/// Eigenvalues of a symmetric 2×2 matrix, ascending.
pub fn symmetric_eigenvalues<T: Real>(h: &[[T; 2]; 2]) -> [T; 2] {
    let half_trace = (h[0][0] + h[1][1]) / T::lit(2.0);
    let half_diff = (h[0][0] - h[1][1]) / T::lit(2.0);
    let radius = half_diff.hypot(h[0][1]);
    [half_trace - radius, half_trace + radius]
}
