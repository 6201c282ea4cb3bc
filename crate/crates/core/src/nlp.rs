//! Log-barrier interior-point solver for the convex SCA subproblem
//!
//! ```text
//! minimize t  s.t.  q̃_m(w, z) ≤ 0,  Σ_m k_{m,n} ≤ 1,  k ≥ 0,  l ≥ l_floor,  t ≥ t_floor
//! ```
//!
//! The barrier Hessian is an arrow matrix (2×2 blocks per pair, coupled only
//! through `t`) plus one rank-one term per master constraint and per worker
//! column. Newton systems are solved with an arrow Schur complement and a
//! Woodbury correction of size `M + N`, followed by iterative refinement.

use crate::error::{Error, Result};
use crate::model::Matrix;
use crate::model::{relaxed_expected_results, ProblemInstance};
use crate::sca::{pair_majorant, PairExpansion, PairTerm, ScaPoint};
use crate::scalar::{exp_clamped, Real};

#[derive(Debug, Clone, PartialEq)]
pub struct BarrierOptions<T> {
    /// Barrier weight multiplier between stages.
    pub growth: T,
    /// Stop once `(#barrier terms)/τ ≤ gap_tol·(1 + |t|)`, `t` in ms.
    pub gap_tol: T,
    pub max_newton_per_stage: usize,
    pub max_stages: usize,
}

impl<T: Real> Default for BarrierOptions<T> {
    fn default() -> Self {
        Self {
            growth: T::lit(10.0),
            gap_tol: T::tol(1e-8),
            max_newton_per_stage: 100,
            max_stages: 60,
        }
    }
}

/// One convex subproblem around `expansion`. Bounds are in rows and ms;
/// `scale` is the normalization used for the majorant.
#[derive(Debug, Clone, Copy)]
pub struct SubproblemSpec<'a, T> {
    pub instance: &'a ProblemInstance<T>,
    pub expansion: &'a ScaPoint<T>,
    pub l_floor: T,
    pub t_floor: T,
    pub scale: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverStatus {
    Optimal,
    MaxIterations,
    NumericalFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverDiagnostics<T> {
    pub outer_barrier_stages: usize,
    pub newton_steps_total: usize,
    /// Duality gap bound of the last centered point, in ms.
    pub final_duality_gap_bound: T,
    pub max_constraint_violation: T,
    pub status: SolverStatus,
    /// `t` at the end of every barrier stage, in ms.
    pub stage_objectives: Vec<T>,
}

/// Smallest `t` with `E[X_m(t)] ≥ L_m·(1 + slack)` for the point's `k` and `l`.
pub fn master_time<T: Real>(
    point: &ScaPoint<T>,
    instance: &ProblemInstance<T>,
    m: usize,
    slack: T,
) -> Result<T> {
    instance.check_master(m)?;
    let n_count = instance.num_workers();
    let target = instance.rows(m) * (T::one() + slack);
    let capacity: T = (0..n_count)
        .map(|n| point.k.get(m, n) * point.l.get(m, n))
        .sum();
    if !(capacity > target) {
        return Err(Error::UnboundedTime(m));
    }
    let expected = |t: T| -> T {
        (0..n_count)
            .map(|n| {
                relaxed_expected_results(
                    point.l.get(m, n),
                    point.k.get(m, n),
                    instance.u(m, n),
                    instance.a(m, n),
                    t,
                )
            })
            .sum()
    };
    let mut hi = point.t.max(T::min_positive_value());
    let mut lo = T::zero();
    let mut doublings = 0;
    while expected(hi) < target {
        lo = hi;
        hi = hi * T::lit(2.0);
        doublings += 1;
        if doublings > 4000 || !hi.is_finite() {
            return Err(Error::UnboundedTime(m));
        }
    }
    for _ in 0..300 {
        let mid = lo + (hi - lo) / T::lit(2.0);
        if mid <= lo || mid >= hi {
            break;
        }
        if expected(mid) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Raises `t` (never lowers it) until every master's exact constraint holds
/// with a relative slack of `1e-9`.
pub fn feasibility_restore<T: Real>(
    point: &ScaPoint<T>,
    instance: &ProblemInstance<T>,
) -> Result<ScaPoint<T>> {
    let slack = T::tol(1e-9);
    let mut t = point.t;
    for m in 0..instance.num_masters() {
        t = t.max(master_time(point, instance, m, slack)?);
    }
    Ok(ScaPoint {
        k: point.k.clone(),
        l: point.l.clone(),
        t,
    })
}

/// The subproblem in normalized units. Variables are stored as
/// `[k_0, l_0, k_1, l_1, …, t, σ_0, …, σ_{N−1}]` with pair index `m·N + n`,
/// where `σ_n = 1 − Σ_m k_{m,n}` is carried as its own variable. Tying it
/// back through a linear equality keeps its barrier curvature on the
/// diagonal, which scaling handles, instead of in a near-singular rank-one
/// term.
pub(crate) struct Barrier<T> {
    masters: usize,
    workers: usize,
    u: Vec<T>,
    c: Vec<T>,
    z: Vec<PairExpansion<T>>,
    rows: Vec<T>,
    l_floor: T,
    t_floor: T,
}

/// Log arguments of every barrier term at one point, plus `t`.
#[derive(Clone)]
struct Slacks<T> {
    t: T,
    logs: Vec<T>,
}

/// Sparse vector as `(index, value)` pairs.
type SparseCol<T> = Vec<(usize, T)>;

/// Equality-constrained Newton system, held in Jacobi-scaled form.
pub(crate) struct NewtonSystem<T> {
    grad: Vec<T>,
    residual: Vec<T>,
    scale: Vec<T>,
    d: Vec<[T; 3]>,
    dinv: Vec<[T; 3]>,
    cross: Vec<[T; 2]>,
    dinv_cross: Vec<[T; 2]>,
    corner: T,
    schur: T,
    cols: Vec<SparseCol<T>>,
    w: Vec<Vec<T>>,
    capacitance: dense::ScaledFactor<T>,
    eq_rows: Vec<SparseCol<T>>,
    eq_solves: Vec<Vec<T>>,
    eq_schur: dense::ScaledFactor<T>,
}

fn sym2_solve<T: Real>(inv: &[T; 3], r: [T; 2]) -> [T; 2] {
    [inv[0] * r[0] + inv[1] * r[1], inv[1] * r[0] + inv[2] * r[1]]
}

fn sparse_dot<T: Real>(col: &SparseCol<T>, v: &[T]) -> T {
    col.iter().map(|&(i, x)| x * v[i]).sum()
}

impl<T: Real> Barrier<T> {
    pub(crate) fn new(spec: &SubproblemSpec<'_, T>) -> Self {
        let inst = spec.instance;
        let (masters, workers) = (inst.num_masters(), inst.num_workers());
        let s = spec.scale;
        let mut u = Vec::with_capacity(masters * workers);
        let mut c = Vec::with_capacity(masters * workers);
        let mut z = Vec::with_capacity(masters * workers);
        for m in 0..masters {
            for n in 0..workers {
                let un = inst.u(m, n);
                u.push(un);
                c.push(exp_clamped(un * inst.a(m, n)));
                z.push(PairExpansion::new(
                    spec.expansion.k.get(m, n),
                    spec.expansion.l.get(m, n) / s,
                    spec.expansion.t / s,
                    un,
                ));
            }
        }
        Self {
            masters,
            workers,
            u,
            c,
            z,
            rows: (0..masters).map(|m| inst.rows(m) / s).collect(),
            l_floor: spec.l_floor / s,
            t_floor: spec.t_floor / s,
        }
    }

    fn pairs(&self) -> usize {
        self.masters * self.workers
    }

    fn t_index(&self) -> usize {
        2 * self.pairs()
    }

    fn sigma_index(&self, n: usize) -> usize {
        2 * self.pairs() + 1 + n
    }

    pub(crate) fn dim(&self) -> usize {
        2 * self.pairs() + 1 + self.workers
    }

    /// Number of logarithmic terms, the `m` in the `m/τ` gap bound.
    fn term_count(&self) -> usize {
        self.masters + self.workers + 2 * self.pairs() + 1
    }

    /// The expansion point itself, with `t` given in normalized units.
    pub(crate) fn start(&self, t: T) -> Vec<T> {
        let mut x = Vec::with_capacity(self.dim());
        for p in &self.z {
            x.push(p.k);
            x.push(p.l);
        }
        x.push(t);
        for n in 0..self.workers {
            x.push((0..self.masters).fold(T::one(), |s, m| s - self.z[m * self.workers + n].k));
        }
        x
    }

    fn terms(&self, x: &[T]) -> (Vec<T>, Vec<PairTerm<T>>) {
        let t = x[self.t_index()];
        let mut q = self.rows.clone();
        let mut terms = Vec::with_capacity(self.pairs());
        for p in 0..self.pairs() {
            let term = pair_majorant(x[2 * p], x[2 * p + 1], t, &self.z[p], self.u[p], self.c[p]);
            q[p / self.workers] = q[p / self.workers] + term.value;
            terms.push(term);
        }
        (q, terms)
    }

    /// `1 − Σ_m k_{m,n} − σ_n` for every worker.
    fn eq_residual(&self, x: &[T]) -> Vec<T> {
        (0..self.workers)
            .map(|n| {
                let used =
                    (0..self.masters).fold(T::zero(), |s, m| s + x[2 * (m * self.workers + n)]);
                T::one() - used - x[self.sigma_index(n)]
            })
            .collect()
    }

    /// Positive log arguments, or `None` outside the strict interior.
    fn slacks(&self, x: &[T]) -> Option<Slacks<T>> {
        let t = x[self.t_index()];
        let mut logs = Vec::with_capacity(self.term_count());
        let (q, _) = self.terms(x);
        logs.extend(q.iter().map(|&v| -v));
        logs.extend((0..self.workers).map(|n| x[self.sigma_index(n)]));
        for p in 0..self.pairs() {
            logs.push(x[2 * p]);
            logs.push(x[2 * p + 1] - self.l_floor);
        }
        logs.push(t - self.t_floor);
        logs.iter()
            .all(|&v| v > T::zero() && v.is_finite())
            .then_some(Slacks { t, logs })
    }

    /// `Φ(new) − Φ(old)` evaluated term by term to avoid cancellation.
    fn barrier_change(old: &Slacks<T>, new: &Slacks<T>, tau: T) -> T {
        let logs: T = old
            .logs
            .iter()
            .zip(&new.logs)
            .map(|(&a, &b)| (b / a).ln())
            .sum();
        tau * (new.t - old.t) - logs
    }

    pub(crate) fn assemble(&self, x: &[T], tau: T) -> Option<NewtonSystem<T>> {
        let dim = self.dim();
        let ti = self.t_index();
        let t = x[ti];
        let (q, terms) = self.terms(x);
        if q.iter().any(|&v| !(v < T::zero())) {
            return None;
        }
        let pairs = self.pairs();
        let mut grad = vec![T::zero(); dim];
        grad[ti] = tau;
        let mut d = Vec::with_capacity(pairs);
        let mut cross = Vec::with_capacity(pairs);
        let mut pair_tt = Vec::with_capacity(pairs);
        let mut corner = T::zero();
        let mut cols: Vec<SparseCol<T>> = Vec::with_capacity(self.masters);
        for (m, &qm) in q.iter().enumerate().take(self.masters) {
            let inv = (-qm).recip();
            let mut col = Vec::with_capacity(2 * self.workers + 1);
            let mut col_t = T::zero();
            for n in 0..self.workers {
                let p = m * self.workers + n;
                let term = &terms[p];
                let (k, l) = (x[2 * p], x[2 * p + 1]);
                let gl = l - self.l_floor;
                grad[2 * p] = term.grad[0] * inv - k.recip();
                grad[2 * p + 1] = term.grad[1] * inv - gl.recip();
                grad[ti] = grad[ti] + term.grad[2] * inv;
                let h = &term.hess;
                d.push([
                    h[0][0] * inv + (k * k).recip(),
                    h[0][1] * inv,
                    h[1][1] * inv + (gl * gl).recip(),
                ]);
                cross.push([h[0][2] * inv, h[1][2] * inv]);
                pair_tt.push(h[2][2] * inv);
                corner = corner + h[2][2] * inv;
                col.push((2 * p, term.grad[0] * inv));
                col.push((2 * p + 1, term.grad[1] * inv));
                col_t = col_t + term.grad[2] * inv;
            }
            col.push((ti, col_t));
            cols.push(col);
        }
        let gt = t - self.t_floor;
        grad[ti] = grad[ti] - gt.recip();
        let bound_tt = (gt * gt).recip();
        corner = corner + bound_tt;
        for n in 0..self.workers {
            grad[self.sigma_index(n)] = -x[self.sigma_index(n)].recip();
        }

        // Jacobi scaling of the block part: k → 0 and σ → 0 put huge entries
        // next to O(1) ones. The master columns are left to Woodbury.
        let mut scale = vec![T::zero(); dim];
        for p in 0..pairs {
            scale[2 * p] = d[p][0];
            scale[2 * p + 1] = d[p][2];
        }
        scale[ti] = corner;
        if scale[..=ti]
            .iter()
            .any(|&v| !(v > T::zero() && v.is_finite()))
        {
            return None;
        }
        for v in scale[..=ti].iter_mut() {
            *v = v.sqrt().recip();
        }
        for n in 0..self.workers {
            scale[self.sigma_index(n)] = x[self.sigma_index(n)];
        }
        let st = scale[ti];
        for p in 0..pairs {
            let (sk, sl) = (scale[2 * p], scale[2 * p + 1]);
            d[p] = [d[p][0] * sk * sk, d[p][1] * sk * sl, d[p][2] * sl * sl];
            cross[p] = [cross[p][0] * sk * st, cross[p][1] * sl * st];
            pair_tt[p] = pair_tt[p] * st * st;
        }
        corner = corner * st * st;
        for col in cols.iter_mut() {
            for (i, v) in col.iter_mut() {
                *v = *v * scale[*i];
            }
        }

        let mut dinv = Vec::with_capacity(pairs);
        let mut dinv_cross = Vec::with_capacity(pairs);
        let mut schur = bound_tt * st * st;
        for p in 0..pairs {
            let [a, b, c] = d[p];
            let det = a * c - b * b;
            if !(det > T::zero()) {
                return None;
            }
            let inv = [c / det, -b / det, a / det];
            let dc = sym2_solve(&inv, cross[p]);
            // each pair's own Schur contribution is non-negative
            let own = pair_tt[p] - (cross[p][0] * dc[0] + cross[p][1] * dc[1]);
            schur = schur + own.max(T::zero());
            dinv.push(inv);
            dinv_cross.push(dc);
        }
        let eq_rows: Vec<SparseCol<T>> = (0..self.workers)
            .map(|n| {
                let mut row: SparseCol<T> = (0..self.masters)
                    .map(|m| {
                        let i = 2 * (m * self.workers + n);
                        (i, scale[i])
                    })
                    .collect();
                let si = self.sigma_index(n);
                row.push((si, scale[si]));
                row
            })
            .collect();
        let mut sys = NewtonSystem {
            grad,
            residual: self.eq_residual(x),
            scale,
            d,
            dinv,
            cross,
            dinv_cross,
            corner,
            schur,
            cols,
            w: Vec::new(),
            capacitance: dense::ScaledFactor::default(),
            eq_rows,
            eq_solves: Vec::new(),
            eq_schur: dense::ScaledFactor::default(),
        };

        let km = sys.cols.len();
        let w: Vec<Vec<T>> = sys
            .cols
            .iter()
            .map(|col| sys.arrow_solve(&sys.densify(col, ti + 1)))
            .collect();
        let mut cap = vec![T::zero(); km * km];
        for i in 0..km {
            for j in 0..km {
                cap[i * km + j] =
                    sparse_dot(&sys.cols[i], &w[j]) + if i == j { T::one() } else { T::zero() };
            }
        }
        sys.capacitance = dense::ScaledFactor::new(cap, km)?;
        sys.w = w;

        let ke = sys.eq_rows.len();
        let solves: Vec<Vec<T>> = sys
            .eq_rows
            .iter()
            .map(|row| sys.hinv(&sys.densify(row, dim)))
            .collect();
        let mut eq = vec![T::zero(); ke * ke];
        for i in 0..ke {
            for j in 0..ke {
                eq[i * ke + j] = sparse_dot(&sys.eq_rows[i], &solves[j]);
            }
        }
        sys.eq_schur = dense::ScaledFactor::new(eq, ke)?;
        sys.eq_solves = solves;
        Some(sys)
    }

    fn objective_t(&self, x: &[T]) -> T {
        x[self.t_index()]
    }
}

impl<T: Real> NewtonSystem<T> {
    pub(crate) fn gradient(&self) -> &[T] {
        &self.grad
    }

    fn block_len(&self) -> usize {
        2 * self.d.len() + 1
    }

    fn densify(&self, col: &SparseCol<T>, len: usize) -> Vec<T> {
        let mut v = vec![T::zero(); len];
        for &(i, x) in col {
            v[i] = x;
        }
        v
    }

    /// Solves with the arrow part over `[k, l, t]`.
    fn arrow_solve(&self, r: &[T]) -> Vec<T> {
        let pairs = self.d.len();
        let ti = 2 * pairs;
        let mut z = vec![T::zero(); ti + 1];
        let mut rt = r[ti];
        for p in 0..pairs {
            let a = sym2_solve(&self.dinv[p], [r[2 * p], r[2 * p + 1]]);
            z[2 * p] = a[0];
            z[2 * p + 1] = a[1];
            rt = rt - (self.cross[p][0] * a[0] + self.cross[p][1] * a[1]);
        }
        let zt = rt / self.schur;
        for p in 0..pairs {
            z[2 * p] = z[2 * p] - self.dinv_cross[p][0] * zt;
            z[2 * p + 1] = z[2 * p + 1] - self.dinv_cross[p][1] * zt;
        }
        z[ti] = zt;
        z
    }

    /// Scaled Hessian solve: arrow plus master columns on `[k, l, t]`, and
    /// the identity on the σ block.
    fn hinv(&self, r: &[T]) -> Vec<T> {
        let nb = self.block_len();
        let mut z = self.arrow_solve(&r[..nb]);
        let mut y: Vec<T> = self.cols.iter().map(|col| sparse_dot(col, &z)).collect();
        self.capacitance.solve(&mut y);
        for (wj, &yj) in self.w.iter().zip(&y) {
            for (zi, &wi) in z.iter_mut().zip(wj) {
                *zi = *zi - wi * yj;
            }
        }
        z.extend_from_slice(&r[nb..]);
        z
    }

    fn apply_scaled(&self, v: &[T]) -> Vec<T> {
        let pairs = self.d.len();
        let ti = 2 * pairs;
        let mut out = vec![T::zero(); v.len()];
        let mut tt = self.corner * v[ti];
        for p in 0..pairs {
            let [a, b, c] = self.d[p];
            let (vk, vl) = (v[2 * p], v[2 * p + 1]);
            out[2 * p] = a * vk + b * vl + self.cross[p][0] * v[ti];
            out[2 * p + 1] = b * vk + c * vl + self.cross[p][1] * v[ti];
            tt = tt + self.cross[p][0] * vk + self.cross[p][1] * vl;
        }
        out[ti] = tt;
        for col in &self.cols {
            let dot = sparse_dot(col, v);
            for &(i, x) in col {
                out[i] = out[i] + x * dot;
            }
        }
        out[ti + 1..].copy_from_slice(&v[ti + 1..]);
        out
    }

    /// Scaled KKT solve of `[H Aᵀ; A 0]·(y, ν) = (b, e)`.
    fn kkt_solve(&self, b: &[T], e: &[T]) -> (Vec<T>, Vec<T>) {
        let h = self.hinv(b);
        let mut nu: Vec<T> = self
            .eq_rows
            .iter()
            .zip(e)
            .map(|(row, &ei)| sparse_dot(row, &h) - ei)
            .collect();
        self.eq_schur.solve(&mut nu);
        let mut y = h;
        for (col, &v) in self.eq_solves.iter().zip(&nu) {
            for (yi, &ci) in y.iter_mut().zip(col) {
                *yi = *yi - ci * v;
            }
        }
        (y, nu)
    }

    /// Newton step and equality multipliers, with two rounds of iterative
    /// refinement on the scaled KKT system.
    pub(crate) fn direction(&self) -> (Vec<T>, Vec<T>) {
        let b: Vec<T> = self
            .grad
            .iter()
            .zip(&self.scale)
            .map(|(&g, &s)| -g * s)
            .collect();
        let (mut y, mut nu) = self.kkt_solve(&b, &self.residual);
        for _ in 0..2 {
            let mut r1: Vec<T> = b
                .iter()
                .zip(self.apply_scaled(&y))
                .map(|(&a, h)| a - h)
                .collect();
            for (row, &v) in self.eq_rows.iter().zip(&nu) {
                for &(i, x) in row {
                    r1[i] = r1[i] - x * v;
                }
            }
            let r2: Vec<T> = self
                .eq_rows
                .iter()
                .zip(&self.residual)
                .map(|(row, &e)| e - sparse_dot(row, &y))
                .collect();
            let (dy, dnu) = self.kkt_solve(&r1, &r2);
            for (a, b) in y.iter_mut().zip(dy) {
                *a = *a + b;
            }
            for (a, b) in nu.iter_mut().zip(dnu) {
                *a = *a + b;
            }
        }
        let step = y.iter().zip(&self.scale).map(|(&v, &s)| v * s).collect();
        (step, nu)
    }

    /// Unscaled Hessian times a vector.
    #[cfg(test)]
    pub(crate) fn apply(&self, v: &[T]) -> Vec<T> {
        let inner: Vec<T> = v.iter().zip(&self.scale).map(|(&x, &s)| x / s).collect();
        self.apply_scaled(&inner)
            .iter()
            .zip(&self.scale)
            .map(|(&x, &s)| x / s)
            .collect()
    }

    #[cfg(test)]
    pub(crate) fn residual(&self) -> &[T] {
        &self.residual
    }
}

pub(crate) mod dense {
    use crate::scalar::Real;

    /// In-place lower Cholesky factor of a row-major SPD matrix.
    pub(crate) fn cholesky<T: Real>(a: &mut [T], n: usize) -> bool {
        for j in 0..n {
            let mut diag = a[j * n + j];
            for k in 0..j {
                diag = diag - a[j * n + k] * a[j * n + k];
            }
            if !(diag > T::zero()) {
                return false;
            }
            let root = diag.sqrt();
            a[j * n + j] = root;
            for i in (j + 1)..n {
                let mut v = a[i * n + j];
                for k in 0..j {
                    v = v - a[i * n + k] * a[j * n + k];
                }
                a[i * n + j] = v / root;
            }
        }
        true
    }

    pub(crate) fn cholesky_solve<T: Real>(factor: &[T], n: usize, b: &mut [T]) {
        for i in 0..n {
            let mut v = b[i];
            for k in 0..i {
                v = v - factor[i * n + k] * b[k];
            }
            b[i] = v / factor[i * n + i];
        }
        for i in (0..n).rev() {
            let mut v = b[i];
            for k in (i + 1)..n {
                v = v - factor[k * n + i] * b[k];
            }
            b[i] = v / factor[i * n + i];
        }
    }

    /// Cholesky of `D·A·D` with `D = diag(A)^(-1/2)`, after symmetrizing `A`.
    #[derive(Debug, Clone, Default)]
    pub(crate) struct ScaledFactor<T> {
        n: usize,
        factor: Vec<T>,
        scale: Vec<T>,
    }

    impl<T: Real> ScaledFactor<T> {
        pub(crate) fn new(mut a: Vec<T>, n: usize) -> Option<Self> {
            let mut scale = Vec::with_capacity(n);
            for i in 0..n {
                let diag = a[i * n + i];
                if !(diag > T::zero() && diag.is_finite()) {
                    return None;
                }
                scale.push(diag.sqrt().recip());
            }
            for i in 0..n {
                for j in 0..i {
                    let avg = (a[i * n + j] + a[j * n + i]) / T::lit(2.0) * scale[i] * scale[j];
                    a[i * n + j] = avg;
                    a[j * n + i] = avg;
                }
                a[i * n + i] = T::one();
            }
            cholesky(&mut a, n).then_some(Self {
                n,
                factor: a,
                scale,
            })
        }

        pub(crate) fn solve(&self, b: &mut [T]) {
            for (v, &s) in b.iter_mut().zip(&self.scale) {
                *v = *v * s;
            }
            cholesky_solve(&self.factor, self.n, b);
            for (v, &s) in b.iter_mut().zip(&self.scale) {
                *v = *v * s;
            }
        }
    }
}

/// Newton decrement below which a barrier stage counts as centered.
const CENTERED: f64 = 1e-9;
/// Looser decrement accepted when rounding stops the line search.
const CENTERED_ROUGH: f64 = 1e-5;

enum Centering {
    Done,
    MaxIterations,
    Stalled,
}

fn center<T: Real>(
    problem: &Barrier<T>,
    x: &mut Vec<T>,
    tau: T,
    max_steps: usize,
    steps: &mut usize,
) -> Centering {
    let keep = T::lit(0.99);
    for _ in 0..max_steps {
        let Some(sys) = problem.assemble(x, tau) else {
            return Centering::Stalled;
        };
        let (dir, _) = sys.direction();
        let slope: T = sys.gradient().iter().zip(&dir).map(|(&g, &d)| g * d).sum();
        let decrement = -slope;
        if !decrement.is_finite() {
            return Centering::Stalled;
        }
        if decrement / T::lit(2.0) <= T::lit(CENTERED) {
            return Centering::Done;
        }
        *steps += 1;

        // largest step keeping every simple bound strictly satisfied
        let mut step = T::one();
        let mut limit = |value: T, change: T| {
            if change < T::zero() {
                step = step.min(keep * value / -change);
            }
        };
        for p in 0..problem.pairs() {
            limit(x[2 * p], dir[2 * p]);
            limit(x[2 * p + 1] - problem.l_floor, dir[2 * p + 1]);
        }
        let ti = problem.t_index();
        limit(x[ti] - problem.t_floor, dir[ti]);
        for n in 0..problem.workers {
            let si = problem.sigma_index(n);
            limit(x[si], dir[si]);
        }

        let old = problem.slacks(x).expect("iterate is interior");
        let mut accepted = false;
        while step > T::lit(1e-14) {
            let trial: Vec<T> = x.iter().zip(&dir).map(|(&a, &d)| a + step * d).collect();
            if let Some(new) = problem.slacks(&trial) {
                if Barrier::barrier_change(&old, &new, tau) <= T::lit(0.01) * step * slope {
                    *x = trial;
                    accepted = true;
                    break;
                }
            }
            step = step / T::lit(2.0);
        }
        if !accepted {
            // one ulp of t moves the barrier by about τ·ε·t, so smaller
            // decreases cannot be resolved by the line search
            let resolution = T::lit(100.0) * T::epsilon() * tau * x[problem.t_index()].abs();
            return if decrement / T::lit(2.0) <= T::lit(CENTERED_ROUGH).max(resolution) {
                Centering::Done
            } else {
                Centering::Stalled
            };
        }
    }
    Centering::MaxIterations
}

/// Solves the subproblem from the expansion point, which must be strictly
/// feasible. The returned point is the last interior iterate.
pub fn solve_subproblem<T: Real>(
    spec: &SubproblemSpec<'_, T>,
    options: &BarrierOptions<T>,
) -> Result<(ScaPoint<T>, SolverDiagnostics<T>)> {
    let problem = Barrier::new(spec);
    let s = spec.scale;
    let (masters, workers) = (problem.masters, problem.workers);
    let mut x = problem.start(spec.expansion.t / s);
    if problem.slacks(&x).is_none() {
        return Err(Error::InfeasibleStart(
            "expansion point is not strictly inside the subproblem".into(),
        ));
    }

    let terms = T::lit(problem.term_count() as f64);
    let mut tau = terms / problem.objective_t(&x).max(T::tol(1e-12));
    let mut diag = SolverDiagnostics {
        outer_barrier_stages: 0,
        newton_steps_total: 0,
        final_duality_gap_bound: T::infinity(),
        max_constraint_violation: T::zero(),
        status: SolverStatus::MaxIterations,
        stage_objectives: Vec::new(),
    };
    for _ in 0..options.max_stages {
        let outcome = center(
            &problem,
            &mut x,
            tau,
            options.max_newton_per_stage,
            &mut diag.newton_steps_total,
        );
        diag.outer_barrier_stages += 1;
        diag.stage_objectives.push(problem.objective_t(&x) * s);
        match outcome {
            Centering::Stalled => {
                diag.status = SolverStatus::NumericalFailure;
                break;
            }
            Centering::MaxIterations => diag.status = SolverStatus::MaxIterations,
            Centering::Done => {}
        }
        let gap = terms / tau * s;
        diag.final_duality_gap_bound = gap;
        if gap <= options.gap_tol * (T::one() + problem.objective_t(&x).abs() * s) {
            if !matches!(outcome, Centering::MaxIterations) {
                diag.status = SolverStatus::Optimal;
            }
            break;
        }
        tau = tau * options.growth;
    }

    let k = Matrix::from_fn(masters, workers, |m, n| x[2 * (m * workers + n)]);
    let (q, _) = problem.terms(&x);
    let mut violation = T::zero();
    for &v in &q {
        violation = violation.max(v * s);
    }
    for n in 0..workers {
        violation = violation.max(k.column_sum(n) - T::one());
    }
    diag.max_constraint_violation = violation;

    let l = Matrix::from_fn(masters, workers, |m, n| x[2 * (m * workers + n) + 1] * s);
    let t = problem.objective_t(&x) * s;
    Ok((ScaPoint { k, l, t }, diag))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocation::{optimal_loads_for_master, pair_values};
    use crate::dedicated::simple_greedy;
    use crate::sca::{dedicated_point, interior_start, majorized_constraint, ScaConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn instance(m: usize, n: usize, seed: u64) -> ProblemInstance<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = Matrix::from_fn(m, n, |_, _| rng.gen_range(1.0..5.0));
        let a = u.map(|x| 1.0 / x);
        ProblemInstance::new(u, a, vec![100_000; m], vec![1; m]).unwrap()
    }

    fn start(inst: &ProblemInstance<f64>) -> ScaPoint<f64> {
        let pairs = pair_values(inst).unwrap();
        let sol = simple_greedy(inst, &pairs).unwrap();
        interior_start(
            inst,
            &pairs,
            &dedicated_point(&sol).unwrap(),
            &ScaConfig::default(),
        )
        .unwrap()
    }

    fn spec<'a>(inst: &'a ProblemInstance<f64>, z: &'a ScaPoint<f64>) -> SubproblemSpec<'a, f64> {
        SubproblemSpec {
            instance: inst,
            expansion: z,
            l_floor: 1e-6,
            t_floor: 1e-9,
            scale: 100_000.0,
        }
    }

    fn dense_hessian(sys: &NewtonSystem<f64>, n: usize) -> Vec<f64> {
        let mut h = vec![0.0; n * n];
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            for (i, v) in sys.apply(&e).into_iter().enumerate() {
                h[i * n + j] = v;
            }
        }
        h
    }

    #[test]
    fn structured_solve_matches_dense_cholesky() {
        let inst = instance(3, 7, 1);
        let z = start(&inst);
        let problem = Barrier::new(&spec(&inst, &z));
        let x = problem.start(z.t / 100_000.0);
        let (n, w) = (problem.dim(), problem.workers);
        // equality rows: Σ_m k_{m,n} + σ_n
        let mut a = vec![vec![0.0; n]; w];
        for (col, row) in a.iter_mut().enumerate() {
            for m in 0..problem.masters {
                row[2 * (m * w + col)] = 1.0;
            }
            row[problem.sigma_index(col)] = 1.0;
        }
        for tau in [10.0, 1e4, 1e8] {
            let sys = problem.assemble(&x, tau).unwrap();
            let (structured, _) = sys.direction();

            let mut h = dense_hessian(&sys, n);
            assert!(dense::cholesky(&mut h, n));
            let solve = |b: &[f64]| {
                let mut b = b.to_vec();
                dense::cholesky_solve(&h, n, &mut b);
                b
            };
            let neg: Vec<f64> = sys.gradient().iter().map(|g| -g).collect();
            let free = solve(&neg);
            let cols: Vec<Vec<f64>> = a.iter().map(|r| solve(r)).collect();
            let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>();
            let mut schur: Vec<f64> = (0..w * w)
                .map(|ij| dot(&a[ij / w], &cols[ij % w]))
                .collect();
            let mut nu: Vec<f64> = (0..w)
                .map(|i| dot(&a[i], &free) - sys.residual()[i])
                .collect();
            assert!(dense::cholesky(&mut schur, w));
            dense::cholesky_solve(&schur, w, &mut nu);
            let expected: Vec<f64> = (0..n)
                .map(|i| free[i] - (0..w).map(|j| cols[j][i] * nu[j]).sum::<f64>())
                .collect();

            let scale = expected.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
            for (s, d) in structured.iter().zip(&expected) {
                assert!((s - d).abs() <= 1e-7 * scale, "tau {tau}: {s} vs {d}");
            }
        }
    }

    #[test]
    fn barrier_gradient_and_hessian_match_finite_differences() {
        let inst = instance(2, 4, 2);
        let z = start(&inst);
        let problem = Barrier::new(&spec(&inst, &z));
        // pull k and t well inside so finite differences stay in the domain
        let mut x = problem.start(z.t / 100_000.0 * 1.05);
        for p in 0..problem.pairs() {
            x[2 * p] = x[2 * p] * 0.97 + 0.01;
        }
        for col in 0..problem.workers {
            x[problem.sigma_index(col)] = 1.0 - (0..2).map(|m| x[2 * (m * 4 + col)]).sum::<f64>();
        }
        let tau = 50.0;
        let phi = |y: &[f64]| -> f64 {
            let s = problem.slacks(y).unwrap();
            tau * s.t - s.logs.iter().map(|v| v.ln()).sum::<f64>()
        };
        let sys = problem.assemble(&x, tau).unwrap();
        let n = problem.dim();
        let hess = dense_hessian(&sys, n);
        for i in 0..n {
            let h = 1e-6 * x[i].abs().max(1e-3);
            let mut hi = x.clone();
            let mut lo = x.clone();
            hi[i] += h;
            lo[i] -= h;
            let fd = (phi(&hi) - phi(&lo)) / (2.0 * h);
            let g = sys.gradient()[i];
            assert!(
                (fd - g).abs() <= 1e-5 * g.abs().max(1.0),
                "grad {i}: {fd} vs {g}"
            );
            let gh = problem.assemble(&hi, tau).unwrap();
            let gl = problem.assemble(&lo, tau).unwrap();
            for j in 0..n {
                let fd = (gh.gradient()[j] - gl.gradient()[j]) / (2.0 * h);
                let an = hess[j * n + i];
                assert!(
                    (fd - an).abs() <= 1e-4 * an.abs().max(1.0),
                    "hess {j},{i}: {fd} vs {an}"
                );
            }
        }
    }

    #[test]
    fn subproblem_descends_and_stays_feasible() {
        let inst = instance(2, 8, 3);
        let z = start(&inst);
        let (w, diag) = solve_subproblem(&spec(&inst, &z), &BarrierOptions::default()).unwrap();
        assert_eq!(diag.status, SolverStatus::Optimal);
        assert!(w.t <= z.t);
        assert!(diag.max_constraint_violation <= 1e-8);
        assert!(diag.final_duality_gap_bound <= 1e-8 * (1.0 + w.t));
        for m in 0..2 {
            assert!(majorized_constraint(&inst, m, &w, &z, 100_000.0).unwrap() <= 1e-8);
        }
        for pair in diag.stage_objectives.windows(2) {
            assert!(pair[1] <= pair[0] * (1.0 + 1e-12));
        }
    }

    #[test]
    fn barrier_schedule_does_not_change_the_answer() {
        let inst = instance(2, 6, 4);
        let z = start(&inst);
        let (a, _) = solve_subproblem(&spec(&inst, &z), &BarrierOptions::default()).unwrap();
        let slow = BarrierOptions {
            growth: 4.0,
            ..BarrierOptions::default()
        };
        let (b, _) = solve_subproblem(&spec(&inst, &z), &slow).unwrap();
        assert!((a.t - b.t).abs() <= 1e-6 * a.t, "{} vs {}", a.t, b.t);
    }

    #[test]
    fn one_step_near_the_closed_form() {
        // one fast worker carries the load; the second barely matters
        let u = Matrix::from_rows(&[[2.0, 1e-3]]);
        let a = Matrix::from_rows(&[[0.5, 1.0]]);
        let inst: ProblemInstance<f64> = ProblemInstance::new(u, a, vec![1000], vec![1]).unwrap();
        let pairs = pair_values(&inst).unwrap();
        let best = optimal_loads_for_master(&inst, &pairs, 0, &[0]).unwrap();
        let k = Matrix::from_rows(&[[1.0, 0.0]]);
        let l = Matrix::from_rows(&[[best.loads[0], 0.0]]);
        let exact = ScaPoint::new(k, l, best.t).unwrap();
        let z = interior_start(&inst, &pairs, &exact, &ScaConfig::default()).unwrap();
        let sp = SubproblemSpec {
            instance: &inst,
            expansion: &z,
            l_floor: 1e-6,
            t_floor: 1e-9,
            scale: 1000.0,
        };
        let (w, _) = solve_subproblem(&sp, &BarrierOptions::default()).unwrap();
        assert!(
            (w.t - best.t).abs() <= 5e-3 * best.t,
            "{} vs {}",
            w.t,
            best.t
        );
    }

    #[test]
    fn feasibility_restore_examples() {
        let inst = instance(2, 4, 5);
        let pairs = pair_values(&inst).unwrap();
        let sol = simple_greedy(&inst, &pairs).unwrap();
        let mut p = dedicated_point(&sol).unwrap();
        p.t *= 1.5;
        assert_eq!(feasibility_restore(&p, &inst).unwrap().t, p.t);

        // one active worker per master, starting from t = 0
        let k = Matrix::from_rows(&[[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]]);
        let l = Matrix::from_rows(&[[150_000.0, 0.0, 0.0, 0.0], [0.0, 150_000.0, 0.0, 0.0]]);
        let zero = ScaPoint {
            k: k.clone(),
            l: l.clone(),
            t: 0.0,
        };
        let fixed = feasibility_restore(&zero, &inst).unwrap();
        let shift = (inst.a(0, 0) * 150_000.0).max(inst.a(1, 1) * 150_000.0);
        assert!(fixed.t >= shift);
        for m in 0..2 {
            assert!(fixed.constraint_value(&inst, m) <= 0.0);
        }

        let mut idle = zero.clone();
        idle.k = Matrix::from_rows(&[[1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 0.0]]);
        assert!(matches!(
            feasibility_restore(&idle, &inst),
            Err(Error::UnboundedTime(1))
        ));
    }

    #[test]
    fn the_worst_master_constraint_binds_at_the_optimum() {
        for seed in 0..4 {
            let inst = instance(3, 9, 20 + seed);
            let z = start(&inst);
            let (w, _) = solve_subproblem(&spec(&inst, &z), &BarrierOptions::default()).unwrap();
            let worst = (0..3)
                .map(|m| majorized_constraint(&inst, m, &w, &z, 100_000.0).unwrap())
                .fold(f64::NEG_INFINITY, f64::max);
            assert!((-1e-4..=1e-8).contains(&worst), "seed {seed}: {worst}");
        }
    }
}
