//! Closed-form optimal load allocation for a fixed worker set.
//!
//! For master `m` served by workers `Ω`, the allocation minimizing the
//! expectation-based completion time is
//!
//! ```text
//! t*   = L / Σ_{n∈Ω} u_n / (1 + u_n φ_n)
//! l*_n = t* / φ_n
//! ```
//!
//! where `φ = (−W₋₁(−e^{−ua−1}) − 1) / u` fixes the optimal ratio `t/l` of
//! every pair. Equivalently `(1 + uφ)·e^{−u(φ−a)} = 1`.

use crate::error::{Error, Result};
use crate::lambertw::w_minus1_from_parts;
use crate::model::{
    expected_results, Assignment, LoadAllocation, Matrix, ProblemInstance, Schedule,
};
use crate::scalar::{exp_clamped, Real};

/// Optimal time-to-load ratio `φ` of one (master, worker) pair.
pub fn compute_phi<T: Real>(u: T, a: T) -> Result<T> {
    let ua = u * a;
    if !(ua > T::zero() && ua.is_finite()) {
        return Err(Error::LambertDomain(-(-(ua.to_f64_lossy()) - 1.0).exp()));
    }
    // W₋₁(−e^{−ua−1}); the branch-point gap 1 − e^{−ua} is formed directly
    let (w, _) = w_minus1_from_parts(-ua - T::one(), -(-ua).exp_m1());
    Ok((-w - T::one()) / u)
}

/// Cached per-pair constants: `φ[m][n]` and the max-min value
/// `v[m][n] = u / (L_m (1 + u φ))` in 1/ms.
#[derive(Debug, Clone, PartialEq)]
pub struct PairValues<T> {
    phi: Matrix<T>,
    v: Matrix<T>,
}

impl<T: Real> PairValues<T> {
    #[inline]
    pub fn phi(&self, m: usize, n: usize) -> T {
        self.phi.get(m, n)
    }

    #[inline]
    pub fn v(&self, m: usize, n: usize) -> T {
        self.v.get(m, n)
    }

    pub fn phi_matrix(&self) -> &Matrix<T> {
        &self.phi
    }

    pub fn v_matrix(&self) -> &Matrix<T> {
        &self.v
    }
}

pub fn pair_values<T: Real>(instance: &ProblemInstance<T>) -> Result<PairValues<T>> {
    let (m_count, n_count) = (instance.num_masters(), instance.num_workers());
    let mut phi = Matrix::filled(m_count, n_count, T::zero());
    let mut v = Matrix::filled(m_count, n_count, T::zero());
    for m in 0..m_count {
        for n in 0..n_count {
            let u = instance.u(m, n);
            let p = compute_phi(u, instance.a(m, n))?;
            phi.set(m, n, p);
            v.set(m, n, u / (instance.rows(m) * (T::one() + u * p)));
        }
    }
    Ok(PairValues { phi, v })
}

/// `V_m = Σ_n k[m][n]·v[m][n]`, the reciprocal of master `m`'s optimal
/// completion time under a dedicated assignment.
pub fn master_rate<T: Real>(pairs: &PairValues<T>, assignment: &Assignment<T>, m: usize) -> T {
    (0..assignment.num_workers())
        .map(|n| assignment.k(m, n) * pairs.v(m, n))
        .sum()
}

/// Optimal loads of one master over a worker set.
#[derive(Debug, Clone, PartialEq)]
pub struct MasterLoads<T> {
    pub workers: Vec<usize>,
    pub loads: Vec<T>,
    pub t: T,
}

pub fn optimal_loads_for_master<T: Real>(
    instance: &ProblemInstance<T>,
    pairs: &PairValues<T>,
    m: usize,
    workers: &[usize],
) -> Result<MasterLoads<T>> {
    instance.check_master(m)?;
    if workers.is_empty() {
        return Err(Error::EmptyWorkerSet(m));
    }
    if let Some(&bad) = workers.iter().find(|&&n| n >= instance.num_workers()) {
        return Err(Error::IndexOutOfRange {
            what: "worker",
            index: bad,
            len: instance.num_workers(),
        });
    }
    let capacity: T = workers
        .iter()
        .map(|&n| {
            let u = instance.u(m, n);
            u / (T::one() + u * pairs.phi(m, n))
        })
        .sum();
    let t = instance.rows(m) / capacity;
    Ok(MasterLoads {
        workers: workers.to_vec(),
        loads: workers.iter().map(|&n| t / pairs.phi(m, n)).collect(),
        t,
    })
}

/// Dedicated schedule with the optimal loads on every master's worker set.
pub fn optimal_schedule<T: Real>(
    instance: &ProblemInstance<T>,
    pairs: &PairValues<T>,
    assignment: Assignment<T>,
) -> Result<Schedule<T>> {
    let (m_count, n_count) = (instance.num_masters(), instance.num_workers());
    let mut l = Matrix::filled(m_count, n_count, T::zero());
    let mut per_master = Vec::with_capacity(m_count);
    for m in 0..m_count {
        let opt = optimal_loads_for_master(instance, pairs, m, &assignment.workers_of(m))?;
        for (&n, &load) in opt.workers.iter().zip(&opt.loads) {
            l.set(m, n, load);
        }
        per_master.push(opt.t);
    }
    let loads = LoadAllocation::new(l, &assignment)?;
    Ok(Schedule::predicted(assignment, loads, per_master))
}

/// KKT diagnostics of a single-master allocation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktReport<T> {
    pub lambda: T,
    pub stationarity_residual_l: T,
    pub stationarity_residual_t: T,
    pub complementarity_residual: T,
}

/// Evaluates the Lagrangian stationarity conditions and the complementary
/// slackness gap at `(loads, t)`, with `λ` recovered from `∂ℒ/∂t = 0`.
pub fn verify_kkt<T: Real>(
    instance: &ProblemInstance<T>,
    m: usize,
    workers: &[usize],
    loads: &[T],
    t: T,
) -> KktReport<T> {
    let decay = |n: usize, l: T| {
        let (u, a) = (instance.u(m, n), instance.a(m, n));
        exp_clamped(-(u / l) * (t - a * l))
    };
    let rate_sum: T = workers
        .iter()
        .zip(loads)
        .map(|(&n, &l)| instance.u(m, n) * decay(n, l))
        .sum();
    let lambda = rate_sum.recip();

    let stationarity_residual_l = workers
        .iter()
        .zip(loads)
        .map(|(&n, &l)| {
            let u = instance.u(m, n);
            (lambda * ((T::one() + u * t / l) * decay(n, l) - T::one())).abs()
        })
        .fold(T::zero(), T::max);
    let stationarity_residual_t = (T::one() - lambda * rate_sum).abs();
    let expected: T = workers
        .iter()
        .zip(loads)
        .map(|(&n, &l)| expected_results(l, T::one(), instance.u(m, n), instance.a(m, n), t))
        .sum();

    KktReport {
        lambda,
        stationarity_residual_l,
        stationarity_residual_t,
        complementarity_residual: (instance.rows(m) - expected).abs(),
    }
}

/// Integer loads: round half up, then add rows to the largest-φ active
/// worker of any master that fell below `L_m`.
pub fn round_loads<T: Real>(
    instance: &ProblemInstance<T>,
    pairs: &PairValues<T>,
    assignment: &Assignment<T>,
    loads: &LoadAllocation<T>,
) -> Result<LoadAllocation<T>> {
    let half = T::lit(0.5);
    let mut l = loads.matrix().map(|x| (x + half).floor());
    for m in 0..instance.num_masters() {
        let active = assignment.workers_of(m);
        let Some(&target) = active.iter().reduce(|best, n| {
            if pairs.phi(m, *n) > pairs.phi(m, *best) {
                n
            } else {
                best
            }
        }) else {
            continue;
        };
        let deficit = instance.rows(m) - l.row_sum(m);
        if deficit > T::zero() {
            l.set(m, target, l.get(m, target) + deficit.ceil());
        }
    }
    LoadAllocation::new(l, assignment)
}
