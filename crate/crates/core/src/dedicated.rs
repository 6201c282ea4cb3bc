//! Dedicated worker assignment as max-min allocation.
//!
//! Each master is an agent whose value is `V_m = Σ_{n owned} v[m][n]`; the
//! optimal completion time of an assignment is `1 / min_m V_m`. Ties are
//! always broken towards the lowest master index, then the lowest worker index.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::allocation::{optimal_schedule, PairValues};
use crate::error::{Error, Result};
use crate::model::{Assignment, LoadAllocation, Matrix, ProblemInstance, Recovery, Schedule};
use crate::scalar::Real;

/// Upper bound on `M^N` for [`brute_force`].
pub const BRUTE_FORCE_LIMIT: u64 = 100_000_000;

/// Local-search passes allowed per iteration of [`iterated_greedy`].
const MAX_LOCAL_PASSES: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GreedyConfig {
    pub max_iterations: usize,
    /// Workers removed and greedily re-inserted in each exploration phase.
    pub exploration_size: usize,
    pub rng_seed: u64,
    /// Stop after this many consecutive iterations without improvement.
    pub no_improve_stop: usize,
}

impl GreedyConfig {
    /// Defaults with an exploration size of `⌊N/M⌋`, capped at `N − 1`.
    pub fn new(num_masters: usize, num_workers: usize, rng_seed: u64) -> Self {
        Self {
            max_iterations: 100,
            exploration_size: (num_workers / num_masters.max(1)).min(num_workers.saturating_sub(1)),
            rng_seed,
            no_improve_stop: 10,
        }
    }

    fn validate(&self, num_workers: usize) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig(
                "max_iterations must be at least 1".into(),
            ));
        }
        if self.exploration_size >= num_workers {
            return Err(Error::InvalidConfig(format!(
                "exploration size {} must be below the worker count {num_workers}",
                self.exploration_size
            )));
        }
        Ok(())
    }
}

/// A complete worker-to-master map with its per-master value sums.
#[derive(Debug, Clone, PartialEq)]
pub struct MaxMinAllocation<T> {
    pub owners: Vec<usize>,
    pub sums: Vec<T>,
}

impl<T: Real> MaxMinAllocation<T> {
    fn from_owners(values: &Matrix<T>, owners: Vec<usize>) -> Self {
        let sums = value_sums(values, &owners);
        Self { owners, sums }
    }

    pub fn min_value(&self) -> T {
        self.sums.iter().copied().fold(T::infinity(), T::min)
    }
}

/// Per-master sums accumulated in ascending worker order.
fn value_sums<T: Real>(values: &Matrix<T>, owners: &[usize]) -> Vec<T> {
    let mut sums = vec![T::zero(); values.rows()];
    for (n, &m) in owners.iter().enumerate() {
        sums[m] = sums[m] + values.get(m, n);
    }
    sums
}

fn argmin<T: Real>(xs: impl Iterator<Item = (usize, T)>) -> Option<usize> {
    let mut best: Option<(usize, T)> = None;
    for (i, x) in xs {
        if best.is_none_or(|(_, b)| x < b) {
            best = Some((i, x));
        }
    }
    best.map(|(i, _)| i)
}

fn min_of<T: Real>(xs: &[T]) -> T {
    xs.iter().copied().fold(T::infinity(), T::min)
}

/// Largest-value-first greedy: seed every master with its best available
/// worker, then repeatedly hand the poorest master its best remaining worker.
pub fn simple_greedy_values<T: Real>(values: &Matrix<T>) -> MaxMinAllocation<T> {
    let (m_count, n_count) = (values.rows(), values.cols());
    let mut owners = vec![usize::MAX; n_count];
    let mut sums = vec![T::zero(); m_count];
    let mut master_open = vec![true; m_count];
    let mut worker_free = vec![true; n_count];

    for _ in 0..m_count.min(n_count) {
        let mut best: Option<(usize, usize, T)> = None;
        for m in (0..m_count).filter(|&m| master_open[m]) {
            for n in (0..n_count).filter(|&n| worker_free[n]) {
                let v = values.get(m, n);
                if best.is_none_or(|(_, _, b)| v > b) {
                    best = Some((m, n, v));
                }
            }
        }
        let (m, n, v) = best.expect("open master and free worker");
        owners[n] = m;
        sums[m] = sums[m] + v;
        master_open[m] = false;
        worker_free[n] = false;
    }

    while worker_free.iter().any(|&f| f) {
        let m = argmin(sums.iter().copied().enumerate()).expect("at least one master");
        let mut best: Option<(usize, T)> = None;
        for n in (0..n_count).filter(|&n| worker_free[n]) {
            let v = values.get(m, n);
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((n, v));
            }
        }
        let (n, v) = best.expect("free worker");
        owners[n] = m;
        sums[m] = sums[m] + v;
        worker_free[n] = false;
    }
    MaxMinAllocation::from_owners(values, owners)
}

/// Result of [`iterated_greedy_values`].
#[derive(Debug, Clone, PartialEq)]
pub struct IteratedGreedyOutcome<T> {
    /// Best local optimum seen before any exploration phase.
    pub allocation: MaxMinAllocation<T>,
    /// Objective after the first insertion/interchange phase from the
    /// argmax initialization.
    pub first_local_optimum: T,
    pub iterations: usize,
}

struct LocalSearch<'a, T> {
    values: &'a Matrix<T>,
    owners: Vec<usize>,
    sums: Vec<T>,
}

impl<T: Real> LocalSearch<'_, T> {
    fn slack(&self) -> T {
        let scale = self.sums.iter().copied().fold(T::zero(), T::max);
        T::lit(1e-12) * scale
    }

    /// Whether replacing `old` by `new` improves the minimum. When the
    /// minimum is zero (some master is empty) fewer empty masters also counts.
    fn improves(&self, old: &[T], new: &[T]) -> bool {
        let (min_old, min_new) = (min_of(old), min_of(new));
        if min_new > min_old + self.slack() {
            return true;
        }
        if min_old == T::zero() && min_new == T::zero() {
            let empties = |xs: &[T]| xs.iter().filter(|&&x| x == T::zero()).count();
            return empties(new) < empties(old);
        }
        false
    }

    fn insertion_pass(&mut self) -> bool {
        let m_count = self.sums.len();
        if m_count < 2 {
            return false;
        }
        let mut changed = false;
        for n in 0..self.owners.len() {
            let from = self.owners[n];
            let to = argmin(
                (0..m_count)
                    .filter(|&m| m != from)
                    .map(|m| (m, self.sums[m])),
            )
            .expect("another master");
            let mut trial = self.sums.clone();
            trial[from] = trial[from] - self.values.get(from, n);
            trial[to] = trial[to] + self.values.get(to, n);
            if self.improves(&self.sums, &trial) {
                self.owners[n] = to;
                self.sums = trial;
                changed = true;
            }
        }
        changed
    }

    fn interchange_pass(&mut self) -> bool {
        let n_count = self.owners.len();
        let mut changed = false;
        for n1 in 0..n_count {
            for n2 in (n1 + 1)..n_count {
                let (m1, m2) = (self.owners[n1], self.owners[n2]);
                if m1 == m2 {
                    continue;
                }
                let v = |m, n| self.values.get(m, n);
                let kept = v(m1, n1) + v(m2, n2);
                let swapped = v(m1, n2) + v(m2, n1);
                if !(kept + T::lit(1e-12) * kept.max(swapped) < swapped) {
                    continue;
                }
                let v_min = min_of(&self.sums);
                let new1 = self.sums[m1] - v(m1, n1) + v(m1, n2);
                let new2 = self.sums[m2] - v(m2, n2) + v(m2, n1);
                let slack = self.slack();
                if new1 > v_min + slack && new2 > v_min + slack {
                    self.sums[m1] = new1;
                    self.sums[m2] = new2;
                    self.owners.swap(n1, n2);
                    changed = true;
                }
            }
        }
        changed
    }

    fn run(&mut self) {
        for _ in 0..MAX_LOCAL_PASSES {
            let inserted = self.insertion_pass();
            let swapped = self.interchange_pass();
            if !inserted && !swapped {
                break;
            }
        }
        // drop accumulated rounding from incremental updates
        self.sums = value_sums(self.values, &self.owners);
    }

    fn explore(&mut self, rng: &mut ChaCha8Rng, count: usize) {
        let n_count = self.owners.len();
        let mut removed: Vec<usize> = sample(rng, n_count, count).into_vec();
        removed.sort_unstable();
        for &n in &removed {
            let m = self.owners[n];
            self.sums[m] = self.sums[m] - self.values.get(m, n);
        }
        while !removed.is_empty() {
            let mut best: Option<(usize, usize, T)> = None;
            for m in 0..self.sums.len() {
                for (i, &n) in removed.iter().enumerate() {
                    let v = self.values.get(m, n);
                    if best.is_none_or(|(_, _, b)| v > b) {
                        best = Some((m, i, v));
                    }
                }
            }
            let (m, i, v) = best.expect("removed worker");
            let n = removed.remove(i);
            self.owners[n] = m;
            self.sums[m] = self.sums[m] + v;
        }
    }
}

/// Ordering key of a local optimum: larger minimum first, then fewer masters
/// with nothing assigned.
fn objective_key<T: Real>(sums: &[T]) -> (T, usize) {
    (
        min_of(sums),
        sums.iter().filter(|&&x| x == T::zero()).count(),
    )
}

/// Iterated greedy: argmax initialization, then repeated insertion and
/// interchange local search separated by random exploration. The simple
/// greedy solution is polished as a second start and replaces the first
/// local optimum when strictly better.
pub fn iterated_greedy_values<T: Real>(
    values: &Matrix<T>,
    config: &GreedyConfig,
) -> Result<IteratedGreedyOutcome<T>> {
    let (m_count, n_count) = (values.rows(), values.cols());
    config.validate(n_count)?;

    let owners: Vec<usize> = (0..n_count)
        .map(|n| {
            let mut best = 0;
            for m in 1..m_count {
                if values.get(m, n) > values.get(best, n) {
                    best = m;
                }
            }
            best
        })
        .collect();
    let sums = value_sums(values, &owners);
    let mut search = LocalSearch {
        values,
        owners,
        sums,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);

    // A second start from the simple greedy solution; kept only if its local
    // optimum is strictly better, so the result never trails simple greedy.
    let mut alternative = if m_count > 1 {
        let simple = simple_greedy_values(values);
        let mut alt = LocalSearch {
            values,
            owners: simple.owners,
            sums: simple.sums,
        };
        alt.run();
        Some(alt)
    } else {
        None
    };

    let mut best: Option<MaxMinAllocation<T>> = None;
    let mut first_local_optimum = T::zero();
    let mut stale = 0;
    let mut iterations = 0;
    for iter in 0..config.max_iterations {
        iterations = iter + 1;
        search.run();
        if iter == 0 {
            first_local_optimum = objective_key(&search.sums).0;
            if let Some(alt) = alternative.take() {
                if objective_key(&alt.sums).0 > first_local_optimum {
                    search = alt;
                }
            }
        }
        let candidate = objective_key(&search.sums);
        let better = match &best {
            None => true,
            Some(b) => {
                let incumbent = objective_key(&b.sums);
                candidate.0 > incumbent.0
                    || (candidate.0 == incumbent.0 && candidate.1 < incumbent.1)
            }
        };
        if better {
            best = Some(MaxMinAllocation {
                owners: search.owners.clone(),
                sums: search.sums.clone(),
            });
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.no_improve_stop {
                break;
            }
        }
        if iter + 1 < config.max_iterations && config.exploration_size > 0 {
            search.explore(&mut rng, config.exploration_size);
        }
    }
    Ok(IteratedGreedyOutcome {
        allocation: best.expect("at least one iteration"),
        first_local_optimum,
        iterations,
    })
}

/// Exact max-min optimum over all `M^N` complete assignments.
///
/// Assignments are ranked by their owner vectors read lexicographically
/// (worker 0 most significant); the smallest maximizer wins ties.
pub fn brute_force_values<T: Real>(values: &Matrix<T>) -> Result<MaxMinAllocation<T>> {
    let (m_count, n_count) = (values.rows(), values.cols());
    let total = (m_count as u64)
        .checked_pow(n_count as u32)
        .filter(|&t| t <= BRUTE_FORCE_LIMIT)
        .ok_or(Error::InstanceTooLarge {
            masters: m_count,
            workers: n_count,
            limit: BRUTE_FORCE_LIMIT,
        })?;

    let decode = |mut index: u64, owners: &mut [usize]| {
        for slot in owners.iter_mut().rev() {
            *slot = (index % m_count as u64) as usize;
            index /= m_count as u64;
        }
    };
    let score = |owners: &[usize]| min_of(&value_sums(values, owners));

    const CHUNK: u64 = 1 << 14;
    let chunks = total.div_ceil(CHUNK);
    let (best_index, _) = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut owners = vec![0usize; n_count];
            let mut best: (u64, T) = (u64::MAX, T::neg_infinity());
            for index in c * CHUNK..((c + 1) * CHUNK).min(total) {
                decode(index, &mut owners);
                let s = score(&owners);
                if s > best.1 {
                    best = (index, s);
                }
            }
            best
        })
        .reduce(
            || (u64::MAX, T::neg_infinity()),
            |a, b| {
                if b.1 > a.1 || (b.1 == a.1 && b.0 < a.0) {
                    b
                } else {
                    a
                }
            },
        );
    let mut owners = vec![0usize; n_count];
    decode(best_index, &mut owners);
    Ok(MaxMinAllocation::from_owners(values, owners))
}

/// A dedicated assignment with its optimal loads.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentSolution<T> {
    pub assignment: Assignment<T>,
    pub loads: LoadAllocation<T>,
    pub per_master_t: Vec<T>,
    /// `min_m V_m`.
    pub objective_min_v: T,
    /// `1 / objective_min_v`, in ms.
    pub t_approx: T,
}

impl<T: Real> AssignmentSolution<T> {
    pub fn from_allocation(
        instance: &ProblemInstance<T>,
        pairs: &PairValues<T>,
        allocation: &MaxMinAllocation<T>,
    ) -> Result<Self> {
        let owners: Vec<Option<usize>> = allocation.owners.iter().map(|&m| Some(m)).collect();
        let assignment = Assignment::dedicated(instance.num_masters(), &owners)?;
        let schedule = optimal_schedule(instance, pairs, assignment)?;
        let objective_min_v = allocation.min_value();
        Ok(Self {
            assignment: schedule.assignment,
            loads: schedule.loads,
            per_master_t: schedule.per_master_t,
            objective_min_v,
            t_approx: objective_min_v.recip(),
        })
    }

    pub fn owners(&self) -> Vec<usize> {
        (0..self.assignment.num_workers())
            .map(|n| self.assignment.owner(n).expect("every worker assigned"))
            .collect()
    }

    pub fn to_schedule(&self) -> Schedule<T> {
        Schedule::predicted(
            self.assignment.clone(),
            self.loads.clone(),
            self.per_master_t.clone(),
        )
    }
}

fn check_dims<T: Real>(instance: &ProblemInstance<T>) -> Result<()> {
    if instance.num_workers() < instance.num_masters() {
        return Err(Error::InvalidInstance("fewer workers than masters".into()));
    }
    Ok(())
}

pub fn simple_greedy<T: Real>(
    instance: &ProblemInstance<T>,
    pairs: &PairValues<T>,
) -> Result<AssignmentSolution<T>> {
    check_dims(instance)?;
    AssignmentSolution::from_allocation(instance, pairs, &simple_greedy_values(pairs.v_matrix()))
}

pub fn iterated_greedy<T: Real>(
    instance: &ProblemInstance<T>,
    pairs: &PairValues<T>,
    config: &GreedyConfig,
) -> Result<AssignmentSolution<T>> {
    check_dims(instance)?;
    let outcome = iterated_greedy_values(pairs.v_matrix(), config)?;
    AssignmentSolution::from_allocation(instance, pairs, &outcome.allocation)
}

pub fn brute_force<T: Real>(
    instance: &ProblemInstance<T>,
    pairs: &PairValues<T>,
) -> Result<AssignmentSolution<T>> {
    check_dims(instance)?;
    AssignmentSolution::from_allocation(instance, pairs, &brute_force_values(pairs.v_matrix())?)
}

/// Contiguous block split: master `m` gets workers `m·N/M .. (m+1)·N/M`.
pub fn block_owners(num_masters: usize, num_workers: usize) -> Result<Vec<usize>> {
    if num_masters == 0 || !num_workers.is_multiple_of(num_masters) {
        return Err(Error::NotDivisible {
            masters: num_masters,
            workers: num_workers,
        });
    }
    let per = num_workers / num_masters;
    Ok((0..num_workers).map(|n| n / per).collect())
}

fn block_assignment<T: Real>(instance: &ProblemInstance<T>) -> Result<Assignment<T>> {
    let owners: Vec<Option<usize>> = block_owners(instance.num_masters(), instance.num_workers())?
        .into_iter()
        .map(Some)
        .collect();
    Assignment::dedicated(instance.num_masters(), &owners)
}

/// Uncoded baseline: block split, each worker holds `L_m·M/N` rows and the
/// master needs every one of them. Completion figures stay pending until a
/// simulation supplies them.
pub fn uncoded_uniform<T: Real>(instance: &ProblemInstance<T>) -> Result<Schedule<T>> {
    let assignment = block_assignment(instance)?;
    let (m_count, n_count) = (instance.num_masters(), instance.num_workers());
    let share = T::lit(m_count as f64) / T::lit(n_count as f64);
    let l = Matrix::from_fn(m_count, n_count, |m, n| {
        if assignment.k(m, n) > T::zero() {
            instance.rows(m) * share
        } else {
            T::zero()
        }
    });
    let loads = LoadAllocation::new(l, &assignment)?;
    Ok(Schedule::pending(assignment, loads, Recovery::Uncoded))
}

/// Coded baseline: block split with the optimal loads per master.
pub fn coded_uniform<T: Real>(
    instance: &ProblemInstance<T>,
    pairs: &PairValues<T>,
) -> Result<Schedule<T>> {
    optimal_schedule(instance, pairs, block_assignment(instance)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocation::{master_rate, pair_values};
    use crate::model::Estimate;

    /// Exhaustive oracle written independently of `brute_force_values`.
    fn enumerate_best(values: &Matrix<f64>) -> f64 {
        let (m_count, n_count) = (values.rows(), values.cols());
        let mut best = f64::NEG_INFINITY;
        let mut owners = vec![0usize; n_count];
        loop {
            let mut sums = vec![0.0; m_count];
            for (n, &m) in owners.iter().enumerate() {
                sums[m] += values.get(m, n);
            }
            best = best.max(sums.iter().copied().fold(f64::INFINITY, f64::min));
            // odometer increment
            let mut i = 0;
            loop {
                if i == n_count {
                    return best;
                }
                owners[i] += 1;
                if owners[i] < m_count {
                    break;
                }
                owners[i] = 0;
                i += 1;
            }
        }
    }

    #[test]
    fn simple_greedy_two_by_two() {
        let v = Matrix::from_rows(&[[3.0, 1.0], [1.0, 2.0]]);
        let out = simple_greedy_values(&v);
        assert_eq!(out.owners, vec![0, 1]);
        assert_eq!(out.min_value(), 2.0);
        assert_eq!(enumerate_best(&v), 2.0);
        assert_eq!(brute_force_values(&v).unwrap().min_value(), 2.0);
    }

    #[test]
    fn single_master_takes_everything() {
        let v = Matrix::from_rows(&[[0.5, 1.5, 2.0, 0.25]]);
        let s = simple_greedy_values(&v);
        assert_eq!(s.owners, vec![0; 4]);
        assert_eq!(s.min_value(), 4.25);
        assert_eq!(brute_force_values(&v).unwrap().min_value(), 4.25);
        let it = iterated_greedy_values(&v, &GreedyConfig::new(1, 4, 3)).unwrap();
        assert_eq!(it.allocation.min_value(), 4.25);
    }

    #[test]
    fn identical_values_split_evenly() {
        let c = 0.125;
        let v = Matrix::filled(3, 12, c);
        let s = simple_greedy_values(&v);
        assert_eq!(s.min_value(), 4.0 * c);
        for m in 0..3 {
            assert_eq!(s.owners.iter().filter(|&&o| o == m).count(), 4);
        }
    }

    #[test]
    fn iterated_greedy_worked_example() {
        let v = Matrix::from_rows(&[[5.0, 4.0, 3.0], [5.0, 1.0, 1.0]]);
        let cfg = GreedyConfig {
            max_iterations: 1,
            ..GreedyConfig::new(2, 3, 0)
        };
        let out = iterated_greedy_values(&v, &cfg).unwrap();
        assert_eq!(out.allocation.owners, vec![1, 0, 0]);
        assert_eq!(out.allocation.sums, vec![7.0, 5.0]);
        assert_eq!(out.first_local_optimum, 5.0);
        assert_eq!(enumerate_best(&v), 5.0);

        let full = iterated_greedy_values(&v, &GreedyConfig::new(2, 3, 9)).unwrap();
        assert_eq!(full.allocation.min_value(), 5.0);
    }

    #[test]
    fn optimal_initialization_is_kept() {
        // every worker's favourite master already balances the sums
        let v = Matrix::from_rows(&[[4.0, 1.0, 4.0, 1.0], [1.0, 4.0, 1.0, 4.0]]);
        let out = iterated_greedy_values(&v, &GreedyConfig::new(2, 4, 1)).unwrap();
        assert_eq!(out.allocation.owners, vec![0, 1, 0, 1]);
        assert_eq!(out.allocation.min_value(), 8.0);
    }

    #[test]
    fn empty_masters_get_filled() {
        // all workers prefer master 0; two masters start empty
        let v = Matrix::from_rows(&[
            [9.0, 9.0, 9.0, 9.0, 9.0, 9.0],
            [1.0, 1.0, 1.0, 1.0, 1.0, 1.0],
            [1.0, 1.0, 1.0, 1.0, 1.0, 1.0],
        ]);
        let out = iterated_greedy_values(&v, &GreedyConfig::new(3, 6, 5)).unwrap();
        assert!(out.allocation.min_value() >= 1.0);
        assert!(out.allocation.min_value() <= enumerate_best(&v));
    }

    #[test]
    fn brute_force_guard_and_tie_break() {
        let big = Matrix::filled(3, 20, 1.0);
        assert!(matches!(
            brute_force_values(&big),
            Err(Error::InstanceTooLarge { .. })
        ));
        // all assignments with a 2/2 split tie; lexicographically smallest is [0,0,1,1]
        let flat = Matrix::filled(2, 4, 1.0);
        assert_eq!(brute_force_values(&flat).unwrap().owners, vec![0, 0, 1, 1]);
    }

    #[test]
    fn greedy_config_validation() {
        let v = Matrix::filled(2, 4, 1.0);
        let mut cfg = GreedyConfig::new(2, 4, 0);
        cfg.exploration_size = 4;
        assert!(iterated_greedy_values(&v, &cfg).is_err());
        cfg.exploration_size = 1;
        cfg.max_iterations = 0;
        assert!(iterated_greedy_values(&v, &cfg).is_err());
    }

    fn instance(m: usize, n: usize, seed: u64) -> ProblemInstance<f64> {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = Matrix::from_fn(m, n, |_, _| rng.gen_range(1.0..5.0));
        let a = u.map(|x| 1.0 / x);
        ProblemInstance::new(u, a, vec![100_000; m], vec![1; m]).unwrap()
    }

    #[test]
    fn uniform_baselines() {
        let inst = instance(2, 20, 1);
        let unc = uncoded_uniform(&inst).unwrap();
        assert_eq!(unc.estimate, Estimate::Pending);
        assert_eq!(unc.recovery, Recovery::Uncoded);
        for m in 0..2 {
            let ws = unc.assignment.workers_of(m);
            assert_eq!(ws, (m * 10..(m + 1) * 10).collect::<Vec<_>>());
            for &n in &ws {
                assert_eq!(unc.loads.l(m, n), 10_000.0);
            }
        }
        let u = Matrix::from_rows(&[[1.0, 2.0]]);
        let small =
            ProblemInstance::new(u.clone(), u.map(|x| 1.0 / x), vec![100], vec![1]).unwrap();
        let s = uncoded_uniform(&small).unwrap();
        assert_eq!(s.loads.matrix().row(0), &[50.0, 50.0]);

        let odd = instance(3, 20, 2);
        assert!(matches!(
            uncoded_uniform(&odd),
            Err(Error::NotDivisible { .. })
        ));
        let pairs = pair_values(&odd).unwrap();
        assert!(coded_uniform(&odd, &pairs).is_err());

        // homogeneous workers get identical loads within a master
        let hom = Matrix::filled(2, 6, 2.0);
        let inst = ProblemInstance::new(
            hom.clone(),
            hom.map(|x| 1.0 / x),
            vec![1000, 500],
            vec![1, 1],
        )
        .unwrap();
        let pairs = pair_values(&inst).unwrap();
        let coded = coded_uniform(&inst, &pairs).unwrap();
        for m in 0..2 {
            let ws = coded.assignment.workers_of(m);
            let first = coded.loads.l(m, ws[0]);
            assert!(ws.iter().all(|&n| coded.loads.l(m, n) == first));
        }
    }

    #[test]
    fn solution_invariants() {
        let inst = instance(3, 9, 4);
        let pairs = pair_values(&inst).unwrap();
        for sol in [
            simple_greedy(&inst, &pairs).unwrap(),
            iterated_greedy(&inst, &pairs, &GreedyConfig::new(3, 9, 4)).unwrap(),
            brute_force(&inst, &pairs).unwrap(),
        ] {
            for n in 0..9 {
                assert_eq!(sol.assignment.matrix().column_sum(n), 1.0);
            }
            let rates: Vec<f64> = (0..3)
                .map(|m| master_rate(&pairs, &sol.assignment, m))
                .collect();
            let min_rate = rates.iter().copied().fold(f64::INFINITY, f64::min);
            assert!((min_rate - sol.objective_min_v).abs() <= 1e-12 * min_rate);
            assert!((sol.t_approx * sol.objective_min_v - 1.0).abs() < 1e-12);
            let sched = sol.to_schedule();
            assert!((sched.t_approx - sol.t_approx).abs() <= 1e-9 * sol.t_approx);
            assert!(sol.loads.covers_rows(&inst));
        }
    }

    #[test]
    fn iterated_greedy_is_deterministic() {
        let inst = instance(3, 12, 8);
        let pairs = pair_values(&inst).unwrap();
        let cfg = GreedyConfig::new(3, 12, 77);
        let a = iterated_greedy(&inst, &pairs, &cfg).unwrap();
        let b = iterated_greedy(&inst, &pairs, &cfg).unwrap();
        assert_eq!(a, b);
    }
}
