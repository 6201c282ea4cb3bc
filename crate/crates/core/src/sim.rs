//! Seeded Monte Carlo evaluation of schedules.
//!
//! Trial `i` draws from its own ChaCha8 stream (`seed`, stream `i`) in a
//! fixed worker order, and per-trial results are reduced in trial order, so a
//! report depends only on the seed and trial count, never on thread count.

use rand::distributions::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{sample_completion_time, AssignmentMode, ProblemInstance, Recovery, Schedule};
use crate::scalar::Real;

/// Relative shortfall tolerated when checking that a master's results cover `L_m`.
const COVERAGE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimConfig {
    pub trials: usize,
    pub rng_seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            trials: 10_000,
            rng_seed: 0,
        }
    }
}

/// Time at which the cumulative load of the finished workers first reaches
/// `required`, or `None` if it never does. `draws` holds `(finish time, load)`.
pub fn coded_completion<T: Real>(draws: &mut [(T, T)], required: T) -> Option<T> {
    draws.sort_by(|x, y| x.0.partial_cmp(&y.0).expect("finite sampled times"));
    let threshold = required * (T::one() - T::lit(COVERAGE_SLACK));
    let mut done = T::zero();
    for &(time, load) in draws.iter() {
        done = done + load;
        if done >= threshold {
            return Some(time);
        }
    }
    None
}

/// Uncoded recovery needs every assigned worker.
pub fn uncoded_completion<T: Real>(draws: &[(T, T)]) -> Option<T> {
    draws.iter().map(|d| d.0).reduce(T::max)
}

fn uniform<T: Real>(rng: &mut impl Rng) -> T {
    T::lit(rng.sample::<f64, _>(Open01))
}

fn master_completion<T: Real>(draws: &mut [(T, T)], required: T, recovery: Recovery) -> Option<T> {
    match recovery {
        Recovery::Coded => coded_completion(draws, required),
        Recovery::Uncoded => uncoded_completion(draws),
    }
}

/// One realization of a dedicated schedule: per-master completion times.
/// A master whose loads cannot cover `L_m` reports `+∞`.
pub fn run_trial_dedicated<T: Real>(
    schedule: &Schedule<T>,
    instance: &ProblemInstance<T>,
    rng: &mut impl Rng,
) -> Vec<T> {
    let (m_count, n_count) = (instance.num_masters(), instance.num_workers());
    let mut draws: Vec<Vec<(T, T)>> = vec![Vec::new(); m_count];
    for n in 0..n_count {
        for (m, bucket) in draws.iter_mut().enumerate() {
            let l = schedule.loads.l(m, n);
            if schedule.assignment.k(m, n) > T::zero() && l > T::zero() {
                let time =
                    sample_completion_time(l, instance.u(m, n), instance.a(m, n), uniform(rng))
                        .expect("open-interval uniform");
                bucket.push((time, l));
            }
        }
    }
    draws
        .iter_mut()
        .enumerate()
        .map(|(m, d)| {
            master_completion(d, instance.rows(m), schedule.recovery).unwrap_or(T::infinity())
        })
        .collect()
}

/// One realization of a probabilistic schedule. Each worker draws a master
/// (or idles) from its column of `k`; `None` marks a master whose realized
/// load falls short of `L_m`.
pub fn run_trial_probabilistic<T: Real>(
    schedule: &Schedule<T>,
    instance: &ProblemInstance<T>,
    rng: &mut impl Rng,
) -> Vec<Option<T>> {
    let (m_count, n_count) = (instance.num_masters(), instance.num_workers());
    let mut draws: Vec<Vec<(T, T)>> = vec![Vec::new(); m_count];
    for n in 0..n_count {
        let pick: T = uniform(rng);
        let mut cumulative = T::zero();
        let mut chosen = None;
        for m in 0..m_count {
            cumulative = cumulative + schedule.assignment.k(m, n);
            if pick < cumulative {
                chosen = Some(m);
                break;
            }
        }
        let Some(m) = chosen else { continue };
        let l = schedule.loads.l(m, n);
        if l > T::zero() {
            let time = sample_completion_time(l, instance.u(m, n), instance.a(m, n), uniform(rng))
                .expect("open-interval uniform");
            draws[m].push((time, l));
        }
    }
    draws
        .iter_mut()
        .enumerate()
        .map(|(m, d)| master_completion(d, instance.rows(m), schedule.recovery))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationReport<T> {
    pub per_master_mean: Vec<T>,
    /// Mean over feasible trials of the slowest master's completion.
    pub overall_mean: T,
    /// Sample standard deviation of the slowest master's completion.
    pub overall_std_dev: T,
    pub infeasible_trials: usize,
    pub trials_used: usize,
    /// Sorted per-master completion times over all trials; `+∞` where infeasible.
    completions: Vec<Vec<T>>,
}

impl<T: Real> SimulationReport<T> {
    pub fn trials(&self) -> usize {
        self.trials_used + self.infeasible_trials
    }

    /// Fraction of all trials in which master `m` recovered by time `t`.
    pub fn recovery_probability(&self, m: usize, t: T) -> T {
        let sorted = &self.completions[m];
        let hits = sorted.partition_point(|&c| c <= t);
        T::lit(hits as f64) / T::lit(sorted.len() as f64)
    }

    /// Largest per-master mean: the time by which all masters have finished
    /// on average, master by master.
    pub fn slowest_master_mean(&self) -> T {
        self.per_master_mean
            .iter()
            .copied()
            .fold(T::neg_infinity(), T::max)
    }

    pub fn completions(&self, m: usize) -> &[T] {
        &self.completions[m]
    }
}

fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

pub fn simulate<T: Real>(
    schedule: &Schedule<T>,
    instance: &ProblemInstance<T>,
    config: &SimConfig,
) -> Result<SimulationReport<T>> {
    if config.trials == 0 {
        return Err(Error::InvalidConfig(
            "at least one trial is required".into(),
        ));
    }
    let m_count = instance.num_masters();
    if schedule.assignment.num_masters() != m_count
        || schedule.assignment.num_workers() != instance.num_workers()
    {
        return Err(Error::InvalidAssignment(
            "schedule shape differs from the instance".into(),
        ));
    }
    let mode = schedule.mode();
    if mode == AssignmentMode::Probabilistic && schedule.recovery == Recovery::Uncoded {
        return Err(Error::InvalidConfig(
            "uncoded recovery needs a dedicated assignment".into(),
        ));
    }

    let outcomes: Vec<Vec<Option<T>>> = (0..config.trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_rng(config.rng_seed, i);
            match mode {
                AssignmentMode::Dedicated => run_trial_dedicated(schedule, instance, &mut rng)
                    .into_iter()
                    .map(|c| c.is_finite().then_some(c))
                    .collect(),
                AssignmentMode::Probabilistic => {
                    run_trial_probabilistic(schedule, instance, &mut rng)
                }
            }
        })
        .collect();

    let mut sums = vec![T::zero(); m_count];
    let mut overall = Vec::with_capacity(config.trials);
    let mut completions = vec![Vec::with_capacity(config.trials); m_count];
    let mut infeasible = 0;
    for trial in &outcomes {
        for (m, c) in trial.iter().enumerate() {
            completions[m].push(c.unwrap_or(T::infinity()));
        }
        if trial.iter().any(Option::is_none) {
            infeasible += 1;
            continue;
        }
        let mut slowest = T::neg_infinity();
        for (m, c) in trial.iter().enumerate() {
            let c = c.expect("feasible trial");
            sums[m] = sums[m] + c;
            slowest = slowest.max(c);
        }
        overall.push(slowest);
    }
    let used = overall.len();
    if used == 0 {
        return Err(Error::AllTrialsInfeasible(config.trials));
    }
    for c in &mut completions {
        c.sort_by(|x, y| x.partial_cmp(y).expect("no NaN completions"));
    }
    let count = T::lit(used as f64);
    let overall_mean = overall.iter().copied().fold(T::zero(), |s, x| s + x) / count;
    let overall_std_dev = if used > 1 {
        let ss = overall.iter().fold(T::zero(), |s, &x| {
            s + (x - overall_mean) * (x - overall_mean)
        });
        (ss / T::lit((used - 1) as f64)).sqrt()
    } else {
        T::zero()
    };
    Ok(SimulationReport {
        per_master_mean: sums.into_iter().map(|s| s / count).collect(),
        overall_mean,
        overall_std_dev,
        infeasible_trials: infeasible,
        trials_used: used,
        completions,
    })
}
