use std::path::PathBuf;

use anyhow::{ensure, Context};
use hetcc::allocation::{pair_values, PairValues};
use hetcc::dedicated::{
    brute_force, coded_uniform, iterated_greedy, simple_greedy, uncoded_uniform, GreedyConfig,
};
use hetcc::io::InstanceFile;
use hetcc::sca::{sca_solve, ScaConfig, ScaOutcome};
use hetcc::sim::{simulate, SimConfig, SimulationReport};
use hetcc::{ProblemInstanceF64, ScheduleF64};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::generate::{generate_instance, GeneratorSpec};
use crate::policy::Policy;
use crate::report::{MasterKey, ReportRow, TraceRow};

#[derive(Debug, Clone, PartialEq)]
pub enum InstanceSource {
    File(PathBuf),
    Generated(GeneratorSpec),
}

impl InstanceSource {
    pub fn load(&self) -> anyhow::Result<InstanceFile> {
        match self {
            InstanceSource::File(path) => InstanceFile::read(path)
                .with_context(|| format!("reading instance {}", path.display())),
            InstanceSource::Generated(spec) => generate_instance(spec),
        }
    }
}

/// Independent seed for one purpose, so that instance draws, greedy
/// exploration and simulated trials never share a random stream.
pub fn derived_seed(seed: u64, purpose: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose);
    rng.next_u64()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub source: InstanceSource,
    pub policies: Vec<Policy>,
    pub sim: SimConfig,
    pub greedy_seed: u64,
    pub sca: ScaConfig<f64>,
    /// Comparison CSV; nothing is written when absent.
    pub out: Option<PathBuf>,
    /// SCA trace CSV, written only when `sca` is among the policies.
    pub trace_out: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Every random choice follows from `seed`.
    pub fn new(source: InstanceSource, policies: Vec<Policy>, trials: usize, seed: u64) -> Self {
        Self {
            source,
            policies,
            sim: SimConfig {
                trials,
                rng_seed: derived_seed(seed, 1),
            },
            greedy_seed: derived_seed(seed, 2),
            sca: ScaConfig::default(),
            out: None,
            trace_out: None,
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        ensure!(!self.policies.is_empty(), "at least one policy is required");
        ensure!(
            self.sim.trials >= 1,
            "at least one simulated trial is required"
        );
        for (i, p) in self.policies.iter().enumerate() {
            ensure!(!self.policies[..i].contains(p), "policy {p} listed twice");
        }
        if let InstanceSource::Generated(spec) = &self.source {
            spec.validate()?;
        }
        Ok(())
    }
}

/// A solved and simulated policy.
#[derive(Debug, Clone)]
pub struct PolicyRun {
    pub policy: Policy,
    pub schedule: ScheduleF64,
    pub sim: SimulationReport<f64>,
    pub sca: Option<ScaOutcome<f64>>,
}

impl PolicyRun {
    /// `None` where the schedule has no predicted completion time.
    pub fn t_approx(&self) -> Option<f64> {
        Some(self.schedule.t_approx).filter(|t| t.is_finite())
    }

    pub fn rows(&self) -> Vec<ReportRow> {
        let trials = self.sim.trials();
        let row = |master, t: f64, mean| ReportRow {
            policy: self.policy,
            master,
            t_approx_ms: Some(t).filter(|t| t.is_finite()),
            mean_completion_ms: mean,
            infeasible_trials: self.sim.infeasible_trials,
            trials,
        };
        let mut rows: Vec<ReportRow> = self
            .sim
            .per_master_mean
            .iter()
            .enumerate()
            .map(|(m, &mean)| row(MasterKey::Index(m), self.schedule.per_master_t[m], mean))
            .collect();
        rows.push(row(
            MasterKey::All,
            self.schedule.t_approx,
            self.sim.overall_mean,
        ));
        rows
    }
}

#[derive(Debug, Clone)]
pub struct PolicyFailure {
    pub policy: Policy,
    pub message: String,
}

/// Outcome of every requested policy, in request order.
#[derive(Debug, Clone, Default)]
pub struct Comparison {
    pub runs: Vec<PolicyRun>,
    pub failures: Vec<PolicyFailure>,
}

impl Comparison {
    pub fn rows(&self) -> Vec<ReportRow> {
        self.runs.iter().flat_map(PolicyRun::rows).collect()
    }

    pub fn run(&self, policy: Policy) -> Option<&PolicyRun> {
        self.runs.iter().find(|r| r.policy == policy)
    }

    pub fn trace_rows(&self) -> Option<Vec<TraceRow>> {
        self.run(Policy::Sca)?
            .sca
            .as_ref()
            .map(TraceRow::from_outcome)
    }

    pub fn all_succeeded(&self) -> bool {
        self.failures.is_empty()
    }
}

pub fn solve_policy(
    policy: Policy,
    instance: &ProblemInstanceF64,
    pairs: &PairValues<f64>,
    config: &ExperimentConfig,
) -> anyhow::Result<(ScheduleF64, Option<ScaOutcome<f64>>)> {
    let greedy = || {
        GreedyConfig::new(
            instance.num_masters(),
            instance.num_workers(),
            config.greedy_seed,
        )
    };
    let schedule = match policy {
        Policy::Uncoded => uncoded_uniform(instance)?,
        Policy::CodedUniform => coded_uniform(instance, pairs)?,
        Policy::GreedySimple => simple_greedy(instance, pairs)?.to_schedule(),
        Policy::GreedyIterated => iterated_greedy(instance, pairs, &greedy())?.to_schedule(),
        Policy::BruteForce => brute_force(instance, pairs)?.to_schedule(),
        Policy::Sca => {
            let outcome = sca_solve(instance, pairs, &config.sca, None)?;
            return Ok((outcome.schedule.clone(), Some(outcome)));
        }
    };
    Ok((schedule, None))
}

fn run_policy(
    policy: Policy,
    instance: &ProblemInstanceF64,
    pairs: &PairValues<f64>,
    config: &ExperimentConfig,
) -> anyhow::Result<PolicyRun> {
    let (schedule, sca) = solve_policy(policy, instance, pairs, config)?;
    let sim = simulate(&schedule, instance, &config.sim)?;
    Ok(PolicyRun {
        policy,
        schedule,
        sim,
        sca,
    })
}

/// Solves and simulates each policy. Policies run concurrently; a failing
/// policy is recorded and the others still run.
pub fn compare_policies(
    instance: &ProblemInstanceF64,
    config: &ExperimentConfig,
) -> anyhow::Result<Comparison> {
    config.validate()?;
    let pairs = pair_values(instance)?;
    let results: Vec<_> = config
        .policies
        .par_iter()
        .map(|&p| (p, run_policy(p, instance, &pairs, config)))
        .collect();
    let mut comparison = Comparison::default();
    for (policy, result) in results {
        match result {
            Ok(run) => comparison.runs.push(run),
            Err(e) => comparison.failures.push(PolicyFailure {
                policy,
                message: format!("{e:#}"),
            }),
        }
    }
    Ok(comparison)
}

/// Loads the instance, runs every policy and writes the requested CSVs.
pub fn run_experiment(config: &ExperimentConfig) -> anyhow::Result<(InstanceFile, Comparison)> {
    config.validate()?;
    let file = config.source.load()?;
    let comparison = compare_policies(&file.instance, config)?;
    if let Some(path) = &config.out {
        crate::report::write_rows(path, &comparison.rows())?;
    }
    if let (Some(path), Some(trace)) = (&config.trace_out, comparison.trace_rows()) {
        crate::report::write_trace(path, &trace)?;
    }
    Ok((file, comparison))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(policies: Vec<Policy>) -> ExperimentConfig {
        let spec = GeneratorSpec {
            workers: 8,
            rows: 1000,
            ..GeneratorSpec::reference(3)
        };
        ExperimentConfig::new(InstanceSource::Generated(spec), policies, 500, 3)
    }

    #[test]
    fn derived_seeds_differ_by_purpose_and_seed() {
        let seeds = [
            derived_seed(0, 1),
            derived_seed(0, 2),
            derived_seed(1, 1),
            derived_seed(1, 2),
        ];
        for i in 0..seeds.len() {
            for j in 0..i {
                assert_ne!(seeds[i], seeds[j]);
            }
        }
        assert_eq!(derived_seed(5, 1), derived_seed(5, 1));
    }

    #[test]
    fn a_failing_policy_does_not_stop_the_others() {
        let spec = GeneratorSpec {
            workers: 7,
            rows: 1000,
            ..GeneratorSpec::reference(3)
        };
        let config = ExperimentConfig::new(
            InstanceSource::Generated(spec),
            vec![Policy::Uncoded, Policy::GreedySimple],
            200,
            1,
        );
        let (_, comparison) = run_experiment(&config).unwrap();
        assert!(!comparison.all_succeeded());
        assert_eq!(comparison.failures[0].policy, Policy::Uncoded);
        assert_eq!(comparison.runs.len(), 1);
        assert_eq!(comparison.runs[0].policy, Policy::GreedySimple);
    }

    #[test]
    fn rows_come_per_master_then_overall_in_request_order() {
        let config = small(vec![Policy::GreedyIterated, Policy::Uncoded]);
        let (_, comparison) = run_experiment(&config).unwrap();
        let rows = comparison.rows();
        assert_eq!(rows.len(), 6);
        assert_eq!(rows[0].policy, Policy::GreedyIterated);
        assert_eq!(rows[2].master, MasterKey::All);
        assert_eq!(rows[3].policy, Policy::Uncoded);
        assert!(rows[3..].iter().all(|r| r.t_approx_ms.is_none()));
        assert!(rows[..3]
            .iter()
            .all(|r| r.t_approx_ms.is_some() && r.trials == 500));
        assert!(comparison.trace_rows().is_none());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(small(vec![]).validate().is_err());
        assert!(small(vec![Policy::Sca, Policy::Sca]).validate().is_err());
        let mut zero = small(vec![Policy::Sca]);
        zero.sim.trials = 0;
        assert!(zero.validate().is_err());
    }
}
