use std::fmt;
use std::str::FromStr;

use anyhow::{bail, ensure, Context};
use hetcc::io::InstanceFile;
use hetcc::model::Matrix;
use hetcc::ProblemInstanceF64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// How the per-row shift `a` follows from the straggle rate `u`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ShiftRule {
    /// `a = 1/u`.
    Reciprocal,
    /// The same shift, in ms per row, for every pair.
    Constant(f64),
}

impl ShiftRule {
    fn apply(self, u: f64) -> f64 {
        match self {
            ShiftRule::Reciprocal => 1.0 / u,
            ShiftRule::Constant(a) => a,
        }
    }
}

impl fmt::Display for ShiftRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ShiftRule::Reciprocal => f.write_str("reciprocal"),
            ShiftRule::Constant(a) => write!(f, "constant:{a}"),
        }
    }
}

impl FromStr for ShiftRule {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> anyhow::Result<Self> {
        if s == "reciprocal" {
            return Ok(ShiftRule::Reciprocal);
        }
        if let Some(value) = s.strip_prefix("constant:") {
            let a: f64 = value
                .parse()
                .with_context(|| format!("shift value {value:?}"))?;
            ensure!(
                a.is_finite() && a > 0.0,
                "constant shift must be positive, got {a}"
            );
            return Ok(ShiftRule::Constant(a));
        }
        bail!("unknown shift rule {s:?}; expected `reciprocal` or `constant:<ms per row>`")
    }
}

/// Parameters of a random instance.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    pub masters: usize,
    pub workers: usize,
    /// Straggle rates are drawn uniformly from `[u_lo, u_hi]`, in 1/ms.
    pub u_lo: f64,
    pub u_hi: f64,
    pub shift: ShiftRule,
    /// Rows each master must recover.
    pub rows: u64,
    /// Column dimension recorded for every master; not used by any policy.
    pub cols: u64,
    pub seed: u64,
}

impl GeneratorSpec {
    /// Two masters, twenty workers, rates in `[1, 5]`, reciprocal shifts and
    /// `10^5` rows per master.
    pub fn reference(seed: u64) -> Self {
        Self {
            masters: 2,
            workers: 20,
            u_lo: 1.0,
            u_hi: 5.0,
            shift: ShiftRule::Reciprocal,
            rows: 100_000,
            cols: 1,
            seed,
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        ensure!(self.masters >= 1, "at least one master is required");
        ensure!(
            self.workers > self.masters,
            "{} workers cannot serve {} masters; more workers than masters are needed",
            self.workers,
            self.masters
        );
        ensure!(
            self.u_lo > 0.0 && self.u_lo <= self.u_hi && self.u_hi.is_finite(),
            "rate range [{}, {}] must satisfy 0 < lo <= hi",
            self.u_lo,
            self.u_hi
        );
        ensure!(self.rows >= 1, "every master needs at least one row");
        Ok(())
    }
}

/// Draws `u` pair by pair in row-major order from a ChaCha8 stream seeded
/// with `spec.seed`, so the same spec always yields the same instance.
pub fn generate_instance(spec: &GeneratorSpec) -> anyhow::Result<InstanceFile> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let u = Matrix::from_fn(spec.masters, spec.workers, |_, _| {
        if spec.u_lo == spec.u_hi {
            spec.u_lo
        } else {
            rng.gen_range(spec.u_lo..=spec.u_hi)
        }
    });
    let a = u.map(|x| spec.shift.apply(x));
    let instance = ProblemInstanceF64::new(
        u,
        a,
        vec![spec.rows; spec.masters],
        vec![spec.cols; spec.masters],
    )?;
    Ok(InstanceFile::new(instance, Some(spec.seed)))
}
