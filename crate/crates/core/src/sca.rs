//! Probabilistic worker assignment by successive convex approximation.
//!
//! Each per-pair term of the expected-results constraint splits as
//! `−k·l = g⁺ − g⁻` and `k·l·e^{−ut/l} = h⁺ − h⁻` with all four parts convex.
//! Linearizing `g⁻` and `h⁻` at an expansion point gives a convex majorant of
//! the constraint; the outer loop solves the resulting convex problem and
//! moves towards its solution with a diminishing step.
//!
//! The decomposition is not scale invariant. The majorant is built with rows
//! and milliseconds divided by [`ScaConfig::row_scale`], which leaves `u·t/l`
//! and `u·a` unchanged but changes how hard the quadratic `(Δk + Δl)²/2`
//! penalizes moving probability. Raw units (a scale of 1) let `k` move
//! freely and converge fastest; scaling rows down towards `L_m` pins `k`
//! and stalls the iteration near its start.

use crate::allocation::PairValues;
use crate::dedicated::{simple_greedy, AssignmentSolution};
use crate::error::{Error, Result};
use crate::model::{
    relaxed_expected_results, Assignment, AssignmentMode, LoadAllocation, Matrix, ProblemInstance,
    Schedule,
};
use crate::nlp::{
    feasibility_restore, master_time, solve_subproblem, BarrierOptions, SolverStatus,
    SubproblemSpec,
};
use crate::scalar::{exp_clamped, Real};

/// A point `(l, k, t)` of the relaxed problem, in rows and milliseconds.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaPoint<T> {
    pub k: Matrix<T>,
    pub l: Matrix<T>,
    pub t: T,
}

impl<T: Real> ScaPoint<T> {
    pub fn new(k: Matrix<T>, l: Matrix<T>, t: T) -> Result<Self> {
        if k.rows() != l.rows() || k.cols() != l.cols() {
            return Err(Error::InvalidAssignment("k and l shapes differ".into()));
        }
        if k.as_slice()
            .iter()
            .any(|&x| !(x >= T::zero() && x <= T::one()))
        {
            return Err(Error::InvalidAssignment(
                "probabilities must lie in [0, 1]".into(),
            ));
        }
        if l.as_slice()
            .iter()
            .any(|&x| !(x >= T::zero() && x.is_finite()))
        {
            return Err(Error::InvalidAssignment(
                "loads must be finite and non-negative".into(),
            ));
        }
        let slack = T::one() + T::tol(1e-9);
        if (0..k.cols()).any(|n| k.column_sum(n) > slack) {
            return Err(Error::InvalidAssignment(
                "a worker's probabilities sum above 1".into(),
            ));
        }
        if !(t > T::zero() && t.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "completion time must be positive, got {t}"
            )));
        }
        Ok(Self { k, l, t })
    }

    /// The schedule's assignment and loads at its predicted completion time.
    pub fn from_schedule(schedule: &Schedule<T>) -> Result<Self> {
        Self::new(
            schedule.assignment.matrix().clone(),
            schedule.loads.matrix().clone(),
            schedule.t_approx,
        )
    }

    pub fn num_masters(&self) -> usize {
        self.k.rows()
    }

    pub fn num_workers(&self) -> usize {
        self.k.cols()
    }

    /// `L_m − E[X_m(t)]` with the unbranched expectation; `≤ 0` when feasible.
    pub fn constraint_value(&self, instance: &ProblemInstance<T>, m: usize) -> T {
        let mut expected = T::zero();
        for n in 0..self.num_workers() {
            expected = expected
                + relaxed_expected_results(
                    self.l.get(m, n),
                    self.k.get(m, n),
                    instance.u(m, n),
                    instance.a(m, n),
                    self.t,
                );
        }
        instance.rows(m) - expected
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaConfig<T> {
    /// Step decay: `γ ← γ(1 − α·γ)`.
    pub alpha: T,
    pub gamma0: T,
    /// Stop once `|1 − t'/t|` falls below this.
    pub convergence_tol: T,
    pub max_outer_iterations: usize,
    /// Lower bound on every load, in rows.
    pub l_floor: T,
    /// Rows per working unit inside the majorant.
    pub row_scale: T,
    /// Probability mass moved off a dedicated start so that it becomes
    /// strictly interior.
    pub interior_margin: T,
    pub barrier: BarrierOptions<T>,
}

impl<T: Real> Default for ScaConfig<T> {
    fn default() -> Self {
        Self {
            alpha: T::lit(1e-3),
            gamma0: T::one(),
            convergence_tol: T::tol(1e-6),
            max_outer_iterations: 1000,
            l_floor: T::lit(1e-6),
            row_scale: T::one(),
            interior_margin: T::lit(1e-4),
            barrier: BarrierOptions::default(),
        }
    }
}

impl<T: Real> ScaConfig<T> {
    fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidConfig(what.into()));
        if !(self.alpha > T::zero() && self.alpha < T::one()) {
            return bad("alpha must lie in (0, 1)");
        }
        if !(self.gamma0 > T::zero() && self.gamma0 <= T::one()) {
            return bad("gamma0 must lie in (0, 1]");
        }
        if !(self.convergence_tol > T::zero()) || !(self.l_floor > T::zero()) {
            return bad("tolerances must be positive");
        }
        if self.max_outer_iterations == 0 {
            return bad("max_outer_iterations must be at least 1");
        }
        if !(self.interior_margin > T::zero() && self.interior_margin < T::one()) {
            return bad("interior_margin must lie in (0, 1)");
        }
        if !(self.row_scale > T::zero() && self.row_scale.is_finite()) {
            return bad("row_scale must be positive");
        }
        Ok(())
    }
}

/// The four convex parts of one pair's constraint terms and the gradients of
/// the two that get linearized, in `(k, l, t)` order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcParts<T> {
    pub g_plus: T,
    pub g_minus: T,
    pub h_plus: T,
    pub h_minus: T,
    pub grad_g_minus: [T; 3],
    pub grad_h_minus: [T; 3],
}

pub fn dc_parts<T: Real>(k: T, l: T, t: T, u: T) -> DcParts<T> {
    let half = T::lit(0.5);
    let e = exp_clamped(-u * t / l);
    let p = l * e;
    let s = k + l;
    DcParts {
        g_plus: half * (k * k + l * l),
        g_minus: half * s * s,
        h_plus: half * (k + p) * (k + p),
        h_minus: half * (k * k + p * p),
        grad_g_minus: [s, s, T::zero()],
        grad_h_minus: [k, e * e * (l + u * t), -u * l * e * e],
    }
}

/// `p(l, t) = l·e^{−ut/l}` with its first and second derivatives.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Perspective<T> {
    pub p: T,
    pub pl: T,
    pub pt: T,
    pub pll: T,
    pub plt: T,
    pub ptt: T,
}

pub(crate) fn perspective<T: Real>(l: T, t: T, u: T) -> Perspective<T> {
    let r = u * t / l;
    let e = exp_clamped(-r);
    Perspective {
        p: l * e,
        pl: e * (T::one() + r),
        pt: -u * e,
        pll: e * r * r / l,
        plt: -e * u * r / l,
        ptt: e * u * u / l,
    }
}

/// Expansion-point data for one pair.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PairExpansion<T> {
    pub k: T,
    pub l: T,
    pub t: T,
    pub p: T,
    pub pl: T,
    pub pt: T,
    /// `u·t/l` and `e^{−u·t/l}` at the expansion point.
    ratio: T,
    decay: T,
}

impl<T: Real> PairExpansion<T> {
    pub fn new(k: T, l: T, t: T, u: T) -> Self {
        let d = perspective(l, t, u);
        let ratio = u * t / l;
        Self {
            k,
            l,
            t,
            p: d.p,
            pl: d.pl,
            pt: d.pt,
            ratio,
            decay: exp_clamped(-ratio),
        }
    }

    /// `p − p_z` and the linearization remainder `p − p_z − ∇p_z·Δ` at
    /// `(l, t)`. With `δ = ut/l − u·t_z/l_z` these are
    /// `e^{−r_z}·(Δl + l·(e^{−δ} − 1))` and `e^{−r_z}·l·(e^{−δ} − 1 + δ)`,
    /// which stay accurate when both are tiny next to `p`.
    fn increments(&self, l: T, t: T, p: T, u: T) -> (T, T) {
        let dl = l - self.l;
        let delta = u * t / l - self.ratio;
        if delta.abs() > T::one() {
            let dp = p - self.p;
            return (dp, dp - self.pl * dl - self.pt * (t - self.t));
        }
        let bent = if delta.abs() < T::lit(1e-2) {
            let d2 = delta * delta;
            d2 * (T::lit(0.5)
                - delta
                    * (T::lit(1.0 / 6.0)
                        - delta
                            * (T::lit(1.0 / 24.0)
                                - delta * (T::lit(1.0 / 120.0) - delta / T::lit(720.0)))))
        } else {
            (-delta).exp_m1() + delta
        };
        let e = self.decay;
        (e * (dl + l * (-delta).exp_m1()), e * l * bent)
    }
}

/// Value, gradient and Hessian in `(k, l, t)` of `g̃ + c·h̃` for one pair.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PairTerm<T> {
    pub value: T,
    pub grad: [T; 3],
    pub hess: [[T; 3]; 3],
}

/// Majorant of one pair, written so that no large terms cancel:
/// `g̃ = −kl + (Δk + Δl)²/2` and
/// `h̃ = k·p + Δk²/2 + (p − p_z)²/2 + p_z·(p − p_z − ∇p_z·Δ)`.
pub(crate) fn pair_majorant<T: Real>(
    k: T,
    l: T,
    t: T,
    z: &PairExpansion<T>,
    u: T,
    c: T,
) -> PairTerm<T> {
    let half = T::lit(0.5);
    let (dk, dl) = (k - z.k, l - z.l);
    let w = perspective(l, t, u);
    let mix = dk + dl;
    let (dp, bent) = z.increments(l, t, w.p, u);
    let g = -k * l + half * mix * mix;
    let h = k * w.p + half * dk * dk + half * dp * dp + z.p * bent;
    let kp = k + w.p;
    let grad = [
        -l + mix + c * (w.p + dk),
        -k + mix + c * (kp * w.pl - z.p * z.pl),
        c * (kp * w.pt - z.p * z.pt),
    ];
    let hkl = c * w.pl;
    let hkt = c * w.pt;
    let hll = T::one() + c * (w.pl * w.pl + kp * w.pll);
    let hlt = c * (w.pl * w.pt + kp * w.plt);
    let htt = c * (w.pt * w.pt + kp * w.ptt);
    PairTerm {
        value: g + c * h,
        grad,
        hess: [[T::one() + c, hkl, hkt], [hkl, hll, hlt], [hkt, hlt, htt]],
    }
}

/// `q̃_m(w, z)` in rows: a convex upper bound on `L_m − E[X_m]` at `point`
/// that is exact at `point = expansion`. `scale` is the normalization in
/// rows per unit (see [`ScaConfig::row_scale`]).
pub fn majorized_constraint<T: Real>(
    instance: &ProblemInstance<T>,
    m: usize,
    point: &ScaPoint<T>,
    expansion: &ScaPoint<T>,
    scale: T,
) -> Result<T> {
    instance.check_master(m)?;
    let mut total = instance.rows(m) / scale;
    for n in 0..instance.num_workers() {
        let u = instance.u(m, n);
        let c = exp_clamped(u * instance.a(m, n));
        let z = PairExpansion::new(
            expansion.k.get(m, n),
            expansion.l.get(m, n) / scale,
            expansion.t / scale,
            u,
        );
        let term = pair_majorant(
            point.k.get(m, n),
            point.l.get(m, n) / scale,
            point.t / scale,
            &z,
            u,
            c,
        );
        total = total + term.value;
    }
    Ok(total * scale)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// `|1 − t'/t|` fell below the tolerance.
    Converged,
    /// The subproblem step became negligible.
    StepNorm,
    /// The subproblem found no descent from the current point.
    Stationary,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaOutcome<T> {
    pub schedule: Schedule<T>,
    /// Final iterate before small entries are snapped to zero.
    pub point: ScaPoint<T>,
    /// `t` of every iterate, starting with the interior start, in ms.
    pub trace: Vec<T>,
    pub gammas: Vec<T>,
    /// Largest `(L_m − E[X_m]) / L_m` over all iterates and masters.
    pub max_violation: T,
    pub newton_steps: usize,
    pub stop: StopReason,
}

/// Strictly interior start from a dedicated solution: a little probability
/// goes to every other master, unassigned pairs get the load they would hold
/// if dedicated, and `t` is raised just enough to restore feasibility.
pub fn interior_start<T: Real>(
    instance: &ProblemInstance<T>,
    pairs: &PairValues<T>,
    start: &ScaPoint<T>,
    config: &ScaConfig<T>,
) -> Result<ScaPoint<T>> {
    let (m_count, n_count) = (instance.num_masters(), instance.num_workers());
    let eps = config.interior_margin;
    let spread = eps / T::lit((m_count + 1) as f64);
    let floor = config.l_floor * T::lit(2.0);
    let k = Matrix::from_fn(m_count, n_count, |m, n| {
        (T::one() - eps) * start.k.get(m, n) + spread
    });
    let l = Matrix::from_fn(m_count, n_count, |m, n| {
        let l = start.l.get(m, n);
        if start.k.get(m, n) > T::zero() && l > floor {
            l
        } else {
            (start.t / pairs.phi(m, n)).max(floor)
        }
    });
    let point = ScaPoint::new(k, l, start.t)?;
    feasibility_restore(&point, instance)
}

pub fn dedicated_point<T: Real>(solution: &AssignmentSolution<T>) -> Result<ScaPoint<T>> {
    ScaPoint::new(
        solution.assignment.matrix().clone(),
        solution.loads.matrix().clone(),
        solution.t_approx,
    )
}

fn max_relative_violation<T: Real>(point: &ScaPoint<T>, instance: &ProblemInstance<T>) -> T {
    (0..instance.num_masters())
        .map(|m| point.constraint_value(instance, m) / instance.rows(m))
        .fold(T::neg_infinity(), T::max)
}

/// Runs the outer SCA loop from `initial`, or from the simple greedy
/// dedicated solution when `None`.
pub fn sca_solve<T: Real>(
    instance: &ProblemInstance<T>,
    pairs: &PairValues<T>,
    config: &ScaConfig<T>,
    initial: Option<&ScaPoint<T>>,
) -> Result<ScaOutcome<T>> {
    config.validate()?;
    let start = match initial {
        Some(p) => p.clone(),
        None => dedicated_point(&simple_greedy(instance, pairs)?)?,
    };
    if start.num_masters() != instance.num_masters()
        || start.num_workers() != instance.num_workers()
    {
        return Err(Error::InfeasibleStart(
            "start shape differs from the instance".into(),
        ));
    }
    let violation = max_relative_violation(&start, instance);
    if violation > T::tol(1e-9) {
        return Err(Error::InfeasibleStart(format!(
            "expected results fall short of L_m by {violation} (relative)"
        )));
    }

    let scale = config.row_scale;
    let t_floor = T::tol(1e-9);
    let mut z = interior_start(instance, pairs, &start, config)?;
    let mut trace = vec![z.t];
    let mut gammas = Vec::new();
    let mut gamma = config.gamma0;
    let mut max_violation = max_relative_violation(&z, instance);
    let mut newton_steps = 0;
    let mut stop = StopReason::MaxIterations;

    for iteration in 0..config.max_outer_iterations {
        let spec = SubproblemSpec {
            instance,
            expansion: &z,
            l_floor: config.l_floor,
            t_floor,
            scale,
        };
        let (w, diag) =
            solve_subproblem(&spec, &config.barrier).map_err(|e| Error::Subproblem {
                iteration,
                reason: e.to_string(),
            })?;
        newton_steps += diag.newton_steps_total;
        if diag.status == SolverStatus::NumericalFailure {
            return Err(Error::Subproblem {
                iteration,
                reason: format!(
                    "Newton iterations stalled (gap bound {})",
                    diag.final_duality_gap_bound
                ),
            });
        }
        if !(w.t < z.t) {
            stop = StopReason::Stationary;
            break;
        }
        let blend = |a: &Matrix<T>, b: &Matrix<T>| {
            Matrix::from_fn(a.rows(), a.cols(), |m, n| {
                a.get(m, n) + gamma * (b.get(m, n) - a.get(m, n))
            })
        };
        let next = ScaPoint {
            k: blend(&z.k, &w.k),
            l: blend(&z.l, &w.l),
            t: z.t + gamma * (w.t - z.t),
        };
        let step_sq: T =
            z.k.as_slice()
                .iter()
                .zip(w.k.as_slice())
                .map(|(a, b)| (*b - *a) * (*b - *a))
                .chain(
                    z.l.as_slice()
                        .iter()
                        .zip(w.l.as_slice())
                        .map(|(a, b)| ((*b - *a) / scale) * ((*b - *a) / scale)),
                )
                .sum::<T>()
                + ((w.t - z.t) / scale) * ((w.t - z.t) / scale);
        let norm_sq: T = z.k.as_slice().iter().map(|x| *x * *x).sum::<T>()
            + z.l
                .as_slice()
                .iter()
                .map(|x| (*x / scale) * (*x / scale))
                .sum::<T>()
            + (z.t / scale) * (z.t / scale);

        let ratio = next.t / z.t;
        gammas.push(gamma);
        trace.push(next.t);
        max_violation = max_violation.max(max_relative_violation(&next, instance));
        z = next;
        if (T::one() - ratio).abs() < config.convergence_tol {
            stop = StopReason::Converged;
            break;
        }
        if step_sq.sqrt() <= T::lit(1e-6) * (T::one() + norm_sq.sqrt()) {
            stop = StopReason::StepNorm;
            break;
        }
        gamma = gamma * (T::one() - config.alpha * gamma);
    }

    let schedule = snapped_schedule(instance, &z, config.l_floor)?;
    Ok(ScaOutcome {
        schedule,
        point: z,
        trace,
        gammas,
        max_violation,
        newton_steps,
        stop,
    })
}

/// Drops pairs with negligible probability and load, then recomputes each
/// master's completion time on the exact constraint.
fn snapped_schedule<T: Real>(
    instance: &ProblemInstance<T>,
    point: &ScaPoint<T>,
    l_floor: T,
) -> Result<Schedule<T>> {
    let (m_count, n_count) = (instance.num_masters(), instance.num_workers());
    let tiny_k = T::lit(1e-6);
    let tiny_l = l_floor * T::lit(10.0);
    let keep = |m, n| !(point.k.get(m, n) < tiny_k && point.l.get(m, n) <= tiny_l);
    let k = Matrix::from_fn(m_count, n_count, |m, n| {
        if keep(m, n) {
            point.k.get(m, n)
        } else {
            T::zero()
        }
    });
    let l = Matrix::from_fn(m_count, n_count, |m, n| {
        if keep(m, n) {
            point.l.get(m, n)
        } else {
            T::zero()
        }
    });
    let col_cap = T::one() + T::tol(1e-9);
    // guard the assignment invariant against rounding in the blended iterate
    let k = Matrix::from_fn(m_count, n_count, |m, n| {
        let s = k.column_sum(n);
        if s > col_cap {
            k.get(m, n) / s
        } else {
            k.get(m, n)
        }
    });
    let snapped = ScaPoint::new(k.clone(), l.clone(), point.t)?;
    let per_master = (0..m_count)
        .map(|m| master_time(&snapped, instance, m, T::zero()))
        .collect::<Result<Vec<_>>>()?;
    let assignment = Assignment::new(AssignmentMode::Probabilistic, k)?;
    let loads = LoadAllocation::new(l, &assignment)?;
    Ok(Schedule::predicted(assignment, loads, per_master))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocation::{optimal_loads_for_master, pair_values};
    use crate::dedicated::{iterated_greedy, GreedyConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
    }

    #[test]
    fn linearization_remainder_is_accurate_on_every_branch() {
        let (u, l0, t0) = (2.0f64, 10_000.0, 6_000.0);
        let z = PairExpansion::new(0.5, l0, t0, u);
        let direct = |l: f64, t: f64| {
            let p = perspective(l, t, u).p;
            (p - z.p, p - z.p - z.pl * (l - l0) - z.pt * (t - t0))
        };
        // moderate moves: the direct formula is accurate enough to compare
        for (l, t) in [(9_000.0, 6_100.0), (12_000.0, 5_000.0), (10_400.0, 6_050.0)] {
            let (dp, bent) = z.increments(l, t, perspective(l, t, u).p, u);
            let (dp2, bent2) = direct(l, t);
            assert!(
                rel(dp, dp2) < 1e-9 && rel(bent, bent2) < 1e-7,
                "{dp} {dp2} {bent} {bent2}"
            );
        }
        // tiny moves: second order in the step and never negative
        for h in [1e-3, 1e-6, 1e-9] {
            let (l, t) = (l0 * (1.0 + h), t0 * (1.0 - h));
            let (_, bent) = z.increments(l, t, perspective(l, t, u).p, u);
            let delta = u * t / l - u * t0 / l0;
            let expected = (-u * t0 / l0).exp() * l * delta * delta / 2.0;
            assert!(
                bent >= 0.0 && rel(bent, expected) < 2.0 * delta.abs() + 1e-9,
                "{h}: {bent} vs {expected}"
            );
        }
        // the two small-δ formulas meet where they switch
        let t_at = |delta: f64| (delta + u * t0 / l0) * l0 / u;
        for delta in [0.999e-2, 1.001e-2] {
            let t = t_at(delta);
            let d = u * t / l0 - u * t0 / l0;
            let expected = (-u * t0 / l0).exp() * l0 * ((-d).exp_m1() + d);
            assert!(rel(z.increments(l0, t, 0.0, u).1, expected) < 1e-9);
        }
    }

    #[test]
    fn dc_identities() {
        let d = dc_parts(0.0f64, 1e-6, 1.0, 1.0);
        assert_eq!(d.g_plus - d.g_minus, 0.0);
        let d = dc_parts(1.0f64, 2.0, 0.0, 3.0);
        assert!((d.h_plus - d.h_minus - 2.0).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let (k, l, t, u) = (
                rng.gen_range(0.0..1.0),
                rng.gen_range(0.01..3.0),
                rng.gen_range(0.0..2.0),
                rng.gen_range(0.5..5.0),
            );
            let d = dc_parts(k, l, t, u);
            assert!(rel(d.g_plus - d.g_minus, -k * l) < 1e-12 || (k * l) < 1e-300);
            let h = k * l * (-u * t / l).exp();
            assert!((d.h_plus - d.h_minus - h).abs() <= 1e-12 * h.max(d.h_plus));
        }
    }

    #[test]
    fn dc_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let step = 1e-6;
        for _ in 0..100 {
            let x = [
                rng.gen_range(0.05..1.0),
                rng.gen_range(0.1..3.0),
                rng.gen_range(0.1..2.0),
            ];
            let u = rng.gen_range(0.5..5.0);
            let d = dc_parts(x[0], x[1], x[2], u);
            for i in 0..3 {
                let mut hi = x;
                let mut lo = x;
                hi[i] += step;
                lo[i] -= step;
                let f = |y: [f64; 3]| dc_parts(y[0], y[1], y[2], u);
                let fd_g = (f(hi).g_minus - f(lo).g_minus) / (2.0 * step);
                let fd_h = (f(hi).h_minus - f(lo).h_minus) / (2.0 * step);
                assert!((fd_g - d.grad_g_minus[i]).abs() <= 1e-5 * fd_g.abs().max(1.0));
                assert!(
                    (fd_h - d.grad_h_minus[i]).abs() <= 1e-5 * fd_h.abs().max(1e-3),
                    "{i}: {fd_h} vs {}",
                    d.grad_h_minus[i]
                );
            }
        }
    }

    #[test]
    fn pair_majorant_derivatives() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let step = 1e-6;
        for _ in 0..100 {
            let u = rng.gen_range(1.0..5.0);
            let c = (u * rng.gen_range(0.0..0.5f64)).exp();
            let z = PairExpansion::new(
                rng.gen_range(0.0..1.0),
                rng.gen_range(0.1..1.0),
                rng.gen_range(0.1..1.0),
                u,
            );
            let x = [
                rng.gen_range(0.0..1.0),
                rng.gen_range(0.1..1.0),
                rng.gen_range(0.1..1.0),
            ];
            let f = |y: [f64; 3]| pair_majorant(y[0], y[1], y[2], &z, u, c);
            let at = f(x);
            for i in 0..3 {
                let mut hi = x;
                let mut lo = x;
                hi[i] += step;
                lo[i] -= step;
                let fd = (f(hi).value - f(lo).value) / (2.0 * step);
                assert!((fd - at.grad[i]).abs() <= 1e-5 * fd.abs().max(1.0));
                for j in 0..3 {
                    let fd = (f(hi).grad[j] - f(lo).grad[j]) / (2.0 * step);
                    assert!(
                        (fd - at.hess[i][j]).abs() <= 1e-5 * fd.abs().max(1.0),
                        "{i}{j}"
                    );
                }
            }
        }
    }

    fn instance(m: usize, n: usize, seed: u64) -> ProblemInstance<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = Matrix::from_fn(m, n, |_, _| rng.gen_range(1.0..5.0));
        let a = u.map(|x| 1.0 / x);
        ProblemInstance::new(u, a, vec![100_000; m], vec![1; m]).unwrap()
    }

    fn random_point(rng: &mut ChaCha8Rng, m: usize, n: usize) -> ScaPoint<f64> {
        let mut k = Matrix::from_fn(m, n, |_, _| rng.gen_range(0.0..1.0));
        for c in 0..n {
            let s = k.column_sum(c);
            if s > 1.0 {
                for r in 0..m {
                    k.set(r, c, k.get(r, c) / s);
                }
            }
        }
        let l = Matrix::from_fn(m, n, |_, _| rng.gen_range(1.0..20_000.0));
        ScaPoint::new(k, l, rng.gen_range(1000.0..30_000.0)).unwrap()
    }

    #[test]
    fn majorant_is_tight_and_an_upper_bound() {
        let inst = instance(2, 6, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for scale in [1.0, 100_000.0] {
            for _ in 0..500 {
                let z = random_point(&mut rng, 2, 6);
                let w = random_point(&mut rng, 2, 6);
                for m in 0..2 {
                    let exact_z = z.constraint_value(&inst, m);
                    let tight = majorized_constraint(&inst, m, &z, &z, scale).unwrap();
                    assert!(
                        (tight - exact_z).abs() <= 1e-9 * 100_000.0,
                        "{tight} vs {exact_z}"
                    );
                    let upper = majorized_constraint(&inst, m, &w, &z, scale).unwrap();
                    assert!(upper >= w.constraint_value(&inst, m) - 1e-9 * 100_000.0);
                }
            }
        }
        // no probability anywhere: nothing is expected back
        let mut z = random_point(&mut rng, 2, 6);
        z.k = Matrix::filled(2, 6, 0.0);
        assert!((majorized_constraint(&inst, 0, &z, &z, 1.0).unwrap() - 100_000.0).abs() < 1e-9);
    }

    #[test]
    fn majorant_is_convex_along_segments() {
        let inst = instance(2, 5, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let scale = 100_000.0;
        for _ in 0..300 {
            let z = random_point(&mut rng, 2, 5);
            let a = random_point(&mut rng, 2, 5);
            let b = random_point(&mut rng, 2, 5);
            let th: f64 = rng.gen_range(0.0..1.0);
            let mix = |x: &Matrix<f64>, y: &Matrix<f64>| {
                Matrix::from_fn(2, 5, |i, j| th * x.get(i, j) + (1.0 - th) * y.get(i, j))
            };
            let c = ScaPoint::new(
                mix(&a.k, &b.k),
                mix(&a.l, &b.l),
                th * a.t + (1.0 - th) * b.t,
            )
            .unwrap();
            for m in 0..2 {
                let f = |p: &ScaPoint<f64>| majorized_constraint(&inst, m, p, &z, scale).unwrap();
                let lhs = f(&c);
                let rhs = th * f(&a) + (1.0 - th) * f(&b);
                assert!(lhs <= rhs + 1e-9 * rhs.abs().max(1.0));
            }
        }
    }

    #[test]
    fn gamma_recursion_decreases() {
        let mut g = 1.0f64;
        for _ in 0..10_000 {
            let next = g * (1.0 - 1e-3 * g);
            assert!(next < g && next > 0.0);
            g = next;
        }
    }

    #[test]
    fn single_master_recovers_closed_form() {
        let inst = instance(1, 4, 8);
        let pairs = pair_values(&inst).unwrap();
        let best = optimal_loads_for_master(&inst, &pairs, 0, &[0, 1, 2, 3]).unwrap();
        let out = sca_solve(&inst, &pairs, &ScaConfig::default(), None).unwrap();
        assert!(
            rel(out.schedule.t_approx, best.t) < 1e-3,
            "{} vs {}",
            out.schedule.t_approx,
            best.t
        );
        for n in 0..4 {
            assert!(out.schedule.assignment.k(0, n) > 0.999);
        }
    }

    #[test]
    fn trace_descends_and_stays_feasible() {
        let inst = instance(2, 8, 9);
        let pairs = pair_values(&inst).unwrap();
        let out = sca_solve(&inst, &pairs, &ScaConfig::default(), None).unwrap();
        for pair in out.trace.windows(2) {
            assert!(pair[1] <= pair[0] * (1.0 + 1e-9));
        }
        assert!(out.max_violation <= 1e-7);
        let greedy = iterated_greedy(&inst, &pairs, &GreedyConfig::new(2, 8, 1)).unwrap();
        assert!(out.schedule.t_approx <= greedy.t_approx + 1e-6);
        for n in 0..8 {
            assert!(out.schedule.assignment.matrix().column_sum(n) <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn infeasible_start_is_rejected() {
        let inst = instance(2, 4, 10);
        let pairs = pair_values(&inst).unwrap();
        let sol = simple_greedy(&inst, &pairs).unwrap();
        let mut start = dedicated_point(&sol).unwrap();
        start.t *= 0.5;
        assert!(matches!(
            sca_solve(&inst, &pairs, &ScaConfig::default(), Some(&start)),
            Err(Error::InfeasibleStart(_))
        ));
        let bad = ScaConfig {
            alpha: 1.5,
            ..ScaConfig::default()
        };
        assert!(sca_solve(&inst, &pairs, &bad, None).is_err());
    }
}
