//! Seeded Monte Carlo simulation of the Markov renewal sequence.
//!
//! Every replication draws from its own ChaCha stream keyed by the run seed
//! and the replication index, so results do not depend on thread count or
//! scheduling. Replications are tallied in fixed-size chunks whose
//! accumulators are merged in chunk order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimate::{TransitionRecord, TransitionTrace};
use crate::graph::digraph_of;
use crate::model::{validate, SmpModel, SojournDist, MAX_ORDER};

pub const DEFAULT_MAX_TRANSITIONS: usize = 1_000_000;

/// Censoring fraction above which a warning is attached to the estimates.
pub const CENSORING_WARN_FRACTION: f64 = 1e-3;

const CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    State(usize),
    Distribution(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub seed: u64,
    pub replications: usize,
    /// Per-replication cap on transitions.
    pub max_transitions: usize,
    pub initial: InitialState,
    /// End a trace replication on entering a state with `p_ii = 1`.
    pub stop_at_absorbing: bool,
}

impl SimConfig {
    pub fn new(seed: u64, replications: usize) -> Self {
        SimConfig {
            seed,
            replications,
            max_transitions: DEFAULT_MAX_TRANSITIONS,
            initial: InitialState::State(0),
            stop_at_absorbing: false,
        }
    }

    fn check(&self, m: usize) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::Domain("at least one replication is required".into()));
        }
        if self.max_transitions == 0 {
            return Err(Error::Domain("max_transitions must be at least 1".into()));
        }
        match &self.initial {
            InitialState::State(s) if *s >= m => {
                Err(Error::Domain(format!("initial state {s} out of range")))
            }
            InitialState::Distribution(w)
                if w.len() != m
                    || w.iter().any(|x| !x.is_finite() || *x < 0.0)
                    || w.iter().sum::<f64>() <= 0.0 =>
            {
                Err(Error::Domain(
                    "initial distribution must be m nonnegative weights".into(),
                ))
            }
            _ => Ok(()),
        }
    }
}

/// One first-passage replication.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PassageSample {
    pub time: f64,
    pub transitions: usize,
    pub censored: bool,
}

/// Row-wise sampling tables for the embedded chain and sojourns.
struct Sampler {
    rows: Vec<Vec<(usize, f64, SojournDist)>>,
    absorbing: Vec<bool>,
}

impl Sampler {
    fn new(model: &SmpModel) -> Result<Sampler> {
        if let Some(d) = validate(model).into_iter().next() {
            return Err(Error::Domain(format!("invalid model: {d}")));
        }
        let dists = model.distributions()?;
        let m = model.state_count();
        let mut rows = Vec::with_capacity(m);
        for i in 0..m {
            let mut acc = 0.0;
            let mut row = Vec::new();
            for j in 0..m {
                let p = model.p[(i, j)];
                if p > 0.0 {
                    acc += p;
                    let dist =
                        dists[i][j].expect("validated: positive transitions have distributions");
                    row.push((j, acc, dist));
                }
            }
            rows.push(row);
        }
        let absorbing = (0..m).map(|i| model.p[(i, i)] == 1.0).collect();
        Ok(Sampler { rows, absorbing })
    }

    fn step<R: Rng>(&self, state: usize, rng: &mut R) -> (usize, f64) {
        let row = &self.rows[state];
        let total = row.last().map_or(1.0, |c| c.1);
        let u: f64 = rng.random::<f64>() * total;
        let &(next, _, dist) = row
            .iter()
            .find(|c| u < c.1)
            .unwrap_or_else(|| row.last().unwrap());
        (next, dist.sample(rng))
    }

    fn passage<R: Rng>(
        &self,
        from: usize,
        target: usize,
        max: usize,
        rng: &mut R,
    ) -> PassageSample {
        let mut state = from;
        let mut time = 0.0;
        for n in 1..=max {
            let (next, x) = self.step(state, rng);
            time += x;
            if next == target {
                return PassageSample {
                    time,
                    transitions: n,
                    censored: false,
                };
            }
            state = next;
        }
        PassageSample {
            time,
            transitions: max,
            censored: true,
        }
    }
}

/// Independent stream for `(seed, lane, index)`.
fn stream(seed: u64, lane: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((lane << 40) | index);
    rng
}

fn draw_initial<R: Rng>(initial: &InitialState, rng: &mut R) -> usize {
    match initial {
        InitialState::State(s) => *s,
        InitialState::Distribution(w) => {
            let total: f64 = w.iter().sum();
            let mut u = rng.random::<f64>() * total;
            for (i, &x) in w.iter().enumerate() {
                if u < x {
                    return i;
                }
                u -= x;
            }
            w.iter().rposition(|&x| x > 0.0).unwrap_or(0)
        }
    }
}

/// Simulates `cfg.replications` trajectories of up to `cfg.max_transitions`
/// completed transitions each. Replication `k` carries rep id `k`.
pub fn simulate_trace(model: &SmpModel, cfg: &SimConfig) -> Result<TransitionTrace> {
    let sampler = Sampler::new(model)?;
    cfg.check(model.state_count())?;

    let reps: Vec<Vec<TransitionRecord>> = (0..cfg.replications)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream(cfg.seed, 0, k as u64);
            let mut state = draw_initial(&cfg.initial, &mut rng);
            let mut out = Vec::new();
            while out.len() < cfg.max_transitions {
                if cfg.stop_at_absorbing && sampler.absorbing[state] {
                    break;
                }
                let (next, x) = sampler.step(state, &mut rng);
                out.push(TransitionRecord {
                    rep: k as u64,
                    from: state,
                    to: Some(next),
                    sojourn: x,
                });
                state = next;
            }
            out
        })
        .collect();
    Ok(TransitionTrace {
        records: reps.into_iter().flatten().collect(),
    })
}

/// Running mean and squared-deviation sums for `T, T^2, ..., T^R`
/// (Welford updates, Chan merges).
#[derive(Debug, Clone, PartialEq)]
pub struct MomentAccumulator {
    count: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl MomentAccumulator {
    pub fn new(max_order: usize) -> Self {
        MomentAccumulator {
            count: 0,
            mean: vec![0.0; max_order],
            m2: vec![0.0; max_order],
        }
    }

    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let n = self.count as f64;
        let mut y = 1.0;
        for r in 0..self.mean.len() {
            y *= x;
            let delta = y - self.mean[r];
            self.mean[r] += delta / n;
            self.m2[r] += delta * (y - self.mean[r]);
        }
    }

    pub fn merge(&mut self, other: &MomentAccumulator) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        for r in 0..self.mean.len() {
            let delta = other.mean[r] - self.mean[r];
            self.mean[r] += delta * nb / n;
            self.m2[r] += other.m2[r] + delta * delta * na * nb / n;
        }
        self.count += other.count;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// Sample mean of `T^r`.
    pub fn mean(&self, r: usize) -> f64 {
        if self.count == 0 {
            f64::NAN
        } else {
            self.mean[r - 1]
        }
    }

    /// Standard error of the sample mean of `T^r`.
    pub fn std_err(&self, r: usize) -> f64 {
        if self.count < 2 {
            return f64::NAN;
        }
        let n = self.count as f64;
        (self.m2[r - 1].max(0.0) / (n - 1.0) / n).sqrt()
    }
}

/// Empirical first-passage moments per source state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalPassage {
    pub target: usize,
    /// `mean[r - 1][i]`: sample mean of `T_j^r` from source `i`.
    pub mean: Vec<Vec<f64>>,
    pub std_err: Vec<Vec<f64>>,
    pub completed: Vec<u64>,
    pub censored: Vec<u64>,
    pub mean_transitions: Vec<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Samples `T_j` from every source; the clock starts at a fresh entry into
/// the source, and at least one transition is required, so the source `j`
/// yields first-return times.
pub fn empirical_passage(
    model: &SmpModel,
    j: usize,
    cfg: &SimConfig,
    max_order: usize,
) -> Result<EmpiricalPassage> {
    let sampler = Sampler::new(model)?;
    let m = model.state_count();
    cfg.check(m)?;
    if max_order == 0 || max_order > MAX_ORDER {
        return Err(Error::Domain(format!(
            "moment order must be in 1..={MAX_ORDER}, got {max_order}"
        )));
    }
    if j >= m {
        return Err(Error::Domain(format!("target {j} out of range")));
    }
    let unreachable = digraph_of(&model.p)?.unreachable_sources(j)?;
    if !unreachable.is_empty() {
        return Err(Error::NotUniversallyAccessible {
            target: j,
            unreachable,
        });
    }

    let mut out = EmpiricalPassage {
        target: j,
        mean: vec![vec![0.0; m]; max_order],
        std_err: vec![vec![0.0; m]; max_order],
        completed: vec![0; m],
        censored: vec![0; m],
        mean_transitions: vec![0.0; m],
        warnings: Vec::new(),
    };

    for i in 0..m {
        let chunks: Vec<(MomentAccumulator, u64, u64)> = (0..cfg.replications)
            .step_by(CHUNK)
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|start| {
                let end = (start + CHUNK).min(cfg.replications);
                let mut acc = MomentAccumulator::new(max_order);
                let (mut censored, mut steps) = (0u64, 0u64);
                for k in start..end {
                    let mut rng = stream(cfg.seed, i as u64 + 1, k as u64);
                    let s = sampler.passage(i, j, cfg.max_transitions, &mut rng);
                    if s.censored {
                        censored += 1;
                    } else {
                        acc.push(s.time);
                        steps += s.transitions as u64;
                    }
                }
                (acc, censored, steps)
            })
            .collect();

        let mut acc = MomentAccumulator::new(max_order);
        let (mut censored, mut steps) = (0u64, 0u64);
        for (a, c, s) in &chunks {
            acc.merge(a);
            censored += c;
            steps += s;
        }
        for r in 1..=max_order {
            out.mean[r - 1][i] = acc.mean(r);
            out.std_err[r - 1][i] = acc.std_err(r);
        }
        out.completed[i] = acc.count();
        out.censored[i] = censored;
        out.mean_transitions[i] = steps as f64 / acc.count().max(1) as f64;
        let fraction = censored as f64 / cfg.replications as f64;
        if fraction > CENSORING_WARN_FRACTION {
            out.warnings.push(format!(
                "source {}: {censored} of {} replications hit the {}-transition cap and were excluded",
                i + 1,
                cfg.replications,
                cfg.max_transitions
            ));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimate::estimate;
    use crate::linalg::Matrix;
    use crate::passage::higher_moments;
    use crate::random::{random_distribution_model, state_names, ua_states};
    use proptest::prelude::*;

    fn det(v: f64) -> Option<SojournDist> {
        Some(SojournDist::deterministic(v))
    }

    fn two_cycle(a: f64, b: f64) -> SmpModel {
        let p = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap();
        SmpModel::with_distributions(
            state_names(2),
            p,
            vec![vec![None, det(a)], vec![det(b), None]],
        )
    }

    fn worked(exponential: bool) -> SmpModel {
        let p = Matrix::from_rows(&[[0.0, 1.0, 0.0], [0.8, 0.0, 0.2], [0.0, 0.0, 1.0]]).unwrap();
        let f = |mean: f64| {
            if exponential {
                Some(SojournDist::exponential(1.0 / mean))
            } else {
                det(mean)
            }
        };
        let d = vec![
            vec![None, f(6.0), None],
            vec![f(0.7), None, f(1.1)],
            vec![None, None, det(0.0)],
        ];
        SmpModel::with_distributions(state_names(3), p, d)
    }

    #[test]
    fn deterministic_two_cycle_trace() {
        let mut cfg = SimConfig::new(1, 1);
        cfg.max_transitions = 4;
        let trace = simulate_trace(&two_cycle(2.0, 3.0), &cfg).unwrap();
        let path: Vec<(usize, usize, f64)> = trace
            .records
            .iter()
            .map(|r| (r.from, r.to.unwrap(), r.sojourn))
            .collect();
        assert_eq!(
            path,
            vec![(0, 1, 2.0), (1, 0, 3.0), (0, 1, 2.0), (1, 0, 3.0)]
        );
    }

    #[test]
    fn traces_are_reproducible() {
        let mut cfg = SimConfig::new(99, 50);
        cfg.max_transitions = 40;
        let a = simulate_trace(&worked(true), &cfg).unwrap();
        let b = simulate_trace(&worked(true), &cfg).unwrap();
        assert_eq!(a, b);
        cfg.seed = 100;
        assert_ne!(a, simulate_trace(&worked(true), &cfg).unwrap());
    }

    #[test]
    fn absorbing_start_yields_empty_trace() {
        let mut cfg = SimConfig::new(3, 1);
        cfg.initial = InitialState::State(2);
        cfg.stop_at_absorbing = true;
        let trace = simulate_trace(&worked(true), &cfg).unwrap();
        assert!(trace.records.is_empty());
    }

    #[test]
    fn trace_stops_on_absorption_when_asked() {
        let mut cfg = SimConfig::new(5, 200);
        cfg.stop_at_absorbing = true;
        let trace = simulate_trace(&worked(true), &cfg).unwrap();
        let mut last_of_rep = std::collections::HashMap::new();
        for r in &trace.records {
            assert_ne!(r.from, 2);
            last_of_rep.insert(r.rep, r.to.unwrap());
        }
        assert!(last_of_rep.values().all(|&s| s == 2));
    }

    #[test]
    fn moment_flavored_models_cannot_be_simulated() {
        let p = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let model = SmpModel::with_moments(state_names(2), p, vec![Matrix::ones(2, 2)]);
        assert!(matches!(
            simulate_trace(&model, &SimConfig::new(0, 1)),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn config_is_checked() {
        let model = worked(true);
        assert!(simulate_trace(&model, &SimConfig::new(0, 0)).is_err());
        let mut cfg = SimConfig::new(0, 1);
        cfg.max_transitions = 0;
        assert!(simulate_trace(&model, &cfg).is_err());
        cfg.max_transitions = 10;
        cfg.initial = InitialState::Distribution(vec![1.0, 0.0]);
        assert!(simulate_trace(&model, &cfg).is_err());
        cfg.initial = InitialState::Distribution(vec![0.0, 1.0, 0.0]);
        let trace = simulate_trace(&model, &cfg).unwrap();
        assert_eq!(trace.records[0].from, 1);
    }

    #[test]
    fn deterministic_cycle_has_zero_spread() {
        let e = empirical_passage(&two_cycle(2.0, 3.0), 1, &SimConfig::new(11, 1000), 2).unwrap();
        assert_eq!(e.mean[0], vec![2.0, 5.0]);
        assert_eq!(e.std_err[0], vec![0.0, 0.0]);
        assert_eq!(e.mean[1], vec![4.0, 25.0]);
    }

    #[test]
    fn worked_example_from_state_one() {
        let e = empirical_passage(&worked(false), 2, &SimConfig::new(2024, 100_000), 1).unwrap();
        assert!((e.mean[0][0] - 33.9).abs() <= 4.0 * e.std_err[0][0]);
        assert_eq!(e.mean[0][2], 0.0);
        assert_eq!(e.censored, vec![0, 0, 0]);
    }

    #[test]
    fn empirical_requires_ua_target() {
        assert!(matches!(
            empirical_passage(&worked(false), 0, &SimConfig::new(1, 10), 1),
            Err(Error::NotUniversallyAccessible { .. })
        ));
    }

    #[test]
    fn censoring_is_reported() {
        // From state 1 the walk returns to state 1 w.p. 0.8 each round trip.
        let mut cfg = SimConfig::new(8, 2000);
        cfg.max_transitions = 3;
        let e = empirical_passage(&worked(false), 2, &cfg, 1).unwrap();
        assert!(e.censored[0] > 0);
        assert_eq!(e.completed[0] + e.censored[0], 2000);
        assert!(!e.warnings.is_empty());
    }

    #[test]
    fn second_moment_matches_analytic_on_worked_example() {
        let model = worked(false);
        let exact = higher_moments(&model, 2, 2).unwrap();
        let e = empirical_passage(&model, 2, &SimConfig::new(77, 100_000), 2).unwrap();
        for i in 0..2 {
            for r in 0..2 {
                let z = (e.mean[r][i] - exact.mu[r][i]).abs() / e.std_err[r][i];
                assert!(z <= 4.0, "source {i} order {}: z = {z}", r + 1);
            }
        }
    }

    #[test]
    fn estimates_recover_generating_model() {
        let model = worked(true);
        let mut cfg = SimConfig::new(42, 20_000);
        cfg.max_transitions = 15;
        let trace = simulate_trace(&model, &cfg).unwrap();
        let est = estimate(&trace, 3, 1).unwrap();
        let means = model.moment_set(2).unwrap();
        for i in 0..3 {
            let row_n: u64 = est.counts[i].iter().sum();
            for k in 0..3 {
                let p = model.p[(i, k)];
                let se = (p * (1.0 - p) / row_n as f64).sqrt();
                assert!((est.p_hat[(i, k)] - p).abs() <= 3.0 * se + 1e-12);
                let n = est.counts[i][k];
                if n > 1 {
                    let var = means.order(2)[(i, k)] - means.order(1)[(i, k)].powi(2);
                    let se = (var / n as f64).sqrt();
                    assert!(
                        (est.e_hat.order(1)[(i, k)] - means.order(1)[(i, k)]).abs()
                            <= 4.0 * se + 1e-12
                    );
                }
            }
        }
    }

    #[test]
    fn accumulator_merge_matches_sequential() {
        let xs: Vec<f64> = (0..1000).map(|k| ((k * 37) % 101) as f64 / 7.0).collect();
        let mut whole = MomentAccumulator::new(3);
        xs.iter().for_each(|&x| whole.push(x));
        let mut left = MomentAccumulator::new(3);
        let mut right = MomentAccumulator::new(3);
        xs[..333].iter().for_each(|&x| left.push(x));
        xs[333..].iter().for_each(|&x| right.push(x));
        left.merge(&right);
        for r in 1..=3 {
            assert!((left.mean(r) - whole.mean(r)).abs() <= 1e-9 * whole.mean(r));
            assert!((left.std_err(r) - whole.std_err(r)).abs() <= 1e-9 * whole.std_err(r));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]

        #[test]
        fn reproducible_under_any_seed(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let model = random_distribution_model(&mut rng, 4, 0.6);
            if let Some(&j) = ua_states(&model.p).first() {
                let cfg = SimConfig { max_transitions: 10_000, ..SimConfig::new(seed, 3000) };
                let a = empirical_passage(&model, j, &cfg, 2).unwrap();
                let b = empirical_passage(&model, j, &cfg, 2).unwrap();
                prop_assert_eq!(a, b);
            }
        }
    }
}
