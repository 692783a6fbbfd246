//! Random model generators for property tests, benchmarks and oracle runs.

use rand::Rng;

use crate::graph::{digraph_of, is_ua};
use crate::linalg::Matrix;
use crate::model::{DistributionMatrix, SmpModel, SojournDist};

/// Row-stochastic matrix where each cell is present with probability
/// `density`, weighted uniformly on `[0.05, 1)` before normalization. Empty
/// rows get a single successor chosen uniformly (possibly themselves), so
/// sparse draws produce reducible chains with absorbing states.
pub fn random_stochastic<R: Rng + ?Sized>(rng: &mut R, m: usize, density: f64) -> Matrix {
    let mut p = Matrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            if rng.random_bool(density) {
                p[(i, j)] = rng.random_range(0.05..1.0);
            }
        }
        let s: f64 = p.row(i).iter().sum();
        if s == 0.0 {
            let j = rng.random_range(0..m);
            p[(i, j)] = 1.0;
        } else {
            for j in 0..m {
                p[(i, j)] /= s;
            }
        }
    }
    p
}

/// A sojourn distribution from any family with mean roughly in `[0.2, 5]`
/// and light tails.
pub fn random_sojourn<R: Rng + ?Sized>(rng: &mut R) -> SojournDist {
    match rng.random_range(0..5) {
        0 => SojournDist::deterministic(rng.random_range(0.2..5.0)),
        1 => SojournDist::exponential(rng.random_range(0.2..5.0)),
        2 => {
            let a = rng.random_range(0.0..2.0);
            SojournDist::uniform(a, a + rng.random_range(0.1..3.0))
        }
        3 => SojournDist::gamma(rng.random_range(0.5..4.0), rng.random_range(0.2..1.5)),
        _ => SojournDist::lognormal(rng.random_range(-1.0..1.0), rng.random_range(0.0..0.5)),
    }
}

pub fn random_distributions<R: Rng + ?Sized>(rng: &mut R, p: &Matrix) -> DistributionMatrix {
    let m = p.rows();
    (0..m)
        .map(|i| {
            (0..m)
                .map(|j| (p[(i, j)] > 0.0).then(|| random_sojourn(rng)))
                .collect()
        })
        .collect()
}

pub fn state_names(m: usize) -> Vec<String> {
    (1..=m).map(|i| format!("s{i}")).collect()
}

pub fn random_distribution_model<R: Rng + ?Sized>(rng: &mut R, m: usize, density: f64) -> SmpModel {
    let p = random_stochastic(rng, m, density);
    let d = random_distributions(rng, &p);
    SmpModel::with_distributions(state_names(m), p, d)
}

/// Universally accessible states of `p`.
pub fn ua_states(p: &Matrix) -> Vec<usize> {
    let g = digraph_of(p).expect("stochastic matrices are nonnegative");
    (0..p.rows())
        .filter(|&j| is_ua(&g, j).expect("index in range"))
        .collect()
}
