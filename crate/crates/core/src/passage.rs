//! First-passage moments to a universally accessible target state.
//!
//! With `A = p I(-j)` (column `j` of `p` zeroed), the moment vectors
//! `μ_j^(r)` solve
//!
//! ```text
//! [I - A] μ^(1) = (p ∘ e^(1)) 1
//! [I - A] μ^(r) = (p ∘ e^(r)) 1 + Σ_{s=1}^{r-1} C(r,s) (p ∘ e^(r-s)) ((J-I)_j ∘ μ^(s))
//! ```
//!
//! `I - A` is nonsingular exactly when `j` is universally accessible, so the
//! graph test runs first and the solver's pivot test only cross-checks it.
//! One LU factorization serves every order.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::digraph_of;
use crate::linalg::{hadamard, vec_inf_norm, Lu, Matrix};
use crate::model::{validate, MomentMatrixSet, SmpModel, MAX_ORDER};

/// Moment vectors for one target; `mu[r - 1][i]` is `E[T_j^r | Z(0) = i]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PassageMoments {
    pub target: usize,
    pub mu: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl PassageMoments {
    pub fn max_order(&self) -> usize {
        self.mu.len()
    }

    pub fn order(&self, r: usize) -> &[f64] {
        &self.mu[r - 1]
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PassageOptions {
    /// Report `+∞` for sources that may never reach the target instead of
    /// failing; the remaining sources are solved on their closed subsystem.
    pub allow_unreachable: bool,
}

/// `p I(-j)`: `p` with column `j` zeroed.
pub fn masked_product(p: &Matrix, j: usize) -> Matrix {
    let mut a = p.clone();
    for i in 0..a.rows() {
        a[(i, j)] = 0.0;
    }
    a
}

/// `I - p I(-j)`.
pub fn transient_operator(p: &Matrix, j: usize) -> Matrix {
    let a = masked_product(p, j);
    Matrix::from_fn(p.rows(), p.cols(), |i, k| (i == k) as u8 as f64 - a[(i, k)])
}

/// Exact `C(n, k)` for `n <= MAX_ORDER`.
pub fn binomial(n: usize, k: usize) -> u64 {
    assert!(
        n <= MAX_ORDER,
        "binomial coefficients are only tabulated up to {MAX_ORDER}"
    );
    if k > n {
        return 0;
    }
    let k = k.min(n - k) as u64;
    let n = n as u64;
    (0..k).fold(1u64, |acc, i| acc * (n - i) / (i + 1))
}

/// `μ_j^(1)` for a validated model.
pub fn first_moment(model: &SmpModel, j: usize) -> Result<Vec<f64>> {
    let pm = higher_moments(model, j, 1)?;
    Ok(pm.mu.into_iter().next().expect("one order requested"))
}

/// `μ_j^(1..=max_order)` for a validated model.
pub fn higher_moments(model: &SmpModel, j: usize, max_order: usize) -> Result<PassageMoments> {
    higher_moments_with(model, j, max_order, PassageOptions::default())
}

pub fn higher_moments_with(
    model: &SmpModel,
    j: usize,
    max_order: usize,
    opts: PassageOptions,
) -> Result<PassageMoments> {
    if let Some(d) = validate(model).into_iter().next() {
        return Err(Error::Domain(format!("invalid model: {d}")));
    }
    check_order(max_order)?;
    let moments = model.moment_set(max_order)?;
    passage_moments(&model.p, &moments, j, max_order, opts)
}

fn check_order(max_order: usize) -> Result<()> {
    if max_order == 0 || max_order > MAX_ORDER {
        return Err(Error::Domain(format!(
            "moment order must be in 1..={MAX_ORDER}, got {max_order}"
        )));
    }
    Ok(())
}

/// Passage moments from a transition matrix and sojourn moments directly.
///
/// `p` must be nonnegative and square; rows need not sum to one, which lets
/// estimated matrices with unvisited rows through (those rows then fail the
/// accessibility test).
pub fn passage_moments(
    p: &Matrix,
    moments: &MomentMatrixSet,
    j: usize,
    max_order: usize,
    opts: PassageOptions,
) -> Result<PassageMoments> {
    check_order(max_order)?;
    let m = p.rows();
    if !p.is_square() {
        return Err(Error::Dimension(format!("p is {}x{}", p.rows(), p.cols())));
    }
    if j >= m {
        return Err(Error::Domain(format!(
            "target {j} out of range for {m} states"
        )));
    }
    if max_order > moments.max_order() {
        return Err(Error::Domain(format!(
            "order {max_order} requested but moments are given up to order {}",
            moments.max_order()
        )));
    }
    for e in &moments.orders[..max_order] {
        if e.rows() != m || e.cols() != m {
            return Err(Error::Dimension("moment matrices must match p".into()));
        }
    }

    let g = digraph_of(p)?;
    let unreachable = g.unreachable_sources(j)?;
    if !unreachable.is_empty() && !opts.allow_unreachable {
        return Err(Error::NotUniversallyAccessible {
            target: j,
            unreachable,
        });
    }
    let finite = finite_sources(p, j, &unreachable);
    let idx: Vec<usize> = (0..m).filter(|&i| finite[i]).collect();

    let mut notes = Vec::new();
    if p[(j, j)] == 1.0 {
        notes.push(format!(
            "target {} is absorbing; its entry is the self-loop sojourn moment",
            j + 1
        ));
    }
    if idx.len() < m {
        notes.push(format!(
            "{} source(s) may never reach the target; reported as infinite",
            m - idx.len()
        ));
    }

    let weighted: Vec<Matrix> = moments.orders[..max_order]
        .iter()
        .map(|e| hadamard(p, e))
        .collect::<Result<_>>()?;

    let mut mu: Vec<Vec<f64>> = Vec::with_capacity(max_order);
    if idx.is_empty() {
        mu.resize(max_order, vec![f64::INFINITY; m]);
        return Ok(PassageMoments {
            target: j,
            mu,
            notes,
        });
    }

    let operator = transient_operator(p, j).submatrix(&idx);
    let lu = Lu::factor(&operator).map_err(|e| {
        Error::Internal(format!(
            "state {} passes the accessibility test but I - pI(-j) is singular ({e})",
            j + 1
        ))
    })?;

    for r in 1..=max_order {
        let rhs: Vec<f64> = idx
            .iter()
            .map(|&i| {
                let mut acc: f64 = weighted[r - 1].row(i).iter().sum();
                for s in 1..r {
                    let c = binomial(r, s) as f64;
                    let pe = &weighted[r - s - 1];
                    let mut inner = 0.0;
                    for k in 0..m {
                        if k != j && pe[(i, k)] != 0.0 {
                            inner += pe[(i, k)] * mu[s - 1][k];
                        }
                    }
                    acc += c * inner;
                }
                acc
            })
            .collect();
        let x = lu.solve(&rhs)?;
        let mut full = vec![f64::INFINITY; m];
        for (&i, v) in idx.iter().zip(x) {
            full[i] = v;
        }
        mu.push(full);
    }

    Ok(PassageMoments {
        target: j,
        mu,
        notes,
    })
}

/// Sources whose walk reaches `j` with probability one: those that cannot
/// reach, while avoiding `j`, any state that cannot access `j`.
fn finite_sources(p: &Matrix, j: usize, unreachable: &[usize]) -> Vec<bool> {
    let m = p.rows();
    let mut infinite = vec![false; m];
    let mut stack: Vec<usize> = unreachable.to_vec();
    for &u in unreachable {
        infinite[u] = true;
    }
    while let Some(v) = stack.pop() {
        if v == j {
            continue;
        }
        for u in 0..m {
            if !infinite[u] && p[(u, v)] > crate::graph::EDGE_EPSILON {
                infinite[u] = true;
                stack.push(u);
            }
        }
    }
    infinite.into_iter().map(|b| !b).collect()
}

/// Largest componentwise residual of the first-step equations
///
/// ```text
/// μ_ij^(r) = Σ_k p_ik e_ik^(r) + Σ_{s=1}^{r} C(r,s) Σ_{k≠j} p_ik e_ik^(r-s) μ_kj^(s)
/// ```
///
/// with `e^(0) = 1`, evaluated over finite entries only.
pub fn verify_first_step(p: &Matrix, moments: &MomentMatrixSet, pm: &PassageMoments) -> f64 {
    let m = p.rows();
    let j = pm.target;
    let e = |order: usize, i: usize, k: usize| {
        if order == 0 {
            1.0
        } else {
            moments.order(order)[(i, k)]
        }
    };
    let mut worst: f64 = 0.0;
    for r in 1..=pm.max_order() {
        for i in 0..m {
            let lhs = pm.mu[r - 1][i];
            if !lhs.is_finite() {
                continue;
            }
            let mut rhs = 0.0;
            for k in 0..m {
                if p[(i, k)] == 0.0 {
                    continue;
                }
                rhs += p[(i, k)] * e(r, i, k);
                if k != j {
                    for s in 1..=r {
                        rhs += binomial(r, s) as f64 * p[(i, k)] * e(r - s, i, k) * pm.mu[s - 1][k];
                    }
                }
            }
            worst = worst.max((lhs - rhs).abs());
        }
    }
    worst
}

/// Residual bound used throughout: `1e-8 (1 + ||μ||_inf)` over finite entries.
pub fn residual_tolerance(pm: &PassageMoments) -> f64 {
    let norm = pm
        .mu
        .iter()
        .map(|v| {
            vec_inf_norm(
                &v.iter()
                    .copied()
                    .filter(|x| x.is_finite())
                    .collect::<Vec<_>>(),
            )
        })
        .fold(0.0, f64::max);
    1e-8 * (1.0 + norm)
}

pub fn verify_model(model: &SmpModel, pm: &PassageMoments) -> Result<f64> {
    let moments = model.moment_set(pm.max_order())?;
    Ok(verify_first_step(&model.p, &moments, pm))
}
