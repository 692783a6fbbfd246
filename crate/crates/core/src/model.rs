//! Semi-Markov model: state labels, embedded transition matrix and sojourn
//! specification, either as raw moment matrices or as parametric sojourn
//! distributions per transition.

use std::fmt;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Gamma, LogNormal};
use serde::{Deserialize, Serialize};
use statrs::function::{erf::erfc, gamma::gamma_lr};

use crate::error::{Error, Result};
use crate::graph::STOCHASTIC_TOLERANCE;
use crate::linalg::Matrix;

/// Highest moment order supported anywhere in the crate.
pub const MAX_ORDER: usize = 20;

/// Relative slack when checking `e2 >= e1^2`.
const JENSEN_TOLERANCE: f64 = 1e-9;

/// Parametric sojourn-time distribution on `[0, ∞)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "lowercase")]
pub enum SojournDist {
    Deterministic(DeterministicParams),
    Exponential(ExponentialParams),
    Uniform(UniformParams),
    Gamma(GammaParams),
    Lognormal(LognormalParams),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeterministicParams {
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExponentialParams {
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniformParams {
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaParams {
    pub shape: f64,
    pub scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LognormalParams {
    pub mu: f64,
    pub sigma: f64,
}

impl SojournDist {
    pub fn deterministic(value: f64) -> Self {
        SojournDist::Deterministic(DeterministicParams { value })
    }

    pub fn exponential(rate: f64) -> Self {
        SojournDist::Exponential(ExponentialParams { rate })
    }

    pub fn uniform(a: f64, b: f64) -> Self {
        SojournDist::Uniform(UniformParams { a, b })
    }

    pub fn gamma(shape: f64, scale: f64) -> Self {
        SojournDist::Gamma(GammaParams { shape, scale })
    }

    pub fn lognormal(mu: f64, sigma: f64) -> Self {
        SojournDist::Lognormal(LognormalParams { mu, sigma })
    }

    pub fn family(&self) -> &'static str {
        match self {
            SojournDist::Deterministic(_) => "deterministic",
            SojournDist::Exponential(_) => "exponential",
            SojournDist::Uniform(_) => "uniform",
            SojournDist::Gamma(_) => "gamma",
            SojournDist::Lognormal(_) => "lognormal",
        }
    }

    pub fn check(&self) -> Result<()> {
        let ok = match *self {
            SojournDist::Deterministic(DeterministicParams { value }) => {
                value.is_finite() && value >= 0.0
            }
            SojournDist::Exponential(ExponentialParams { rate }) => rate.is_finite() && rate > 0.0,
            SojournDist::Uniform(UniformParams { a, b }) => {
                a.is_finite() && b.is_finite() && 0.0 <= a && a < b
            }
            SojournDist::Gamma(GammaParams { shape, scale }) => {
                shape.is_finite() && scale.is_finite() && shape > 0.0 && scale > 0.0
            }
            SojournDist::Lognormal(LognormalParams { mu, sigma }) => {
                mu.is_finite() && sigma.is_finite() && sigma >= 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("invalid parameters for {self}")))
        }
    }

    /// Raw moment `E[X^r]`.
    pub fn raw_moment(&self, r: usize) -> Result<f64> {
        self.check()?;
        let rf = r as f64;
        let value = match *self {
            SojournDist::Deterministic(DeterministicParams { value }) => value.powi(r as i32),
            SojournDist::Exponential(ExponentialParams { rate }) => {
                (1..=r).fold(1.0, |acc, k| acc * k as f64 / rate)
            }
            SojournDist::Uniform(UniformParams { a, b }) => {
                // (b^{r+1} - a^{r+1}) / ((r+1)(b-a)) = mean of a^k b^{r-k}
                (0..=r)
                    .map(|k| a.powi(k as i32) * b.powi((r - k) as i32))
                    .sum::<f64>()
                    / (rf + 1.0)
            }
            SojournDist::Gamma(GammaParams { shape, scale }) => {
                (0..r).fold(1.0, |acc, l| acc * scale * (shape + l as f64))
            }
            SojournDist::Lognormal(LognormalParams { mu, sigma }) => {
                (rf * mu + rf * rf * sigma * sigma / 2.0).exp()
            }
        };
        Ok(value)
    }

    /// `P(X <= x)`, right-continuous; `x = +∞` gives 1.
    pub fn cdf(&self, x: f64) -> f64 {
        if x == f64::INFINITY {
            return 1.0;
        }
        match *self {
            SojournDist::Deterministic(DeterministicParams { value }) => {
                if x >= value {
                    1.0
                } else {
                    0.0
                }
            }
            SojournDist::Exponential(ExponentialParams { rate }) => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-rate * x).exp_m1()
                }
            }
            SojournDist::Uniform(UniformParams { a, b }) => ((x - a) / (b - a)).clamp(0.0, 1.0),
            SojournDist::Gamma(GammaParams { shape, scale }) => {
                if x <= 0.0 {
                    0.0
                } else {
                    gamma_lr(shape, x / scale)
                }
            }
            SojournDist::Lognormal(LognormalParams { mu, sigma }) => {
                if x <= 0.0 {
                    0.0
                } else if sigma == 0.0 {
                    if x.ln() >= mu {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    0.5 * erfc(-(x.ln() - mu) / (sigma * std::f64::consts::SQRT_2))
                }
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            SojournDist::Deterministic(DeterministicParams { value }) => value,
            SojournDist::Exponential(ExponentialParams { rate }) => {
                let u: f64 = rng.random();
                -(-u).ln_1p() / rate
            }
            SojournDist::Uniform(UniformParams { a, b }) => {
                let u: f64 = rng.random();
                a + (b - a) * u
            }
            SojournDist::Gamma(GammaParams { shape, scale }) => Gamma::new(shape, scale)
                .expect("gamma parameters validated")
                .sample(rng),
            SojournDist::Lognormal(LognormalParams { mu, sigma }) => {
                if sigma == 0.0 {
                    mu.exp()
                } else {
                    LogNormal::new(mu, sigma)
                        .expect("lognormal parameters validated")
                        .sample(rng)
                }
            }
        }
    }
}

impl fmt::Display for SojournDist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            SojournDist::Deterministic(p) => write!(f, "deterministic(value={})", p.value),
            SojournDist::Exponential(p) => write!(f, "exponential(rate={})", p.rate),
            SojournDist::Uniform(p) => write!(f, "uniform(a={}, b={})", p.a, p.b),
            SojournDist::Gamma(p) => write!(f, "gamma(shape={}, scale={})", p.shape, p.scale),
            SojournDist::Lognormal(p) => write!(f, "lognormal(mu={}, sigma={})", p.mu, p.sigma),
        }
    }
}

/// Sojourn distribution per transition; `None` where no distribution is given.
pub type DistributionMatrix = Vec<Vec<Option<SojournDist>>>;

/// Conditional sojourn moments `e^(1) .. e^(R)`; `orders[r - 1]` is order `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentMatrixSet {
    pub orders: Vec<Matrix>,
}

impl MomentMatrixSet {
    pub fn new(orders: Vec<Matrix>) -> Self {
        MomentMatrixSet { orders }
    }

    pub fn max_order(&self) -> usize {
        self.orders.len()
    }

    /// Moment matrix of order `r`.
    pub fn order(&self, r: usize) -> &Matrix {
        &self.orders[r - 1]
    }

    pub fn truncated(&self, r: usize) -> Result<MomentMatrixSet> {
        if r == 0 || r > self.max_order() {
            return Err(Error::Domain(format!(
                "order {r} requested but moments are given up to order {}",
                self.max_order()
            )));
        }
        Ok(MomentMatrixSet {
            orders: self.orders[..r].to_vec(),
        })
    }
}

/// Closed-form raw moments of each cell's distribution. Cells without a
/// distribution get zero in every order.
pub fn moments_from_distributions(
    d: &DistributionMatrix,
    max_order: usize,
) -> Result<MomentMatrixSet> {
    if max_order == 0 || max_order > MAX_ORDER {
        return Err(Error::Domain(format!(
            "moment order must be in 1..={MAX_ORDER}, got {max_order}"
        )));
    }
    let rows = d.len();
    let cols = d.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 || d.iter().any(|r| r.len() != cols) {
        return Err(Error::Dimension(
            "distribution matrix must be rectangular and nonempty".into(),
        ));
    }
    let mut orders = Vec::with_capacity(max_order);
    for r in 1..=max_order {
        let mut e = Matrix::zeros(rows, cols);
        for (i, row) in d.iter().enumerate() {
            for (j, cell) in row.iter().enumerate() {
                if let Some(dist) = cell {
                    e[(i, j)] = dist.raw_moment(r)?;
                }
            }
        }
        orders.push(e);
    }
    Ok(MomentMatrixSet { orders })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Sojourn {
    Moments(MomentMatrixSet),
    Distributions(DistributionMatrix),
}

impl Sojourn {
    pub fn flavor(&self) -> &'static str {
        match self {
            Sojourn::Moments(_) => "moments",
            Sojourn::Distributions(_) => "distributions",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmpModel {
    pub state_names: Vec<String>,
    pub p: Matrix,
    pub sojourn: Sojourn,
}

impl SmpModel {
    pub fn with_moments(state_names: Vec<String>, p: Matrix, moments: Vec<Matrix>) -> Self {
        SmpModel {
            state_names,
            p,
            sojourn: Sojourn::Moments(MomentMatrixSet::new(moments)),
        }
    }

    pub fn with_distributions(state_names: Vec<String>, p: Matrix, d: DistributionMatrix) -> Self {
        SmpModel {
            state_names,
            p,
            sojourn: Sojourn::Distributions(d),
        }
    }

    pub fn state_count(&self) -> usize {
        self.p.rows()
    }

    /// Moment orders available without lowering: `None` means unbounded
    /// (parametric sojourns have every raw moment).
    pub fn available_orders(&self) -> Option<usize> {
        match &self.sojourn {
            Sojourn::Moments(m) => Some(m.max_order()),
            Sojourn::Distributions(_) => None,
        }
    }

    /// Moment matrices of orders `1..=max_order`, lowering parametric
    /// sojourns when necessary.
    pub fn moment_set(&self, max_order: usize) -> Result<MomentMatrixSet> {
        match &self.sojourn {
            Sojourn::Moments(m) => m.truncated(max_order),
            Sojourn::Distributions(d) => moments_from_distributions(d, max_order),
        }
    }

    pub fn distributions(&self) -> Result<&DistributionMatrix> {
        match &self.sojourn {
            Sojourn::Distributions(d) => Ok(d),
            Sojourn::Moments(_) => Err(Error::Unsupported(
                "the model gives sojourn moments only; sampling and kernel evaluation need distributions"
                    .into(),
            )),
        }
    }

    /// Index of a state given its label or a one-based number.
    pub fn resolve_state(&self, key: &str) -> Result<usize> {
        if let Some(i) = self.state_names.iter().position(|n| n == key) {
            return Ok(i);
        }
        match key.parse::<usize>() {
            Ok(k) if (1..=self.state_count()).contains(&k) => Ok(k - 1),
            _ => Err(Error::Domain(format!("unknown state {key:?}"))),
        }
    }

    pub fn from_json_str(s: &str) -> Result<SmpModel> {
        let file: ModelFile = serde_json::from_str(s)?;
        file.into_model()
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&ModelFile::from_model(self)).expect("model serializes")
    }

    pub fn read(path: impl AsRef<Path>) -> Result<SmpModel> {
        SmpModel::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json_string() + "\n")?;
        Ok(())
    }
}

/// `Q_ij(x) = p_ij F_ij(x)`.
pub fn kernel_at(model: &SmpModel, i: usize, j: usize, x: f64) -> Result<f64> {
    let d = model.distributions()?;
    let m = model.state_count();
    if i >= m || j >= m {
        return Err(Error::Domain(format!("state pair ({i}, {j}) out of range")));
    }
    if x.is_nan() || x < 0.0 {
        return Err(Error::Domain(format!(
            "kernel evaluated at negative time {x}"
        )));
    }
    let p = model.p[(i, j)];
    if p == 0.0 {
        return Ok(0.0);
    }
    match d[i][j] {
        Some(dist) => Ok(p * dist.cdf(x)),
        None => Err(Error::Domain(format!(
            "transition ({i}, {j}) has positive probability but no sojourn distribution"
        ))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticKind {
    Shape,
    StateNames,
    Negative,
    NotStochastic,
    MomentList,
    Jensen,
    MissingDistribution,
    InvalidParameters,
}

/// A violated model invariant. Locations are one-based.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub row: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub col: Option<usize>,
}

impl Diagnostic {
    fn new(kind: DiagnosticKind, message: impl Into<String>) -> Self {
        Diagnostic {
            kind,
            message: message.into(),
            row: None,
            col: None,
        }
    }

    fn at(mut self, row: usize, col: Option<usize>) -> Self {
        self.row = Some(row + 1);
        self.col = col.map(|c| c + 1);
        self
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

/// Checks every model invariant; an empty list means the model is usable.
pub fn validate(model: &SmpModel) -> Vec<Diagnostic> {
    use DiagnosticKind::*;
    let mut out = Vec::new();
    let p = &model.p;
    let m = p.rows();

    if !p.is_square() || m < 2 {
        out.push(Diagnostic::new(
            Shape,
            format!(
                "p & the moment matrices must be m x m with m > 1 (p is {}x{})",
                p.rows(),
                p.cols()
            ),
        ));
        return out;
    }

    if model.state_names.len() != m {
        out.push(Diagnostic::new(
            StateNames,
            format!(
                "{} state names given for {m} states",
                model.state_names.len()
            ),
        ));
    } else {
        for (i, name) in model.state_names.iter().enumerate() {
            if name.is_empty() {
                out.push(Diagnostic::new(StateNames, "state names must be nonempty").at(i, None));
            } else if model.state_names[..i].contains(name) {
                out.push(
                    Diagnostic::new(StateNames, format!("duplicate state name {name:?}"))
                        .at(i, None),
                );
            }
        }
    }

    let mut p_ok = true;
    for i in 0..m {
        for j in 0..m {
            if p[(i, j)] < 0.0 {
                p_ok = false;
                out.push(
                    Diagnostic::new(Negative, "p must have valid nonnegative entries")
                        .at(i, Some(j)),
                );
            }
        }
    }
    if p_ok {
        for (i, s) in p.row_sums().into_iter().enumerate() {
            if (s - 1.0).abs() > STOCHASTIC_TOLERANCE {
                out.push(
                    Diagnostic::new(
                        NotStochastic,
                        format!("p is not a stochastic matrix: row {} sums to {s}", i + 1),
                    )
                    .at(i, None),
                );
            }
        }
    }

    match &model.sojourn {
        Sojourn::Moments(set) => validate_moments(p, set, &mut out),
        Sojourn::Distributions(d) => validate_distributions(p, d, &mut out),
    }
    out
}

fn validate_moments(p: &Matrix, set: &MomentMatrixSet, out: &mut Vec<Diagnostic>) {
    use DiagnosticKind::*;
    let m = p.rows();
    if set.orders.is_empty() {
        out.push(Diagnostic::new(
            MomentList,
            "the moment list must contain at least one matrix",
        ));
        return;
    }
    if set.max_order() > MAX_ORDER {
        out.push(Diagnostic::new(
            MomentList,
            format!(
                "at most {MAX_ORDER} moment orders are supported, got {}",
                set.max_order()
            ),
        ));
    }
    let mut shapes_ok = true;
    for (k, e) in set.orders.iter().enumerate() {
        if e.rows() != m || e.cols() != m {
            shapes_ok = false;
            out.push(Diagnostic::new(
                Shape,
                format!(
                    "p & the moment matrices must be m x m with m > 1 (order {} is {}x{})",
                    k + 1,
                    e.rows(),
                    e.cols()
                ),
            ));
            continue;
        }
        for i in 0..m {
            for j in 0..m {
                if e[(i, j)] < 0.0 {
                    out.push(
                        Diagnostic::new(
                            Negative,
                            format!(
                                "moment matrix of order {} must have valid nonnegative entries",
                                k + 1
                            ),
                        )
                        .at(i, Some(j)),
                    );
                }
            }
        }
    }
    if shapes_ok && set.max_order() >= 2 {
        let (e1, e2) = (set.order(1), set.order(2));
        for i in 0..m {
            for j in 0..m {
                let sq = e1[(i, j)] * e1[(i, j)];
                if p[(i, j)] > 0.0 && e2[(i, j)] < sq - JENSEN_TOLERANCE * sq.max(1.0) {
                    out.push(
                        Diagnostic::new(
                            Jensen,
                            format!(
                                "second moment {} is below the squared mean {sq}",
                                e2[(i, j)]
                            ),
                        )
                        .at(i, Some(j)),
                    );
                }
            }
        }
    }
}

fn validate_distributions(p: &Matrix, d: &DistributionMatrix, out: &mut Vec<Diagnostic>) {
    use DiagnosticKind::*;
    let m = p.rows();
    if d.len() != m || d.iter().any(|r| r.len() != m) {
        out.push(Diagnostic::new(
            Shape,
            "the distribution matrix must be m x m",
        ));
        return;
    }
    for i in 0..m {
        for j in 0..m {
            match &d[i][j] {
                Some(dist) => {
                    if let Err(e) = dist.check() {
                        out.push(Diagnostic::new(InvalidParameters, e.to_string()).at(i, Some(j)));
                    }
                }
                None if p[(i, j)] > 0.0 => out.push(
                    Diagnostic::new(
                        MissingDistribution,
                        "transition has positive probability but no sojourn distribution",
                    )
                    .at(i, Some(j)),
                ),
                None => {}
            }
        }
    }
}

/// On-disk model schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    states: Vec<String>,
    p: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    moments: Option<MomentsFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    distributions: Option<DistributionMatrix>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MomentsFile {
    orders: Vec<Vec<Vec<f64>>>,
}

impl ModelFile {
    fn into_model(self) -> Result<SmpModel> {
        let format = |message: String| Error::Format { row: None, message };
        let p = Matrix::from_rows(&self.p).map_err(|e| format(format!("p: {e}")))?;
        let sojourn = match (self.moments, self.distributions) {
            (Some(moments), None) => {
                let orders = moments
                    .orders
                    .iter()
                    .enumerate()
                    .map(|(k, e)| {
                        Matrix::from_rows(e)
                            .map_err(|err| format(format!("moment order {}: {err}", k + 1)))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Sojourn::Moments(MomentMatrixSet::new(orders))
            }
            (None, Some(d)) => Sojourn::Distributions(d),
            _ => {
                return Err(format(
                    "exactly one of `moments` or `distributions` must be given".into(),
                ))
            }
        };
        Ok(SmpModel {
            state_names: self.states,
            p,
            sojourn,
        })
    }

    fn from_model(model: &SmpModel) -> Self {
        let (moments, distributions) = match &model.sojourn {
            Sojourn::Moments(set) => (
                Some(MomentsFile {
                    orders: set.orders.iter().map(Matrix::to_rows).collect(),
                }),
                None,
            ),
            Sojourn::Distributions(d) => (None, Some(d.clone())),
        };
        ModelFile {
            states: model.state_names.clone(),
            p: model.p.to_rows(),
            moments,
            distributions,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn names(m: usize) -> Vec<String> {
        (1..=m).map(|i| format!("s{i}")).collect()
    }

    fn worked() -> SmpModel {
        let p = Matrix::from_rows(&[[0.0, 1.0, 0.0], [0.8, 0.0, 0.2], [0.0, 0.0, 1.0]]).unwrap();
        let e = Matrix::from_rows(&[[0.0, 6.0, 0.0], [0.7, 0.0, 1.1], [0.0, 0.0, 0.0]]).unwrap();
        SmpModel::with_moments(names(3), p, vec![e])
    }

    #[test]
    fn worked_example_is_valid() {
        assert!(validate(&worked()).is_empty());
    }

    #[test]
    fn row_sum_below_one_is_flagged() {
        let mut model = worked();
        model.p[(1, 2)] = 0.1;
        let d = validate(&model);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].kind, DiagnosticKind::NotStochastic);
        assert!(d[0].message.contains("not a stochastic matrix"));
        assert_eq!(d[0].row, Some(2));
    }

    #[test]
    fn one_by_one_is_a_shape_error() {
        let model =
            SmpModel::with_moments(names(1), Matrix::identity(1), vec![Matrix::zeros(1, 1)]);
        let d = validate(&model);
        assert_eq!(d[0].kind, DiagnosticKind::Shape);
        assert!(d[0].message.contains("m > 1"));
    }

    #[test]
    fn negative_moment_and_jensen_are_flagged() {
        let mut model = worked();
        if let Sojourn::Moments(set) = &mut model.sojourn {
            set.orders[0][(1, 0)] = -1.0;
            let mut e2 = set.orders[0].clone();
            e2[(1, 0)] = 0.0;
            e2[(0, 1)] = 30.0; // < 36
            set.orders.push(e2);
        }
        let kinds: Vec<_> = validate(&model).iter().map(|d| d.kind).collect();
        assert!(kinds.contains(&DiagnosticKind::Negative));
        assert!(kinds.contains(&DiagnosticKind::Jensen));
    }

    #[test]
    fn missing_distribution_is_flagged() {
        let p = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let d = vec![
            vec![None, Some(SojournDist::exponential(1.0))],
            vec![None, None],
        ];
        let diags = validate(&SmpModel::with_distributions(names(2), p, d));
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].kind, DiagnosticKind::MissingDistribution);
        assert_eq!((diags[0].row, diags[0].col), (Some(2), Some(1)));
    }

    #[test]
    fn closed_form_moments() {
        assert_eq!(SojournDist::exponential(2.0).raw_moment(1).unwrap(), 0.5);
        assert_eq!(SojournDist::deterministic(6.0).raw_moment(2).unwrap(), 36.0);
        let u2 = SojournDist::uniform(0.0, 1.0).raw_moment(2).unwrap();
        assert!((u2 - 1.0 / 3.0).abs() < 1e-15);
        // exponential r!/λ^r
        assert!((SojournDist::exponential(0.5).raw_moment(3).unwrap() - 48.0).abs() < 1e-12);
        // gamma(k=2, θ=3): θ²k(k+1) = 54
        assert!((SojournDist::gamma(2.0, 3.0).raw_moment(2).unwrap() - 54.0).abs() < 1e-12);
        // uniform(1, 3): (3^3 - 1)/(3*2) = 26/6
        assert!((SojournDist::uniform(1.0, 3.0).raw_moment(2).unwrap() - 26.0 / 6.0).abs() < 1e-12);
        let ln = SojournDist::lognormal(0.1, 0.4).raw_moment(2).unwrap();
        assert!((ln - (0.2f64 + 2.0 * 0.16).exp()).abs() < 1e-12);
    }

    #[test]
    fn invalid_parameters_are_domain_errors() {
        assert!(SojournDist::exponential(0.0).raw_moment(1).is_err());
        assert!(SojournDist::uniform(2.0, 1.0).raw_moment(1).is_err());
        assert!(SojournDist::gamma(-1.0, 1.0).raw_moment(1).is_err());
        assert!(SojournDist::lognormal(0.0, -0.1).raw_moment(1).is_err());
        assert!(SojournDist::deterministic(-3.0).raw_moment(1).is_err());
    }

    #[test]
    fn moments_from_distributions_rejects_order_zero() {
        let d = vec![vec![Some(SojournDist::deterministic(1.0))]];
        assert!(moments_from_distributions(&d, 0).is_err());
        assert!(moments_from_distributions(&d, MAX_ORDER + 1).is_err());
    }

    fn two_state_dist() -> SmpModel {
        let p = Matrix::from_rows(&[[0.8, 0.2], [1.0, 0.0]]).unwrap();
        let d = vec![
            vec![
                Some(SojournDist::exponential(1.0)),
                Some(SojournDist::deterministic(6.0)),
            ],
            vec![Some(SojournDist::gamma(2.0, 0.5)), None],
        ];
        SmpModel::with_distributions(names(2), p, d)
    }

    #[test]
    fn kernel_examples() {
        let model = two_state_dist();
        assert_eq!(kernel_at(&model, 1, 1, 10.0).unwrap(), 0.0);
        assert_eq!(kernel_at(&model, 0, 1, 5.0).unwrap(), 0.0);
        assert_eq!(kernel_at(&model, 0, 1, 6.0).unwrap(), 0.2);
        assert_eq!(kernel_at(&model, 0, 0, f64::INFINITY).unwrap(), 0.8);
        assert!((kernel_at(&model, 0, 0, 1e6).unwrap() - 0.8).abs() < 1e-15);
        assert!(matches!(
            kernel_at(&worked(), 0, 1, 1.0),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn kernel_is_monotone() {
        let model = two_state_dist();
        for (i, j) in [(0, 0), (0, 1), (1, 0)] {
            let mut last = 0.0;
            for k in 0..200 {
                let q = kernel_at(&model, i, j, k as f64 * 0.05).unwrap();
                assert!(q >= last);
                last = q;
            }
            assert!(
                (kernel_at(&model, i, j, f64::INFINITY).unwrap() - model.p[(i, j)]).abs() < 1e-15
            );
        }
    }

    #[test]
    fn cdfs_match_known_values() {
        let g = SojournDist::gamma(1.0, 2.0); // exponential with mean 2
        assert!((g.cdf(2.0) - (1.0 - (-1.0f64).exp())).abs() < 1e-12);
        let ln = SojournDist::lognormal(0.0, 1.0);
        assert!((ln.cdf(1.0) - 0.5).abs() < 1e-12);
        assert_eq!(SojournDist::uniform(1.0, 3.0).cdf(2.0), 0.5);
    }

    #[test]
    fn sampled_means_match_closed_form() {
        let dists = [
            SojournDist::exponential(0.7),
            SojournDist::uniform(0.5, 2.5),
            SojournDist::gamma(2.5, 0.8),
            SojournDist::lognormal(0.2, 0.5),
            SojournDist::deterministic(1.5),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        for d in dists {
            let xs: Vec<f64> = (0..n).map(|_| d.sample(&mut rng)).collect();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let se = (var / n as f64).sqrt();
            let exact = d.raw_moment(1).unwrap();
            assert!(
                (mean - exact).abs() <= 4.0 * se + 1e-12,
                "{d}: {mean} vs {exact}"
            );
        }
    }

    #[test]
    fn json_round_trip() {
        let m = worked();
        let back = SmpModel::from_json_str(&m.to_json_string()).unwrap();
        assert_eq!(back, m);
        let d = two_state_dist();
        assert_eq!(SmpModel::from_json_str(&d.to_json_string()).unwrap(), d);
    }

    #[test]
    fn json_rejects_unknown_keys_and_bad_flavors() {
        let bad = r#"{"states":["a","b"],"p":[[0,1],[1,0]],"moments":{"orders":[[[0,1],[1,0]]]},"extra":1}"#;
        assert!(SmpModel::from_json_str(bad).is_err());
        let both = r#"{"states":["a","b"],"p":[[0,1],[1,0]]}"#;
        assert!(matches!(
            SmpModel::from_json_str(both),
            Err(Error::Format { .. })
        ));
        let params = r#"{"states":["a","b"],"p":[[0,1],[1,0]],
            "distributions":[[null,{"family":"exponential","params":{"rate":1,"mean":2}}],
                             [{"family":"deterministic","params":{"value":1}},null]]}"#;
        assert!(SmpModel::from_json_str(params).is_err());
        match SmpModel::from_json_str("{\n  \"states\": [1,") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn resolve_state_by_name_or_number() {
        let m = worked();
        assert_eq!(m.resolve_state("s2").unwrap(), 1);
        assert_eq!(m.resolve_state("3").unwrap(), 2);
        assert!(m.resolve_state("4").is_err());
        assert!(m.resolve_state("0").is_err());
    }
}
