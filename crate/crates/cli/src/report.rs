//! Report schema and number formatting.
//!
//! Field order in every report struct is the serialized order. State
//! indices are one-based throughout.

use std::io;

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use smp_passage::graph::{BlockKind, StructureReport};
use smp_passage::model::{Diagnostic, SmpModel};
use smp_passage::Error;

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub command: CommandEcho,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelDigest>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub structure: Option<StructureSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub results: Option<Results>,
    pub diagnostics: Vec<ReportDiagnostic>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorReport>,
    pub exit_code: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
}

impl Report {
    pub fn new(name: &str, argv: Vec<String>) -> Self {
        Report {
            command: CommandEcho {
                name: name.to_string(),
                argv,
            },
            model: None,
            structure: None,
            results: None,
            diagnostics: Vec::new(),
            error: None,
            exit_code: 0,
            timing: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CommandEcho {
    pub name: String,
    pub argv: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelDigest {
    pub states: usize,
    pub flavor: &'static str,
    pub state_names: Vec<String>,
    /// Highest moment order given; absent for distribution models.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub moment_orders: Option<usize>,
}

impl ModelDigest {
    pub fn of(model: &SmpModel) -> Self {
        ModelDigest {
            states: model.state_count(),
            flavor: model.sojourn.flavor(),
            state_names: model.state_names.clone(),
            moment_orders: model.available_orders(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Block {
    pub states: Vec<usize>,
    pub kind: BlockKind,
    pub spectral_radius: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StructureSummary {
    pub irreducible: bool,
    pub ua_states: Vec<usize>,
    pub blocks: Vec<Block>,
    pub permutation: Vec<usize>,
}

impl From<&StructureReport> for StructureSummary {
    fn from(s: &StructureReport) -> Self {
        let blocks = s
            .classes
            .iter()
            .zip(&s.block_kind)
            .zip(&s.block_spectral_radius)
            .map(|((c, &kind), &rho)| Block {
                states: one_based(c),
                kind,
                spectral_radius: rho,
            })
            .collect();
        StructureSummary {
            irreducible: s.irreducible,
            ua_states: one_based(&s.ua_states),
            blocks,
            permutation: one_based(&s.permutation),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StateRef {
    pub index: usize,
    pub name: String,
}

impl StateRef {
    pub fn new(names: &[String], i: usize) -> Self {
        StateRef {
            index: i + 1,
            name: names[i].clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum Results {
    Moments(MomentsResult),
    Simulate(SimulateResult),
    Estimate(EstimateResult),
}

#[derive(Debug, Clone, Serialize)]
pub struct MomentsResult {
    pub target: StateRef,
    pub order: usize,
    /// `moments[r - 1][i]` is `E[T^r]` from state `i + 1`.
    pub moments: Vec<Vec<f64>>,
    pub residual: f64,
    pub residual_tolerance: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Empirical {
    pub mean: Vec<Vec<f64>>,
    pub std_err: Vec<Vec<f64>>,
    pub completed: Vec<u64>,
    pub censored: Vec<u64>,
    pub mean_transitions: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceOutput {
    pub path: String,
    pub replications: usize,
    pub max_transitions: usize,
    pub start: StateRef,
    pub records: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateResult {
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<StateRef>,
    pub order: usize,
    pub replications: usize,
    pub max_transitions: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub empirical: Option<Empirical>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub analytic: Option<Vec<Vec<f64>>>,
    /// `(empirical - analytic) / std_err`; null where undefined.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z_scores: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<TraceOutput>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateResult {
    pub states: usize,
    pub transitions: usize,
    pub censored_discarded: usize,
    pub counts: Vec<Vec<u64>>,
    pub p_hat: Vec<Vec<f64>>,
    /// `e_hat[r - 1]` is the order-`r` sojourn moment matrix.
    pub e_hat: Vec<Vec<Vec<f64>>>,
    pub target: StateRef,
    pub order: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub moments: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub emitted_model: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportDiagnostic {
    pub kind: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub row: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub col: Option<usize>,
}

impl ReportDiagnostic {
    pub fn note(kind: &str, message: impl Into<String>) -> Self {
        ReportDiagnostic {
            kind: kind.to_string(),
            message: message.into(),
            row: None,
            col: None,
        }
    }
}

impl From<&Diagnostic> for ReportDiagnostic {
    fn from(d: &Diagnostic) -> Self {
        let kind = serde_json::to_value(d.kind)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        ReportDiagnostic {
            kind,
            message: d.message.clone(),
            row: d.row,
            col: d.col,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorReport {
    pub kind: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub states: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub row: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub column: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Timing {
    pub elapsed_ms: f64,
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_NOT_UA: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NotUniversallyAccessible { .. } | Error::IncompleteData { .. } => EXIT_NOT_UA,
        Error::Internal(_) => EXIT_INTERNAL,
        _ => EXIT_INVALID,
    }
}

/// Error record with one-based state labels; `names` is empty when the
/// states are unnamed.
pub fn error_report(err: &Error, names: &[String]) -> ErrorReport {
    let label = |i: usize| match names.get(i) {
        Some(n) => format!("{} ({n})", i + 1),
        None => (i + 1).to_string(),
    };
    let list = |v: &[usize]| v.iter().map(|&i| label(i)).collect::<Vec<_>>().join(", ");
    let mut rep = ErrorReport {
        kind: "",
        message: err.to_string(),
        states: None,
        row: None,
        line: None,
        column: None,
    };
    rep.kind = match err {
        Error::Dimension(_) => "dimension",
        Error::Domain(_) => "domain",
        Error::Singular { .. } => "singular",
        Error::IterationLimit { .. } => "iteration_limit",
        Error::NotUniversallyAccessible {
            target,
            unreachable,
        } => {
            rep.message = format!(
                "state {} is not universally accessible: it cannot be reached from state(s) {}",
                label(*target),
                list(unreachable)
            );
            rep.states = Some(one_based(unreachable));
            "not_universally_accessible"
        }
        Error::IncompleteData { states } => {
            rep.message = format!(
                "state(s) {} were entered but never observed leaving, so the estimated chain cannot reach the target from them",
                list(states)
            );
            rep.states = Some(one_based(states));
            "incomplete_data"
        }
        Error::Internal(_) => "internal",
        Error::Unsupported(_) => "unsupported",
        Error::Format { row, .. } => {
            rep.row = *row;
            "format"
        }
        Error::Parse { line, column, .. } => {
            rep.line = Some(*line);
            rep.column = Some(*column);
            "parse"
        }
        Error::Io(_) => "io",
    };
    rep
}

pub fn one_based(v: &[usize]) -> Vec<usize> {
    v.iter().map(|i| i + 1).collect()
}

/// Shortest decimal with 17 significant digits; positional notation for
/// magnitudes in `[1e-5, 1e16)`.
pub fn format_f64(x: f64) -> String {
    let sci = format!("{x:.16e}");
    let exp: i32 = sci[sci.find('e').expect("exponent") + 1..]
        .parse()
        .expect("integer exponent");
    if (-5..16).contains(&exp) {
        let decimals = (16 - exp) as usize;
        format!("{x:.decimals$}")
    } else {
        sci
    }
}

/// Six significant digits with trailing zeros removed.
pub fn sig6(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let exp: i32 = sci[sci.find('e').expect("exponent") + 1..]
        .parse()
        .expect("integer exponent");
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp) as usize;
        let s = format!("{x:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        let (mantissa, exponent) = sci.split_at(sci.find('e').expect("exponent"));
        let mantissa = mantissa.trim_end_matches('0').trim_end_matches('.');
        format!("{mantissa}{exponent}")
    }
}

/// Pretty printer that writes every float with 17 significant digits.
/// Non-finite values never reach it: serde_json emits them as null.
struct FullPrecision(PrettyFormatter<'static>);

impl Formatter for FullPrecision {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        w.write_all(format_f64(value).as_bytes())
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        w.write_all(format_f64(value as f64).as_bytes())
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + io::Write>(
        &mut self,
        w: &mut W,
        first: bool,
    ) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + io::Write>(
        &mut self,
        w: &mut W,
        first: bool,
    ) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser =
        serde_json::Serializer::with_formatter(&mut buf, FullPrecision(PrettyFormatter::new()));
    value.serialize(&mut ser).expect("reports serialize");
    String::from_utf8(buf).expect("serde_json writes UTF-8")
}
