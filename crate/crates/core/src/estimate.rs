//! Plug-in estimation of `p` and the sojourn moments from observed
//! transitions, and of passage moments from those estimates.
//!
//! `p̂_ij = n_ij / Σ_k n_ik` and `ê^(r)_ij = (1/n_ij) Σ_K x_ijK^r` over the
//! completed sojourns `x_ijK` from `i` to `j`. Cells never observed get
//! `p̂ = 0` and are excluded; only the target's accessibility in the digraph
//! of `p̂` is required for the passage estimate.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{MomentMatrixSet, SmpModel, MAX_ORDER};
use crate::passage::{passage_moments, PassageMoments, PassageOptions};

/// One observed sojourn. `to == None` marks a sojourn still in progress when
/// observation ended; such records are discarded by the estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionRecord {
    pub rep: u64,
    pub from: usize,
    pub to: Option<usize>,
    pub sojourn: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TransitionTrace {
    pub records: Vec<TransitionRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    rep: u64,
    from: usize,
    to: Option<usize>,
    sojourn: f64,
}

const HEADER: [&str; 4] = ["rep", "from", "to", "sojourn"];

impl TransitionTrace {
    pub fn completed(&self) -> impl Iterator<Item = &TransitionRecord> {
        self.records.iter().filter(|r| r.to.is_some())
    }

    pub fn transition_count(&self) -> usize {
        self.completed().count()
    }

    /// Checks state ranges, sojourn signs, chaining within replications and
    /// contiguity of replication ids. `row` in errors is the 1-based line.
    pub fn check(&self, m: usize) -> Result<()> {
        let err = |k: usize, message: String| Error::Format {
            row: Some(k + 2),
            message,
        };
        let mut finished_reps = std::collections::HashSet::new();
        for (k, rec) in self.records.iter().enumerate() {
            if rec.from >= m || rec.to.is_some_and(|t| t >= m) {
                return Err(err(k, format!("state out of range 1..={m}")));
            }
            if !rec.sojourn.is_finite() || rec.sojourn < 0.0 {
                return Err(err(
                    k,
                    format!("sojourn {} must be finite and nonnegative", rec.sojourn),
                ));
            }
            if k > 0 {
                let prev = &self.records[k - 1];
                if prev.rep == rec.rep {
                    match prev.to {
                        None => {
                            return Err(err(k, "a censored sojourn must end its replication".into()))
                        }
                        Some(t) if t != rec.from => {
                            return Err(err(
                                k,
                                format!(
                                    "replication {} does not chain: previous row ends in {}, this row starts in {}",
                                    rec.rep,
                                    t + 1,
                                    rec.from + 1
                                ),
                            ))
                        }
                        _ => {}
                    }
                } else {
                    finished_reps.insert(prev.rep);
                    if finished_reps.contains(&rec.rep) {
                        return Err(err(k, format!("replication {} is not contiguous", rec.rep)));
                    }
                }
            }
        }
        Ok(())
    }

    /// Reads the `rep,from,to,sojourn` CSV schema with one-based states.
    pub fn read_csv<R: Read>(reader: R, m: usize) -> Result<TransitionTrace> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers().map_err(|e| csv_error(&e, None))?.clone();
        if headers.iter().collect::<Vec<_>>() != HEADER {
            return Err(Error::Format {
                row: Some(1),
                message: format!("expected header `{}`", HEADER.join(",")),
            });
        }
        let mut records = Vec::new();
        for row in rdr.deserialize::<CsvRow>() {
            let row = row.map_err(|e| {
                let line = e.position().map(|p| p.line() as usize);
                csv_error(&e, line)
            })?;
            let line_no = records.len() + 2;
            let to_index = |s: usize| {
                if s == 0 || s > m {
                    Err(Error::Format {
                        row: Some(line_no),
                        message: format!("state {s} out of range 1..={m}"),
                    })
                } else {
                    Ok(s - 1)
                }
            };
            records.push(TransitionRecord {
                rep: row.rep,
                from: to_index(row.from)?,
                to: row.to.map(to_index).transpose()?,
                sojourn: row.sojourn,
            });
        }
        let trace = TransitionTrace { records };
        trace.check(m)?;
        Ok(trace)
    }

    pub fn read_csv_path(path: impl AsRef<Path>, m: usize) -> Result<TransitionTrace> {
        TransitionTrace::read_csv(std::fs::File::open(path)?, m)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(writer);
        w.write_record(HEADER).map_err(|e| csv_error(&e, None))?;
        for r in &self.records {
            w.serialize(CsvRow {
                rep: r.rep,
                from: r.from + 1,
                to: r.to.map(|t| t + 1),
                sojourn: r.sojourn,
            })
            .map_err(|e| csv_error(&e, None))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_path(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }
}

fn csv_error(e: &csv::Error, line: Option<usize>) -> Error {
    Error::Format {
        row: line,
        message: e.to_string(),
    }
}

/// Transition counts and per-cell sojourn power sums. Merging is
/// associative and commutative, so replications can be tallied separately.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionCounts {
    m: usize,
    max_order: usize,
    n: Vec<u64>,
    sums: Vec<f64>,
}

impl TransitionCounts {
    pub fn new(m: usize, max_order: usize) -> Self {
        TransitionCounts {
            m,
            max_order,
            n: vec![0; m * m],
            sums: vec![0.0; max_order * m * m],
        }
    }

    pub fn add(&mut self, from: usize, to: usize, sojourn: f64) {
        let cell = from * self.m + to;
        self.n[cell] += 1;
        let mut power = 1.0;
        for r in 0..self.max_order {
            power *= sojourn;
            self.sums[r * self.m * self.m + cell] += power;
        }
    }

    pub fn merge(&mut self, other: &TransitionCounts) {
        assert_eq!((self.m, self.max_order), (other.m, other.max_order));
        for (a, b) in self.n.iter_mut().zip(&other.n) {
            *a += b;
        }
        for (a, b) in self.sums.iter_mut().zip(&other.sums) {
            *a += b;
        }
    }

    pub fn count(&self, from: usize, to: usize) -> u64 {
        self.n[from * self.m + to]
    }

    pub fn total(&self) -> u64 {
        self.n.iter().sum()
    }
}

/// Plug-in estimates with coverage information.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatedModel {
    pub p_hat: Matrix,
    pub e_hat: MomentMatrixSet,
    pub counts: Vec<Vec<u64>>,
    /// States never observed leaving.
    pub unvisited_rows: Vec<usize>,
    /// Censored trailing sojourns that were dropped.
    pub censored_discarded: usize,
}

impl EstimatedModel {
    pub fn observed(&self, i: usize, j: usize) -> bool {
        self.counts[i][j] > 0
    }

    pub fn state_count(&self) -> usize {
        self.p_hat.rows()
    }

    /// Human-readable coverage notes.
    pub fn diagnostics(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .unvisited_rows
            .iter()
            .map(|i| format!("row {} unobserved", i + 1))
            .collect();
        if self.censored_discarded > 0 {
            out.push(format!(
                "{} censored final sojourn(s) discarded",
                self.censored_discarded
            ));
        }
        out
    }

    /// Moment-flavored model built from the estimates; unobserved cells
    /// carry zero moments.
    pub fn to_model(&self, state_names: Vec<String>) -> SmpModel {
        SmpModel::with_moments(state_names, self.p_hat.clone(), self.e_hat.orders.clone())
    }

    fn from_counts(c: &TransitionCounts, censored_discarded: usize) -> Self {
        let m = c.m;
        let mut p_hat = Matrix::zeros(m, m);
        let mut orders = vec![Matrix::zeros(m, m); c.max_order];
        let mut counts = vec![vec![0u64; m]; m];
        let mut unvisited_rows = Vec::new();
        for i in 0..m {
            let row_total: u64 = (0..m).map(|j| c.count(i, j)).sum();
            if row_total == 0 {
                unvisited_rows.push(i);
            }
            for j in 0..m {
                let n = c.count(i, j);
                counts[i][j] = n;
                if n == 0 {
                    continue;
                }
                p_hat[(i, j)] = n as f64 / row_total as f64;
                for (r, e) in orders.iter_mut().enumerate() {
                    e[(i, j)] = c.sums[r * m * m + i * m + j] / n as f64;
                }
            }
        }
        EstimatedModel {
            p_hat,
            e_hat: MomentMatrixSet::new(orders),
            counts,
            unvisited_rows,
            censored_discarded,
        }
    }
}

pub fn estimate(trace: &TransitionTrace, m: usize, max_order: usize) -> Result<EstimatedModel> {
    if m == 0 {
        return Err(Error::Domain("state count must be positive".into()));
    }
    if max_order == 0 || max_order > MAX_ORDER {
        return Err(Error::Domain(format!(
            "moment order must be in 1..={MAX_ORDER}, got {max_order}"
        )));
    }
    trace.check(m)?;
    if trace.transition_count() == 0 {
        return Err(Error::Domain(
            "trace contains no completed transitions".into(),
        ));
    }
    let mut counts = TransitionCounts::new(m, max_order);
    let mut censored = 0;
    for rec in &trace.records {
        match rec.to {
            Some(to) => counts.add(rec.from, to, rec.sojourn),
            None => censored += 1,
        }
    }
    Ok(EstimatedModel::from_counts(&counts, censored))
}

/// Plug-in passage moments `μ̂_j^(1..=max_order)`.
pub fn estimate_passage(
    est: &EstimatedModel,
    j: usize,
    max_order: usize,
) -> Result<PassageMoments> {
    let m = est.state_count();
    // States entered but never seen leaving make p̂ unusable around them.
    let entered: Vec<bool> = (0..m)
        .map(|k| (0..m).any(|i| est.counts[i][k] > 0))
        .collect();
    let incomplete: Vec<usize> = est
        .unvisited_rows
        .iter()
        .copied()
        .filter(|&i| entered[i])
        .collect();
    if !incomplete.is_empty() {
        return Err(Error::IncompleteData { states: incomplete });
    }
    passage_moments(
        &est.p_hat,
        &est.e_hat,
        j,
        max_order,
        PassageOptions::default(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(rep: u64, from: usize, to: usize, sojourn: f64) -> TransitionRecord {
        TransitionRecord {
            rep,
            from,
            to: Some(to),
            sojourn,
        }
    }

    #[test]
    fn counts_and_moments_by_hand() {
        // 1->2 three times (5, 6, 7), 1->3 once (2); separate reps keep the chain valid.
        let records = vec![
            rec(0, 0, 1, 5.0),
            rec(1, 0, 1, 6.0),
            rec(2, 0, 1, 7.0),
            rec(3, 0, 2, 2.0),
        ];
        let est = estimate(&TransitionTrace { records }, 3, 2).unwrap();
        assert_eq!(est.p_hat[(0, 1)], 0.75);
        assert_eq!(est.p_hat[(0, 2)], 0.25);
        assert_eq!(est.e_hat.order(1)[(0, 1)], 6.0);
        assert!((est.e_hat.order(2)[(0, 1)] - 110.0 / 3.0).abs() < 1e-12);
        assert_eq!(est.unvisited_rows, vec![1, 2]);
        assert!(est.diagnostics().contains(&"row 2 unobserved".to_string()));
    }

    #[test]
    fn single_record() {
        let est = estimate(
            &TransitionTrace {
                records: vec![rec(0, 0, 1, 4.0)],
            },
            2,
            1,
        )
        .unwrap();
        assert_eq!(est.p_hat[(0, 1)], 1.0);
        assert_eq!(est.e_hat.order(1)[(0, 1)], 4.0);
        assert_eq!(est.p_hat.row(1), &[0.0, 0.0]);
    }

    #[test]
    fn rejects_bad_records() {
        let bad_state = TransitionTrace {
            records: vec![rec(0, 0, 5, 1.0)],
        };
        assert!(matches!(
            estimate(&bad_state, 3, 1),
            Err(Error::Format { .. })
        ));
        let negative = TransitionTrace {
            records: vec![rec(0, 0, 1, -1.0)],
        };
        assert!(matches!(
            estimate(&negative, 3, 1),
            Err(Error::Format { .. })
        ));
        let broken = TransitionTrace {
            records: vec![rec(0, 0, 1, 1.0), rec(0, 2, 1, 1.0)],
        };
        assert!(matches!(estimate(&broken, 3, 1), Err(Error::Format { .. })));
        let split = TransitionTrace {
            records: vec![rec(0, 0, 1, 1.0), rec(1, 0, 1, 1.0), rec(0, 1, 0, 1.0)],
        };
        assert!(matches!(estimate(&split, 3, 1), Err(Error::Format { .. })));
        assert!(estimate(&TransitionTrace::default(), 3, 1).is_err());
    }

    #[test]
    fn censored_tail_is_discarded() {
        let mut records = vec![rec(0, 0, 1, 1.0), rec(0, 1, 0, 2.0)];
        records.push(TransitionRecord {
            rep: 0,
            from: 0,
            to: None,
            sojourn: 50.0,
        });
        let est = estimate(&TransitionTrace { records }, 2, 1).unwrap();
        assert_eq!(est.censored_discarded, 1);
        assert_eq!(est.e_hat.order(1)[(0, 1)], 1.0);
        assert_eq!(est.counts[0][1], 1);
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let csv_text = "rep,from,to,sojourn\r\n0,1,2,6\r\n0,2,1,0.5\r\n0,1,,3\r\n1,2,3,1.25\n";
        let trace = TransitionTrace::read_csv(csv_text.as_bytes(), 3).unwrap();
        assert_eq!(trace.records.len(), 4);
        assert_eq!(trace.records[2].to, None);
        let mut out = Vec::new();
        trace.write_csv(&mut out).unwrap();
        let again = TransitionTrace::read_csv(out.as_slice(), 3).unwrap();
        assert_eq!(again, trace);

        let bad = "rep,from,to,sojourn\n0,1,2,6\n0,2,x,1\n";
        match TransitionTrace::read_csv(bad.as_bytes(), 3) {
            Err(Error::Format { row, .. }) => assert_eq!(row, Some(3)),
            other => panic!("{other:?}"),
        }
        let out_of_range = "rep,from,to,sojourn\n0,1,4,6\n";
        match TransitionTrace::read_csv(out_of_range.as_bytes(), 3) {
            Err(Error::Format { row, .. }) => assert_eq!(row, Some(2)),
            other => panic!("{other:?}"),
        }
        let header = "rep,src,to,sojourn\n";
        assert!(TransitionTrace::read_csv(header.as_bytes(), 3).is_err());
    }

    fn worked_trace(p21: usize, p23: usize, p33: usize) -> TransitionTrace {
        // Exactly realizes deterministic sojourns 6, 0.7, 1.1, 0 with the
        // transition frequencies p21 : p23 out of state 2.
        let mut records = Vec::new();
        let mut rep = 0;
        for _ in 0..p21 {
            records.push(rec(rep, 0, 1, 6.0));
            records.push(rec(rep, 1, 0, 0.7));
            rep += 1;
        }
        for _ in 0..p23 {
            records.push(rec(rep, 0, 1, 6.0));
            records.push(rec(rep, 1, 2, 1.1));
            rep += 1;
        }
        for _ in 0..p33 {
            records.push(rec(rep, 2, 2, 0.0));
            rep += 1;
        }
        TransitionTrace { records }
    }

    #[test]
    fn exact_trace_reproduces_analytic_moments() {
        let est = estimate(&worked_trace(4, 1, 1), 3, 1).unwrap();
        let pm = estimate_passage(&est, 2, 1).unwrap();
        for (g, w) in pm.mu[0].iter().zip([33.9, 27.9, 0.0]) {
            assert!((g - w).abs() < 1e-9, "{:?}", pm.mu[0]);
        }
    }

    #[test]
    fn missing_edge_is_a_ua_violation() {
        let est = estimate(&worked_trace(4, 0, 1), 3, 1).unwrap();
        assert!(matches!(
            estimate_passage(&est, 2, 1),
            Err(Error::NotUniversallyAccessible { .. })
        ));
    }

    #[test]
    fn reachable_unvisited_row_is_incomplete_data() {
        let est = estimate(&worked_trace(4, 1, 0), 3, 1).unwrap();
        assert_eq!(
            estimate_passage(&est, 2, 1),
            Err(Error::IncompleteData { states: vec![2] })
        );
    }

    #[test]
    fn estimated_model_round_trips_through_json() {
        let est = estimate(&worked_trace(4, 1, 1), 3, 2).unwrap();
        let model = est.to_model(vec!["a".into(), "b".into(), "c".into()]);
        assert!(crate::model::validate(&model).is_empty());
        assert_eq!(
            SmpModel::from_json_str(&model.to_json_string()).unwrap(),
            model
        );
    }

    proptest! {
        #[test]
        fn merge_is_order_independent(
            cells in proptest::collection::vec((0usize..3, 0usize..3, 0u32..1000), 1..60),
            split in 0usize..60,
        ) {
            let split = split.min(cells.len());
            // Integer-valued sojourns keep float sums exact.
            let fill = |xs: &[(usize, usize, u32)]| {
                let mut c = TransitionCounts::new(3, 2);
                for &(i, j, x) in xs { c.add(i, j, x as f64); }
                c
            };
            let mut ab = fill(&cells[..split]);
            ab.merge(&fill(&cells[split..]));
            let mut ba = fill(&cells[split..]);
            ba.merge(&fill(&cells[..split]));
            prop_assert_eq!(&ab, &ba);
            prop_assert_eq!(&ab, &fill(&cells));
        }

        #[test]
        fn visited_rows_are_stochastic(
            steps in proptest::collection::vec((0usize..4, 0.0f64..5.0), 1..200),
        ) {
            let mut records = Vec::new();
            let mut state = 0;
            for (next, x) in steps {
                records.push(rec(0, state, next, x));
                state = next;
            }
            let est = estimate(&TransitionTrace { records }, 4, 1).unwrap();
            for i in 0..4 {
                let s: f64 = est.p_hat.row(i).iter().sum();
                if est.unvisited_rows.contains(&i) {
                    prop_assert_eq!(s, 0.0);
                } else {
                    prop_assert!((s - 1.0).abs() < 1e-15);
                }
            }
        }
    }
}
