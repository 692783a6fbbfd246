//! Digraph structure of nonnegative matrices.
//!
//! Covers accessibility (paths of length at least one), universal
//! accessibility, strongly connected components, and the canonical block
//! upper-triangular ordering of a transition matrix with transient classes
//! first and closed (recurrent) classes last.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{spectral_radius, Matrix};

/// Magnitudes below this are treated as structural zeros.
pub const EDGE_EPSILON: f64 = 1e-15;

/// Tolerance on row sums for a matrix to count as row-stochastic.
pub const STOCHASTIC_TOLERANCE: f64 = 1e-9;

/// Directed graph on vertices `0..n`; edge `(i, j)` exists iff `a[i][j] > 0`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Digraph {
    successors: Vec<Vec<usize>>,
    predecessors: Vec<Vec<usize>>,
}

impl Digraph {
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut successors = vec![Vec::new(); n];
        let mut predecessors = vec![Vec::new(); n];
        for (i, j) in edges {
            assert!(
                i < n && j < n,
                "edge ({i}, {j}) out of range for {n} vertices"
            );
            successors[i].push(j);
            predecessors[j].push(i);
        }
        for list in successors.iter_mut().chain(predecessors.iter_mut()) {
            list.sort_unstable();
            list.dedup();
        }
        Digraph {
            successors,
            predecessors,
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.successors.len()
    }

    pub fn successors(&self, i: usize) -> &[usize] {
        &self.successors[i]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.successors[i].binary_search(&j).is_ok()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.successors
            .iter()
            .enumerate()
            .flat_map(|(i, s)| s.iter().map(move |&j| (i, j)))
    }

    fn check(&self, v: usize) -> Result<()> {
        if v >= self.vertex_count() {
            return Err(Error::Domain(format!(
                "state {v} out of range for {} states",
                self.vertex_count()
            )));
        }
        Ok(())
    }

    /// Vertices with a path of length zero or more to `j`.
    pub fn reaching(&self, j: usize) -> Vec<bool> {
        let mut seen = vec![false; self.vertex_count()];
        seen[j] = true;
        let mut stack = vec![j];
        while let Some(v) = stack.pop() {
            for &u in &self.predecessors[v] {
                if !seen[u] {
                    seen[u] = true;
                    stack.push(u);
                }
            }
        }
        seen
    }

    /// Vertices reachable from `i` by a path of length zero or more.
    pub fn reachable_from(&self, i: usize) -> Vec<bool> {
        let mut seen = vec![false; self.vertex_count()];
        seen[i] = true;
        let mut stack = vec![i];
        while let Some(v) = stack.pop() {
            for &w in &self.successors[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        seen
    }

    /// All `i` (including `j` itself) with `i ↛ j`.
    pub fn unreachable_sources(&self, j: usize) -> Result<Vec<usize>> {
        self.check(j)?;
        let reach = self.reaching(j);
        Ok((0..self.vertex_count())
            .filter(|&i| !self.successors[i].iter().any(|&k| reach[k]))
            .collect())
    }
}

/// Digraph of a square nonnegative matrix.
pub fn digraph_of(a: &Matrix) -> Result<Digraph> {
    if !a.is_square() {
        return Err(Error::Dimension(format!(
            "digraph of a {}x{} matrix",
            a.rows(),
            a.cols()
        )));
    }
    if !a.is_nonnegative() {
        return Err(Error::Domain(
            "digraph requires a nonnegative matrix".into(),
        ));
    }
    let n = a.rows();
    let edges = (0..n).flat_map(|i| (0..n).map(move |j| (i, j)));
    Ok(Digraph::from_edges(
        n,
        edges.filter(|&(i, j)| a[(i, j)] > EDGE_EPSILON),
    ))
}

/// True iff a directed path of length ≥ 1 leads from `i` to `j`.
pub fn accessible(g: &Digraph, i: usize, j: usize) -> Result<bool> {
    g.check(i)?;
    g.check(j)?;
    let reach = g.reaching(j);
    Ok(g.successors(i).iter().any(|&k| reach[k]))
}

/// True iff every state, `j` included, can access `j`.
pub fn is_ua(g: &Digraph, j: usize) -> Result<bool> {
    Ok(g.unreachable_sources(j)?.is_empty())
}

pub fn strongly_connected(g: &Digraph) -> bool {
    tarjan_scc(g).len() == 1
}

/// Strongly connected components in reverse topological order of the
/// condensation (every edge between components points to an earlier one).
pub fn tarjan_scc(g: &Digraph) -> Vec<Vec<usize>> {
    const UNVISITED: usize = usize::MAX;
    let n = g.vertex_count();
    let mut index = vec![UNVISITED; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut components = Vec::new();
    let mut next = 0;
    // (vertex, position in its successor list)
    let mut call: Vec<(usize, usize)> = Vec::new();

    for root in 0..n {
        if index[root] != UNVISITED {
            continue;
        }
        call.push((root, 0));
        index[root] = next;
        low[root] = next;
        next += 1;
        stack.push(root);
        on_stack[root] = true;

        while let Some(&mut (v, ref mut pos)) = call.last_mut() {
            if let Some(&w) = g.successors(v).get(*pos) {
                *pos += 1;
                if index[w] == UNVISITED {
                    index[w] = next;
                    low[w] = next;
                    next += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                let mut component = Vec::new();
                loop {
                    let w = stack.pop().expect("tarjan stack underflow");
                    on_stack[w] = false;
                    component.push(w);
                    if w == v {
                        break;
                    }
                }
                component.sort_unstable();
                components.push(component);
            }
        }
    }
    components
}

/// Block ordering of a nonnegative matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalForm {
    /// Classes in block order; vertices ascending inside each class.
    pub classes: Vec<Vec<usize>>,
    /// `permutation[a]` is the original index placed at position `a`.
    pub permutation: Vec<usize>,
    /// Whether any edge leaves the class.
    pub closed: Vec<bool>,
    pub block_spectral_radius: Vec<f64>,
}

impl CanonicalForm {
    pub fn permuted(&self, a: &Matrix) -> Matrix {
        a.permuted(&self.permutation)
    }

    pub fn max_block_radius(&self) -> f64 {
        self.block_spectral_radius
            .iter()
            .copied()
            .fold(0.0, f64::max)
    }
}

/// SCC condensation laid out block upper-triangular: open classes in
/// topological order (ties by depth, then smallest member), closed classes last.
pub fn canonical_form(a: &Matrix) -> Result<CanonicalForm> {
    let g = digraph_of(a)?;
    let sccs = tarjan_scc(&g);
    let n = g.vertex_count();

    let mut class_of = vec![0; n];
    for (c, members) in sccs.iter().enumerate() {
        for &v in members {
            class_of[v] = c;
        }
    }
    let k = sccs.len();
    let mut class_succ: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, j) in g.edges() {
        let (ci, cj) = (class_of[i], class_of[j]);
        if ci != cj {
            class_succ[ci].push(cj);
        }
    }
    for s in class_succ.iter_mut() {
        s.sort_unstable();
        s.dedup();
    }

    // Tarjan yields sinks first, so iterating in reverse visits every class
    // before its successors.
    let mut depth = vec![0usize; k];
    for c in (0..k).rev() {
        for &d in &class_succ[c] {
            depth[d] = depth[d].max(depth[c] + 1);
        }
    }

    let mut open: Vec<usize> = (0..k).filter(|&c| !class_succ[c].is_empty()).collect();
    let mut sinks: Vec<usize> = (0..k).filter(|&c| class_succ[c].is_empty()).collect();
    open.sort_by_key(|&c| (depth[c], sccs[c][0]));
    sinks.sort_by_key(|&c| sccs[c][0]);

    let order: Vec<usize> = open.into_iter().chain(sinks).collect();
    let classes: Vec<Vec<usize>> = order.iter().map(|&c| sccs[c].clone()).collect();
    let closed = order.iter().map(|&c| class_succ[c].is_empty()).collect();
    let permutation = classes.iter().flatten().copied().collect();
    let block_spectral_radius = classes
        .iter()
        .map(|members| {
            if members.len() == 1 && !g.has_edge(members[0], members[0]) {
                Ok(0.0)
            } else {
                spectral_radius(&a.submatrix(members))
            }
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(CanonicalForm {
        classes,
        permutation,
        closed,
        block_spectral_radius,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockKind {
    Transient,
    Recurrent,
}

/// Structural summary of a transition matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureReport {
    pub classes: Vec<Vec<usize>>,
    pub permutation: Vec<usize>,
    pub block_kind: Vec<BlockKind>,
    pub block_spectral_radius: Vec<f64>,
    pub ua_states: Vec<usize>,
    pub irreducible: bool,
}

pub fn check_stochastic(p: &Matrix) -> Result<()> {
    if !p.is_square() {
        return Err(Error::Dimension(format!(
            "transition matrix is {}x{}",
            p.rows(),
            p.cols()
        )));
    }
    if !p.is_nonnegative() {
        return Err(Error::Domain(
            "transition matrix has negative entries".into(),
        ));
    }
    for (i, s) in p.row_sums().into_iter().enumerate() {
        if (s - 1.0).abs() > STOCHASTIC_TOLERANCE {
            return Err(Error::Domain(format!(
                "p is not a stochastic matrix: row {i} sums to {s}"
            )));
        }
    }
    Ok(())
}

pub fn structure(p: &Matrix) -> Result<StructureReport> {
    check_stochastic(p)?;
    let g = digraph_of(p)?;
    let form = canonical_form(p)?;
    let block_kind = form
        .closed
        .iter()
        .map(|&c| {
            if c {
                BlockKind::Recurrent
            } else {
                BlockKind::Transient
            }
        })
        .collect();
    let mut ua_states = Vec::new();
    for j in 0..g.vertex_count() {
        if is_ua(&g, j)? {
            ua_states.push(j);
        }
    }
    Ok(StructureReport {
        irreducible: form.classes.len() == 1,
        classes: form.classes,
        permutation: form.permutation,
        block_kind,
        block_spectral_radius: form.block_spectral_radius,
        ua_states,
    })
}
