//! The network model: a capacity-annotated DAG with a set of data-holding
//! source nodes and one decision node.
//!
//! Node ids are 1-based and the decision node is always node `N`.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    /// Bits per channel use.
    pub capacity: f64,
}

/// JSON form: `{num_nodes, edges: [[i, j, capacity], …], sources: […], decision_node}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphFile {
    pub num_nodes: usize,
    pub edges: Vec<(usize, usize, f64)>,
    pub sources: Vec<usize>,
    pub decision_node: usize,
}

/// Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct DagNetwork {
    num_nodes: usize,
    edges: Vec<Edge>,
    sources: BTreeSet<usize>,
    order: Vec<usize>,
    incoming: BTreeMap<usize, Vec<usize>>,
    outgoing: BTreeMap<usize, Vec<usize>>,
}

/// A node subset `S ⊆ [1..N−1]`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Cut {
    pub subset: BTreeSet<usize>,
}

impl Cut {
    pub fn new(nodes: impl IntoIterator<Item = usize>) -> Self {
        Self { subset: nodes.into_iter().collect() }
    }
}

impl DagNetwork {
    pub fn new(num_nodes: usize, edges: Vec<Edge>, sources: impl IntoIterator<Item = usize>) -> Result<Self> {
        if num_nodes < 2 {
            return Err(Error::Graph("a network needs at least a source and a decision node".into()));
        }
        let sources: BTreeSet<usize> = sources.into_iter().collect();
        if sources.is_empty() {
            return Err(Error::Graph("no source nodes".into()));
        }
        for &s in &sources {
            if s == 0 || s >= num_nodes {
                return Err(Error::Graph(format!("source {s} must lie in [1, {}]", num_nodes - 1)));
            }
        }
        let mut seen = BTreeSet::new();
        let mut incoming: BTreeMap<usize, Vec<usize>> = (1..=num_nodes).map(|k| (k, Vec::new())).collect();
        let mut outgoing: BTreeMap<usize, Vec<usize>> = (1..=num_nodes).map(|k| (k, Vec::new())).collect();
        for e in &edges {
            if e.from == 0 || e.from > num_nodes || e.to == 0 || e.to > num_nodes {
                return Err(Error::Graph(format!("edge ({}, {}) references an unknown node", e.from, e.to)));
            }
            if e.from == e.to {
                return Err(Error::Graph(format!("self-loop at node {}", e.from)));
            }
            if !(e.capacity >= 0.0) || !e.capacity.is_finite() {
                return Err(Error::Graph(format!("edge ({}, {}) has invalid capacity {}", e.from, e.to, e.capacity)));
            }
            if !seen.insert((e.from, e.to)) {
                return Err(Error::Graph(format!("duplicate edge ({}, {})", e.from, e.to)));
            }
            if e.from == num_nodes {
                return Err(Error::Graph(format!("decision node {num_nodes} has an outgoing edge")));
            }
            incoming.get_mut(&e.to).expect("node").push(e.from);
            outgoing.get_mut(&e.from).expect("node").push(e.to);
        }
        for v in incoming.values_mut().chain(outgoing.values_mut()) {
            v.sort_unstable();
        }

        // Kahn's algorithm, smallest ready id first
        let mut indeg: BTreeMap<usize, usize> = incoming.iter().map(|(&k, v)| (k, v.len())).collect();
        let mut ready: BTreeSet<usize> = indeg.iter().filter(|(_, &d)| d == 0).map(|(&k, _)| k).collect();
        let mut order = Vec::with_capacity(num_nodes);
        while let Some(k) = ready.pop_first() {
            order.push(k);
            for &t in &outgoing[&k] {
                let d = indeg.get_mut(&t).expect("node");
                *d -= 1;
                if *d == 0 {
                    ready.insert(t);
                }
            }
        }
        if order.len() != num_nodes {
            return Err(Error::Graph("graph contains a cycle".into()));
        }

        for k in 1..=num_nodes {
            if !sources.contains(&k) && incoming[&k].is_empty() {
                return Err(Error::Graph(format!("node {k} holds no data and has no incoming edges")));
            }
        }
        let dag = Self { num_nodes, edges, sources, order, incoming, outgoing };
        for k in 1..num_nodes {
            if !dag.reaches_decision(k) {
                return Err(Error::Graph(format!("node {k} does not reach the decision node")));
            }
        }
        Ok(dag)
    }

    pub fn from_file(file: &GraphFile) -> Result<Self> {
        if file.decision_node != file.num_nodes {
            return Err(Error::Graph(format!(
                "decision node must be node {} (the last node), got {}",
                file.num_nodes, file.decision_node
            )));
        }
        let edges = file.edges.iter().map(|&(from, to, capacity)| Edge { from, to, capacity }).collect();
        Self::new(file.num_nodes, edges, file.sources.iter().copied())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_file(&serde_json::from_str(text)?)
    }

    pub fn to_file(&self) -> GraphFile {
        GraphFile {
            num_nodes: self.num_nodes,
            edges: self.edges.iter().map(|e| (e.from, e.to, e.capacity)).collect(),
            sources: self.sources.iter().copied().collect(),
            decision_node: self.num_nodes,
        }
    }

    /// `J` sources wired straight into decision node `J + 1`.
    pub fn star(num_sources: usize, capacity: f64) -> Result<Self> {
        let n = num_sources + 1;
        let edges = (1..=num_sources).map(|j| Edge { from: j, to: n, capacity }).collect();
        Self::new(n, edges, 1..=num_sources)
    }

    /// Sources 1, 2, 3; relay 4 fed by 2 and 3; decision 5 fed by 1 and 4.
    pub fn five_node(c15: f64, c24: f64, c34: f64, c45: f64) -> Result<Self> {
        let edges = vec![
            Edge { from: 3, to: 4, capacity: c34 },
            Edge { from: 2, to: 4, capacity: c24 },
            Edge { from: 4, to: 5, capacity: c45 },
            Edge { from: 1, to: 5, capacity: c15 },
        ];
        Self::new(5, edges, [1, 2, 3])
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn decision_node(&self) -> usize {
        self.num_nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn sources(&self) -> &BTreeSet<usize> {
        &self.sources
    }

    pub fn is_source(&self, k: usize) -> bool {
        self.sources.contains(&k)
    }

    /// Deterministic topological order (smallest ready id first).
    pub fn topo_order(&self) -> &[usize] {
        &self.order
    }

    /// In-neighbours of `k` in ascending id order.
    pub fn in_neighbors(&self, k: usize) -> &[usize] {
        self.incoming.get(&k).map_or(&[], Vec::as_slice)
    }

    pub fn out_neighbors(&self, k: usize) -> &[usize] {
        self.outgoing.get(&k).map_or(&[], Vec::as_slice)
    }

    pub fn capacity(&self, from: usize, to: usize) -> Option<f64> {
        self.edges.iter().find(|e| e.from == from && e.to == to).map(|e| e.capacity)
    }

    /// Nodes that are neither sources nor the decision node.
    pub fn relays(&self) -> Vec<usize> {
        (1..self.num_nodes).filter(|k| !self.sources.contains(k)).collect()
    }

    fn reaches_decision(&self, start: usize) -> bool {
        let mut stack = vec![start];
        let mut seen = BTreeSet::new();
        while let Some(k) = stack.pop() {
            if k == self.num_nodes {
                return true;
            }
            if seen.insert(k) {
                stack.extend(self.out_neighbors(k));
            }
        }
        false
    }

    /// `C(S) = Σ C_ij` over edges leaving `S`.
    pub fn cut_capacity(&self, cut: &Cut) -> Result<f64> {
        if let Some(&bad) = cut.subset.iter().find(|&&k| k == 0 || k >= self.num_nodes) {
            return Err(Error::InvalidArgument(format!(
                "cut node {bad} outside [1, {}] (the decision node cannot be in a cut)",
                self.num_nodes - 1
            )));
        }
        Ok(self
            .edges
            .iter()
            .filter(|e| cut.subset.contains(&e.from) && !cut.subset.contains(&e.to))
            .map(|e| e.capacity)
            .sum())
    }

    /// Every `S ⊆ [1..N−1]`, as bitmasks over node ids.
    pub fn all_cuts(&self) -> impl Iterator<Item = Cut> + '_ {
        let n = self.num_nodes - 1;
        (0u64..(1u64 << n)).map(move |mask| Cut::new((1..=n).filter(|k| mask & (1 << (k - 1)) != 0)))
    }

    /// Check the layer-size conditions: a source's first layer takes its
    /// observation plus everything its in-neighbours emit; any other node's
    /// first layer takes exactly what its in-neighbours emit.
    pub fn check_layer_compat(
        &self,
        sizes: &BTreeMap<usize, LayerSizes>,
        input_dims: &BTreeMap<usize, usize>,
    ) -> CompatReport {
        let mut violations = Vec::new();
        for k in 1..=self.num_nodes {
            let Some(own) = sizes.get(&k) else {
                violations.push(CompatViolation { node: k, kind: ViolationKind::MissingModel });
                continue;
            };
            let mut expected = 0;
            if self.is_source(k) {
                match input_dims.get(&k) {
                    Some(&d) => expected += d,
                    None => {
                        violations.push(CompatViolation { node: k, kind: ViolationKind::MissingInputDim });
                        continue;
                    }
                }
            }
            let mut missing_sender = false;
            for &i in self.in_neighbors(k) {
                match sizes.get(&i) {
                    Some(s) => expected += s.last,
                    None => missing_sender = true,
                }
            }
            if missing_sender {
                // reported at the sender itself
                continue;
            }
            if own.first != expected {
                violations
                    .push(CompatViolation { node: k, kind: ViolationKind::FirstLayer { expected, actual: own.first } });
            }
        }
        CompatReport { violations }
    }
}

/// Width of a node's first layer and of the vector it emits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSizes {
    pub first: usize,
    pub last: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum ViolationKind {
    MissingModel,
    MissingInputDim,
    FirstLayer { expected: usize, actual: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CompatViolation {
    pub node: usize,
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct CompatReport {
    pub violations: Vec<CompatViolation>,
}

impl CompatReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_ok() {
            return Ok(());
        }
        let msg = self
            .violations
            .iter()
            .map(|v| match &v.kind {
                ViolationKind::MissingModel => format!("node {}: no model", v.node),
                ViolationKind::MissingInputDim => format!("node {}: no input dimension", v.node),
                ViolationKind::FirstLayer { expected, actual } => {
                    format!("node {}: first layer {actual}, expected {expected}", v.node)
                }
            })
            .collect::<Vec<_>>()
            .join("; ");
        Err(Error::Compat(msg))
    }
}

/// Bits needed to ship `vector_len` values per sample for `batch` samples at
/// `bits_per_value` bits each.
pub fn message_bits(vector_len: usize, batch: usize, bits_per_value: u32) -> u64 {
    vector_len as u64 * batch as u64 * bits_per_value as u64
}
