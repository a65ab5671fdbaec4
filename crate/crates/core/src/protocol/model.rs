//! Per-node models and the assembled in-network system.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{DagNetwork, LayerSizes};
use crate::nn::{Activation, FeedForwardNet, GaussianHead, NetSpec};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Source,
    Relay,
    Decision,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeModel {
    pub node_id: usize,
    pub net: FeedForwardNet,
    pub head: Option<GaussianHead>,
    pub role: Role,
}

impl NodeModel {
    /// Width of the vector the node sends downstream (μ width for a head).
    pub fn emitted_dim(&self) -> usize {
        match self.head {
            Some(h) => h.latent_dim(),
            None => self.net.out_dim(),
        }
    }

    pub fn layer_sizes(&self) -> LayerSizes {
        LayerSizes { first: self.net.in_dim(), last: self.emitted_dim() }
    }
}

/// Which training objective the decision node evaluates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Objective {
    /// Sources wired straight into the decision node; per-source auxiliary
    /// decoders at the decision node, coefficient `s` on every ratio.
    Star,
    /// The three-source, one-relay hop graph: `s` on node 1, `2s` on 2 and 3.
    FiveNode,
    /// Any other topology: explicit ratio coefficients (multiples of `s`)
    /// per headed source, no auxiliary decoders.
    Custom { coefficients: BTreeMap<usize, f64> },
}

impl Objective {
    /// Pick the standard objective matching the topology, or a custom one
    /// with unit coefficients on every source.
    pub fn detect(dag: &DagNetwork) -> Objective {
        if is_star(dag) {
            Objective::Star
        } else if is_five_node(dag) {
            Objective::FiveNode
        } else {
            Objective::Custom { coefficients: dag.sources().iter().map(|&j| (j, 1.0)).collect() }
        }
    }

    /// Multiple of `s` applied to node `k`'s log-ratio.
    pub fn ratio_coefficient(&self, k: usize) -> f64 {
        match self {
            Objective::Star => 1.0,
            Objective::FiveNode => match k {
                1 => 1.0,
                2 | 3 => 2.0,
                _ => 0.0,
            },
            Objective::Custom { coefficients } => coefficients.get(&k).copied().unwrap_or(0.0),
        }
    }

    pub fn uses_aux_decoders(&self) -> bool {
        matches!(self, Objective::Star)
    }

    fn check_topology(&self, dag: &DagNetwork) -> Result<()> {
        match self {
            Objective::Star if !is_star(dag) => {
                Err(Error::Graph("the star objective needs every source wired straight into the decision node".into()))
            }
            Objective::FiveNode if !is_five_node(dag) => Err(Error::Graph(
                "the hop objective needs edges (3,4), (2,4), (4,5), (1,5) with sources 1, 2, 3".into(),
            )),
            Objective::Custom { coefficients } => {
                if let Some((&k, _)) = coefficients.iter().find(|(k, _)| !dag.is_source(**k)) {
                    return Err(Error::InvalidArgument(format!("ratio coefficient given for non-source node {k}")));
                }
                if coefficients.values().any(|c| !(*c >= 0.0) || !c.is_finite()) {
                    return Err(Error::InvalidArgument("ratio coefficients must be non-negative".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

pub(crate) fn is_star(dag: &DagNetwork) -> bool {
    let n = dag.decision_node();
    dag.relays().is_empty() && dag.edges().len() == dag.sources().len() && dag.edges().iter().all(|e| e.to == n)
}

pub(crate) fn is_five_node(dag: &DagNetwork) -> bool {
    let mut edges: Vec<(usize, usize)> = dag.edges().iter().map(|e| (e.from, e.to)).collect();
    edges.sort_unstable();
    dag.num_nodes() == 5 && dag.sources().iter().copied().eq([1, 2, 3]) && edges == [(1, 5), (2, 4), (3, 4), (4, 5)]
}

/// Architecture of every node, keyed by node id. Sources carry a latent head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub nodes: BTreeMap<usize, NetSpec>,
}

impl SystemSpec {
    /// Same encoder on every source, no relays' own spec needed beyond `relay`,
    /// and the given decision network.
    pub fn uniform(dag: &DagNetwork, encoder: &NetSpec, relay: &NetSpec, decision: &NetSpec) -> Self {
        let nodes = (1..=dag.num_nodes())
            .map(|k| {
                let spec = if k == dag.decision_node() {
                    decision
                } else if dag.is_source(k) {
                    encoder
                } else {
                    relay
                };
                (k, spec.clone())
            })
            .collect();
        Self { nodes }
    }

    /// The architecture used by the synthetic experiments: a 64-unit
    /// encoder with a 4-dimensional latent on every source, 16-unit relays,
    /// and a 64-unit decision network.
    pub fn standard(dag: &DagNetwork, num_classes: usize) -> Self {
        Self::uniform(
            dag,
            &NetSpec::new(&[(64, Activation::Relu), (8, Activation::Linear)]).with_latent(4),
            &NetSpec::new(&[(16, Activation::Relu)]),
            &NetSpec::new(&[(64, Activation::Relu), (num_classes, Activation::Softmax)]),
        )
    }
}

/// The full set of node models on a graph, plus the decision node's
/// auxiliary decoders when the objective uses them.
#[derive(Debug, Clone, PartialEq)]
pub struct InlSystem {
    pub(crate) dag: DagNetwork,
    pub(crate) models: BTreeMap<usize, NodeModel>,
    pub(crate) aux: BTreeMap<usize, FeedForwardNet>,
    pub(crate) objective: Objective,
    pub(crate) input_dims: BTreeMap<usize, usize>,
}

impl InlSystem {
    /// Assemble and validate. Layer-size compatibility is checked before
    /// anything else can run.
    pub fn new(
        dag: DagNetwork,
        models: BTreeMap<usize, NodeModel>,
        aux: BTreeMap<usize, FeedForwardNet>,
        objective: Objective,
        input_dims: BTreeMap<usize, usize>,
    ) -> Result<Self> {
        objective.check_topology(&dag)?;
        let sizes: BTreeMap<usize, LayerSizes> = models.iter().map(|(&k, m)| (k, m.layer_sizes())).collect();
        dag.check_layer_compat(&sizes, &input_dims).into_result()?;
        if let Some(&k) = models.keys().find(|&&k| k == 0 || k > dag.num_nodes()) {
            return Err(Error::Graph(format!("model for unknown node {k}")));
        }
        let n = dag.decision_node();
        for (&k, m) in &models {
            if m.node_id != k {
                return Err(Error::InvalidArgument(format!("model keyed {k} claims node id {}", m.node_id)));
            }
            let expected = if k == n {
                Role::Decision
            } else if dag.is_source(k) {
                Role::Source
            } else {
                Role::Relay
            };
            if m.role != expected {
                return Err(Error::InvalidArgument(format!("node {k} has role {:?}, expected {expected:?}", m.role)));
            }
            if m.head.is_some() && m.role != Role::Source {
                return Err(Error::InvalidArgument(format!("node {k}: only sources carry a latent head")));
            }
            if let Some(h) = m.head {
                if m.net.out_dim() != 2 * h.latent_dim() {
                    return Err(Error::Shape(format!(
                        "node {k}: head needs a final layer of width {}",
                        2 * h.latent_dim()
                    )));
                }
            }
        }
        let decision = &models[&n];
        if decision.net.final_activation() != Activation::Softmax {
            return Err(Error::InvalidArgument("the decision node must end in a softmax layer".into()));
        }
        let classes = decision.net.out_dim();
        if objective.uses_aux_decoders() {
            for &j in dag.sources() {
                let Some(a) = aux.get(&j) else {
                    return Err(Error::InvalidArgument(format!("missing auxiliary decoder for source {j}")));
                };
                if a.in_dim() != models[&j].emitted_dim()
                    || a.out_dim() != classes
                    || a.final_activation() != Activation::Softmax
                {
                    return Err(Error::Shape(format!(
                        "auxiliary decoder for source {j} must map its latent to {classes} class probabilities"
                    )));
                }
            }
            if aux.len() != dag.sources().len() {
                return Err(Error::InvalidArgument("auxiliary decoder for a non-source node".into()));
            }
        } else if !aux.is_empty() {
            return Err(Error::InvalidArgument("auxiliary decoders are only used by the star objective".into()));
        }
        for (&k, &d) in &input_dims {
            if !dag.is_source(k) || d == 0 {
                return Err(Error::InvalidArgument(format!("input dimension {d} given for node {k}")));
            }
        }
        Ok(Self { dag, models, aux, objective, input_dims })
    }

    /// Initialise every network from the seed. First-layer widths follow from
    /// the graph, so the result always passes the compatibility check.
    pub fn build(
        dag: DagNetwork,
        spec: &SystemSpec,
        input_dims: BTreeMap<usize, usize>,
        objective: Option<Objective>,
        seed: u64,
    ) -> Result<Self> {
        let objective = objective.unwrap_or_else(|| Objective::detect(&dag));
        let mut models = BTreeMap::new();
        let mut emitted = BTreeMap::new();
        for &k in dag.topo_order() {
            let net_spec =
                spec.nodes.get(&k).ok_or_else(|| Error::InvalidArgument(format!("no architecture for node {k}")))?;
            let mut in_dim: usize = dag.in_neighbors(k).iter().map(|i| emitted[i]).sum();
            if dag.is_source(k) {
                in_dim += *input_dims
                    .get(&k)
                    .ok_or_else(|| Error::InvalidArgument(format!("no input dimension for source {k}")))?;
            }
            let mut r = rng::stream(seed, "init", k as u64);
            let (net, head) = net_spec.build(in_dim, &mut r)?;
            let role = if k == dag.decision_node() {
                Role::Decision
            } else if dag.is_source(k) {
                Role::Source
            } else {
                Role::Relay
            };
            let model = NodeModel { node_id: k, net, head, role };
            emitted.insert(k, model.emitted_dim());
            models.insert(k, model);
        }
        let mut aux = BTreeMap::new();
        if objective.uses_aux_decoders() {
            let classes = models[&dag.decision_node()].net.out_dim();
            for &j in dag.sources() {
                let mut r = rng::stream(seed, "aux", j as u64);
                let (net, _) = NetSpec::new(&[(classes, Activation::Softmax)]).build(emitted[&j], &mut r)?;
                aux.insert(j, net);
            }
        }
        Self::new(dag, models, aux, objective, input_dims)
    }

    pub fn dag(&self) -> &DagNetwork {
        &self.dag
    }

    pub fn models(&self) -> &BTreeMap<usize, NodeModel> {
        &self.models
    }

    pub fn model(&self, k: usize) -> Option<&NodeModel> {
        self.models.get(&k)
    }

    pub fn aux_decoders(&self) -> &BTreeMap<usize, FeedForwardNet> {
        &self.aux
    }

    pub fn objective(&self) -> &Objective {
        &self.objective
    }

    pub fn input_dims(&self) -> &BTreeMap<usize, usize> {
        &self.input_dims
    }

    pub fn num_classes(&self) -> usize {
        self.models[&self.dag.decision_node()].net.out_dim()
    }

    /// Total trainable parameters, auxiliary decoders included.
    pub fn num_params(&self) -> usize {
        self.models.values().map(|m| m.net.num_params()).sum::<usize>()
            + self.aux.values().map(FeedForwardNet::num_params).sum::<usize>()
    }

    /// All parameters in node order, the decision node's auxiliary decoders
    /// appended after its own network.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for (&k, m) in &self.models {
            out.extend(self.node_params(k).unwrap_or_else(|| m.net.params()));
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::Shape(format!("expected {} parameters, got {}", self.num_params(), params.len())));
        }
        let mut off = 0;
        let keys: Vec<usize> = self.models.keys().copied().collect();
        for k in keys {
            let len = self.node_param_count(k);
            self.set_node_params(k, &params[off..off + len])?;
            off += len;
        }
        Ok(())
    }

    /// Parameters stored at node `k` (decision node: its net, then aux nets).
    pub fn node_params(&self, k: usize) -> Option<Vec<f64>> {
        let m = self.models.get(&k)?;
        let mut out = m.net.params();
        if k == self.dag.decision_node() {
            for a in self.aux.values() {
                out.extend(a.params());
            }
        }
        Some(out)
    }

    pub fn node_param_count(&self, k: usize) -> usize {
        let own = self.models.get(&k).map_or(0, |m| m.net.num_params());
        if k == self.dag.decision_node() {
            own + self.aux.values().map(FeedForwardNet::num_params).sum::<usize>()
        } else {
            own
        }
    }

    pub fn set_node_params(&mut self, k: usize, params: &[f64]) -> Result<()> {
        if params.len() != self.node_param_count(k) {
            return Err(Error::Shape(format!(
                "node {k} holds {} parameters, got {}",
                self.node_param_count(k),
                params.len()
            )));
        }
        let m = self.models.get_mut(&k).ok_or_else(|| Error::InvalidArgument(format!("no model at node {k}")))?;
        let own = m.net.num_params();
        m.net.set_params(&params[..own])?;
        if k == self.dag.decision_node() {
            let mut off = own;
            for a in self.aux.values_mut() {
                let len = a.num_params();
                a.set_params(&params[off..off + len])?;
                off += len;
            }
        }
        Ok(())
    }

    pub(crate) fn clear_caches(&mut self) {
        for m in self.models.values_mut() {
            m.net.clear_cache();
        }
        for a in self.aux.values_mut() {
            a.clear_cache();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn encoder() -> NetSpec {
        NetSpec::new(&[(6, Activation::Tanh), (4, Activation::Linear)]).with_latent(2)
    }

    fn decision(k: usize) -> NetSpec {
        NetSpec::new(&[(5, Activation::Relu), (k, Activation::Softmax)])
    }

    #[test]
    fn detects_reference_topologies() {
        assert_eq!(Objective::detect(&DagNetwork::star(3, 1.0).unwrap()), Objective::Star);
        assert_eq!(Objective::detect(&DagNetwork::five_node(1.0, 1.0, 1.0, 1.0).unwrap()), Objective::FiveNode);
    }

    #[test]
    fn build_wires_first_layers_from_the_graph() {
        let dag = DagNetwork::five_node(1.0, 1.0, 1.0, 1.0).unwrap();
        let relay = NetSpec::new(&[(3, Activation::Relu)]);
        let spec = SystemSpec::uniform(&dag, &encoder(), &relay, &decision(3));
        let dims = BTreeMap::from([(1, 4), (2, 5), (3, 6)]);
        let sys = InlSystem::build(dag, &spec, dims, None, 7).unwrap();
        assert_eq!(sys.model(4).unwrap().net.in_dim(), 4);
        assert_eq!(sys.model(5).unwrap().net.in_dim(), 2 + 3);
        assert!(sys.aux_decoders().is_empty());
        assert_eq!(sys.num_classes(), 3);
    }

    #[test]
    fn star_builds_aux_decoders() {
        let dag = DagNetwork::star(2, 1.0).unwrap();
        let spec = SystemSpec::uniform(&dag, &encoder(), &encoder(), &decision(4));
        let sys = InlSystem::build(dag, &spec, BTreeMap::from([(1, 3), (2, 3)]), None, 1).unwrap();
        assert_eq!(sys.aux_decoders().len(), 2);
        let p = sys.params();
        assert_eq!(p.len(), sys.num_params());
        let mut other = sys.clone();
        other.set_params(&vec![0.0; p.len()]).unwrap();
        other.set_params(&p).unwrap();
        assert_eq!(other, sys);
    }

    #[test]
    fn incompatible_models_are_rejected() {
        let dag = DagNetwork::star(1, 1.0).unwrap();
        let spec = SystemSpec::uniform(&dag, &encoder(), &encoder(), &decision(2));
        let sys = InlSystem::build(dag.clone(), &spec, BTreeMap::from([(1, 3)]), None, 1).unwrap();
        let mut dims = sys.input_dims().clone();
        dims.insert(1, 4);
        let err = InlSystem::new(dag, sys.models.clone(), sys.aux.clone(), Objective::Star, dims).unwrap_err();
        assert!(matches!(err, Error::Compat(_)));
    }

    #[test]
    fn hop_objective_rejects_other_graphs() {
        let dag = DagNetwork::star(3, 1.0).unwrap();
        let spec = SystemSpec::uniform(&dag, &encoder(), &encoder(), &decision(2));
        let dims = BTreeMap::from([(1, 2), (2, 2), (3, 2)]);
        assert!(InlSystem::build(dag, &spec, dims, Some(Objective::FiveNode), 1).is_err());
    }
}
