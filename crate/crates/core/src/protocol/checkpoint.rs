//! Checkpoints: a JSON manifest plus one little-endian f64 blob per node.
//! The decision node's blob also holds its auxiliary decoders.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{InlSystem, NodeModel, Objective, Role};
use crate::error::{Error, Result};
use crate::graph::{DagNetwork, GraphFile};
use crate::nn::{Activation, DenseLayer, FeedForwardNet, GaussianHead};
use crate::tensor::Tensor;

type Signature = Vec<(usize, usize, Activation)>;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct NodeEntry {
    node_id: usize,
    role: Role,
    layers: Signature,
    latent_dim: Option<usize>,
    blob: String,
    num_params: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    graph: GraphFile,
    objective: Objective,
    input_dims: BTreeMap<usize, usize>,
    nodes: Vec<NodeEntry>,
    aux: BTreeMap<usize, Signature>,
}

fn blank_net(sig: &Signature) -> Result<FeedForwardNet> {
    let layers = sig
        .iter()
        .map(|&(i, o, act)| DenseLayer::new(Tensor::zeros(&[o, i]), Tensor::zeros(&[o]), act))
        .collect::<Result<Vec<_>>>()?;
    FeedForwardNet::new(layers)
}

pub fn save(system: &InlSystem, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut nodes = Vec::new();
    for (&k, m) in system.models() {
        let blob = format!("node_{k}.bin");
        let params = system.node_params(k).expect("model exists");
        let bytes: Vec<u8> = params.iter().flat_map(|v| v.to_le_bytes()).collect();
        fs::write(dir.join(&blob), bytes)?;
        nodes.push(NodeEntry {
            node_id: k,
            role: m.role,
            layers: m.net.signature(),
            latent_dim: m.head.map(|h| h.latent_dim()),
            blob,
            num_params: params.len(),
        });
    }
    let manifest = Manifest {
        graph: system.dag().to_file(),
        objective: system.objective().clone(),
        input_dims: system.input_dims().clone(),
        nodes,
        aux: system.aux_decoders().iter().map(|(&j, a)| (j, a.signature())).collect(),
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

pub fn load(dir: &Path) -> Result<InlSystem> {
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)?;
    let dag = DagNetwork::from_file(&manifest.graph)?;
    let mut models = BTreeMap::new();
    for e in &manifest.nodes {
        let net = blank_net(&e.layers)?;
        let head = e.latent_dim.map(GaussianHead::new).transpose()?;
        models.insert(e.node_id, NodeModel { node_id: e.node_id, net, head, role: e.role });
    }
    let aux = manifest.aux.iter().map(|(&j, sig)| Ok((j, blank_net(sig)?))).collect::<Result<BTreeMap<_, _>>>()?;
    let mut system = InlSystem::new(dag, models, aux, manifest.objective, manifest.input_dims)?;
    for e in &manifest.nodes {
        let bytes = fs::read(dir.join(&e.blob))?;
        if bytes.len() != 8 * e.num_params {
            return Err(Error::Shape(format!(
                "blob {} holds {} bytes, expected {}",
                e.blob,
                bytes.len(),
                8 * e.num_params
            )));
        }
        let params: Vec<f64> =
            bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        system.set_node_params(e.node_id, &params)?;
    }
    Ok(system)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::NetSpec;
    use crate::protocol::model::SystemSpec;

    #[test]
    fn round_trip_is_bit_exact() {
        let dag = DagNetwork::star(2, 64.0).unwrap();
        let spec = SystemSpec::uniform(
            &dag,
            &NetSpec::new(&[(5, Activation::Relu), (4, Activation::Linear)]).with_latent(2),
            &NetSpec::new(&[(1, Activation::Linear)]),
            &NetSpec::new(&[(3, Activation::Softmax)]),
        );
        let sys = InlSystem::build(dag, &spec, BTreeMap::from([(1, 3), (2, 4)]), None, 11).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save(&sys, dir.path()).unwrap();
        let back = load(dir.path()).unwrap();
        assert_eq!(back, sys);
        assert!(dir.path().join("node_3.bin").exists());
    }
}
