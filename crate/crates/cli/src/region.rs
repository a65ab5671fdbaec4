//! `inl region …`: information-theoretic queries on a JSON instance file.
//!
//! The instance holds the joint pmf and whatever the query needs:
//!
//! ```json
//! {
//!   "joint": {"alphabets": [2, 2, 2, 2], "probs": [...]},
//!   "channels": [{"rows": [[1, 0], [0, 1]]}, ...],
//!   "graph": {"num_nodes": 5, "edges": [[1, 5, 1.0], ...], "sources": [1, 2, 3], "decision_node": 5},
//!   "rates": [0.5, 0.5, 0.5],
//!   "capacities": {"c15": 1, "c24": 1, "c34": 1, "c45": 2},
//!   "c_sum": 3.0,
//!   "combiner": {"rows": [...]},
//!   "q": {"decoder": ..., "u1": [...], "u2": ..., "u3": ...},
//!   "s": 0.5,
//!   "s_values": [0, 0.1, 1, 10],
//!   "step": 0.05
//! }
//! ```

use anyhow::{anyhow, Context, Result};
use inl_core::graph::{DagNetwork, GraphFile};
use inl_core::info::{
    five_node_region_check, fme_equivalence_test, lower_bound_check, optimal_q, prop1_curve, sum_region_check,
    theorem1_feasible, theorem1_region, variational_bound_check, Channel, FiveNodeCapacities, JointPmf, JointPmfFile,
    QSet, RateTuple,
};
use serde::Deserialize;
use serde_json::{json, Value};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Instance {
    pub joint: JointPmfFile,
    #[serde(default)]
    pub channels: Vec<Channel>,
    pub graph: Option<GraphFile>,
    pub rates: Option<RateTuple>,
    pub capacities: Option<FiveNodeCapacities>,
    pub c_sum: Option<f64>,
    pub combiner: Option<Channel>,
    pub q: Option<QSet>,
    pub s: Option<f64>,
    pub s_values: Option<Vec<f64>>,
    pub step: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Query {
    Feasible,
    Sum,
    Prop1,
    Lemma1,
    Lemma2,
}

impl Instance {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    fn joint(&self) -> Result<JointPmf> {
        Ok(JointPmf::new(self.joint.alphabets.clone(), self.joint.probs.clone())?)
    }

    fn channels(&self) -> Result<&[Channel]> {
        if self.channels.is_empty() {
            return Err(anyhow!("this query needs \"channels\""));
        }
        Ok(&self.channels)
    }

    fn need<'a, T>(&self, v: &'a Option<T>, name: &str) -> Result<&'a T> {
        v.as_ref().ok_or_else(|| anyhow!("this query needs {name:?}"))
    }
}

/// Answer `query` on `inst` as a JSON verdict. The verdict always carries a
/// top-level `"ok"` flag.
pub fn answer(query: Query, inst: &Instance) -> Result<Value> {
    let joint = inst.joint().context("invalid joint pmf")?;
    Ok(match query {
        Query::Feasible => {
            let channels = inst.channels()?;
            if let Some(caps) = &inst.capacities {
                let v = five_node_region_check(&joint, channels, caps)?;
                json!({"query": "five_node_region", "ok": v.feasible, "verdict": v})
            } else {
                let dag = DagNetwork::from_file(inst.need(&inst.graph, "graph")?)?;
                match &inst.rates {
                    Some(r) => {
                        let v = theorem1_feasible(&joint, channels, &dag, r)?;
                        json!({"query": "rate_tuple", "ok": v.feasible, "verdict": v})
                    }
                    None => {
                        let v = theorem1_region(&joint, channels, &dag)?;
                        json!({"query": "region", "ok": v.feasible, "verdict": v})
                    }
                }
            }
        }
        Query::Sum => {
            let channels = inst.channels()?;
            let eq = fme_equivalence_test(&joint, channels)?;
            match inst.c_sum {
                Some(c) => {
                    let v = sum_region_check(&joint, channels, c)?;
                    json!({"query": "sum", "ok": v.feasible, "verdict": v, "equivalence": eq})
                }
                None => json!({"query": "sum_equivalence", "ok": eq.passed, "equivalence": eq}),
            }
        }
        Query::Prop1 => {
            let s_values = inst.s_values.clone().unwrap_or_else(|| vec![0.0, 0.1, 1.0, 10.0]);
            let pts = prop1_curve(&joint, &s_values, inst.step.unwrap_or(0.05))?;
            let nonincreasing = pts.windows(2).all(|w| w[1].delta <= w[0].delta + 1e-12);
            let residual = pts.iter().map(|p| p.identity_residual.abs()).fold(0.0, f64::max);
            json!({
                "query": "prop1",
                "ok": nonincreasing && residual <= 1e-9,
                "delta_nonincreasing": nonincreasing,
                "max_identity_residual": residual,
                "points": pts,
            })
        }
        Query::Lemma1 => {
            let combiner = inst.need(&inst.combiner, "combiner")?;
            let b = lower_bound_check(&joint, inst.channels()?, combiner, inst.s.unwrap_or(0.0))?;
            json!({"query": "lemma1", "ok": b.holds, "bound": b})
        }
        Query::Lemma2 => {
            let channels = inst.channels()?;
            let combiner = inst.need(&inst.combiner, "combiner")?;
            let s = inst.s.unwrap_or(0.0);
            let (q, optimal) = match &inst.q {
                Some(q) => (q.clone(), false),
                None => (optimal_q(&joint, channels, combiner)?, true),
            };
            let v = variational_bound_check(&joint, channels, combiner, &q, s)?;
            let ok = if optimal { v.gap.abs() <= 1e-9 } else { v.gap >= -1e-10 };
            json!({"query": "lemma2", "ok": ok, "optimal_q": optimal, "bound": v, "q": q})
        }
    })
}
