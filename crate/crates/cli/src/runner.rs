//! One training run per call: build the data and model, train with the
//! chosen scheme, and summarise.

use std::collections::BTreeMap;
use std::fs;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use inl_core::baselines::fl::{train_fl, FlConfig};
use inl_core::baselines::sl::{train_sl, SlState};
use inl_core::data::{gen_dataset, MultiViewDataset, SyntheticData};
use inl_core::graph::DagNetwork;
use inl_core::protocol::{first_reaching, train, InlSystem, MetricsRow, Split, SystemSpec};
use serde::Serialize;

use crate::config::{RunConfig, Scheme};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub scheme: Scheme,
    pub seed: u64,
    pub epochs: usize,
    pub num_params: usize,
    pub final_accuracy: f64,
    pub peak_accuracy: f64,
    pub total_bits: u64,
    pub target_accuracy: f64,
    /// First epoch (round, for FL) whose test accuracy reaches the target.
    pub target_epoch: Option<usize>,
    pub bits_to_target: Option<u64>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub rows: Vec<MetricsRow>,
    pub summary: Summary,
    pub system: InlSystem,
}

pub fn load_data(cfg: &RunConfig) -> Result<SyntheticData> {
    match &cfg.data_file {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            SyntheticData::from_json(&text).with_context(|| format!("parsing {}", p.display()))
        }
        None => Ok(gen_dataset(&cfg.data)?),
    }
}

fn graph(cfg: &RunConfig, views: usize) -> Result<DagNetwork> {
    match &cfg.graph_file {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(DagNetwork::from_json(&text).with_context(|| format!("parsing {}", p.display()))?)
        }
        None => Ok(DagNetwork::star(views, cfg.capacity)?),
    }
}

/// The model for `data`, with views assigned to source nodes in ascending
/// id order.
pub fn build_system(cfg: &RunConfig, dag: DagNetwork, data: &MultiViewDataset) -> Result<InlSystem> {
    let sources: Vec<usize> = dag.sources().iter().copied().collect();
    if sources.len() != data.num_views() {
        bail!("the graph has {} sources but the data has {} views", sources.len(), data.num_views());
    }
    let spec = match cfg.architecture()? {
        Some(s) => s,
        None => SystemSpec::standard(&dag, data.num_classes),
    };
    let dims: BTreeMap<usize, usize> = sources.into_iter().zip(data.view_dims()).collect();
    Ok(InlSystem::build(dag, &spec, dims, None, cfg.train.seed)?)
}

/// Train with `cfg.scheme`. With `parallel` off every step runs on the
/// calling thread.
pub fn run(cfg: &RunConfig, parallel: bool) -> Result<RunOutcome> {
    cfg.validate()?;
    let data = load_data(cfg)?;
    let start = Instant::now();
    let (rows, system) = match cfg.scheme {
        Scheme::Inl => {
            let mut sys = build_system(cfg, graph(cfg, data.train.num_views())?, &data.train)?;
            let rows = train(&mut sys, &data.train, Some(&data.test), &cfg.train)?;
            (rows, sys)
        }
        Scheme::Fl => {
            let (train_set, test_set) = if cfg.fl.averaged_view {
                (data.train.averaged()?, data.test.averaged()?)
            } else {
                (data.train.clone(), data.test.clone())
            };
            let dag = if cfg.fl.averaged_view {
                DagNetwork::star(1, cfg.capacity)?
            } else {
                graph(cfg, train_set.num_views())?
            };
            let mut sys = build_system(cfg, dag, &train_set)?;
            let fl = FlConfig {
                clients: cfg.fl.clients,
                rounds: cfg.train.epochs,
                local_epochs: cfg.fl.local_epochs,
                train: cfg.train.clone(),
                parallel,
            };
            let rows = train_fl(&mut sys, &train_set, Some(&test_set), &fl)?;
            (rows, sys)
        }
        Scheme::Sl => {
            let sys = build_system(cfg, graph(cfg, data.train.num_views())?, &data.train)?;
            let mut state = SlState::new(sys)?;
            let rows = train_sl(&mut state, &data.train, Some(&data.test), cfg.sl.clients, &cfg.train)?;
            (rows, state.into_system())
        }
    };
    let wall_time_s = start.elapsed().as_secs_f64();
    let summary = summarize(cfg, &rows, system.num_params(), wall_time_s);
    Ok(RunOutcome { rows, summary, system })
}

pub fn summarize(cfg: &RunConfig, rows: &[MetricsRow], num_params: usize, wall_time_s: f64) -> Summary {
    let test: Vec<&MetricsRow> = rows.iter().filter(|r| r.split == Split::Test).collect();
    let hit = first_reaching(rows, cfg.target_accuracy);
    Summary {
        scheme: cfg.scheme,
        seed: cfg.train.seed,
        epochs: cfg.train.epochs,
        num_params,
        final_accuracy: test.last().map_or(0.0, |r| r.accuracy),
        peak_accuracy: test.iter().map(|r| r.accuracy).fold(0.0, f64::max),
        total_bits: rows.last().map_or(0, |r| r.cumulative_bits),
        target_accuracy: cfg.target_accuracy,
        target_epoch: hit.map(|r| r.epoch),
        bits_to_target: hit.map(|r| r.cumulative_bits),
        wall_time_s,
    }
}
