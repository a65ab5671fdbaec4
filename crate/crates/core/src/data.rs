//! Synthetic multi-view classification data: every view of a sample is its
//! class prototype plus view-specific Gaussian noise.

use std::collections::BTreeMap;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub feature_dim: usize,
    pub num_views: usize,
    pub noise_stds: Vec<f64>,
    pub train_size: usize,
    pub test_size: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            num_classes: 4,
            feature_dim: 16,
            num_views: 5,
            noise_stds: vec![0.4, 1.0, 2.0, 3.0, 4.0],
            train_size: 4000,
            test_size: 1000,
            seed: 1,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 || self.feature_dim == 0 || self.num_views == 0 {
            return Err(Error::InvalidArgument("need at least 2 classes, 1 feature and 1 view".into()));
        }
        if self.noise_stds.len() != self.num_views {
            return Err(Error::InvalidArgument(format!(
                "{} noise levels for {} views",
                self.noise_stds.len(),
                self.num_views
            )));
        }
        if self.noise_stds.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(Error::InvalidArgument("noise levels must be non-negative".into()));
        }
        if self.train_size == 0 || self.test_size == 0 {
            return Err(Error::InvalidArgument("split sizes must be positive".into()));
        }
        Ok(())
    }
}

/// Views share row order: row `i` of every view belongs to sample `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiViewDataset {
    pub views: Vec<Tensor>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl MultiViewDataset {
    pub fn new(views: Vec<Tensor>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if views.is_empty() {
            return Err(Error::InvalidArgument("a dataset needs at least one view".into()));
        }
        for v in &views {
            if v.shape().len() != 2 || v.rows() != labels.len() {
                return shape_err(format!("view shape {:?} for {} labels", v.shape(), labels.len()));
            }
        }
        if let Some(&y) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::InvalidArgument(format!("label {y} outside {num_classes} classes")));
        }
        Ok(Self { views, labels, num_classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_views(&self) -> usize {
        self.views.len()
    }

    pub fn view_dims(&self) -> Vec<usize> {
        self.views.iter().map(Tensor::cols).collect()
    }

    /// Rows `idx` of every view, keyed by the given node ids (view `v` goes
    /// to `nodes[v]`).
    pub fn batch(&self, nodes: &[usize], idx: &[usize]) -> Result<BTreeMap<usize, Tensor>> {
        if nodes.len() != self.views.len() {
            return Err(Error::InvalidArgument(format!("{} nodes for {} views", nodes.len(), self.views.len())));
        }
        Ok(nodes.iter().zip(&self.views).map(|(&k, v)| (k, v.select_rows(idx))).collect())
    }

    pub fn labels_at(&self, idx: &[usize]) -> Vec<usize> {
        idx.iter().map(|&i| self.labels[i]).collect()
    }

    pub fn subset(&self, idx: &[usize]) -> MultiViewDataset {
        MultiViewDataset {
            views: self.views.iter().map(|v| v.select_rows(idx)).collect(),
            labels: self.labels_at(idx),
            num_classes: self.num_classes,
        }
    }

    /// Split rows into `parts` contiguous shards of near-equal size.
    pub fn shards(&self, parts: usize) -> Vec<MultiViewDataset> {
        let n = self.len();
        (0..parts)
            .map(|p| {
                let idx: Vec<usize> = (p * n / parts..(p + 1) * n / parts).collect();
                self.subset(&idx)
            })
            .collect()
    }

    /// Single-view dataset whose one view is the element-wise mean of all views.
    pub fn averaged(&self) -> Result<MultiViewDataset> {
        let w = self.views[0].cols();
        if self.views.iter().any(|v| v.cols() != w) {
            return shape_err("views of different widths cannot be averaged");
        }
        let mut mean = Tensor::zeros(&[self.len(), w]);
        for v in &self.views {
            mean.add_assign(v)?;
        }
        mean.scale(1.0 / self.views.len() as f64);
        MultiViewDataset::new(vec![mean], self.labels.clone(), self.num_classes)
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.num_classes];
        for &y in &self.labels {
            c[y] += 1;
        }
        c
    }

    /// Empirical label frequencies.
    pub fn label_prior(&self) -> Vec<f64> {
        let n = self.len() as f64;
        self.class_counts().into_iter().map(|c| c as f64 / n).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticData {
    pub spec: SyntheticSpec,
    /// `[K × feature_dim]`.
    pub prototypes: Tensor,
    pub train: MultiViewDataset,
    pub test: MultiViewDataset,
}

impl SyntheticData {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Unit-norm class prototypes with random ±1/√d entries, so distinct
/// prototypes are close to orthogonal for moderate feature widths.
fn prototypes(spec: &SyntheticSpec) -> Tensor {
    let mut r = rng::stream(spec.seed, "prototypes", 0);
    let a = 1.0 / (spec.feature_dim as f64).sqrt();
    let data = (0..spec.num_classes * spec.feature_dim).map(|_| if r.random::<bool>() { a } else { -a }).collect();
    Tensor::new(vec![spec.num_classes, spec.feature_dim], data).expect("sized")
}

fn sample_split(spec: &SyntheticSpec, protos: &Tensor, n: usize, label: &str) -> Result<MultiViewDataset> {
    let mut r = rng::stream(spec.seed, label, 0);
    let d = spec.feature_dim;
    let mut views: Vec<Tensor> = (0..spec.num_views).map(|_| Tensor::zeros(&[n, d])).collect();
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let y = r.random_range(0..spec.num_classes);
        labels.push(y);
        for (v, &sigma) in views.iter_mut().zip(&spec.noise_stds) {
            let row = v.row_mut(i);
            for (x, &p) in row.iter_mut().zip(protos.row(y)) {
                let e: f64 = StandardNormal.sample(&mut r);
                *x = p + sigma * e;
            }
        }
    }
    MultiViewDataset::new(views, labels, spec.num_classes)
}

pub fn gen_dataset(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let protos = prototypes(spec);
    let train = sample_split(spec, &protos, spec.train_size, "train")?;
    let test = sample_split(spec, &protos, spec.test_size, "test")?;
    Ok(SyntheticData { spec: spec.clone(), prototypes: protos, train, test })
}
