//! Declarative description of one D-SGD run on synthetic data.

use std::sync::Arc;

use anyhow::{Context, Result};
use dsgd_core::engine::{RunConfig, StepCap, StepSchedule, UpdateOrder};
use dsgd_core::losses::{LossFamily, LossModel};
use dsgd_core::topology::{build_topology, TopologyKind, TopologySchedule};
use serde::{Deserialize, Serialize};

use crate::data::{generate_synthetic, LabelRule, Synthetic, SyntheticSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub loss: LossFamily,
    pub m: usize,
    pub n: usize,
    pub dim: usize,
    pub feature_bound: f64,
    /// `W_max`; also the projection radius when `projected` is set.
    pub domain_radius: f64,
    #[serde(default)]
    pub projected: bool,
    #[serde(default)]
    pub label_rule: LabelRule,
    pub topology: TopologyKind,
    /// When non-empty, the topology cycles through these graphs step by step instead.
    #[serde(default)]
    pub topology_cycle: Vec<TopologyKind>,
    pub schedule: StepSchedule,
    pub iterations: usize,
    #[serde(default)]
    pub update_order: UpdateOrder,
    pub seed: u64,
    #[serde(default = "one")]
    pub stride: usize,
    #[serde(default)]
    pub cap: Option<StepCap>,
}

fn one() -> usize {
    1
}

impl Scenario {
    pub fn new(loss: LossFamily, m: usize, n: usize, topology: TopologyKind, schedule: StepSchedule, iterations: usize, seed: u64) -> Self {
        Self {
            loss,
            m,
            n,
            dim: 5,
            feature_bound: 1.0,
            domain_radius: 10.0,
            projected: false,
            label_rule: match loss {
                LossFamily::Quadratic { .. } => LabelRule::Linear { noise: 0.1 },
                _ => LabelRule::default(),
            },
            topology,
            topology_cycle: Vec::new(),
            schedule,
            iterations,
            update_order: UpdateOrder::GossipThenGrad,
            seed,
            stride: 1,
            cap: None,
        }
    }

    pub fn data_spec(&self) -> SyntheticSpec {
        SyntheticSpec {
            m: self.m,
            n: self.n,
            dim: self.dim,
            feature_bound: self.feature_bound,
            label_rule: self.label_rule,
            seed: self.seed,
        }
    }

    pub fn model(&self) -> LossModel {
        LossModel::new(self.loss, self.dim, self.domain_radius, self.feature_bound)
            .with_label_bound(self.data_spec().label_bound())
    }

    pub fn topology_schedule(&self) -> Result<TopologySchedule> {
        if self.topology_cycle.is_empty() {
            let p = build_topology(&self.topology, self.m).with_context(|| format!("building {}", self.topology))?;
            Ok(TopologySchedule::fixed(p))
        } else {
            let mats = self
                .topology_cycle
                .iter()
                .map(|k| build_topology(k, self.m).with_context(|| format!("building {k}")))
                .collect::<Result<Vec<_>>>()?;
            Ok(TopologySchedule::periodic(mats)?)
        }
    }

    /// Generates the data and assembles the engine configuration.
    pub fn build(&self) -> Result<(RunConfig, Synthetic)> {
        let synthetic = generate_synthetic(&self.data_spec())?;
        let mut cfg = RunConfig::new(
            self.model(),
            Arc::new(synthetic.dataset.clone()),
            self.schedule,
            self.topology_schedule()?,
            self.iterations,
        );
        cfg.update_order = self.update_order;
        cfg.projection = self.projected.then_some(self.domain_radius);
        cfg.master_seed = self.seed;
        cfg.stride = self.stride;
        cfg.cap = self.cap;
        Ok((cfg, synthetic))
    }

    /// Largest `lambda` over the topology schedule.
    pub fn lambda(&self) -> Result<f64> {
        Ok(self.topology_schedule()?.max_lambda())
    }
}
