use std::sync::Arc;

use dsgd_core::bounds::{per_step_envelope, BoundParams, Regime};
use dsgd_core::engine::{
    consensus_bound, consensus_error, run, sample_index, RunConfig, SamplingRole, StepSchedule, UpdateOrder,
};
use dsgd_core::losses::{distance, norm, LossFamily, LossModel, PartitionedDataset, Sample};
use dsgd_core::stability::{pointwise_eps, twin_run, NeighborSpec};
use dsgd_core::topology::{build_topology, TopologyKind, TopologySchedule};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const DIM: usize = 3;

fn unit_sample(rng: &mut ChaCha8Rng) -> Sample {
    let mut x: Vec<f64> = (0..DIM).map(|_| rng.sample(StandardNormal)).collect();
    let nx = norm(&x);
    let scale: f64 = rng.random_range(0.1..1.0);
    x.iter_mut().for_each(|v| *v *= scale / nx);
    Sample::new(x, if rng.random::<bool>() { 1.0 } else { -1.0 })
}

fn dataset(m: usize, n: usize, seed: u64) -> PartitionedDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shards = (0..m).map(|_| (0..n).map(|_| unit_sample(&mut rng)).collect()).collect();
    PartitionedDataset::new(shards, 1.0, Some(seed)).unwrap()
}

fn topology(idx: usize) -> TopologyKind {
    [TopologyKind::Ring, TopologyKind::Complete, TopologyKind::Path][idx % 3].clone()
}

fn config(family: LossFamily, m: usize, n: usize, topo: usize, eta: f64, t: usize, seed: u64) -> RunConfig {
    let model = LossModel::new(family, DIM, 10.0, 1.0);
    let p = build_topology(&topology(topo), m).unwrap();
    let mut cfg = RunConfig::new(model, Arc::new(dataset(m, n, seed)), StepSchedule::Constant { eta }, TopologySchedule::fixed(p), t);
    cfg.master_seed = seed;
    cfg
}

fn family(idx: usize) -> LossFamily {
    [LossFamily::Logistic, LossFamily::SaturatingNonconvex][idx % 2]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn sample_index_is_keyed_and_in_range(seed in any::<u64>(), node in 0usize..64, step in 1usize..10_000, n in 1usize..500) {
        let a = sample_index(seed, SamplingRole::Primary, node, step, n);
        prop_assert!(a < n);
        prop_assert_eq!(a, sample_index(seed, SamplingRole::Primary, node, step, n));
    }

    #[test]
    fn runs_are_deterministic(fam in 0usize..2, m in 2usize..6, n in 1usize..10, topo in 0usize..3, eta in 0.01f64..1.0, seed in any::<u64>()) {
        let mut cfg = config(family(fam), m, n, topo, eta, 30, seed);
        let a = run(&cfg).unwrap();
        let b = run(&cfg).unwrap();
        prop_assert_eq!(&a, &b);
        cfg.update_order = UpdateOrder::GradInsideGossip;
        prop_assert_eq!(run(&cfg).unwrap(), run(&cfg).unwrap());
    }

    #[test]
    fn average_follows_mean_gradient(fam in 0usize..2, m in 2usize..6, n in 1usize..10, topo in 0usize..3, eta in 0.01f64..1.0, seed in any::<u64>()) {
        let traj = run(&config(family(fam), m, n, topo, eta, 40, seed)).unwrap();
        prop_assert!(traj.max_average_identity_residual.unwrap() <= 1e-12);
    }

    #[test]
    fn consensus_error_within_bound(fam in 0usize..2, m in 2usize..7, n in 1usize..10, topo in 0usize..3, eta in 0.01f64..1.0, seed in any::<u64>()) {
        let cfg = config(family(fam), m, n, topo, eta, 60, seed);
        let lipschitz = cfg.model.constants().unwrap().lipschitz;
        let lambda = cfg.topology.max_lambda();
        let traj = run(&cfg).unwrap();
        for snap in &traj.snapshots {
            let bound = consensus_bound(snap.t - 1, &cfg.schedule, lambda, lipschitz, m);
            prop_assert!(consensus_error(&snap.node_weights) <= bound + 1e-12);
        }
    }

    #[test]
    fn twin_divergence_properties(fam in 0usize..2, m in 2usize..5, n in 1usize..6, topo in 0usize..3, eta in 0.01f64..0.5, seed in any::<u64>(), r in 0usize..5, k in 0usize..6) {
        let (r, k) = (r % m, k % n);
        let cfg = config(family(fam), m, n, topo, eta, 40, seed);
        let replacement = unit_sample(&mut ChaCha8Rng::seed_from_u64(seed ^ 0xabcd));
        let spec = NeighborSpec { r, k, replacement: replacement.clone() };
        let trace = twin_run(&cfg, &spec).unwrap();
        prop_assert!(trace.coupling_verified);
        let first = trace.first_hit().unwrap_or(usize::MAX);
        for (idx, (d, nodes)) in trace.divergence.iter().zip(&trace.node_divergence).enumerate() {
            let t = idx + 1;
            let mean = nodes.iter().sum::<f64>() / m as f64;
            prop_assert!(*d <= mean + 1e-12);
            if t <= first {
                prop_assert_eq!(*d, 0.0);
            }
        }
        let consts = cfg.model.constants().unwrap();
        let p = BoundParams::new(consts.lipschitz, consts.smoothness, m, n, 40, cfg.topology.max_lambda(), cfg.schedule);
        let regime = if fam == 0 { Regime::Convex } else { Regime::Nonconvex };
        let env = per_step_envelope(regime, &p, &trace.hits);
        for (d, e) in trace.divergence.iter().zip(&env) {
            prop_assert!(*d <= e + 1e-9, "divergence {} above envelope {}", d, e);
        }
        let eps = pointwise_eps(&trace, &cfg.model, &cfg.dataset, &replacement, &[]).unwrap();
        prop_assert!(eps.training_only);
        prop_assert!(eps.direct <= eps.surrogate + 1e-12);
        prop_assert!((eps.surrogate - consts.lipschitz * distance(&trace.final_w, &trace.final_v)).abs() <= 1e-15);
    }

    #[test]
    fn identical_replacement_never_diverges(m in 2usize..5, n in 1usize..6, seed in any::<u64>(), r in 0usize..5, k in 0usize..6) {
        let (r, k) = (r % m, k % n);
        let cfg = config(LossFamily::Logistic, m, n, 0, 0.3, 25, seed);
        let same = cfg.dataset.get(r, k).clone();
        let trace = twin_run(&cfg, &NeighborSpec { r, k, replacement: same }).unwrap();
        prop_assert!(trace.divergence.iter().all(|d| *d == 0.0));
    }
}

#[test]
fn complete_graph_keeps_nodes_in_consensus() {
    let cfg = config(LossFamily::Logistic, 5, 4, 1, 0.2, 20, 3);
    let traj = run(&cfg).unwrap();
    for snap in &traj.snapshots {
        assert!(consensus_error(&snap.node_weights) <= consensus_bound(snap.t - 1, &cfg.schedule, 0.0, 1.0, 5) + 1e-12);
    }
}
