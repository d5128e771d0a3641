use std::f64::consts::PI;

use approx::assert_abs_diff_eq;
use dsgd_core::topology::{build_topology, product_chain, GossipMatrix, TopologyKind, TopologySchedule};
use proptest::prelude::*;

/// Cyclic Jacobi sweeps on a dense symmetric matrix.
fn jacobi(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _ in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        if off < 1e-26 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(|x, y| y.partial_cmp(x).unwrap());
    ev
}

fn oracle_lambda(p: &GossipMatrix) -> f64 {
    let ev = jacobi(p.to_rows());
    if ev.len() < 2 {
        return 0.0;
    }
    ev[1].abs().max(ev[ev.len() - 1].abs())
}

#[test]
fn ring_matches_circulant_spectrum() {
    for m in 3..=16 {
        let p = build_topology(&TopologyKind::Ring, m).unwrap();
        let expected = (1..m).map(|k| ((1.0 + 2.0 * (2.0 * PI * k as f64 / m as f64).cos()) / 3.0).abs()).fold(0.0, f64::max);
        assert_abs_diff_eq!(p.lambda(), expected, epsilon = 1e-12);
    }
}

#[test]
fn named_graphs_match_jacobi() {
    let kinds = [
        (TopologyKind::Path, 7),
        (TopologyKind::Torus2d { rows: None }, 12),
        (TopologyKind::Torus2d { rows: Some(3) }, 15),
        (TopologyKind::Complete, 9),
        (TopologyKind::RandomRegular { degree: 3, seed: 11 }, 10),
    ];
    for (kind, m) in kinds {
        let p = build_topology(&kind, m).unwrap();
        assert_abs_diff_eq!(p.lambda(), oracle_lambda(&p), epsilon = 1e-10);
    }
}

#[test]
fn complete_graph_lambda_is_exactly_zero() {
    for m in 2..=10 {
        assert_eq!(build_topology(&TopologyKind::Complete, m).unwrap().lambda(), 0.0);
    }
}

fn assert_doubly_stochastic(rows: &[Vec<f64>]) {
    let m = rows.len();
    for i in 0..m {
        assert_abs_diff_eq!(rows[i].iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!((0..m).map(|j| rows[j][i]).sum::<f64>(), 1.0, epsilon = 1e-12);
        assert!(rows[i].iter().all(|&v| v >= -1e-15));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_regular_is_symmetric_doubly_stochastic(half in 3usize..10, degree in 2usize..5, seed in any::<u64>()) {
        let m = 2 * half;
        let p = build_topology(&TopologyKind::RandomRegular { degree, seed }, m).unwrap();
        let rows = p.to_rows();
        assert_doubly_stochastic(&rows);
        for i in 0..m {
            for j in 0..m {
                prop_assert_eq!(rows[i][j], rows[j][i]);
            }
        }
        prop_assert!((0.0..=1.0).contains(&p.lambda()));
        prop_assert!((p.lambda() - oracle_lambda(&p)).abs() < 1e-9);
    }

    #[test]
    fn chains_stay_doubly_stochastic(m in 3usize..9, t in 1usize..6, len in 0usize..6) {
        let mats = vec![
            build_topology(&TopologyKind::Ring, m).unwrap(),
            build_topology(&TopologyKind::Path, m).unwrap(),
            build_topology(&TopologyKind::Complete, m).unwrap(),
        ];
        let sched = TopologySchedule::periodic(mats).unwrap();
        let chain = product_chain(&sched, t, t + len).unwrap();
        let rows: Vec<Vec<f64>> = (0..m).map(|i| (0..m).map(|j| chain[(i, j)]).collect()).collect();
        assert_doubly_stochastic(&rows);
    }

    #[test]
    fn ring_lambda_decreases_toward_complete(m in 3usize..20) {
        let ring = build_topology(&TopologyKind::Ring, m).unwrap().lambda();
        let complete = build_topology(&TopologyKind::Complete, m).unwrap().lambda();
        prop_assert!(complete <= ring + 1e-15);
        prop_assert!(ring < 1.0);
    }
}
