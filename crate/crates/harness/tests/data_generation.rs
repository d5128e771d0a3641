use dsgd_core::losses::norm;
use dsgd_harness::data::{eval_pool, generate_synthetic, parse_libsvm, LabelRule, SyntheticSpec};
use proptest::prelude::*;

#[test]
fn flip_rate_is_ten_percent() {
    let spec = SyntheticSpec { m: 10, n: 10_000, dim: 5, feature_bound: 1.0, label_rule: LabelRule::default(), seed: 42 };
    let s = generate_synthetic(&spec).unwrap();
    let rate = s.flipped.iter().filter(|f| **f).count() as f64 / s.flipped.len() as f64;
    assert_eq!(s.flipped.len(), 100_000);
    assert!((rate - 0.1).abs() <= 0.01, "flip rate {rate}");
    let disagree = s
        .dataset
        .samples()
        .iter()
        .zip(&s.flipped)
        .filter(|(z, _)| z.x.iter().zip(&s.truth).map(|(a, b)| a * b).sum::<f64>() != 0.0)
        .all(|(z, f)| {
            let clean = if z.x.iter().zip(&s.truth).map(|(a, b)| a * b).sum::<f64>() >= 0.0 { 1.0 } else { -1.0 };
            (z.y != clean) == *f
        });
    assert!(disagree);
}

#[test]
fn pool_is_disjoint_stream() {
    let spec = SyntheticSpec { m: 2, n: 4, dim: 3, feature_bound: 1.0, label_rule: LabelRule::default(), seed: 1 };
    let data = generate_synthetic(&spec).unwrap().dataset;
    let pool = eval_pool(&spec, 8);
    assert!(pool.iter().all(|p| !data.samples().contains(p)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn features_respect_bound(m in 1usize..4, n in 1usize..30, dim in 1usize..8, bound in 0.1f64..5.0, seed in any::<u64>()) {
        let spec = SyntheticSpec { m, n, dim, feature_bound: bound, label_rule: LabelRule::Linear { noise: 0.2 }, seed };
        let s = generate_synthetic(&spec).unwrap();
        prop_assert_eq!(s.dataset.m(), m);
        prop_assert_eq!(s.dataset.n(), n);
        prop_assert!(s.dataset.samples().iter().all(|z| norm(&z.x) <= bound * (1.0 + 1e-12)));
    }

    #[test]
    fn libsvm_rows_round_trip(seed in any::<u64>()) {
        let spec = SyntheticSpec { m: 2, n: 5, dim: 4, feature_bound: 1.0, label_rule: LabelRule::default(), seed };
        let data = generate_synthetic(&spec).unwrap().dataset;
        let max = data.samples().iter().map(|z| norm(&z.x)).fold(0.0, f64::max);
        let text: String = data
            .samples()
            .iter()
            .map(|z| {
                let feats: Vec<String> = z.x.iter().enumerate().map(|(i, v)| format!("{}:{v:?}", i + 1)).collect();
                format!("{:?} {}\n", z.y, feats.join(" "))
            })
            .collect();
        let back = parse_libsvm(&text, 2, 5, max).unwrap();
        for (a, b) in data.samples().iter().zip(back.samples()) {
            prop_assert_eq!(a.y, b.y);
            for (x, y) in a.x.iter().zip(&b.x) {
                prop_assert!((x - y).abs() <= 1e-15);
            }
        }
    }
}
