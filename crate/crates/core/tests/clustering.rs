use loadshape::ingest::{generate_synthetic, SyntheticConfig};
use loadshape::kmeans::{
    adaptive_kmeans, hierarchical_merge, kmeans_best_of, rse, within_cluster_ss, AdaptiveParams, ModelMeta,
};
use loadshape::preprocess::prepare;
use loadshape::{ClusterModel, Profile, HOURS};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn corpus_shapes(cfg: &SyntheticConfig, seed: u64) -> Vec<Profile> {
    let corpus = generate_synthetic(cfg, seed).unwrap();
    prepare(corpus.meter).0.into_iter().map(|s| s.values).collect()
}

fn spike(h: usize) -> Profile {
    let mut p = [0.0; HOURS];
    p[h] = 1.0;
    p
}

fn mix(parts: &[(usize, f64)]) -> Profile {
    let mut p = [0.0; HOURS];
    for &(h, w) in parts {
        p[h] += w;
    }
    p
}

fn exhaustive_two_partition(points: &[Profile]) -> f64 {
    let n = points.len();
    (1..(1u32 << (n - 1)))
        .map(|mask| {
            let labels: Vec<usize> = (0..n).map(|i| ((mask >> i) & 1) as usize).collect();
            within_cluster_ss(points, &labels, 2)
        })
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn best_of_restarts_matches_exhaustive_partitions() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    for trial in 0..20 {
        let n = rng.random_range(3..=8);
        let points: Vec<Profile> = (0..n).map(|_| std::array::from_fn(|_| rng.random::<f64>())).collect();
        let fit = kmeans_best_of(&points, 2, 20, trial);
        let best = exhaustive_two_partition(&points);
        assert!((fit.inertia - best).abs() < 1e-9, "trial {trial}: {} vs {best}", fit.inertia);
    }
}

#[test]
fn two_separated_archetypes_give_two_clusters() {
    let cfg = SyntheticConfig { archetypes: 2, households: 30, days: 30, temp_response: 0.0, ..Default::default() };
    let corpus = generate_synthetic(&cfg, 4).unwrap();
    let (shapes, _) = prepare(corpus.meter.clone());
    let points: Vec<Profile> = shapes.iter().map(|s| s.values).collect();
    let params = AdaptiveParams { k_init: 2, ..AdaptiveParams::new(1.0) };
    let model = adaptive_kmeans(&points, params, 8).unwrap();
    assert_eq!(model.len(), 2);
    assert_eq!(model.violations(), 0);

    // each cluster is a single archetype
    for cluster in model.members() {
        let first = corpus.truth.iter().find(|t| t.key == shapes[cluster[0]].key).unwrap().archetype;
        for &i in &cluster {
            let t = corpus.truth.iter().find(|t| t.key == shapes[i].key).unwrap();
            assert_eq!(t.archetype, first);
        }
    }
}

#[test]
fn cluster_count_shrinks_as_theta_grows() {
    let cfg = SyntheticConfig { households: 60, days: 40, noise: 0.35, outlier_fraction: 0.05, ..Default::default() };
    let points = corpus_shapes(&cfg, 12);
    let mut last = usize::MAX;
    for theta in [0.05, 0.1, 0.2, 0.3, 0.4, 0.5] {
        let model = adaptive_kmeans(&points, AdaptiveParams::new(theta), 3).unwrap();
        assert_eq!(model.violations(), 0, "theta {theta}");
        assert!(model.len() <= last, "theta {theta}: {} > {last}", model.len());
        last = model.len();
    }
}

#[test]
fn centroids_are_member_means_and_runs_repeat() {
    let cfg = SyntheticConfig { households: 40, days: 30, outlier_fraction: 0.1, ..Default::default() };
    let points = corpus_shapes(&cfg, 6);
    let a = adaptive_kmeans(&points, AdaptiveParams::new(0.3), 1).unwrap();
    let b = adaptive_kmeans(&points, AdaptiveParams::new(0.3), 1).unwrap();
    assert_eq!(a, b);
    let merged = hierarchical_merge(&points, &a, 0.05);
    for model in [&a, &merged] {
        for (c, members) in model.centroids().iter().zip(model.members()) {
            assert_eq!(c.member_count, members.len());
            for t in 0..HOURS {
                let mean = members.iter().map(|&i| points[i][t]).sum::<f64>() / members.len() as f64;
                assert!((c.values[t] - mean).abs() < 1e-9);
            }
        }
    }
    assert!(merged.violation_rate() < 0.05);
}

#[test]
fn identical_shapes_form_one_cluster() {
    let s = mix(&[(8, 0.5), (19, 0.5)]);
    let model = adaptive_kmeans(&vec![s; 12], AdaptiveParams::new(0.3), 0).unwrap();
    assert_eq!(model.len(), 1);
    assert_eq!(model.centroids()[0].values, s);
    assert_eq!(model.violations(), 0);
}

#[test]
fn merge_toy_stops_before_the_cap() {
    // A and B nearly coincide, C is a distant spike.
    let a = spike(12);
    let b = mix(&[(12, 0.95), (13, 0.05)]);
    let c = spike(0);
    let points: Vec<Profile> = [vec![a; 3], vec![b; 3], vec![c; 4]].concat();
    let theta = 0.7;
    let labels = vec![0, 0, 0, 1, 1, 1, 2, 2, 2, 2];
    let model = ClusterModel::from_labels(&points, labels, 3, theta, ModelMeta::default()).unwrap();
    assert_eq!(model.violations(), 0);

    // brute force: every merge order, by partition
    let rate = |labels: Vec<usize>, k| {
        ClusterModel::from_labels(&points, labels, k, theta, ModelMeta::default()).unwrap().violation_rate()
    };
    let ab = rate(vec![0, 0, 0, 0, 0, 0, 1, 1, 1, 1], 2);
    let ac = rate(vec![0, 0, 0, 1, 1, 1, 0, 0, 0, 0], 2);
    let bc = rate(vec![0, 0, 0, 1, 1, 1, 1, 1, 1, 1], 2);
    let all = rate(vec![0; 10], 1);
    assert_eq!(ab, 0.0);
    assert!(ac > 0.05 && bc > 0.05);
    assert!((all - 0.4).abs() < 1e-12);
    // RSE of C members against the full mean by hand: 0.72 / 0.52
    let centre = mix(&[(12, 0.6 * 0.975), (13, 0.6 * 0.025), (0, 0.4)]);
    assert!(rse(&c, &centre).unwrap() > theta && rse(&a, &centre).unwrap() < theta);

    let merged = hierarchical_merge(&points, &model, 0.05);
    assert_eq!(merged.len(), 2);
    assert_eq!(merged.violations(), 0);
    let members = merged.members();
    assert!(members.iter().any(|m| m == &vec![0, 1, 2, 3, 4, 5]));
    assert!(members.iter().any(|m| m == &vec![6, 7, 8, 9]));
}

#[test]
fn zero_cap_keeps_the_model() {
    let points = vec![spike(1), spike(1), spike(9), spike(9)];
    let model = ClusterModel::from_labels(&points, vec![0, 0, 1, 1], 2, 0.3, ModelMeta::default()).unwrap();
    let merged = hierarchical_merge(&points, &model, 0.0);
    assert_eq!(merged.centroids(), model.centroids());
    assert_eq!(merged.labels(), model.labels());
}

fn unit_shape() -> impl Strategy<Value = Profile> {
    prop::array::uniform24(0.0f64..1.0).prop_filter_map("nonzero", |v| {
        let s: f64 = v.iter().sum();
        (s > 1e-6).then(|| v.map(|x| x / s))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn adaptive_leaves_no_violations(points in prop::collection::vec(unit_shape(), 2..60), seed in 0u64..1000) {
        let model = adaptive_kmeans(&points, AdaptiveParams::new(0.3), seed).unwrap();
        prop_assert_eq!(model.violations(), 0);
        prop_assert_eq!(model.labels().len(), points.len());
    }

    #[test]
    fn merge_stays_under_cap_and_never_grows(points in prop::collection::vec(unit_shape(), 2..60), cap in 0.01f64..0.5) {
        let model = adaptive_kmeans(&points, AdaptiveParams::new(0.3), 5).unwrap();
        let merged = hierarchical_merge(&points, &model, cap);
        prop_assert!(merged.len() <= model.len());
        prop_assert!(merged.len() >= 1);
        prop_assert!(merged.violation_rate() < cap || merged.len() == model.len());
    }
}
