use proptest::prelude::*;
use rand::Rng;

use super::*;
use crate::nncore::Matrix;
use crate::poem::Architecture;
use crate::rng::stream_rng;
use crate::{LabError, PoemModel, Tensor2};

fn bank(rows: Vec<Vec<f64>>, domains: Vec<usize>, task: usize) -> FeatureBank {
    let n = rows.len();
    FeatureBank::new(Matrix::from_rows(&rows).unwrap(), vec![0; n], domains, task).unwrap()
}

fn random_bank(seed: u64, n: usize, dim: usize, task: usize) -> FeatureBank {
    let mut rng = stream_rng(seed, 0);
    let features = Tensor2::from_fn(n, dim, |_, _| rng.gen_range(-1.0..1.0));
    let domains = (0..n).map(|i| i % 3).collect();
    let categories = (0..n).map(|i| i % 2).collect();
    FeatureBank::new(features, categories, domains, task).unwrap()
}

#[test]
fn bank_rejects_mismatched_labels() {
    let f = Tensor2::zeros(3, 2);
    assert!(FeatureBank::new(f, vec![0; 2], vec![0; 3], 0).is_err());
}

#[test]
fn cosine_of_a_bank_with_itself_is_one() {
    let rows = vec![vec![1.0, 2.0, -0.5]; 10];
    let a = bank(rows, vec![0; 10], 0);
    assert!((mean_abs_cos(&a, &a, 1000, 1).unwrap() - 1.0).abs() < 1e-12);
    assert!((mean_abs_cos_aligned(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    let b = random_bank(4, 30, 5, 0);
    assert!((mean_abs_cos_aligned(&b, &b).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn cosine_of_orthogonal_banks_is_zero() {
    let a = bank((0..8).map(|k| vec![k as f64 + 1.0, -2.0, 0.0, 0.0]).collect(), vec![0; 8], 0);
    let b = bank((0..8).map(|k| vec![0.0, 0.0, 1.0, k as f64 - 3.5]).collect(), vec![0; 8], 1);
    assert_eq!(mean_abs_cos(&a, &b, 1000, 2).unwrap(), 0.0);
    assert_eq!(mean_abs_cos_aligned(&a, &b).unwrap(), 0.0);
}

#[test]
fn cosine_rejects_empty_bank() {
    let a = random_bank(1, 5, 3, 0);
    let empty = FeatureBank::new(Tensor2::zeros(0, 3), vec![], vec![], 1).unwrap();
    assert!(matches!(mean_abs_cos(&a, &empty, 10, 0), Err(LabError::Config(_))));
}

#[test]
fn cosine_is_deterministic_in_seed() {
    let a = random_bank(1, 50, 4, 0);
    let b = random_bank(2, 50, 4, 1);
    assert_eq!(mean_abs_cos(&a, &b, 1000, 9).unwrap(), mean_abs_cos(&a, &b, 1000, 9).unwrap());
}

#[test]
fn centroid_xent_limit_is_zero() {
    // two tight clusters far apart
    let mut rows = Vec::new();
    let mut domains = Vec::new();
    for d in 0..2 {
        for _ in 0..6 {
            rows.push(vec![100.0 * d as f64, 0.0]);
            domains.push(d);
        }
    }
    let xent = domain_centroid_xent(&bank(rows, domains, 0)).unwrap();
    assert!(xent < 1e-40, "{xent}");
}

#[test]
fn centroid_xent_equidistant_is_ln2() {
    // centroids at (-1, 0) and (1, 0); held-out features on the bisector
    let rows = vec![
        vec![-1.0, 0.0],
        vec![0.0, 3.0],
        vec![1.0, 0.0],
        vec![0.0, -2.0],
    ];
    let xent = domain_centroid_xent(&bank(rows, vec![0, 0, 1, 1], 0)).unwrap();
    assert!((xent - 2f64.ln()).abs() < 1e-12);
}

#[test]
fn centroid_xent_distance_example() {
    // held-out feature at distance 0 from its own centroid and 1 from the other
    let rows = vec![vec![0.0], vec![0.0], vec![1.0], vec![1.0]];
    let xent = domain_centroid_xent(&bank(rows, vec![0, 0, 1, 1], 0)).unwrap();
    let expected = -(1.0 / (1.0 + (-1.0f64).exp())).ln();
    assert!((xent - expected).abs() < 1e-12);
    assert!((xent - 0.3133).abs() < 1e-4);
}

#[test]
fn centroid_xent_needs_two_samples_per_domain() {
    let rows = vec![vec![0.0], vec![1.0], vec![2.0]];
    assert!(matches!(
        domain_centroid_xent(&bank(rows, vec![0, 0, 1], 0)),
        Err(LabError::Config(_))
    ));
    let rows = vec![vec![0.0], vec![1.0]];
    assert!(domain_centroid_xent(&bank(rows, vec![0, 0], 0)).is_err());
}

#[test]
fn projection_power_of_orthogonal_spans_is_zero() {
    let a = bank((0..6).map(|k| vec![1.0 + k as f64, 2.0, 0.0, 0.0]).collect(), vec![0; 6], 0);
    let b = bank(
        (0..6).map(|k| vec![0.0, 0.0, (k as f64).sin(), (k as f64).cos()]).collect(),
        vec![0; 6],
        1,
    );
    assert!(projection_power(&a, &b).unwrap() < 1e-12);
}

#[test]
fn projection_power_of_isotropic_data_is_one_over_rank() {
    let dim = 6;
    let b = random_bank(8, 20000, dim, 1);
    let rho = projection_power(&b, &b).unwrap();
    assert!((rho - 1.0 / dim as f64).abs() < 0.01, "{rho}");
}

#[test]
fn projection_power_along_top_direction_is_top_weight() {
    // reference variance 9 along x, 1 along y: weights 0.9 and 0.1
    let b = bank(
        vec![vec![3.0, 0.0], vec![-3.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]],
        vec![0; 4],
        1,
    );
    let a = bank(vec![vec![5.0, 0.0]], vec![0], 0);
    assert!((projection_power(&a, &b).unwrap() - 0.9).abs() < 1e-12);
}

#[test]
fn projection_power_errors() {
    let zero = bank(vec![vec![1.0, 1.0]; 4], vec![0; 4], 1);
    let a = random_bank(1, 4, 2, 0);
    assert!(matches!(projection_power(&a, &zero), Err(LabError::Numeric(_))));
    let short = random_bank(2, 3, 5, 1);
    let a5 = random_bank(1, 4, 5, 0);
    assert!(matches!(projection_power(&a5, &short), Err(LabError::Config(_))));
}

fn two_task_model(w: Tensor2) -> PoemModel {
    let arch = Architecture {
        input_dim: 2,
        hidden: vec![],
        feature_dim: 2,
    };
    let mut m = PoemModel::init(&arch, &[2, 2], 0).unwrap();
    m.discriminator = w;
    m
}

#[test]
fn discriminator_accuracy_of_separated_banks_is_one() {
    let w = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
    let m = two_task_model(w);
    let a = bank(vec![vec![3.0, 0.1], vec![2.0, -0.2]], vec![0, 1], 0);
    let b = bank(vec![vec![0.2, 4.0], vec![-0.1, 1.0], vec![0.0, 2.0]], vec![0, 1, 0], 1);
    assert_eq!(discriminator_accuracy(&m, &[&a, &b]).unwrap(), 1.0);
}

#[test]
fn zero_discriminator_credits_task_zero_only() {
    let m = two_task_model(Tensor2::zeros(2, 2));
    let a = random_bank(1, 7, 2, 0);
    let b = random_bank(2, 13, 2, 1);
    assert_eq!(discriminator_accuracy(&m, &[&a, &b]).unwrap(), 7.0 / 20.0);
}

#[test]
fn discriminator_accuracy_matches_inequality_count() {
    let mut rng = stream_rng(5, 0);
    let w = Tensor2::from_fn(2, 2, |_, _| rng.gen_range(-1.0..1.0));
    let m = two_task_model(w.clone());
    let a = random_bank(3, 50, 2, 0);
    let b = random_bank(4, 50, 2, 1);
    let mut holds = 0;
    for (bank, i) in [(&a, 0usize), (&b, 1usize)] {
        for k in 0..bank.len() {
            let z = bank.features.row(k);
            let score = |j: usize| z[0] * w[(0, j)] + z[1] * w[(1, j)];
            // ties favour index 0, as argmax does
            let wins = if i == 0 { score(0) >= score(1) } else { score(1) > score(0) };
            holds += wins as usize;
        }
    }
    assert_eq!(discriminator_accuracy(&m, &[&a, &b]).unwrap(), holds as f64 / 100.0);
}

#[test]
fn export_writes_one_row_per_feature() {
    let a = random_bank(1, 20, 5, 0);
    let b = random_bank(2, 15, 5, 1);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.csv");
    let pcs = export_features_2d(&[&a, &b], &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(FEATURES_2D_HEADER));
    assert_eq!(lines.count(), 35);
    assert_eq!(pcs.rows(), 35);

    let again = dir.path().join("g.csv");
    export_features_2d(&[&a, &b], &again).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn orthogonal_banks_stay_separable_in_two_dimensions() {
    let mut rng = stream_rng(6, 0);
    let a_rows: Vec<Vec<f64>> = (0..100)
        .map(|_| vec![3.0 + rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), 0.0, 0.0])
        .collect();
    let b_rows: Vec<Vec<f64>> = (0..100)
        .map(|_| vec![0.0, 0.0, 3.0 + rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
        .collect();
    let a = bank(a_rows, vec![0; 100], 0);
    let b = bank(b_rows, vec![0; 100], 1);
    let dir = tempfile::tempdir().unwrap();
    let pcs = export_features_2d(&[&a, &b], &dir.path().join("f.csv")).unwrap();

    // perceptron probe on (pc1, pc2, 1)
    let label = |i: usize| if i < 100 { -1.0 } else { 1.0 };
    let mut w = [0.0; 3];
    for _ in 0..200 {
        for i in 0..200 {
            let x = [pcs[(i, 0)], pcs[(i, 1)], 1.0];
            let s: f64 = (0..3).map(|k| w[k] * x[k]).sum();
            if s * label(i) <= 0.0 {
                for k in 0..3 {
                    w[k] += label(i) * x[k];
                }
            }
        }
    }
    let correct = (0..200)
        .filter(|&i| {
            let s = w[0] * pcs[(i, 0)] + w[1] * pcs[(i, 1)] + w[2];
            s * label(i) > 0.0
        })
        .count();
    assert!(correct as f64 / 200.0 > 0.99);
}

#[test]
fn diagnose_fills_every_family() {
    let a = random_bank(1, 40, 4, 0);
    let b = random_bank(2, 40, 4, 1);
    let arch = Architecture {
        input_dim: 2,
        hidden: vec![],
        feature_dim: 4,
    };
    let m = PoemModel::init(&arch, &[2, 3], 0).unwrap();
    let r = diagnose(&a, &b, Some(&m), &[], 0).unwrap();
    assert!(r.discriminator_accuracy.is_some());
    let json = serde_json::to_value(&r).unwrap();
    for key in ["mean_abs_cos", "domain_xent", "projection_power", "discriminator_accuracy", "loss_trend"] {
        assert!(json.get(key).is_some(), "{key}");
    }
    let none = diagnose(&a, &b, None, &[], 0).unwrap();
    assert!(none.discriminator_accuracy.is_none());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn cosine_in_unit_interval_and_scale_free(seed in 0u64..500, scale in 0.01f64..100.0) {
        let a = random_bank(seed, 20, 4, 0);
        let b = random_bank(seed + 1, 20, 4, 1);
        let c = mean_abs_cos(&a, &b, 200, seed).unwrap();
        prop_assert!((0.0..=1.0).contains(&c));
        let mut scaled = b.clone();
        for i in 0..scaled.len() {
            let s = scale * (1.0 + i as f64);
            for v in scaled.features.row_mut(i) {
                *v *= s;
            }
        }
        let c2 = mean_abs_cos(&a, &scaled, 200, seed).unwrap();
        prop_assert!((c - c2).abs() < 1e-12);
    }

    #[test]
    fn centroid_xent_translation_invariant(seed in 0u64..500, shift in -50.0f64..50.0) {
        let b = random_bank(seed, 30, 3, 0);
        let mut moved = b.clone();
        for i in 0..moved.len() {
            for (k, v) in moved.features.row_mut(i).iter_mut().enumerate() {
                *v += shift * (k as f64 + 1.0);
            }
        }
        let x0 = domain_centroid_xent(&b).unwrap();
        let x1 = domain_centroid_xent(&moved).unwrap();
        prop_assert!((x0 - x1).abs() < 1e-9);
    }

    #[test]
    fn projection_power_in_unit_interval(seed in 0u64..500) {
        let a = random_bank(seed, 10, 4, 0);
        let b = random_bank(seed + 7, 12, 4, 1);
        let p = projection_power(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
    }
}
