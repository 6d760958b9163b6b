use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::error::LabError;
use crate::nncore::{finite_diff_check, Matrix, Mlp};

fn tiny(seed: u64) -> (PoemModel<f64>, Batch<f64>) {
    let arch = Architecture {
        input_dim: 4,
        hidden: vec![5],
        feature_dim: 6,
    };
    let model = PoemModel::init(&arch, &[3, 2], seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    let b = 8;
    let x = Matrix::from_fn(b, 4, |_, _| rng.gen_range(-1.5..1.5));
    let labels = vec![
        (0..b).map(|_| rng.gen_range(0..3)).collect(),
        (0..b).map(|i| i % 2).collect(),
    ];
    (
        model,
        Batch {
            x,
            labels,
            ids: (0..b).collect(),
        },
    )
}

#[test]
fn classification_with_zero_head_is_uniform() {
    let (mut model, batch) = tiny(1);
    model.classifiers[0] = Matrix::zeros(6, 3);
    let (loss, _) = classification_loss(&model, 0, &batch).unwrap();
    assert!((loss - 3f64.ln()).abs() < 1e-12);
}

#[test]
fn classification_mean_survives_duplication() {
    let (model, batch) = tiny(2);
    let doubled = Batch {
        x: Matrix::vstack(&[&batch.x, &batch.x]).unwrap(),
        labels: batch.labels.iter().map(|l| [l.clone(), l.clone()].concat()).collect(),
        ids: [batch.ids.clone(), batch.ids.clone()].concat(),
    };
    let (a, _) = classification_loss(&model, 0, &batch).unwrap();
    let (b, _) = classification_loss(&model, 0, &doubled).unwrap();
    assert!((a - b).abs() < 1e-12);
}

#[test]
fn classification_label_error() {
    let (model, mut batch) = tiny(3);
    batch.labels[1][0] = 2;
    assert!(matches!(
        classification_loss(&model, 1, &batch),
        Err(LabError::Label { label: 2, classes: 2 })
    ));
}

#[test]
fn classification_gradient_matches_finite_differences() {
    for seed in 0..10 {
        let (model, batch) = tiny(seed);
        for task in 0..2 {
            let (_, g) = classification_loss(&model, task, &batch).unwrap();
            let mut params = model.embeddings[task].params();
            params.push(&model.classifiers[task]);
            let p = flatten(&params);
            let mut ga = g.embedding.params();
            ga.push(&g.classifier);
            let analytic = flatten(&ga);
            let check = finite_diff_check(
                |q| {
                    let mut m = model.clone();
                    let mut pm = m.embeddings[task].params_mut();
                    pm.push(&mut m.classifiers[task]);
                    assign_flat(pm, q)?;
                    Ok(classification_loss(&m, task, &batch)?.0)
                },
                &p,
                &analytic,
                1e-6,
            )
            .unwrap();
            assert!(check.max_rel_error < 1e-4, "seed {seed} task {task}: {check:?}");
        }
    }
}

#[test]
fn disentangling_identical_embeddings_is_one() {
    let (mut model, batch) = tiny(4);
    model.embeddings[1] = model.embeddings[0].clone();
    let (loss, _) = disentangling_loss(&model, 0, 1, &batch).unwrap();
    assert!((loss - 1.0).abs() < 1e-12);
}

#[test]
fn disentangling_orthogonal_features_is_zero() {
    // single linear layers projecting onto disjoint coordinates
    let mut w0 = Matrix::zeros(4, 6);
    let mut w1 = Matrix::zeros(4, 6);
    for k in 0..3 {
        w0[(k % 4, k)] = 1.0;
        w1[((k + 1) % 4, k + 3)] = 1.0;
    }
    let (mut model, mut batch) = tiny(5);
    model.embeddings[0] = Mlp::linear(w0, Matrix::zeros(1, 6)).unwrap();
    model.embeddings[1] = Mlp::linear(w1, Matrix::zeros(1, 6)).unwrap();
    batch.x = batch.x.map(|v| v.abs() + 0.1);
    let (loss, g) = disentangling_loss(&model, 0, 1, &batch).unwrap();
    assert_eq!(loss, 0.0);
    assert!(g.embedding_i.params().iter().all(|m| m.max_abs() == 0.0));
}

#[test]
fn disentangling_is_symmetric() {
    for seed in 0..5 {
        let (model, batch) = tiny(seed);
        let (a, _) = disentangling_loss(&model, 0, 1, &batch).unwrap();
        let (b, _) = disentangling_loss(&model, 1, 0, &batch).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn disentangling_reports_degenerate_sample() {
    let (mut model, mut batch) = tiny(6);
    // bias-free linear embeddings map a zero input row to a zero feature
    model.embeddings[0] = Mlp::linear(Matrix::identity(4), Matrix::zeros(1, 4)).unwrap();
    model.embeddings[1] =
        Mlp::linear(Matrix::from_fn(4, 4, |i, j| if i == j { 1.0 } else { 0.5 }), Matrix::zeros(1, 4))
            .unwrap();
    for j in 0..4 {
        batch.x[(3, j)] = 0.0;
    }
    let err = disentangling_loss(&model, 0, 1, &batch).unwrap_err();
    assert!(matches!(err, LabError::DegenerateFeature { sample: 3 }), "{err}");
}

#[test]
fn disentangling_rejects_same_index() {
    let (model, batch) = tiny(1);
    assert!(disentangling_loss(&model, 1, 1, &batch).is_err());
}

#[test]
fn disentangling_gradient_matches_finite_differences() {
    for seed in 0..10 {
        let (model, batch) = tiny(seed + 100);
        let (_, g) = disentangling_loss(&model, 0, 1, &batch).unwrap();
        let mut params = model.embeddings[0].params();
        params.extend(model.embeddings[1].params());
        let p = flatten(&params);
        let mut ga = g.embedding_i.params();
        ga.extend(g.embedding_j.params());
        let check = finite_diff_check(
            |q| {
                let mut m = model.clone();
                let (a, b) = m.embeddings.split_at_mut(1);
                let mut pm = a[0].params_mut();
                pm.extend(b[0].params_mut());
                assign_flat(pm, q)?;
                Ok(disentangling_loss(&m, 0, 1, &batch)?.0)
            },
            &p,
            &flatten(&ga),
            1e-6,
        )
        .unwrap();
        assert!(check.max_rel_error < 1e-4, "seed {seed}: {check:?}");
    }
}

#[test]
fn discrimination_with_zero_discriminator_is_ln_n() {
    let (mut model, batch) = tiny(7);
    model.discriminator = Matrix::zeros(6, 2);
    for task in 0..2 {
        let (loss, _) = discrimination_loss(&model, task, &batch).unwrap();
        assert!((loss - 2f64.ln()).abs() < 1e-12);
    }
}

#[test]
fn discrimination_limit_goes_to_zero() {
    // feature aligned with w_0 and orthogonal to w_1, scaled up
    let (mut model, batch) = tiny(8);
    let mut w = Matrix::zeros(4, 6);
    w[(0, 0)] = 1.0;
    model.embeddings[0] = Mlp::linear(w, Matrix::from_fn(1, 6, |_, j| if j == 0 { 50.0 } else { 0.0 })).unwrap();
    let mut disc = Matrix::zeros(6, 2);
    disc[(0, 0)] = 10.0;
    disc[(1, 1)] = 10.0;
    model.discriminator = disc;
    let (loss, _) = discrimination_loss(&model, 0, &batch).unwrap();
    assert!(loss < 1e-100, "{loss}");
}

#[test]
fn discrimination_gradient_matches_finite_differences() {
    for seed in 0..10 {
        let (model, batch) = tiny(seed + 200);
        for task in 0..2 {
            let (_, g) = discrimination_loss(&model, task, &batch).unwrap();
            let mut params = model.embeddings[task].params();
            params.push(&model.discriminator);
            let mut ga = g.embedding.params();
            ga.push(&g.discriminator);
            let check = finite_diff_check(
                |q| {
                    let mut m = model.clone();
                    let mut pm = m.embeddings[task].params_mut();
                    pm.push(&mut m.discriminator);
                    assign_flat(pm, q)?;
                    Ok(discrimination_loss(&m, task, &batch)?.0)
                },
                &flatten(&params),
                &flatten(&ga),
                1e-6,
            )
            .unwrap();
            assert!(check.max_rel_error < 1e-4, "seed {seed}: {check:?}");
        }
    }
}

#[test]
fn zero_components_give_zero_total() {
    let b = LossBreakdown {
        l_c: vec![0.0, 0.0],
        l_s: vec![vec![0.0; 2]; 2],
        l_d: vec![0.0, 0.0],
        terms: LossTerms::FULL,
        total: 0.0,
    };
    assert_eq!(b.recompute_total(), 0.0);
}

#[test]
fn total_equals_component_recomputation() {
    for seed in 0..20 {
        let (model, batch) = tiny(seed + 300);
        let (bd, _) = total_loss(&model, &batch, LossTerms::FULL, None).unwrap();
        let mut acc = 0.0;
        for i in 0..2 {
            acc += classification_loss(&model, i, &batch).unwrap().0;
            acc += discrimination_loss(&model, i, &batch).unwrap().0;
            for j in 0..2 {
                if i != j {
                    acc += disentangling_loss(&model, i, j, &batch).unwrap().0;
                }
            }
        }
        assert!((bd.total - acc / 2.0).abs() < 1e-12);
        assert!((bd.total - bd.recompute_total()).abs() < 1e-12);
    }
}

#[test]
fn total_gradient_matches_finite_differences() {
    for seed in 0..20 {
        let (model, batch) = tiny(seed + 400);
        let (_, grads) = total_loss(&model, &batch, LossTerms::FULL, None).unwrap();
        let check = finite_diff_check(
            |q| {
                let mut m = model.clone();
                assign_flat(m.params_mut(), q)?;
                Ok(total_loss(&m, &batch, LossTerms::FULL, None)?.0.total)
            },
            &flatten(&model.params()),
            &flatten(&grads.params()),
            1e-6,
        )
        .unwrap();
        assert!(check.max_rel_error < 1e-4, "seed {seed}: {check:?}");
    }
}

#[test]
fn adversarial_flag_flips_only_embedding_gradient_of_discrimination() {
    let (model, batch) = tiny(9);
    let only_d = LossTerms {
        disentangle: false,
        discriminate: true,
        adversarial: false,
    };
    let adv = LossTerms {
        adversarial: true,
        ..only_d
    };
    let base = LossTerms::CLASSIFICATION_ONLY;
    let (_, g_base) = total_loss(&model, &batch, base, None).unwrap();
    let (_, g_coop) = total_loss(&model, &batch, only_d, None).unwrap();
    let (_, g_adv) = total_loss(&model, &batch, adv, None).unwrap();
    assert_eq!(g_coop.discriminator, g_adv.discriminator);
    // embedding gradients are linear in d_features: coop - base = -(adv - base)
    let last = |m: &PoemModel<f64>| m.embeddings[0].layers[1].weight.clone();
    let coop = last(&g_coop).sub(&last(&g_base)).unwrap();
    let advd = last(&g_adv).sub(&last(&g_base)).unwrap();
    assert!(coop.add(&advd).unwrap().max_abs() < 1e-12);
}

#[test]
fn extract_matches_full_model_predictions() {
    let (model, _) = tiny(10);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let x = Matrix::from_fn(100, 4, |_, _| rng.gen_range(-3.0..3.0));
    let extracted = model.extract_category_model();
    assert_eq!(model.predict_category(&x).unwrap(), extracted.predict(&x).unwrap());
    assert!(extracted.param_count() < model.param_count());
    let mut copy = extracted.clone();
    copy.classifier = copy.classifier.scale(2.0);
    assert_eq!(model.classifiers[0], extracted.classifier);
}

#[test]
fn predict_agrees_with_probability_argmax() {
    let (model, _) = tiny(11);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = Matrix::from_fn(50, 4, |_, _| rng.gen_range(-3.0..3.0));
    let cat = model.extract_category_model();
    let probs = crate::nncore::softmax(&cat.logits(&x).unwrap());
    assert_eq!(argmax_rows(&probs), cat.predict(&x).unwrap());
}

#[test]
fn predict_tie_goes_to_label_zero() {
    let (mut model, _) = tiny(12);
    model.classifiers[0] = Matrix::zeros(6, 3);
    let x = Matrix::from_fn(5, 4, |i, j| (i + j) as f64);
    assert_eq!(model.predict_category(&x).unwrap(), vec![0; 5]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn losses_invariant_under_row_permutation(seed in 0u64..1000, rot in 1usize..8) {
        let (model, batch) = tiny(seed);
        let perm: Vec<usize> = (0..batch.len()).map(|i| (i + rot) % batch.len()).collect();
        let (a, _) = total_loss(&model, &batch, LossTerms::FULL, None).unwrap();
        let (b, _) = total_loss(&model, &batch.permuted(&perm), LossTerms::FULL, None).unwrap();
        prop_assert!((a.total - b.total).abs() < 1e-12);
        for i in 0..2 {
            prop_assert!((a.l_c[i] - b.l_c[i]).abs() < 1e-12);
            prop_assert!((a.l_d[i] - b.l_d[i]).abs() < 1e-12);
        }
        prop_assert!((a.sum_l_s() - b.sum_l_s()).abs() < 1e-12);
    }
}
