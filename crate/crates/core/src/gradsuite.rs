//! Finite-difference audit of every hand-derived gradient.
//!
//! Each primitive is checked on a set of random tiny problems and reported
//! with its worst relative error.

use rand::Rng;
use serde::Serialize;

use crate::error::Result;
use crate::nncore::{abs_cosine_grad, finite_diff_check, softmax_xent, Matrix, Mlp};
use crate::poem::{
    assign_flat, classification_loss, discrimination_loss, disentangling_loss, flatten,
    total_loss, Architecture, Batch, LossTerms, PoemModel,
};
use crate::rng::stream_rng;

pub const TOLERANCE: f64 = 1e-4;
const EPS: f64 = 1e-6;
const STREAM_SUITE: u64 = 0x9c;

/// Deliberate defects for checking that the suite catches broken gradients.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Fault {
    #[default]
    None,
    /// Negates the analytic gradient returned by `abs_cosine_grad`.
    CosineSignFlip,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PrimitiveResult {
    pub name: &'static str,
    pub cases: usize,
    pub worst_rel_error: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteReport {
    pub tolerance: f64,
    pub results: Vec<PrimitiveResult>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }

    pub fn failures(&self) -> Vec<&'static str> {
        self.results.iter().filter(|r| !r.passed).map(|r| r.name).collect()
    }
}

/// Tiny two-task problem: input width 4, feature width 6, one hidden layer
/// of 5, eight samples.
pub fn tiny_problem(seed: u64) -> Result<(PoemModel<f64>, Batch<f64>)> {
    let arch = Architecture {
        input_dim: 4,
        hidden: vec![5],
        feature_dim: 6,
    };
    let model = PoemModel::init(&arch, &[3, 2], seed)?;
    let mut rng = stream_rng(seed, STREAM_SUITE);
    let b = 8;
    let x = Matrix::from_fn(b, 4, |_, _| rng.gen_range(-1.5..1.5));
    let labels = vec![
        (0..b).map(|_| rng.gen_range(0..3)).collect(),
        (0..b).map(|i| i % 2).collect(),
    ];
    Ok((
        model,
        Batch {
            x,
            labels,
            ids: (0..b).collect(),
        },
    ))
}

struct Tracker {
    name: &'static str,
    cases: usize,
    worst: f64,
}

impl Tracker {
    fn new(name: &'static str) -> Self {
        Tracker {
            name,
            cases: 0,
            worst: 0.0,
        }
    }

    fn record(&mut self, rel: f64) {
        self.cases += 1;
        // NaN counts as a failure
        if !(rel <= self.worst) {
            self.worst = rel;
        }
    }

    fn finish(self) -> PrimitiveResult {
        PrimitiveResult {
            name: self.name,
            cases: self.cases,
            worst_rel_error: self.worst,
            passed: self.worst < TOLERANCE,
        }
    }
}

fn check_softmax_xent(seed: u64, t: &mut Tracker) -> Result<()> {
    let mut rng = stream_rng(seed, STREAM_SUITE + 1);
    let logits = Matrix::from_fn(5, 4, |_, _| rng.gen_range(-3.0..3.0));
    let labels: Vec<usize> = (0..5).map(|_| rng.gen_range(0..4)).collect();
    let (_, grad) = softmax_xent(&logits, &labels)?;
    let check = finite_diff_check(
        |q| softmax_xent(&Matrix::from_vec(5, 4, q.to_vec())?, &labels).map(|r| r.0),
        logits.as_slice(),
        grad.as_slice(),
        EPS,
    )?;
    t.record(check.max_rel_error);
    Ok(())
}

fn check_abs_cosine(seed: u64, fault: Fault, t: &mut Tracker) -> Result<()> {
    let mut rng = stream_rng(seed, STREAM_SUITE + 2);
    let v: Vec<f64> = (0..12).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let g = abs_cosine_grad(&v[..6], &v[6..])?;
    let mut analytic: Vec<f64> = g.da.iter().chain(&g.db).copied().collect();
    if fault == Fault::CosineSignFlip {
        analytic.iter_mut().for_each(|x| *x = -*x);
    }
    let check = finite_diff_check(
        |q| Ok(abs_cosine_grad(&q[..6], &q[6..])?.loss),
        &v,
        &analytic,
        EPS,
    )?;
    t.record(check.max_rel_error);
    Ok(())
}

fn check_mlp_backward(model: &PoemModel<f64>, batch: &Batch<f64>, t: &mut Tracker) -> Result<()> {
    // loss = Σ features ⊙ R for a fixed random R
    let mlp = &model.embeddings[0];
    let trace = mlp.forward(&batch.x, None)?;
    let mut rng = stream_rng(batch.len() as u64, STREAM_SUITE + 3);
    let r = Matrix::from_fn(trace.output.rows(), trace.output.cols(), |_, _| rng.gen_range(-1.0..1.0));
    let (grads, _) = mlp.backward(&trace, &r)?;
    let weighted = |m: &Mlp<f64>| -> Result<f64> {
        let out = m.features(&batch.x)?;
        Ok(out.as_slice().iter().zip(r.as_slice()).map(|(a, b)| a * b).sum())
    };
    let check = finite_diff_check(
        |q| {
            let mut m = mlp.clone();
            assign_flat(m.params_mut(), q)?;
            weighted(&m)
        },
        &flatten(&mlp.params()),
        &flatten(&grads.params()),
        EPS,
    )?;
    t.record(check.max_rel_error);
    Ok(())
}

fn check_classification(model: &PoemModel<f64>, batch: &Batch<f64>, t: &mut Tracker) -> Result<()> {
    for task in 0..model.task_count() {
        let (_, g) = classification_loss(model, task, batch)?;
        let mut params = model.embeddings[task].params();
        params.push(&model.classifiers[task]);
        let mut ga = g.embedding.params();
        ga.push(&g.classifier);
        let check = finite_diff_check(
            |q| {
                let mut m = model.clone();
                let mut pm = m.embeddings[task].params_mut();
                pm.push(&mut m.classifiers[task]);
                assign_flat(pm, q)?;
                Ok(classification_loss(&m, task, batch)?.0)
            },
            &flatten(&params),
            &flatten(&ga),
            EPS,
        )?;
        t.record(check.max_rel_error);
    }
    Ok(())
}

fn check_disentangling(model: &PoemModel<f64>, batch: &Batch<f64>, t: &mut Tracker) -> Result<()> {
    let (_, g) = disentangling_loss(model, 0, 1, batch)?;
    let mut params = model.embeddings[0].params();
    params.extend(model.embeddings[1].params());
    let mut ga = g.embedding_i.params();
    ga.extend(g.embedding_j.params());
    let check = finite_diff_check(
        |q| {
            let mut m = model.clone();
            let (a, b) = m.embeddings.split_at_mut(1);
            let mut pm = a[0].params_mut();
            pm.extend(b[0].params_mut());
            assign_flat(pm, q)?;
            Ok(disentangling_loss(&m, 0, 1, batch)?.0)
        },
        &flatten(&params),
        &flatten(&ga),
        EPS,
    )?;
    t.record(check.max_rel_error);
    Ok(())
}

fn check_discrimination(model: &PoemModel<f64>, batch: &Batch<f64>, t: &mut Tracker) -> Result<()> {
    for task in 0..model.task_count() {
        let (_, g) = discrimination_loss(model, task, batch)?;
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
                Ok(discrimination_loss(&m, task, batch)?.0)
            },
            &flatten(&params),
            &flatten(&ga),
            EPS,
        )?;
        t.record(check.max_rel_error);
    }
    Ok(())
}

fn check_total(model: &PoemModel<f64>, batch: &Batch<f64>, t: &mut Tracker) -> Result<()> {
    let (_, grads) = total_loss(model, batch, LossTerms::FULL, None)?;
    let check = finite_diff_check(
        |q| {
            let mut m = model.clone();
            assign_flat(m.params_mut(), q)?;
            Ok(total_loss(&m, batch, LossTerms::FULL, None)?.0.total)
        },
        &flatten(&model.params()),
        &flatten(&grads.params()),
        EPS,
    )?;
    t.record(check.max_rel_error);
    Ok(())
}

/// Runs every check on `models` random tiny problems.
pub fn run_suite(models: usize, fault: Fault) -> Result<SuiteReport> {
    let mut xent = Tracker::new("softmax_xent");
    let mut cosine = Tracker::new("abs_cosine_grad");
    let mut mlp = Tracker::new("mlp_backward");
    let mut cls = Tracker::new("classification_loss");
    let mut dis = Tracker::new("disentangling_loss");
    let mut disc = Tracker::new("discrimination_loss");
    let mut total = Tracker::new("total_loss");
    for seed in 0..models as u64 {
        check_softmax_xent(seed, &mut xent)?;
        check_abs_cosine(seed, fault, &mut cosine)?;
        let (model, batch) = tiny_problem(seed)?;
        check_mlp_backward(&model, &batch, &mut mlp)?;
        check_classification(&model, &batch, &mut cls)?;
        check_disentangling(&model, &batch, &mut dis)?;
        check_discrimination(&model, &batch, &mut disc)?;
        check_total(&model, &batch, &mut total)?;
    }
    Ok(SuiteReport {
        tolerance: TOLERANCE,
        results: [xent, cosine, mlp, cls, dis, disc, total]
            .into_iter()
            .map(Tracker::finish)
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clean_suite_passes() {
        let report = run_suite(20, Fault::None).unwrap();
        assert!(report.results.len() >= 5);
        assert!(report.passed(), "{report:?}");
        assert!(report.results.iter().all(|r| r.cases >= 20));
    }

    #[test]
    fn cosine_sign_flip_is_caught_and_named() {
        let report = run_suite(3, Fault::CosineSignFlip).unwrap();
        assert_eq!(report.failures(), vec!["abs_cosine_grad"]);
    }
}
