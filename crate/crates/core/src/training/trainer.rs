use std::time::Instant;

use super::config::{SwadConfig, TrainConfig, Variant, LOG_EVERY};
use super::report::{MetricsRow, TrialReport, OPTIMIZER_NOTE};
use super::swad::{SwadState, SwadSummary, SWAD_METHOD};
use crate::datagen::{DomainSplit, MinibatchSampler, SourceData, Subset};
use crate::error::{LabError, Result};
use crate::nncore::{sample_dropout_masks, AdamW};
use crate::poem::{evaluate_losses, total_loss, Architecture, LossTerms, CATEGORY_TASK, DOMAIN_TASK};
use crate::rng::stream_rng;
use crate::{Batch, CategoryModel, PoemModel, Tensor2};

const DROPOUT_STREAM: u64 = 0xd0;

/// Fraction of rows whose predicted label equals `labels`.
pub fn accuracy(model: &CategoryModel, x: &Tensor2, labels: &[usize]) -> Result<f64> {
    if x.rows() == 0 {
        return Err(LabError::Config("accuracy of an empty slice".into()));
    }
    if labels.len() != x.rows() {
        return Err(LabError::Dimension {
            op: "accuracy labels",
            left: x.shape(),
            right: (labels.len(), 1),
        });
    }
    let pred = model.predict(x)?;
    let hits = pred.iter().zip(labels).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Category accuracy on a dataset slice.
pub fn evaluate_accuracy(model: &CategoryModel, slice: &Subset) -> Result<f64> {
    accuracy(model, &slice.x, &slice.categories)
}

/// A trained model plus its log. For single-embedding variants `model` has
/// one task.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: PoemModel,
    /// Tail-averaged category parameters, when averaging was requested.
    pub swad_model: Option<CategoryModel>,
    pub report: TrialReport,
}

impl TrainOutcome {
    pub fn final_category_model(&self) -> CategoryModel {
        self.model.extract_category_model()
    }
}

/// Which label set the single-task trainer fits.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Target {
    Category,
    Domain,
}

fn architecture(config: &TrainConfig, sources: &SourceData) -> Architecture {
    Architecture {
        input_dim: sources.input_dim(),
        hidden: config.hidden.clone(),
        feature_dim: config.feature_dim,
    }
}

fn validation_batch(sources: &SourceData, target: Target) -> Batch {
    let v = &sources.validation;
    let labels = match target {
        Target::Category => vec![v.categories.clone(), v.domains.clone()],
        Target::Domain => vec![v.domains.clone()],
    };
    Batch {
        x: v.x.clone(),
        labels,
        ids: v.ids.clone(),
    }
}

fn pair_mean(m: &[Vec<f64>]) -> Option<f64> {
    let n = m.len();
    if n < 2 {
        return None;
    }
    let sum: f64 = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|(i, j)| m[i][j])
        .sum();
    Some(sum / (n * (n - 1)) as f64)
}

fn log_row(
    step: usize,
    model: &PoemModel,
    val: &Batch,
    terms: LossTerms,
) -> Result<MetricsRow> {
    let b = evaluate_losses(model, val, terms)?;
    let n = model.task_count();
    let head = model.task_model(CATEGORY_TASK)?;
    Ok(MetricsRow {
        step,
        l_c: b.l_c.clone(),
        l_s: pair_mean(&b.l_s),
        l_d: (n >= 2).then(|| b.sum_l_d() / n as f64),
        val_acc: accuracy(&head, &val.x, &val.labels[0])?,
    })
}

fn fit(
    config: &TrainConfig,
    sources: &SourceData,
    mut model: PoemModel,
    target: Target,
    observer: &mut dyn FnMut(usize, &Batch),
) -> Result<TrainOutcome> {
    config.validate()?;
    if sources.source_count < 2 {
        return Err(LabError::Config("training needs at least two source domains".into()));
    }
    let started = Instant::now();
    let terms = config.variant.terms(config.adversarial_discriminator);
    let val = validation_batch(sources, target);
    let mut sampler = MinibatchSampler::new(
        &sources.train,
        sources.source_count,
        config.per_domain_batch,
        config.seed,
    )?;
    let mut dropout_rng = stream_rng(config.seed, DROPOUT_STREAM);
    let mut optimizer = AdamW::new(config.lr, config.weight_decay);
    let mut swad = config.swad.map(SwadState::new);
    let mut rows = Vec::with_capacity(config.logged_rows());

    let mut observe = |step: usize, model: &PoemModel, rows: &mut Vec<MetricsRow>| -> Result<()> {
        let row = log_row(step, model, &val, terms)?;
        if let Some(s) = swad.as_mut() {
            s.update(step, &model.extract_category_model(), row.l_c[CATEGORY_TASK]);
        }
        rows.push(row);
        Ok(())
    };

    for step in 0..config.steps {
        let at = |e: LabError| LabError::AtStep {
            step,
            source: Box::new(e),
        };
        let mut batch = sampler.next_batch();
        if target == Target::Domain {
            batch.labels.swap_remove(0);
        }
        observer(step, &batch);
        if step % LOG_EVERY == 0 {
            observe(step, &model, &mut rows).map_err(at)?;
        }
        let masks = (config.dropout > 0.0).then(|| {
            model
                .embeddings
                .iter()
                .map(|e| sample_dropout_masks(e, batch.len(), config.dropout, &mut dropout_rng))
                .collect::<Vec<_>>()
        });
        let (_, grads) = total_loss(&model, &batch, terms, masks.as_deref()).map_err(at)?;
        optimizer
            .step(model.params_mut(), grads.params())
            .map_err(at)?;
        if model.params().iter().any(|p| !p.is_all_finite()) {
            return Err(at(LabError::Numeric("parameters became non-finite".into())));
        }
    }
    let final_row = log_row(config.steps, &model, &val, terms)
        .map_err(|e| LabError::AtStep {
            step: config.steps,
            source: Box::new(e),
        })?;
    if let Some(s) = swad.as_mut() {
        s.update(config.steps, &model.extract_category_model(), final_row.l_c[CATEGORY_TASK]);
    }

    let source_domain_accuracy = if model.task_count() > DOMAIN_TASK {
        let head = model.task_model(DOMAIN_TASK)?;
        Some(accuracy(&head, &sources.validation.x, &sources.validation.domains)?)
    } else {
        None
    };
    let final_cat = model.extract_category_model();
    let (swad_model, swad_summary) = match (&swad, config.swad) {
        (Some(state), Some(cfg)) => {
            let averaged = state.average(&final_cat)?;
            let used = averaged.clone().unwrap_or_else(|| final_cat.clone());
            let summary = swad_summary(cfg, state, averaged.is_none(), &used, sources, target)?;
            (Some(used), Some(summary))
        }
        _ => (None, None),
    };
    let report = TrialReport {
        variant: config.variant,
        config: config.clone(),
        rows,
        source_category_accuracy: final_row.val_acc,
        final_row,
        source_domain_accuracy,
        target_domain: None,
        target_accuracy: None,
        swad: swad_summary,
        optimizer: OPTIMIZER_NOTE.into(),
        wall_clock_secs: started.elapsed().as_secs_f64(),
    };
    Ok(TrainOutcome {
        model,
        swad_model,
        report,
    })
}

fn swad_summary(
    cfg: SwadConfig,
    state: &SwadState,
    fallback: bool,
    used: &CategoryModel,
    sources: &SourceData,
    target: Target,
) -> Result<SwadSummary> {
    let labels = match target {
        Target::Category => &sources.validation.categories,
        Target::Domain => &sources.validation.domains,
    };
    Ok(SwadSummary {
        method: SWAD_METHOD.into(),
        n_s: cfg.n_s,
        n_e: cfg.n_e,
        r: cfg.r,
        started_at: state.started_at(),
        ended_at: state.ended_at(),
        snapshots: state.snapshot_count(),
        fallback_to_final: fallback,
        source_category_accuracy: accuracy(used, &sources.validation.x, labels)?,
        target_accuracy: None,
    })
}

/// Joint training of the category and domain embeddings. `observer` sees
/// every training batch before it is used.
pub fn train_poem(
    config: &TrainConfig,
    sources: &SourceData,
    observer: &mut dyn FnMut(usize, &Batch),
) -> Result<TrainOutcome> {
    if !config.variant.is_poem_family() {
        return Err(LabError::Config(format!(
            "train_poem called with variant {}",
            config.variant
        )));
    }
    let arch = architecture(config, sources);
    let model = PoemModel::init(&arch, &[sources.category_count, sources.source_count], config.seed)?;
    fit(config, sources, model, Target::Category, observer)
}

/// Single category embedding trained on classification loss only.
pub fn train_erm(
    config: &TrainConfig,
    sources: &SourceData,
    observer: &mut dyn FnMut(usize, &Batch),
) -> Result<TrainOutcome> {
    if config.variant.is_poem_family() {
        return Err(LabError::Config(format!(
            "train_erm called with variant {}",
            config.variant
        )));
    }
    let arch = architecture(config, sources);
    let model = PoemModel::init_single(&arch, sources.category_count, CATEGORY_TASK, config.seed)?;
    fit(config, sources, model, Target::Category, observer)
}

/// Single domain embedding trained on source-domain labels only, initialised
/// like the domain embedding of a two-task model with the same seed. Paired
/// with an ERM category model it forms the baseline for the separation
/// diagnostics.
pub fn train_domain_model(config: &TrainConfig, sources: &SourceData) -> Result<TrainOutcome> {
    let config = TrainConfig {
        variant: Variant::Erm,
        swad: None,
        ..config.clone()
    };
    let arch = architecture(&config, sources);
    let model = PoemModel::init_single(&arch, sources.source_count, DOMAIN_TASK, config.seed)?;
    fit(&config, sources, model, Target::Domain, &mut |_, _| {})
}

/// Trains any variant.
pub fn train(
    config: &TrainConfig,
    sources: &SourceData,
    observer: &mut dyn FnMut(usize, &Batch),
) -> Result<TrainOutcome> {
    if config.variant.is_poem_family() {
        train_poem(config, sources, observer)
    } else {
        train_erm(config, sources, observer)
    }
}

/// One leave-one-domain-out trial.
#[derive(Clone, Debug)]
pub struct Trial {
    pub outcome: TrainOutcome,
    /// For single-embedding variants, the separately trained domain model.
    pub companion: Option<TrainOutcome>,
}

/// Trains on the source part of `split`, then scores the held-out domain.
/// The target set is only touched here, after training has returned.
pub fn run_trial(config: &TrainConfig, split: &DomainSplit, companion: bool) -> Result<Trial> {
    let mut outcome = train(config, &split.sources, &mut |_, _| {})?;
    let target = &split.target;
    let report = &mut outcome.report;
    report.target_domain = Some(split.plan.target_domain);
    report.target_accuracy = Some(evaluate_accuracy(&outcome.model.extract_category_model(), target)?);
    if let (Some(summary), Some(m)) = (report.swad.as_mut(), outcome.swad_model.as_ref()) {
        summary.target_accuracy = Some(evaluate_accuracy(m, target)?);
    }
    let companion = if companion && !config.variant.is_poem_family() {
        let c = train_domain_model(config, &split.sources)?;
        outcome.report.source_domain_accuracy = Some(c.report.final_row.val_acc);
        Some(c)
    } else {
        None
    };
    Ok(Trial { outcome, companion })
}
