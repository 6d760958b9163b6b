//! Elementary embeddings, per-task classifiers and the discriminator, with
//! the classification, disentangling and discrimination losses.

mod losses;
mod model;

pub use losses::{
    classification_loss, discrimination_loss, disentangling_loss, evaluate_losses, total_loss,
    Batch, ClassificationGrads, DiscriminationGrads, DisentangleGrads, LossBreakdown, LossTerms,
};
pub use model::{
    argmax_rows, assign_flat, flatten, predict_category, Architecture, CategoryModel, PoemModel,
    CATEGORY_TASK, DOMAIN_TASK,
};

#[cfg(test)]
mod tests;
