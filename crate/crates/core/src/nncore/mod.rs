//! Dense numeric engine: matrices, hand-derived gradients, optimizer,
//! finite-difference validation and a small-matrix SVD.

pub mod gradcheck;
pub mod loss;
pub mod mlp;
pub mod optim;
pub mod svd;
pub mod tensor;

pub use gradcheck::{finite_diff_check, GradCheck};
pub use loss::{abs_cosine_grad, cosine_similarity, log_softmax, softmax, softmax_xent, AbsCosine};
pub use mlp::{sample_dropout_masks, Dense, ForwardTrace, Mlp};
pub use optim::AdamW;
pub use svd::{pca_2d, svd_small, SvdResult};
pub use tensor::{dot, matmul, matmul_nt, matmul_tn, norm, Matrix};
