//! Fast reranking of retrieved candidate templates.
//!
//! Article and candidate go through the same convolutional encoder block
//! (embedding, n-gram convolution, GLU, residual). Their row-wise Euclidean
//! similarity matrix is max-pooled over article positions, k-max pooled, and
//! fed to a two-layer scorer that outputs a relevance in (0, 1). Training
//! regresses that relevance onto the candidate's ROUGE-1 F1 with the gold
//! summary.

mod manifest;
mod model;
mod ndcg;
mod train;

pub use manifest::{format_manifest, parse_manifest, read_manifest, write_manifest, ManifestRecord};
pub use model::{
    bce, encode_block, init_params, pair_logit, pool, pool_and_score_logit, score_logit, similarity_matrix, RerankConfig, Reranker,
    CONV_BIAS, CONV_KERNEL, EMBEDDING, SCORER_B_1, SCORER_B_2, SCORER_W_A, SCORER_W_S,
};
pub use ndcg::{dcg_at_k, ndcg_at_k};
pub use train::{build_rerank_dataset, dataset_loss, default_train_config, train_rerank, RerankExample};
