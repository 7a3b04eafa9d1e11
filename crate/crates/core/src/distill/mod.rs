//! Cloud side: self-supervised teacher training with guide/exploration
//! networks, embedding extraction, and distillation into the student
//! feature extractor (plain and joint part/full).

mod kd;
pub mod loss;
mod ssl;

pub use kd::{
    extract_embeddings, joint_train, run_distillation, DistillConfig, EmbeddingDataset, EmbeddingEntry,
};
pub use loss::{
    cross_entropy, cross_entropy_grad, distill_loss, distill_loss_grad, joint_loss, joint_loss_grad, mse, mse_grad,
    ssl_loss, ssl_loss_grad, DistillGrad, JointGrad, JointTerms,
};
pub use ssl::{train_teacher, SslConfig, TeacherPair};

/// Mixes a run seed with a stream tag so independent random streams of one
/// run never coincide.
pub(crate) fn stream_seed(seed: u64, stream: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ stream.wrapping_mul(0xD1B5_4A32_D192_ED03)
}

#[cfg(test)]
mod tests;
