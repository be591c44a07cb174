//! Neural layers built on [`crate::autograd`].

mod gru;
mod init;
mod layers;

pub use gru::{bigru_batch, bigru_sequence, gru_batch, gru_sequence, gru_step, GruCell, GruOutput};
pub use init::{init_gaussian, init_orthogonal, init_xavier, GAUSSIAN_STD};
pub use layers::{
    attend, attend_batch, bilinear_score, conv_encode, dropout, embed, AttentionParams, BilinearScorer, ConvBank,
    EmbeddingTable, PAD_ID,
};
