//! Embedder architectures, weights, inference and checkpoints.

pub mod arch;
pub mod checkpoint;
pub mod embedding;
pub mod net;
pub mod params;

pub use arch::{ArchKind, ArchSpec};
pub use checkpoint::{load_checkpoint, load_checkpoint_for, save_checkpoint};
pub use embedding::{embed_all, forward_embed, read_embeddings, write_embeddings_bin, write_embeddings_jsonl, SpeakerEmbedding};
pub use net::{backward, batch_input, forward, head_backward, head_logits, Forward, Grads};
pub use params::ModelParams;
