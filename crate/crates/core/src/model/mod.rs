//! Residual 1-D CNN over reshaped tabular features.
//!
//! ```text
//! x[d] -> dense -> [expand] -> reshape [channels x length]
//!   a1 = relu(conv1)
//!   a2 = dropout(relu(conv2 a1))
//!   a3 = relu(conv3 a2)
//!   a4 = dropout(relu(conv4 (a3 + a1)))      residual skip
//!   a5 = relu(conv5 a4)
//!   r  = mean over length (a5)
//!   z  = normalize(proj2 relu(proj1 r))      embedding for the contrastive loss
//!   logits = cls r, probs = softmax(logits)
//! ```

mod checkpoint;
mod config;
pub mod layers;
mod mc;
mod network;
mod optim;
mod params;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC};
pub use config::ModelConfig;
pub use mc::{mc_predict, McAccumulator, McPrediction};
pub use network::{backward, forward, forward_with_cache, BatchOutput, ForwardCache, ForwardOutput, Mode};
pub use optim::{Adam, AdamConfig};
pub use params::{ModelParams, ParamGradients};
pub(crate) use network::argmax_rows;
