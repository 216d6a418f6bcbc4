//! Dense numerical kernel: tensors, a reverse-mode tape, layers and optimizers.

mod checkpoint;
pub mod gradcheck;
mod layers;
mod ops;
mod optim;
mod tape;
mod tensor;

pub use checkpoint::{load_into, save, MAGIC as CHECKPOINT_MAGIC, VERSION as CHECKPOINT_VERSION};
pub use layers::{EncoderKind, GruCell, Linear, Mlp, SequenceEncoder, TokenDecoder};
pub use ops::{argmax, cross_entropy, log_clamped, sample_index, softmax_stable, LOG_CLAMP};
pub use optim::{Optimizer, OptimizerKind};
pub use tape::{Tape, Var};
pub use tensor::{Grads, Init, ParamId, ParamStore, Params, Tensor, INIT_SCALE};
