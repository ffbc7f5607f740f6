//! The lightweight convolutional encoder-decoder and its per-image optimizer.

mod layers;
mod net;
mod optim;

pub use layers::{conv_out_len, Conv2d};
pub use net::{init_params, ForwardCache, StyleNetParams, SIZE_MULTIPLE};
pub use optim::{composite, learning_rate, optimize, Adam, CompositeMode, OptimState};
