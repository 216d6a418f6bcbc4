//! The two policies mixed by the controller.

mod il;
mod invdy;

pub use il::{build_context, examples, split_context, IlConfig, IlExample, IlModel};
pub use invdy::{IntrinsicConfig, InvDyConfig, QNetwork, TdReport};

#[cfg(test)]
mod tests;
