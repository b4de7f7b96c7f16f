//! Dense tensors, small feed-forward networks with hand-written
//! backpropagation, and a finite-difference gradient checker.

mod gradcheck;
mod network;
mod params;
mod tensor;

pub use gradcheck::{check_network, finite_diff_check, relative_error, GradCheckReport, ParamCheck};
pub use network::{Activation, LayerSpec, Network, NetworkSpec};
pub use params::{flatten_grads, unflatten_grads, FlatLayout, ParamStore};
pub use tensor::{dot, Tensor};
