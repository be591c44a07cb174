//! Dense tensors and a tape-based reverse-mode autodiff engine.

mod gradcheck;
mod graph;
mod params;
mod tensor;

pub use gradcheck::{
    analytic_gradients, compare_gradients, finite_difference_check, numeric_gradients, relative_error, GradCheckReport,
    ParamCheck, REL_ERR_FLOOR,
};
pub use graph::{sigmoid, Axis, Gradients, Graph, Var, PROB_CLAMP};
pub use params::{ParamId, ParamStore, Parameter, PARAM_MAGIC};
pub use tensor::Tensor;
