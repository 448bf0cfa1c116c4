//! Forward recording and backpropagation through time.

mod backward;
mod gradcheck;
pub mod rules;
mod tape;

pub use backward::{backward, backward_threaded, layer_deltas, GradientSet, LayerGradient};
pub use gradcheck::{
    gradcheck, gradcheck_with, numeric_gradients, relative_error, GradcheckEntry, GradcheckOptions, GradcheckReport,
    RELATIVE_ERROR_FLOOR,
};
pub use tape::{forward_record, forward_with, BpttTape, InputNudge, LayerStep};
