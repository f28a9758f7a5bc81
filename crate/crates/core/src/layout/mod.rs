//! Step layouts and the lookahead window.

mod step;
mod window;

pub use step::{QueryRole, QueryToken, StepLayout};
pub use window::{LookaheadLayout, Window2D};
