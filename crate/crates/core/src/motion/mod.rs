//! Cloud motion: dense Lucas-Kanade flow, forward/backward validation, cloud
//! masking and the sun-weighted global motion vector.

mod consistency;
mod global;
mod lk;

pub use consistency::{consistency_check, mask_flow, DEFAULT_CONSISTENCY_TOL};
pub use global::{global_motion, GlobalMotion, MotionWeights};
pub use lk::{lucas_kanade_flow, LkParams};
