//! Image containers, the fisheye camera model, projection and warping.

mod camera;
mod flow;
pub mod io;
mod raster;
mod warp;

pub use camera::{Affine, CameraParams, FisheyeCamera, Pixel, Projection, SkyDirection};
pub use flow::FlowField;
pub(crate) use raster::bilinear;
pub use raster::Raster;
pub use warp::warp;
