use crate::error::Result;
use crate::imaging::{FlowField, Raster};

/// Backward warp: output pixel `q` is the bilinear sample of `img` at `q + flow(q)`.
///
/// Samples that fall outside the image replicate the nearest border pixel.
pub fn warp(img: &Raster, flow: &FlowField) -> Result<Raster> {
    flow.ensure_size(img.width(), img.height(), "warp")?;
    Ok(Raster::from_fn(
        img.width(),
        img.height(),
        img.channels(),
        |x, y, c| {
            let (du, dv) = flow.displacement(x, y);
            img.sample(x as f64 + du as f64, y as f64 + dv as f64, c)
        },
    ))
}
