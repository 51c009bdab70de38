use crate::cloud::CloudProbMap;
use crate::error::Result;
use crate::imaging::FlowField;

/// Default forward/backward residual tolerance, pixels.
pub const DEFAULT_CONSISTENCY_TOL: f64 = 1.0;

/// Keeps a pixel valid only if following `fwd` and then `bwd` returns to it.
///
/// The residual at `q` is `|fwd(q) + bwd(q + fwd(q))|` with `bwd` sampled
/// bilinearly. Pixels already invalid in `fwd` stay invalid.
pub fn consistency_check(fwd: &FlowField, bwd: &FlowField, tol: f64) -> Result<FlowField> {
    bwd.ensure_size(fwd.width(), fwd.height(), "consistency_check")?;
    Ok(fwd.map(|x, y, u, v, ok| {
        if !ok {
            return (0.0, 0.0, false);
        }
        let (bu, bv) = bwd.sample(x as f64 + u as f64, y as f64 + v as f64);
        let residual = (u as f64 + bu).hypot(v as f64 + bv);
        (u, v, residual <= tol)
    }))
}

/// Scales each displacement by the pixel's cloud probability; validity is kept.
pub fn mask_flow(flow: &FlowField, prob: &CloudProbMap) -> Result<FlowField> {
    flow.ensure_size(prob.width(), prob.height(), "mask_flow")?;
    Ok(flow.map(|x, y, u, v, ok| {
        let p = prob.at(x, y);
        (u * p, v * p, ok)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::imaging::Raster;

    fn swirl(w: usize, h: usize) -> FlowField {
        FlowField::new(
            w,
            h,
            (0..w * h).map(|i| ((i % w) as f32 * 0.1).sin()).collect(),
            (0..w * h).map(|i| ((i / w) as f32 * 0.2).cos()).collect(),
            (0..w * h).map(|i| i % 7 != 0).collect(),
        )
        .unwrap()
    }

    #[test]
    fn exact_inverse_keeps_validity() {
        let fwd = FlowField::uniform(16, 12, 1.5, -0.75);
        let bwd = fwd.negated();
        let out = consistency_check(&fwd, &bwd, 0.0).unwrap();
        assert_eq!(out, fwd);
    }

    #[test]
    fn one_sided_motion_is_rejected() {
        let fwd = FlowField::uniform(10, 10, 2.0, 0.0);
        let bwd = FlowField::zeros(10, 10);
        let out = consistency_check(&fwd, &bwd, 0.5).unwrap();
        assert_eq!(out.valid_count(), 0);
        assert!(out.u().iter().all(|&u| u == 0.0));
    }

    #[test]
    fn infinite_tolerance_keeps_validity() {
        let fwd = swirl(9, 8);
        let bwd = FlowField::uniform(9, 8, 5.0, 5.0);
        let out = consistency_check(&fwd, &bwd, f64::INFINITY).unwrap();
        assert_eq!(out, fwd);
    }

    #[test]
    fn mismatched_sizes_are_shape_errors() {
        let fwd = FlowField::zeros(4, 4);
        assert!(matches!(
            consistency_check(&fwd, &FlowField::zeros(4, 5), 1.0),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            mask_flow(&fwd, &CloudProbMap::uniform(3, 4, 1.0)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn masking_scales_by_probability() {
        let flow = swirl(6, 5);
        assert_eq!(mask_flow(&flow, &CloudProbMap::uniform(6, 5, 1.0)).unwrap(), flow);
        let zeroed = mask_flow(&flow, &CloudProbMap::uniform(6, 5, 0.0)).unwrap();
        assert!(zeroed.u().iter().chain(zeroed.v()).all(|&d| d == 0.0));
        assert_eq!(zeroed.validity(), flow.validity());

        let one = FlowField::uniform(1, 1, 4.0, 0.0);
        let quarter = CloudProbMap::new(Raster::new(1, 1, 1, vec![0.25]).unwrap()).unwrap();
        assert_eq!(mask_flow(&one, &quarter).unwrap().displacement(0, 0), (1.0, 0.0));
    }
}
