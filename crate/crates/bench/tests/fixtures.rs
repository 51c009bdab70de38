use bogwatch_bench::{berry_mask, curve, frame_pair, regression_rows};
use bogwatch_core::berry::connected_components;

#[test]
fn fixtures_are_well_formed() {
    let (prev, next) = frame_pair(64, 48, 1.5, -0.5);
    assert!(prev.same_size(&next));
    let (lo, hi) = prev.min_max();
    assert!(lo >= 0.1 && hi <= 0.9);

    let mask = berry_mask();
    assert_eq!(mask.width(), 256);
    // Overlapping pairs merge, so there are fewer blobs than berries.
    let blobs = connected_components(&mask).count();
    assert!((30..42).contains(&blobs), "{blobs}");

    let (x, y) = regression_rows(100, 8);
    assert_eq!((x.len(), x[0].len(), y.len()), (100, 8, 100));
    assert_eq!(curve(10, 0.0).len(), 10);
}

#[test]
fn fixtures_are_deterministic() {
    assert_eq!(berry_mask(), berry_mask());
    assert_eq!(frame_pair(32, 32, 2.0, 1.0), frame_pair(32, 32, 2.0, 1.0));
}
