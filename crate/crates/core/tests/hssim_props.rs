use proptest::prelude::*;
use thermalfield_core::loss::{hssim, hssim_with_grad, ssim, HssimConstants, ImageRef, WindowConfig};

const W: usize = 8;
const H: usize = 8;

fn image() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..1.0f64, W * H)
}

fn score(x: &[f64], y: &[f64]) -> f64 {
    let x = ImageRef::new(W, H, x).unwrap();
    let y = ImageRef::new(W, H, y).unwrap();
    hssim(&x, &y, &WindowConfig::new(4, 2).unwrap(), &HssimConstants::default()).unwrap()
}

proptest! {
    #[test]
    fn identity_and_symmetry(x in image(), y in image()) {
        prop_assert!((score(&x, &x) - 1.0).abs() < 1e-12);
        prop_assert!((score(&x, &y) - score(&y, &x)).abs() < 1e-12);
    }

    #[test]
    fn bounded(x in image(), y in image()) {
        let s = score(&x, &y);
        prop_assert!((-1.0..=1.0).contains(&s));
    }

    #[test]
    fn ignores_offsets(x in image(), y in image(), a in -0.5..0.5f64, b in -0.5..0.5f64) {
        let xs: Vec<f64> = x.iter().map(|v| v + a).collect();
        let ys: Vec<f64> = y.iter().map(|v| v + b).collect();
        prop_assert!((score(&xs, &ys) - score(&x, &y)).abs() < 1e-9);
    }

    #[test]
    fn gradient_matches_value(x in image(), y in image()) {
        let w = WindowConfig::new(4, 2).unwrap();
        let c = HssimConstants::default();
        let xr = ImageRef::new(W, H, &x).unwrap();
        let yr = ImageRef::new(W, H, &y).unwrap();
        let vg = hssim_with_grad(&xr, &yr, &w, &c).unwrap();
        prop_assert_eq!(vg.value, hssim(&xr, &yr, &w, &c).unwrap());
        prop_assert_eq!(vg.grad.len(), W * H);
    }
}

#[test]
fn ssim_notices_offsets_that_hssim_ignores() {
    let x: Vec<f64> = (0..W * H).map(|i| ((i * 37) % 11) as f64 / 20.0).collect();
    let shifted: Vec<f64> = x.iter().map(|v| v + 0.4).collect();
    let w = WindowConfig::new(4, 4).unwrap();
    let xr = ImageRef::new(W, H, &x).unwrap();
    let sr = ImageRef::new(W, H, &shifted).unwrap();
    assert!(ssim(&xr, &sr, &w, 1e-4, 9e-4).unwrap() < 0.9);
    assert!((score(&x, &shifted) - 1.0).abs() < 1e-12);
}

#[test]
fn mismatched_shapes_are_rejected() {
    let a = vec![0.0; 64];
    let b = vec![0.0; 48];
    let x = ImageRef::new(8, 8, &a).unwrap();
    let y = ImageRef::new(8, 6, &b).unwrap();
    assert!(hssim(&x, &y, &WindowConfig::default(), &HssimConstants::default()).is_err());
}
