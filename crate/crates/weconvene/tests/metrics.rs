mod common;

use common::{bd_oracle, fixture, image};
use weconvene::core::{Error, Tensor};
use weconvene::metrics::{bd_rate, ms_ssim, psnr, RdPoint};
use weconvene::CodecError;

// Values from the pytorch-msssim package (ms_ssim, data_range=255, float64)
// on the same files. That package rounds its window to f32; on the noise pair
// the finest-scale contrast term is about 1e-3 and the rounding alone moves
// the result by a few 1e-6.
const REF_NOISE: f64 = 0.079_502_527_737_763_45;
const REF_CHELSEA_Q: f64 = 0.961_028_902_783_962_8;

#[test]
fn ms_ssim_matches_reference_implementation() {
    let (a, b) = (fixture("noise_a.png"), fixture("noise_b.png"));
    let v = ms_ssim(&a, &b).unwrap();
    assert!((v - REF_NOISE).abs() < 1e-5, "{v}");
    assert!(v > 0.0 && v < 0.3);
    assert_eq!(v, ms_ssim(&b, &a).unwrap());

    let (c, q) = (image("chelsea.png"), fixture("chelsea_q.png"));
    let v = ms_ssim(&c, &q).unwrap();
    assert!((v - REF_CHELSEA_Q).abs() < 1e-6, "{v}");
    assert!((ms_ssim(&c, &c).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn ms_ssim_rejects_small_images() {
    let a = Tensor::zeros(3, 159, 400);
    assert!(matches!(
        ms_ssim(&a, &a),
        Err(CodecError::Core(Error::DegenerateInput(_)))
    ));
    let b = Tensor::filled(3, 160, 160, 9.0);
    assert!((ms_ssim(&b, &b).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn psnr_values() {
    let a = Tensor::filled(3, 8, 8, 10.0);
    let mut b = a.clone();
    assert_eq!(psnr(&a, &b).unwrap(), 100.0);
    b.map_inplace(|v| v + 1.0);
    assert!((psnr(&a, &b).unwrap() - 48.130_803_608_679_1).abs() < 1e-9);
}

fn curve(points: &[(f64, f64)]) -> Vec<RdPoint> {
    points
        .iter()
        .map(|&(bpp, psnr_db)| RdPoint {
            bpp,
            psnr_db,
            msssim: 0.0,
        })
        .collect()
}

#[test]
fn bd_rate_edge_cases() {
    let a = curve(&[(0.1, 28.0), (0.25, 31.0), (0.5, 34.0), (1.0, 37.5)]);
    assert!(bd_rate(&a, &a).unwrap().abs() < 1e-12);
    assert!(bd_rate(&a, &a[..3]).is_err());
    let far = curve(&[(0.1, 50.0), (0.2, 51.0), (0.3, 52.0), (0.4, 53.0)]);
    assert!(matches!(
        bd_rate(&a, &far),
        Err(CodecError::Core(Error::DegenerateInput(_)))
    ));
}

#[test]
fn bd_rate_is_antisymmetric_on_smooth_curves() {
    // ln R = 0.2 (D - 30) - 1 for a; b is the same curve shifted 0.8 dB up.
    let a: Vec<_> = (0..6)
        .map(|i| {
            let d = 28.0 + 2.0 * i as f64;
            (f64::exp(0.2 * (d - 30.0) - 1.0), d)
        })
        .collect();
    let b: Vec<_> = a.iter().map(|&(r, d)| (r, d + 0.8)).collect();
    let (a, b) = (curve(&a), curve(&b));
    let ab = bd_rate(&a, &b).unwrap();
    let ba = bd_rate(&b, &a).unwrap();
    assert!((ab - 100.0 * (f64::exp(-0.16) - 1.0)).abs() < 1e-9);
    assert!((ab + ba / (1.0 + ba / 100.0)).abs() < 1e-9);
}

#[test]
fn bd_rate_matches_interpolation_oracle() {
    type Curve<'a> = &'a [(f64, f64)];
    let cases: [(Curve, Curve); 3] = [
        (
            &[(0.12, 27.1), (0.26, 30.4), (0.55, 33.9), (1.05, 37.2)],
            &[(0.10, 27.6), (0.21, 30.9), (0.47, 34.5), (0.93, 37.9)],
        ),
        (
            &[(0.08, 26.0), (0.2, 29.5), (0.45, 33.0), (0.9, 36.0)],
            &[(0.1, 25.5), (0.3, 30.0), (0.6, 33.5), (1.4, 38.0)],
        ),
        (
            &[(0.2, 30.0), (0.4, 32.0), (0.8, 35.0), (1.6, 39.0)],
            &[(0.4, 30.0), (0.8, 32.0), (1.6, 35.0), (3.2, 39.0)],
        ),
    ];
    for (a, b) in cases {
        let want = bd_oracle(a, b);
        let got = bd_rate(&curve(a), &curve(b)).unwrap();
        assert!((got - want).abs() <= 1e-4 * want.abs().max(1.0), "{got} vs {want}");
    }
    let doubled = bd_rate(&curve(cases[2].0), &curve(cases[2].1)).unwrap();
    assert!((doubled - 100.0).abs() < 1e-6, "{doubled}");
}
