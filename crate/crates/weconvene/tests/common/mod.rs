#![allow(dead_code)]

use std::path::PathBuf;

use weconvene::core::weights::ModelConfig;
use weconvene::core::Tensor;
use weconvene::image_io::read_rgb;

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data")
}

pub fn images_dir() -> PathBuf {
    data_dir().join("images")
}

pub fn image(name: &str) -> Tensor {
    read_rgb(images_dir().join(name)).unwrap()
}

pub fn fixture(name: &str) -> Tensor {
    read_rgb(data_dir().join("msssim").join(name)).unwrap()
}

pub const IMAGES: [&str; 3] = ["astronaut.png", "chelsea.png", "coffee.png"];

pub fn small_config(slices: usize) -> ModelConfig {
    ModelConfig {
        n: 8,
        m: 20,
        z: 4,
        slices,
        charm_width: 8,
        subband_convs: 1,
        ..ModelConfig::default()
    }
}

/// Top-left crop of a pixel tensor.
pub fn crop(t: &Tensor, h: usize, w: usize) -> Tensor {
    t.crop(h, w).unwrap()
}

fn lagrange(pts: &[(f64, f64)], x: f64) -> f64 {
    pts.iter()
        .enumerate()
        .map(|(i, &(xi, yi))| {
            yi * pts
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &(xj, _))| (x - xj) / (xi - xj))
                .product::<f64>()
        })
        .sum()
}

fn simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let n = 2000;
    let h = (hi - lo) / n as f64;
    let mut s = f(lo) + f(hi);
    for i in 1..n {
        s += f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// BD-rate of two four-point `(bpp, psnr)` curves by interpolating `ln bpp`
/// through the points and integrating numerically. With four points the
/// cubic fit interpolates, so this matches it exactly.
pub fn bd_oracle(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    assert!(a.len() == 4 && b.len() == 4);
    let la: Vec<_> = a.iter().map(|&(r, d)| (d, r.ln())).collect();
    let lb: Vec<_> = b.iter().map(|&(r, d)| (d, r.ln())).collect();
    let range = |c: &[(f64, f64)]| {
        c.iter()
            .fold((f64::MAX, f64::MIN), |(l, h), p| (l.min(p.0), h.max(p.0)))
    };
    let ((al, ah), (bl, bh)) = (range(&la), range(&lb));
    let (lo, hi) = (al.max(bl), ah.min(bh));
    let diff = (simpson(|x| lagrange(&lb, x), lo, hi) - simpson(|x| lagrange(&la, x), lo, hi)) / (hi - lo);
    (diff.exp() - 1.0) * 100.0
}
