//! End-to-end acceptance checks. Runs without the libtest harness and prints
//! one PASS/FAIL line per criterion.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{bd_oracle, crop, image, IMAGES};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use weconvene::codec::{decode, encode_classical, ClassicalOptions, NeuralCodec};
use weconvene::core::classical::{pixel_zero_fraction, quantize_pyramid};
use weconvene::core::entropy::{decode_plane, estimate_rate, quantize_clamped, SymbolPlane, SYMBOL_BOUND};
use weconvene::core::graph::normalize_image;
use weconvene::core::nn::{ConvParams, GdnParams};
use weconvene::core::wavelet::{dwt2d, idwt2d};
use weconvene::core::wecharm::{encode_hf, encode_lf, CharmDecoder};
use weconvene::core::weconv::{weconv_forward, WeConvParams};
use weconvene::core::weights::ModelConfig;
use weconvene::core::{Error, Tensor, WaveletKind};
use weconvene::manifest::ModelManifest;
use weconvene::metrics::{bd_rate, psnr, RdPoint};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(limit: Duration, start: Instant) -> Result<f64, String> {
    let t = start.elapsed();
    ensure(t < limit, || format!("took {t:.2?}, limit {limit:?}"))?;
    Ok(t.as_secs_f64())
}

fn random_tensor(rng: &mut ChaCha8Rng) -> Tensor {
    let (c, h, w) = (rng.gen_range(1..=4), rng.gen_range(2..=64), rng.gen_range(2..=64));
    let data = (0..c * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::from_vec(c, h, w, data).unwrap()
}

// Unit-scale values; the absolute tolerance is a few f32 ulps there.
fn corpus() -> Vec<Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut out: Vec<Tensor> = (0..500).map(|_| random_tensor(&mut rng)).collect();
    // Make sure every odd/even combination and the smallest sizes appear.
    for (i, (h, w)) in [(2, 2), (3, 3), (2, 63), (63, 2), (64, 64), (33, 64), (64, 17)]
        .into_iter()
        .enumerate()
    {
        let data = (0..2 * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect();
        out[i] = Tensor::from_vec(2, h, w, data).unwrap();
    }
    out
}

fn energy(t: &Tensor) -> f64 {
    t.data().iter().map(|&v| (v as f64) * (v as f64)).sum()
}

fn perfect_reconstruction() -> Outcome {
    let start = Instant::now();
    let corpus = corpus();
    let odd = corpus
        .iter()
        .filter(|t| t.height() % 2 == 1 || t.width() % 2 == 1)
        .count();
    ensure(odd > 0, || "no odd sizes in corpus".into())?;
    let mut worst = 0.0f32;
    for kind in WaveletKind::ALL {
        for x in &corpus {
            let back = idwt2d(&dwt2d(x, kind).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
            let err = back.max_abs_diff(x);
            ensure(err <= 1e-5, || format!("{kind:?} {:?}: error {err:e}", x.shape()))?;
            worst = worst.max(err);
        }
    }
    let secs = within(Duration::from_secs(10), start)?;
    let mut pixel_scale = 0.0f32;
    for kind in WaveletKind::ALL {
        for x in corpus.iter().take(100) {
            let x = x.map(|v| 128.0 * v);
            let back = idwt2d(&dwt2d(&x, kind).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
            pixel_scale = pixel_scale.max(back.max_abs_diff(&x) / 128.0);
        }
    }
    Ok(format!(
        "{} tensors ({odd} odd) x 3 wavelets, max error {worst:.2e} (relative {pixel_scale:.2e} at pixel scale), {secs:.2} s",
        corpus.len()
    ))
}

fn haar_energy() -> Outcome {
    let mut worst = 0.0f64;
    for x in corpus() {
        let b = dwt2d(&x, WaveletKind::Haar).map_err(|e| e.to_string())?;
        let e_in = energy(&x);
        let e_out = energy(&b.ll) + energy(&b.hl) + energy(&b.lh) + energy(&b.hh);
        let rel = (e_in - e_out).abs() / e_in;
        ensure(rel <= 1e-4, || {
            format!("{:?}: relative energy change {rel:e}", x.shape())
        })?;
        worst = worst.max(rel);
    }
    Ok(format!("max relative energy change {worst:.2e}"))
}

fn random_plane(rng: &mut ChaCha8Rng, n: usize) -> SymbolPlane {
    let mut mu = Vec::with_capacity(n);
    let mut sigma = Vec::with_capacity(n);
    let mut symbols = Vec::with_capacity(n);
    for _ in 0..n {
        let m: f32 = rng.gen_range(-30.0..30.0);
        let s: f32 = f32::exp(rng.gen_range(f32::ln(0.05)..f32::ln(60.0)));
        let v = Normal::new(m as f64, s as f64).unwrap().sample(rng);
        symbols.push((v.round() as i32).clamp(-SYMBOL_BOUND, SYMBOL_BOUND));
        mu.push(m);
        sigma.push(s);
    }
    SymbolPlane::new(symbols, mu, sigma, SYMBOL_BOUND).unwrap()
}

fn range_coder_lossless() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let plane = random_plane(&mut rng, 100_000);
    let bytes = plane.encode().map_err(|e| e.to_string())?;
    let back = decode_plane(&bytes, &plane.mu, &plane.sigma, plane.bound).map_err(|e| e.to_string())?;
    ensure(back == plane.symbols, || "decoded symbols differ".into())?;

    let mut cuts = 0;
    for _ in 0..8 {
        let n = rng.gen_range(1..400);
        let small = random_plane(&mut rng, n);
        let bytes = small.encode().map_err(|e| e.to_string())?;
        for cut in 0..bytes.len() {
            let r = catch_unwind(|| decode_plane(&bytes[..cut], &small.mu, &small.sigma, small.bound));
            match r {
                Ok(Err(Error::DecodingError(_))) => cuts += 1,
                Ok(Err(e)) => return Err(format!("cut {cut}/{}: unexpected error {e}", bytes.len())),
                Ok(Ok(_)) => return Err(format!("cut {cut}/{} decoded without error", bytes.len())),
                Err(_) => return Err(format!("cut {cut}/{} panicked", bytes.len())),
            }
        }
    }
    let cut = bytes.len() / 3;
    let r = catch_unwind(|| decode_plane(&bytes[..cut], &plane.mu, &plane.sigma, plane.bound));
    ensure(matches!(r, Ok(Err(Error::DecodingError(_)))), || {
        "large truncated stream not rejected".into()
    })?;
    let secs = within(Duration::from_secs(5), start)?;
    Ok(format!(
        "1e5 symbols in {} bytes, {cuts} truncations rejected, {secs:.2} s",
        bytes.len()
    ))
}

fn rate_tightness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let n = rng.gen_range(1..5000);
        let plane = random_plane(&mut rng, n);
        let est = estimate_rate(&plane);
        let actual = 8.0 * plane.encode().map_err(|e| e.to_string())?.len() as f64;
        let slack = actual - est;
        let limit = 256.0 + 0.002 * est;
        ensure(slack >= 0.0 && slack <= limit, || {
            format!("plane {i} ({n} symbols): actual {actual} bits, estimate {est:.1}, limit {limit:.1}")
        })?;
        worst = worst.max(slack / limit);
    }
    Ok(format!(
        "100 planes, largest overhead {:.1}% of allowance",
        100.0 * worst
    ))
}

fn weconv_cancellation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (cin, c) = (3, 6);
    let mut worst = 0.0f32;
    for wavelet in WaveletKind::ALL {
        let kernel = (0..c * cin * 9).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let bias = (0..c).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let stem = ConvParams::new(kernel, bias, c, cin, 3, 2, false).map_err(|e| e.to_string())?;
        let p = WeConvParams {
            stem: stem.clone(),
            lf_convs: vec![ConvParams::identity(c)],
            hf_convs: vec![ConvParams::identity(3 * c)],
            gdn: GdnParams::identity(c, false),
            shortcut: ConvParams::zeros(c, cin, 1, 2, false),
            wavelet,
            slope: 0.01,
        };
        for (h, w) in [(32, 32), (31, 45), (18, 7)] {
            let x = Tensor::from_vec(cin, h, w, (0..cin * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
            let got = weconv_forward(&x, &p).map_err(|e| e.to_string())?;
            let want = weconvene::core::nn::conv2d(&x, &stem).map_err(|e| e.to_string())?;
            let err = got.max_abs_diff(&want);
            ensure(err <= 1e-5, || format!("{wavelet:?} {h}x{w}: error {err:e}"))?;
            worst = worst.max(err);
        }
    }
    Ok(format!("3 wavelets, max deviation from stem {worst:.2e}"))
}

fn test_config(slices: usize) -> ModelConfig {
    ModelConfig {
        n: 16,
        m: 40,
        z: 8,
        slices,
        charm_width: 16,
        subband_convs: 1,
        ..ModelConfig::default()
    }
}

fn charm_symmetry() -> Outcome {
    let img = crop(&image("astronaut.png"), 256, 256);
    let mut coded = 0;
    for slices in [5, 10] {
        for seed in [1, 2] {
            let codec =
                NeuralCodec::new(ModelManifest::random(test_config(slices), seed)).map_err(|e| e.to_string())?;
            let model = codec.model();
            let y = model
                .analysis(&normalize_image(&img).unwrap())
                .map_err(|e| e.to_string())?;
            let z = model.hyper_analysis(&y).map_err(|e| e.to_string())?;
            let zq = quantize_clamped(&z, &Tensor::zeros(z.channels(), z.height(), z.width()), SYMBOL_BOUND)
                .map_err(|e| e.to_string())?;
            let z_hat = Tensor::from_vec(
                z.channels(),
                z.height(),
                z.width(),
                zq.iter().map(|&v| v as f32).collect(),
            )
            .unwrap();
            let side = model.hyper_synthesis(&z_hat).map_err(|e| e.to_string())?;
            let lf = encode_lf(&y.y_l, &side, model).map_err(|e| e.to_string())?;
            let hf = encode_hf(&y.y_h, &lf.decoded, &side, model).map_err(|e| e.to_string())?;

            let mut session = CharmDecoder::new(model, &side);
            ensure(
                matches!(session.decode_hf(&hf.bytes), Err(Error::PreconditionViolation(_))),
                || "HF decode before LF was accepted".into(),
            )?;
            let dec_l = session.decode_lf(&lf.bytes).map_err(|e| e.to_string())?.clone();
            ensure(dec_l == lf.decoded, || format!("{slices} slices: LF differs"))?;
            let dec_h = session.decode_hf(&hf.bytes).map_err(|e| e.to_string())?;
            ensure(dec_h == hf.decoded, || format!("{slices} slices: HF differs"))?;

            let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            ensure(
                bits(&dec_l) == bits(&lf.decoded) && bits(&dec_h) == bits(&hf.decoded),
                || "decoded tensors differ in bit pattern".into(),
            )?;
            coded += 1;
        }
    }
    Ok(format!(
        "{coded} random manifests (5 and 10 slices) bit-exact, HF-before-LF rejected"
    ))
}

const QSTEPS: [f32; 6] = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0];

fn classical_end_to_end() -> Outcome {
    let start = Instant::now();
    let mut finest = f64::INFINITY;
    for name in IMAGES {
        let img = image(name);
        let mut prev: Option<(f64, f64)> = None;
        for q in QSTEPS {
            let opts = ClassicalOptions {
                qstep: q,
                ..ClassicalOptions::default()
            };
            let enc = encode_classical(&img, &opts).map_err(|e| e.to_string())?;
            let rec = decode(&enc.bytes, None).map_err(|e| e.to_string())?;
            let again = decode(&enc.bytes, None).map_err(|e| e.to_string())?;
            let same = rec
                .data()
                .iter()
                .zip(again.data())
                .all(|(a, b)| a.to_bits() == b.to_bits());
            ensure(same, || format!("{name} q{q}: decode not deterministic"))?;
            let p = psnr(&img, &rec).map_err(|e| e.to_string())?;
            let bpp = enc.bpp();
            if let Some((pb, pp)) = prev {
                ensure(bpp < pb && p < pp, || {
                    format!("{name} q{q}: bpp {bpp:.4} / {p:.2} dB after {pb:.4} / {pp:.2} dB")
                })?;
            } else {
                ensure(p >= 45.0, || format!("{name} q{q}: {p:.2} dB below 45"))?;
                finest = finest.min(p);
            }
            prev = Some((bpp, p));
        }
    }
    let secs = within(Duration::from_secs(30), start)?;
    Ok(format!(
        "3 images x 6 steps monotone, finest-step PSNR >= {finest:.2} dB, {secs:.2} s"
    ))
}

fn sparsity() -> Outcome {
    let mut lines = Vec::new();
    for name in IMAGES {
        let img = image(name);
        for q in QSTEPS {
            let coef = quantize_pyramid(&img, WaveletKind::Cdf53, 3, q)
                .map_err(|e| e.to_string())?
                .zero_fraction();
            let pix = pixel_zero_fraction(&img, q);
            ensure(coef > pix, || {
                format!("{name} q{q}: coefficients {coef:.3} vs pixels {pix:.3}")
            })?;
            if q == 8.0 {
                lines.push(format!("{name} {coef:.3}/{pix:.3}"));
            }
        }
    }
    Ok(format!("all steps; zero fractions at q8: {}", lines.join(", ")))
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

fn bd_rate_tool() -> Outcome {
    let a = [(0.125, 27.8), (0.25, 30.6), (0.5, 33.7), (1.0, 36.9)];
    let doubled: Vec<_> = a.iter().map(|&(r, d)| (2.0 * r, d)).collect();
    let b = [(0.11, 28.1), (0.23, 31.2), (0.46, 34.0), (0.97, 37.5)];
    let ident = bd_rate(&curve(&a), &curve(&a)).map_err(|e| e.to_string())?;
    ensure(ident.abs() < 1e-9, || format!("identical curves gave {ident}"))?;
    let dbl = bd_rate(&curve(&a), &curve(&doubled)).map_err(|e| e.to_string())?;
    ensure((dbl - 100.0).abs() <= 1e-6, || format!("doubled rate gave {dbl}"))?;
    let got = bd_rate(&curve(&a), &curve(&b)).map_err(|e| e.to_string())?;
    let want = bd_oracle(&a, &b);
    let rel = (got - want).abs() / want.abs();
    ensure(rel <= 1e-4, || format!("synthetic case {got} vs oracle {want}"))?;
    Ok(format!(
        "identical {ident:.1e}%, doubled {dbl:.6}%, synthetic {got:.4}% vs oracle {want:.4}%"
    ))
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}

fn determinism() -> Outcome {
    let img = crop(&image("coffee.png"), 256, 320);
    let codec = NeuralCodec::new(ModelManifest::random(test_config(5), 9)).map_err(|e| e.to_string())?;
    let a = codec.encode(&img).map_err(|e| e.to_string())?;
    let b = codec.encode(&img).map_err(|e| e.to_string())?;
    ensure(a.bytes == b.bytes, || "two neural encodes differ".into())?;
    let c = encode_classical(&img, &ClassicalOptions::default()).map_err(|e| e.to_string())?;
    let d = encode_classical(&img, &ClassicalOptions::default()).map_err(|e| e.to_string())?;
    ensure(c.bytes == d.bytes, || "two classical encodes differ".into())?;

    let run = |threads| {
        in_pool(threads, || {
            let enc = codec.encode(&img).unwrap();
            let rec = codec.decode(&a.bytes).unwrap();
            let rec_c = decode(&c.bytes, None).unwrap();
            (enc.bytes, rec, rec_c)
        })
    };
    let one = run(1);
    let four = run(4);
    ensure(one.0 == a.bytes && four.0 == a.bytes, || {
        "encode depends on thread count".into()
    })?;
    let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    ensure(bits(&one.1) == bits(&four.1), || {
        "neural reconstruction depends on thread count".into()
    })?;
    ensure(bits(&one.2) == bits(&four.2), || {
        "classical reconstruction depends on thread count".into()
    })?;
    Ok(format!(
        "neural {} bytes and classical {} bytes identical across runs and 1/4 threads",
        a.bytes.len(),
        c.bytes.len()
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("perfect reconstruction", perfect_reconstruction),
        ("Haar energy conservation", haar_energy),
        ("range coder losslessness", range_coder_lossless),
        ("rate estimate tightness", rate_tightness),
        ("WeConv cancellation", weconv_cancellation),
        ("WeChARM symmetry", charm_symmetry),
        ("classical end to end", classical_end_to_end),
        ("wavelet sparsity", sparsity),
        ("BD-rate tool", bd_rate_tool),
        ("determinism", determinism),
    ];
    // Panics are reported as failures below.
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
