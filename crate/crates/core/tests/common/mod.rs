//! Oracles and generators shared by the integration tests and the acceptance run.
#![allow(dead_code)]

use dcck::layers::{ConvLayerParams, InitConfig, Layer, LayerSpec, Network};
use dcck::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut impl Rng, shape: &[usize], lo: f32, hi: f32) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// Entries of magnitude in `[margin, 1]` with random sign, keeping ReLU kinks out of reach.
pub fn away_from_zero(rng: &mut impl Rng, shape: &[usize], margin: f32) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.random_range(margin..1.0);
            if rng.random_bool(0.5) { m } else { -m }
        })
        .collect();
    Tensor::new(shape, data).unwrap()
}

/// Distinct values on a grid of pitch `gap`, shuffled, so pooling maxima are unambiguous.
pub fn distinct(rng: &mut impl Rng, shape: &[usize], gap: f32) -> Tensor {
    use rand::seq::SliceRandom;
    let n: usize = shape.iter().product();
    let mut values: Vec<f32> = (0..n).map(|i| (i as f32 - n as f32 / 2.0) * gap).collect();
    values.shuffle(rng);
    Tensor::new(shape, values).unwrap()
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Largest relative error between `analytic` and central differences of `loss`
/// with respect to `x`, using the actually representable step.
pub fn max_grad_error(
    x: &Tensor,
    analytic: &Tensor,
    h: f32,
    floor: f64,
    mut loss: impl FnMut(&Tensor) -> f64,
) -> f64 {
    assert_eq!(x.shape(), analytic.shape());
    let mut worst: f64 = 0.0;
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = x.data()[i];
        let (plus, minus) = (orig + h, orig - h);
        probe.data_mut()[i] = plus;
        let fp = loss(&probe);
        probe.data_mut()[i] = minus;
        let fm = loss(&probe);
        probe.data_mut()[i] = orig;
        let numeric = (fp - fm) / (plus as f64 - minus as f64);
        worst = worst.max(rel_err(analytic.data()[i] as f64, numeric, floor));
    }
    worst
}

/// `sum(out * r)` in f64, the probe loss used for layer gradient checks.
pub fn dot(out: &Tensor, r: &Tensor) -> f64 {
    out.data().iter().zip(r.data()).map(|(&a, &b)| a as f64 * b as f64).sum()
}

/// Valid, stride-1 convolution by direct nested loops in f64.
pub fn naive_conv(x: &Tensor, p: &ConvLayerParams) -> Vec<f64> {
    let (b, d, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (n, k) = (p.out_channels(), p.kernel_size());
    let (oh, ow) = (h - k + 1, w - k + 1);
    let xs = x.data();
    let ws = p.weights().data();
    let mut out = vec![0.0; b * n * oh * ow];
    for s in 0..b {
        for o in 0..n {
            for y in 0..oh {
                for xx in 0..ow {
                    let mut acc = p.biases().data()[o] as f64;
                    for c in 0..d {
                        for i in 0..k {
                            for j in 0..k {
                                let xv = xs[((s * d + c) * h + y + i) * w + xx + j] as f64;
                                let wv = ws[((o * d + c) * k + i) * k + j] as f64;
                                acc += xv * wv;
                            }
                        }
                    }
                    out[((s * n + o) * oh + y) * ow + xx] = acc;
                }
            }
        }
    }
    out
}

/// Minimum k-means distortion over every assignment of points to exactly `k`
/// non-empty clusters.
pub fn brute_force_distortion(points: &[Vec<f64>], k: usize) -> f64 {
    let n = points.len();
    let dim = points[0].len();
    let mut best = f64::INFINITY;
    let mut labels = vec![0usize; n];
    let total = k.pow(n as u32);
    for code in 0..total {
        let mut c = code;
        for l in labels.iter_mut() {
            *l = c % k;
            c /= k;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(p) {
                *s += v;
            }
        }
        if counts.contains(&0) {
            continue;
        }
        let mut dist = 0.0;
        for (p, &l) in points.iter().zip(&labels) {
            for (j, v) in p.iter().enumerate() {
                let m = sums[l][j] / counts[l] as f64;
                dist += (v - m) * (v - m);
            }
        }
        best = best.min(dist);
    }
    best
}

pub fn tensor_rows(rows: &[Vec<f64>]) -> Tensor {
    let flat: Vec<f32> = rows.iter().flatten().map(|&v| v as f32).collect();
    Tensor::new(&[rows.len(), rows[0].len()], flat).unwrap()
}

/// Two conv layers into an fc head over 12x12 inputs.
pub fn small_spec(conv1: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::Conv { kernels: conv1, size: 3 },
        LayerSpec::Relu,
        LayerSpec::MaxPool { window: 2, stride: 2 },
        LayerSpec::Conv { kernels: 6, size: 2 },
        LayerSpec::Relu,
        LayerSpec::MaxPool { window: 2, stride: 2 },
        LayerSpec::Flatten,
        LayerSpec::Fc { outputs: 10 },
        LayerSpec::Relu,
        LayerSpec::Fc { outputs: 4 },
        LayerSpec::SoftmaxXent,
    ]
}

pub fn small_net(conv1: usize, seed: u64) -> Network {
    let init = InitConfig { conv_std: 0.2, fc_gain: 1.0 };
    Network::from_spec([1, 12, 12], &small_spec(conv1), init, seed).unwrap()
}

pub fn mnist_net(conv1: usize, seed: u64) -> Network {
    Network::from_spec([1, 28, 28], &LayerSpec::mnist_baseline(conv1), InitConfig::default(), seed).unwrap()
}

pub fn max_abs(a: &Tensor, b: &Tensor) -> f32 {
    a.max_abs_diff(b).unwrap()
}

/// Largest output magnitude, for relative comparisons.
pub fn scale(t: &Tensor) -> f32 {
    t.data().iter().fold(0.0f32, |m, v| m.max(v.abs()))
}

/// Conv layer 0 rebuilt from copies of its kernels in `pattern` order, with each copy's
/// bias shifted by `0.05 * src`, and layer 3 widened to read the repeated channels.
pub fn with_duplicate_kernels(net: &Network, pattern: &[usize]) -> Network {
    let mut layers = net.layers().to_vec();
    let p = net.layers()[0].as_conv().unwrap();
    let len = p.kernel_len();
    let mut w = Vec::new();
    let mut b = Vec::new();
    for &src in pattern {
        w.extend_from_slice(&p.weights().data()[src * len..(src + 1) * len]);
        b.push(p.biases().data()[src] + 0.05 * src as f32);
    }
    let k = p.kernel_size();
    let params = ConvLayerParams::new(
        Tensor::new(&[pattern.len(), p.in_channels(), k, k], w).unwrap(),
        Tensor::new(&[pattern.len()], b).unwrap(),
    )
    .unwrap();
    layers[0] = Layer::Conv(params);
    let Layer::Conv(c) = &layers[3] else { unreachable!() };
    let (n, k2) = (c.out_channels(), c.kernel_size());
    let old_d = c.in_channels();
    let mut cw = Vec::new();
    for o in 0..n {
        for &src in pattern {
            let start = (o * old_d + src) * k2 * k2;
            cw.extend_from_slice(&c.weights().data()[start..start + k2 * k2]);
        }
    }
    layers[3] = Layer::Conv(
        ConvLayerParams::new(Tensor::new(&[n, pattern.len(), k2, k2], cw).unwrap(), c.biases().clone()).unwrap(),
    );
    Network::new(net.input_shape(), layers).unwrap()
}
