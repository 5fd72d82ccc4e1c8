mod common;

use common::*;
use dcck::layers::*;
use dcck::Tensor;
use proptest::prelude::*;
use rand::Rng;

const H: f32 = 1e-2;
const FLOOR: f64 = 1e-3;
const TOL: f64 = 1e-2;

#[test]
fn conv_gradients_match_finite_differences() {
    let mut r = rng(11);
    for _ in 0..20 {
        let (b, d, n, k) = (r.random_range(1..3), r.random_range(1..4), r.random_range(1..4), r.random_range(1..4));
        let (hh, ww) = (k + r.random_range(0..4), k + r.random_range(0..4));
        let x = uniform(&mut r, &[b, d, hh, ww], -1.0, 1.0);
        let p = ConvLayerParams::new(uniform(&mut r, &[n, d, k, k], -1.0, 1.0), uniform(&mut r, &[n], -1.0, 1.0)).unwrap();
        let probe = uniform(&mut r, &[b, n, hh - k + 1, ww - k + 1], -1.0, 1.0);
        let g = conv_backward(&x, &p, &probe).unwrap();
        let ex = max_grad_error(&x, &g.grad_x, H, FLOOR, |x| dot(&conv_forward(x, &p).unwrap(), &probe));
        let ew = max_grad_error(p.weights(), &g.grad_w, H, FLOOR, |w| {
            dot(&conv_forward(&x, &ConvLayerParams::new(w.clone(), p.biases().clone()).unwrap()).unwrap(), &probe)
        });
        let eb = max_grad_error(p.biases(), &g.grad_b, H, FLOOR, |bias| {
            dot(&conv_forward(&x, &ConvLayerParams::new(p.weights().clone(), bias.clone()).unwrap()).unwrap(), &probe)
        });
        assert!(ex.max(ew).max(eb) < TOL, "x {ex} w {ew} b {eb}");
    }
}

#[test]
fn fc_gradients_match_finite_differences() {
    let mut r = rng(12);
    for _ in 0..20 {
        let (b, i, o) = (r.random_range(1..4), r.random_range(1..12), r.random_range(1..8));
        let x = uniform(&mut r, &[b, i], -1.0, 1.0);
        let p = FcLayerParams::new(uniform(&mut r, &[o, i], -1.0, 1.0), uniform(&mut r, &[o], -1.0, 1.0)).unwrap();
        let probe = uniform(&mut r, &[b, o], -1.0, 1.0);
        let g = fc_backward(&x, &p, &probe).unwrap();
        let ex = max_grad_error(&x, &g.grad_x, H, FLOOR, |x| dot(&fc_forward(x, &p).unwrap(), &probe));
        let ew = max_grad_error(p.weights(), &g.grad_w, H, FLOOR, |w| {
            dot(&fc_forward(&x, &FcLayerParams::new(w.clone(), p.biases().clone()).unwrap()).unwrap(), &probe)
        });
        let eb = max_grad_error(p.biases(), &g.grad_b, H, FLOOR, |bias| {
            dot(&fc_forward(&x, &FcLayerParams::new(p.weights().clone(), bias.clone()).unwrap()).unwrap(), &probe)
        });
        assert!(ex.max(ew).max(eb) < TOL, "x {ex} w {ew} b {eb}");
    }
}

#[test]
fn relu_gradient_matches_finite_differences() {
    let mut r = rng(13);
    for _ in 0..20 {
        let shape = [r.random_range(1..3), r.random_range(1..4), r.random_range(1..6), r.random_range(1..6)];
        let x = away_from_zero(&mut r, &shape, 0.05);
        let probe = uniform(&mut r, &shape, -1.0, 1.0);
        let g = relu_backward(&x, &probe).unwrap();
        let e = max_grad_error(&x, &g, H, FLOOR, |x| dot(&relu_forward(x), &probe));
        assert!(e < TOL, "{e}");
    }
}

#[test]
fn maxpool_gradient_matches_finite_differences() {
    let mut r = rng(14);
    for _ in 0..20 {
        let window = r.random_range(1..4);
        let (oh, ow) = (r.random_range(1..4), r.random_range(1..4));
        let shape = [r.random_range(1..3), r.random_range(1..3), oh * window, ow * window];
        let pool = MaxPool::new(window, window).unwrap();
        let x = distinct(&mut r, &shape, 0.05);
        let (out, argmax) = maxpool_forward(&x, pool).unwrap();
        let probe = uniform(&mut r, out.shape(), -1.0, 1.0);
        let g = maxpool_backward(x.shape(), &argmax, &probe).unwrap();
        let e = max_grad_error(&x, &g, H, FLOOR, |x| dot(&maxpool_forward(x, pool).unwrap().0, &probe));
        assert!(e < TOL, "{e}");
    }
}

#[test]
fn softmax_xent_gradient_matches_finite_differences() {
    let mut r = rng(15);
    for _ in 0..20 {
        let (b, c) = (r.random_range(1..5), r.random_range(2..8));
        let logits = uniform(&mut r, &[b, c], -3.0, 3.0);
        let labels: Vec<usize> = (0..b).map(|_| r.random_range(0..c)).collect();
        let (_, probs) = softmax_xent_forward(&logits, &labels).unwrap();
        let g = softmax_xent_backward(&probs, &labels).unwrap();
        let e = max_grad_error(&logits, &g, H, FLOOR, |z| softmax_xent_forward(z, &labels).unwrap().0);
        assert!(e < TOL, "{e}");
    }
}

#[test]
fn network_gradients_match_finite_differences() {
    let mut r = rng(16);
    for seed in 0..5 {
        let net = small_net(3, seed);
        let x = uniform(&mut r, &[2, 1, 12, 12], 0.0, 1.0);
        let labels = vec![r.random_range(0..4), r.random_range(0..4)];
        let (_, grads) = net.loss_and_grads(&x, &labels).unwrap();
        for idx in [0usize, 3, 7, 9] {
            let g = grads[idx].as_ref().unwrap();
            let (w, b) = match &net.layers()[idx] {
                Layer::Conv(p) => (p.weights().clone(), p.biases().clone()),
                Layer::Fc(p) => (p.weights().clone(), p.biases().clone()),
                _ => unreachable!(),
            };
            let rebuild = |w: &Tensor, b: &Tensor| {
                let mut layers = net.layers().to_vec();
                layers[idx] = match &layers[idx] {
                    Layer::Conv(_) => Layer::Conv(ConvLayerParams::new(w.clone(), b.clone()).unwrap()),
                    _ => Layer::Fc(FcLayerParams::new(w.clone(), b.clone()).unwrap()),
                };
                Network::new(net.input_shape(), layers).unwrap().loss_and_grads(&x, &labels).unwrap().0
            };
            // a tiny step, since upstream perturbations move many activations across ReLU and pooling switches
            let ew = max_grad_error(&w, &g.weights, 1e-4, 1e-2, |w| rebuild(w, &b));
            let eb = max_grad_error(&b, &g.biases, 1e-4, 1e-2, |b| rebuild(&w, b));
            assert!(ew.max(eb) < 5e-2, "layer {idx}: w {ew} b {eb}");
        }
    }
}

#[test]
fn sgd_two_steps_follow_the_momentum_recurrence() {
    let p = FcLayerParams::new(Tensor::new(&[1, 2], vec![1.0, -2.0]).unwrap(), Tensor::new(&[1], vec![0.5]).unwrap())
        .unwrap();
    let mut net = Network::new([2, 1, 1], vec![Layer::Flatten, Layer::Fc(p), Layer::SoftmaxXent]).unwrap();
    let grads = |gw: [f32; 2], gb: f32| {
        vec![
            None,
            Some(ParamGrads {
                weights: Tensor::new(&[1, 2], gw.to_vec()).unwrap(),
                biases: Tensor::new(&[1], vec![gb]).unwrap(),
            }),
            None,
        ]
    };
    let cfg = SgdConfig { lr: 0.1, momentum: 0.9, weight_decay: 0.01 };
    let mut sgd = Sgd::new(cfg);
    sgd.step(&mut net, &grads([0.5, 1.0], -1.0)).unwrap();
    sgd.step(&mut net, &grads([0.2, -0.4], 0.3)).unwrap();

    // by hand: v1 = -lr (g1 + wd w0); w1 = w0 + v1; v2 = m v1 - lr (g2 + wd w1); w2 = w1 + v2
    let by_hand = |w0: f32, g1: f32, g2: f32| {
        let v1 = -0.1 * (g1 + 0.01 * w0);
        let w1 = w0 + v1;
        let v2 = 0.9 * v1 - 0.1 * (g2 + 0.01 * w1);
        w1 + v2
    };
    let fc = net.layers()[1].as_fc().unwrap();
    let expected = [by_hand(1.0, 0.5, 0.2), by_hand(-2.0, 1.0, -0.4)];
    for (got, want) in fc.weights().data().iter().zip(expected) {
        assert!((got - want).abs() < 1e-7, "{got} vs {want}");
    }
    assert!((fc.biases().data()[0] - by_hand(0.5, -1.0, 0.3)).abs() < 1e-7);
}

#[test]
fn sgd_rejects_stale_velocity_after_shape_change() {
    let mut net = small_net(3, 1);
    let x = Tensor::zeros(&[1, 1, 12, 12]).unwrap();
    let mut sgd = Sgd::new(SgdConfig::default());
    let (_, g) = net.loss_and_grads(&x, &[0]).unwrap();
    sgd.step(&mut net, &g).unwrap();
    let mut bigger = small_net(6, 1);
    let (_, g) = bigger.loss_and_grads(&x, &[0]).unwrap();
    assert!(sgd.step(&mut bigger, &g).is_err());
    sgd.reset();
    sgd.step(&mut bigger, &g).unwrap();
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conv_matches_nested_loop_oracle(
        b in 1usize..3, d in 1usize..4, n in 1usize..5, k in 1usize..5,
        extra_h in 0usize..6, extra_w in 0usize..6, seed in any::<u64>()
    ) {
        let mut r = rng(seed);
        let x = uniform(&mut r, &[b, d, k + extra_h, k + extra_w], -1.0, 1.0);
        let p = ConvLayerParams::new(uniform(&mut r, &[n, d, k, k], -1.0, 1.0), uniform(&mut r, &[n], -1.0, 1.0)).unwrap();
        let got = conv_forward(&x, &p).unwrap();
        let want = naive_conv(&x, &p);
        let norm = want.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
        let err = got.data().iter().zip(&want).fold(0.0f64, |m, (&g, &w)| m.max((g as f64 - w).abs()));
        prop_assert!(err / norm < 1e-5, "relative error {}", err / norm);
    }

    #[test]
    fn relu_is_idempotent(vals in proptest::collection::vec(-10.0f32..10.0, 1..64)) {
        let x = Tensor::new(&[vals.len()], vals).unwrap();
        let once = relu_forward(&x);
        prop_assert_eq!(relu_forward(&once), once);
    }

    #[test]
    fn softmax_rows_are_distributions(vals in proptest::collection::vec(-50.0f32..50.0, 10)) {
        let logits = Tensor::new(&[2, 5], vals).unwrap();
        let (loss, probs) = softmax_xent_forward(&logits, &[0, 4]).unwrap();
        prop_assert!(loss >= 0.0);
        for row in probs.data().chunks(5) {
            let s: f32 = row.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-5);
        }
    }
}
