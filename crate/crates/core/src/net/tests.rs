use super::*;
use crate::seeded_rng;
use rand::Rng;

fn t(shape: &[usize], data: &[f64]) -> Tensor {
    Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
}

fn random_tensor(rng: &mut impl Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

#[test]
fn dense_identity_passes_input_through() {
    let d = Dense::new(t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]), Tensor::zeros(&[2])).unwrap();
    let net = BlockNet::new(vec![2], vec![Block::Dense(d)], None).unwrap();
    assert_eq!(net.predict(&t(&[2], &[1.0, 2.0])).unwrap().data(), &[1.0, 2.0]);
}

#[test]
fn relu_clamps_negatives() {
    let net = BlockNet::new(vec![2], vec![Block::Relu], None).unwrap();
    assert_eq!(net.predict(&t(&[2], &[-1.0, 3.0])).unwrap().data(), &[0.0, 3.0]);
}

#[test]
fn softmax_of_zeros_is_uniform() {
    let net = BlockNet::new(vec![2], vec![Block::Softmax { temperature: 1.0 }], None).unwrap();
    assert_eq!(net.predict(&t(&[2], &[0.0, 0.0])).unwrap().data(), &[0.5, 0.5]);
}

#[test]
fn forward_rejects_wrong_input_shape() {
    let net = BlockNet::new(vec![3], vec![Block::Relu], None).unwrap();
    assert!(matches!(net.forward(&t(&[2], &[1.0, 2.0])), Err(Error::Shape { .. })));
}

#[test]
fn construction_rejects_incompatible_blocks() {
    let d1 = Dense::zeros(4, 3);
    let d2 = Dense::zeros(2, 1);
    assert!(BlockNet::new(vec![4], vec![Block::Dense(d1), Block::Dense(d2)], None).is_err());
    let head = Head {
        dense: Dense::zeros(5, 2),
        temperature: 1.0,
    };
    assert!(BlockNet::new(vec![4], vec![], Some(head)).is_err());
    assert!(BlockNet::new(vec![2], vec![Block::Softmax { temperature: 0.0 }], None).is_err());
}

#[test]
fn scalar_weight_gradient_is_input() {
    // loss = w·x with x = 2
    let d = Dense::new(t(&[1, 1], &[0.7]), Tensor::zeros(&[1])).unwrap();
    let net = BlockNet::new(vec![1], vec![Block::Dense(d)], None).unwrap();
    let acts = net.forward(&t(&[1], &[2.0])).unwrap();
    let tape = net.backward(&t(&[1], &[1.0]), &acts).unwrap();
    assert_eq!(tape.grads[0].data(), &[2.0]);
    assert_eq!(tape.grads[1].data(), &[1.0]);
    assert_eq!(tape.input_grad.data(), &[0.7]);
}

#[test]
fn zero_loss_gradient_gives_zero_tape() {
    let net = small_conv_net(3);
    let mut rng = seeded_rng(1);
    let acts = net.forward(&random_tensor(&mut rng, &[1, 6, 6])).unwrap();
    let tape = net.backward(&Tensor::zeros(&[3]), &acts).unwrap();
    assert!(tape.grads.iter().all(|g| g.data().iter().all(|&v| v == 0.0)));
}

#[test]
fn stale_activations_are_rejected() {
    let mut net = small_conv_net(3);
    let mut rng = seeded_rng(2);
    let acts = net.forward(&random_tensor(&mut rng, &[1, 6, 6])).unwrap();
    let tape = net.backward(&t(&[3], &[1.0, 0.0, 0.0]), &acts).unwrap();
    net.sgd_step(&tape, 0.1).unwrap();
    assert_eq!(net.backward(&t(&[3], &[1.0, 0.0, 0.0]), &acts), Err(Error::StaleActivations));
    let other = small_conv_net(4);
    assert_eq!(other.backward(&t(&[3], &[1.0, 0.0, 0.0]), &acts), Err(Error::StaleActivations));
}

fn small_conv_net(seed: u64) -> BlockNet {
    let spec = NetSpec {
        input_shape: vec![1, 6, 6],
        blocks: vec![
            BlockSpec::Conv2d { in_ch: 1, out_ch: 2, kernel: 3, stride: 1, padding: 0 },
            BlockSpec::Relu,
            BlockSpec::Conv2d { in_ch: 2, out_ch: 3, kernel: 2, stride: 2, padding: 1 },
            BlockSpec::GlobalAvgPool,
        ],
        head: Some(HeadSpec::new(3)),
    };
    BlockNet::seeded_init(&spec, seed).unwrap()
}

/// ∂L/∂θ by central differences for `L = Σ c_k · output_k`.
fn numeric_grads(net: &BlockNet, x: &Tensor, c: &Tensor, h: f64) -> Vec<Vec<f64>> {
    let loss = |n: &BlockNet| -> f64 {
        let y = n.predict(x).unwrap();
        y.data().iter().zip(c.data()).map(|(a, b)| a * b).sum()
    };
    let mut out = Vec::new();
    let count = net.params().len();
    for p in 0..count {
        let len = net.params()[p].len();
        let mut g = Vec::with_capacity(len);
        for i in 0..len {
            let mut plus = net.clone();
            plus.params_mut()[p].data_mut()[i] += h;
            let mut minus = net.clone();
            minus.params_mut()[p].data_mut()[i] -= h;
            g.push((loss(&plus) - loss(&minus)) / (2.0 * h));
        }
        out.push(g);
    }
    out
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-12)
}

fn check_net_grads(net: &BlockNet, rng: &mut impl Rng) {
    let x = random_tensor(rng, net.input_shape());
    let acts = net.forward(&x).unwrap();
    let c = random_tensor(rng, acts.output().shape());
    let tape = net.backward(&c, &acts).unwrap();
    let numeric = numeric_grads(net, &x, &c, 1e-4);
    for (a, n) in tape.grads.iter().zip(&numeric) {
        let e = rel_err(a.data(), n);
        assert!(e < 1e-4, "relative error {e}");
    }
}

#[test]
fn finite_difference_gradients_for_every_block_kind() {
    let mut rng = seeded_rng(7);
    for seed in 0..10 {
        // three-layer dense net with softmax block and a head
        let spec = NetSpec {
            input_shape: vec![4],
            blocks: vec![
                BlockSpec::Dense { inputs: 4, outputs: 5 },
                BlockSpec::Relu,
                BlockSpec::Dense { inputs: 5, outputs: 3 },
                BlockSpec::Softmax { temperature: 0.7 },
                BlockSpec::Dense { inputs: 3, outputs: 4 },
            ],
            head: Some(HeadSpec { classes: 3, temperature: 1.3, init: Init::FanUniform }),
        };
        check_net_grads(&BlockNet::seeded_init(&spec, seed).unwrap(), &mut rng);
        check_net_grads(&small_conv_net(seed), &mut rng);
    }
}

#[test]
fn sgd_examples() {
    let d = Dense::new(t(&[1, 1], &[1.0]), Tensor::zeros(&[1])).unwrap();
    let mut net = BlockNet::new(vec![1], vec![Block::Dense(d)], None).unwrap();
    let tape = GradientTape {
        grads: vec![t(&[1, 1], &[0.5]), t(&[1], &[0.0])],
        input_grad: Tensor::zeros(&[1]),
    };
    net.sgd_step(&tape, 0.1).unwrap();
    assert!((net.params()[0].data()[0] - 0.95).abs() < 1e-15);
    assert_eq!(net.params()[1].data()[0], 0.0);
    let before = net.clone();
    net.sgd_step(&tape, 0.0).unwrap();
    assert_eq!(net, before);
}

#[test]
fn sgd_refuses_non_finite_gradients() {
    let mut net = small_conv_net(0);
    let mut tape = GradientTape::zeros_like(&net);
    tape.grads[2].data_mut()[0] = f64::INFINITY;
    let before = net.clone();
    assert_eq!(net.sgd_step(&tape, 0.1), Err(Error::NonFiniteGradient { param: 2 }));
    assert_eq!(net, before);
}

#[test]
fn mac_examples() {
    let net = BlockNet::new(vec![4], vec![Block::Dense(Dense::zeros(4, 3))], None).unwrap();
    assert_eq!(net.mac_count(&[4]).unwrap(), 12);
    let spec = NetSpec {
        input_shape: vec![1, 5, 5],
        blocks: vec![BlockSpec::Conv2d { in_ch: 1, out_ch: 2, kernel: 3, stride: 1, padding: 0 }],
        head: None,
    };
    let conv = BlockNet::seeded_init(&spec, 0).unwrap();
    assert_eq!(conv.mac_count(&[1, 5, 5]).unwrap(), 162);
}

#[test]
fn prefix_macs_never_exceed_full() {
    let net = small_conv_net(0);
    let full = net.macs();
    for i in 0..=net.blocks().len() {
        let (part, rest) = net.split_at(i).unwrap();
        assert!(part.macs() <= full);
        assert_eq!(part.macs() + rest.macs(), full);
    }
}

#[test]
fn seeded_init_is_deterministic_and_seed_sensitive() {
    assert_eq!(small_conv_net(5).checksum(), small_conv_net(5).checksum());
    assert_ne!(small_conv_net(5).checksum(), small_conv_net(6).checksum());
}

#[test]
fn seeded_init_is_centred() {
    let spec = NetSpec {
        input_shape: vec![100],
        blocks: vec![BlockSpec::Dense { inputs: 100, outputs: 100 }],
        head: None,
    };
    let net = BlockNet::seeded_init(&spec, 11).unwrap();
    let w = net.params()[0].data();
    assert_eq!(w.len(), 10_000);
    let mean = w.iter().sum::<f64>() / w.len() as f64;
    assert!(mean.abs() < 0.05);
    let bound = (6.0f64 / 200.0).sqrt();
    assert!(w.iter().all(|v| v.abs() <= bound));
}

#[test]
fn split_then_concat_reproduces_the_network() {
    let net = small_conv_net(9);
    let mut rng = seeded_rng(3);
    for i in 0..=net.blocks().len() {
        let (part, rest) = net.split_at(i).unwrap();
        assert_eq!(BlockNet::concat(&part, &rest).unwrap(), net);
        let x = random_tensor(&mut rng, &[1, 6, 6]);
        let direct = net.predict(&x).unwrap();
        let staged = rest.predict(&part.predict(&x).unwrap()).unwrap();
        assert_eq!(direct, staged);
    }
    assert!(matches!(net.split_at(99), Err(Error::IndexOutOfRange { .. })));
}

#[test]
fn repeated_calls_agree_bit_exactly() {
    let net = small_conv_net(1);
    let mut rng = seeded_rng(4);
    let x = random_tensor(&mut rng, &[1, 6, 6]);
    let a = net.forward(&x).unwrap();
    let b = net.forward(&x).unwrap();
    assert_eq!(a.output(), b.output());
    let g = t(&[3], &[0.3, -0.2, 0.5]);
    assert_eq!(net.backward(&g, &a).unwrap(), net.backward(&g, &b).unwrap());
}

#[test]
fn same_padding_keeps_spatial_extent() {
    let spec = NetSpec {
        input_shape: vec![2, 7, 7],
        blocks: vec![BlockSpec::Conv2d { in_ch: 2, out_ch: 4, kernel: 3, stride: 1, padding: 1 }],
        head: None,
    };
    let net = BlockNet::seeded_init(&spec, 0).unwrap();
    assert_eq!(net.feature_shape().unwrap(), vec![4, 7, 7]);
}

proptest::proptest! {
    #[test]
    fn head_output_is_a_simplex(seed in 0u64..500, scale in 0.1f64..20.0) {
        let net = small_conv_net(seed);
        let mut rng = seeded_rng(seed);
        let mut x = random_tensor(&mut rng, &[1, 6, 6]);
        x.scale(scale);
        let y = net.predict(&x).unwrap();
        proptest::prop_assert!(y.data().iter().all(|&p| p >= 0.0));
        proptest::prop_assert!((y.data().iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn clipping_scales_tapes_jointly() {
    let net = small_conv_net(1);
    let mut a = GradientTape::zeros_like(&net);
    let mut b = GradientTape::zeros_like(&net);
    a.grads[0].data_mut()[0] = 3.0;
    b.grads[0].data_mut()[0] = 4.0;
    assert_eq!(clip_global_norm(&mut [&mut a, &mut b], 10.0), 5.0);
    assert_eq!(a.grads[0].data()[0], 3.0);
    assert_eq!(clip_global_norm(&mut [&mut a, &mut b], 1.0), 5.0);
    assert!((a.grads[0].data()[0] - 0.6).abs() < 1e-12);
    assert!((b.grads[0].data()[0] - 0.8).abs() < 1e-12);
}
