use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::*;
use crate::data::{Dataset, SyntheticImages};
use crate::net::{BlockNet, BlockSpec, HeadSpec, NetSpec};
use crate::probe::{train_probe, ProbeConfig};
use crate::{seeded_rng, Error};

fn cfg(tg: f64, te: f64) -> SslConfig {
    SslConfig {
        tau_guide: tg,
        tau_explore: te,
        ..SslConfig::default()
    }
}

/// Direct evaluation of −Σ softmax(g/τg)_i · log softmax(e/τe)_i with naive exps.
fn ssl_oracle(g: &[f64], e: &[f64], tg: f64, te: f64) -> f64 {
    let zg: f64 = g.iter().map(|v| (v / tg).exp()).sum();
    let ze: f64 = e.iter().map(|v| (v / te).exp()).sum();
    -g.iter()
        .zip(e)
        .map(|(gi, ei)| ((gi / tg).exp() / zg) * ((ei / te).exp() / ze).ln())
        .sum::<f64>()
}

fn ce_oracle(logits: &[f64], label: usize) -> f64 {
    let z: f64 = logits.iter().map(|v| v.exp()).sum();
    -(logits[label].exp() / z).ln()
}

fn mse_oracle(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / p.len() as f64
}

fn rand_vec(rng: &mut impl Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

#[test]
fn ssl_loss_examples() {
    let l = ssl_loss(&[0.0, 0.0], &[0.0, 0.0], &cfg(1.0, 1.0)).unwrap();
    assert!((l - core::f64::consts::LN_2).abs() < 1e-12);
    let l = ssl_loss(&[10.0, -10.0], &[10.0, -10.0], &cfg(1.0, 1.0)).unwrap();
    assert!(l < 1e-6);
    let mut rng = seeded_rng(0);
    for _ in 0..50 {
        let g = rand_vec(&mut rng, 8, 3.0);
        let e = rand_vec(&mut rng, 8, 3.0);
        let l = ssl_loss(&g, &e, &cfg(0.5, 0.8)).unwrap();
        assert!((l - ssl_oracle(&g, &e, 0.5, 0.8)).abs() < 1e-10);
    }
}

#[test]
fn ssl_loss_errors() {
    assert_eq!(ssl_loss(&[], &[], &cfg(1.0, 1.0)), Err(Error::Empty("ssl logits")));
    assert!(ssl_loss(&[0.0], &[0.0, 1.0], &cfg(1.0, 1.0)).is_err());
    assert!(ssl_loss(&[0.0], &[0.0], &cfg(0.0, 1.0)).is_err());
}

#[test]
fn ssl_loss_is_entropy_when_distributions_coincide() {
    let mut rng = seeded_rng(1);
    for _ in 0..50 {
        let e = rand_vec(&mut rng, 6, 2.0);
        // g/τg == e/τe makes the two softmax distributions equal
        let g: Vec<f64> = e.iter().map(|v| v * 0.3 / 0.7).collect();
        let l = ssl_loss(&g, &e, &cfg(0.3, 0.7)).unwrap();
        let p = crate::math::softmax(&e, 0.7);
        let h = -p.iter().map(|v| v * v.ln()).sum::<f64>();
        assert!(l >= 0.0);
        assert!((l - h).abs() < 1e-10);
    }
}

#[test]
fn distill_loss_examples() {
    let p = [0.3, -1.2, 0.8];
    let near_delta = [30.0, -30.0];
    assert!(distill_loss(&p, &p, &near_delta, 0, 1.0).unwrap() < 1e-12);
    let out = [0.2, 0.5, -0.4];
    let q = [1.0, 0.0, 0.0];
    assert_eq!(distill_loss(&p, &q, &out, 1, 0.0).unwrap(), cross_entropy(&out, 1).unwrap());
    let mut rng = seeded_rng(2);
    for _ in 0..50 {
        let p = rand_vec(&mut rng, 5, 2.0);
        let q = rand_vec(&mut rng, 5, 2.0);
        let o = rand_vec(&mut rng, 4, 2.0);
        let a = rng.random_range(0.0..3.0);
        let want = a * mse_oracle(&p, &q) + ce_oracle(&o, 2);
        assert!((distill_loss(&p, &q, &o, 2, a).unwrap() - want).abs() < 1e-10);
    }
    assert!(distill_loss(&[1.0, 2.0], &[1.0], &[0.0, 0.0], 0, 1.0).is_err());
}

#[test]
fn joint_loss_examples() {
    let f = [0.5, -0.5];
    let out = [0.1, 0.9, -0.2];
    let terms = JointTerms {
        part_feat: &f,
        full_feat: &[1.0, 2.0],
        teacher_feat: &[0.0, 0.0],
        part_out: &out,
        full_out: &[0.3, 0.3, 0.4],
        label: 2,
    };
    let both_ce = cross_entropy(&out, 2).unwrap() + cross_entropy(&[0.3, 0.3, 0.4], 2).unwrap();
    assert!((joint_loss(terms, 0.0, 0.0).unwrap() - both_ce).abs() < 1e-15);

    let right = [40.0, -40.0];
    let same = JointTerms {
        part_feat: &f,
        full_feat: &f,
        teacher_feat: &f,
        part_out: &right,
        full_out: &right,
        label: 0,
    };
    assert!(joint_loss(same, 1.0, 1.0).unwrap() < 1e-12);

    let mut rng = seeded_rng(3);
    for _ in 0..50 {
        let (pp, pf, q) = (rand_vec(&mut rng, 4, 1.0), rand_vec(&mut rng, 4, 1.0), rand_vec(&mut rng, 4, 1.0));
        let (po, fo) = (rand_vec(&mut rng, 3, 2.0), rand_vec(&mut rng, 3, 2.0));
        let (a, b) = (rng.random_range(0.0..2.0), rng.random_range(0.0..2.0));
        let want = a * mse_oracle(&pf, &q) + b * mse_oracle(&pp, &q) + ce_oracle(&fo, 1) + ce_oracle(&po, 1);
        let t = JointTerms {
            part_feat: &pp,
            full_feat: &pf,
            teacher_feat: &q,
            part_out: &po,
            full_out: &fo,
            label: 1,
        };
        assert!((joint_loss(t, a, b).unwrap() - want).abs() < 1e-10);
    }
}

#[test]
fn loss_weights_must_be_non_negative() {
    assert!(distill_loss(&[1.0], &[1.0], &[0.0, 0.0], 0, -1.0).is_err());
}

#[test]
fn gradient_norm_limit_must_be_positive() {
    for bad in [0.0, -1.0, f64::INFINITY, f64::NAN] {
        let cfg = DistillConfig { max_grad_norm: Some(bad), ..DistillConfig::default() };
        assert!(cfg.validate().is_err());
    }
    assert!(DistillConfig { max_grad_norm: Some(2.0), ..DistillConfig::default() }.validate().is_ok());
}

fn tiny_net(seed: u64) -> BlockNet {
    let spec = NetSpec {
        input_shape: vec![3],
        blocks: vec![BlockSpec::Dense { inputs: 3, outputs: 2 }],
        head: Some(HeadSpec::new(2)),
    };
    BlockNet::seeded_init(&spec, seed).unwrap()
}

#[test]
fn ema_examples() {
    let mut zero = tiny_net(0);
    zero.params_mut().into_iter().for_each(|p| p.data_mut().fill(0.0));
    let mut one = tiny_net(0);
    one.params_mut().into_iter().for_each(|p| p.data_mut().fill(1.0));
    let mut pair = TeacherPair::from_parts(zero.clone(), one.clone()).unwrap();
    pair.ema_update(0.996).unwrap();
    assert!(pair.guide.params().iter().all(|p| p.data().iter().all(|&v| (v - 0.004).abs() < 1e-15)));
    assert_eq!(pair.explore, one);

    let mut pair = TeacherPair::from_parts(tiny_net(1), tiny_net(2)).unwrap();
    pair.ema_update(0.0).unwrap();
    assert_eq!(pair.guide, pair.explore);
    assert!(pair.ema_update(1.0).is_err());
}

#[test]
fn ema_converges_geometrically() {
    let (g0, e) = (tiny_net(3), tiny_net(4));
    let mut pair = TeacherPair::from_parts(g0.clone(), e.clone()).unwrap();
    let m: f64 = 0.9;
    let k = 25;
    for _ in 0..k {
        pair.ema_update(m).unwrap();
    }
    for ((g, g0), e) in pair.guide.params().iter().zip(g0.params()).zip(e.params()) {
        for ((gv, g0v), ev) in g.data().iter().zip(g0.data()).zip(e.data()) {
            let want = m.powi(k) * (g0v - ev);
            assert!(((gv - ev) - want).abs() < 1e-12);
        }
    }
}

#[test]
fn ema_is_linear_in_parameters() {
    let c = 2.5;
    let (g, e) = (tiny_net(5), tiny_net(6));
    let scale = |n: &BlockNet| {
        let mut n = n.clone();
        n.params_mut().into_iter().for_each(|p| p.scale(c));
        n
    };
    let mut base = TeacherPair::from_parts(g.clone(), e.clone()).unwrap();
    let mut scaled = TeacherPair::from_parts(scale(&g), scale(&e)).unwrap();
    base.ema_update(0.7).unwrap();
    scaled.ema_update(0.7).unwrap();
    for (a, b) in base.guide.params().iter().zip(scaled.guide.params()) {
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x * c - y).abs() < 1e-12);
        }
    }
}

#[test]
fn ema_rejects_architecture_mismatch() {
    let spec = NetSpec {
        input_shape: vec![3],
        blocks: vec![BlockSpec::Dense { inputs: 3, outputs: 4 }],
        head: Some(HeadSpec::new(2)),
    };
    let other = BlockNet::seeded_init(&spec, 0).unwrap();
    assert!(TeacherPair::from_parts(tiny_net(0), other).is_err());
}

fn conv_arch(side: usize, head: usize) -> NetSpec {
    NetSpec {
        input_shape: vec![1, side, side],
        blocks: vec![
            BlockSpec::Conv2d { in_ch: 1, out_ch: 4, kernel: 3, stride: 1, padding: 0 },
            BlockSpec::Relu,
            BlockSpec::Conv2d { in_ch: 4, out_ch: 6, kernel: 3, stride: 1, padding: 0 },
            BlockSpec::Relu,
            BlockSpec::GlobalAvgPool,
        ],
        head: Some(HeadSpec::new(head)),
    }
}

#[test]
fn zero_epochs_returns_seeded_initialization() {
    let data = SyntheticImages::public(8).generate(8, 0).unwrap();
    let ssl = SslConfig {
        epochs: 0,
        ..SslConfig::default()
    };
    let teacher = train_teacher(&data, &conv_arch(8, 5), &ssl, 3).unwrap();
    assert_eq!(teacher, BlockNet::seeded_init(&conv_arch(8, 5), 3).unwrap());
}

#[test]
fn teacher_training_is_deterministic_and_rejects_empty_data() {
    let data = SyntheticImages::public(8).generate(24, 0).unwrap();
    let ssl = SslConfig {
        epochs: 2,
        ..SslConfig::default()
    };
    let a = train_teacher(&data, &conv_arch(8, 5), &ssl, 3).unwrap();
    let b = train_teacher(&data, &conv_arch(8, 5), &ssl, 3).unwrap();
    assert_eq!(a.checksum(), b.checksum());
    let empty = Dataset::new(vec![], vec![], 2).unwrap();
    assert_eq!(train_teacher(&empty, &conv_arch(8, 5), &ssl, 3), Err(Error::Empty("ssl dataset")));
}

#[test]
fn teacher_training_reports_divergence() {
    let data = SyntheticImages::public(8).generate(16, 0).unwrap();
    let ssl = SslConfig {
        epochs: 3,
        lr: 1e200,
        ..SslConfig::default()
    };
    assert!(matches!(
        train_teacher(&data, &conv_arch(8, 5), &ssl, 0),
        Err(Error::NonFiniteLoss { stage: "ssl", .. })
    ));
}

/// Two well separated blobs of 2-channel "images".
fn two_blobs(n: usize, seed: u64) -> Dataset {
    let mut rng = seeded_rng(seed);
    let mut xs = Vec::new();
    let mut ls = Vec::new();
    for i in 0..n {
        let c = (i % 2) as u32;
        let centre = if c == 0 { 0.2 } else { 0.8 };
        let data = (0..2 * 6 * 6)
            .map(|k| {
                let bias = if k < 36 { centre } else { 1.0 - centre };
                bias + rng.random_range(-0.1..0.1)
            })
            .collect();
        xs.push(crate::Tensor::new(vec![2, 6, 6], data).unwrap());
        ls.push(c);
    }
    Dataset::new(xs, ls, 2).unwrap()
}

#[test]
fn teacher_embeddings_separate_two_blobs() {
    let data = two_blobs(200, 4);
    let mut arch = conv_arch(6, 8);
    arch.input_shape = vec![2, 6, 6];
    arch.blocks[0] = BlockSpec::Conv2d { in_ch: 2, out_ch: 4, kernel: 3, stride: 1, padding: 0 };
    let ssl = SslConfig {
        epochs: 3,
        ..SslConfig::default()
    };
    let teacher = train_teacher(&data, &arch, &ssl, 1).unwrap();
    let emb = extract_embeddings(&teacher, &data).unwrap();
    let feats: Vec<Vec<f64>> = emb.records().iter().map(|r| r.embedding.data().to_vec()).collect();
    let (train_f, test_f) = feats.split_at(150);
    let (train_l, test_l) = data.labels().split_at(150);
    let probe = train_probe(train_f, train_l, 2, &ProbeConfig::default(), 0).unwrap();
    assert!(probe.accuracy(test_f, test_l).unwrap() >= 0.9);
}

#[test]
fn extraction_is_order_preserving_and_pure() {
    let teacher = BlockNet::seeded_init(&conv_arch(8, 5), 0).unwrap();
    let one = SyntheticImages::public(8).generate(1, 0).unwrap();
    let emb = extract_embeddings(&teacher, &one).unwrap();
    assert_eq!((emb.len(), emb.width()), (1, 6));
    let x = one.input(0).clone();
    let twice = Dataset::new(vec![x.clone(), x], vec![0, 0], 8).unwrap();
    let emb = extract_embeddings(&teacher, &twice).unwrap();
    assert_eq!(emb.records()[0].embedding, emb.records()[1].embedding);
    let many = SyntheticImages::public(8).generate(1000, 1).unwrap();
    let emb = extract_embeddings(&teacher, &many).unwrap();
    assert_eq!(emb.len(), 1000);
    assert!(emb.records().iter().enumerate().all(|(i, r)| r.id as usize == i && r.label == many.label(i)));
}

fn student_arch(side: usize) -> NetSpec {
    NetSpec {
        input_shape: vec![1, side, side],
        blocks: vec![
            BlockSpec::Conv2d { in_ch: 1, out_ch: 3, kernel: 3, stride: 1, padding: 0 },
            BlockSpec::Relu,
            BlockSpec::GlobalAvgPool,
        ],
        head: None,
    }
}

#[test]
fn distillation_with_zero_epochs_keeps_the_student() {
    let data = SyntheticImages::public(8).generate(10, 0).unwrap();
    let teacher = BlockNet::seeded_init(&conv_arch(8, 5), 0).unwrap();
    let emb = extract_embeddings(&teacher, &data).unwrap();
    let student = BlockNet::seeded_init(&student_arch(8), 1).unwrap();
    let dc = DistillConfig {
        epochs: 0,
        ..DistillConfig::default()
    };
    assert_eq!(run_distillation(&student, &emb, &data, &dc, 0).unwrap(), student);
}

#[test]
fn distillation_is_deterministic_and_drops_the_matching_layer() {
    let data = SyntheticImages::public(8).generate(32, 0).unwrap();
    let teacher = BlockNet::seeded_init(&conv_arch(8, 5), 0).unwrap();
    let emb = extract_embeddings(&teacher, &data).unwrap();
    let student = BlockNet::seeded_init(&student_arch(8), 1).unwrap();
    let dc = DistillConfig {
        epochs: 2,
        ..DistillConfig::default()
    };
    let a = run_distillation(&student, &emb, &data, &dc, 7).unwrap();
    let b = run_distillation(&student, &emb, &data, &dc, 7).unwrap();
    assert_eq!(a.checksum(), b.checksum());
    assert_ne!(a.checksum(), student.checksum());
    assert!(a.same_architecture(&student));
    assert_eq!(a.feature_dim(), 3);
}

#[test]
fn joint_training_keeps_architecture() {
    let data = SyntheticImages::public(8).generate(32, 0).unwrap();
    let teacher = BlockNet::seeded_init(&conv_arch(8, 5), 0).unwrap();
    let emb = extract_embeddings(&teacher, &data).unwrap();
    let student = BlockNet::seeded_init(&student_arch(8), 1).unwrap();
    let dc = DistillConfig {
        epochs: 1,
        ..DistillConfig::default()
    };
    let tuned = joint_train(&student, 2, &emb, &data, &dc, 0).unwrap();
    assert!(tuned.same_architecture(&student));
    assert_ne!(tuned.checksum(), student.checksum());
}

#[test]
fn distillation_rejects_misaligned_embeddings() {
    let data = SyntheticImages::public(8).generate(10, 0).unwrap();
    let teacher = BlockNet::seeded_init(&conv_arch(8, 5), 0).unwrap();
    let emb = extract_embeddings(&teacher, &data.subset(&[0, 1, 2])).unwrap();
    let student = BlockNet::seeded_init(&student_arch(8), 1).unwrap();
    assert!(run_distillation(&student, &emb, &data, &DistillConfig::default(), 0).is_err());
}
