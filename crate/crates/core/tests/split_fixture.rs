//! Split search on a distilled student: the chosen depth is a property of
//! the architecture, not of the input resolution.

use microt_core::data::{split_indices, Dataset, SyntheticImages};
use microt_core::distill::{extract_embeddings, run_distillation, train_teacher, DistillConfig, SslConfig};
use microt_core::probe::{train_probe, ProbeConfig};
use microt_core::split::{default_range, evaluate_candidates, find_optimal_split, ProbeData};
use microt_core::{BlockNet, BlockSpec, Extractor, HeadSpec, NetSpec};

fn conv(in_ch: usize, out_ch: usize, stride: usize) -> BlockSpec {
    BlockSpec::Conv2d { in_ch, out_ch, kernel: 3, stride, padding: 1 }
}

fn blocks(out: usize) -> Vec<BlockSpec> {
    vec![conv(1, 8, 1), BlockSpec::Relu, conv(8, 16, 2), BlockSpec::Relu, conv(16, out, 2), BlockSpec::Relu, BlockSpec::GlobalAvgPool]
}

struct Setup {
    student: BlockNet,
    train: Dataset,
    test: Dataset,
}

fn distilled_student(side: usize) -> Setup {
    let public = SyntheticImages::public(side).generate(400, 1).unwrap();
    let local = SyntheticImages::local(side).generate(1500, 2).unwrap();
    let s = split_indices(local.len(), [2, 1, 0], 3).unwrap();
    let teacher_spec = NetSpec { input_shape: vec![1, side, side], blocks: blocks(32), head: Some(HeadSpec::new(32)) };
    let ssl = SslConfig { epochs: 3, ..SslConfig::default() };
    let teacher = train_teacher(&public, &teacher_spec, &ssl, 4).unwrap();
    let emb = extract_embeddings(&teacher, &public).unwrap();
    let student_spec = NetSpec { input_shape: vec![1, side, side], blocks: blocks(64), head: None };
    let init = BlockNet::seeded_init(&student_spec, 5).unwrap();
    let cfg = DistillConfig { epochs: 10, lr: 0.2, ..DistillConfig::default() };
    Setup {
        student: run_distillation(&init, &emb, &public, &cfg, 6).unwrap(),
        train: local.subset(&s.train),
        test: local.subset(&s.test),
    }
}

#[test]
fn chosen_index_is_stable_across_resolutions() {
    let mut chosen = Vec::new();
    for side in [12, 16] {
        let st = distilled_student(side);
        let n = st.student.blocks().len();
        let report = find_optimal_split(
            &st.student,
            ProbeData { train: &st.train, test: &st.test },
            default_range(n),
            &ProbeConfig::default(),
            7,
        )
        .unwrap();
        chosen.push(report.optimal_index);

        // The last candidate is the full extractor itself: its accuracy
        // matches a separately trained probe on direct features. Probes are
        // convex, so slow, long training makes them agree up to sample order.
        let long = ProbeConfig { epochs: 100, lr: 0.02, ..ProbeConfig::default() };
        let (profile, (acc_full, _)) = evaluate_candidates(
            &st.student,
            ProbeData { train: &st.train, test: &st.test },
            (n - 1, n),
            &long,
            7,
        )
        .unwrap();
        assert_eq!(profile.last().unwrap().1, acc_full);
        let feats = |d: &Dataset| -> Vec<Vec<f64>> {
            d.inputs().iter().map(|x| st.student.extract(x).unwrap().data().to_vec()).collect()
        };
        let probe = train_probe(&feats(&st.train), st.train.labels(), 4, &long, 99).unwrap();
        let direct = probe.accuracy(&feats(&st.test), st.test.labels()).unwrap();
        assert!((direct - acc_full).abs() <= 0.01, "side {side}: direct {direct} vs candidate {acc_full}");
    }
    assert_eq!(chosen[0], chosen[1], "chosen indices per resolution: {chosen:?}");
}
