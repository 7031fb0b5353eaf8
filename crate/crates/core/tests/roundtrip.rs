use demo_core::config::{ModelKind, OptimizerKind, TransportKind};
use demo_core::harness::model::Activation;
use demo_core::transport::{decode_gathered, deserialize, serialize, PayloadEntry, SyncPayload};
use demo_core::{
    clamp_chunk_shape, extract_fast_components, merge_and_reconstruct, BasisCache, DType, MergeRule, RunConfig, Tensor,
};
use proptest::prelude::*;

fn model_kind() -> impl Strategy<Value = ModelKind> {
    prop_oneof![
        Just(ModelKind::Quadratic),
        Just(ModelKind::Linear),
        Just(ModelKind::Logistic),
        Just(ModelKind::Mlp)
    ]
}

fn optimizer_kind() -> impl Strategy<Value = OptimizerKind> {
    prop_oneof![
        Just(OptimizerKind::Demo),
        Just(OptimizerKind::Sgd),
        Just(OptimizerKind::Signum),
        Just(OptimizerKind::AdamW)
    ]
}

fn transport_kind() -> impl Strategy<Value = TransportKind> {
    prop_oneof![Just(TransportKind::Memory), Just(TransportKind::Tcp), Just(TransportKind::Local)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn config_text_round_trips(
        model in model_kind(),
        opt in optimizer_kind(),
        transport in transport_kind(),
        relu in any::<bool>(),
        hidden in 1usize..512,
        lr in 1e-6f64..1.0,
        beta in proptest::option::of(0.0f64..1.0),
        chunk in 1usize..128,
        k in 1usize..64,
        signum in any::<bool>(),
        world_average in any::<bool>(),
        workers in 1usize..16,
        steps in 0u64..100_000,
        seed in any::<u64>(),
        f64_dtype in any::<bool>(),
        noise in 0.0f64..2.0,
        wall in any::<bool>(),
    ) {
        let mut c = RunConfig::default();
        c.model.kind = model;
        c.model.hidden = hidden;
        c.model.activation = if relu { Activation::Relu } else { Activation::Tanh };
        c.optimizer.kind = opt;
        c.optimizer.lr = lr;
        c.optimizer.beta = beta;
        c.optimizer.chunk = chunk;
        c.optimizer.k = k;
        c.optimizer.signum = signum;
        c.optimizer.merge = if world_average { MergeRule::WorldAverage } else { MergeRule::ContributorAverage };
        c.transport.kind = transport;
        c.data.noise = noise;
        c.run.workers = workers;
        c.run.steps = steps;
        c.run.seed = seed;
        c.run.dtype = if f64_dtype { DType::F64 } else { DType::F32 };
        c.run.record_wall_clock = wall;
        let back = RunConfig::parse(&c.to_text()).unwrap();
        // The text form spells out the defaults that depend on the optimizer.
        let mut want = c.clone();
        want.optimizer.beta = Some(c.optimizer.beta());
        want.optimizer.weight_decay = Some(c.optimizer.weight_decay());
        prop_assert_eq!(&back, &want);
        prop_assert_eq!(back.to_text(), c.to_text());
    }

    #[test]
    fn override_matches_file_value(k in 1usize..64, lr in 1e-5f64..0.5) {
        let mut a = RunConfig::default();
        a.apply_override(&format!("optimizer.k={k}")).unwrap();
        a.apply_override(&format!("optimizer.lr={lr}")).unwrap();
        let b = RunConfig::parse(&format!("[optimizer]\nk = {k}\nlr = {lr}\n")).unwrap();
        prop_assert_eq!(a, b);
    }

    // One worker's components survive the wire and reconstruct to the same
    // tensor the extraction produced locally.
    #[test]
    fn components_survive_the_wire(
        values in proptest::collection::vec(-10.0f32..10.0, 64),
        k in 1usize..16,
        step in any::<u32>(),
    ) {
        let cache = BasisCache::new();
        let m = Tensor::new(vec![8, 8], values).unwrap();
        let g = clamp_chunk_shape(&[8, 8], 4).unwrap();
        let (q, comp) = extract_fast_components(3, &m, &g, k, &cache).unwrap();
        let payload = SyncPayload::new(0, step, vec![PayloadEntry::from_components(&comp)]);
        let frame = serialize(&payload).unwrap();
        prop_assert_eq!(frame.len(), payload.encoded_len());
        prop_assert_eq!(&deserialize(&frame).unwrap(), &payload);

        let (gathered, record) = decode_gathered(0, &payload, &[frame]).unwrap();
        prop_assert_eq!(record.bytes_sent, payload.encoded_len() as u64);
        let back = gathered[0].entries[0].to_components::<f32>(&g).unwrap();
        let q2 = merge_and_reconstruct(&[back], &g, &cache, MergeRule::ContributorAverage).unwrap();
        prop_assert_eq!(q2.data(), q.data());
    }
}

#[test]
fn corrupt_frames_are_rejected() {
    let cache = BasisCache::new();
    let m = Tensor::<f32>::from_fn(vec![16], |i| i as f32).unwrap();
    let g = clamp_chunk_shape(&[16], 8).unwrap();
    let (_, comp) = extract_fast_components(0, &m, &g, 2, &cache).unwrap();
    let payload = SyncPayload::new(0, 1, vec![PayloadEntry::from_components(&comp)]);
    let frame = serialize(&payload).unwrap();
    for cut in [0, 1, 14, frame.len() - 1] {
        assert!(deserialize(&frame[..cut]).is_err(), "truncated at {cut}");
    }
    let mut long = frame.clone();
    long.push(0);
    assert!(deserialize(&long).is_err());

    let other = SyncPayload::new(1, 2, vec![PayloadEntry::from_components(&comp)]);
    let frames = vec![frame, serialize(&other).unwrap()];
    assert!(decode_gathered(0, &payload, &frames).is_err());
}
