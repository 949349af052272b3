use dsdr_core::estimate::{fit_global_detailed, KRule};
use dsdr_core::kernel::Method;
use dsdr_core::linalg::symmetric_eigen;
use dsdr_core::metrics::trace_correlation;
use dsdr_core::simgen::{partition, simulate, PartitionScheme, PredictorMode, DEFAULT_PROPORTIONS};
use dsdr_core::slicing::{make_slice_grid, slice_statistics};
use dsdr_core::Dataset;
use dsdr_protocol::ledger::{eigen_scalars, round1_scalars, round2_scalars};
use dsdr_protocol::ops::{aggregate_kernels, local_kernel, total_counts, total_slice_sum};
use dsdr_protocol::wire::{decode, encode};
use dsdr_protocol::*;
use ndarray::{Array1, Array2};
use proptest::prelude::*;

fn frob(m: &Array2<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn model1(n: usize, p: usize, seed: u64) -> Dataset<f64> {
    simulate(1, PredictorMode::StandardNormal, n, p, 0.5, seed).unwrap()
}

fn exact_by_hand(shards: &[Dataset<f64>], h: usize, k: usize) -> ops::ExactFit {
    let r1: Vec<_> = shards
        .iter()
        .enumerate()
        .map(|(i, s)| edsir_worker_round1(i as u32, s))
        .collect();
    let b = edsir_master_round1(&r1, h).unwrap();
    let r2: Vec<_> = shards
        .iter()
        .enumerate()
        .map(|(i, s)| edsir_worker_round2(i as u32, s, &b).unwrap())
        .collect();
    assert_eq!(total_counts(&r2), shards.iter().map(|s| s.n() as u64).sum::<u64>());
    assert!(total_slice_sum(&r2).iter().all(|v| v.abs() < 1e-9));
    edsir_finalize(&r2, KRule::Fixed(k)).unwrap()
}

#[test]
fn single_worker_reproduces_global_fit_bitwise() {
    let d = model1(300, 6, 1);
    let fit = exact_by_hand(std::slice::from_ref(&d), 10, 2);
    let g = fit_global_detailed(&d, Method::Sir, 10, KRule::Fixed(2)).unwrap();
    assert_eq!(fit.kernel, g.kernel.v);
    assert_eq!(fit.sigma, g.sigma);
    assert_eq!(fit.estimate.beta, g.estimate.beta);
    assert_eq!(fit.estimate.eigenvalues, g.estimate.eigenvalues);
}

#[test]
fn exact_matches_pooled_fit_on_every_scheme() {
    let d = model1(1000, 10, 2);
    let g = fit_global_detailed(&d, Method::Sir, 10, KRule::Fixed(1)).unwrap();
    for scheme in [
        PartitionScheme::HomogeneousEqual(5),
        PartitionScheme::HeterogeneousEqual(5),
        PartitionScheme::HeterogeneousUnequal(DEFAULT_PROPORTIONS.to_vec()),
    ] {
        let shards = partition(&d, &scheme, 2).unwrap();
        let fit = exact_by_hand(&shards, 10, 1);
        let tc = trace_correlation(g.estimate.beta.view(), fit.estimate.beta.view()).unwrap();
        assert!(1.0 - tc <= 1e-10, "{scheme:?}: {tc}");
        assert!(frob(&(&fit.kernel - &g.kernel.v)) <= 1e-12 * frob(&g.kernel.v));
        assert!(frob(&(&fit.sigma - &g.sigma)) <= 1e-12 * frob(&g.sigma));
    }
}

#[test]
fn finalize_and_master_are_order_independent() {
    let d = model1(400, 5, 3);
    let shards = partition(&d, &PartitionScheme::HeterogeneousEqual(4), 3).unwrap();
    let r1: Vec<_> = shards
        .iter()
        .enumerate()
        .map(|(i, s)| edsir_worker_round1(i as u32, s))
        .collect();
    let mut r1_rev = r1.clone();
    r1_rev.reverse();
    let b = edsir_master_round1(&r1, 8).unwrap();
    assert_eq!(b, edsir_master_round1(&r1_rev, 8).unwrap());
    let r2: Vec<_> = shards
        .iter()
        .enumerate()
        .map(|(i, s)| edsir_worker_round2(i as u32, s, &b).unwrap())
        .collect();
    let mut r2_rot = r2.clone();
    r2_rot.rotate_left(1);
    let a = edsir_finalize(&r2, KRule::Fixed(2)).unwrap();
    let c = edsir_finalize(&r2_rot, KRule::Fixed(2)).unwrap();
    assert_eq!(a.estimate.beta, c.estimate.beta);
    assert_eq!(a.kernel, c.kernel);

    let pl: Vec<_> = shards
        .iter()
        .enumerate()
        .map(|(i, s)| approx_local(i as u32, s, Method::Sir, 8, KRule::Fixed(2), Standardization::Local).unwrap())
        .collect();
    let mut pl_rev = pl.clone();
    pl_rev.reverse();
    let x = approx_master(&pl, KRule::Fixed(1), Aggregation::SpectrumWeighted).unwrap();
    let y = approx_master(&pl_rev, KRule::Fixed(1), Aggregation::SpectrumWeighted).unwrap();
    assert_eq!(x.estimate.beta, y.estimate.beta);
    let mut dup = pl.clone();
    dup[1].worker_id = dup[0].worker_id;
    assert!(matches!(
        approx_master(&dup, KRule::Fixed(1), Aggregation::BasisOnly),
        Err(ProtocolError::DuplicateWorker(0))
    ));
}

#[test]
fn round2_out_of_grid_is_rejected() {
    let d = model1(50, 4, 4);
    let b = Broadcast1 {
        grid: vec![100.0, 101.0, 102.0],
        xbar_global: Array1::zeros(4),
    };
    assert!(matches!(
        edsir_worker_round2(0, &d, &b),
        Err(ProtocolError::Core(dsdr_core::SdrError::OutOfRange { .. }))
    ));
}

#[test]
fn full_rank_payloads_reproduce_pooled_grid_average() {
    let d = model1(600, 5, 5);
    let shards = partition(&d, &PartitionScheme::HeterogeneousUnequal(DEFAULT_PROPORTIONS.to_vec()), 5).unwrap();
    let r1: Vec<_> = shards
        .iter()
        .enumerate()
        .map(|(i, s)| edsir_worker_round1(i as u32, s))
        .collect();
    let b = edsir_master_round1(&r1, 10).unwrap();
    for method in [Method::Sir, Method::Save, Method::Dr] {
        let std = Standardization::FromBroadcast(&b);
        let pl: Vec<_> = shards
            .iter()
            .enumerate()
            .map(|(i, s)| approx_local(i as u32, s, method, 10, KRule::Fixed(5), std).unwrap())
            .collect();
        let v = aggregate_kernels(&pl, Aggregation::SpectrumWeighted).unwrap();
        let mut expect = Array2::<f64>::zeros((5, 5));
        for s in &shards {
            let vs = local_kernel(s, method, 10, std).unwrap();
            expect.scaled_add(s.n() as f64 / 600.0, &vs);
        }
        assert!(frob(&(&v - &expect)) <= 1e-12 * frob(&expect).max(1.0), "{method}");

        // convexity: spectrum bounded by the largest local eigenvalue
        let top = symmetric_eigen(v.view()).unwrap().values[0];
        let bound = pl.iter().map(|m| m.values[0]).fold(f64::NEG_INFINITY, f64::max);
        assert!(top <= bound + 1e-12);
    }
}

#[test]
fn single_full_rank_worker_equals_global_kernel() {
    let d = model1(300, 4, 6);
    let g = fit_global_detailed(&d, Method::Sir, 6, KRule::Fixed(4)).unwrap();
    let r1 = [edsir_worker_round1(0, &d)];
    let b = edsir_master_round1(&r1, 6).unwrap();
    let pl = approx_local(0, &d, Method::Sir, 6, KRule::Fixed(4), Standardization::FromBroadcast(&b)).unwrap();
    let v = aggregate_kernels(&[pl], Aggregation::SpectrumWeighted).unwrap();
    assert!(frob(&(&v - &g.kernel.v)) <= 1e-12 * frob(&g.kernel.v));
    // slice grid built by the master matches the global one
    let (lo, hi) = d.response_range();
    assert_eq!(b.grid, make_slice_grid(lo, hi, 6).unwrap().grid());
    let st = slice_statistics(&d, b.xbar_global.view(), &make_slice_grid(lo, hi, 6).unwrap()).unwrap();
    assert_eq!(st.total(), 300);
}

#[test]
fn basis_only_identical_workers_keep_their_projector() {
    let d = model1(200, 4, 7);
    let pl = approx_local(0, &d, Method::Sir, 5, KRule::Fixed(2), Standardization::Local).unwrap();
    let mut other = pl.clone();
    other.worker_id = 1;
    let one = aggregate_kernels(std::slice::from_ref(&pl), Aggregation::BasisOnly).unwrap();
    let two = aggregate_kernels(&[pl, other], Aggregation::BasisOnly).unwrap();
    assert!(frob(&(&one - &two)) < 1e-14);
}

fn check_ledger(run: &ProtocolRun, mode: ProtocolMode, s: u64, p: u64, h: u64, scatter: bool) {
    let l = &run.ledger;
    for r in l.records() {
        if r.kind != MessageType::Error {
            assert_eq!(r.payload_bytes, 8 + 8 * r.scalars);
        }
    }
    let total: u64 = l.records().iter().map(|r| r.frame_bytes).sum();
    assert_eq!(l.bytes_up() + l.bytes_down(), total);
    let ks: Vec<u64> = l
        .records()
        .iter()
        .filter(|r| r.kind == MessageType::Eigen)
        .map(|r| (r.scalars - 3) / (p + 1))
        .collect();
    match mode {
        ProtocolMode::Exact => {
            assert_eq!(l.round_scalars(1, Direction::Up), round1_scalars(s, p));
            assert_eq!(l.round_scalars(2, Direction::Up), round2_scalars(s, p, h));
            assert_eq!(l.round_scalars(1, Direction::Down), s * (h + 1 + p));
        }
        ProtocolMode::ApproxHomogeneous => {
            assert_eq!(l.rounds(), 1);
            assert_eq!(l.scalars(Direction::Up, MessageType::Eigen), eigen_scalars(p, &ks));
            assert_eq!(l.bytes_down(), 0);
        }
        ProtocolMode::ApproxHeterogeneous => {
            assert_eq!(l.scalars(Direction::Up, MessageType::Round1), round1_scalars(s, p));
            assert_eq!(l.scalars(Direction::Up, MessageType::Eigen), eigen_scalars(p, &ks));
            let r2 = if scatter { round2_scalars(s, p, h) } else { 0 };
            assert_eq!(l.scalars(Direction::Up, MessageType::Round2), r2);
        }
    }
}

#[test]
fn ledgers_match_closed_forms() {
    let d = model1(500, 10, 8);
    let shards = partition(&d, &PartitionScheme::HomogeneousEqual(5), 8).unwrap();
    for mode in [ProtocolMode::Exact, ProtocolMode::ApproxHomogeneous, ProtocolMode::ApproxHeterogeneous] {
        for bt in [false, true] {
            let mut cfg = ProtocolConfig::new(mode, Method::Sir, 10, 1);
            cfg.local_k = KRule::VarianceThreshold(0.8);
            cfg.back_transform = bt;
            let run = run_protocol(&shards, &cfg).unwrap();
            check_ledger(&run, mode, 5, 10, 10, bt);
        }
    }
}

#[test]
fn tcp_and_inproc_agree_for_every_mode() {
    let d = simulate::<f64>(6, PredictorMode::StandardNormal, 600, 8, 0.5, 9).unwrap();
    let shards = partition(&d, &PartitionScheme::HeterogeneousEqual(3), 9).unwrap();
    let cases = [
        (ProtocolMode::Exact, Method::Sir),
        (ProtocolMode::ApproxHomogeneous, Method::Save),
        (ProtocolMode::ApproxHeterogeneous, Method::Dr),
    ];
    for (mode, method) in cases {
        let mut cfg = ProtocolConfig::new(mode, method, 8, 2);
        cfg.back_transform = true;
        let a = run_protocol(&shards, &cfg).unwrap();
        cfg.transport = TransportKind::Tcp { port: 0 };
        let b = run_protocol(&shards, &cfg).unwrap();
        assert_eq!(a.estimate, b.estimate);
        assert_eq!(a.ledger.bytes_up(), b.ledger.bytes_up());
        assert_eq!(a.ledger.bytes_down(), b.ledger.bytes_down());
    }
}

#[test]
fn exact_mode_requires_sir_and_worker_errors_surface() {
    let d = model1(100, 4, 10);
    let cfg = ProtocolConfig::new(ProtocolMode::Exact, Method::Save, 5, 1);
    assert_eq!(run_protocol(&[d.clone()], &cfg).unwrap_err(), ProtocolError::ExactRequiresSir);

    // a constant-response shard cannot build its own grid
    let flat = Dataset::new(d.x().to_owned(), Array1::from_elem(100, 1.0)).unwrap();
    for transport in [TransportKind::InProcess, TransportKind::Tcp { port: 0 }] {
        let mut cfg = ProtocolConfig::new(ProtocolMode::ApproxHomogeneous, Method::Sir, 5, 1);
        cfg.transport = transport;
        let expect = match transport {
            TransportKind::InProcess => Some(1),
            TransportKind::Tcp { .. } => None,
        };
        match run_protocol(&[d.clone(), flat.clone()], &cfg) {
            Err(ProtocolError::WorkerFailed { worker_id, code: 1, .. }) => assert_eq!(worker_id, expect),
            other => panic!("{other:?}"),
        }
    }
}

fn arb_vec(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![any::<f64>(), -1e6f64..1e6], len)
}

fn arb_message() -> impl Strategy<Value = Message> {
    let round1 = (1usize..12, any::<u32>(), any::<u64>())
        .prop_flat_map(|(p, id, n)| (Just(id), Just(n), arb_vec(p + 2)))
        .prop_map(|(id, n, v)| {
            Message::Round1(Round1Msg {
                worker_id: id,
                n_s: n,
                y_min: v[0],
                y_max: v[1],
                xbar: Array1::from(v[2..].to_vec()),
            })
        });
    let bcast = (1usize..12, 2usize..12)
        .prop_flat_map(|(p, h)| (arb_vec(h + 1), arb_vec(p)))
        .prop_map(|(g, x)| {
            Message::Broadcast1(Broadcast1 {
                grid: g,
                xbar_global: Array1::from(x),
            })
        });
    let round2 = (1usize..6, 2usize..6, any::<u32>(), any::<u64>())
        .prop_flat_map(|(p, h, id, n)| {
            (
                Just((p, h, id, n)),
                prop::collection::vec(any::<u64>(), h),
                arb_vec(h * p),
                arb_vec(p * p),
            )
        })
        .prop_map(|((p, h, id, n), counts, sums, scatter)| {
            Message::Round2(Round2Msg {
                worker_id: id,
                n_s: n,
                counts,
                sums: Array2::from_shape_vec((h, p), sums).unwrap(),
                scatter: Array2::from_shape_vec((p, p), scatter).unwrap(),
            })
        });
    let eigen = (1usize..8, 1usize..4, any::<u32>(), any::<u64>(), 0usize..3)
        .prop_flat_map(|(p, k, id, n, m)| (Just((p, k, id, n, m)), arb_vec(k), arb_vec(p * k)))
        .prop_map(|((p, k, id, n, m), vals, vecs)| {
            Message::Eigen(EigenPayload {
                worker_id: id,
                n_s: n,
                method: [Method::Sir, Method::Save, Method::Dr][m],
                values: Array1::from(vals),
                vectors: Array2::from_shape_vec((p, k), vecs).unwrap(),
            })
        });
    let error = (any::<u32>(), ".{0,40}").prop_map(|(code, text)| Message::Error(ErrorMsg { code, text }));
    prop_oneof![round1, bcast, round2, eigen, error]
}

/// Bitwise equality, so NaN payloads compare equal to themselves.
fn same_bits(a: &Message, b: &Message) -> bool {
    encode(a) == encode(b) && a.kind() == b.kind()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn codec_round_trip(msg in arb_message()) {
        let frame = encode(&msg);
        let back = decode(&frame).unwrap();
        prop_assert!(same_bits(&msg, &back));
        prop_assert_eq!(frame.len(), 10 + encode(&back).len() - 10);
        // any strict prefix is rejected
        let cut = frame.len() / 2;
        prop_assert!(decode(&frame[..cut]).is_err());
    }
}

#[test]
fn thousand_messages_stream_over_both_transports() {
    use proptest::strategy::ValueTree;
    use proptest::test_runner::TestRunner;
    use dsdr_protocol::transport::{inproc_pair, recv_message, send_message, TcpHub, TcpLink};

    let mut runner = TestRunner::deterministic();
    let msgs: Vec<Message> = (0..1000)
        .map(|_| arb_message().new_tree(&mut runner).unwrap().current())
        .collect();

    let (mut a, mut b) = inproc_pair();
    for m in &msgs {
        send_message(&mut a, m).unwrap();
    }
    for m in &msgs {
        assert!(same_bits(m, &recv_message(&mut b).unwrap().0));
    }

    let hub = TcpHub::bind(0).unwrap();
    let addr = hub.local_addr().unwrap();
    let sent = msgs.clone();
    let writer = std::thread::spawn(move || {
        let mut c = TcpLink::connect(addr).unwrap();
        for m in &sent {
            send_message(&mut c, m).unwrap();
        }
    });
    let mut links = hub.accept(1, std::time::Duration::from_secs(30)).unwrap();
    for m in &msgs {
        assert!(same_bits(m, &recv_message(&mut links[0]).unwrap().0));
    }
    writer.join().unwrap();
}
