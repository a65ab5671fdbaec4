use std::collections::BTreeMap;

use inl_core::baselines::bandwidth::{
    fl_bits, inl_bits, sl_bits, table1, table1_csv, BandwidthParams, Scheme, RESNET50_PARAMS, VGG16_PARAMS,
};
use inl_core::baselines::fl::{aggregate, fl_round, fl_round_bits, train_fl, FlConfig};
use inl_core::baselines::sl::{handoff, receive, split_sizes, train_sl, SlState};
use inl_core::data::{gen_dataset, SyntheticData, SyntheticSpec};
use inl_core::graph::DagNetwork;
use inl_core::nn::{Activation, DenseLayer, FeedForwardNet, NetSpec};
use inl_core::protocol::{train, InlSystem, Split, SystemSpec, TrainConfig};
use inl_core::Tensor;
use proptest::prelude::*;

// Table values recomputed by hand from the three formulas, in Gbit.
fn expected_cell(n: f64, eta: f64, q: f64, scheme: Scheme) -> f64 {
    let (p, s, j) = (25_088.0, 32.0, 500.0);
    let bits = match scheme {
        Scheme::Fl => 2.0 * n * j * s,
        Scheme::Sl => (2.0 * p * q + eta * n * j) * s,
        Scheme::Inl => 2.0 * p * q * s / j,
    };
    bits / 1e9
}

#[test]
fn table1_reproduces_all_twelve_cells() {
    let cells = table1();
    assert_eq!(cells.len(), 12);
    for c in &cells {
        let (n, eta) = if c.model == "VGG16" { (VGG16_PARAMS, 0.11) } else { (RESNET50_PARAMS, 0.88) };
        let want = expected_cell(n, eta, c.q as f64, c.scheme);
        assert!((c.gbits - want).abs() <= 1e-9 * want.max(1.0), "{c:?}");
        assert!(c.matched, "{c:?}");
    }
    // spot values
    let vgg = &cells[..3];
    assert!((vgg[0].gbits - 4427.0).abs() < 0.5);
    assert!((vgg[1].gbits - 323.8).abs() < 0.05);
    assert!((vgg[2].gbits - 0.1606).abs() < 1e-4);
    assert_eq!(table1_csv(&cells).lines().count(), 13);
}

fn params() -> impl Strategy<Value = BandwidthParams> {
    (0.0..1e6f64, 1.0..1e5f64, 1.0..64f64, 1.0..1000f64, 1.0..1e9f64, 0.0..=1.0f64).prop_map(
        |(q, p, s_bits, clients, n_params, eta_frac)| BandwidthParams { q, p, s_bits, clients, n_params, eta_frac },
    )
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn formulas_are_homogeneous_in_bit_width(b in params(), k in 0.1..10.0f64) {
        let scaled = BandwidthParams { s_bits: b.s_bits * k, ..b };
        for scheme in [Scheme::Fl, Scheme::Sl, Scheme::Inl] {
            prop_assert!(close(scheme.bits(&scaled), k * scheme.bits(&b)));
        }
    }

    #[test]
    fn inl_ignores_model_size_and_fl_ignores_data(b in params(), n in 1.0..1e9f64, q in 0.0..1e6f64, p in 1.0..1e5f64) {
        prop_assert_eq!(inl_bits(&BandwidthParams { n_params: n, ..b }), inl_bits(&b));
        prop_assert_eq!(fl_bits(&BandwidthParams { q, p, ..b }), fl_bits(&b));
        prop_assert!(sl_bits(&b) >= inl_bits(&b) * b.clients - 1e-6 * sl_bits(&b));
    }

    #[test]
    fn aggregate_is_the_mean(ws in prop::collection::vec(-10.0..10.0f64, 1..8)) {
        let nets: Vec<FeedForwardNet> = ws.iter().map(|&w| scalar(w)).collect();
        let mean = aggregate(&nets).unwrap();
        let want = ws.iter().sum::<f64>() / ws.len() as f64;
        prop_assert!((mean[0] - want).abs() < 1e-12);
    }
}

fn scalar(w: f64) -> FeedForwardNet {
    let layer =
        DenseLayer::new(Tensor::from_rows(&[vec![w]]).unwrap(), Tensor::vector(&[w]), Activation::Linear).unwrap();
    FeedForwardNet::new(vec![layer]).unwrap()
}

#[test]
fn aggregate_examples() {
    assert_eq!(aggregate(&[scalar(0.0), scalar(2.0)]).unwrap(), vec![1.0, 1.0]);
    let wide =
        DenseLayer::new(Tensor::from_rows(&[vec![1.0, 1.0]]).unwrap(), Tensor::vector(&[0.0]), Activation::Linear)
            .unwrap();
    assert!(aggregate(&[scalar(0.0), FeedForwardNet::new(vec![wide]).unwrap()]).is_err());
    assert!(aggregate::<FeedForwardNet>(&[]).is_err());
}

fn small_data(views: usize, seed: u64) -> SyntheticData {
    gen_dataset(&SyntheticSpec {
        num_classes: 3,
        feature_dim: 6,
        num_views: views,
        noise_stds: (0..views).map(|v| 0.8 + 0.6 * v as f64).collect(),
        train_size: 600,
        test_size: 300,
        seed,
    })
    .unwrap()
}

fn small_system(views: usize, seed: u64) -> InlSystem {
    let dag = DagNetwork::star(views, 1e6).unwrap();
    let spec = SystemSpec::uniform(
        &dag,
        &NetSpec::new(&[(16, Activation::Relu), (4, Activation::Linear)]).with_latent(2),
        &NetSpec::new(&[(4, Activation::Relu)]),
        &NetSpec::new(&[(16, Activation::Relu), (3, Activation::Softmax)]),
    );
    let dims = (1..=views).map(|j| (j, 6)).collect();
    InlSystem::build(dag, &spec, dims, None, seed).unwrap()
}

#[test]
fn zero_step_round_is_a_fixed_point() {
    let sys = small_system(2, 3);
    for parallel in [false, true] {
        let (next, _) = fl_round(&sys, &[(); 4], parallel, |_, _, _| Ok(())).unwrap();
        assert_eq!(next, sys);
    }
}

#[test]
fn parallel_rounds_match_sequential_ones() {
    let data = small_data(2, 5);
    let cfg = |parallel| FlConfig {
        clients: 3,
        rounds: 2,
        local_epochs: 1,
        train: TrainConfig { eta: 0.05, ..TrainConfig::default() },
        parallel,
    };
    let mut a = small_system(2, 1);
    let mut b = a.clone();
    let ra = train_fl(&mut a, &data.train, Some(&data.test), &cfg(true)).unwrap();
    let rb = train_fl(&mut b, &data.train, Some(&data.test), &cfg(false)).unwrap();
    assert_eq!(a, b);
    assert_eq!(ra, rb);
}

#[test]
fn fl_bits_follow_the_closed_form() {
    let sys = small_system(2, 1);
    let n = sys.num_params();
    let b = BandwidthParams { q: 1.0, p: 1.0, s_bits: 32.0, clients: 4.0, n_params: n as f64, eta_frac: 0.0 };
    assert_eq!(fl_round_bits(n, 4, 32) as f64, fl_bits(&b));
    let data = small_data(2, 2);
    let cfg = FlConfig { clients: 4, rounds: 3, local_epochs: 1, train: TrainConfig::default(), parallel: false };
    let rows = train_fl(&mut sys.clone(), &data.train, None, &cfg).unwrap();
    let bits: Vec<u64> = rows.iter().map(|r| r.cumulative_bits).collect();
    assert_eq!(bits, vec![fl_round_bits(n, 4, 32), 2 * fl_round_bits(n, 4, 32), 3 * fl_round_bits(n, 4, 32)]);
}

#[test]
fn federated_lands_near_centralized_training() {
    let data = small_data(2, 11);
    let cfg = TrainConfig { eta: 0.05, epochs: 100, batch_size: 16, ..TrainConfig::default() };
    let mut central = small_system(2, 4);
    let mut global = central.clone();
    let rc = train(&mut central, &data.train, Some(&data.test), &cfg).unwrap();
    let fl = FlConfig { clients: 4, rounds: 100, local_epochs: 1, train: cfg.clone(), parallel: true };
    let rf = train_fl(&mut global, &data.train, Some(&data.test), &fl).unwrap();
    // mean over the last ten evaluations smooths out epoch-to-epoch jitter
    let last = |rows: &[inl_core::protocol::MetricsRow]| {
        rows.iter().rev().filter(|r| r.split == Split::Test).take(10).map(|r| r.accuracy).sum::<f64>() / 10.0
    };
    let (a, b) = (last(&rc), last(&rf));
    assert!(a > 0.6, "centralized accuracy {a} too low for a meaningful comparison");
    assert!((a - b).abs() <= 0.05, "centralized {a} vs federated {b}");
}

#[test]
fn handoff_is_bit_exact() {
    let v = vec![0.1, -0.0, f64::MAX, f64::MIN_POSITIVE / 3.0, f64::NAN, 1.0 / 3.0];
    let back = receive(&handoff(&v)).unwrap();
    assert!(v.iter().zip(&back).all(|(a, b)| a.to_bits() == b.to_bits()));
    assert!(receive(&[0u8; 7]).is_err());
}

#[test]
fn single_client_split_learning_is_plain_training() {
    let data = small_data(1, 8);
    let mut plain = small_system(1, 9);
    let mut sl = SlState::new(plain.clone()).unwrap();
    let cfg = TrainConfig { s: 0.0, eta: 0.05, epochs: 4, ..TrainConfig::default() };
    let rp = train(&mut plain, &data.train, Some(&data.test), &cfg).unwrap();
    let rs = train_sl(&mut sl, &data.train, Some(&data.test), 1, &cfg).unwrap();
    assert_eq!(sl.system(), &plain);
    for (a, b) in rp.iter().zip(&rs) {
        assert_eq!((a.loss, a.accuracy), (b.loss, b.accuracy));
        // split learning also pays for handing the encoder back
        assert_eq!(b.cumulative_bits - a.cumulative_bits, a.epoch as u64 * sl.client_param_count() as u64 * 32);
    }
}

#[test]
fn split_learning_weights_travel_through_every_client() {
    let data = small_data(2, 3);
    let mut sl = SlState::new(small_system(2, 2)).unwrap();
    let sizes = split_sizes(&sl);
    assert_eq!(sizes["client"] + sizes["server"], sl.system().num_params());
    let shards = data.train.shards(3);
    let cfg = TrainConfig::default();
    let before = sl.client_params();
    let st = sl.sl_epoch(&shards, &cfg, 1).unwrap();
    assert_ne!(before, sl.client_params());
    assert_eq!(st.samples, data.train.len());
    assert_eq!(st.handoff_bits, 3 * sizes["client"] as u64 * 32);
    assert!(sl.set_client_params(&before[1..]).is_err());
}

#[test]
fn split_learning_refuses_relays() {
    let dag = DagNetwork::five_node(8.0, 8.0, 8.0, 8.0).unwrap();
    let spec = SystemSpec::uniform(
        &dag,
        &NetSpec::new(&[(4, Activation::Linear)]).with_latent(2),
        &NetSpec::new(&[(4, Activation::Relu)]),
        &NetSpec::new(&[(3, Activation::Softmax)]),
    );
    let dims: BTreeMap<usize, usize> = [(1, 2), (2, 2), (3, 2)].into_iter().collect();
    let sys = InlSystem::build(dag, &spec, dims, None, 1).unwrap();
    assert!(SlState::new(sys).is_err());
}
