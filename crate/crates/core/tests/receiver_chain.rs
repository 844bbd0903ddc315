use dopplerfg::channel::PriorSpec;
use dopplerfg::channel::{apply, ChannelParams};
use dopplerfg::codec::bundled_code;
use dopplerfg::fg_engine::{run_global_loop, GlobalLoopConfig, NodeEstimator};
use dopplerfg::framing::{build_frame, generate_preamble, FrameConfig};
use dopplerfg::pf_estimator::{PfConfig, PfEstimator};
use dopplerfg::rng::{seeded, Role, StreamKey};
use dopplerfg::rw_estimator::{RwConfig, RwEstimator};
use rand::Rng;

fn decode_with(est: &dyn NodeEstimator, nodes: usize, snr_db: f64, seed: u64) -> usize {
    let code = bundled_code();
    let preamble = generate_preamble(0, 30);
    let mut rng = seeded(seed);
    let info: Vec<u8> = (0..code.k()).map(|_| rng.random_range(0..2u8)).collect();
    let cw = code.encode(&info).unwrap();
    let frame = build_frame(&preamble, &cw, &FrameConfig::new(30, code.n())).unwrap();
    let sigma2 = 10f64.powf(-snr_db / 10.0);
    let obs: Vec<_> = (0..nodes)
        .map(|n| {
            let p = ChannelParams::new(1.0 - n as f64, 0.006 - 0.004 * n as f64, -3e-6);
            let mut noise = StreamKey::new(seed, 0, n as u32, Role::Noise).rng();
            apply(&frame, &p, sigma2, n, &mut noise)
        })
        .collect();
    let mut rngs: Vec<_> = (0..nodes)
        .map(|n| StreamKey::new(seed, 0, n as u32, Role::Estimator).rng())
        .collect();
    let cfg = GlobalLoopConfig {
        n_global_iters: 2,
        ..GlobalLoopConfig::default()
    };
    let out = run_global_loop(&obs, &preamble, &code, est, &cfg, &mut rngs).unwrap();
    assert_eq!(out.iterations.len(), 2);
    out.info_bits
        .iter()
        .zip(&info)
        .filter(|(a, b)| a != b)
        .count()
}

#[test]
fn random_walk_receiver_decodes_at_moderate_snr() {
    let rw = RwEstimator::new(RwConfig::default(), &PriorSpec::default(), 534).unwrap();
    for seed in 0..4 {
        assert_eq!(decode_with(&rw, 1, 3.0, seed), 0, "seed {seed}");
        assert_eq!(decode_with(&rw, 2, 1.0, seed), 0, "seed {seed}");
    }
}

#[test]
fn particle_filter_receiver_decodes_at_moderate_snr() {
    let pf = PfEstimator::new(PfConfig::default(), PriorSpec::default()).unwrap();
    for seed in 0..3 {
        assert_eq!(decode_with(&pf, 1, 4.0, seed), 0, "seed {seed}");
    }
}
