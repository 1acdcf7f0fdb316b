use proptest::prelude::*;
use sleepy_core::engine::run_config;
use sleepy_core::harness::{decaying, fluctuating, steady};
use sleepy_core::metrics::analyze;
use sleepy_core::trace::Trace;
use sleepy_core::Error;

#[test]
fn round_trip_and_reanalysis() {
    let cfg = fluctuating(5, 3, 80);
    let t = run_config(&cfg).unwrap();
    let bytes = t.to_bytes();
    let back = Trace::from_bytes(&bytes).unwrap();
    assert_eq!(back, t);
    assert_eq!(back.config_toml(), Some(cfg.to_toml().as_str()));
    let (a, b) = (analyze(&t).unwrap(), analyze(&back).unwrap());
    assert_eq!(format!("{a:?}"), format!("{b:?}"));
}

#[test]
fn any_flipped_byte_is_rejected() {
    let bytes = run_config(&steady(4, 1, 30)).unwrap().to_bytes();
    for i in (0..bytes.len()).step_by(bytes.len() / 97 + 1) {
        let mut bad = bytes.clone();
        bad[i] ^= 0x10;
        assert!(matches!(Trace::from_bytes(&bad), Err(Error::CorruptTrace(_))), "byte {i}");
    }
    assert!(matches!(Trace::from_bytes(&bytes[..bytes.len() - 1]), Err(Error::CorruptTrace(_))));
    assert!(matches!(Trace::from_bytes(b""), Err(Error::CorruptTrace(_))));
}

#[test]
fn bad_config_is_rejected_before_running() {
    let mut c = steady(4, 0, 10);
    c.rho = 1.5;
    assert!(matches!(run_config(&c), Err(Error::InvalidConfig { .. })));
    let mut c = steady(4, 0, 10);
    c.seed = u64::MAX;
    assert!(matches!(run_config(&c), Err(Error::InvalidConfig { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn reruns_are_byte_identical(n in 4usize..8, seed in 0u64..1_000_000, decay in any::<bool>()) {
        let c = if decay { decaying(n, seed, 60) } else { fluctuating(n, seed, 60) };
        let a = run_config(&c).unwrap().to_bytes();
        let b = run_config(&c).unwrap().to_bytes();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn honest_logs_never_conflict(n in 4usize..9, seed in 0u64..1_000_000) {
        let m = analyze(&run_config(&fluctuating(n, seed, 120)).unwrap()).unwrap();
        prop_assert_eq!(m.safety.count, 0);
        prop_assert_eq!(m.synchrony.violations, 0);
    }
}
