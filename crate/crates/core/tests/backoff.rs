use std::time::Duration;

use baxos::backoff::{
    baxos_backoff, monte_carlo_single_winner, termination_probability, BackoffState, RttEstimate,
    Scheme,
};
use baxos::protocol::ReplicaId;
use proptest::prelude::*;

fn scheme() -> impl Strategy<Value = Scheme> {
    prop_oneof![
        Just(Scheme::Baxos),
        Just(Scheme::Binary),
        Just(Scheme::ModifiedBinary)
    ]
}

proptest! {
    #[test]
    fn draws_stay_inside_the_window(
        scheme in scheme(),
        retries in 0u32..12,
        rtt_ms in 1u64..400,
        seed in any::<u64>(),
    ) {
        let rtt = Duration::from_millis(rtt_ms);
        let mut b = BackoffState::new(scheme, seed);
        for _ in 0..retries {
            b.on_retry();
        }
        let window = b.window(rtt);
        for _ in 0..20 {
            let d = b.draw(rtt).unwrap();
            match scheme {
                Scheme::Baxos => prop_assert!(d > Duration::ZERO && d < window),
                _ => {
                    prop_assert!(d <= window);
                    prop_assert_eq!(d.as_nanos() % (2 * rtt.as_nanos()), 0);
                }
            }
        }
    }

    #[test]
    fn success_rules(scheme in scheme(), retries in 0u32..20) {
        let mut b = BackoffState::new(scheme, 1);
        for _ in 0..retries {
            b.on_retry();
        }
        b.on_success();
        let expected = match scheme {
            Scheme::Binary => 0,
            _ => retries.saturating_sub(1),
        };
        prop_assert_eq!(b.retries(), expected);
    }

    #[test]
    fn closed_form_is_a_probability(l in 1u32..30, p in 1u32..50) {
        let v = termination_probability(l, p).unwrap();
        prop_assert!((0.0..=1.0).contains(&v));
    }
}

#[test]
fn baxos_window_doubles_per_retry() {
    let rtt = Duration::from_millis(100);
    assert_eq!(
        baxos_backoff(0, rtt, 0.5).unwrap(),
        Duration::from_millis(100)
    );
    assert_eq!(
        baxos_backoff(3, rtt, 0.5).unwrap(),
        Duration::from_millis(800)
    );
    assert!(baxos_backoff(1, rtt, 0.0).is_err());
    assert!(baxos_backoff(1, rtt, 1.0).is_err());
    assert!(baxos_backoff(1, Duration::ZERO, 0.5).is_err());
}

#[test]
fn binary_draws_cover_every_slot() {
    let rtt = Duration::from_millis(10);
    let mut b = BackoffState::new(Scheme::Binary, 3);
    b.on_retry();
    b.on_retry();
    let mut seen = [false; 4];
    for _ in 0..400 {
        let d = b.draw(rtt).unwrap();
        seen[(d.as_millis() / 20) as usize] = true;
    }
    assert_eq!(seen, [true; 4]);
}

#[test]
fn sampling_matches_closed_form() {
    for (l, p) in [(3, 2), (4, 3), (6, 4)] {
        let exact = termination_probability(l, p).unwrap();
        let mc = monte_carlo_single_winner(l, p, 40_000, 9).unwrap();
        assert!((exact - mc).abs() < 0.05, "l={l} p={p}: {mc} vs {exact}");
    }
    assert!(monte_carlo_single_winner(3, 0, 10, 1).is_err());
    assert!(monte_carlo_single_winner(3, 2, 0, 1).is_err());
}

#[test]
fn rtt_estimate_tracks_the_farthest_peer() {
    let mut est = RttEstimate::new(ReplicaId(1), 3, Duration::from_millis(300)).unwrap();
    for _ in 0..80 {
        est.observe(ReplicaId(0), Duration::from_millis(40))
            .unwrap();
        est.observe(ReplicaId(2), Duration::from_millis(120))
            .unwrap();
        est.observe(ReplicaId(1), Duration::from_millis(999))
            .unwrap();
    }
    let ms = est.current().as_secs_f64() * 1e3;
    assert!((ms - 120.0).abs() < 0.5, "{ms}");
}
