mod common;

use baxos::runner::{export_run, simulate};
use baxos::verify::verify;
use common::{random_scenario, Flavour};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn random_runs_are_safe(seed in any::<u64>(), flavour in 0usize..3) {
        let s = random_scenario(Flavour::ALL[flavour], seed);
        let (sim, report) = simulate(&s).unwrap();
        let checked = verify(&export_run(&sim));
        prop_assert!(checked.ok(), "{}: {:?}", s.name, checked.first());
        let b = &report.bytes;
        prop_assert_eq!(b.sent, b.delivered + b.dropped + b.to_crashed + report.in_flight_bytes);
    }
}
