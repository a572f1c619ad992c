use baxos::multipaxos::ViewTimeoutPolicy;
use baxos::runner::simulate;
use baxos::scenario::Scenario;
use baxos::simnet::US_PER_S;

fn scenario(extra: &str) -> Scenario {
    Scenario::from_toml(&format!(
        "name = \"mp\"\nprotocol = \"multipaxos\"\nseed = 5\nhorizon_s = 6.0\nwarmup_s = 0.5\n\
         [cluster]\nn = 5\n[latency]\nprofile = \"aws-5\"\njitter = 0.05\n\
         [multipaxos]\nview_timeout = \"fixed:600\"\n\
         [workload]\nkind = \"micro\"\nrate_per_client = 200.0\n{extra}"
    ))
    .unwrap()
}

#[test]
fn stable_leader_runs_without_elections() {
    let (_, r) = simulate(&scenario("")).unwrap();
    assert!(r.elections().is_empty(), "{:?}", r.elections());
    assert!(r.leader_changes().is_empty());
    let leaders = r
        .replicas
        .iter()
        .filter(|x| !x.leaderships.is_empty())
        .count();
    assert_eq!(leaders, 1);
    assert!(r.summary.unwrap().committed > 1000);
}

#[test]
fn leader_crash_triggers_a_view_change() {
    let (sim, r) = simulate(&scenario("[[crash]]\nreplica = 0\nat_s = 2.0\n")).unwrap();
    let changes = r.leader_changes();
    assert!(!changes.is_empty(), "no new leader");
    let elected = changes[0];
    assert!(
        elected > 2 * US_PER_S && elected < 4 * US_PER_S,
        "{elected}"
    );
    let after = sim
        .records()
        .iter()
        .filter(|x| x.commit.is_some_and(|c| c > elected + US_PER_S))
        .count();
    assert!(after > 500, "{after} commits after the view change");
}

#[test]
fn view_timeout_policies_parse() {
    assert_eq!(
        "250".parse::<ViewTimeoutPolicy>().unwrap(),
        ViewTimeoutPolicy::fixed(250_000)
    );
    assert!("exp:x".parse::<ViewTimeoutPolicy>().is_err());
    assert!("linear:5".parse::<ViewTimeoutPolicy>().is_err());
}
