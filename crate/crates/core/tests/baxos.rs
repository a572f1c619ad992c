use baxos::runner::{export_run, simulate};
use baxos::scenario::Scenario;
use baxos::verify::verify;

fn scenario(homes: &str, piggyback: bool) -> Scenario {
    Scenario::from_toml(&format!(
        "name = \"bx\"\nseed = 8\nhorizon_s = 8.0\nwarmup_s = 1.0\n\
         [cluster]\nn = 5\n[latency]\nprofile = \"aws-5\"\njitter = 0.05\n\
         [baxos]\npiggyback = {piggyback}\n\
         [workload]\nkind = \"micro\"\nrate_per_client = 100.0\nhomes = [{homes}]\n"
    ))
    .unwrap()
}

#[test]
fn lone_proposer_takes_the_fast_path() {
    let (sim, r) = simulate(&scenario("2", true)).unwrap();
    let me = &r.replicas[2];
    assert_eq!(me.retries, 0);
    assert!(me.fast_path > 0);
    assert!(r
        .replicas
        .iter()
        .enumerate()
        .all(|(i, x)| i == 2 || x.proposals == 0));
    let s = r.summary.unwrap();
    assert!(s.committed > 500);
    assert!(verify(&export_run(&sim)).ok());

    let (_, plain) = simulate(&scenario("2", false)).unwrap();
    assert_eq!(plain.replicas[2].fast_path, 0);
    assert!(plain.summary.unwrap().median_us.unwrap() > s.median_us.unwrap());
}

#[test]
fn contending_proposers_back_off_and_all_commit() {
    let (sim, r) = simulate(&scenario("0, 1, 2, 3, 4", true)).unwrap();
    assert!(r.replicas.iter().map(|x| x.retries).sum::<u64>() > 0);
    assert!(r.replicas.iter().all(|x| x.own_commits > 0));
    assert_eq!(r.conflicts(), 0);
    assert!(verify(&export_run(&sim)).ok());
    let logs = sim.logs();
    let shortest = logs.iter().map(|l| l.next_index()).min().unwrap();
    assert!(shortest > 10);
}
