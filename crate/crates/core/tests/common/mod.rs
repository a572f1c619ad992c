#![allow(dead_code)]

pub mod model;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use baxos::scenario::{Protocol, Scenario};

/// Protocol configurations covered by the randomized safety runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Flavour {
    BaxosPiggyback,
    BaxosPlain,
    MultiPaxos,
}

impl Flavour {
    pub const ALL: [Flavour; 3] = [
        Flavour::BaxosPiggyback,
        Flavour::BaxosPlain,
        Flavour::MultiPaxos,
    ];
}

/// A short, adversarial scenario: jittered and reordered links, 2 to 5
/// proposing replicas, up to `f` crashes at random times and, in half the
/// runs, a delay or loss attack.
pub fn random_scenario(flavour: Flavour, seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = if rng.random_bool(0.5) { 3 } else { 5 };
    let f = (n - 1) / 2;
    let proposers = rng.random_range(2..=5usize).min(n);
    let mut homes: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        homes.swap(i, rng.random_range(0..=i));
    }
    homes.truncate(proposers);
    let homes: Vec<String> = homes.iter().map(|h| h.to_string()).collect();
    let horizon = rng.random_range(1.0..2.5f64);
    let latency = if rng.random_bool(0.5) {
        "aws-5".to_string()
    } else {
        format!("uniform:{}", rng.random_range(2..60))
    };
    let extra = rng.random_range(0.0..80.0f64);
    let mut text = format!(
        "name = \"safety-{seed}\"\nprotocol = \"{protocol}\"\nseed = {seed}\nhorizon_s = {horizon:.3}\n\
         client_timeout_s = 1.0\nwarmup_s = 0.0\n\
         [cluster]\nn = {n}\n\
         [latency]\nprofile = \"{latency}\"\njitter = {jitter:.3}\n\
         [synchrony]\ngst_s = {horizon:.3}\npre_gst_extra_ms = {extra:.1}\n\
         [workload]\nkind = \"micro\"\nrate_per_client = {rate:.1}\nhomes = [{homes}]\n",
        jitter = rng.random_range(0.05..0.5f64),
        rate = rng.random_range(20.0..400.0f64),
        homes = homes.join(", "),
        protocol = if flavour == Flavour::MultiPaxos { "multipaxos" } else { "baxos" },
    );
    // Attack bursts may not outlast the view timeout.
    let mut burst_cap = 0.8;
    match flavour {
        Flavour::MultiPaxos => {
            let base = rng.random_range(80..300);
            burst_cap = base as f64 / 1e3;
            text.push_str(&format!(
                "[multipaxos]\nview_timeout = \"exp:{base}:{}\"\n",
                rng.random_range(10..80)
            ))
        }
        Flavour::BaxosPiggyback | Flavour::BaxosPlain => {
            let scheme = ["baxos", "binary", "modified-binary"][rng.random_range(0..3)];
            text.push_str(&format!(
                "[baxos]\npiggyback = {}\npiggyback_learn = {}\n\
                 scheme = \"{scheme}\"\n",
                flavour == Flavour::BaxosPiggyback,
                rng.random_bool(0.3)
            ));
        }
    }
    let crashes = rng.random_range(0..=f);
    let mut victims: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        victims.swap(i, rng.random_range(0..=i));
    }
    for v in victims.into_iter().take(crashes) {
        text.push_str(&format!(
            "[[crash]]\nreplica = {v}\nat_s = {:.3}\n",
            rng.random_range(0.0..horizon)
        ));
    }
    if rng.random_bool(0.5) {
        let start = rng.random_range(0.0..horizon * 0.8);
        let stop = rng.random_range(start + 0.05..horizon + 0.05).min(horizon);
        let target = match rng.random_range(0..3) {
            0 => "follow-leader".to_string(),
            1 => "random-rotating".to_string(),
            _ => format!("fixed:{}", rng.random_range(0..n)),
        };
        let kind = if rng.random_bool(0.5) {
            format!(
                "type = \"delay\"\nmagnitude_ms = {:.1}\nramp = {}\n",
                rng.random_range(20.0..600.0f64),
                rng.random_bool(0.3)
            )
        } else {
            format!(
                "type = \"loss\"\nfraction = {:.2}\n",
                rng.random_range(0.1..0.9f64)
            )
        };
        text.push_str(&format!(
            "[[attack]]\n{kind}target = \"{target}\"\nstart_s = {start:.3}\nstop_s = {stop:.3}\n\
             burst_s = {:.3}\ncooldown_s = {:.3}\n",
            rng.random_range(0.05..burst_cap),
            rng.random_range(0.0..0.3f64)
        ));
    }
    let s = Scenario::from_toml(&text).unwrap_or_else(|e| panic!("{e}\n{text}"));
    assert_eq!(
        s.protocol,
        match flavour {
            Flavour::MultiPaxos => Protocol::Multipaxos,
            _ => Protocol::Baxos,
        }
    );
    s
}
