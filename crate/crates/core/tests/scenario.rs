use baxos::scenario::{Protocol, Scenario, PRESETS};
use baxos::simnet::US_PER_S;
use baxos::Error;

const MINIMAL: &str = "name = \"t\"\n[cluster]\nn = 3\n[latency]\nprofile = \"uniform:10\"\n\
                       [workload]\nkind = \"micro\"\nrate_per_client = 10.0\n";

fn fields(err: Error) -> Vec<String> {
    match err {
        Error::Validation(f) => f.into_iter().map(|f| f.field).collect(),
        other => panic!("expected a validation error, got {other}"),
    }
}

#[test]
fn every_preset_validates() {
    for (name, _) in PRESETS {
        let s = Scenario::resolve(name).unwrap();
        s.validate().unwrap();
        assert_eq!(s.name, name);
    }
    let dir = env!("CARGO_MANIFEST_DIR");
    for (name, _) in PRESETS {
        let on_disk =
            Scenario::load(format!("{dir}/../../scenarios/{name}.toml").as_ref()).unwrap();
        assert_eq!(on_disk, Scenario::resolve(name).unwrap(), "{name}");
    }
}

#[test]
fn preset_names_resolve_with_an_extension() {
    let a = Scenario::resolve("attack-delay.cfg").unwrap();
    assert_eq!(a, Scenario::resolve("attack-delay").unwrap());
    assert!(matches!(
        Scenario::resolve("no-such-thing"),
        Err(Error::UnknownPreset(_))
    ));
    assert!(matches!(
        Scenario::resolve("missing/dir/x.toml"),
        Err(Error::Io { .. })
    ));
}

#[test]
fn errors_name_each_bad_field() {
    let bad = MINIMAL.replace("n = 3", "n = 4");
    assert!(fields(Scenario::from_toml(&bad).unwrap_err())
        .iter()
        .any(|f| f == "cluster.n"));

    let bad = MINIMAL.replace("profile = \"uniform:10\"", "matrix = [[0, 1], [1, 0]]");
    assert!(fields(Scenario::from_toml(&bad).unwrap_err()).contains(&"latency.matrix".to_string()));

    let bad = format!(
        "{MINIMAL}[[attack]]\ntype = \"delay\"\nstart_s = 1.0\nstop_s = 2.0\n\
         [[attack]]\ntype = \"teleport\"\nstart_s = 1.0\nstop_s = 2.0\n"
    );
    let f = fields(Scenario::from_toml(&bad).unwrap_err());
    assert!(f.contains(&"attack[0].magnitude_ms".to_string()), "{f:?}");
    assert!(f.contains(&"attack[1].type".to_string()), "{f:?}");

    assert!(matches!(
        Scenario::from_toml("name = \"x\"\nbogus = 1\n"),
        Err(Error::Parse { .. }) | Err(Error::Validation(_))
    ));
}

#[test]
fn digest_tracks_content_but_not_the_seed() {
    let a = Scenario::from_toml(MINIMAL).unwrap();
    assert_eq!(a.digest(), Scenario::from_toml(MINIMAL).unwrap().digest());
    assert_eq!(a.digest(), a.clone().with_seed(99).digest());
    assert_ne!(a.digest(), a.clone().with_rate(11.0).digest());
    assert_eq!(a.protocol, Protocol::Baxos);
}

#[test]
fn shortening_the_horizon_trims_faults() {
    let s = Scenario::resolve("attack-delay")
        .unwrap()
        .with_horizon(20 * US_PER_S);
    s.validate().unwrap();
    assert_eq!(s.horizon_us(), 20 * US_PER_S);
    let s = Scenario::resolve("attack-delay")
        .unwrap()
        .with_horizon(5 * US_PER_S);
    s.validate().unwrap();
}

#[test]
fn resizing_the_cluster_keeps_it_valid() {
    let base = Scenario::resolve("attack-free").unwrap();
    for n in [3, 7, 9] {
        let s = base.clone().with_replicas(n).unwrap();
        s.validate().unwrap();
        assert_eq!(s.n, n);
    }
    assert!(base.with_replicas(4).is_err());
}
