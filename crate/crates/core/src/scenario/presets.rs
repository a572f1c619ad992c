/// Built-in scenarios; the same files ship under `scenarios/`.
pub const PRESETS: [(&str, &str); 9] = [
    (
        "attack-delay",
        include_str!("../../../../scenarios/attack-delay.toml"),
    ),
    (
        "attack-loss",
        include_str!("../../../../scenarios/attack-loss.toml"),
    ),
    (
        "attack-crash",
        include_str!("../../../../scenarios/attack-crash.toml"),
    ),
    (
        "attack-free",
        include_str!("../../../../scenarios/attack-free.toml"),
    ),
    (
        "bandwidth",
        include_str!("../../../../scenarios/bandwidth.toml"),
    ),
    (
        "scale-3",
        include_str!("../../../../scenarios/scale-3.toml"),
    ),
    (
        "scale-5",
        include_str!("../../../../scenarios/scale-5.toml"),
    ),
    (
        "scale-7",
        include_str!("../../../../scenarios/scale-7.toml"),
    ),
    (
        "scale-9",
        include_str!("../../../../scenarios/scale-9.toml"),
    ),
];

pub fn preset(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}
