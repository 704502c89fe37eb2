//! Built-in experiment presets. These double as the acceptance suite:
//! E1 (1-D soft layer, exact oracles), E2 (2-D heat, stiff layer),
//! E3 (2-D two-component system, soft layer), E4 (common-atom demo).

use super::config::RawConfig;

pub const NAMES: [&str; 4] = ["E1", "E2", "E3", "E4"];

pub fn preset_toml(name: &str) -> Option<&'static str> {
    match name {
        "E1" => Some(E1),
        "E2" => Some(E2),
        "E3" => Some(E3),
        "E4" => Some(E4),
        _ => None,
    }
}

pub fn preset(name: &str) -> Option<RawConfig> {
    preset_toml(name).map(|text| RawConfig::from_str(text).expect("presets parse"))
}

/// 1-D soft layer at 1/3 (width eps, value eps), exact oracle paths,
/// sweep down to 1e-4.
const E1: &str = r#"
preset = "E1"

[profile]
length = "1"
background = 1.0

[[profile.feature]]
center = "1/3"
kind = "soft"

[law]
kind = "heat"
a = [[1.0]]

[grid]
dimension = 1
resolution = 64

[sweep]
eps = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3, 3e-4, 1e-4]

[source]
kind = "constant"
value = 1.0

[output]
dir = "out/e1"
"#;

/// 2-D heat with a stiff layer at 1/2 (m-atom of mass 1) on the unit
/// square.
const E2: &str = r#"
preset = "E2"

[profile]
length = "1"
background = 1.0

[[profile.feature]]
center = "1/2"
kind = "stiff"

[law]
kind = "heat"
a = [[1.0, 0.0], [0.0, 1.0]]

[grid]
dimension = 2
resolution = 64

[solver]
tol = 1e-10
max_iter = 200000

[sweep]
eps = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3]

[source]
kind = "constant"
value = 1.0

[output]
dir = "out/e2"
"#;

/// 2-D two-component system with a soft layer at 1/3 (nu-atom of mass 1).
const E3: &str = r#"
preset = "E3"

[profile]
length = "1"
background = 1.0

[[profile.feature]]
center = "1/3"
kind = "soft"

[law]
kind = "system"
n = 2
gram = [
  [2.0, 0.3, 0.2, 0.1],
  [0.3, 1.5, 0.1, 0.2],
  [0.2, 0.1, 1.8, 0.25],
  [0.1, 0.2, 0.25, 1.2],
]

[grid]
dimension = 2
resolution = 48

[solver]
tol = 1e-10
max_iter = 200000

[sweep]
eps = [1e-1, 3e-2, 1e-2, 3e-3]

[source]
kind = "constant"
value = [1.0, 0.5]

[output]
dir = "out/e3"
"#;

/// Common-atom demo: nested feature at 1/2 with regimes r2 << r1 (family A)
/// and, by default, the swapped radii for family B. The asymmetric source
/// keeps the flux at the shared atom location away from zero.
const E4: &str = r#"
preset = "E4"

[profile]
length = "1"
background = 1.0

[[profile.feature]]
center = "1/2"
kind = "nested"
r1_exp = 1.0
r2_exp = 2.0

[law]
kind = "heat"
a = [[1.0]]

[grid]
dimension = 1
resolution = 64

[sweep]
eps = [1e-1, 1e-2, 1e-3, 1e-4]

[source]
kind = "piecewise"
breaks = ["0", "1/2", "1"]
values = [[1.0], [0.0]]

[output]
dir = "out/e4"
"#;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_presets_validate() {
        for name in NAMES {
            let exp = preset(name).unwrap().validate().unwrap();
            assert_eq!(exp.name, name);
        }
    }

    #[test]
    fn unknown_preset_is_none() {
        assert!(preset("E9").is_none());
    }
}
