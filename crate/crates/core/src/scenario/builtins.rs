use super::{parse_scenario_str, Scenario, ScenarioError};

pub const BUILTIN_NAMES: [&str; 4] = ["bar1d", "notched_plate2d", "oscillator_frozen", "quasistatic_bar"];

/// TOML source of a built-in scenario.
pub fn builtin_source(name: &str) -> Option<&'static str> {
    Some(match name {
        "bar1d" => include_str!("../../scenarios/bar1d.toml"),
        "notched_plate2d" => include_str!("../../scenarios/notched_plate2d.toml"),
        "oscillator_frozen" => include_str!("../../scenarios/oscillator_frozen.toml"),
        "quasistatic_bar" => include_str!("../../scenarios/quasistatic_bar.toml"),
        _ => return None,
    })
}

pub fn builtin_scenario(name: &str) -> Result<Scenario, ScenarioError> {
    let src = builtin_source(name).ok_or_else(|| ScenarioError::UnknownScenario(name.to_string()))?;
    parse_scenario_str(src, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::material::DegradationLaw;

    #[test]
    fn bar1d_defaults() {
        let sc = builtin_scenario("bar1d").unwrap();
        assert_eq!(sc.mesh().dim(), 1);
        assert_eq!(sc.mesh().n_elems(), 100);
        assert!((sc.model.tau0 - 0.05).abs() < 1e-12);
        assert!((sc.tau - sc.model.tau0 / 2.0).abs() < 1e-15);
        assert_eq!(sc.n_steps, 40);
        assert!(sc.warnings.is_empty(), "{:?}", sc.warnings);
        assert!(matches!(sc.model.material.degradation, DegradationLaw::AmbrosioTortorelli { .. }));
    }

    #[test]
    fn notched_plate_has_seam() {
        let sc = builtin_scenario("notched_plate2d").unwrap();
        assert_eq!(sc.mesh().n_elems(), 2 * 32 * 32);
        assert!((sc.model.tau0 - 0.0125).abs() < 1e-12);
        let seam: Vec<usize> = (0..sc.mesh().n_nodes()).filter(|&n| sc.initial.alpha[n] < 1.0).collect();
        // nodes at x = 0, 1/32, ..., 9/32 on y = 1/2
        assert_eq!(seam.len(), 10);
        for n in seam {
            let p = sc.mesh().coord(n);
            assert!((p[1] - 0.5).abs() < 1e-12 && p[0] <= 0.3);
            assert_eq!(sc.initial.alpha[n], 0.05);
        }
    }

    #[test]
    fn oscillator_is_frozen_without_viscosity() {
        let sc = builtin_scenario("oscillator_frozen").unwrap();
        assert!(sc.model.freeze_damage);
        assert!(sc.model.tau0.is_infinite());
        assert_eq!(sc.model.material.viscosity.d0.voigt().iter().fold(0.0f64, |m, v| m.max(v.abs())), 0.0);
    }

    #[test]
    fn unknown_name() {
        assert!(matches!(builtin_scenario("nope"), Err(ScenarioError::UnknownScenario(_))));
    }
}
