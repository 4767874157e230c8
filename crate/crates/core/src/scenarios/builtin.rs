//! Built-in scenarios. Parameters are fixed at unit masses, inertias,
//! radii and offsets.

use super::Scenario;
use crate::error::{Error, Result};

pub const BUILTIN_NAMES: [&str; 8] = [
    "nonholonomic_particle",
    "chaplygin_sleigh",
    "vertical_rolling_disk",
    "integrable_plane",
    "particle_in_potential",
    "unconstrained_general",
    "magnetic_particle",
    "contact_5d",
];

const NONHOLONOMIC_PARTICLE: &str = r#"{
  "name": "nonholonomic_particle",
  "dimension": 3,
  "coordinates": ["x", "y", "z"],
  "lagrangian": {"type": "mechanical", "metric": [["1","0","0"],["0","1","0"],["0","0","1"]], "potential": "0"},
  "constraints": {"basis": [["1","0","y"], ["0","1","0"]]},
  "domain": {"min": [-1.5,-1.5,-1.5], "max": [1.5,1.5,1.5]},
  "fields": {"momentum_y": ["0","1","0"]},
  "integrals": {"u_y": "u_y"},
  "tensors": {"A": {"degree": 2, "components": {"1,1": "1 + y^2"}}},
  "initial": {"q": [0,1,0], "u": [1,1,1]},
  "defaults": {"t_end": 10, "step": 0.001, "seed": 42, "tol": 1e-9}
}"#;

// Constraint −sin θ u_x + cos θ u_y = u_θ.
const CHAPLYGIN_SLEIGH: &str = r#"{
  "name": "chaplygin_sleigh",
  "dimension": 3,
  "coordinates": ["x", "y", "theta"],
  "lagrangian": {"type": "mechanical", "metric": [["1","0","0"],["0","1","0"],["0","0","2"]], "potential": "0"},
  "constraints": {"basis": [["cos(theta)","sin(theta)","0"], ["-sin(theta)","cos(theta)","1"]]},
  "domain": {"min": [-1.5,-1.5,-3.14159], "max": [1.5,1.5,3.14159]},
  "initial": {"q": [0,0,0], "u": [1,0.5,0.5]},
  "defaults": {"t_end": 10, "step": 0.001, "seed": 42, "tol": 1e-9}
}"#;

// Coordinates (x, y, rolling angle, heading); u_x = cos(heading) u_phi,
// u_y = sin(heading) u_phi.
const VERTICAL_ROLLING_DISK: &str = r#"{
  "name": "vertical_rolling_disk",
  "dimension": 4,
  "coordinates": ["x", "y", "phi", "theta"],
  "lagrangian": {"type": "mechanical",
    "metric": [["1","0","0","0"],["0","1","0","0"],["0","0","1","0"],["0","0","0","1"]], "potential": "0"},
  "constraints": {"basis": [["cos(theta)","sin(theta)","1","0"], ["0","0","0","1"]]},
  "domain": {"min": [-1.5,-1.5,-3.14159,-3.14159], "max": [1.5,1.5,3.14159,3.14159]},
  "fields": {"rolling": ["cos(theta)","sin(theta)","1","0"], "spin": ["0","0","1","0"], "heading": ["0","0","0","1"]},
  "integrals": {"u_phi": "u_phi", "u_theta": "u_theta"},
  "initial": {"q": [0,0,0,0], "u": [1,0,1,0.7]},
  "defaults": {"t_end": 10, "step": 0.001, "seed": 42, "tol": 1e-9}
}"#;

const INTEGRABLE_PLANE: &str = r#"{
  "name": "integrable_plane",
  "dimension": 3,
  "coordinates": ["x", "y", "z"],
  "lagrangian": {"type": "mechanical", "metric": [["1","0","0"],["0","1","0"],["0","0","1"]], "potential": "0.5*x^2"},
  "constraints": {"basis": [["1","0","0"], ["0","1","0"]]},
  "domain": {"min": [-1.5,-1.5,-1.5], "max": [1.5,1.5,1.5]},
  "integrals": {"u_y": "u_y"},
  "fields": {"momentum_y": ["0","1","0"], "momentum_z": ["0","0","1"]},
  "tensors": {"T": {"degree": 2, "components": {"1,1": "1"}, "f": "x^2"}},
  "initial": {"q": [0.5,0,0], "u": [0.3,1,0]},
  "defaults": {"t_end": 10, "step": 0.001, "seed": 42, "tol": 1e-9}
}"#;

const PARTICLE_IN_POTENTIAL: &str = r#"{
  "name": "particle_in_potential",
  "dimension": 3,
  "coordinates": ["x", "y", "z"],
  "lagrangian": {"type": "mechanical", "metric": [["1","0","0"],["0","1","0"],["0","0","1"]],
    "potential": "0.5*(x^2 + y^2) + z"},
  "constraints": {"basis": [["1","0","y"], ["0","1","0"]]},
  "domain": {"min": [-1.5,-1.5,-1.5], "max": [1.5,1.5,1.5]},
  "initial": {"q": [0,1,0], "u": [1,1,1]},
  "defaults": {"t_end": 10, "step": 0.001, "seed": 42, "tol": 1e-9}
}"#;

const UNCONSTRAINED_GENERAL: &str = r#"{
  "name": "unconstrained_general",
  "dimension": 3,
  "coordinates": ["x", "y", "z"],
  "lagrangian": {"type": "expression",
    "source": "0.5*(u_x^2 + u_y^2 + u_z^2) + 0.1*sin(x)*u_x*u_y + z*u_x - 0.5*y^2"},
  "constraints": {"basis": [["1","0","0"], ["0","1","0"], ["0","0","1"]]},
  "domain": {"min": [-1.5,-1.5,-1.5], "max": [1.5,1.5,1.5]},
  "initial": {"q": [0,0,0], "u": [1,0.5,-0.3]},
  "defaults": {"t_end": 10, "step": 0.001, "seed": 42, "tol": 1e-9}
}"#;

const MAGNETIC_PARTICLE: &str = r#"{
  "name": "magnetic_particle",
  "dimension": 3,
  "coordinates": ["x", "y", "z"],
  "lagrangian": {"type": "expression",
    "source": "0.5*(u_x^2 + u_y^2 + u_z^2) + 0.1*sin(x)*u_x*u_y + z*u_x - 0.5*y^2"},
  "constraints": {"basis": [["1","0","y"], ["0","1","0"]]},
  "domain": {"min": [-1.5,-1.5,-1.5], "max": [1.5,1.5,1.5]},
  "initial": {"q": [0,1,0], "u": [1,1,1]},
  "defaults": {"t_end": 10, "step": 0.001, "seed": 42, "tol": 1e-9}
}"#;

const CONTACT_5D: &str = r#"{
  "name": "contact_5d",
  "dimension": 5,
  "coordinates": ["x1", "y1", "x2", "y2", "z"],
  "lagrangian": {"type": "mechanical",
    "metric": [["1","0","0","0","0"],["0","1","0","0","0"],["0","0","1","0","0"],["0","0","0","1","0"],["0","0","0","0","1"]],
    "potential": "0"},
  "constraints": {"basis": [["-y1","0","-y2","0","1"]]},
  "domain": {"min": [-1,-1,-1,-1,-1], "max": [1,1,1,1,1]},
  "initial": {"q": [0,0.5,0,-0.5,0], "u": [-0.5,0,0.5,0,1]},
  "defaults": {"t_end": 10, "step": 0.001, "seed": 42, "tol": 1e-9}
}"#;

/// Scenario JSON of a built-in.
pub fn builtin_json(name: &str) -> Option<&'static str> {
    Some(match name {
        "nonholonomic_particle" => NONHOLONOMIC_PARTICLE,
        "chaplygin_sleigh" => CHAPLYGIN_SLEIGH,
        "vertical_rolling_disk" => VERTICAL_ROLLING_DISK,
        "integrable_plane" => INTEGRABLE_PLANE,
        "particle_in_potential" => PARTICLE_IN_POTENTIAL,
        "unconstrained_general" => UNCONSTRAINED_GENERAL,
        "magnetic_particle" => MAGNETIC_PARTICLE,
        "contact_5d" => CONTACT_5D,
        _ => return None,
    })
}

pub fn builtin(name: &str) -> Result<Scenario> {
    let text = builtin_json(name).ok_or_else(|| Error::Scenario {
        pointer: String::new(),
        message: format!("unknown built-in `{name}`; available: {}", BUILTIN_NAMES.join(", ")),
    })?;
    Scenario::from_json(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_builtins_load() {
        for name in BUILTIN_NAMES {
            let s = builtin(name).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(s.name, name);
        }
        assert!(matches!(builtin("nope"), Err(Error::Scenario { .. })));
    }

    #[test]
    fn particle_contents() {
        let s = builtin("nonholonomic_particle").unwrap();
        assert_eq!((s.n(), s.m()), (3, 2));
        assert!(s.fields.contains_key("momentum_y"));
        assert_eq!(s.tensors["A"].degree, 2);
    }
}
