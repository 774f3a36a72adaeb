//! Built-in benchmark maps.

use celab_core::ratmap::MapSpec;
use serde::Serialize;

use crate::error::LabError;

#[derive(Clone, Debug, Serialize)]
pub struct Benchmark {
    pub name: &'static str,
    pub description: &'static str,
    pub map: MapSpec,
    /// Value of the free parameter, for parametrized families.
    pub parameter: Option<[f64; 2]>,
}

const NAMES: [&str; 5] = ["chebyshev", "misiurewicz_i", "power2", "basilica", "multicrit"];

/// Default constant term of `multicrit`.
pub const MULTICRIT_C: [f64; 2] = [4.0 / 3.0, 0.0];

fn quadratic(c: [f64; 2]) -> MapSpec {
    MapSpec {
        numerator: vec![c, [0.0, 0.0], [1.0, 0.0]],
        denominator: vec![[1.0, 0.0]],
    }
}

pub fn registry() -> Vec<Benchmark> {
    NAMES.iter().map(|n| lookup(n, None).expect("built-in")).collect()
}

/// The benchmark named `name`. `param` sets the free parameter of
/// `multicrit` and is refused for the fixed maps.
pub fn lookup(name: &str, param: Option<[f64; 2]>) -> Result<Benchmark, LabError> {
    if param.is_some() && name != "multicrit" {
        return Err(LabError::config("--param", format!("map `{name}` takes no parameter")));
    }
    let b = match name {
        "chebyshev" => Benchmark {
            name: "chebyshev",
            description: "z² − 2; critical value lands on the repelling fixed point 2",
            map: quadratic([-2.0, 0.0]),
            parameter: None,
        },
        "misiurewicz_i" => Benchmark {
            name: "misiurewicz_i",
            description: "z² + i; critical orbit falls onto the repelling 2-cycle {−1+i, −i}",
            map: quadratic([0.0, 1.0]),
            parameter: None,
        },
        "power2" => Benchmark {
            name: "power2",
            description: "z²; hyperbolic, Julia set the unit circle, no critical point in J",
            map: quadratic([0.0, 0.0]),
            parameter: None,
        },
        "basilica" => Benchmark {
            name: "basilica",
            description: "z² − 1; critical point on the superattracting cycle {0, −1}",
            map: quadratic([-1.0, 0.0]),
            parameter: None,
        },
        "multicrit" => {
            let c = param.unwrap_or(MULTICRIT_C);
            Benchmark {
                name: "multicrit",
                description: "3z⁴ − 4z³ + c; critical points 0 (local degree 3) and 1 (local degree 2)",
                map: MapSpec {
                    numerator: vec![c, [0.0, 0.0], [0.0, 0.0], [-4.0, 0.0], [3.0, 0.0]],
                    denominator: vec![[1.0, 0.0]],
                },
                parameter: Some(c),
            }
        }
        _ => {
            return Err(LabError::config(
                "--map",
                format!("unknown map `{name}`; known: {}", NAMES.join(", ")),
            ))
        }
    };
    Ok(b)
}
