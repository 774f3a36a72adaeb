//! Run configuration: JSON in, validated [`RunConfig`] out.
//!
//! Every section is optional and falls back to the defaults below; the
//! resolved configuration is written back into each report so a run can be
//! repeated from its output alone.

use celab_core::backward::Scale;
use celab_core::cover::BranchMode;
use celab_core::ratmap::{JuliaOverride, MapSpec};
use celab_core::{RationalMap, SpherePoint};
use serde::{Deserialize, Serialize};

use crate::error::LabError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Ascending `[re, im]` coefficients. May be left empty when the map is
    /// picked from the registry on the command line.
    #[serde(default)]
    pub numerator: Vec<[f64; 2]>,
    #[serde(default = "unit_denominator")]
    pub denominator: Vec<[f64; 2]>,
    #[serde(default)]
    pub julia_overrides: Vec<JuliaOverride>,
    #[serde(default)]
    pub horizons: Horizons,
    #[serde(default)]
    pub scale: ScaleConfig,
    #[serde(default)]
    pub radii: Radii,
    #[serde(default)]
    pub tce: TceConfig,
    #[serde(default)]
    pub expshrink: ExpShrinkConfig,
    #[serde(default)]
    pub sr: SrConfig,
    #[serde(default)]
    pub samples: Samples,
    #[serde(default)]
    pub output: Output,
    #[serde(default)]
    pub seed: u64,
}

fn unit_denominator() -> Vec<[f64; 2]> {
    vec![[1.0, 0.0]]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Horizons {
    /// Forward orbit length `N` for CE and SR.
    pub forward: usize,
    /// Backward depth `n` for CE2.
    pub backward: usize,
    /// Pullback depth for ExpShrink and the TCE horizon.
    pub cover: usize,
    /// Iterations spent classifying critical points.
    pub julia: usize,
}

impl Default for Horizons {
    fn default() -> Self {
        Horizons {
            forward: 100,
            backward: 10,
            cover: 10,
            julia: 500,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScaleConfig {
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(rename = "R_prime")]
    pub r_prime: f64,
}

impl Default for ScaleConfig {
    fn default() -> Self {
        let s = Scale::default();
        ScaleConfig { r: s.r, r_prime: s.r_prime }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Radii {
    pub tce: f64,
    pub expshrink: f64,
}

impl Default for Radii {
    fn default() -> Self {
        Radii { tce: 0.3, expshrink: 0.1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TceConfig {
    #[serde(rename = "M")]
    pub m: i64,
    #[serde(rename = "P")]
    pub p: usize,
    /// Base point; the first repelling fixed point when absent.
    pub point: Option<SpherePoint>,
}

impl Default for TceConfig {
    fn default() -> Self {
        TceConfig { m: 0, p: 1, point: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExpShrinkConfig {
    /// Single base point; Julia-set samples are drawn when absent.
    pub anchor: Option<SpherePoint>,
    pub branch: BranchMode,
    pub base_samples: usize,
    pub branch_samples: usize,
}

impl Default for ExpShrinkConfig {
    fn default() -> Self {
        ExpShrinkConfig {
            anchor: None,
            branch: BranchMode::Random,
            base_samples: 16,
            branch_samples: 4,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SrConfig {
    /// Constant of the fit `dₙ ≥ C e^{−αn}`. When absent, the smallest
    /// distance over the first half of the horizon.
    #[serde(rename = "C")]
    pub c: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Samples {
    /// Vertices per lifted circle.
    pub curve: usize,
    /// Julia-set sample used by the TCE membership check.
    pub julia: usize,
    /// Grid size for the supremum of the spherical derivative.
    pub sup_deriv: usize,
}

impl Default for Samples {
    fn default() -> Self {
        Samples {
            curve: 256,
            julia: 4096,
            sup_deriv: 4096,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Output {
    pub dir: String,
    pub report: String,
    pub series: String,
    pub plots: String,
}

impl Default for Output {
    fn default() -> Self {
        Output {
            dir: "celab-out".into(),
            report: "report.json".into(),
            series: "series.csv".into(),
            plots: "plots.svg".into(),
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            numerator: Vec::new(),
            denominator: unit_denominator(),
            julia_overrides: Vec::new(),
            horizons: Horizons::default(),
            scale: ScaleConfig::default(),
            radii: Radii::default(),
            tce: TceConfig::default(),
            expshrink: ExpShrinkConfig::default(),
            sr: SrConfig::default(),
            samples: Samples::default(),
            output: Output::default(),
            seed: 0,
        }
    }
}

/// Parses and validates a JSON configuration.
pub fn parse_config(text: &str) -> Result<RunConfig, LabError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        LabError::config(path, e.into_inner().to_string())
    })?;
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    pub fn with_map(mut self, spec: &MapSpec) -> Self {
        self.numerator = spec.numerator.clone();
        self.denominator = spec.denominator.clone();
        self
    }

    pub fn map_spec(&self) -> MapSpec {
        MapSpec {
            numerator: self.numerator.clone(),
            denominator: self.denominator.clone(),
        }
    }

    /// The map, or a config error when none is given or it is invalid.
    pub fn map(&self) -> Result<RationalMap, LabError> {
        if self.numerator.is_empty() {
            return Err(LabError::config(
                "numerator",
                "no map given (set numerator/denominator or pass --map)",
            ));
        }
        RationalMap::try_from(self.map_spec()).map_err(|e| LabError::config("numerator", e.to_string()))
    }

    pub fn scale(&self) -> Result<Scale, LabError> {
        Scale::new(self.scale.r, self.scale.r_prime).map_err(|e| LabError::config("scale", e.to_string()))
    }

    /// Checks every invariant except the presence of a map, which may still
    /// come from the command line.
    pub fn validate(&self) -> Result<(), LabError> {
        let h = &self.horizons;
        for (key, v) in [
            ("horizons.forward", h.forward),
            ("horizons.backward", h.backward),
            ("horizons.cover", h.cover),
            ("horizons.julia", h.julia),
        ] {
            if v < 1 {
                return Err(LabError::config(key, "horizon must be ≥ 1"));
            }
        }
        if h.backward > 40 {
            return Err(LabError::config("horizons.backward", "depth above 40 is out of reach"));
        }
        self.scale()?;
        for (key, r) in [("radii.tce", self.radii.tce), ("radii.expshrink", self.radii.expshrink)] {
            if !(r > 0.0 && r < 2.0) {
                return Err(LabError::config(key, format!("radius must lie in (0, 2), got {r}")));
            }
        }
        if self.tce.m < 0 {
            return Err(LabError::config("tce.M", "M must be ≥ 0"));
        }
        if self.tce.p < 1 {
            return Err(LabError::config("tce.P", "P must be ≥ 1"));
        }
        if let Some(c) = self.sr.c {
            if !(c > 0.0) {
                return Err(LabError::config("sr.C", format!("C must be positive, got {c}")));
            }
        }
        for (key, v) in [
            ("expshrink.base_samples", self.expshrink.base_samples),
            ("expshrink.branch_samples", self.expshrink.branch_samples),
            ("samples.julia", self.samples.julia),
            ("samples.sup_deriv", self.samples.sup_deriv),
        ] {
            if v < 1 {
                return Err(LabError::config(key, "sample count must be ≥ 1"));
            }
        }
        if self.samples.curve < 8 {
            return Err(LabError::config("samples.curve", "need at least 8 vertices per circle"));
        }
        if !self.numerator.is_empty() {
            self.map()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use celab_core::ratmap::{critical_points, julia_classify};

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse_config(r#"{"numerator": [[-2,0],[0,0],[1,0]], "denominator": [[1,0]]}"#).unwrap();
        assert_eq!(cfg.horizons, Horizons::default());
        assert_eq!(cfg.scale.r, 0.1);
        assert_eq!(cfg.seed, 0);
        let f = cfg.map().unwrap();
        assert_eq!(f.degree(), 2);
        let v = f.eval(SpherePoint::real(3.0)).finite().unwrap();
        assert!((v.re - 7.0).abs() < 1e-12);
    }

    #[test]
    fn degree_one_is_rejected() {
        let err = parse_config(r#"{"numerator": [[0,0],[1,0]]}"#).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("degree ≥ 2"), "{err}");
    }

    #[test]
    fn unknown_keys_carry_their_path() {
        let err = parse_config(r#"{"numerator": [[0,0],[0,0],[1,0]], "horizons": {"forwrd": 3}}"#).unwrap_err();
        match err {
            LabError::Config { path, .. } => assert_eq!(path, "horizons.forwrd"),
            e => panic!("{e}"),
        }
        let err = parse_config(r#"{"numerator": [[0,0],[0,0],[1,0]], "scale": {"R": "big"}}"#).unwrap_err();
        match err {
            LabError::Config { path, .. } => assert_eq!(path, "scale.R"),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn invariants_are_checked() {
        for bad in [
            r#"{"horizons": {"forward": 0}}"#,
            r#"{"scale": {"R": 0.01, "R_prime": 0.1}}"#,
            r#"{"radii": {"tce": 2.5}}"#,
            r#"{"tce": {"P": 0}}"#,
            r#"{"sr": {"C": -1}}"#,
        ] {
            assert!(matches!(parse_config(bad), Err(LabError::Config { .. })), "{bad}");
        }
        assert!(parse_config("{not json").is_err());
    }

    #[test]
    fn overrides_reach_the_critical_set() {
        let cfg = parse_config(
            r#"{"numerator": [[0,0],[0,0],[1,0]], "julia_overrides": [{"point": [0,0], "in_julia": true}]}"#,
        )
        .unwrap();
        let f = cfg.map().unwrap();
        let cs = julia_classify(&f, &critical_points(&f), 500, &cfg.julia_overrides);
        let zero = cs.find(SpherePoint::ZERO, 1e-12).unwrap();
        assert!(zero.in_julia);
        let inf = cs.find(SpherePoint::Infinity, 1e-12).unwrap();
        assert!(!inf.in_julia);
    }

    #[test]
    fn round_trips() {
        let cfg = RunConfig::default().with_map(&MapSpec {
            numerator: vec![[0.0, 1.0], [0.0, 0.0], [1.0, 0.0]],
            denominator: vec![[1.0, 0.0]],
        });
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(parse_config(&text).unwrap(), cfg);
    }
}
