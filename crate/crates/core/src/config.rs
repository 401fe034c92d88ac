//! JSON run configuration: site, layout and simulation options.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par::{LhiMode, Yang2Coefficients};
use crate::scene::{validate_config, Diagnostic, LayoutConfig, SiteConfig, SystemKind};
use crate::skydiffuse::DomeGrid;
use crate::tracking::SecondAxisMode;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed config at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid config: {}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Diagnostic>),
}

/// A site given either by preset name or in full.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SiteSpec {
    Preset(String),
    Explicit(SiteConfig),
}

impl SiteSpec {
    pub fn resolve(&self) -> Result<SiteConfig, ConfigError> {
        match self {
            SiteSpec::Explicit(s) => Ok(s.clone()),
            SiteSpec::Preset(name) => {
                match name.to_ascii_lowercase().replace(['-', ' '], "_").as_str() {
                    "vasteras" => Ok(SiteConfig::vasteras()),
                    "lanna" => Ok(SiteConfig::lanna()),
                    "estrees_mons" => Ok(SiteConfig::estrees_mons()),
                    "klingenberg" => Ok(SiteConfig::klingenberg()),
                    _ => Err(ConfigError::Invalid(vec![Diagnostic::new(
                        "site",
                        name.clone(),
                        "unknown preset (vasteras, lanna, estrees_mons, klingenberg)",
                    )])),
                }
            }
        }
    }
}

/// A layout given either by system kind (reference design) or in full.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LayoutSpec {
    Preset(SystemKind),
    Explicit(LayoutConfig),
}

impl LayoutSpec {
    pub fn resolve(&self) -> LayoutConfig {
        match self {
            LayoutSpec::Explicit(l) => l.clone(),
            LayoutSpec::Preset(SystemKind::Vertical) => LayoutConfig::vertical(),
            LayoutSpec::Preset(SystemKind::OneAxis) => LayoutConfig::one_axis(),
            LayoutSpec::Preset(SystemKind::TwoAxis) => LayoutConfig::two_axis(),
        }
    }
}

/// How diffuse shading is applied to the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiffuseMode {
    /// Each cell uses its own dome-blocked fraction.
    #[default]
    PerCell,
    /// Every cell uses the crop-wide mean factor.
    AggregateUniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationOptions {
    /// Sky dome angular step [deg]; must divide 90.
    pub dome_step: f64,
    /// Pose-cache bucket width [deg].
    pub pose_bucket: f64,
    pub tracking_mode: SecondAxisMode,
    pub lhi_mode: LhiMode,
    pub diffuse_mode: DiffuseMode,
    pub coefficients: Yang2Coefficients,
    /// Worker threads; `None` uses all available cores.
    pub workers: Option<usize>,
    /// Fail when records cover less than 95 % of the year's daylight hours.
    pub require_full_year: bool,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        Self {
            dome_step: 1.0,
            pose_bucket: 0.1,
            tracking_mode: SecondAxisMode::default(),
            lhi_mode: LhiMode::default(),
            diffuse_mode: DiffuseMode::default(),
            coefficients: Yang2Coefficients::default(),
            workers: None,
            require_full_year: true,
        }
    }
}

impl SimulationOptions {
    pub fn dome(&self) -> DomeGrid {
        DomeGrid::new(self.dome_step)
    }

    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        if !(self.dome_step > 0.0
            && self.dome_step <= 45.0
            && (90.0 / self.dome_step).fract().abs() < 1e-9)
        {
            out.push(Diagnostic::new(
                "options.dome_step",
                self.dome_step,
                "must be positive and divide 90",
            ));
        }
        if !(self.pose_bucket > 0.0 && self.pose_bucket <= 10.0) {
            out.push(Diagnostic::new(
                "options.pose_bucket",
                self.pose_bucket,
                "must lie in (0, 10]",
            ));
        }
        if self.workers == Some(0) {
            out.push(Diagnostic::new("options.workers", 0, "must be at least 1"));
        }
        if !self
            .coefficients
            .beta
            .iter()
            .chain([&self.coefficients.c])
            .all(|v| v.is_finite())
        {
            out.push(Diagnostic::new(
                "options.coefficients",
                "non-finite",
                "must be finite",
            ));
        }
        out
    }
}

/// Top-level run configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub site: SiteSpec,
    pub layout: LayoutSpec,
    #[serde(default)]
    pub options: SimulationOptions,
}

/// A configuration with presets expanded and all checks passed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConfig {
    pub site: SiteConfig,
    pub layout: LayoutConfig,
    pub options: SimulationOptions,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn resolve(&self) -> Result<ResolvedConfig, ConfigError> {
        let site = self.site.resolve()?;
        let layout = self.layout.resolve();
        let mut diags = validate_config(&layout, &site);
        diags.extend(self.options.validate());
        if !diags.is_empty() {
            return Err(ConfigError::Invalid(diags));
        }
        Ok(ResolvedConfig {
            site,
            layout,
            options: self.options.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_resolve() {
        let c = RunConfig::from_json(r#"{"site": "lanna", "layout": "two_axis"}"#).unwrap();
        let r = c.resolve().unwrap();
        assert_eq!(r.site, SiteConfig::lanna());
        assert_eq!(r.layout, LayoutConfig::two_axis());
        assert_eq!(r.options, SimulationOptions::default());
    }

    #[test]
    fn explicit_layout_and_options() {
        let layout = serde_json::to_value(LayoutConfig::one_axis()).unwrap();
        let text = serde_json::json!({
            "site": {"latitude": 50.0, "longitude": 10.0, "elevation": 100.0},
            "layout": layout,
            "options": {"dome_step": 2.0, "lhi_mode": "variance", "tracking_mode": "paper-literal"}
        })
        .to_string();
        let r = RunConfig::from_json(&text).unwrap().resolve().unwrap();
        assert_eq!(r.options.dome_step, 2.0);
        assert_eq!(r.options.lhi_mode, LhiMode::Variance);
        assert_eq!(r.options.tracking_mode, SecondAxisMode::PaperLiteral);
    }

    #[test]
    fn parse_errors_carry_position() {
        let e = RunConfig::from_json("{\n  \"site\": \"lanna\",\n  \"layout\": }").unwrap_err();
        assert!(matches!(e, ConfigError::Parse { line: 3, .. }), "{e}");
        let e = RunConfig::from_json(r#"{"site": "lanna", "layout": "one_axis", "extra": 1}"#)
            .unwrap_err();
        assert!(matches!(e, ConfigError::Parse { .. }));
    }

    #[test]
    fn invalid_values_are_reported() {
        let c = RunConfig::from_json(r#"{"site": "atlantis", "layout": "vertical"}"#).unwrap();
        assert!(matches!(c.resolve(), Err(ConfigError::Invalid(_))));
        let c = RunConfig::from_json(
            r#"{"site": "lanna", "layout": "vertical", "options": {"dome_step": 7}}"#,
        )
        .unwrap();
        let Err(ConfigError::Invalid(d)) = c.resolve() else {
            panic!()
        };
        assert_eq!(d[0].field, "options.dome_step");
    }
}
