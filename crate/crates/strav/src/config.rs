//! Pipeline settings from a TOML file. Keys are the [`PipelineConfig`]
//! field names; anything else is rejected.

use std::path::Path;

use serde::Deserialize;
use strav_core::alignment::AlignmentMode;
use strav_core::pipeline::PipelineConfig;
use strav_core::residual::AssemblyMode;

use crate::error::{io, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Alignment {
    Joint,
    AffineOnly,
    FlowOnly,
}

impl From<Alignment> for AlignmentMode {
    fn from(a: Alignment) -> Self {
        match a {
            Alignment::Joint => AlignmentMode::Joint,
            Alignment::AffineOnly => AlignmentMode::AffineOnly,
            Alignment::FlowOnly => AlignmentMode::FlowOnly,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Assembly {
    Bilinear,
    Temporal,
    TemporalSpatial,
}

impl From<Assembly> for AssemblyMode {
    fn from(a: Assembly) -> Self {
        match a {
            Assembly::Bilinear => AssemblyMode::Bilinear,
            Assembly::Temporal => AssemblyMode::Temporal,
            Assembly::TemporalSpatial => AssemblyMode::TemporalSpatial,
        }
    }
}

/// Every field optional; unset fields keep their current value.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    pub scale: Option<usize>,
    pub reference_window: Option<usize>,
    pub flow_radius: Option<usize>,
    pub temperature: Option<f32>,
    pub spatial_temperature: Option<f32>,
    pub patch: Option<usize>,
    pub visible_threshold: Option<f32>,
    pub emit_intermediates: Option<bool>,
    pub pyramid_levels: Option<usize>,
    pub alignment: Option<Alignment>,
    pub assembly: Option<Assembly>,
}

impl ConfigOverrides {
    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io(path))?;
        Self::parse(&text).map_err(|message| Error::Config { path: path.into(), message })
    }

    pub fn apply(&self, cfg: &mut PipelineConfig) {
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { cfg.$f = v.into(); })* };
        }
        set!(
            scale,
            reference_window,
            flow_radius,
            temperature,
            spatial_temperature,
            patch,
            visible_threshold,
            emit_intermediates,
            pyramid_levels,
            alignment,
            assembly
        );
    }

    /// `other` wins wherever it sets a field.
    pub fn merged(&self, other: &ConfigOverrides) -> ConfigOverrides {
        macro_rules! pick {
            ($($f:ident),*) => { ConfigOverrides { $($f: other.$f.or(self.$f)),* } };
        }
        pick!(
            scale,
            reference_window,
            flow_radius,
            temperature,
            spatial_temperature,
            patch,
            visible_threshold,
            emit_intermediates,
            pyramid_levels,
            alignment,
            assembly
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_file() {
        let text = "scale = 2\nreference_window = 7\nflow_radius = 1\ntemperature = 0.25\nspatial_temperature = 0.75\n\
                    patch = 4\nvisible_threshold = 0.01\nemit_intermediates = true\npyramid_levels = 2\n\
                    alignment = \"affine-only\"\nassembly = \"temporal\"\n";
        let mut cfg = PipelineConfig::default();
        ConfigOverrides::parse(text).unwrap().apply(&mut cfg);
        assert_eq!(
            cfg,
            PipelineConfig {
                scale: 2,
                reference_window: 7,
                flow_radius: 1,
                temperature: 0.25,
                spatial_temperature: 0.75,
                patch: 4,
                visible_threshold: 0.01,
                emit_intermediates: true,
                pyramid_levels: 2,
                alignment: AlignmentMode::AffineOnly,
                assembly: AssemblyMode::Temporal,
            }
        );
    }

    #[test]
    fn empty_file_keeps_defaults() {
        let mut cfg = PipelineConfig::default();
        ConfigOverrides::parse("").unwrap().apply(&mut cfg);
        assert_eq!(cfg, PipelineConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ConfigOverrides::parse("scales = 4").is_err());
        assert!(ConfigOverrides::parse("scale = \"four\"").is_err());
    }

    #[test]
    fn later_overrides_win() {
        let file = ConfigOverrides::parse("scale = 2\npatch = 4").unwrap();
        let cli = ConfigOverrides { scale: Some(8), ..Default::default() };
        let m = file.merged(&cli);
        assert_eq!((m.scale, m.patch), (Some(8), Some(4)));
    }
}
