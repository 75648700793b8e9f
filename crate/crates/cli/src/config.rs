//! TOML run configuration. Every section is optional; command-line flags
//! override whatever is set here.

use std::path::{Path, PathBuf};

use geoqc_core::models::{GlobalModelConfig, LocalModelConfig};
use geoqc_core::nn::AdamConfig;
use geoqc_core::pipeline::RefineOptions;
use serde::Deserialize;

use crate::CliError;

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub n: Option<usize>,
    #[serde(rename = "N")]
    pub segments: Option<usize>,
    pub norm_bound: Option<f64>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub global: NetworkSection,
    #[serde(default)]
    pub local: NetworkSection,
    #[serde(default)]
    pub refine: Option<RefineOptions>,
    #[serde(default)]
    pub paths: PathsSection,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub global_count: Option<usize>,
    pub local_count: Option<usize>,
    /// Held-out tail of every dataset; 0 validates on the training set.
    pub validation: Option<usize>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub clip_norm: Option<f64>,
    /// Global network only.
    pub gru_layers: Option<usize>,
    pub encoder_layers: Option<usize>,
    pub hidden_size: Option<usize>,
    /// Local network only.
    pub hidden: Option<Vec<usize>>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsSection {
    pub global_data: Option<PathBuf>,
    pub local_data: Option<PathBuf>,
    pub global_model: Option<PathBuf>,
    pub local_model: Option<PathBuf>,
}

fn positive(name: &str, v: Option<usize>) -> Result<(), CliError> {
    match v {
        Some(0) => Err(CliError::usage(format!("config: {name} must be positive"))),
        _ => Ok(()),
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: RunConfig =
            toml::from_str(&text).map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if let Some(n) = self.n {
            if !(2..=6).contains(&n) {
                return Err(CliError::usage(format!("config: n = {n} outside 2..=6")));
            }
        }
        positive("N", self.segments)?;
        if let Some(b) = self.norm_bound {
            if !(b > 0.0 && b.is_finite()) {
                return Err(CliError::usage(format!("config: norm_bound must be positive, got {b}")));
            }
        }
        positive("data.global_count", self.data.global_count)?;
        positive("data.local_count", self.data.local_count)?;
        for (name, s) in [("global", &self.global), ("local", &self.local)] {
            positive(&format!("{name}.epochs"), s.epochs)?;
            positive(&format!("{name}.batch_size"), s.batch_size)?;
            positive(&format!("{name}.hidden_size"), s.hidden_size)?;
            if let Some(lr) = s.learning_rate {
                if !(lr > 0.0 && lr.is_finite()) {
                    return Err(CliError::usage(format!(
                        "config: {name}.learning_rate must be positive"
                    )));
                }
            }
        }
        if self.global.hidden.is_some() {
            return Err(CliError::usage(
                "config: global.hidden is not a global-network setting (use hidden_size)",
            ));
        }
        if self.local.hidden_size.is_some() || self.local.gru_layers.is_some() || self.local.encoder_layers.is_some() {
            return Err(CliError::usage("config: local network takes `hidden = [..]` only"));
        }
        if let Some(r) = &self.refine {
            if !(r.tol >= 0.0 && r.fd_step > 0.0) {
                return Err(CliError::usage(
                    "config: refine.tol must be >= 0 and refine.fd_step > 0",
                ));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n.unwrap_or(3)
    }

    pub fn segments(&self) -> usize {
        self.segments.unwrap_or(10)
    }

    fn adam(s: &NetworkSection) -> AdamConfig {
        let mut a = AdamConfig::default();
        if let Some(lr) = s.learning_rate {
            a.learning_rate = lr;
        }
        a
    }

    pub fn global_model(&self) -> GlobalModelConfig {
        let d = GlobalModelConfig::default();
        let s = &self.global;
        GlobalModelConfig {
            n: self.n(),
            segments: self.segments(),
            gru_layers: s.gru_layers.unwrap_or(d.gru_layers),
            encoder_layers: s.encoder_layers.unwrap_or(d.encoder_layers),
            hidden_size: s.hidden_size.unwrap_or(d.hidden_size),
            epochs: s.epochs.unwrap_or(d.epochs),
            batch_size: s.batch_size.unwrap_or(d.batch_size),
            adam: Self::adam(s),
            clip_norm: s.clip_norm.or(d.clip_norm),
        }
    }

    pub fn local_model(&self) -> LocalModelConfig {
        let d = LocalModelConfig::default();
        let s = &self.local;
        LocalModelConfig {
            n: self.n(),
            hidden: s.hidden.clone().unwrap_or(d.hidden),
            epochs: s.epochs.unwrap_or(d.epochs),
            batch_size: s.batch_size.unwrap_or(d.batch_size),
            adam: Self::adam(s),
            clip_norm: s.clip_norm.or(d.clip_norm),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_config_parses() {
        let cfg: RunConfig = toml::from_str(
            r#"
            n = 3
            N = 10
            seed = 7
            [data]
            global_count = 5000
            validation = 500
            [global]
            hidden_size = 32
            epochs = 150
            [local]
            hidden = [2000, 2000]
            [refine]
            max_iters = 100
            [paths]
            global_data = "runs/global.jsonl"
            "#,
        )
        .unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.global_model().hidden_size, 32);
        assert_eq!(cfg.global_model().gru_layers, 10);
        assert_eq!(cfg.local_model().epochs, 500);
        assert_eq!(cfg.refine.unwrap().max_iters, 100);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<RunConfig>("n = 3\nfoo = 1\n").is_err());
        assert!(toml::from_str::<RunConfig>("[global]\nwidth = 3\n").is_err());
        assert!(toml::from_str::<RunConfig>("[refine]\nsteps = 3\n").is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        let bad = toml::from_str::<RunConfig>("n = 1\n").unwrap();
        assert!(bad.validate().is_err());
        let bad = toml::from_str::<RunConfig>("[local]\nepochs = 0\n").unwrap();
        assert!(bad.validate().is_err());
        let bad = toml::from_str::<RunConfig>("[local]\nhidden_size = 4\n").unwrap();
        assert!(bad.validate().is_err());
    }
}
