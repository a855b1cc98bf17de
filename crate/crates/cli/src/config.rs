use std::env;
use std::fs;
use std::path::{Path, PathBuf};

use meshstyle::models::ModelConfig;
use meshstyle::TrainConfig;

use crate::args::TrainOverrides;
use crate::error::{io, Failure};

pub const OUT_DIR_ENV: &str = "MESHSTYLE_OUT_DIR";

/// `explicit`, else `$MESHSTYLE_OUT_DIR/<name>`, else `out/<name>`.
pub fn output_dir(explicit: Option<&Path>, name: &str) -> PathBuf {
    match explicit {
        Some(p) => p.to_owned(),
        None => env::var_os(OUT_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("out"))
            .join(name),
    }
}

/// Reads a training config; `.json` files are JSON, anything else TOML.
pub fn load_train_config(path: &Path) -> Result<TrainConfig, Failure> {
    let text = fs::read_to_string(path).map_err(io(path))?;
    let parsed = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    } else {
        toml::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| Failure::usage(format!("invalid config {}: {e}", path.display())))
}

impl TrainOverrides {
    pub fn is_empty(&self) -> bool {
        self.batch_size.is_none()
            && self.lr.is_none()
            && self.generator_lr.is_none()
            && self.discriminator_lr.is_none()
            && self.seed.is_none()
            && self.checkpoint_every.is_none()
            && self.eval_every.is_none()
            && self.width_divisor.is_none()
            && !self.no_discriminator
    }

    pub fn apply(&self, mut c: TrainConfig) -> TrainConfig {
        if let Some(v) = self.steps {
            c.steps = v;
        }
        if let Some(v) = self.batch_size {
            c.batch_size = v;
        }
        if let Some(v) = self.lr {
            c.generator_lr = v;
            c.discriminator_lr = v;
        }
        if let Some(v) = self.generator_lr {
            c.generator_lr = v;
        }
        if let Some(v) = self.discriminator_lr {
            c.discriminator_lr = v;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.checkpoint_every {
            c.checkpoint_every = v;
        }
        if let Some(v) = self.eval_every {
            c.eval_every = v;
        }
        if let Some(v) = self.width_divisor {
            c.model = ModelConfig::scaled_down(v);
        }
        if self.no_discriminator {
            c.use_discriminator = false;
        }
        c
    }
}
