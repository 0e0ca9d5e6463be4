//! Column schema for pipe-separated cohort directories.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn default_t_min() -> usize {
    1
}

/// Names the dynamic, static, and label columns of a cohort and bounds the
/// visit count. Columns present in a file but not named here are ignored.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchemaConfig {
    pub dynamic: Vec<String>,
    #[serde(rename = "static")]
    pub statics: Vec<String>,
    pub label: String,
    /// Patients with fewer visits are dropped (and counted) at load time.
    #[serde(default = "default_t_min")]
    pub t_min: usize,
    /// Patients with more visits keep only the most recent `t_max`.
    #[serde(default)]
    pub t_max: Option<usize>,
}

impl SchemaConfig {
    pub fn new(dynamic: Vec<String>, statics: Vec<String>, label: String) -> Result<Self> {
        let schema = SchemaConfig {
            dynamic,
            statics,
            label,
            t_min: default_t_min(),
            t_max: None,
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let schema: SchemaConfig = serde_json::from_str(&text).map_err(|e| {
            Error::Config(format!("schema {}: {e}", path.display()))
        })?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn to_file(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("schema serialization: {e}")))?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.dynamic.is_empty() {
            return Err(Error::Config("schema names no dynamic columns".into()));
        }
        if self.t_min == 0 {
            return Err(Error::Config("t_min must be at least 1".into()));
        }
        if let Some(t_max) = self.t_max {
            if t_max < self.t_min {
                return Err(Error::Config(format!(
                    "t_max {t_max} is below t_min {}",
                    self.t_min
                )));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for name in self
            .dynamic
            .iter()
            .chain(self.statics.iter())
            .chain(std::iter::once(&self.label))
        {
            if !seen.insert(name.as_str()) {
                return Err(Error::Config(format!("column {name} named twice in schema")));
            }
        }
        Ok(())
    }
}
