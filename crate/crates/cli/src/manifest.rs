use chrono::{DateTime, SecondsFormat, Utc};
use collapse_core::RngStream;
use serde::Serialize;
use serde_json::Value;

use crate::error::Result;
use crate::output::{to_json, OutDir};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Describes one CLI invocation and the files it produced. Written last, so
/// its presence means every listed output exists.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub artifact: String,
    pub version: String,
    pub subcommand: String,
    pub config_digest: Option<String>,
    pub master_seed: Option<u64>,
    pub seed_policy: String,
    pub started_at: String,
    pub finished_at: String,
    pub outputs: Vec<String>,
    pub details: Value,
}

fn timestamp(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Millis, true)
}

#[derive(Debug)]
pub struct ManifestBuilder {
    subcommand: String,
    config_digest: Option<String>,
    master_seed: Option<u64>,
    started: DateTime<Utc>,
}

impl ManifestBuilder {
    pub fn start(subcommand: &str) -> Self {
        ManifestBuilder {
            subcommand: subcommand.to_string(),
            config_digest: None,
            master_seed: None,
            started: Utc::now(),
        }
    }

    pub fn config(mut self, digest: String, master_seed: u64) -> Self {
        self.config_digest = Some(digest);
        self.master_seed = Some(master_seed);
        self
    }

    pub fn finish(self, out: &mut OutDir, details: Value) -> Result<RunManifest> {
        let manifest = RunManifest {
            artifact: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            subcommand: self.subcommand,
            config_digest: self.config_digest,
            master_seed: self.master_seed,
            seed_policy: RngStream::POLICY.to_string(),
            started_at: timestamp(self.started),
            finished_at: timestamp(Utc::now()),
            outputs: out.written().to_vec(),
            details,
        };
        out.write(MANIFEST_FILE, &to_json(&manifest)?)?;
        Ok(manifest)
    }
}
