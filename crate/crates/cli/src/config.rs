//! Pipeline configuration files.
//!
//! Plain TOML with the stage switches and clip policy:
//!
//! ```toml
//! do_gray = true
//! do_equalize = true
//!
//! [clip]
//! kind = "foreground-fraction"   # or "central-range" or "off"
//! tau = 0.10
//! keep_lo = 0.20
//! keep_hi = 0.80
//! ```

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use neuroprep::preprocess::{
    ClipPolicy, PipelineConfig, DEFAULT_KEEP_HI, DEFAULT_KEEP_LO, DEFAULT_TAU,
};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    #[serde(default = "on")]
    do_gray: bool,
    #[serde(default = "on")]
    do_equalize: bool,
    #[serde(default)]
    clip: ClipSection,
}

fn on() -> bool {
    true
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClipSection {
    kind: Option<String>,
    tau: Option<f64>,
    keep_lo: Option<f64>,
    keep_hi: Option<f64>,
}

/// Reads a pipeline config, or the defaults when `path` is `None`.
pub fn load_pipeline_config(path: Option<&Path>) -> Result<PipelineConfig> {
    let Some(path) = path else {
        return Ok(PipelineConfig::default());
    };
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let file: ConfigFile = toml::from_str(&text)
        .with_context(|| format!("parsing config {}", path.display()))?;

    let clip = match file.clip.kind.as_deref().unwrap_or("foreground-fraction") {
        "off" => None,
        "foreground-fraction" => Some(ClipPolicy::ForegroundFraction {
            tau: file.clip.tau.unwrap_or(DEFAULT_TAU),
        }),
        "central-range" => Some(ClipPolicy::CentralRange {
            keep_lo: file.clip.keep_lo.unwrap_or(DEFAULT_KEEP_LO),
            keep_hi: file.clip.keep_hi.unwrap_or(DEFAULT_KEEP_HI),
        }),
        other => bail!("unknown clip.kind {other:?} in {}", path.display()),
    };
    Ok(PipelineConfig { do_gray: file.do_gray, do_equalize: file.do_equalize, clip })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn parse(toml_text: &str) -> Result<PipelineConfig> {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(toml_text.as_bytes()).unwrap();
        load_pipeline_config(Some(f.path()))
    }

    #[test]
    fn defaults_when_no_file() {
        let cfg = load_pipeline_config(None).unwrap();
        assert_eq!(cfg, PipelineConfig::default());
    }

    #[test]
    fn parses_full_config() {
        let cfg = parse(
            "do_gray = false\ndo_equalize = true\n[clip]\nkind = \"central-range\"\nkeep_lo = 0.3\nkeep_hi = 0.7\n",
        )
        .unwrap();
        assert!(!cfg.do_gray);
        assert_eq!(cfg.clip, Some(ClipPolicy::CentralRange { keep_lo: 0.3, keep_hi: 0.7 }));
    }

    #[test]
    fn clip_off_and_unknown_kind() {
        let cfg = parse("[clip]\nkind = \"off\"\n").unwrap();
        assert_eq!(cfg.clip, None);
        assert!(parse("[clip]\nkind = \"nonsense\"\n").is_err());
    }

    #[test]
    fn missing_values_fall_back_to_defaults() {
        let cfg = parse("").unwrap();
        assert_eq!(cfg, PipelineConfig::default());
        let cfg = parse("[clip]\nkind = \"foreground-fraction\"\n").unwrap();
        assert_eq!(cfg.clip, Some(ClipPolicy::ForegroundFraction { tau: DEFAULT_TAU }));
    }
}
