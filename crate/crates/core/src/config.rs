//! Pipeline configuration, stored as a flat `key = value` text file.

use std::fmt::Write as _;
use std::path::Path;

use crate::classifier::{default_pattern, BlockKind};
use crate::error::{Error, Result};

/// Hyperparameters of the clustering and classification pipeline.
///
/// Defaults: 256 first-level centers filtered to 128, a spatial mask of 9
/// centers, 9 density neighbors, 3 and 4 aggregation repeats.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PipelineConfig {
    pub m1: usize,
    pub m2: usize,
    pub mask_size: usize,
    pub dicf_k: usize,
    pub repeats1: usize,
    pub repeats2: usize,
    pub channels: usize,
    pub smoothing_radius: usize,
    pub blocks: Vec<BlockKind>,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            m1: 256,
            m2: 128,
            mask_size: 9,
            dicf_k: 9,
            repeats1: 3,
            repeats2: 4,
            channels: 8,
            smoothing_radius: 1,
            blocks: default_pattern(),
            seed: 0,
        }
    }
}

const KEYS: [&str; 10] =
    ["m1", "m2", "mask_size", "dicf_k", "repeats1", "repeats2", "channels", "smoothing_radius", "blocks", "seed"];

impl PipelineConfig {
    /// Checks the constraints that do not depend on the input image.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("m1", self.m1),
            ("mask_size", self.mask_size),
            ("dicf_k", self.dicf_k),
            ("repeats1", self.repeats1),
            ("repeats2", self.repeats2),
            ("channels", self.channels),
        ];
        for (key, v) in positive {
            if v == 0 {
                return Err(Error::config(key, "must be at least 1"));
            }
        }
        if self.m2 < 2 || self.m2 > self.m1 {
            return Err(Error::config("m2", format!("must be in 2..={} (m1), got {}", self.m1, self.m2)));
        }
        if self.mask_size > self.m1 {
            return Err(Error::config("mask_size", format!("must not exceed m1 = {}", self.m1)));
        }
        if self.dicf_k >= self.m1 {
            return Err(Error::config("dicf_k", format!("must be at most m1 - 1 = {}", self.m1 - 1)));
        }
        if self.blocks.first() != Some(&BlockKind::Attention) {
            return Err(Error::config("blocks", "must be a non-empty list starting with attention"));
        }
        Ok(())
    }

    /// Checks the configuration against an image of the given size.
    pub fn validate_for(&self, height: usize, width: usize, bands: usize) -> Result<()> {
        self.validate()?;
        if self.m1 > height * width {
            return Err(Error::config("m1", format!("exceeds the {} pixels of the image", height * width)));
        }
        if self.channels > bands {
            return Err(Error::config("channels", format!("exceeds the {bands} bands of the cube")));
        }
        Ok(())
    }

    /// Mask size used by the second aggregation group, which only has `m2` centers.
    pub fn second_mask_size(&self) -> usize {
        self.mask_size.min(self.m2)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
                key: line.to_string(),
                message: format!("line {} is not `key = value`", lineno + 1),
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let num = |v: &str| v.parse::<usize>().map_err(|e| Error::config(key, format!("`{v}`: {e}")));
        match key {
            "m1" => self.m1 = num(value)?,
            "m2" => self.m2 = num(value)?,
            "mask_size" => self.mask_size = num(value)?,
            "dicf_k" => self.dicf_k = num(value)?,
            "repeats1" => self.repeats1 = num(value)?,
            "repeats2" => self.repeats2 = num(value)?,
            "channels" => self.channels = num(value)?,
            "smoothing_radius" => self.smoothing_radius = num(value)?,
            "seed" => self.seed = value.parse().map_err(|e| Error::config(key, format!("`{value}`: {e}")))?,
            "blocks" => {
                self.blocks = value
                    .split(',')
                    .map(|s| {
                        BlockKind::parse(s).ok_or_else(|| Error::config(key, format!("unknown block `{}`", s.trim())))
                    })
                    .collect::<Result<_>>()?
            }
            other => return Err(Error::config(other, "unknown key")),
        }
        Ok(())
    }

    /// Serializes with a fixed key order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let value = match key {
                "m1" => self.m1.to_string(),
                "m2" => self.m2.to_string(),
                "mask_size" => self.mask_size.to_string(),
                "dicf_k" => self.dicf_k.to_string(),
                "repeats1" => self.repeats1.to_string(),
                "repeats2" => self.repeats2.to_string(),
                "channels" => self.channels.to_string(),
                "smoothing_radius" => self.smoothing_radius.to_string(),
                "blocks" => self.blocks.iter().map(|b| b.name()).collect::<Vec<_>>().join(","),
                "seed" => self.seed.to_string(),
                _ => unreachable!(),
            };
            writeln!(out, "{key} = {value}").expect("writing to a String");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = PipelineConfig::default();
        let text = cfg.to_text();
        assert!(text.contains("m1 = 256\n"));
        assert!(text.contains("m2 = 128\n"));
        assert!(text.contains("mask_size = 9\n"));
        assert!(text.contains("dicf_k = 9\n"));
        assert!(text.contains("repeats1 = 3\n"));
        assert!(text.contains("repeats2 = 4\n"));
        assert_eq!(PipelineConfig::parse(&text).unwrap(), cfg);
    }

    #[test]
    fn parse_with_comments_and_overrides() {
        let cfg = PipelineConfig::parse(
            "# toy\nm1 = 16\nm2=8 # keep half\nmask_size = 4\ndicf_k = 3\nblocks = attention, ssm\n",
        )
        .unwrap();
        assert_eq!((cfg.m1, cfg.m2, cfg.mask_size, cfg.dicf_k), (16, 8, 4, 3));
        assert_eq!(cfg.blocks, vec![BlockKind::Attention, BlockKind::Ssm]);
    }

    #[test]
    fn violations_name_the_key() {
        let key_of = |text: &str| match PipelineConfig::parse(text) {
            Err(Error::Config { key, .. }) => key,
            other => panic!("expected config error, got {other:?}"),
        };
        assert_eq!(key_of("m1 = 10\nm2 = 11\nmask_size=4\ndicf_k=3"), "m2");
        assert_eq!(key_of("m1 = 10\nm2 = 5\nmask_size = 11\ndicf_k=3"), "mask_size");
        assert_eq!(key_of("m1 = 10\nm2 = 5\nmask_size = 4\ndicf_k = 10"), "dicf_k");
        assert_eq!(key_of("bogus = 1"), "bogus");
        assert_eq!(key_of("m1 = ten"), "m1");
        assert_eq!(key_of("blocks = ssm,attention"), "blocks");
        assert_eq!(key_of("blocks = conv"), "blocks");
    }

    #[test]
    fn image_dependent_checks() {
        let cfg = PipelineConfig::default();
        assert!(cfg.validate_for(256, 256, 32).is_ok());
        assert!(matches!(cfg.validate_for(8, 8, 32), Err(Error::Config { key, .. }) if key == "m1"));
        assert!(matches!(cfg.validate_for(256, 256, 4), Err(Error::Config { key, .. }) if key == "channels"));
    }
}
