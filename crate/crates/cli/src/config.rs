//! Plain-text `key = value` run configuration.
//!
//! A config file supplies defaults for subcommand flags; anything given on
//! the command line wins. Keys are flag names without the leading dashes
//! (`rounds = 10` stands for `--rounds 10`), `true`/`false` switch boolean
//! flags, and a key may repeat for repeatable flags.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigFile {
    pub path: PathBuf,
    pub entries: Vec<(String, String)>,
}

impl ConfigFile {
    pub fn parse(path: &Path, text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split_once('#').map_or(raw, |(l, _)| l).trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                bail!("{}:{}: expected `key = value`, got `{line}`", path.display(), i + 1);
            };
            let key = k.trim().replace('_', "-");
            if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '-') {
                bail!("{}:{}: invalid key `{}`", path.display(), i + 1, k.trim());
            }
            entries.push((key, v.trim().to_string()));
        }
        Ok(ConfigFile { path: path.to_path_buf(), entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(path, &text)
    }

    pub fn echo(&self) -> BTreeMap<String, Vec<String>> {
        let mut m: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (k, v) in &self.entries {
            m.entry(k.clone()).or_default().push(v.clone());
        }
        m
    }
}

/// Pull `--config FILE` out of `argv` and append the file's entries for
/// every flag the command line does not already set.
pub fn merge_config(argv: Vec<OsString>) -> Result<(Vec<OsString>, Option<ConfigFile>)> {
    let mut args = Vec::with_capacity(argv.len());
    let mut path = None;
    let mut it = argv.into_iter();
    while let Some(a) = it.next() {
        match a.to_str() {
            Some("--config") => {
                let p = it.next().context("--config needs a file path")?;
                path = Some(PathBuf::from(p));
            }
            Some(s) if s.starts_with("--config=") => path = Some(PathBuf::from(&s["--config=".len()..])),
            _ => args.push(a),
        }
    }
    let Some(path) = path else {
        return Ok((args, None));
    };
    let config = ConfigFile::load(&path)?;
    // A subcommand is needed before its flags can be appended.
    if args.len() < 2 {
        return Ok((args, Some(config)));
    }
    let given = |key: &str| {
        let flag = format!("--{key}");
        let prefix = format!("{flag}=");
        args.iter().any(|a| a.to_str().is_some_and(|s| s == flag || s.starts_with(&prefix)))
    };
    let mut extra = Vec::new();
    for (k, v) in &config.entries {
        if given(k) {
            continue;
        }
        match v.as_str() {
            "true" => extra.push(OsString::from(format!("--{k}"))),
            "false" => {}
            _ => {
                extra.push(OsString::from(format!("--{k}")));
                extra.push(OsString::from(v));
            }
        }
    }
    args.extend(extra);
    Ok((args, Some(config)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn parses_comments_and_underscores() {
        let c = ConfigFile::parse(Path::new("run.conf"), "# plan\nseed = 7\nmax_iterations=50 # cap\n\n").unwrap();
        assert_eq!(c.entries, vec![("seed".into(), "7".into()), ("max-iterations".into(), "50".into())]);
        assert!(ConfigFile::parse(Path::new("x"), "seed 7").is_err());
        assert!(ConfigFile::parse(Path::new("x"), "se ed = 7").is_err());
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.conf");
        std::fs::write(&p, "seed = 7\nrounds = 10\nno-stratify = true\nverbose = false\n").unwrap();
        let argv = os(&["prognosis", "cv", "--rounds=3", "--config", p.to_str().unwrap()]);
        let (args, cfg) = merge_config(argv).unwrap();
        assert_eq!(args, os(&["prognosis", "cv", "--rounds=3", "--seed", "7", "--no-stratify"]));
        assert_eq!(cfg.unwrap().echo()["seed"], vec!["7".to_string()]);
    }
}
