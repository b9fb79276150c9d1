//! Resolved run settings: defaults, then a `key=value` file, then flags.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::Result;
use clap::{Arg, ArgAction, ArgMatches, Command};
use neuralmep::Vec2;

/// Bad input from the user: unknown keys, malformed values, missing files.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// A recognized setting with its default and help text.
#[derive(Debug, Clone, Copy)]
pub struct Key {
    pub name: &'static str,
    pub default: &'static str,
    pub help: &'static str,
}

pub const fn key(name: &'static str, default: &'static str, help: &'static str) -> Key {
    Key {
        name,
        default,
        help,
    }
}

/// Add one `--name VALUE` flag per key plus `--config`, `--out`, `--param`.
pub fn with_keys(mut cmd: Command, keys: &[Key], default_out: &'static str) -> Command {
    for k in keys {
        cmd = cmd.arg(
            Arg::new(k.name)
                .long(k.name)
                .value_name("VALUE")
                .help(format!("{} [default: {}]", k.help, k.default)),
        );
    }
    cmd.arg(
        Arg::new("config")
            .long("config")
            .value_name("FILE")
            .help("key=value file merged under the flags (a manifest.txt works)"),
    )
    .arg(
        Arg::new("out")
            .long("out")
            .value_name("DIR")
            .default_value(default_out)
            .help("Output directory"),
    )
    .arg(
        Arg::new("param")
            .long("param")
            .value_name("KEY=VALUE")
            .action(ArgAction::Append)
            .help("Potential parameter override such as wells.mu_px=0.4"),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub command: String,
    pub out: PathBuf,
    values: BTreeMap<String, String>,
}

/// Parse `key=value` lines; `#` starts a comment line.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| usage(format!("line {}: expected key=value, got {line:?}", n + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

impl Settings {
    /// Merge defaults, the optional config file and the flags in `m`.
    /// Dotted keys are potential parameters and are checked later by the
    /// potential itself; any other unknown key is an error.
    pub fn resolve(command: &str, keys: &[Key], m: &ArgMatches) -> Result<Settings> {
        let mut values: BTreeMap<String, String> = keys
            .iter()
            .map(|k| (k.name.to_string(), k.default.to_string()))
            .collect();
        let known = |name: &str| keys.iter().any(|k| k.name == name);
        if let Some(path) = m.get_one::<String>("config") {
            let text = std::fs::read_to_string(path)
                .map_err(|e| usage(format!("cannot read config {path}: {e}")))?;
            for (k, v) in parse_kv(&text)? {
                if k == "command" {
                    if v != command {
                        return Err(usage(format!(
                            "config {path} is for `{v}`, not `{command}`"
                        )));
                    }
                } else if known(&k) || k.contains('.') {
                    values.insert(k, v);
                } else {
                    return Err(usage(format!("unknown key `{k}` in {path}")));
                }
            }
        }
        for k in keys {
            if let Some(v) = m.get_one::<String>(k.name) {
                values.insert(k.name.to_string(), v.clone());
            }
        }
        for p in m.get_many::<String>("param").into_iter().flatten() {
            let (k, v) = p
                .split_once('=')
                .ok_or_else(|| usage(format!("--param expects KEY=VALUE, got {p:?}")))?;
            if !k.contains('.') {
                return Err(usage(format!(
                    "--param key `{k}` must look like potential.field"
                )));
            }
            values.insert(k.to_string(), v.to_string());
        }
        let out = PathBuf::from(m.get_one::<String>("out").expect("has default"));
        Ok(Settings {
            command: command.to_string(),
            out,
            values,
        })
    }

    /// Settings built directly, for callers that skip the flag parser.
    pub fn from_pairs(
        command: &str,
        keys: &[Key],
        pairs: &[(&str, &str)],
        out: &Path,
    ) -> Result<Settings> {
        let mut values: BTreeMap<String, String> = keys
            .iter()
            .map(|k| (k.name.to_string(), k.default.to_string()))
            .collect();
        for (k, v) in pairs {
            if !(values.contains_key(*k) || k.contains('.')) {
                return Err(usage(format!("unknown key `{k}`")));
            }
            values.insert(k.to_string(), v.to_string());
        }
        Ok(Settings {
            command: command.to_string(),
            out: out.to_path_buf(),
            values,
        })
    }

    pub fn get(&self, key: &str) -> &str {
        self.values
            .get(key)
            .map(String::as_str)
            .unwrap_or_else(|| panic!("no setting `{key}`"))
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.values.insert(key.to_string(), value.into());
    }

    pub fn is_auto(&self, key: &str) -> bool {
        self.get(key) == "auto"
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<T> {
        let v = self.get(key);
        v.parse()
            .map_err(|_| usage(format!("invalid value `{v}` for `{key}`")))
    }

    pub fn flag(&self, key: &str) -> Result<bool> {
        match self.get(key) {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            v => Err(usage(format!("`{key}` expects true or false, got `{v}`"))),
        }
    }

    pub fn f64_list(&self, key: &str) -> Result<Vec<f64>> {
        self.get(key)
            .split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| usage(format!("invalid number `{s}` in `{key}`")))
            })
            .collect()
    }

    /// `x,y`, or `None` for `auto`.
    pub fn point(&self, key: &str) -> Result<Option<Vec2>> {
        if self.is_auto(key) {
            return Ok(None);
        }
        let v = self.f64_list(key)?;
        match v[..] {
            [x, y] => Ok(Some(Vec2::new(x, y))),
            _ => Err(usage(format!("`{key}` expects x,y"))),
        }
    }

    /// Dotted `potential.field` entries.
    pub fn potential_params(&self) -> Vec<(String, String)> {
        self.values
            .iter()
            .filter(|(k, _)| k.contains('.'))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect()
    }

    /// `command=...` followed by every setting in key order. The output
    /// directory is left out so a rerun elsewhere writes the same file.
    pub fn manifest(&self) -> String {
        let mut s = format!("command={}\n", self.command);
        for (k, v) in &self.values {
            s.push_str(k);
            s.push('=');
            s.push_str(v);
            s.push('\n');
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const KEYS: &[Key] = &[key("alpha", "1", "a"), key("beta", "auto", "b")];

    fn cmd() -> Command {
        with_keys(Command::new("t"), KEYS, "out")
    }

    #[test]
    fn flags_override_config_which_overrides_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.txt");
        std::fs::write(&cfg, "# comment\nalpha = 2\nbeta=3\nwells.c_p=0.5\n").unwrap();
        let m = cmd()
            .try_get_matches_from(["t", "--config", cfg.to_str().unwrap(), "--beta", "4"])
            .unwrap();
        let s = Settings::resolve("t", KEYS, &m).unwrap();
        assert_eq!(s.get("alpha"), "2");
        assert_eq!(s.get("beta"), "4");
        assert_eq!(
            s.potential_params(),
            vec![("wells.c_p".to_string(), "0.5".to_string())]
        );
        assert_eq!(s.manifest(), "command=t\nalpha=2\nbeta=4\nwells.c_p=0.5\n");
    }

    #[test]
    fn unknown_config_keys_are_usage_errors() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.txt");
        std::fs::write(&cfg, "gamma=1\n").unwrap();
        let m = cmd()
            .try_get_matches_from(["t", "--config", cfg.to_str().unwrap()])
            .unwrap();
        let e = Settings::resolve("t", KEYS, &m).unwrap_err();
        assert!(e.downcast_ref::<UsageError>().is_some());
        std::fs::write(&cfg, "command=other\n").unwrap();
        assert!(Settings::resolve("t", KEYS, &m).is_err());
    }

    #[test]
    fn typed_getters() {
        let s = Settings::from_pairs("t", KEYS, &[("alpha", "0.5,2")], Path::new("o")).unwrap();
        assert_eq!(s.point("alpha").unwrap(), Some(Vec2::new(0.5, 2.0)));
        assert_eq!(s.point("beta").unwrap(), None);
        assert!(s.parse::<f64>("alpha").is_err());
        assert!(s.flag("alpha").is_err());
        assert!(Settings::from_pairs("t", KEYS, &[("nope", "1")], Path::new("o")).is_err());
    }
}
