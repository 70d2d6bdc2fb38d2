//! The flat key-value configuration file shared by the pipeline commands.
//!
//! One `key = value` per line; `#` and `//` start comments; list values are
//! comma-separated. Unknown keys are reported as warnings and ignored so
//! that configs can carry annotations for other tools; malformed values are
//! errors.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use thiserror::Error;

use crate::approx::DomainTag;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("line {line}: {detail}")]
    Malformed { line: usize, detail: String },
    #[error("key `{key}`: {detail}")]
    BadValue { key: String, detail: String },
}

/// Parameters for the approximation/abstraction pipeline.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Config {
    pub input: Option<String>,
    pub output: Option<String>,
    /// Template name, or `ext` for the combined graph.
    pub target: Option<String>,
    pub vars: Vec<String>,
    pub abstraction_type: Option<DomainTag>,
    pub scope: Vec<String>,
    pub merge: Option<MergeConfig>,
    /// Channels assumed always available for lower approximations.
    pub assume_sync: Vec<String>,
    pub completion_cap: Option<u64>,
    pub max_vectors: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MergeConfig {
    pub name: String,
    pub initial: i64,
    pub expr: String,
}

const KNOWN_KEYS: [&str; 12] = [
    "input",
    "output",
    "target",
    "vars",
    "type",
    "scope",
    "merge_name",
    "merge_init",
    "merge_expr",
    "assume_sync",
    "completion_cap",
    "max_vectors",
];

/// Parse a config file. Returns the config and a warning per unknown key.
pub fn read_config(src: &str) -> Result<(Config, Vec<String>), ConfigError> {
    let mut config = Config::default();
    let mut warnings = Vec::new();
    let mut merge_name: Option<String> = None;
    let mut merge_init: Option<i64> = None;
    let mut merge_expr: Option<String> = None;

    for (lineno, raw) in src.lines().enumerate() {
        let line = raw.trim();
        let line = line
            .split_once("//")
            .map(|(head, _)| head.trim())
            .unwrap_or(line);
        let line = line
            .split_once('#')
            .map(|(head, _)| head.trim())
            .unwrap_or(line);
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or(ConfigError::Malformed {
            line: lineno + 1,
            detail: format!("expected `key = value`, found `{line}`"),
        })?;
        let key = key.trim();
        let value = value.trim();
        match key {
            "input" => config.input = Some(value.to_string()),
            "output" => config.output = Some(value.to_string()),
            "target" => config.target = Some(value.to_string()),
            "vars" => config.vars = parse_list(value),
            "type" => {
                config.abstraction_type =
                    Some(DomainTag::parse(value).ok_or_else(|| ConfigError::BadValue {
                        key: "type".into(),
                        detail: format!("`{value}` is not one of `upper`, `lower`"),
                    })?)
            }
            "scope" => config.scope = parse_list(value),
            "merge_name" => merge_name = Some(value.to_string()),
            "merge_init" => {
                merge_init = Some(value.parse().map_err(|_| ConfigError::BadValue {
                    key: "merge_init".into(),
                    detail: format!("`{value}` is not an integer"),
                })?)
            }
            "merge_expr" => merge_expr = Some(value.to_string()),
            "assume_sync" => config.assume_sync = parse_list(value),
            "completion_cap" => {
                config.completion_cap = Some(parse_u64("completion_cap", value)?)
            }
            "max_vectors" => config.max_vectors = Some(parse_u64("max_vectors", value)?),
            other => warnings.push(format!("unknown key `{other}` ignored")),
        }
    }

    match (merge_name, merge_expr) {
        (Some(name), Some(expr)) => {
            config.merge = Some(MergeConfig {
                name,
                initial: merge_init.unwrap_or(0),
                expr,
            });
        }
        (None, None) => {
            if merge_init.is_some() {
                return Err(ConfigError::BadValue {
                    key: "merge_init".into(),
                    detail: "merge_init given without merge_name/merge_expr".into(),
                });
            }
        }
        (Some(_), None) => {
            return Err(ConfigError::BadValue {
                key: "merge_expr".into(),
                detail: "merge_name given without merge_expr".into(),
            })
        }
        (None, Some(_)) => {
            return Err(ConfigError::BadValue {
                key: "merge_name".into(),
                detail: "merge_expr given without merge_name".into(),
            })
        }
    }
    Ok((config, warnings))
}

fn parse_u64(key: &str, value: &str) -> Result<u64, ConfigError> {
    value.parse().map_err(|_| ConfigError::BadValue {
        key: key.into(),
        detail: format!("`{value}` is not a nonnegative integer"),
    })
}

fn parse_list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

/// Render a config deterministically, keys in the documented order.
pub fn write_config(config: &Config) -> String {
    let mut out = String::new();
    let mut kv = |key: &str, value: &str| {
        let _ = writeln!(out, "{key} = {value}");
    };
    if let Some(v) = &config.input {
        kv("input", v);
    }
    if let Some(v) = &config.output {
        kv("output", v);
    }
    if let Some(v) = &config.target {
        kv("target", v);
    }
    if !config.vars.is_empty() {
        kv("vars", &config.vars.join(", "));
    }
    if let Some(v) = config.abstraction_type {
        kv("type", v.as_str());
    }
    if !config.scope.is_empty() {
        kv("scope", &config.scope.join(", "));
    }
    if let Some(merge) = &config.merge {
        kv("merge_name", &merge.name);
        kv("merge_init", &merge.initial.to_string());
        kv("merge_expr", &merge.expr);
    }
    if !config.assume_sync.is_empty() {
        kv("assume_sync", &config.assume_sync.join(", "));
    }
    if let Some(v) = config.completion_cap {
        kv("completion_cap", &v.to_string());
    }
    if let Some(v) = config.max_vectors {
        kv("max_vectors", &v.to_string());
    }
    out
}

/// True if `key` is one this format defines.
pub fn is_known_key(key: &str) -> bool {
    KNOWN_KEYS.contains(&key)
}

impl Config {
    /// Overlay `other` onto `self`: set fields of `other` win.
    pub fn merged_with(&self, other: &Config) -> Config {
        Config {
            input: other.input.clone().or_else(|| self.input.clone()),
            output: other.output.clone().or_else(|| self.output.clone()),
            target: other.target.clone().or_else(|| self.target.clone()),
            vars: if other.vars.is_empty() {
                self.vars.clone()
            } else {
                other.vars.clone()
            },
            abstraction_type: other.abstraction_type.or(self.abstraction_type),
            scope: if other.scope.is_empty() {
                self.scope.clone()
            } else {
                other.scope.clone()
            },
            merge: other.merge.clone().or_else(|| self.merge.clone()),
            assume_sync: if other.assume_sync.is_empty() {
                self.assume_sync.clone()
            } else {
                other.assume_sync.clone()
            },
            completion_cap: other.completion_cap.or(self.completion_cap),
            max_vectors: other.max_vectors.or(self.max_vectors),
        }
    }

    pub fn approx_options(&self) -> crate::approx::ApproxOptions {
        let mut opts = crate::approx::ApproxOptions::default();
        if let Some(cap) = self.completion_cap {
            opts.completion_cap = cap;
        }
        if let Some(cap) = self.max_vectors {
            opts.max_total_vectors = cap;
        }
        opts.assume_sync = self.assume_sync.iter().cloned().collect::<BTreeSet<_>>();
        opts
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_a1_style_config() {
        let src = "input = postal.xml\ntarget = Voter\nvars = mem_vt, mem_sg\ntype = upper\n";
        let (config, warnings) = read_config(src).unwrap();
        assert!(warnings.is_empty());
        assert_eq!(config.target.as_deref(), Some("Voter"));
        assert_eq!(config.vars, vec!["mem_vt", "mem_sg"]);
        assert_eq!(config.abstraction_type, Some(DomainTag::Upper));
        assert_eq!(config.merge, None);
    }

    #[test]
    fn type_outside_enum_is_an_error() {
        let err = read_config("type = middle\n").unwrap_err();
        assert!(matches!(err, ConfigError::BadValue { .. }));
    }

    #[test]
    fn unknown_key_is_a_warning() {
        let (config, warnings) = read_config("colour = green\ntarget = A\n").unwrap();
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].contains("colour"));
        assert_eq!(config.target.as_deref(), Some("A"));
    }

    #[test]
    fn merge_section_roundtrip() {
        let src = "target = Voter\nvars = mem_sg, mem_vt\ntype = upper\nmerge_name = valid\nmerge_init = 0\nmerge_expr = mem_sg*mem_vt>0\n";
        let (config, _) = read_config(src).unwrap();
        let merge = config.merge.clone().unwrap();
        assert_eq!(merge.name, "valid");
        assert_eq!(merge.expr, "mem_sg*mem_vt>0");
        let rendered = write_config(&config);
        let (reread, _) = read_config(&rendered).unwrap();
        assert_eq!(config, reread);
    }

    #[test]
    fn partial_merge_spec_is_an_error() {
        assert!(read_config("merge_name = valid\n").is_err());
        assert!(read_config("merge_expr = x>0\n").is_err());
    }

    #[test]
    fn overlay_prefers_new_values() {
        let (base, _) = read_config("target = A\nvars = x\n").unwrap();
        let (over, _) = read_config("vars = y, z\n").unwrap();
        let merged = base.merged_with(&over);
        assert_eq!(merged.target.as_deref(), Some("A"));
        assert_eq!(merged.vars, vec!["y", "z"]);
    }
}
