//! `key = value` experiment files.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::expr::{self, Expr, ParseError};
use crate::model::ProblemSpec;

pub const REQUIRED_KEYS: [&str; 13] =
    ["dim", "L", "n", "T", "a", "b", "phi", "u0", "lambda", "p_M", "Lambda", "tilde_lambda", "m_list"];
pub const OPTIONAL_KEYS: [&str; 5] = ["epsilon_lift", "cfl", "snapshots", "outdir", "force"];
pub const DEFAULT_OUTDIR: &str = "pmelab-out";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key `{key}` given twice")]
    Duplicate { line: usize, key: String },
    #[error("missing required key `{0}`")]
    Missing(&'static str),
    #[error("line {line}: bad value for `{key}`: {msg}")]
    Value { line: usize, key: String, msg: String },
    #[error("line {line}: expression for `{key}`: {source}")]
    Expr {
        line: usize,
        key: String,
        #[source]
        source: ParseError,
    },
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone)]
pub struct Config {
    pub spec: ProblemSpec,
    pub outdir: PathBuf,
    pub force: bool,
    /// The file as read, copied verbatim into every run directory.
    pub text: String,
}

struct Entry {
    line: usize,
    key: String,
    value: String,
}

impl Config {
    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Config::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Config, ConfigError> {
        let mut entries: Vec<Entry> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let Some((key, value)) = body.split_once('=') else {
                return Err(ConfigError::Syntax { line, text: raw.trim().to_string() });
            };
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() {
                return Err(ConfigError::Syntax { line, text: raw.trim().to_string() });
            }
            if !REQUIRED_KEYS.contains(&key) && !OPTIONAL_KEYS.contains(&key) {
                return Err(ConfigError::UnknownKey { line, key: key.to_string() });
            }
            if entries.iter().any(|e| e.key == key) {
                return Err(ConfigError::Duplicate { line, key: key.to_string() });
            }
            entries.push(Entry { line, key: key.to_string(), value: value.to_string() });
        }
        for key in REQUIRED_KEYS {
            if !entries.iter().any(|e| e.key == key) {
                return Err(ConfigError::Missing(key));
            }
        }
        let get = |key: &str| entries.iter().find(|e| e.key == key);
        let bad = |e: &Entry, msg: String| ConfigError::Value { line: e.line, key: e.key.clone(), msg };
        let num = |key: &str, default: Option<f64>| -> Result<f64, ConfigError> {
            match get(key) {
                Some(e) => e.value.parse::<f64>().map_err(|err| bad(e, err.to_string())),
                None => Ok(default.expect("required keys are present")),
            }
        };
        let int = |key: &str, default: Option<usize>| -> Result<usize, ConfigError> {
            match get(key) {
                Some(e) => e.value.parse::<usize>().map_err(|err| bad(e, err.to_string())),
                None => Ok(default.expect("required keys are present")),
            }
        };
        let formula = |key: &str| -> Result<Expr, ConfigError> {
            let e = get(key).expect("required keys are present");
            expr::parse(&e.value).map_err(|source| ConfigError::Expr { line: e.line, key: e.key.clone(), source })
        };
        let m_list = {
            let e = get("m_list").expect("required keys are present");
            e.value
                .split(',')
                .map(|s| s.trim().parse::<f64>().map_err(|err| bad(e, format!("`{}`: {err}", s.trim()))))
                .collect::<Result<Vec<_>, _>>()?
        };
        let force = match get("force") {
            None => false,
            Some(e) => match e.value.as_str() {
                "true" => true,
                "false" => false,
                other => return Err(bad(e, format!("expected true or false, got `{other}`"))),
            },
        };
        let spec = ProblemSpec {
            dim: int("dim", None)?,
            half_width: num("L", None)?,
            n: int("n", None)?,
            horizon: num("T", None)?,
            a: formula("a")?,
            b: formula("b")?,
            phi: formula("phi")?,
            u0: formula("u0")?,
            lambda: num("lambda", None)?,
            p_max: num("p_M", None)?,
            coef_bound: num("Lambda", None)?,
            tilde_lambda: num("tilde_lambda", None)?,
            m_list,
            epsilon_lift: num("epsilon_lift", Some(0.0))?,
            cfl: num("cfl", Some(0.5))?,
            snapshots: int("snapshots", Some(64))?,
        };
        let outdir = PathBuf::from(get("outdir").map_or(DEFAULT_OUTDIR, |e| e.value.as_str()));
        Ok(Config { spec, outdir, force, text: text.to_string() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "\
# constant coefficients
dim = 1
L = 2
n = 64
T = 0.1
a = 1
b = 1
phi = 1 - p   # linear growth
u0 = max(0, 0.5 - abs(x))
lambda = 1
p_M = 1
Lambda = 1
tilde_lambda = 1
m_list = 10, 20
";

    #[test]
    fn parses_with_defaults() {
        let c = Config::parse(BASE).unwrap();
        assert_eq!(c.spec.m_list, vec![10.0, 20.0]);
        assert_eq!(c.spec.cfl, 0.5);
        assert_eq!(c.spec.snapshots, 64);
        assert_eq!(c.spec.epsilon_lift, 0.0);
        assert!(!c.force);
        assert_eq!(c.outdir, PathBuf::from(DEFAULT_OUTDIR));
        assert_eq!(c.spec.phi.to_string(), "1 - p");
    }

    #[test]
    fn unknown_key_reports_line() {
        let err = Config::parse(&format!("{BASE}lamda = 2\n")).unwrap_err();
        assert!(matches!(err, ConfigError::UnknownKey { line: 15, ref key } if key == "lamda"), "{err}");
    }

    #[test]
    fn missing_key_is_named() {
        let text = BASE.replace("p_M = 1\n", "");
        let err = Config::parse(&text).unwrap_err();
        assert!(matches!(err, ConfigError::Missing("p_M")));
        assert!(err.to_string().contains("p_M"));
    }

    #[test]
    fn bad_values() {
        assert!(matches!(Config::parse(&BASE.replace("n = 64", "n = many")), Err(ConfigError::Value { line: 4, .. })));
        assert!(matches!(Config::parse(&BASE.replace("phi = 1 - p", "phi = 1 - q")), Err(ConfigError::Expr { line: 8, .. })));
        assert!(matches!(Config::parse(&format!("{BASE}force = yes\n")), Err(ConfigError::Value { .. })));
        assert!(matches!(Config::parse(&format!("{BASE}dim = 2\n")), Err(ConfigError::Duplicate { line: 15, .. })));
        assert!(matches!(Config::parse(&format!("{BASE}just words\n")), Err(ConfigError::Syntax { line: 15, .. })));
    }
}
