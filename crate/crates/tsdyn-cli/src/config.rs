//! Flat `key = value` configuration files with `[section]` headers.

use std::path::{Path, PathBuf};

use tsdyn::dde::{Coef, DelayEquation, History, Phi};
use tsdyn::expr::Expr;
use tsdyn::tscale::TimeScale;

use crate::error::CliError;
use crate::presets;
use crate::problem::{Problem, SSamples};

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    section: String,
    key: String,
    value: String,
    line: usize,
}

/// Parsed entries in file order. Keys may repeat.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigDoc {
    entries: Vec<Entry>,
}

const KEYS: &[(&str, &[&str])] = &[
    ("scale", &["line", "file", "tolerance"]),
    ("equation", &["A", "alpha", "t0", "forcing"]),
    ("history", &["x0", "phi"]),
    ("run", &["horizon", "h_max", "s_samples", "parallel", "margin", "output"]),
];

impl ConfigDoc {
    pub fn parse(src: &str) -> Result<ConfigDoc, CliError> {
        let mut entries = Vec::new();
        let mut section: Option<String> = None;
        for (i, raw) in src.lines().enumerate() {
            let line = i + 1;
            let text = raw.trim();
            if text.is_empty() || text.starts_with('#') {
                continue;
            }
            let err = |msg: String| CliError::Config(format!("config line {line}: {msg}"));
            if let Some(rest) = text.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| err("unterminated section header".into()))?.trim();
                if name != "preset" && !KEYS.iter().any(|(s, _)| *s == name) {
                    return Err(err(format!("unknown section [{name}]")));
                }
                section = Some(name.to_string());
                continue;
            }
            let (key, value) = text.split_once('=').ok_or_else(|| err("expected `key = value`".into()))?;
            let (key, value) = (key.trim(), unquote(value.trim()));
            let sec = section.clone().ok_or_else(|| err(format!("key `{key}` outside a section")))?;
            if let Some((_, allowed)) = KEYS.iter().find(|(s, _)| *s == sec) {
                if !allowed.contains(&key) {
                    return Err(err(format!("unknown key `{key}` in [{sec}]")));
                }
            }
            entries.push(Entry { section: sec, key: key.to_string(), value: value.to_string(), line });
        }
        Ok(ConfigDoc { entries })
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.entries.iter().rev().find(|e| e.section == section && e.key == key).map(|e| e.value.as_str())
    }

    pub fn get_all<'a>(&'a self, section: &'a str, key: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.entries.iter().filter(move |e| e.section == section && e.key == key).map(|e| e.value.as_str())
    }

    fn section(&self, section: &str) -> impl Iterator<Item = &Entry> + '_ {
        let section = section.to_string();
        self.entries.iter().filter(move |e| e.section == section)
    }

    fn has_section(&self, section: &str) -> bool {
        self.entries.iter().any(|e| e.section == section)
    }

    fn number(&self, section: &str, key: &str) -> Result<Option<f64>, CliError> {
        self.get(section, key).map(|v| parse_f64(&format!("{section}.{key}"), v)).transpose()
    }
}

fn unquote(v: &str) -> &str {
    v.strip_prefix('"').and_then(|s| s.strip_suffix('"')).unwrap_or(v)
}

pub fn parse_f64(what: &str, v: &str) -> Result<f64, CliError> {
    v.trim().parse::<f64>().map_err(|_| CliError::Config(format!("{what}: expected a number, found `{v}`")))
}

/// `s_samples` as a column count (`64`) or an explicit list (`0, 1.5, 3`).
pub fn parse_s_samples(v: &str) -> Result<SSamples, CliError> {
    if !v.contains(',') {
        if let Ok(n) = v.trim().parse::<usize>() {
            if n == 0 {
                return Err(CliError::Config("s_samples: need at least one column".into()));
            }
            return Ok(SSamples::Count(n));
        }
    }
    let list = v.split(',').map(|w| parse_f64("s_samples", w)).collect::<Result<Vec<_>, _>>()?;
    Ok(SSamples::List(list))
}

/// Values from the `[run]` section.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunSection {
    pub horizon: Option<f64>,
    pub h_max: Option<f64>,
    pub s_samples: Option<SSamples>,
    pub parallel: Option<usize>,
    pub margin: Option<f64>,
    pub output: Option<PathBuf>,
}

impl RunSection {
    pub fn from_doc(doc: &ConfigDoc, base: &Path) -> Result<RunSection, CliError> {
        let parallel = match doc.get("run", "parallel") {
            Some(v) => Some(
                v.trim().parse::<usize>().map_err(|_| CliError::Config(format!("run.parallel: expected a count, found `{v}`")))?,
            ),
            None => None,
        };
        Ok(RunSection {
            horizon: doc.number("run", "horizon")?,
            h_max: doc.number("run", "h_max")?,
            s_samples: doc.get("run", "s_samples").map(parse_s_samples).transpose()?,
            parallel,
            margin: doc.number("run", "margin")?,
            output: doc.get("run", "output").map(|p| base.join(p)),
        })
    }
}

/// The problem a config describes: a preset with parameters, or an
/// equation given by scale, coefficient and delay.
pub fn problem_from_doc(doc: &ConfigDoc, base: &Path, horizon: Option<f64>) -> Result<Problem, CliError> {
    if doc.has_section("preset") {
        let name = doc.get("preset", "name").ok_or_else(|| CliError::Config("[preset] needs `name`".into()))?;
        let params = doc
            .section("preset")
            .filter(|e| e.key != "name")
            .map(|e| Ok((e.key.clone(), parse_f64(&format!("preset.{}", e.key), &e.value)?)))
            .collect::<Result<Vec<_>, CliError>>()?;
        return presets::find(name)?.build(&params, horizon);
    }
    custom_problem(doc, base, horizon)
}

fn custom_problem(doc: &ConfigDoc, base: &Path, horizon: Option<f64>) -> Result<Problem, CliError> {
    let mut desc = String::new();
    if let Some(file) = doc.get("scale", "file") {
        let path = base.join(file);
        desc = std::fs::read_to_string(&path).map_err(|e| CliError::config(&format!("scale.file {}", path.display()), e))?;
        desc.push('\n');
    }
    for line in doc.get_all("scale", "line") {
        desc.push_str(line);
        desc.push('\n');
    }
    if let Some(tol) = doc.get("scale", "tolerance") {
        desc.push_str(&format!("tolerance {tol}\n"));
    }
    if desc.trim().is_empty() {
        return Err(CliError::Config("[scale] needs `line` or `file`".into()));
    }
    let mut ts = TimeScale::parse_description(&desc).map_err(|e| CliError::config("scale", e))?;

    let expr = |key: &str| -> Result<Option<Expr>, CliError> {
        doc.get("equation", key).map(|v| Expr::parse(v).map_err(|e| CliError::config(&format!("equation.{key}"), e))).transpose()
    };
    let a = expr("A")?.ok_or_else(|| CliError::Config("[equation] needs `A`".into()))?;
    let alpha = expr("alpha")?.ok_or_else(|| CliError::Config("[equation] needs `alpha`".into()))?;
    let forcing = expr("forcing")?;
    let t0 = doc.number("equation", "t0")?.unwrap_or(ts.t_min());

    if let Some(h) = horizon {
        if !(h > t0) {
            return Err(CliError::Config(format!("horizon {h} must exceed t0 = {t0}")));
        }
        ts = ts.restrict(ts.t_min(), h).map_err(|e| CliError::config("horizon", e))?;
    }
    if !(ts.t_max() > t0) {
        return Err(CliError::Config(format!("the scale must extend past t0 = {t0}")));
    }

    let x0 = doc.number("history", "x0")?.unwrap_or(1.0);
    let phi = match doc.get("history", "phi") {
        Some(v) => {
            let e = Expr::parse(v).map_err(|e| CliError::config("history.phi", e))?;
            let ts = ts.clone();
            Phi::func(move |t| e.eval(t, &ts).unwrap_or(f64::NAN))
        }
        None => Phi::Const(x0),
    };
    let eq = DelayEquation::new(ts, Coef::Expr(a), Coef::Expr(alpha), t0).map_err(|e| CliError::config("equation.t0", e))?;
    let mut p = Problem::new("config", eq, History { x0, phi }, 0.01);
    p.forcing = forcing.map(Coef::Expr);
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_and_repeats() {
        let doc = ConfigDoc::parse(
            "# comment\n[scale]\nline = interval 0 2\nline = point 3\n\n[equation]\nA = \"0.5\"\nalpha = t - 1\n[run]\ns_samples = 0, 1\n",
        )
        .unwrap();
        assert_eq!(doc.get_all("scale", "line").collect::<Vec<_>>(), ["interval 0 2", "point 3"]);
        assert_eq!(doc.get("equation", "A"), Some("0.5"));
        let run = RunSection::from_doc(&doc, Path::new(".")).unwrap();
        assert_eq!(run.s_samples, Some(SSamples::List(vec![0.0, 1.0])));
        assert_eq!(parse_s_samples("16").unwrap(), SSamples::Count(16));
    }

    #[test]
    fn rejects_malformed_input() {
        for src in ["A = 1", "[scale\nline = point 1", "[scale]\nnope = 1", "[bogus]", "[scale]\nline"] {
            assert!(matches!(ConfigDoc::parse(src), Err(CliError::Config(_))), "{src}");
        }
    }

    #[test]
    fn custom_equation() {
        let doc = ConfigDoc::parse("[scale]\nline = interval -1 10\n[equation]\nA = 0.5\nalpha = t - 1\nt0 = 0\n").unwrap();
        let p = problem_from_doc(&doc, Path::new("."), Some(5.0)).unwrap();
        assert_eq!(p.eq.t0, 0.0);
        assert_eq!(p.eq.ts.t_max(), 5.0);
        assert_eq!(p.history.x0, 1.0);
        let doc = ConfigDoc::parse("[scale]\nline = interval -1 10\n[equation]\nA = 0.5 +* t\nalpha = t - 1\n").unwrap();
        let msg = problem_from_doc(&doc, Path::new("."), None).unwrap_err().to_string();
        assert!(msg.contains("column"), "{msg}");
    }

    #[test]
    fn preset_section() {
        let doc = ConfigDoc::parse("[preset]\nname = example_5_3\na = 0.3\n").unwrap();
        let p = problem_from_doc(&doc, Path::new("."), Some(20.0)).unwrap();
        assert_eq!(p.name, "example_5_3");
        assert_eq!(p.eq.a.eval(4.0, &p.eq.ts).unwrap(), 0.3);
    }
}
