//! Run orchestration for the `tsdyn` command: configuration, presets,
//! CSV output and example verification.

pub mod commands;
pub mod config;
pub mod error;
pub mod presets;
pub mod problem;
pub mod verify;

use std::path::{Path, PathBuf};

use config::{ConfigDoc, RunSection};
use error::CliError;
use problem::{Problem, SSamples};

/// What a run subcommand was asked for, before defaults are applied.
#[derive(Debug, Clone, Default)]
pub struct RunRequest {
    pub preset: Option<String>,
    /// `key=value` preset parameters.
    pub params: Vec<String>,
    pub config: Option<PathBuf>,
    pub horizon: Option<f64>,
    pub step: Option<f64>,
    pub s_samples: Option<usize>,
    pub out: Option<PathBuf>,
    pub parallel: Option<usize>,
    pub margin: Option<f64>,
}

/// A problem with its run settings resolved. Flags override the config's
/// `[run]` section, which overrides preset defaults.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub problem: Problem,
    pub h_max: f64,
    pub s_samples: SSamples,
    pub margin: f64,
    pub parallel: Option<usize>,
    pub output: Option<PathBuf>,
}

fn parse_params(params: &[String]) -> Result<Vec<(String, f64)>, CliError> {
    params
        .iter()
        .map(|kv| {
            let (k, v) = kv.split_once('=').ok_or_else(|| CliError::Config(format!("expected key=value, found `{kv}`")))?;
            Ok((k.trim().to_string(), config::parse_f64(k.trim(), v)?))
        })
        .collect()
}

pub fn prepare(req: &RunRequest) -> Result<Prepared, CliError> {
    let (doc, base) = match &req.config {
        Some(path) => {
            let src = std::fs::read_to_string(path).map_err(|e| CliError::config(&format!("{}", path.display()), e))?;
            let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
            (Some(ConfigDoc::parse(&src)?), base)
        }
        None => (None, PathBuf::new()),
    };
    let run = match &doc {
        Some(d) => RunSection::from_doc(d, &base)?,
        None => RunSection::default(),
    };
    let horizon = req.horizon.or(run.horizon);
    let problem = match (&req.preset, &doc) {
        (Some(name), doc) => {
            if doc.as_ref().is_some_and(|d| d.get("preset", "name").is_some() || d.get("equation", "A").is_some()) {
                return Err(CliError::Config("both a preset argument and a problem in the config file".into()));
            }
            presets::find(name)?.build(&parse_params(&req.params)?, horizon)?
        }
        (None, Some(d)) => {
            if !req.params.is_empty() {
                return Err(CliError::Config("key=value parameters need a preset argument".into()));
            }
            config::problem_from_doc(d, &base, horizon)?
        }
        (None, None) => return Err(CliError::Config("name a preset or pass --config".into())),
    };

    let h_max = req.step.or(run.h_max).unwrap_or(problem.h_max);
    if !(h_max > 0.0 && h_max.is_finite()) {
        return Err(CliError::Config(format!("step must be positive, got {h_max}")));
    }
    let margin = req.margin.or(run.margin).unwrap_or(0.0);
    if !(0.0..1.0).contains(&margin) {
        return Err(CliError::Config(format!("margin must lie in [0, 1), got {margin}")));
    }
    let s_samples = match req.s_samples {
        Some(0) => return Err(CliError::Config("--s-samples needs at least one column".into())),
        Some(n) => SSamples::Count(n),
        None => run.s_samples.unwrap_or_else(|| problem.s_samples.clone()),
    };
    let parallel = req.parallel.or(run.parallel);
    if parallel == Some(0) {
        return Err(CliError::Config("--parallel needs at least one worker".into()));
    }
    Ok(Prepared { problem, h_max, s_samples, margin, parallel, output: req.out.clone().or(run.output) })
}

/// Runs `f` on a rayon pool of `workers` threads, or on the global pool.
pub fn with_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    match workers {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Numeric(format!("worker pool: {e}")))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

/// `field.csv` → `field.summary.csv`.
pub fn summary_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = out.extension().map_or("csv".to_string(), |e| e.to_string_lossy().into_owned());
    out.with_file_name(format!("{stem}.summary.{ext}"))
}

/// One line per preset: name, parameters, default horizon and step.
pub fn list_examples() -> String {
    let mut out = String::new();
    for p in presets::PRESETS {
        let params: Vec<String> = p.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
        let params = if params.is_empty() { "-".to_string() } else { params.join(",") };
        out.push_str(&format!("{:<16} {:<28} horizon={} h_max={}  {}\n", p.name, params, p.horizon, p.h_max, p.summary));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_defaults() {
        let req = RunRequest {
            preset: Some("r_const".into()),
            params: vec!["a=0.5".into()],
            step: Some(0.05),
            s_samples: Some(8),
            ..Default::default()
        };
        let p = prepare(&req).unwrap();
        assert_eq!(p.h_max, 0.05);
        assert_eq!(p.s_samples, SSamples::Count(8));
        assert_eq!(p.problem.eq.a.eval(1.0, &p.problem.eq.ts).unwrap(), 0.5);
        assert_eq!(summary_path(Path::new("out/field.csv")), PathBuf::from("out/field.summary.csv"));
    }

    #[test]
    fn request_errors() {
        let bad = [
            RunRequest::default(),
            RunRequest { preset: Some("r_const".into()), params: vec!["a".into()], ..Default::default() },
            RunRequest { preset: Some("r_const".into()), step: Some(-1.0), ..Default::default() },
            RunRequest { preset: Some("r_const".into()), margin: Some(1.0), ..Default::default() },
            RunRequest { preset: Some("r_const".into()), parallel: Some(0), ..Default::default() },
        ];
        for req in bad {
            assert!(matches!(prepare(&req), Err(CliError::Config(_))), "{req:?}");
        }
        let req = RunRequest { preset: Some("bogus".into()), ..Default::default() };
        assert!(matches!(prepare(&req), Err(CliError::UnknownExample(_))));
    }
}
