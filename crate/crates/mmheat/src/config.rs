//! Flat `key = value` configuration text, one assignment per line.
//!
//! A config names one of the built-in examples and then overrides selected
//! parameters. Overrides apply in a fixed order (resolution before things
//! derived from it), so the file order of keys never matters.

use crate::error::ConfigError;
use crate::model::{BoundaryKind, EpsilonRule, ProblemSpec, StepRule, VelocityLaw};
use crate::problems::{make_example, switch_to_pc, EXAMPLE_NAMES};

/// Which interface treatment an exact-solution run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InterfaceMode {
    /// Positions and speeds read off the exact solution.
    #[default]
    Exact,
    /// Interface integrated from the computed solution.
    PredictorCorrector,
}

/// A parsed config: the fully resolved problem plus run plumbing.
#[derive(Debug, Clone)]
pub struct ParsedConfig {
    pub example: String,
    pub spec: ProblemSpec,
    pub mode: InterfaceMode,
    pub snapshot_times: Vec<f64>,
    pub out_dir: Option<String>,
    /// `(N, L)` rungs for the refinement study.
    pub ladder: Option<Vec<(usize, usize)>>,
}

struct Entry<'a> {
    line: usize,
    key: &'a str,
    value: &'a str,
}

fn scan(text: &str) -> Result<Vec<Entry<'_>>, ConfigError> {
    let mut entries = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let stripped = raw.split('#').next().unwrap_or("").trim();
        if stripped.is_empty() {
            continue;
        }
        let Some((key, value)) = stripped.split_once('=') else {
            return Err(ConfigError::new(line, format!("expected `key = value`, got `{stripped}`")));
        };
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || value.is_empty() {
            return Err(ConfigError::new(line, "empty key or value"));
        }
        if entries.iter().any(|e: &Entry| e.key == key) {
            return Err(ConfigError::new(line, format!("duplicate key `{key}`")));
        }
        entries.push(Entry { line, key, value });
    }
    Ok(entries)
}

fn parse_f64(e: &Entry) -> Result<f64, ConfigError> {
    e.value.parse().map_err(|_| {
        ConfigError::new(e.line, format!("`{}` is not a number for key `{}`", e.value, e.key))
    })
}

fn parse_usize(e: &Entry) -> Result<usize, ConfigError> {
    e.value.parse().map_err(|_| {
        ConfigError::new(e.line, format!("`{}` is not a count for key `{}`", e.value, e.key))
    })
}

fn parse_f64_list(e: &Entry) -> Result<Vec<f64>, ConfigError> {
    e.value
        .split(',')
        .map(|part| {
            part.trim().parse().map_err(|_| {
                ConfigError::new(
                    e.line,
                    format!("`{}` in key `{}` is not a number", part.trim(), e.key),
                )
            })
        })
        .collect()
}

fn parse_usize_list(e: &Entry) -> Result<Vec<usize>, ConfigError> {
    e.value
        .split(',')
        .map(|part| {
            part.trim().parse().map_err(|_| {
                ConfigError::new(
                    e.line,
                    format!("`{}` in key `{}` is not a count", part.trim(), e.key),
                )
            })
        })
        .collect()
}

/// `N:L` pairs separated by commas, e.g. `40:40,80:160`.
fn parse_ladder(e: &Entry) -> Result<Vec<(usize, usize)>, ConfigError> {
    e.value
        .split(',')
        .map(|pair| {
            let bad = || {
                ConfigError::new(
                    e.line,
                    format!("`{}` is not an N:L pair in key `ladder`", pair.trim()),
                )
            };
            let (n, l) = pair.trim().split_once(':').ok_or_else(bad)?;
            Ok((
                n.trim().parse().map_err(|_| bad())?,
                l.trim().parse().map_err(|_| bad())?,
            ))
        })
        .collect()
}

const KNOWN_KEYS: [&str; 15] = [
    "example",
    "N",
    "L",
    "T",
    "tau",
    "theta",
    "p",
    "epsilon",
    "mu",
    "s0",
    "boundary",
    "points_per_subdomain",
    "mode",
    "snapshot_times",
    "out_dir",
];

pub fn parse_config(text: &str) -> Result<ParsedConfig, ConfigError> {
    let entries = scan(text)?;
    for e in &entries {
        if !KNOWN_KEYS.contains(&e.key) && e.key != "ladder" {
            return Err(ConfigError::new(e.line, format!("unknown key `{}`", e.key)));
        }
    }
    let find = |key: &str| entries.iter().find(|e| e.key == key);

    let example_entry = find("example")
        .ok_or_else(|| ConfigError::new(0, "missing required key `example`"))?;
    let example = example_entry.value.to_string();
    let mut spec = make_example(&example).ok_or_else(|| {
        ConfigError::new(
            example_entry.line,
            format!(
                "unknown example `{example}`; expected one of {}",
                EXAMPLE_NAMES.join(", ")
            ),
        )
    })?;
    let q = spec.q();

    // Resolution first: later keys may be checked against it.
    if let Some(e) = find("N") {
        spec.set_equal_partition(parse_usize(e)?);
    }
    if let Some(e) = find("points_per_subdomain") {
        let parts = parse_usize_list(e)?;
        if parts.len() != q + 1 {
            return Err(ConfigError::new(
                e.line,
                format!("points_per_subdomain needs {} entries, got {}", q + 1, parts.len()),
            ));
        }
        if let Some(n_entry) = find("N") {
            let n = parse_usize(n_entry)?;
            let total: usize = parts.iter().sum();
            if total != n {
                return Err(ConfigError::new(
                    e.line,
                    format!("points_per_subdomain sums to {total} but N = {n}"),
                ));
            }
        }
        spec.points_per_subdomain = parts;
    }

    if let Some(e) = find("T") {
        spec.time.final_time = parse_f64(e)?;
    }
    if let Some(e) = find("L") {
        let steps = parse_usize(e)?;
        match &mut spec.time.rule {
            StepRule::Uniform { steps: s } | StepRule::Graded { steps: s } => *s = steps,
            StepRule::BlowupAdaptive { .. } => {
                return Err(ConfigError::new(
                    e.line,
                    "L sets a step count, but this example chooses its steps adaptively",
                ));
            }
        }
    }
    if let Some(e) = find("mu") {
        let value = parse_f64(e)?;
        match &mut spec.time.rule {
            StepRule::BlowupAdaptive { mu, .. } => *mu = value,
            _ => {
                return Err(ConfigError::new(
                    e.line,
                    "mu applies only to examples with adaptive steps",
                ));
            }
        }
    }

    if let Some(e) = find("tau") {
        spec.tau = parse_f64(e)?;
    }
    if let Some(e) = find("theta") {
        let weights = parse_f64_list(e)?;
        if weights.len() != q + 2 {
            return Err(ConfigError::new(
                e.line,
                format!("theta needs {} entries for q = {q}, got {}", q + 2, weights.len()),
            ));
        }
        spec.monitor.weights = weights;
    }
    if let Some(e) = find("p") {
        spec.monitor.power_p = parse_f64(e)?;
    }
    if let Some(e) = find("epsilon") {
        let text = e.value.replace(' ', "");
        spec.monitor.epsilon = if text == "1e3/N^4" || text == "1000/N^4" {
            EpsilonRule::ThousandOverN4
        } else {
            EpsilonRule::Literal(parse_f64(e)?)
        };
    }

    // Boundary before its tuning knob so the file order of the two keys
    // never matters.
    if let Some(e) = find("boundary") {
        spec.boundary = match e.value {
            "dirichlet" => BoundaryKind::Dirichlet {
                left: 0.0,
                right: 0.0,
            },
            "absorbing" => BoundaryKind::Absorbing { s0: 1.0 },
            other => {
                return Err(ConfigError::new(
                    e.line,
                    format!("unknown boundary `{other}` (expected dirichlet or absorbing)"),
                ));
            }
        };
    }
    if let Some(e) = find("s0") {
        match &mut spec.boundary {
            BoundaryKind::Absorbing { s0 } => *s0 = parse_f64(e)?,
            BoundaryKind::Dirichlet { .. } => {
                return Err(ConfigError::new(
                    e.line,
                    "s0 tunes the absorbing boundary, but this run is Dirichlet",
                ));
            }
        }
    }

    let mut mode = InterfaceMode::Exact;
    if let Some(e) = find("mode") {
        let has_exact_law = spec
            .laws
            .iter()
            .any(|l| matches!(l.velocity, VelocityLaw::ExactInterface { .. }));
        if !has_exact_law {
            return Err(ConfigError::new(
                e.line,
                "mode applies only to examples with an exact interface solution",
            ));
        }
        mode = match e.value {
            "exact" => InterfaceMode::Exact,
            "pc" => InterfaceMode::PredictorCorrector,
            other => {
                return Err(ConfigError::new(
                    e.line,
                    format!("unknown mode `{other}` (expected exact or pc)"),
                ));
            }
        };
        if mode == InterfaceMode::PredictorCorrector {
            switch_to_pc(&mut spec, false);
        }
    }

    let snapshot_times = match find("snapshot_times") {
        Some(e) => parse_f64_list(e)?,
        None => Vec::new(),
    };
    let out_dir = find("out_dir").map(|e| e.value.to_string());
    let ladder = match find("ladder") {
        Some(e) => Some(parse_ladder(e)?),
        None => None,
    };

    Ok(ParsedConfig {
        example,
        spec,
        mode,
        snapshot_times,
        out_dir,
        ladder,
    })
}
