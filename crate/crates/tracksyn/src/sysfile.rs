//! Parser for the plain-text system definition format.
//!
//! ```text
//! [system]
//! n = 2
//! m = 1
//! p = 1
//! f1 = x1*w1 + x2 + u1
//! f2 = x2 + u1
//!
//! [trajectory]
//! xd1 = 0
//! xd2 = 0
//! ud1 = 0
//!
//! [disturbance]
//! w1 = -2              # or: w1 = samples:wind.csv  (columns t,value)
//!
//! [synthesis]
//! eigenvalues = -1, -1  # or: auto
//! margin = 0.5
//! l2 = 1, 0            # optional augmentation column override
//!
//! [simulate]
//! x0 = 1, 1
//! T = 20
//! dt = 0.001
//! ```
//!
//! `#` starts a comment. Keys are case-sensitive; unknown keys are errors.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq)]
pub struct FileError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for FileError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

impl std::error::Error for FileError {}

/// Disturbance channel source: an expression in `t`, or a sampled signal
/// loaded from CSV and linearly interpolated.
#[derive(Debug, Clone, PartialEq)]
pub enum DisturbanceSpec {
    Expr(String),
    Samples(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub enum EigenSpec {
    Auto,
    List(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisSection {
    pub eigenvalues: EigenSpec,
    pub margin: f64,
    /// User-supplied augmentation columns, keyed by index (`l2 = 1, 0`
    /// supplies column 2). When present they override the orthonormal
    /// complement construction.
    pub columns: BTreeMap<usize, Vec<f64>>,
}

impl Default for SynthesisSection {
    fn default() -> Self {
        SynthesisSection {
            eigenvalues: EigenSpec::Auto,
            margin: 0.5,
            columns: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateSection {
    /// Initial state; defaults to `x_d(0)` when absent.
    pub x0: Option<Vec<f64>>,
    pub horizon: f64,
    pub dt: f64,
}

impl Default for SimulateSection {
    fn default() -> Self {
        SimulateSection {
            x0: None,
            horizon: 20.0,
            dt: 1e-3,
        }
    }
}

/// Raw parsed system file; expressions are still text at this stage.
#[derive(Debug, Clone)]
pub struct SystemFile {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub f: Vec<String>,
    pub xd: Vec<String>,
    pub ud: Vec<String>,
    pub w: Vec<DisturbanceSpec>,
    pub synthesis: SynthesisSection,
    pub simulate: SimulateSection,
    /// Directory sample paths are resolved against.
    pub base_dir: PathBuf,
}

pub fn parse_file(path: &Path) -> Result<SystemFile, FileError> {
    let text = std::fs::read_to_string(path).map_err(|e| FileError {
        line: 0,
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    parse_str(&text, base)
}

pub fn parse_str(text: &str, base_dir: PathBuf) -> Result<SystemFile, FileError> {
    let mut sections: BTreeMap<String, Vec<(usize, String, String)>> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            let name = name.trim().to_string();
            if !matches!(
                name.as_str(),
                "system" | "trajectory" | "disturbance" | "synthesis" | "simulate"
            ) {
                return Err(FileError {
                    line: line_no,
                    message: format!("unknown section `[{name}]`"),
                });
            }
            current = Some(name.clone());
            sections.entry(name).or_default();
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(FileError {
                line: line_no,
                message: format!("expected `key = value`, got `{line}`"),
            });
        };
        let Some(section) = current.clone() else {
            return Err(FileError {
                line: line_no,
                message: "key before any [section] header".into(),
            });
        };
        sections.get_mut(&section).unwrap().push((
            line_no,
            key.trim().to_string(),
            value.trim().to_string(),
        ));
    }

    let system = sections.get("system").ok_or(FileError {
        line: 0,
        message: "missing [system] section".into(),
    })?;

    let mut n = None;
    let mut m = None;
    let mut p = 0usize;
    let mut f_entries: BTreeMap<usize, String> = BTreeMap::new();
    for (line, key, value) in system {
        match key.as_str() {
            "n" => n = Some(parse_usize(*line, key, value)?),
            "m" => m = Some(parse_usize(*line, key, value)?),
            "p" => p = parse_usize(*line, key, value)?,
            _ => {
                let i = indexed_key(*line, key, "f")?;
                if f_entries.insert(i, value.clone()).is_some() {
                    return Err(dup(*line, key));
                }
            }
        }
    }
    let n = n.ok_or(FileError {
        line: 0,
        message: "[system] must set n".into(),
    })?;
    let m = m.ok_or(FileError {
        line: 0,
        message: "[system] must set m".into(),
    })?;
    if n == 0 {
        return Err(FileError {
            line: 0,
            message: "n must be at least 1".into(),
        });
    }
    if m == 0 || m > n {
        return Err(FileError {
            line: 0,
            message: format!("m must satisfy 1 <= m <= n (got m={m}, n={n})"),
        });
    }
    let f = collect_indexed(f_entries, n, "f")?;

    let trajectory = sections.get("trajectory").ok_or(FileError {
        line: 0,
        message: "missing [trajectory] section".into(),
    })?;
    let mut xd_entries = BTreeMap::new();
    let mut ud_entries = BTreeMap::new();
    for (line, key, value) in trajectory {
        if key.starts_with("xd") {
            let i = indexed_key(*line, key, "xd")?;
            if xd_entries.insert(i, value.clone()).is_some() {
                return Err(dup(*line, key));
            }
        } else if key.starts_with("ud") {
            let i = indexed_key(*line, key, "ud")?;
            if ud_entries.insert(i, value.clone()).is_some() {
                return Err(dup(*line, key));
            }
        } else {
            return Err(unknown(*line, "trajectory", key));
        }
    }
    let xd = collect_indexed(xd_entries, n, "xd")?;
    let ud = collect_indexed(ud_entries, m, "ud")?;

    let mut w = Vec::new();
    if p > 0 {
        let disturbance = sections.get("disturbance").ok_or(FileError {
            line: 0,
            message: "p > 0 requires a [disturbance] section".into(),
        })?;
        let mut w_entries: BTreeMap<usize, DisturbanceSpec> = BTreeMap::new();
        for (line, key, value) in disturbance {
            let i = indexed_key(*line, key, "w")?;
            let spec = match value.strip_prefix("samples:") {
                Some(path) => DisturbanceSpec::Samples(PathBuf::from(path.trim())),
                None => DisturbanceSpec::Expr(value.clone()),
            };
            if w_entries.insert(i, spec).is_some() {
                return Err(dup(*line, key));
            }
        }
        for i in 1..=p {
            w.push(w_entries.remove(&i).ok_or(FileError {
                line: 0,
                message: format!("missing w{i} in [disturbance]"),
            })?);
        }
        if let Some((&i, _)) = w_entries.iter().next() {
            return Err(FileError {
                line: 0,
                message: format!("w{i} exceeds p={p}"),
            });
        }
    } else if sections.get("disturbance").is_some_and(|s| !s.is_empty()) {
        return Err(FileError {
            line: 0,
            message: "[disturbance] entries given but p = 0".into(),
        });
    }

    let mut synthesis = SynthesisSection::default();
    if let Some(entries) = sections.get("synthesis") {
        for (line, key, value) in entries {
            match key.as_str() {
                "eigenvalues" => {
                    synthesis.eigenvalues = if value == "auto" {
                        EigenSpec::Auto
                    } else {
                        EigenSpec::List(parse_list(*line, key, value)?)
                    };
                }
                "margin" => synthesis.margin = parse_f64(*line, key, value)?,
                _ if key.starts_with('l') => {
                    let i = indexed_key(*line, key, "l")?;
                    if i <= m || i > n {
                        return Err(FileError {
                            line: *line,
                            message: format!(
                                "augmentation column l{i} out of range (expected {} to {n})",
                                m + 1
                            ),
                        });
                    }
                    let col = parse_list(*line, key, value)?;
                    if col.len() != n {
                        return Err(FileError {
                            line: *line,
                            message: format!("l{i} must have {n} entries, got {}", col.len()),
                        });
                    }
                    synthesis.columns.insert(i, col);
                }
                _ => return Err(unknown(*line, "synthesis", key)),
            }
        }
    }

    let mut simulate = SimulateSection::default();
    if let Some(entries) = sections.get("simulate") {
        for (line, key, value) in entries {
            match key.as_str() {
                "x0" => {
                    let x0 = parse_list(*line, key, value)?;
                    if x0.len() != n {
                        return Err(FileError {
                            line: *line,
                            message: format!("x0 must have {n} entries, got {}", x0.len()),
                        });
                    }
                    simulate.x0 = Some(x0);
                }
                "T" => simulate.horizon = parse_f64(*line, key, value)?,
                "dt" => simulate.dt = parse_f64(*line, key, value)?,
                _ => return Err(unknown(*line, "simulate", key)),
            }
        }
    }
    if !(simulate.dt > 0.0) || !(simulate.horizon >= simulate.dt) {
        return Err(FileError {
            line: 0,
            message: format!(
                "[simulate] requires dt > 0 and T >= dt (got T={}, dt={})",
                simulate.horizon, simulate.dt
            ),
        });
    }

    Ok(SystemFile {
        n,
        m,
        p,
        f,
        xd,
        ud,
        w,
        synthesis,
        simulate,
        base_dir,
    })
}

fn dup(line: usize, key: &str) -> FileError {
    FileError {
        line,
        message: format!("duplicate key `{key}`"),
    }
}

fn unknown(line: usize, section: &str, key: &str) -> FileError {
    FileError {
        line,
        message: format!("unknown key `{key}` in [{section}]"),
    }
}

fn indexed_key(line: usize, key: &str, prefix: &str) -> Result<usize, FileError> {
    key.strip_prefix(prefix)
        .and_then(|rest| rest.parse::<usize>().ok())
        .filter(|&i| i >= 1)
        .ok_or_else(|| FileError {
            line,
            message: format!("expected `{prefix}<index>`, got `{key}`"),
        })
}

fn collect_indexed(
    entries: BTreeMap<usize, String>,
    count: usize,
    prefix: &str,
) -> Result<Vec<String>, FileError> {
    let mut out = Vec::with_capacity(count);
    for i in 1..=count {
        out.push(entries.get(&i).cloned().ok_or(FileError {
            line: 0,
            message: format!("missing {prefix}{i}"),
        })?);
    }
    if let Some((&i, _)) = entries.iter().find(|(&i, _)| i > count) {
        return Err(FileError {
            line: 0,
            message: format!("{prefix}{i} exceeds declared dimension {count}"),
        });
    }
    Ok(out)
}

fn parse_usize(line: usize, key: &str, value: &str) -> Result<usize, FileError> {
    value.parse().map_err(|_| FileError {
        line,
        message: format!("{key} must be a nonnegative integer, got `{value}`"),
    })
}

fn parse_f64(line: usize, key: &str, value: &str) -> Result<f64, FileError> {
    value.parse().map_err(|_| FileError {
        line,
        message: format!("{key} must be a number, got `{value}`"),
    })
}

fn parse_list(line: usize, key: &str, value: &str) -> Result<Vec<f64>, FileError> {
    value
        .split(',')
        .map(|tok| {
            tok.trim().parse::<f64>().map_err(|_| FileError {
                line,
                message: format!("{key}: invalid number `{}`", tok.trim()),
            })
        })
        .collect()
}

/// Reads a two-column `t,value` CSV (optional header) for sampled
/// disturbances.
pub fn read_samples(path: &Path) -> Result<Vec<(f64, f64)>, FileError> {
    let text = std::fs::read_to_string(path).map_err(|e| FileError {
        line: 0,
        message: format!("cannot read samples {}: {e}", path.display()),
    })?;
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let (a, b) = (parts.next().unwrap_or(""), parts.next().unwrap_or(""));
        match (a.trim().parse::<f64>(), b.trim().parse::<f64>()) {
            (Ok(t), Ok(v)) => out.push((t, v)),
            _ if idx == 0 => continue, // header row
            _ => {
                return Err(FileError {
                    line: idx + 1,
                    message: format!("invalid sample row `{line}`"),
                })
            }
        }
    }
    if out.is_empty() {
        return Err(FileError {
            line: 0,
            message: format!("no samples in {}", path.display()),
        });
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(out)
}
