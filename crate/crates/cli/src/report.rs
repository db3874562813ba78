//! Report envelope shared by every subcommand.
//!
//! Schema (version 1), JSON object with keys in this order:
//! `schema_version`, `command`, `versions`, `config` (the resolved run
//! configuration), `result` (command specific) and `timing`. Only `timing`
//! varies between reruns of the same configuration.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{io_context, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize)]
pub struct Versions {
    pub lcmat: &'static str,
}

#[derive(Debug, Serialize)]
pub struct Timing {
    pub wall_seconds: f64,
}

#[derive(Debug, Serialize)]
pub struct Report<'a, C: Serialize, R: Serialize> {
    pub schema_version: u32,
    pub command: &'a str,
    pub versions: Versions,
    pub config: &'a C,
    pub result: &'a R,
    pub timing: Timing,
}

impl<'a, C: Serialize, R: Serialize> Report<'a, C, R> {
    pub fn new(command: &'a str, config: &'a C, result: &'a R, wall_seconds: f64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            command,
            versions: Versions {
                lcmat: env!("CARGO_PKG_VERSION"),
            },
            config,
            result,
            timing: Timing { wall_seconds },
        }
    }
}

/// Resolves a relative output path against the output directory.
pub fn resolve(out_dir: Option<&Path>, path: &Path) -> PathBuf {
    match out_dir {
        Some(dir) if path.is_relative() => dir.join(path),
        _ => path.to_path_buf(),
    }
}

fn ensure_parent(path: &Path) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_context(format!("creating {}", parent.display())))?;
    }
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    ensure_parent(path)?;
    let mut text = serde_json::to_string_pretty(value).expect("report types always serialize");
    text.push('\n');
    fs::write(path, text).map_err(io_context(format!("writing {}", path.display())))
}

/// A flat table for plotting.
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

pub fn write_table(path: &Path, table: &Table) -> CliResult<()> {
    ensure_parent(path)?;
    let to_io = |e: csv::Error| std::io::Error::other(e.to_string());
    let write = || -> Result<(), std::io::Error> {
        let mut w = csv::Writer::from_path(path).map_err(to_io)?;
        w.write_record(&table.header).map_err(to_io)?;
        for row in &table.rows {
            w.write_record(row).map_err(to_io)?;
        }
        w.flush()
    };
    write().map_err(io_context(format!("writing {}", path.display())))
}

/// Optional value as a CSV cell (empty when absent).
pub fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}
