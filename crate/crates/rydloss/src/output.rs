//! Structured result emission: atomic file writes, CSV tables with
//! unit-bearing headers, and JSON metadata carrying the effective config so
//! every output is reproducible from its own echo.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process;

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::medium::MediumParams;

/// Write `bytes` to `path` atomically: a temp file in the same directory is
/// renamed over the target, so readers never observe a partial file.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::Usage(format!("output path {} has no file name", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp-{}", name.to_string_lossy(), process::id()));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        e.into()
    })
}

/// The effective medium parameters in experiment units (ν = ω/2π, MHz),
/// sorted for a stable echo.
pub fn config_echo(params: &MediumParams, profile: &str) -> Value {
    let sorted: BTreeMap<String, f64> = params.to_experiment_units().into_iter().collect();
    json!({ "medium": sorted, "profile": profile })
}

/// JSON metadata attached to every output: config echo, code version, and
/// wall time. `payload` carries the subcommand-specific results.
pub fn with_metadata(payload: Value, echo: Value, wall_ms: f64) -> Value {
    json!({
        "metadata": {
            "config": echo,
            "version": env!("CARGO_PKG_VERSION"),
            "wall_ms": wall_ms,
        },
        "results": payload,
    })
}

/// Render a JSON value with a trailing newline.
pub fn json_bytes(value: &Value) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("serializable value");
    s.push('\n');
    s.into_bytes()
}

/// CSV of an (i, j)-indexed scalar map over two detuning grids in MHz.
/// NaN cells are emitted as the literal `NaN` sentinel.
pub fn map_csv(
    value_header: &str,
    delta_mhz: &[f64],
    delta_s_mhz: &[f64],
    values: &[Vec<f64>],
) -> String {
    let mut out = String::from("delta_MHz,delta_s_MHz,");
    out.push_str(value_header);
    out.push('\n');
    for (i, d) in delta_mhz.iter().enumerate() {
        for (j, ds) in delta_s_mhz.iter().enumerate() {
            let v = values[i][j];
            if v.is_nan() {
                out.push_str(&format!("{d:.6},{ds:.6},NaN\n"));
            } else {
                out.push_str(&format!("{d:.6},{ds:.6},{v:.12e}\n"));
            }
        }
    }
    out
}

/// Rows of (x, columns...) with a unit-bearing header line.
pub fn table_csv(header: &str, rows: &[Vec<f64>]) -> String {
    let mut out = String::from(header);
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row
            .iter()
            .map(|v| if v.is_nan() { "NaN".to_string() } else { format!("{v:.12e}") })
            .collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Hole list for maps with failed points, as JSON.
pub fn holes_json(holes: &[(usize, usize, String)]) -> Value {
    Value::Array(
        holes
            .iter()
            .map(|(i, j, msg)| json!({ "i": i, "j": j, "error": msg }))
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_and_leaves_no_temp() {
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("out.csv");
        atomic_write(&target, b"first").unwrap();
        atomic_write(&target, b"second").unwrap();
        assert_eq!(fs::read(&target).unwrap(), b"second");
        let leftovers: Vec<_> = fs::read_dir(dir.path())
            .unwrap()
            .filter_map(|e| e.ok())
            .filter(|e| e.file_name().to_string_lossy().contains("tmp"))
            .collect();
        assert!(leftovers.is_empty());
    }

    #[test]
    fn map_csv_marks_holes_with_nan_sentinel() {
        let csv = map_csv("abs_beta", &[10.0, 11.0], &[0.0], &[vec![1.5], vec![f64::NAN]]);
        assert!(csv.starts_with("delta_MHz,delta_s_MHz,abs_beta\n"));
        assert!(csv.contains("11.000000,0.000000,NaN"));
    }

    #[test]
    fn config_echo_is_sorted_and_stable() {
        let p = MediumParams::simulation_preset();
        let a = serde_json::to_string(&config_echo(&p, "gaussian")).unwrap();
        let b = serde_json::to_string(&config_echo(&p, "gaussian")).unwrap();
        assert_eq!(a, b);
        let keys: Vec<&str> = a.matches("_MHz").collect();
        assert!(!keys.is_empty());
    }
}
