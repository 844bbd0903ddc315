use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use super::{ExperimentConfig, ResultRow};
use crate::error::{Error, Result};

pub const CSV_VERSION: u32 = 1;

pub const CSV_COLUMNS: &str =
    "scenario,snr_db,param,index,metric,value,n_trials,std_error,fingerprint,seed";

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Header comments (schema version, code provenance, fingerprint, full
/// config), the column line, then one line per row in the given order.
pub fn csv_string(rows: &[ResultRow], cfg: &ExperimentConfig) -> String {
    let code = if cfg.alist_path.is_none() {
        "substituted"
    } else {
        "external"
    };
    let mut s = format!(
        "# dopplerfg-results v{CSV_VERSION} scenario={} code={code} fingerprint={}\n",
        cfg.scenario,
        cfg.fingerprint()
    );
    if cfg.rw.sigma_w_mode == crate::rw_estimator::SigmaWMode::Paper {
        s.push_str(
            "# rw.sigma_w_mode=paper uses delta_phi_max/6; uniform_var uses delta_phi_max^2/3\n",
        );
    }
    for line in cfg.to_text().lines() {
        let _ = writeln!(s, "# {line}");
    }
    s.push_str(CSV_COLUMNS);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            r.scenario,
            r.snr_db,
            opt(r.param),
            opt(r.index),
            r.metric,
            r.value,
            r.n_trials,
            r.std_error,
            r.fingerprint,
            r.seed
        );
    }
    s
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn emit_csv(rows: &[ResultRow], cfg: &ExperimentConfig, path: &Path) -> Result<()> {
    write(path, &csv_string(rows, cfg))
}

/// A gnuplot script drawing one series per (metric, param) pair from the
/// CSV at `csv_name`; x is the symbol index for traces and SNR otherwise.
pub fn plotscript_string(rows: &[ResultRow], csv_name: &str) -> String {
    let series: BTreeSet<(String, Option<u64>)> = rows
        .iter()
        .filter(|r| r.value.is_finite())
        .map(|r| (r.metric.clone(), r.param.map(f64::to_bits)))
        .collect();
    let trace = rows.iter().any(|r| r.index.is_some());
    let (xcol, xlabel) = if trace {
        (4, "symbol index k")
    } else {
        (2, "SNR (dB)")
    };
    let mut s = String::new();
    s.push_str(
        "set datafile separator ','\nset datafile commentschars '#'\nset key outside\nset grid\n",
    );
    let _ = writeln!(s, "set xlabel '{xlabel}'");
    if !trace {
        s.push_str("set logscale y\nset format y '%.0e'\n");
    }
    let _ = writeln!(s, "file = '{csv_name}'");
    let parts: Vec<String> = series
        .iter()
        .map(|(m, p)| {
            let (cond, title) = match p {
                Some(bits) => {
                    let v = f64::from_bits(*bits);
                    (format!("strcol(5) eq '{m}' && $3 == {v}"), format!("{m} ({v})"))
                }
                None => (format!("strcol(5) eq '{m}'"), m.clone()),
            };
            format!("file every ::1 using {xcol}:(({cond}) ? $6 : 1/0) with linespoints title '{title}'")
        })
        .collect();
    if parts.is_empty() {
        s.push_str("# no rows\n");
    } else {
        let _ = writeln!(s, "plot {}", parts.join(", \\\n     "));
    }
    s
}

pub fn emit_plotscript(rows: &[ResultRow], csv_path: &Path, path: &Path) -> Result<()> {
    let name = csv_path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    write(path, &plotscript_string(rows, &name))
}
