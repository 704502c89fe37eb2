//! Convergence reports and their emission as CSV, aligned tables and
//! plot-data blocks. Data files are byte-stable across reruns of the same
//! config: timestamps live in a sidecar, never in the data.

use super::config::Format;
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EmitError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// One row of an eps sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub eps: f64,
    pub h: f64,
    pub l1_error: f64,
    pub l2_error: f64,
    pub energy_fine: f64,
    pub energy_eff: f64,
    pub iterations: usize,
    /// `(atom location, L2 norm of the extracted fine-scale jump,
    /// relative error against the effective jump)` per `nu`-atom.
    pub jumps: Vec<(f64, f64, f64)>,
    /// Solver failure message, if the row could not be solved.
    pub error: Option<String>,
}

/// Full sweep report plus one-time effective-solution data.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub name: String,
    pub rows: Vec<ConvergenceRow>,
    /// `(location, value)` of the limit jump per `nu`-atom (1-D oracle runs).
    pub limit_jumps: Vec<(f64, f64)>,
    /// Transmission residuals of the effective solution:
    /// `(location, is_nu, relative)`.
    pub residuals: Vec<(f64, bool, f64)>,
    /// `L1` norm of the effective solution (error normalizer).
    pub effective_l1_norm: f64,
    pub config_hash: String,
    pub warnings: Vec<String>,
}

impl ConvergenceReport {
    pub fn csv_header(&self) -> String {
        let mut header =
            String::from("eps,h,l1_error,l2_error,energy_fine,energy_eff,iterations");
        for (loc, _, _) in self.rows.first().map_or(&[][..], |r| &r.jumps) {
            let _ = write!(header, ",jump_l2@{loc},jump_relerr@{loc}");
        }
        for (loc, is_nu, _) in &self.residuals {
            let kind = if *is_nu { "nu" } else { "m" };
            let _ = write!(header, ",tr_{kind}@{loc}");
        }
        header.push_str(",status");
        header
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.csv_header();
        out.push('\n');
        for row in &self.rows {
            let _ = write!(
                out,
                "{},{},{},{},{},{},{}",
                row.eps,
                row.h,
                row.l1_error,
                row.l2_error,
                row.energy_fine,
                row.energy_eff,
                row.iterations
            );
            for (_, l2, rel) in &row.jumps {
                let _ = write!(out, ",{l2},{rel}");
            }
            for (_, _, rel) in &self.residuals {
                let _ = write!(out, ",{rel}");
            }
            match &row.error {
                None => out.push_str(",ok\n"),
                Some(_) => out.push_str(",solver_failure\n"),
            }
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = format!("# {}\n", self.name);
        let _ = writeln!(
            out,
            "{:>12} {:>12} {:>13} {:>13} {:>13} {:>13} {:>10}  status",
            "eps", "h", "l1_error", "l2_error", "energy_fine", "energy_eff", "iters"
        );
        for row in &self.rows {
            let _ = writeln!(
                out,
                "{:>12.5e} {:>12.5e} {:>13.6e} {:>13.6e} {:>13.6e} {:>13.6e} {:>10}  {}",
                row.eps,
                row.h,
                row.l1_error,
                row.l2_error,
                row.energy_fine,
                row.energy_eff,
                row.iterations,
                row.error.as_deref().unwrap_or("ok")
            );
        }
        for (loc, value) in &self.limit_jumps {
            let _ = writeln!(out, "# limit jump @ {loc}: {value:.9e}");
        }
        for (loc, is_nu, rel) in &self.residuals {
            let kind = if *is_nu { "nu" } else { "m" };
            let _ = writeln!(out, "# transmission residual ({kind}) @ {loc}: {rel:.3e}");
        }
        out
    }

    /// Plot data: one x-y block per column, blocks separated by blank lines.
    pub fn to_plotdata(&self) -> String {
        type Column = (&'static str, fn(&ConvergenceRow) -> f64);
        let mut out = String::new();
        let columns: [Column; 4] = [
            ("l1_error", |r| r.l1_error),
            ("l2_error", |r| r.l2_error),
            ("energy_fine", |r| r.energy_fine),
            ("energy_eff", |r| r.energy_eff),
        ];
        for (k, (name, get)) in columns.iter().enumerate() {
            if k > 0 {
                out.push('\n');
            }
            let _ = writeln!(out, "# eps {name}");
            for row in &self.rows {
                let _ = writeln!(out, "{} {}", row.eps, get(row));
            }
        }
        out
    }

    pub fn emit(
        &self,
        out_dir: &Path,
        formats: &[Format],
        base: &str,
    ) -> Result<Vec<String>, EmitError> {
        emit_files(
            out_dir,
            formats,
            base,
            &self.to_csv(),
            &self.to_table(),
            &self.to_plotdata(),
            &self.sidecar(),
        )
    }

    fn sidecar(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "config_hash = \"{}\"", self.config_hash);
        let _ = writeln!(out, "tool_version = \"{}\"", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(
            out,
            "created_unix = {}",
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0)
        );
        let _ = writeln!(out, "effective_l1_norm = {:e}", self.effective_l1_norm);
        for w in &self.warnings {
            let _ = writeln!(out, "# warning: {w}");
        }
        out
    }
}

/// Report of the common-atom demo: two nested families, same declared
/// limits, opposite regimes.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoReport {
    pub name: String,
    pub rows: Vec<DemoRow>,
    pub regime_a: String,
    pub regime_b: String,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoRow {
    pub eps: f64,
    /// `L1` distance between the two families at this eps.
    pub distance: f64,
    /// `L1` Cauchy increments within each family (NaN on the first row).
    pub cauchy_a: f64,
    pub cauchy_b: f64,
}

impl DemoReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("eps,l1_distance,cauchy_a,cauchy_b\n");
        for row in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                row.eps, row.distance, row.cauchy_a, row.cauchy_b
            );
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = format!(
            "# {} (family A: {}, family B: {})\n",
            self.name, self.regime_a, self.regime_b
        );
        let _ = writeln!(
            out,
            "{:>12} {:>14} {:>14} {:>14}",
            "eps", "l1_distance", "cauchy_a", "cauchy_b"
        );
        for row in &self.rows {
            let _ = writeln!(
                out,
                "{:>12.5e} {:>14.6e} {:>14.6e} {:>14.6e}",
                row.eps, row.distance, row.cauchy_a, row.cauchy_b
            );
        }
        out
    }

    pub fn to_plotdata(&self) -> String {
        let mut out = String::from("# eps l1_distance\n");
        for row in &self.rows {
            let _ = writeln!(out, "{} {}", row.eps, row.distance);
        }
        out
    }

    pub fn emit(
        &self,
        out_dir: &Path,
        formats: &[Format],
        base: &str,
    ) -> Result<Vec<String>, EmitError> {
        let sidecar = format!(
            "config_hash = \"{}\"\ntool_version = \"{}\"\ncreated_unix = {}\nregime_a = \"{}\"\nregime_b = \"{}\"\n",
            self.config_hash,
            env!("CARGO_PKG_VERSION"),
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            self.regime_a,
            self.regime_b,
        );
        emit_files(
            out_dir,
            formats,
            base,
            &self.to_csv(),
            &self.to_table(),
            &self.to_plotdata(),
            &sidecar,
        )
    }
}

fn emit_files(
    out_dir: &Path,
    formats: &[Format],
    base: &str,
    csv: &str,
    table: &str,
    plotdata: &str,
    sidecar: &str,
) -> Result<Vec<String>, EmitError> {
    let write = |name: String, content: &str| -> Result<String, EmitError> {
        let path = out_dir.join(&name);
        std::fs::create_dir_all(out_dir).map_err(|source| EmitError::Io {
            path: out_dir.display().to_string(),
            source,
        })?;
        std::fs::write(&path, content).map_err(|source| EmitError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(path.display().to_string())
    };
    let mut written = Vec::new();
    for format in formats {
        match format {
            Format::Csv => written.push(write(format!("{base}.csv"), csv)?),
            Format::Table => {
                // the table goes to standard output; also keep a copy
                print!("{table}");
                written.push(write(format!("{base}.txt"), table)?);
            }
            Format::PlotData => written.push(write(format!("{base}.dat"), plotdata)?),
        }
    }
    written.push(write(format!("{base}.meta.toml"), sidecar)?);
    Ok(written)
}

/// Nodal solution export: CSV (`x...,u...`) and structured plot blocks.
pub fn solution_csv(coords: &[Vec<f64>], values: &[Vec<f64>], n_comp: usize) -> String {
    let dim = coords.first().map_or(1, |c| c.len());
    let mut out = String::new();
    for k in 0..dim {
        if k > 0 {
            out.push(',');
        }
        let _ = write!(out, "x{}", k + 1);
    }
    for c in 0..n_comp {
        let _ = write!(out, ",u{}", c + 1);
    }
    out.push('\n');
    for (x, u) in coords.iter().zip(values) {
        for (k, v) in x.iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            let _ = write!(out, "{v}");
        }
        for v in u {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

/// Structured-grid plot blocks: scanlines grouped by the leading coordinate,
/// blank line between groups (gnuplot-style).
pub fn solution_plotdata(coords: &[Vec<f64>], values: &[Vec<f64>]) -> String {
    let mut out = String::new();
    let mut last_lead: Option<f64> = None;
    for (x, u) in coords.iter().zip(values) {
        if let Some(lead) = last_lead {
            if x[0] != lead {
                out.push('\n');
            }
        }
        last_lead = Some(x[0]);
        for v in x {
            let _ = write!(out, "{v} ");
        }
        for v in u {
            let _ = write!(out, "{v} ");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_report() -> ConvergenceReport {
        ConvergenceReport {
            name: "sample".into(),
            rows: vec![ConvergenceRow {
                eps: 0.1,
                h: 0.01,
                l1_error: 1e-3,
                l2_error: 2e-3,
                energy_fine: 0.08,
                energy_eff: 0.081,
                iterations: 42,
                jumps: vec![(1.0 / 3.0, 0.083, 0.01)],
                error: None,
            }],
            limit_jumps: vec![(1.0 / 3.0, 1.0 / 12.0)],
            residuals: vec![(1.0 / 3.0, true, 1e-2)],
            effective_l1_norm: 0.05,
            config_hash: "abc".into(),
            warnings: vec![],
        }
    }

    #[test]
    fn csv_header_contract() {
        let report = sample_report();
        let csv = report.to_csv();
        assert!(csv.starts_with("eps,h,l1_error,l2_error,energy_fine,energy_eff,iterations,"));
        assert!(csv.lines().nth(1).unwrap().ends_with(",ok"));
    }

    #[test]
    fn empty_report_is_header_only() {
        let mut report = sample_report();
        report.rows.clear();
        report.residuals.clear();
        let csv = report.to_csv();
        assert_eq!(csv.lines().count(), 1);
    }

    #[test]
    fn plotdata_blocks_separated_by_blank_lines() {
        let report = sample_report();
        let dat = report.to_plotdata();
        assert_eq!(dat.matches("\n\n").count(), 3);
    }

    #[test]
    fn data_files_are_byte_stable() {
        let report = sample_report();
        assert_eq!(report.to_csv(), report.to_csv());
        assert_eq!(report.to_plotdata(), report.to_plotdata());
        // no timestamp in the data files
        assert!(!report.to_csv().contains("created"));
    }
}
