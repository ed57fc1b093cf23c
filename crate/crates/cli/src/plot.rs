//! Gnuplot scripts for the figure experiments. The script only references
//! CSV files listed in the run's manifest and refuses to be written when
//! any of them is missing.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Result};

use crate::output::read_manifest;

pub const SCRIPT: &str = "plot.gp";

fn ecdf_block(out: &mut String, csv: &str, title: &str) {
    let png = csv.replace(".csv", ".png");
    let _ = writeln!(out, "set output \"{png}\"");
    let _ = writeln!(out, "set title \"{title}\"");
    let _ = writeln!(out, "set xlabel \"statistic\"\nset ylabel \"cdf\"\nset key bottom right");
    let _ = writeln!(
        out,
        "plot \"{csv}\" every ::1 using 1:2 with steps lw 2 title \"empirical\", \\\n     \"{csv}\" every ::1 using 1:3 with lines dashtype 2 lw 2 title \"limit law\"\n"
    );
}

fn power_block(out: &mut String, csv: &str, n: &str) {
    let png = csv.replace(".csv", ".png");
    let _ = writeln!(out, "set output \"{png}\"");
    let _ = writeln!(out, "set title \"power, n = {n}\"");
    let _ = writeln!(out, "set xlabel \"theta_T\"\nset ylabel \"rejection probability\"\nset key bottom right");
    let _ = writeln!(
        out,
        "plot \"{csv}\" every ::1 using 1:2 with lines lw 2 dashtype 1 title \"empirical\", \\\n     \"{csv}\" every ::1 using 1:3 with lines lw 2 dashtype 2 title \"approximation\"\n"
    );
}

/// Builds the script for the run stored in `dir`.
pub fn script(dir: &Path) -> Result<String> {
    let manifest_path = dir.join("manifest.toml");
    if !manifest_path.is_file() {
        bail!("missing output files: {}", manifest_path.display());
    }
    let manifest = read_manifest(dir)?;
    let missing: Vec<PathBuf> = manifest
        .outputs
        .keys()
        .map(|f| dir.join(f))
        .filter(|p| !p.is_file())
        .collect();
    if !missing.is_empty() {
        let list: Vec<String> = missing.iter().map(|p| p.display().to_string()).collect();
        bail!("missing output files: {}", list.join(", "));
    }
    let mut out = String::from(
        "# Run with `gnuplot plot.gp` from this directory.\nset terminal pngcairo size 900,600\nset datafile separator \",\"\nset grid\n\n",
    );
    let mut blocks = 0;
    for (file, schema) in &manifest.outputs {
        let stem = file.trim_end_matches(".csv");
        if schema == "ecdf/v1" {
            let (kind, n) = stem.rsplit_once("_n").unwrap_or((stem, "?"));
            let label = if kind.starts_with("glr") {
                "GLR statistic"
            } else {
                "dual chi-square statistic"
            };
            ecdf_block(&mut out, file, &format!("{label}, n = {n}"));
            blocks += 1;
        } else if schema == "power_curve/v1" {
            let n = stem.rsplit_once("_n").map(|(_, n)| n).unwrap_or("?");
            power_block(&mut out, file, n);
            blocks += 1;
        }
    }
    if blocks == 0 {
        bail!("`{}` produces no plottable outputs", manifest.command);
    }
    Ok(out)
}

pub fn write(dir: &Path) -> Result<PathBuf> {
    let text = script(dir)?;
    let path = dir.join(SCRIPT);
    fs::write(&path, text)?;
    Ok(path)
}
