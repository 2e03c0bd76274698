//! Plot-script emission. The script embeds the data, so it renders with
//! matplotlib and nothing else.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::model::PathLabel;
use crate::runner::{RunManifest, FIDELITY_HEADER};

const HISTOGRAM_HEADER: &str = "bin_lo,bin_hi,count,density,gaussian";
const PAIR_SEP_HEADER: &str = "delta_p,variance,stderr";
const PAIR_TIME_HEADER: &str = "t,variance,stderr,decorrelated_fraction";
const BRANCH_HEADER: &str = "t,log10_branches";

/// Decorations of a fidelity plot.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlotStyle {
    pub title: Option<String>,
    /// Dashed horizontal line at the ergodic floor.
    pub floor: Option<f64>,
    /// Slope `-λ` guide line on the log axis.
    pub lambda_guide: Option<f64>,
}

impl PlotStyle {
    /// Floor from `n`; a `-λ` guide when the Lyapunov path is requested.
    pub fn for_config(cfg: &ExperimentConfig) -> Self {
        PlotStyle {
            title: Some(format!("{}: k = {}, eps = {}, n = {}", cfg.preset, cfg.k, cfg.epsilon, cfg.n)),
            floor: (cfg.n > 0).then(|| 1.0 / cfg.n as f64),
            lambda_guide: if cfg.paths.contains(&PathLabel::Lyap) { cfg.lambda } else { None },
        }
    }

    /// Style of the run that wrote `manifest_path`.
    pub fn from_manifest(manifest_path: &Path) -> Result<Self> {
        let m: RunManifest = serde_json::from_str(&fs::read_to_string(manifest_path)?)?;
        let mut style = Self::for_config(&m.config);
        style.lambda_guide = style.lambda_guide.map(|_| m.derived.lambda);
        Ok(style)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CsvKind {
    Fidelity,
    Histogram,
    PairSep,
    PairTime,
    Branch,
}

fn classify(header: &str) -> Option<CsvKind> {
    match header.trim() {
        FIDELITY_HEADER => Some(CsvKind::Fidelity),
        HISTOGRAM_HEADER => Some(CsvKind::Histogram),
        PAIR_SEP_HEADER => Some(CsvKind::PairSep),
        PAIR_TIME_HEADER => Some(CsvKind::PairTime),
        BRANCH_HEADER => Some(CsvKind::Branch),
        _ => None,
    }
}

/// Columns as Python list literals; empty fields become `nan`.
fn columns(header: &str, rows: &[&str]) -> Result<Vec<(String, Vec<String>)>> {
    let names: Vec<&str> = header.trim().split(',').collect();
    let mut cols: Vec<(String, Vec<String>)> = names.iter().map(|n| (n.to_string(), Vec::new())).collect();
    for (i, row) in rows.iter().enumerate() {
        let fields: Vec<&str> = row.trim().split(',').collect();
        if fields.len() != names.len() {
            return Err(Error::Csv(format!(
                "row {} has {} fields, header has {}",
                i + 2,
                fields.len(),
                names.len()
            )));
        }
        for (col, f) in cols.iter_mut().zip(fields) {
            let f = f.trim();
            if f.is_empty() {
                col.1.push("nan".into());
            } else {
                f.parse::<f64>()
                    .map_err(|_| Error::Csv(format!("row {}: `{f}` is not a number", i + 2)))?;
                col.1.push(f.into());
            }
        }
    }
    Ok(cols)
}

fn py_list(values: &[String]) -> String {
    format!("[{}]", values.join(", "))
}

/// Writes `<csv stem>.py` next to the CSV and returns its path.
pub fn emit_plot(csv_path: &Path, style: &PlotStyle) -> Result<PathBuf> {
    let text = fs::read_to_string(csv_path)?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::Csv("file is empty".into()))?;
    let kind = classify(header).ok_or_else(|| Error::Csv(format!("unrecognized header `{header}`")))?;
    let rows: Vec<&str> = lines.collect();
    if rows.is_empty() {
        return Err(Error::Csv("no data rows".into()));
    }
    let cols = columns(header, &rows)?;
    let stem = csv_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "plot".into());
    let script_path = csv_path.with_extension("py");

    let mut s = String::new();
    s.push_str("import math\nimport matplotlib\nmatplotlib.use(\"Agg\")\nimport matplotlib.pyplot as plt\n\n");
    s.push_str("nan = float(\"nan\")\n");
    for (name, values) in &cols {
        s.push_str(&format!("{} = {}\n", name, py_list(values)));
    }
    s.push_str("\nfig, ax = plt.subplots(figsize=(6, 4.5))\n");
    match kind {
        CsvKind::Fidelity => {
            let plotted: Vec<&str> = cols
                .iter()
                .skip(1)
                .filter(|(name, v)| name.starts_with("M_") && v.iter().any(|x| x != "nan"))
                .map(|(name, _)| name.as_str())
                .collect();
            for name in &plotted {
                s.push_str(&format!("ax.semilogy(t, {name}, label=\"{name}\")\n"));
            }
            if let Some(floor) = style.floor {
                // Analytic laws can underflow far below anything measurable.
                s.push_str(&format!(
                    "ax.axhline({floor:e}, color=\"gray\", linestyle=\"--\", label=\"ergodic\")\n\
                     ax.set_ylim(bottom={:e}, top=2.0)\n",
                    floor * 1e-2
                ));
            }
            if let Some(lambda) = style.lambda_guide {
                // Anchored where the first curve crosses 0.1.
                let anchor = plotted.first().copied().unwrap_or("M_exact");
                s.push_str(&format!(
                    "lam = {lambda:e}\n\
                     t0 = next((x for x, y in zip(t, {anchor}) if y < 0.1), t[len(t) // 4])\n\
                     y0 = 0.1\n\
                     guide_t = [x for x in t if x >= t0]\n\
                     ax.semilogy(guide_t, [y0 * math.exp(-lam * (x - t0)) for x in guide_t], \"k:\", label=\"slope -lambda\")\n"
                ));
            }
            s.push_str("ax.set_xlabel(\"t\")\nax.set_ylabel(\"M(t)\")\n");
        }
        CsvKind::Histogram => {
            s.push_str(
                "centres = [(a + b) / 2 for a, b in zip(bin_lo, bin_hi)]\n\
                 widths = [b - a for a, b in zip(bin_lo, bin_hi)]\n\
                 ax.bar(centres, density, width=widths, alpha=0.5, label=\"histogram\")\n\
                 ax.plot(centres, gaussian, \"r-\", label=\"Gaussian fit\")\n\
                 ax.set_xlabel(\"dS\")\nax.set_ylabel(\"density\")\n",
            );
        }
        CsvKind::PairSep => {
            s.push_str(
                "ax.loglog(delta_p[1:], variance[1:], \"o-\", label=\"pair variance\")\n\
                 ax.set_xlabel(\"p'' - p'\")\nax.set_ylabel(\"<[dS(p'') - dS(p')]^2>\")\n",
            );
        }
        CsvKind::PairTime => {
            s.push_str(
                "ax.semilogy(t[1:], variance[1:], \"o-\", label=\"pair variance\")\n\
                 ax.set_xlabel(\"t\")\nax.set_ylabel(\"<[dS(p'') - dS(p')]^2>\")\n",
            );
        }
        CsvKind::Branch => {
            s.push_str(
                "ax.plot(t, log10_branches, label=\"log10 branches\")\n\
                 ax.set_xlabel(\"t\")\nax.set_ylabel(\"log10 N\")\n",
            );
        }
    }
    if let Some(title) = &style.title {
        s.push_str(&format!("ax.set_title({title:?})\n"));
    }
    s.push_str(&format!(
        "ax.legend()\nfig.tight_layout()\nfig.savefig(\"{stem}.png\", dpi=150)\n"
    ));
    fs::write(&script_path, s)?;
    Ok(script_path)
}
