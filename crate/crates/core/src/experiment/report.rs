use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use super::{RunManifest, RunStatus, ANALYSIS_DIR, MANIFEST_FILE};
use crate::error::{Error, Result};
use crate::model::ParameterGroup;
use crate::transfer::TransferReport;

/// Human-readable digest of a run directory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    /// `(title, body)` in display order.
    pub sections: Vec<(String, String)>,
    /// Outputs named by the manifest that are not on disk.
    pub missing: Vec<String>,
    pub warnings: Vec<String>,
}

impl Summary {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for w in &self.warnings {
            let _ = writeln!(out, "warning: {w}");
        }
        if !self.missing.is_empty() {
            let _ = writeln!(out, "missing artifacts:");
            for m in &self.missing {
                let _ = writeln!(out, "  {m}");
            }
        }
        for (title, body) in &self.sections {
            let _ = writeln!(out, "\n== {title} ==\n{body}");
        }
        out
    }
}

/// Lays CSV text out as left-aligned columns.
fn align_csv(csv: &str) -> String {
    let rows: Vec<Vec<&str>> = csv.lines().filter(|l| !l.is_empty()).map(|l| l.split(',').collect()).collect();
    let n_cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..n_cols)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in rows {
        let line: Vec<String> = row.iter().enumerate().map(|(c, s)| format!("{s:<w$}", w = widths[c])).collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
    }
    out
}

fn read_optional(path: &Path) -> Result<Option<String>> {
    match std::fs::read_to_string(path) {
        Ok(s) => Ok(Some(s)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(Error::io(path, e)),
    }
}

fn transfer_section(text: &str, path: &Path) -> Result<String> {
    let report: TransferReport = serde_json::from_str(text).map_err(|e| Error::format(path, e.to_string()))?;
    let modes: Vec<ParameterGroup> = [ParameterGroup::E, ParameterGroup::EL, ParameterGroup::ELT]
        .into_iter()
        .filter(|m| report.cells.iter().any(|c| c.mode == *m))
        .collect();
    let mut out = report.to_text_table(&modes);
    let _ = writeln!(out, "* within 0.2 nats of the scratch model");
    for s in &report.summaries {
        let _ = writeln!(
            out,
            "{} / {} ({}): dissimilarity {:.3}, relative complexity {:+.3}",
            s.a, s.b, s.mode, s.dissimilarity, s.relative_complexity
        );
    }
    for a in &report.absent {
        let _ = writeln!(out, "absent: {a}");
    }
    Ok(out)
}

/// Per model, the rank reaching 90% explained variance and the unexplained
/// variance at the largest k.
fn embedding_section(dir: &Path) -> Result<Option<String>> {
    let spectra = read_optional(&dir.join(ANALYSIS_DIR).join("spectra.csv"))?;
    let clusters = read_optional(&dir.join(ANALYSIS_DIR).join("clusters.csv"))?;
    if spectra.is_none() && clusters.is_none() {
        return Ok(None);
    }
    let mut names: Vec<String> = Vec::new();
    let mut out = String::from("model,rank_90pct,largest_k,unexplained\n");
    let spectrum_dir = dir.join(ANALYSIS_DIR).join("spectrum");
    for text in [&spectra, &clusters].into_iter().flatten() {
        for line in text.lines().skip(1) {
            if let Some(n) = line.split(',').next() {
                if !names.iter().any(|x| x == n) {
                    names.push(n.to_string());
                }
            }
        }
    }
    for name in names {
        let rank = read_optional(&spectrum_dir.join(format!("{name}.csv")))?.and_then(|t| {
            t.lines()
                .skip(1)
                .find(|l| l.split(',').nth(2).and_then(|v| v.parse::<f64>().ok()).is_some_and(|v| v >= 0.9))
                .and_then(|l| l.split(',').next().map(str::to_string))
        });
        let last = clusters.as_ref().and_then(|t| {
            t.lines()
                .skip(1)
                .filter(|l| l.starts_with(&format!("{name},")))
                .last()
                .map(|l| l.split(',').skip(1).collect::<Vec<_>>().join(","))
        });
        let _ = writeln!(
            out,
            "{name},{},{}",
            rank.unwrap_or_else(|| "-".into()),
            last.unwrap_or_else(|| "-,-".into())
        );
    }
    Ok(Some(align_csv(&out)))
}

/// Collects the transfer table, cloze and probe tables and embedding
/// statistics of a run. Missing artifacts are listed, not fatal.
pub fn report(run_dir: impl AsRef<Path>) -> Result<Summary> {
    let dir = run_dir.as_ref();
    if !dir.is_dir() {
        return Err(Error::io(dir, std::io::Error::new(std::io::ErrorKind::NotFound, "run directory not found")));
    }
    let mut summary = Summary {
        sections: Vec::new(),
        missing: Vec::new(),
        warnings: Vec::new(),
    };
    match RunManifest::read(dir) {
        Ok(m) => {
            if let RunStatus::Partial { failed_step, error } = &m.status {
                summary.warnings.push(format!("run stopped at step {failed_step}: {error}"));
            }
            summary.missing = m.outputs.keys().filter(|k| !dir.join(k).exists()).cloned().collect();
        }
        Err(Error::Io { .. }) => summary.warnings.push(format!("no {MANIFEST_FILE} in {}", dir.display())),
        Err(e) => summary.warnings.push(format!("unreadable manifest: {e}")),
    }

    let transfer_path = dir.join("transfer.json");
    if let Some(text) = read_optional(&transfer_path)? {
        summary.sections.push(("Transfer (held-out NLL, nats/token)".into(), transfer_section(&text, &transfer_path)?));
    }
    let tables = [
        ("cloze_table.csv", "Cloze (mean log-probability difference, nats)"),
        ("probe_table.csv", "Probes (R2 for frequency, ROC-AUC otherwise)"),
    ];
    for (file, title) in tables {
        if let Some(text) = read_optional(&dir.join(ANALYSIS_DIR).join(file))? {
            summary.sections.push((title.into(), align_csv(&text)));
        }
    }
    if let Some(body) = embedding_section(dir)? {
        summary.sections.push(("Embeddings".into(), body));
    }
    if summary.sections.is_empty() {
        summary.warnings.push("no report artifacts found".into());
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_directory_gives_warnings_only() {
        let d = tempfile::tempdir().unwrap();
        let s = report(d.path()).unwrap();
        assert!(s.sections.is_empty());
        assert_eq!(s.warnings.len(), 2);
        assert!(report(d.path().join("nope")).is_err());
    }

    #[test]
    fn probe_table_keeps_average_last() {
        let d = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(d.path().join(ANALYSIS_DIR)).unwrap();
        std::fs::write(
            d.path().join(ANALYSIS_DIR).join("probe_table.csv"),
            "feature,metric,a\nfrequency,r2,0.5\nstarts_with_space,roc_auc,0.9\naverage,mean,0.7\n",
        )
        .unwrap();
        let s = report(d.path()).unwrap();
        assert_eq!(s.sections.len(), 1);
        assert!(s.sections[0].1.trim_end().lines().last().unwrap().starts_with("average"));
    }

    #[test]
    fn aligns_columns() {
        assert_eq!(align_csv("a,bb\nccc,d\n"), "a    bb\nccc  d\n");
    }
}
