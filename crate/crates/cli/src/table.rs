//! Aligned plain-text tables.

use spd_core::diagnostics::{OverlapReport, ResidualBiasMatrix};
use spd_core::metrics::FairnessReport;

pub fn render(header: &[String], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: &[String]| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, &w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        parts.join("  ").trim_end().to_string()
    };
    let mut out = line(header);
    out.push('\n');
    out.push_str(&widths.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>().join("  "));
    out.push('\n');
    for row in rows {
        out.push_str(&line(row));
        out.push('\n');
    }
    out
}

/// One row per run, one column per metric, in first-seen order.
pub fn fairness(report: &FairnessReport) -> String {
    let mut runs: Vec<&str> = Vec::new();
    let mut metrics: Vec<&str> = Vec::new();
    for e in &report.entries {
        if !runs.contains(&e.config.as_str()) {
            runs.push(&e.config);
        }
        if !metrics.contains(&e.name.as_str()) {
            metrics.push(&e.name);
        }
    }
    let mut header = vec!["method".to_string()];
    header.extend(metrics.iter().map(|m| m.to_string()));
    let rows: Vec<Vec<String>> = runs
        .iter()
        .map(|run| {
            let mut row = vec![run.to_string()];
            for m in &metrics {
                row.push(match report.get(run, m) {
                    Some(e) => match e.std {
                        Some(s) => format!("{:.4} ± {:.4}", e.value, s),
                        None => format!("{:.4}", e.value),
                    },
                    None => "-".into(),
                });
            }
            row
        })
        .collect();
    render(&header, &rows)
}

pub fn residual(m: &ResidualBiasMatrix) -> String {
    let mut header = vec!["attribute".to_string(), "random".to_string()];
    header.extend(m.columns.iter().cloned());
    let rows: Vec<Vec<String>> = m
        .attributes
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let mut row = vec![a.clone(), format!("{:.4}", m.random_baseline[i])];
            row.extend(m.accuracy[i].iter().map(|v| format!("{v:.4}")));
            row
        })
        .collect();
    render(&header, &rows)
}

pub fn overlap(r: &OverlapReport) -> String {
    let header: Vec<String> = ["pair", "overlap"].iter().map(|s| s.to_string()).collect();
    let mut rows: Vec<Vec<String>> = r
        .overlap
        .pairwise
        .iter()
        .map(|&(i, j, n)| vec![format!("{} ∩ {}", r.names[i], r.names[j]), n.to_string()])
        .collect();
    if let Some(n) = r.overlap.joint {
        rows.push(vec![r.names.join(" ∩ "), n.to_string()]);
    }
    rows.push(vec![
        format!("random (m={}, D={})", r.m, r.dim),
        format!("{:.4}", r.expected_random_overlap),
    ]);
    render(&header, &rows)
}
