//! Plain-text renderings of analysis results.

use std::fmt::Write;

use super::{BeachPlot, ManifoldEmbedding, PayoffMatrix};

fn quote(label: &str) -> String {
    format!("\"{}\"", label.replace('"', "\"\""))
}

pub fn payoff_csv(m: &PayoffMatrix) -> String {
    let mut out = String::from("row");
    for l in &m.labels {
        out.push(',');
        out.push_str(&quote(l));
    }
    out.push('\n');
    for (l, row) in m.labels.iter().zip(&m.entries) {
        out.push_str(&quote(l));
        for v in row {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

pub fn beach_csv(p: &BeachPlot) -> String {
    let step = 1.0 / (p.resolution - 1) as f64;
    let mut out = String::from("rho_head,rho_tail,head_fraction,samples,empty_pool\n");
    for (h, row) in p.cells.iter().enumerate() {
        for (t, cell) in row.iter().enumerate() {
            let value = cell.value.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{value},{},{}",
                h as f64 * step,
                t as f64 * step,
                cell.samples,
                cell.empty_pool
            );
        }
    }
    out
}

/// ASCII greymap: columns run over the tail contribution, rows over the head
/// contribution from full (top) to none (bottom). Empty cells are black.
pub fn beach_pgm(p: &BeachPlot) -> String {
    let n = p.resolution;
    let mut out = format!("P2\n# head payout fraction, {}\n{n} {n}\n255\n", p.mechanism);
    for row in p.cells.iter().rev() {
        let line: Vec<String> = row
            .iter()
            .map(|c| ((c.value.unwrap_or(0.0).clamp(0.0, 1.0) * 255.0).round() as u8).to_string())
            .collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

pub fn embedding_csv(e: &ManifoldEmbedding) -> String {
    let mut out = String::from("v,w,x,y\n");
    for ((v, w), [x, y]) in e.points.iter().zip(&e.mds.coords) {
        let _ = writeln!(out, "{v},{w},{x},{y}");
    }
    out
}
