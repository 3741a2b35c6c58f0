//! Accuracy/loss training-curve rendering as a standalone SVG.
//!
//! Output is a pure function of the input rows: coordinates are formatted
//! with fixed precision and nothing (timestamps, ids) varies between runs,
//! so identical histories produce byte-identical files.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};

/// One plotted epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryRow {
    pub epoch: f64,
    pub loss: f64,
    pub accuracy: f64,
}

/// Reads a training-history CSV. The file needs an `epoch` column, a loss
/// column (`train_loss` or `loss`), and an accuracy column (`test_acc`,
/// `accuracy`, or `train_acc`, in that preference order).
pub fn read_history(path: &Path) -> Result<Vec<HistoryRow>> {
    let mut reader = csv::Reader::from_path(path)
        .with_context(|| format!("reading history {}", path.display()))?;
    let headers = reader.headers()?.clone();
    let find = |names: &[&str]| -> Option<usize> {
        names
            .iter()
            .find_map(|n| headers.iter().position(|h| h.trim() == *n))
    };
    let (Some(epoch_at), Some(loss_at), Some(acc_at)) = (
        find(&["epoch"]),
        find(&["train_loss", "loss"]),
        find(&["test_acc", "accuracy", "train_acc"]),
    ) else {
        bail!(
            "malformed history CSV {}: need epoch, loss, and accuracy columns, got {:?}",
            path.display(),
            headers.iter().collect::<Vec<_>>()
        );
    };

    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let cell = |at: usize| -> Result<f64> {
            record
                .get(at)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| {
                    anyhow::anyhow!(
                        "malformed history CSV {}: bad number in row {:?}",
                        path.display(),
                        record
                    )
                })
        };
        rows.push(HistoryRow {
            epoch: cell(epoch_at)?,
            loss: cell(loss_at)?,
            accuracy: cell(acc_at)?,
        });
    }
    if rows.is_empty() {
        bail!("history CSV {} has no data rows", path.display());
    }
    Ok(rows)
}

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 70.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 60.0;

/// Renders the accuracy (left axis, 0..1) and loss (right axis) series
/// against epoch. A single-row history degenerates to plotted points.
pub fn render_chart(rows: &[HistoryRow]) -> String {
    assert!(!rows.is_empty());
    let x0 = rows.iter().map(|r| r.epoch).fold(f64::INFINITY, f64::min);
    let x1 = rows.iter().map(|r| r.epoch).fold(f64::NEG_INFINITY, f64::max);
    let x_span = if x1 > x0 { x1 - x0 } else { 1.0 };
    let loss_top = rows.iter().map(|r| r.loss).fold(0.0f64, f64::max).max(1e-9) * 1.05;

    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let x = |e: f64| MARGIN_L + (e - x0) / x_span * plot_w;
    let y_acc = |a: f64| MARGIN_T + (1.0 - a) * plot_h;
    let y_loss = |l: f64| MARGIN_T + (1.0 - l / loss_top) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
    );
    let _ = writeln!(svg, "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>");

    // Axes.
    let _ = writeln!(
        svg,
        "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"black\"/>",
        MARGIN_L,
        MARGIN_T,
        MARGIN_L,
        HEIGHT - MARGIN_B
    );
    let _ = writeln!(
        svg,
        "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"black\"/>",
        WIDTH - MARGIN_R,
        MARGIN_T,
        WIDTH - MARGIN_R,
        HEIGHT - MARGIN_B
    );
    let _ = writeln!(
        svg,
        "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"black\"/>",
        MARGIN_L,
        HEIGHT - MARGIN_B,
        WIDTH - MARGIN_R,
        HEIGHT - MARGIN_B
    );

    // Left ticks (accuracy 0..1) and right ticks (loss).
    for i in 0..=5 {
        let frac = i as f64 / 5.0;
        let y = MARGIN_T + (1.0 - frac) * plot_h;
        let _ = writeln!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\" text-anchor=\"end\">{:.1}</text>",
            MARGIN_L - 6.0,
            y + 4.0,
            frac
        );
        let _ = writeln!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\" text-anchor=\"start\">{:.2}</text>",
            WIDTH - MARGIN_R + 6.0,
            y + 4.0,
            frac * loss_top
        );
    }
    // A few x ticks.
    for i in 0..=4 {
        let e = x0 + x_span * i as f64 / 4.0;
        let _ = writeln!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\" text-anchor=\"middle\">{:.0}</text>",
            x(e),
            HEIGHT - MARGIN_B + 18.0,
            e
        );
    }

    // Axis labels and legend.
    let _ = writeln!(
        svg,
        "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"14\" text-anchor=\"middle\">epoch</text>",
        MARGIN_L + plot_w / 2.0,
        HEIGHT - 18.0
    );
    let _ = writeln!(
        svg,
        "<text x=\"18\" y=\"{:.2}\" font-size=\"14\" text-anchor=\"middle\" transform=\"rotate(-90 18 {:.2})\">accuracy</text>",
        MARGIN_T + plot_h / 2.0,
        MARGIN_T + plot_h / 2.0
    );
    let _ = writeln!(
        svg,
        "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"14\" text-anchor=\"middle\" transform=\"rotate(90 {:.2} {:.2})\">loss</text>",
        WIDTH - 18.0,
        MARGIN_T + plot_h / 2.0,
        WIDTH - 18.0,
        MARGIN_T + plot_h / 2.0
    );
    let _ = writeln!(
        svg,
        "<rect x=\"{:.2}\" y=\"12\" width=\"12\" height=\"12\" fill=\"#1f77b4\"/><text x=\"{:.2}\" y=\"22\" font-size=\"12\">accuracy</text>",
        MARGIN_L,
        MARGIN_L + 16.0
    );
    let _ = writeln!(
        svg,
        "<rect x=\"{:.2}\" y=\"12\" width=\"12\" height=\"12\" fill=\"#d62728\"/><text x=\"{:.2}\" y=\"22\" font-size=\"12\">loss</text>",
        MARGIN_L + 110.0,
        MARGIN_L + 126.0
    );

    // Series: polylines when there is a line to draw, lone points otherwise.
    if rows.len() > 1 {
        let mut acc_points = String::new();
        let mut loss_points = String::new();
        for r in rows {
            let _ = write!(acc_points, "{:.2},{:.2} ", x(r.epoch), y_acc(r.accuracy));
            let _ = write!(loss_points, "{:.2},{:.2} ", x(r.epoch), y_loss(r.loss));
        }
        let _ = writeln!(
            svg,
            "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\" points=\"{}\"/>",
            acc_points.trim_end()
        );
        let _ = writeln!(
            svg,
            "<polyline fill=\"none\" stroke=\"#d62728\" stroke-width=\"1.5\" points=\"{}\"/>",
            loss_points.trim_end()
        );
    } else {
        let r = rows[0];
        let _ = writeln!(
            svg,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"#1f77b4\"/>",
            x(r.epoch),
            y_acc(r.accuracy)
        );
        let _ = writeln!(
            svg,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"#d62728\"/>",
            x(r.epoch),
            y_loss(r.loss)
        );
    }

    svg.push_str("</svg>\n");
    svg
}
