//! Minimal SVG line plots: test error versus model size on a log-x axis,
//! one series per (setting, objective, λ, knob point), trials averaged.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::sweeps::SweepRow;

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 480.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 210.0;
const MARGIN_T: f64 = 28.0;
const MARGIN_B: f64 = 52.0;

const PALETTE: [&str; 8] =
    ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"];

/// Writes worst-group (solid) and average (dashed) test error against model
/// size. Rows with the same series key and size are averaged over trials.
pub fn write_error_vs_size_svg(rows: &[SweepRow], path: impl AsRef<Path>) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::config("no rows to plot"));
    }
    // series key -> size -> (sum_worst, sum_avg, count)
    let mut series: BTreeMap<String, BTreeMap<usize, (f64, f64, usize)>> = BTreeMap::new();
    for row in rows {
        let mut key = format!("{} {} λ={:.0e}", row.setting, row.objective.name(), row.lambda);
        if row.p_maj.is_finite() {
            let _ = write!(key, " p={:.3}", row.p_maj);
        }
        if row.r_sc.is_finite() {
            let _ = write!(key, " r={:.3}", row.r_sc);
        }
        let entry = series.entry(key).or_default().entry(row.model_size).or_insert((0.0, 0.0, 0));
        entry.0 += row.test.worst_group_error;
        entry.1 += row.test.average_error;
        entry.2 += 1;
    }

    let min_size = rows.iter().map(|r| r.model_size.max(1)).min().unwrap() as f64;
    let max_size = rows.iter().map(|r| r.model_size.max(1)).max().unwrap() as f64;
    let (log_lo, log_hi) = (min_size.log10(), (max_size.log10()).max(min_size.log10() + 1e-9));
    let x_of = |size: usize| -> f64 {
        let l = (size.max(1) as f64).log10();
        MARGIN_L + (l - log_lo) / (log_hi - log_lo) * (WIDTH - MARGIN_L - MARGIN_R)
    };
    let y_of = |err: f64| -> f64 { HEIGHT - MARGIN_B - err.clamp(0.0, 1.0) * (HEIGHT - MARGIN_T - MARGIN_B) };

    let mut svg = String::new();
    let _ = write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    );
    // axes
    let _ = write!(
        svg,
        "<line x1=\"{MARGIN_L}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n\
         <line x1=\"{MARGIN_L}\" y1=\"{MARGIN_T}\" x2=\"{MARGIN_L}\" y2=\"{}\" stroke=\"black\"/>\n",
        HEIGHT - MARGIN_B,
        WIDTH - MARGIN_R,
        HEIGHT - MARGIN_B,
        HEIGHT - MARGIN_B,
    );
    // y ticks every 0.1
    for k in 0..=10 {
        let v = k as f64 / 10.0;
        let y = y_of(v);
        let _ = write!(
            svg,
            "<line x1=\"{}\" y1=\"{y}\" x2=\"{MARGIN_L}\" y2=\"{y}\" stroke=\"black\"/>\n\
             <text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\">{v:.1}</text>\n",
            MARGIN_L - 4.0,
            MARGIN_L - 7.0,
            y + 4.0
        );
    }
    // x ticks at powers of ten
    let mut p = log_lo.floor() as i32;
    while (p as f64) <= log_hi.ceil() {
        let size = 10f64.powi(p);
        if size >= min_size / 1.01 && size <= max_size * 1.01 {
            let x = x_of(size as usize);
            let _ = write!(
                svg,
                "<line x1=\"{x}\" y1=\"{}\" x2=\"{x}\" y2=\"{}\" stroke=\"black\"/>\n\
                 <text x=\"{x}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\">1e{p}</text>\n",
                HEIGHT - MARGIN_B,
                HEIGHT - MARGIN_B + 4.0,
                HEIGHT - MARGIN_B + 18.0
            );
        }
        p += 1;
    }
    let _ = write!(
        svg,
        "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">model size</text>\n\
         <text x=\"16\" y=\"{}\" font-size=\"12\" transform=\"rotate(-90 16 {})\" text-anchor=\"middle\">test error</text>\n",
        (MARGIN_L + WIDTH - MARGIN_R) / 2.0,
        HEIGHT - 10.0,
        (MARGIN_T + HEIGHT - MARGIN_B) / 2.0,
        (MARGIN_T + HEIGHT - MARGIN_B) / 2.0,
    );

    for (si, (key, points)) in series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        let worst: Vec<String> = points
            .iter()
            .map(|(&size, &(w, _, c))| format!("{:.2},{:.2}", x_of(size), y_of(w / c as f64)))
            .collect();
        let avg: Vec<String> = points
            .iter()
            .map(|(&size, &(_, a, c))| format!("{:.2},{:.2}", x_of(size), y_of(a / c as f64)))
            .collect();
        let _ = write!(
            svg,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.8\" points=\"{}\"/>\n\
             <polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.2\" stroke-dasharray=\"5,4\" points=\"{}\"/>\n",
            worst.join(" "),
            avg.join(" ")
        );
        let ly = MARGIN_T + 16.0 * si as f64 + 8.0;
        let _ = write!(
            svg,
            "<line x1=\"{}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"2\"/>\n\
             <text x=\"{}\" y=\"{}\" font-size=\"10\">{}</text>\n",
            WIDTH - MARGIN_R + 10.0,
            WIDTH - MARGIN_R + 34.0,
            WIDTH - MARGIN_R + 40.0,
            ly + 3.5,
            xml_escape(key)
        );
    }
    let _ = write!(
        svg,
        "<text x=\"{}\" y=\"{}\" font-size=\"10\" fill=\"#444\">solid: worst-group — dashed: average</text>\n</svg>\n",
        WIDTH - MARGIN_R + 10.0,
        HEIGHT - MARGIN_B
    );
    std::fs::write(path.as_ref(), svg)?;
    Ok(())
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::GroupMetrics;
    use crate::optimize::Objective;

    #[test]
    fn writes_wellformed_svg() {
        let metrics = GroupMetrics {
            per_group_error: [0.1, 0.3, 0.1, 0.25],
            average_error: 0.15,
            worst_group_error: 0.3,
            worst_group_id: 1,
        };
        let rows: Vec<SweepRow> = [1usize, 10, 100]
            .iter()
            .map(|&m| SweepRow {
                setting: "implicit".into(),
                objective: Objective::Reweight,
                lambda: 1e-9,
                model_size: m,
                p_maj: 0.9,
                r_sc: 100.0,
                trial: 0,
                n_train: 100,
                converged: true,
                grad_norm: 1e-9,
                train: metrics,
                test: metrics,
                wall_time_s: 0.1,
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("plot.svg");
        write_error_vs_size_svg(&rows, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("<svg"));
        assert!(text.contains("polyline"));
        assert!(text.trim_end().ends_with("</svg>"));
    }
}
