//! Rendering of experiment reports: CSV tables and self-contained SVG line
//! charts (one metric per chart, n on the x axis, one series per N).
//! Numeric output is printed with 6 significant digits.

use std::fmt::Write as _;

use crate::simulate::SimReport;

/// Formats a number with 6 significant digits, plain decimal inside
/// [1e-4, 1e6) and scientific notation outside.
pub fn sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let exp10 = x.abs().log10().floor() as i32;
    if (-4..=5).contains(&exp10) {
        let decimals = (5 - exp10).max(0) as usize;
        let mut s = format!("{x:.decimals$}");
        if s.contains('.') {
            while s.ends_with('0') {
                s.pop();
            }
            if s.ends_with('.') {
                s.pop();
            }
        }
        s
    } else {
        format!("{x:.5e}")
    }
}

/// CSV rendering: one row per grid cell with the schema
/// `N,n,mse,coverage,mean_ci_length,drop_rate`. Absent metrics are left
/// empty.
pub fn report_to_csv(report: &SimReport) -> String {
    let mut out = String::from("N,n,mse,coverage,mean_ci_length,drop_rate\n");
    for cell in &report.cells {
        let opt = |v: Option<f64>| v.map(sig6).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            cell.n_individuals,
            cell.n_obs,
            opt(cell.mse),
            opt(cell.coverage),
            opt(cell.mean_ci_length),
            sig6(cell.drop_rate),
        );
    }
    out
}

/// A metric column of the report.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Mse,
    Coverage,
    MeanCiLength,
}

impl Metric {
    pub fn name(&self) -> &'static str {
        match self {
            Metric::Mse => "mse",
            Metric::Coverage => "coverage",
            Metric::MeanCiLength => "mean_ci_length",
        }
    }

    fn of(&self, cell: &crate::simulate::CellReport) -> Option<f64> {
        match self {
            Metric::Mse => cell.mse,
            Metric::Coverage => cell.coverage,
            Metric::MeanCiLength => cell.mean_ci_length,
        }
    }

    pub const ALL: [Metric; 3] = [Metric::Mse, Metric::Coverage, Metric::MeanCiLength];
}

const SERIES_COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

/// Renders one metric as an SVG line chart, or `None` when the metric is
/// absent from every cell.
pub fn svg_line_chart(report: &SimReport, metric: Metric) -> Option<String> {
    // Collect series: one per N, points ordered by n.
    let mut series_keys: Vec<usize> = report.cells.iter().map(|c| c.n_individuals).collect();
    series_keys.sort_unstable();
    series_keys.dedup();

    let mut series: Vec<(usize, Vec<(f64, f64)>)> = Vec::new();
    for &n_ind in &series_keys {
        let mut pts: Vec<(f64, f64)> = report
            .cells
            .iter()
            .filter(|c| c.n_individuals == n_ind)
            .filter_map(|c| metric.of(c).map(|v| (c.n_obs as f64, v)))
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        if !pts.is_empty() {
            series.push((n_ind, pts));
        }
    }
    if series.is_empty() {
        return None;
    }

    let (width, height) = (640.0, 420.0);
    let (ml, mr, mt, mb) = (62.0, 120.0, 34.0, 46.0);
    let plot_w = width - ml - mr;
    let plot_h = height - mt - mb;

    let xs: Vec<f64> = series.iter().flat_map(|(_, p)| p.iter().map(|q| q.0)).collect();
    let ys: Vec<f64> = series.iter().flat_map(|(_, p)| p.iter().map(|q| q.1)).collect();
    let (x_min, x_max) = bounds(&xs);
    let (mut y_min, mut y_max) = bounds(&ys);
    if y_min == y_max {
        y_min -= 0.5;
        y_max += 0.5;
    }
    let pad = 0.05 * (y_max - y_min);
    y_min -= pad;
    y_max += pad;

    let to_x = |v: f64| ml + (v - x_min) / (x_max - x_min).max(1e-12) * plot_w;
    let to_y = |v: f64| mt + (y_max - v) / (y_max - y_min) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(
        svg,
        r#"<rect width="{width}" height="{height}" fill="white"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="20" font-family="sans-serif" font-size="14" text-anchor="middle">{} vs n ({})</text>"#,
        ml + plot_w / 2.0,
        metric.name(),
        report.mode
    );

    // Axes.
    let _ = writeln!(
        svg,
        r#"<line x1="{ml}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        mt + plot_h,
        ml + plot_w,
        mt + plot_h
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{}" stroke="black"/>"#,
        mt + plot_h
    );

    // Ticks: x at each distinct n, y at 5 even stops.
    let mut n_ticks: Vec<f64> = xs.clone();
    n_ticks.sort_by(|a, b| a.total_cmp(b));
    n_ticks.dedup();
    for &t in &n_ticks {
        let x = to_x(t);
        let _ = writeln!(
            svg,
            r#"<line x1="{x}" y1="{}" x2="{x}" y2="{}" stroke="black"/>"#,
            mt + plot_h,
            mt + plot_h + 4.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{x}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#,
            mt + plot_h + 17.0,
            t as usize
        );
    }
    for k in 0..=4 {
        let v = y_min + (y_max - y_min) * k as f64 / 4.0;
        let y = to_y(v);
        let _ = writeln!(
            svg,
            r#"<line x1="{}" y1="{y}" x2="{ml}" y2="{y}" stroke="black"/>"#,
            ml - 4.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">{}</text>"#,
            ml - 7.0,
            y + 4.0,
            sig6((v * 1e6).round() / 1e6)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">n</text>"#,
        ml + plot_w / 2.0,
        height - 10.0
    );

    // Series lines, markers and legend.
    for (s, (n_ind, pts)) in series.iter().enumerate() {
        let color = SERIES_COLORS[s % SERIES_COLORS.len()];
        let path: Vec<String> = pts
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", to_x(x), to_y(y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.8"/>"#,
            path.join(" ")
        );
        for &(x, y) in pts {
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="2.6" fill="{color}"/>"#,
                to_x(x),
                to_y(y)
            );
        }
        let ly = mt + 14.0 + 18.0 * s as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="1.8"/>"#,
            ml + plot_w + 10.0,
            ml + plot_w + 34.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12">N={n_ind}</text>"#,
            ml + plot_w + 40.0,
            ly + 4.0
        );
    }
    svg.push_str("</svg>\n");
    Some(svg)
}

fn bounds(vs: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in vs {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo, hi)
}
