use std::fmt::Write;

use super::{HourlyTable, TimingRow};

const WIDTH: f64 = 720.0;
const PANEL_HEIGHT: f64 = 260.0;
const MARGIN_LEFT: f64 = 64.0;
const MARGIN_RIGHT: f64 = 150.0;
const MARGIN_TOP: f64 = 30.0;
const MARGIN_BOTTOM: f64 = 40.0;
const COLOURS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

/// Axis range rounded outward to a 1-2-5 step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl Axis {
    pub fn covering(values: impl IntoIterator<Item = f64>) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.into_iter().filter(|v| v.is_finite()) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if lo > hi {
            (lo, hi) = (0.0, 1.0);
        }
        if lo == hi {
            let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
            (lo, hi) = (lo - pad, hi + pad);
        }
        let raw = (hi - lo) / 5.0;
        let mag = 10f64.powf(raw.log10().floor());
        let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
        let mut min = (lo / step).floor() * step;
        let mut max = (hi / step).ceil() * step;
        if min > lo {
            min -= step;
        }
        if max < hi {
            max += step;
        }
        Self { min, max, step }
    }

    fn ticks(&self) -> Vec<f64> {
        let n = ((self.max - self.min) / self.step).round() as usize;
        (0..=n).map(|i| self.min + i as f64 * self.step).collect()
    }
}

struct Panel {
    left: f64,
    right: f64,
    top: f64,
    bottom: f64,
    x: Axis,
    y: Axis,
}

impl Panel {
    fn new(top: f64, x: Axis, y: Axis) -> Self {
        Self {
            left: MARGIN_LEFT,
            right: WIDTH - MARGIN_RIGHT,
            top: top + MARGIN_TOP,
            bottom: top + PANEL_HEIGHT - MARGIN_BOTTOM,
            x,
            y,
        }
    }

    fn px(&self, x: f64) -> f64 {
        self.left + (x - self.x.min) / (self.x.max - self.x.min) * (self.right - self.left)
    }

    fn py(&self, y: f64) -> f64 {
        self.bottom - (y - self.y.min) / (self.y.max - self.y.min) * (self.bottom - self.top)
    }

    fn open(&self, out: &mut String, name: &str, title: &str, x_label: &str, y_label: &str) {
        let _ = writeln!(
            out,
            r#"<g class="panel" data-name="{name}" data-x-min="{}" data-x-max="{}" data-y-min="{}" data-y-max="{}" data-left="{}" data-right="{}" data-top="{}" data-bottom="{}">"#,
            self.x.min, self.x.max, self.y.min, self.y.max, self.left, self.right, self.top, self.bottom
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="13" text-anchor="middle">{}</text>"#,
            (self.left + self.right) / 2.0,
            self.top - 10.0,
            escape(title)
        );
        let _ = writeln!(
            out,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#444"/>"##,
            self.left,
            self.top,
            self.right - self.left,
            self.bottom - self.top
        );
        for t in self.y.ticks() {
            let y = self.py(t);
            let _ = writeln!(
                out,
                r##"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" font-size="10" text-anchor="end">{}</text>"##,
                self.left,
                self.right,
                self.left - 4.0,
                y + 3.0,
                tick_label(t)
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="middle">{}</text>"#,
            (self.left + self.right) / 2.0,
            self.bottom + 30.0,
            escape(x_label)
        );
        let _ = writeln!(
            out,
            r#"<text x="14" y="{:.2}" font-size="11" text-anchor="middle" transform="rotate(-90 14 {:.2})">{}</text>"#,
            (self.top + self.bottom) / 2.0,
            (self.top + self.bottom) / 2.0,
            escape(y_label)
        );
    }

    fn x_ticks(&self, out: &mut String) {
        for t in self.x.ticks() {
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}" font-size="10" text-anchor="middle">{}</text>"#,
                self.px(t),
                self.bottom + 14.0,
                tick_label(t)
            );
        }
    }

    /// Polyline through the defined points; gaps break nothing, missing
    /// points are skipped.
    fn line(&self, out: &mut String, series: &str, colour: &str, dash: bool, pts: &[(f64, Option<f64>)]) {
        let coords: Vec<String> = pts
            .iter()
            .filter_map(|&(x, y)| y.map(|y| format!("{:.2},{:.2}", self.px(x), self.py(y))))
            .collect();
        if coords.is_empty() {
            return;
        }
        let dash = if dash { r#" stroke-dasharray="4 3""# } else { "" };
        let _ = writeln!(
            out,
            r#"<polyline data-series="{}" fill="none" stroke="{colour}" stroke-width="1.5"{dash} points="{}"/>"#,
            escape(series),
            coords.join(" ")
        );
    }

    fn legend(&self, out: &mut String, entries: &[(String, &str)]) {
        for (i, (label, colour)) in entries.iter().enumerate() {
            let y = self.top + 12.0 + 16.0 * i as f64;
            let _ = writeln!(
                out,
                r#"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{colour}" stroke-width="2"/><text x="{:.2}" y="{:.2}" font-size="11">{}</text>"#,
                self.right + 10.0,
                self.right + 28.0,
                self.right + 32.0,
                y + 4.0,
                escape(label)
            );
        }
    }
}

fn header(height: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{height}\" viewBox=\"0 0 {WIDTH} {height}\" font-family=\"sans-serif\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    )
}

/// Two panels over hour of day: mean price with a one-SD band, and MAE per
/// model and training window.
pub fn hourly_svg(table: &HourlyTable) -> String {
    let hours = Axis { min: 0.0, max: 23.0, step: 1.0 };
    let first = table.windows().first().copied();
    let price_rows: Vec<_> = table.rows.iter().filter(|r| Some(r.window_days) == first).collect();
    let band = |r: &&super::HourlyRow, sign: f64| match (r.mean_price, r.sd_price) {
        (Some(m), Some(s)) => Some(m + sign * s),
        _ => None,
    };
    let price_axis = Axis::covering(
        price_rows
            .iter()
            .flat_map(|r| [r.mean_price, band(r, -1.0), band(r, 1.0)])
            .flatten(),
    );
    let mae_axis = Axis::covering(table.rows.iter().flat_map(|r| r.mae.iter().flatten().copied()));

    let mut out = header(2.0 * PANEL_HEIGHT);
    let price = Panel::new(0.0, hours, price_axis);
    price.open(&mut out, "price", "Mean price by hour", "hour of day", "EUR/MWh");
    price.x_ticks(&mut out);
    let pts = |f: &dyn Fn(&&super::HourlyRow) -> Option<f64>| -> Vec<(f64, Option<f64>)> {
        price_rows.iter().map(|r| (r.hour as f64, f(r))).collect()
    };
    price.line(&mut out, "mean_price", COLOURS[0], false, &pts(&|r| r.mean_price));
    price.line(&mut out, "mean_minus_sd", COLOURS[0], true, &pts(&|r| band(r, -1.0)));
    price.line(&mut out, "mean_plus_sd", COLOURS[0], true, &pts(&|r| band(r, 1.0)));
    price.legend(&mut out, &[("mean".into(), COLOURS[0]), ("mean ± SD".into(), COLOURS[0])]);
    out.push_str("</g>\n");

    let mae = Panel::new(PANEL_HEIGHT, hours, mae_axis);
    mae.open(&mut out, "mae", "Forecast MAE by hour", "hour of day", "MAE, EUR/MWh");
    mae.x_ticks(&mut out);
    let mut legend = Vec::new();
    let windows = table.windows();
    for (wi, &w) in windows.iter().enumerate() {
        for (mi, m) in table.models.iter().enumerate() {
            let colour = COLOURS[mi % COLOURS.len()];
            let pts: Vec<(f64, Option<f64>)> = table
                .rows
                .iter()
                .filter(|r| r.window_days == w)
                .map(|r| (r.hour as f64, r.mae[mi]))
                .collect();
            let label = format!("{m} {w}d");
            mae.line(&mut out, &label, colour, wi > 0, &pts);
            if pts.iter().any(|(_, v)| v.is_some()) {
                legend.push((label, colour));
            }
        }
    }
    mae.legend(&mut out, &legend);
    out.push_str("</g>\n</svg>\n");
    out
}

/// Bars of mean seconds per fit for each model and training window.
pub fn timing_svg(rows: &[TimingRow]) -> String {
    let values: Vec<f64> = rows.iter().map(TimingRow::mean_fit_seconds).collect();
    let y = Axis::covering(values.iter().copied().chain([0.0]));
    let x = Axis { min: 0.0, max: rows.len().max(1) as f64, step: 1.0 };
    let mut out = header(PANEL_HEIGHT + 40.0);
    let p = Panel::new(0.0, x, y);
    p.open(&mut out, "timing", "Mean training time per fit", "model / training window", "seconds");
    let mut models: Vec<&str> = Vec::new();
    for r in rows {
        if !models.contains(&r.model.as_str()) {
            models.push(&r.model);
        }
    }
    for (i, (r, v)) in rows.iter().zip(&values).enumerate() {
        let colour = COLOURS[models.iter().position(|m| *m == r.model).unwrap_or(0) % COLOURS.len()];
        let (x0, x1) = (p.px(i as f64 + 0.15), p.px(i as f64 + 0.85));
        let (top, base) = (p.py(*v), p.py(0.0));
        let _ = writeln!(
            out,
            r#"<rect class="bar" data-model="{}" data-window="{}" data-value="{}" x="{x0:.2}" y="{top:.2}" width="{:.2}" height="{:.2}" fill="{colour}"/>"#,
            escape(&r.model),
            r.window_days,
            v,
            x1 - x0,
            base - top
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="10" text-anchor="middle">{} {}d</text>"#,
            (x0 + x1) / 2.0,
            p.bottom + 14.0,
            escape(&r.model),
            r.window_days
        );
    }
    out.push_str("</g>\n</svg>\n");
    out
}

fn tick_label(v: f64) -> String {
    let r = (v * 1e6).round() / 1e6;
    if r == 0.0 {
        "0".into()
    } else {
        format!("{r}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}
