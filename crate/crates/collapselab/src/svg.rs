//! Minimal dependency-free SVG charts for sweep grids: line charts over a
//! single axis and heatmaps over two. Output is a plain string, built with
//! fixed-precision formatting so identical inputs produce identical bytes.

use crate::experiments::SweepGrid;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("grid has no cells")]
    EmptyGrid,
    #[error("render error: {0}")]
    BadInput(String),
}

type Result<T> = std::result::Result<T, RenderError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RenderKind {
    Lines,
    Heatmap,
}

#[derive(Debug, Clone, Default)]
pub struct RenderOptions {
    /// Value key to plot; heatmaps need exactly one (defaults to the first
    /// key), line charts plot every key unless one is named.
    pub key: Option<String>,
    pub log_x: bool,
    pub log_y: bool,
    pub title: Option<String>,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 440.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 90.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 50.0;

const PALETTE: [&str; 6] = [
    "#1f6fb2", "#d1495b", "#3a9d23", "#8a4fbe", "#e08f00", "#287d7d",
];

fn fmt(v: f64) -> String {
    format!("{v:.4}")
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-3 {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

/// Five-stop blue-to-red map over [0, 1].
fn heat_color(t: f64) -> String {
    let stops = [
        (0.231, 0.298, 0.753),
        (0.467, 0.664, 0.862),
        (0.866, 0.866, 0.866),
        (0.906, 0.570, 0.442),
        (0.706, 0.016, 0.150),
    ];
    let t = t.clamp(0.0, 1.0) * (stops.len() - 1) as f64;
    let lo = (t.floor() as usize).min(stops.len() - 2);
    let f = t - lo as f64;
    let mix = |a: f64, b: f64| ((a + (b - a) * f) * 255.0).round() as u8;
    format!(
        "#{:02x}{:02x}{:02x}",
        mix(stops[lo].0, stops[lo + 1].0),
        mix(stops[lo].1, stops[lo + 1].1),
        mix(stops[lo].2, stops[lo + 1].2)
    )
}

struct Scale {
    min: f64,
    max: f64,
    log: bool,
}

impl Scale {
    fn new(values: impl Iterator<Item = f64>, log: bool) -> Result<Scale> {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for v in values {
            if !v.is_finite() || (log && v <= 0.0) {
                continue;
            }
            min = min.min(v);
            max = max.max(v);
        }
        if !min.is_finite() {
            return Err(RenderError::BadInput(
                "no finite values to scale (log axes need positive data)".into(),
            ));
        }
        if min == max {
            min -= 0.5;
            max += 0.5;
        }
        Ok(Scale { min, max, log })
    }

    fn unit(&self, v: f64) -> f64 {
        if self.log {
            ((v.ln() - self.min.ln()) / (self.max.ln() - self.min.ln())).clamp(0.0, 1.0)
        } else {
            ((v - self.min) / (self.max - self.min)).clamp(0.0, 1.0)
        }
    }
}

fn header(title: &str) -> String {
    format!(
        concat!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" ",
            "viewBox=\"0 0 {w} {h}\">\n",
            "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n",
            "<text x=\"{tx}\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\" ",
            "text-anchor=\"middle\">{title}</text>\n"
        ),
        w = WIDTH,
        h = HEIGHT,
        tx = WIDTH / 2.0,
        title = title
    )
}

fn axis_labels(x_name: &str, y_name: &str) -> String {
    format!(
        concat!(
            "<text x=\"{xc}\" y=\"{yb}\" font-family=\"sans-serif\" font-size=\"12\" ",
            "text-anchor=\"middle\">{x}</text>\n",
            "<text x=\"16\" y=\"{ym}\" font-family=\"sans-serif\" font-size=\"12\" ",
            "text-anchor=\"middle\" transform=\"rotate(-90 16 {ym})\">{y}</text>\n"
        ),
        xc = MARGIN_L + (WIDTH - MARGIN_L - MARGIN_R) / 2.0,
        yb = HEIGHT - 12.0,
        x = x_name,
        ym = MARGIN_T + (HEIGHT - MARGIN_T - MARGIN_B) / 2.0,
        y = y_name
    )
}

fn frame_with_ticks(xs: &Scale, ys: &Scale) -> String {
    let x0 = MARGIN_L;
    let x1 = WIDTH - MARGIN_R;
    let y0 = HEIGHT - MARGIN_B;
    let y1 = MARGIN_T;
    let mut out = format!(
        "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#333\"/>\n",
        fmt(x0),
        fmt(y1),
        fmt(x1 - x0),
        fmt(y0 - y1)
    );
    for (v, anchor_x) in [(xs.min, x0), (xs.max, x1)] {
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"middle\">{}</text>\n",
            fmt(anchor_x),
            fmt(y0 + 16.0),
            fmt_tick(v)
        ));
    }
    for (v, y) in [(ys.min, y0), (ys.max, y1)] {
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">{}</text>\n",
            fmt(x0 - 6.0),
            fmt(y + 4.0),
            fmt_tick(v)
        ));
    }
    out
}

fn render_lines(grid: &SweepGrid, opts: &RenderOptions) -> Result<String> {
    if grid.axes.len() != 1 {
        return Err(RenderError::BadInput(format!(
            "line chart needs one axis, grid has {}",
            grid.axes.len()
        )));
    }
    let keys: Vec<String> = match &opts.key {
        Some(k) => {
            if !grid.keys.contains(k) {
                return Err(RenderError::BadInput(format!("unknown key {k}")));
            }
            vec![k.clone()]
        }
        None => grid.keys.clone(),
    };
    let axis = &grid.axes[0];
    let xs = Scale::new(axis.values.iter().cloned(), opts.log_x)?;
    let ys = Scale::new(
        keys.iter().flat_map(|k| {
            (0..axis.values.len())
                .map(|i| grid.get(&[i], k))
                .collect::<Vec<_>>()
        }),
        opts.log_y,
    )?;

    let title = opts.title.clone().unwrap_or_else(|| keys.join(", "));
    let mut out = header(&title);
    out.push_str(&frame_with_ticks(&xs, &ys));
    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    for (ki, key) in keys.iter().enumerate() {
        let color = PALETTE[ki % PALETTE.len()];
        let mut pts = Vec::new();
        for (i, &x) in axis.values.iter().enumerate() {
            let y = grid.get(&[i], key);
            if !y.is_finite() || (opts.log_y && y <= 0.0) || (opts.log_x && x <= 0.0) {
                continue;
            }
            let px = MARGIN_L + xs.unit(x) * plot_w;
            let py = HEIGHT - MARGIN_B - ys.unit(y) * plot_h;
            pts.push(format!("{},{}", fmt(px), fmt(py)));
        }
        out.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>\n",
            pts.join(" "),
            color
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"{}\">{}</text>\n",
            fmt(WIDTH - MARGIN_R + 8.0),
            fmt(MARGIN_T + 14.0 * (ki as f64 + 1.0)),
            color,
            key
        ));
    }
    out.push_str(&axis_labels(
        &axis.name,
        if keys.len() == 1 { &keys[0] } else { "value" },
    ));
    out.push_str("</svg>\n");
    Ok(out)
}

fn render_heatmap(grid: &SweepGrid, opts: &RenderOptions) -> Result<String> {
    if grid.axes.len() != 2 {
        return Err(RenderError::BadInput(format!(
            "heatmap needs two axes, grid has {}",
            grid.axes.len()
        )));
    }
    let key = match &opts.key {
        Some(k) => {
            if !grid.keys.contains(k) {
                return Err(RenderError::BadInput(format!("unknown key {k}")));
            }
            k.clone()
        }
        None => grid
            .keys
            .first()
            .ok_or_else(|| RenderError::BadInput("grid has no value keys".into()))?
            .clone(),
    };
    let nx = grid.axes[0].values.len();
    let ny = grid.axes[1].values.len();
    let mut vmin = f64::INFINITY;
    let mut vmax = f64::NEG_INFINITY;
    for i in 0..nx {
        for j in 0..ny {
            let v = grid.get(&[i, j], &key);
            if v.is_finite() {
                vmin = vmin.min(v);
                vmax = vmax.max(v);
            }
        }
    }
    if !vmin.is_finite() {
        return Err(RenderError::BadInput("no finite cell values".into()));
    }
    if vmin == vmax {
        vmax = vmin + 1.0;
    }

    let title = opts.title.clone().unwrap_or_else(|| key.clone());
    let mut out = header(&title);
    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let cw = plot_w / nx as f64;
    let ch = plot_h / ny as f64;
    for i in 0..nx {
        for j in 0..ny {
            let v = grid.get(&[i, j], &key);
            let t = (v - vmin) / (vmax - vmin);
            let x = MARGIN_L + i as f64 * cw;
            // Row 0 of axis 1 sits at the bottom.
            let y = HEIGHT - MARGIN_B - (j as f64 + 1.0) * ch;
            out.push_str(&format!(
                "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\"/>\n",
                fmt(x),
                fmt(y),
                fmt(cw + 0.5),
                fmt(ch + 0.5),
                heat_color(t)
            ));
        }
    }
    // Frame and corner ticks.
    let xs = Scale::new(grid.axes[0].values.iter().cloned(), false)?;
    let ys = Scale::new(grid.axes[1].values.iter().cloned(), false)?;
    out.push_str(&frame_with_ticks(&xs, &ys));
    // Colorbar.
    let bar_x = WIDTH - MARGIN_R + 20.0;
    let steps = 32;
    for s in 0..steps {
        let t = s as f64 / (steps - 1) as f64;
        let y = HEIGHT - MARGIN_B - (s as f64 + 1.0) * plot_h / steps as f64;
        out.push_str(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"14\" height=\"{}\" fill=\"{}\"/>\n",
            fmt(bar_x),
            fmt(y),
            fmt(plot_h / steps as f64 + 0.5),
            heat_color(t)
        ));
    }
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"10\">{}</text>\n",
        fmt(bar_x + 18.0),
        fmt(HEIGHT - MARGIN_B),
        fmt_tick(vmin)
    ));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"10\">{}</text>\n",
        fmt(bar_x + 18.0),
        fmt(MARGIN_T + 10.0),
        fmt_tick(vmax)
    ));
    out.push_str(&axis_labels(&grid.axes[0].name, &grid.axes[1].name));
    out.push_str("</svg>\n");
    Ok(out)
}

/// Render a sweep grid as a self-contained SVG document.
pub fn render_svg(grid: &SweepGrid, kind: RenderKind, opts: &RenderOptions) -> Result<String> {
    if grid.n_cells() == 0 || grid.axes.is_empty() {
        return Err(RenderError::EmptyGrid);
    }
    match kind {
        RenderKind::Lines => render_lines(grid, opts),
        RenderKind::Heatmap => render_heatmap(grid, opts),
    }
}
