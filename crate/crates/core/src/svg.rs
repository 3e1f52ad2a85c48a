//! Dependency-free SVG charts: effort-ratio histograms and checkpoint line
//! charts. Output is plain text built with deterministic float formatting,
//! so identical inputs produce byte-identical files.

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 72.0;
const MARGIN_RIGHT: f64 = 30.0;
const MARGIN_TOP: f64 = 48.0;
const MARGIN_BOTTOM: f64 = 62.0;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

/// One polyline on a chart, with optional symmetric error bars.
#[derive(Clone, Debug)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    /// Per-point half-heights of error bars; must match `points` in length
    /// when present.
    pub errors: Option<Vec<f64>>,
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Pixel coordinate: two decimals is sub-pixel and keeps files small.
fn px(v: f64) -> String {
    format!("{v:.2}")
}

/// Tick label: shortest representation of the value rounded to 6 decimals.
fn label(v: f64) -> String {
    let r = (v * 1e6).round() / 1e6;
    if r == 0.0 {
        "0".to_string() // avoid "-0"
    } else {
        format!("{r}")
    }
}

struct Canvas {
    body: String,
}

impl Canvas {
    fn new(title: &str) -> Self {
        let mut body = String::with_capacity(16 * 1024);
        body.push_str(&format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
             viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\">\n"
        ));
        body.push_str(&format!(
            "<text x=\"{}\" y=\"26\" font-size=\"16\" text-anchor=\"middle\">{}</text>\n",
            px(WIDTH / 2.0),
            escape(title)
        ));
        Canvas { body }
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, width: f64) {
        self.body.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{stroke}\" stroke-width=\"{width}\"/>\n",
            px(x1), px(y1), px(x2), px(y2)
        ));
    }

    fn text(&mut self, x: f64, y: f64, size: f64, anchor: &str, content: &str) {
        self.body.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"{size}\" text-anchor=\"{anchor}\">{}</text>\n",
            px(x),
            px(y),
            escape(content)
        ));
    }

    fn finish(mut self) -> String {
        self.body.push_str("</svg>\n");
        self.body
    }

    fn axes(&mut self, x_label: &str, y_label: &str) {
        let x0 = MARGIN_LEFT;
        let x1 = WIDTH - MARGIN_RIGHT;
        let y0 = HEIGHT - MARGIN_BOTTOM;
        let y1 = MARGIN_TOP;
        self.line(x0, y0, x1, y0, "#000", 1.0);
        self.line(x0, y0, x0, y1, "#000", 1.0);
        self.text(
            (x0 + x1) / 2.0,
            HEIGHT - 14.0,
            13.0,
            "middle",
            x_label,
        );
        // y label drawn horizontally above the axis to avoid transforms
        self.text(x0, y1 - 10.0, 13.0, "middle", y_label);
    }
}

/// Affine map from data range to pixel range.
#[derive(Clone, Copy)]
struct Scale {
    lo: f64,
    hi: f64,
    px_lo: f64,
    px_hi: f64,
    log: bool,
}

impl Scale {
    fn new(lo: f64, hi: f64, px_lo: f64, px_hi: f64, log: bool) -> Self {
        let (lo, hi) = if log { (lo.ln(), hi.ln()) } else { (lo, hi) };
        // degenerate ranges widen symmetrically so every point is drawable
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
        Scale { lo, hi, px_lo, px_hi, log }
    }

    fn at(&self, v: f64) -> f64 {
        let v = if self.log { v.ln() } else { v };
        self.px_lo + (v - self.lo) / (self.hi - self.lo) * (self.px_hi - self.px_lo)
    }
}

/// Histogram with `bins` equal-width bins over the finite values.
///
/// # Panics
/// If `bins` is zero.
#[must_use]
pub fn histogram_svg(values: &[f64], bins: usize, title: &str, x_label: &str) -> String {
    assert!(bins >= 1, "need at least one bin");
    let mut canvas = Canvas::new(title);
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        canvas.text(WIDTH / 2.0, HEIGHT / 2.0, 14.0, "middle", "no data");
        return canvas.finish();
    }

    let mut lo = finite.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut hi = finite.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        lo -= 0.5;
        hi += 0.5;
    }
    let bin_width = (hi - lo) / bins as f64;
    let mut counts = vec![0u64; bins];
    for v in &finite {
        let idx = (((v - lo) / bin_width) as usize).min(bins - 1);
        counts[idx] += 1;
    }
    let peak = *counts.iter().max().expect("bins is nonzero") as f64;

    canvas.axes(x_label, "count");
    let xs = Scale::new(lo, hi, MARGIN_LEFT, WIDTH - MARGIN_RIGHT, false);
    let ys = Scale::new(0.0, peak, HEIGHT - MARGIN_BOTTOM, MARGIN_TOP, false);

    for (i, &c) in counts.iter().enumerate() {
        let x_left = xs.at(lo + i as f64 * bin_width);
        let x_right = xs.at(lo + (i as f64 + 1.0) * bin_width);
        let y_top = ys.at(c as f64);
        let y_base = ys.at(0.0);
        canvas.body.push_str(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\" stroke=\"#fff\" stroke-width=\"0.5\"/>\n",
            px(x_left),
            px(y_top),
            px((x_right - x_left).max(0.0)),
            px((y_base - y_top).max(0.0)),
            PALETTE[0]
        ));
    }

    // five x ticks, four y ticks
    for i in 0..=4 {
        let v = lo + (hi - lo) * i as f64 / 4.0;
        let x = xs.at(v);
        canvas.line(x, HEIGHT - MARGIN_BOTTOM, x, HEIGHT - MARGIN_BOTTOM + 5.0, "#000", 1.0);
        canvas.text(x, HEIGHT - MARGIN_BOTTOM + 20.0, 11.0, "middle", &label(v));
    }
    for i in 1..=4 {
        let v = peak * i as f64 / 4.0;
        let y = ys.at(v);
        canvas.line(MARGIN_LEFT - 5.0, y, MARGIN_LEFT, y, "#000", 1.0);
        canvas.text(MARGIN_LEFT - 8.0, y + 4.0, 11.0, "end", &label(v));
    }
    canvas.text(
        WIDTH - MARGIN_RIGHT,
        MARGIN_TOP - 8.0,
        11.0,
        "end",
        &format!("n = {}", finite.len()),
    );
    canvas.finish()
}

/// Multi-series line chart. `log_x` plots x on a natural-log scale with
/// power-of-ten ticks; points with non-positive x are dropped in that mode.
#[must_use]
pub fn line_chart_svg(
    series: &[Series],
    title: &str,
    x_label: &str,
    y_label: &str,
    log_x: bool,
) -> String {
    let mut canvas = Canvas::new(title);

    let usable = |p: &(f64, f64)| p.0.is_finite() && p.1.is_finite() && (!log_x || p.0 > 0.0);
    let cleaned: Vec<(usize, Vec<(f64, f64)>, Option<&Vec<f64>>)> = series
        .iter()
        .enumerate()
        .map(|(i, s)| {
            if let Some(e) = &s.errors {
                assert_eq!(e.len(), s.points.len(), "one error bar per point");
            }
            let pts: Vec<(f64, f64)> = s.points.iter().filter(|p| usable(p)).copied().collect();
            (i, pts, s.errors.as_ref())
        })
        .collect();

    let all: Vec<(f64, f64)> = cleaned.iter().flat_map(|(_, p, _)| p.iter().copied()).collect();
    if all.is_empty() {
        canvas.text(WIDTH / 2.0, HEIGHT / 2.0, 14.0, "middle", "no data");
        return canvas.finish();
    }

    let x_lo = all.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let x_hi = all.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let mut y_lo = all.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let mut y_hi = all.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    // leave headroom for error bars
    for (_, pts, errs) in &cleaned {
        if let Some(errs) = errs {
            for (p, e) in pts.iter().zip(errs.iter()) {
                y_lo = y_lo.min(p.1 - e);
                y_hi = y_hi.max(p.1 + e);
            }
        }
    }
    let pad = 0.05 * (y_hi - y_lo).max(1e-12);
    let xs = Scale::new(x_lo, x_hi, MARGIN_LEFT, WIDTH - MARGIN_RIGHT, log_x);
    let ys = Scale::new(y_lo - pad, y_hi + pad, HEIGHT - MARGIN_BOTTOM, MARGIN_TOP, false);

    canvas.axes(x_label, y_label);

    // x ticks: powers of ten on log scale, five linear ticks otherwise
    if log_x {
        let mut decade = 10f64.powf(x_lo.log10().floor());
        while decade <= x_hi * (1.0 + 1e-12) {
            if decade >= x_lo * (1.0 - 1e-12) {
                let x = xs.at(decade);
                canvas.line(x, HEIGHT - MARGIN_BOTTOM, x, HEIGHT - MARGIN_BOTTOM + 5.0, "#000", 1.0);
                canvas.text(x, HEIGHT - MARGIN_BOTTOM + 20.0, 11.0, "middle", &label(decade));
            }
            decade *= 10.0;
        }
    } else {
        for i in 0..=4 {
            let v = x_lo + (x_hi - x_lo) * i as f64 / 4.0;
            let x = xs.at(v);
            canvas.line(x, HEIGHT - MARGIN_BOTTOM, x, HEIGHT - MARGIN_BOTTOM + 5.0, "#000", 1.0);
            canvas.text(x, HEIGHT - MARGIN_BOTTOM + 20.0, 11.0, "middle", &label(v));
        }
    }
    for i in 0..=4 {
        let v = (y_lo - pad) + ((y_hi + pad) - (y_lo - pad)) * i as f64 / 4.0;
        let y = ys.at(v);
        canvas.line(MARGIN_LEFT - 5.0, y, MARGIN_LEFT, y, "#000", 1.0);
        canvas.text(MARGIN_LEFT - 8.0, y + 4.0, 11.0, "end", &label(v));
    }

    for (i, pts, errs) in &cleaned {
        if pts.is_empty() {
            continue;
        }
        let color = PALETTE[i % PALETTE.len()];
        if let Some(errs) = errs {
            for (p, e) in pts.iter().zip(errs.iter()) {
                if *e <= 0.0 {
                    continue;
                }
                let x = xs.at(p.0);
                let (y_a, y_b) = (ys.at(p.1 - e), ys.at(p.1 + e));
                canvas.line(x, y_a, x, y_b, color, 1.0);
                canvas.line(x - 3.0, y_a, x + 3.0, y_a, color, 1.0);
                canvas.line(x - 3.0, y_b, x + 3.0, y_b, color, 1.0);
            }
        }
        let coords: Vec<String> = pts.iter().map(|p| format!("{},{}", px(xs.at(p.0)), px(ys.at(p.1)))).collect();
        canvas.body.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
            coords.join(" ")
        ));
        // legend entry
        let ly = MARGIN_TOP + 16.0 * *i as f64;
        let lx = WIDTH - MARGIN_RIGHT - 150.0;
        canvas.line(lx, ly, lx + 22.0, ly, color, 2.0);
        canvas.text(lx + 28.0, ly + 4.0, 11.0, "start", &series[*i].label);
    }
    canvas.finish()
}
