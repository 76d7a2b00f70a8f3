//! Hand-rolled SVG line charts: fixed viewport, linear axes, legend.
//! Output is plain markup with no scripts or external assets, and the same
//! data always renders to the same bytes.

const WIDTH: f64 = 860.0;
const HEIGHT: f64 = 500.0;
const LEFT: f64 = 78.0;
const RIGHT: f64 = 838.0;
const TOP: f64 = 46.0;
const BOTTOM: f64 = 430.0;

/// Qualitative palette, cycled when a chart has many series.
pub const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

pub struct Series {
    pub label: String,
    pub color: String,
    pub points: Vec<(f64, f64)>,
}

pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

/// Number formatting for tick labels: plain decimals in a friendly range,
/// scientific outside it, trailing zeros trimmed. Deterministic.
fn fmt_num(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    if !(1e-3..1e5).contains(&a) {
        return format!("{v:.2e}");
    }
    let mut s = format!("{v:.3}");
    while s.ends_with('0') {
        s.pop();
    }
    if s.ends_with('.') {
        s.pop();
    }
    s
}

fn bounds(series: &[Series]) -> ((f64, f64), (f64, f64)) {
    let mut xs = (f64::INFINITY, f64::NEG_INFINITY);
    let mut ys = (f64::INFINITY, f64::NEG_INFINITY);
    for s in series {
        for &(x, y) in &s.points {
            xs.0 = xs.0.min(x);
            xs.1 = xs.1.max(x);
            ys.0 = ys.0.min(y);
            ys.1 = ys.1.max(y);
        }
    }
    if !xs.0.is_finite() || !xs.1.is_finite() {
        xs = (0.0, 1.0);
    }
    if !ys.0.is_finite() || !ys.1.is_finite() {
        ys = (0.0, 1.0);
    }
    if xs.0 == xs.1 {
        xs = (xs.0 - 0.5, xs.1 + 0.5);
    }
    if ys.0 == ys.1 {
        let pad = if ys.0 == 0.0 { 0.5 } else { ys.0.abs() * 0.1 };
        ys = (ys.0 - pad, ys.1 + pad);
    } else {
        // breathe a little so curves don't sit on the frame
        let pad = (ys.1 - ys.0) * 0.05;
        ys = (ys.0 - pad, ys.1 + pad);
    }
    (xs, ys)
}

/// Render the chart to a standalone SVG document.
pub fn render(chart: &Chart) -> String {
    use std::fmt::Write;
    let ((x0, x1), (y0, y1)) = bounds(&chart.series);
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * (RIGHT - LEFT);
    let sy = |y: f64| BOTTOM - (y - y0) / (y1 - y0) * (BOTTOM - TOP);

    let mut out = String::new();
    writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\">"
    )
    .unwrap();
    writeln!(out, "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>").unwrap();
    writeln!(
        out,
        "<text x=\"{:.1}\" y=\"24\" text-anchor=\"middle\" font-size=\"17\">{}</text>",
        (LEFT + RIGHT) / 2.0,
        escape(&chart.title)
    )
    .unwrap();

    // gridlines and ticks, five per axis
    for i in 0..=4 {
        let fx = i as f64 / 4.0;
        let xv = x0 + fx * (x1 - x0);
        let yv = y0 + fx * (y1 - y0);
        let px = sx(xv);
        let py = sy(yv);
        writeln!(
            out,
            "<line x1=\"{px:.2}\" y1=\"{TOP}\" x2=\"{px:.2}\" y2=\"{BOTTOM}\" \
             stroke=\"#dddddd\" stroke-width=\"1\"/>"
        )
        .unwrap();
        writeln!(
            out,
            "<line x1=\"{LEFT}\" y1=\"{py:.2}\" x2=\"{RIGHT}\" y2=\"{py:.2}\" \
             stroke=\"#dddddd\" stroke-width=\"1\"/>"
        )
        .unwrap();
        writeln!(
            out,
            "<text x=\"{px:.2}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"12\">{}</text>",
            BOTTOM + 18.0,
            fmt_num(xv)
        )
        .unwrap();
        writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.2}\" text-anchor=\"end\" font-size=\"12\">{}</text>",
            LEFT - 8.0,
            py + 4.0,
            fmt_num(yv)
        )
        .unwrap();
    }

    // frame
    writeln!(
        out,
        "<rect x=\"{LEFT}\" y=\"{TOP}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"none\" \
         stroke=\"#333333\" stroke-width=\"1\"/>",
        RIGHT - LEFT,
        BOTTOM - TOP
    )
    .unwrap();

    // axis labels
    writeln!(
        out,
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"13\">{}</text>",
        (LEFT + RIGHT) / 2.0,
        HEIGHT - 14.0,
        escape(&chart.x_label)
    )
    .unwrap();
    writeln!(
        out,
        "<text x=\"20\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"13\" \
         transform=\"rotate(-90 20 {:.1})\">{}</text>",
        (TOP + BOTTOM) / 2.0,
        (TOP + BOTTOM) / 2.0,
        escape(&chart.y_label)
    )
    .unwrap();

    // data, decimated to keep files small: every stride-th point plus the last
    for s in &chart.series {
        if s.points.is_empty() {
            continue;
        }
        let stride = (s.points.len() / 2500).max(1);
        let mut pts = String::new();
        let mut last_kept = 0;
        for (i, &(x, y)) in s.points.iter().enumerate() {
            if i % stride == 0 {
                write!(pts, "{:.2},{:.2} ", sx(x), sy(y)).unwrap();
                last_kept = i;
            }
        }
        if last_kept + 1 != s.points.len() {
            let &(x, y) = s.points.last().unwrap();
            write!(pts, "{:.2},{:.2} ", sx(x), sy(y)).unwrap();
        }
        writeln!(
            out,
            "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.6\" points=\"{}\"/>",
            s.color,
            pts.trim_end()
        )
        .unwrap();
    }

    // legend, top-right inside the frame
    for (i, s) in chart.series.iter().enumerate() {
        let y = TOP + 16.0 + 18.0 * i as f64;
        writeln!(
            out,
            "<line x1=\"{:.1}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"{}\" \
             stroke-width=\"2.5\"/>",
            RIGHT - 150.0,
            RIGHT - 120.0,
            s.color
        )
        .unwrap();
        writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\">{}</text>",
            RIGHT - 112.0,
            y + 4.0,
            escape(&s.label)
        )
        .unwrap();
    }

    out.push_str("</svg>\n");
    out
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
