//! Minimal static SVG plots: loss curves and grouped accuracy bars. Output
//! is plain hand-assembled SVG so plots stay dependency-free and
//! deterministic for a given input.

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 55.0;

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

pub struct LineSeries {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

fn svg_header(title: &str) -> String {
    format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">
<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>
<text x="{x}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{title}</text>
"#,
        x = WIDTH / 2.0,
    )
}

fn axis_frame(x_label: &str, y_label: &str) -> String {
    let x0 = MARGIN_L;
    let x1 = WIDTH - MARGIN_R;
    let y0 = HEIGHT - MARGIN_B;
    let y1 = MARGIN_T;
    format!(
        r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>
<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>
<text x="{xm}" y="{yb}" text-anchor="middle" font-family="sans-serif" font-size="12">{x_label}</text>
<text x="16" y="{ym}" text-anchor="middle" font-family="sans-serif" font-size="12" transform="rotate(-90 16 {ym})">{y_label}</text>
"#,
        xm = (x0 + x1) / 2.0,
        yb = HEIGHT - 12.0,
        ym = (y0 + y1) / 2.0,
    )
}

/// Multi-series line chart (e.g. loss curves over epochs).
pub fn line_chart_svg(title: &str, x_label: &str, y_label: &str, series: &[LineSeries]) -> String {
    let all: Vec<(f64, f64)> = series.iter().flat_map(|s| s.points.iter().copied()).collect();
    let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in &all {
        x_min = x_min.min(x);
        x_max = x_max.max(x);
        y_min = y_min.min(y);
        y_max = y_max.max(y);
    }
    if all.is_empty() {
        x_min = 0.0;
        x_max = 1.0;
        y_min = 0.0;
        y_max = 1.0;
    }
    if (x_max - x_min).abs() < 1e-12 {
        x_max = x_min + 1.0;
    }
    if (y_max - y_min).abs() < 1e-12 {
        y_max = y_min + 1.0;
    }
    let sx = |x: f64| MARGIN_L + (x - x_min) / (x_max - x_min) * (WIDTH - MARGIN_L - MARGIN_R);
    let sy = |y: f64| HEIGHT - MARGIN_B - (y - y_min) / (y_max - y_min) * (HEIGHT - MARGIN_T - MARGIN_B);

    let mut out = svg_header(title);
    out.push_str(&axis_frame(x_label, y_label));
    // min/max tick labels
    out.push_str(&format!(
        r#"<text x="{x0}" y="{yb}" text-anchor="middle" font-family="sans-serif" font-size="10">{x_min:.0}</text>
<text x="{x1}" y="{yb}" text-anchor="middle" font-family="sans-serif" font-size="10">{x_max:.0}</text>
<text x="{xt}" y="{ymaxy}" text-anchor="end" font-family="sans-serif" font-size="10">{y_max:.3}</text>
<text x="{xt}" y="{yminy}" text-anchor="end" font-family="sans-serif" font-size="10">{y_min:.3}</text>
"#,
        x0 = MARGIN_L,
        x1 = WIDTH - MARGIN_R,
        yb = HEIGHT - MARGIN_B + 16.0,
        xt = MARGIN_L - 6.0,
        ymaxy = MARGIN_T + 4.0,
        yminy = HEIGHT - MARGIN_B,
    ));
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let points: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        out.push_str(&format!(
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>
"#,
            points.join(" ")
        ));
        let ly = MARGIN_T + 14.0 * i as f64;
        out.push_str(&format!(
            r#"<rect x="{lx}" y="{ry}" width="10" height="3" fill="{color}"/>
<text x="{tx}" y="{ty}" font-family="sans-serif" font-size="11">{}</text>
"#,
            s.name,
            lx = WIDTH - MARGIN_R - 150.0,
            ry = ly - 3.0,
            tx = WIDTH - MARGIN_R - 135.0,
            ty = ly + 2.0,
        ));
    }
    out.push_str("</svg>\n");
    out
}

/// Grouped bar chart: one group per label, one bar per series.
pub fn grouped_bar_chart_svg(
    title: &str,
    y_label: &str,
    group_labels: &[String],
    series: &[(String, Vec<f64>)],
) -> String {
    let y_max = series
        .iter()
        .flat_map(|(_, v)| v.iter().copied())
        .fold(0.0f64, f64::max)
        .max(1e-9);
    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let groups = group_labels.len().max(1);
    let group_w = plot_w / groups as f64;
    let bar_w = group_w * 0.8 / series.len().max(1) as f64;

    let mut out = svg_header(title);
    out.push_str(&axis_frame("", y_label));
    out.push_str(&format!(
        r#"<text x="{xt}" y="{yt}" text-anchor="end" font-family="sans-serif" font-size="10">{y_max:.2}</text>
"#,
        xt = MARGIN_L - 6.0,
        yt = MARGIN_T + 4.0,
    ));
    for (g, label) in group_labels.iter().enumerate() {
        let gx = MARGIN_L + g as f64 * group_w;
        out.push_str(&format!(
            r#"<text x="{cx}" y="{ty}" text-anchor="middle" font-family="sans-serif" font-size="11">{label}</text>
"#,
            cx = gx + group_w / 2.0,
            ty = HEIGHT - MARGIN_B + 16.0,
        ));
        for (s, (_, values)) in series.iter().enumerate() {
            let v = values.get(g).copied().unwrap_or(0.0);
            let h = (v / y_max) * plot_h;
            let x = gx + group_w * 0.1 + s as f64 * bar_w;
            let y = HEIGHT - MARGIN_B - h;
            let color = PALETTE[s % PALETTE.len()];
            out.push_str(&format!(
                r#"<rect x="{x:.2}" y="{y:.2}" width="{bar_w:.2}" height="{h:.2}" fill="{color}"/>
"#,
            ));
        }
    }
    for (s, (name, _)) in series.iter().enumerate() {
        let color = PALETTE[s % PALETTE.len()];
        let ly = MARGIN_T + 14.0 * s as f64;
        out.push_str(&format!(
            r#"<rect x="{lx}" y="{ry}" width="10" height="10" fill="{color}"/>
<text x="{tx}" y="{ty}" font-family="sans-serif" font-size="11">{name}</text>
"#,
            lx = WIDTH - MARGIN_R - 150.0,
            ry = ly - 8.0,
            tx = WIDTH - MARGIN_R - 135.0,
            ty = ly + 2.0,
        ));
    }
    out.push_str("</svg>\n");
    out
}
