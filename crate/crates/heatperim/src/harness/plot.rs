//! Static SVG convergence plots: log-x sample curve, in-window shading,
//! and the limit line when a plateau exists.

use crate::ladder::{FunctionalLadder, Verdict};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 56.0;

/// Render a ladder as an SVG 1.1 document.
pub fn emit_plot(ladder: &FunctionalLadder) -> String {
    let xs: Vec<f64> = ladder.samples.iter().map(|s| s.param.log10()).collect();
    let ys: Vec<f64> = ladder.samples.iter().map(|s| s.value).collect();
    let (x_lo, x_hi) = padded_range(&xs);
    let (y_lo, y_hi) = padded_range(&ys);
    let to_x = |p: f64| MARGIN + (p.log10() - x_lo) / (x_hi - x_lo) * (WIDTH - 2.0 * MARGIN);
    let to_y = |v: f64| HEIGHT - MARGIN - (v - y_lo) / (y_hi - y_lo) * (HEIGHT - 2.0 * MARGIN);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str("<rect x=\"0\" y=\"0\" width=\"100%\" height=\"100%\" fill=\"white\"/>\n");

    // Trusted-window shading (params above the window minimum).
    let in_window: Vec<&crate::ladder::LadderSample> =
        ladder.samples.iter().filter(|s| s.in_window).collect();
    if !in_window.is_empty() {
        let left = in_window
            .iter()
            .map(|s| s.param)
            .fold(f64::INFINITY, f64::min);
        let right = in_window
            .iter()
            .map(|s| s.param)
            .fold(f64::NEG_INFINITY, f64::max);
        let x0 = to_x(left);
        let x1 = to_x(right);
        svg.push_str(&format!(
            "<rect x=\"{:.2}\" y=\"{MARGIN}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"#e8f0e8\"/>\n",
            x0.min(x1),
            (x1 - x0).abs(),
            HEIGHT - 2.0 * MARGIN
        ));
    }

    // Axes.
    svg.push_str(&format!(
        "<line x1=\"{MARGIN}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"black\"/>\n",
        HEIGHT - MARGIN,
        WIDTH - MARGIN,
        HEIGHT - MARGIN
    ));
    svg.push_str(&format!(
        "<line x1=\"{MARGIN}\" y1=\"{MARGIN}\" x2=\"{MARGIN}\" y2=\"{:.2}\" stroke=\"black\"/>\n",
        HEIGHT - MARGIN
    ));
    svg.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"13\" text-anchor=\"middle\">log10 param</text>\n",
        WIDTH / 2.0,
        HEIGHT - 16.0
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{:.2}\" font-size=\"13\" transform=\"rotate(-90 16 {:.2})\" text-anchor=\"middle\">{}</text>\n",
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(&ladder.name)
    ));

    // Limit line and annotation.
    if let Some(est) = ladder.limit_est {
        let y = to_y(est);
        svg.push_str(&format!(
            "<line x1=\"{MARGIN}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"#b22222\" stroke-dasharray=\"6 4\"/>\n",
            WIDTH - MARGIN
        ));
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\" fill=\"#b22222\" text-anchor=\"end\">limit {est:.6}</text>\n",
            WIDTH - MARGIN - 4.0,
            y - 6.0
        ));
    }

    // Sample polyline (only when there is more than one point).
    if ladder.samples.len() > 1 {
        let points: Vec<String> = ladder
            .samples
            .iter()
            .map(|s| format!("{:.2},{:.2}", to_x(s.param), to_y(s.value)))
            .collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"#1f4e8c\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            points.join(" ")
        ));
    }
    for s in &ladder.samples {
        let fill = if s.in_window { "#1f4e8c" } else { "#999999" };
        svg.push_str(&format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3.5\" fill=\"{fill}\"/>\n",
            to_x(s.param),
            to_y(s.value)
        ));
    }

    if ladder.verdict == Verdict::NoPlateau {
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"16\" fill=\"#b22222\" text-anchor=\"middle\">no plateau</text>\n",
            WIDTH / 2.0,
            MARGIN + 20.0
        ));
    }

    svg.push_str("</svg>\n");
    svg
}

fn padded_range(values: &[f64]) -> (f64, f64) {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        let pad = 0.06 * (hi - lo);
        (lo - pad, hi + pad)
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
