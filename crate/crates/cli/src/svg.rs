//! Minimal polyline charts built from figure data.

use std::fmt::Write;

use sharedbook::figures::Figure;
use sharedbook::Regime;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 90.0;
const RIGHT: f64 = 190.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const TICKS: usize = 5;
const COLOURS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

fn dash(regime: Regime) -> &'static str {
    match regime {
        Regime::None => "",
        Regime::One => " stroke-dasharray=\"8 4\"",
        Regime::Both => " stroke-dasharray=\"2 3\"",
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo <= 1e-12 * lo.abs().max(1.0) {
        let pad = 0.5 * lo.abs().max(1e-9);
        return (lo - pad, hi + pad);
    }
    let pad = 0.05 * (hi - lo);
    let lo_padded = if lo >= 0.0 { (lo - pad).max(0.0) } else { lo - pad };
    (lo_padded, hi + pad)
}

fn tick_label(v: f64, span: f64) -> String {
    if span < 1e-3 || v.abs() >= 1e4 {
        format!("{v:.4e}")
    } else {
        let digits = (-(span.log10()).floor() as i32 + 2).clamp(0, 8) as usize;
        format!("{v:.digits$}")
    }
}

/// SVG document for `fig`; a pure function of its series.
pub fn render(fig: &Figure) -> String {
    let points = || fig.series.iter().flat_map(|s| s.points.iter());
    let (x0, x1) = range(points().map(|p| p.0));
    let (y0, y1) = range(points().map(|p| p.1));
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * plot_w;
    let sy = |y: f64| TOP + (y1 - y) / (y1 - y0) * plot_h;

    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">"
    );
    let _ = writeln!(s, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">{}</text>",
        LEFT + plot_w / 2.0,
        escape(&fig.title)
    );
    let _ = writeln!(
        s,
        "<rect x=\"{LEFT}\" y=\"{TOP}\" width=\"{plot_w}\" height=\"{plot_h}\" fill=\"none\" stroke=\"black\"/>"
    );
    for k in 0..TICKS {
        let f = k as f64 / (TICKS - 1) as f64;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let (px, py) = (sx(xv), sy(yv));
        let _ = writeln!(
            s,
            "<line x1=\"{px:.2}\" y1=\"{}\" x2=\"{px:.2}\" y2=\"{}\" stroke=\"black\"/>\
             <text x=\"{px:.2}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
            TOP + plot_h,
            TOP + plot_h + 5.0,
            TOP + plot_h + 18.0,
            tick_label(xv, x1 - x0)
        );
        let _ = writeln!(
            s,
            "<line x1=\"{}\" y1=\"{py:.2}\" x2=\"{LEFT}\" y2=\"{py:.2}\" stroke=\"black\"/>\
             <text x=\"{}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>",
            LEFT - 5.0,
            LEFT - 8.0,
            py + 4.0,
            tick_label(yv, y1 - y0)
        );
    }
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
        LEFT + plot_w / 2.0,
        HEIGHT - 15.0,
        escape(&fig.x_label)
    );
    let _ = writeln!(
        s,
        "<text x=\"18\" y=\"{0}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {0})\">{1}</text>",
        TOP + plot_h / 2.0,
        escape(&fig.y_label)
    );

    let agents: Vec<&str> = {
        let mut v: Vec<&str> = fig.series.iter().map(|s| s.agent.as_str()).collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    for (k, series) in fig.series.iter().enumerate() {
        let colour = COLOURS[agents.iter().position(|a| *a == series.agent).unwrap_or(0) % COLOURS.len()];
        let coords: Vec<String> = series
            .points
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|p| format!("{:.2},{:.2}", sx(p.0), sy(p.1)))
            .collect();
        let _ = writeln!(
            s,
            "<polyline fill=\"none\" stroke=\"{colour}\" stroke-width=\"2\"{} points=\"{}\"/>",
            dash(series.regime),
            coords.join(" ")
        );
        let ly = TOP + 10.0 + 18.0 * k as f64;
        let lx = WIDTH - RIGHT + 15.0;
        let _ = writeln!(
            s,
            "<line x1=\"{lx}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{colour}\" stroke-width=\"2\"{}/>\
             <text x=\"{}\" y=\"{}\">{}</text>",
            lx + 28.0,
            dash(series.regime),
            lx + 34.0,
            ly + 4.0,
            escape(&series.name())
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use sharedbook::figures::Series;
    use sharedbook::ModelParams;

    fn fig(points: Vec<(f64, f64)>) -> Figure {
        Figure {
            id: "t".into(),
            title: "a < b".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            params: ModelParams::baseline(),
            series: vec![Series {
                regime: Regime::One,
                agent: "maker0".into(),
                points,
            }],
            failures: Vec::new(),
        }
    }

    #[test]
    fn renders_one_polyline_per_series() {
        let svg = render(&fig(vec![(0.0, 1.0), (1.0, 2.0), (2.0, f64::NAN)]));
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert!(svg.contains("a &lt; b"));
        assert!(svg.contains("one/maker0"));
        assert!(!svg.contains("NaN"));
    }

    #[test]
    fn flat_and_empty_series_still_render() {
        assert!(render(&fig(vec![(0.0, -1.0), (1.0, -1.0)])).contains("<polyline"));
        assert!(render(&fig(Vec::new())).ends_with("</svg>\n"));
    }
}
