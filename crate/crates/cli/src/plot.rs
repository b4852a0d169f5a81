//! Log-log SVG plot of a rate sweep: measured distances, the fitted line and
//! the reference line with the theoretical exponent.

use std::fmt::Write as _;

use fou_core::berry_esseen::RateReport;
use fou_core::stats::ls_fit;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 72.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 32.0;
const BOTTOM: f64 = 56.0;

struct Axis {
    lo: f64,
    hi: f64,
}

impl Axis {
    /// Whole decades covering `[min, max]` of log10 values.
    fn covering(values: impl Iterator<Item = f64>) -> Axis {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.filter(|v| v.is_finite()) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            return Axis { lo: 0.0, hi: 1.0 };
        }
        let (lo, hi) = (lo.floor(), hi.ceil());
        Axis {
            lo,
            hi: if hi > lo { hi } else { lo + 1.0 },
        }
    }

    fn frac(&self, v: f64) -> f64 {
        (v - self.lo) / (self.hi - self.lo)
    }
}

fn px(x: &Axis, v: f64) -> f64 {
    LEFT + x.frac(v) * (WIDTH - LEFT - RIGHT)
}

fn py(y: &Axis, v: f64) -> f64 {
    HEIGHT - BOTTOM - y.frac(v) * (HEIGHT - TOP - BOTTOM)
}

fn f(v: f64) -> String {
    format!("{:.2}", v)
}

pub fn rate_plot(report: &RateReport) -> String {
    let pts: Vec<(f64, f64, bool)> = report
        .points
        .iter()
        .zip(&report.included)
        .filter(|(p, _)| p.d_kol_hat > 0.0)
        .map(|(p, &inc)| ((p.n as f64).log10(), p.d_kol_hat.log10(), inc))
        .collect();
    let (x0, x1) = pts
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));

    // lines in log10 space: y = slope * x + intercept
    let ln10 = std::f64::consts::LN_10;
    let fitted = match (report.fitted_slope, report.fitted_intercept) {
        (Some(s), Some(c)) => Some((s, c / ln10)),
        _ => {
            let (xs, ys): (Vec<f64>, Vec<f64>) = pts.iter().map(|p| (p.0, p.1)).unzip();
            ls_fit(&xs, &ys)
        }
    };
    let anchor = pts.iter().find(|p| p.2).or(pts.first()).map(|p| (p.0, p.1));
    let reference = anchor.map(|(ax, ay)| (report.theoretical_exponent, ay - report.theoretical_exponent * ax));
    let fitted = fitted.or(anchor.map(|(_, ay)| (0.0, ay)));

    let line_ends = |l: Option<(f64, f64)>| l.map(|(s, c)| [s * x0 + c, s * x1 + c]);
    let ys = pts
        .iter()
        .map(|p| p.1)
        .chain(line_ends(fitted).into_iter().flatten())
        .chain(line_ends(reference).into_iter().flatten());
    let xa = Axis::covering(pts.iter().map(|p| p.0));
    let ya = Axis::covering(ys);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        s,
        r#"<defs><clipPath id="plot-area"><rect x="{LEFT}" y="{TOP}" width="{}" height="{}"/></clipPath></defs>"#,
        WIDTH - LEFT - RIGHT,
        HEIGHT - TOP - BOTTOM
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path class="axis" d="M{l} {t} V{b} H{r}" fill="none" stroke="black"/>"#,
        l = LEFT,
        t = TOP,
        b = HEIGHT - BOTTOM,
        r = WIDTH - RIGHT
    );

    let mut ticks = String::new();
    let mut labels = String::new();
    for d in (xa.lo as i32)..=(xa.hi as i32) {
        for m in 1..10 {
            let v = d as f64 + (m as f64).log10();
            if v > xa.hi + 1e-12 {
                break;
            }
            let x = px(&xa, v);
            let len = if m == 1 { 8.0 } else { 4.0 };
            let _ = write!(ticks, "M{} {} v{} ", f(x), f(HEIGHT - BOTTOM), f(len));
        }
        let _ = writeln!(
            labels,
            r#"<text x="{}" y="{}" text-anchor="middle">1e{d}</text>"#,
            f(px(&xa, d as f64)),
            f(HEIGHT - BOTTOM + 22.0)
        );
    }
    for d in (ya.lo as i32)..=(ya.hi as i32) {
        for m in 1..10 {
            let v = d as f64 + (m as f64).log10();
            if v > ya.hi + 1e-12 {
                break;
            }
            let y = py(&ya, v);
            let len = if m == 1 { 8.0 } else { 4.0 };
            let _ = write!(ticks, "M{} {} h{} ", f(LEFT), f(y), f(-len));
        }
        let _ = writeln!(
            labels,
            r#"<text x="{}" y="{}" text-anchor="end">1e{d}</text>"#,
            f(LEFT - 12.0),
            f(py(&ya, d as f64) + 4.0)
        );
    }
    let _ = writeln!(s, r#"<path class="tick" d="{}" stroke="black"/>"#, ticks.trim_end());
    s.push_str(&labels);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">n</text>"#,
        f((LEFT + WIDTH - RIGHT) / 2.0),
        f(HEIGHT - 12.0)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">Kolmogorov distance</text>"#,
        f((TOP + HEIGHT - BOTTOM) / 2.0),
        f((TOP + HEIGHT - BOTTOM) / 2.0)
    );

    let _ = writeln!(s, r#"<g clip-path="url(#plot-area)">"#);
    let mut line = |role: &str, colour: &str, dash: &str, l: Option<(f64, f64)>| {
        if let Some((slope, c)) = l {
            let _ = writeln!(
                s,
                r#"<line class="ref-line" data-role="{role}" data-slope="{slope:?}" x1="{}" y1="{}" x2="{}" y2="{}" stroke="{colour}"{dash}/>"#,
                f(px(&xa, x0)),
                f(py(&ya, slope * x0 + c)),
                f(px(&xa, x1)),
                f(py(&ya, slope * x1 + c)),
            );
        }
    };
    line("fitted", "#1f5fa8", "", fitted);
    line("theoretical", "#b03030", r#" stroke-dasharray="6 4""#, reference);
    let _ = writeln!(s, r#"<g class="points">"#);
    for &(x, y, inc) in &pts {
        let fill = if inc { "#1f5fa8" } else { "none" };
        let _ = writeln!(
            s,
            r##"<circle cx="{}" cy="{}" r="4" fill="{fill}" stroke="#1f5fa8"/>"##,
            f(px(&xa, x)),
            f(py(&ya, y))
        );
    }
    s.push_str("</g>\n</g>\n");
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="end">fitted slope {} / reference slope {}</text>"#,
        f(WIDTH - RIGHT),
        report.fitted_slope.map_or("n/a".to_string(), |v| format!("{v:.3}")),
        report.theoretical_exponent
    );
    s.push_str("</svg>\n");
    s
}
