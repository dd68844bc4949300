//! Minimal SVG line plots of one state against time.

use std::fmt::Write;

use crate::trace::Traces;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;

fn colour(source: &str) -> &'static str {
    match source {
        "truth" => "#000000",
        "ekf" => "#1f77b4",
        "gmekf" => "#d62728",
        "ukf" => "#2ca02c",
        _ => "#7f7f7f",
    }
}

fn label(state: &str) -> String {
    match state.split_once('_') {
        Some(("omega", g)) => format!("rotor speed of generator {g} (rad/s)"),
        Some(("delta", g)) => format!("rotor angle of generator {g} (rad)"),
        _ => state.to_string(),
    }
}

/// Tick positions covering `[lo, hi]` with a 1-2-5 step.
pub fn ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let span = (hi - lo).max(f64::EPSILON * hi.abs().max(1.0));
    let raw = span / target.max(1) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw * (1.0 - 1e-9))
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

/// Truth and every estimate of `state` against time; `None` if the
/// traces do not contain it.
pub fn state_plot(traces: &Traces, state: &str) -> Option<String> {
    let time = traces.column("time")?;
    let sources = traces.sources(state);
    if sources.is_empty() || time.is_empty() {
        return None;
    }
    let series: Vec<(String, Vec<f64>)> = sources
        .into_iter()
        .map(|s| {
            let col = traces.column(&format!("{s}_{state}")).unwrap_or_default();
            (s, col)
        })
        .collect();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in series.iter().flat_map(|(_, c)| c.iter()).filter(|v| v.is_finite()) {
        lo = lo.min(*v);
        hi = hi.max(*v);
    }
    if !(lo < hi) {
        let pad = lo.abs().max(1.0) * 1e-3;
        lo -= pad;
        hi += pad;
    }
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);
    let (t0, t1) = (time[0], *time.last().unwrap());
    let t1 = if t1 > t0 { t1 } else { t0 + 1.0 };
    let px = |t: f64| LEFT + (t - t0) / (t1 - t0) * (WIDTH - LEFT - RIGHT);
    let py = |v: f64| TOP + (hi - v) / (hi - lo) * (HEIGHT - TOP - BOTTOM);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let (x0, x1, y0, y1) = (LEFT, WIDTH - RIGHT, TOP, HEIGHT - BOTTOM);
    let _ = writeln!(
        svg,
        r##"<rect x="{x0}" y="{y0}" width="{}" height="{}" fill="none" stroke="#444"/>"##,
        x1 - x0,
        y1 - y0
    );
    for t in ticks(t0, t1, 8) {
        let x = px(t);
        let _ = writeln!(
            svg,
            "<line x1=\"{x:.1}\" y1=\"{y1}\" x2=\"{x:.1}\" y2=\"{y0}\" stroke=\"#ddd\"/><text x=\"{x:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>",
            y1 + 16.0,
            format_tick(t)
        );
    }
    for v in ticks(lo, hi, 6) {
        let y = py(v);
        let _ = writeln!(
            svg,
            "<line x1=\"{x0}\" y1=\"{y:.1}\" x2=\"{x1}\" y2=\"{y:.1}\" stroke=\"#ddd\"/><text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>",
            x0 - 6.0,
            y + 4.0,
            format_tick(v)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">time (s)</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="18" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        label(state)
    );
    for (k, (source, values)) in series.iter().enumerate() {
        let mut points = String::new();
        for (t, v) in time.iter().zip(values) {
            if v.is_finite() {
                let _ = write!(points, "{:.2},{:.2} ", px(*t), py(*v).clamp(y0, y1));
            }
        }
        let dash = if source == "truth" { "" } else { r#" stroke-dasharray="6 3""# };
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{}" stroke-width="1.5"{dash} points="{}"/>"#,
            colour(source),
            points.trim_end()
        );
        let ly = y0 + 16.0 + 16.0 * k as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{source}</text>"#,
            x1 - 90.0,
            x1 - 65.0,
            colour(source),
            x1 - 60.0,
            ly + 4.0
        );
    }
    svg.push_str("</svg>\n");
    Some(svg)
}

fn format_tick(v: f64) -> String {
    let s = format!("{v:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_use_round_steps() {
        assert_eq!(ticks(0.0, 10.0, 5), vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0]);
        let t = ticks(376.9, 377.3, 4);
        assert!(t.len() >= 3);
        assert!(t.windows(2).all(|w| ((w[1] - w[0]) - 0.1).abs() < 1e-9));
    }

    #[test]
    fn plots_every_source() {
        let traces = Traces {
            header: ["time", "truth_omega_1", "ekf_omega_1", "gmekf_omega_1"]
                .map(String::from)
                .to_vec(),
            rows: vec![vec![0.0, 1.0, 1.1, 0.9], vec![0.5, 2.0, 2.1, 1.9]],
        };
        let svg = state_plot(&traces, "omega_1").unwrap();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 3);
        assert!(state_plot(&traces, "delta_1").is_none());
    }
}
