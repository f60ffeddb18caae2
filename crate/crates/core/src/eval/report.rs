use std::fmt::Write as _;
use std::io::Write;

use super::{EvalError, PrCurve, RecallCurve};

/// Long format: one `name,threshold,recall` row per curve point.
pub fn write_recall_csv<W: Write>(out: W, curves: &[(String, RecallCurve)]) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["name", "threshold", "recall"])?;
    for (name, c) in curves {
        for (t, r) in c.thresholds.iter().zip(&c.recall) {
            w.write_record([name.as_str(), &format!("{t}"), &format!("{r}")])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_pr_csv<W: Write>(out: W, curves: &[(String, PrCurve)]) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["name", "ratio_threshold", "accepted", "correct", "precision", "recall"])?;
    for (name, c) in curves {
        for p in &c.points {
            w.write_record([
                name.as_str(),
                &format!("{}", p.ratio_threshold),
                &p.accepted.to_string(),
                &p.correct.to_string(),
                &format!("{}", p.precision),
                &format!("{}", p.recall),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub struct PlotSeries {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#7f7f7f"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Line plot with fixed axis ranges. Output depends only on the inputs, so
/// identical data gives byte-identical files.
pub fn svg_line_plot(title: &str, x_label: &str, y_label: &str, x_max: f64, y_max: f64, series: &[PlotSeries]) -> String {
    let (w, h) = (640.0, 420.0);
    let (left, right, top, bottom) = (60.0, 150.0, 40.0, 50.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let x_max = if x_max > 0.0 { x_max } else { 1.0 };
    let y_max = if y_max > 0.0 { y_max } else { 1.0 };
    let sx = |x: f64| left + pw * (x / x_max).clamp(0.0, 1.0);
    let sy = |y: f64| top + ph * (1.0 - (y / y_max).clamp(0.0, 1.0));

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="14">{}</text>"#, left + pw / 2.0, escape(title));
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let (x, y) = (sx(f * x_max), sy(f * y_max));
        let _ = writeln!(s, r##"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="#ddd"/>"##, top, top + ph);
        let _ = writeln!(s, r##"<line x1="{left:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/>"##, left + pw);
        let _ = writeln!(s, r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{:.2}</text>"#, top + ph + 16.0, f * x_max);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{:.2}</text>"#, left - 6.0, y + 4.0, f * y_max);
    }
    let _ = writeln!(s, r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, left + pw / 2.0, h - 12.0, escape(x_label));
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        top + ph / 2.0,
        top + ph / 2.0,
        escape(y_label)
    );
    for (i, ser) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = ser.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, pts.join(" "));
        let ly = top + 14.0 + 18.0 * i as f64;
        let lx = left + pw + 10.0;
        let _ = writeln!(s, r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#, lx + 20.0);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, lx + 26.0, ly + 4.0, escape(&ser.name));
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recall_csv_layout() {
        let c = RecallCurve { thresholds: vec![0.0, 0.5], recall: vec![0.0, 0.25] };
        let mut buf = Vec::new();
        write_recall_csv(&mut buf, &[("p1".to_string(), c)]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "name,threshold,recall\np1,0,0\np1,0.5,0.25\n");
    }

    #[test]
    fn svg_is_deterministic_and_escaped() {
        let ser = vec![PlotSeries { name: "a<b".into(), points: vec![(0.0, 0.0), (10.0, 1.0)] }];
        let a = svg_line_plot("t", "x", "y", 20.0, 1.0, &ser);
        let b = svg_line_plot("t", "x", "y", 20.0, 1.0, &ser);
        assert_eq!(a, b);
        assert!(a.contains("a&lt;b"));
        assert!(a.starts_with("<svg") && a.ends_with("</svg>\n"));
    }
}
