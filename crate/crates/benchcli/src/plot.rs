//! Minimal SVG line charts for risk summaries and selection traces.

use std::fmt::Write;

use wienerchaos::chaosreg::RiskMethod;
use wienerchaos::glselect::{parse_traces_csv, SelectionTrace};

use crate::dataset::{parse_risk_csv, parse_summary_csv};
use crate::experiment::{log_log_slope, summarize, SummaryRow};
use crate::CliError;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 3] = ["#1f77b4", "#d62728", "#2ca02c"];

struct Series {
    label: String,
    color: &'static str,
    dashed: bool,
    points: Vec<(f64, f64)>,
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn fit(series: &[Series]) -> Self {
        let mut x = (f64::INFINITY, f64::NEG_INFINITY);
        let mut y = (f64::INFINITY, f64::NEG_INFINITY);
        for p in series.iter().flat_map(|s| &s.points) {
            x = (x.0.min(p.0), x.1.max(p.0));
            y = (y.0.min(p.1), y.1.max(p.1));
        }
        let pad = |(lo, hi): (f64, f64)| {
            let span = if hi > lo { hi - lo } else { 1.0 };
            (lo - 0.05 * span, hi + 0.05 * span)
        };
        Self { x: pad(x), y: pad(y) }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - 2.0 * MARGIN)
    }
}

fn render(title: &str, x_label: &str, y_label: &str, series: &[Series], note: Option<String>) -> String {
    let frame = Frame::fit(series);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{title}</text>"#,
        WIDTH / 2.0
    );
    let (x0, y0, x1, y1) = (MARGIN, HEIGHT - MARGIN, WIDTH - MARGIN, MARGIN);
    let _ = writeln!(
        s,
        r#"<path d="M{x0} {y1} L{x0} {y0} L{x1} {y0}" fill="none" stroke="black"/>"#
    );
    for i in 0..=4 {
        let fx = frame.x.0 + (frame.x.1 - frame.x.0) * i as f64 / 4.0;
        let fy = frame.y.0 + (frame.y.1 - frame.y.0) * i as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{fx:.2}</text>"#,
            frame.px(fx),
            y0 + 16.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{fy:.2}</text>"#,
            x0 - 6.0,
            frame.py(fy) + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{x_label}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 16.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{y_label}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );
    for (k, ser) in series.iter().enumerate() {
        let pts: Vec<String> = ser
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", frame.px(x), frame.py(y)))
            .collect();
        let dash = if ser.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="2"{dash}/>"#,
            pts.join(" "),
            ser.color
        );
        if !ser.dashed {
            for &(x, y) in &ser.points {
                let _ = writeln!(
                    s,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{}"/>"#,
                    frame.px(x),
                    frame.py(y),
                    ser.color
                );
            }
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{}">{}</text>"#,
            x1 - 150.0,
            y1 + 16.0 * k as f64,
            ser.color,
            ser.label
        );
    }
    if let Some(note) = note {
        let _ = writeln!(s, r#"<text x="{}" y="{}">{note}</text>"#, x0 + 10.0, y1 + 16.0);
    }
    s.push_str("</svg>\n");
    s
}

pub fn risk_chart(rows: &[SummaryRow]) -> Result<String, CliError> {
    let xs: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.mean_risk).collect();
    let mut series = vec![Series {
        label: "mean risk".into(),
        color: COLORS[0],
        dashed: false,
        points: xs.iter().zip(&ys).map(|(x, y)| (x.ln(), y.ln())).collect(),
    }];
    let note = if rows.len() >= 3 {
        let fit = log_log_slope(&xs, &ys)?;
        let ends = [xs[0].ln(), xs[xs.len() - 1].ln()];
        series.push(Series {
            label: "least-squares fit".into(),
            color: COLORS[1],
            dashed: true,
            points: ends.iter().map(|&x| (x, fit.intercept + fit.slope * x)).collect(),
        });
        Some(format!("slope = {:.3} ± {:.3}", fit.slope, fit.stderr))
    } else {
        None
    };
    Ok(render("Risk against sample size", "ln n", "ln mean R", &series, note))
}

pub fn trace_chart(traces: &[SelectionTrace]) -> String {
    let mut series = Vec::new();
    for t in traces {
        let pts = |f: fn(&wienerchaos::glselect::TraceRecord) -> f64| -> Vec<(f64, f64)> {
            t.records.iter().map(|r| (r.h.ln(), f(r))).collect()
        };
        let suffix = if traces.len() > 1 {
            format!(" (l={})", t.order)
        } else {
            String::new()
        };
        series.push(Series {
            label: format!("majorant{suffix}"),
            color: COLORS[0],
            dashed: false,
            points: pts(|r| r.majorant),
        });
        series.push(Series {
            label: format!("bias proxy{suffix}"),
            color: COLORS[1],
            dashed: false,
            points: pts(|r| r.bias_proxy),
        });
        series.push(Series {
            label: format!("objective{suffix}"),
            color: COLORS[2],
            dashed: true,
            points: pts(|r| r.objective),
        });
    }
    let chosen: Vec<String> = traces
        .iter()
        .map(|t| format!("l={}: h={:.4}", t.order, t.chosen_h()))
        .collect();
    render(
        "Bandwidth selection trace",
        "ln h",
        "value",
        &series,
        Some(format!("chosen {}", chosen.join(", "))),
    )
}

/// Picks the chart from the CSV header.
pub fn chart_for_csv(text: &str) -> Result<String, CliError> {
    let header = text.lines().next().unwrap_or("").trim();
    match header.split(',').next() {
        Some("ell") => Ok(trace_chart(&parse_traces_csv(text)?)),
        _ if header.starts_with("n,mean_risk") => risk_chart(&parse_summary_csv(text)?),
        _ if header.starts_with("n,replication") => {
            let rows = parse_risk_csv(text)?;
            let method = if rows.iter().any(|r| r.method == RiskMethod::Isometry) {
                RiskMethod::Isometry
            } else {
                RiskMethod::MonteCarlo
            };
            risk_chart(&summarize(&rows, method))
        }
        _ => Err(CliError::Validation(
            "plot: input must be a risk, risk summary or selection trace CSV".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SUMMARY: &str =
        "n,mean_risk,std_risk,replications\n500,0.4,0.01,2\n1000,0.32,0.01,2\n2000,0.25,0.01,2\n4000,0.2,0.01,2\n";

    #[test]
    fn risk_chart_has_one_data_polyline_and_slope() {
        let svg = chart_for_csv(SUMMARY).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("slope = "));
        assert_eq!(svg, chart_for_csv(SUMMARY).unwrap());
    }

    #[test]
    fn trace_chart_has_three_series() {
        let csv = "ell,h,majorant,bias_proxy,objective,chosen\n1,0.135,1.0,0.0,1.0,1\n1,0.0498,2.0,0.0,2.0,0\n";
        let svg = chart_for_csv(csv).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 3);
    }

    #[test]
    fn malformed_input_is_rejected() {
        assert!(chart_for_csv("a,b\n1,2\n").is_err());
        assert!(chart_for_csv("n,mean_risk,std_risk,replications\n1,x,0,1\n").is_err());
    }
}
