//! Artifacts: per-step CSV tables, JSON summaries stamped with the config
//! hash and seed, and a line-plot SVG of bound sizes over time.

use std::fmt::Write as _;
use std::io::Write;

use serde::Serialize;

use crate::campaign::TrialRecord;
use crate::config::Method;
use crate::containment::ContainmentStudy;
use crate::env::Environment;
use crate::error::SimResult;
use crate::metrics::MpcMetrics;

fn csv_err(e: csv::Error) -> std::io::Error {
    std::io::Error::other(e)
}

/// One row per trial and step: states, input (empty at the final step),
/// measurement (empty at the first step) and the violation flag.
pub fn write_trials_csv<W: Write>(records: &[TrialRecord], env: &Environment, out: W) -> SimResult<()> {
    let (nx, nu, ny) = (env.nx(), env.nu(), env.ny());
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["trial".to_string(), "t".to_string()];
    header.extend((0..nx).map(|i| format!("x{i}")));
    header.extend((0..nu).map(|i| format!("u{i}")));
    header.extend((0..ny).map(|i| format!("y{i}")));
    header.push("violated".into());
    w.write_record(&header).map_err(csv_err)?;
    for r in records {
        for t in 0..r.states.len() {
            let mut row = vec![r.trial.to_string(), t.to_string()];
            row.extend(r.states[t].iter().map(|v| v.to_string()));
            match r.inputs.get(t) {
                Some(u) => row.extend(u.iter().map(|v| v.to_string())),
                None => row.extend(std::iter::repeat_n(String::new(), nu)),
            }
            match t.checked_sub(1).and_then(|k| r.measurements.get(k)) {
                Some(y) => row.extend(y.iter().map(|v| v.to_string())),
                None => row.extend(std::iter::repeat_n(String::new(), ny)),
            }
            row.push(u8::from(r.violated_at(t)).to_string());
            w.write_record(&row).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `t, quantile, support_<method>…, containment_<method>…`.
pub fn write_containment_csv<W: Write>(study: &ContainmentStudy, out: W) -> SimResult<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string(), "quantile".to_string()];
    header.extend(study.methods.iter().map(|m| format!("support_{}", m.method.label())));
    header.extend(study.methods.iter().map(|m| format!("containment_{}", m.method.label())));
    w.write_record(&header).map_err(csv_err)?;
    for t in 0..study.steps {
        let mut row = vec![t.to_string(), study.quantile[t].to_string()];
        row.extend(study.methods.iter().map(|m| m.support[t].to_string()));
        row.extend(study.methods.iter().map(|m| m.containment.per_step[t].to_string()));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Outcome of one method's closed-loop campaign.
#[derive(Debug, Clone, Serialize)]
pub struct MethodOutcome {
    pub method: Method,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MpcMetrics>,
    /// Diagnostic when the method could not start.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub infeasible: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary<'a, T: Serialize> {
    pub config_hash: &'a str,
    pub seed: u64,
    pub environment: &'a str,
    pub results: T,
}

pub fn to_json<T: Serialize>(summary: &Summary<'_, T>) -> String {
    serde_json::to_string_pretty(summary).expect("summary serializes") + "\n"
}

pub struct Series<'a> {
    pub label: &'a str,
    pub color: &'a str,
    pub values: &'a [f64],
}

/// Plain SVG line chart with axes, ticks and a legend. No timestamps, so
/// identical inputs give identical bytes.
pub fn line_plot_svg(title: &str, x_label: &str, y_label: &str, series: &[Series<'_>]) -> String {
    let (w, h) = (720.0, 440.0);
    let (left, right, top, bottom) = (70.0, 190.0, 40.0, 50.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let n = series.iter().map(|s| s.values.len()).max().unwrap_or(0).max(2);
    let ymax = series
        .iter()
        .flat_map(|s| s.values.iter().copied())
        .filter(|v| v.is_finite())
        .fold(0.0f64, f64::max)
        .max(1e-12)
        * 1.05;
    let ymin = series
        .iter()
        .flat_map(|s| s.values.iter().copied())
        .filter(|v| v.is_finite())
        .fold(0.0f64, f64::min);
    let sx = |i: usize| left + pw * i as f64 / (n - 1) as f64;
    let sy = |v: f64| top + ph * (1.0 - (v - ymin) / (ymax - ymin));

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" font-family="sans-serif" font-size="15" text-anchor="middle">{title}</text>"#, left + pw / 2.0);
    let _ = writeln!(
        s,
        r#"<path d="M{left},{top} V{} H{}" fill="none" stroke="black"/>"#,
        top + ph,
        left + pw
    );
    for k in 0..=5 {
        let v = ymin + (ymax - ymin) * k as f64 / 5.0;
        let y = sy(v);
        let _ = writeln!(s, r##"<line x1="{}" y1="{y:.2}" x2="{left}" y2="{y:.2}" stroke="black"/><text x="{}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="end">{v:.3}</text>"##, left - 5.0, left - 8.0, y + 4.0);
    }
    for k in 0..=5 {
        let i = (n - 1) * k / 5;
        let x = sx(i);
        let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{}" stroke="black"/><text x="{x:.2}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{i}</text>"#, top + ph, top + ph + 5.0, top + ph + 18.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">{x_label}</text>"#, left + pw / 2.0, h - 12.0);
    let _ = writeln!(s, r#"<text x="16" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 16 {})">{y_label}</text>"#, top + ph / 2.0, top + ph / 2.0);
    for (k, ser) in series.iter().enumerate() {
        let pts: Vec<String> = ser
            .values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .map(|(i, &v)| format!("{:.2},{:.2}", sx(i), sy(v)))
            .collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="2"/>"#, pts.join(" "), ser.color);
        let ly = top + 10.0 + 20.0 * k as f64;
        let lx = left + pw + 15.0;
        let _ = writeln!(s, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{}" stroke-width="2"/><text x="{}" y="{}" font-family="sans-serif" font-size="12">{}</text>"#, lx + 25.0, ser.color, lx + 32.0, ly + 4.0, ser.label);
    }
    s.push_str("</svg>\n");
    s
}

/// Bound size along the constraint normal: empirical quantile plus each method.
pub fn bound_size_svg(study: &ContainmentStudy, delta: f64) -> String {
    let colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
    let q_label = format!("empirical {:.0}% quantile", 100.0 * (1.0 - delta));
    let mut series = vec![Series {
        label: &q_label,
        color: "#444444",
        values: &study.quantile,
    }];
    for (k, m) in study.methods.iter().enumerate() {
        series.push(Series {
            label: m.method.label(),
            color: colors[k % colors.len()],
            values: &m.support,
        });
    }
    line_plot_svg("Confidence bound size along the constraint normal", "time step", "bound size", &series)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    #[test]
    fn trial_csv_shape() {
        let env = Environment::msd();
        let rec = TrialRecord {
            trial: 0,
            seed: 1,
            states: vec![DVector::zeros(2); 3],
            inputs: vec![DVector::zeros(1); 2],
            measurements: vec![DVector::zeros(2); 2],
            violations: vec![vec![false]; 3],
            cost: 0.0,
            fallbacks: 0,
            max_kkt: 0.0,
        };
        let mut buf = Vec::new();
        write_trials_csv(&[rec], &env, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "trial,t,x0,x1,u0,y0,y1,violated");
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[1], "0,0,0,0,0,,,0");
        assert_eq!(lines[3], "0,2,0,0,,0,0,0");
    }

    #[test]
    fn svg_is_deterministic_and_closed() {
        let a = [0.0, 1.0, 2.0];
        let b = [0.5, 0.5, 0.5];
        let series = [
            Series { label: "a", color: "red", values: &a },
            Series { label: "b", color: "blue", values: &b },
        ];
        let s1 = line_plot_svg("t", "x", "y", &series);
        let s2 = line_plot_svg("t", "x", "y", &series);
        assert_eq!(s1, s2);
        assert!(s1.starts_with("<svg") && s1.trim_end().ends_with("</svg>"));
        assert_eq!(s1.matches("<polyline").count(), 2);
    }
}
