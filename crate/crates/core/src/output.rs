//! CSV and SVG writers.
//!
//! Floating-point CSV fields carry 17 significant digits so that files
//! round-trip exactly and reruns compare byte for byte.

use std::fmt::Write as _;
use std::io::{self, Write};

use crate::diagnostics::{Histogram, MomentCheckpoint, VerdictReport};
use crate::engine::TrajectoryRecord;
use crate::ensemble::EnsembleSummary;
use crate::model::{Component, MomentConstants, StateTriple};
use crate::threshold::ThresholdReport;

/// Full-precision field.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_trajectory_csv<W: Write>(rec: &TrajectoryRecord, mut w: W) -> io::Result<()> {
    let aux = rec.aux.as_deref();
    writeln!(
        w,
        "{}",
        if aux.is_some() {
            "t,S,I,R,psi"
        } else {
            "t,S,I,R"
        }
    )?;
    for (k, (t, x)) in rec.times.iter().zip(&rec.states).enumerate() {
        write!(w, "{},{},{},{}", num(*t), num(x.s), num(x.i), num(x.r))?;
        if let Some(aux) = aux {
            write!(w, ",{}", num(aux[k]))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn write_histogram_csv<W: Write>(h: &Histogram, mut w: W) -> io::Result<()> {
    writeln!(w, "bin_left,bin_right,count")?;
    for (k, count) in h.counts.iter().enumerate() {
        writeln!(w, "{},{},{}", num(h.edges[k]), num(h.edges[k + 1]), count)?;
    }
    Ok(())
}

pub fn write_verdicts_csv<W: Write>(report: &VerdictReport, mut w: W) -> io::Result<()> {
    writeln!(w, "check,measured,target,tolerance,pass")?;
    for c in &report.checks {
        writeln!(
            w,
            "{},{},{},{},{}",
            c.name,
            num(c.measured),
            num(c.target),
            num(c.tolerance),
            c.outcome
        )?;
    }
    Ok(())
}

pub fn write_summary_csv<W: Write>(s: &EnsembleSummary, mut w: W) -> io::Result<()> {
    writeln!(w, "t,component,mean,q05,q25,q50,q75,q95")?;
    for (k, &t) in s.checkpoints.iter().enumerate() {
        for c in Component::ALL {
            let x = &s.cross[c as usize][k];
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                num(t),
                c.name(),
                num(x.mean),
                num(x.q05),
                num(x.q25),
                num(x.q50),
                num(x.q75),
                num(x.q95)
            )?;
        }
    }
    Ok(())
}

pub fn write_moments_csv<W: Write>(
    moments: &[MomentCheckpoint],
    constants: Option<&MomentConstants>,
    initial: &StateTriple,
    mut w: W,
) -> io::Result<()> {
    writeln!(w, "t,mean,std_error,bound")?;
    for m in moments {
        let bound = constants
            .and_then(|c| c.moment_bound(initial, m.t))
            .unwrap_or(f64::NAN);
        writeln!(
            w,
            "{},{},{},{}",
            num(m.t),
            num(m.mean),
            num(m.std_error),
            num(bound)
        )?;
    }
    Ok(())
}

pub fn write_threshold_csv<W: Write>(r: &ThresholdReport, mut w: W) -> io::Result<()> {
    writeln!(w, "quantity,value")?;
    writeln!(w, "r0,{}", num(r.r0))?;
    writeln!(w, "t0s,{}", num(r.t0s))?;
    writeln!(w, "extinction_exponent,{}", num(r.extinction_exponent))?;
    writeln!(w, "regime,{}", r.regime)?;
    Ok(())
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 50.0;

fn svg_open(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<path d="M{MARGIN},{MARGIN} V{} H{}" stroke="black" fill="none"/>"#,
        HEIGHT - MARGIN,
        WIDTH - MARGIN
    );
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn axis_labels(s: &mut String, x: (f64, f64), y: (f64, f64)) {
    let _ = writeln!(
        s,
        r#"<text x="{MARGIN}" y="{}" font-family="sans-serif" font-size="11">{:.4}</text>"#,
        HEIGHT - MARGIN + 16.0,
        x.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">{:.4}</text>"#,
        WIDTH - MARGIN,
        HEIGHT - MARGIN + 16.0,
        x.1
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">{:.4}</text>"#,
        MARGIN - 4.0,
        HEIGHT - MARGIN,
        y.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">{:.4}</text>"#,
        MARGIN - 4.0,
        MARGIN + 4.0,
        y.1
    );
}

/// Line plot of S, I, R (and ψ when present) against time.
pub fn trajectory_svg(rec: &TrajectoryRecord) -> String {
    let mut s = svg_open("S, I, R against t");
    let t0 = rec.times.first().copied().unwrap_or(0.0);
    let t1 = rec
        .times
        .last()
        .copied()
        .unwrap_or(1.0)
        .max(t0 + f64::EPSILON);
    let mut series: Vec<(&str, &str, Vec<f64>)> = vec![
        ("S", "#1f77b4", rec.states.iter().map(|x| x.s).collect()),
        ("I", "#d62728", rec.states.iter().map(|x| x.i).collect()),
        ("R", "#2ca02c", rec.states.iter().map(|x| x.r).collect()),
    ];
    if let Some(aux) = &rec.aux {
        series.push(("psi", "#7f7f7f", aux.clone()));
    }
    let y_max = series
        .iter()
        .flat_map(|(_, _, v)| v.iter().copied())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let px = |t: f64| MARGIN + (t - t0) / (t1 - t0) * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - y / y_max * (HEIGHT - 2.0 * MARGIN);
    for (k, (name, colour, values)) in series.iter().enumerate() {
        let mut d = String::new();
        for (j, (&t, &y)) in rec.times.iter().zip(values).enumerate() {
            let _ = write!(
                d,
                "{}{:.2},{:.2} ",
                if j == 0 { "M" } else { "L" },
                px(t),
                py(y)
            );
        }
        let _ = writeln!(
            s,
            r#"<path d="{}" stroke="{colour}" stroke-width="1" fill="none"/>"#,
            d.trim_end()
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" fill="{colour}">{name}</text>"#,
            WIDTH - MARGIN + 6.0,
            MARGIN + 16.0 * k as f64
        );
    }
    axis_labels(&mut s, (t0, t1), (0.0, y_max));
    s.push_str("</svg>\n");
    s
}

/// Bar chart of a histogram.
pub fn histogram_svg(h: &Histogram, title: &str) -> String {
    let mut s = svg_open(title);
    let lo = h.edges.first().copied().unwrap_or(0.0);
    let hi = h.edges.last().copied().unwrap_or(1.0);
    let max = h.counts.iter().copied().max().unwrap_or(1).max(1) as f64;
    let bar_w = (WIDTH - 2.0 * MARGIN) / h.counts.len().max(1) as f64;
    for (k, &c) in h.counts.iter().enumerate() {
        let height = c as f64 / max * (HEIGHT - 2.0 * MARGIN);
        let _ = writeln!(
            s,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#4c72b0"/>"##,
            MARGIN + k as f64 * bar_w,
            HEIGHT - MARGIN - height,
            bar_w * 0.95,
            height
        );
    }
    axis_labels(&mut s, (lo, hi), (0.0, max));
    s.push_str("</svg>\n");
    s
}
