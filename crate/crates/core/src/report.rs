//! CSV and trace output.

use std::fmt::Write as _;

use crate::scheduler::Message;
use crate::sim::{OutagePoint, PositionPoint, RunReport};

pub const SCHEMA: &str = "netmimo-csv/1";

fn header(lead: &str, served: usize) -> String {
    let mut h = format!("{lead},strategy");
    if lead == "x" {
        h.push_str(",snr_db");
    }
    h.push_str(",pout_joint");
    for k in 1..=served {
        let _ = write!(h, ",pout_user_{k}");
    }
    h.push_str(",halfwidth,trials,warnings");
    h
}

fn point_warnings(p: &OutagePoint) -> String {
    let mut w = Vec::new();
    if p.excluded > 0 {
        w.push(format!("excluded={}", p.excluded));
    }
    if p.unconverged > 0 {
        w.push(format!("unconverged={}", p.unconverged));
    }
    w.join(";")
}

fn row(out: &mut String, prefix: &str, p: &OutagePoint) {
    let _ = write!(out, "{prefix},{:e}", p.joint_outage());
    for k in 0..p.user_events.len() {
        let _ = write!(out, ",{:e}", p.user_outage(k));
    }
    let _ = writeln!(out, ",{:e},{},{}", p.halfwidth(), p.trials, point_warnings(p));
}

fn comments(out: &mut String, kind: &str, warnings: &[String]) {
    let _ = writeln!(out, "# schema={SCHEMA} kind={kind}");
    for w in warnings {
        let _ = writeln!(out, "# warning: {}", w.replace('\n', " "));
    }
}

/// One row per (strategy, SNR point), strategies in scenario order.
pub fn outage_csv(report: &RunReport, served: usize) -> String {
    let mut out = String::new();
    comments(&mut out, "outage", &report.warnings);
    out.push_str(&header("snr_db", served));
    out.push('\n');
    for curve in &report.curves {
        let label = curve.strategy.label();
        for p in &curve.points {
            row(&mut out, &format!("{},{label}", p.snr_db), p);
        }
    }
    out
}

pub fn position_csv(points: &[PositionPoint], served: usize) -> String {
    let mut out = String::new();
    let warnings: Vec<String> = points.iter().flat_map(|p| p.report.warnings.iter().cloned()).collect();
    comments(&mut out, "position", &warnings);
    out.push_str(&header("x", served));
    out.push('\n');
    for pos in points {
        for curve in &pos.report.curves {
            let label = curve.strategy.label();
            for p in &curve.points {
                row(&mut out, &format!("{},{label},{}", pos.x, p.snr_db), p);
            }
        }
    }
    out
}

/// Newline-delimited protocol trace.
pub fn trace_lines(messages: &[Message]) -> String {
    let mut out = String::new();
    for m in messages {
        let _ = writeln!(out, "{m}");
    }
    out
}
