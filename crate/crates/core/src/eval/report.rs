//! Plain-text tables for protocol reports.

use std::fmt::Write;

use super::metrics::ConfusionMatrix;
use super::protocol::{Protocol, ProtocolReport};

fn pct(v: f64) -> String {
    format!("{:.2}%", 100.0 * v)
}

fn matrix(out: &mut String, title: &str, cm: &ConfusionMatrix) {
    let _ = writeln!(out, "{title}");
    let _ = writeln!(out, "  {:<16}{:>16}{:>16}", "actual \\ pred", "NotInterested", "Interested");
    let _ = writeln!(out, "  {:<16}{:>16}{:>16}", "NotInterested", cm.tn, cm.fp);
    let _ = writeln!(out, "  {:<16}{:>16}{:>16}", "Interested", cm.fn_, cm.tp);
    if let Ok(a) = cm.accuracy() {
        let _ = writeln!(out, "  accuracy {}", pct(a));
    }
}

pub fn render_text(report: &ProtocolReport) -> String {
    let mut out = String::new();
    let d = &report.dataset;
    let _ = writeln!(
        out,
        "{} / {:?}: {} records, {} subjects, {} Interested, {} NotInterested, crops {}x{}",
        report.protocol.as_str(),
        report.classifier,
        d.records,
        d.subjects,
        d.interested,
        d.not_interested,
        d.crop_size[0],
        d.crop_size[1]
    );
    match report.protocol {
        Protocol::RandomSplit => {
            for r in &report.runs {
                let _ = writeln!(
                    out,
                    "train {} ({} per class), test {} per class, validation {}",
                    r.train_size, r.sizes.train_per_class, r.sizes.test_per_class, r.sizes.validation_total
                );
                matrix(&mut out, "test", &r.test);
                matrix(&mut out, "validation", &r.validation);
                if let Some(cv) = r.cross_validation_accuracy {
                    let _ = writeln!(out, "cross-validation accuracy {}", pct(cv));
                }
            }
        }
        Protocol::SequenceLength | Protocol::ImageSize => {
            let _ = writeln!(out, "{:>7}{:>10}{:>10}{:>12}{:>14}", "frames", "size", "channels", "test", "validation");
            for r in &report.runs {
                let _ = writeln!(
                    out,
                    "{:>7}{:>10}{:>10}{:>12}{:>14}",
                    r.frames,
                    format!("{}x{}", r.image_size[0], r.image_size[1]),
                    r.channels,
                    pct(r.test_accuracy),
                    pct(r.validation_accuracy)
                );
            }
        }
        Protocol::CrossSubject => {
            let _ = writeln!(out, "{:<12}{:>8}{:>12}{:>14}", "subject", "train", "test", "validation");
            for s in &report.subjects {
                let test = s.test_accuracy.map(pct).unwrap_or_else(|| "n/a".into());
                let _ = writeln!(out, "{:<12}{:>8}{:>12}{:>14}", s.subject_id, s.train_size, test, pct(s.validation_accuracy));
            }
            if let Some(cm) = &report.pooled_validation {
                matrix(&mut out, "pooled validation", cm);
            }
        }
    }
    if let Some(s) = &report.test_summary {
        let _ = writeln!(
            out,
            "test accuracy min {} max {} mean {} median {}",
            pct(s.min),
            pct(s.max),
            pct(s.mean),
            pct(s.median)
        );
    }
    out
}
