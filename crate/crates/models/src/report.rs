//! CSV and Markdown renderings of experiment results.

use std::fmt::Write as _;

use propnli_core::datagen::MAX_BIN;

use crate::eval::{CurvePoint, ExperimentReport};

fn acc(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.6}")).unwrap_or_default()
}

fn pct(x: Option<f64>) -> String {
    x.map(|v| format!("{:.1}", 100.0 * v)).unwrap_or_else(|| "-".into())
}

fn region(report: &ExperimentReport, bin: usize) -> &'static str {
    if bin == 0 {
        "trivial"
    } else if report.seen(bin) {
        "seen"
    } else {
        "generalization"
    }
}

/// One row per bin: counts, model accuracy and baseline accuracy.
pub fn per_bin_csv(report: &ExperimentReport) -> String {
    let mut out = String::from("bin,count,correct,accuracy,baseline_accuracy,region\n");
    for s in &report.test.bins {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            s.bin,
            s.count,
            s.correct,
            acc(s.accuracy()),
            acc(report.baseline_test.accuracy(s.bin)),
            region(report, s.bin)
        );
    }
    out
}

/// Bins as rows, one accuracy column per report.
pub fn comparison_csv(reports: &[&ExperimentReport]) -> String {
    let mut out = String::from("bin");
    for r in reports {
        let _ = write!(out, ",{}", column_name(r));
    }
    out.push_str(",baseline\n");
    for bin in 0..=MAX_BIN {
        let _ = write!(out, "{bin}");
        for r in reports {
            let _ = write!(out, ",{}", acc(r.test.accuracy(bin)));
        }
        let base = reports.first().and_then(|r| r.baseline_test.accuracy(bin));
        let _ = writeln!(out, ",{}", acc(base));
    }
    out
}

fn column_name(r: &ExperimentReport) -> String {
    match r.cutoff {
        Some(c) => format!("{}_le{c}", r.model.encoder.kind),
        None => r.model.encoder.kind.to_string(),
    }
}

/// Long-format rows for plotting accuracy against bin with a cutoff marker.
pub fn plot_csv(reports: &[&ExperimentReport]) -> String {
    let mut out = String::from("model,cutoff,bin,accuracy,seen\n");
    for r in reports {
        for s in r.test.bins.iter().filter(|s| s.bin > 0 && s.count > 0) {
            let cutoff = r.cutoff.map(|c| c.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.model.encoder.kind,
                cutoff,
                s.bin,
                acc(s.accuracy()),
                u8::from(r.seen(s.bin))
            );
        }
    }
    out
}

pub fn curve_csv(points: &[CurvePoint]) -> String {
    let mut out = String::from("size,accuracy\n");
    for p in points {
        let _ = writeln!(out, "{},{:.6}", p.size, p.accuracy);
    }
    out
}

/// Human-readable summary. `config_echo` is printed verbatim in a code block.
pub fn markdown_summary(report: &ExperimentReport, config_echo: &str) -> String {
    let mut out = String::new();
    let kind = report.model.encoder.kind;
    match report.cutoff {
        Some(c) => {
            let _ = writeln!(out, "# {kind}, trained on bins 0-{c}\n");
        }
        None => {
            let _ = writeln!(out, "# {kind}\n");
        }
    }
    let _ = writeln!(out, "## Configuration\n\n```\n{}\n```\n", config_echo.trim_end());
    let _ = writeln!(out, "## Summary\n");
    let _ = writeln!(out, "| measure | value |");
    let _ = writeln!(out, "|---|---|");
    let _ = writeln!(out, "| training examples | {} |", report.train_size);
    let _ = writeln!(out, "| train accuracy | {} |", pct(report.train_accuracy()));
    let _ = writeln!(
        out,
        "| baseline train accuracy ({}) | {} |",
        report.baseline_label.label(),
        pct(report.baseline_train_accuracy())
    );
    let _ = writeln!(out, "| test accuracy, bins 1-{MAX_BIN} | {} |", pct(report.test.overall()));
    if let Some(c) = report.cutoff {
        let _ = writeln!(out, "| test accuracy, seen bins 1-{c} | {} |", pct(report.test.pooled(1..=c)));
        if c < MAX_BIN {
            let _ = writeln!(
                out,
                "| test accuracy, bins {}-{MAX_BIN} | {} |",
                c + 1,
                pct(report.test.pooled(c + 1..=MAX_BIN))
            );
        }
    }
    let _ = writeln!(out, "| test accuracy, bin 0 (separate) | {} |", pct(report.test.accuracy(0)));
    let _ = writeln!(out, "| first minibatch loss | {:.4} |", report.history.first_batch_loss);
    if let Some(last) = report.history.epoch_losses.last() {
        let _ = writeln!(out, "| final epoch loss | {last:.4} |");
    }
    let _ = writeln!(out, "| L2 lambda | {} |", report.train_config.lambda);
    if report.degenerate() {
        let _ = writeln!(out, "\n**Degenerate run:** train accuracy does not beat the majority-class baseline.");
    }
    let _ = writeln!(out, "\n## Accuracy by bin\n");
    let _ = writeln!(out, "| bin | n | accuracy | baseline | |");
    let _ = writeln!(out, "|---|---|---|---|---|");
    for s in &report.test.bins {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} |",
            s.bin,
            s.count,
            pct(s.accuracy()),
            pct(report.baseline_test.accuracy(s.bin)),
            region(report, s.bin)
        );
    }
    out
}
