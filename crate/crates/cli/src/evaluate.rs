//! `evaluate`: compare a prediction CSV with ground truth.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use flowfeat::evaluation::{challenge_score, classification_metrics, confusion, join_labels, read_labels};
use serde_json::json;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Multiclass,
    /// Binary detection with the `TPR * (1 - FAR)` score.
    Challenge,
}

fn read(path: &Path, what: &'static str) -> Result<std::collections::BTreeMap<String, String>> {
    let file = std::fs::File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    read_labels(file, what).with_context(|| format!("cannot read {}", path.display()))
}

fn show(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".into(), |x| format!("{x}"))
}

/// Text report and the same numbers as JSON.
pub fn run(truth: &Path, pred: &Path, mode: Mode, positive: Option<&str>) -> Result<(String, serde_json::Value)> {
    let (t, p) = join_labels(&read(truth, "truth")?, &read(pred, "predictions")?)?;
    let cm = confusion(&t, &p)?;
    let m = classification_metrics(&cm);

    let mut text = String::new();
    writeln!(text, "items {}", cm.total())?;
    writeln!(text, "accuracy {}", m.accuracy)?;
    writeln!(
        text,
        "macro precision {} recall {} f1 {}",
        m.macro_precision, m.macro_recall, m.macro_f1
    )?;
    writeln!(
        text,
        "weighted precision {} recall {} f1 {}",
        m.weighted_precision, m.weighted_recall, m.weighted_f1
    )?;
    writeln!(text, "class,precision,recall,f1,support")?;
    let mut classes = Vec::new();
    for c in &m.per_class {
        writeln!(text, "{},{},{},{},{}", c.class, c.precision, c.recall, c.f1, c.support)?;
        classes.push(json!({
            "class": c.class,
            "precision": c.precision,
            "recall": c.recall,
            "f1": c.f1,
            "support": c.support,
            "zero_division": c.zero_division,
        }));
    }
    let mut report = json!({
        "items": cm.total(),
        "accuracy": m.accuracy,
        "macro": {"precision": m.macro_precision, "recall": m.macro_recall, "f1": m.macro_f1},
        "weighted": {"precision": m.weighted_precision, "recall": m.weighted_recall, "f1": m.weighted_f1},
        "classes": classes,
        "confusion": {
            "classes": cm.classes(),
            "counts": (0..cm.classes().len())
                .map(|t| (0..cm.classes().len()).map(|p| cm.count(t, p)).collect::<Vec<_>>())
                .collect::<Vec<_>>(),
        },
    });

    if mode == Mode::Challenge {
        let Some(positive) = positive else {
            bail!("challenge mode needs --positive <class>");
        };
        if cm.index_of(positive).is_none() {
            bail!("positive class {positive:?} appears in neither file");
        }
        let s = challenge_score(&cm, positive)?;
        writeln!(text, "challenge positive {positive}")?;
        writeln!(text, "tp {} fn {} fp {} tn {}", s.tp, s.fn_, s.fp, s.tn)?;
        writeln!(text, "tpr {}", show(s.tpr))?;
        writeln!(text, "far {}", show(s.far))?;
        writeln!(text, "score {}", show(s.score))?;
        report["challenge"] = json!({
            "positive": positive,
            "tp": s.tp, "fn": s.fn_, "fp": s.fp, "tn": s.tn,
            "tpr": s.tpr, "far": s.far, "score": s.score,
        });
    }
    Ok((text, report))
}
