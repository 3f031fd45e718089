//! Classification metrics and the binary challenge score `TPR * (1 - FAR)`.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("truth has {truth} labels but predictions have {pred}")]
    LengthMismatch { truth: usize, pred: usize },
    #[error("nothing to score")]
    Empty,
    #[error("challenge scoring needs at most 2 classes, found {0}")]
    NotBinary(usize),
    #[error("{0}")]
    Csv(#[from] csv::Error),
    #[error("{what}: expected header \"id,label\"")]
    BadHeader { what: &'static str },
    #[error("{what}: duplicate id {id:?}")]
    DuplicateId { what: &'static str, id: String },
    #[error("id {0:?} has no prediction")]
    MissingPrediction(String),
    #[error("prediction for unknown id {0:?}")]
    UnknownId(String),
}

/// `counts[t][p]`: items of true class `t` predicted as `p`. Classes are
/// sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: Vec<String>,
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    /// Panics unless `counts` is square with one row per class.
    pub fn from_counts(classes: Vec<String>, counts: Vec<Vec<u64>>) -> Self {
        let k = classes.len();
        assert!(
            counts.len() == k && counts.iter().all(|r| r.len() == k),
            "counts must be {k}x{k}"
        );
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| classes[a].cmp(&classes[b]));
        ConfusionMatrix {
            classes: order.iter().map(|&i| classes[i].clone()).collect(),
            counts: order
                .iter()
                .map(|&t| order.iter().map(|&p| counts[t][p]).collect())
                .collect(),
        }
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn index_of(&self, class: &str) -> Option<usize> {
        self.classes.binary_search_by(|c| c.as_str().cmp(class)).ok()
    }

    pub fn count(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth][pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes.len()).map(|i| self.counts[i][i]).sum()
    }

    fn row_sum(&self, t: usize) -> u64 {
        self.counts[t].iter().sum()
    }

    fn col_sum(&self, p: usize) -> u64 {
        self.counts.iter().map(|r| r[p]).sum()
    }
}

pub fn confusion<S: AsRef<str>>(truth: &[S], pred: &[S]) -> Result<ConfusionMatrix, EvalError> {
    if truth.len() != pred.len() {
        return Err(EvalError::LengthMismatch {
            truth: truth.len(),
            pred: pred.len(),
        });
    }
    if truth.is_empty() {
        return Err(EvalError::Empty);
    }
    let classes: BTreeSet<&str> = truth.iter().chain(pred).map(AsRef::as_ref).collect();
    let classes: Vec<String> = classes.into_iter().map(String::from).collect();
    let mut cm = ConfusionMatrix {
        counts: vec![vec![0; classes.len()]; classes.len()],
        classes,
    };
    for (t, p) in truth.iter().zip(pred) {
        let ti = cm.index_of(t.as_ref()).expect("class present");
        let pi = cm.index_of(p.as_ref()).expect("class present");
        cm.counts[ti][pi] += 1;
    }
    Ok(cm)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassMetrics {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Number of items whose true class this is.
    pub support: u64,
    /// Some ratio had a zero denominator and was set to 0.
    pub zero_division: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f1: f64,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Order-independent sum.
fn sum_sorted(values: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.into_iter().sum()
}

/// Accuracy, per-class precision/recall/F1 and their macro and
/// support-weighted means. Zero denominators give 0.
pub fn classification_metrics(cm: &ConfusionMatrix) -> Metrics {
    let total = cm.total();
    let per_class: Vec<ClassMetrics> = cm
        .classes
        .iter()
        .enumerate()
        .map(|(i, class)| {
            let tp = cm.counts[i][i];
            let precision = ratio(tp, cm.col_sum(i));
            let recall = ratio(tp, cm.row_sum(i));
            let (p, r) = (precision.unwrap_or(0.0), recall.unwrap_or(0.0));
            let f1 = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
            ClassMetrics {
                class: class.clone(),
                precision: p,
                recall: r,
                f1,
                support: cm.row_sum(i),
                zero_division: precision.is_none() || recall.is_none(),
            }
        })
        .collect();
    let k = per_class.len().max(1) as f64;
    let macro_of = |f: fn(&ClassMetrics) -> f64| sum_sorted(per_class.iter().map(f)) / k;
    let weighted_of = |f: fn(&ClassMetrics) -> f64| {
        if total == 0 {
            0.0
        } else {
            sum_sorted(per_class.iter().map(|c| f(c) * c.support as f64)) / total as f64
        }
    };
    Metrics {
        accuracy: ratio(cm.trace(), total).unwrap_or(0.0),
        macro_precision: macro_of(|c| c.precision),
        macro_recall: macro_of(|c| c.recall),
        macro_f1: macro_of(|c| c.f1),
        weighted_precision: weighted_of(|c| c.precision),
        weighted_recall: weighted_of(|c| c.recall),
        weighted_f1: weighted_of(|c| c.f1),
        per_class,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChallengeScore {
    pub tp: u64,
    pub fn_: u64,
    pub fp: u64,
    pub tn: u64,
    /// `TP / (TP + FN)`, undefined without positives.
    pub tpr: Option<f64>,
    /// `FP / (TN + FP)`, undefined without negatives.
    pub far: Option<f64>,
    /// `TPR * (1 - FAR)`, undefined when either rate is.
    pub score: Option<f64>,
}

/// Binary detection score; every class other than `positive` is negative.
pub fn challenge_score(cm: &ConfusionMatrix, positive: &str) -> Result<ChallengeScore, EvalError> {
    if cm.classes.len() > 2 {
        return Err(EvalError::NotBinary(cm.classes.len()));
    }
    let pos = cm.index_of(positive);
    let (mut tp, mut fn_, mut fp, mut tn) = (0, 0, 0, 0);
    for t in 0..cm.classes.len() {
        for p in 0..cm.classes.len() {
            let n = cm.counts[t][p];
            match (Some(t) == pos, Some(p) == pos) {
                (true, true) => tp += n,
                (true, false) => fn_ += n,
                (false, true) => fp += n,
                (false, false) => tn += n,
            }
        }
    }
    let tpr = ratio(tp, tp + fn_);
    let far = ratio(fp, tn + fp);
    Ok(ChallengeScore {
        tp,
        fn_,
        fp,
        tn,
        tpr,
        far,
        score: tpr.zip(far).map(|(t, f)| t * (1.0 - f)),
    })
}

/// Reads an `id,label` CSV into id → label.
pub fn read_labels(reader: impl Read, what: &'static str) -> Result<BTreeMap<String, String>, EvalError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?;
    if headers.len() != 2 || &headers[0] != "id" || &headers[1] != "label" {
        return Err(EvalError::BadHeader { what });
    }
    let mut out = BTreeMap::new();
    for row in rdr.records() {
        let row = row?;
        let (id, label) = (row[0].to_string(), row[1].to_string());
        if out.insert(id.clone(), label).is_some() {
            return Err(EvalError::DuplicateId { what, id });
        }
    }
    Ok(out)
}

/// Aligns truth and predictions on id (sorted by id). Every truth id needs
/// exactly one prediction and vice versa.
pub fn join_labels(
    truth: &BTreeMap<String, String>,
    pred: &BTreeMap<String, String>,
) -> Result<(Vec<String>, Vec<String>), EvalError> {
    if let Some(id) = pred.keys().find(|id| !truth.contains_key(*id)) {
        return Err(EvalError::UnknownId(id.clone()));
    }
    let mut t = Vec::with_capacity(truth.len());
    let mut p = Vec::with_capacity(truth.len());
    for (id, label) in truth {
        let guess = pred.get(id).ok_or_else(|| EvalError::MissingPrediction(id.clone()))?;
        t.push(label.clone());
        p.push(guess.clone());
    }
    Ok((t, p))
}
