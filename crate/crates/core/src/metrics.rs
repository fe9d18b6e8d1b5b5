//! Mean average precision, accuracy and multi-run statistics.

use std::fmt;
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Evaluation summary for a score matrix.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalResult {
    /// AP per class; `None` for classes with no positives.
    pub per_class_ap: Vec<Option<f64>>,
    pub map: f64,
    /// Top-1 accuracy, single-label mode only.
    pub accuracy: Option<f64>,
    pub n_samples: usize,
    pub skipped_classes: Vec<usize>,
}

impl EvalResult {
    /// Key-value report, one `key: value` per line.
    pub fn report(&self) -> String {
        let mut s = format!("n_samples: {}\nmAP: {:.4}\n", self.n_samples, self.map);
        if let Some(a) = self.accuracy {
            s += &format!("accuracy: {a:.4}\n");
        }
        s += &format!("classes_scored: {}\n", self.per_class_ap.len() - self.skipped_classes.len());
        if !self.skipped_classes.is_empty() {
            let ids: Vec<String> = self.skipped_classes.iter().map(usize::to_string).collect();
            s += &format!("skipped_classes: {}\n", ids.join(","));
        }
        s
    }

    /// `class,ap` rows; skipped classes have an empty AP cell.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let wrap = |e: csv::Error| Error::Format(format!("writing per-class csv: {e}"));
        out.write_record(["class", "ap"]).map_err(wrap)?;
        for (c, ap) in self.per_class_ap.iter().enumerate() {
            let cell = ap.map(|v| format!("{v:.6}")).unwrap_or_default();
            out.write_record([c.to_string(), cell]).map_err(wrap)?;
        }
        out.flush().map_err(|e| Error::Format(format!("writing per-class csv: {e}")))
    }
}

/// Non-interpolated AP: the mean, over positives, of precision at each
/// positive's rank. Ranking is by descending score with ties kept in input
/// order. `None` when there are no positives.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<Option<f64>> {
    if scores.len() != labels.len() {
        return Err(Error::dim("average_precision", &[scores.len()], &[labels.len()]));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 {
        return Ok(None);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut hits = 0usize;
    let mut total = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if labels[i] {
            hits += 1;
            total += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(Some(total / positives as f64))
}

/// Per-class AP over the columns of `B × C` matrices; labels count as positive
/// when above 0.5.
pub fn map_score<T: Real>(scores: &Tensor<T>, labels: &Tensor<T>) -> Result<EvalResult> {
    if scores.shape() != labels.shape() || scores.rank() != 2 {
        return Err(Error::dim("map_score", scores.shape(), labels.shape()));
    }
    let (b, c) = scores.dims2();
    let half = T::of(0.5);
    let per_class_ap = crate::par::map_range(c, |j| {
        let s: Vec<f64> = (0..b).map(|i| scores.data()[i * c + j].f64()).collect();
        let l: Vec<bool> = (0..b).map(|i| labels.data()[i * c + j] > half).collect();
        average_precision(&s, &l).expect("equal lengths")
    });
    let skipped_classes: Vec<usize> = per_class_ap
        .iter()
        .enumerate()
        .filter_map(|(j, ap)| ap.is_none().then_some(j))
        .collect();
    let scored: Vec<f64> = per_class_ap.iter().flatten().copied().collect();
    let map = if scored.is_empty() {
        0.0
    } else {
        scored.iter().sum::<f64>() / scored.len() as f64
    };
    Ok(EvalResult {
        per_class_ap,
        map,
        accuracy: None,
        n_samples: b,
        skipped_classes,
    })
}

/// Index of the first maximum.
pub fn argmax<T: Real>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Fraction of rows whose argmax (lowest index on ties) equals the label.
pub fn accuracy<T: Real>(logits: &Tensor<T>, labels: &[usize]) -> Result<f64> {
    let (b, c) = logits.dims2();
    if b != labels.len() {
        return Err(Error::dim("accuracy", logits.shape(), &[labels.len()]));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::Input(format!("label {bad} outside {c} classes")));
    }
    let correct = (0..b).filter(|&i| argmax(logits.row(i)) == labels[i]).count();
    Ok(correct as f64 / b as f64)
}

/// mAP of `scores` against `labels`, plus top-1 accuracy when single-label.
pub fn evaluate<T: Real>(scores: &Tensor<T>, labels: &Tensor<T>, multi_label: bool) -> Result<EvalResult> {
    let mut r = map_score(scores, labels)?;
    if !multi_label {
        let idx: Vec<usize> = (0..labels.dims2().0).map(|i| argmax(labels.row(i))).collect();
        r.accuracy = Some(accuracy(scores, &idx)?);
    }
    Ok(r)
}

/// Mean and population standard deviation over repeated runs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RunStats {
    pub mean: f64,
    pub std: f64,
}

impl RunStats {
    /// `mean±std` with `decimals` digits on both.
    pub fn render(&self, decimals: usize) -> String {
        format!("{:.*}±{:.*}", decimals, self.mean, decimals, self.std)
    }
}

impl fmt::Display for RunStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render(3))
    }
}

pub fn run_stats(values: &[f64]) -> Result<RunStats> {
    if values.is_empty() {
        return Err(Error::Input("run_stats needs at least one value".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok(RunStats {
        mean,
        std: var.sqrt(),
    })
}
