//! Batch classification, streaming early detection, and evaluation metrics.
//!
//! Batch mode scores a user's full history; streaming mode advances one
//! LSTM step per aspect as each edit arrives and re-fuses the current hidden
//! states, so the probability after t edits is bit-identical to the batch
//! probability on that t-edit prefix. A user is flagged the first time the
//! vandal probability strictly exceeds the threshold, and the flag latches.

use std::io::Write;

use crate::embeddings::WordVectorStore;
use crate::error::{Error, Result};
use crate::ingestion::{
    edit_aspect_vectors, AspectSequences, EditRecord, Label, UserSequence, REVERT_DIM,
};
use crate::model::{attention_fuse, classify, forward_user, lstm_step, ModelParams};
use crate::numerics::Vector;

#[derive(Clone, Copy, Debug)]
pub struct DetectionConfig {
    /// Decision threshold on P(vandal); strict exceedance flags the user.
    pub tau: f64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        DetectionConfig { tau: 0.5 }
    }
}

impl DetectionConfig {
    pub fn new(tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(Error::Config(format!("tau must be in (0, 1), got {tau}")));
        }
        Ok(DetectionConfig { tau })
    }
}

/// Vandal probability of a fused embedding trace.
fn vandal_probability(probs: &Vector) -> f64 {
    probs[Label::Vandal.class_index()]
}

/// Score a user's whole history. The verdict is vandal iff the probability
/// strictly exceeds tau.
pub fn predict_user(
    params: &ModelParams,
    aspects: &AspectSequences,
    cfg: &DetectionConfig,
) -> Result<(f64, bool)> {
    let trace = forward_user(params, aspects)?;
    let p = vandal_probability(&trace.probs);
    Ok((p, p > cfg.tau))
}

/// Per-user scoring state: the (h, c) pair of every aspect LSTM, the number
/// of edits consumed, and the latched flag.
#[derive(Clone, Debug)]
pub struct StreamState {
    hidden: Vec<Vector>,
    cell: Vec<Vector>,
    steps: usize,
    flagged_at: Option<usize>,
    last_prob: f64,
}

impl StreamState {
    /// Zero state before any edit.
    pub fn new(params: &ModelParams) -> Self {
        StreamState {
            hidden: vec![Vector::zeros(params.hidden); params.num_aspects()],
            cell: vec![Vector::zeros(params.hidden); params.num_aspects()],
            steps: 0,
            flagged_at: None,
            last_prob: 0.0,
        }
    }

    /// Edits consumed so far.
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// 1-based step at which the user was first flagged, if ever.
    pub fn flagged_at(&self) -> Option<usize> {
        self.flagged_at
    }

    pub fn flagged(&self) -> bool {
        self.flagged_at.is_some()
    }

    pub fn last_probability(&self) -> f64 {
        self.last_prob
    }

    // First strict crossing sets the flag; it never clears.
    fn note_probability(&mut self, prob: f64, tau: f64) {
        self.last_prob = prob;
        if self.flagged_at.is_none() && prob > tau {
            self.flagged_at = Some(self.steps);
        }
    }
}

/// Consume one edit: build its aspect vectors, advance each LSTM a step,
/// fuse the current hidden states, classify, and latch the flag on a strict
/// threshold crossing. Returns the vandal probability and the (latched)
/// flag after this edit.
pub fn stream_step(
    state: &mut StreamState,
    edit: &EditRecord,
    params: &ModelParams,
    store: &WordVectorStore,
    cfg: &DetectionConfig,
) -> Result<(f64, bool)> {
    let expected = [store.dim(), store.dim(), REVERT_DIM];
    if params.aspect_dims != expected {
        return Err(Error::Dimension(format!(
            "model expects aspect dims {:?}, store provides {:?}",
            params.aspect_dims, expected
        )));
    }
    if state.hidden.len() != params.num_aspects()
        || state.hidden.iter().any(|h| h.len() != params.hidden)
    {
        return Err(Error::Dimension("stream state does not match model shapes".into()));
    }
    let inputs = edit_aspect_vectors(edit, store);
    for (m, x) in inputs.iter().enumerate() {
        let step = lstm_step(&params.lstms[m], x, &state.hidden[m], &state.cell[m])?;
        state.hidden[m] = step.h;
        state.cell[m] = step.c;
    }
    state.steps += 1;
    let refs: Vec<&Vector> = state.hidden.iter().collect();
    let fusion = attention_fuse(&params.attention, &refs)?;
    let probs = classify(&params.classifier, &fusion.embedding)?;
    let p = vandal_probability(&probs);
    state.note_probability(p, cfg.tau);
    Ok((p, state.flagged()))
}

/// The full streaming run of one user.
#[derive(Clone, Debug)]
pub struct StreamOutcome {
    pub user_id: String,
    pub label: Label,
    /// Vandal probability after each edit.
    pub probs: Vec<f64>,
    /// 1-based step of the first strict threshold crossing.
    pub flagged_at: Option<usize>,
}

impl StreamOutcome {
    pub fn edits(&self) -> usize {
        self.probs.len()
    }

    pub fn flagged(&self) -> bool {
        self.flagged_at.is_some()
    }

    /// Flagged strictly before the final edit.
    pub fn early_detected(&self) -> bool {
        matches!(self.flagged_at, Some(t) if t < self.edits())
    }
}

/// Stream a user's edits through `stream_step` from a fresh state.
pub fn stream_user(
    params: &ModelParams,
    user: &UserSequence,
    store: &WordVectorStore,
    cfg: &DetectionConfig,
) -> Result<StreamOutcome> {
    let mut state = StreamState::new(params);
    let mut probs = Vec::with_capacity(user.len());
    for edit in &user.edits {
        let (p, _) = stream_step(&mut state, edit, params, store, cfg)?;
        probs.push(p);
    }
    Ok(StreamOutcome {
        user_id: user.user_id.clone(),
        label: user.label,
        probs,
        flagged_at: state.flagged_at(),
    })
}

/// Confusion-matrix metrics with vandal as the positive class. Ratios with a
/// zero denominator are reported as 0 and flip the `degenerate` flag.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsReport {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub true_negatives: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub degenerate: bool,
}

impl MetricsReport {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        let mut degenerate = false;
        let mut ratio = |num: usize, den: usize| {
            if den == 0 {
                degenerate = true;
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let accuracy = ratio(tp + tn, tp + fp + fn_ + tn);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            degenerate = true;
            0.0
        };
        MetricsReport {
            true_positives: tp,
            false_positives: fp,
            false_negatives: fn_,
            true_negatives: tn,
            precision,
            recall,
            f1,
            accuracy,
            degenerate,
        }
    }
}

/// Score verdicts against ground truth; the slices must be parallel.
pub fn evaluate(verdicts: &[bool], labels: &[Label]) -> Result<MetricsReport> {
    if verdicts.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} verdicts but {} labels",
            verdicts.len(),
            labels.len()
        )));
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (&flagged, &label) in verdicts.iter().zip(labels) {
        match (flagged, label) {
            (true, Label::Vandal) => tp += 1,
            (true, Label::Benign) => fp += 1,
            (false, Label::Vandal) => fn_ += 1,
            (false, Label::Benign) => tn += 1,
        }
    }
    Ok(MetricsReport::from_counts(tp, fp, fn_, tn))
}

/// Early-detection statistics over a set of streamed users.
#[derive(Clone, Copy, Debug)]
pub struct EarlyStats {
    /// Vandals flagged strictly before their final edit.
    pub early_detected: usize,
    pub total_vandals: usize,
    /// Mean 1-based flag step over early-detected vandals.
    pub avg_edits_at_detection: f64,
    /// early_detected / total_vandals.
    pub fraction_early: f64,
    pub degenerate: bool,
}

/// A vandal counts as early-detected iff it was flagged strictly before its
/// final recorded edit (the block point); never-flagged vandals and vandals
/// flagged only at the last edit are excluded from the detection average.
pub fn early_stats(outcomes: &[StreamOutcome]) -> EarlyStats {
    let vandals: Vec<&StreamOutcome> =
        outcomes.iter().filter(|o| o.label == Label::Vandal).collect();
    let early: Vec<usize> =
        vandals.iter().filter(|o| o.early_detected()).map(|o| o.flagged_at.unwrap()).collect();
    let mut degenerate = false;
    let avg = if early.is_empty() {
        degenerate = true;
        0.0
    } else {
        early.iter().sum::<usize>() as f64 / early.len() as f64
    };
    let fraction = if vandals.is_empty() {
        degenerate = true;
        0.0
    } else {
        early.len() as f64 / vandals.len() as f64
    };
    EarlyStats {
        early_detected: early.len(),
        total_vandals: vandals.len(),
        avg_edits_at_detection: avg,
        fraction_early: fraction,
        degenerate,
    }
}

/// One evaluated threshold in a batch-detection report.
#[derive(Clone, Copy, Debug)]
pub struct DetectionRow {
    pub tau: f64,
    pub metrics: MetricsReport,
}

/// One evaluated threshold in a streaming report.
#[derive(Clone, Copy, Debug)]
pub struct EarlyRow {
    pub tau: f64,
    pub metrics: MetricsReport,
    pub early: EarlyStats,
}

/// Batch-score a dataset at each threshold.
pub fn evaluate_at_thresholds(
    params: &ModelParams,
    dataset: &[AspectSequences],
    taus: &[f64],
) -> Result<Vec<DetectionRow>> {
    let mut probs = Vec::with_capacity(dataset.len());
    let labels: Vec<Label> = dataset.iter().map(|u| u.label).collect();
    for user in dataset {
        let trace = forward_user(params, user)?;
        probs.push(vandal_probability(&trace.probs));
    }
    taus.iter()
        .map(|&tau| {
            DetectionConfig::new(tau)?;
            let verdicts: Vec<bool> = probs.iter().map(|&p| p > tau).collect();
            Ok(DetectionRow { tau, metrics: evaluate(&verdicts, &labels)? })
        })
        .collect()
}

/// Stream a dataset at each threshold. Verdict = flagged at any step.
pub fn stream_at_thresholds(
    params: &ModelParams,
    users: &[UserSequence],
    store: &WordVectorStore,
    taus: &[f64],
) -> Result<Vec<EarlyRow>> {
    let labels: Vec<Label> = users.iter().map(|u| u.label).collect();
    taus.iter()
        .map(|&tau| {
            let cfg = DetectionConfig::new(tau)?;
            let outcomes: Vec<StreamOutcome> = users
                .iter()
                .map(|u| stream_user(params, u, store, &cfg))
                .collect::<Result<_>>()?;
            let verdicts: Vec<bool> = outcomes.iter().map(StreamOutcome::flagged).collect();
            Ok(EarlyRow {
                tau,
                metrics: evaluate(&verdicts, &labels)?,
                early: early_stats(&outcomes),
            })
        })
        .collect()
}

fn pct(x: f64) -> String {
    format!("{:.2}%", 100.0 * x)
}

/// TSV: tau, precision, recall, f1, accuracy (ratios, six decimals).
pub fn write_detection_tsv(mut w: impl Write, rows: &[DetectionRow]) -> Result<()> {
    writeln!(w, "tau\tprecision\trecall\tf1\taccuracy")?;
    for row in rows {
        let m = &row.metrics;
        writeln!(
            w,
            "{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
            row.tau, m.precision, m.recall, m.f1, m.accuracy
        )?;
    }
    Ok(())
}

/// TSV: tau, precision, recall, f1, avg edits at detection, fraction early.
pub fn write_early_tsv(mut w: impl Write, rows: &[EarlyRow]) -> Result<()> {
    writeln!(w, "tau\tprecision\trecall\tf1\tavg_edits\tpct_early")?;
    for row in rows {
        writeln!(
            w,
            "{}\t{:.6}\t{:.6}\t{:.6}\t{:.4}\t{:.6}",
            row.tau,
            row.metrics.precision,
            row.metrics.recall,
            row.metrics.f1,
            row.early.avg_edits_at_detection,
            row.early.fraction_early
        )?;
    }
    Ok(())
}

/// Human-readable table of batch metrics.
pub fn format_detection_table(rows: &[DetectionRow]) -> String {
    let mut out = String::from("tau    precision  recall     f1         accuracy\n");
    for row in rows {
        let m = &row.metrics;
        out.push_str(&format!(
            "{:<6} {:<10} {:<10} {:<10} {:<10}\n",
            row.tau,
            pct(m.precision),
            pct(m.recall),
            pct(m.f1),
            pct(m.accuracy)
        ));
    }
    out
}

/// Human-readable table of streaming metrics.
pub fn format_early_table(rows: &[EarlyRow]) -> String {
    let mut out =
        String::from("tau    precision  recall     f1         #edits   early\n");
    for row in rows {
        out.push_str(&format!(
            "{:<6} {:<10} {:<10} {:<10} {:<8.2} {:<10}\n",
            row.tau,
            pct(row.metrics.precision),
            pct(row.metrics.recall),
            pct(row.metrics.f1),
            row.early.avg_edits_at_detection,
            pct(row.early.fraction_early)
        ));
    }
    out
}
