//! Edit-distance error rates (CER, WER, VER) and sentence accuracy (SAR).
//!
//! Corpus figures pool counts across sentences: `Σ(S+D+I) / ΣN`.

use std::fmt::Write as _;
use std::ops::{Add, AddAssign};

use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::lexicon::normalize_tokens;
use crate::viseme::Viseme;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("error rate undefined for an empty reference")]
    UndefinedRate,
    #[error("no scored rows to aggregate")]
    NoRows,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct EditCounts {
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub reference_len: usize,
}

impl EditCounts {
    pub fn errors(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }

    pub fn rate(&self) -> Result<f64, MetricsError> {
        error_rate(self)
    }
}

impl Add for EditCounts {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        self += rhs;
        self
    }
}

impl AddAssign for EditCounts {
    fn add_assign(&mut self, rhs: Self) {
        self.substitutions += rhs.substitutions;
        self.deletions += rhs.deletions;
        self.insertions += rhs.insertions;
        self.reference_len += rhs.reference_len;
    }
}

impl std::iter::Sum for EditCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), Add::add)
    }
}

/// Unit-cost Levenshtein alignment. Among minimal alignments the backtrace
/// prefers substitution, then deletion, then insertion.
pub fn edit_counts<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> EditCounts {
    let (n, m) = (reference.len(), hypothesis.len());
    let w = m + 1;
    let mut d = vec![0usize; (n + 1) * w];
    for i in 0..=n {
        d[i * w] = i;
    }
    for j in 0..=m {
        d[j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let diag = d[(i - 1) * w + j - 1] + usize::from(reference[i - 1] != hypothesis[j - 1]);
            let del = d[(i - 1) * w + j] + 1;
            let ins = d[i * w + j - 1] + 1;
            d[i * w + j] = diag.min(del).min(ins);
        }
    }

    let mut counts = EditCounts { reference_len: n, ..EditCounts::default() };
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = d[i * w + j];
        if i > 0 && j > 0 {
            let same = reference[i - 1] == hypothesis[j - 1];
            if here == d[(i - 1) * w + j - 1] + usize::from(!same) {
                if !same {
                    counts.substitutions += 1;
                }
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && here == d[(i - 1) * w + j] + 1 {
            counts.deletions += 1;
            i -= 1;
        } else {
            counts.insertions += 1;
            j -= 1;
        }
    }
    counts
}

/// `(S+D+I)/N`. May exceed 1 when the hypothesis is much longer.
pub fn error_rate(counts: &EditCounts) -> Result<f64, MetricsError> {
    if counts.reference_len == 0 {
        return Err(MetricsError::UndefinedRate);
    }
    Ok(counts.errors() as f64 / counts.reference_len as f64)
}

/// Normalized character tokens; inter-word spaces count unless disabled.
pub fn char_tokens(sentence: &str, include_spaces: bool) -> Vec<char> {
    let sep = if include_spaces { " " } else { "" };
    normalize_tokens(sentence).join(sep).chars().collect()
}

pub fn cer_counts(reference: &str, hypothesis: &str, include_spaces: bool) -> EditCounts {
    edit_counts(&char_tokens(reference, include_spaces), &char_tokens(hypothesis, include_spaces))
}

pub fn wer_counts(reference: &str, hypothesis: &str) -> EditCounts {
    edit_counts(&normalize_tokens(reference), &normalize_tokens(hypothesis))
}

pub fn ver_counts(reference: &[Viseme], hypothesis: &[Viseme]) -> EditCounts {
    edit_counts(reference, hypothesis)
}

pub fn cer(reference: &str, hypothesis: &str) -> Result<f64, MetricsError> {
    error_rate(&cer_counts(reference, hypothesis, true))
}

pub fn wer(reference: &str, hypothesis: &str) -> Result<f64, MetricsError> {
    error_rate(&wer_counts(reference, hypothesis))
}

pub fn ver(reference: &[Viseme], hypothesis: &[Viseme]) -> Result<f64, MetricsError> {
    error_rate(&ver_counts(reference, hypothesis))
}

/// 1 iff the normalized sentences are identical.
pub fn sar(reference: &str, hypothesis: &str) -> u8 {
    u8::from(normalize_tokens(reference) == normalize_tokens(hypothesis))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SentenceRow {
    pub id: usize,
    pub reference: String,
    pub hypothesis: Option<String>,
    /// Set when the row could not be decoded; such rows are excluded from aggregates.
    pub skipped: Option<String>,
    pub cer: EditCounts,
    pub wer: EditCounts,
    pub ver: EditCounts,
    pub sar: u8,
    pub perplexity: Option<f64>,
    pub reference_perplexity: Option<f64>,
}

impl SentenceRow {
    pub fn skipped(id: usize, reference: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            id,
            reference: reference.into(),
            hypothesis: None,
            skipped: Some(reason.into()),
            cer: EditCounts::default(),
            wer: EditCounts::default(),
            ver: EditCounts::default(),
            sar: 0,
            perplexity: None,
            reference_perplexity: None,
        }
    }

    pub fn is_scored(&self) -> bool {
        self.skipped.is_none()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CorpusTotals {
    pub cer: EditCounts,
    pub wer: EditCounts,
    pub ver: EditCounts,
    pub sentences: usize,
    pub correct: usize,
    pub skipped: usize,
}

impl CorpusTotals {
    pub fn cer(&self) -> Option<f64> {
        self.cer.rate().ok()
    }

    pub fn wer(&self) -> Option<f64> {
        self.wer.rate().ok()
    }

    pub fn ver(&self) -> Option<f64> {
        self.ver.rate().ok()
    }

    /// Percentage of scored sentences decoded exactly.
    pub fn sar_percent(&self) -> f64 {
        100.0 * self.correct as f64 / self.sentences as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub rows: Vec<SentenceRow>,
    pub totals: CorpusTotals,
}

pub fn aggregate(rows: Vec<SentenceRow>) -> Result<MetricsReport, MetricsError> {
    let mut totals = CorpusTotals::default();
    for row in &rows {
        if !row.is_scored() {
            totals.skipped += 1;
            continue;
        }
        totals.cer += row.cer;
        totals.wer += row.wer;
        totals.ver += row.ver;
        totals.sentences += 1;
        totals.correct += usize::from(row.sar);
    }
    if totals.sentences == 0 {
        return Err(MetricsError::NoRows);
    }
    Ok(MetricsReport { rows, totals })
}

fn pct(rate: Option<f64>) -> String {
    rate.map_or_else(|| "-".to_string(), |r| format!("{:.1}", 100.0 * r))
}

fn opt_rate(c: &EditCounts) -> Option<f64> {
    c.rate().ok()
}

impl MetricsReport {
    /// Aligned text: per-sentence rows then the corpus summary.
    pub fn to_table(&self, label: &str) -> String {
        let mut out = String::new();
        let width = self
            .rows
            .iter()
            .map(|r| r.reference.len())
            .chain(std::iter::once("Ground truth".len()))
            .max()
            .unwrap_or(0);
        let _ = writeln!(out, "{:>4}  {:<width$}  {:<width$}  {:>10}  {:>3}", "#", "Ground truth", "Predicted", "PP", "SAR");
        for row in &self.rows {
            let (hyp, pp) = match (&row.hypothesis, &row.skipped) {
                (_, Some(reason)) => (format!("<skipped: {reason}>"), "-".to_string()),
                (Some(h), None) => (h.clone(), row.perplexity.map_or("-".into(), |p| format!("{p:.2}"))),
                (None, None) => (String::new(), "-".into()),
            };
            let _ = writeln!(out, "{:>4}  {:<width$}  {:<width$}  {:>10}  {:>3}", row.id, row.reference, hyp, pp, row.sar);
        }
        let t = &self.totals;
        let _ = writeln!(out);
        let _ = writeln!(out, "{:<12}  {:>6}  {:>6}  {:>6}  {:>6}  {:>5}  {:>7}", "Scenario", "CER", "WER", "VER", "SAR", "N", "skipped");
        let _ = writeln!(
            out,
            "{:<12}  {:>6}  {:>6}  {:>6}  {:>6.1}  {:>5}  {:>7}",
            label,
            pct(t.cer()),
            pct(t.wer()),
            pct(t.ver()),
            t.sar_percent(),
            t.sentences,
            t.skipped
        );
        out
    }

    /// One JSON object per row, then one aggregate object.
    pub fn to_records(&self) -> String {
        let mut out = String::new();
        for row in &self.rows {
            let value = json!({
                "type": "row",
                "id": row.id,
                "reference": row.reference,
                "hypothesis": row.hypothesis,
                "skipped": row.skipped,
                "cer": opt_rate(&row.cer),
                "wer": opt_rate(&row.wer),
                "ver": opt_rate(&row.ver),
                "sar": row.sar,
                "perplexity": row.perplexity,
                "reference_perplexity": row.reference_perplexity,
                "counts": { "cer": row.cer, "wer": row.wer, "ver": row.ver },
            });
            out.push_str(&value.to_string());
            out.push('\n');
        }
        let t = &self.totals;
        let value = json!({
            "type": "aggregate",
            "sentences": t.sentences,
            "skipped": t.skipped,
            "cer": t.cer(),
            "wer": t.wer(),
            "ver": t.ver(),
            "sar": t.sar_percent(),
            "counts": { "cer": t.cer, "wer": t.wer, "ver": t.ver },
        });
        out.push_str(&value.to_string());
        out.push('\n');
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chars(s: &str) -> Vec<char> {
        s.chars().collect()
    }

    fn words(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn identity_and_kitten() {
        let c = edit_counts(&chars("abc"), &chars("abc"));
        assert_eq!(c, EditCounts { reference_len: 3, ..Default::default() });
        let c = edit_counts(&chars("kitten"), &chars("sitting"));
        assert_eq!(c.errors(), 3);
        assert_eq!(c.reference_len, 6);
        assert_eq!((c.substitutions, c.deletions, c.insertions), (2, 0, 1));
    }

    #[test]
    fn table_pair_word_alignment() {
        let c = edit_counts(&words("STICK TO WHAT YOU'RE GOOD AT"), &words("STILL DO WHAT YOU'RE GOOD AT"));
        assert_eq!((c.substitutions, c.deletions, c.insertions, c.reference_len), (2, 0, 0, 6));
        assert!((error_rate(&c).unwrap() - 2.0 / 6.0).abs() < 1e-15);
        assert!((wer("Stick to what you're good at.", "STILL DO WHAT YOU'RE GOOD AT").unwrap() - 2.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn backtrace_preference() {
        // "ab" -> "b": one deletion, never sub+ins
        let c = edit_counts(&chars("ab"), &chars("b"));
        assert_eq!((c.substitutions, c.deletions, c.insertions), (0, 1, 0));
        // "ab" -> "ba": sub twice rather than del+ins
        let c = edit_counts(&chars("ab"), &chars("ba"));
        assert_eq!((c.substitutions, c.deletions, c.insertions), (2, 0, 0));
        let c = edit_counts(&chars("a"), &chars("ba"));
        assert_eq!((c.substitutions, c.deletions, c.insertions), (0, 0, 1));
    }

    #[test]
    fn rates() {
        let c = EditCounts { reference_len: 5, ..Default::default() };
        assert_eq!(error_rate(&c), Ok(0.0));
        let c = edit_counts::<char>(&chars("abcd"), &[]);
        assert_eq!(error_rate(&c), Ok(1.0));
        assert_eq!(error_rate(&EditCounts::default()), Err(MetricsError::UndefinedRate));
        let c = edit_counts(&chars("a"), &chars("bbbb"));
        assert_eq!(error_rate(&c), Ok(4.0));
    }

    #[test]
    fn cer_counts_spaces() {
        assert_eq!(char_tokens("excuse me", true).len(), 9);
        assert_eq!(char_tokens("excuse me", false).len(), 8);
        assert_eq!(cer_counts("A B", "AB", true).errors(), 1);
        assert_eq!(cer_counts("A B", "AB", false).errors(), 0);
    }

    #[test]
    fn sar_examples() {
        assert_eq!(sar("EXCUSE ME", "EXCUSE ME"), 1);
        assert_eq!(sar("excuse me.", "EXCUSE  ME"), 1);
        assert_eq!(sar("PRETTY ON THE OUTSIDE", "BREEZY ON THE OUTSIDE"), 0);
        assert_eq!(sar("", ""), 1);
    }

    fn row(id: usize, r: &str, h: &str) -> SentenceRow {
        SentenceRow {
            id,
            reference: r.into(),
            hypothesis: Some(h.into()),
            skipped: None,
            cer: cer_counts(r, h, true),
            wer: wer_counts(r, h),
            ver: EditCounts::default(),
            sar: sar(r, h),
            perplexity: Some(2.0),
            reference_perplexity: None,
        }
    }

    #[test]
    fn aggregate_pools() {
        let rows = vec![row(1, "A B C D", "A B C E"), row(2, "A B C D E F", "A B C D E F")];
        let rep = aggregate(rows).unwrap();
        assert_eq!(rep.totals.wer(), Some(0.1));
        assert_eq!(rep.totals.sar_percent(), 50.0);
        let perfect: Vec<_> = (0..10).map(|i| row(i, "EXCUSE ME", "EXCUSE ME")).collect();
        let rep = aggregate(perfect).unwrap();
        assert_eq!((rep.totals.cer(), rep.totals.wer(), rep.totals.sar_percent()), (Some(0.0), Some(0.0), 100.0));
        assert_eq!(aggregate(vec![]), Err(MetricsError::NoRows));
    }

    #[test]
    fn skipped_rows_excluded() {
        let rep = aggregate(vec![row(1, "HI", "HI"), SentenceRow::skipped(2, "ZZQX", "OOV")]).unwrap();
        assert_eq!(rep.totals.sentences, 1);
        assert_eq!(rep.totals.skipped, 1);
        assert_eq!(rep.totals.sar_percent(), 100.0);
        let rec = rep.to_records();
        assert_eq!(rec.lines().count(), 3);
        assert!(rec.lines().last().unwrap().contains("\"type\":\"aggregate\""));
        assert!(rep.to_table("Scenario 1").contains("<skipped: OOV>"));
    }
}
