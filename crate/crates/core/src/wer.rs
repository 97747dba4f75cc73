//! Word error rate via Levenshtein alignment of word sequences.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EditOp {
    Match,
    Sub,
    Del,
    Ins,
}

/// Minimum-edit alignment with unit costs. Backtracking from the end prefers
/// match, then substitution, deletion, insertion.
pub fn align_words<T: PartialEq>(reference: &[T], hyp: &[T]) -> Vec<EditOp> {
    let (n, m) = (reference.len(), hyp.len());
    let width = m + 1;
    let mut d = vec![0usize; (n + 1) * width];
    for (j, cell) in d[..width].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=n {
        d[i * width] = i;
        for j in 1..=m {
            let diag = d[(i - 1) * width + j - 1] + usize::from(reference[i - 1] != hyp[j - 1]);
            let del = d[(i - 1) * width + j] + 1;
            let ins = d[i * width + j - 1] + 1;
            d[i * width + j] = diag.min(del).min(ins);
        }
    }

    let mut ops = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = d[i * width + j];
        if i > 0 && j > 0 {
            let diag = d[(i - 1) * width + j - 1];
            if reference[i - 1] == hyp[j - 1] && here == diag {
                ops.push(EditOp::Match);
                i -= 1;
                j -= 1;
                continue;
            }
            if reference[i - 1] != hyp[j - 1] && here == diag + 1 {
                ops.push(EditOp::Sub);
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && here == d[(i - 1) * width + j] + 1 {
            ops.push(EditOp::Del);
            i -= 1;
        } else {
            ops.push(EditOp::Ins);
            j -= 1;
        }
    }
    ops.reverse();
    ops
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ErrorCounts {
    /// Reference words.
    pub words: usize,
    pub sub: usize,
    pub del: usize,
    pub ins: usize,
}

impl ErrorCounts {
    pub fn from_ops(ops: &[EditOp]) -> Self {
        let mut c = Self::default();
        for op in ops {
            match op {
                EditOp::Match => c.words += 1,
                EditOp::Sub => {
                    c.words += 1;
                    c.sub += 1;
                }
                EditOp::Del => {
                    c.words += 1;
                    c.del += 1;
                }
                EditOp::Ins => c.ins += 1,
            }
        }
        c
    }

    pub fn errors(&self) -> usize {
        self.sub + self.del + self.ins
    }

    /// `100 * errors / words`; may exceed 100 with insertions. Infinite when
    /// there are errors against an empty reference.
    pub fn wer_percent(&self) -> f64 {
        match (self.errors(), self.words) {
            (0, _) => 0.0,
            (_, 0) => f64::INFINITY,
            (e, n) => 100.0 * e as f64 / n as f64,
        }
    }
}

impl core::ops::AddAssign for ErrorCounts {
    fn add_assign(&mut self, rhs: Self) {
        self.words += rhs.words;
        self.sub += rhs.sub;
        self.del += rhs.del;
        self.ins += rhs.ins;
    }
}

/// Utterance key to word sequence.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TranscriptSet(BTreeMap<String, Vec<String>>);

impl TranscriptSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: impl Into<String>, words: Vec<String>) -> Result<()> {
        let key = key.into();
        if self.0.contains_key(&key) {
            return Err(Error::DuplicateTranscript(key));
        }
        self.0.insert(key, words);
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&[String]> {
        self.0.get(key).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[String])> {
        self.0.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }
}

impl FromIterator<(String, Vec<String>)> for TranscriptSet {
    /// Later duplicates replace earlier ones.
    fn from_iter<I: IntoIterator<Item = (String, Vec<String>)>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreReport {
    /// Per reference utterance, in key order.
    pub utterances: Vec<(String, ErrorCounts)>,
    pub total: ErrorCounts,
}

impl ScoreReport {
    pub fn wer_percent(&self) -> f64 {
        self.total.wer_percent()
    }

    /// `%WER p [ errors / words, I ins, D del, S sub ]`, two decimals.
    pub fn summary_line(&self) -> String {
        let t = &self.total;
        alloc::format!(
            "%WER {:.2} [ {} / {}, {} ins, {} del, {} sub ]",
            t.wer_percent(),
            t.errors(),
            t.words,
            t.ins,
            t.del,
            t.sub
        )
    }

    /// Per-utterance table followed by the summary line.
    pub fn to_text(&self) -> String {
        let key_width = self.utterances.iter().map(|(k, _)| k.len()).max().unwrap_or(0).max(3);
        let mut out = String::new();
        let _ = writeln!(out, "{:<key_width$} {:>6} {:>5} {:>5} {:>5} {:>8}", "utt", "words", "sub", "del", "ins", "wer");
        for (key, c) in &self.utterances {
            let _ = writeln!(
                out,
                "{key:<key_width$} {:>6} {:>5} {:>5} {:>5} {:>8.2}",
                c.words,
                c.sub,
                c.del,
                c.ins,
                c.wer_percent()
            );
        }
        out.push_str(&self.summary_line());
        out.push('\n');
        out
    }
}

/// Scores every reference utterance; a reference with no hypothesis counts
/// all its words as deletions. A hypothesis without a reference is an error.
pub fn score_corpus(refs: &TranscriptSet, hyps: &TranscriptSet) -> Result<ScoreReport> {
    if let Some((key, _)) = hyps.iter().find(|(k, _)| refs.get(k).is_none()) {
        return Err(Error::UnknownHypothesis(key.to_string()));
    }
    let mut total = ErrorCounts::default();
    let mut utterances = Vec::with_capacity(refs.len());
    for (key, reference) in refs.iter() {
        let hyp = hyps.get(key).unwrap_or(&[]);
        let counts = ErrorCounts::from_ops(&align_words(reference, hyp));
        total += counts;
        utterances.push((key.to_string(), counts));
    }
    Ok(ScoreReport { utterances, total })
}
