//! Plain-text companions of the archives: priors, transcripts, graphs and
//! symbol tables.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ramdec_core::dataset::PriorVector;
use ramdec_core::graph::{parse_fst_text, parse_symbol_table, DecodingGraph, SymbolTable};
use ramdec_core::wer::TranscriptSet;

use crate::{Error, Result};

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(Error::io(path))
}

fn format_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Format { path: path.to_path_buf(), line, message: message.into() }
}

/// Re-anchors a core parse error to the file it came from.
fn at(path: &Path, err: ramdec_core::Error) -> Error {
    match err {
        ramdec_core::Error::Parse { line, message } => format_err(path, line, message),
        other => format_err(path, 0, other.to_string()),
    }
}

/// `K` on the first line, then the K probabilities space-separated.
pub fn priors_to_text(priors: &PriorVector) -> String {
    let mut out = format!("{}\n", priors.num_pdfs());
    let values: Vec<String> = priors.probs().iter().map(|p| format!("{p:?}")).collect();
    out.push_str(&values.join(" "));
    out.push('\n');
    out
}

pub fn parse_priors(text: &str, path: &Path) -> Result<PriorVector> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| format_err(path, 1, "empty priors file"))?;
    let k: usize = header.trim().parse().map_err(|_| format_err(path, 1, "first line must be the pdf count"))?;
    let mut probs = Vec::with_capacity(k);
    for (i, line) in lines {
        for tok in line.split_whitespace() {
            let p = tok
                .parse::<f64>()
                .map_err(|_| format_err(path, i + 1, format!("bad probability {tok:?}")))?;
            probs.push(p);
        }
    }
    if probs.len() != k {
        return Err(format_err(path, 2, format!("expected {k} probabilities, found {}", probs.len())));
    }
    PriorVector::new(probs).map_err(|e| format_err(path, 2, e.to_string()))
}

pub fn write_priors(path: &Path, priors: &PriorVector) -> Result<()> {
    fs::write(path, priors_to_text(priors)).map_err(Error::io(path))
}

pub fn read_priors(path: &Path) -> Result<PriorVector> {
    parse_priors(&read_text(path)?, path)
}

/// One line per utterance: `key w1 w2 ...`. Blank lines are ignored; a key
/// alone is an empty transcript.
pub fn parse_transcripts(text: &str, path: &Path) -> Result<TranscriptSet> {
    let mut set = TranscriptSet::new();
    for (i, line) in text.lines().enumerate() {
        let mut fields = line.split_whitespace();
        let Some(key) = fields.next() else { continue };
        set.insert(key, fields.map(str::to_owned).collect())
            .map_err(|_| format_err(path, i + 1, format!("duplicate utterance {key}")))?;
    }
    Ok(set)
}

pub fn read_transcripts(path: &Path) -> Result<TranscriptSet> {
    parse_transcripts(&read_text(path)?, path)
}

pub fn transcript_line<S: AsRef<str>>(key: &str, words: &[S]) -> String {
    let mut line = String::from(key);
    for w in words {
        let _ = write!(line, " {}", w.as_ref());
    }
    line.push('\n');
    line
}

pub fn read_graph(path: &Path) -> Result<DecodingGraph> {
    parse_fst_text(&read_text(path)?).map_err(|e| at(path, e))
}

pub fn read_symbol_table(path: &Path) -> Result<SymbolTable> {
    parse_symbol_table(&read_text(path)?).map_err(|e| at(path, e))
}
