//! Decoding graph over the tropical semiring and its text grammar.
//!
//! Arc lines are `src dst ilabel olabel [weight]`, final lines are
//! `state [weight]`; the first line's source is the start state. Input label
//! `k > 0` means pdf `k - 1`, label 0 is epsilon on either side.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;

use crate::{fmt_f32, Error, Result};

pub type StateId = u32;
pub type Label = u32;
pub const EPSILON: Label = 0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arc {
    pub src: StateId,
    pub dst: StateId,
    pub ilabel: Label,
    pub olabel: Label,
    pub weight: f32,
}

impl Arc {
    pub fn new(src: StateId, dst: StateId, ilabel: Label, olabel: Label, weight: f32) -> Self {
        Self { src, dst, ilabel, olabel, weight }
    }

    /// Pdf consumed by this arc, if it is emitting.
    #[inline]
    pub fn pdf(&self) -> Option<usize> {
        (self.ilabel != EPSILON).then(|| self.ilabel as usize - 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodingGraph {
    num_states: usize,
    start: StateId,
    /// Arcs grouped by source, file order within a source.
    arcs: Vec<Arc>,
    offsets: Vec<usize>,
    finals: Vec<Option<f32>>,
}

impl DecodingGraph {
    /// Builds a graph; arcs are grouped by source keeping their relative order.
    pub fn new(
        num_states: usize,
        start: StateId,
        mut arcs: Vec<Arc>,
        finals: impl IntoIterator<Item = (StateId, f32)>,
    ) -> Result<Self> {
        if start as usize >= num_states {
            return Err(Error::Graph(vec![format!("start state {start} >= {num_states} states")]));
        }
        if let Some(a) = arcs.iter().find(|a| a.src as usize >= num_states || a.dst as usize >= num_states) {
            return Err(Error::Graph(vec![format!("arc {}->{} outside {num_states} states", a.src, a.dst)]));
        }
        arcs.sort_by_key(|a| a.src);
        let mut offsets = vec![0usize; num_states + 1];
        for a in &arcs {
            offsets[a.src as usize + 1] += 1;
        }
        for s in 0..num_states {
            offsets[s + 1] += offsets[s];
        }
        let mut fin = vec![None; num_states];
        for (s, w) in finals {
            let slot = fin
                .get_mut(s as usize)
                .ok_or_else(|| Error::Graph(vec![format!("final state {s} >= {num_states} states")]))?;
            *slot = Some(w);
        }
        Ok(Self { num_states, start, arcs, offsets, finals: fin })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn start(&self) -> StateId {
        self.start
    }

    pub fn arcs_from(&self, s: StateId) -> &[Arc] {
        let s = s as usize;
        &self.arcs[self.offsets[s]..self.offsets[s + 1]]
    }

    pub fn arcs(&self) -> &[Arc] {
        &self.arcs
    }

    pub fn final_cost(&self, s: StateId) -> Option<f32> {
        self.finals[s as usize]
    }

    pub fn finals(&self) -> impl Iterator<Item = (StateId, f32)> + '_ {
        self.finals
            .iter()
            .enumerate()
            .filter_map(|(s, w)| w.map(|w| (s as StateId, w)))
    }

    pub fn max_ilabel(&self) -> Label {
        self.arcs.iter().map(|a| a.ilabel).max().unwrap_or(0)
    }

    /// Text form accepted by [`parse_fst_text`]: the start state's lines come
    /// first, then every other state in id order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let order = core::iter::once(self.start).chain((0..self.num_states as StateId).filter(|&s| s != self.start));
        for s in order {
            for a in self.arcs_from(s) {
                let _ = writeln!(out, "{} {} {} {} {}", a.src, a.dst, a.ilabel, a.olabel, fmt_f32(a.weight));
            }
            if let Some(w) = self.final_cost(s) {
                let _ = writeln!(out, "{s} {}", fmt_f32(w));
            }
        }
        out
    }
}

fn parse_id(field: &str, line: usize, what: &str) -> Result<u32> {
    let value: i64 = field.parse().map_err(|_| Error::Parse {
        line,
        message: format!("{what} {field:?} is not an integer"),
    })?;
    u32::try_from(value).map_err(|_| Error::Parse {
        line,
        message: format!("{what} {value} out of range"),
    })
}

fn parse_weight(field: Option<&str>, line: usize) -> Result<f32> {
    let Some(field) = field else { return Ok(0.0) };
    match field.parse::<f32>() {
        Ok(w) if w.is_finite() => Ok(w),
        _ => Err(Error::Parse { line, message: format!("bad weight {field:?}") }),
    }
}

pub fn parse_fst_text(text: &str) -> Result<DecodingGraph> {
    let mut arcs = Vec::new();
    let mut finals = Vec::new();
    let mut start = None;
    let mut max_state = 0u32;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let fields: Vec<&str> = raw.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let src = parse_id(fields[0], line, "state")?;
        start.get_or_insert(src);
        max_state = max_state.max(src);
        match fields.len() {
            1 | 2 => finals.push((src, parse_weight(fields.get(1).copied(), line)?)),
            4 | 5 => {
                let dst = parse_id(fields[1], line, "state")?;
                let ilabel = parse_id(fields[2], line, "input label")?;
                let olabel = parse_id(fields[3], line, "output label")?;
                let weight = parse_weight(fields.get(4).copied(), line)?;
                max_state = max_state.max(dst);
                arcs.push(Arc { src, dst, ilabel, olabel, weight });
            }
            n => {
                return Err(Error::Parse { line, message: format!("expected 1, 2, 4 or 5 fields, got {n}") })
            }
        }
    }
    let start = start.ok_or(Error::Parse { line: 0, message: "empty FST".into() })?;
    DecodingGraph::new(max_state as usize + 1, start, arcs, finals)
}

/// Checks label ranges and state references; collects every violation.
pub fn validate_graph(g: &DecodingGraph, num_pdfs: usize) -> core::result::Result<(), Vec<String>> {
    let mut problems = Vec::new();
    if g.start as usize >= g.num_states {
        problems.push(format!("start state {} undefined", g.start));
    }
    for a in &g.arcs {
        if a.ilabel as usize > num_pdfs {
            problems.push(format!(
                "arc {}->{}: input label {} exceeds {num_pdfs} pdfs",
                a.src, a.dst, a.ilabel
            ));
        }
        if a.dst as usize >= g.num_states {
            problems.push(format!("arc {}->{}: destination undefined", a.src, a.dst));
        }
        if !a.weight.is_finite() {
            problems.push(format!("arc {}->{}: non-finite weight", a.src, a.dst));
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(problems)
    }
}

/// Word <-> id bijection with `<eps>` at 0.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SymbolTable {
    by_word: BTreeMap<String, Label>,
    by_id: BTreeMap<Label, String>,
}

pub const EPSILON_SYMBOL: &str = "<eps>";

impl SymbolTable {
    pub fn from_pairs<S: Into<String>>(pairs: impl IntoIterator<Item = (S, Label)>) -> Result<Self> {
        let mut table = Self::default();
        for (word, id) in pairs {
            let word = word.into();
            if table.by_id.contains_key(&id) {
                return Err(Error::Symbols(format!("duplicate id {id}")));
            }
            if table.by_word.contains_key(&word) {
                return Err(Error::Symbols(format!("duplicate word {word:?}")));
            }
            table.by_word.insert(word.clone(), id);
            table.by_id.insert(id, word);
        }
        if table.by_id.get(&EPSILON).map(String::as_str) != Some(EPSILON_SYMBOL) {
            return Err(Error::Symbols("id 0 must be <eps>".into()));
        }
        Ok(table)
    }

    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
    }

    pub fn word(&self, id: Label) -> Option<&str> {
        self.by_id.get(&id).map(String::as_str)
    }

    pub fn id(&self, word: &str) -> Option<Label> {
        self.by_word.get(word).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Label, &str)> {
        self.by_id.iter().map(|(&id, w)| (id, w.as_str()))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (id, word) in self.iter() {
            let _ = writeln!(out, "{word} {id}");
        }
        out
    }
}

pub fn parse_symbol_table(text: &str) -> Result<SymbolTable> {
    let mut pairs = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let fields: Vec<&str> = raw.split_whitespace().collect();
        match fields.as_slice() {
            [] => continue,
            [word, id] => pairs.push((word.to_string(), parse_id(id, line, "symbol id")?)),
            _ => return Err(Error::Parse { line, message: "expected `word id`".into() }),
        }
    }
    SymbolTable::from_pairs(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_arc_and_final() {
        let g = parse_fst_text("0 1 1 2 0.5\n1 0.25\n").unwrap();
        assert_eq!(g.num_states(), 2);
        assert_eq!(g.start(), 0);
        assert_eq!(g.arcs_from(0), &[Arc::new(0, 1, 1, 2, 0.5)]);
        assert_eq!(g.final_cost(1), Some(0.25));
        assert_eq!(g.final_cost(0), None);
    }

    #[test]
    fn single_final_state() {
        let g = parse_fst_text("0\n").unwrap();
        assert_eq!(g.num_states(), 1);
        assert_eq!(g.final_cost(0), Some(0.0));
        assert!(g.arcs().is_empty());
    }

    #[test]
    fn parse_errors_carry_line() {
        assert!(matches!(parse_fst_text("0 1 x 2\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_fst_text("0 1 1 1\n-1 0\n"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_fst_text(""), Err(Error::Parse { .. })));
        assert!(matches!(parse_fst_text("0 1 1\n"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn missing_weight_defaults_to_zero_and_start_is_first_src() {
        let g = parse_fst_text("3 1 1 1\n1 2 0 0\n2\n").unwrap();
        assert_eq!(g.start(), 3);
        assert_eq!(g.num_states(), 4);
        assert_eq!(g.arcs_from(3)[0].weight, 0.0);
    }

    #[test]
    fn grouping_keeps_file_order() {
        let g = parse_fst_text("0 1 1 0\n1 0 2 0\n0 2 3 0\n0 1 4 0\n").unwrap();
        let labels: Vec<_> = g.arcs_from(0).iter().map(|a| a.ilabel).collect();
        assert_eq!(labels, vec![1, 3, 4]);
    }

    #[test]
    fn validation_collects_all() {
        let g = parse_fst_text("0 1 5 0\n1 0 6 0\n1\n").unwrap();
        let errs = validate_graph(&g, 4).unwrap_err();
        assert_eq!(errs.len(), 2);
        assert!(validate_graph(&parse_fst_text("0 0.5\n").unwrap(), 4).is_ok());
        assert!(validate_graph(&parse_fst_text("0 1 5 0\n1\n").unwrap(), 4).is_err());
    }

    #[test]
    fn symbol_tables() {
        let t = parse_symbol_table("<eps> 0\nhello 1\n").unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.word(1), Some("hello"));
        assert_eq!(t.id("hello"), Some(1));
        assert!(parse_symbol_table("hello 1\n").is_err());
        assert!(parse_symbol_table("<eps> 0\na 1\nb 1\n").is_err());
        assert!(parse_symbol_table("<eps> 0\na 1\na 2\n").is_err());
    }
}
