//! Frame-synchronous token-passing beam search that records a lattice.
//!
//! Tokens live at `(frame, state)`; frame `t` holds the hypotheses that have
//! consumed `t` acoustic frames. For each frame the decoder extends tokens
//! along emitting arcs, relaxes epsilon arcs inside the new frame until no
//! token improves, then applies the beam and the max-active cap. Every link
//! between surviving tokens is kept, so the result is a lattice rather than a
//! single back-pointer chain.

use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt::Write;

use crate::am::LoglikeMatrix;
use crate::graph::{DecodingGraph, Label, StateId, EPSILON};
use crate::{fmt_f32, Error, Result};

/// Smallest improvement that counts during epsilon relaxation.
pub const EPSILON_RELAX_DELTA: f32 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodeConfig {
    pub beam: f32,
    pub max_active: usize,
    pub lattice_beam: f32,
    pub acoustic_scale: f32,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self { beam: 16.0, max_active: 7000, lattice_beam: 8.0, acoustic_scale: 0.1 }
    }
}

impl DecodeConfig {
    /// No beam, no active cap.
    pub fn exhaustive(acoustic_scale: f32) -> Self {
        Self { beam: f32::INFINITY, max_active: usize::MAX, lattice_beam: f32::INFINITY, acoustic_scale }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(alloc::format!("{what} must be positive")));
        if self.beam.is_nan() || self.beam <= 0.0 {
            return bad("beam");
        }
        if self.lattice_beam.is_nan() || self.lattice_beam <= 0.0 {
            return bad("lattice beam");
        }
        if self.max_active == 0 {
            return bad("max active");
        }
        if !(self.acoustic_scale > 0.0 && self.acoustic_scale.is_finite()) {
            return bad("acoustic scale");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatticeNode {
    pub frame: usize,
    pub state: StateId,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeLink {
    pub from: usize,
    pub to: usize,
    pub olabel: Label,
    pub graph_cost: f32,
    pub acoustic_cost: f32,
}

impl LatticeLink {
    pub fn cost(&self) -> f64 {
        f64::from(self.graph_cost) + f64::from(self.acoustic_cost)
    }
}

/// Token graph. Node ids are topologically ordered (every link goes from a
/// lower to a higher id) and node 0 is the start.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    nodes: Vec<LatticeNode>,
    /// Sorted by `from`.
    links: Vec<LatticeLink>,
    finals: Vec<(usize, f32)>,
    num_frames: usize,
    partial: bool,
}

impl Lattice {
    pub fn nodes(&self) -> &[LatticeNode] {
        &self.nodes
    }

    pub fn links(&self) -> &[LatticeLink] {
        &self.links
    }

    /// End nodes with their final costs.
    pub fn finals(&self) -> &[(usize, f32)] {
        &self.finals
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    /// True when no final graph state survived and the last frame's tokens
    /// stand in as end nodes (final cost 0).
    pub fn is_partial(&self) -> bool {
        self.partial
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn forward_costs(&self) -> (Vec<f64>, Vec<Option<usize>>) {
        let mut alpha = vec![f64::INFINITY; self.nodes.len()];
        let mut back = vec![None; self.nodes.len()];
        if let Some(a) = alpha.first_mut() {
            *a = 0.0;
        }
        for (i, l) in self.links.iter().enumerate() {
            let cand = alpha[l.from] + l.cost();
            if cand < alpha[l.to] {
                alpha[l.to] = cand;
                back[l.to] = Some(i);
            }
        }
        (alpha, back)
    }

    fn backward_costs(&self) -> Vec<f64> {
        let mut beta = vec![f64::INFINITY; self.nodes.len()];
        for &(n, f) in &self.finals {
            beta[n] = f64::from(f);
        }
        for l in self.links.iter().rev() {
            let cand = l.cost() + beta[l.to];
            if cand < beta[l.from] {
                beta[l.from] = cand;
            }
        }
        beta
    }

    /// Keeps the given links and finals, then drops nodes that are not on a
    /// start-to-end path and renumbers the rest in their existing order.
    fn retain(&self, keep_link: &[bool], keep_final: &[bool]) -> Lattice {
        let n = self.nodes.len();
        let mut fwd = vec![false; n];
        if n > 0 {
            fwd[0] = true;
        }
        for (l, &k) in self.links.iter().zip(keep_link) {
            if k && fwd[l.from] {
                fwd[l.to] = true;
            }
        }
        let mut bwd = vec![false; n];
        for (&(node, _), &k) in self.finals.iter().zip(keep_final) {
            if k {
                bwd[node] = true;
            }
        }
        for (l, &k) in self.links.iter().zip(keep_link).rev() {
            if k && bwd[l.to] {
                bwd[l.from] = true;
            }
        }
        let mut remap = vec![usize::MAX; n];
        let mut nodes = Vec::new();
        for i in 0..n {
            if fwd[i] && bwd[i] {
                remap[i] = nodes.len();
                nodes.push(self.nodes[i]);
            }
        }
        let links = self
            .links
            .iter()
            .zip(keep_link)
            .filter(|(l, &k)| k && remap[l.from] != usize::MAX && remap[l.to] != usize::MAX)
            .map(|(l, _)| LatticeLink { from: remap[l.from], to: remap[l.to], ..*l })
            .collect();
        let finals = self
            .finals
            .iter()
            .zip(keep_final)
            .filter(|(&(node, _), &k)| k && remap[node] != usize::MAX)
            .map(|(&(node, f), _)| (remap[node], f))
            .collect();
        Lattice { nodes, links, finals, num_frames: self.num_frames, partial: self.partial }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult {
    /// Output labels along the best path, epsilons removed.
    pub words: Vec<Label>,
    pub cost: f64,
    pub partial: bool,
    /// Indices into [`Lattice::links`] along the best path.
    pub path: Vec<usize>,
    pub end_node: usize,
}

#[derive(Debug, Clone, Copy)]
struct Token {
    state: StateId,
    cost: f32,
    alive: bool,
    /// Token in the same frame that gave the current cost via epsilon.
    eps_pred: Option<u32>,
}

#[derive(Debug, Clone, Copy)]
struct PendingLink {
    from: u32,
    to: u32,
    olabel: Label,
    graph_cost: f32,
    acoustic_cost: f32,
}

#[derive(Debug, Default)]
struct Frame {
    tokens: Vec<Token>,
    /// Position of each token in the frame's topological order.
    order: Vec<u32>,
    eps_links: Vec<PendingLink>,
    /// Links from this frame into the next.
    emit_links: Vec<PendingLink>,
}

struct StateIndex {
    slot: Vec<u32>,
    stamp: Vec<u32>,
    generation: u32,
}

impl StateIndex {
    fn new(num_states: usize) -> Self {
        Self { slot: vec![0; num_states], stamp: vec![0; num_states], generation: 0 }
    }

    fn reset(&mut self) {
        self.generation += 1;
    }

    fn get(&self, s: StateId) -> Option<u32> {
        (self.stamp[s as usize] == self.generation).then(|| self.slot[s as usize])
    }

    fn set(&mut self, s: StateId, idx: u32) {
        self.stamp[s as usize] = self.generation;
        self.slot[s as usize] = idx;
    }
}

/// Runs the beam search over all frames of `ll` and returns the lattice of
/// surviving tokens, trimmed to nodes on some start-to-end path.
pub fn decode(g: &DecodingGraph, ll: &LoglikeMatrix, cfg: &DecodeConfig) -> Result<Lattice> {
    cfg.validate()?;
    if g.max_ilabel() as usize > ll.num_pdfs() {
        return Err(Error::DimMismatch { expected: ll.num_pdfs(), actual: g.max_ilabel() as usize });
    }
    let mut index = StateIndex::new(g.num_states());
    let mut frames: Vec<Frame> = Vec::with_capacity(ll.num_frames() + 1);

    index.reset();
    let mut first = Frame::default();
    first.tokens.push(Token { state: g.start(), cost: 0.0, alive: true, eps_pred: None });
    index.set(g.start(), 0);
    close_and_prune(g, &mut first, &mut index, cfg, 0)?;
    frames.push(first);

    for t in 0..ll.num_frames() {
        index.reset();
        let mut next = Frame::default();
        let cur = frames.last_mut().expect("frame");
        for (from, tok) in cur.tokens.iter().enumerate().filter(|(_, tok)| tok.alive) {
            for arc in g.arcs_from(tok.state) {
                let Some(pdf) = arc.pdf() else { continue };
                let acoustic_cost = -cfg.acoustic_scale * ll.get(t, pdf);
                let cand = tok.cost + arc.weight + acoustic_cost;
                let to = match index.get(arc.dst) {
                    Some(j) => {
                        let existing = &mut next.tokens[j as usize];
                        if cand < existing.cost {
                            existing.cost = cand;
                        }
                        j
                    }
                    None => {
                        let j = next.tokens.len() as u32;
                        next.tokens.push(Token { state: arc.dst, cost: cand, alive: true, eps_pred: None });
                        index.set(arc.dst, j);
                        j
                    }
                };
                cur.emit_links.push(PendingLink {
                    from: from as u32,
                    to,
                    olabel: arc.olabel,
                    graph_cost: arc.weight,
                    acoustic_cost,
                });
            }
        }
        if next.tokens.is_empty() {
            return Err(Error::BeamCollapse { frame: t });
        }
        close_and_prune(g, &mut next, &mut index, cfg, t + 1)?;
        frames.push(next);
    }

    Ok(assemble(g, &frames))
}

/// Epsilon relaxation, topological ordering of the frame, epsilon links, and
/// beam/max-active pruning.
fn close_and_prune(
    g: &DecodingGraph,
    frame: &mut Frame,
    index: &mut StateIndex,
    cfg: &DecodeConfig,
    frame_idx: usize,
) -> Result<()> {
    let tokens = &mut frame.tokens;
    let mut pass = 0usize;
    loop {
        pass += 1;
        let mut improved = false;
        let mut i = 0;
        while i < tokens.len() {
            let (state, cost) = (tokens[i].state, tokens[i].cost);
            for arc in g.arcs_from(state).iter().filter(|a| a.ilabel == EPSILON) {
                let cand = cost + arc.weight;
                match index.get(arc.dst) {
                    Some(j) => {
                        let tok = &mut tokens[j as usize];
                        if cand < tok.cost - EPSILON_RELAX_DELTA {
                            tok.cost = cand;
                            tok.eps_pred = Some(i as u32);
                            improved = true;
                        }
                    }
                    None => {
                        index.set(arc.dst, tokens.len() as u32);
                        tokens.push(Token { state: arc.dst, cost: cand, alive: true, eps_pred: Some(i as u32) });
                        improved = true;
                    }
                }
            }
            i += 1;
        }
        if !improved {
            break;
        }
        if pass >= g.num_states() {
            return Err(Error::EpsilonCycle { frame: frame_idx });
        }
    }

    // Pruning.
    let best = tokens.iter().map(|t| t.cost).fold(f32::INFINITY, f32::min);
    let cutoff = best + cfg.beam;
    let mut alive = 0usize;
    for tok in tokens.iter_mut() {
        tok.alive = tok.cost <= cutoff;
        alive += usize::from(tok.alive);
    }
    if alive > cfg.max_active {
        let mut ranked: Vec<usize> = (0..tokens.len()).filter(|&i| tokens[i].alive).collect();
        ranked.sort_by(|&a, &b| by_cost_then_state(&tokens[a], &tokens[b]));
        for &i in &ranked[cfg.max_active..] {
            tokens[i].alive = false;
        }
    }

    // Topological order of the epsilon arcs among surviving tokens, cheapest
    // ready token first. Epsilon links are only kept along this order, so the
    // lattice stays acyclic. On a cycle (zero-cost, or cheaper than the
    // relaxation threshold) the order is forced at a token whose best
    // predecessor is already placed, so best-cost links always survive.
    let n = tokens.len();
    let mut succ: Vec<Vec<u32>> = vec![Vec::new(); n];
    let mut indegree = vec![0usize; n];
    for (i, tok) in tokens.iter().enumerate().filter(|(_, t)| t.alive) {
        for arc in g.arcs_from(tok.state).iter().filter(|a| a.ilabel == EPSILON) {
            if let Some(j) = index.get(arc.dst) {
                if tokens[j as usize].alive && j as usize != i {
                    succ[i].push(j);
                    indegree[j as usize] += 1;
                }
            }
        }
    }
    let rank = |i: usize| Ranked { cost: tokens[i].cost, state: tokens[i].state, idx: i as u32 };
    let mut order = vec![u32::MAX; n];
    let mut heap: BinaryHeap<Ranked> =
        (0..n).filter(|&i| tokens[i].alive && indegree[i] == 0).map(rank).collect();
    let mut remaining = tokens.iter().filter(|t| t.alive).count();
    let mut next_pos = 0u32;
    while remaining > 0 {
        let idx = match heap.pop() {
            Some(r) if order[r.idx as usize] == u32::MAX => r.idx as usize,
            Some(_) => continue,
            None => {
                let placed = |p: Option<u32>| {
                    p.is_none_or(|p| order[p as usize] != u32::MAX || !tokens[p as usize].alive)
                };
                let cheapest = |tree_ready: bool| {
                    (0..n)
                        .filter(|&i| tokens[i].alive && order[i] == u32::MAX)
                        .filter(|&i| !tree_ready || placed(tokens[i].eps_pred))
                        .min_by(|&a, &b| by_cost_then_state(&tokens[a], &tokens[b]))
                };
                cheapest(true).or_else(|| cheapest(false)).expect("unplaced token")
            }
        };
        order[idx] = next_pos;
        next_pos += 1;
        remaining -= 1;
        for &j in &succ[idx] {
            let j = j as usize;
            indegree[j] -= 1;
            if indegree[j] == 0 && order[j] == u32::MAX {
                heap.push(rank(j));
            }
        }
    }

    for (i, tok) in tokens.iter().enumerate().filter(|(_, t)| t.alive) {
        for arc in g.arcs_from(tok.state).iter().filter(|a| a.ilabel == EPSILON) {
            let Some(j) = index.get(arc.dst) else { continue };
            if tokens[j as usize].alive && order[i] < order[j as usize] {
                frame.eps_links.push(PendingLink {
                    from: i as u32,
                    to: j,
                    olabel: arc.olabel,
                    graph_cost: arc.weight,
                    acoustic_cost: 0.0,
                });
            }
        }
    }
    frame.order = order;
    Ok(())
}

fn by_cost_then_state(a: &Token, b: &Token) -> Ordering {
    a.cost.total_cmp(&b.cost).then(a.state.cmp(&b.state))
}

#[derive(Debug, PartialEq)]
struct Ranked {
    cost: f32,
    state: StateId,
    idx: u32,
}

impl Eq for Ranked {}

impl Ord for Ranked {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on (cost, state).
        other.cost.total_cmp(&self.cost).then(other.state.cmp(&self.state))
    }
}

impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn assemble(g: &DecodingGraph, frames: &[Frame]) -> Lattice {
    let mut node_of: Vec<Vec<usize>> = Vec::with_capacity(frames.len());
    let mut nodes = Vec::new();
    for (t, frame) in frames.iter().enumerate() {
        let mut ids = vec![usize::MAX; frame.tokens.len()];
        let mut alive: Vec<usize> = (0..frame.tokens.len()).filter(|&i| frame.tokens[i].alive).collect();
        alive.sort_by_key(|&i| frame.order[i]);
        for i in alive {
            ids[i] = nodes.len();
            nodes.push(LatticeNode { frame: t, state: frame.tokens[i].state });
        }
        node_of.push(ids);
    }

    let mut links = Vec::new();
    let mut push = |from: usize, to: usize, l: &PendingLink| {
        if from != usize::MAX && to != usize::MAX {
            links.push(LatticeLink {
                from,
                to,
                olabel: l.olabel,
                graph_cost: l.graph_cost,
                acoustic_cost: l.acoustic_cost,
            });
        }
    };
    for (t, frame) in frames.iter().enumerate() {
        for l in &frame.eps_links {
            push(node_of[t][l.from as usize], node_of[t][l.to as usize], l);
        }
        if t + 1 < frames.len() {
            for l in &frame.emit_links {
                push(node_of[t][l.from as usize], node_of[t + 1][l.to as usize], l);
            }
        }
    }
    links.sort_by_key(|l| l.from);

    let last_t = frames.len() - 1;
    let last = &frames[last_t];
    let mut finals: Vec<(usize, f32)> = last
        .tokens
        .iter()
        .enumerate()
        .filter(|(_, tok)| tok.alive)
        .filter_map(|(i, tok)| g.final_cost(tok.state).map(|f| (node_of[last_t][i], f)))
        .collect();
    let partial = finals.is_empty();
    if partial {
        finals = (0..last.tokens.len())
            .filter(|&i| last.tokens[i].alive)
            .map(|i| (node_of[last_t][i], 0.0))
            .collect();
    }
    finals.sort_by_key(|f| f.0);

    let start_alive = frames[0].tokens[0].alive;
    let raw = Lattice { nodes, links, finals, num_frames: last_t, partial };
    if !start_alive {
        return Lattice { nodes: Vec::new(), links: Vec::new(), finals: Vec::new(), ..raw };
    }
    let keep_links = vec![true; raw.links.len()];
    let keep_finals = vec![true; raw.finals.len()];
    raw.retain(&keep_links, &keep_finals)
}

/// Cheapest start-to-end path. For partial lattices the end nodes are the
/// last frame's tokens, so this is the cheapest surviving hypothesis.
pub fn best_path(lat: &Lattice) -> Result<DecodeResult> {
    if lat.is_empty() || lat.finals.is_empty() {
        return Err(Error::EmptyLattice);
    }
    let (alpha, back) = lat.forward_costs();
    let mut best: Option<(f64, usize)> = None;
    for &(n, f) in &lat.finals {
        let total = alpha[n] + f64::from(f);
        if best.is_none_or(|(c, _)| total < c) {
            best = Some((total, n));
        }
    }
    let (cost, end_node) = best.expect("finals non-empty");
    if !cost.is_finite() {
        return Err(Error::EmptyLattice);
    }
    let mut path = Vec::new();
    let mut node = end_node;
    while let Some(i) = back[node] {
        path.push(i);
        node = lat.links[i].from;
    }
    path.reverse();
    let words = path
        .iter()
        .map(|&i| lat.links[i].olabel)
        .filter(|&o| o != EPSILON)
        .collect();
    Ok(DecodeResult { words, cost, partial: lat.partial, path, end_node })
}

/// Removes links (and final entries) whose best complete path costs more
/// than the best path plus `lattice_beam`, then drops disconnected nodes.
pub fn prune_lattice(lat: &Lattice, lattice_beam: f32) -> Lattice {
    if lat.is_empty() {
        return lat.clone();
    }
    let (alpha, _) = lat.forward_costs();
    let beta = lat.backward_costs();
    let best = beta[0];
    let limit = best + f64::from(lattice_beam) + 1e-9 * (1.0 + best.abs());
    let keep_links: Vec<bool> = lat
        .links
        .iter()
        .map(|l| alpha[l.from] + l.cost() + beta[l.to] <= limit)
        .collect();
    let keep_finals: Vec<bool> = lat
        .finals
        .iter()
        .map(|&(n, f)| alpha[n] + f64::from(f) <= limit)
        .collect();
    lat.retain(&keep_links, &keep_finals)
}

/// One line per link, `from to olabel graph_cost acoustic_cost`, followed
/// by the node's final line `node final_cost` when it is an end node. Nodes
/// appear in topological order, starting with the start node.
pub fn write_lattice_text(lat: &Lattice) -> alloc::string::String {
    let mut out = alloc::string::String::new();
    let mut finals = lat.finals.iter().peekable();
    let mut links = lat.links.iter().peekable();
    for node in 0..lat.nodes.len() {
        while let Some(l) = links.next_if(|l| l.from == node) {
            let _ = writeln!(
                out,
                "{} {} {} {} {}",
                l.from,
                l.to,
                l.olabel,
                fmt_f32(l.graph_cost),
                fmt_f32(l.acoustic_cost)
            );
        }
        if let Some(&(_, f)) = finals.next_if(|f| f.0 == node) {
            let _ = writeln!(out, "{node} {}", fmt_f32(f));
        }
    }
    out
}
