//! Reference implementations used only by tests. Nothing here shares code
//! with the algorithms it checks: paths are enumerated exhaustively, edit
//! distance is computed by plain recursion and gradients by central
//! differences.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ramdec_core::am::LoglikeMatrix;
use ramdec_core::decoder::Lattice;
use ramdec_core::graph::{Arc, DecodingGraph, Label, StateId};
use ramdec_core::mlp::{Layer, MlpModel};
use ramdec_core::{Matrix, UtteranceKey};

/// A random decoding problem small enough to enumerate.
#[derive(Debug, Clone)]
pub struct Instance {
    pub graph: DecodingGraph,
    pub loglikes: LoglikeMatrix,
    pub num_pdfs: usize,
}

/// At most 8 states, 12 arcs, 4 pdfs and 6 frames. Graph weights lie in
/// `[0, 3)` and loglikes in `[-4, 0]`, so every path cost is non-negative.
/// Roughly one arc in five is epsilon; no epsilon self-loops.
pub fn random_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let num_states = rng.random_range(1..=8usize);
    let num_pdfs = rng.random_range(1..=4usize);
    let num_frames = rng.random_range(0..=6usize);
    let num_arcs = rng.random_range(1..=12usize);
    let mut arcs = Vec::with_capacity(num_arcs);
    for _ in 0..num_arcs {
        let src = rng.random_range(0..num_states) as StateId;
        let dst = rng.random_range(0..num_states) as StateId;
        let eps = src != dst && rng.random_bool(0.2);
        let ilabel = if eps { 0 } else { rng.random_range(1..=num_pdfs) as Label };
        let olabel = if rng.random_bool(0.5) { 0 } else { rng.random_range(1..=5) };
        let weight = (rng.random_range(0..300) as f32) / 100.0;
        arcs.push(Arc::new(src, dst, ilabel, olabel, weight));
    }
    let mut finals = Vec::new();
    for s in 0..num_states {
        if rng.random_bool(0.4) {
            finals.push((s as StateId, (rng.random_range(0..200) as f32) / 100.0));
        }
    }
    let graph = DecodingGraph::new(num_states, 0, arcs, finals).expect("valid graph");
    let data = (0..num_frames * num_pdfs)
        .map(|_| -(rng.random_range(0..400) as f32) / 100.0)
        .collect();
    let loglikes = LoglikeMatrix::new(Matrix::new(num_frames, num_pdfs, data).unwrap()).unwrap();
    Instance { graph, loglikes, num_pdfs }
}

/// Cheapest and second-cheapest complete path costs over every path from the
/// start that consumes one emitting arc per frame and ends in a final state.
///
/// Paths are enumerated depth-first. Within one frame an epsilon run never
/// revisits a state (a revisit only adds non-negative cost), and branches
/// whose partial cost already exceeds the second-best total are cut; both
/// rely on non-negative arc and acoustic costs, which is asserted.
pub fn brute_force_best_two(g: &DecodingGraph, ll: &LoglikeMatrix, acoustic_scale: f32) -> [Option<f64>; 2] {
    assert!(g.arcs().iter().all(|a| a.weight >= 0.0));
    assert!(ll.matrix().as_slice().iter().all(|&v| v <= 0.0) && acoustic_scale > 0.0);
    let mut best = [f64::INFINITY; 2];
    search(g, ll, acoustic_scale, g.start(), 0, 1u64 << g.start(), 0.0, &mut best);
    best.map(|c| c.is_finite().then_some(c))
}

pub fn brute_force_best(g: &DecodingGraph, ll: &LoglikeMatrix, acoustic_scale: f32) -> Option<f64> {
    brute_force_best_two(g, ll, acoustic_scale)[0]
}

#[allow(clippy::too_many_arguments)]
fn search(
    g: &DecodingGraph,
    ll: &LoglikeMatrix,
    scale: f32,
    state: StateId,
    frame: usize,
    run_visited: u64,
    cost: f64,
    best: &mut [f64; 2],
) {
    if cost > best[1] {
        return;
    }
    if frame == ll.num_frames() {
        if let Some(f) = g.final_cost(state) {
            let total = cost + f64::from(f);
            if total < best[0] {
                best[1] = best[0];
                best[0] = total;
            } else if total < best[1] {
                best[1] = total;
            }
        }
    }
    for arc in g.arcs().iter().filter(|a| a.src == state) {
        if arc.ilabel == 0 {
            if run_visited & (1 << arc.dst) != 0 {
                continue;
            }
            let visited = run_visited | (1 << arc.dst);
            search(g, ll, scale, arc.dst, frame, visited, cost + f64::from(arc.weight), best);
        } else if frame < ll.num_frames() {
            let ac = -scale * ll.get(frame, arc.ilabel as usize - 1);
            let step = f64::from(arc.weight) + f64::from(ac);
            search(g, ll, scale, arc.dst, frame + 1, 1 << arc.dst, cost + step, best);
        }
    }
}

/// Whether some label-consistent path over `num_frames` frames ends in a
/// final state and outputs exactly `words`.
pub fn graph_accepts(g: &DecodingGraph, num_frames: usize, words: &[Label]) -> bool {
    let mut seen = BTreeSet::new();
    let mut stack = vec![(g.start(), 0usize, 0usize)];
    while let Some(item @ (state, frame, pos)) = stack.pop() {
        if !seen.insert(item) {
            continue;
        }
        if frame == num_frames && pos == words.len() && g.final_cost(state).is_some() {
            return true;
        }
        for a in g.arcs_from(state) {
            let next_pos = if a.olabel == 0 {
                pos
            } else if words.get(pos) == Some(&a.olabel) {
                pos + 1
            } else {
                continue;
            };
            let next_frame = frame + usize::from(a.ilabel != 0);
            if next_frame <= num_frames {
                stack.push((a.dst, next_frame, next_pos));
            }
        }
    }
    false
}

/// A start-to-end path through a lattice: link indices, words and cost.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticePath {
    pub links: Vec<usize>,
    pub words: Vec<Label>,
    pub cost: f64,
}

/// All start-to-end paths of a lattice (node 0 is the start).
pub fn enumerate_lattice_paths(lat: &Lattice) -> Vec<LatticePath> {
    enumerate_lattice_paths_within(lat, f64::INFINITY)
}

/// Start-to-end paths costing at most `limit`. Partial paths over the limit
/// are abandoned, which requires non-negative link costs (asserted).
pub fn enumerate_lattice_paths_within(lat: &Lattice, limit: f64) -> Vec<LatticePath> {
    let mut out = Vec::new();
    if lat.nodes().is_empty() {
        return out;
    }
    assert!(lat.links().iter().all(|l| l.cost() >= 0.0));
    let mut stack = Vec::new();
    lattice_walk(lat, 0, 0.0, limit, &mut stack, &mut out);
    out
}

fn lattice_walk(lat: &Lattice, node: usize, cost: f64, limit: f64, stack: &mut Vec<usize>, out: &mut Vec<LatticePath>) {
    if cost > limit {
        return;
    }
    for &(n, f) in lat.finals() {
        if n == node && cost + f64::from(f) <= limit {
            let words = stack
                .iter()
                .map(|&i| lat.links()[i].olabel)
                .filter(|&o| o != 0)
                .collect();
            out.push(LatticePath { links: stack.clone(), words, cost: cost + f64::from(f) });
        }
    }
    for (i, l) in lat.links().iter().enumerate().filter(|(_, l)| l.from == node) {
        stack.push(i);
        lattice_walk(lat, l.to, cost + l.cost(), limit, stack, out);
        stack.pop();
    }
}

/// Word sequences accepted by an acyclic text-format acceptor graph.
pub fn acceptor_word_sequences(g: &DecodingGraph) -> BTreeSet<Vec<Label>> {
    fn go(g: &DecodingGraph, s: StateId, words: &mut Vec<Label>, out: &mut BTreeSet<Vec<Label>>) {
        if g.final_cost(s).is_some() {
            out.insert(words.clone());
        }
        for a in g.arcs_from(s) {
            if a.olabel != 0 {
                words.push(a.olabel);
            }
            go(g, a.dst, words, out);
            if a.olabel != 0 {
                words.pop();
            }
        }
    }
    let mut out = BTreeSet::new();
    go(g, g.start(), &mut Vec::new(), &mut out);
    out
}

/// Plain recursive edit distance with unit costs.
pub fn naive_levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    match (a.split_last(), b.split_last()) {
        (None, _) => b.len(),
        (_, None) => a.len(),
        (Some((x, ra)), Some((y, rb))) => {
            let sub = naive_levenshtein(ra, rb) + usize::from(x != y);
            let del = naive_levenshtein(ra, b) + 1;
            let ins = naive_levenshtein(a, rb) + 1;
            sub.min(del).min(ins)
        }
    }
}

fn param_mut(m: &mut MlpModel<f64>, layer: usize, index: usize) -> &mut f64 {
    let layer = &mut m.layers_mut()[layer];
    let n = layer.weights.len();
    if index < n {
        &mut layer.weights[index]
    } else {
        &mut layer.bias[index - n]
    }
}

/// Central-difference gradient of the mean cross-entropy over a batch.
pub fn numeric_gradient(model: &MlpModel<f64>, batch: &[(Vec<f64>, usize)], step: f64) -> Vec<Layer<f64>> {
    let mean_loss = |m: &MlpModel<f64>| {
        batch.iter().map(|(x, y)| m.loss(x, *y).unwrap()).sum::<f64>() / batch.len() as f64
    };
    let mut probe = model.clone();
    let mut grads: Vec<Layer<f64>> = model.layers().to_vec();
    for (li, g) in grads.iter_mut().enumerate() {
        let n = g.weights.len();
        for pi in 0..n + g.bias.len() {
            let original = *param_mut(&mut probe, li, pi);
            *param_mut(&mut probe, li, pi) = original + step;
            let up = mean_loss(&probe);
            *param_mut(&mut probe, li, pi) = original - step;
            let down = mean_loss(&probe);
            *param_mut(&mut probe, li, pi) = original;
            let value = (up - down) / (2.0 * step);
            if pi < n {
                g.weights[pi] = value;
            } else {
                g.bias[pi - n] = value;
            }
        }
    }
    grads
}

pub fn key(s: &str) -> UtteranceKey {
    UtteranceKey::new(s).unwrap()
}
