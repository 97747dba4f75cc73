//! Seeded miniature task: a looped word graph, Gaussian class-conditional
//! features and their true alignments.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::{Arc, DecodingGraph, SymbolTable, EPSILON, EPSILON_SYMBOL};
use crate::wer::TranscriptSet;
use crate::{AlignmentVector, Error, FeatureMatrix, Matrix, Result, UtteranceKey};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToySpec {
    pub seed: u64,
    pub num_words: usize,
    pub num_pdfs: usize,
    pub feature_dim: usize,
    pub utterances: usize,
    pub frames_per_word: usize,
    pub min_words_per_utterance: usize,
    pub max_words_per_utterance: usize,
    pub class_mean_separation: f64,
    pub noise_stddev: f64,
}

impl Default for ToySpec {
    fn default() -> Self {
        Self {
            seed: 0,
            num_words: 3,
            num_pdfs: 6,
            feature_dim: 2,
            utterances: 20,
            frames_per_word: 5,
            min_words_per_utterance: 2,
            max_words_per_utterance: 5,
            class_mean_separation: 4.0,
            noise_stddev: 0.5,
        }
    }
}

impl ToySpec {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.num_words,
            self.num_pdfs,
            self.feature_dim,
            self.utterances,
            self.frames_per_word,
            self.min_words_per_utterance,
        ];
        if positive.contains(&0) || !(self.class_mean_separation > 0.0 && self.noise_stddev > 0.0) {
            return Err(Error::Config("toy spec fields must be positive".into()));
        }
        if self.class_mean_separation / self.noise_stddev < 4.0 {
            return Err(Error::Config("separation / noise must be at least 4".into()));
        }
        if self.num_pdfs < self.num_words {
            return Err(Error::Config("need at least one pdf per word".into()));
        }
        if self.max_words_per_utterance < self.min_words_per_utterance {
            return Err(Error::Config("max words per utterance below min".into()));
        }
        let widest = self.num_pdfs.div_ceil(self.num_words);
        if self.frames_per_word < widest {
            return Err(Error::Config(format!(
                "frames per word ({}) below pdfs per word ({widest})",
                self.frames_per_word
            )));
        }
        Ok(())
    }

    /// Pdfs making up word `w` (0-based), in left-to-right order.
    pub fn word_pdfs(&self, w: usize) -> core::ops::Range<usize> {
        (w * self.num_pdfs / self.num_words)..((w + 1) * self.num_pdfs / self.num_words)
    }

    /// Mean of pdf `k`'s feature distribution.
    pub fn class_mean(&self, k: usize) -> Vec<f64> {
        let mut mean = alloc::vec![0.0; self.feature_dim];
        let kk = self.num_pdfs as f64;
        if self.num_pdfs == 1 {
            return mean;
        }
        if self.feature_dim == 1 {
            mean[0] = (k as f64 - (kk - 1.0) / 2.0) * self.class_mean_separation;
        } else {
            // Regular polygon whose adjacent vertices are `separation` apart.
            let radius = self.class_mean_separation / (2.0 * libm::sin(PI / kk));
            let angle = 2.0 * PI * k as f64 / kk;
            mean[0] = radius * libm::cos(angle);
            mean[1] = radius * libm::sin(angle);
        }
        mean
    }
}

pub const WORD_NAMES: [&str; 10] =
    ["alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel", "india", "juliett"];

/// Weight of every arc in the toy graph.
pub const TOY_ARC_WEIGHT: f32 = 0.0;

pub fn word_name(w: usize) -> String {
    WORD_NAMES.get(w).map_or_else(|| format!("word{w}"), |s| String::from(*s))
}

#[derive(Debug, Clone)]
pub struct ToyTask {
    pub spec: ToySpec,
    pub graph: DecodingGraph,
    pub words: SymbolTable,
    pub feats: Vec<FeatureMatrix>,
    pub alignments: Vec<AlignmentVector>,
    pub references: TranscriptSet,
    /// Reference word sequences in utterance order.
    pub reference_lines: Vec<(UtteranceKey, Vec<String>)>,
}

/// Word graph: state 0 is start and final; each word is a left-to-right chain
/// of its pdfs with self-loops, entered from 0 (emitting the word on the first
/// arc) and left by an epsilon arc back to 0. Every arc weighs
/// [`TOY_ARC_WEIGHT`], so the acoustics alone pick the words.
pub fn build_graph(spec: &ToySpec) -> Result<DecodingGraph> {
    let loop_cost = TOY_ARC_WEIGHT;
    let entry_cost = TOY_ARC_WEIGHT;
    let mut arcs = Vec::new();
    let mut next_state = 1u32;
    for w in 0..spec.num_words {
        let pdfs: Vec<usize> = spec.word_pdfs(w).collect();
        let first = next_state;
        arcs.push(Arc::new(0, first, pdfs[0] as u32 + 1, w as u32 + 1, entry_cost));
        for (j, &pdf) in pdfs.iter().enumerate() {
            let s = first + j as u32;
            arcs.push(Arc::new(s, s, pdf as u32 + 1, EPSILON, loop_cost));
            if let Some(&next_pdf) = pdfs.get(j + 1) {
                arcs.push(Arc::new(s, s + 1, next_pdf as u32 + 1, EPSILON, loop_cost));
            } else {
                arcs.push(Arc::new(s, 0, EPSILON, EPSILON, loop_cost));
            }
        }
        next_state += pdfs.len() as u32;
    }
    DecodingGraph::new(next_state as usize, 0, arcs, [(0, 0.0)])
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; u1 in (0, 1].
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * PI * u2)
}

pub fn generate(spec: &ToySpec) -> Result<ToyTask> {
    spec.validate()?;
    let graph = build_graph(spec)?;
    let words = SymbolTable::from_pairs(
        core::iter::once((String::from(EPSILON_SYMBOL), 0))
            .chain((0..spec.num_words).map(|w| (word_name(w), w as u32 + 1))),
    )?;
    let means: Vec<Vec<f64>> = (0..spec.num_pdfs).map(|k| spec.class_mean(k)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut feats = Vec::with_capacity(spec.utterances);
    let mut alignments = Vec::with_capacity(spec.utterances);
    let mut references = TranscriptSet::new();
    let mut reference_lines = Vec::with_capacity(spec.utterances);
    for u in 0..spec.utterances {
        let key = UtteranceKey::new(format!("toy{u:04}"))?;
        let n_words = rng.random_range(spec.min_words_per_utterance..=spec.max_words_per_utterance);
        let sequence: Vec<usize> = (0..n_words).map(|_| rng.random_range(0..spec.num_words)).collect();

        let mut labels = Vec::with_capacity(n_words * spec.frames_per_word);
        for &w in &sequence {
            let pdfs = spec.word_pdfs(w);
            let per = spec.frames_per_word / pdfs.len();
            let extra = spec.frames_per_word % pdfs.len();
            for (j, pdf) in pdfs.enumerate() {
                let n = per + usize::from(j < extra);
                labels.extend(core::iter::repeat_n(pdf as i32, n));
            }
        }
        let mut data = Vec::with_capacity(labels.len() * spec.feature_dim);
        for &pdf in &labels {
            for &m in &means[pdf as usize] {
                data.push((m + spec.noise_stddev * gaussian(&mut rng)) as f32);
            }
        }
        let matrix = Matrix::new(labels.len(), spec.feature_dim, data)?;
        let text: Vec<String> = sequence.iter().map(|&w| word_name(w)).collect();
        references.insert(key.as_str(), text.clone())?;
        reference_lines.push((key.clone(), text));
        feats.push(FeatureMatrix::new(key.clone(), matrix));
        alignments.push(AlignmentVector::new(key, labels));
    }
    Ok(ToyTask { spec: *spec, graph, words, feats, alignments, references, reference_lines })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_in_range() {
        let spec = ToySpec::default();
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a.feats, b.feats);
        assert_eq!(a.alignments, b.alignments);
        for ali in &a.alignments {
            ali.check_range(spec.num_pdfs).unwrap();
        }
    }

    #[test]
    fn every_pdf_appears() {
        let task = generate(&ToySpec::default()).unwrap();
        let mut seen = [false; 6];
        for ali in &task.alignments {
            for &l in &ali.pdf_ids {
                seen[l as usize] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn means_are_separated() {
        let spec = ToySpec::default();
        for a in 0..spec.num_pdfs {
            for b in a + 1..spec.num_pdfs {
                let (ma, mb) = (spec.class_mean(a), spec.class_mean(b));
                let d2: f64 = ma.iter().zip(&mb).map(|(x, y)| (x - y) * (x - y)).sum();
                assert!(libm::sqrt(d2) >= spec.class_mean_separation - 1e-9);
            }
        }
    }

    #[test]
    fn rejects_unlearnable_spec() {
        let spec = ToySpec { noise_stddev: 2.0, ..ToySpec::default() };
        assert!(generate(&spec).is_err());
    }
}
