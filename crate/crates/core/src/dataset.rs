//! Turning features and alignments into labeled training examples,
//! sharding utterances, and estimating pdf priors.

use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use crate::splice::{splice, SplicingConfig};
use crate::{AlignmentVector, Error, FeatureMatrix, Matrix, Result};

/// One spliced input row and its pdf label.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub input: Vec<f32>,
    pub label: u32,
}

/// Spliced inputs and their labels, one row per example.
#[derive(Debug, Clone, PartialEq)]
pub struct ExampleSet {
    pub inputs: Matrix,
    pub labels: Vec<u32>,
}

impl ExampleSet {
    pub fn new(inputs: Matrix, labels: Vec<u32>) -> Result<Self> {
        if inputs.rows() != labels.len() {
            return Err(Error::DimMismatch { expected: inputs.rows(), actual: labels.len() });
        }
        Ok(Self { inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.cols()
    }

    pub fn iter(&self) -> impl Iterator<Item = TrainingExample> + '_ {
        self.inputs
            .iter_rows()
            .zip(&self.labels)
            .map(|(row, &label)| TrainingExample { input: row.to_vec(), label })
    }
}

/// Splices `feats` and pairs each frame with its alignment label.
pub fn build_examples(
    feats: &FeatureMatrix,
    ali: &AlignmentVector,
    cfg: SplicingConfig,
    num_pdfs: usize,
) -> Result<ExampleSet> {
    if feats.key != ali.key {
        return Err(Error::KeyMismatch {
            key: feats.key.to_string(),
            other: ali.key.to_string(),
        });
    }
    if feats.num_frames() != ali.pdf_ids.len() {
        return Err(Error::FrameCountMismatch {
            key: feats.key.to_string(),
            feats: feats.num_frames(),
            labels: ali.pdf_ids.len(),
        });
    }
    ali.check_range(num_pdfs)?;
    let inputs = splice(&feats.data, cfg);
    let labels = ali.pdf_ids.iter().map(|&l| l as u32).collect();
    ExampleSet::new(inputs, labels)
}

/// Assignment of whole utterances to `num_shards` shards.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShardPlan {
    pub num_shards: usize,
    /// Shard index per input utterance, in input order.
    pub assignment: Vec<usize>,
    /// Total frames per shard.
    pub frames: Vec<usize>,
}

impl ShardPlan {
    /// Input positions assigned to `shard`, in input order.
    pub fn members(&self, shard: usize) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter_map(|(i, &s)| (s == shard).then_some(i))
            .collect()
    }
}

/// Greedy balancing: each utterance, in input order, goes to the shard with
/// the fewest frames so far (lowest index on ties). Shards may stay empty
/// when there are fewer utterances than shards.
pub fn shard(frame_counts: &[usize], num_shards: usize) -> Result<ShardPlan> {
    if num_shards == 0 {
        return Err(Error::Config("number of shards must be at least 1".into()));
    }
    let mut frames = vec![0usize; num_shards];
    let mut assignment = Vec::with_capacity(frame_counts.len());
    for &count in frame_counts {
        let (lightest, _) = frames
            .iter()
            .enumerate()
            .min_by_key(|&(i, &f)| (f, i))
            .expect("at least one shard");
        frames[lightest] += count;
        assignment.push(lightest);
    }
    Ok(ShardPlan { num_shards, assignment, frames })
}

pub const DEFAULT_PRIOR_FLOOR: f64 = 1e-8;

/// Estimated pdf prior distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorVector {
    probs: Vec<f64>,
}

impl PriorVector {
    /// Wraps an existing distribution; entries must be positive and sum to 1.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Config("prior vector is empty".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p <= 0.0) {
            return Err(Error::Config("priors must be finite and positive".into()));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::Config(alloc::format!("priors sum to {sum}, not 1")));
        }
        Ok(Self { probs })
    }

    pub fn num_pdfs(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

/// Relative label frequencies over all alignments, floored and renormalized.
///
/// Entries that fall under `floor` are pinned to it and the remaining mass is
/// rescaled until no entry is below the floor, so the result is a
/// distribution with every element `>= floor`.
pub fn compute_priors<'a, I>(alis: I, num_pdfs: usize, floor: f64) -> Result<PriorVector>
where
    I: IntoIterator<Item = &'a AlignmentVector>,
{
    if num_pdfs == 0 {
        return Err(Error::Config("num_pdfs must be positive".into()));
    }
    if !(0.0..=1.0 / num_pdfs as f64).contains(&floor) {
        return Err(Error::Config(alloc::format!(
            "prior floor {floor} must lie in [0, 1/{num_pdfs}]"
        )));
    }
    let mut counts = vec![0u64; num_pdfs];
    for ali in alis {
        ali.check_range(num_pdfs)?;
        for &l in &ali.pdf_ids {
            counts[l as usize] += 1;
        }
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::NoFrames);
    }
    let raw: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();

    let mut pinned = vec![false; num_pdfs];
    let mut probs = raw.clone();
    loop {
        let free_mass: f64 = raw.iter().zip(&pinned).filter(|(_, &p)| !p).map(|(r, _)| r).sum();
        let n_pinned = pinned.iter().filter(|&&p| p).count();
        let target = 1.0 - n_pinned as f64 * floor;
        let scale = if free_mass > 0.0 { target / free_mass } else { 0.0 };
        let mut changed = false;
        for k in 0..num_pdfs {
            if pinned[k] {
                probs[k] = floor;
            } else {
                probs[k] = raw[k] * scale;
                if probs[k] < floor {
                    pinned[k] = true;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    // Pinning can only happen to floor-sized mass, so the loop ends with a
    // distribution; absorb rounding into the largest entry.
    let sum: f64 = probs.iter().sum();
    let argmax = (0..num_pdfs)
        .max_by(|&a, &b| probs[a].total_cmp(&probs[b]))
        .unwrap_or(0);
    probs[argmax] += 1.0 - sum;
    Ok(PriorVector { probs })
}
