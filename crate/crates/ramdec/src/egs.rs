//! Training-example directories: `shard_<i>/feats.ark` holds spliced inputs
//! and `shard_<i>/labels.ark` the matching pdf labels, one entry per
//! utterance in both.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ramdec_core::dataset::{build_examples, shard, ExampleSet, ShardPlan};
use ramdec_core::splice::SplicingConfig;
use ramdec_core::{AlignmentVector, FeatureMatrix, Matrix};

use crate::ark::{self, Mode};
use crate::{Error, Result};

pub const FEATS_FILE: &str = "feats.ark";
pub const LABELS_FILE: &str = "labels.ark";

pub fn shard_dir(out: &Path, i: usize) -> PathBuf {
    out.join(format!("shard_{i}"))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EgsSummary {
    pub utterances: usize,
    pub skipped: usize,
    pub input_dim: usize,
    pub plan: ShardPlan,
}

struct ShardWriter {
    feats: BufWriter<File>,
    labels: BufWriter<File>,
}

fn create(path: PathBuf) -> Result<BufWriter<File>> {
    File::create(&path).map(BufWriter::new).map_err(Error::io(path))
}

/// Splices every utterance that has an alignment and distributes them over
/// `num_shards` shard directories under `out`.
///
/// Features are streamed twice (once to size the shards, once to write them);
/// only the alignments are held in memory. Utterances without an alignment
/// are skipped with a warning.
pub fn make_egs(
    feats_path: &Path,
    ali_path: &Path,
    cfg: SplicingConfig,
    num_pdfs: usize,
    num_shards: usize,
    out: &Path,
) -> Result<EgsSummary> {
    let mut alis: HashMap<String, AlignmentVector> = HashMap::new();
    for ali in ark::open::<AlignmentVector>(ali_path)? {
        let ali = ali?;
        alis.insert(ali.key.as_str().to_owned(), ali);
    }

    let mut counts = Vec::new();
    let mut skipped = 0;
    let mut feat_dim = None;
    for fm in ark::open::<FeatureMatrix>(feats_path)? {
        let fm = fm?;
        if !alis.contains_key(fm.key.as_str()) {
            log::warn!("no alignment for {}; skipping", fm.key);
            skipped += 1;
            continue;
        }
        match feat_dim {
            None => feat_dim = Some(fm.dim()),
            Some(d) if d != fm.dim() => {
                return Err(Error::Other(format!("{}: feature dim {} differs from {d}", fm.key, fm.dim())))
            }
            Some(_) => {}
        }
        counts.push(fm.num_frames());
    }
    let plan = shard(&counts, num_shards)?;

    let mut writers = Vec::with_capacity(num_shards);
    for i in 0..num_shards {
        let dir = shard_dir(out, i);
        fs::create_dir_all(&dir).map_err(Error::io(&dir))?;
        writers.push(ShardWriter { feats: create(dir.join(FEATS_FILE))?, labels: create(dir.join(LABELS_FILE))? });
    }

    let mut next = 0;
    for fm in ark::open::<FeatureMatrix>(feats_path)? {
        let fm = fm?;
        let Some(ali) = alis.get(fm.key.as_str()) else { continue };
        let examples = build_examples(&fm, ali, cfg, num_pdfs)?;
        let w = &mut writers[plan.assignment[next]];
        next += 1;
        ark::write_entry(&mut w.feats, &FeatureMatrix::new(fm.key.clone(), examples.inputs), Mode::Binary)?;
        ark::write_entry(&mut w.labels, ali, Mode::Binary)?;
    }
    for mut w in writers {
        w.feats.flush()?;
        w.labels.flush()?;
    }
    Ok(EgsSummary {
        utterances: counts.len(),
        skipped,
        input_dim: cfg.output_dim(feat_dim.unwrap_or(0)),
        plan,
    })
}

/// Loads shard directories `shard_0`, `shard_1`, ... until the first gap.
pub fn read_egs(dir: &Path) -> Result<Vec<ExampleSet>> {
    let mut shards = Vec::new();
    loop {
        let sd = shard_dir(dir, shards.len());
        if !sd.is_dir() {
            break;
        }
        shards.push(read_shard(&sd)?);
    }
    if shards.is_empty() {
        return Err(Error::Other(format!("{}: no shard_0 directory", dir.display())));
    }
    Ok(shards)
}

fn read_shard(dir: &Path) -> Result<ExampleSet> {
    let feats = ark::open::<FeatureMatrix>(&dir.join(FEATS_FILE))?;
    let mut labels = ark::open::<AlignmentVector>(&dir.join(LABELS_FILE))?;
    let mut inputs: Option<Matrix> = None;
    let mut all_labels = Vec::new();
    for fm in feats {
        let fm = fm?;
        let ali = labels
            .next()
            .transpose()?
            .ok_or_else(|| Error::Other(format!("{}: no labels for {}", dir.display(), fm.key)))?;
        if ali.key != fm.key || ali.pdf_ids.len() != fm.num_frames() {
            return Err(Error::Other(format!("{}: labels do not match features at {}", dir.display(), fm.key)));
        }
        all_labels.extend(ali.pdf_ids.iter().map(|&l| l as u32));
        match &mut inputs {
            None => inputs = Some(fm.data),
            Some(m) => m.append_rows(&fm.data)?,
        }
    }
    if let Some(extra) = labels.next().transpose()? {
        return Err(Error::Other(format!("{}: labels for {} have no features", dir.display(), extra.key)));
    }
    Ok(ExampleSet::new(inputs.unwrap_or_else(|| Matrix::zeros(0, 0)), all_labels)?)
}
