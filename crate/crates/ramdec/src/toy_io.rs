//! Writes a generated toy task to disk.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ramdec_core::toy::{generate, ToySpec, ToyTask};

use crate::ark::{self, Mode};
use crate::formats::transcript_line;
use crate::{Error, Result};

pub const GRAPH_FILE: &str = "graph.txt";
pub const WORDS_FILE: &str = "words.txt";
pub const FEATS_FILE: &str = "feats.ark";
pub const ALI_FILE: &str = "ali.ark";
pub const REF_FILE: &str = "ref.txt";
pub const MANIFEST_FILE: &str = "manifest.txt";

fn write(path: PathBuf, contents: &str) -> Result<()> {
    fs::write(&path, contents).map_err(Error::io(path))
}

fn manifest(spec: &ToySpec) -> String {
    let mut m = String::new();
    for f in [GRAPH_FILE, WORDS_FILE, FEATS_FILE, ALI_FILE, REF_FILE] {
        let _ = writeln!(m, "file {f}");
    }
    let ToySpec {
        seed,
        num_words,
        num_pdfs,
        feature_dim,
        utterances,
        frames_per_word,
        min_words_per_utterance,
        max_words_per_utterance,
        class_mean_separation,
        noise_stddev,
    } = spec;
    let _ = write!(
        m,
        "seed {seed}\nnum_words {num_words}\nnum_pdfs {num_pdfs}\nfeature_dim {feature_dim}\n\
         utterances {utterances}\nframes_per_word {frames_per_word}\n\
         words_per_utterance {min_words_per_utterance}-{max_words_per_utterance}\n\
         class_mean_separation {class_mean_separation:?}\nnoise_stddev {noise_stddev:?}\n"
    );
    m
}

/// Writes the task files into `dir` (created if needed) and returns the
/// manifest text.
pub fn write_toy(task: &ToyTask, dir: &Path) -> Result<String> {
    fs::create_dir_all(dir).map_err(Error::io(dir))?;
    write(dir.join(GRAPH_FILE), &task.graph.to_text())?;
    write(dir.join(WORDS_FILE), &task.words.to_text())?;
    ark::write_archive_file(&dir.join(FEATS_FILE), &task.feats, Mode::Binary)?;
    ark::write_archive_file(&dir.join(ALI_FILE), &task.alignments, Mode::Binary)?;
    let refs: String = task.reference_lines.iter().map(|(k, w)| transcript_line(k.as_str(), w)).collect();
    write(dir.join(REF_FILE), &refs)?;
    let manifest = manifest(&task.spec);
    write(dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

pub fn generate_toy(spec: &ToySpec, dir: &Path) -> Result<ToyTask> {
    let task = generate(spec)?;
    write_toy(&task, dir)?;
    Ok(task)
}
