use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::{Error, Matrix, Result};

/// Utterance identifier: non-empty, no space, NUL or newline.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UtteranceKey(String);

impl UtteranceKey {
    pub fn new(text: impl Into<String>) -> Result<Self> {
        let text = text.into();
        if Self::is_valid(text.as_bytes()) {
            Ok(Self(text))
        } else {
            Err(Error::InvalidKey(text))
        }
    }

    pub fn is_valid(bytes: &[u8]) -> bool {
        !bytes.is_empty() && !bytes.iter().any(|b| matches!(b, b' ' | b'\0' | b'\n'))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for UtteranceKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl core::str::FromStr for UtteranceKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::new(s.to_string())
    }
}

/// One utterance's feature frames (rows) keyed by utterance id.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub key: UtteranceKey,
    pub data: Matrix,
}

impl FeatureMatrix {
    pub fn new(key: UtteranceKey, data: Matrix) -> Self {
        Self { key, data }
    }

    pub fn num_frames(&self) -> usize {
        self.data.rows()
    }

    pub fn dim(&self) -> usize {
        self.data.cols()
    }
}

/// Per-frame pdf indices for one utterance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignmentVector {
    pub key: UtteranceKey,
    pub pdf_ids: Vec<i32>,
}

impl AlignmentVector {
    pub fn new(key: UtteranceKey, pdf_ids: Vec<i32>) -> Self {
        Self { key, pdf_ids }
    }

    /// Checks every label lies in `[0, num_pdfs)`.
    pub fn check_range(&self, num_pdfs: usize) -> Result<()> {
        for (frame, &label) in self.pdf_ids.iter().enumerate() {
            if label < 0 || label as usize >= num_pdfs {
                return Err(Error::LabelOutOfRange {
                    key: self.key.to_string(),
                    frame,
                    label,
                    num_pdfs,
                });
            }
        }
        Ok(())
    }
}
