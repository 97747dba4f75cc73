mod support;

use std::io::{BufReader, Read};

use ramdec::ark::{self, IntVectorReader, MatrixReader, Mode};
use ramdec::Error;
use ramdec_core::FeatureMatrix;

use support::archives::*;

#[test]
fn golden_matrix_fixture() {
    let mut hand = hand_matrix("utt1", 1, 2, &[1.0, 2.0]);
    hand.extend(hand_matrix("utt2", 2, 3, &[0.5, -1.25, 3.0e-5, 1.0e10, -0.0, 7.0]));
    assert_eq!(hand, GOLDEN_MATRIX);

    let read = ark::read_matrix_archive(GOLDEN_MATRIX).unwrap();
    let expected = golden_matrices();
    assert_eq!(read.len(), expected.len());
    for (r, e) in read.iter().zip(&expected) {
        assert_eq!(r.key, e.key);
        assert_eq!((r.num_frames(), r.dim()), (e.num_frames(), e.dim()));
        let bits = |m: &FeatureMatrix| m.data.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(r), bits(e));
    }

    let mut written = Vec::new();
    ark::write_matrix_archive(&mut written, &expected, Mode::Binary).unwrap();
    assert_eq!(written, GOLDEN_MATRIX);
}

#[test]
fn golden_int_vector_fixture() {
    let hand: Vec<u8> = golden_vectors().iter().flat_map(|v| hand_vector(v.key.as_str(), &v.pdf_ids)).collect();
    assert_eq!(hand, GOLDEN_IVEC);
    assert_eq!(ark::read_int_vector_archive(GOLDEN_IVEC).unwrap(), golden_vectors());
    let mut written = Vec::new();
    ark::write_int_vector_archive(&mut written, &golden_vectors(), Mode::Binary).unwrap();
    assert_eq!(written, GOLDEN_IVEC);
}

fn assert_close(a: &[FeatureMatrix], b: &[FeatureMatrix], rel: f32) {
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        assert_eq!(x.key, y.key);
        assert_eq!((x.num_frames(), x.dim()), (y.num_frames(), y.dim()));
        for (&u, &v) in x.data.as_slice().iter().zip(y.data.as_slice()) {
            assert!((u - v).abs() <= rel * u.abs().max(v.abs()), "{u} vs {v}");
        }
    }
}

#[test]
fn random_matrix_roundtrip() {
    let entries = random_matrices(11, 100);
    let mut bin = Vec::new();
    ark::write_matrix_archive(&mut bin, &entries, Mode::Binary).unwrap();
    let back = ark::read_matrix_archive(&bin[..]).unwrap();
    assert_close(&entries, &back, 0.0);
    let bits = |m: &[FeatureMatrix]| -> Vec<u32> {
        m.iter().flat_map(|e| e.data.as_slice().iter().map(|v| v.to_bits())).collect()
    };
    assert_eq!(bits(&entries), bits(&back));

    let mut text = Vec::new();
    ark::write_matrix_archive(&mut text, &entries, Mode::Text).unwrap();
    assert_close(&entries, &ark::read_matrix_archive(&text[..]).unwrap(), 1e-6);
}

#[test]
fn random_vector_roundtrip() {
    let entries = random_vectors(12, 100);
    for mode in [Mode::Binary, Mode::Text] {
        let mut out = Vec::new();
        ark::write_int_vector_archive(&mut out, &entries, mode).unwrap();
        assert_eq!(ark::read_int_vector_archive(&out[..]).unwrap(), entries);
    }
}

#[test]
fn errors_name_offset_and_key() {
    let mut bytes = hand_matrix("good", 1, 1, &[1.0]);
    let start = bytes.len();
    let mut bad = hand_matrix("bad", 2, 2, &[1.0, 2.0, 3.0, 4.0]);
    bad.truncate(bad.len() - 3);
    bytes.extend(bad);
    let mut reader = MatrixReader::new(&bytes[..]);
    assert!(reader.next().unwrap().is_ok());
    match reader.next().unwrap() {
        Err(Error::Archive { offset, key, .. }) => {
            assert_eq!(key.as_deref(), Some("bad"));
            assert!(offset as usize > start && offset as usize <= bytes.len());
        }
        other => panic!("{other:?}"),
    }
    assert!(reader.next().is_none());
}

#[test]
fn overflowing_dimensions_rejected() {
    let bytes = hand_matrix("huge", i32::MAX, i32::MAX, &[]);
    assert!(matches!(ark::read_matrix_archive(&bytes[..]), Err(Error::Archive { .. })));
}

#[test]
fn binary_detection_is_per_entry() {
    let mut bytes = b"t1 5 6\n".to_vec();
    bytes.extend(hand_vector("b1", &[1]));
    bytes.extend(b"t2 \n");
    let v = ark::read_int_vector_archive(&bytes[..]).unwrap();
    let keys: Vec<_> = v.iter().map(|a| a.key.as_str()).collect();
    assert_eq!(keys, ["t1", "b1", "t2"]);
    assert!(v[2].pdf_ids.is_empty());
}

#[test]
fn duplicate_keys_are_kept() {
    let mut bytes = hand_vector("same", &[1]);
    bytes.extend(hand_vector("same", &[2]));
    let v = ark::read_int_vector_archive(&bytes[..]).unwrap();
    assert_eq!(v.len(), 2);
}

/// Counts how many bytes the reader has pulled from the source.
struct Counting<R> {
    inner: R,
    read: std::rc::Rc<std::cell::Cell<usize>>,
}

impl<R: Read> Read for Counting<R> {
    fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.read.set(self.read.get() + n);
        Ok(n)
    }
}

#[test]
fn reading_is_incremental() {
    let entries = random_vectors(3, 2000);
    let mut bytes = Vec::new();
    ark::write_int_vector_archive(&mut bytes, &entries, Mode::Binary).unwrap();
    let read = std::rc::Rc::new(std::cell::Cell::new(0));
    let src = Counting { inner: &bytes[..], read: read.clone() };
    let mut reader = IntVectorReader::new(BufReader::with_capacity(256, src));
    assert_eq!(reader.next().unwrap().unwrap(), entries[0]);
    assert!(read.get() < 1024, "pulled {} of {} bytes for one entry", read.get(), bytes.len());
}
