use ramdec::model_io::{from_bytes, load_model, save_model, to_bytes, MAGIC};
use ramdec::Error;
use ramdec_core::mlp::{init_model, Activation, Layer, MlpModel};

fn model() -> MlpModel {
    init_model(5, &[4, 3, 2], Activation::Tanh, 9).unwrap()
}

#[test]
fn file_roundtrip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.bin");
    let m = model();
    save_model(&m, &path).unwrap();
    assert_eq!(load_model(&path).unwrap(), m);
}

#[test]
fn layout_is_hand_checkable() {
    let layer = Layer { in_dim: 2, out_dim: 1, activation: Activation::Softmax, weights: vec![1.5, -2.0], bias: vec![0.25] };
    let m = MlpModel::new(2, vec![layer]).unwrap();
    let mut expected = b"RAMDEC01".to_vec();
    expected.extend(1u32.to_le_bytes());
    expected.extend(2u32.to_le_bytes());
    expected.extend(1u32.to_le_bytes());
    expected.push(3);
    for v in [1.5f32, -2.0, 0.25] {
        expected.extend(v.to_le_bytes());
    }
    assert_eq!(to_bytes(&m), expected);
}

#[test]
fn older_version_is_a_version_error() {
    let mut bytes = to_bytes(&model());
    bytes[..8].copy_from_slice(b"RAMDEC00");
    let err = from_bytes(&bytes).unwrap_err();
    assert!(err.to_string().contains("version"), "{err}");
    bytes[..8].copy_from_slice(b"NOTAMODL");
    assert!(from_bytes(&bytes).unwrap_err().to_string().contains("magic"));
}

#[test]
fn truncation_reports_offset() {
    let bytes = to_bytes(&model());
    for cut in [0, 4, 8, 15, 20, 21, bytes.len() - 1] {
        match from_bytes(&bytes[..cut]) {
            Err(Error::ModelFile { offset, message }) => {
                assert!(offset <= cut, "offset {offset} past cut {cut}");
                assert!(message.contains("truncated"), "{message}");
            }
            other => panic!("cut {cut}: {other:?}"),
        }
    }
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(from_bytes(&extra).unwrap_err().to_string().contains("trailing"));
}

#[test]
fn final_activation_must_be_softmax() {
    let mut bytes = to_bytes(&model());
    // Activation byte of the last layer: after header, the first two layers
    // and the last layer's out_dim.
    let first = 4 + 1 + 4 * (5 * 4 + 4);
    let second = 4 + 1 + 4 * (4 * 3 + 3);
    let at = 16 + first + second + 4;
    assert_eq!(bytes[at], 3);
    bytes[at] = Activation::Relu.code();
    let err = from_bytes(&bytes).unwrap_err();
    assert!(err.to_string().contains("softmax"), "{err}");
    bytes[at] = 9;
    assert!(from_bytes(&bytes).unwrap_err().to_string().contains("activation code 9"));
}

#[test]
fn non_finite_weights_rejected() {
    let mut bytes = to_bytes(&model());
    bytes[21..25].copy_from_slice(&f32::NAN.to_le_bytes());
    assert!(from_bytes(&bytes).is_err());
    assert_eq!(&bytes[..8], MAGIC);
}
