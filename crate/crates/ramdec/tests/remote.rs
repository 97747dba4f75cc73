mod support;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ramdec::remote::{RemoteBackend, RemoteConfig, RETRY_BACKOFF};
use ramdec::Error;
use ramdec_core::am::{local_propagate, AcousticModel};
use ramdec_core::mlp::{init_model, Activation, MlpModel};
use ramdec_core::Matrix;
use support::{dead_url, PredictDouble};

fn model() -> MlpModel {
    init_model(6, &[8, 4], Activation::Sigmoid, 5).unwrap()
}

fn frames(t: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::new(t, 6, (0..t * 6).map(|_| rng.random_range(-3.0..3.0)).collect()).unwrap()
}

fn backend(url: &str, chunk: usize) -> RemoteBackend {
    RemoteBackend::new(RemoteConfig { chunk_size: chunk, ..RemoteConfig::new(url, "am") }, 4).unwrap()
}

#[test]
fn chunks_are_consecutive_and_ordered() {
    let server = PredictDouble::start(&model(), "am");
    let x = frames(5, 1);
    let remote = backend(&server.url, 2).propagate(&x).unwrap();
    assert_eq!(server.chunk_sizes(), [2, 2, 1]);
    let local = local_propagate(&model(), &x).unwrap();
    for (a, b) in remote.matrix().as_slice().iter().zip(local.matrix().as_slice()) {
        assert!((a - b).abs() <= 1e-4);
    }
}

#[test]
fn chunk_size_does_not_change_results() {
    let server = PredictDouble::start(&model(), "am");
    let x = frames(37, 2);
    let reference = backend(&server.url, 1).propagate(&x).unwrap();
    for chunk in [2, 5, 36, 37, 64] {
        let got = backend(&server.url, chunk).propagate(&x).unwrap();
        for (a, b) in got.matrix().as_slice().iter().zip(reference.matrix().as_slice()) {
            assert!((f64::from(*a) - f64::from(*b)).abs() <= 1e-9);
        }
    }
}

#[test]
fn transient_failures_are_retried() {
    let server = PredictDouble::start(&model(), "am");
    server.fail_next(2);
    let got = backend(&server.url, 64).propagate(&frames(3, 3)).unwrap();
    assert_eq!(got.num_frames(), 3);
    assert_eq!(server.requests(), 3);
}

#[test]
fn retries_are_bounded() {
    let server = PredictDouble::start(&model(), "am");
    server.fail_next(10);
    let err = backend(&server.url, 64).propagate(&frames(3, 3)).unwrap_err();
    assert!(matches!(err, Error::Remote(ref m) if m.contains("503")), "{err}");
    assert_eq!(server.requests(), 3);
}

#[test]
fn unreachable_server_fails_after_all_attempts() {
    let start = Instant::now();
    let err = backend(&dead_url(), 64).propagate(&frames(2, 4)).unwrap_err();
    assert!(matches!(err, Error::Remote(ref m) if m.contains("3 attempts")), "{err}");
    assert!(start.elapsed() >= RETRY_BACKOFF * 2);
}

#[test]
fn unknown_model_is_a_remote_error() {
    let server = PredictDouble::start(&model(), "am");
    let cfg = RemoteConfig { max_retries: 0, ..RemoteConfig::new(&server.url, "other") };
    let err = RemoteBackend::new(cfg, 4).unwrap().propagate(&frames(1, 5)).unwrap_err();
    assert!(matches!(err, Error::Remote(ref m) if m.contains("404") && m.contains("no such endpoint")), "{err}");
}

#[test]
fn wrong_pdf_count_is_a_protocol_error_without_retry() {
    let server = PredictDouble::start(&model(), "am");
    let b = RemoteBackend::new(RemoteConfig::new(&server.url, "am"), 5).unwrap();
    assert!(matches!(b.propagate(&frames(2, 6)), Err(Error::Protocol(_))));
    assert_eq!(server.requests(), 1);
}

#[test]
fn backends_are_shareable_across_threads() {
    let server = PredictDouble::start(&model(), "am");
    let b = backend(&server.url, 3);
    let local = model();
    std::thread::scope(|s| {
        for seed in 0..8 {
            let (b, local) = (&b, &local);
            s.spawn(move || {
                let x = frames(7, 100 + seed);
                let got = b.propagate(&x).unwrap();
                let want = local_propagate(local, &x).unwrap();
                for (a, b) in got.matrix().as_slice().iter().zip(want.matrix().as_slice()) {
                    assert!((a - b).abs() <= 1e-4);
                }
            });
        }
    });
}
