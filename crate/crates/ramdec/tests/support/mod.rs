//! In-process stand-in for a predict server, plus toy pipeline helpers.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use ramdec::cli::{dispatch, Exit};
use ramdec_core::mlp::MlpModel;
use ramdec_core::fmt_f32;
use serde_json::Value;
use tiny_http::{Header, Response, Server};

#[derive(Default)]
struct Shared {
    requests: AtomicUsize,
    chunk_sizes: Mutex<Vec<usize>>,
    /// Requests still to answer with HTTP 503.
    failures_left: AtomicUsize,
}

/// Serves `POST /v1/models/<name>:predict` from a `RAMDEC01` model file,
/// using its own decoder and an f64 forward pass rather than the library's.
pub struct PredictDouble {
    server: Arc<Server>,
    shared: Arc<Shared>,
    handle: Option<JoinHandle<()>>,
    pub url: String,
}

fn json_response(status: u16, body: String) -> Response<std::io::Cursor<Vec<u8>>> {
    let header = Header::from_bytes("Content-Type", "application/json").unwrap();
    Response::from_string(body).with_status_code(status).with_header(header)
}

fn error_body(message: &str) -> String {
    serde_json::json!({ "error": message }).to_string()
}

/// The double's own reading of a `RAMDEC01` file, evaluated in f64.
struct WireModel {
    input_dim: usize,
    /// (out_dim, activation code, weights, biases)
    layers: Vec<(usize, u8, Vec<f64>, Vec<f64>)>,
}

impl WireModel {
    fn parse(bytes: &[u8]) -> Self {
        assert_eq!(&bytes[..8], b"RAMDEC01");
        let u32_at = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
        let floats = |at: usize, n: usize| -> Vec<f64> {
            (0..n).map(|i| f64::from(f32::from_le_bytes(bytes[at + 4 * i..at + 4 * i + 4].try_into().unwrap()))).collect()
        };
        let (num_layers, input_dim) = (u32_at(8), u32_at(12));
        let (mut at, mut in_dim, mut layers) = (16, input_dim, Vec::new());
        for _ in 0..num_layers {
            let out = u32_at(at);
            let act = bytes[at + 4];
            at += 5;
            let w = floats(at, out * in_dim);
            at += 4 * out * in_dim;
            let b = floats(at, out);
            at += 4 * out;
            layers.push((out, act, w, b));
            in_dim = out;
        }
        assert_eq!(at, bytes.len());
        Self { input_dim, layers }
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        for (out, act, w, b) in &self.layers {
            let mut z: Vec<f64> =
                (0..*out).map(|o| b[o] + w[o * h.len()..(o + 1) * h.len()].iter().zip(&h).map(|(w, x)| w * x).sum::<f64>()).collect();
            match act {
                0 => z.iter_mut().for_each(|v| *v = v.max(0.0)),
                1 => z.iter_mut().for_each(|v| *v = 1.0 / (1.0 + (-*v).exp())),
                2 => z.iter_mut().for_each(|v| *v = v.tanh()),
                3 => {
                    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    z.iter_mut().for_each(|v| *v = (*v - m).exp());
                    let s: f64 = z.iter().sum();
                    z.iter_mut().for_each(|v| *v /= s);
                }
                _ => panic!("bad activation"),
            }
            h = z;
        }
        h
    }
}

fn predict(model: &WireModel, body: &str) -> Result<String, (u16, String)> {
    let v: Value = serde_json::from_str(body).map_err(|e| (400, format!("malformed body: {e}")))?;
    let rows = v["instances"].as_array().ok_or((400, "missing instances".to_string()))?;
    let mut out = String::from("{\"predictions\":[");
    for (i, row) in rows.iter().enumerate() {
        let x: Vec<f64> = row
            .as_array()
            .ok_or((400, "instance is not an array".to_string()))?
            .iter()
            .map(|x| x.as_f64().ok_or((400, "non-numeric input".to_string())))
            .collect::<Result<_, _>>()?;
        if x.len() != model.input_dim {
            return Err((400, format!("instance {i} has dim {}, expected {}", x.len(), model.input_dim)));
        }
        if i > 0 {
            out.push(',');
        }
        let values: Vec<String> = model.forward(&x).iter().map(|&p| fmt_f32(p as f32)).collect();
        out.push('[');
        out.push_str(&values.join(","));
        out.push(']');
    }
    out.push_str("]}");
    Ok(out)
}

impl PredictDouble {
    pub fn start(model: &MlpModel, name: &str) -> Self {
        Self::from_model_file(&ramdec::model_io::to_bytes(model), name)
    }

    pub fn from_model_file(bytes: &[u8], name: &str) -> Self {
        let model = WireModel::parse(bytes);
        let server = Arc::new(Server::http("127.0.0.1:0").unwrap());
        let url = format!("http://{}", server.server_addr().to_ip().unwrap());
        let shared = Arc::new(Shared::default());
        let path = format!("/v1/models/{name}:predict");
        let handle = {
            let (server, shared) = (server.clone(), shared.clone());
            std::thread::spawn(move || {
                for mut req in server.incoming_requests() {
                    shared.requests.fetch_add(1, Ordering::SeqCst);
                    let mut body = String::new();
                    let _ = req.as_reader().read_to_string(&mut body);
                    let response = if shared
                        .failures_left
                        .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
                        .is_ok()
                    {
                        json_response(503, error_body("temporarily unavailable"))
                    } else if req.url() != path || *req.method() != tiny_http::Method::Post {
                        json_response(404, error_body(&format!("no such endpoint {}", req.url())))
                    } else {
                        match predict(&model, &body) {
                            Ok(out) => {
                                let n = serde_json::from_str::<Value>(&body).unwrap()["instances"]
                                    .as_array()
                                    .unwrap()
                                    .len();
                                shared.chunk_sizes.lock().unwrap().push(n);
                                json_response(200, out)
                            }
                            Err((status, msg)) => json_response(status, error_body(&msg)),
                        }
                    };
                    let _ = req.respond(response);
                }
            })
        };
        Self { server, shared, handle: Some(handle), url }
    }

    pub fn requests(&self) -> usize {
        self.shared.requests.load(Ordering::SeqCst)
    }

    pub fn chunk_sizes(&self) -> Vec<usize> {
        self.shared.chunk_sizes.lock().unwrap().clone()
    }

    pub fn fail_next(&self, n: usize) {
        self.shared.failures_left.store(n, Ordering::SeqCst);
    }
}

impl Drop for PredictDouble {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

/// Address nothing listens on.
pub fn dead_url() -> String {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    format!("http://{addr}")
}

pub fn run(args: &[&str]) -> Exit {
    dispatch(std::iter::once("ramdec").chain(args.iter().copied()))
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Paths of a toy task trained to completion under `root`.
pub struct ToyRun {
    pub toy: PathBuf,
    pub priors: PathBuf,
    pub model: PathBuf,
}

impl ToyRun {
    pub fn file(&self, name: &str) -> PathBuf {
        self.toy.join(name)
    }
}

pub const TOY_CONTEXT: &str = "1";

/// gen-toy → make-egs → priors → train, all through the command line.
pub fn prepare_toy(root: &Path, seed: u64) -> ToyRun {
    let toy = root.join("toy");
    let egs = root.join("egs");
    let priors = root.join("priors.txt");
    let model = root.join("model.bin");
    let seed = seed.to_string();
    assert_eq!(run(&["gen-toy", "--seed", &seed, "--out", p(&toy)]), Exit::Success);
    let feats = toy.join("feats.ark");
    let ali = toy.join("ali.ark");
    assert_eq!(
        run(&[
            "make-egs", "--feats", p(&feats), "--ali", p(&ali), "--left", TOY_CONTEXT, "--right", TOY_CONTEXT,
            "--num-pdfs", "6", "--shards", "2", "--out", p(&egs),
        ]),
        Exit::Success
    );
    assert_eq!(
        run(&["priors", "--ali", p(&ali), "--num-pdfs", "6", "--out", p(&priors)]),
        Exit::Success
    );
    assert_eq!(
        run(&[
            "train", "--egs", p(&egs), "--layers", "16,6", "--epochs", "10", "--lr", "0.1", "--batch", "16",
            "--seed", "0", "--out", p(&model),
        ]),
        Exit::Success
    );
    ToyRun { toy, priors, model }
}

/// Arguments for `decode` on a prepared toy task, minus the backend flags.
pub fn decode_args(t: &ToyRun, out: &Path) -> Vec<String> {
    [
        "decode", "--graph", p(&t.file("graph.txt")), "--words", p(&t.file("words.txt")), "--feats",
        p(&t.file("feats.ark")), "--left", TOY_CONTEXT, "--right", TOY_CONTEXT, "--priors", p(&t.priors), "--out",
        p(out),
    ]
    .into_iter()
    .map(String::from)
    .collect()
}

pub fn run_owned(args: &[String]) -> Exit {
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    run(&refs)
}

/// Golden fixtures, an independent hand encoder and seeded random entries.
pub mod archives {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use ramdec_core::{AlignmentVector, FeatureMatrix, Matrix, UtteranceKey};

    pub const GOLDEN_MATRIX: &[u8] = include_bytes!("../fixtures/golden_matrix.ark");
    pub const GOLDEN_IVEC: &[u8] = include_bytes!("../fixtures/golden_ivec.ark");

    pub fn key(s: &str) -> UtteranceKey {
        UtteranceKey::new(s).unwrap()
    }

    pub fn golden_matrices() -> Vec<FeatureMatrix> {
        vec![
            FeatureMatrix::new(key("utt1"), Matrix::new(1, 2, vec![1.0, 2.0]).unwrap()),
            FeatureMatrix::new(key("utt2"), Matrix::new(2, 3, vec![0.5, -1.25, 3.0e-5, 1.0e10, -0.0, 7.0]).unwrap()),
        ]
    }

    pub fn golden_vectors() -> Vec<AlignmentVector> {
        vec![
            AlignmentVector::new(key("utt1"), vec![3, 0, 7]),
            AlignmentVector::new(key("empty"), vec![]),
            AlignmentVector::new(key("utt2"), vec![1504, i32::MAX]),
        ]
    }

    /// Encodes a matrix entry byte by byte, independently of the writer.
    pub fn hand_matrix(k: &str, rows: i32, cols: i32, data: &[f32]) -> Vec<u8> {
        let mut b = k.as_bytes().to_vec();
        b.extend([0x20, 0x00, 0x42, b'F', b'M', 0x20, 0x04]);
        b.extend(rows.to_le_bytes());
        b.push(0x04);
        b.extend(cols.to_le_bytes());
        data.iter().for_each(|v| b.extend(v.to_le_bytes()));
        b
    }

    pub fn hand_vector(k: &str, v: &[i32]) -> Vec<u8> {
        let mut b = k.as_bytes().to_vec();
        b.extend([0x20, 0x00, 0x42, 0x04, 0x04]);
        b.extend((v.len() as i32).to_le_bytes());
        v.iter().for_each(|x| b.extend(x.to_le_bytes()));
        b
    }

    pub fn random_finite(rng: &mut ChaCha8Rng) -> f32 {
        loop {
            let v = match rng.random_range(0..4) {
                0 => f32::from_bits(rng.random()),
                1 => rng.random_range(-1.0f32..1.0),
                2 => rng.random_range(-1e6f32..1e6),
                _ => [0.0, -0.0, f32::MIN_POSITIVE, f32::MAX, f32::MIN, 1e-45][rng.random_range(0..6)],
            };
            if v.is_finite() {
                return v;
            }
        }
    }

    pub fn random_matrices(seed: u64, n: usize) -> Vec<FeatureMatrix> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let (t, d) = (rng.random_range(1..12), rng.random_range(1..9));
                let data = (0..t * d).map(|_| random_finite(&mut rng)).collect();
                FeatureMatrix::new(key(&format!("m{i}-{}", rng.random::<u16>())), Matrix::new(t, d, data).unwrap())
            })
            .collect()
    }

    pub fn random_vectors(seed: u64, n: usize) -> Vec<AlignmentVector> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let len = rng.random_range(0..20);
                let v = (0..len).map(|_| rng.random_range(0..=i32::MAX)).collect();
                AlignmentVector::new(key(&format!("v{i}")), v)
            })
            .collect()
    }

}
