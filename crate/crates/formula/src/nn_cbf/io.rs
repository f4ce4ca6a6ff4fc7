//! Model (de)serialisation with strict validation.
//!
//! Models are stored as a single JSON document carrying a format tag, the
//! architecture fingerprint (activation, fixed scales, layer shapes), and
//! the flat parameter vector. Loading rejects anything that does not match
//! the compiled-in architecture, so a stale or foreign file fails loudly
//! instead of producing nonsense barrier values. Serialisation is
//! byte-deterministic: the same parameters always produce the same file.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::mlp::{MlpParams, HIDDEN_DIM, INPUT_SCALE, NN_INPUT_DIM, OUTPUT_SCALE, PARAM_COUNT};

const FORMAT: &str = "cbf-mlp";
const VERSION: u32 = 1;
const ACTIVATION: &str = "silu";

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model i/o failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("model JSON malformed: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported model file: {0}")]
    Format(String),
    #[error("architecture mismatch: {0}")]
    Shape(String),
    #[error("model contains non-finite weights")]
    NonFinite,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    activation: String,
    input_scale: Vec<f64>,
    output_scale: f64,
    /// `[rows, cols]` per matrix, `[len]` per bias, in layer order.
    shapes: Vec<Vec<usize>>,
    weights: Vec<f64>,
}

fn expected_shapes() -> Vec<Vec<usize>> {
    vec![
        vec![HIDDEN_DIM, NN_INPUT_DIM],
        vec![HIDDEN_DIM],
        vec![HIDDEN_DIM, HIDDEN_DIM],
        vec![HIDDEN_DIM],
        vec![1, HIDDEN_DIM],
        vec![1],
    ]
}

/// Serialise parameters to the canonical JSON document.
pub fn model_to_json_string(params: &MlpParams) -> Result<String, ModelError> {
    if !params.is_finite() {
        return Err(ModelError::NonFinite);
    }
    let file = ModelFile {
        format: FORMAT.to_string(),
        version: VERSION,
        activation: ACTIVATION.to_string(),
        input_scale: INPUT_SCALE.to_vec(),
        output_scale: OUTPUT_SCALE,
        shapes: expected_shapes(),
        weights: params.as_flat().to_vec(),
    };
    Ok(serde_json::to_string(&file)?)
}

pub fn save_model(path: &Path, params: &MlpParams) -> Result<(), ModelError> {
    let json = model_to_json_string(params)?;
    std::fs::write(path, json)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<MlpParams, ModelError> {
    let text = std::fs::read_to_string(path)?;
    let file: ModelFile = serde_json::from_str(&text)?;
    if file.format != FORMAT {
        return Err(ModelError::Format(format!("format {:?}", file.format)));
    }
    if file.version != VERSION {
        return Err(ModelError::Format(format!("version {}", file.version)));
    }
    if file.activation != ACTIVATION {
        return Err(ModelError::Format(format!("activation {:?}", file.activation)));
    }
    if file.input_scale != INPUT_SCALE {
        return Err(ModelError::Format("input_scale differs from compiled scales".into()));
    }
    if file.output_scale != OUTPUT_SCALE {
        return Err(ModelError::Format("output_scale differs from compiled scale".into()));
    }
    if file.shapes != expected_shapes() {
        return Err(ModelError::Shape(format!("layer shapes {:?}", file.shapes)));
    }
    if file.weights.len() != PARAM_COUNT {
        return Err(ModelError::Shape(format!(
            "expected {PARAM_COUNT} weights, found {}",
            file.weights.len()
        )));
    }
    if !file.weights.iter().all(|w| w.is_finite()) {
        return Err(ModelError::NonFinite);
    }
    Ok(MlpParams::from_flat(file.weights).expect("length checked above"))
}

/// Hex-encoded SHA-256 of arbitrary bytes (used to fingerprint artifacts).
pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::path::PathBuf;

    fn tmp(name: &str) -> PathBuf {
        std::env::temp_dir().join(format!("formula-io-{}-{name}.json", std::process::id()))
    }

    fn sample_params() -> MlpParams {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        MlpParams::random(&mut rng)
    }

    #[test]
    fn roundtrip_is_exact() {
        let params = sample_params();
        let path = tmp("roundtrip");
        save_model(&path, &params).unwrap();
        let loaded = load_model(&path).unwrap();
        std::fs::remove_file(&path).ok();
        assert_eq!(params, loaded);
    }

    #[test]
    fn serialisation_is_byte_deterministic() {
        let params = sample_params();
        let a = model_to_json_string(&params).unwrap();
        let b = model_to_json_string(&params).unwrap();
        assert_eq!(a, b);
        assert_eq!(sha256_hex(a.as_bytes()), sha256_hex(b.as_bytes()));
    }

    #[test]
    fn rejects_tampered_files() {
        let params = sample_params();
        let json = model_to_json_string(&params).unwrap();
        let base: serde_json::Value = serde_json::from_str(&json).unwrap();
        let cases: Vec<(&str, serde_json::Value, fn(&ModelError) -> bool)> = vec![
            ("format", serde_json::json!("other"), |e| matches!(e, ModelError::Format(_))),
            ("version", serde_json::json!(2), |e| matches!(e, ModelError::Format(_))),
            ("activation", serde_json::json!("relu"), |e| matches!(e, ModelError::Format(_))),
            ("output_scale", serde_json::json!(1.0), |e| matches!(e, ModelError::Format(_))),
            ("shapes", serde_json::json!([[1, 1]]), |e| matches!(e, ModelError::Shape(_))),
            ("weights", serde_json::json!([0.0, 1.0]), |e| matches!(e, ModelError::Shape(_))),
        ];
        for (field, value, check) in cases {
            let mut doc = base.clone();
            doc[field] = value;
            let path = tmp(&format!("tamper-{field}"));
            std::fs::write(&path, serde_json::to_string(&doc).unwrap()).unwrap();
            let err = load_model(&path).unwrap_err();
            std::fs::remove_file(&path).ok();
            assert!(check(&err), "field {field}: unexpected error {err:?}");
        }
    }

    #[test]
    fn rejects_non_finite_weights() {
        let params = sample_params();
        let json = model_to_json_string(&params).unwrap();
        // JSON cannot encode NaN directly; splice an out-of-range literal
        // via string surgery is brittle, so instead check the save path.
        let mut bad = params.clone();
        bad.as_flat_mut()[0] = f64::NAN;
        assert!(matches!(model_to_json_string(&bad), Err(ModelError::NonFinite)));
        drop(json);
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_model(Path::new("/nonexistent/formula-model.json")).unwrap_err();
        assert!(matches!(err, ModelError::Io(_)));
    }

    #[test]
    fn sha256_matches_known_vector() {
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
