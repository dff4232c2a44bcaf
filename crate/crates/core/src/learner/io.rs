//! Model and dataset serialization.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::learner::svm::{Hypersurface, KernelParams, LabeledSample};

pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File { path: String, source: std::io::Error },
    #[error("{path}: malformed model: {source}")]
    Parse { path: String, source: serde_json::Error },
    #[error("{path}: unsupported model version {found} (expected {MODEL_VERSION})")]
    Version { path: String, found: u32 },
    #[error("{path}: inconsistent model: {reason}")]
    Invalid { path: String, reason: String },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    version: u32,
    kernel: KernelParams,
    feature_dim: usize,
    support_vectors: Vec<Vec<f64>>,
    dual_coeffs: Vec<f64>,
    bias: f64,
}

pub fn model_to_json(h: &Hypersurface) -> String {
    let file = ModelFile {
        version: MODEL_VERSION,
        kernel: h.kernel,
        feature_dim: h.feature_dim,
        support_vectors: h.support_vectors.clone(),
        dual_coeffs: h.dual_coeffs.clone(),
        bias: h.bias,
    };
    serde_json::to_string_pretty(&file).expect("model serializes")
}

pub fn model_from_json(text: &str, path: &str) -> Result<Hypersurface, IoError> {
    let file: ModelFile = serde_json::from_str(text).map_err(|source| IoError::Parse {
        path: path.to_string(),
        source,
    })?;
    if file.version != MODEL_VERSION {
        return Err(IoError::Version {
            path: path.to_string(),
            found: file.version,
        });
    }
    let invalid = |reason: String| IoError::Invalid {
        path: path.to_string(),
        reason,
    };
    if file.support_vectors.len() != file.dual_coeffs.len() {
        return Err(invalid(format!(
            "{} support vectors but {} dual coefficients",
            file.support_vectors.len(),
            file.dual_coeffs.len()
        )));
    }
    if let Some(sv) = file.support_vectors.iter().find(|sv| sv.len() != file.feature_dim) {
        return Err(invalid(format!(
            "support vector of length {} in a {}-dimensional model",
            sv.len(),
            file.feature_dim
        )));
    }
    file.kernel
        .validate()
        .map_err(|e| invalid(e.to_string()))?;
    Ok(Hypersurface {
        kernel: file.kernel,
        feature_dim: file.feature_dim,
        support_vectors: file.support_vectors,
        dual_coeffs: file.dual_coeffs,
        bias: file.bias,
    })
}

pub fn save_model(h: &Hypersurface, path: &Path) -> Result<(), IoError> {
    fs::write(path, model_to_json(h)).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_model(path: &Path) -> Result<Hypersurface, IoError> {
    let p = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| IoError::File {
        path: p.clone(),
        source,
    })?;
    model_from_json(&text, &p)
}

/// CSV with header `z1,...,zn,label` and labels `+1` / `-1`.
pub fn write_dataset(samples: &[LabeledSample], path: &Path) -> Result<(), IoError> {
    let err = |source| IoError::File {
        path: path.display().to_string(),
        source,
    };
    let mut f = std::io::BufWriter::new(fs::File::create(path).map_err(err)?);
    let dim = samples.first().map_or(0, |s| s.features.len());
    let mut header: Vec<String> = (1..=dim).map(|i| format!("z{i}")).collect();
    header.push("label".into());
    writeln!(f, "{}", header.join(",")).map_err(err)?;
    for s in samples {
        let mut cols: Vec<String> = s.features.iter().map(|v| v.to_string()).collect();
        cols.push(format!("{}", s.label.sign() as i32));
        writeln!(f, "{}", cols.join(",")).map_err(err)?;
    }
    f.flush().map_err(err)
}

pub fn read_dataset(path: &Path) -> Result<Vec<LabeledSample>, IoError> {
    let p = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| IoError::File {
        path: p.clone(),
        source,
    })?;
    let invalid = |reason: String| IoError::Invalid {
        path: p.clone(),
        reason,
    };
    let mut lines = text.lines();
    let width = lines.next().map_or(0, |h| h.split(',').count());
    let mut out = Vec::new();
    for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let vals: Vec<f64> = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| invalid(format!("line {}: {e}", n + 2)))?;
        if vals.len() != width {
            return Err(invalid(format!("line {}: expected {width} columns", n + 2)));
        }
        let (label, z) = vals.split_last().expect("non-empty");
        out.push(LabeledSample::new(
            z.to_vec(),
            crate::learner::svm::Label::from_sign(*label),
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::svm::Label;

    fn model() -> Hypersurface {
        Hypersurface {
            kernel: KernelParams::new(0.9, 0.4),
            feature_dim: 2,
            support_vectors: vec![vec![0.1, 1.0 / 3.0], vec![-2.5e-17, 7.0]],
            dual_coeffs: vec![0.123456789012345, -1.0 / 7.0],
            bias: std::f64::consts::PI,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let h = model();
        save_model(&h, &path).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(back, h);
        for z in [[0.3, -0.2], [5.0, 1e-3]] {
            assert_eq!(back.eval(&z).to_bits(), h.eval(&z).to_bits());
        }
    }

    #[test]
    fn malformed_model_names_the_problem() {
        let err = model_from_json(r#"{"version":1,"kernel":{"k1":0.9,"k2":0.4,"degree":2}}"#, "m.json").unwrap_err();
        assert!(err.to_string().contains("feature_dim"), "{err}");
        let text = model_to_json(&model()).replace("\"version\": 1", "\"version\": 9");
        assert!(matches!(model_from_json(&text, "m"), Err(IoError::Version { found: 9, .. })));
        let mut bad = model();
        bad.dual_coeffs.pop();
        assert!(matches!(
            model_from_json(&model_to_json(&bad), "m"),
            Err(IoError::Invalid { .. })
        ));
    }

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let data = vec![
            LabeledSample::new(vec![1.5, -0.25, 1.0 / 3.0], Label::Feasible),
            LabeledSample::new(vec![0.0, 2.0, 3.0], Label::Infeasible),
        ];
        write_dataset(&data, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("z1,z2,z3,label\n"));
        assert_eq!(read_dataset(&path).unwrap(), data);
    }
}
