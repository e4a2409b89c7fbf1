//! Portable network checkpoints: a JSON manifest describing architectures
//! plus a text parameter file (per-tensor shape header, row-major values).
//! f64 values are written with Rust's shortest round-trip formatting, so a
//! save/load/save cycle is byte-identical.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Activation, DenseLayer, DenseNetwork};
use crate::tensor::Tensor;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const PARAMS_FILE: &str = "params.txt";
const PARAMS_HEADER: &str = "# smtl checkpoint params v1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub name: String,
    /// Layer widths `[in, h1, ..., out]`.
    pub dims: Vec<usize>,
    pub activations: Vec<Activation>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub networks: Vec<NetworkSpec>,
}

fn spec_of(name: &str, net: &DenseNetwork) -> NetworkSpec {
    let mut dims = vec![net.input_dim()];
    dims.extend(net.layers().iter().map(|l| l.fan_out()));
    NetworkSpec {
        name: name.to_string(),
        dims,
        activations: net.layers().iter().map(|l| l.activation).collect(),
    }
}

/// Writes `manifest.json` and `params.txt` into `dir` (created if absent).
pub fn save_networks(dir: &Path, named: &[(&str, &DenseNetwork)]) -> Result<()> {
    if named.is_empty() {
        return Err(Error::InvalidArgument("nothing to checkpoint".into()));
    }
    fs::create_dir_all(dir)?;
    let manifest = Manifest {
        version: 1,
        networks: named.iter().map(|(n, net)| spec_of(n, net)).collect(),
    };
    let mut manifest_text = serde_json::to_string_pretty(&manifest)?;
    manifest_text.push('\n');
    fs::write(dir.join(MANIFEST_FILE), manifest_text)?;

    let mut out = String::new();
    out.push_str(PARAMS_HEADER);
    out.push('\n');
    for (name, net) in named {
        for (i, layer) in net.layers().iter().enumerate() {
            write_tensor(&mut out, &format!("{name}.layer{i}.weights"), &layer.weights);
            write_tensor(&mut out, &format!("{name}.layer{i}.bias"), &layer.bias);
        }
    }
    let mut f = fs::File::create(dir.join(PARAMS_FILE))?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

fn write_tensor(out: &mut String, name: &str, t: &Tensor) {
    out.push_str(&format!("tensor {name} {} {}\n", t.rows(), t.cols()));
    for r in 0..t.rows() {
        let row: Vec<String> = t.row(r).iter().map(|v| format!("{v}")).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
}

/// Loads every network recorded in `dir`'s manifest, in manifest order.
pub fn load_networks(dir: &Path) -> Result<Vec<(String, DenseNetwork)>> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let params_path = dir.join(PARAMS_FILE);
    let missing: Vec<PathBuf> = [&manifest_path, &params_path]
        .into_iter()
        .filter(|p| !p.exists())
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingArtifacts(missing));
    }
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(&manifest_path)?)?;
    if manifest.version != 1 {
        return Err(Error::Data(format!(
            "unsupported checkpoint version {}",
            manifest.version
        )));
    }

    let reader = BufReader::new(fs::File::open(&params_path)?);
    let mut lines = reader.lines().enumerate();
    match lines.next() {
        Some((_, Ok(l))) if l == PARAMS_HEADER => {}
        _ => {
            return Err(Error::Data(format!(
                "{}: missing '{PARAMS_HEADER}' header",
                params_path.display()
            )))
        }
    }

    let mut tensors: Vec<(String, Tensor)> = Vec::new();
    while let Some((lineno, line)) = lines.next() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 4 || parts[0] != "tensor" {
            return Err(Error::Data(format!(
                "{}:{}: expected 'tensor <name> <rows> <cols>'",
                params_path.display(),
                lineno + 1
            )));
        }
        let name = parts[1].to_string();
        let rows: usize = parts[2].parse().map_err(|_| {
            Error::Data(format!("{}:{}: bad row count", params_path.display(), lineno + 1))
        })?;
        let cols: usize = parts[3].parse().map_err(|_| {
            Error::Data(format!("{}:{}: bad col count", params_path.display(), lineno + 1))
        })?;
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            let (lineno, line) = lines.next().ok_or_else(|| {
                Error::Data(format!(
                    "{}: truncated tensor '{name}' (row {r})",
                    params_path.display()
                ))
            })?;
            let line = line?;
            for (c, tok) in line.split_whitespace().enumerate() {
                let v: f64 = tok.parse().map_err(|_| {
                    Error::Data(format!(
                        "{}:{}: non-numeric value '{tok}' (row {r}, col {c})",
                        params_path.display(),
                        lineno + 1
                    ))
                })?;
                data.push(v);
            }
            if data.len() != (r + 1) * cols {
                return Err(Error::Data(format!(
                    "{}:{}: tensor '{name}' row {r} has wrong width",
                    params_path.display(),
                    lineno + 1
                )));
            }
        }
        tensors.push((name, Tensor::new([rows, cols], data)?));
    }

    let mut cursor = tensors.into_iter();
    let mut out = Vec::with_capacity(manifest.networks.len());
    for spec in &manifest.networks {
        if spec.dims.len() < 2 || spec.activations.len() != spec.dims.len() - 1 {
            return Err(Error::Data(format!(
                "manifest network '{}' has inconsistent dims/activations",
                spec.name
            )));
        }
        let mut layers = Vec::with_capacity(spec.activations.len());
        for (i, act) in spec.activations.iter().enumerate() {
            let (fan_in, fan_out) = (spec.dims[i], spec.dims[i + 1]);
            let mut take = |expect_shape: [usize; 2], suffix: &str| -> Result<Tensor> {
                let (name, t) = cursor.next().ok_or_else(|| {
                    Error::Data(format!(
                        "params file ends before '{}.layer{i}.{suffix}'",
                        spec.name
                    ))
                })?;
                let want = format!("{}.layer{i}.{suffix}", spec.name);
                if name != want {
                    return Err(Error::Data(format!(
                        "params file has tensor '{name}' where '{want}' was expected"
                    )));
                }
                if t.shape() != expect_shape {
                    return Err(Error::Data(format!(
                        "tensor '{name}' is {}x{}, manifest dims say {}x{}",
                        t.shape()[0],
                        t.shape()[1],
                        expect_shape[0],
                        expect_shape[1]
                    )));
                }
                Ok(t)
            };
            let weights = take([fan_in, fan_out], "weights")?;
            let bias = take([1, fan_out], "bias")?;
            layers.push(DenseLayer {
                weights,
                bias,
                activation: *act,
            });
        }
        out.push((spec.name.clone(), DenseNetwork::from_layers(layers)?));
    }
    if cursor.next().is_some() {
        return Err(Error::Data(
            "params file has tensors beyond those listed in the manifest".into(),
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample_net(seed: u64) -> DenseNetwork {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DenseNetwork::new(
            &[3, 5, 2],
            &[Activation::Relu, Activation::Identity],
            &mut rng,
        )
        .unwrap()
    }

    #[test]
    fn round_trip_preserves_everything() {
        let dir = tempfile::tempdir().unwrap();
        let ex = sample_net(1);
        let head = sample_net(2);
        save_networks(dir.path(), &[("extractor", &ex), ("head0", &head)]).unwrap();

        let loaded = load_networks(dir.path()).unwrap();
        assert_eq!(loaded.len(), 2);
        assert_eq!(loaded[0].0, "extractor");
        for (orig, (_, got)) in [&ex, &head].iter().zip(&loaded) {
            for (a, b) in orig.layers().iter().zip(got.layers()) {
                assert_eq!(a.weights.data(), b.weights.data());
                assert_eq!(a.bias.data(), b.bias.data());
                assert_eq!(a.activation, b.activation);
            }
        }
        // Saving the loaded copy is byte-identical.
        let dir2 = tempfile::tempdir().unwrap();
        let pairs: Vec<(&str, &DenseNetwork)> = vec![
            ("extractor", &loaded[0].1),
            ("head0", &loaded[1].1),
        ];
        save_networks(dir2.path(), &pairs).unwrap();
        for f in [MANIFEST_FILE, PARAMS_FILE] {
            assert_eq!(
                fs::read(dir.path().join(f)).unwrap(),
                fs::read(dir2.path().join(f)).unwrap(),
                "{f}"
            );
        }
    }

    #[test]
    fn missing_files_are_listed() {
        let dir = tempfile::tempdir().unwrap();
        match load_networks(dir.path()) {
            Err(Error::MissingArtifacts(files)) => assert_eq!(files.len(), 2),
            other => panic!("expected MissingArtifacts, got {other:?}"),
        }
    }

    #[test]
    fn corrupt_value_names_row_and_column() {
        let dir = tempfile::tempdir().unwrap();
        let net = sample_net(3);
        save_networks(dir.path(), &[("m", &net)]).unwrap();
        let p = dir.path().join(PARAMS_FILE);
        let text = fs::read_to_string(&p).unwrap();
        // Corrupt the first value row (line 3: header, tensor line, then data).
        let mangled: Vec<String> = text
            .lines()
            .enumerate()
            .map(|(i, l)| {
                if i == 2 {
                    "0.1 oops 0.3 0.4 0.5".to_string()
                } else {
                    l.to_string()
                }
            })
            .collect();
        fs::write(&p, mangled.join("\n")).unwrap();
        let err = load_networks(dir.path()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("oops") && msg.contains("col"), "{msg}");
    }

    #[test]
    fn shape_mismatch_against_manifest_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let net = sample_net(4);
        save_networks(dir.path(), &[("m", &net)]).unwrap();
        // Claim a different hidden width in the manifest.
        let mp = dir.path().join(MANIFEST_FILE);
        let text = fs::read_to_string(&mp).unwrap().replace("5", "6");
        fs::write(&mp, text).unwrap();
        assert!(matches!(load_networks(dir.path()), Err(Error::Data(_))));
    }
}
