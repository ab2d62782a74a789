//! `MDL1` model files.
//!
//! A line-oriented header names the architecture and the `TSR1` tensor files
//! holding each layer, relative to the header's directory:
//!
//! ```text
//! MDL1
//! kind mlp-relu
//! input_dim 256
//! hidden 64 32
//! classes 3
//! layer 0 64 256 model.l0.w.tsr model.l0.b.tsr
//! layer 1 32 64 model.l1.w.tsr model.l1.b.tsr
//! layer 2 3 32 model.l2.w.tsr model.l2.b.tsr
//! ```

use std::fmt::Write as _;
use std::path::Path;

use super::{Layer, ModelSpec, Network, Weights};
use crate::error::{Error, Result};
use crate::numerics::{read_tensor, write_tensor};

/// Writes `path` (the header) plus one weight and one bias file per layer
/// next to it.
pub fn save_model(path: impl AsRef<Path>, net: &Network) -> Result<()> {
    let path = path.as_ref();
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::format(path, "model path needs a file name"))?;
    let spec = net.spec();

    let mut header = String::from("MDL1\n");
    writeln!(header, "kind {}", spec.kind).unwrap();
    writeln!(header, "input_dim {}", spec.input_dim).unwrap();
    let hidden: Vec<String> = spec.hidden_dims.iter().map(|d| d.to_string()).collect();
    writeln!(header, "hidden {}", hidden.join(" ")).unwrap();
    writeln!(header, "classes {}", spec.num_classes).unwrap();
    for (i, layer) in net.weights().layers.iter().enumerate() {
        let wname = format!("{stem}.l{i}.w.tsr");
        let bname = format!("{stem}.l{i}.b.tsr");
        write_tensor(dir.join(&wname), &layer.weight)?;
        write_tensor(dir.join(&bname), &layer.bias)?;
        let s = layer.weight.shape();
        writeln!(header, "layer {i} {} {} {wname} {bname}", s[0], s[1]).unwrap();
    }
    std::fs::write(path, header).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Network> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let bad = |msg: String| Error::format(path, msg);

    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    if lines.next().map(str::trim) != Some("MDL1") {
        return Err(bad("missing MDL1 header".into()));
    }
    let mut kind = None;
    let mut input_dim = None;
    let mut hidden = Vec::new();
    let mut classes = None;
    let mut layers = Vec::new();
    for line in lines {
        let mut parts = line.split_whitespace();
        let key = parts.next().unwrap_or_default();
        let rest: Vec<&str> = parts.collect();
        let num = |s: &str| s.parse::<usize>().map_err(|_| bad(format!("bad number `{s}` in `{line}`")));
        match key {
            "kind" => kind = Some(rest.first().ok_or_else(|| bad("empty kind".into()))?.parse()?),
            "input_dim" => input_dim = Some(num(rest.first().copied().unwrap_or(""))?),
            "hidden" => hidden = rest.iter().map(|s| num(s)).collect::<Result<_>>()?,
            "classes" => classes = Some(num(rest.first().copied().unwrap_or(""))?),
            "layer" => {
                if rest.len() != 5 {
                    return Err(bad(format!("malformed layer line `{line}`")));
                }
                let idx = num(rest[0])?;
                if idx != layers.len() {
                    return Err(bad(format!("layer {idx} out of order")));
                }
                let (o, i) = (num(rest[1])?, num(rest[2])?);
                let weight = read_tensor(dir.join(rest[3]))?;
                let bias = read_tensor(dir.join(rest[4]))?;
                if weight.shape() != [o, i] {
                    return Err(bad(format!(
                        "layer {idx}: header says {o}x{i}, file holds {:?}",
                        weight.shape()
                    )));
                }
                layers.push(Layer { weight, bias });
            }
            other => return Err(bad(format!("unknown key `{other}`"))),
        }
    }
    let spec = ModelSpec {
        kind: kind.ok_or_else(|| bad("missing kind".into()))?,
        input_dim: input_dim.ok_or_else(|| bad("missing input_dim".into()))?,
        hidden_dims: hidden,
        num_classes: classes.ok_or_else(|| bad("missing classes".into()))?,
    };
    Network::new(spec, Weights { layers }).map_err(|e| bad(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let net = Network::init(ModelSpec::mlp(12, &[5, 4], 3), 9).unwrap();
        let p = dir.path().join("net.mdl");
        save_model(&p, &net).unwrap();
        assert_eq!(load_model(&p).unwrap(), net);
        let header = std::fs::read_to_string(&p).unwrap();
        assert!(header.starts_with("MDL1\nkind mlp-relu\n"));
    }

    #[test]
    fn load_rejects_missing_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("broken.mdl");
        std::fs::write(&p, "MDL1\nkind linear-softmax\ninput_dim 2\nhidden\nclasses 2\nlayer 0 2 2 nope.tsr nope.tsr\n").unwrap();
        assert!(load_model(&p).is_err());
        std::fs::write(&p, "MDL2\n").unwrap();
        assert!(load_model(&p).is_err());
    }
}
