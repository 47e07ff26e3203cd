//! Binary checkpoints.
//!
//! Layout: `b"SDN1"`, a little-endian `u32` header length, the header as
//! UTF-8 `key = value` lines (network kind, metadata, then the teacher
//! [`NetSpec`] text), every parameter as little-endian `f32` in declaration
//! order, and finally a little-endian `u64` FNV-1a checksum of all
//! preceding bytes.

use std::fs;
use std::path::Path;

use super::layers::Fnv1a;
use super::spec::key_values;
use super::{GeneratorNet, NetSpec, TeacherNet};
use crate::error::{Error, IoContext, Result};
use crate::tensor::{Param, Tensor};

const MAGIC: &[u8; 4] = b"SDN1";
const META_KEYS: [&str; 4] = ["kind", "frozen", "embed_dim", "n_outputs"];

fn encode(header: &str, params: &[&Param]) -> Vec<u8> {
    let n: usize = params.iter().map(|p| p.value().len()).sum();
    let mut out = Vec::with_capacity(16 + header.len() + 4 * n);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    for p in params {
        for v in p.value().data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut h = Fnv1a::new();
    h.update(&out);
    out.extend_from_slice(&h.finish().to_le_bytes());
    out
}

struct Decoded<'a> {
    meta: Vec<(&'a str, &'a str)>,
    spec: NetSpec,
    payload: &'a [u8],
}

fn decode<'a>(bytes: &'a [u8], path: &Path) -> Result<Decoded<'a>> {
    let bad = |msg: String| Error::Checkpoint {
        path: path.to_path_buf(),
        msg,
    };
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(bad("missing SDN1 magic".into()));
    }
    let body = bytes.len() - 8;
    let stored = u64::from_le_bytes(bytes[body..].try_into().expect("8 bytes"));
    let mut h = Fnv1a::new();
    h.update(&bytes[..body]);
    if h.finish() != stored {
        return Err(bad("checksum mismatch".into()));
    }
    let len = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    if 8 + len > body {
        return Err(bad("header overruns file".into()));
    }
    let header =
        std::str::from_utf8(&bytes[8..8 + len]).map_err(|_| bad("header is not UTF-8".into()))?;
    let mut meta = Vec::new();
    let mut spec_text = String::new();
    for (k, v) in key_values(header)? {
        if META_KEYS.contains(&k) {
            meta.push((k, v));
        } else {
            spec_text.push_str(&format!("{k} = {v}\n"));
        }
    }
    let spec = NetSpec::from_text(&spec_text)?;
    Ok(Decoded {
        meta,
        spec,
        payload: &bytes[8 + len..body],
    })
}

fn meta<'a>(d: &Decoded<'a>, key: &str, path: &Path) -> Result<&'a str> {
    d.meta
        .iter()
        .find(|(k, _)| *k == key)
        .map(|(_, v)| *v)
        .ok_or_else(|| Error::Checkpoint {
            path: path.to_path_buf(),
            msg: format!("header lacks {key}"),
        })
}

fn fill(params: Vec<&mut Param>, payload: &[u8], path: &Path) -> Result<()> {
    let need: usize = params.iter().map(|p| 4 * p.value().len()).sum();
    if need != payload.len() {
        return Err(Error::Checkpoint {
            path: path.to_path_buf(),
            msg: format!("expected {need} parameter bytes, found {}", payload.len()),
        });
    }
    let mut at = 0;
    for p in params {
        let n = p.value().len();
        let data = payload[at..at + 4 * n]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        at += 4 * n;
        let shape = p.shape().to_vec();
        *p.value_mut() = Tensor::new(&shape, data)?;
    }
    Ok(())
}

pub fn teacher_to_bytes(net: &TeacherNet) -> Vec<u8> {
    let header = format!(
        "kind = teacher\nfrozen = {}\n{}",
        net.is_frozen(),
        net.spec().to_text()
    );
    encode(&header, &net.params())
}

pub fn teacher_from_bytes(bytes: &[u8], path: &Path) -> Result<TeacherNet> {
    let d = decode(bytes, path)?;
    if meta(&d, "kind", path)? != "teacher" {
        return Err(Error::Checkpoint {
            path: path.to_path_buf(),
            msg: "not a teacher checkpoint".into(),
        });
    }
    let frozen = meta(&d, "frozen", path)? == "true";
    let mut net = TeacherNet::build(d.spec.clone(), 0)?;
    fill(net.params_mut(), d.payload, path)?;
    if frozen {
        net.freeze();
    }
    Ok(net)
}

pub fn generator_to_bytes(net: &GeneratorNet) -> Vec<u8> {
    let header = format!(
        "kind = generator\nembed_dim = {}\nn_outputs = {}\n{}",
        net.embed_dim(),
        net.n_outputs(),
        net.teacher_spec().to_text()
    );
    encode(&header, &net.params())
}

pub fn generator_from_bytes(bytes: &[u8], path: &Path) -> Result<GeneratorNet> {
    let d = decode(bytes, path)?;
    if meta(&d, "kind", path)? != "generator" {
        return Err(Error::Checkpoint {
            path: path.to_path_buf(),
            msg: "not a generator checkpoint".into(),
        });
    }
    let count = |key: &str| -> Result<usize> {
        meta(&d, key, path)?.parse().map_err(|_| Error::Checkpoint {
            path: path.to_path_buf(),
            msg: format!("bad {key}"),
        })
    };
    let mut net = GeneratorNet::build(&d.spec, count("embed_dim")?, count("n_outputs")?, 0)?;
    fill(net.params_mut(), d.payload, path)?;
    Ok(net)
}

pub fn save_teacher(net: &TeacherNet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, teacher_to_bytes(net)).at(path)
}

pub fn load_teacher(path: impl AsRef<Path>) -> Result<TeacherNet> {
    let path = path.as_ref();
    teacher_from_bytes(&fs::read(path).at(path)?, path)
}

pub fn save_generator(net: &GeneratorNet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, generator_to_bytes(net)).at(path)
}

pub fn load_generator(path: impl AsRef<Path>) -> Result<GeneratorNet> {
    let path = path.as_ref();
    generator_from_bytes(&fs::read(path).at(path)?, path)
}

/// Checksum stored in the trailer of an encoded checkpoint.
pub fn stored_checksum(bytes: &[u8]) -> Option<u64> {
    let tail = bytes.len().checked_sub(8)?;
    Some(u64::from_le_bytes(bytes[tail..].try_into().ok()?))
}
