//! Parameter checkpoint files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "DGPT" | version u32 | meta_len u32 | meta UTF-8 (key=value lines) | crc32(meta) u32
//! net_count u32
//! per network: name_len u16 | name UTF-8 | layer_count u32
//!   per layer: kind u8 | kind fields | tensor_count u8
//!              per tensor: ndim u8 | dims u32 x ndim | f32 payload
//!              crc32(layer record from kind through payload) u32
//! ```
//!
//! Kind fields: conv2d `in out kh kw sh sw` (u32 each); fc `in out` (u32);
//! leaky_relu `slope` (f64); replicate_pad `top bottom left right` (u32);
//! the remaining kinds carry no fields.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use super::{LayerSpec, NnError, Padding, Result, Sequential, Tensor};
use crate::scalar::Scalar;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DGPT";
pub const CHECKPOINT_VERSION: u32 = 1;

const TAG_CONV2D: u8 = 1;
const TAG_FC: u8 = 2;
const TAG_RELU: u8 = 3;
const TAG_LEAKY_RELU: u8 = 4;
const TAG_TANH: u8 = 5;
const TAG_SIGMOID: u8 = 6;
const TAG_FLATTEN: u8 = 7;
const TAG_REPLICATE_PAD: u8 = 8;

/// Named networks plus free-form metadata.
#[derive(Debug)]
pub struct Checkpoint<T> {
    pub metadata: BTreeMap<String, String>,
    pub networks: Vec<(String, Sequential<T>)>,
}

impl<T: Scalar> Clone for Checkpoint<T> {
    fn clone(&self) -> Self {
        Self { metadata: self.metadata.clone(), networks: self.networks.clone() }
    }
}

impl<T: Scalar> Checkpoint<T> {
    pub fn new() -> Self {
        Self { metadata: BTreeMap::new(), networks: Vec::new() }
    }

    pub fn network(&self, name: &str) -> Option<&Sequential<T>> {
        self.networks.iter().find(|(n, _)| n == name).map(|(_, s)| s)
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata.get(key).map(String::as_str)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let meta: String = self.metadata.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(meta.as_bytes());
        out.extend_from_slice(&crc32fast::hash(meta.as_bytes()).to_le_bytes());
        out.extend_from_slice(&(self.networks.len() as u32).to_le_bytes());
        for (name, net) in &self.networks {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(net.layers().len() as u32).to_le_bytes());
            for (i, layer) in net.layers().iter().enumerate() {
                let mut rec = Vec::new();
                encode_layer(&mut rec, layer);
                match net.layer_params(i) {
                    Some((w, b)) => {
                        rec.push(2);
                        encode_tensor(&mut rec, w);
                        encode_tensor(&mut rec, b);
                    }
                    None => rec.push(0),
                }
                out.extend_from_slice(&rec);
                out.extend_from_slice(&crc32fast::hash(&rec).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(NnError::BadMagic);
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(NnError::UnsupportedVersion(version));
        }
        let meta_len = r.u32()? as usize;
        let meta = r.take(meta_len)?;
        if r.u32()? != crc32fast::hash(meta) {
            return Err(NnError::ChecksumMismatch("metadata".into()));
        }
        let meta = std::str::from_utf8(meta).map_err(|_| NnError::Malformed("metadata is not UTF-8".into()))?;
        let mut metadata = BTreeMap::new();
        for line in meta.lines() {
            let (k, v) = line.split_once('=').ok_or_else(|| NnError::Malformed(format!("metadata line {line:?}")))?;
            metadata.insert(k.to_string(), v.to_string());
        }

        let net_count = r.u32()?;
        let mut networks = Vec::new();
        for _ in 0..net_count {
            let name_len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| NnError::Malformed("network name is not UTF-8".into()))?
                .to_string();
            let layer_count = r.u32()?;
            let mut layers = Vec::new();
            let mut tensors = Vec::new();
            for li in 0..layer_count {
                let start = r.pos;
                let layer = decode_layer(&mut r)?;
                let n_tensors = r.u8()?;
                for _ in 0..n_tensors {
                    tensors.push(decode_tensor::<T>(&mut r)?);
                }
                let rec = &bytes[start..r.pos];
                if r.u32()? != crc32fast::hash(rec) {
                    return Err(NnError::ChecksumMismatch(format!("{name} layer {li}")));
                }
                layers.push(layer);
            }
            networks.push((name, Sequential::from_parts(layers, tensors)?));
        }
        if r.pos != bytes.len() {
            return Err(NnError::Malformed("trailing bytes after last network".into()));
        }
        Ok(Self { metadata, networks })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        f.sync_all()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

impl<T: Scalar> Default for Checkpoint<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn encode_layer(out: &mut Vec<u8>, layer: &LayerSpec) {
    let u = |out: &mut Vec<u8>, v: usize| out.extend_from_slice(&(v as u32).to_le_bytes());
    match *layer {
        LayerSpec::Conv2d { in_channels, out_channels, kernel, stride } => {
            out.push(TAG_CONV2D);
            for v in [in_channels, out_channels, kernel.0, kernel.1, stride.0, stride.1] {
                u(out, v);
            }
        }
        LayerSpec::Fc { in_features, out_features } => {
            out.push(TAG_FC);
            u(out, in_features);
            u(out, out_features);
        }
        LayerSpec::Relu => out.push(TAG_RELU),
        LayerSpec::LeakyRelu { slope } => {
            out.push(TAG_LEAKY_RELU);
            out.extend_from_slice(&slope.to_le_bytes());
        }
        LayerSpec::Tanh => out.push(TAG_TANH),
        LayerSpec::Sigmoid => out.push(TAG_SIGMOID),
        LayerSpec::Flatten => out.push(TAG_FLATTEN),
        LayerSpec::ReplicatePad(p) => {
            out.push(TAG_REPLICATE_PAD);
            for v in [p.top, p.bottom, p.left, p.right] {
                u(out, v);
            }
        }
    }
}

fn decode_layer(r: &mut Reader<'_>) -> Result<LayerSpec> {
    let tag = r.u8()?;
    let layer = match tag {
        TAG_CONV2D => {
            let v: Vec<usize> = (0..6).map(|_| r.u32().map(|x| x as usize)).collect::<Result<_>>()?;
            LayerSpec::Conv2d { in_channels: v[0], out_channels: v[1], kernel: (v[2], v[3]), stride: (v[4], v[5]) }
        }
        TAG_FC => LayerSpec::Fc { in_features: r.u32()? as usize, out_features: r.u32()? as usize },
        TAG_RELU => LayerSpec::Relu,
        TAG_LEAKY_RELU => LayerSpec::LeakyRelu { slope: r.f64()? },
        TAG_TANH => LayerSpec::Tanh,
        TAG_SIGMOID => LayerSpec::Sigmoid,
        TAG_FLATTEN => LayerSpec::Flatten,
        TAG_REPLICATE_PAD => LayerSpec::ReplicatePad(Padding {
            top: r.u32()? as usize,
            bottom: r.u32()? as usize,
            left: r.u32()? as usize,
            right: r.u32()? as usize,
        }),
        other => return Err(NnError::Malformed(format!("unknown layer kind {other}"))),
    };
    layer.validate()?;
    Ok(layer)
}

fn encode_tensor<T: Scalar>(out: &mut Vec<u8>, t: &Tensor<T>) {
    out.push(t.shape().len() as u8);
    for &d in t.shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in t.data() {
        out.extend_from_slice(&v.to_f32_le());
    }
}

fn decode_tensor<T: Scalar>(r: &mut Reader<'_>) -> Result<Tensor<T>> {
    let ndim = r.u8()? as usize;
    if ndim > 4 {
        return Err(NnError::Malformed(format!("tensor with {ndim} dimensions")));
    }
    let shape: Vec<usize> = (0..ndim).map(|_| r.u32().map(|x| x as usize)).collect::<Result<_>>()?;
    let n = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| NnError::Malformed("tensor size overflow".into()))?;
    let raw = r.take(n.checked_mul(4).ok_or_else(|| NnError::Malformed("tensor size overflow".into()))?)?;
    let data = raw.chunks_exact(4).map(|c| T::of(f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))).collect();
    Tensor::new(shape, data)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or(NnError::Truncated)?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f64(&mut self) -> Result<f64> {
        let b = self.take(8)?;
        Ok(f64::from_le_bytes(b.try_into().expect("8 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> Checkpoint<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Sequential::init(
            vec![
                LayerSpec::ReplicatePad(Padding::uniform(1)),
                LayerSpec::conv(1, 4, 3, 1),
                LayerSpec::LeakyRelu { slope: 0.2 },
                LayerSpec::Flatten,
                LayerSpec::fc(4 * 5 * 6, 2),
                LayerSpec::Sigmoid,
            ],
            0.02,
            &mut rng,
        )
        .unwrap();
        let mut ck = Checkpoint::new();
        ck.metadata.insert("kind".into(), "test".into());
        ck.networks.push(("net".into(), net));
        ck
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let ck = sample();
        let bytes = ck.to_bytes();
        assert_eq!(&bytes[..4], b"DGPT");
        let back = Checkpoint::<f32>::from_bytes(&bytes).unwrap();
        assert_eq!(back.meta("kind"), Some("test"));
        assert_eq!(back.to_bytes(), bytes);
        let (a, b) = (ck.network("net").unwrap(), back.network("net").unwrap());
        assert_eq!(a.layers(), b.layers());
        for (x, y) in a.params().iter().zip(b.params().iter()) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn detects_corruption_and_truncation() {
        let bytes = sample().to_bytes();
        let mut flipped = bytes.clone();
        let last = flipped.len() - 10;
        flipped[last] ^= 0x40;
        assert!(matches!(Checkpoint::<f32>::from_bytes(&flipped), Err(NnError::ChecksumMismatch(_))));
        for cut in [3, 10, bytes.len() / 2, bytes.len() - 1] {
            assert!(Checkpoint::<f32>::from_bytes(&bytes[..cut]).is_err(), "cut at {cut}");
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Checkpoint::<f32>::from_bytes(&bad), Err(NnError::BadMagic)));
    }
}
