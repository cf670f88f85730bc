//! On-disk model formats.
//!
//! GLNN binary layout (all integers little-endian `u32`, all reals
//! little-endian `f64`):
//!
//! ```text
//! "GLNN"  version=1  L
//! L x { rows cols  weights[rows*cols] (row-major)  bias[rows] }
//! ```
//!
//! The JSON export is a list of `{ "weights": [[..]..], "bias": [..] }`
//! objects; `serde_json` writes shortest round-trip decimals, so it is
//! lossless.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::math::{Matrix, Vector};
use crate::network::{LayerParams, MlpNetwork};

pub const MAGIC: [u8; 4] = *b"GLNN";
pub const VERSION: u32 = 1;

pub fn write_glnn<W: Write>(net: &MlpNetwork, mut out: W) -> std::io::Result<()> {
    out.write_all(&MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(net.depth() as u32).to_le_bytes())?;
    for layer in net.layers() {
        out.write_all(&(layer.weights.rows() as u32).to_le_bytes())?;
        out.write_all(&(layer.weights.cols() as u32).to_le_bytes())?;
        for x in layer.weights.as_slice() {
            out.write_all(&x.to_le_bytes())?;
        }
        for x in layer.bias.iter() {
            out.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn to_glnn_bytes(net: &MlpNetwork) -> Vec<u8> {
    let mut buf = Vec::with_capacity(12 + 8 * net.parameter_count() + 8 * net.depth());
    write_glnn(net, &mut buf).expect("writing to a Vec cannot fail");
    buf
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(
                "GLNN",
                format!("truncated while reading {what} at offset {}", self.pos),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let len = n
            .checked_mul(8)
            .ok_or_else(|| Error::format("GLNN", format!("{what} length overflows")))?;
        Ok(self
            .take(len, what)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn from_glnn_bytes(bytes: &[u8]) -> Result<MlpNetwork> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.take(4, "magic")?;
    if magic != MAGIC {
        return Err(Error::format(
            "GLNN",
            format!("bad magic: expected {MAGIC:02x?}, found {magic:02x?}"),
        ));
    }
    let version = cur.u32("version")?;
    if version != VERSION {
        return Err(Error::format(
            "GLNN",
            format!("unsupported version {version}, expected {VERSION}"),
        ));
    }
    let depth = cur.u32("layer count")? as usize;
    let mut layers = Vec::with_capacity(depth.min(1024));
    for l in 0..depth {
        let rows = cur.u32("rows")? as usize;
        let cols = cur.u32("cols")? as usize;
        let weights = cur.f64s(rows.saturating_mul(cols), "weights")?;
        let bias = cur.f64s(rows, "bias")?;
        let weights = Matrix::new(rows, cols, weights)
            .map_err(|e| Error::format("GLNN", format!("layer {}: {e}", l + 1)))?;
        let bias = Vector::new(bias)
            .map_err(|e| Error::format("GLNN", format!("layer {}: {e}", l + 1)))?;
        layers.push(LayerParams::new(weights, bias)?);
    }
    if cur.pos != bytes.len() {
        return Err(Error::format(
            "GLNN",
            format!("{} trailing bytes after last layer", bytes.len() - cur.pos),
        ));
    }
    MlpNetwork::new(layers).map_err(|e| Error::format("GLNN", e.to_string()))
}

pub fn read_glnn<R: Read>(mut input: R) -> Result<MlpNetwork> {
    let mut buf = Vec::new();
    input
        .read_to_end(&mut buf)
        .map_err(|e| Error::format("GLNN", format!("read failed: {e}")))?;
    from_glnn_bytes(&buf)
}

pub fn save_glnn(net: &MlpNetwork, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_glnn_bytes(net)).map_err(|e| Error::io(path, e))
}

pub fn load_glnn(path: impl AsRef<Path>) -> Result<MlpNetwork> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_glnn_bytes(&bytes)
}

pub fn to_json(net: &MlpNetwork) -> String {
    serde_json::to_string(net).expect("network serialises")
}

pub fn from_json(text: &str) -> Result<MlpNetwork> {
    serde_json::from_str(text).map_err(|e| Error::format("JSON model", e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout_is_bit_exact() {
        let net = MlpNetwork::init(&[2, 3, 1], 0).unwrap();
        let bytes = to_glnn_bytes(&net);
        assert_eq!(&bytes[..4], &[0x47, 0x4C, 0x4E, 0x4E]);
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &2u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &3u32.to_le_bytes());
        assert_eq!(&bytes[16..20], &2u32.to_le_bytes());
        let w00 = f64::from_le_bytes(bytes[20..28].try_into().unwrap());
        assert_eq!(w00, net.layers()[0].weights.get(0, 0));
        assert_eq!(bytes.len(), 12 + (8 + 8 * (6 + 3)) + (8 + 8 * (3 + 1)));
    }

    #[test]
    fn rejects_corruption() {
        let net = MlpNetwork::init(&[2, 3, 1], 0).unwrap();
        let bytes = to_glnn_bytes(&net);
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(from_glnn_bytes(&bad)
            .unwrap_err()
            .to_string()
            .contains("bad magic"));
        assert!(from_glnn_bytes(&bytes[..bytes.len() - 1])
            .unwrap_err()
            .to_string()
            .contains("truncated"));
        let mut long = bytes.clone();
        long.push(0);
        assert!(from_glnn_bytes(&long).is_err());
        let mut version = bytes;
        version[4] = 2;
        assert!(from_glnn_bytes(&version)
            .unwrap_err()
            .to_string()
            .contains("version"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn binary_and_json_round_trip(seed in 0u64..10_000, hidden in 1usize..6, out in 1usize..4) {
            let net = MlpNetwork::init(&[3, hidden, hidden + 1, out], seed).unwrap();
            let bytes = to_glnn_bytes(&net);
            let back = from_glnn_bytes(&bytes).unwrap();
            prop_assert_eq!(&back, &net);
            prop_assert_eq!(to_glnn_bytes(&back), bytes);
            prop_assert_eq!(from_json(&to_json(&net)).unwrap(), net);
        }
    }
}
