//! Filter file formats.
//!
//! `CFT1` binary layout:
//!
//! ```text
//! offset  size        field
//! 0       4           magic b"CFT1"
//! 4       4 x u32 LE  c_out, c_in, h, w
//! 20      8 x N f64   values, little-endian IEEE-754, row-major (c_out, c_in, h, w)
//! ```
//!
//! JSON layout: `{"dims":[c_out,c_in,h,w],"values":[...]}`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Filter4D, FilterDims};

pub const CFT1_MAGIC: &[u8; 4] = b"CFT1";
const HEADER_LEN: usize = 4 + 4 * 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterFormat {
    Binary,
    Json,
}

impl FilterFormat {
    /// `.json` selects JSON; everything else is treated as CFT1.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => FilterFormat::Json,
            _ => FilterFormat::Binary,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct JsonFilter {
    dims: [u64; 4],
    values: Vec<f64>,
}

pub fn encode_binary(filter: &Filter4D) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * filter.values().len());
    out.extend_from_slice(CFT1_MAGIC);
    for d in filter.dims().as_array() {
        let d = u32::try_from(d).expect("filter dimension exceeds u32");
        out.extend_from_slice(&d.to_le_bytes());
    }
    for v in filter.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_binary(bytes: &[u8]) -> Result<Filter4D> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!(
            "file too short for CFT1 header ({} bytes)",
            bytes.len()
        )));
    }
    if &bytes[..4] != CFT1_MAGIC {
        return Err(Error::Format(format!("bad magic {:?}, expected \"CFT1\"", &bytes[..4])));
    }
    let mut dims = [0usize; 4];
    for (i, slot) in dims.iter_mut().enumerate() {
        let start = 4 + 4 * i;
        *slot = u32::from_le_bytes(bytes[start..start + 4].try_into().unwrap()) as usize;
    }
    let dims = FilterDims::from_array(dims);
    dims.validate()?;
    let payload = &bytes[HEADER_LEN..];
    let expected = dims.len().checked_mul(8).ok_or_else(|| {
        Error::Integrity(format!("declared shape {dims} is too large"))
    })?;
    if payload.len() != expected {
        return Err(Error::Integrity(format!(
            "header declares {} values ({dims}) but payload holds {} bytes ({} values)",
            dims.len(),
            payload.len(),
            payload.len() as f64 / 8.0
        )));
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Filter4D::new(dims, values)
}

pub fn encode_json(filter: &Filter4D) -> String {
    let json = JsonFilter {
        dims: filter.dims().as_array().map(|d| d as u64),
        values: filter.values().to_vec(),
    };
    serde_json::to_string(&json).expect("filter serializes")
}

pub fn decode_json(text: &str) -> Result<Filter4D> {
    // Non-finite numbers are not representable in JSON, so `null` shows up
    // as a type error here rather than a domain error.
    let parsed: JsonFilter =
        serde_json::from_str(text).map_err(|e| Error::Format(format!("invalid filter JSON: {e}")))?;
    let dims = FilterDims::from_array(parsed.dims.map(|d| d as usize));
    Filter4D::new(dims, parsed.values)
}

pub fn load_filter(path: impl AsRef<Path>, format: FilterFormat) -> Result<Filter4D> {
    let path = path.as_ref();
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    match format {
        FilterFormat::Binary => decode_binary(&fs::read(path).map_err(io_err)?),
        FilterFormat::Json => decode_json(&fs::read_to_string(path).map_err(io_err)?),
    }
}

pub fn save_filter(filter: &Filter4D, path: impl AsRef<Path>, format: FilterFormat) -> Result<()> {
    let path = path.as_ref();
    let bytes = match format {
        FilterFormat::Binary => encode_binary(filter),
        FilterFormat::Json => encode_json(filter).into_bytes(),
    };
    fs::write(path, bytes).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn worked_filter() -> Filter4D {
        Filter4D::new(FilterDims::new(1, 1, 1, 3), vec![1.0, 2.0, -1.0]).unwrap()
    }

    #[test]
    fn binary_layout_is_exact() {
        let bytes = encode_binary(&worked_filter());
        assert_eq!(&bytes[..4], b"CFT1");
        assert_eq!(&bytes[4..20], &[1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 3, 0, 0, 0]);
        assert_eq!(&bytes[20..28], &1.0f64.to_le_bytes());
        assert_eq!(&bytes[36..44], &(-1.0f64).to_le_bytes());
        assert_eq!(bytes.len(), 20 + 24);
        assert_eq!(decode_binary(&bytes).unwrap(), worked_filter());
    }

    #[test]
    fn json_identity_filter() {
        let f = decode_json(r#"{"dims":[1,1,1,1],"values":[1.0]}"#).unwrap();
        assert_eq!(f.dims(), FilterDims::new(1, 1, 1, 1));
        assert_eq!(f.values(), &[1.0]);
    }

    #[test]
    fn short_payload_is_integrity_error() {
        // Header claims 4 values, payload has 3.
        let mut bytes = Vec::from(&b"CFT1"[..]);
        for d in [1u32, 1, 2, 2] {
            bytes.extend_from_slice(&d.to_le_bytes());
        }
        for v in [1.0f64, 2.0, 3.0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        assert!(matches!(decode_binary(&bytes), Err(Error::Integrity(_))));

        let json = r#"{"dims":[1,1,2,2],"values":[1.0,2.0,3.0]}"#;
        assert!(matches!(decode_json(json), Err(Error::Integrity(_))));
    }

    #[test]
    fn trailing_bytes_are_integrity_error() {
        let mut bytes = encode_binary(&worked_filter());
        bytes.push(0);
        assert!(matches!(decode_binary(&bytes), Err(Error::Integrity(_))));
    }

    #[test]
    fn bad_magic_is_format_error() {
        let mut bytes = encode_binary(&worked_filter());
        bytes[3] = b'2';
        assert!(matches!(decode_binary(&bytes), Err(Error::Format(_))));
        assert!(matches!(decode_binary(b"CF"), Err(Error::Format(_))));
        assert!(matches!(decode_json("[1,2]"), Err(Error::Format(_))));
    }

    #[test]
    fn non_finite_value_is_domain_error() {
        let mut bytes = encode_binary(&worked_filter());
        bytes[28..36].copy_from_slice(&f64::INFINITY.to_le_bytes());
        assert!(matches!(decode_binary(&bytes), Err(Error::Domain(_))));
    }

    #[test]
    fn format_from_extension() {
        assert_eq!(FilterFormat::from_path(Path::new("a/b.json")), FilterFormat::Json);
        assert_eq!(FilterFormat::from_path(Path::new("a/b.cft1")), FilterFormat::Binary);
        assert_eq!(FilterFormat::from_path(Path::new("noext")), FilterFormat::Binary);
    }
}
