//! Minimal `.npy` (format 1.0) reader and writer for C-ordered
//! little-endian `f64` arrays.

use crate::error::{LabError, Result};

const MAGIC: &[u8] = b"\x93NUMPY";

/// A dense array with its shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Array {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Array {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(LabError::format(format!(
                "array of shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }
}

pub fn encode(a: &Array) -> Vec<u8> {
    let dims: Vec<String> = a.shape.iter().map(|d| d.to_string()).collect();
    let shape = match dims.len() {
        1 => format!("({},)", dims[0]),
        _ => format!("({})", dims.join(", ")),
    };
    let mut header = format!("{{'descr': '<f8', 'fortran_order': False, 'shape': {shape}, }}");
    // magic (6) + version (2) + length (2) + header, padded to 64 bytes
    let unpadded = MAGIC.len() + 4 + header.len() + 1;
    header.push_str(&" ".repeat((64 - unpadded % 64) % 64));
    header.push('\n');
    let mut out = Vec::with_capacity(MAGIC.len() + 4 + header.len() + 8 * a.data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(header.len() as u16).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    for v in &a.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn field<'a>(header: &'a str, key: &str) -> Result<&'a str> {
    let pat = format!("'{key}':");
    let start = header
        .find(&pat)
        .ok_or_else(|| LabError::format(format!("npy header lacks '{key}'")))?
        + pat.len();
    Ok(header[start..].trim_start())
}

pub fn decode(bytes: &[u8]) -> Result<Array> {
    if bytes.len() < 10 || &bytes[..6] != MAGIC {
        return Err(LabError::format("not an npy file"));
    }
    if bytes[6] != 1 {
        return Err(LabError::format(format!("unsupported npy version {}.{}", bytes[6], bytes[7])));
    }
    let hlen = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    let body = bytes
        .get(10 + hlen..)
        .ok_or_else(|| LabError::format("truncated npy header"))?;
    let header = std::str::from_utf8(&bytes[10..10 + hlen]).map_err(|_| LabError::format("npy header is not UTF-8"))?;
    if !field(header, "descr")?.starts_with("'<f8'") {
        return Err(LabError::format("only little-endian f64 arrays are supported"));
    }
    if !field(header, "fortran_order")?.starts_with("False") {
        return Err(LabError::format("Fortran-ordered arrays are not supported"));
    }
    let shape_src = field(header, "shape")?;
    let close = shape_src.find(')').ok_or_else(|| LabError::format("malformed npy shape"))?;
    let shape = shape_src[1..close]
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<usize>().map_err(|_| LabError::format(format!("bad npy dimension {s:?}"))))
        .collect::<Result<Vec<_>>>()?;
    let n: usize = shape.iter().product();
    if body.len() != 8 * n {
        return Err(LabError::format(format!(
            "npy body holds {} bytes, shape {shape:?} needs {}",
            body.len(),
            8 * n
        )));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok(Array { shape, data })
}
