//! Snapshot writers. The binary grid dump is little-endian throughout:
//!
//! | offset | size | content |
//! |---|---|---|
//! | 0 | 8 | magic `FV3GRID\0` |
//! | 8 | 4 | format version, `u32` (= 1) |
//! | 12 | 4 | `nx`, `u32` |
//! | 16 | 4 | `ny`, `u32` |
//! | 20 | 4 | components per cell `K`, `u32` |
//! | 24 | 8 | time, `f64` |
//! | 32 | 8·(nx+1) | x cell boundaries, `f64` |
//! | … | 8·(ny+1) | y cell boundaries, `f64` |
//! | … | 8·nx·ny·K | cell averages, `f64`, row-major (x fastest), components interleaved |

use std::fs;
use std::io::{self, Write};
use std::path::Path;

pub const MAGIC: &[u8; 8] = b"FV3GRID\0";
pub const VERSION: u32 = 1;

/// A decoded binary snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDump {
    pub nx: usize,
    pub ny: usize,
    pub k: usize,
    pub t: f64,
    pub xb: Vec<f64>,
    pub yb: Vec<f64>,
    pub values: Vec<f64>,
}

impl GridDump {
    pub fn encode(&self) -> Vec<u8> {
        let mut b = Vec::with_capacity(32 + 8 * (self.xb.len() + self.yb.len() + self.values.len()));
        b.extend_from_slice(MAGIC);
        for v in [VERSION, self.nx as u32, self.ny as u32, self.k as u32] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b.extend_from_slice(&self.t.to_le_bytes());
        for v in self.xb.iter().chain(&self.yb).chain(&self.values) {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b
    }

    pub fn decode(bytes: &[u8]) -> io::Result<Self> {
        let bad = |m: &str| io::Error::new(io::ErrorKind::InvalidData, m.to_string());
        if bytes.len() < 32 || &bytes[..8] != MAGIC {
            return Err(bad("not an FV3GRID file"));
        }
        let word = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
        if word(8) != VERSION as usize {
            return Err(bad("unsupported FV3GRID version"));
        }
        let (nx, ny, k) = (word(12), word(16), word(20));
        let count = (nx + 1) + (ny + 1) + nx * ny * k;
        if bytes.len() != 32 + 8 * count {
            return Err(bad("FV3GRID payload has the wrong length"));
        }
        let reals: Vec<f64> = bytes[24..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        let t = reals[0];
        let xb = reals[1..nx + 2].to_vec();
        let yb = reals[nx + 2..nx + ny + 3].to_vec();
        let values = reals[nx + ny + 3..].to_vec();
        Ok(Self { nx, ny, k, t, xb, yb, values })
    }

    /// `x,y,q0,q1,…` per cell at the cell centre, row-major.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,y");
        for c in 0..self.k {
            s.push_str(&format!(",q{c}"));
        }
        s.push('\n');
        for j in 0..self.ny {
            let y = 0.5 * (self.yb[j] + self.yb[j + 1]);
            for i in 0..self.nx {
                let x = 0.5 * (self.xb[i] + self.xb[i + 1]);
                s.push_str(&format!("{x:.17e},{y:.17e}"));
                for c in 0..self.k {
                    s.push_str(&format!(",{:.17e}", self.values[(j * self.nx + i) * self.k + c]));
                }
                s.push('\n');
            }
        }
        s
    }
}

/// `x,q0,…` per cell centre of a 1D field.
pub fn line_csv<const K: usize>(boundaries: &[f64], values: &[[f64; K]]) -> String {
    let mut s = String::from("x");
    for c in 0..K {
        s.push_str(&format!(",q{c}"));
    }
    s.push('\n');
    for (w, q) in boundaries.windows(2).zip(values) {
        s.push_str(&format!("{:.17e}", 0.5 * (w[0] + w[1])));
        for v in q {
            s.push_str(&format!(",{v:.17e}"));
        }
        s.push('\n');
    }
    s
}

pub fn write_file(path: &Path, bytes: &[u8]) -> io::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut f = io::BufWriter::new(fs::File::create(path)?);
    f.write_all(bytes)?;
    f.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> GridDump {
        GridDump {
            nx: 3,
            ny: 2,
            k: 2,
            t: 0.25,
            xb: vec![0.0, 0.5, 1.5, 3.0],
            yb: vec![-1.0, 0.0, 1.0],
            values: (0..12).map(|v| v as f64 * 0.1).collect(),
        }
    }

    #[test]
    fn binary_layout() {
        let d = sample();
        let b = d.encode();
        assert_eq!(&b[..8], b"FV3GRID\0");
        assert_eq!(&b[8..12], &1u32.to_le_bytes());
        assert_eq!(&b[12..16], &3u32.to_le_bytes());
        assert_eq!(&b[16..20], &2u32.to_le_bytes());
        assert_eq!(&b[20..24], &2u32.to_le_bytes());
        assert_eq!(&b[24..32], &0.25f64.to_le_bytes());
        assert_eq!(&b[32..40], &0.0f64.to_le_bytes());
        assert_eq!(b.len(), 32 + 8 * (4 + 3 + 12));
        let last = b.len() - 8;
        assert_eq!(&b[last..], &1.1f64.to_le_bytes());
        assert_eq!(GridDump::decode(&b).unwrap(), d);
    }

    #[test]
    fn decode_rejects_garbage() {
        assert!(GridDump::decode(b"FV3GRID").is_err());
        let mut b = sample().encode();
        b.pop();
        assert!(GridDump::decode(&b).is_err());
        b[0] = b'X';
        assert!(GridDump::decode(&b).is_err());
    }

    #[test]
    fn csv_rows() {
        let s = sample().to_csv();
        let lines: Vec<_> = s.lines().collect();
        assert_eq!(lines[0], "x,y,q0,q1");
        assert_eq!(lines.len(), 7);
        assert!(lines[2].starts_with("1.0"));
        let l = line_csv(&[0.0, 1.0, 3.0], &[[1.0], [2.0]]);
        assert_eq!(l.lines().nth(2).unwrap(), "2.00000000000000000e0,2.00000000000000000e0");
    }
}
