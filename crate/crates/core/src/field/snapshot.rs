//! Whole-field snapshots and their on-disk formats.
//!
//! The binary layout is a 32-byte header (`b"DNSF"`, three `u32` lattice
//! dimensions, spacing `h` and radius `L` as `f64`) followed by every lattice
//! value as a little-endian `f64`, row-major with `z` varying fastest.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::io::fmt_f64;

pub const MAGIC: &[u8; 4] = b"DNSF";
pub const HEADER_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    /// Lattice indices run over `-n..=n`.
    pub n: i32,
    pub h: f64,
    pub radius: f64,
    /// All lattice values, exterior nodes included (as zero).
    pub values: Vec<f64>,
}

impl Snapshot {
    pub fn side(&self) -> usize {
        (2 * self.n + 1) as usize
    }

    /// Coordinates of lattice entry `idx`.
    pub fn node(&self, idx: usize) -> [f64; 3] {
        let m = self.side();
        let (i, j, k) = (idx / (m * m), idx / m % m, idx % m);
        [i, j, k].map(|c| (c as i32 - self.n) as f64 * self.h)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,y,z,v\n");
        for (idx, v) in self.values.iter().enumerate() {
            let [x, y, z] = self.node(idx);
            let _ = writeln!(s, "{},{},{},{}", fmt_f64(x), fmt_f64(y), fmt_f64(z), fmt_f64(*v));
        }
        s
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let m = self.side() as u32;
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * self.values.len());
        out.extend_from_slice(MAGIC);
        for _ in 0..3 {
            out.extend_from_slice(&m.to_le_bytes());
        }
        out.extend_from_slice(&self.h.to_le_bytes());
        out.extend_from_slice(&self.radius.to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Parses the binary layout; the time is not stored and comes back as 0.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |why: &str| Error::Config(format!("field snapshot: {why}"));
        if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
            return Err(bad("missing DNSF header"));
        }
        let word = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes")) as usize;
        let float = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
        let (a, b, c) = (word(4), word(8), word(12));
        if a != b || b != c || a % 2 == 0 {
            return Err(bad("lattice must be cubic with odd side"));
        }
        let count = a * b * c;
        if bytes.len() != HEADER_LEN + 8 * count {
            return Err(bad("payload length does not match dimensions"));
        }
        let values = bytes[HEADER_LEN..].chunks_exact(8).map(|ch| f64::from_le_bytes(ch.try_into().expect("8 bytes"))).collect();
        Ok(Self {
            time: 0.0,
            n: (a / 2) as i32,
            h: float(16),
            radius: float(24),
            values,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Snapshot {
        Snapshot {
            time: 1.5,
            n: 1,
            h: 0.5,
            radius: 0.7,
            values: (0..27).map(|i| i as f64 * 0.25).collect(),
        }
    }

    #[test]
    fn binary_layout() {
        let s = sample();
        let b = s.to_bytes();
        assert_eq!(b.len(), 32 + 27 * 8);
        assert_eq!(&b[..4], b"DNSF");
        assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 3);
        assert_eq!(f64::from_le_bytes(b[16..24].try_into().unwrap()), 0.5);
        // Entry 1 is (x, y, z) = (-h, -h, 0): z fastest.
        assert_eq!(f64::from_le_bytes(b[40..48].try_into().unwrap()), 0.25);
        let back = Snapshot::from_bytes(&b).unwrap();
        assert_eq!(back.values, s.values);
        assert_eq!((back.n, back.h, back.radius), (1, 0.5, 0.7));
        assert!(Snapshot::from_bytes(&b[..40]).is_err());
    }

    #[test]
    fn csv_rows() {
        let csv = sample().to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 28);
        assert_eq!(lines[1], "-0.5,-0.5,-0.5,0.0");
        assert_eq!(lines[2], "-0.5,-0.5,0.0,0.25");
    }
}
