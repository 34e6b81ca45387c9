//! Binary matrix container.
//!
//! Layout: the magic line `OSYN1\n`, one JSON header line terminated by
//! `\n`, then the row-major payload as little-endian `f64`. The payload
//! holds `(nd)²` values for a symmetric block matrix and `n·d²` values for a
//! block stack.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::blockmat::{BlockStack, BlockSym, MatrixKind};

pub const MAGIC: &[u8] = b"OSYN1\n";

/// Value of the `created` header field. Deliberately free of timestamps so
/// that identical invocations produce identical files.
pub const CREATED_BY: &str = concat!("osync ", env!("CARGO_PKG_VERSION"));

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContainerKind {
    Observation,
    Noise,
    LeaveOneOut,
    Generic,
    /// Ground-truth stack `G`.
    Truth,
    /// Solver output `S^∞`.
    Solution,
}

impl ContainerKind {
    pub fn is_stack(self) -> bool {
        matches!(self, Self::Truth | Self::Solution)
    }

    pub fn from_matrix_kind(kind: MatrixKind) -> Self {
        match kind {
            MatrixKind::Observation => Self::Observation,
            MatrixKind::Noise => Self::Noise,
            MatrixKind::LeaveOneOut(_) => Self::LeaveOneOut,
            MatrixKind::Generic => Self::Generic,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub kind: ContainerKind,
    pub n: usize,
    pub d: usize,
    pub sigma: Option<f64>,
    pub seed: Option<u64>,
    pub prng_id: Option<String>,
    pub diagonal_noise: Option<bool>,
    pub created: String,
    /// Left-out block (1-based) for `leave_one_out` matrices.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
}

impl Header {
    pub fn new(kind: ContainerKind, n: usize, d: usize) -> Self {
        Self {
            kind,
            n,
            d,
            sigma: None,
            seed: None,
            prng_id: None,
            diagonal_noise: None,
            created: CREATED_BY.to_string(),
            m: None,
        }
    }

    pub fn payload_len(&self) -> usize {
        if self.kind.is_stack() {
            self.n * self.d * self.d
        } else {
            let m = self.n * self.d;
            m * m
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    Matrix(BlockSym),
    Stack(BlockStack),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub header: Header,
    pub payload: Payload,
}

impl Container {
    pub fn matrix(header: Header, m: BlockSym) -> Self {
        Self {
            header,
            payload: Payload::Matrix(m),
        }
    }

    pub fn stack(header: Header, s: BlockStack) -> Self {
        Self {
            header,
            payload: Payload::Stack(s),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let values: &[f64] = match &self.payload {
            Payload::Matrix(m) => m.as_slice(),
            Payload::Stack(s) => s.as_slice(),
        };
        let mut out = Vec::with_capacity(MAGIC.len() + 256 + 8 * values.len());
        out.extend_from_slice(MAGIC);
        serde_json::to_writer(&mut out, &self.header).expect("header serializes");
        out.push(b'\n');
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CliError> {
        let rest = bytes
            .strip_prefix(MAGIC)
            .ok_or_else(|| CliError::Format("missing OSYN1 magic".into()))?;
        let nl = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| CliError::Format("unterminated header".into()))?;
        let header: Header = serde_json::from_slice(&rest[..nl])
            .map_err(|e| CliError::Format(format!("bad header: {e}")))?;
        let payload = &rest[nl + 1..];
        if header.n == 0 || header.d == 0 {
            return Err(CliError::Format("header has n = 0 or d = 0".into()));
        }
        let want = header.payload_len();
        if payload.len() != 8 * want {
            return Err(CliError::Format(format!(
                "payload has {} bytes, header implies {}",
                payload.len(),
                8 * want
            )));
        }
        let values: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let payload = if header.kind.is_stack() {
            Payload::Stack(
                BlockStack::from_vec(header.n, header.d, values)
                    .map_err(|e| CliError::Format(e.to_string()))?,
            )
        } else {
            let kind = match header.kind {
                ContainerKind::Observation => MatrixKind::Observation,
                ContainerKind::Noise => MatrixKind::Noise,
                ContainerKind::LeaveOneOut => MatrixKind::LeaveOneOut(header.m.unwrap_or(0)),
                _ => MatrixKind::Generic,
            };
            Payload::Matrix(
                BlockSym::from_dense(header.n, header.d, kind, values)
                    .map_err(|e| CliError::Format(e.to_string()))?,
            )
        };
        Ok(Self { header, payload })
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let mut f = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
        f.write_all(&self.to_bytes())
            .map_err(|e| CliError::io(path, e))?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn into_matrix(self) -> Result<(Header, BlockSym), CliError> {
        match self.payload {
            Payload::Matrix(m) => Ok((self.header, m)),
            Payload::Stack(_) => Err(CliError::Format(
                "expected a matrix container, found a stack".into(),
            )),
        }
    }

    pub fn into_stack(self) -> Result<(Header, BlockStack), CliError> {
        match self.payload {
            Payload::Stack(s) => Ok((self.header, s)),
            Payload::Matrix(_) => Err(CliError::Format(
                "expected a stack container, found a matrix".into(),
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::sample_wigner;
    use proptest::prelude::*;

    #[test]
    fn rejects_truncated_payload() {
        let w = sample_wigner(2, 2, 1);
        let c = Container::matrix(Header::new(ContainerKind::Noise, 2, 2), w);
        let mut bytes = c.to_bytes();
        bytes.pop();
        assert!(matches!(
            Container::from_bytes(&bytes),
            Err(CliError::Format(_))
        ));
        assert!(matches!(
            Container::from_bytes(b"nope"),
            Err(CliError::Format(_))
        ));
    }

    #[test]
    fn header_is_one_json_line() {
        let s = BlockStack::zeros(3, 2);
        let c = Container::stack(Header::new(ContainerKind::Solution, 3, 2), s);
        let bytes = c.to_bytes();
        let text_end = MAGIC.len()
            + bytes[MAGIC.len()..]
                .iter()
                .position(|&b| b == b'\n')
                .unwrap();
        let header: serde_json::Value =
            serde_json::from_slice(&bytes[MAGIC.len()..text_end]).unwrap();
        assert_eq!(header["kind"], "solution");
        assert_eq!(header["n"], 3);
        assert_eq!(bytes.len(), text_end + 1 + 8 * 12);
    }

    proptest! {
        #[test]
        fn stack_round_trip(n in 1usize..6, d in 1usize..4, vals in proptest::collection::vec(-1e6f64..1e6, 96)) {
            let data: Vec<f64> = vals.iter().cycle().take(n * d * d).copied().collect();
            let s = BlockStack::from_vec(n, d, data).unwrap();
            let mut h = Header::new(ContainerKind::Truth, n, d);
            h.seed = Some(7);
            let c = Container::stack(h, s);
            let bytes = c.to_bytes();
            let back = Container::from_bytes(&bytes).unwrap();
            prop_assert_eq!(back.to_bytes(), bytes);
            prop_assert_eq!(back, c);
        }

        #[test]
        fn matrix_round_trip(n in 1usize..5, d in 1usize..4, seed in any::<u64>()) {
            let w = sample_wigner(n, d, seed);
            let mut h = Header::new(ContainerKind::Noise, n, d);
            h.sigma = Some(0.25);
            let c = Container::matrix(h, w);
            let back = Container::from_bytes(&c.to_bytes()).unwrap();
            prop_assert_eq!(back, c);
        }
    }
}
