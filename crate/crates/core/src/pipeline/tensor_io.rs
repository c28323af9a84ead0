//! Binary tensor files.
//!
//! Layout (all integers little-endian):
//!
//! | offset | size | field                          |
//! |--------|------|--------------------------------|
//! | 0      | 4    | magic `SDT3`                   |
//! | 4      | 4    | version, `u32` = 1             |
//! | 8      | 8    | F, `u64`                       |
//! | 16     | 8    | T, `u64`                       |
//! | 24     | 8    | N, `u64`                       |
//! | 32     | 4    | dtype, `u32` = 1 (f64)         |
//! | 36     | 8FTN | values, f64 LE, `f` fastest then `t` then `n` |

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor3;

pub const MAGIC: &[u8; 4] = b"SDT3";
pub const VERSION: u32 = 1;
pub const DTYPE_F64: u32 = 1;
pub const HEADER_LEN: usize = 36;

pub fn encode_tensor(x: &Tensor3) -> Vec<u8> {
    let (f, t, n) = x.dims();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * x.values().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for d in [f, t, n] {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    out.extend_from_slice(&DTYPE_F64.to_le_bytes());
    for v in x.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_tensor(bytes: &[u8]) -> Result<Tensor3> {
    let bad = |msg: &str| Error::TensorFormat(msg.to_string());
    if bytes.len() < HEADER_LEN {
        return Err(bad("file shorter than the header"));
    }
    if &bytes[..4] != MAGIC {
        return Err(bad("bad magic"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    if u32_at(4) != VERSION {
        return Err(Error::TensorFormat(format!("unsupported version {}", u32_at(4))));
    }
    if u32_at(32) != DTYPE_F64 {
        return Err(Error::TensorFormat(format!("unsupported dtype {}", u32_at(32))));
    }
    let dims: Vec<usize> = [8, 16, 24]
        .iter()
        .map(|&o| usize::try_from(u64_at(o)).map_err(|_| bad("dimension overflows usize")))
        .collect::<Result<_>>()?;
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| bad("dimension product overflows"))?;
    let body = &bytes[HEADER_LEN..];
    if body.len() != count * 8 {
        return Err(Error::TensorFormat(format!(
            "expected {} payload bytes, found {}",
            count * 8,
            body.len()
        )));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Tensor3::new(dims[0], dims[1], dims[2], values)
}

pub fn write_tensor(path: impl AsRef<Path>, x: &Tensor3) -> Result<()> {
    std::fs::write(path, encode_tensor(x))?;
    Ok(())
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor3> {
    decode_tensor(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout_is_fixed() {
        let x = Tensor3::from_fn(2, 3, 1, |f, t, _| (f + 10 * t) as f64);
        let bytes = encode_tensor(&x);
        assert_eq!(bytes.len(), HEADER_LEN + 6 * 8);
        assert_eq!(&bytes[..4], b"SDT3");
        assert_eq!(&bytes[4..8], &[1, 0, 0, 0]);
        assert_eq!(&bytes[8..16], &2u64.to_le_bytes());
        assert_eq!(&bytes[16..24], &3u64.to_le_bytes());
        assert_eq!(&bytes[24..32], &1u64.to_le_bytes());
        assert_eq!(&bytes[32..36], &[1, 0, 0, 0]);
        // second value is (f=1, t=0)
        assert_eq!(&bytes[44..52], &1.0f64.to_le_bytes());
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let x = Tensor3::zeros(2, 2, 2);
        let good = encode_tensor(&x);
        assert!(decode_tensor(&good[..20]).is_err());
        assert!(decode_tensor(&good[..good.len() - 1]).is_err());
        let mut magic = good.clone();
        magic[0] = b'X';
        assert!(decode_tensor(&magic).is_err());
        let mut dtype = good.clone();
        dtype[32] = 2;
        assert!(decode_tensor(&dtype).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(f in 1usize..5, t in 1usize..6, n in 1usize..4, seed in any::<u64>()) {
            let mut state = seed;
            let x = Tensor3::from_fn(f, t, n, |_, _, _| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                f64::from_bits(state >> 2)
            });
            let back = decode_tensor(&encode_tensor(&x)).unwrap();
            prop_assert!(back.values().iter().zip(x.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
            prop_assert_eq!(back.dims(), x.dims());
        }
    }
}
