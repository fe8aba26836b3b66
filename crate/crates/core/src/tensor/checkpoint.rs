//! Flat named-tensor container.
//!
//! Layout: the ASCII header line [`CHECKPOINT_HEADER`] terminated by `\n`,
//! a little-endian `u64` entry count, then per entry (in name order):
//! `u32` name length, UTF-8 name bytes, `u32` rank, `rank` × `u64` extents,
//! and `product(extents)` × little-endian `f64` values.

use std::collections::BTreeMap;
use std::io::{self, Read, Write};

use super::{Tensor, TensorError};

pub const CHECKPOINT_HEADER: &str = "genexp-tensors v1";

/// Named parameter tensors, iterated in name order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    tensors: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        self.tensors.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.tensors.keys()
    }

    /// Order-sensitive digest of every value's bit pattern.
    pub fn checksum(&self) -> u64 {
        // FNV-1a over names and raw bits.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |b: u8| {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        };
        for (name, t) in &self.tensors {
            name.bytes().for_each(&mut feed);
            for v in t.data() {
                v.to_bits().to_le_bytes().into_iter().for_each(&mut feed);
            }
        }
        h
    }
}

fn invalid(msg: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.into())
}

/// Writes the tensors followed by their [`ParamStore::checksum`], which
/// [`read_params`] verifies.
pub fn write_params(store: &ParamStore, mut w: impl Write) -> io::Result<()> {
    w.write_all(CHECKPOINT_HEADER.as_bytes())?;
    w.write_all(b"\n")?;
    w.write_all(&(store.len() as u64).to_le_bytes())?;
    for (name, t) in store.iter() {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(t.rank() as u32).to_le_bytes())?;
        for &d in t.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.write_all(&store.checksum().to_le_bytes())?;
    w.flush()
}

fn read_u32(r: &mut impl Read) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_params(mut r: impl Read) -> io::Result<ParamStore> {
    let mut header = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        r.read_exact(&mut byte)?;
        if byte[0] == b'\n' {
            break;
        }
        header.push(byte[0]);
        if header.len() > 64 {
            return Err(invalid("checkpoint header too long"));
        }
    }
    if header != CHECKPOINT_HEADER.as_bytes() {
        return Err(invalid(format!(
            "unsupported checkpoint header {:?}",
            String::from_utf8_lossy(&header)
        )));
    }
    let count = read_u64(&mut r)?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let len = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|e| invalid(e.to_string()))?;
        let rank = read_u32(&mut r)? as usize;
        let shape = (0..rank)
            .map(|_| read_u64(&mut r).map(|d| d as usize))
            .collect::<io::Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            data.push(f64::from_le_bytes(b));
        }
        let t = Tensor::new(shape, data).map_err(|e: TensorError| invalid(format!("{name}: {e}")))?;
        store.insert(name, t);
    }
    let stored = read_u64(&mut r)?;
    if stored != store.checksum() {
        return Err(invalid(format!(
            "checksum mismatch: file says {stored:016x}, contents hash to {:016x}",
            store.checksum()
        )));
    }
    if r.read(&mut byte)? != 0 {
        return Err(invalid("trailing bytes after checkpoint"));
    }
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            entries in proptest::collection::btree_map(
                "[a-z_.0-9]{1,12}",
                (1usize..4, 1usize..5).prop_flat_map(|(r, c)| {
                    proptest::collection::vec(proptest::num::f64::ANY, r * c)
                        .prop_map(move |d| (r, c, d))
                }),
                0..5,
            )
        ) {
            let mut store = ParamStore::new();
            for (name, (r, c, d)) in &entries {
                store.insert(name.clone(), Tensor::new(vec![*r, *c], d.clone()).unwrap());
            }
            let mut buf = Vec::new();
            write_params(&store, &mut buf).unwrap();
            let back = read_params(buf.as_slice()).unwrap();
            prop_assert_eq!(back.len(), store.len());
            for ((n1, t1), (n2, t2)) in store.iter().zip(back.iter()) {
                prop_assert_eq!(n1, n2);
                prop_assert_eq!(t1.shape(), t2.shape());
                let b1: Vec<u64> = t1.data().iter().map(|v| v.to_bits()).collect();
                let b2: Vec<u64> = t2.data().iter().map(|v| v.to_bits()).collect();
                prop_assert_eq!(b1, b2);
            }
        }
    }

    #[test]
    fn rejects_foreign_header() {
        let bytes = b"something else\n\0\0\0\0\0\0\0\0";
        assert!(read_params(&bytes[..]).is_err());
    }
}
