//! Portable parameter checkpoints.
//!
//! Layout, all integers little-endian `u32`, all reals little-endian `f64`:
//!
//! ```text
//! magic        8 bytes   "PNLICKPT"
//! version      u32       1
//! config_len   u32       length of the config blob
//! config       bytes     UTF-8 text (the training config, JSON by convention)
//! rho          f64       AdaDelta decay
//! eps          f64       AdaDelta epsilon
//! count        u32       number of parameters
//! count times:
//!   name_len   u32
//!   name       bytes     UTF-8
//!   rank       u32       1..=3
//!   dims       u32 × rank
//!   values     f64 × n   n = product of dims
//!   sq_grad    f64 × n   AdaDelta E[g²]
//!   sq_delta   f64 × n   AdaDelta E[Δx²]
//! ```
//!
//! Nothing may follow the last parameter.

use crate::{AdaDelta, AutodiffError, Param, ParamStore, Tensor};

pub const MAGIC: &[u8; 8] = b"PNLICKPT";
pub const VERSION: u32 = 1;

/// A decoded checkpoint: the parameters plus the opaque config text.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: String,
    pub store: ParamStore,
}

pub fn encode(config: &str, store: &ParamStore) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + store.num_values() * 24);
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    put_u32(&mut out, config.len() as u32);
    out.extend_from_slice(config.as_bytes());
    out.extend_from_slice(&store.optimizer.rho.to_le_bytes());
    out.extend_from_slice(&store.optimizer.eps.to_le_bytes());
    put_u32(&mut out, store.len() as u32);
    for (_, p) in store.iter() {
        put_u32(&mut out, p.name.len() as u32);
        out.extend_from_slice(p.name.as_bytes());
        put_u32(&mut out, p.value.rank() as u32);
        for &d in p.value.shape() {
            put_u32(&mut out, d as u32);
        }
        for xs in [p.value.data(), &p.sq_grad, &p.sq_delta] {
            for x in xs {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
    }
    out
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], AutodiffError> {
        if self.bytes.len() - self.pos < n {
            return Err(AutodiffError::Checkpoint(format!("truncated while reading {what} at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32, AutodiffError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self, what: &str) -> Result<f64, AutodiffError> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>, AutodiffError> {
        let len = n.checked_mul(8).ok_or_else(|| AutodiffError::Checkpoint(format!("{what} too large")))?;
        let raw = self.take(len, what)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }

    fn string(&mut self, n: usize, what: &str) -> Result<String, AutodiffError> {
        let raw = self.take(n, what)?;
        String::from_utf8(raw.to_vec()).map_err(|_| AutodiffError::Checkpoint(format!("{what} is not UTF-8")))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint, AutodiffError> {
    let bad = |m: String| AutodiffError::Checkpoint(m);
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8, "magic")? != MAGIC {
        return Err(bad("bad magic".into()));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let config_len = r.u32("config length")? as usize;
    let config = r.string(config_len, "config")?;
    let rho = r.f64("rho")?;
    let eps = r.f64("eps")?;
    if !(rho > 0.0 && rho < 1.0) || !(eps > 0.0 && eps.is_finite()) {
        return Err(bad(format!("invalid optimizer settings rho={rho} eps={eps}")));
    }
    let mut store = ParamStore::new(AdaDelta { rho, eps });
    let count = r.u32("parameter count")?;
    for k in 0..count {
        let name_len = r.u32("name length")? as usize;
        let name = r.string(name_len, "parameter name")?;
        let rank = r.u32("rank")? as usize;
        if !(1..=3).contains(&rank) {
            return Err(bad(format!("parameter {k} ({name}): rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank);
        let mut n: usize = 1;
        for _ in 0..rank {
            let d = r.u32("dimension")? as usize;
            n = n.checked_mul(d).ok_or_else(|| bad(format!("parameter {name}: size overflow")))?;
            shape.push(d);
        }
        let value = Tensor::new(shape, r.f64s(n, "values")?)?;
        let sq_grad = r.f64s(n, "sq_grad")?;
        let sq_delta = r.f64s(n, "sq_delta")?;
        store.insert(Param { name, value, sq_grad, sq_delta })?;
    }
    if r.pos != bytes.len() {
        return Err(bad(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(Checkpoint { config, store })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_store() -> ParamStore {
        let mut s = ParamStore::new(AdaDelta { rho: 0.9, eps: 1e-8 });
        s.add("emb", Tensor::matrix(2, 3, vec![0.5, -1.0, 2.0, 3.0, 1e-300, -0.0]).unwrap()).unwrap();
        s.add("T", Tensor::new(vec![1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap()).unwrap();
        s
    }

    #[test]
    fn round_trip() {
        let s = sample_store();
        let bytes = encode("{\"kind\":\"x\"}", &s);
        let back = decode(&bytes).unwrap();
        assert_eq!(back.config, "{\"kind\":\"x\"}");
        assert_eq!(back.store, s);
        assert_eq!(encode(&back.config, &back.store), bytes);
    }

    #[test]
    fn header_layout() {
        let bytes = encode("ab", &ParamStore::default());
        assert_eq!(&bytes[..8], MAGIC);
        assert_eq!(&bytes[8..12], &1u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &2u32.to_le_bytes());
        assert_eq!(&bytes[16..18], b"ab");
        assert_eq!(bytes.len(), 18 + 8 + 8 + 4);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = encode("", &sample_store());
        for cut in [0, 7, 12, 30, bytes.len() - 1] {
            assert!(decode(&bytes[..cut]).is_err(), "cut at {cut}");
        }
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode(&extra).is_err());
        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(decode(&magic).is_err());
    }

    #[test]
    fn huge_claimed_sizes_fail_cleanly() {
        let mut bytes = encode("", &ParamStore::default());
        let n = bytes.len();
        bytes[n - 4..].copy_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.push(b'w');
        bytes.extend_from_slice(&3u32.to_le_bytes());
        for _ in 0..3 {
            bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        }
        assert!(decode(&bytes).is_err());
    }
}
