//! Binary checkpoints of a chain and its generator.
//!
//! All integers and floats are little-endian:
//!
//! ```text
//! magic     8 bytes  "SCCHAIN\0"
//! version   u32
//! flags     u32      bit 0: chain present, bit 1: generator present
//! chain     time f64, seed u64, steps u64, reformats u64, N u64, M u64, d u64,
//!           then per point: M × (re f64, im f64) coordinates, d × (re f64, im f64) state
//! generator seed [u8; 32], stream u64, word position u128
//! extra     length u64, then that many opaque bytes
//! checksum  u64      FNV-1a of every preceding byte
//! ```

use std::io::{Read, Write};

use num_complex::Complex64;
use rand::SeedableRng;
use thiserror::Error;

use super::{ChainError, ChainMeta, ChainState, SimRng};

pub const MAGIC: [u8; 8] = *b"SCCHAIN\0";
pub const VERSION: u32 = 1;

const FLAG_CHAIN: u32 = 1;
const FLAG_RNG: u32 = 2;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("checkpoint checksum mismatch")]
    Checksum,
    #[error("checkpoint holds an invalid chain: {0}")]
    Chain(#[from] ChainError),
    #[error("checkpoint header is implausible: {0}")]
    Header(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub chain: Option<ChainState>,
    pub rng: Option<SimRng>,
    pub extra: Vec<u8>,
}

struct Fnv(u64);

impl Fnv {
    fn new() -> Self {
        Self(0xcbf2_9ce4_8422_2325)
    }

    fn update(&mut self, bytes: &[u8]) {
        for b in bytes {
            self.0 ^= *b as u64;
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
}

struct Hashing<W> {
    inner: W,
    hash: Fnv,
}

impl<W: Write> Hashing<W> {
    fn put(&mut self, bytes: &[u8]) -> std::io::Result<()> {
        self.hash.update(bytes);
        self.inner.write_all(bytes)
    }

    fn u64(&mut self, x: u64) -> std::io::Result<()> {
        self.put(&x.to_le_bytes())
    }

    fn complex(&mut self, z: &Complex64) -> std::io::Result<()> {
        self.put(&z.re.to_le_bytes())?;
        self.put(&z.im.to_le_bytes())
    }
}

pub fn write_checkpoint<W: Write>(w: W, ckpt: &Checkpoint) -> Result<(), CheckpointError> {
    let mut out = Hashing {
        inner: w,
        hash: Fnv::new(),
    };
    out.put(&MAGIC)?;
    out.put(&VERSION.to_le_bytes())?;
    let flags =
        ckpt.chain.as_ref().map_or(0, |_| FLAG_CHAIN) | ckpt.rng.as_ref().map_or(0, |_| FLAG_RNG);
    out.put(&flags.to_le_bytes())?;
    if let Some(chain) = &ckpt.chain {
        out.put(&chain.time().to_le_bytes())?;
        out.u64(chain.meta.seed)?;
        out.u64(chain.meta.steps)?;
        out.u64(chain.meta.reformats)?;
        for x in [chain.len(), chain.n_modes(), chain.dim()] {
            out.u64(x as u64)?;
        }
        for p in chain.points() {
            for z in p.alpha.iter().chain(p.phi) {
                out.complex(z)?;
            }
        }
    }
    if let Some(rng) = &ckpt.rng {
        out.put(&rng.get_seed())?;
        out.u64(rng.get_stream())?;
        out.put(&rng.get_word_pos().to_le_bytes())?;
    }
    out.u64(ckpt.extra.len() as u64)?;
    out.put(&ckpt.extra)?;
    let sum = out.hash.0;
    out.inner.write_all(&sum.to_le_bytes())?;
    out.inner.flush()?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                CheckpointError::Io(std::io::Error::new(
                    std::io::ErrorKind::UnexpectedEof,
                    "truncated checkpoint",
                ))
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], CheckpointError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    fn complex(&mut self) -> Result<Complex64, CheckpointError> {
        Ok(Complex64::new(self.f64()?, self.f64()?))
    }
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Checkpoint, CheckpointError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() < MAGIC.len() || bytes[..MAGIC.len()] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    if bytes.len() < MAGIC.len() + 8 + 8 {
        return Err(CheckpointError::Checksum);
    }
    let (body, sum) = bytes.split_at(bytes.len() - 8);
    let mut hash = Fnv::new();
    hash.update(body);
    if hash.0 != u64::from_le_bytes(sum.try_into().expect("8 bytes")) {
        return Err(CheckpointError::Checksum);
    }
    let mut cur = Cursor {
        bytes: body,
        pos: MAGIC.len(),
    };
    let version = cur.u32()?;
    if version != VERSION {
        return Err(CheckpointError::Version(version));
    }
    let flags = cur.u32()?;

    let chain = if flags & FLAG_CHAIN != 0 {
        let time = cur.f64()?;
        let meta = ChainMeta {
            seed: cur.u64()?,
            steps: cur.u64()?,
            reformats: cur.u64()?,
        };
        let (n, m, d) = (
            cur.u64()? as usize,
            cur.u64()? as usize,
            cur.u64()? as usize,
        );
        let needed = n.checked_mul(m + d).and_then(|x| x.checked_mul(16));
        if needed.is_none_or(|x| x > body.len()) {
            return Err(CheckpointError::Header(format!(
                "N = {n}, M = {m}, d = {d} exceeds file size"
            )));
        }
        let mut alphas = Vec::with_capacity(n * m);
        let mut phis = Vec::with_capacity(n * d);
        for _ in 0..n {
            for _ in 0..m {
                alphas.push(cur.complex()?);
            }
            for _ in 0..d {
                phis.push(cur.complex()?);
            }
        }
        let mut chain = ChainState::new(time, m, d, alphas, phis)?;
        chain.meta = meta;
        Some(chain)
    } else {
        None
    };

    let rng = if flags & FLAG_RNG != 0 {
        let seed: [u8; 32] = cur.array()?;
        let stream = cur.u64()?;
        let word_pos = u128::from_le_bytes(cur.array()?);
        let mut rng = SimRng::from_seed(seed);
        rng.set_stream(stream);
        rng.set_word_pos(word_pos);
        Some(rng)
    } else {
        None
    };

    let len = cur.u64()? as usize;
    let extra = cur.take(len)?.to_vec();
    if cur.pos != body.len() {
        return Err(CheckpointError::Header(
            "trailing bytes after extra section".into(),
        ));
    }
    Ok(Checkpoint { chain, rng, extra })
}
