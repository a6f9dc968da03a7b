//! Binary container for final iterates. Layout (all integers and floats
//! little-endian):
//!
//! ```text
//! magic    4 bytes  "TSIT"
//! version  u32      1
//! format   u32      0 = Tucker, 1 = TT
//! d        u32
//! dims     d × u64
//! ranks    Tucker: d × u64 (multilinear ranks)
//!          TT:     (d + 1) × u64 (r_0 = 1, ..., r_d = 1)
//! payload  f64 values
//!          Tucker: core (r_1 ⋯ r_d entries, first index fastest), then each
//!                  factor U_μ column-major (n_μ × r_μ)
//!          TT:     cores μ = 0..d-1, core μ holding r_μ·n_μ·r_{μ+1} entries
//!                  with (a, i, b) at a + r_μ (i + n_μ b)
//! ```

use std::io::{Read, Write};
use std::path::Path;

use tensolve_core::tensor::{DenseTensor, Mat};
use tensolve_core::tt::TtTensor;
use tensolve_core::tucker::TuckerTensor;

use crate::CliError;

const MAGIC: &[u8; 4] = b"TSIT";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Iterate {
    Tucker(TuckerTensor),
    Tt(TtTensor),
}

impl Iterate {
    pub fn dims(&self) -> Vec<usize> {
        match self {
            Iterate::Tucker(x) => x.dims(),
            Iterate::Tt(x) => x.dims(),
        }
    }
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Container(msg.into())
}

pub fn write_to(w: &mut impl Write, it: &Iterate) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Io(e.to_string());
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    let dims = it.dims();
    let (tag, ranks, payload): (u32, Vec<usize>, Vec<&[f64]>) = match it {
        Iterate::Tucker(x) => {
            let mut p: Vec<&[f64]> = vec![x.core.data()];
            p.extend(x.factors.iter().map(|u| u.as_slice()));
            (0, x.ranks(), p)
        }
        Iterate::Tt(x) => (1, x.ranks(), x.cores().iter().map(|c| c.data()).collect()),
    };
    buf.extend_from_slice(&tag.to_le_bytes());
    buf.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for v in dims.iter().chain(ranks.iter()) {
        buf.extend_from_slice(&(*v as u64).to_le_bytes());
    }
    for block in payload {
        for v in block {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&buf).map_err(io)
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, k: usize) -> Result<&[u8], CliError> {
        let end = self.pos.checked_add(k).filter(|&e| e <= self.data.len()).ok_or_else(|| bad("truncated file"))?;
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32, CliError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<usize, CliError> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().unwrap());
        usize::try_from(v).map_err(|_| bad("size does not fit"))
    }
    fn f64s(&mut self, k: usize) -> Result<Vec<f64>, CliError> {
        let bytes = self.take(k.checked_mul(8).ok_or_else(|| bad("size overflow"))?)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

pub fn read_from(r: &mut impl Read) -> Result<Iterate, CliError> {
    let mut data = Vec::new();
    r.read_to_end(&mut data).map_err(|e| CliError::Io(e.to_string()))?;
    let mut c = Cursor { data: &data, pos: 0 };
    if c.take(4)? != MAGIC {
        return Err(bad("not an iterate file (bad magic)"));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let tag = c.u32()?;
    let d = c.u32()? as usize;
    if d == 0 || d > 1024 {
        return Err(bad(format!("implausible order {d}")));
    }
    let dims = (0..d).map(|_| c.u64()).collect::<Result<Vec<_>, _>>()?;
    let size_err = |e: tensolve_core::error::Error| bad(e.to_string());
    let it = match tag {
        0 => {
            let ranks = (0..d).map(|_| c.u64()).collect::<Result<Vec<_>, _>>()?;
            let core_len = ranks.iter().try_fold(1usize, |a, &r| a.checked_mul(r)).ok_or_else(|| bad("size overflow"))?;
            let core = DenseTensor::new(ranks.clone(), c.f64s(core_len)?).map_err(size_err)?;
            let mut factors = Vec::with_capacity(d);
            for (&n, &r) in dims.iter().zip(&ranks) {
                factors.push(Mat::from_vec(n, r, c.f64s(n.checked_mul(r).ok_or_else(|| bad("size overflow"))?)?));
            }
            Iterate::Tucker(TuckerTensor::new(core, factors).map_err(size_err)?)
        }
        1 => {
            let ranks = (0..=d).map(|_| c.u64()).collect::<Result<Vec<_>, _>>()?;
            let mut cores = Vec::with_capacity(d);
            for m in 0..d {
                let len = [ranks[m], dims[m], ranks[m + 1]].iter().try_fold(1usize, |a, &r| a.checked_mul(r)).ok_or_else(|| bad("size overflow"))?;
                cores.push(DenseTensor::new(vec![ranks[m], dims[m], ranks[m + 1]], c.f64s(len)?).map_err(size_err)?);
            }
            Iterate::Tt(TtTensor::new(cores).map_err(size_err)?)
        }
        t => return Err(bad(format!("unknown format tag {t}"))),
    };
    if c.pos != data.len() {
        return Err(bad("trailing bytes after payload"));
    }
    Ok(it)
}

pub fn save(path: &Path, it: &Iterate) -> Result<(), CliError> {
    let mut f = std::fs::File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    write_to(&mut f, it)
}

pub fn load(path: &Path) -> Result<Iterate, CliError> {
    let mut f = std::fs::File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    read_from(&mut f)
}
