//! `.ten` files: `u32` rank, `rank` x `u32` dims, then the `f32` data, all little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub fn write_ten(t: &Tensor, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(&(t.rank() as u32).to_le_bytes())?;
    for &d in t.shape() {
        let d = u32::try_from(d).map_err(|_| Error::Config(format!("dimension {d} does not fit u32")))?;
        out.write_all(&d.to_le_bytes())?;
    }
    for v in t.data() {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_ten(path: &Path) -> Result<Tensor> {
    let mut r = BufReader::new(File::open(path)?);
    let mut word = [0u8; 4];
    let mut offset = 0u64;
    let mut next = |r: &mut BufReader<File>| -> Result<[u8; 4]> {
        r.read_exact(&mut word)
            .map_err(|_| Error::parse(format!("byte {offset}"), "unexpected end of .ten file"))?;
        offset += 4;
        Ok(word)
    };
    let rank = u32::from_le_bytes(next(&mut r)?) as usize;
    if rank == 0 || rank > 8 {
        return Err(Error::parse("byte 0", format!("implausible rank {rank}")));
    }
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        shape.push(u32::from_le_bytes(next(&mut r)?) as usize);
    }
    let n: usize = shape.iter().product();
    let mut data = Vec::with_capacity(n);
    for _ in 0..n {
        data.push(f32::from_le_bytes(next(&mut r)?));
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::parse(
            format!("byte {}", 4 * (1 + rank + n)),
            "trailing bytes after tensor data",
        ));
    }
    Tensor::new(shape, data)
}
