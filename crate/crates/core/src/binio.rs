//! Little-endian byte cursor for the binary container formats.

use crate::error::{Error, Result};

pub(crate) struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let available = self.buf.len() - self.pos;
        if n > available {
            return Err(Error::TruncatedPayload {
                offset: self.buf.len(),
                needed: n - available,
            });
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("slice length checked"))
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.array::<1>()?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    pub fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.array()?))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    pub fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.array()?))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    /// Fails if `count * width` bytes are not available, before allocating.
    pub fn require(&self, count: usize, width: usize) -> Result<()> {
        let needed = count
            .checked_mul(width)
            .ok_or_else(|| Error::BadShape("declared payload size overflows".into()))?;
        let available = self.buf.len() - self.pos;
        if needed > available {
            return Err(Error::TruncatedPayload {
                offset: self.buf.len(),
                needed: needed - available,
            });
        }
        Ok(())
    }

    pub fn finish(self) -> Result<()> {
        match self.buf.len() - self.pos {
            0 => Ok(()),
            extra => Err(Error::TrailingData(extra)),
        }
    }
}

pub(crate) fn usize_from(v: u64, what: &str) -> Result<usize> {
    usize::try_from(v).map_err(|_| Error::BadShape(format!("{what} {v} does not fit in memory")))
}
