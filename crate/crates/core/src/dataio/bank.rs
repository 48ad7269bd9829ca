//! Binary feature-bank container.
//!
//! Layout (little-endian throughout):
//!
//! ```text
//! offset  size  field
//!      0     4  magic "FBNK"
//!      4     1  format version (1)
//!      5     1  endianness tag, b'L'
//!      6     1  flags: bit0 instance ids, bit1 frame indices, bit2 class names
//!      7     1  reserved (0)
//!      8     4  d   (u32)
//!     12     4  K   (u32)
//!     16     8  n   (u64)
//!     24        features  n·d × f32
//!               labels    n × i32
//!               instance  n × i32   (bit0)
//!               frames    n × i32   (bit1)
//!               names     K × (u32 byte length, UTF-8 bytes)   (bit2)
//! ```

use std::fs;
use std::path::Path;

use crate::binio::{usize_from, ByteReader};
use crate::error::{Error, Result};

use super::FeatureBank;

pub const BANK_MAGIC: &[u8; 4] = b"FBNK";
pub const BANK_VERSION: u8 = 1;
const LITTLE_ENDIAN_TAG: u8 = b'L';
const FLAG_INSTANCES: u8 = 1;
const FLAG_FRAMES: u8 = 2;
const FLAG_NAMES: u8 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BankHeader {
    pub version: u8,
    pub dim: u32,
    pub num_classes: u32,
    pub n: u64,
    pub flags: u8,
}

impl BankHeader {
    pub const LEN: usize = 24;

    pub fn has_instances(&self) -> bool {
        self.flags & FLAG_INSTANCES != 0
    }

    pub fn has_frames(&self) -> bool {
        self.flags & FLAG_FRAMES != 0
    }

    pub fn has_names(&self) -> bool {
        self.flags & FLAG_NAMES != 0
    }

    fn read(r: &mut ByteReader<'_>) -> Result<Self> {
        let magic = r.take(4)?;
        if magic != BANK_MAGIC {
            return Err(Error::BadMagic {
                found: magic.to_vec(),
            });
        }
        let version = r.u8()?;
        if version != BANK_VERSION {
            return Err(Error::VersionUnsupported(version));
        }
        let endian = r.u8()?;
        if endian != LITTLE_ENDIAN_TAG {
            return Err(Error::InvalidBank(format!("unknown endianness tag {endian:#04x}")));
        }
        let flags = r.u8()?;
        if flags & !(FLAG_INSTANCES | FLAG_FRAMES | FLAG_NAMES) != 0 {
            return Err(Error::InvalidBank(format!("unknown flag bits {flags:#04x}")));
        }
        let _reserved = r.u8()?;
        Ok(Self {
            version,
            dim: r.u32()?,
            num_classes: r.u32()?,
            n: r.u64()?,
            flags,
        })
    }
}

pub fn encode_bank(bank: &FeatureBank) -> Result<Vec<u8>> {
    bank.validate()?;
    let dim = u32::try_from(bank.dim).map_err(|_| Error::BadShape("dimension exceeds u32".into()))?;
    let k = u32::try_from(bank.num_classes)
        .map_err(|_| Error::BadShape("class count exceeds u32".into()))?;
    let mut flags = 0;
    if bank.instance_ids.is_some() {
        flags |= FLAG_INSTANCES;
    }
    if bank.frame_indices.is_some() {
        flags |= FLAG_FRAMES;
    }
    if bank.class_names.is_some() {
        flags |= FLAG_NAMES;
    }
    let n = bank.len();
    let mut out = Vec::with_capacity(BankHeader::LEN + 4 * n * (bank.dim + 3));
    out.extend_from_slice(BANK_MAGIC);
    out.extend_from_slice(&[BANK_VERSION, LITTLE_ENDIAN_TAG, flags, 0]);
    out.extend_from_slice(&dim.to_le_bytes());
    out.extend_from_slice(&k.to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    for v in &bank.features {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for &l in &bank.labels {
        let l = i32::try_from(l).map_err(|_| Error::BadShape(format!("label {l} exceeds i32")))?;
        out.extend_from_slice(&l.to_le_bytes());
    }
    for col in [&bank.instance_ids, &bank.frame_indices].into_iter().flatten() {
        for v in col {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    if let Some(names) = &bank.class_names {
        for name in names {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
        }
    }
    Ok(out)
}

pub fn decode_bank(buf: &[u8]) -> Result<FeatureBank> {
    let mut r = ByteReader::new(buf);
    let header = BankHeader::read(&mut r)?;
    let dim = header.dim as usize;
    let k = header.num_classes as usize;
    let n = usize_from(header.n, "row count")?;
    if dim == 0 {
        return Err(Error::InvalidBank("dimension must be at least 1".into()));
    }
    let cells = n
        .checked_mul(dim)
        .ok_or_else(|| Error::BadShape("declared bank size overflows".into()))?;
    r.require(cells, 4)?;
    let mut features = Vec::with_capacity(cells);
    for i in 0..cells {
        let v = r.f32()?;
        if !v.is_finite() {
            return Err(Error::NonFiniteFeature {
                row: i / dim,
                col: i % dim,
            });
        }
        features.push(v);
    }
    r.require(n, 4)?;
    let labels = (0..n)
        .map(|row| {
            let l = r.i32()?;
            u32::try_from(l).map_err(|_| Error::InvalidBank(format!("row {row}: negative label {l}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut int_column = |present: bool| -> Result<Option<Vec<i32>>> {
        if !present {
            return Ok(None);
        }
        r.require(n, 4)?;
        Ok(Some((0..n).map(|_| r.i32()).collect::<Result<Vec<_>>>()?))
    };
    let instance_ids = int_column(header.has_instances())?;
    let frame_indices = int_column(header.has_frames())?;
    let class_names = if header.has_names() {
        let mut names = Vec::with_capacity(k.min(1 << 16));
        for i in 0..k {
            let len = r.u32()? as usize;
            let bytes = r.take(len)?;
            let name = std::str::from_utf8(bytes)
                .map_err(|_| Error::InvalidBank(format!("class name {i} is not UTF-8")))?;
            names.push(name.to_owned());
        }
        Some(names)
    } else {
        None
    };
    r.finish()?;
    FeatureBank::new(dim, k, features, labels, instance_ids, frame_indices, class_names)
}

pub fn bank_write(bank: &FeatureBank, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_bank(bank)?;
    fs::write(path, bytes).map_err(|e| Error::file(path, e))
}

pub fn bank_read(path: impl AsRef<Path>) -> Result<FeatureBank> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::file(path, e))?;
    decode_bank(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_bank() -> FeatureBank {
        FeatureBank::new(
            2,
            2,
            vec![0.5, -1.25, 3.0, 1e-7, f32::MIN_POSITIVE, -0.0],
            vec![0, 1, 1],
            Some(vec![0, 1, 1]),
            Some(vec![0, 0, 1]),
            Some(vec!["cup".into(), "plüg".into()]),
        )
        .unwrap()
    }

    #[test]
    fn header_layout() {
        let bytes = encode_bank(&small_bank()).unwrap();
        assert_eq!(&bytes[..4], b"FBNK");
        assert_eq!(bytes[4], 1);
        assert_eq!(bytes[5], b'L');
        assert_eq!(bytes[6], 7);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(bytes[16..24].try_into().unwrap()), 3);
        assert_eq!(f32::from_le_bytes(bytes[24..28].try_into().unwrap()), 0.5);
    }

    #[test]
    fn round_trip_with_and_without_optional_columns() {
        let bank = small_bank();
        let back = decode_bank(&encode_bank(&bank).unwrap()).unwrap();
        assert_eq!(back, bank);
        assert_eq!(back.features[5].to_bits(), (-0.0f32).to_bits());

        let plain = FeatureBank::new(1, 1, vec![1.0, 2.0], vec![0, 0], None, None, None).unwrap();
        assert_eq!(decode_bank(&encode_bank(&plain).unwrap()).unwrap(), plain);
    }

    #[test]
    fn truncation_reports_offset() {
        let bytes = encode_bank(&small_bank()).unwrap();
        let cut = &bytes[..30];
        match decode_bank(cut) {
            Err(Error::TruncatedPayload { offset, .. }) => assert_eq!(offset, 30),
            other => panic!("expected truncation, got {other:?}"),
        }
        assert!(matches!(decode_bank(&bytes[..10]), Err(Error::TruncatedPayload { offset: 10, .. })));
    }

    #[test]
    fn corrupt_header() {
        let mut bytes = encode_bank(&small_bank()).unwrap();
        bytes[4] = 2;
        assert!(matches!(decode_bank(&bytes), Err(Error::VersionUnsupported(2))));
        bytes[0] = b'X';
        assert!(matches!(decode_bank(&bytes), Err(Error::BadMagic { .. })));
    }

    #[test]
    fn nan_rejected_on_write() {
        let mut bank = small_bank();
        bank.features[3] = f32::NAN;
        assert!(matches!(encode_bank(&bank), Err(Error::NonFiniteFeature { row: 1, col: 1 })));
    }

    #[test]
    fn nan_rejected_on_read() {
        let mut bytes = encode_bank(&small_bank()).unwrap();
        bytes[24 + 8..24 + 12].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(decode_bank(&bytes), Err(Error::NonFiniteFeature { row: 1, col: 0 })));
    }
}
