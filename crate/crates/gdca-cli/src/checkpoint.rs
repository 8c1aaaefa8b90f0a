//! Checkpoint files: named f32 tensors plus the extractor seed.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic "GDCA" | version u32 (=1) | extractor_seed u64 | count u32
//! then per tensor, in ascending name order:
//!   name_len u16 | name utf-8 | ndim u8 | dims u32 × ndim | data f32 × numel
//! ```
//!
//! Writes go through a temp file in the same directory followed by a
//! rename, so a crash never leaves a half-written checkpoint behind.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use gdca_core::Tensor;

pub const MAGIC: [u8; 4] = *b"GDCA";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct CheckpointError(pub String);

type Entries = BTreeMap<String, Tensor<f32>>;

pub fn encode(entries: &Entries, extractor_seed: u64) -> Result<Vec<u8>, CheckpointError> {
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&extractor_seed.to_le_bytes());
    let count: u32 = entries
        .len()
        .try_into()
        .map_err(|_| CheckpointError(format!("too many tensors: {}", entries.len())))?;
    out.extend_from_slice(&count.to_le_bytes());
    for (name, tensor) in entries {
        let name_len: u16 = name
            .len()
            .try_into()
            .map_err(|_| CheckpointError(format!("tensor name too long: {} bytes", name.len())))?;
        let ndim: u8 = tensor.shape().len().try_into().map_err(|_| {
            CheckpointError(format!("tensor {name} has {} dims", tensor.shape().len()))
        })?;
        out.extend_from_slice(&name_len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(ndim);
        for &d in tensor.shape() {
            let d: u32 = d
                .try_into()
                .map_err(|_| CheckpointError(format!("tensor {name} dim {d} exceeds u32")))?;
            out.extend_from_slice(&d.to_le_bytes());
        }
        for &v in tensor.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<(Entries, u64), CheckpointError> {
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize, what: &str| -> Result<&[u8], CheckpointError> {
        if bytes.len() < *pos + n {
            return Err(CheckpointError(format!(
                "truncated reading {what}: need {} bytes, file has {} (at offset {})",
                *pos + n,
                bytes.len(),
                *pos
            )));
        }
        let s = &bytes[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };

    let magic = take(&mut pos, 4, "magic")?;
    if magic != MAGIC {
        return Err(CheckpointError(format!(
            "bad magic: found bytes {magic:?}, expected {MAGIC:?}"
        )));
    }
    let version = u32::from_le_bytes(take(&mut pos, 4, "version")?.try_into().unwrap());
    if version != VERSION {
        return Err(CheckpointError(format!(
            "unsupported version {version}, expected {VERSION}"
        )));
    }
    let extractor_seed = u64::from_le_bytes(take(&mut pos, 8, "extractor seed")?.try_into().unwrap());
    let count = u32::from_le_bytes(take(&mut pos, 4, "tensor count")?.try_into().unwrap());

    let mut entries = Entries::new();
    for i in 0..count {
        let name_len =
            u16::from_le_bytes(take(&mut pos, 2, "name length")?.try_into().unwrap()) as usize;
        let name = std::str::from_utf8(take(&mut pos, name_len, "name")?)
            .map_err(|e| CheckpointError(format!("tensor {i} name is not utf-8: {e}")))?
            .to_string();
        let ndim = take(&mut pos, 1, "ndim")?[0] as usize;
        let mut shape = Vec::with_capacity(ndim);
        let mut numel = 1usize;
        for _ in 0..ndim {
            let d = u32::from_le_bytes(take(&mut pos, 4, "dim")?.try_into().unwrap()) as usize;
            numel = numel
                .checked_mul(d)
                .ok_or_else(|| CheckpointError(format!("tensor {name} element count overflows")))?;
            shape.push(d);
        }
        let raw = take(&mut pos, numel * 4, &format!("data of {name}"))?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let tensor = Tensor::new(shape, data)
            .map_err(|e| CheckpointError(format!("tensor {name}: {e}")))?;
        if entries.insert(name.clone(), tensor).is_some() {
            return Err(CheckpointError(format!("duplicate tensor name {name}")));
        }
    }
    if pos != bytes.len() {
        return Err(CheckpointError(format!(
            "trailing data: parsed {pos} bytes of {}",
            bytes.len()
        )));
    }
    Ok((entries, extractor_seed))
}

pub fn save(path: &Path, entries: &Entries, extractor_seed: u64) -> Result<(), CheckpointError> {
    let bytes = encode(entries, extractor_seed)?;
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, &bytes)
        .map_err(|e| CheckpointError(format!("cannot write {}: {e}", tmp.display())))?;
    fs::rename(&tmp, path)
        .map_err(|e| CheckpointError(format!("cannot rename into {}: {e}", path.display())))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(Entries, u64), CheckpointError> {
    let bytes = fs::read(path)
        .map_err(|e| CheckpointError(format!("cannot read {}: {e}", path.display())))?;
    decode(&bytes).map_err(|e| CheckpointError(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_map_is_exactly_twenty_bytes() {
        let bytes = encode(&Entries::new(), 0x1122334455667788).unwrap();
        assert_eq!(bytes.len(), 20);
        let mut expected = Vec::new();
        expected.extend_from_slice(b"GDCA");
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.extend_from_slice(&0x1122334455667788u64.to_le_bytes());
        expected.extend_from_slice(&0u32.to_le_bytes());
        assert_eq!(bytes, expected);
    }

    #[test]
    fn single_tensor_golden_bytes() {
        let mut entries = Entries::new();
        entries.insert("w".to_string(), Tensor::from_vec(vec![1.0f32, 2.0]));
        let bytes = encode(&entries, 7).unwrap();
        let expected: Vec<u8> = vec![
            0x47, 0x44, 0x43, 0x41, // "GDCA"
            0x01, 0x00, 0x00, 0x00, // version 1
            0x07, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, // seed 7
            0x01, 0x00, 0x00, 0x00, // one tensor
            0x01, 0x00, // name is 1 byte
            0x77, // "w"
            0x01, // one dim
            0x02, 0x00, 0x00, 0x00, // dim 2
            0x00, 0x00, 0x80, 0x3f, // 1.0f32
            0x00, 0x00, 0x00, 0x40, // 2.0f32
        ];
        assert_eq!(bytes, expected);
    }

    #[test]
    fn round_trip_is_bitwise_for_up_to_four_dims() {
        let mut entries = Entries::new();
        entries.insert("a".into(), Tensor::from_vec(vec![0.5f32, -0.25, 3e-8]));
        entries.insert(
            "b.weight".into(),
            Tensor::new(vec![2, 3], vec![1.0f32, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap(),
        );
        entries.insert(
            "c".into(),
            Tensor::new(vec![2, 1, 2], vec![-1.5f32, 0.0, f32::MIN_POSITIVE, 9.0]).unwrap(),
        );
        entries.insert(
            "d".into(),
            Tensor::new(vec![1, 2, 1, 2], vec![0.1f32, 0.2, 0.3, 0.4]).unwrap(),
        );
        let bytes = encode(&entries, 99).unwrap();
        let (back, seed) = decode(&bytes).unwrap();
        assert_eq!(seed, 99);
        assert_eq!(back.len(), entries.len());
        for (name, t) in &entries {
            let b = &back[name];
            assert_eq!(b.shape(), t.shape());
            for (x, y) in b.data().iter().zip(t.data()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        // save → load → save is byte-identical
        assert_eq!(encode(&back, seed).unwrap(), bytes);
    }

    #[test]
    fn error_contracts() {
        let good = encode(&Entries::new(), 1).unwrap();

        let mut bad_magic = good.clone();
        bad_magic[0..4].copy_from_slice(b"NOPE");
        let e = decode(&bad_magic).unwrap_err();
        assert!(e.0.contains("78, 79, 80, 69"), "{}", e.0);

        let mut bad_version = good.clone();
        bad_version[4] = 2;
        assert!(decode(&bad_version).unwrap_err().0.contains("version 2"));

        let mut entries = Entries::new();
        entries.insert("w".to_string(), Tensor::from_vec(vec![1.0f32, 2.0]));
        let full = encode(&entries, 7).unwrap();
        assert_eq!(full.len(), 36);
        let truncated = &full[..full.len() - 3];
        let e = decode(truncated).unwrap_err();
        assert!(e.0.contains("truncated"), "{}", e.0);
        assert!(e.0.contains("need 36 bytes, file has 33"), "{}", e.0);
    }

    #[test]
    fn atomic_save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let mut entries = Entries::new();
        entries.insert("x".into(), Tensor::from_vec(vec![42.0f32]));
        save(&path, &entries, 5).unwrap();
        assert!(!path.with_extension("tmp").exists());
        let (back, seed) = load(&path).unwrap();
        assert_eq!(seed, 5);
        assert_eq!(back["x"].data(), &[42.0f32]);
    }
}
