//! Binary parameter checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "MCFCKPT\0"
//! version  u32      1
//! meta     u32 length + UTF-8 bytes (free-form, e.g. config hash)
//! count    u32
//! count x { name: u32 length + UTF-8; ndim: u32; dims: ndim x u64; data: prod(dims) x f64 }
//! ```

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use super::{NnError, ParamStore, Tensor};

const MAGIC: &[u8; 8] = b"MCFCKPT\0";
const VERSION: u32 = 1;

/// Decoded checkpoint contents.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: String,
    pub arrays: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn from_store(store: &ParamStore, meta: &str) -> Self {
        Self {
            meta: meta.to_string(),
            arrays: store.iter().map(|(n, v)| (n.to_string(), v.clone())).collect(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.arrays.iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    /// Copies every array into `store`, which must hold exactly the same names and shapes.
    pub fn restore_into(&self, store: &mut ParamStore) -> Result<(), NnError> {
        if self.arrays.len() != store.len() {
            return Err(NnError::Checkpoint(format!(
                "checkpoint has {} arrays, model expects {}",
                self.arrays.len(),
                store.len()
            )));
        }
        for (name, value) in &self.arrays {
            let target = store
                .get_mut(name)
                .ok_or_else(|| NnError::Checkpoint(format!("unexpected array {name:?}")))?;
            if target.dim() != value.dim() {
                return Err(NnError::Checkpoint(format!(
                    "array {name:?} has shape {:?}, model expects {:?}",
                    value.dim(),
                    target.dim()
                )));
            }
            target.assign(value);
        }
        Ok(())
    }
}

fn put_str<W: Write>(w: &mut W, s: &str) -> std::io::Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

pub fn write_checkpoint<W: Write>(w: &mut W, ckpt: &Checkpoint) -> Result<(), NnError> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    put_str(w, &ckpt.meta)?;
    w.write_all(&(ckpt.arrays.len() as u32).to_le_bytes())?;
    for (name, value) in &ckpt.arrays {
        put_str(w, name)?;
        w.write_all(&2u32.to_le_bytes())?;
        w.write_all(&(value.nrows() as u64).to_le_bytes())?;
        w.write_all(&(value.ncols() as u64).to_le_bytes())?;
        for v in value.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn get_u32<R: Read>(r: &mut R) -> Result<u32, NnError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn get_u64<R: Read>(r: &mut R) -> Result<u64, NnError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn get_str<R: Read>(r: &mut R) -> Result<String, NnError> {
    let len = get_u32(r)? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| NnError::Checkpoint("invalid UTF-8 string".into()))
}

pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<Checkpoint, NnError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(NnError::Checkpoint("bad magic".into()));
    }
    let version = get_u32(r)?;
    if version != VERSION {
        return Err(NnError::Checkpoint(format!("unsupported version {version}")));
    }
    let meta = get_str(r)?;
    let count = get_u32(r)? as usize;
    let mut arrays = Vec::with_capacity(count);
    for _ in 0..count {
        let name = get_str(r)?;
        let ndim = get_u32(r)?;
        if ndim != 2 {
            return Err(NnError::Checkpoint(format!("array {name:?} has {ndim} dims")));
        }
        let rows = get_u64(r)? as usize;
        let cols = get_u64(r)? as usize;
        let mut data = Vec::with_capacity(rows * cols);
        let mut b = [0u8; 8];
        for _ in 0..rows * cols {
            r.read_exact(&mut b)?;
            data.push(f64::from_le_bytes(b));
        }
        let arr = Array2::from_shape_vec((rows, cols), data)
            .map_err(|e| NnError::Checkpoint(e.to_string()))?;
        arrays.push((name, arr));
    }
    Ok(Checkpoint { meta, arrays })
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<(), NnError> {
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, ckpt)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, NnError> {
    let bytes = std::fs::read(path)?;
    read_checkpoint(&mut bytes.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn sample_store() -> ParamStore {
        let mut s = ParamStore::new();
        s.add("a.w", array![[1.0, 2.0, 3.0], [4.0, 5.0, -6.5]]).unwrap();
        s.add("a.b", array![[0.125, f64::MIN_POSITIVE, -0.0]]).unwrap();
        s
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ckpt = Checkpoint::from_store(&sample_store(), "hash=abc");
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &ckpt).unwrap();
        assert_eq!(&buf[..8], MAGIC);
        let back = read_checkpoint(&mut buf.as_slice()).unwrap();
        assert_eq!(back.meta, "hash=abc");
        for ((n1, v1), (n2, v2)) in back.arrays.iter().zip(&ckpt.arrays) {
            assert_eq!(n1, n2);
            assert!(v1.iter().zip(v2.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }

    #[test]
    fn restore_validates_names_and_shapes() {
        let ckpt = Checkpoint::from_store(&sample_store(), "");
        let mut target = sample_store();
        target.get_mut("a.w").unwrap().fill(0.0);
        ckpt.restore_into(&mut target).unwrap();
        assert_eq!(target.get("a.w").unwrap()[[1, 2]], -6.5);

        let mut wrong_shape = ParamStore::new();
        wrong_shape.add("a.w", Array2::zeros((3, 2))).unwrap();
        wrong_shape.add("a.b", Array2::zeros((1, 3))).unwrap();
        assert!(ckpt.restore_into(&mut wrong_shape).is_err());

        let mut wrong_name = ParamStore::new();
        wrong_name.add("a.w", Array2::zeros((2, 3))).unwrap();
        wrong_name.add("c.b", Array2::zeros((1, 3))).unwrap();
        assert!(ckpt.restore_into(&mut wrong_name).is_err());
    }

    #[test]
    fn rejects_bad_header() {
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &Checkpoint::from_store(&sample_store(), "")).unwrap();
        buf[0] = b'X';
        assert!(read_checkpoint(&mut buf.as_slice()).is_err());
        let mut buf2 = Vec::new();
        write_checkpoint(&mut buf2, &Checkpoint::from_store(&sample_store(), "")).unwrap();
        buf2[8] = 9;
        assert!(read_checkpoint(&mut buf2.as_slice()).is_err());
        assert!(read_checkpoint(&mut &buf2[..20]).is_err());
    }
}
