//! Binary model files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "CNN1DMDL"
//! version  u32      currently 1
//! L        u32      layer count
//! filters  L x u32
//! maps     L x u32
//! then per layer, in order: weights then biases, f64 little-endian,
//! in the flat layout documented by the cnn module.
//! ```
//!
//! Total size is `16 + 8 L + 8 * param_count` bytes. Round trips are
//! bit-exact.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{CnnModel, CnnStructure};

/// File signature.
pub const MAGIC: [u8; 8] = *b"CNN1DMDL";

/// Current format version.
pub const FORMAT_VERSION: u32 = 1;

/// Model file read failure.
#[derive(Debug, thiserror::Error)]
pub enum ModelIoError {
    #[error("not a model file (bad magic)")]
    BadMagic,
    #[error("unsupported model format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("model file truncated")]
    Truncated,
    #[error("model file declares an invalid structure: {0}")]
    InvalidStructure(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Serializes `model` to `out`.
pub fn write_model<W: Write>(model: &CnnModel, out: &mut W) -> io::Result<()> {
    out.write_all(&MAGIC)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    let s = model.structure();
    out.write_all(&(s.num_layers() as u32).to_le_bytes())?;
    for &f in s.filters() {
        out.write_all(&(f as u32).to_le_bytes())?;
    }
    for &k in s.maps() {
        out.write_all(&(k as u32).to_le_bytes())?;
    }
    for layer in 0..s.num_layers() {
        for &w in &model.weights[layer] {
            out.write_all(&w.to_le_bytes())?;
        }
        for &b in &model.biases[layer] {
            out.write_all(&b.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Deserializes a model from `input`.
pub fn read_model<R: Read>(input: &mut R) -> Result<CnnModel, ModelIoError> {
    let mut magic = [0u8; 8];
    read_exact(input, &mut magic)?;
    if magic != MAGIC {
        return Err(ModelIoError::BadMagic);
    }
    let version = read_u32(input)?;
    if version != FORMAT_VERSION {
        return Err(ModelIoError::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let layers = read_u32(input)? as usize;
    // A sanity bound so a corrupt header cannot demand absurd allocations.
    if layers == 0 || layers > 1024 {
        return Err(ModelIoError::InvalidStructure(format!(
            "layer count {layers} out of range"
        )));
    }
    let mut filters = Vec::with_capacity(layers);
    for _ in 0..layers {
        filters.push(read_u32(input)? as usize);
    }
    let mut maps = Vec::with_capacity(layers);
    for _ in 0..layers {
        maps.push(read_u32(input)? as usize);
    }
    let structure = CnnStructure::new(filters, maps)
        .map_err(|e| ModelIoError::InvalidStructure(e.to_string()))?;

    let mut weights = Vec::with_capacity(layers);
    let mut biases = Vec::with_capacity(layers);
    for layer in 0..layers {
        let n_w = structure.filters()[layer] * structure.maps_in(layer) * structure.maps()[layer];
        let mut w = Vec::with_capacity(n_w);
        for _ in 0..n_w {
            w.push(read_f64(input)?);
        }
        let n_b = structure.maps()[layer];
        let mut b = Vec::with_capacity(n_b);
        for _ in 0..n_b {
            b.push(read_f64(input)?);
        }
        weights.push(w);
        biases.push(b);
    }
    Ok(CnnModel {
        structure,
        weights,
        biases,
    })
}

/// Writes `model` to a file at `path`.
pub fn save_model(model: &CnnModel, path: &Path) -> Result<(), ModelIoError> {
    let mut out = BufWriter::new(File::create(path)?);
    write_model(model, &mut out)?;
    out.flush()?;
    Ok(())
}

/// Reads a model from the file at `path`.
pub fn load_model(path: &Path) -> Result<CnnModel, ModelIoError> {
    let mut input = BufReader::new(File::open(path)?);
    read_model(&mut input)
}

fn read_exact<R: Read>(input: &mut R, buf: &mut [u8]) -> Result<(), ModelIoError> {
    input.read_exact(buf).map_err(|e| {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            ModelIoError::Truncated
        } else {
            ModelIoError::Io(e)
        }
    })
}

fn read_u32<R: Read>(input: &mut R) -> Result<u32, ModelIoError> {
    let mut buf = [0u8; 4];
    read_exact(input, &mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_f64<R: Read>(input: &mut R) -> Result<f64, ModelIoError> {
    let mut buf = [0u8; 8];
    read_exact(input, &mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_model(seed: u64) -> CnnModel {
        let s = CnnStructure::new(vec![3, 3], vec![2, 1]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        CnnModel::xavier_init(s, &mut rng)
    }

    fn to_bytes(model: &CnnModel) -> Vec<u8> {
        let mut buf = Vec::new();
        write_model(model, &mut buf).unwrap();
        buf
    }

    // 1. Round trips are bit-exact.
    #[test]
    fn round_trip_exact() {
        let model = random_model(3);
        let bytes = to_bytes(&model);
        let back = read_model(&mut bytes.as_slice()).unwrap();
        assert_eq!(model, back);
    }

    // 2. File size follows the header + 8 * param_count formula for the
    //    shipped structures.
    #[test]
    fn file_size_formula() {
        for (filters, maps) in [
            (vec![3, 3], vec![2, 1]),
            (vec![5, 1, 9], vec![16, 8, 1]),
            (vec![9, 3, 3, 15], vec![64, 32, 16, 1]),
        ] {
            let s = CnnStructure::new(filters, maps).unwrap();
            let expected = 16 + 8 * s.num_layers() + 8 * s.param_count();
            let bytes = to_bytes(&CnnModel::zeros(s));
            assert_eq!(bytes.len(), expected);
        }
    }

    // 3. Corrupted magic is rejected.
    #[test]
    fn bad_magic_rejected() {
        let mut bytes = to_bytes(&random_model(1));
        bytes[0] ^= 0xFF;
        assert!(matches!(
            read_model(&mut bytes.as_slice()),
            Err(ModelIoError::BadMagic)
        ));
    }

    // 4. A future version number is rejected, not misparsed.
    #[test]
    fn version_mismatch_rejected() {
        let mut bytes = to_bytes(&random_model(1));
        bytes[8..12].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(
            read_model(&mut bytes.as_slice()),
            Err(ModelIoError::VersionMismatch { found: 2, expected: 1 })
        ));
    }

    // 5. Truncation anywhere yields the truncated error.
    #[test]
    fn truncated_stream_rejected() {
        let bytes = to_bytes(&random_model(1));
        for cut in [4usize, 10, 20, bytes.len() - 1] {
            let mut short: &[u8] = &bytes[..cut];
            assert!(matches!(
                read_model(&mut short),
                Err(ModelIoError::Truncated)
            ));
        }
    }

    // 6. A structurally invalid header (even filter length) is rejected.
    #[test]
    fn invalid_structure_rejected() {
        let model = random_model(1);
        let mut bytes = to_bytes(&model);
        // First filter length lives right after magic+version+L.
        bytes[16..20].copy_from_slice(&4u32.to_le_bytes());
        assert!(matches!(
            read_model(&mut bytes.as_slice()),
            Err(ModelIoError::InvalidStructure(_))
        ));
    }

    // 7. Save/load through an actual file.
    #[test]
    fn save_and_load_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        let model = random_model(77);
        save_model(&model, &path).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(model, back);
        let size = std::fs::metadata(&path).unwrap().len() as usize;
        assert_eq!(size, 16 + 8 * 2 + 8 * model.param_count());
    }
}
