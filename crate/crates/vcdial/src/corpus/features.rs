use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use super::CorpusError;
use crate::numerics::Tensor;

/// Header magic for the binary frame-feature format.
pub const VFEA_MAGIC: &[u8; 4] = b"VFEA";

/// Write frame features: magic, then little-endian u32 rows and cols,
/// then rows*cols little-endian f32 values in row-major order.
pub fn write_vfea(path: &Path, frames: &Tensor) -> Result<(), CorpusError> {
    let (rows, cols) = frames.dims2();
    let mut buf = Vec::with_capacity(12 + frames.numel() * 4);
    buf.extend_from_slice(VFEA_MAGIC);
    buf.extend_from_slice(&(rows as u32).to_le_bytes());
    buf.extend_from_slice(&(cols as u32).to_le_bytes());
    for v in frames.data() {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

pub fn read_vfea(path: &Path) -> Result<Tensor, CorpusError> {
    let err = |msg: &str| CorpusError::Features {
        path: path.display().to_string(),
        msg: msg.to_string(),
    };
    let mut f = fs::File::open(path).map_err(|e| CorpusError::Features {
        path: path.display().to_string(),
        msg: e.to_string(),
    })?;
    let mut header = [0u8; 12];
    f.read_exact(&mut header).map_err(|_| err("truncated header"))?;
    if &header[0..4] != VFEA_MAGIC {
        return Err(err("bad magic"));
    }
    let rows = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let mut payload = vec![0u8; rows * cols * 4];
    f.read_exact(&mut payload).map_err(|_| err("truncated payload"))?;
    let data: Vec<f64> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Tensor::new(vec![rows, cols], data).map_err(|_| err("empty dimensions"))
}

/// Frame features for one video. Frame `i` has timestamp `i / fps`.
#[derive(Clone, Debug)]
pub struct VideoFeatures {
    pub path: PathBuf,
    pub frames: Tensor,
}

impl VideoFeatures {
    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        Ok(VideoFeatures {
            path: path.to_path_buf(),
            frames: read_vfea(path)?,
        })
    }

    pub fn rows(&self) -> usize {
        self.frames.dims2().0
    }

    pub fn feature_dim(&self) -> usize {
        self.frames.dims2().1
    }

    pub fn duration(&self, fps: f64) -> f64 {
        self.rows() as f64 / fps
    }

    /// Frames with timestamps in `[start, end)`, keeping at most the LAST
    /// `cap` frames. Returns the matrix and the retained row range.
    pub fn slice(
        &self,
        start: f64,
        end: f64,
        fps: f64,
        cap: usize,
    ) -> Option<(Tensor, (u32, u32))> {
        let lo = (start * fps).ceil() as usize;
        let hi = ((end * fps).ceil() as usize).min(self.rows());
        if lo >= hi {
            return None;
        }
        let lo = lo.max(hi.saturating_sub(cap));
        Some((self.frames.slice_rows(lo, hi), (lo as u32, hi as u32)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_slice() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.vfea");
        // 9 frames at 3 fps = 3 seconds, feature dim 2
        let frames = Tensor::from_fn(9, 2, |i, j| (i * 2 + j) as f64);
        write_vfea(&path, &frames).unwrap();
        let vf = VideoFeatures::load(&path).unwrap();
        assert_eq!(vf.rows(), 9);
        assert_eq!(vf.duration(3.0), 3.0);
        assert_eq!(vf.frames.data(), frames.data());

        // seconds [1, 2) at 3 fps → frames 3, 4, 5
        let (seg, range) = vf.slice(1.0, 2.0, 3.0, 60).unwrap();
        assert_eq!(range, (3, 5 + 1));
        assert_eq!(seg.data(), &[6.0, 7.0, 8.0, 9.0, 10.0, 11.0]);

        // cap keeps the last frames
        let (seg, range) = vf.slice(0.0, 3.0, 3.0, 4).unwrap();
        assert_eq!(range, (5, 9));
        assert_eq!(seg.dims2(), (4, 2));
    }

    #[test]
    fn bad_magic_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.vfea");
        fs::write(&path, b"NOPE....").unwrap();
        assert!(read_vfea(&path).is_err());
    }
}
