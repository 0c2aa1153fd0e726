//! IDX (MNIST) reader.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use super::{Dataset, LearnerError};
use crate::scalar::Scalar;

/// Magic of a 3-dimensional unsigned-byte tensor.
pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
/// Magic of a 1-dimensional unsigned-byte tensor.
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Cursor<'a> {
    fn u32(&mut self) -> Result<u32, LearnerError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn take(&mut self, len: usize) -> Result<&'a [u8], LearnerError> {
        let end = self.pos.checked_add(len).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            LearnerError::TruncatedFile(format!(
                "{}: need {len} bytes at offset {}, file has {}",
                self.what,
                self.pos,
                self.bytes.len()
            ))
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn magic(&mut self, expected: u32) -> Result<(), LearnerError> {
        let found = self.u32()?;
        if found == expected {
            Ok(())
        } else {
            Err(LearnerError::BadMagic { expected, found })
        }
    }
}

/// Reads an image/label IDX pair. Pixels are scaled by 1/255 and flattened;
/// the class count is one more than the largest label.
pub fn load_idx<T: Scalar, I: Read, L: Read>(
    mut images: I,
    mut labels: L,
) -> Result<Dataset<T>, LearnerError> {
    let mut image_bytes = Vec::new();
    images.read_to_end(&mut image_bytes)?;
    let mut label_bytes = Vec::new();
    labels.read_to_end(&mut label_bytes)?;

    let mut img = Cursor { bytes: &image_bytes, pos: 0, what: "images" };
    img.magic(IDX_IMAGES_MAGIC)?;
    let count = img.u32()? as usize;
    let rows = img.u32()? as usize;
    let cols = img.u32()? as usize;

    let mut lab = Cursor { bytes: &label_bytes, pos: 0, what: "labels" };
    lab.magic(IDX_LABELS_MAGIC)?;
    let label_count = lab.u32()? as usize;
    if label_count != count {
        return Err(LearnerError::CountMismatch { images: count, labels: label_count });
    }

    let input_dim = rows * cols;
    let pixels = img.take(count * input_dim)?;
    let scale = T::lit(255.0);
    let features = pixels.iter().map(|&p| T::lit(f64::from(p)) / scale).collect();
    let labels: Vec<usize> = lab.take(count)?.iter().map(|&l| usize::from(l)).collect();
    let num_classes = labels.iter().max().map_or(0, |&m| m + 1);
    Dataset::new(features, input_dim, labels, num_classes)
}

pub fn load_idx_files<T: Scalar>(
    images: impl AsRef<Path>,
    labels: impl AsRef<Path>,
) -> Result<Dataset<T>, LearnerError> {
    load_idx(BufReader::new(File::open(images)?), BufReader::new(File::open(labels)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn images(magic: u32, count: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
        let mut out = Vec::new();
        for v in [magic, count, rows, cols] {
            out.extend(v.to_be_bytes());
        }
        out.extend_from_slice(pixels);
        out
    }

    fn labels(count: u32, values: &[u8]) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend(IDX_LABELS_MAGIC.to_be_bytes());
        out.extend(count.to_be_bytes());
        out.extend_from_slice(values);
        out
    }

    #[test]
    fn reads_well_formed_pair() {
        let pixels: Vec<u8> = (0..10 * 784).map(|i| (i % 256) as u8).collect();
        let lbl: Vec<u8> = (0..10).collect();
        let ds: Dataset<f64> = load_idx(
            &images(IDX_IMAGES_MAGIC, 10, 28, 28, &pixels)[..],
            &labels(10, &lbl)[..],
        )
        .unwrap();
        assert_eq!(ds.len(), 10);
        assert_eq!(ds.input_dim(), 784);
        assert_eq!(ds.features().len(), 7840);
        assert_eq!(ds.labels(), &(0..10).collect::<Vec<_>>()[..]);
        assert_eq!(ds.num_classes(), 10);
        assert_eq!(ds.row(0)[255], 1.0);
        assert_eq!(ds.row(0)[0], 0.0);
    }

    #[test]
    fn full_intensity_is_exactly_one() {
        let ds: Dataset<f32> =
            load_idx(&images(IDX_IMAGES_MAGIC, 1, 1, 2, &[255, 51])[..], &labels(1, &[0])[..]).unwrap();
        assert_eq!(ds.row(0), &[1.0, 0.2]);
    }

    #[test]
    fn rejects_label_magic_for_images() {
        let err = load_idx::<f64, _, _>(
            &images(IDX_LABELS_MAGIC, 1, 1, 1, &[0])[..],
            &labels(1, &[0])[..],
        )
        .unwrap_err();
        assert!(matches!(err, LearnerError::BadMagic { expected: IDX_IMAGES_MAGIC, found: IDX_LABELS_MAGIC }));
    }

    #[test]
    fn rejects_count_mismatch_and_truncation() {
        let err = load_idx::<f64, _, _>(
            &images(IDX_IMAGES_MAGIC, 2, 1, 1, &[0, 1])[..],
            &labels(3, &[0, 1, 2])[..],
        )
        .unwrap_err();
        assert!(matches!(err, LearnerError::CountMismatch { images: 2, labels: 3 }));

        let err = load_idx::<f64, _, _>(
            &images(IDX_IMAGES_MAGIC, 2, 2, 2, &[0; 5])[..],
            &labels(2, &[0, 1])[..],
        )
        .unwrap_err();
        assert!(matches!(err, LearnerError::TruncatedFile(_)));

        let err = load_idx::<f64, _, _>(&[0u8, 0, 8][..], &labels(0, &[])[..]).unwrap_err();
        assert!(matches!(err, LearnerError::TruncatedFile(_)));
    }
}
