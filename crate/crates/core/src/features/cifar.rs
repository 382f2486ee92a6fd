//! CIFAR-10 binary batches: records of one label byte followed by 3072 pixel
//! bytes (R, G, B planes, each 32x32 row-major).

use super::{ImageTensor, PIXEL_LEN};
use crate::{Error, Result};

pub const CIFAR_RECORD_LEN: usize = 1 + PIXEL_LEN;
pub const CIFAR_PLANE: u8 = 0;
pub const CIFAR_SHIP: u8 = 8;
const CIFAR_CLASSES: u8 = 10;

/// Images kept from a batch, relabelled `0` (first kept class) or `1`.
#[derive(Debug, Clone, Default)]
pub struct LabeledImages {
    pub images: Vec<ImageTensor>,
    pub labels: Vec<usize>,
    /// Record index within the source stream.
    pub records: Vec<usize>,
}

/// Parses a batch and keeps the records whose label is one of `keep`.
pub fn load_cifar_batch(raw: &[u8], keep: (u8, u8), name: &str) -> Result<LabeledImages> {
    if keep.0 >= CIFAR_CLASSES || keep.1 >= CIFAR_CLASSES || keep.0 == keep.1 {
        return Err(Error::InvalidParameter(format!(
            "keep labels must be two distinct ids below {CIFAR_CLASSES}, got {keep:?}"
        )));
    }
    if !raw.len().is_multiple_of(CIFAR_RECORD_LEN) {
        let whole = raw.len() / CIFAR_RECORD_LEN;
        return Err(Error::Format {
            file: name.to_string(),
            offset: (whole * CIFAR_RECORD_LEN) as u64,
            reason: format!(
                "truncated record: {} trailing bytes, records are {CIFAR_RECORD_LEN} bytes",
                raw.len() - whole * CIFAR_RECORD_LEN
            ),
        });
    }
    let mut out = LabeledImages::default();
    for (idx, rec) in raw.chunks_exact(CIFAR_RECORD_LEN).enumerate() {
        let label = rec[0];
        if label >= CIFAR_CLASSES {
            return Err(Error::Format {
                file: name.to_string(),
                offset: (idx * CIFAR_RECORD_LEN) as u64,
                reason: format!("label byte {label} out of range"),
            });
        }
        let class = if label == keep.0 {
            0
        } else if label == keep.1 {
            1
        } else {
            continue;
        };
        let pixels = rec[1..].iter().map(|&b| f64::from(b) / 255.0).collect();
        out.images.push(ImageTensor::new(pixels)?);
        out.labels.push(class);
        out.records.push(idx);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(label: u8, fill: u8) -> Vec<u8> {
        let mut r = vec![fill; CIFAR_RECORD_LEN];
        r[0] = label;
        r
    }

    #[test]
    fn empty_stream() {
        let got = load_cifar_batch(&[], (0, 8), "b").unwrap();
        assert!(got.images.is_empty());
    }

    #[test]
    fn filters_by_label() {
        let mut raw = record(0, 10);
        raw.extend(record(5, 20));
        let got = load_cifar_batch(&raw, (0, 8), "b").unwrap();
        assert_eq!(got.images.len(), 1);
        assert_eq!(got.labels, vec![0]);
        assert_eq!(got.records, vec![0]);

        raw.extend(record(8, 30));
        let got = load_cifar_batch(&raw, (0, 8), "b").unwrap();
        assert_eq!(got.labels, vec![0, 1]);
        assert_eq!(got.records, vec![0, 2]);
    }

    #[test]
    fn scales_to_unit_interval() {
        let got = load_cifar_batch(&record(8, 255), (0, 8), "b").unwrap();
        assert!(got.images[0].pixels().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn channel_planar_layout() {
        let mut raw = record(0, 0);
        raw[1 + 1024 + 5 * 32 + 7] = 255; // green, row 5, col 7
        let got = load_cifar_batch(&raw, (0, 8), "b").unwrap();
        assert_eq!(got.images[0].at(5, 7, 1), 1.0);
        assert_eq!(got.images[0].at(5, 7, 0), 0.0);
    }

    #[test]
    fn truncated_and_bad_labels() {
        let mut raw = record(0, 1);
        raw.extend_from_slice(&[0, 1, 2]);
        match load_cifar_batch(&raw, (0, 8), "data_batch_1.bin") {
            Err(Error::Format { file, offset, .. }) => {
                assert_eq!(file, "data_batch_1.bin");
                assert_eq!(offset, CIFAR_RECORD_LEN as u64);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            load_cifar_batch(&[], (0, 12), "b"),
            Err(Error::InvalidParameter(_))
        ));
        assert!(load_cifar_batch(&record(11, 0), (0, 8), "b").is_err());
    }
}
