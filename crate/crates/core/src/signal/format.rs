//! Binary capture (`DLRC`) and dataset (`DLRD`) files. All fields are
//! little-endian.
//!
//! ```text
//! DLRC  magic[4] version:u32 sample_rate_hz:f64 center_freq_hz:f64 count:u64
//!       then count x (I:f32, Q:f32)
//! DLRD  magic[4] version:u32 L:u32 count:u64 Q:u16
//!       then count x (L x f32, label:u16)      label 0xFFFF = unlabeled
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Datapoint, Iq, IqCapture};
use crate::error::{Error, Result};

pub const CAPTURE_MAGIC: &[u8; 4] = b"DLRC";
pub const DATASET_MAGIC: &[u8; 4] = b"DLRD";
pub const FORMAT_VERSION: u32 = 1;
pub const UNLABELED: u16 = u16::MAX;

fn bad(format: &'static str, reason: impl Into<String>) -> Error {
    Error::Format {
        format,
        reason: reason.into(),
    }
}

fn read_array<const N: usize>(r: &mut impl Read, format: &'static str, what: &str) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|_| bad(format, format!("truncated {what}")))?;
    Ok(buf)
}

pub fn write_capture(mut out: impl Write, capture: &IqCapture) -> Result<()> {
    out.write_all(CAPTURE_MAGIC)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    out.write_all(&capture.sample_rate_hz.to_le_bytes())?;
    out.write_all(&capture.center_freq_hz.to_le_bytes())?;
    out.write_all(&(capture.samples.len() as u64).to_le_bytes())?;
    for z in &capture.samples {
        out.write_all(&z.re.to_le_bytes())?;
        out.write_all(&z.im.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_capture(mut input: impl Read) -> Result<IqCapture> {
    const F: &str = "DLRC";
    let header: [u8; 32] = read_array(&mut input, F, "header")?;
    if &header[0..4] != CAPTURE_MAGIC {
        return Err(bad(F, "bad magic"));
    }
    let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(bad(F, format!("unsupported version {version}")));
    }
    let sample_rate_hz = f64::from_le_bytes(header[8..16].try_into().unwrap());
    let center_freq_hz = f64::from_le_bytes(header[16..24].try_into().unwrap());
    let count = u64::from_le_bytes(header[24..32].try_into().unwrap()) as usize;
    let mut body = Vec::new();
    input.read_to_end(&mut body)?;
    if body.len() != count * 8 {
        return Err(bad(F, format!("expected {} body bytes, found {}", count * 8, body.len())));
    }
    let samples = body
        .chunks_exact(8)
        .map(|c| {
            Iq::new(
                f32::from_le_bytes(c[0..4].try_into().unwrap()),
                f32::from_le_bytes(c[4..8].try_into().unwrap()),
            )
        })
        .collect();
    IqCapture::new(samples, sample_rate_hz, center_freq_hz)
}

/// A set of equal-length datapoints with a declared class count.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub length: usize,
    pub num_classes: usize,
    pub datapoints: Vec<Datapoint>,
}

impl Dataset {
    pub fn new(datapoints: Vec<Datapoint>, num_classes: usize) -> Result<Self> {
        let length = datapoints.first().map_or(0, Datapoint::len);
        if length == 0 {
            return Err(Error::Empty("dataset"));
        }
        if let Some(i) = datapoints.iter().position(|d| d.len() != length) {
            return Err(Error::DimensionMismatch(format!(
                "datapoint {i} has length {}, expected {length}",
                datapoints[i].len()
            )));
        }
        if let Some(l) = datapoints.iter().filter_map(|d| d.label).find(|&l| l >= num_classes) {
            return Err(Error::DimensionMismatch(format!(
                "label {l} out of range for {num_classes} classes"
            )));
        }
        Ok(Self {
            length,
            num_classes,
            datapoints,
        })
    }

    pub fn len(&self) -> usize {
        self.datapoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.datapoints.is_empty()
    }

    /// Labels of all datapoints; fails if any is unlabeled.
    pub fn labels(&self) -> Result<Vec<usize>> {
        self.datapoints
            .iter()
            .enumerate()
            .map(|(i, d)| {
                d.label
                    .ok_or_else(|| Error::DimensionMismatch(format!("datapoint {i} is unlabeled")))
            })
            .collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for l in self.datapoints.iter().filter_map(|d| d.label) {
            counts[l] += 1;
        }
        counts
    }
}

pub fn write_dataset(mut out: impl Write, dataset: &Dataset) -> Result<()> {
    if dataset.num_classes > usize::from(u16::MAX) {
        return Err(bad("DLRD", "too many classes for a u16 label"));
    }
    out.write_all(DATASET_MAGIC)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    out.write_all(&(dataset.length as u32).to_le_bytes())?;
    out.write_all(&(dataset.datapoints.len() as u64).to_le_bytes())?;
    out.write_all(&(dataset.num_classes as u16).to_le_bytes())?;
    for d in &dataset.datapoints {
        for v in &d.values {
            out.write_all(&(*v as f32).to_le_bytes())?;
        }
        let label = d.label.map_or(UNLABELED, |l| l as u16);
        out.write_all(&label.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_dataset(mut input: impl Read) -> Result<Dataset> {
    const F: &str = "DLRD";
    let header: [u8; 22] = read_array(&mut input, F, "header")?;
    if &header[0..4] != DATASET_MAGIC {
        return Err(bad(F, "bad magic"));
    }
    let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(bad(F, format!("unsupported version {version}")));
    }
    let length = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let count = u64::from_le_bytes(header[12..20].try_into().unwrap()) as usize;
    let num_classes = usize::from(u16::from_le_bytes(header[20..22].try_into().unwrap()));
    if length == 0 {
        return Err(bad(F, "zero datapoint length"));
    }
    let record = length * 4 + 2;
    let mut body = Vec::new();
    input.read_to_end(&mut body)?;
    if body.len() != count * record {
        return Err(bad(F, format!("expected {} body bytes, found {}", count * record, body.len())));
    }
    let datapoints = body
        .chunks_exact(record)
        .enumerate()
        .map(|(i, rec)| {
            let values = rec[..length * 4]
                .chunks_exact(4)
                .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
                .collect();
            let raw = u16::from_le_bytes(rec[length * 4..].try_into().unwrap());
            let mut d = Datapoint::new(values, (raw != UNLABELED).then_some(usize::from(raw)));
            d.provenance.burst_offset = i as u64;
            d
        })
        .collect();
    Dataset::new(datapoints, num_classes).map_err(|e| bad(F, e.to_string()))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    read_dataset(BufReader::new(File::open(path)?))
}

pub fn save_dataset(path: impl AsRef<Path>, dataset: &Dataset) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_dataset(&mut w, dataset)?;
    w.flush()?;
    Ok(())
}

pub fn load_capture(path: impl AsRef<Path>) -> Result<IqCapture> {
    read_capture(BufReader::new(File::open(path)?))
}

pub fn save_capture(path: impl AsRef<Path>, capture: &IqCapture) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_capture(&mut w, capture)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn capture_header_layout() {
        let cap = IqCapture::new(vec![Iq::new(1.5, -2.0)], 100e6, 2.437e9).unwrap();
        let mut buf = Vec::new();
        write_capture(&mut buf, &cap).unwrap();
        assert_eq!(&buf[0..4], b"DLRC");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 1);
        assert_eq!(f64::from_le_bytes(buf[8..16].try_into().unwrap()), 100e6);
        assert_eq!(u64::from_le_bytes(buf[24..32].try_into().unwrap()), 1);
        assert_eq!(f32::from_le_bytes(buf[32..36].try_into().unwrap()), 1.5);
        assert_eq!(f32::from_le_bytes(buf[36..40].try_into().unwrap()), -2.0);
        assert_eq!(read_capture(buf.as_slice()).unwrap(), cap);
    }

    #[test]
    fn dataset_header_layout_and_unlabeled() {
        let ds = Dataset::new(
            vec![
                Datapoint::new(vec![0.25, 0.5], Some(3)),
                Datapoint::new(vec![1.0, 0.0], None),
            ],
            4,
        )
        .unwrap();
        let mut buf = Vec::new();
        write_dataset(&mut buf, &ds).unwrap();
        assert_eq!(buf.len(), 22 + 2 * (2 * 4 + 2));
        assert_eq!(&buf[0..4], b"DLRD");
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 2);
        assert_eq!(u16::from_le_bytes(buf[20..22].try_into().unwrap()), 4);
        let back = read_dataset(buf.as_slice()).unwrap();
        assert_eq!(back.datapoints[0].label, Some(3));
        assert_eq!(back.datapoints[1].label, None);
        assert_eq!(back.datapoints[0].values, vec![0.25, 0.5]);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        assert!(read_dataset(&b"DLRD\x01\x00"[..]).is_err());
        assert!(read_capture(&b"XXXX"[..]).is_err());
        let ds = Dataset::new(vec![Datapoint::new(vec![1.0], Some(0))], 1).unwrap();
        let mut buf = Vec::new();
        write_dataset(&mut buf, &ds).unwrap();
        buf.pop();
        assert!(read_dataset(buf.as_slice()).is_err());
    }

    #[test]
    fn dataset_validation() {
        assert!(Dataset::new(vec![], 2).is_err());
        assert!(Dataset::new(
            vec![Datapoint::new(vec![1.0], Some(0)), Datapoint::new(vec![1.0, 2.0], Some(0))],
            2
        )
        .is_err());
        assert!(Dataset::new(vec![Datapoint::new(vec![1.0], Some(2))], 2).is_err());
    }

    proptest! {
        #[test]
        fn dataset_round_trip(
            rows in prop::collection::vec((prop::collection::vec(0.0f32..2.0, 5), 0usize..7), 1..20)
        ) {
            let ds = Dataset::new(
                rows.iter()
                    .map(|(v, l)| Datapoint::new(v.iter().map(|x| f64::from(*x)).collect(), Some(*l)))
                    .collect(),
                7,
            ).unwrap();
            let mut buf = Vec::new();
            write_dataset(&mut buf, &ds).unwrap();
            let back = read_dataset(buf.as_slice()).unwrap();
            prop_assert_eq!(back.len(), ds.len());
            for (a, b) in back.datapoints.iter().zip(&ds.datapoints) {
                prop_assert_eq!(&a.values, &b.values);
                prop_assert_eq!(a.label, b.label);
            }
        }
    }
}
