use std::fs;
use std::io::Write;
use std::path::Path;

use log::info;

use super::LabeledDataset;
use crate::error::{Error, Result};

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn ingest_err(offset: usize, reason: impl Into<String>) -> Error {
    Error::Ingest {
        offset: offset as u64,
        reason: reason.into(),
    }
}

fn read_be_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| ingest_err(offset, "truncated header"))
}

/// Parses an IDX3 image file; returns (count, rows, cols, pixels in [0,1]).
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, Vec<f32>)> {
    if bytes.is_empty() {
        return Err(ingest_err(0, "empty image file"));
    }
    let magic = read_be_u32(bytes, 0)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(ingest_err(0, format!("bad image magic {magic:#010x}")));
    }
    let n = read_be_u32(bytes, 4)? as usize;
    let rows = read_be_u32(bytes, 8)? as usize;
    let cols = read_be_u32(bytes, 12)? as usize;
    let body = &bytes[16..];
    let expected = n * rows * cols;
    if body.len() < expected {
        return Err(ingest_err(
            16 + body.len(),
            format!("truncated pixel data: {expected} bytes declared, {} present", body.len()),
        ));
    }
    let pixels = body[..expected].iter().map(|&p| p as f32 / 255.0).collect();
    Ok((n, rows, cols, pixels))
}

/// Parses an IDX1 label file.
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    if bytes.is_empty() {
        return Err(ingest_err(0, "empty label file"));
    }
    let magic = read_be_u32(bytes, 0)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(ingest_err(0, format!("bad label magic {magic:#010x}")));
    }
    let n = read_be_u32(bytes, 4)? as usize;
    let body = &bytes[8..];
    if body.len() < n {
        return Err(ingest_err(
            8 + body.len(),
            format!("truncated labels: {n} declared, {} present", body.len()),
        ));
    }
    Ok(body[..n].to_vec())
}

/// Loads an IDX image/label pair as single-channel `(1, rows, cols)` samples.
pub fn load_idx(images: &Path, labels: &Path, class_count: usize) -> Result<LabeledDataset> {
    let (n, rows, cols, pixels) = parse_idx_images(&fs::read(images)?)?;
    let raw_labels = parse_idx_labels(&fs::read(labels)?)?;
    if raw_labels.len() != n {
        return Err(ingest_err(
            4,
            format!("{n} images but {} labels", raw_labels.len()),
        ));
    }
    let mut label_vec = Vec::with_capacity(n);
    for (i, &y) in raw_labels.iter().enumerate() {
        if y as usize >= class_count {
            return Err(ingest_err(8 + i, format!("label {y} outside [0, {class_count})")));
        }
        label_vec.push(y as usize);
    }
    let ds = LabeledDataset::from_parts(vec![1, rows, cols], class_count, pixels, label_vec)?;
    info!(
        "loaded {} IDX samples from {}; label histogram {:?}",
        ds.len(),
        images.display(),
        ds.histogram()
    );
    Ok(ds)
}

/// Loads rows of `label,p0,p1,...` with integer pixels in 0..=255.
///
/// A first line whose leading field is not an integer is treated as a header.
pub fn load_csv(path: &Path, sample_shape: &[usize], class_count: usize) -> Result<LabeledDataset> {
    let text = fs::read_to_string(path)?;
    if text.trim().is_empty() {
        return Err(ingest_err(0, "empty CSV file"));
    }
    let per: usize = sample_shape.iter().product();
    let mut ds = LabeledDataset::new(sample_shape.to_vec(), class_count);
    let mut offset = 0usize;
    let mut row = Vec::with_capacity(per);
    for (line_no, line) in text.split_inclusive('\n').enumerate() {
        let line_offset = offset;
        offset += line.len();
        let content = line.trim_end_matches(['\n', '\r']);
        if content.trim().is_empty() {
            continue;
        }
        let mut fields = content.split(',');
        let first = fields.next().unwrap_or("").trim();
        let label: usize = match first.parse() {
            Ok(v) => v,
            Err(_) if line_no == 0 => continue,
            Err(_) => return Err(ingest_err(line_offset, format!("bad label {first:?}"))),
        };
        if label >= class_count {
            return Err(ingest_err(line_offset, format!("label {label} outside [0, {class_count})")));
        }
        row.clear();
        for f in fields {
            let v: u8 = f
                .trim()
                .parse()
                .map_err(|_| ingest_err(line_offset, format!("bad pixel {f:?}")))?;
            row.push(v as f32 / 255.0);
        }
        if row.len() != per {
            return Err(ingest_err(
                line_offset,
                format!("row has {} pixels, expected {per}", row.len()),
            ));
        }
        ds.push(&row, label)?;
    }
    if ds.is_empty() {
        return Err(ingest_err(0, "CSV contains no samples"));
    }
    info!(
        "loaded {} CSV samples from {}; label histogram {:?}",
        ds.len(),
        path.display(),
        ds.histogram()
    );
    Ok(ds)
}

fn to_byte(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes a single-channel dataset as an IDX image/label pair.
pub fn write_idx(ds: &LabeledDataset, images: &Path, labels: &Path) -> Result<()> {
    let (rows, cols) = match ds.sample_shape() {
        [1, r, c] => (*r, *c),
        [r, c] => (*r, *c),
        other => return Err(Error::dim(format!("IDX needs 2-D images, got {other:?}"))),
    };
    let mut img = Vec::with_capacity(16 + ds.inputs().len());
    img.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    img.extend_from_slice(&(ds.len() as u32).to_be_bytes());
    img.extend_from_slice(&(rows as u32).to_be_bytes());
    img.extend_from_slice(&(cols as u32).to_be_bytes());
    img.extend(ds.inputs().iter().map(|&v| to_byte(v)));
    fs::write(images, img)?;

    let mut lab = Vec::with_capacity(8 + ds.len());
    lab.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    lab.extend_from_slice(&(ds.len() as u32).to_be_bytes());
    lab.extend(ds.labels().iter().map(|&y| y as u8));
    fs::write(labels, lab)?;
    Ok(())
}

pub fn write_csv(ds: &LabeledDataset, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    for (x, y) in ds.iter() {
        write!(out, "{y}")?;
        for &v in x {
            write!(out, ",{}", to_byte(v))?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_image_file_is_error() {
        assert!(matches!(parse_idx_images(&[]), Err(Error::Ingest { offset: 0, .. })));
    }

    #[test]
    fn wrong_magic_is_reported_at_offset_zero() {
        let bytes = [0u8, 0, 8, 1, 0, 0, 0, 0];
        assert!(matches!(parse_idx_images(&bytes), Err(Error::Ingest { offset: 0, .. })));
    }

    #[test]
    fn truncated_pixels_report_end_offset() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
        bytes.extend_from_slice(&2u32.to_be_bytes());
        bytes.extend_from_slice(&2u32.to_be_bytes());
        bytes.extend_from_slice(&2u32.to_be_bytes());
        bytes.extend_from_slice(&[1, 2, 3]);
        match parse_idx_images(&bytes) {
            Err(Error::Ingest { offset, .. }) => assert_eq!(offset, 19),
            other => panic!("unexpected {other:?}"),
        }
    }
}
