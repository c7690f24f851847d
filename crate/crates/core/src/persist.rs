//! On-disk formats for active labels and ground truth.
//!
//! Active labels as text, tab-separated, one pixel per line (tabs shown as spaces):
//!
//! ```text
//! # cbda-active-labels v1
//! # num_images=100 height=64 width=64 num_classes=5 manifest=<hash>
//! image_index row col true_class al_iteration pseudo_class
//! 0 3 17 2 1 2
//! ```
//!
//! Records are sorted by `(image_index, row, col)`. The binary variant
//! carries the same header fields followed by a record count and
//! fixed-width little-endian records.

use std::io::{BufRead, Read, Write};

use crate::error::{Error, Result};
use crate::grid::{ClassId, GroundTruth, LabelMap};
use crate::shape::DatasetShape;
use crate::store::{ActiveLabelStore, LabelRecord};

pub const LABELS_TEXT_MAGIC: &str = "# cbda-active-labels v1";
pub const LABELS_COLUMNS: &str = "image_index\trow\tcol\ttrue_class\tal_iteration\tpseudo_class";
const LABELS_BINARY_MAGIC: &[u8; 4] = b"CBAL";
const GROUND_TRUTH_MAGIC: &[u8; 4] = b"CBGT";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelFileHeader {
    pub shape: DatasetShape,
    /// Hash of the run manifest that produced the file; may be empty.
    pub manifest: String,
}

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

pub fn write_labels_text<W: Write>(
    mut out: W,
    store: &ActiveLabelStore,
    manifest: &str,
) -> Result<()> {
    if manifest.chars().any(char::is_whitespace) {
        return Err(format_err("manifest hash may not contain whitespace"));
    }
    let s = store.shape();
    writeln!(out, "{LABELS_TEXT_MAGIC}")?;
    writeln!(
        out,
        "# num_images={} height={} width={} num_classes={} manifest={manifest}",
        s.num_images(),
        s.height(),
        s.width(),
        s.num_classes()
    )?;
    writeln!(out, "{LABELS_COLUMNS}")?;
    for r in store.records() {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            r.image_index, r.row, r.col, r.true_class, r.iteration, r.pseudo_class
        )?;
    }
    out.flush()?;
    Ok(())
}

fn parse_header_fields(line: &str) -> Result<LabelFileHeader> {
    let body = line
        .strip_prefix("# ")
        .ok_or_else(|| format_err("missing header line"))?;
    let mut dims = [None; 4];
    let mut manifest = None;
    for field in body.split_whitespace() {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| format_err(format!("bad header field `{field}`")))?;
        let slot = match key {
            "num_images" => 0,
            "height" => 1,
            "width" => 2,
            "num_classes" => 3,
            "manifest" => {
                manifest = Some(value.to_string());
                continue;
            }
            _ => return Err(format_err(format!("unknown header field `{key}`"))),
        };
        dims[slot] = Some(
            value
                .parse::<usize>()
                .map_err(|_| format_err(format!("bad value for `{key}`")))?,
        );
    }
    let [Some(n), Some(h), Some(w), Some(c)] = dims else {
        return Err(format_err(
            "header must give num_images, height, width and num_classes",
        ));
    };
    Ok(LabelFileHeader {
        shape: DatasetShape::new(n, h, w, c)?,
        manifest: manifest.unwrap_or_default(),
    })
}

fn check_order(prev: &mut Option<(u32, u32, u32)>, r: &LabelRecord) -> Result<()> {
    let key = (r.image_index, r.row, r.col);
    if prev.is_some_and(|p| p >= key) {
        return Err(format_err(format!(
            "record {key:?} is out of order or duplicated"
        )));
    }
    *prev = Some(key);
    Ok(())
}

pub fn read_labels_text<R: BufRead>(input: R) -> Result<(ActiveLabelStore, LabelFileHeader)> {
    let mut lines = input.lines();
    let mut next = |what: &str| -> Result<String> {
        lines
            .next()
            .transpose()?
            .ok_or_else(|| format_err(format!("missing {what}")))
    };
    if next("magic line")?.trim_end() != LABELS_TEXT_MAGIC {
        return Err(format_err("not an active-label file"));
    }
    let header = parse_header_fields(next("header line")?.trim_end())?;
    if next("column line")?.trim_end() != LABELS_COLUMNS {
        return Err(format_err("unexpected column layout"));
    }
    let mut store = ActiveLabelStore::new(header.shape);
    let mut prev = None;
    for (n, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 6 {
            return Err(format_err(format!("record {}: expected 6 fields", n + 1)));
        }
        let num = |i: usize| -> Result<u32> {
            fields[i]
                .trim()
                .parse::<u32>()
                .map_err(|_| format_err(format!("record {}: bad field `{}`", n + 1, fields[i])))
        };
        let class = |i: usize| -> Result<ClassId> {
            ClassId::try_from(num(i)?)
                .map_err(|_| format_err(format!("record {}: class too large", n + 1)))
        };
        let record = LabelRecord {
            image_index: num(0)?,
            row: num(1)?,
            col: num(2)?,
            true_class: class(3)?,
            iteration: num(4)?,
            pseudo_class: class(5)?,
        };
        check_order(&mut prev, &record)?;
        store.insert(record)?;
    }
    Ok((store, header))
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn take<const N: usize, R: Read>(input: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    input.read_exact(&mut buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => format_err("truncated file"),
        _ => Error::Io(e),
    })?;
    Ok(buf)
}

fn take_u32<R: Read>(input: &mut R) -> Result<u32> {
    Ok(u32::from_le_bytes(take(input)?))
}

fn shape_bytes(out: &mut Vec<u8>, s: &DatasetShape) {
    for v in [s.num_images(), s.height(), s.width(), s.num_classes()] {
        put_u32(out, v as u32);
    }
}

fn read_shape<R: Read>(input: &mut R) -> Result<DatasetShape> {
    let n = take_u32(input)? as usize;
    let h = take_u32(input)? as usize;
    let w = take_u32(input)? as usize;
    let c = take_u32(input)? as usize;
    DatasetShape::new(n, h, w, c)
}

fn read_preamble<R: Read>(input: &mut R, magic: &[u8; 4]) -> Result<()> {
    if &take::<4, _>(input)? != magic {
        return Err(format_err("bad magic bytes"));
    }
    let version = take_u32(input)?;
    if version != FORMAT_VERSION {
        return Err(format_err(format!("unsupported format version {version}")));
    }
    Ok(())
}

pub fn write_labels_binary<W: Write>(
    mut out: W,
    store: &ActiveLabelStore,
    manifest: &str,
) -> Result<()> {
    let mut buf = Vec::with_capacity(64 + store.len() as usize * 20);
    buf.extend_from_slice(LABELS_BINARY_MAGIC);
    put_u32(&mut buf, FORMAT_VERSION);
    shape_bytes(&mut buf, store.shape());
    let manifest_len =
        u32::try_from(manifest.len()).map_err(|_| format_err("manifest hash too long"))?;
    put_u32(&mut buf, manifest_len);
    buf.extend_from_slice(manifest.as_bytes());
    buf.extend_from_slice(&store.len().to_le_bytes());
    for r in store.records() {
        put_u32(&mut buf, r.image_index);
        put_u32(&mut buf, r.row);
        put_u32(&mut buf, r.col);
        buf.extend_from_slice(&r.true_class.to_le_bytes());
        buf.extend_from_slice(&r.pseudo_class.to_le_bytes());
        put_u32(&mut buf, r.iteration);
    }
    out.write_all(&buf)?;
    out.flush()?;
    Ok(())
}

pub fn read_labels_binary<R: Read>(mut input: R) -> Result<(ActiveLabelStore, LabelFileHeader)> {
    read_preamble(&mut input, LABELS_BINARY_MAGIC)?;
    let shape = read_shape(&mut input)?;
    let manifest_len = take_u32(&mut input)? as usize;
    let mut manifest = vec![0u8; manifest_len.min(1 << 16)];
    if manifest_len > manifest.len() {
        return Err(format_err("manifest hash too long"));
    }
    input.read_exact(&mut manifest)?;
    let manifest =
        String::from_utf8(manifest).map_err(|_| format_err("manifest hash is not UTF-8"))?;
    let count = u64::from_le_bytes(take(&mut input)?);
    if count > shape.total_pixels() {
        return Err(format_err("more records than pixels"));
    }
    let mut store = ActiveLabelStore::new(shape);
    let mut prev = None;
    for _ in 0..count {
        let record = LabelRecord {
            image_index: take_u32(&mut input)?,
            row: take_u32(&mut input)?,
            col: take_u32(&mut input)?,
            true_class: u16::from_le_bytes(take(&mut input)?),
            pseudo_class: u16::from_le_bytes(take(&mut input)?),
            iteration: take_u32(&mut input)?,
        };
        check_order(&mut prev, &record)?;
        store.insert(record)?;
    }
    if input.read(&mut [0u8; 1])? != 0 {
        return Err(format_err("trailing bytes after the last record"));
    }
    Ok((store, LabelFileHeader { shape, manifest }))
}

/// Ground truth as `CBGT`, version, shape, then every label as `u16` LE, image by image.
pub fn write_ground_truth<W: Write>(mut out: W, gt: &GroundTruth) -> Result<()> {
    let mut buf = Vec::with_capacity(24 + gt.shape().total_pixels() as usize * 2);
    buf.extend_from_slice(GROUND_TRUTH_MAGIC);
    put_u32(&mut buf, FORMAT_VERSION);
    shape_bytes(&mut buf, gt.shape());
    for m in gt.maps() {
        for &l in m.as_slice() {
            buf.extend_from_slice(&l.to_le_bytes());
        }
    }
    out.write_all(&buf)?;
    out.flush()?;
    Ok(())
}

pub fn read_ground_truth<R: Read>(mut input: R) -> Result<GroundTruth> {
    read_preamble(&mut input, GROUND_TRUTH_MAGIC)?;
    let shape = read_shape(&mut input)?;
    let pixels = shape.pixels_per_image() as usize;
    let mut raw = vec![0u8; pixels * 2];
    let maps = (0..shape.num_images())
        .map(|i| {
            input
                .read_exact(&mut raw)
                .map_err(|_| format_err("truncated ground truth"))?;
            let labels = raw
                .chunks_exact(2)
                .map(|b| u16::from_le_bytes([b[0], b[1]]))
                .collect();
            LabelMap::new(
                i as u32,
                shape.height(),
                shape.width(),
                labels,
                shape.num_classes(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    if input.read(&mut [0u8; 1])? != 0 {
        return Err(format_err("trailing bytes after the ground truth"));
    }
    GroundTruth::new(shape, maps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample_store() -> ActiveLabelStore {
        let mut s = ActiveLabelStore::new(DatasetShape::new(3, 4, 5, 3).unwrap());
        for (i, r, c, t, p, it) in [(2, 3, 4, 2, 1, 3), (0, 0, 0, 0, 0, 1), (0, 1, 2, 1, 2, 2)] {
            s.insert(LabelRecord {
                image_index: i,
                row: r,
                col: c,
                true_class: t,
                pseudo_class: p,
                iteration: it,
            })
            .unwrap();
        }
        s
    }

    #[test]
    fn text_layout() {
        let mut buf = Vec::new();
        write_labels_text(&mut buf, &sample_store(), "abc123").unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], LABELS_TEXT_MAGIC);
        assert_eq!(
            lines[1],
            "# num_images=3 height=4 width=5 num_classes=3 manifest=abc123"
        );
        assert_eq!(lines[2], LABELS_COLUMNS);
        assert_eq!(
            &lines[3..],
            &["0\t0\t0\t0\t1\t0", "0\t1\t2\t1\t2\t2", "2\t3\t4\t2\t3\t1"]
        );
    }

    #[test]
    fn text_rejects_unsorted_and_duplicate_records() {
        let head = format!("{LABELS_TEXT_MAGIC}\n# num_images=1 height=2 width=2 num_classes=2 manifest=\n{LABELS_COLUMNS}\n");
        let unsorted = format!("{head}0\t1\t0\t0\t1\t0\n0\t0\t1\t0\t1\t0\n");
        assert!(matches!(
            read_labels_text(unsorted.as_bytes()),
            Err(Error::Format(_))
        ));
        let dup = format!("{head}0\t0\t1\t0\t1\t0\n0\t0\t1\t0\t1\t0\n");
        assert!(matches!(
            read_labels_text(dup.as_bytes()),
            Err(Error::Format(_))
        ));
        let bad_class = format!("{head}0\t0\t1\t5\t1\t0\n");
        assert!(matches!(
            read_labels_text(bad_class.as_bytes()),
            Err(Error::Class { .. })
        ));
        let short = format!("{head}0\t0\t1\n");
        assert!(matches!(
            read_labels_text(short.as_bytes()),
            Err(Error::Format(_))
        ));
        assert!(read_labels_text("hello\n".as_bytes()).is_err());
    }

    #[test]
    fn empty_store_round_trips() {
        let s = ActiveLabelStore::new(DatasetShape::new(2, 2, 2, 2).unwrap());
        let mut buf = Vec::new();
        write_labels_text(&mut buf, &s, "").unwrap();
        let (back, header) = read_labels_text(buf.as_slice()).unwrap();
        assert_eq!(back, s);
        assert_eq!(header.manifest, "");
    }

    #[test]
    fn binary_rejects_truncation_and_trailing_bytes() {
        let mut buf = Vec::new();
        write_labels_binary(&mut buf, &sample_store(), "m").unwrap();
        assert!(read_labels_binary(&buf[..buf.len() - 3]).is_err());
        let mut longer = buf.clone();
        longer.push(0);
        assert!(read_labels_binary(longer.as_slice()).is_err());
        let (back, header) = read_labels_binary(buf.as_slice()).unwrap();
        assert_eq!(back, sample_store());
        assert_eq!(header.manifest, "m");
    }

    #[test]
    fn ground_truth_round_trip() {
        let shape = DatasetShape::new(2, 2, 3, 4).unwrap();
        let maps = (0..2)
            .map(|i| LabelMap::new(i, 2, 3, vec![0, 1, 2, 3, 2, 1], 4).unwrap())
            .collect();
        let gt = GroundTruth::new(shape, maps).unwrap();
        let mut buf = Vec::new();
        write_ground_truth(&mut buf, &gt).unwrap();
        assert_eq!(buf.len(), 24 + 12 * 2);
        assert_eq!(read_ground_truth(buf.as_slice()).unwrap(), gt);
        assert!(read_ground_truth(&buf[..buf.len() - 1]).is_err());
    }

    fn arb_store() -> impl Strategy<Value = ActiveLabelStore> {
        (1usize..4, 1usize..6, 1usize..6, 1usize..5).prop_flat_map(|(n, h, w, c)| {
            let pixels = n * h * w;
            proptest::collection::vec((any::<bool>(), 0..c as u16, 0..c as u16, 1u32..6), pixels)
                .prop_map(move |cells| {
                    let mut s = ActiveLabelStore::new(DatasetShape::new(n, h, w, c).unwrap());
                    for (p, (keep, t, q, it)) in cells.into_iter().enumerate() {
                        if keep {
                            s.insert(LabelRecord {
                                image_index: (p / (h * w)) as u32,
                                row: ((p % (h * w)) / w) as u32,
                                col: (p % w) as u32,
                                true_class: t,
                                pseudo_class: q,
                                iteration: it,
                            })
                            .unwrap();
                        }
                    }
                    s
                })
        })
    }

    proptest! {
        #[test]
        fn both_formats_round_trip(store in arb_store()) {
            let mut text = Vec::new();
            write_labels_text(&mut text, &store, "deadbeef").unwrap();
            let (back, header) = read_labels_text(text.as_slice()).unwrap();
            prop_assert_eq!(&back, &store);
            prop_assert_eq!(header.shape, *store.shape());

            let mut bin = Vec::new();
            write_labels_binary(&mut bin, &store, "deadbeef").unwrap();
            let (back, _) = read_labels_binary(bin.as_slice()).unwrap();
            prop_assert_eq!(back, store);
        }
    }
}
