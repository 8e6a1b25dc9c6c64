//! Dataset files.
//!
//! JSON: `{ "k": int, "clouds": [ { "label": int|null, "points": [[f64, ...], ...] } ] }`.
//!
//! Packed binary, little-endian: magic `OTLD`, `u32 n`, `u32 m`, `u32 k`, then
//! `n*m*k` f64 coordinates (cloud-major, then point, then coordinate), then `n`
//! i32 labels with `-1` meaning unlabeled.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EmpiricalMeasure, LabeledDataset, Labels, MeasureError, Result};

const MAGIC: &[u8; 4] = b"OTLD";

#[derive(Serialize, Deserialize)]
struct DatasetDoc {
    k: usize,
    clouds: Vec<CloudDoc>,
}

#[derive(Serialize, Deserialize)]
struct CloudDoc {
    label: Option<i64>,
    points: Vec<Vec<f64>>,
}

/// Loads a dataset in strict mode (all clouds must have the same point count).
pub fn load_point_cloud_dataset(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    load_point_cloud_dataset_with(path, true)
}

/// Loads a JSON or packed-binary dataset; the format is detected from the magic bytes.
pub fn load_point_cloud_dataset_with(path: impl AsRef<Path>, strict: bool) -> Result<LabeledDataset> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(MAGIC) {
        decode_binary(&bytes)
    } else {
        decode_json(&bytes, strict)
    }
}

fn parse_err(msg: impl Into<String>) -> MeasureError {
    MeasureError::Parse(msg.into())
}

fn build_labels(raw: Vec<Option<i64>>) -> Result<Labels> {
    let mut values = Vec::with_capacity(raw.len());
    for (i, l) in raw.into_iter().enumerate() {
        values.push(match l {
            None => None,
            Some(l) if l >= 0 => Some(l as usize),
            Some(l) => return Err(parse_err(format!("cloud {i}: negative label {l}"))),
        });
    }
    let n_classes = values.iter().flatten().max().map_or(0, |m| m + 1);
    Labels::new(values, n_classes)
}

fn decode_json(bytes: &[u8], strict: bool) -> Result<LabeledDataset> {
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Err(parse_err("empty file"));
    }
    let doc: DatasetDoc = serde_json::from_slice(bytes).map_err(|e| parse_err(e.to_string()))?;
    if doc.clouds.is_empty() {
        return Err(parse_err("no clouds"));
    }
    let expected = doc.clouds[0].points.len();
    let mut measures = Vec::with_capacity(doc.clouds.len());
    let mut raw_labels = Vec::with_capacity(doc.clouds.len());
    for (i, cloud) in doc.clouds.into_iter().enumerate() {
        if strict && cloud.points.len() != expected {
            return Err(MeasureError::InconsistentPointCount {
                cloud: i,
                expected,
                found: cloud.points.len(),
            });
        }
        if let Some(p) = cloud.points.iter().find(|p| p.len() != doc.k) {
            return Err(parse_err(format!(
                "cloud {i}: point of dimension {} in a k={} file",
                p.len(),
                doc.k
            )));
        }
        let measure = EmpiricalMeasure::from_points(&cloud.points)
            .map_err(|e| parse_err(format!("cloud {i}: {e}")))?;
        measures.push(measure);
        raw_labels.push(cloud.label);
    }
    LabeledDataset::new(measures, build_labels(raw_labels)?)
}

fn read_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
        .ok_or_else(|| parse_err("truncated header"))
}

fn decode_binary(bytes: &[u8]) -> Result<LabeledDataset> {
    let n = read_u32(bytes, 4)? as usize;
    let m = read_u32(bytes, 8)? as usize;
    let k = read_u32(bytes, 12)? as usize;
    if n == 0 || m == 0 || k == 0 {
        return Err(parse_err("zero-sized header field"));
    }
    let n_coords = n * m * k;
    let expected_len = 16 + 8 * n_coords + 4 * n;
    if bytes.len() != expected_len {
        return Err(parse_err(format!(
            "expected {expected_len} bytes, found {}",
            bytes.len()
        )));
    }
    let coords: Vec<f64> = bytes[16..16 + 8 * n_coords]
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    let mut measures = Vec::with_capacity(n);
    for (i, chunk) in coords.chunks_exact(m * k).enumerate() {
        let measure = EmpiricalMeasure::from_flat(chunk.to_vec(), k)
            .map_err(|e| parse_err(format!("cloud {i}: {e}")))?;
        measures.push(measure);
    }
    let raw_labels = bytes[16 + 8 * n_coords..]
        .chunks_exact(4)
        .map(|b| i32::from_le_bytes(b.try_into().unwrap()))
        .map(|l| (l != -1).then_some(i64::from(l)))
        .collect();
    LabeledDataset::new(measures, build_labels(raw_labels)?)
}

pub fn save_json(dataset: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    let doc = DatasetDoc {
        k: dataset.dim(),
        clouds: dataset
            .measures()
            .iter()
            .zip(dataset.labels().values())
            .map(|(mu, l)| CloudDoc {
                label: l.map(|l| l as i64),
                points: mu.points().map(<[f64]>::to_vec).collect(),
            })
            .collect(),
    };
    let text = serde_json::to_string(&doc).map_err(|e| parse_err(e.to_string()))?;
    fs::write(path, text)?;
    Ok(())
}

/// Writes the packed binary variant; requires a uniform point count.
pub fn save_binary(dataset: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    let m = dataset.uniform_size().ok_or_else(|| {
        let expected = dataset.measure(0).len();
        let (cloud, mu) = dataset
            .measures()
            .iter()
            .enumerate()
            .find(|(_, mu)| mu.len() != expected)
            .unwrap();
        MeasureError::InconsistentPointCount {
            cloud,
            expected,
            found: mu.len(),
        }
    })?;
    let n = dataset.len();
    let k = dataset.dim();
    let mut out = Vec::with_capacity(16 + 8 * n * m * k + 4 * n);
    out.extend_from_slice(MAGIC);
    for v in [n, m, k] {
        let v = u32::try_from(v).map_err(|_| parse_err("dimension exceeds u32"))?;
        out.extend_from_slice(&v.to_le_bytes());
    }
    for mu in dataset.measures() {
        for c in mu.coords() {
            out.extend_from_slice(&c.to_le_bytes());
        }
    }
    for l in dataset.labels().values() {
        let l = l.map_or(-1, |l| l as i32);
        out.extend_from_slice(&l.to_le_bytes());
    }
    fs::write(path, out)?;
    Ok(())
}

/// Coordinates as CSV: `cloud,point,label,x0,...,x{k-1}`; unlabeled clouds leave `label` empty.
pub fn export_csv(dataset: &LabeledDataset, mut out: impl Write) -> Result<()> {
    write!(out, "cloud,point,label")?;
    for c in 0..dataset.dim() {
        write!(out, ",x{c}")?;
    }
    writeln!(out)?;
    for (i, mu) in dataset.measures().iter().enumerate() {
        let label = dataset.labels().get(i).map(|l| l.to_string()).unwrap_or_default();
        for (j, p) in mu.points().enumerate() {
            write!(out, "{i},{j},{label}")?;
            for x in p {
                write!(out, ",{x}")?;
            }
            writeln!(out)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small_dataset() -> LabeledDataset {
        let a = EmpiricalMeasure::from_flat((0..12).map(f64::from).collect(), 3).unwrap();
        let b = EmpiricalMeasure::from_flat((0..12).map(|x| -0.5 * f64::from(x)).collect(), 3)
            .unwrap();
        LabeledDataset::new(vec![a, b], Labels::from_classes(&[0, 1])).unwrap()
    }

    #[test]
    fn json_file_with_two_clouds() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.json");
        fs::write(
            &path,
            r#"{"k":3,"clouds":[
                {"label":0,"points":[[0,0,0],[1,0,0],[0,1,0],[0,0,1]]},
                {"label":1,"points":[[1,1,1],[2,1,1],[1,2,1],[1,1,2]]}]}"#,
        )
        .unwrap();
        let d = load_point_cloud_dataset(&path).unwrap();
        assert_eq!((d.len(), d.uniform_size(), d.dim()), (2, Some(4), 3));
        assert_eq!(d.labels().values(), &[Some(0), Some(1)]);
        assert_eq!(d.n_classes(), 2);
    }

    #[test]
    fn rejects_bad_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.json");
        fs::write(&path, "").unwrap();
        assert!(matches!(
            load_point_cloud_dataset(&path),
            Err(MeasureError::Parse(_))
        ));
        fs::write(&path, r#"{"k":1,"clouds":[{"label":0,"points":[[NaN]]}]}"#).unwrap();
        assert!(matches!(
            load_point_cloud_dataset(&path),
            Err(MeasureError::Parse(_))
        ));
        fs::write(
            &path,
            r#"{"k":1,"clouds":[{"label":0,"points":[[1e999]]}]}"#,
        )
        .unwrap();
        assert!(matches!(
            load_point_cloud_dataset(&path),
            Err(MeasureError::Parse(_))
        ));
        fs::write(
            &path,
            r#"{"k":1,"clouds":[{"label":0,"points":[[1]]},{"label":null,"points":[[1],[2]]}]}"#,
        )
        .unwrap();
        assert!(matches!(
            load_point_cloud_dataset(&path),
            Err(MeasureError::InconsistentPointCount { cloud: 1, .. })
        ));
        let lax = load_point_cloud_dataset_with(&path, false).unwrap();
        assert_eq!(lax.labels().values(), &[Some(0), None]);
        assert!(matches!(
            load_point_cloud_dataset(dir.path().join("missing.json")),
            Err(MeasureError::Io(_))
        ));
        let bin = dir.path().join("d.bin");
        fs::write(&bin, b"OTLD\x01\x00\x00\x00").unwrap();
        assert!(matches!(
            load_point_cloud_dataset(&bin),
            Err(MeasureError::Parse(_))
        ));
    }

    #[test]
    fn csv_export() {
        let mut buf = Vec::new();
        export_csv(&small_dataset(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "cloud,point,label,x0,x1,x2");
        assert_eq!(lines[1], "0,0,0,0,1,2");
        assert_eq!(lines[5], "1,0,1,-0,-0.5,-1");
        assert_eq!(lines.len(), 9);
    }

    fn dataset_strategy() -> impl Strategy<Value = LabeledDataset> {
        (1usize..4, 1usize..5, 1usize..4).prop_flat_map(|(n, m, k)| {
            (
                proptest::collection::vec(
                    proptest::collection::vec(-1e6f64..1e6, m * k),
                    n,
                ),
                proptest::collection::vec(proptest::option::of(0usize..3), n),
            )
                .prop_map(move |(clouds, labels)| {
                    let measures = clouds
                        .into_iter()
                        .map(|c| EmpiricalMeasure::from_flat(c, k).unwrap())
                        .collect();
                    let n_classes = labels.iter().flatten().max().map_or(0, |m| m + 1);
                    LabeledDataset::new(measures, Labels::new(labels, n_classes).unwrap())
                        .unwrap()
                })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn save_load_round_trip(data in dataset_strategy()) {
            let dir = tempfile::tempdir().unwrap();
            let json = dir.path().join("d.json");
            let bin = dir.path().join("d.bin");
            save_json(&data, &json).unwrap();
            save_binary(&data, &bin).unwrap();
            let from_json = load_point_cloud_dataset(&json).unwrap();
            let from_bin = load_point_cloud_dataset(&bin).unwrap();
            for loaded in [from_json, from_bin] {
                prop_assert_eq!(loaded.labels().values(), data.labels().values());
                for (a, b) in loaded.measures().iter().zip(data.measures()) {
                    let bits_a: Vec<u64> = a.coords().iter().map(|x| x.to_bits()).collect();
                    let bits_b: Vec<u64> = b.coords().iter().map(|x| x.to_bits()).collect();
                    prop_assert_eq!(bits_a, bits_b);
                }
            }
        }
    }
}
