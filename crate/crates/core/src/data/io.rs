use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{FingerprintDataset, RssiNetworkConfig, NOT_DETECTED_DBM};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub enum FeatureColumns {
    Named(Vec<String>),
    /// Every header column starting with the prefix, in header order.
    Prefix(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvSchema {
    pub feature_columns: FeatureColumns,
    pub target_columns: Vec<String>,
    /// Dataset-native "not detected" feature value, e.g. `100` for UJIIndoorLoc.
    pub not_detected: Option<f64>,
}

impl CsvSchema {
    /// Layout written by [`write_csv`]: `rssi_*` features, `x`,`y` targets.
    pub fn generated() -> Self {
        Self {
            feature_columns: FeatureColumns::Prefix("rssi_".into()),
            target_columns: vec!["x".into(), "y".into()],
            not_detected: Some(NOT_DETECTED_DBM),
        }
    }
}

fn column_index(header: &csv::StringRecord, name: &str) -> Result<usize> {
    header
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::Parse {
            row: 0,
            message: format!("missing column `{name}`"),
        })
}

pub fn load_csv<T: Scalar>(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<FingerprintDataset<T>> {
    read_csv(File::open(path)?, schema)
}

/// Parses a header-first CSV. Row numbers in errors count data rows from 1.
pub fn read_csv<T: Scalar, R: Read>(input: R, schema: &CsvSchema) -> Result<FingerprintDataset<T>> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header = rd.headers()?.clone();
    let feature_idx: Vec<usize> = match &schema.feature_columns {
        FeatureColumns::Named(names) => names
            .iter()
            .map(|n| column_index(&header, n))
            .collect::<Result<_>>()?,
        FeatureColumns::Prefix(p) => header
            .iter()
            .enumerate()
            .filter(|(_, h)| h.starts_with(p.as_str()))
            .map(|(i, _)| i)
            .collect(),
    };
    if feature_idx.is_empty() {
        return Err(Error::Parse {
            row: 0,
            message: "no feature columns matched".into(),
        });
    }
    let target_idx: Vec<usize> = schema
        .target_columns
        .iter()
        .map(|n| column_index(&header, n))
        .collect::<Result<_>>()?;
    if target_idx.is_empty() {
        return Err(Error::Parse {
            row: 0,
            message: "no target columns configured".into(),
        });
    }

    let mut ds = FingerprintDataset::default();
    for (i, rec) in rd.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Parse {
            row,
            message: e.to_string(),
        })?;
        let cell = |j: usize| -> Result<f64> {
            let raw = rec.get(j).unwrap_or("");
            raw.parse::<f64>().map_err(|_| Error::Parse {
                row,
                message: format!("column `{}`: `{raw}` is not a number", &header[j]),
            })
        };
        let features = feature_idx
            .iter()
            .map(|&j| {
                let v = cell(j)?;
                Ok(T::of(match schema.not_detected {
                    Some(s) if v == s => NOT_DETECTED_DBM,
                    _ => v,
                }))
            })
            .collect::<Result<Vec<T>>>()?;
        let targets = target_idx
            .iter()
            .map(|&j| cell(j).map(T::of))
            .collect::<Result<Vec<T>>>()?;
        ds.features.push(features);
        ds.targets.push(targets);
    }
    Ok(ds)
}

fn target_names(no: usize) -> Vec<String> {
    if no == 2 {
        vec!["x".into(), "y".into()]
    } else {
        (0..no).map(|d| format!("target_{d}")).collect()
    }
}

/// Writes `rssi_0..rssi_{M-1}` then `x,y` (or `target_*` for other widths).
pub fn write_csv<T: Scalar, W: Write>(ds: &FingerprintDataset<T>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = (0..ds.input_dim()).map(|m| format!("rssi_{m}")).collect();
    header.extend(target_names(ds.output_dim()));
    w.write_record(&header)?;
    for (x, y) in ds.features.iter().zip(&ds.targets) {
        w.write_record(x.iter().chain(y).map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Plain `key=value` sidecar describing how a synthetic dataset was made.
pub fn write_metadata<W: Write>(cfg: &RssiNetworkConfig, mut out: W) -> Result<()> {
    let lines = [
        ("area_length", cfg.area.0.to_string()),
        ("area_width", cfg.area.1.to_string()),
        ("ap_count", cfg.ap_count.to_string()),
        ("rp_count", cfg.rp_count.to_string()),
        ("repetitions", cfg.repetitions.to_string()),
        ("path_loss_exponent", cfg.path_loss_exponent.to_string()),
        ("shadowing_sigma", cfg.shadowing_sigma.to_string()),
        ("frequency", cfg.frequency.to_string()),
        ("tx_power", cfg.tx_power.to_string()),
        ("reference_distance", cfg.reference_distance.to_string()),
        ("sensitivity_floor", cfg.sensitivity_floor.to_string()),
        ("not_detected", NOT_DETECTED_DBM.to_string()),
        ("seed", cfg.seed.to_string()),
    ];
    for (k, v) in lines {
        writeln!(out, "{k}={v}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate;

    fn named(f: &[&str], t: &[&str], nd: Option<f64>) -> CsvSchema {
        CsvSchema {
            feature_columns: FeatureColumns::Named(f.iter().map(|s| s.to_string()).collect()),
            target_columns: t.iter().map(|s| s.to_string()).collect(),
            not_detected: nd,
        }
    }

    #[test]
    fn small_csv() {
        let text = "a,b,x,y\n-50,-60,1,2\n-55,100,3,4\n-70,-71,5,6\n";
        let ds: FingerprintDataset<f64> =
            read_csv(text.as_bytes(), &named(&["a", "b"], &["x", "y"], Some(100.0))).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.input_dim(), 2);
        assert_eq!(ds.features[1], vec![-55.0, NOT_DETECTED_DBM]);
        assert_eq!(ds.targets[2], vec![5.0, 6.0]);
    }

    #[test]
    fn header_only() {
        let ds: FingerprintDataset<f64> =
            read_csv("a,x\n".as_bytes(), &named(&["a"], &["x"], None)).unwrap();
        assert!(ds.is_empty());
    }

    #[test]
    fn errors_name_row_and_column() {
        let schema = named(&["a"], &["x"], None);
        let err = read_csv::<f64, _>("a,x\n1,2\n3,oops\n".as_bytes(), &schema).unwrap_err();
        match err {
            Error::Parse { row, message } => {
                assert_eq!(row, 2);
                assert!(message.contains("`x`"), "{message}");
            }
            e => panic!("unexpected {e}"),
        }
        let err = read_csv::<f64, _>("a,z\n1,2\n".as_bytes(), &schema).unwrap_err();
        assert!(err.to_string().contains("missing column `x`"));
    }

    #[test]
    fn generated_roundtrip() {
        let cfg = RssiNetworkConfig {
            rp_count: 16,
            repetitions: 3,
            area: (600.0, 600.0),
            ..RssiNetworkConfig::default()
        };
        let ds = generate::<f64>(&cfg).unwrap();
        assert!(ds.features.iter().flatten().any(|v| *v == NOT_DETECTED_DBM));
        let mut buf = Vec::new();
        write_csv(&ds, &mut buf).unwrap();
        let back: FingerprintDataset<f64> = read_csv(&buf[..], &CsvSchema::generated()).unwrap();
        assert_eq!(back.features, ds.features);
        assert_eq!(back.targets, ds.targets);

        let ds32 = generate::<f32>(&cfg).unwrap();
        let mut buf = Vec::new();
        write_csv(&ds32, &mut buf).unwrap();
        let back: FingerprintDataset<f32> = read_csv(&buf[..], &CsvSchema::generated()).unwrap();
        assert_eq!(back.features, ds32.features);
    }

    #[test]
    fn metadata_lines() {
        let mut buf = Vec::new();
        write_metadata(&RssiNetworkConfig::default(), &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.contains("seed=200\n"));
        assert!(s.contains("path_loss_exponent=3.23\n"));
    }
}
