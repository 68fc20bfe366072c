use std::collections::BTreeMap;
use std::fs::File;
use std::path::Path;

use super::{DataError, Dataset, DayRecord};

pub const FEATURES_FILE: &str = "features.csv";
pub const ACTUALS_FILE: &str = "actuals.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path, e: csv::Error) -> DataError {
    let line = e.position().map_or(0, |p| p.line());
    DataError::Parse {
        path: path.to_path_buf(),
        line,
        message: e.to_string(),
    }
}

/// Writes the features, actuals and an optional sidecar manifest to `dir`.
pub fn save_csv(
    data: &Dataset,
    dir: &Path,
    manifest: Option<&serde_json::Value>,
) -> Result<(), DataError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let fpath = dir.join(FEATURES_FILE);
    let apath = dir.join(ACTUALS_FILE);
    let mut fw = csv::Writer::from_path(&fpath).map_err(|e| csv_err(&fpath, e))?;
    let mut aw = csv::Writer::from_path(&apath).map_err(|e| csv_err(&apath, e))?;
    let mut header = vec!["day".to_string(), "hour".into(), "farm".into()];
    header.extend((1..=data.feature_dim).map(|j| format!("feature_{j}")));
    fw.write_record(&header).map_err(|e| csv_err(&fpath, e))?;
    aw.write_record(["day", "hour", "farm", "actual"])
        .map_err(|e| csv_err(&apath, e))?;
    let k = data.feature_dim;
    for d in &data.days {
        for (t, (s, y)) in d.features.iter().zip(&d.actual).enumerate() {
            for f in 0..data.farms() {
                let mut rec = vec![
                    d.label.to_string(),
                    (t + 1).to_string(),
                    (f + 1).to_string(),
                ];
                rec.extend(s[f * k..(f + 1) * k].iter().map(|v| v.to_string()));
                fw.write_record(&rec).map_err(|e| csv_err(&fpath, e))?;
                aw.write_record([
                    d.label.to_string(),
                    (t + 1).to_string(),
                    (f + 1).to_string(),
                    y[f].to_string(),
                ])
                .map_err(|e| csv_err(&apath, e))?;
            }
        }
    }
    fw.flush().map_err(io_err(&fpath))?;
    aw.flush().map_err(io_err(&apath))?;
    if let Some(m) = manifest {
        let mpath = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(m).expect("manifest serializes");
        std::fs::write(&mpath, text).map_err(io_err(&mpath))?;
    }
    Ok(())
}

type Table = BTreeMap<i64, BTreeMap<(usize, usize), Vec<f64>>>;

/// Reads `day,hour,farm,<values...>` rows with exactly `width` values.
fn read_table(
    path: &Path,
    leading: &[&str],
    width: Option<usize>,
) -> Result<(Table, usize), DataError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut rdr = csv::Reader::from_reader(file);
    let header = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    if names.len() < 4 || names[..3] != ["day", "hour", "farm"] {
        return Err(DataError::Schema(format!(
            "{}: header must start with day,hour,farm",
            path.display()
        )));
    }
    let values = &names[3..];
    let ok = match width {
        Some(_) => values == leading,
        None => values
            .iter()
            .enumerate()
            .all(|(j, n)| *n == format!("{}{}", leading[0], j + 1)),
    };
    if !ok {
        return Err(DataError::Schema(format!(
            "{}: unexpected columns {}",
            path.display(),
            values.join(",")
        )));
    }
    let mut table = Table::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |message: String| DataError::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let day: i64 = rec[0]
            .trim()
            .parse()
            .map_err(|_| bad(format!("bad day {:?}", &rec[0])))?;
        let hour: usize = rec[1]
            .trim()
            .parse()
            .map_err(|_| bad(format!("bad hour {:?}", &rec[1])))?;
        let farm: usize = rec[2]
            .trim()
            .parse()
            .map_err(|_| bad(format!("bad farm {:?}", &rec[2])))?;
        if hour == 0 || farm == 0 {
            return Err(bad("hours and farms are one-based".into()));
        }
        let vals = rec
            .iter()
            .skip(3)
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| bad(format!("bad value {v:?}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        table.entry(day).or_default().insert((hour, farm), vals);
    }
    Ok((table, values.len()))
}

/// Loads a dataset from the two CSV files, checking it against the farm
/// capacities and the horizon.
pub fn load_csv(
    features: &Path,
    actuals: &Path,
    caps: &[f64],
    horizon: usize,
) -> Result<Dataset, DataError> {
    let (ftab, k) = read_table(features, &["feature_"], None)?;
    let (atab, _) = read_table(actuals, &["actual"], Some(1))?;
    let farms = caps.len();
    let mut days = Vec::with_capacity(ftab.len());
    for (&day, fday) in &ftab {
        let aday = atab.get(&day);
        let mut feats = Vec::with_capacity(horizon);
        let mut acts = Vec::with_capacity(horizon);
        for hour in 1..=horizon {
            let mut row = Vec::with_capacity(farms * k);
            let mut out = Vec::with_capacity(farms);
            for farm in 1..=farms {
                let missing = DataError::MissingHour { day, hour, farm };
                let f = fday.get(&(hour, farm)).ok_or(missing)?;
                row.extend_from_slice(f);
                let a = aday
                    .and_then(|a| a.get(&(hour, farm)))
                    .ok_or(DataError::MissingHour { day, hour, farm })?;
                out.push(a[0]);
            }
            feats.push(row);
            acts.push(out);
        }
        days.push(DayRecord {
            label: day,
            features: feats,
            actual: acts,
        });
    }
    if let Some(&day) = atab.keys().find(|d| !ftab.contains_key(d)) {
        return Err(DataError::MissingHour {
            day,
            hour: 1,
            farm: 1,
        });
    }
    let data = Dataset {
        feature_dim: k,
        horizon,
        caps: caps.to_vec(),
        days,
    };
    data.validate()?;
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate, SynthConfig};

    #[test]
    fn round_trip() {
        let cfg = SynthConfig {
            caps: vec![60.0, 40.0],
            ..SynthConfig::default()
        };
        let (data, _) = generate(&cfg, 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let manifest = serde_json::to_value(&cfg).unwrap();
        save_csv(&data, dir.path(), Some(&manifest)).unwrap();
        let back = load_csv(
            &dir.path().join(FEATURES_FILE),
            &dir.path().join(ACTUALS_FILE),
            &cfg.caps,
            24,
        )
        .unwrap();
        assert_eq!(back, data);
        assert!(dir.path().join(MANIFEST_FILE).exists());
    }

    fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn missing_hour_names_day_and_hour() {
        let dir = tempfile::tempdir().unwrap();
        let f = write(dir.path(), "f.csv", "day,hour,farm,feature_1\n3,1,1,0.5\n");
        let a = write(dir.path(), "a.csv", "day,hour,farm,actual\n3,1,1,5\n");
        let err = load_csv(&f, &a, &[10.0], 2).unwrap_err();
        assert_eq!(err.to_string(), "day 3 is missing hour 2 for farm 1");
    }

    #[test]
    fn actual_above_capacity_is_a_range_error() {
        let dir = tempfile::tempdir().unwrap();
        let f = write(dir.path(), "f.csv", "day,hour,farm,feature_1\n0,1,1,0.5\n");
        let a = write(dir.path(), "a.csv", "day,hour,farm,actual\n0,1,1,12\n");
        let err = load_csv(&f, &a, &[10.0], 1).unwrap_err();
        assert!(matches!(err, DataError::OutOfRange { .. }));
    }

    #[test]
    fn schema_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let f = write(dir.path(), "f.csv", "day,hour,farm,speed\n0,1,1,0.5\n");
        let a = write(dir.path(), "a.csv", "day,hour,farm,actual\n0,1,1,1\n");
        assert!(matches!(
            load_csv(&f, &a, &[10.0], 1),
            Err(DataError::Schema(_))
        ));
        let f = write(dir.path(), "g.csv", "day,hour,farm,feature_1\n0,x,1,0.5\n");
        let err = load_csv(&f, &a, &[10.0], 1).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }
}
