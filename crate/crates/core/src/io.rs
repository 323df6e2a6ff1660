//! File formats: dataset CSV (`t,u,y`), model and hyperparameter JSON,
//! per-replication and box-plot CSV tables.
//!
//! Every writer goes through [`write_atomic`], which writes a sibling
//! temporary file and renames it into place.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lti::Dataset;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    let tmp: PathBuf = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    {
        let mut file = fs::File::create(&tmp).map_err(io_err(&tmp))?;
        file.write_all(bytes).map_err(io_err(&tmp))?;
        file.sync_all().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn read_to_string(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    fs::read_to_string(path).map_err(io_err(path))
}

/// Serializes a dataset as `t,u,y` CSV with `t` starting at 1.
pub fn dataset_to_csv(data: &Dataset) -> String {
    let mut out = String::from("t,u,y\n");
    for (i, (u, y)) in data.u.iter().zip(&data.y).enumerate() {
        out.push_str(&format!("{},{},{}\n", i + 1, u, y));
    }
    out
}

/// Parses `t,u,y` CSV; surrounding whitespace in fields is ignored.
pub fn dataset_from_reader<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::InvalidConfig(format!("dataset CSV lacks a `{name}` column")))
    };
    let (ti, ui, yi) = (column("t")?, column("u")?, column("y")?);
    let mut u = Vec::new();
    let mut y = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let field = |i: usize, name: &str| -> Result<f64> {
            let raw = record.get(i).unwrap_or("");
            raw.parse::<f64>().map_err(|e| {
                Error::InvalidConfig(format!("row {}: column `{name}` = {raw:?}: {e}", row + 2))
            })
        };
        let t = field(ti, "t")?;
        if t != (row + 1) as f64 {
            return Err(Error::InvalidConfig(format!(
                "row {}: expected t = {}, found {t}",
                row + 2,
                row + 1
            )));
        }
        u.push(field(ui, "u")?);
        y.push(field(yi, "y")?);
    }
    Dataset::new(u, y)
}

pub fn read_dataset_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(io_err(path))?;
    dataset_from_reader(file).map_err(|e| match e {
        Error::Io { .. } => e,
        other => Error::Parse {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    })
}

pub fn write_dataset_csv(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    write_atomic(path, dataset_to_csv(data).as_bytes())
}

/// Reads a JSON document, reporting the path and line of any parse error.
pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn to_json_pretty<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    write_atomic(path, to_json_pretty(value)?.as_bytes())
}

/// Reads a config document as TOML (`.toml` extension) or JSON (anything else).
pub fn read_config<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
    if is_toml {
        let text = read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    } else {
        read_json(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::DcHyperParams;
    use crate::lti::RationalModel;

    #[test]
    fn dataset_csv_layout() {
        let data = Dataset::new(vec![1.0, -0.5], vec![0.25, 2.0]).unwrap();
        assert_eq!(dataset_to_csv(&data), "t,u,y\n1,1,0.25\n2,-0.5,2\n");
    }

    #[test]
    fn dataset_reader_tolerates_whitespace() {
        let text = " t , u , y \n 1 , 0.5 , 1.0\n2,  -1.25,3e-2 \n";
        let data = dataset_from_reader(text.as_bytes()).unwrap();
        assert_eq!(data.u, vec![0.5, -1.25]);
        assert_eq!(data.y, vec![1.0, 0.03]);
    }

    #[test]
    fn dataset_reader_rejects_bad_rows() {
        assert!(dataset_from_reader("t,u,y\n1,x,2\n".as_bytes()).is_err());
        assert!(dataset_from_reader("t,u,y\n2,1,2\n".as_bytes()).is_err());
        assert!(dataset_from_reader("a,b\n1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn model_json_shape() {
        let m = RationalModel::new(vec![0.41], vec![-1.82, 2.04], 1).unwrap();
        let v: serde_json::Value = serde_json::to_value(&m).unwrap();
        assert_eq!(v, serde_json::json!({ "b": [0.41], "f": [-1.82, 2.04], "nk": 1 }));
        let back: RationalModel = serde_json::from_value(v).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn hyperparameter_json_shape() {
        let p = DcHyperParams::new(100.0, 0.8, 0.7, 2.0).unwrap();
        let v: serde_json::Value = serde_json::to_value(p).unwrap();
        assert_eq!(v, serde_json::json!({ "c": 100.0, "alpha": 0.8, "rho": 0.7, "lambda": 2.0 }));
    }

    #[test]
    fn atomic_write_and_parse_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/model.json");
        write_json(&path, &RationalModel::fir(vec![1.0], 0).unwrap()).unwrap();
        let m: RationalModel = read_json(&path).unwrap();
        assert_eq!(m.b, vec![1.0]);

        let bad = dir.path().join("bad.json");
        fs::write(&bad, "{\n  \"b\": [1.0,\n  oops\n}").unwrap();
        let err = read_json::<RationalModel>(&bad).unwrap_err().to_string();
        assert!(err.contains("bad.json") && err.contains("line 3"), "{err}");

        let missing = read_dataset_csv(dir.path().join("nope.csv")).unwrap_err().to_string();
        assert!(missing.contains("nope.csv"));
    }
}
