//! Instance files: a JSON document with `M`, `N`, row-major `u` and `a`,
//! `L`, `s`, the generating `seed` and the units. Floats are written with 17
//! significant digits so that reading a file back gives identical bits.

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Number;

use crate::error::{Error, Result};
use crate::model::{Matrix, ProblemInstance};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Units {
    pub u: String,
    pub a: String,
}

impl Default for Units {
    fn default() -> Self {
        Self {
            u: "1/ms".into(),
            a: "ms/row".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceDocument {
    #[serde(rename = "M")]
    masters: usize,
    #[serde(rename = "N")]
    workers: usize,
    u: Vec<Number>,
    a: Vec<Number>,
    #[serde(rename = "L")]
    rows: Vec<u64>,
    s: Vec<u64>,
    seed: Option<u64>,
    units: Units,
}

/// An instance together with the seed it was generated from, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceFile {
    pub instance: ProblemInstance<f64>,
    pub seed: Option<u64>,
    pub units: Units,
}

fn exact(x: f64) -> Number {
    Number::from_str(&format!("{x:.16e}")).expect("finite float formats as a JSON number")
}

fn parse(values: &[Number], what: &str) -> Result<Vec<f64>> {
    values
        .iter()
        .map(|v| {
            v.to_string()
                .parse::<f64>()
                .map_err(|e| Error::Format(format!("{what}: {e}")))
        })
        .collect()
}

impl InstanceFile {
    pub fn new(instance: ProblemInstance<f64>, seed: Option<u64>) -> Self {
        Self {
            instance,
            seed,
            units: Units::default(),
        }
    }

    pub fn to_json(&self) -> String {
        let inst = &self.instance;
        let doc = InstanceDocument {
            masters: inst.num_masters(),
            workers: inst.num_workers(),
            u: inst
                .u_matrix()
                .as_slice()
                .iter()
                .map(|&x| exact(x))
                .collect(),
            a: inst
                .a_matrix()
                .as_slice()
                .iter()
                .map(|&x| exact(x))
                .collect(),
            rows: inst.row_counts().to_vec(),
            s: inst.col_counts().to_vec(),
            seed: self.seed,
            units: self.units.clone(),
        };
        let mut out = serde_json::to_string_pretty(&doc).expect("instance document serializes");
        out.push('\n');
        out
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: InstanceDocument =
            serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        let expected = doc.masters * doc.workers;
        if doc.u.len() != expected || doc.a.len() != expected {
            return Err(Error::Format(format!(
                "u and a need M·N = {expected} entries, found {} and {}",
                doc.u.len(),
                doc.a.len()
            )));
        }
        let u = Matrix::from_vec(doc.masters, doc.workers, parse(&doc.u, "u")?)?;
        let a = Matrix::from_vec(doc.masters, doc.workers, parse(&doc.a, "a")?)?;
        Ok(Self {
            instance: ProblemInstance::new(u, a, doc.rows, doc.s)?,
            seed: doc.seed,
            units: doc.units,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json().as_bytes())
    }
}

/// Writes to a sibling temporary file and renames it over `path`, so readers
/// never observe a half-written file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::Format(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".{}.tmp", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let result = std::fs::write(&tmp, contents).and_then(|()| std::fs::rename(&tmp, path));
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    Ok(result?)
}
