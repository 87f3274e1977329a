//! Reference bounds for the bundled Hurink instances.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use thiserror::Error;

const BUNDLED: &str = include_str!("../../data/hurink/bounds.txt");

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum BoundsError {
    #[error("bounds line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("no bounds for {dataset}/{instance}")]
    Unknown { dataset: String, instance: String },
}

/// Lower and upper bound on the optimal makespan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub lower: f64,
    pub upper: f64,
}

impl Bounds {
    /// Reference optimum: the midpoint when the bounds differ.
    pub fn reference(&self) -> f64 {
        (self.lower + self.upper) / 2.0
    }
}

/// `dataset instance lower upper` per line, `#` comments.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BoundsTable {
    entries: BTreeMap<(String, String), Bounds>,
}

impl BoundsTable {
    pub fn bundled() -> Self {
        Self::parse(BUNDLED).expect("bundled bounds table parses")
    }

    pub fn parse(text: &str) -> Result<Self, BoundsError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: &str| BoundsError::Parse { line: i + 1, msg: msg.to_string() };
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 4 {
                return Err(err("expected <dataset> <instance> <lower> <upper>"));
            }
            let lower: f64 = f[2].parse().map_err(|_| err("bad lower bound"))?;
            let upper: f64 = f[3].parse().map_err(|_| err("bad upper bound"))?;
            if lower > upper {
                return Err(err("lower bound exceeds upper bound"));
            }
            entries.insert((f[0].to_string(), f[1].to_string()), Bounds { lower, upper });
        }
        Ok(Self { entries })
    }

    pub fn get(&self, dataset: &str, instance: &str) -> Result<Bounds, BoundsError> {
        self.entries
            .get(&(dataset.to_string(), instance.to_string()))
            .copied()
            .ok_or_else(|| BoundsError::Unknown { dataset: dataset.into(), instance: instance.into() })
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, Bounds)> + '_ {
        self.entries.iter().map(|((d, i), b)| (d.as_str(), i.as_str(), *b))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Directory holding the bundled `sdata`/`edata` files.
pub fn bundled_data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join("hurink")
}

/// Path of a bundled instance file, e.g. `("sdata", "mt06")`.
pub fn bundled_instance_path(dataset: &str, instance: &str) -> PathBuf {
    bundled_data_dir().join(dataset).join(format!("{instance}.fjs"))
}
