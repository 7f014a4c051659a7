//! Real sequences indexed by ℤ.
//!
//! Tabulated sequences are frozen at their end values outside the table,
//! closed-form families are evaluated exactly everywhere.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SequenceRepr", into = "SequenceRepr")]
pub enum Sequence {
    Constant(f64),
    /// `values[i]` is the term at index `start + i`.
    Table {
        start: i64,
        values: Vec<f64>,
    },
    /// `scale / (1 + |n|)^power`
    Harmonic {
        scale: f64,
        power: f64,
    },
    /// `scale * ratio^|n|`
    Geometric {
        scale: f64,
        ratio: f64,
    },
}

impl Sequence {
    pub fn constant(v: f64) -> Self {
        Sequence::Constant(v)
    }

    pub fn harmonic(scale: f64, power: f64) -> Self {
        Sequence::Harmonic { scale, power }
    }

    pub fn geometric(scale: f64, ratio: f64) -> Self {
        Sequence::Geometric { scale, ratio }
    }

    pub fn table(start: i64, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidParams("empty sequence table".into()));
        }
        Ok(Sequence::Table { start, values })
    }

    pub fn value(&self, n: i64) -> f64 {
        match self {
            Sequence::Constant(v) => *v,
            Sequence::Table { start, values } => {
                let last = values.len() as i64 - 1;
                let i = (n - start).clamp(0, last);
                values[i as usize]
            }
            Sequence::Harmonic { scale, power } => scale / (1.0 + n.unsigned_abs() as f64).powf(*power),
            Sequence::Geometric { scale, ratio } => scale * ratio.powi(n.unsigned_abs().min(i32::MAX as u64) as i32),
        }
    }

    pub fn scaled(&self, c: f64) -> Sequence {
        match self {
            Sequence::Constant(v) => Sequence::Constant(c * v),
            Sequence::Table { start, values } => {
                Sequence::Table { start: *start, values: values.iter().map(|v| c * v).collect() }
            }
            Sequence::Harmonic { scale, power } => Sequence::Harmonic { scale: c * scale, power: *power },
            Sequence::Geometric { scale, ratio } => Sequence::Geometric { scale: c * scale, ratio: *ratio },
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Sequence::Constant(_))
    }

    /// True when every term is ≥ 0.
    pub fn is_nonnegative(&self) -> bool {
        match self {
            Sequence::Constant(v) => *v >= 0.0,
            Sequence::Table { values, .. } => values.iter().all(|v| *v >= 0.0),
            Sequence::Harmonic { scale, .. } => *scale >= 0.0,
            Sequence::Geometric { scale, ratio } => *scale >= 0.0 && *ratio >= 0.0,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum SequenceRepr {
    Constant { constant: f64 },
    Table { table: TableRepr },
    Family { family: String, params: BTreeMap<String, f64> },
}

#[derive(Serialize, Deserialize)]
struct TableRepr {
    start: i64,
    values: Vec<f64>,
}

fn param(params: &BTreeMap<String, f64>, family: &str, key: &str) -> Result<f64> {
    params.get(key).copied().ok_or_else(|| Error::InvalidParams(format!("family `{family}` needs parameter `{key}`")))
}

impl TryFrom<SequenceRepr> for Sequence {
    type Error = Error;

    fn try_from(r: SequenceRepr) -> Result<Self> {
        match r {
            SequenceRepr::Constant { constant } => Ok(Sequence::Constant(constant)),
            SequenceRepr::Table { table } => Sequence::table(table.start, table.values),
            SequenceRepr::Family { family, params } => match family.as_str() {
                "harmonic" => Ok(Sequence::Harmonic {
                    scale: param(&params, &family, "scale")?,
                    power: params.get("power").copied().unwrap_or(1.0),
                }),
                "geometric" => Ok(Sequence::Geometric {
                    scale: param(&params, &family, "scale")?,
                    ratio: param(&params, &family, "ratio")?,
                }),
                _ => Err(Error::UnknownFamily(family)),
            },
        }
    }
}

impl From<Sequence> for SequenceRepr {
    fn from(s: Sequence) -> Self {
        match s {
            Sequence::Constant(constant) => SequenceRepr::Constant { constant },
            Sequence::Table { start, values } => SequenceRepr::Table { table: TableRepr { start, values } },
            Sequence::Harmonic { scale, power } => SequenceRepr::Family {
                family: "harmonic".into(),
                params: BTreeMap::from([("scale".into(), scale), ("power".into(), power)]),
            },
            Sequence::Geometric { scale, ratio } => SequenceRepr::Family {
                family: "geometric".into(),
                params: BTreeMap::from([("scale".into(), scale), ("ratio".into(), ratio)]),
            },
        }
    }
}
