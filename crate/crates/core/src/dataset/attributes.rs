use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Generated numeric attributes are uniform over `[0, 100)`.
pub const NUMERIC_RANGE: (f64, f64) = (0.0, 100.0);
/// Generated categorical attributes are uniform over this many labels.
pub const CATEGORICAL_LABELS: usize = 16;

const MAGIC: &str = "OSQATTR1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttributeKind {
    Numeric,
    Categorical,
}

impl AttributeKind {
    fn tag(self) -> char {
        match self {
            AttributeKind::Numeric => 'N',
            AttributeKind::Categorical => 'C',
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum AttributeColumn {
    Numeric(Vec<f64>),
    /// `labels` is sorted and distinct; `codes[i]` indexes into it.
    Categorical { labels: Vec<String>, codes: Vec<u32> },
}

impl AttributeColumn {
    pub fn kind(&self) -> AttributeKind {
        match self {
            AttributeColumn::Numeric(_) => AttributeKind::Numeric,
            AttributeColumn::Categorical { .. } => AttributeKind::Categorical,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            AttributeColumn::Numeric(v) => v.len(),
            AttributeColumn::Categorical { codes, .. } => codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Builds a categorical column from raw labels, sorting the dictionary.
    pub fn categorical_from_labels<S: AsRef<str>>(values: &[S]) -> Self {
        let mut labels: Vec<String> = values.iter().map(|s| s.as_ref().to_owned()).collect();
        labels.sort();
        labels.dedup();
        let codes = values
            .iter()
            .map(|s| labels.binary_search_by(|l| l.as_str().cmp(s.as_ref())).unwrap() as u32)
            .collect();
        AttributeColumn::Categorical { labels, codes }
    }
}

/// Per-row attribute values, one column per attribute.
#[derive(Clone, Debug, PartialEq)]
pub struct AttributeTable {
    n: usize,
    columns: Vec<AttributeColumn>,
}

impl AttributeTable {
    pub fn new(columns: Vec<AttributeColumn>) -> Result<Self> {
        let n = columns
            .first()
            .map(|c| c.len())
            .ok_or_else(|| Error::Format("attribute table needs at least one column".into()))?;
        for (a, c) in columns.iter().enumerate() {
            if c.len() != n {
                return Err(Error::Format(format!(
                    "attribute {a} has {} rows, expected {n}",
                    c.len()
                )));
            }
            if let AttributeColumn::Categorical { labels, codes } = c {
                if codes.iter().any(|&code| code as usize >= labels.len()) {
                    return Err(Error::Format(format!("attribute {a} has an unknown label code")));
                }
            }
        }
        Ok(Self { n, columns })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn a_count(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[AttributeColumn] {
        &self.columns
    }

    pub fn column(&self, a: usize) -> &AttributeColumn {
        &self.columns[a]
    }

    pub fn kinds(&self) -> Vec<AttributeKind> {
        self.columns.iter().map(|c| c.kind()).collect()
    }

    /// Rows `0..n` only.
    pub fn truncate(&self, n: usize) -> Result<Self> {
        let n = n.min(self.n);
        let columns = self
            .columns
            .iter()
            .map(|c| match c {
                AttributeColumn::Numeric(v) => AttributeColumn::Numeric(v[..n].to_vec()),
                AttributeColumn::Categorical { labels, codes } => AttributeColumn::Categorical {
                    labels: labels.clone(),
                    codes: codes[..n].to_vec(),
                },
            })
            .collect();
        Self::new(columns)
    }

    /// Rows reordered so that new row `i` is old row `order[i]`.
    pub fn permute(&self, order: &[usize]) -> Result<Self> {
        let columns = self
            .columns
            .iter()
            .map(|c| match c {
                AttributeColumn::Numeric(v) => {
                    AttributeColumn::Numeric(order.iter().map(|&i| v[i]).collect())
                }
                AttributeColumn::Categorical { labels, codes } => AttributeColumn::Categorical {
                    labels: labels.clone(),
                    codes: order.iter().map(|&i| codes[i]).collect(),
                },
            })
            .collect();
        Self::new(columns)
    }

    /// Columnar binary layout: one ASCII header line
    /// `OSQATTR1 <n> <A> <kinds>` (kinds as `N`/`C` per attribute), then each
    /// column in order. Numeric: `n` little-endian `f64`. Categorical: `u32`
    /// label count, each label as `u32` byte length + UTF-8, then `n` `u32` codes.
    pub fn write_to(&self, w: impl Write) -> Result<()> {
        let mut w = BufWriter::new(w);
        let kinds: String = self.columns.iter().map(|c| c.kind().tag()).collect();
        writeln!(w, "{MAGIC} {} {} {kinds}", self.n, self.a_count())?;
        for c in &self.columns {
            match c {
                AttributeColumn::Numeric(v) => {
                    for &x in v {
                        w.write_f64::<LittleEndian>(x)?;
                    }
                }
                AttributeColumn::Categorical { labels, codes } => {
                    w.write_u32::<LittleEndian>(labels.len() as u32)?;
                    for l in labels {
                        w.write_u32::<LittleEndian>(l.len() as u32)?;
                        w.write_all(l.as_bytes())?;
                    }
                    for &code in codes {
                        w.write_u32::<LittleEndian>(code)?;
                    }
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from(r: impl Read) -> Result<Self> {
        let mut r = BufReader::new(r);
        let mut header = String::new();
        r.read_line(&mut header)?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 4 || parts[0] != MAGIC {
            return Err(Error::Format(format!("bad attribute header {header:?}")));
        }
        let n: usize = parts[1]
            .parse()
            .map_err(|_| Error::Format("bad row count".into()))?;
        let a: usize = parts[2]
            .parse()
            .map_err(|_| Error::Format("bad attribute count".into()))?;
        if parts[3].len() != a {
            return Err(Error::Format("kind string length mismatch".into()));
        }
        let mut columns = Vec::with_capacity(a);
        for tag in parts[3].chars() {
            match tag {
                'N' => {
                    let mut v = vec![0.0; n];
                    r.read_f64_into::<LittleEndian>(&mut v)?;
                    columns.push(AttributeColumn::Numeric(v));
                }
                'C' => {
                    let count = r.read_u32::<LittleEndian>()? as usize;
                    let mut labels = Vec::with_capacity(count);
                    for _ in 0..count {
                        let len = r.read_u32::<LittleEndian>()? as usize;
                        let mut buf = vec![0u8; len];
                        r.read_exact(&mut buf)?;
                        labels.push(
                            String::from_utf8(buf)
                                .map_err(|_| Error::Format("label is not UTF-8".into()))?,
                        );
                    }
                    let mut codes = vec![0u32; n];
                    r.read_u32_into::<LittleEndian>(&mut codes)?;
                    columns.push(AttributeColumn::Categorical { labels, codes });
                }
                other => return Err(Error::Format(format!("unknown attribute kind {other:?}"))),
            }
        }
        Self::new(columns)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(std::fs::File::create(path)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(std::fs::File::open(path)?)
    }
}

/// `a_count` numeric attributes, uniform over [`NUMERIC_RANGE`].
pub fn generate_attributes(n: usize, a_count: usize, seed: u64) -> Result<AttributeTable> {
    generate_attributes_with_kinds(n, &vec![AttributeKind::Numeric; a_count], seed)
}

/// Numeric columns are uniform over [`NUMERIC_RANGE`]; categorical columns
/// are uniform over [`CATEGORICAL_LABELS`] labels `label00`, `label01`, ...
pub fn generate_attributes_with_kinds(
    n: usize,
    kinds: &[AttributeKind],
    seed: u64,
) -> Result<AttributeTable> {
    if n == 0 || kinds.is_empty() {
        return Err(Error::Config(
            "attribute generation needs n >= 1 and at least one attribute".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = NUMERIC_RANGE;
    let columns = kinds
        .iter()
        .map(|kind| match kind {
            AttributeKind::Numeric => {
                AttributeColumn::Numeric((0..n).map(|_| rng.random_range(lo..hi)).collect())
            }
            AttributeKind::Categorical => AttributeColumn::Categorical {
                labels: (0..CATEGORICAL_LABELS).map(|i| format!("label{i:02}")).collect(),
                codes: (0..n)
                    .map(|_| rng.random_range(0..CATEGORICAL_LABELS as u32))
                    .collect(),
            },
        })
        .collect();
    AttributeTable::new(columns)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic_and_in_range() {
        let a = generate_attributes(1000, 4, 7).unwrap();
        let b = generate_attributes(1000, 4, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.a_count(), 4);
        for c in a.columns() {
            let AttributeColumn::Numeric(v) = c else {
                panic!("expected numeric")
            };
            assert_eq!(v.len(), 1000);
            assert!(v.iter().all(|x| (0.0..100.0).contains(x)));
        }
        assert_ne!(a, generate_attributes(1000, 4, 8).unwrap());
    }

    #[test]
    fn single_cell_table() {
        let t = generate_attributes(1, 1, 0).unwrap();
        assert_eq!((t.n(), t.a_count()), (1, 1));
    }

    #[test]
    fn zero_rows_rejected() {
        assert!(generate_attributes(0, 4, 0).is_err());
    }

    #[test]
    fn file_round_trip_with_categoricals() {
        let t = generate_attributes_with_kinds(
            50,
            &[AttributeKind::Numeric, AttributeKind::Categorical],
            3,
        )
        .unwrap();
        let mut buf = Vec::new();
        t.write_to(&mut buf).unwrap();
        assert!(buf.starts_with(b"OSQATTR1 50 2 NC\n"));
        assert_eq!(AttributeTable::read_from(&buf[..]).unwrap(), t);
    }

    #[test]
    fn categorical_dictionary_is_lexicographic() {
        let c = AttributeColumn::categorical_from_labels(&["red", "green", "red"]);
        let AttributeColumn::Categorical { labels, codes } = c else {
            unreachable!()
        };
        assert_eq!(labels, vec!["green", "red"]);
        assert_eq!(codes, vec![1, 0, 1]);
    }
}
