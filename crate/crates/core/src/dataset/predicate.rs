use serde::{Deserialize, Serialize};

use super::{AttributeColumn, AttributeKind, AttributeTable};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CmpOp {
    #[serde(alias = "<")]
    Lt,
    #[serde(alias = "<=")]
    Le,
    #[serde(alias = "=", alias = "==")]
    Eq,
    #[serde(alias = ">")]
    Gt,
    #[serde(alias = ">=")]
    Ge,
    /// Inclusive range `value <= x <= value2`.
    #[serde(alias = "b", alias = "B")]
    Between,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Operand {
    Num(f64),
    Label(String),
}

impl Operand {
    pub fn as_num(&self) -> Option<f64> {
        match self {
            Operand::Num(x) => Some(*x),
            Operand::Label(_) => None,
        }
    }

    pub fn as_label(&self) -> Option<&str> {
        match self {
            Operand::Label(s) => Some(s),
            Operand::Num(_) => None,
        }
    }
}

/// One clause `attr <op> value [value2]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttrClause {
    pub attr: usize,
    pub op: CmpOp,
    pub value: Operand,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value2: Option<Operand>,
}

impl AttrClause {
    pub fn num(attr: usize, op: CmpOp, value: f64) -> Self {
        Self {
            attr,
            op,
            value: Operand::Num(value),
            value2: None,
        }
    }

    pub fn between(attr: usize, lo: f64, hi: f64) -> Self {
        Self {
            attr,
            op: CmpOp::Between,
            value: Operand::Num(lo),
            value2: Some(Operand::Num(hi)),
        }
    }

    pub fn label_eq(attr: usize, label: impl Into<String>) -> Self {
        Self {
            attr,
            op: CmpOp::Eq,
            value: Operand::Label(label.into()),
            value2: None,
        }
    }

    /// Raw-value test for a numeric attribute.
    #[inline]
    pub fn matches_num(&self, x: f64) -> bool {
        let v = self.value.as_num().unwrap_or(f64::NAN);
        match self.op {
            CmpOp::Lt => x < v,
            CmpOp::Le => x <= v,
            CmpOp::Eq => x == v,
            CmpOp::Gt => x > v,
            CmpOp::Ge => x >= v,
            CmpOp::Between => {
                let hi = self
                    .value2
                    .as_ref()
                    .and_then(Operand::as_num)
                    .unwrap_or(f64::NAN);
                v <= x && x <= hi
            }
        }
    }

    fn validate(&self, kind: AttributeKind) -> Result<()> {
        match kind {
            AttributeKind::Categorical => {
                if self.op != CmpOp::Eq {
                    return Err(Error::Predicate(format!(
                        "operator {:?} is not defined on categorical attribute {}",
                        self.op, self.attr
                    )));
                }
                if self.value.as_label().is_none() {
                    return Err(Error::Predicate(format!(
                        "categorical attribute {} needs a label operand",
                        self.attr
                    )));
                }
            }
            AttributeKind::Numeric => {
                let lo = self.value.as_num().ok_or_else(|| {
                    Error::Predicate(format!(
                        "numeric attribute {} needs a numeric operand",
                        self.attr
                    ))
                })?;
                if lo.is_nan() {
                    return Err(Error::Predicate("NaN operand".into()));
                }
                if self.op == CmpOp::Between {
                    let hi = self
                        .value2
                        .as_ref()
                        .and_then(Operand::as_num)
                        .ok_or_else(|| {
                            Error::Predicate("between needs a numeric second operand".into())
                        })?;
                    if !(lo <= hi) {
                        return Err(Error::Predicate(format!(
                            "between operands out of order: {lo} > {hi}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Conjunction of per-attribute clauses; attributes without a clause are
/// unconstrained. At most one clause per attribute.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<AttrClause>", into = "Vec<AttrClause>")]
pub struct QueryPredicate {
    clauses: Vec<AttrClause>,
}

impl TryFrom<Vec<AttrClause>> for QueryPredicate {
    type Error = Error;

    fn try_from(clauses: Vec<AttrClause>) -> Result<Self> {
        Self::new(clauses)
    }
}

impl From<QueryPredicate> for Vec<AttrClause> {
    fn from(p: QueryPredicate) -> Self {
        p.clauses
    }
}

impl QueryPredicate {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Sorts clauses by attribute; duplicate attributes and malformed
    /// `between` operands are rejected.
    pub fn new(mut clauses: Vec<AttrClause>) -> Result<Self> {
        clauses.sort_by_key(|c| c.attr);
        if clauses.windows(2).any(|w| w[0].attr == w[1].attr) {
            return Err(Error::Predicate("more than one clause on an attribute".into()));
        }
        for c in &clauses {
            if c.op == CmpOp::Between {
                match (c.value.as_num(), c.value2.as_ref().and_then(Operand::as_num)) {
                    (Some(lo), Some(hi)) if lo <= hi => {}
                    (Some(_), Some(_)) => {
                        return Err(Error::Predicate("between operands out of order".into()))
                    }
                    _ => return Err(Error::Predicate("between needs two numeric operands".into())),
                }
            }
        }
        Ok(Self { clauses })
    }

    pub fn clauses(&self) -> &[AttrClause] {
        &self.clauses
    }

    pub fn clause_for(&self, attr: usize) -> Option<&AttrClause> {
        self.clauses
            .binary_search_by_key(&attr, |c| c.attr)
            .ok()
            .map(|i| &self.clauses[i])
    }

    pub fn is_empty(&self) -> bool {
        self.clauses.is_empty()
    }

    /// Checks attribute references and operator/kind compatibility.
    pub fn validate(&self, kinds: &[AttributeKind]) -> Result<()> {
        for c in &self.clauses {
            let kind = kinds.get(c.attr).ok_or_else(|| {
                Error::Predicate(format!(
                    "clause on attribute {} but table has {}",
                    c.attr,
                    kinds.len()
                ))
            })?;
            c.validate(*kind)?;
        }
        Ok(())
    }

    /// Raw-value evaluation of row `i`; the predicate must be validated.
    pub fn matches_row(&self, attrs: &AttributeTable, i: usize) -> bool {
        self.clauses.iter().all(|c| match attrs.column(c.attr) {
            AttributeColumn::Numeric(v) => c.matches_num(v[i]),
            AttributeColumn::Categorical { labels, codes } => {
                c.value.as_label() == Some(labels[codes[i] as usize].as_str())
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HybridQuery {
    pub vector: Vec<f32>,
    #[serde(default)]
    pub predicate: QueryPredicate,
    pub k: usize,
}

impl HybridQuery {
    pub fn validate(&self, d: usize, kinds: &[AttributeKind]) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if self.vector.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: self.vector.len(),
            });
        }
        self.predicate.validate(kinds)
    }
}
