//! Cell-level predicate evaluation over quantized attributes.
//!
//! A clause is first translated into a per-cell pass/fail column of the
//! lookup array `R`; the filter mask is then the AND over attributes of the
//! gathered `R[code(i, a), a, q]` bits.
//!
//! Numeric cells pass only when every value they can hold satisfies the
//! clause. Cells are half-open `[V[c], V[c+1])` except the last, which is
//! closed. Numeric equality is the exception: it marks the cell that
//! contains the operand.

use serde::{Deserialize, Serialize};

use crate::bitmap::Bitmap;
use crate::dataset::{AttrClause, AttributeKind, CmpOp, QueryPredicate};
use crate::error::{Error, Result};
use crate::par::{self, Exec};
use crate::quantizer::cell_of;

/// Quantized attribute columns plus the boundary table `V` of shape
/// `(M + 1) × A`, padded with `+∞`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributeQIndex {
    n: usize,
    m: usize,
    /// Row-major `(M + 1) × A`.
    v: Vec<f64>,
    cells: Vec<usize>,
    labels: Vec<Option<Vec<String>>>,
    codes: Vec<Vec<u32>>,
}

impl AttributeQIndex {
    /// `bounds[a]` is attribute `a`'s ascending boundary list (`cells + 1`
    /// values); `labels[a]` is `Some(cell → label)` for categorical columns.
    pub fn from_parts(
        n: usize,
        bounds: Vec<Vec<f64>>,
        codes: Vec<Vec<u32>>,
        labels: Vec<Option<Vec<String>>>,
    ) -> Result<Self> {
        let a_count = bounds.len();
        if a_count == 0 || codes.len() != a_count || labels.len() != a_count {
            return Err(Error::Format("attribute index parts disagree on A".into()));
        }
        let cells: Vec<usize> = bounds.iter().map(|b| b.len().saturating_sub(1)).collect();
        for a in 0..a_count {
            if cells[a] == 0 {
                return Err(Error::Format(format!("attribute {a} has no cells")));
            }
            if bounds[a].windows(2).any(|w| w[0] > w[1]) {
                return Err(Error::Format(format!("attribute {a} boundaries not ascending")));
            }
            if codes[a].len() != n {
                return Err(Error::Format(format!("attribute {a} has {} codes", codes[a].len())));
            }
            if codes[a].iter().any(|&c| c as usize >= cells[a]) {
                return Err(Error::Format(format!("attribute {a} code out of range")));
            }
            if let Some(l) = &labels[a] {
                if l.len() != cells[a] {
                    return Err(Error::Format(format!("attribute {a} label map size")));
                }
            }
        }
        let m = *cells.iter().max().unwrap();
        let mut v = vec![f64::INFINITY; (m + 1) * a_count];
        for (a, b) in bounds.iter().enumerate() {
            for (c, &x) in b.iter().enumerate() {
                v[c * a_count + a] = x;
            }
        }
        Ok(Self {
            n,
            m,
            v,
            cells,
            labels,
            codes,
        })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn a_count(&self) -> usize {
        self.cells.len()
    }

    /// `M`, the largest cell count over attributes.
    #[inline]
    pub fn m(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn cells(&self, a: usize) -> usize {
        self.cells[a]
    }

    /// `V[c, a]`.
    #[inline]
    pub fn v(&self, c: usize, a: usize) -> f64 {
        self.v[c * self.a_count() + a]
    }

    pub fn bounds(&self, a: usize) -> Vec<f64> {
        (0..=self.cells[a]).map(|c| self.v(c, a)).collect()
    }

    pub fn labels(&self, a: usize) -> Option<&[String]> {
        self.labels[a].as_deref()
    }

    pub fn codes(&self, a: usize) -> &[u32] {
        &self.codes[a]
    }

    pub fn kinds(&self) -> Vec<AttributeKind> {
        self.labels
            .iter()
            .map(|l| match l {
                Some(_) => AttributeKind::Categorical,
                None => AttributeKind::Numeric,
            })
            .collect()
    }

    /// Rows `ids` only, in the given order.
    pub fn select_rows(&self, ids: &[usize]) -> Result<Self> {
        let bounds = (0..self.a_count()).map(|a| self.bounds(a)).collect();
        let codes = self
            .codes
            .iter()
            .map(|col| ids.iter().map(|&i| col[i]).collect())
            .collect();
        Self::from_parts(ids.len(), bounds, codes, self.labels.clone())
    }
}

/// Pass/fail column for one clause over cells `0..=M` (row `M` and cells
/// beyond the attribute's live count are always 0).
pub fn clause_cells(aq: &AttributeQIndex, clause: &AttrClause) -> Result<Vec<bool>> {
    let a = clause.attr;
    if a >= aq.a_count() {
        return Err(Error::Predicate(format!(
            "clause on attribute {a} but index has {}",
            aq.a_count()
        )));
    }
    let cells = aq.cells(a);
    let mut out = vec![false; aq.m() + 1];
    if let Some(labels) = aq.labels(a) {
        if clause.op != CmpOp::Eq {
            return Err(Error::Predicate(format!(
                "operator {:?} is not defined on categorical attribute {a}",
                clause.op
            )));
        }
        let label = clause.value.as_label().ok_or_else(|| {
            Error::Predicate(format!("categorical attribute {a} needs a label operand"))
        })?;
        if let Ok(c) = labels.binary_search_by(|l| l.as_str().cmp(label)) {
            out[c] = true;
        }
        return Ok(out);
    }
    let x = clause
        .value
        .as_num()
        .ok_or_else(|| Error::Predicate(format!("numeric attribute {a} needs a number")))?;
    let v = |c: usize| aq.v(c, a);
    if clause.op == CmpOp::Eq {
        if v(0) <= x && x <= v(cells) {
            out[cell_of(&aq.bounds(a), x)] = true;
        }
        return Ok(out);
    }
    let hi2 = clause.value2.as_ref().and_then(|o| o.as_num());
    for (c, slot) in out.iter_mut().enumerate().take(cells) {
        let last = c + 1 == cells;
        let lo = v(c);
        let up = v(c + 1);
        // largest value the cell can hold is `up` only for the closed last cell
        let below = |t: f64, strict: bool| {
            if last && strict {
                up < t
            } else {
                up <= t
            }
        };
        *slot = match clause.op {
            CmpOp::Lt => below(x, true),
            CmpOp::Le => below(x, false),
            CmpOp::Gt => lo > x,
            CmpOp::Ge => lo >= x,
            CmpOp::Between => {
                let hi = hi2.ok_or_else(|| Error::Predicate("between needs two operands".into()))?;
                lo >= x && up <= hi
            }
            CmpOp::Eq => unreachable!(),
        };
    }
    Ok(out)
}

/// Binary array `R` of shape `(M + 1, A, |Q|)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SatisfactionLookup {
    m: usize,
    a_count: usize,
    n_queries: usize,
    /// Index `(c * A + a) * |Q| + q`.
    r: Vec<bool>,
}

impl SatisfactionLookup {
    #[inline]
    pub fn get(&self, c: usize, a: usize, q: usize) -> bool {
        self.r[(c * self.a_count + a) * self.n_queries + q]
    }

    pub fn n_queries(&self) -> usize {
        self.n_queries
    }

    /// `R[:, a, q]`.
    pub fn column(&self, a: usize, q: usize) -> Vec<bool> {
        (0..=self.m).map(|c| self.get(c, a, q)).collect()
    }
}

pub fn build_lookup(aq: &AttributeQIndex, predicates: &[QueryPredicate]) -> Result<SatisfactionLookup> {
    let (m, a_count, nq) = (aq.m(), aq.a_count(), predicates.len());
    let mut r = vec![false; (m + 1) * a_count * nq];
    for (q, p) in predicates.iter().enumerate() {
        p.validate(&aq.kinds())?;
        for a in 0..a_count {
            let col = match p.clause_for(a) {
                Some(clause) => clause_cells(aq, clause)?,
                None => (0..=m).map(|c| c < aq.cells(a)).collect(),
            };
            for (c, pass) in col.into_iter().enumerate() {
                r[(c * a_count + a) * nq + q] = pass;
            }
        }
    }
    Ok(SatisfactionLookup {
        m,
        a_count,
        n_queries: nq,
        r,
    })
}

/// `F = ∧_a S_a` with `S_a[i] = R[code(i, a), a, q]`.
pub fn compute_filter_mask(aq: &AttributeQIndex, lookup: &SatisfactionLookup, q: usize) -> Bitmap {
    let n = aq.n();
    let mut f = Bitmap::ones(n);
    for a in 0..aq.a_count() {
        let col = lookup.column(a, q);
        if col[..aq.cells(a)].iter().all(|&b| b) {
            continue;
        }
        let codes = aq.codes(a);
        for (w, word) in f.words_mut().iter_mut().enumerate() {
            if *word == 0 {
                continue;
            }
            let base = w * 64;
            let end = (base + 64).min(n);
            let mut s = 0u64;
            for (bit, &code) in codes[base..end].iter().enumerate() {
                s |= (col[code as usize] as u64) << bit;
            }
            *word &= s;
        }
    }
    f
}

/// Lookup for the batch, then one mask per predicate.
pub fn filter_masks(
    exec: Exec,
    aq: &AttributeQIndex,
    predicates: &[QueryPredicate],
) -> Result<Vec<Bitmap>> {
    let lookup = build_lookup(aq, predicates)?;
    Ok(par::map_range(exec, predicates.len(), |q| {
        compute_filter_mask(aq, &lookup, q)
    }))
}

/// Row-by-row evaluation of a predicate on quantized cells, without the
/// lookup array. Reference for [`compute_filter_mask`].
pub fn quantized_mask_naive(aq: &AttributeQIndex, predicate: &QueryPredicate) -> Result<Bitmap> {
    predicate.validate(&aq.kinds())?;
    let mut f = Bitmap::zeros(aq.n());
    'rows: for i in 0..aq.n() {
        for clause in predicate.clauses() {
            let a = clause.attr;
            let c = aq.codes(a)[i] as usize;
            if !cell_passes(aq, a, c, clause) {
                continue 'rows;
            }
        }
        f.set(i);
    }
    Ok(f)
}

fn cell_passes(aq: &AttributeQIndex, a: usize, c: usize, clause: &AttrClause) -> bool {
    if let Some(labels) = aq.labels(a) {
        return clause.value.as_label() == Some(labels[c].as_str());
    }
    let b = aq.bounds(a);
    let last = c + 1 == aq.cells(a);
    let x = clause.value.as_num().unwrap();
    // the cell's value range as (lo, hi, hi_included)
    let (lo, hi, hi_in) = (b[c], b[c + 1], last);
    let all_below = |t: f64, inclusive: bool| {
        if hi_in {
            if inclusive {
                hi <= t
            } else {
                hi < t
            }
        } else {
            hi <= t
        }
    };
    match clause.op {
        CmpOp::Lt => all_below(x, false),
        CmpOp::Le => all_below(x, true),
        CmpOp::Gt => lo > x,
        CmpOp::Ge => lo >= x,
        CmpOp::Between => {
            let y = clause.value2.as_ref().unwrap().as_num().unwrap();
            lo >= x && all_below(y, true)
        }
        CmpOp::Eq => {
            x >= b[0] && x <= b[b.len() - 1] && (lo <= x || c == 0) && (x < hi || last)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example_index() -> AttributeQIndex {
        // one numeric attribute with V[:,0] = [0,5,10,15,20] and a
        // categorical one with two labels
        AttributeQIndex::from_parts(
            4,
            vec![vec![0.0, 5.0, 10.0, 15.0, 20.0], vec![0.0, 1.0, 2.0]],
            vec![vec![0, 1, 2, 3], vec![0, 1, 1, 0]],
            vec![None, Some(vec!["green".into(), "red".into()])],
        )
        .unwrap()
    }

    fn column(aq: &AttributeQIndex, clause: AttrClause) -> Vec<u8> {
        clause_cells(aq, &clause).unwrap().into_iter().map(u8::from).collect()
    }

    #[test]
    fn whole_cell_examples() {
        let aq = example_index();
        assert_eq!(column(&aq, AttrClause::num(0, CmpOp::Lt, 15.0)), [1, 1, 1, 0, 0]);
        assert_eq!(column(&aq, AttrClause::between(0, 5.0, 10.0)), [0, 1, 0, 0, 0]);
        assert_eq!(column(&aq, AttrClause::num(0, CmpOp::Le, 20.0)), [1, 1, 1, 1, 0]);
        assert_eq!(column(&aq, AttrClause::num(0, CmpOp::Lt, 20.0)), [1, 1, 1, 0, 0]);
        assert_eq!(column(&aq, AttrClause::num(0, CmpOp::Ge, 10.0)), [0, 0, 1, 1, 0]);
        assert_eq!(column(&aq, AttrClause::num(0, CmpOp::Gt, 10.0)), [0, 0, 0, 1, 0]);
        assert_eq!(column(&aq, AttrClause::num(0, CmpOp::Eq, 12.0)), [0, 0, 1, 0, 0]);
        assert_eq!(column(&aq, AttrClause::num(0, CmpOp::Eq, 20.0)), [0, 0, 0, 1, 0]);
        assert_eq!(column(&aq, AttrClause::num(0, CmpOp::Eq, 21.0)), [0, 0, 0, 0, 0]);
        assert_eq!(column(&aq, AttrClause::label_eq(1, "red")), [0, 1, 0, 0, 0]);
        assert_eq!(column(&aq, AttrClause::label_eq(1, "blue")), [0, 0, 0, 0, 0]);
    }

    #[test]
    fn lookup_and_mask() {
        let aq = example_index();
        let preds = vec![
            QueryPredicate::empty(),
            QueryPredicate::new(vec![AttrClause::num(0, CmpOp::Lt, 15.0)]).unwrap(),
        ];
        let r = build_lookup(&aq, &preds).unwrap();
        assert_eq!(r.column(1, 0), vec![true, true, false, false, false]);
        assert_eq!(compute_filter_mask(&aq, &r, 0).to_indices(), vec![0, 1, 2, 3]);
        // row 3 sits in cell 3 of attribute 0
        assert_eq!(compute_filter_mask(&aq, &r, 1).to_indices(), vec![0, 1, 2]);
    }

    #[test]
    fn range_on_categorical_is_an_error() {
        let aq = example_index();
        let p = QueryPredicate::new(vec![AttrClause::num(1, CmpOp::Lt, 1.0)]).unwrap();
        assert!(matches!(build_lookup(&aq, &[p]), Err(Error::Predicate(_))));
    }

    #[test]
    fn padded_rows_never_selected() {
        let aq = example_index();
        for x in [-1.0, 0.0, 2.5, 5.0, 20.0, 1e9] {
            for op in [CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge, CmpOp::Eq] {
                let p = QueryPredicate::new(vec![AttrClause::label_eq(1, "red")]).unwrap();
                let r = build_lookup(&aq, &[p]).unwrap();
                assert!(!r.get(aq.m(), 0, 0) && !r.get(2, 1, 0));
                let col = clause_cells(&aq, &AttrClause::num(0, op, x)).unwrap();
                assert!(!col[aq.m()]);
            }
        }
    }
}
