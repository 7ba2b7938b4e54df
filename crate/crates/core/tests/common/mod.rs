#![allow(dead_code)]

use std::sync::Arc;

use osq_core::dataset::synth::{aligned_predicate, make_queries, ClusteredModel};
use osq_core::dataset::{generate_attributes, AttributeTable, HybridQuery, VectorDataset};
use osq_core::index::{build, BuildParams, HybridIndex};
use osq_core::Exec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub struct Fixture {
    pub ds: Arc<VectorDataset>,
    pub attrs: AttributeTable,
    pub index: HybridIndex,
    pub queries: Vec<HybridQuery>,
}

/// Clustered vectors with four numeric attributes and queries filtered on
/// the first `constrained` attributes with cell-aligned ranges.
pub fn fixture(n: usize, d: usize, nq: usize, constrained: usize, seed: u64) -> Fixture {
    let model = ClusteredModel::new(d, d, 40, seed).unwrap();
    let ds = model.sample(n, seed + 1).unwrap();
    let attrs = generate_attributes(n, 4, seed + 2).unwrap();
    let index = build(Exec::Parallel, &ds, &attrs, &BuildParams::default()).unwrap();
    let bounds: Vec<Vec<f64>> = (0..4).map(|a| index.attributes.bounds(a)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 3);
    let qv = model.sample(nq, seed + 4).unwrap();
    let queries = make_queries(&qv, 10, |_| {
        let b: Vec<Option<&[f64]>> = bounds
            .iter()
            .enumerate()
            .map(|(a, b)| (a < constrained).then_some(b.as_slice()))
            .collect();
        aligned_predicate(&mut rng, &b, (8, 9))
    });
    Fixture {
        ds: Arc::new(ds),
        attrs,
        index,
        queries,
    }
}

use osq_core::dataset::{AttrClause, AttributeKind, CmpOp, QueryPredicate};
use osq_core::hybrid_filter::AttributeQIndex;
use rand::Rng;

/// A predicate over a random subset of attributes. Numeric operands are
/// uniform, a stored boundary, or an attribute value taken from a row.
pub fn random_predicate(rng: &mut impl Rng, aq: &AttributeQIndex, raw: &AttributeTable) -> QueryPredicate {
    let kinds = aq.kinds();
    let mut clauses = Vec::new();
    for (a, kind) in kinds.iter().enumerate() {
        if rng.random_bool(0.4) {
            continue;
        }
        match kind {
            AttributeKind::Categorical => {
                let labels = aq.labels(a).unwrap();
                clauses.push(AttrClause::label_eq(a, labels[rng.random_range(0..labels.len())].clone()));
            }
            AttributeKind::Numeric => {
                let bounds = aq.bounds(a);
                let pick = |rng: &mut dyn rand::RngCore| -> f64 {
                    match rng.random_range(0..3) {
                        0 => rng.random_range(-10.0..110.0),
                        1 => bounds[rng.random_range(0..bounds.len())],
                        _ => match raw.column(a) {
                            osq_core::dataset::AttributeColumn::Numeric(v) => v[rng.random_range(0..v.len())],
                            _ => unreachable!(),
                        },
                    }
                };
                let op = [CmpOp::Lt, CmpOp::Le, CmpOp::Eq, CmpOp::Gt, CmpOp::Ge, CmpOp::Between][rng.random_range(0..6)];
                if op == CmpOp::Between {
                    let (x, y) = (pick(rng), pick(rng));
                    clauses.push(AttrClause::between(a, x.min(y), x.max(y)));
                } else {
                    clauses.push(AttrClause::num(a, op, pick(rng)));
                }
            }
        }
    }
    QueryPredicate::new(clauses).unwrap()
}
