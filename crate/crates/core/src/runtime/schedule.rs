//! Overlapping query preparation with in-flight processor calls.
//!
//! An allocator walks its sub-batches as `prepare(0)`, then for each `i`
//! `invoke(i) ∥ prepare(i+1)` followed by `reduce(i)`.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::par::{self, Exec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Prepare(usize),
    Invoke(usize),
    Reduce(usize),
}

/// Phases in one step run concurrently.
pub type Step = Vec<Phase>;

pub fn interleave_schedule(n_batches: usize) -> Vec<Step> {
    let mut steps = Vec::with_capacity(2 * n_batches + 1);
    if n_batches == 0 {
        return steps;
    }
    steps.push(vec![Phase::Prepare(0)]);
    for i in 0..n_batches {
        if i + 1 < n_batches {
            steps.push(vec![Phase::Invoke(i), Phase::Prepare(i + 1)]);
        } else {
            steps.push(vec![Phase::Invoke(i)]);
        }
        steps.push(vec![Phase::Reduce(i)]);
    }
    steps
}

pub fn sequential_schedule(n_batches: usize) -> Vec<Step> {
    (0..n_batches)
        .flat_map(|i| [vec![Phase::Prepare(i)], vec![Phase::Invoke(i)], vec![Phase::Reduce(i)]])
        .collect()
}

/// Runs `n_batches` through prepare → invoke → reduce along the chosen
/// schedule and returns the executed steps.
pub fn run_schedule<P, I, FP, FI, FR>(
    exec: Exec,
    n_batches: usize,
    interleave: bool,
    prepare: FP,
    invoke: FI,
    mut reduce: FR,
) -> Result<Vec<Step>>
where
    P: Send + Sync,
    I: Send,
    FP: Fn(usize) -> Result<P> + Sync,
    FI: Fn(usize, &P) -> Result<I> + Sync,
    FR: FnMut(usize, P, I) -> Result<()>,
{
    let steps = if interleave {
        interleave_schedule(n_batches)
    } else {
        sequential_schedule(n_batches)
    };
    let mut prepared: Vec<Option<P>> = (0..n_batches).map(|_| None).collect();
    let mut invoked: Vec<Option<I>> = (0..n_batches).map(|_| None).collect();
    for step in &steps {
        match step.as_slice() {
            [Phase::Prepare(i)] => prepared[*i] = Some(prepare(*i)?),
            [Phase::Invoke(i)] => {
                let p = prepared[*i].as_ref().expect("prepared before invoke");
                invoked[*i] = Some(invoke(*i, p)?);
            }
            [Phase::Invoke(i), Phase::Prepare(j)] => {
                let p = prepared[*i].as_ref().expect("prepared before invoke");
                let (a, b) = par::join(exec, || invoke(*i, p), || prepare(*j));
                invoked[*i] = Some(a?);
                prepared[*j] = Some(b?);
            }
            [Phase::Reduce(i)] => {
                let p = prepared[*i].take().expect("prepared before reduce");
                let r = invoked[*i].take().expect("invoked before reduce");
                reduce(*i, p, r)?;
            }
            other => unreachable!("unexpected step {other:?}"),
        }
    }
    Ok(steps)
}
