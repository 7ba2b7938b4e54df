//! Query-time cost of a simulated run.
//!
//! ```text
//! C_Invoc = (N_QA + N_QP + 1) · C_inv
//! C_Run   = (M_QA · ΣT_QA + M_QP · ΣT_QP + M_CO · T_CO) · C_run
//! C_λ     = C_Invoc + C_Run
//! C_S3    = L · C_get
//! C_EFS   = S · R_size · C_byte
//! C_Total = C_λ + C_S3 + C_EFS
//! ```
//!
//! Memory is in MB, times in seconds, `L` counts index GETs and `S` counts
//! full-precision reads over the whole run.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::runtime::RunReport;

/// Unit prices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriceSheet {
    pub per_invocation: f64,
    pub per_mb_second: f64,
    pub per_get: f64,
    pub per_byte_read: f64,
    /// Free-form provenance of the figures.
    #[serde(default)]
    pub note: Option<String>,
}

impl PriceSheet {
    pub fn validate(&self) -> Result<()> {
        let all = [self.per_invocation, self.per_mb_second, self.per_get, self.per_byte_read];
        if all.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::Config("prices must be finite and non-negative".into()));
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let sheet: Self = toml::from_str(s).map_err(|e| Error::Config(format!("price sheet: {e}")))?;
        sheet.validate()?;
        Ok(sheet)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }
}

/// The quantities priced, copied out of a [`RunReport`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostInputs {
    pub n_qa: u64,
    pub n_qp: u64,
    pub m_co: f64,
    pub m_qa: f64,
    pub m_qp: f64,
    pub t_co: f64,
    pub sum_t_qa: f64,
    pub sum_t_qp: f64,
    pub index_gets: u64,
    pub full_precision_reads: u64,
    pub read_size_bytes: u64,
}

impl CostInputs {
    pub fn from_report(r: &RunReport) -> Self {
        Self {
            n_qa: r.n_qa as u64,
            n_qp: r.n_qp as u64,
            m_co: r.memory.coordinator_mb,
            m_qa: r.memory.allocator_mb,
            m_qp: r.memory.processor_mb,
            t_co: r.t_co(),
            sum_t_qa: r.sum_t_qa(),
            sum_t_qp: r.sum_t_qp(),
            index_gets: r.total_index_gets(),
            full_precision_reads: r.full_precision_reads,
            read_size_bytes: r.read_size_bytes,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub invocation: f64,
    pub runtime: f64,
    pub lambda: f64,
    pub object_gets: f64,
    pub byte_reads: f64,
    pub total: f64,
    pub inputs: CostInputs,
}

pub fn price_inputs(inputs: &CostInputs, prices: &PriceSheet) -> CostReport {
    let invocation = (inputs.n_qa + inputs.n_qp + 1) as f64 * prices.per_invocation;
    let mb_seconds = inputs.m_qa * inputs.sum_t_qa + inputs.m_qp * inputs.sum_t_qp + inputs.m_co * inputs.t_co;
    let runtime = mb_seconds * prices.per_mb_second;
    let lambda = invocation + runtime;
    let object_gets = inputs.index_gets as f64 * prices.per_get;
    let byte_reads = inputs.full_precision_reads as f64 * inputs.read_size_bytes as f64 * prices.per_byte_read;
    CostReport {
        invocation,
        runtime,
        lambda,
        object_gets,
        byte_reads,
        total: lambda + object_gets + byte_reads,
        inputs: inputs.clone(),
    }
}

pub fn price_run(report: &RunReport, prices: &PriceSheet) -> CostReport {
    price_inputs(&CostInputs::from_report(report), prices)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prices() -> PriceSheet {
        PriceSheet {
            per_invocation: 2e-7,
            per_mb_second: 1.6e-8,
            per_get: 4e-7,
            per_byte_read: 3e-11,
            note: None,
        }
    }

    fn zero_inputs() -> CostInputs {
        CostInputs {
            n_qa: 10,
            n_qp: 20,
            m_co: 512.0,
            m_qa: 1770.0,
            m_qp: 1770.0,
            t_co: 0.0,
            sum_t_qa: 0.0,
            sum_t_qp: 0.0,
            index_gets: 0,
            full_precision_reads: 0,
            read_size_bytes: 512,
        }
    }

    #[test]
    fn invocation_only() {
        let c = price_inputs(&zero_inputs(), &prices());
        assert_eq!(c.total, 31.0 * 2e-7);
        assert_eq!(c.runtime, 0.0);
    }

    #[test]
    fn byte_reads() {
        let mut i = zero_inputs();
        i.full_precision_reads = 20;
        let p = PriceSheet {
            per_byte_read: 1.0,
            ..prices()
        };
        assert_eq!(price_inputs(&i, &p).byte_reads, 10240.0);
    }

    #[test]
    fn linear_in_times_and_gets() {
        let mut i = zero_inputs();
        i.t_co = 1.25;
        i.sum_t_qa = 3.5;
        i.sum_t_qp = 7.75;
        i.index_gets = 13;
        let a = price_inputs(&i, &prices());
        i.t_co *= 2.0;
        i.sum_t_qa *= 2.0;
        i.sum_t_qp *= 2.0;
        i.index_gets *= 2;
        let b = price_inputs(&i, &prices());
        assert_eq!(b.runtime, 2.0 * a.runtime);
        assert_eq!(b.object_gets, 2.0 * a.object_gets);
    }

    #[test]
    fn toml_sheet() {
        let s = PriceSheet::from_toml_str(
            "per_invocation = 0.0000002\nper_mb_second = 1.6e-8\nper_get = 4e-7\nper_byte_read = 0.0\n",
        )
        .unwrap();
        assert_eq!(s.per_invocation, 2e-7);
        assert!(PriceSheet::from_toml_str("per_invocation = -1\nper_mb_second = 0\nper_get = 0\nper_byte_read = 0").is_err());
    }
}
