//! Nominal-plan ingestion.
//!
//! Plans are time-stamped planner control sequences, optionally with planner
//! states, read from CSV with header `t,u1,...,um_p[,p1,...,pn_p]`. Controls
//! are held zero-order between samples.

use std::io::Read;
use std::path::Path;

use super::{ModelError, SemialgebraicSet};

#[derive(Debug, Clone, PartialEq)]
pub struct PlanSample {
    pub t: f64,
    pub u_p: Vec<f64>,
    /// Planner state, when the CSV provides the optional state columns.
    pub p: Option<Vec<f64>>,
}

/// A time-ordered nominal motion plan for the planning model.
#[derive(Debug, Clone, PartialEq)]
pub struct NominalPlan {
    pub samples: Vec<PlanSample>,
    /// Common sample spacing when the timestamps are uniform (within 1e-9).
    pub dt: Option<f64>,
}

impl NominalPlan {
    /// Parse from CSV with header `t,u1,...,um_p[,p1,...,pn_p]`.
    pub fn from_csv_reader<R: Read>(rdr: R, m_p: usize) -> Result<Self, ModelError> {
        let mut csv = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(rdr);
        let headers = csv.headers()?.clone();
        if headers.is_empty() || headers.get(0) != Some("t") {
            return Err(ModelError::Plan("first CSV column must be `t`".into()));
        }
        let ncols = headers.len();
        if ncols < 1 + m_p {
            return Err(ModelError::Plan(format!(
                "expected at least {} columns (t plus {} controls), found {}",
                1 + m_p,
                m_p,
                ncols
            )));
        }
        for j in 0..m_p {
            let want = format!("u{}", j + 1);
            if headers.get(1 + j) != Some(want.as_str()) {
                return Err(ModelError::Plan(format!(
                    "control column {} must be named `{}`",
                    1 + j,
                    want
                )));
            }
        }
        let n_state = ncols - 1 - m_p;
        for j in 0..n_state {
            let want = format!("p{}", j + 1);
            if headers.get(1 + m_p + j) != Some(want.as_str()) {
                return Err(ModelError::Plan(format!(
                    "state column {} must be named `{}`",
                    1 + m_p + j,
                    want
                )));
            }
        }
        let mut samples = Vec::new();
        for (line, rec) in csv.records().enumerate() {
            let rec = rec?;
            if rec.len() != ncols {
                return Err(ModelError::Plan(format!(
                    "row {}: expected {} fields, found {}",
                    line + 2,
                    ncols,
                    rec.len()
                )));
            }
            let num = |j: usize| -> Result<f64, ModelError> {
                rec[j].parse::<f64>().map_err(|_| {
                    ModelError::Plan(format!(
                        "row {}: `{}` is not a number",
                        line + 2,
                        &rec[j]
                    ))
                })
            };
            let t = num(0)?;
            let u_p = (0..m_p).map(|j| num(1 + j)).collect::<Result<Vec<_>, _>>()?;
            let p = if n_state > 0 {
                Some(
                    (0..n_state)
                        .map(|j| num(1 + m_p + j))
                        .collect::<Result<Vec<_>, _>>()?,
                )
            } else {
                None
            };
            samples.push(PlanSample { t, u_p, p });
        }
        if samples.is_empty() {
            return Err(ModelError::Plan("plan has no samples".into()));
        }
        for w in samples.windows(2) {
            if !(w[1].t > w[0].t) {
                return Err(ModelError::Plan(format!(
                    "timestamps must be strictly increasing (t={} then t={})",
                    w[0].t, w[1].t
                )));
            }
        }
        let dt = if samples.len() >= 2 {
            let d0 = samples[1].t - samples[0].t;
            let uniform = samples
                .windows(2)
                .all(|w| ((w[1].t - w[0].t) - d0).abs() <= 1e-9);
            uniform.then_some(d0)
        } else {
            None
        };
        Ok(NominalPlan { samples, dt })
    }

    pub fn from_csv_path<P: AsRef<Path>>(path: P, m_p: usize) -> Result<Self, ModelError> {
        let f = std::fs::File::open(path)?;
        Self::from_csv_reader(f, m_p)
    }

    pub fn t_start(&self) -> f64 {
        self.samples[0].t
    }

    pub fn t_end(&self) -> f64 {
        self.samples[self.samples.len() - 1].t
    }

    pub fn duration(&self) -> f64 {
        self.t_end() - self.t_start()
    }

    /// Zero-order-hold control lookup: the control of the last sample with
    /// `t_i <= t` (clamped to the first/last sample outside the time range).
    pub fn control_at(&self, t: f64) -> &[f64] {
        &self.sample_at(t).u_p
    }

    /// Planner state at the last sample with `t_i <= t`, if states were given.
    pub fn state_at(&self, t: f64) -> Option<&[f64]> {
        self.sample_at(t).p.as_deref()
    }

    fn sample_at(&self, t: f64) -> &PlanSample {
        let idx = match self
            .samples
            .binary_search_by(|s| s.t.partial_cmp(&t).expect("finite plan times"))
        {
            Ok(i) => i,
            Err(0) => 0,
            Err(i) => i - 1,
        };
        &self.samples[idx]
    }

    /// Check every control sample against the planner control set (`tol`
    /// 1e-9).
    pub fn validate_against(&self, u_p_set: &SemialgebraicSet) -> Result<(), ModelError> {
        for s in &self.samples {
            if !u_p_set.contains(&s.u_p, 1e-9) {
                return Err(ModelError::Plan(format!(
                    "control at t={} violates the planner control set",
                    s.t
                )));
            }
        }
        Ok(())
    }
}
