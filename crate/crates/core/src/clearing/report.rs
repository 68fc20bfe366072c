use std::io::Write;

use serde::{Deserialize, Serialize};

use super::DayOutcome;

/// One `day,hour,node` line of a cleared day. Hours and nodes are one-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRow {
    pub day: i64,
    pub hour: usize,
    pub node: usize,
    pub p: f64,
    pub w: f64,
    pub p_up: f64,
    pub p_down: f64,
    pub spill: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeSummary {
    pub da_cost: f64,
    pub rt_cost: f64,
    pub overall_cost: f64,
}

impl From<&DayOutcome> for OutcomeSummary {
    fn from(o: &DayOutcome) -> Self {
        OutcomeSummary {
            da_cost: o.da_cost,
            rt_cost: o.rt_cost,
            overall_cost: o.overall_cost,
        }
    }
}

pub fn outcome_rows(day: i64, outcome: &DayOutcome) -> Vec<OutcomeRow> {
    let mut rows = Vec::new();
    for (t, rt) in outcome.rt.iter().enumerate() {
        for n in 0..rt.p_up.len() {
            rows.push(OutcomeRow {
                day,
                hour: t + 1,
                node: n + 1,
                p: outcome.da.p[t][n],
                w: outcome.da.w[t][n],
                p_up: rt.p_up[n],
                p_down: rt.p_down[n],
                spill: rt.spill[n],
            });
        }
    }
    rows
}

pub fn write_outcome_csv<W: Write>(out: W, rows: &[OutcomeRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
