//! Per-episode metrics CSV with a stable, constraint-derived schema.
//!
//! Column order: `episode, agent, return`, then per cumulative id `v_hat_<id>`,
//! per inequality id `mean_gplus_<id>`, per equality id `mean_abs_e_<id>`,
//! then the dual state (`lambda_<id>`, `nu_<id>`, `rho_<id>`), then
//! `violations, shield_overrides, epsilon, loss_mean`, and finally the
//! extension columns (`mu_<id>` for equality ids and per-id violation
//! counts). Rows are flushed per episode so partial runs stay inspectable.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::Result;
use crate::lagrangian::{ConstraintKind, ConstraintSet, DualState};
use crate::qlearn::training::EpisodeReport;

/// Shortest round-trip decimal rendering of an `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

pub struct MetricsWriter {
    out: BufWriter<File>,
    cumulative_ids: Vec<String>,
    inequality_ids: Vec<String>,
    equality_ids: Vec<String>,
}

impl MetricsWriter {
    pub fn create(path: &Path, specs: &ConstraintSet) -> Result<Self> {
        let ids = |kind: ConstraintKind| -> Vec<String> {
            let mut v: Vec<String> = specs.of_kind(kind).map(|s| s.id.clone()).collect();
            v.sort();
            v
        };
        let cumulative_ids = ids(ConstraintKind::CumulativeInequality);
        let inequality_ids = ids(ConstraintKind::InstantInequality);
        let equality_ids = ids(ConstraintKind::InstantEquality);

        let mut header = String::from("episode,agent,return");
        for id in &cumulative_ids {
            header.push_str(&format!(",v_hat_{id}"));
        }
        for id in &inequality_ids {
            header.push_str(&format!(",mean_gplus_{id}"));
        }
        for id in &equality_ids {
            header.push_str(&format!(",mean_abs_e_{id}"));
        }
        for id in &cumulative_ids {
            header.push_str(&format!(",lambda_{id}"));
        }
        for id in &inequality_ids {
            header.push_str(&format!(",nu_{id}"));
        }
        for id in &equality_ids {
            header.push_str(&format!(",rho_{id}"));
        }
        for id in &inequality_ids {
            header.push_str(&format!(",rho_{id}"));
        }
        header.push_str(",violations,shield_overrides,epsilon,loss_mean");
        for id in &equality_ids {
            header.push_str(&format!(",mu_{id}"));
        }
        for id in equality_ids.iter().chain(&inequality_ids) {
            header.push_str(&format!(",violations_{id}"));
        }
        header.push('\n');

        let file = File::create(path)?;
        let mut out = BufWriter::new(file);
        out.write_all(header.as_bytes())?;
        Ok(MetricsWriter {
            out,
            cumulative_ids,
            inequality_ids,
            equality_ids,
        })
    }

    pub fn write_episode(
        &mut self,
        agent: usize,
        report: &EpisodeReport,
        duals: &DualState,
    ) -> Result<()> {
        let mut row = format!(
            "{},{agent},{}",
            report.episode,
            fmt_f64(report.return_sum)
        );
        let get = |m: &std::collections::BTreeMap<String, f64>, id: &str| {
            m.get(id).copied().unwrap_or(0.0)
        };
        for id in &self.cumulative_ids {
            row.push_str(&format!(",{}", fmt_f64(get(&report.vhat_c, id))));
        }
        for id in &self.inequality_ids {
            row.push_str(&format!(",{}", fmt_f64(get(&report.mean_gplus, id))));
        }
        for id in &self.equality_ids {
            row.push_str(&format!(",{}", fmt_f64(get(&report.mean_abs_e, id))));
        }
        for id in &self.cumulative_ids {
            row.push_str(&format!(",{}", fmt_f64(get(&duals.lambda, id))));
        }
        for id in &self.inequality_ids {
            row.push_str(&format!(",{}", fmt_f64(get(&duals.nu, id))));
        }
        for id in &self.equality_ids {
            row.push_str(&format!(",{}", fmt_f64(get(&duals.rho_eq, id))));
        }
        for id in &self.inequality_ids {
            row.push_str(&format!(",{}", fmt_f64(get(&duals.rho_inst, id))));
        }
        row.push_str(&format!(
            ",{},{},{},{}",
            report.total_violations,
            report.shield_overrides,
            fmt_f64(report.epsilon),
            fmt_f64(report.loss_mean)
        ));
        for id in &self.equality_ids {
            row.push_str(&format!(",{}", fmt_f64(get(&duals.mu, id))));
        }
        for id in self.equality_ids.iter().chain(&self.inequality_ids) {
            row.push_str(&format!(
                ",{}",
                report.violations.get(id).copied().unwrap_or(0)
            ));
        }
        row.push('\n');
        self.out.write_all(row.as_bytes())?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}
