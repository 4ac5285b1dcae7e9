//! Experiment sets over regime schedules, loss variations and seeds, with
//! table and chart output.

mod plan;
mod report;
mod runner;

pub use plan::{build_plan, Cell, ExperimentPlan, ExperimentSet, ExtraSource, PlanOverrides};
pub use report::{emit_chart, emit_table, render_chart};
pub use runner::{read_records, run_cell, run_plan, sort_records, write_records, PlanData, PlanFailure, RunRecord};
