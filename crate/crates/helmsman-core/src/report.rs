//! Text report writers: per-step trace CSV, one-line JSON summary, sweep
//! and fit CSVs, and per-cell statistics.
//!
//! All floats go through Rust's shortest-round-trip `Display`, so equal
//! results serialize to equal bytes — the CSVs are usable as regression
//! fixtures and as determinism witnesses.

use crate::closed_loop::RunResult;
use crate::sweep::{CellStat, QuadraticFit, SweepRecord};
use serde::Serialize;
use std::fmt::Write as _;

/// Fixed column set of the per-step trace.
pub const TRACE_HEADER: &str = "t_s,p_g_w,p_b_w,load_w,forecast_w,soc,mismatch_w,status";
pub const SWEEP_HEADER: &str =
    "noise_pct,target_soc,seed,capacity_loss_pct,gen_life_pct,violations,failures";
pub const FIT_HEADER: &str = "noise_pct,a,b,c,r_squared";
pub const CELLS_HEADER: &str = "noise_pct,target_soc,mean_loss_pct,std_loss_pct,count";

/// One CSV row per control period, header first: N steps → N+1 lines.
pub fn write_trace_csv(result: &RunResult) -> String {
    let mut out = String::with_capacity(64 * (result.steps.len() + 1));
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for s in &result.steps {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            s.t,
            s.p_g,
            s.p_b,
            s.load,
            s.forecast,
            s.soc,
            s.mismatch,
            s.outcome.token()
        )
        .expect("string write cannot fail");
    }
    out
}

/// Terminal figures of one run, serialized as a single JSON line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunSummary {
    pub capacity_loss_pct: f64,
    pub gen_life_pct: f64,
    pub mean_c_rate: f64,
    pub final_soc: f64,
    pub steps: usize,
    pub violations: u64,
    pub failures: u64,
    pub soc_clamp_events: u64,
}

pub fn summarize(result: &RunResult) -> RunSummary {
    RunSummary {
        capacity_loss_pct: result.capacity_loss,
        gen_life_pct: result.gen_life,
        mean_c_rate: result.mean_c_rate,
        final_soc: result.final_state.soc,
        steps: result.steps.len(),
        violations: result.violations,
        failures: result.failures,
        soc_clamp_events: result.soc_clamp_events,
    }
}

/// One line of JSON, trailing newline included.
pub fn write_summary_json(result: &RunResult) -> String {
    let mut s = serde_json::to_string(&summarize(result)).expect("summary serializes");
    s.push('\n');
    s
}

/// One row per sweep record, in record order.
pub fn write_sweep_csv(records: &[SweepRecord]) -> String {
    let mut out = String::with_capacity(48 * (records.len() + 1));
    out.push_str(SWEEP_HEADER);
    out.push('\n');
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.noise_percent,
            r.target_soc,
            r.seed,
            r.capacity_loss,
            r.gen_life,
            r.violations,
            r.failures
        )
        .expect("string write cannot fail");
    }
    out
}

/// One row per noise level with the fitted quadratic and its R².
pub fn write_fit_csv(fits: &[QuadraticFit]) -> String {
    let mut out = String::new();
    out.push_str(FIT_HEADER);
    out.push('\n');
    for f in fits {
        writeln!(out, "{},{},{},{},{}", f.noise_percent, f.a, f.b, f.c, f.r_squared)
            .expect("string write cannot fail");
    }
    out
}

/// Per-cell replicate statistics — worth emitting when replicates > 1.
pub fn write_cells_csv(stats: &[CellStat]) -> String {
    let mut out = String::new();
    out.push_str(CELLS_HEADER);
    out.push('\n');
    for c in stats {
        writeln!(
            out,
            "{},{},{},{},{}",
            c.noise_percent, c.target_soc, c.mean_loss, c.std_loss, c.count
        )
        .expect("string write cannot fail");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_loop::{run_closed_loop, Scenario, SolverKind};
    use crate::forecast::{LoadProfileSpec, LoadSource, NoiseSpec};
    use crate::model::BatterySpec;
    use crate::sweep::{cell_stats, fit_quadratic, run_sweep, SweepPlan};

    fn quick_run() -> RunResult {
        let mut s = Scenario::reference(SolverKind::Centralized);
        s.battery = BatterySpec {
            capacity_total: 10.0,
            initial_charge: 8.0,
            bus_voltage: 1200.0,
        };
        s.load = LoadSource::Synthetic(LoadProfileSpec {
            baseline: 5e6,
            pulses: vec![],
            total_time: 10.0,
        });
        s.noise = NoiseSpec {
            percent: 5.0,
            seed: 11,
        };
        s.ems.plant_dt = 1e-3;
        s.total_time = 0.05;
        run_closed_loop(&s).unwrap()
    }

    #[test]
    fn trace_has_header_plus_one_row_per_step() {
        let result = quick_run();
        let csv = write_trace_csv(&result);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], TRACE_HEADER);
        assert_eq!(lines.len(), result.steps.len() + 1);
        assert_eq!(result.steps.len(), 50);
        // every row has exactly the header's column count
        let cols = TRACE_HEADER.split(',').count();
        for line in &lines[1..] {
            assert_eq!(line.split(',').count(), cols, "row: {line}");
        }
        // status column carries the outcome token
        assert!(lines[1].ends_with(",optimal"), "row: {}", lines[1]);
    }

    #[test]
    fn equal_results_give_equal_bytes() {
        let a = quick_run();
        let b = quick_run();
        assert_eq!(write_trace_csv(&a), write_trace_csv(&b));
        assert_eq!(write_summary_json(&a), write_summary_json(&b));
    }

    #[test]
    fn floats_round_trip_through_the_csv() {
        let result = quick_run();
        let csv = write_trace_csv(&result);
        let row1: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
        let soc: f64 = row1[5].parse().unwrap();
        assert_eq!(soc, result.steps[0].soc);
        let mismatch: f64 = row1[6].parse().unwrap();
        assert_eq!(mismatch, result.steps[0].mismatch);
    }

    #[test]
    fn summary_is_one_json_line_with_the_terminal_figures() {
        let result = quick_run();
        let json = write_summary_json(&result);
        assert_eq!(json.lines().count(), 1);
        assert!(json.ends_with('\n'));
        let value: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(
            value["capacity_loss_pct"].as_f64().unwrap(),
            result.capacity_loss
        );
        assert_eq!(value["violations"].as_u64().unwrap(), result.violations);
        assert_eq!(value["failures"].as_u64().unwrap(), result.failures);
        assert_eq!(value["steps"].as_u64().unwrap() as usize, result.steps.len());
    }

    #[test]
    fn sweep_and_fit_csvs_have_the_documented_shape() {
        let mut scenario = Scenario::reference(SolverKind::Centralized);
        scenario.battery = BatterySpec {
            capacity_total: 10.0,
            initial_charge: 8.0,
            bus_voltage: 1200.0,
        };
        scenario.load = LoadSource::Synthetic(LoadProfileSpec {
            baseline: 5e6,
            pulses: vec![],
            total_time: 10.0,
        });
        scenario.ems.plant_dt = 1e-3;
        scenario.plant.tau_g = 0.0;
        scenario.plant.tau_b = 0.0;
        scenario.total_time = 0.1;
        let plan = SweepPlan {
            noise_levels: vec![2.0],
            soc_targets: vec![0.7, 0.75, 0.8],
            replicates: 2,
            base_seed: 5,
        };
        let records = run_sweep(&plan, &scenario).unwrap();
        let sweep_csv = write_sweep_csv(&records);
        assert_eq!(sweep_csv.lines().count(), records.len() + 1);
        assert_eq!(sweep_csv.lines().next().unwrap(), SWEEP_HEADER);

        let fits = fit_quadratic(&records).unwrap();
        let fit_csv = write_fit_csv(&fits);
        assert_eq!(fit_csv.lines().count(), 2);
        assert!(fit_csv.lines().nth(1).unwrap().starts_with("2,"));

        let stats = cell_stats(&records);
        let cells_csv = write_cells_csv(&stats);
        assert_eq!(cells_csv.lines().count(), 4);
        for line in cells_csv.lines().skip(1) {
            assert!(line.ends_with(",2"), "replicate count column: {line}");
        }
    }

    #[test]
    fn empty_inputs_still_write_headers() {
        assert_eq!(write_sweep_csv(&[]), format!("{SWEEP_HEADER}\n"));
        assert_eq!(write_fit_csv(&[]), format!("{FIT_HEADER}\n"));
        assert_eq!(write_cells_csv(&[]), format!("{CELLS_HEADER}\n"));
    }
}
