//! Monte-Carlo sweeps driven by TOML plan files.
//!
//! A plan holds top-level `seed`, `trials`, `direction` and `schemes` keys
//! followed by `[system]`, `[geometry]`, `[sweep]`, `[solver]`, `[ao]` and
//! `[output]` sections. Only `[sweep]` is required; unknown keys are
//! rejected. See `plans/default.toml` for every key with its default.

mod plan;
mod runner;

pub use plan::{
    parse_plan, AoSection, DirectionChoice, ExperimentPlan, GeometrySection, OutputSection,
    SolverSection, SweepAxis, SweepSection, SystemSection,
};
pub use runner::{
    emit_results, run_plan, summarize, trial_seed, write_summary, ErrorRow, ResultRow, ResultTable,
    RunOptions, TraceRecord, ERROR_HEADER, RESULT_HEADER,
};

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_plan() -> ExperimentPlan {
        ExperimentPlan::from_toml(
            r#"
seed = 3
trials = 3
direction = "downlink"
schemes = ["random_phase", "fully_digital"]

[system]
num_aps = 2
num_ues = 2
rf_chains = 1

[geometry]
meta_atoms = 4
layers = 1

[sweep]
axis = "snr_db"
values = [5.0, 10.0]

[ao]
max_outer = 2
max_digital = 2
"#,
        )
        .unwrap()
    }

    #[test]
    fn cardinality_pairing_and_determinism() {
        let plan = tiny_plan();
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a");
        let b = dir.path().join("b");
        let opts = RunOptions {
            out: Some(a.clone()),
            workers: 1,
            trace: true,
            timing: false,
        };
        let t = run_plan(&plan, &opts).unwrap();
        assert_eq!(t.rows.len(), 12);
        assert!(t.errors.is_empty());
        for r in &t.rows {
            let mate = t.rows.iter().find(|o| {
                o.trial == r.trial && o.scheme != r.scheme && o.sweep_value == r.sweep_value
            });
            assert_eq!(mate.unwrap().scenario_hash, r.scenario_hash);
        }
        run_plan(
            &plan,
            &RunOptions {
                out: Some(b.clone()),
                workers: 2,
                ..opts
            },
        )
        .unwrap();
        let ra = std::fs::read(a.join("results.csv")).unwrap();
        assert_eq!(ra, std::fs::read(b.join("results.csv")).unwrap());
        let text = String::from_utf8(ra).unwrap();
        assert_eq!(text.lines().next().unwrap(), RESULT_HEADER.join(","));
        assert_eq!(text.lines().count(), 13);
        assert!(a
            .join("traces/downlink/snr_db=5/trace_random_phase_0.csv")
            .exists());
        let c = dir.path().join("c");
        emit_results(&t, &plan, &c, false).unwrap();
        assert_eq!(
            std::fs::read(c.join("results.csv")).unwrap(),
            std::fs::read(a.join("results.csv")).unwrap()
        );
    }

    #[test]
    fn error_file_has_header() {
        let mut plan = tiny_plan();
        plan.trials = 1;
        plan.sweep.values = vec![5.0];
        plan.schemes = vec!["random_phase".into()];
        let dir = tempfile::tempdir().unwrap();
        run_plan(
            &plan,
            &RunOptions {
                out: Some(dir.path().to_path_buf()),
                workers: 1,
                trace: false,
                timing: false,
            },
        )
        .unwrap();
        let text = std::fs::read_to_string(dir.path().join("errors.csv")).unwrap();
        assert_eq!(text.trim_end(), ERROR_HEADER.join(","));
    }
}
