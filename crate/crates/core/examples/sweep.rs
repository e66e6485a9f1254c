//! Runs a small SNR sweep from an in-memory plan and prints per-scheme
//! means. Pass a directory to also write results.csv there.

use simcf::experiment::{run_plan, write_summary, ExperimentPlan, RunOptions};

const PLAN: &str = r#"
seed = 11
trials = 2
direction = "downlink"
schemes = ["hybrid", "random_phase", "wave_only"]

[system]
num_ues = 4

[sweep]
axis = "snr_db"
values = [0.0, 10.0, 20.0]

[ao]
max_outer = 8
"#;

fn main() -> simcf::Result<()> {
    let plan = ExperimentPlan::from_toml(PLAN)?;
    let out = std::env::args().nth(1).map(std::path::PathBuf::from);
    let opts = RunOptions {
        out: out.clone(),
        workers: 1,
        trace: out.is_some(),
        timing: false,
    };
    let table = run_plan(&plan, &opts)?;
    write_summary(
        &table,
        plan.sweep.axis.as_str(),
        &mut std::io::stdout().lock(),
    )?;
    if let Some(dir) = out {
        println!("wrote {}", dir.join("results.csv").display());
    }
    Ok(())
}
