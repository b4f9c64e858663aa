//! A customer-service episode: the agent alternates between talking to a
//! simulated user and calling JSON tools. Tool responses are shown both raw
//! and with their values masked to a type schema, which is the form used as
//! a prediction target.
//!
//! cargo run --release --example tooldesk_episode

use wmforge::datapipe::mask_json_values;
use wmforge::envsim::{record_trace, Split, Suite, SuiteConfig};

fn main() -> anyhow::Result<()> {
    let suite = Suite::generate(&SuiteConfig::tooldesk_small(3))?;
    let task = suite.tasks_in(Split::Train).next().expect("suite has train tasks");
    let (state, _) = suite.reset(&task.spec)?;
    println!("{}\n", state.instruction());

    let plan = suite.solve_oracle(task.spec.task_id)?;
    for r in record_trace(&suite, task.spec.task_id, &plan)? {
        println!("[{:>2}] {:<11} {}", r.step, r.role, r.text);
        if r.role == "tool" {
            println!("     {:<11} {}", "(masked)", mask_json_values(&r.text));
        }
    }
    Ok(())
}
