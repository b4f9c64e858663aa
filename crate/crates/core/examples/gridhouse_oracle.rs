//! Generate a household task suite and replay the scripted solver on one
//! training task, printing the observation/action trace.
//!
//! cargo run --release --example gridhouse_oracle [seed]

use wmforge::envsim::{record_trace, Split, Suite, SuiteConfig};

fn main() -> anyhow::Result<()> {
    let seed = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(7);
    let suite = Suite::generate(&SuiteConfig::gridhouse_small(seed))?;
    println!(
        "{}: {} train, {} id-eval, {} ood-eval tasks (ood families disjoint: {})",
        suite.name,
        suite.tasks_in(Split::Train).count(),
        suite.tasks_in(Split::IdEval).count(),
        suite.tasks_in(Split::OodEval).count(),
        suite.ood_disjoint()
    );
    let task = suite.tasks_in(Split::Train).next().expect("suite has train tasks");
    let (state, _) = suite.reset(&task.spec)?;
    println!("{}", state.instruction());
    println!("{} well-formed actions, {} admissible now\n", state.action_space().len(), state.candidate_actions().len());

    let plan = suite.solve_oracle(task.spec.task_id)?;
    for r in record_trace(&suite, task.spec.task_id, &plan)? {
        println!("[{:>2}] {:<11} {}", r.step, r.role, r.text);
    }

    let bad = state.step("fly to the moon")?;
    println!("\nmalformed action -> {:?} (valid: {})", bad.observation, bad.valid);
    Ok(())
}
