//! Deterministic text environments, task suites, and expert oracles.

pub mod gridhouse;
pub mod tooldesk;

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, WmError};
use crate::reward::StateKind;
use crate::util::rng_for;

pub use gridhouse::{GridGenConfig, GridHouseState, GridLayout, NOTHING_HAPPENS};
pub use tooldesk::{Speaker, ToolDeskState, ToolScenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvKind {
    Gridhouse,
    Tooldesk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    IdEval,
    OodEval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub env_kind: EnvKind,
    pub task_id: u32,
    pub seed: u64,
    pub max_steps: usize,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum World {
    Grid(GridLayout),
    Tool(ToolScenario),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskDef {
    pub spec: TaskSpec,
    pub world: World,
}

impl TaskDef {
    pub fn signature(&self) -> String {
        match &self.world {
            World::Grid(l) => l.signature(),
            World::Tool(s) => s.signature(),
        }
    }

    fn goal_family(&self) -> String {
        match &self.world {
            World::Grid(l) => l.goal.describe(),
            World::Tool(s) => s.signature(),
        }
    }
}

/// Live state of either environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EnvState {
    Grid(GridHouseState),
    Tool(ToolDeskState),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: EnvState,
    pub observation: String,
    pub done: bool,
    pub success: bool,
    /// False for actions the environment rejected.
    pub valid: bool,
    /// Who produced `observation`.
    pub kind: StateKind,
}

impl EnvState {
    pub fn step(&self, action: &str) -> Result<StepOutcome> {
        match self {
            EnvState::Grid(s) => {
                let o = s.step(action)?;
                Ok(StepOutcome {
                    state: EnvState::Grid(o.state),
                    observation: o.observation,
                    done: o.done,
                    success: o.success,
                    valid: o.valid,
                    kind: StateKind::Text,
                })
            }
            EnvState::Tool(s) => {
                let o = s.step(action)?;
                Ok(StepOutcome {
                    state: EnvState::Tool(o.state),
                    observation: o.observation,
                    done: o.done,
                    success: o.success,
                    valid: o.valid,
                    kind: match o.responder {
                        Speaker::Tool => StateKind::Tool,
                        _ => StateKind::User,
                    },
                })
            }
        }
    }

    pub fn render_observation(&self) -> String {
        match self {
            EnvState::Grid(s) => s.render_observation(),
            EnvState::Tool(s) => s.render_observation(),
        }
    }

    pub fn initial_observation(&self) -> String {
        match self {
            EnvState::Grid(s) => s.room_listing(),
            EnvState::Tool(s) => s.render_observation(),
        }
    }

    pub fn instruction(&self) -> String {
        match self {
            EnvState::Grid(s) => s.instruction(),
            EnvState::Tool(s) => s.instruction(),
        }
    }

    pub fn is_terminal(&self) -> bool {
        match self {
            EnvState::Grid(s) => s.is_terminal(),
            EnvState::Tool(s) => s.is_terminal(),
        }
    }

    pub fn candidate_actions(&self) -> Vec<String> {
        match self {
            EnvState::Grid(s) => s.candidate_actions(),
            EnvState::Tool(s) => s.candidate_actions(),
        }
    }

    /// Well-formed actions regardless of current validity. ToolDesk has no
    /// finite command grammar, so its candidates double as its action space.
    pub fn action_space(&self) -> Vec<String> {
        match self {
            EnvState::Grid(s) => s.action_space(),
            EnvState::Tool(s) => s.candidate_actions(),
        }
    }

    pub fn step_count(&self) -> usize {
        match self {
            EnvState::Grid(s) => s.step_count,
            EnvState::Tool(s) => s.step_count,
        }
    }

    pub fn kind(&self) -> EnvKind {
        match self {
            EnvState::Grid(_) => EnvKind::Gridhouse,
            EnvState::Tool(_) => EnvKind::Tooldesk,
        }
    }
}

/// Whether an action is valid but only gathers information.
pub fn is_inefficient_action(kind: EnvKind, action: &str) -> bool {
    match kind {
        EnvKind::Gridhouse => gridhouse::is_inefficient_action(action),
        EnvKind::Tooldesk => false,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    pub name: String,
    pub env_kind: EnvKind,
    pub n_train: usize,
    pub n_id_eval: usize,
    pub n_ood_eval: usize,
    pub max_steps: usize,
    pub seed: u64,
    pub grid: GridGenConfig,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self::gridhouse_small(0)
    }
}

impl SuiteConfig {
    pub fn gridhouse_small(seed: u64) -> Self {
        Self {
            name: "gridhouse-small".into(),
            env_kind: EnvKind::Gridhouse,
            n_train: 40,
            n_id_eval: 10,
            n_ood_eval: 10,
            max_steps: 12,
            seed,
            grid: GridGenConfig::default(),
        }
    }

    pub fn tooldesk_small(seed: u64) -> Self {
        Self {
            name: "tooldesk-small".into(),
            env_kind: EnvKind::Tooldesk,
            n_train: 30,
            n_id_eval: 8,
            n_ood_eval: 8,
            max_steps: 12,
            seed,
            grid: GridGenConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suite {
    pub name: String,
    pub tasks: Vec<TaskDef>,
}

impl Suite {
    /// Procedurally generate a suite. Train and in-distribution eval tasks
    /// share goal families; OOD tasks draw from held-out families only.
    pub fn generate(cfg: &SuiteConfig) -> Result<Suite> {
        if cfg.max_steps == 0 {
            return Err(WmError::config("suite.max_steps", "must be positive"));
        }
        let splits = [
            (Split::Train, cfg.n_train),
            (Split::IdEval, cfg.n_id_eval),
            (Split::OodEval, cfg.n_ood_eval),
        ];
        let mut tasks = Vec::new();
        let mut next_id = 0u32;
        for (split, n) in splits {
            for _ in 0..n {
                let task_id = next_id;
                next_id += 1;
                let mut rng = rng_for(cfg.seed, &[0x5017e, task_id as u64]);
                let ood = split == Split::OodEval;
                let world = match cfg.env_kind {
                    EnvKind::Gridhouse => {
                        World::Grid(gridhouse::generate_layout(&mut rng, &cfg.grid, ood))
                    }
                    EnvKind::Tooldesk => World::Tool(tooldesk::generate_scenario(
                        &mut rng,
                        cfg.grid.ood_modulus,
                        ood,
                    )),
                };
                tasks.push(TaskDef {
                    spec: TaskSpec {
                        env_kind: cfg.env_kind,
                        task_id,
                        seed: cfg.seed,
                        max_steps: cfg.max_steps,
                        split,
                    },
                    world,
                });
            }
        }
        let suite = Suite {
            name: cfg.name.clone(),
            tasks,
        };
        suite.validate()?;
        Ok(suite)
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids = BTreeSet::new();
        for t in &self.tasks {
            if t.spec.max_steps == 0 {
                return Err(WmError::config("task.max_steps", "must be positive"));
            }
            if !ids.insert(t.spec.task_id) {
                return Err(WmError::config(
                    "tasks.task_id",
                    format!("duplicate id {}", t.spec.task_id),
                ));
            }
            match &t.world {
                World::Grid(l) => l.validate()?,
                World::Tool(s) => s.validate()?,
            }
            // Suites must be solvable; a failure here is a generation bug.
            self.solve_oracle(t.spec.task_id)?;
        }
        Ok(())
    }

    pub fn task(&self, task_id: u32) -> Result<&TaskDef> {
        self.tasks
            .iter()
            .find(|t| t.spec.task_id == task_id)
            .ok_or_else(|| WmError::NotFound(format!("task {task_id} in suite {}", self.name)))
    }

    pub fn tasks_in(&self, split: Split) -> impl Iterator<Item = &TaskDef> {
        self.tasks.iter().filter(move |t| t.spec.split == split)
    }

    pub fn initial_state(&self, task_id: u32) -> Result<EnvState> {
        let t = self.task(task_id)?;
        Ok(match &t.world {
            World::Grid(l) => EnvState::Grid(GridHouseState::from_layout(l, t.spec.max_steps)),
            World::Tool(s) => EnvState::Tool(ToolDeskState::from_scenario(s, t.spec.max_steps)),
        })
    }

    /// Initial state plus the rendered instruction and first observation.
    pub fn reset(&self, spec: &TaskSpec) -> Result<(EnvState, String)> {
        let state = self.initial_state(spec.task_id)?;
        let text = format!("{}\n{}", state.instruction(), state.initial_observation());
        Ok((state, text))
    }

    pub fn solve_oracle(&self, task_id: u32) -> Result<Vec<String>> {
        let t = self.task(task_id)?;
        match (&t.world, self.initial_state(task_id)?) {
            (World::Grid(_), EnvState::Grid(s)) => s.solve_oracle(),
            (World::Tool(sc), EnvState::Tool(s)) => s.solve_oracle(sc),
            _ => unreachable!("world and state kinds always agree"),
        }
    }

    /// True when no OOD goal family occurs among train tasks.
    pub fn ood_disjoint(&self) -> bool {
        let train: BTreeSet<String> = self.tasks_in(Split::Train).map(TaskDef::goal_family).collect();
        self.tasks_in(Split::OodEval)
            .all(|t| !train.contains(&t.goal_family()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Suite> {
        let suite: Suite = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        suite.validate()?;
        Ok(suite)
    }
}

/// One line of an observation/action trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub role: String,
    pub text: String,
    pub step: usize,
}

/// Replay `actions` from the task's initial state and record every turn.
pub fn record_trace(suite: &Suite, task_id: u32, actions: &[String]) -> Result<Vec<TraceRecord>> {
    let spec = suite.task(task_id)?.spec.clone();
    let (mut state, first) = suite.reset(&spec)?;
    let mut trace = vec![TraceRecord {
        role: "environment".into(),
        text: first,
        step: 0,
    }];
    for (i, a) in actions.iter().enumerate() {
        trace.push(TraceRecord {
            role: "agent".into(),
            text: a.clone(),
            step: i + 1,
        });
        let out = state.step(a)?;
        trace.push(TraceRecord {
            role: match out.kind {
                StateKind::Text => "environment",
                StateKind::User => "user",
                StateKind::Tool => "tool",
            }
            .into(),
            text: out.observation,
            step: i + 1,
        });
        state = out.state;
        if out.done {
            break;
        }
    }
    Ok(trace)
}

pub fn write_trace(path: &Path, trace: &[TraceRecord]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in trace {
        writeln!(f, "{}", serde_json::to_string(r)?)?;
    }
    f.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reset_is_deterministic() {
        let suite = Suite::generate(&SuiteConfig::gridhouse_small(1)).unwrap();
        let spec = suite.task(7).unwrap().spec.clone();
        assert_eq!(suite.reset(&spec).unwrap().1, suite.reset(&spec).unwrap().1);
        let again = Suite::generate(&SuiteConfig::gridhouse_small(1)).unwrap();
        assert_eq!(suite, again);
    }

    #[test]
    fn unknown_task_is_not_found() {
        let suite = Suite::generate(&SuiteConfig::gridhouse_small(1)).unwrap();
        let mut spec = suite.tasks[0].spec.clone();
        spec.task_id = 9999;
        assert!(matches!(suite.reset(&spec), Err(WmError::NotFound(_))));
    }

    #[test]
    fn ood_split_is_disjoint() {
        for seed in 0..3 {
            assert!(Suite::generate(&SuiteConfig::gridhouse_small(seed)).unwrap().ood_disjoint());
            assert!(Suite::generate(&SuiteConfig::tooldesk_small(seed)).unwrap().ood_disjoint());
        }
    }

    #[test]
    fn tooldesk_reset_hides_intent() {
        let suite = Suite::generate(&SuiteConfig::tooldesk_small(2)).unwrap();
        let t = suite.task(3).unwrap();
        let (_, text) = suite.reset(&t.spec).unwrap();
        let World::Tool(sc) = &t.world else { panic!() };
        assert!(text.contains("# User Information"));
        assert!(text.contains(&sc.user_info));
        assert!(!text.contains(&sc.user_script.intent));
    }

    #[test]
    fn oracle_replays_succeed() {
        for cfg in [SuiteConfig::gridhouse_small(5), SuiteConfig::tooldesk_small(5)] {
            let suite = Suite::generate(&cfg).unwrap();
            for t in &suite.tasks {
                let plan = suite.solve_oracle(t.spec.task_id).unwrap();
                assert!(plan.len() <= t.spec.max_steps);
                let trace = record_trace(&suite, t.spec.task_id, &plan).unwrap();
                assert_eq!(trace.len(), 1 + 2 * plan.len());
                let mut s = suite.initial_state(t.spec.task_id).unwrap();
                let mut ok = false;
                for a in &plan {
                    let o = s.step(a).unwrap();
                    ok = o.success;
                    s = o.state;
                }
                assert!(ok);
            }
        }
    }
}
