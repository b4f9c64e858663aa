//! A small household world in the style of text embodied benchmarks.
//!
//! Receptacles hold objects, some receptacles open and close, and the agent
//! carries at most one object. Tasks ask to put an object of some class
//! into a receptacle of some type.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Result, WmError};
use crate::util::Rng;

pub const NOTHING_HAPPENS: &str = "Nothing happens.";

/// (receptacle type, openable)
pub const RECEPTACLE_TYPES: &[(&str, bool)] = &[
    ("countertop", false),
    ("cabinet", true),
    ("drawer", true),
    ("fridge", true),
    ("microwave", true),
    ("shelf", false),
    ("sinkbasin", false),
    ("diningtable", false),
    ("sidetable", false),
];

/// Where each object class tends to be found. Weights per receptacle type.
pub const LOCATION_PRIORS: &[(&str, &[(&str, f64)])] = &[
    ("knife", &[("countertop", 0.8), ("drawer", 0.2)]),
    ("spoon", &[("drawer", 0.6), ("countertop", 0.4)]),
    ("apple", &[("fridge", 0.6), ("countertop", 0.2), ("diningtable", 0.2)]),
    ("tomato", &[("fridge", 0.7), ("countertop", 0.3)]),
    ("mug", &[("cabinet", 0.6), ("shelf", 0.2), ("countertop", 0.2)]),
    ("plate", &[("cabinet", 0.7), ("diningtable", 0.3)]),
    ("bread", &[("countertop", 0.6), ("diningtable", 0.4)]),
    ("book", &[("shelf", 0.7), ("sidetable", 0.3)]),
    ("pencil", &[("sidetable", 0.6), ("drawer", 0.4)]),
    ("soapbar", &[("sinkbasin", 0.8), ("cabinet", 0.2)]),
];

pub fn is_openable_type(ty: &str) -> bool {
    RECEPTACLE_TYPES
        .iter()
        .any(|(name, open)| *name == ty && *open)
}

/// "countertop 1" -> "countertop"
pub fn type_of(id: &str) -> &str {
    id.rsplit_once(' ').map(|(t, _)| t).unwrap_or(id)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridGoal {
    pub verb: String,
    pub object_class: String,
    pub target_type: String,
}

impl GridGoal {
    pub fn put(object_class: &str, target_type: &str) -> Self {
        Self {
            verb: "put".into(),
            object_class: object_class.into(),
            target_type: target_type.into(),
        }
    }

    pub fn describe(&self) -> String {
        format!("{} a {} in {}", self.verb, self.object_class, self.target_type)
    }
}

/// Static description of one household: what exists and where it starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridLayout {
    /// Receptacle ids in canonical (sorted) order.
    pub receptacles: Vec<String>,
    /// Initial contents; every receptacle has an entry.
    pub contents: BTreeMap<String, Vec<String>>,
    pub goal: GridGoal,
    /// Where the agent starts; not a receptacle in the room listing sense,
    /// the agent simply begins next to it.
    pub start: String,
}

impl GridLayout {
    pub fn validate(&self) -> Result<()> {
        if !self.receptacles.iter().any(|r| r == &self.start) {
            return Err(WmError::NotFound(format!("start receptacle {}", self.start)));
        }
        for r in self.contents.keys() {
            if !self.receptacles.contains(r) {
                return Err(WmError::NotFound(format!("receptacle {r}")));
            }
        }
        Ok(())
    }

    pub fn objects(&self) -> Vec<String> {
        let mut v: Vec<String> = self.contents.values().flatten().cloned().collect();
        v.sort();
        v
    }

    /// Goal/layout signature used to check split disjointness.
    pub fn signature(&self) -> String {
        format!(
            "{}|{}",
            self.goal.describe(),
            self.receptacles.join(",")
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridHouseState {
    pub agent_location: String,
    pub receptacles: Vec<String>,
    pub receptacle_contents: BTreeMap<String, Vec<String>>,
    pub receptacle_open: BTreeMap<String, bool>,
    pub inventory: Option<String>,
    pub goal: GridGoal,
    pub step_count: usize,
    pub max_steps: usize,
    pub success: bool,
}

/// Result of one environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct GridStep {
    pub state: GridHouseState,
    pub observation: String,
    pub done: bool,
    pub success: bool,
    pub valid: bool,
}

fn list_items(items: &[String]) -> String {
    match items.len() {
        0 => "nothing".to_string(),
        1 => format!("a {}", items[0]),
        n => {
            let head: Vec<String> = items[..n - 1].iter().map(|o| format!("a {o}")).collect();
            format!("{}, and a {}", head.join(", "), items[n - 1])
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Command {
    GoTo(String),
    Open(String),
    Close(String),
    Take(String, String),
    Put(String, String),
    Look,
    Examine(String),
    Inventory,
}

fn parse_command(action: &str) -> Option<Command> {
    let norm: Vec<String> = action
        .split_whitespace()
        .map(|w| w.to_ascii_lowercase())
        .collect();
    let words: Vec<&str> = norm.iter().map(String::as_str).collect();
    let join = |ws: &[&str]| ws.join(" ");
    match words.as_slice() {
        ["look"] => Some(Command::Look),
        ["inventory"] => Some(Command::Inventory),
        ["go", "to", rest @ ..] if !rest.is_empty() => Some(Command::GoTo(join(rest))),
        ["open", rest @ ..] if !rest.is_empty() => Some(Command::Open(join(rest))),
        ["close", rest @ ..] if !rest.is_empty() => Some(Command::Close(join(rest))),
        ["examine", rest @ ..] if !rest.is_empty() => Some(Command::Examine(join(rest))),
        ["take", rest @ ..] => {
            let i = rest.iter().position(|w| *w == "from")?;
            (i > 0 && i + 1 < rest.len())
                .then(|| Command::Take(join(&rest[..i]), join(&rest[i + 1..])))
        }
        ["put", rest @ ..] => {
            let i = rest
                .iter()
                .position(|w| matches!(*w, "in" | "on" | "in/on"))?;
            (i > 0 && i + 1 < rest.len())
                .then(|| Command::Put(join(&rest[..i]), join(&rest[i + 1..])))
        }
        _ => None,
    }
}

/// Whether an action is valid but wasteful (information-only).
pub fn is_inefficient_action(action: &str) -> bool {
    matches!(
        parse_command(action),
        Some(Command::Look) | Some(Command::Examine(_)) | Some(Command::Inventory)
    )
}

impl GridHouseState {
    pub fn from_layout(layout: &GridLayout, max_steps: usize) -> Self {
        let receptacle_open = layout
            .receptacles
            .iter()
            .filter(|r| is_openable_type(type_of(r)))
            .map(|r| (r.clone(), false))
            .collect();
        let mut contents = layout.contents.clone();
        for r in &layout.receptacles {
            contents.entry(r.clone()).or_default();
        }
        for items in contents.values_mut() {
            items.sort();
        }
        Self {
            agent_location: layout.start.clone(),
            receptacles: layout.receptacles.clone(),
            receptacle_contents: contents,
            receptacle_open,
            inventory: None,
            goal: layout.goal.clone(),
            step_count: 0,
            max_steps,
            success: false,
        }
    }

    pub fn is_terminal(&self) -> bool {
        self.success || self.step_count >= self.max_steps
    }

    fn accessible(&self, r: &str) -> bool {
        self.receptacle_open.get(r).copied().unwrap_or(true)
    }

    /// View of a receptacle's contents as the agent would see it there.
    pub fn describe_receptacle(&self, r: &str) -> String {
        let items = self
            .receptacle_contents
            .get(r)
            .map(Vec::as_slice)
            .unwrap_or(&[]);
        match self.receptacle_open.get(r) {
            Some(false) => format!("The {r} is closed."),
            Some(true) => format!("The {r} is open. In it, you see {}.", list_items(items)),
            None => format!("On the {r}, you see {}.", list_items(items)),
        }
    }

    /// Canonical text of what the agent currently perceives.
    pub fn render_observation(&self) -> String {
        self.describe_receptacle(&self.agent_location)
    }

    /// First observation of an episode.
    pub fn room_listing(&self) -> String {
        format!(
            "You are in the middle of a room. Looking quickly around you, you see {}. You are next to the {}.",
            list_items(&self.receptacles),
            self.agent_location
        )
    }

    pub fn instruction(&self) -> String {
        format!("Your task is to: {}.", self.goal.describe())
    }

    fn goal_met(&self) -> bool {
        self.receptacle_contents.iter().any(|(r, items)| {
            type_of(r) == self.goal.target_type
                && items.iter().any(|o| type_of(o) == self.goal.object_class)
        })
    }

    fn apply(&mut self, cmd: &Command) -> Option<String> {
        let exists = |r: &str| self.receptacles.iter().any(|x| x == r);
        match cmd {
            Command::GoTo(r) => {
                if !exists(r) || *r == self.agent_location {
                    return None;
                }
                self.agent_location = r.clone();
                Some(format!("You arrive at {r}. {}", self.describe_receptacle(r)))
            }
            Command::Open(r) => {
                if *r != self.agent_location || self.receptacle_open.get(r) != Some(&false) {
                    return None;
                }
                self.receptacle_open.insert(r.clone(), true);
                Some(format!("You open the {r}. {}", self.describe_receptacle(r)))
            }
            Command::Close(r) => {
                if *r != self.agent_location || self.receptacle_open.get(r) != Some(&true) {
                    return None;
                }
                self.receptacle_open.insert(r.clone(), false);
                Some(format!("You close the {r}."))
            }
            Command::Take(o, r) => {
                if *r != self.agent_location || !self.accessible(r) || self.inventory.is_some() {
                    return None;
                }
                let items = self.receptacle_contents.get_mut(r)?;
                let idx = items.iter().position(|x| x == o)?;
                items.remove(idx);
                self.inventory = Some(o.clone());
                Some(format!("You pick up the {o} from the {r}."))
            }
            Command::Put(o, r) => {
                if *r != self.agent_location
                    || !self.accessible(r)
                    || self.inventory.as_deref() != Some(o.as_str())
                {
                    return None;
                }
                let items = self.receptacle_contents.get_mut(r)?;
                items.push(o.clone());
                items.sort();
                self.inventory = None;
                Some(format!("You put the {o} in the {r}."))
            }
            Command::Look => Some(format!(
                "You are facing the {}. Next to it, you see nothing.",
                self.agent_location
            )),
            Command::Examine(r) => {
                if *r != self.agent_location {
                    return None;
                }
                Some(self.describe_receptacle(r))
            }
            Command::Inventory => Some(match &self.inventory {
                Some(o) => format!("You are carrying: a {o}."),
                None => "You are not carrying anything.".to_string(),
            }),
        }
    }

    /// Pure transition. Invalid or malformed actions only consume a step.
    pub fn step(&self, action: &str) -> Result<GridStep> {
        if self.is_terminal() {
            return Err(WmError::InvalidEpisodeState);
        }
        let mut next = self.clone();
        let outcome = parse_command(action).and_then(|cmd| next.apply(&cmd));
        let (observation, valid) = match outcome {
            Some(text) => (text, true),
            None => {
                next = self.clone();
                (NOTHING_HAPPENS.to_string(), false)
            }
        };
        next.step_count += 1;
        next.success = next.goal_met();
        let done = next.success || next.step_count >= next.max_steps;
        Ok(GridStep {
            success: next.success,
            state: next,
            observation,
            done,
            valid,
        })
    }

    /// Action strings a player could plausibly type here; used by the
    /// random baseline agent and the base-model format corpus.
    pub fn candidate_actions(&self) -> Vec<String> {
        let mut out = vec!["look".to_string(), "inventory".to_string()];
        for r in &self.receptacles {
            out.push(format!("go to {r}"));
        }
        let here = &self.agent_location;
        out.push(format!("examine {here}"));
        if self.receptacle_open.contains_key(here) {
            out.push(format!("open {here}"));
            out.push(format!("close {here}"));
        }
        if let Some(items) = self.receptacle_contents.get(here) {
            for o in items {
                out.push(format!("take {o} from {here}"));
            }
        }
        if let Some(o) = &self.inventory {
            out.push(format!("put {o} in {here}"));
        }
        out
    }

    /// Every well-formed command over this layout's receptacles and objects,
    /// whether or not it is valid in the current state.
    pub fn action_space(&self) -> Vec<String> {
        let mut out = vec!["look".to_string(), "inventory".to_string()];
        let objects = self.all_objects();
        for r in &self.receptacles {
            out.push(format!("go to {r}"));
            out.push(format!("examine {r}"));
            if is_openable_type(type_of(r)) {
                out.push(format!("open {r}"));
                out.push(format!("close {r}"));
            }
            for o in &objects {
                out.push(format!("take {o} from {r}"));
                out.push(format!("put {o} in {r}"));
            }
        }
        out
    }

    pub fn all_objects(&self) -> Vec<String> {
        let mut v: Vec<String> = self
            .receptacle_contents
            .values()
            .flatten()
            .cloned()
            .chain(self.inventory.clone())
            .collect();
        v.sort();
        v
    }

    /// Scripted expert with full state access.
    pub fn solve_oracle(&self) -> Result<Vec<String>> {
        let fail = || WmError::OracleFailure(self.goal.describe());
        let mut plan = Vec::new();
        let mut loc = self.agent_location.clone();
        let mut open = self.receptacle_open.clone();
        let go = |r: &str, plan: &mut Vec<String>, loc: &mut String| {
            if r != loc.as_str() {
                plan.push(format!("go to {r}"));
                *loc = r.to_string();
            }
        };
        let obj = match &self.inventory {
            Some(o) if type_of(o) == self.goal.object_class => o.clone(),
            Some(_) => return Err(fail()),
            None => {
                let (src, obj) = self
                    .receptacle_contents
                    .iter()
                    .filter(|(r, _)| type_of(r) != self.goal.target_type)
                    .flat_map(|(r, items)| items.iter().map(move |o| (r, o)))
                    .find(|(_, o)| type_of(o) == self.goal.object_class)
                    .ok_or_else(fail)?;
                go(src, &mut plan, &mut loc);
                if open.get(src.as_str()) == Some(&false) {
                    plan.push(format!("open {src}"));
                    open.insert(src.clone(), true);
                }
                plan.push(format!("take {obj} from {src}"));
                obj.clone()
            }
        };
        let target = self
            .receptacles
            .iter()
            .find(|r| type_of(r) == self.goal.target_type)
            .ok_or_else(fail)?;
        go(target, &mut plan, &mut loc);
        if open.get(target.as_str()) == Some(&false) {
            plan.push(format!("open {target}"));
        }
        plan.push(format!("put {obj} in {target}"));
        if self.step_count + plan.len() > self.max_steps {
            return Err(fail());
        }
        Ok(plan)
    }
}

/// Knobs for procedurally generated households.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridGenConfig {
    pub min_objects: usize,
    pub max_objects: usize,
    pub extra_receptacles: usize,
    /// Every k-th (class, target type) goal pair is held out for OOD.
    pub ood_modulus: u64,
}

impl Default for GridGenConfig {
    fn default() -> Self {
        Self {
            min_objects: 3,
            max_objects: 5,
            extra_receptacles: 2,
            ood_modulus: 4,
        }
    }
}

const BASE_RECEPTACLES: &[&str] = &["cabinet 1", "countertop 1", "drawer 1", "fridge 1", "shelf 1"];
const EXTRA_RECEPTACLES: &[&str] = &[
    "cabinet 2",
    "countertop 2",
    "diningtable 1",
    "drawer 2",
    "microwave 1",
    "sidetable 1",
    "sinkbasin 1",
];

fn sample_weighted<'a>(rng: &mut Rng, choices: &[(&'a str, f64)]) -> &'a str {
    let total: f64 = choices.iter().map(|(_, w)| w).sum();
    let mut x = rng.gen::<f64>() * total;
    for (name, w) in choices {
        if x < *w {
            return name;
        }
        x -= w;
    }
    choices[choices.len() - 1].0
}

/// Whether a goal pair belongs to the held-out (OOD) family.
pub fn is_ood_pair(object_class: &str, target_type: &str, modulus: u64) -> bool {
    let h = crate::util::str_id(&format!("{object_class}->{target_type}"));
    modulus > 0 && h % modulus == 0
}

/// Draw one household and a goal whose pair family matches `want_ood`.
pub fn generate_layout(rng: &mut Rng, cfg: &GridGenConfig, want_ood: bool) -> GridLayout {
    loop {
        let mut receptacles: Vec<String> = BASE_RECEPTACLES.iter().map(|s| s.to_string()).collect();
        let mut extras: Vec<&str> = EXTRA_RECEPTACLES.to_vec();
        extras.shuffle(rng);
        receptacles.extend(extras.iter().take(cfg.extra_receptacles).map(|s| s.to_string()));
        receptacles.sort();

        let mut contents: BTreeMap<String, Vec<String>> =
            receptacles.iter().map(|r| (r.clone(), Vec::new())).collect();
        let n_obj = rng.gen_range(cfg.min_objects..=cfg.max_objects);
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for _ in 0..n_obj {
            let (class, prior) = LOCATION_PRIORS[rng.gen_range(0..LOCATION_PRIORS.len())];
            let present: Vec<(&str, f64)> = prior
                .iter()
                .copied()
                .filter(|(ty, _)| receptacles.iter().any(|r| type_of(r) == *ty))
                .collect();
            if present.is_empty() {
                continue;
            }
            let ty = sample_weighted(rng, &present);
            let hosts: Vec<&String> = receptacles.iter().filter(|r| type_of(r) == ty).collect();
            let host = hosts[rng.gen_range(0..hosts.len())].clone();
            let c = counts.entry(class).or_insert(0);
            *c += 1;
            contents.get_mut(&host).unwrap().push(format!("{class} {c}"));
        }
        for items in contents.values_mut() {
            items.sort();
        }

        let classes: Vec<&str> = counts.keys().copied().collect();
        let mut types: Vec<&str> = receptacles.iter().map(|r| type_of(r)).collect();
        types.dedup();
        let mut pairs = Vec::new();
        for c in &classes {
            for t in &types {
                if is_ood_pair(c, t, cfg.ood_modulus) != want_ood {
                    continue;
                }
                // No instance may already satisfy the goal.
                let satisfied = contents
                    .iter()
                    .any(|(r, items)| type_of(r) == *t && items.iter().any(|o| type_of(o) == *c));
                if !satisfied {
                    pairs.push((*c, *t));
                }
            }
        }
        if pairs.is_empty() {
            continue;
        }
        let (c, t) = pairs[rng.gen_range(0..pairs.len())];
        let goal = GridGoal::put(c, t);
        let start = receptacles[rng.gen_range(0..receptacles.len())].clone();
        return GridLayout {
            receptacles,
            contents,
            goal,
            start,
        };
    }
}
