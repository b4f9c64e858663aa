//! Text templates for the acting and next-state-prediction roles.
//!
//! The model reads only a short trailing window, so each template ends with
//! the fields the next tokens depend on most.

use crate::envsim::EnvKind;
use crate::reward::{NEXT_STATE_CLOSE, NEXT_STATE_OPEN, THINK_CLOSE, THINK_OPEN};

/// Default number of past (observation, action) pairs shown in prompts.
pub const DEFAULT_HISTORY: usize = 4;

const POLICY_HEADER: &str =
    "You are an agent. Think inside <think> </think>, then write exactly one action.";
const WM_HEADER: &str = "Predict what the environment shows after the potential action. Think inside <think> </think>, then write the next observation inside <next_state> </next_state>.";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Exchange<'a> {
    pub obs: &'a str,
    pub act: &'a str,
}

fn last_h<'a, 'b>(history: &'b [Exchange<'a>], h: usize) -> &'b [Exchange<'a>] {
    &history[history.len().saturating_sub(h)..]
}

/// Prompt asking for the next action.
pub fn policy_prompt(instruction: &str, history: &[Exchange], obs: &str, h: usize) -> String {
    let mut s = format!("{POLICY_HEADER}\n");
    for e in last_h(history, h) {
        s.push_str(&format!("Observation: {} Action: {}\n", e.obs, e.act));
    }
    s.push_str(&format!("Current observation: {obs}\n{instruction}\nYour action:"));
    s
}

/// Completion text the policy is trained to emit for `action`.
pub fn policy_target(action: &str) -> String {
    format!("{THINK_OPEN} {THINK_CLOSE} {action}")
}

/// Action text of a policy completion: everything after the first closing
/// think tag, or the raw text when the tag is missing.
pub fn parse_action(completion: &str) -> String {
    match completion.find(THINK_CLOSE) {
        Some(i) => completion[i + THINK_CLOSE.len()..].trim().to_string(),
        None => completion.trim().to_string(),
    }
}

/// Prompt asking for the next observation given a potential action.
pub fn wm_prompt(
    env: EnvKind,
    instruction: &str,
    history: &[Exchange],
    obs: &str,
    action: &str,
    h: usize,
) -> String {
    let mut s = format!("{WM_HEADER}\n{instruction}\n");
    if env == EnvKind::Tooldesk {
        s.push_str("# History\n");
    }
    for e in last_h(history, h) {
        s.push_str(&format!("Observation: {} Action: {}\n", e.obs, e.act));
    }
    let label = match env {
        EnvKind::Gridhouse => "Potential action",
        EnvKind::Tooldesk => "Potential assistant response",
    };
    s.push_str(&format!("Current observation: {obs}\n{label}: {action}\n"));
    s
}

/// Supervised label for next-state prediction: empty reasoning, then the
/// gold observation.
pub fn wm_target(gold: &str) -> String {
    format!("{THINK_OPEN} {THINK_CLOSE}{NEXT_STATE_OPEN}{gold}{NEXT_STATE_CLOSE}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policy_prompt_keeps_last_h() {
        let hist: Vec<Exchange> = (0..6)
            .map(|i| Exchange {
                obs: if i % 2 == 0 { "a" } else { "b" },
                act: ["go to x 1", "look", "open y 1", "inventory", "look", "go to z 1"][i],
            })
            .collect();
        let p = policy_prompt("Your task is to: t.", &hist, "now", 2);
        assert_eq!(p.matches("Observation: ").count(), 2);
        assert!(!p.contains("Action: inventory"));
        assert!(p.contains("Action: go to z 1"));
        assert!(p.ends_with("Current observation: now\nYour task is to: t.\nYour action:"));
        assert_eq!(policy_prompt("i", &hist, "o", 0).matches("Action:").count(), 0);
    }

    #[test]
    fn action_parsing() {
        assert_eq!(parse_action("<think> hmm </think> go to drawer 1"), "go to drawer 1");
        assert_eq!(parse_action("<think></think>"), "");
        assert_eq!(parse_action("  open fridge 1 "), "open fridge 1");
        assert_eq!(parse_action(&policy_target("look")), "look");
    }

    #[test]
    fn wm_templates() {
        let p = wm_prompt(EnvKind::Gridhouse, "task", &[], "You see x.", "look", 4);
        assert!(p.ends_with("Current observation: You see x.\nPotential action: look\n"));
        let p = wm_prompt(EnvKind::Tooldesk, "# User Information\nu", &[], "Hi", "Hello", 4);
        assert!(p.contains("# History\n"));
        assert!(p.ends_with("Potential assistant response: Hello\n"));
        assert_eq!(
            wm_target("Nothing happens."),
            "<think> </think><next_state>Nothing happens.</next_state>"
        );
    }
}
