//! A customer-service desk: a small database, a fixed tool set, and a
//! rule-based user who reveals facts one at a time.
//!
//! Agent actions are either tool calls, written `call <tool> <json args>`,
//! or plain messages to the user.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{Result, WmError};
use crate::jsonfmt::to_spaced_string;
use crate::util::Rng;

pub type Record = Map<String, Value>;

pub const NO_DATA: &str = "no data found";
pub const TX_SUCCESS: &str = "transaction success";
pub const CLARIFY: &str = "Sorry, could you clarify what you need?";

/// (tool name, argument names)
pub const TOOLS: &[(&str, &[&str])] = &[
    ("find_user_by_phone", &["phone"]),
    ("get_order", &["order_id"]),
    ("list_orders", &["user_id"]),
    ("cancel_order", &["order_id"]),
    ("update_email", &["user_id", "email"]),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    Agent,
    User,
    Tool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fact {
    pub key: String,
    pub keywords: Vec<String>,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserScript {
    pub opening: String,
    pub intent: String,
    pub facts: Vec<Fact>,
    pub closing: String,
    #[serde(default)]
    pub disclosed: Vec<String>,
    #[serde(default)]
    pub intent_stated: bool,
    #[serde(default)]
    pub finished: bool,
}

/// `table[key_field == key_value].field == equals`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalAssertion {
    pub table: String,
    pub key_field: String,
    pub key_value: String,
    pub field: String,
    pub equals: Value,
}

impl GoalAssertion {
    fn holds(&self, db: &BTreeMap<String, Vec<Record>>) -> bool {
        db.get(&self.table)
            .and_then(|rows| {
                rows.iter()
                    .find(|r| r.get(&self.key_field).and_then(Value::as_str) == Some(&self.key_value))
            })
            .and_then(|r| r.get(&self.field))
            == Some(&self.equals)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolScenario {
    pub database: BTreeMap<String, Vec<Record>>,
    /// Basic facts about the user shown to the agent up front.
    pub user_info: String,
    pub user_script: UserScript,
    pub goal_assertions: Vec<GoalAssertion>,
    /// Intent family, e.g. `cancel_order`; used for split signatures.
    pub intent_kind: String,
    pub variant: String,
}

impl ToolScenario {
    pub fn validate(&self) -> Result<()> {
        for g in &self.goal_assertions {
            let rows = self
                .database
                .get(&g.table)
                .ok_or_else(|| WmError::NotFound(format!("table {}", g.table)))?;
            let has_fields = rows
                .iter()
                .any(|r| r.contains_key(&g.key_field) && r.contains_key(&g.field));
            if !has_fields {
                return Err(WmError::NotFound(format!(
                    "fields {}/{} in {}",
                    g.key_field, g.field, g.table
                )));
            }
        }
        Ok(())
    }

    pub fn signature(&self) -> String {
        format!("{}|{}", self.intent_kind, self.variant)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolDeskState {
    pub database: BTreeMap<String, Vec<Record>>,
    pub dialogue: Vec<(Speaker, String)>,
    pub user_script: UserScript,
    pub goal_assertions: Vec<GoalAssertion>,
    pub user_info: String,
    pub step_count: usize,
    pub max_steps: usize,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToolStep {
    pub state: ToolDeskState,
    pub observation: String,
    pub responder: Speaker,
    pub done: bool,
    pub success: bool,
    pub valid: bool,
}

/// A parsed `call` action, or the reason it is not a valid tool call.
fn parse_call(action: &str) -> Option<std::result::Result<(String, Record), String>> {
    let rest = action.trim().strip_prefix("call ")?;
    let rest = rest.trim_start();
    let (name, args) = match rest.find(char::is_whitespace) {
        Some(i) => (&rest[..i], rest[i..].trim()),
        None => (rest, "{}"),
    };
    let Some((_, expected)) = TOOLS.iter().find(|(n, _)| *n == name) else {
        return Some(Err(format!("error: unknown tool {name}")));
    };
    let parsed: Record = match serde_json::from_str::<Value>(args) {
        Ok(Value::Object(m)) => m,
        _ => return Some(Err("error: malformed arguments".to_string())),
    };
    for k in parsed.keys() {
        if !expected.contains(&k.as_str()) {
            return Some(Err(format!("error: unexpected argument {k}")));
        }
    }
    for k in expected.iter() {
        match parsed.get(*k) {
            None => return Some(Err(format!("error: missing argument {k}"))),
            Some(Value::String(_)) => {}
            Some(_) => return Some(Err(format!("error: argument {k} must be a string"))),
        }
    }
    Some(Ok((name.to_string(), parsed)))
}

pub fn render_record(record: &Record) -> String {
    to_spaced_string(&Value::Object(record.clone()))
}

/// Whether an agent action is syntactically a tool call.
pub fn is_tool_call(action: &str) -> bool {
    action.trim().starts_with("call ")
}

impl UserScript {
    /// Rule-based reply; returns the text and the updated script.
    pub fn respond(&self, agent_text: &str, goal_met: bool) -> (String, UserScript) {
        let mut next = self.clone();
        let lower = agent_text.to_ascii_lowercase();
        let has = |w: &str| lower.contains(w);
        if goal_met && (has("bye") || has("anything else")) {
            next.finished = true;
            return (self.closing.clone(), next);
        }
        if let Some(fact) = self
            .facts
            .iter()
            .find(|f| f.keywords.iter().any(|k| lower.contains(k.as_str())))
        {
            if !next.disclosed.contains(&fact.key) {
                next.disclosed.push(fact.key.clone());
            }
            return (fact.answer.clone(), next);
        }
        let words: Vec<&str> = lower
            .split(|c: char| !c.is_ascii_alphanumeric())
            .filter(|w| !w.is_empty())
            .collect();
        if words
            .iter()
            .any(|w| matches!(*w, "help" | "hello" | "hi" | "assist"))
        {
            next.intent_stated = true;
            return (self.intent.clone(), next);
        }
        (CLARIFY.to_string(), next)
    }
}

impl ToolDeskState {
    pub fn from_scenario(s: &ToolScenario, max_steps: usize) -> Self {
        Self {
            database: s.database.clone(),
            dialogue: vec![(Speaker::User, s.user_script.opening.clone())],
            user_script: s.user_script.clone(),
            goal_assertions: s.goal_assertions.clone(),
            user_info: s.user_info.clone(),
            step_count: 0,
            max_steps,
            success: false,
        }
    }

    pub fn instruction(&self) -> String {
        let tools: Vec<String> = TOOLS
            .iter()
            .map(|(n, args)| format!("{n}({})", args.join(", ")))
            .collect();
        format!(
            "You are a customer service agent. Call a tool by writing: call <tool> <json arguments>. Otherwise your text is sent to the user. Tools: {}.\n# User Information\n{}",
            tools.join(", "),
            self.user_info
        )
    }

    pub fn render_observation(&self) -> String {
        self.dialogue
            .last()
            .map(|(_, t)| t.clone())
            .unwrap_or_default()
    }

    pub fn is_terminal(&self) -> bool {
        self.success || self.user_script.finished || self.step_count >= self.max_steps
    }

    pub fn goal_met(&self) -> bool {
        self.goal_assertions.iter().all(|g| g.holds(&self.database))
    }

    fn find(&self, table: &str, field: &str, value: &str) -> Option<usize> {
        self.database
            .get(table)?
            .iter()
            .position(|r| r.get(field).and_then(Value::as_str) == Some(value))
    }

    fn run_tool(&mut self, name: &str, args: &Record) -> String {
        let arg = |k: &str| args.get(k).and_then(Value::as_str).unwrap_or_default().to_string();
        match name {
            "find_user_by_phone" => match self.find("users", "phone", &arg("phone")) {
                Some(i) => render_record(&self.database["users"][i]),
                None => NO_DATA.to_string(),
            },
            "get_order" => match self.find("orders", "order_id", &arg("order_id")) {
                Some(i) => render_record(&self.database["orders"][i]),
                None => NO_DATA.to_string(),
            },
            "list_orders" => {
                let uid = arg("user_id");
                if self.find("users", "user_id", &uid).is_none() {
                    return NO_DATA.to_string();
                }
                let ids: Vec<Value> = self.database["orders"]
                    .iter()
                    .filter(|r| r.get("user_id").and_then(Value::as_str) == Some(&uid))
                    .filter_map(|r| r.get("order_id").cloned())
                    .collect();
                to_spaced_string(&json!({ "user_id": uid, "order_ids": ids }))
            }
            "cancel_order" => match self.find("orders", "order_id", &arg("order_id")) {
                Some(i) => {
                    let row = &mut self.database.get_mut("orders").unwrap()[i];
                    if row.get("status").and_then(Value::as_str) == Some("pending") {
                        row.insert("status".into(), json!("cancelled"));
                        TX_SUCCESS.to_string()
                    } else {
                        "error: order cannot be cancelled".to_string()
                    }
                }
                None => NO_DATA.to_string(),
            },
            "update_email" => match self.find("users", "user_id", &arg("user_id")) {
                Some(i) => {
                    self.database.get_mut("users").unwrap()[i].insert("email".into(), json!(arg("email")));
                    TX_SUCCESS.to_string()
                }
                None => NO_DATA.to_string(),
            },
            _ => unreachable!("tool names are validated by parse_call"),
        }
    }

    /// Rule-based user reply to an agent message.
    pub fn user_sim_respond(&self, agent_text: &str) -> String {
        self.user_script.respond(agent_text, self.goal_met()).0
    }

    pub fn step(&self, action: &str) -> Result<ToolStep> {
        if self.is_terminal() {
            return Err(WmError::InvalidEpisodeState);
        }
        let mut next = self.clone();
        next.dialogue.push((Speaker::Agent, action.to_string()));
        let (observation, responder, valid) = match parse_call(action) {
            Some(Ok((name, args))) => (next.run_tool(&name, &args), Speaker::Tool, true),
            Some(Err(msg)) => (msg, Speaker::Tool, false),
            None => {
                let (reply, script) = next.user_script.respond(action, next.goal_met());
                next.user_script = script;
                (reply, Speaker::User, true)
            }
        };
        next.dialogue.push((responder, observation.clone()));
        next.step_count += 1;
        next.success = next.goal_met();
        let done = next.is_terminal();
        Ok(ToolStep {
            success: next.success,
            state: next,
            observation,
            responder,
            done,
            valid,
        })
    }

    /// Plausible agent turns: canned questions plus tool calls over values
    /// present in the database or the dialogue. Many are wrong for the task.
    pub fn candidate_actions(&self) -> Vec<String> {
        let mut out: Vec<String> = [
            "Hello, how can I help you today?",
            "What is your phone number?",
            "What is your order id?",
            "What is the new email address?",
            "Is there anything else I can help with?",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        let call = |tool: &str, args: Value| format!("call {tool} {}", to_spaced_string(&args));
        let mut emails: Vec<String> = self
            .dialogue
            .iter()
            .flat_map(|(_, t)| t.split_whitespace())
            .filter(|w| w.contains('@'))
            .map(|w| w.trim_end_matches('.').to_string())
            .collect();
        for u in self.database.get("users").into_iter().flatten() {
            out.push(call("find_user_by_phone", json!({ "phone": u["phone"] })));
            out.push(call("list_orders", json!({ "user_id": u["user_id"] })));
            if let Some(e) = u["email"].as_str() {
                emails.push(e.to_string());
            }
        }
        for o in self.database.get("orders").into_iter().flatten() {
            out.push(call("get_order", json!({ "order_id": o["order_id"] })));
            out.push(call("cancel_order", json!({ "order_id": o["order_id"] })));
        }
        emails.dedup();
        for u in self.database.get("users").into_iter().flatten() {
            for e in &emails {
                out.push(call("update_email", json!({ "user_id": u["user_id"], "email": e })));
            }
        }
        out
    }

    /// Scripted expert: gather the needed facts, then issue the calls.
    pub fn solve_oracle(&self, scenario: &ToolScenario) -> Result<Vec<String>> {
        let fail = || WmError::OracleFailure(scenario.signature());
        let fact = |k: &str| {
            scenario
                .user_script
                .facts
                .iter()
                .find(|f| f.key == k)
                .ok_or_else(fail)
        };
        let value_of = |k: &str| -> Result<String> {
            let f = fact(k)?;
            Ok(f.answer
                .rsplit(' ')
                .next()
                .unwrap_or_default()
                .trim_end_matches('.')
                .to_string())
        };
        let phone = value_of("phone")?;
        let uid = self.find("users", "phone", &phone).ok_or_else(fail)?;
        let user_id = self.database["users"][uid]["user_id"]
            .as_str()
            .ok_or_else(fail)?
            .to_string();
        let mut plan = vec![
            "Hello, how can I help you today?".to_string(),
            "What is your phone number?".to_string(),
            format!("call find_user_by_phone {}", to_spaced_string(&json!({ "phone": phone }))),
        ];
        match scenario.intent_kind.as_str() {
            "cancel_order" => {
                plan.push("What is your order id?".to_string());
                let oid = value_of("order_id")?;
                plan.push(format!(
                    "call cancel_order {}",
                    to_spaced_string(&json!({ "order_id": oid }))
                ));
            }
            "update_email" => {
                plan.push("What is the new email address?".to_string());
                let email = value_of("email")?;
                plan.push(format!(
                    "call update_email {}",
                    to_spaced_string(&json!({ "user_id": user_id, "email": email }))
                ));
            }
            _ => return Err(fail()),
        }
        if plan.len() > self.max_steps {
            return Err(fail());
        }
        Ok(plan)
    }
}

const FIRST: &[&str] = &["John", "Maria", "Wei", "Aisha", "Lucas", "Emma", "Ravi", "Sofia"];
const LAST: &[&str] = &["Doe", "Garcia", "Chen", "Khan", "Silva", "Brown", "Patel", "Rossi"];
const ITEMS: &[&str] = &["lamp", "chair", "kettle", "headphones", "backpack", "blender"];
const DOMAINS: &[&str] = &["mail.com", "inbox.net", "post.org"];

pub fn is_ood_variant(intent: &str, variant: &str, modulus: u64) -> bool {
    modulus > 0 && crate::util::str_id(&format!("{intent}|{variant}")) % modulus == 0
}

/// Draw a scenario whose (intent, variant) family matches `want_ood`.
pub fn generate_scenario(rng: &mut Rng, ood_modulus: u64, want_ood: bool) -> ToolScenario {
    loop {
        let n_users = rng.gen_range(2..=4);
        let mut users = Vec::new();
        let mut orders = Vec::new();
        let mut order_no = rng.gen_range(100..900);
        for u in 0..n_users {
            let first = *FIRST.choose(rng).unwrap();
            let last = *LAST.choose(rng).unwrap();
            let user_id = format!("U-{}", 10 + u * 7 + rng.gen_range(0..7));
            let phone = format!("555-{:04}", rng.gen_range(0..10000));
            let mut r = Record::new();
            r.insert("user_id".into(), json!(user_id));
            r.insert("name".into(), json!(format!("{first} {last}")));
            r.insert("phone".into(), json!(phone));
            r.insert(
                "email".into(),
                json!(format!("{}@{}", first.to_ascii_lowercase(), DOMAINS.choose(rng).unwrap())),
            );
            users.push(r);
            for _ in 0..rng.gen_range(1..=2) {
                order_no += rng.gen_range(1..50);
                let mut o = Record::new();
                o.insert("order_id".into(), json!(format!("O-{order_no}")));
                o.insert("user_id".into(), json!(user_id));
                o.insert("item".into(), json!(*ITEMS.choose(rng).unwrap()));
                o.insert("status".into(), json!("pending"));
                orders.push(o);
            }
        }
        let mut phones: Vec<&Value> = users.iter().map(|u| &u["phone"]).collect();
        phones.sort_by_key(|p| p.as_str());
        phones.dedup();
        if phones.len() != users.len() {
            continue;
        }
        let who = rng.gen_range(0..users.len());
        let user = users[who].clone();
        let s = |k: &str| user[k].as_str().unwrap().to_string();
        let (intent_kind, variant, intent, fact, goal) = if rng.gen_bool(0.5) {
            let mine: Vec<&Record> = orders
                .iter()
                .filter(|o| o["user_id"] == user["user_id"])
                .collect();
            let order = mine[rng.gen_range(0..mine.len())];
            let oid = order["order_id"].as_str().unwrap().to_string();
            let item = order["item"].as_str().unwrap().to_string();
            (
                "cancel_order",
                item.clone(),
                format!("I want to cancel my order for a {item}."),
                Fact {
                    key: "order_id".into(),
                    keywords: vec!["order".into()],
                    answer: format!("My order id is {oid}."),
                },
                GoalAssertion {
                    table: "orders".into(),
                    key_field: "order_id".into(),
                    key_value: oid,
                    field: "status".into(),
                    equals: json!("cancelled"),
                },
            )
        } else {
            let domain = DOMAINS.choose(rng).unwrap().to_string();
            let email = format!("{}.{}@{}", s("name").split(' ').next().unwrap().to_ascii_lowercase(), rng.gen_range(1..99), domain);
            (
                "update_email",
                domain,
                "I want to change the email address on my account.".to_string(),
                Fact {
                    key: "email".into(),
                    keywords: vec!["email".into()],
                    answer: format!("My new email address is {email}."),
                },
                GoalAssertion {
                    table: "users".into(),
                    key_field: "user_id".into(),
                    key_value: s("user_id"),
                    field: "email".into(),
                    equals: json!(email),
                },
            )
        };
        if is_ood_variant(intent_kind, &variant, ood_modulus) != want_ood {
            continue;
        }
        let facts = vec![
            Fact {
                key: "phone".into(),
                keywords: vec!["phone".into()],
                answer: format!("My phone number is {}.", s("phone")),
            },
            fact,
        ];
        let mut database = BTreeMap::new();
        database.insert("users".to_string(), users);
        database.insert("orders".to_string(), orders);
        return ToolScenario {
            database,
            user_info: format!("The user is {}. Phone number: {}.", s("name"), s("phone")),
            user_script: UserScript {
                opening: "Hi, I need some help with my account.".into(),
                intent,
                facts,
                closing: "Thank you, that is all. Goodbye.".into(),
                disclosed: vec![],
                intent_stated: false,
                finished: false,
            },
            goal_assertions: vec![goal],
            intent_kind: intent_kind.to_string(),
            variant,
        };
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario() -> ToolScenario {
        generate_scenario(&mut crate::util::rng_for(11, &[]), 4, false)
    }

    #[test]
    fn oracle_satisfies_goal() {
        for seed in 0..30 {
            let sc = generate_scenario(&mut crate::util::rng_for(seed, &[]), 4, seed % 3 == 0);
            sc.validate().unwrap();
            let mut st = ToolDeskState::from_scenario(&sc, 12);
            let plan = st.solve_oracle(&sc).unwrap();
            let mut success = false;
            for a in &plan {
                let out = st.step(a).unwrap();
                assert!(out.valid, "{a} -> {}", out.observation);
                success = out.success;
                st = out.state;
            }
            assert!(success);
        }
    }

    #[test]
    fn wrong_argument_name_is_tool_error() {
        let sc = scenario();
        let st = ToolDeskState::from_scenario(&sc, 12);
        let out = st.step(r#"call get_order {"orderid": "O-1"}"#).unwrap();
        assert_eq!(out.observation, "error: unexpected argument orderid");
        assert!(!out.valid && !out.success);
        assert_eq!(out.responder, Speaker::Tool);
        let out = st.step(r#"call delete_everything {}"#).unwrap();
        assert!(!out.valid);
    }

    #[test]
    fn user_reveals_facts_verbatim_and_repeats() {
        let sc = scenario();
        let st = ToolDeskState::from_scenario(&sc, 12);
        let phone = sc.database["users"]
            .iter()
            .map(|u| u["phone"].as_str().unwrap())
            .find(|p| sc.user_info.contains(p))
            .unwrap();
        let a = st.user_sim_respond("Could you give me your phone number?");
        assert!(a.contains(phone));
        let s1 = st.step("Could you give me your phone number?").unwrap().state;
        assert_eq!(s1.user_sim_respond("Could you give me your phone number?"), a);
        assert_eq!(st.user_sim_respond("florble"), CLARIFY);
    }

    #[test]
    fn dialogue_alternates() {
        let sc = scenario();
        let mut st = ToolDeskState::from_scenario(&sc, 12);
        for a in ["hello", "call list_orders {\"user_id\": \"U-1\"}", "bye"] {
            st = st.step(a).unwrap().state;
        }
        for pair in st.dialogue[1..].chunks(2) {
            assert_eq!(pair[0].0, Speaker::Agent);
            assert_ne!(pair[1].0, Speaker::Agent);
        }
    }

    #[test]
    fn goodbye_after_success_closes() {
        let sc = scenario();
        let st = ToolDeskState::from_scenario(&sc, 12);
        let (_, s) = st.user_script.respond("bye", false);
        assert!(!s.finished);
        let (text, s) = st.user_script.respond("Goodbye!", true);
        assert!(s.finished);
        assert_eq!(text, sc.user_script.closing);
    }
}
