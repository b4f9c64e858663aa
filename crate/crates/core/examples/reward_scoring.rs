//! Score predicted next states against real ones: embedding distance for
//! free text and user replies, rounded ROUGE-L for tool responses, and zero
//! for output that lacks the expected tags.
//!
//! cargo run --release --example reward_scoring

use wmforge::reward::{score_prediction, text_distance, RewardSpec, StateKind};

fn main() {
    let spec = RewardSpec::default();
    let tagged = |s: &str| format!("<think> </think><next_state>{s}</next_state>");
    let cases = [
        (tagged("You arrive at fridge 1. The fridge 1 is closed."), "You arrive at fridge 1. The fridge 1 is closed.", StateKind::Text),
        (tagged("You arrive at fridge 1. The fridge 1 is open."), "You arrive at fridge 1. The fridge 1 is closed.", StateKind::Text),
        (tagged("Nothing happens."), "You pick up the apple 1 from the countertop 1.", StateKind::Text),
        (tagged("Sure, my order id is 12."), "Sure, my order id is 17.", StateKind::User),
        (
            tagged(r#"{"type": "object", "properties": {"id": {"type": "number"}}}"#),
            r#"{"type": "object", "properties": {"id": {"type": "number"}, "status": {"type": "string"}}}"#,
            StateKind::Tool,
        ),
        ("You arrive at fridge 1.".to_string(), "You arrive at fridge 1.", StateKind::Text),
    ];
    println!("{:<6} {:>6} {:>9} {:>7}  prediction", "kind", "value", "distance", "rouge");
    for (pred, gold, kind) in &cases {
        let r = score_prediction(pred, gold, *kind, &spec);
        let fmt = |x: Option<f64>| x.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into());
        println!(
            "{:<6} {:>6.1} {:>9} {:>7}  {}",
            format!("{kind:?}").to_lowercase(),
            r.value,
            fmt(r.distance),
            fmt(r.rouge),
            pred
        );
    }
    println!(
        "\nthresholds: text {} user {}; distance(\"open\", \"closed\" sentences) = {:.3}",
        spec.tau_d,
        spec.tau_d_user,
        text_distance("The fridge 1 is open.", "The fridge 1 is closed.", &spec)
    );
}
