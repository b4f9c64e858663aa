//! Generic synthetic English used to pretrain the base model and to measure
//! forgetting on text unrelated to any environment.

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::util::rng_for;

const ADJ: &[&str] = &[
    "small", "old", "red", "quiet", "bright", "heavy", "clean", "warm", "busy", "tall", "soft",
    "green",
];
const NOUN: &[&str] = &[
    "cat", "teacher", "river", "window", "garden", "train", "letter", "farmer", "bird", "city",
    "book", "child", "knife", "apple", "table", "lamp",
];
const VERB: &[&str] = &[
    "sees", "finds", "carries", "opens", "watches", "likes", "moves", "cleans", "follows",
    "reads",
];
const PREP: &[&str] = &["near", "behind", "under", "beside", "across", "inside"];
const TIME: &[&str] = &["today", "every morning", "at night", "in the summer", "after lunch"];

fn sentence(rng: &mut crate::util::Rng) -> String {
    let pick = |rng: &mut crate::util::Rng, xs: &[&'static str]| *xs.choose(rng).unwrap();
    match rng.gen_range(0..4) {
        0 => format!(
            "The {} {} {} the {} {}.",
            pick(rng, ADJ),
            pick(rng, NOUN),
            pick(rng, VERB),
            pick(rng, NOUN),
            pick(rng, TIME)
        ),
        1 => format!(
            "A {} is {} the {} {}.",
            pick(rng, NOUN),
            pick(rng, PREP),
            pick(rng, ADJ),
            pick(rng, NOUN)
        ),
        2 => format!(
            "There are {} {}s {} the {}.",
            rng.gen_range(2..10),
            pick(rng, NOUN),
            pick(rng, PREP),
            pick(rng, NOUN)
        ),
        _ => format!(
            "{} the {} {} the {}.",
            {
                let t = pick(rng, TIME);
                let mut c = t.chars();
                let first = c.next().unwrap().to_ascii_uppercase();
                format!("{first}{}", c.as_str())
            },
            pick(rng, NOUN),
            pick(rng, VERB),
            pick(rng, NOUN)
        ),
    }
}

/// `n_docs` short documents of three sentences each.
pub fn generic_corpus(n_docs: usize, seed: u64) -> Vec<String> {
    (0..n_docs)
        .map(|i| {
            let mut rng = rng_for(seed, &[0xc0, i as u64]);
            (0..3).map(|_| sentence(&mut rng)).collect::<Vec<_>>().join(" ")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_seed_dependent() {
        assert_eq!(generic_corpus(5, 1), generic_corpus(5, 1));
        assert_ne!(generic_corpus(5, 1), generic_corpus(5, 2));
        assert!(generic_corpus(3, 1).iter().all(|d| d.ends_with('.')));
    }
}
