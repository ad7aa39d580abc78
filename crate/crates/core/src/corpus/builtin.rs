//! Instruction formats for the eight generation tasks.

use super::types::{Position, TaskSpec, Template};
use crate::error::{Error, Result};

pub const TASK_IDS: &[&str] = &["simp", "hgen", "haiku", "cqa", "inqqg", "emdg", "exp", "twst"];

/// Returns the built-in spec for one of [`TASK_IDS`].
pub fn task(task_id: &str) -> Result<TaskSpec> {
    let spec = match task_id {
        "simp" => TaskSpec::new("simp", vec![Template::new("Make this text simpler: \"{source}\"")])
            .with_metrics(&["bleu4", "sari"]),
        "hgen" => {
            let mut spec = TaskSpec::new(
                "hgen",
                vec![
                    Template::constrained(
                        "Make a title for this article, starting with \"{keyword}\": {article}",
                        Position::Start,
                    ),
                    Template::constrained(
                        "Make a title for this article, ending with \"{keyword}\": {article}",
                        Position::End,
                    ),
                    Template::constrained(
                        "Make a title for this article, that contains \"{keyword}\": {article}",
                        Position::Contain,
                    ),
                ],
            )
            .with_metrics(&["rouge1", "constraint"]);
            spec.base_template = Some(Template::new("Make a title for this article: {article}"));
            spec
        }
        "haiku" => TaskSpec::new("haiku", vec![Template::new("Generate a haiku about '{topic}'")])
            .with_metrics(&["h_cust"]),
        "cqa" => TaskSpec::new(
            "cqa",
            vec![Template::new("In the context of the COVID pandemic, {question}")],
        )
        .with_metrics(&["similarity"]),
        "inqqg" => TaskSpec::new(
            "inqqg",
            vec![Template::new(
                "Given the following text, write the possible curious question it answers: \"{text}\"",
            )],
        )
        .with_metrics(&["1tok", "similarity"]),
        "emdg" => TaskSpec::new(
            "emdg",
            vec![Template::new(
                "The associated emotion is \"{emotion}\" and the input prompt is \"{prompt}\". \
                 Now what would be your response, given the following dialogue context:=== {context}",
            )],
        )
        .with_metrics(&["similarity"]),
        "exp" => TaskSpec::new(
            "exp",
            vec![Template::new(
                "Explain why the two following sentences are {relation} each other: \
                 \"Sentence 1: {premise}\"; Sentence 2: \"{hypothesis}\"",
            )],
        )
        .with_metrics(&["similarity"]),
        "twst" => TaskSpec::new(
            "twst",
            vec![Template::new("Write a tweet about {hashtag}, in the style of {author}")],
        )
        .with_metrics(&["clf", "similarity"]),
        other => {
            return Err(Error::Unknown {
                kind: "built-in task",
                name: other.to_string(),
                known: TASK_IDS.join(", "),
            })
        }
    };
    let mut spec = spec;
    spec.name = match task_id {
        "simp" => "Text Simplification",
        "hgen" => "Headline Generation with Constraint",
        "haiku" => "Haiku Generation",
        "cqa" => "Covid QA",
        "inqqg" => "Inquisitive Question Generation",
        "emdg" => "Empathetic Dialogue Generation",
        "exp" => "Explanation Generation",
        _ => "Twitter Stylometry",
    }
    .to_string();
    Ok(spec)
}

pub fn all() -> Vec<TaskSpec> {
    TASK_IDS.iter().map(|id| task(id).expect("built-in")).collect()
}
