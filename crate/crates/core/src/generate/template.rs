use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TemplateId {
    /// Basic form: one paper for one category.
    P1,
    /// P1 preceded by a description of the graph generation task.
    P2,
    /// Two exemplar papers of the category, then a request for another.
    P3,
    /// All label texts at once, one paper per topic.
    P4,
    /// M papers for one category in a single request.
    P5,
    /// Multi-turn: each request lists the titles generated so far.
    P6,
}

impl TemplateId {
    pub const ALL: [TemplateId; 6] =
        [TemplateId::P1, TemplateId::P2, TemplateId::P3, TemplateId::P4, TemplateId::P5, TemplateId::P6];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::P1 => "P1",
            TemplateId::P2 => "P2",
            TemplateId::P3 => "P3",
            TemplateId::P4 => "P4",
            TemplateId::P5 => "P5",
            TemplateId::P6 => "P6",
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TemplateId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        TemplateId::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown template `{s}` (expected P1..P6)")))
    }
}

/// Slot values beyond the class text. Which ones are required depends on
/// the template.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PromptContext {
    /// P3: exactly two "title and abstract" strings from the training set.
    pub exemplars: Vec<String>,
    /// P4: every label text, in class-id order.
    pub label_texts: Vec<String>,
    /// P5: how many papers to request.
    pub count: Option<usize>,
    /// P6: titles generated earlier in the conversation, oldest first.
    pub prior_titles: Vec<String>,
}

const TASK_DESCRIPTION: &str = "We want to generate a few nodes from graph-structured data where the nodes represent \
individual research papers and the edges represent citation relationships among the papers.";

fn basic(class_text: &str) -> String {
    format!("Please generate a paper belonging to category {class_text}, including title and abstract.")
}

fn missing(template: TemplateId, slot: &str) -> Error {
    Error::MissingSlot { template: template.to_string(), slot: slot.to_string() }
}

fn join_topics(labels: &[String]) -> String {
    match labels {
        [] => String::new(),
        [only] => only.clone(),
        [init @ .., last] => format!("{} and {last}", init.join(", ")),
    }
}

/// Renders the user turn for `template`.
///
/// For P6 this is the latest user turn; the full conversation (with the
/// earlier assistant replies) is assembled by the generator.
pub fn render_prompt(template: TemplateId, class_text: &str, ctx: &PromptContext) -> Result<String> {
    let needs_class = || if class_text.trim().is_empty() { Err(missing(template, "class_text")) } else { Ok(()) };
    match template {
        TemplateId::P1 => {
            needs_class()?;
            Ok(basic(class_text))
        }
        TemplateId::P2 => {
            needs_class()?;
            Ok(format!("{TASK_DESCRIPTION}\n{}", basic(class_text)))
        }
        TemplateId::P3 => {
            needs_class()?;
            let [first, second] = ctx.exemplars.as_slice() else {
                return Err(missing(template, "exemplars (exactly two)"));
            };
            Ok(format!(
                "Here are two papers belonging to category {class_text}, {first}, {second}. \
                 Please generate another paper belonging to category {class_text}, including title and abstract."
            ))
        }
        TemplateId::P4 => {
            if ctx.label_texts.is_empty() {
                return Err(missing(template, "label_texts"));
            }
            Ok(format!(
                "We have some research paper topics, namely {}.\n\
                 Please generate a title and abstract for each of these topics.",
                join_topics(&ctx.label_texts)
            ))
        }
        TemplateId::P5 => {
            needs_class()?;
            let m = ctx.count.ok_or_else(|| missing(template, "count"))?;
            Ok(format!("Please generate {m} papers belonging to category {class_text}, including title and abstract."))
        }
        TemplateId::P6 => {
            needs_class()?;
            if ctx.prior_titles.is_empty() {
                return Ok(basic(class_text));
            }
            Ok(format!(
                "The title of the paper you generated previously is {}. Please generate a paper belonging to \
                 category {class_text}, including title and abstract, which is different from the previous one \
                 you generated.",
                ctx.prior_titles.join(",")
            ))
        }
    }
}

/// Appended to the last user turn when a completion could not be parsed.
pub const FORMAT_REMINDER: &str =
    "Please answer in the format \"Title: <title>\" on one line followed by \"Abstract: <abstract>\".";
