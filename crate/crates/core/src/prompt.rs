//! Chain-of-thought prompts for the reasoner and parsers for its replies.
//!
//! Two prompt families exist: the *search* prompt, which asks the reasoner to
//! find a moving object and describe it as a text prompt, and the *thinking*
//! prompt, which asks it to judge a mask drawn over the image. Template bodies
//! live in `templates/*.txt` and use `{{name}}` placeholders.
//!
//! The reasoner signals its judgement with a sentinel line, either
//! [`VERDICT_CORRECT`] or [`VERDICT_INCORRECT`]; the thinking prompt asks for
//! it explicitly. A search reply whose last line is [`NO_MOVING_OBJECT`]
//! means the image has nothing to segment.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub const NO_MOVING_OBJECT: &str = "No moving object";
pub const VERDICT_CORRECT: &str = "VERDICT: CORRECT";
pub const VERDICT_INCORRECT: &str = "VERDICT: INCORRECT";

const SEARCH_BODY: &str = include_str!("../templates/search_cot.txt");
const THINKING_BODY: &str = include_str!("../templates/thinking_cot.txt");
const REFINEMENT_BODY: &str = include_str!("../templates/refinement.txt");
const VERDICT_INSTRUCTION: &str = include_str!("../templates/verdict_instruction.txt");

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("reply is empty")]
    EmptyReply,
    #[error("no verdict sentinel found in reply")]
    UnparseableVerdict,
    #[error("template `{template}` has no binding rule for placeholder `{placeholder}`")]
    UndeclaredPlaceholder { template: String, placeholder: String },
    #[error("template `{template}` requires a value for `{placeholder}`")]
    MissingBinding { template: String, placeholder: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    Search,
    DeepThinking,
    Refinement,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Placeholder {
    pub name: &'static str,
    pub optional: bool,
}

/// A template body plus the binding rule for each of its placeholders.
#[derive(Debug, Clone)]
pub struct PromptTemplate {
    pub id: TemplateId,
    pub body: &'static str,
    pub placeholders: &'static [Placeholder],
}

impl PromptTemplate {
    pub fn search() -> Self {
        PromptTemplate {
            id: TemplateId::Search,
            body: SEARCH_BODY,
            placeholders: &[Placeholder {
                name: "refinement",
                optional: true,
            }],
        }
    }

    pub fn deep_thinking() -> Self {
        PromptTemplate {
            id: TemplateId::DeepThinking,
            body: THINKING_BODY,
            placeholders: &[Placeholder {
                name: "verdict_instruction",
                optional: true,
            }],
        }
    }

    pub fn refinement() -> Self {
        PromptTemplate {
            id: TemplateId::Refinement,
            body: REFINEMENT_BODY,
            placeholders: &[
                Placeholder {
                    name: "previous_prompt",
                    optional: false,
                },
                Placeholder {
                    name: "critique",
                    optional: false,
                },
            ],
        }
    }

    /// Names referenced in the body, in order of appearance.
    pub fn referenced(&self) -> Vec<&'static str> {
        segments(self.body)
            .into_iter()
            .filter_map(|s| match s {
                Segment::Placeholder(name) => Some(name),
                Segment::Text(_) => None,
            })
            .collect()
    }

    /// Every referenced placeholder must have a declared rule.
    pub fn validate(&self) -> Result<(), PromptError> {
        for name in self.referenced() {
            if !self.placeholders.iter().any(|p| p.name == name) {
                return Err(PromptError::UndeclaredPlaceholder {
                    template: format!("{:?}", self.id),
                    placeholder: name.to_string(),
                });
            }
        }
        Ok(())
    }

    /// Substitutes bindings in a single pass; bound values are never
    /// re-expanded. Unbound optional placeholders render as empty text.
    pub fn render(&self, bindings: &BTreeMap<&str, &str>) -> Result<String, PromptError> {
        self.validate()?;
        let mut out = String::with_capacity(self.body.len());
        for seg in segments(self.body) {
            match seg {
                Segment::Text(t) => out.push_str(t),
                Segment::Placeholder(name) => match bindings.get(name) {
                    Some(v) => out.push_str(v),
                    None => {
                        let rule = self.placeholders.iter().find(|p| p.name == name);
                        if !rule.is_some_and(|p| p.optional) {
                            return Err(PromptError::MissingBinding {
                                template: format!("{:?}", self.id),
                                placeholder: name.to_string(),
                            });
                        }
                    }
                },
            }
        }
        Ok(out)
    }
}

enum Segment<'a> {
    Text(&'a str),
    Placeholder(&'a str),
}

fn segments(body: &str) -> Vec<Segment<'_>> {
    let mut out = Vec::new();
    let mut rest = body;
    while let Some(start) = rest.find("{{") {
        let Some(len) = rest[start + 2..].find("}}") else { break };
        if start > 0 {
            out.push(Segment::Text(&rest[..start]));
        }
        out.push(Segment::Placeholder(rest[start + 2..start + 2 + len].trim()));
        rest = &rest[start + 2 + len + 2..];
    }
    if !rest.is_empty() {
        out.push(Segment::Text(rest));
    }
    out
}

/// Feedback from a rejected segmentation, fed into the next search prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefinementContext {
    pub previous_prompt: String,
    pub critique: String,
}

pub fn render_search_prompt(context: Option<&RefinementContext>) -> String {
    let block;
    let mut bindings = BTreeMap::new();
    if let Some(ctx) = context {
        let inner = BTreeMap::from([
            ("previous_prompt", ctx.previous_prompt.as_str()),
            ("critique", ctx.critique.as_str()),
        ]);
        block = PromptTemplate::refinement()
            .render(&inner)
            .expect("refinement template binds all placeholders");
        bindings.insert("refinement", block.as_str());
    }
    PromptTemplate::search()
        .render(&bindings)
        .expect("search template is well-formed")
}

pub fn render_thinking_prompt() -> String {
    let bindings = BTreeMap::from([("verdict_instruction", VERDICT_INSTRUCTION)]);
    PromptTemplate::deep_thinking()
        .render(&bindings)
        .expect("thinking template is well-formed")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchKind {
    MovingObject,
    None,
}

/// Parsed search reply. `description` is present exactly when
/// `kind == MovingObject`, and is then non-empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub kind: SearchKind,
    pub description: Option<String>,
}

impl SearchOutcome {
    pub fn none() -> Self {
        SearchOutcome {
            kind: SearchKind::None,
            description: None,
        }
    }

    pub fn moving(description: impl Into<String>) -> Self {
        SearchOutcome {
            kind: SearchKind::MovingObject,
            description: Some(description.into()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictKind {
    Correct,
    Incorrect,
}

/// Parsed verdict reply. A correct verdict carries an explanation, an
/// incorrect one a critique.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictOutcome {
    pub kind: VerdictKind,
    pub explanation: Option<String>,
    pub critique: Option<String>,
}

impl VerdictOutcome {
    pub fn correct(explanation: impl Into<String>) -> Self {
        VerdictOutcome {
            kind: VerdictKind::Correct,
            explanation: Some(explanation.into()),
            critique: None,
        }
    }

    pub fn incorrect(critique: impl Into<String>) -> Self {
        VerdictOutcome {
            kind: VerdictKind::Incorrect,
            explanation: None,
            critique: Some(critique.into()),
        }
    }
}

fn is_decoration(c: char) -> bool {
    c.is_whitespace() || c.is_ascii_punctuation() || matches!(c, '“' | '”' | '‘' | '’' | '«' | '»')
}

fn strip_decoration(s: &str) -> &str {
    s.trim_matches(is_decoration)
}

fn is_no_object_line(line: &str) -> bool {
    strip_decoration(line).eq_ignore_ascii_case(NO_MOVING_OBJECT)
}

/// Length of a leading `Step N:` label (optionally wrapped in `*`/`#`
/// markup), or `None` if the line does not start with one.
fn step_label_len(line: &str) -> Option<usize> {
    let trimmed = line.trim_start_matches(|c: char| c.is_whitespace() || c == '*' || c == '#');
    if !trimmed.get(..4)?.eq_ignore_ascii_case("step") {
        return None;
    }
    let after = trimmed[4..].trim_start();
    let digits = after.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits == 0 {
        return None;
    }
    let tail = after[digits..].trim_start_matches('*');
    let tail = tail.strip_prefix([':', '.', ')'])?;
    let tail = tail.trim_start_matches('*');
    Some(line.len() - tail.len())
}

/// Parses a reply to the search prompt.
///
/// The reply means "nothing to segment" only when its last non-empty line is
/// the no-object sentinel. Otherwise the description is the last non-empty
/// paragraph; if that paragraph is a list of `Step N:` lines, only the last
/// line is kept, without its label. The description is always a substring of
/// the reply.
pub fn parse_search_response(reply: &str) -> Result<SearchOutcome, PromptError> {
    let trimmed = reply.trim();
    if trimmed.is_empty() {
        return Err(PromptError::EmptyReply);
    }
    let last_line = trimmed.lines().rev().find(|l| !l.trim().is_empty()).unwrap_or(trimmed);
    if is_no_object_line(last_line) {
        return Ok(SearchOutcome::none());
    }

    let paragraph = last_paragraph(trimmed);
    let lines: Vec<&str> = paragraph.lines().filter(|l| !l.trim().is_empty()).collect();
    let mut candidate = if lines.iter().any(|l| step_label_len(l).is_some()) {
        *lines.last().expect("paragraph is non-empty")
    } else {
        paragraph
    };
    if let Some(n) = step_label_len(candidate) {
        candidate = &candidate[n..];
    }
    let candidate = candidate.trim();
    let description = if candidate.is_empty() { trimmed } else { candidate };
    Ok(SearchOutcome::moving(description))
}

fn last_paragraph(text: &str) -> &str {
    let mut start = 0;
    let mut offset = 0;
    let mut after_blank = false;
    for line in text.split_inclusive('\n') {
        if line.trim().is_empty() {
            after_blank = true;
        } else if after_blank {
            start = offset;
            after_blank = false;
        }
        offset += line.len();
    }
    text[start..].trim()
}

/// Parses a reply to the thinking prompt.
///
/// The first line that reads `VERDICT: CORRECT` or `VERDICT: INCORRECT`
/// (case-insensitive, ignoring surrounding markup) decides the verdict; the
/// text after it becomes the explanation or critique.
pub fn parse_verdict_response(reply: &str) -> Result<VerdictOutcome, PromptError> {
    if reply.trim().is_empty() {
        return Err(PromptError::EmptyReply);
    }
    let mut offset = 0;
    for line in reply.split_inclusive('\n') {
        let line_end = offset + line.len();
        if let Some((kind, rest_of_line)) = verdict_sentinel(line) {
            let tail = format!("{}{}", rest_of_line, &reply[line_end..]);
            let text = tail.trim_start_matches(is_decoration).trim_end().to_string();
            return Ok(match kind {
                VerdictKind::Correct => VerdictOutcome::correct(text),
                VerdictKind::Incorrect => VerdictOutcome::incorrect(text),
            });
        }
        offset = line_end;
    }
    Err(PromptError::UnparseableVerdict)
}

fn verdict_sentinel(line: &str) -> Option<(VerdictKind, &str)> {
    let body = line.trim_start_matches(is_decoration);
    if !body.get(..7)?.eq_ignore_ascii_case("verdict") {
        return None;
    }
    let after = body[7..].trim_start_matches(|c: char| c.is_whitespace() || c == '*');
    let after = after.strip_prefix(':')?;
    let after = after.trim_start_matches(|c: char| c.is_whitespace() || c == '*');
    let word_len = after.chars().take_while(|c| c.is_ascii_alphabetic()).count();
    let (word, rest) = after.split_at(word_len);
    if word.eq_ignore_ascii_case("correct") {
        Some((VerdictKind::Correct, rest))
    } else if word.eq_ignore_ascii_case("incorrect") {
        Some((VerdictKind::Incorrect, rest))
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn every_template_declares_its_placeholders() {
        for t in [
            PromptTemplate::search(),
            PromptTemplate::deep_thinking(),
            PromptTemplate::refinement(),
        ] {
            t.validate().unwrap();
            for p in t.placeholders {
                assert!(t.referenced().contains(&p.name), "{} declared but unused", p.name);
            }
        }
    }

    #[test]
    fn required_placeholder_without_binding_is_rejected() {
        let err = PromptTemplate::refinement().render(&BTreeMap::new()).unwrap_err();
        assert!(matches!(err, PromptError::MissingBinding { .. }));
    }

    #[test]
    fn bound_values_are_not_re_expanded() {
        let ctx = RefinementContext {
            previous_prompt: "{{critique}}".into(),
            critique: "c".into(),
        };
        let text = render_search_prompt(Some(&ctx));
        assert!(text.contains("Previous text prompt T: {{critique}}"));
    }

    #[test]
    fn search_prompt_is_deterministic() {
        assert_eq!(render_search_prompt(None), render_search_prompt(None));
        assert_eq!(render_thinking_prompt(), render_thinking_prompt());
    }

    #[test]
    fn refinement_block_is_appended_after_the_steps() {
        let ctx = RefinementContext {
            previous_prompt: "A red ball is flying in the air.".into(),
            critique: "mask includes the wall".into(),
        };
        let plain = render_search_prompt(None);
        let refined = render_search_prompt(Some(&ctx));
        assert!(refined.starts_with(&plain));
        let block = &refined[plain.len()..];
        assert!(block.contains("=== REFINEMENT ==="));
        assert!(block.contains("=== END REFINEMENT ==="));
        assert!(block.contains("A red ball is flying in the air."));
        assert!(block.contains("mask includes the wall"));
    }

    #[test]
    fn thinking_prompt_carries_both_sentinels() {
        let text = render_thinking_prompt();
        assert!(text.contains(VERDICT_CORRECT));
        assert!(text.contains(VERDICT_INCORRECT));
    }

    #[test]
    fn no_moving_object_sentinel() {
        assert_eq!(parse_search_response("No moving object.").unwrap(), SearchOutcome::none());
        assert_eq!(parse_search_response("  no MOVING object  \n").unwrap(), SearchOutcome::none());
        assert_eq!(
            parse_search_response("Step 1: a quiet street.\n\n“No moving object.”").unwrap(),
            SearchOutcome::none()
        );
    }

    #[test]
    fn single_sentence_description() {
        let s = "A red ball is flying in the air, in the upper right corner of the frame.";
        assert_eq!(parse_search_response(s).unwrap(), SearchOutcome::moving(s));
    }

    #[test]
    fn step_list_keeps_last_step_without_label() {
        let reply = "Step 1: A park with a dog and a bench.\nStep 5: The dog on the left is running.";
        assert_eq!(
            parse_search_response(reply).unwrap(),
            SearchOutcome::moving("The dog on the left is running.")
        );
        let bold = "**Step 1**: scene\n**Step 5**: The cyclist is riding to the right.";
        assert_eq!(
            parse_search_response(bold).unwrap().description.as_deref(),
            Some("The cyclist is riding to the right.")
        );
    }

    #[test]
    fn last_paragraph_wins() {
        let reply = "I looked at the scene carefully.\nThere is motion blur.\n\nA dancer is spinning in the centre.";
        assert_eq!(
            parse_search_response(reply).unwrap().description.as_deref(),
            Some("A dancer is spinning in the centre.")
        );
    }

    #[test]
    fn no_object_mentioned_mid_reply_is_not_the_sentinel() {
        let reply = "No moving object.\n\nActually, a bird is flying above the tree.";
        assert_eq!(parse_search_response(reply).unwrap().kind, SearchKind::MovingObject);
    }

    #[test]
    fn blank_search_reply_is_an_error() {
        assert_eq!(parse_search_response(" \n\t"), Err(PromptError::EmptyReply));
    }

    #[test]
    fn verdict_correct_with_explanation() {
        let v = parse_verdict_response("VERDICT: CORRECT\nThe dancer's skirt shows motion blur.").unwrap();
        assert_eq!(v, VerdictOutcome::correct("The dancer's skirt shows motion blur."));
    }

    #[test]
    fn verdict_incorrect_with_critique() {
        let v = parse_verdict_response("VERDICT: INCORRECT\nThe mask covers a parked car.").unwrap();
        assert_eq!(v, VerdictOutcome::incorrect("The mask covers a parked car."));
    }

    #[test]
    fn verdict_sentinel_tolerates_case_and_markup() {
        let v = parse_verdict_response("Step 1: ...\n**Verdict: incorrect** - it misses the legs").unwrap();
        assert_eq!(v, VerdictOutcome::incorrect("it misses the legs"));
    }

    #[test]
    fn verdict_without_sentinel_is_unparseable() {
        assert_eq!(
            parse_verdict_response("I think the mask looks fine."),
            Err(PromptError::UnparseableVerdict)
        );
        assert_eq!(
            parse_verdict_response("verdict: probably fine"),
            Err(PromptError::UnparseableVerdict)
        );
    }

    proptest! {
        #[test]
        fn description_is_a_substring_of_the_reply(reply in "[ -~\n]{1,200}") {
            prop_assume!(!reply.trim().is_empty());
            let out = parse_search_response(&reply).unwrap();
            if let Some(d) = out.description {
                prop_assert!(!d.is_empty());
                prop_assert!(reply.contains(&d));
            }
        }

        #[test]
        fn none_requires_a_sentinel_line(reply in "[a-zA-Z .:\n]{1,200}") {
            prop_assume!(!reply.trim().is_empty());
            let has_sentinel = reply.lines().any(is_no_object_line);
            if parse_search_response(&reply).unwrap().kind == SearchKind::None {
                prop_assert!(has_sentinel);
            }
        }

        #[test]
        fn verdict_parsing_is_total(reply in "[ -~\n]{1,200}") {
            match parse_verdict_response(&reply) {
                Ok(v) => match v.kind {
                    VerdictKind::Correct => prop_assert!(v.explanation.is_some() && v.critique.is_none()),
                    VerdictKind::Incorrect => prop_assert!(v.critique.is_some() && v.explanation.is_none()),
                },
                Err(e) => prop_assert!(matches!(e, PromptError::UnparseableVerdict | PromptError::EmptyReply)),
            }
        }
    }
}
