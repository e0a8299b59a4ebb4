use std::borrow::Cow;

use super::GatewayError;
use crate::data_model::PromptId;

pub const PLACEHOLDER: &str = "{lyrics}";

const REGULAR: &str = include_str!("../templates/regular.txt");
const INFORMED: &str = include_str!("../templates/informed.txt");
const INFORMED_EXPRESSIVE: &str = include_str!("../templates/informed_expressive.txt");
const CORRECTED: &str = include_str!("../templates/corrected.txt");
const WELL_INFORMED_ATTR_FIRST: &str = include_str!("../templates/well_informed_attr_first.txt");
const WELL_INFORMED_REASON_FIRST: &str = include_str!("../templates/well_informed_reason_first.txt");
const TRANSLATION: &str = include_str!("../templates/translation.txt");

// The two JSON prompts have no lyrics slot of their own; the lyrics follow
// the final instruction line.
const WELL_INFORMED_ATTR_FIRST_BODY: &str =
    concat!(include_str!("../templates/well_informed_attr_first.txt"), "\n\n{lyrics}");
const WELL_INFORMED_REASON_FIRST_BODY: &str =
    concat!(include_str!("../templates/well_informed_reason_first.txt"), "\n\n{lyrics}");

/// A prompt body with exactly one `{lyrics}` slot.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    pub name: Cow<'static, str>,
    pub prompt_id: Option<PromptId>,
    pub body: Cow<'static, str>,
    pub default_temperature: f64,
}

impl PromptTemplate {
    /// One of the six profiling prompts.
    pub fn builtin(prompt_id: PromptId) -> Self {
        let body = match prompt_id {
            PromptId::Regular => REGULAR,
            PromptId::Informed => INFORMED,
            PromptId::InformedExpressive => INFORMED_EXPRESSIVE,
            PromptId::Corrected => CORRECTED,
            PromptId::WellInformedAttrFirst => WELL_INFORMED_ATTR_FIRST_BODY,
            PromptId::WellInformedReasonFirst => WELL_INFORMED_REASON_FIRST_BODY,
        };
        let default_temperature = match prompt_id {
            PromptId::InformedExpressive | PromptId::WellInformedAttrFirst | PromptId::WellInformedReasonFirst => 0.7,
            _ => 0.0,
        };
        Self {
            name: Cow::Borrowed(prompt_id.as_str()),
            prompt_id: Some(prompt_id),
            body: Cow::Borrowed(body),
            default_temperature,
        }
    }

    pub fn translation() -> Self {
        Self {
            name: Cow::Borrowed("translation"),
            prompt_id: None,
            body: Cow::Borrowed(TRANSLATION),
            default_temperature: 0.0,
        }
    }

    pub fn custom(name: impl Into<String>, body: impl Into<String>, default_temperature: f64) -> Result<Self, GatewayError> {
        let body = body.into();
        let slots = body.matches(PLACEHOLDER).count();
        if slots != 1 {
            return Err(GatewayError::Config(format!(
                "template body must contain exactly one {PLACEHOLDER}, found {slots}"
            )));
        }
        Ok(Self {
            name: Cow::Owned(name.into()),
            prompt_id: None,
            body: Cow::Owned(body),
            default_temperature,
        })
    }

    /// Prompt text exactly as published, before any lyrics slot was added.
    pub fn published_text(prompt_id: Option<PromptId>) -> &'static str {
        match prompt_id {
            None => TRANSLATION,
            Some(PromptId::Regular) => REGULAR,
            Some(PromptId::Informed) => INFORMED,
            Some(PromptId::InformedExpressive) => INFORMED_EXPRESSIVE,
            Some(PromptId::Corrected) => CORRECTED,
            Some(PromptId::WellInformedAttrFirst) => WELL_INFORMED_ATTR_FIRST,
            Some(PromptId::WellInformedReasonFirst) => WELL_INFORMED_REASON_FIRST,
        }
    }
}

/// Substitute `lyrics` into the slot. Nothing else in the body changes.
pub fn render_prompt(template: &PromptTemplate, lyrics: &str) -> Result<String, GatewayError> {
    if lyrics.trim().is_empty() {
        return Err(GatewayError::EmptyInput);
    }
    let (before, after) = template
        .body
        .split_once(PLACEHOLDER)
        .ok_or_else(|| GatewayError::Config(format!("template `{}` has no {PLACEHOLDER} slot", template.name)))?;
    let mut out = String::with_capacity(template.body.len() + lyrics.len());
    out.push_str(before);
    out.push_str(lyrics);
    out.push_str(after);
    Ok(out)
}
