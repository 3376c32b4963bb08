//! The four prompting strategies and their message bundles.
//!
//! Texts live under `templates/v1/` and are embedded at build time. The user
//! message comes first, then the system message, matching the published
//! prompt listing.

use std::fmt;
use std::str::FromStr;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::render::LabeledImage;

pub const TEMPLATE_VERSION: &str = "v1";

/// The four criterion sentences carried by the rubric variants.
pub const RUBRIC_SENTENCES: [&str; 4] = [
    "If the sketches are not out of the image boundary, the labeling sketches receive a 1 score.",
    "If the sketches basically enclosed the object, the labeling sketches receive another 1 score.",
    "If there is no large gap between the sketch and the object in the image, the labeling sketches receive another 1 score.",
    "If the sketches do not overlay the object in an image, the labeling sketches receive another 1 score.",
];

/// Marker opening the output-expectations block in every system text.
pub const OUTPUT_EXPECTATIONS_MARKER: &str = "expectations for your output message";
/// Marker of the task description in every system text.
pub const TASK_DESCRIPTION_MARKER: &str = "your task is to evaluate the labeled image";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptStrategy {
    ZeroShotBasic,
    ZeroShotRubric,
    FewShotBasic,
    FewShotRubric,
}

impl PromptStrategy {
    pub const ALL: [PromptStrategy; 4] = [
        PromptStrategy::ZeroShotBasic,
        PromptStrategy::ZeroShotRubric,
        PromptStrategy::FewShotBasic,
        PromptStrategy::FewShotRubric,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PromptStrategy::ZeroShotBasic => "zero_shot_basic",
            PromptStrategy::ZeroShotRubric => "zero_shot_rubric",
            PromptStrategy::FewShotBasic => "few_shot_basic",
            PromptStrategy::FewShotRubric => "few_shot_rubric",
        }
    }

    pub fn is_few_shot(self) -> bool {
        matches!(
            self,
            PromptStrategy::FewShotBasic | PromptStrategy::FewShotRubric
        )
    }

    pub fn has_rubric(self) -> bool {
        matches!(
            self,
            PromptStrategy::ZeroShotRubric | PromptStrategy::FewShotRubric
        )
    }

    pub fn components(self) -> Vec<Component> {
        let mut c = vec![Component::TaskDescription, Component::OutputExpectations];
        if self.has_rubric() {
            c.push(Component::Rubric);
        }
        if self.is_few_shot() {
            c.push(Component::Example);
        }
        c.push(Component::Input);
        c
    }

    pub fn user_text(self) -> &'static str {
        match self {
            PromptStrategy::ZeroShotBasic => {
                include_str!("../templates/v1/zero_shot_basic.user.txt")
            }
            PromptStrategy::ZeroShotRubric => {
                include_str!("../templates/v1/zero_shot_rubric.user.txt")
            }
            PromptStrategy::FewShotBasic => include_str!("../templates/v1/few_shot_basic.user.txt"),
            PromptStrategy::FewShotRubric => {
                include_str!("../templates/v1/few_shot_rubric.user.txt")
            }
        }
    }

    pub fn system_text(self) -> &'static str {
        match self {
            PromptStrategy::ZeroShotBasic => {
                include_str!("../templates/v1/zero_shot_basic.system.txt")
            }
            PromptStrategy::ZeroShotRubric => {
                include_str!("../templates/v1/zero_shot_rubric.system.txt")
            }
            PromptStrategy::FewShotBasic => {
                include_str!("../templates/v1/few_shot_basic.system.txt")
            }
            PromptStrategy::FewShotRubric => {
                include_str!("../templates/v1/few_shot_rubric.system.txt")
            }
        }
    }
}

impl fmt::Display for PromptStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PromptStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PromptStrategy::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown strategy {s:?}")))
    }
}

/// Building blocks of a prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    TaskDescription,
    OutputExpectations,
    Rubric,
    Example,
    Input,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    System,
}

/// PNG bytes, serialized as base64.
#[derive(Clone, PartialEq, Eq)]
pub struct PngPayload(pub Vec<u8>);

impl fmt::Debug for PngPayload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PngPayload({} bytes)", self.0.len())
    }
}

impl PngPayload {
    pub fn to_base64(&self) -> String {
        B64.encode(&self.0)
    }
}

impl Serialize for PngPayload {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_base64())
    }
}

impl<'de> Deserialize<'de> for PngPayload {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        B64.decode(s.as_bytes())
            .map(PngPayload)
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub text: String,
    pub images: Vec<PngPayload>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub strategy: PromptStrategy,
    pub messages: Vec<Message>,
}

impl PromptBundle {
    pub fn image_count(&self) -> usize {
        self.messages.iter().map(|m| m.images.len()).sum()
    }

    pub fn text_of(&self, role: Role) -> Option<&str> {
        self.messages
            .iter()
            .find(|m| m.role == role)
            .map(|m| m.text.as_str())
    }

    /// SHA-256 over the canonical JSON form.
    pub fn content_hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("bundle serializes");
        hex::encode(Sha256::digest(&json))
    }
}

/// Assemble the messages for one strategy.
pub fn build_prompt(
    strategy: PromptStrategy,
    labeled_image: &LabeledImage,
    example_image: Option<&LabeledImage>,
) -> Result<PromptBundle> {
    let mut images = vec![PngPayload(labeled_image.png_bytes()?)];
    match (strategy.is_few_shot(), example_image) {
        (true, Some(ex)) => images.push(PngPayload(ex.png_bytes()?)),
        (true, None) => {
            return Err(Error::InvalidInput(format!(
                "{strategy} requires an example image"
            )))
        }
        (false, Some(_)) => {
            return Err(Error::InvalidInput(format!(
                "{strategy} does not take an example image"
            )))
        }
        (false, None) => {}
    }
    Ok(PromptBundle {
        strategy,
        messages: vec![
            Message {
                role: Role::User,
                text: strategy.user_text().to_string(),
                images,
            },
            Message {
                role: Role::System,
                text: strategy.system_text().to_string(),
                images: Vec::new(),
            },
        ],
    })
}

/// Components detectable in a built bundle, derived from its texts and
/// attachments rather than from the strategy tag.
pub fn detected_components(bundle: &PromptBundle) -> Vec<Component> {
    let system = bundle.text_of(Role::System).unwrap_or_default();
    let mut c = Vec::new();
    if system.contains(TASK_DESCRIPTION_MARKER) {
        c.push(Component::TaskDescription);
    }
    if system.contains(OUTPUT_EXPECTATIONS_MARKER) {
        c.push(Component::OutputExpectations);
    }
    if RUBRIC_SENTENCES.iter().all(|s| system.contains(s)) {
        c.push(Component::Rubric);
    }
    if bundle.image_count() == 2 {
        c.push(Component::Example);
    }
    if bundle
        .messages
        .iter()
        .any(|m| m.role == Role::User && !m.images.is_empty())
    {
        c.push(Component::Input);
    }
    c
}
