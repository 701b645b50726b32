//! Prompt construction for profile generation, hard-negative generation and
//! the hybrid (embedding-carrying) variant, plus response parsing.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::dataset::Profile;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    UserProfile,
    ItemProfile,
    HardNegative,
    Hybrid,
}

impl PromptKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PromptKind::UserProfile => "user_profile",
            PromptKind::ItemProfile => "item_profile",
            PromptKind::HardNegative => "hard_negative",
            PromptKind::Hybrid => "hybrid",
        }
    }
}

/// A system instruction plus a JSON payload, ready for a chat endpoint.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub kind: PromptKind,
    pub system: String,
    pub payload: String,
}

impl PromptBundle {
    fn new(kind: PromptKind, system: &str, payload: &Value) -> Self {
        Self {
            kind,
            system: system.to_string(),
            // serde_json::Value serializes maps with sorted keys
            payload: serde_json::to_string(payload).expect("json value"),
        }
    }

    pub fn payload_json(&self) -> Result<Value> {
        Ok(serde_json::from_str(&self.payload)?)
    }

    /// Canonical byte form used for hashing and caching.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.system.len() + self.payload.len() + 16);
        out.extend_from_slice(self.kind.as_str().as_bytes());
        out.push(0);
        out.extend_from_slice(self.system.as_bytes());
        out.push(0);
        out.extend_from_slice(self.payload.as_bytes());
        out
    }
}

pub const ITEM_PROFILE_SYSTEM: &str = "You will help me summarize what kinds of users would enjoy a business or product.\n\
The input is a JSON object with the following attributes:\n\
{\n    \"title\": \"the name of the business\" (\"None\" when unknown),\n    \"description\": \"attribute information about the business\" (\"None\" when unknown),\n    \"review\": [\"reviews written by users about the business\"] (\"None\" when there are no reviews)\n}\n\
Please provide your answer in JSON format, following this structure:\n\
{\n    \"summarization\": \"a description of what types of users will like this business\",\n    \"reasoning\": \"briefly explain your reasoning for the summarization\"\n}";

pub const USER_PROFILE_SYSTEM: &str = "You will help me summarize the preferences of a user.\n\
The input is a JSON object with the following attributes:\n\
{\n    \"reviews\": [\"reviews the user wrote\"],\n    \"interacted_items\": [\"profiles of the businesses the user interacted with\"]\n}\n\
Please provide your answer in JSON format, following this structure:\n\
{\n    \"summarization\": \"a description of what types of businesses this user is likely to enjoy\",\n    \"reasoning\": \"briefly explain your reasoning for the summarization\"\n}";

/// System prompt for hard-negative generation, reproduced verbatim.
pub const HARD_NEGATIVE_SYSTEM: &str = "You will act as an assistant to help me generate a hard negative sample for a user. \n\
Hard negative samples that are very similar to the user's historical preferences or interaction records but are actually not of interest to the user or do not meet the user's needs.\n\
Below are the instructions:\n\
1. User information will be described in JSON format, containing the following attributes:\n\
Each interacted business will be described in JSON format, with the following attributes:\n\
{\n    \"title\": \"the name of the business\", (if there is no business, I will set this value to \"None\")\n    \"description\": \"a description of what types of users will like this business\",\n    \"review\": \"the user's review on the business\" (if there is no review, I will set this value to \"None\")\n}\n\
Response:\n\
Please provide your answer in JSON format, following this structure:\n\
{\n    \"hard negative item\": \"The name of the generated negative sample\" (if unable to generate, set this value to \"None\"),\n    \"reasoning\": \"briefly explain your reasoning for the summarization\"\n}";

const NONE: &str = "None";

fn or_none(s: Option<&str>) -> Value {
    match s {
        Some(s) if !s.trim().is_empty() => Value::String(s.to_string()),
        _ => Value::String(NONE.into()),
    }
}

/// Item-profile request built from title, attributes and reviews.
pub fn build_item_prompt(
    title: Option<&str>,
    attributes: Option<&str>,
    reviews: &[String],
) -> PromptBundle {
    let review = if reviews.is_empty() {
        Value::String(NONE.into())
    } else {
        json!(reviews)
    };
    let payload = json!({
        "title": or_none(title),
        "description": or_none(attributes),
        "review": review,
    });
    PromptBundle::new(PromptKind::ItemProfile, ITEM_PROFILE_SYSTEM, &payload)
}

/// User-profile request built from the user's reviews and the profiles of
/// the items they interacted with.
pub fn build_user_prompt(reviews: &[String], item_profiles: &[&Profile]) -> PromptBundle {
    let items: Vec<&str> = item_profiles.iter().map(|p| p.text.as_str()).collect();
    let payload = json!({
        "reviews": reviews,
        "interacted_items": items,
    });
    PromptBundle::new(PromptKind::UserProfile, USER_PROFILE_SYSTEM, &payload)
}

/// Hard-negative request for one interaction pair (raw ids).
pub fn build_hard_negative_prompt(
    pair: (&str, &str),
    user_profile: Option<&Profile>,
    item_profile: Option<&Profile>,
) -> Result<PromptBundle> {
    let user_profile = user_profile
        .ok_or_else(|| Error::InvalidArgument(format!("missing profile for user {:?}", pair.0)))?;
    let item_profile = item_profile
        .ok_or_else(|| Error::InvalidArgument(format!("missing profile for item {:?}", pair.1)))?;
    let payload = json!({
        "pair": {"user": pair.0, "item": pair.1},
        "user_profile": user_profile.text,
        "item_profile": item_profile.text,
    });
    Ok(PromptBundle::new(
        PromptKind::HardNegative,
        HARD_NEGATIVE_SYSTEM,
        &payload,
    ))
}

/// Embedding rendered as a bracketed list of 4-decimal numbers.
pub fn serialize_embedding(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.4}")).collect();
    format!("[{}]", parts.join(", "))
}

/// Instruction plus a query where the raw ids are replaced by serialized
/// collaborative embeddings next to the two profile texts.
pub fn build_hybrid_prompt(
    instruction: &str,
    user_embedding: &[f64],
    user_profile: &Profile,
    item_embedding: &[f64],
    item_profile: &Profile,
) -> PromptBundle {
    let payload = json!({
        "user_embedding": serialize_embedding(user_embedding),
        "user_profile": user_profile.text,
        "item_embedding": serialize_embedding(item_embedding),
        "item_profile": item_profile.text,
    });
    PromptBundle::new(PromptKind::Hybrid, instruction, &payload)
}

/// Parsed hard-negative completion. `item` is `None` when the model
/// answered `"None"`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HardNegativeResponse {
    pub item: Option<String>,
    pub reasoning: String,
}

/// Extracts the first JSON object in a completion, tolerating code fences
/// and surrounding prose.
fn extract_object(raw: &str) -> Option<&str> {
    let start = raw.find('{')?;
    let end = raw.rfind('}')?;
    (end > start).then(|| &raw[start..=end])
}

pub fn parse_hard_negative_response(raw: &str) -> Result<HardNegativeResponse> {
    let malformed = |msg: String| Error::MalformedResponse {
        msg,
        raw: raw.to_string(),
    };
    let body = extract_object(raw).ok_or_else(|| malformed("no JSON object".into()))?;
    let value: Value = serde_json::from_str(body).map_err(|e| malformed(e.to_string()))?;
    let item = match value.get("hard negative item") {
        Some(Value::String(s)) => s.trim().to_string(),
        Some(Value::Null) => NONE.to_string(),
        Some(other) => return Err(malformed(format!("unexpected item value {other}"))),
        None => return Err(malformed("missing \"hard negative item\"".into())),
    };
    let reasoning = match value.get("reasoning") {
        Some(Value::String(s)) => s.clone(),
        _ => String::new(),
    };
    let item = if item.is_empty() || item.eq_ignore_ascii_case(NONE) {
        None
    } else {
        Some(item)
    };
    Ok(HardNegativeResponse { item, reasoning })
}

/// Text of a profile completion: the `summarization` field when the model
/// answered in the requested JSON shape, otherwise the trimmed raw text.
pub(crate) fn profile_text(raw: &str) -> String {
    extract_object(raw)
        .and_then(|body| serde_json::from_str::<Value>(body).ok())
        .and_then(|v| {
            v.get("summarization")
                .and_then(Value::as_str)
                .map(str::to_string)
        })
        .unwrap_or_else(|| raw.trim().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ProfileKind;

    #[test]
    fn missing_title_becomes_none() {
        let p = build_item_prompt(None, Some("jazz bar"), &[]);
        let v = p.payload_json().unwrap();
        assert_eq!(v["title"], "None");
        assert_eq!(v["review"], "None");
        assert_eq!(v["description"], "jazz bar");
    }

    #[test]
    fn item_reviews_are_kept() {
        let reviews = vec!["great".to_string(), "loud".to_string()];
        let v = build_item_prompt(Some("Blue Note"), None, &reviews)
            .payload_json()
            .unwrap();
        assert_eq!(v["review"], json!(["great", "loud"]));
        assert_eq!(v["description"], "None");
    }

    #[test]
    fn user_prompt_payloads() {
        let empty = build_user_prompt(&[], &[]);
        assert_eq!(empty.payload_json().unwrap()["reviews"], json!([]));
        let profiles: Vec<Profile> = (0..3)
            .map(|i| Profile::new(ProfileKind::Item, i.to_string(), format!("profile {i}")))
            .collect();
        let refs: Vec<&Profile> = profiles.iter().collect();
        let p = build_user_prompt(&["ok".into()], &refs);
        assert_eq!(
            p.payload_json().unwrap()["interacted_items"]
                .as_array()
                .unwrap()
                .len(),
            3
        );
        assert_eq!(p, build_user_prompt(&["ok".into()], &refs));
    }

    #[test]
    fn hard_negative_prompt_contract() {
        let pu = Profile::new(ProfileKind::User, "u1", "loves sushi");
        let pv = Profile::new(ProfileKind::Item, "i2", "sushi bar");
        let p = build_hard_negative_prompt(("u1", "i2"), Some(&pu), Some(&pv)).unwrap();
        assert!(p
            .system
            .contains("similar to the user's historical preferences"));
        assert!(p.system.contains("\"hard negative item\""));
        let v = p.payload_json().unwrap();
        assert_eq!(v["user_profile"], "loves sushi");
        assert_eq!(v["item_profile"], "sushi bar");
        assert_eq!(v["pair"]["user"], "u1");
        assert!(build_hard_negative_prompt(("u1", "i2"), None, Some(&pv)).is_err());
    }

    #[test]
    fn none_response_has_no_item() {
        let r = parse_hard_negative_response(
            r#"{"hard negative item":"None","reasoning":"nothing fits"}"#,
        )
        .unwrap();
        assert_eq!(r.item, None);
        assert_eq!(r.reasoning, "nothing fits");
    }

    #[test]
    fn fenced_response_parses() {
        let raw =
            "```json\n{\"hard negative item\": \"Ramen shop\", \"reasoning\": \"noodles\"}\n```";
        assert_eq!(
            parse_hard_negative_response(raw).unwrap().item.as_deref(),
            Some("Ramen shop")
        );
    }

    #[test]
    fn malformed_response_keeps_raw_text() {
        match parse_hard_negative_response("I cannot help with {that") {
            Err(Error::MalformedResponse { raw, .. }) => {
                assert_eq!(raw, "I cannot help with {that")
            }
            other => panic!("expected malformed response, got {other:?}"),
        }
    }

    #[test]
    fn embedding_serialization_rounds_to_four_places() {
        assert_eq!(serialize_embedding(&[0.12345, -1.0]), "[0.1235, -1.0000]");
    }

    #[test]
    fn hybrid_prompt_contains_profiles_not_ids() {
        let pu = Profile::new(ProfileKind::User, "u1", "loves sushi");
        let pv = Profile::new(ProfileKind::Item, "i2", "sushi bar");
        let p = build_hybrid_prompt(
            "generate a hard negative sample",
            &[0.5, 0.25],
            &pu,
            &[1.0, 0.0],
            &pv,
        );
        assert_eq!(p.system, "generate a hard negative sample");
        assert!(p.payload.contains("loves sushi") && p.payload.contains("sushi bar"));
        assert!(!p.payload.contains("u1"));
        let v = p.payload_json().unwrap();
        assert_eq!(v["user_embedding"], "[0.5000, 0.2500]");
        assert_eq!(
            p,
            build_hybrid_prompt(
                "generate a hard negative sample",
                &[0.5, 0.25],
                &pu,
                &[1.0, 0.0],
                &pv
            )
        );
    }

    #[test]
    fn profile_text_prefers_summarization() {
        assert_eq!(
            profile_text(r#"{"summarization":"fans of jazz","reasoning":"x"}"#),
            "fans of jazz"
        );
        assert_eq!(profile_text("  plain words \n"), "plain words");
    }
}
