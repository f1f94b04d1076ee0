//! Policy contract and the driver that presents a sample to a policy.

mod baselines;
mod remote;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use baselines::{GreedyForward, NoisyOracle, OraclePolicy};
pub use remote::{RemoteClient, RemoteEndpointConfig, RemotePolicy};

use crate::action_space::{parse_ranked_actions, RankedActions};
use crate::dataset::{Role, Sample};
use crate::prompts::{constrained_zero_shot_prompt, SystemPrompt};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("endpoint returned status {status}: {body}")]
    Endpoint { status: u16, body: String },
    #[error("malformed response: {0}")]
    Response(String),
    #[error("policy failed: {0}")]
    Internal(String),
}

/// Which question a policy is answering.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Scene,
    Prediction,
    Reasoning,
    Action,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatMessage {
    pub role: Role,
    pub text: String,
    /// Attach the scene image to this message.
    pub image: bool,
}

/// Everything a policy sees for one query.
#[derive(Debug)]
pub struct Query<'a> {
    pub sample: &'a Sample,
    pub system: &'a str,
    /// Conversation so far, ending with the user message to answer.
    pub messages: &'a [ChatMessage],
    pub stage: Stage,
}

pub trait Policy: Send + Sync {
    fn name(&self) -> String;

    fn respond(&self, query: &Query<'_>) -> Result<String, PolicyError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QueryMode {
    /// The policy answers all three stages; only the last answer is scored.
    Conversational,
    /// One user message: the constrained prompt with the image.
    SingleShot,
}

impl fmt::Display for QueryMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QueryMode::Conversational => "conversational",
            QueryMode::SingleShot => "single-shot",
        })
    }
}

impl FromStr for QueryMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "conversational" | "conv" => Ok(QueryMode::Conversational),
            "single-shot" | "single" => Ok(QueryMode::SingleShot),
            other => Err(format!("unknown mode `{other}` (conversational|single-shot)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub mode: QueryMode,
    /// Extra user turn asked before the action question.
    pub reasoning_turn: Option<String>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            mode: QueryMode::SingleShot,
            reasoning_turn: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyOutput {
    pub raw_text: String,
    pub actions: RankedActions,
    /// Seconds.
    pub latency: f64,
    pub policy_name: String,
    pub error: Option<String>,
}

impl PolicyOutput {
    pub fn is_degenerate(&self) -> bool {
        self.actions.is_empty()
    }
}

fn ask(
    policy: &dyn Policy,
    sample: &Sample,
    system: &str,
    messages: &mut Vec<ChatMessage>,
    text: &str,
    stage: Stage,
) -> Result<String, PolicyError> {
    let image = messages.is_empty();
    messages.push(ChatMessage {
        role: Role::User,
        text: text.to_string(),
        image,
    });
    let answer = policy.respond(&Query {
        sample,
        system,
        messages,
        stage,
    })?;
    messages.push(ChatMessage {
        role: Role::Assistant,
        text: answer.clone(),
        image: false,
    });
    Ok(answer)
}

fn converse(
    policy: &dyn Policy,
    sample: &Sample,
    system: &str,
    options: &RunOptions,
) -> Result<String, PolicyError> {
    let mut messages = Vec::new();
    let mut questions: Vec<(String, Stage)> = match options.mode {
        QueryMode::Conversational => {
            let q: Vec<&str> = sample.questions().collect();
            if q.len() != 3 {
                return Err(PolicyError::Internal("sample does not have three questions".into()));
            }
            vec![
                (q[0].to_string(), Stage::Scene),
                (q[1].to_string(), Stage::Prediction),
                (q[2].to_string(), Stage::Action),
            ]
        }
        QueryMode::SingleShot => vec![(constrained_zero_shot_prompt().to_string(), Stage::Action)],
    };
    if let Some(r) = &options.reasoning_turn {
        let at = questions.len() - 1;
        questions.insert(at, (r.clone(), Stage::Reasoning));
    }
    let mut last = String::new();
    for (text, stage) in questions {
        last = ask(policy, sample, system, &mut messages, &text, stage)?;
    }
    Ok(last)
}

/// Queries `policy` on `sample`. Failures become degenerate outputs.
pub fn run_policy(policy: &dyn Policy, sample: &Sample, system: &SystemPrompt, options: &RunOptions) -> PolicyOutput {
    let start = Instant::now();
    let result = converse(policy, sample, &system.text, options);
    let latency = start.elapsed().as_secs_f64();
    match result {
        Ok(raw_text) => PolicyOutput {
            actions: parse_ranked_actions(&raw_text),
            raw_text,
            latency,
            policy_name: policy.name(),
            error: None,
        },
        Err(e) => {
            log::warn!("{} failed on {}: {e}", policy.name(), sample.id);
            PolicyOutput {
                raw_text: String::new(),
                actions: RankedActions::empty(),
                latency,
                policy_name: policy.name(),
                error: Some(e.to_string()),
            }
        }
    }
}
