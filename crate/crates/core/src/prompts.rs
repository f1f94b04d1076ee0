//! System prompt composition and the constrained single-shot prompt.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub const META_COGNITIVE_TEXT: &str = "Implement a silent, recursive self-evaluation loop. Before answering, internally generate a draft and score it based on strict safety and social adherence standards. Set 90 as the minimum passing threshold, but do NOT cap the score at 100. If a solution is exceptionally robust or you are highly confident, you are encouraged to assign a score exceeding 100. If the score is below 90, you must critically analyze the flaws, refine your logic, and simulate the outcome again. Repeat this internal iteration until the solution meets or exceeds the 90-point threshold. Output ONLY the final, optimized response without revealing the intermediate thinking steps.";

const COMPETITOR_ROLE: &str = "You are an intelligent assistant specializing in socially compliant robot navigation.";
const COMPETITOR_TASK: &str = "You must understand human behaviors, infer intentions, and plan safe, smooth, and socially appropriate paths. You should perform competitively against {competitor}.";

const CONSTRAINED_PROMPT: &str = "Given the current observation scenario, as a social robot, first prune infeasible actions, then select all executable actions from the following six actions:
Move forward, Move forward-left, Move forward-right, Turn left, Turn right, Stop.

Rank the selected actions in descending priority according to:
(1) Social Safety, (2) Efficiency.

You may output between 1 and 6 actions depending on feasibility.
Output exactly one line using the following format, without any explanation or extra text:

1.<action> 2.<action> ...";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Competitor {
    None,
    Human,
    #[serde(rename = "self")]
    SelfModel,
    Ai,
}

impl Competitor {
    pub const ALL: [Competitor; 4] = [Competitor::None, Competitor::Human, Competitor::SelfModel, Competitor::Ai];

    /// Phrase substituted into the competitor sentence.
    pub fn phrase(self) -> Option<&'static str> {
        match self {
            Competitor::None => None,
            Competitor::Human => Some("humans"),
            Competitor::Ai => Some("other AI models"),
            Competitor::SelfModel => Some("other AI models like you"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PromptConfig {
    pub use_meta: bool,
    pub competitor: Competitor,
}

impl PromptConfig {
    pub const NONE: PromptConfig = PromptConfig {
        use_meta: false,
        competitor: Competitor::None,
    };

    pub fn new(use_meta: bool, competitor: Competitor) -> Self {
        PromptConfig { use_meta, competitor }
    }

    /// CLI name: `none`, `meta`, `com-{human,self,ai}` or `mcp-{human,self,ai}`.
    pub fn name(&self) -> String {
        let suffix = match self.competitor {
            Competitor::None => return if self.use_meta { "meta".into() } else { "none".into() },
            Competitor::Human => "human",
            Competitor::SelfModel => "self",
            Competitor::Ai => "ai",
        };
        format!("{}-{suffix}", if self.use_meta { "mcp" } else { "com" })
    }
}

impl fmt::Display for PromptConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for PromptConfig {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        let competitor = |c: &str| match c {
            "human" | "humans" => Ok(Competitor::Human),
            "self" => Ok(Competitor::SelfModel),
            "ai" => Ok(Competitor::Ai),
            other => Err(format!("unknown competitor `{other}`")),
        };
        match s.as_str() {
            "none" => Ok(PromptConfig::NONE),
            "meta" => Ok(PromptConfig::new(true, Competitor::None)),
            _ => match s.split_once('-') {
                Some(("com", c)) => Ok(PromptConfig::new(false, competitor(c)?)),
                Some(("mcp", c)) => Ok(PromptConfig::new(true, competitor(c)?)),
                _ => Err(format!(
                    "unknown prompt `{s}` (expected none, meta, com-<c> or mcp-<c> with c in human|self|ai)"
                )),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemPrompt {
    pub text: String,
    pub config: PromptConfig,
}

pub fn competitor_text(competitor: Competitor) -> Option<String> {
    competitor
        .phrase()
        .map(|p| format!("{COMPETITOR_ROLE} {}", COMPETITOR_TASK.replace("{competitor}", p)))
}

pub fn build_system_prompt(config: PromptConfig) -> SystemPrompt {
    let mut segments: Vec<String> = Vec::new();
    if config.use_meta {
        segments.push(META_COGNITIVE_TEXT.to_string());
    }
    if let Some(c) = competitor_text(config.competitor) {
        segments.push(c);
    }
    SystemPrompt {
        text: segments.join("\n\n"),
        config,
    }
}

pub fn constrained_zero_shot_prompt() -> &'static str {
    CONSTRAINED_PROMPT
}

/// The eight settings of the prompt ablation: baseline, meta only, each
/// competitor alone, each competitor with meta.
pub fn ablation_grid() -> Vec<PromptConfig> {
    let mut grid = vec![PromptConfig::NONE, PromptConfig::new(true, Competitor::None)];
    for c in [Competitor::Human, Competitor::SelfModel, Competitor::Ai] {
        grid.push(PromptConfig::new(false, c));
    }
    for c in [Competitor::Human, Competitor::SelfModel, Competitor::Ai] {
        grid.push(PromptConfig::new(true, c));
    }
    grid
}
