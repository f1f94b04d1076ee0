//! Benchmark samples: three-stage conversations annotated by the oracle,
//! corpus building, seeded splitting and JSONL persistence.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::action_space::{format_ranked_actions, RankedActions};
use crate::pedestrian_sim::{describe_predictions, predict_trajectories, SfmParams};
use crate::ranking_oracle::{rank_actions, OracleError, RolloutConfig};
use crate::scenario::{
    classify_difficulty, describe_scene, generate_scene, render_topdown, scene_extent, Difficulty,
    DifficultyLevel, Raster, RenderError, ScenarioError, Scene,
};
use crate::seeding::SplitMix64;

pub const FORMAT_VERSION: u32 = 1;

pub const SCENE_QUESTION: &str =
    "Describe the scene in front of the robot: the pedestrians, the obstacles and the routes available.";
pub const PREDICTION_QUESTION: &str = "How will the pedestrians move over the next two seconds?";
pub const ACTION_QUESTION: &str = "Which actions can the robot execute now? List every executable action, highest priority first, as 1.<action> 2.<action> ...";

pub const RENDER_PIXELS_PER_METER: u32 = 10;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: field `{field}`: {message}")]
    Line { line: usize, field: String, message: String },
    #[error("invalid difficulty mix: {0}")]
    InvalidMix(String),
    #[error("invalid split: test_count {test_count} of {total} samples")]
    InvalidSplit { test_count: usize, total: usize },
    #[error("corpus must contain at least one sample")]
    EmptyCorpus,
}

fn line_err(line: usize, field: &str, message: impl ToString) -> DatasetError {
    DatasetError::Line {
        line,
        field: field.to_string(),
        message: message.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversationTurn {
    pub role: Role,
    pub text: String,
}

impl ConversationTurn {
    pub fn user(text: impl Into<String>) -> Self {
        ConversationTurn {
            role: Role::User,
            text: text.into(),
        }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        ConversationTurn {
            role: Role::Assistant,
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub difficulty: Difficulty,
    pub scene: Scene,
    #[serde(rename = "image")]
    pub image_path: Option<String>,
    pub turns: Vec<ConversationTurn>,
    pub gt_actions: RankedActions,
}

impl Sample {
    /// The three user questions in order.
    pub fn questions(&self) -> impl Iterator<Item = &str> {
        self.turns.iter().filter(|t| t.role == Role::User).map(|t| t.text.as_str())
    }

    /// Checks turn structure and the final answer against `gt_actions`.
    pub fn check_structure(&self) -> Result<(), (&'static str, String)> {
        if self.turns.len() != 6 {
            return Err(("turns", format!("expected 6 turns, found {}", self.turns.len())));
        }
        for (k, t) in self.turns.iter().enumerate() {
            let expected = if k % 2 == 0 { Role::User } else { Role::Assistant };
            if t.role != expected {
                return Err(("turns", format!("turn {k} should be {expected:?}")));
            }
        }
        if self.gt_actions.is_empty() {
            return Err(("gt_actions", "ground-truth actions are empty".into()));
        }
        let formatted = format_ranked_actions(&self.gt_actions).map_err(|e| ("gt_actions", e.to_string()))?;
        if self.turns[5].text != formatted {
            return Err((
                "turns",
                format!("final answer `{}` does not match gt_actions `{formatted}`", self.turns[5].text),
            ));
        }
        Ok(())
    }
}

pub fn sample_id(seed: u64) -> String {
    format!("scene-{seed:06}")
}

pub fn image_relative_path(id: &str) -> String {
    format!("images/{id}.ppm")
}

/// Annotates an existing scene.
pub fn sample_from_scene(
    id: String,
    scene: Scene,
    config: &RolloutConfig,
    params: &SfmParams,
) -> Result<Sample, DatasetError> {
    let trajs = predict_trajectories(&scene, config.horizon, params).map_err(OracleError::from)?;
    let gt = rank_actions(&scene, config, params)?;
    let answer = format_ranked_actions(&gt).expect("oracle output is never empty");
    let turns = vec![
        ConversationTurn::user(SCENE_QUESTION),
        ConversationTurn::assistant(describe_scene(&scene)),
        ConversationTurn::user(PREDICTION_QUESTION),
        ConversationTurn::assistant(describe_predictions(&trajs, &scene)),
        ConversationTurn::user(ACTION_QUESTION),
        ConversationTurn::assistant(answer),
    ];
    Ok(Sample {
        image_path: Some(image_relative_path(&id)),
        id,
        difficulty: classify_difficulty(&scene),
        scene,
        turns,
        gt_actions: gt,
    })
}

pub fn build_sample(
    seed: u64,
    target: Option<DifficultyLevel>,
    config: &RolloutConfig,
    params: &SfmParams,
) -> Result<Sample, DatasetError> {
    let scene = generate_scene(seed, target)?;
    sample_from_scene(sample_id(seed), scene, config, params)
}

/// Top-down image used for a sample, sized to cover the whole scene.
pub fn render_sample_image(scene: &Scene) -> Result<Raster, RenderError> {
    let extent = scene_extent(scene).ceil() + 1.0;
    render_topdown(scene, RENDER_PIXELS_PER_METER, extent)
}

/// Proportions of Easy, Medium and Difficult samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DifficultyMix(pub [f64; 3]);

impl Default for DifficultyMix {
    fn default() -> Self {
        DifficultyMix([29.0 / 79.0, 29.0 / 79.0, 21.0 / 79.0])
    }
}

impl DifficultyMix {
    pub fn new(p: [f64; 3]) -> Result<Self, DatasetError> {
        if p.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(DatasetError::InvalidMix("proportions must be non-negative".into()));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(DatasetError::InvalidMix(format!("proportions sum to {sum}, not 1")));
        }
        Ok(DifficultyMix(p))
    }

    /// Per-level counts by largest remainder; ties go to the easier level.
    pub fn counts(&self, n: usize) -> [usize; 3] {
        let exact: Vec<f64> = self.0.iter().map(|p| p * n as f64).collect();
        let mut counts = [0usize; 3];
        for (c, e) in counts.iter_mut().zip(&exact) {
            *c = e.floor() as usize;
        }
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
        let mut left = n - counts.iter().sum::<usize>();
        for &k in order.iter().cycle() {
            if left == 0 {
                break;
            }
            counts[k] += 1;
            left -= 1;
        }
        counts
    }
}

impl std::str::FromStr for DifficultyMix {
    type Err = DatasetError;

    /// `e,m,d` weights, normalized.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| DatasetError::InvalidMix(e.to_string()))?;
        let [e, m, d] = parts[..] else {
            return Err(DatasetError::InvalidMix("expected three comma-separated weights".into()));
        };
        let sum = e + m + d;
        if !(sum > 0.0) {
            return Err(DatasetError::InvalidMix("weights must sum to a positive value".into()));
        }
        DifficultyMix::new([e / sum, m / sum, d / sum])
    }
}

/// Builds `n_total` samples with seeds `base_seed + i`; levels are assigned
/// in blocks (Easy, Medium, Difficult) following `mix`.
pub fn build_corpus(
    n_total: usize,
    base_seed: u64,
    mix: &DifficultyMix,
    config: &RolloutConfig,
    params: &SfmParams,
) -> Result<Vec<Sample>, DatasetError> {
    if n_total == 0 {
        return Err(DatasetError::EmptyCorpus);
    }
    let counts = mix.counts(n_total);
    let levels: Vec<DifficultyLevel> = DifficultyLevel::ALL
        .iter()
        .zip(counts)
        .flat_map(|(l, c)| std::iter::repeat_n(*l, c))
        .collect();
    levels
        .par_iter()
        .enumerate()
        .map(|(i, level)| build_sample(base_seed.wrapping_add(i as u64), Some(*level), config, params))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
    pub split_seed: u64,
}

/// Ids selected for the test set: a partial Fisher-Yates shuffle of the
/// sorted ids driven by SplitMix64.
pub fn select_test_ids(ids: &[&str], test_count: usize, seed: u64) -> Result<HashSet<String>, DatasetError> {
    if test_count == 0 || test_count >= ids.len() {
        return Err(DatasetError::InvalidSplit {
            test_count,
            total: ids.len(),
        });
    }
    let mut sorted: Vec<&str> = ids.to_vec();
    sorted.sort_unstable();
    let mut rng = SplitMix64::new(seed);
    for i in 0..test_count {
        let j = i + rng.below((sorted.len() - i) as u64) as usize;
        sorted.swap(i, j);
    }
    Ok(sorted[..test_count].iter().map(|s| s.to_string()).collect())
}

/// Splits preserving the input order within each part.
pub fn split(samples: Vec<Sample>, test_count: usize, seed: u64) -> Result<DatasetSplit, DatasetError> {
    let ids: Vec<&str> = samples.iter().map(|s| s.id.as_str()).collect();
    let test_ids = select_test_ids(&ids, test_count, seed)?;
    let (test, train) = samples.into_iter().partition(|s| test_ids.contains(&s.id));
    Ok(DatasetSplit {
        train,
        test,
        split_seed: seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format_version: u32,
    pub rollout_config: RolloutConfig,
    pub sfm_params: SfmParams,
}

impl DatasetHeader {
    pub fn new(rollout_config: RolloutConfig, sfm_params: SfmParams) -> Self {
        DatasetHeader {
            format_version: FORMAT_VERSION,
            rollout_config,
            sfm_params,
        }
    }
}

impl Default for DatasetHeader {
    fn default() -> Self {
        DatasetHeader::new(RolloutConfig::default(), SfmParams::default())
    }
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn to_jsonl(header: &DatasetHeader, samples: &[Sample]) -> String {
    let mut out = serde_json::to_string(header).expect("header serializes");
    out.push('\n');
    for s in samples {
        out.push_str(&serde_json::to_string(s).expect("sample serializes"));
        out.push('\n');
    }
    out
}

pub fn save_jsonl(path: &Path, header: &DatasetHeader, samples: &[Sample]) -> Result<(), DatasetError> {
    write_atomic(path, to_jsonl(header, samples).as_bytes())?;
    Ok(())
}

fn field<T: serde::de::DeserializeOwned>(obj: &mut serde_json::Map<String, Value>, name: &str, line: usize) -> Result<T, DatasetError> {
    let v = obj.remove(name).ok_or_else(|| line_err(line, name, "missing"))?;
    serde_json::from_value(v).map_err(|e| line_err(line, name, e))
}

fn parse_sample(text: &str, line: usize) -> Result<Sample, DatasetError> {
    let value: Value = serde_json::from_str(text).map_err(|e| line_err(line, "<json>", e))?;
    let Value::Object(mut obj) = value else {
        return Err(line_err(line, "<json>", "expected an object"));
    };
    let sample = Sample {
        id: field(&mut obj, "id", line)?,
        difficulty: field(&mut obj, "difficulty", line)?,
        scene: field(&mut obj, "scene", line)?,
        image_path: match obj.remove("image") {
            None | Some(Value::Null) => None,
            Some(v) => Some(serde_json::from_value(v).map_err(|e| line_err(line, "image", e))?),
        },
        turns: field(&mut obj, "turns", line)?,
        gt_actions: field(&mut obj, "gt_actions", line)?,
    };
    if let Some(extra) = obj.keys().next() {
        return Err(line_err(line, extra, "unknown field"));
    }
    sample
        .check_structure()
        .map_err(|(f, m)| line_err(line, f, m))?;
    Ok(sample)
}

/// Parses a dataset file body. Line numbers in errors are 1-based.
pub fn parse_jsonl(text: &str) -> Result<(DatasetHeader, Vec<Sample>), DatasetError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = lines.next().ok_or_else(|| line_err(1, "<header>", "empty file"))?;
    let header: DatasetHeader = serde_json::from_str(first).map_err(|e| line_err(1, "<header>", e))?;
    if header.format_version != FORMAT_VERSION {
        return Err(line_err(1, "format_version", format!("unsupported version {}", header.format_version)));
    }
    let mut samples = Vec::new();
    let mut seen = HashSet::new();
    for (k, text) in lines {
        let sample = parse_sample(text, k + 1)?;
        if !seen.insert(sample.id.clone()) {
            return Err(line_err(k + 1, "id", format!("duplicate id `{}`", sample.id)));
        }
        samples.push(sample);
    }
    Ok((header, samples))
}

pub fn load_jsonl(path: &Path) -> Result<(DatasetHeader, Vec<Sample>), DatasetError> {
    parse_jsonl(&fs::read_to_string(path)?)
}

/// Re-runs classification and the oracle under the header configuration.
/// Line numbers assume the layout written by [`save_jsonl`].
pub fn revalidate(header: &DatasetHeader, samples: &[Sample]) -> Result<(), DatasetError> {
    samples.par_iter().enumerate().try_for_each(|(k, s)| {
        let line = k + 2;
        if classify_difficulty(&s.scene) != s.difficulty {
            return Err(line_err(line, "difficulty", "does not match the scene"));
        }
        let gt = rank_actions(&s.scene, &header.rollout_config, &header.sfm_params)?;
        if gt != s.gt_actions {
            return Err(line_err(
                line,
                "gt_actions",
                format!("oracle now gives `{}`", format_ranked_actions(&gt).unwrap_or_default()),
            ));
        }
        Ok(())
    })
}

/// Hex SHA-256 of a file's bytes.
pub fn dataset_hash(path: &Path) -> Result<String, DatasetError> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose2D;
    use crate::scenario::tests::open_area;

    fn defaults() -> (RolloutConfig, SfmParams) {
        (RolloutConfig::default(), SfmParams::default())
    }

    #[test]
    fn sample_structure() {
        let (c, p) = defaults();
        let s = build_sample(3, Some(DifficultyLevel::Medium), &c, &p).unwrap();
        assert_eq!(s.turns.len(), 6);
        assert!(s.check_structure().is_ok());
        assert_eq!(s.difficulty.level, DifficultyLevel::Medium);
        assert_eq!(s.questions().count(), 3);
        assert_eq!(s.image_path.as_deref(), Some("images/scene-000003.ppm"));
    }

    #[test]
    fn empty_scene_answer() {
        let (c, p) = defaults();
        let scene = Scene::new(Pose2D::new(0.0, 0.0, 0.0), 0.3, vec![], vec![], open_area(8.0), 1, 0).unwrap();
        let s = sample_from_scene("empty".into(), scene, &c, &p).unwrap();
        assert!(s.turns[5].text.starts_with("1.Move forward "));
    }

    #[test]
    fn mix_counts() {
        let mix = DifficultyMix::default();
        assert_eq!(mix.counts(79), [29, 29, 21]);
        let c = mix.counts(789);
        assert_eq!(c.iter().sum::<usize>(), 789);
        for (k, p) in mix.0.iter().enumerate() {
            assert!((c[k] as f64 - p * 789.0).abs() <= 1.0);
        }
        assert_eq!(DifficultyMix([1.0, 0.0, 0.0]).counts(1), [1, 0, 0]);
        assert_eq!("1,1,2".parse::<DifficultyMix>().unwrap().0, [0.25, 0.25, 0.5]);
        assert!("1,1".parse::<DifficultyMix>().is_err());
        assert!(DifficultyMix::new([0.5, 0.6, -0.1]).is_err());
    }

    #[test]
    fn split_boundaries() {
        let ids: Vec<String> = (0..10).map(|i| format!("s{i}")).collect();
        let refs: Vec<&str> = ids.iter().map(|s| s.as_str()).collect();
        assert_eq!(select_test_ids(&refs, 9, 1).unwrap().len(), 9);
        assert!(select_test_ids(&refs, 10, 1).is_err());
        assert!(select_test_ids(&refs, 0, 1).is_err());
        assert_eq!(select_test_ids(&refs, 3, 5).unwrap(), select_test_ids(&refs, 3, 5).unwrap());
        let mut shuffled = refs.clone();
        shuffled.reverse();
        assert_eq!(select_test_ids(&shuffled, 3, 5).unwrap(), select_test_ids(&refs, 3, 5).unwrap());
    }

    #[test]
    fn jsonl_errors_name_line_and_field() {
        let (c, p) = defaults();
        let s = build_sample(1, None, &c, &p).unwrap();
        let header = DatasetHeader::default();
        let good = to_jsonl(&header, &[s.clone(), build_sample(2, None, &c, &p).unwrap()]);
        let (h, back) = parse_jsonl(&good).unwrap();
        assert_eq!(h, header);
        assert_eq!(back[0], s);

        let mut short = s.clone();
        short.turns.pop();
        let text = to_jsonl(&header, &[s.clone(), short]);
        match parse_jsonl(&text) {
            Err(DatasetError::Line { line, field, .. }) => assert_eq!((line, field.as_str()), (3, "turns")),
            other => panic!("{other:?}"),
        }

        let mut wrong = s.clone();
        wrong.turns[5].text = "1.Stop".into();
        if wrong.gt_actions.as_slice() != [crate::action_space::Action::Stop] {
            assert!(matches!(
                parse_jsonl(&to_jsonl(&header, &[wrong])),
                Err(DatasetError::Line { line: 2, .. })
            ));
        }

        let broken = good.replacen("\"route_options\":", "\"route_options\":\"three\",\"ignored\":", 1);
        match parse_jsonl(&broken) {
            Err(DatasetError::Line { line, field, .. }) => assert_eq!((line, field.as_str()), (2, "scene")),
            other => panic!("{other:?}"),
        }
    }
}
