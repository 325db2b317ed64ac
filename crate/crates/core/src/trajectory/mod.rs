//! States, actions, transitions and episodes.
//!
//! Coordinates live on the normalized `[0, 1000]` grid everywhere except
//! transiently when drawing on a real screenshot (see [`denormalize_point`]).

mod codec;
mod io;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use codec::{ActionCodecError, ActionSchema, action_prompt_text};
pub use io::{
    TrajectoryIoError, read_episodes_jsonl, read_transitions_jsonl, write_transitions_jsonl,
};

/// Upper bound of the normalized coordinate grid.
pub const GRID_MAX: u16 = 1000;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("failed to read image {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("failed to decode image {path}: {source}")]
    Decode {
        path: PathBuf,
        source: image::ImageError,
    },
}

/// A screenshot on disk plus its pixel dimensions.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StateImage {
    #[serde(rename = "image")]
    pub image_ref: Arc<Path>,
    #[serde(rename = "width")]
    pub width_px: u32,
    #[serde(rename = "height")]
    pub height_px: u32,
}

impl StateImage {
    pub fn new(path: impl Into<PathBuf>, width_px: u32, height_px: u32) -> Self {
        Self {
            image_ref: Arc::from(path.into().into_boxed_path()),
            width_px,
            height_px,
        }
    }

    /// Reads the dimensions from the image header without decoding pixels.
    pub fn probe(path: impl Into<PathBuf>) -> Result<Self, ImageError> {
        let path = path.into();
        let (w, h) = image::image_dimensions(&path).map_err(|source| ImageError::Decode {
            path: path.clone(),
            source,
        })?;
        Ok(Self::new(path, w, h))
    }

    pub fn path(&self) -> &Path {
        &self.image_ref
    }

    pub fn read_bytes(&self) -> Result<Vec<u8>, ImageError> {
        fs::read(&self.image_ref).map_err(|source| ImageError::Read {
            path: self.image_ref.to_path_buf(),
            source,
        })
    }

    /// SHA-256 of the file contents, hex encoded.
    pub fn content_hash(&self) -> Result<String, ImageError> {
        Ok(hex::encode(Sha256::digest(self.read_bytes()?)))
    }

    pub fn decode(&self) -> Result<image::DynamicImage, ImageError> {
        let bytes = self.read_bytes()?;
        image::load_from_memory(&bytes).map_err(|source| ImageError::Decode {
            path: self.image_ref.to_path_buf(),
            source,
        })
    }
}

/// A point on the normalized `[0, 1000]` grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridPoint {
    pub x: u16,
    pub y: u16,
}

impl GridPoint {
    pub const fn new(x: u16, y: u16) -> Self {
        Self { x, y }
    }

    pub fn in_range(self) -> bool {
        self.x <= GRID_MAX && self.y <= GRID_MAX
    }

    pub fn distance(self, other: GridPoint) -> f64 {
        let dx = f64::from(self.x) - f64::from(other.x);
        let dy = f64::from(self.y) - f64::from(other.y);
        dx.hypot(dy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Up => "up",
            Direction::Down => "down",
            Direction::Left => "left",
            Direction::Right => "right",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "up" => Some(Direction::Up),
            "down" => Some(Direction::Down),
            "left" => Some(Direction::Left),
            "right" => Some(Direction::Right),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Click,
    LongPress,
    Swipe,
    ScrollDirection,
    TypeText,
    SetText,
    SystemBack,
    SystemHome,
    SystemRecent,
    Enter,
    OpenApp,
    LaunchApp,
    Wait,
    Complete,
    Impossible,
}

impl ActionKind {
    pub const ALL: [ActionKind; 15] = [
        ActionKind::Click,
        ActionKind::LongPress,
        ActionKind::Swipe,
        ActionKind::ScrollDirection,
        ActionKind::TypeText,
        ActionKind::SetText,
        ActionKind::SystemBack,
        ActionKind::SystemHome,
        ActionKind::SystemRecent,
        ActionKind::Enter,
        ActionKind::OpenApp,
        ActionKind::LaunchApp,
        ActionKind::Wait,
        ActionKind::Complete,
        ActionKind::Impossible,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ActionKind::Click => "click",
            ActionKind::LongPress => "long_press",
            ActionKind::Swipe => "swipe",
            ActionKind::ScrollDirection => "scroll_direction",
            ActionKind::TypeText => "type_text",
            ActionKind::SetText => "set_text",
            ActionKind::SystemBack => "system_back",
            ActionKind::SystemHome => "system_home",
            ActionKind::SystemRecent => "system_recent",
            ActionKind::Enter => "enter",
            ActionKind::OpenApp => "open_app",
            ActionKind::LaunchApp => "launch_app",
            ActionKind::Wait => "wait",
            ActionKind::Complete => "complete",
            ActionKind::Impossible => "impossible",
        }
    }

    /// Whether the action is located by a single grid point.
    pub fn is_pointed(self) -> bool {
        matches!(
            self,
            ActionKind::Click | ActionKind::LongPress | ActionKind::SetText
        )
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ActionError {
    #[error("{kind} requires field `{field}`")]
    MissingField { kind: ActionKind, field: &'static str },
    #[error("{kind} does not accept field `{field}`")]
    UnexpectedField { kind: ActionKind, field: &'static str },
    #[error("coordinate ({x}, {y}) outside the [0, 1000] grid")]
    CoordinateOutOfRange { x: i64, y: i64 },
}

/// One action value covering both the KApps collection schema and the
/// M3A prompt schema. Fields irrelevant to `kind` must be `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalAction {
    pub kind: ActionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<GridPoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end_point: Option<GridPoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub velocity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Direction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub app_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
}

impl CanonicalAction {
    pub fn bare(kind: ActionKind) -> Self {
        Self {
            kind,
            point: None,
            end_point: None,
            velocity: None,
            direction: None,
            text: None,
            app_name: None,
            duration: None,
            comment: None,
        }
    }

    pub fn click(x: u16, y: u16) -> Self {
        Self {
            point: Some(GridPoint::new(x, y)),
            ..Self::bare(ActionKind::Click)
        }
    }

    pub fn long_press(x: u16, y: u16) -> Self {
        Self {
            point: Some(GridPoint::new(x, y)),
            ..Self::bare(ActionKind::LongPress)
        }
    }

    pub fn swipe(start: GridPoint, end: GridPoint, velocity: f64) -> Self {
        Self {
            point: Some(start),
            end_point: Some(end),
            velocity: Some(velocity),
            ..Self::bare(ActionKind::Swipe)
        }
    }

    pub fn scroll(direction: Direction) -> Self {
        Self {
            direction: Some(direction),
            ..Self::bare(ActionKind::ScrollDirection)
        }
    }

    pub fn type_text(text: impl Into<String>) -> Self {
        Self {
            text: Some(text.into()),
            ..Self::bare(ActionKind::TypeText)
        }
    }

    pub fn set_text(x: u16, y: u16, text: impl Into<String>) -> Self {
        Self {
            point: Some(GridPoint::new(x, y)),
            text: Some(text.into()),
            ..Self::bare(ActionKind::SetText)
        }
    }

    pub fn open_app(name: impl Into<String>) -> Self {
        Self {
            app_name: Some(name.into()),
            ..Self::bare(ActionKind::OpenApp)
        }
    }

    pub fn launch_app(package: impl Into<String>) -> Self {
        Self {
            app_name: Some(package.into()),
            ..Self::bare(ActionKind::LaunchApp)
        }
    }

    pub fn wait(seconds: f64) -> Self {
        Self {
            duration: Some(seconds),
            ..Self::bare(ActionKind::Wait)
        }
    }

    /// Checks the per-kind field requirements and the grid range.
    pub fn validate(&self) -> Result<(), ActionError> {
        use ActionKind::*;
        let kind = self.kind;
        let (needs_point, needs_end, needs_dir, needs_text, needs_app, needs_duration) =
            match kind {
                Click | LongPress => (true, false, false, false, false, false),
                SetText => (true, false, false, true, false, false),
                Swipe => (true, true, false, false, false, false),
                ScrollDirection => (false, false, true, false, false, false),
                TypeText => (false, false, false, true, false, false),
                OpenApp | LaunchApp => (false, false, false, false, true, false),
                Wait => (false, false, false, false, false, true),
                SystemBack | SystemHome | SystemRecent | Enter | Complete | Impossible => {
                    (false, false, false, false, false, false)
                }
            };
        check_field(kind, "point", self.point.is_some(), needs_point)?;
        check_field(kind, "end_point", self.end_point.is_some(), needs_end)?;
        check_field(kind, "direction", self.direction.is_some(), needs_dir)?;
        check_field(kind, "text", self.text.is_some(), needs_text)?;
        check_field(kind, "app_name", self.app_name.is_some(), needs_app)?;
        check_field(kind, "duration", self.duration.is_some(), needs_duration)?;
        if self.velocity.is_some() && kind != Swipe {
            return Err(ActionError::UnexpectedField {
                kind,
                field: "velocity",
            });
        }
        if self.comment.is_some() && !matches!(kind, Complete | Impossible) {
            return Err(ActionError::UnexpectedField {
                kind,
                field: "comment",
            });
        }
        for p in [self.point, self.end_point].into_iter().flatten() {
            if !p.in_range() {
                return Err(ActionError::CoordinateOutOfRange {
                    x: i64::from(p.x),
                    y: i64::from(p.y),
                });
            }
        }
        Ok(())
    }

    /// Maps the action onto the closest M3A-expressible action. Swipes become
    /// direction scrolls by the sign of the dominant axis (velocity is dropped),
    /// `set_text` becomes `type_text` (the coordinate is dropped), and
    /// `launch_app` becomes `open_app`. Kinds with no M3A analogue return `None`.
    pub fn to_m3a_lossy(&self) -> Option<CanonicalAction> {
        use ActionKind::*;
        match self.kind {
            Click | LongPress | ScrollDirection | TypeText | SystemBack | SystemHome | Enter
            | OpenApp => Some(self.clone()),
            Swipe => {
                let (s, e) = (self.point?, self.end_point?);
                let dx = i32::from(e.x) - i32::from(s.x);
                let dy = i32::from(e.y) - i32::from(s.y);
                let dir = if dy.abs() >= dx.abs() {
                    if dy <= 0 { Direction::Up } else { Direction::Down }
                } else if dx < 0 {
                    Direction::Left
                } else {
                    Direction::Right
                };
                Some(CanonicalAction::scroll(dir))
            }
            SetText => Some(CanonicalAction::type_text(self.text.clone()?)),
            LaunchApp => Some(CanonicalAction::open_app(self.app_name.clone()?)),
            SystemRecent | Wait | Complete | Impossible => None,
        }
    }
}

fn check_field(
    kind: ActionKind,
    field: &'static str,
    present: bool,
    required: bool,
) -> Result<(), ActionError> {
    match (present, required) {
        (false, true) => Err(ActionError::MissingField { kind, field }),
        (true, false) => Err(ActionError::UnexpectedField { kind, field }),
        _ => Ok(()),
    }
}

/// One world-modeling sample `(S_t, A_t, S_{t+1})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub id: String,
    pub app: Arc<str>,
    #[serde(default)]
    pub goal: Option<Arc<str>>,
    pub lang: Arc<str>,
    pub episode_id: Arc<str>,
    pub step_index: u32,
    pub s_t: StateImage,
    pub action: CanonicalAction,
    pub s_t1: StateImage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub image: StateImage,
    pub action: CanonicalAction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub episode_id: Arc<str>,
    pub app: Arc<str>,
    pub goal: Option<Arc<str>>,
    pub lang: Arc<str>,
    pub steps: Vec<Step>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EpisodeError {
    #[error("episode {0} has no steps")]
    Empty(String),
    #[error("episode id is empty")]
    MissingId,
    #[error("episode {episode} step {step}: {source}")]
    InvalidAction {
        episode: String,
        step: usize,
        source: ActionError,
    },
}

impl Episode {
    pub fn validate(&self) -> Result<(), EpisodeError> {
        if self.episode_id.is_empty() {
            return Err(EpisodeError::MissingId);
        }
        if self.steps.is_empty() {
            return Err(EpisodeError::Empty(self.episode_id.to_string()));
        }
        for (i, step) in self.steps.iter().enumerate() {
            step.action
                .validate()
                .map_err(|source| EpisodeError::InvalidAction {
                    episode: self.episode_id.to_string(),
                    step: i,
                    source,
                })?;
        }
        Ok(())
    }
}

/// Content-derived transition id: first 16 bytes of
/// `sha256(episode_id || 0x00 || step_index)` in hex.
pub fn transition_id(episode_id: &str, step_index: u32) -> String {
    let mut h = Sha256::new();
    h.update(episode_id.as_bytes());
    h.update([0u8]);
    h.update(step_index.to_le_bytes());
    hex::encode(&h.finalize()[..16])
}

/// Pairs step `t`'s state and action with step `t + 1`'s state. The final
/// step's action has no observed successor and is dropped.
pub fn to_transitions(episode: &Episode) -> Vec<Transition> {
    episode
        .steps
        .windows(2)
        .enumerate()
        .map(|(t, pair)| {
            let step_index = t as u32;
            Transition {
                id: transition_id(&episode.episode_id, step_index),
                app: episode.app.clone(),
                goal: episode.goal.clone(),
                lang: episode.lang.clone(),
                episode_id: episode.episode_id.clone(),
                step_index,
                s_t: pair[0].image.clone(),
                action: pair[0].action.clone(),
                s_t1: pair[1].image.clone(),
            }
        })
        .collect()
}

/// Number of world-model transitions recoverable from a corpus whose every
/// episode has at least one step.
pub fn available_transitions(episodes: u64, policy_steps: u64) -> u64 {
    policy_steps.saturating_sub(episodes)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub episodes: u64,
    pub policy_steps: u64,
    pub transitions: u64,
}

impl CorpusStats {
    pub fn add_episode(&mut self, episode: &Episode) {
        self.episodes += 1;
        self.policy_steps += episode.steps.len() as u64;
        self.transitions += to_transitions(episode).len() as u64;
    }
}

/// Pixel coordinate in a concrete screenshot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelPoint {
    pub x: u32,
    pub y: u32,
}

/// Maps a grid point onto `image`, clamping into the last valid pixel.
pub fn denormalize_point(point: GridPoint, image: &StateImage) -> PixelPoint {
    denormalize_in(point, image.width_px, image.height_px)
}

pub fn denormalize_in(point: GridPoint, width: u32, height: u32) -> PixelPoint {
    let scale = |v: u16, extent: u32| -> u32 {
        let px = (f64::from(v) / f64::from(GRID_MAX) * f64::from(extent)).round() as u32;
        px.min(extent.saturating_sub(1))
    };
    PixelPoint {
        x: scale(point.x, width),
        y: scale(point.y, height),
    }
}
