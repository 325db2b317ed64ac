use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;
use serde_json::Value;
use thiserror::Error;

use super::{
    ActionCodecError, CanonicalAction, Episode, EpisodeError, ImageError, StateImage, Step,
    Transition,
};

#[derive(Debug, Error)]
pub enum TrajectoryIoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}:{line}: {source}")]
    Action {
        path: PathBuf,
        line: usize,
        source: ActionCodecError,
    },
    #[error("{path}:{line}: {source}")]
    Episode {
        path: PathBuf,
        line: usize,
        source: EpisodeError,
    },
    #[error(transparent)]
    Image(#[from] ImageError),
}

#[derive(Deserialize)]
struct EpisodeRecord {
    episode_id: String,
    #[serde(default)]
    app: String,
    #[serde(default)]
    goal: Option<String>,
    #[serde(default = "default_lang")]
    lang: String,
    steps: Vec<StepRecord>,
}

#[derive(Deserialize)]
struct StepRecord {
    image: PathBuf,
    action: Value,
    #[serde(default)]
    width: Option<u32>,
    #[serde(default)]
    height: Option<u32>,
}

fn default_lang() -> String {
    "en".to_owned()
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn lines(path: &Path) -> Result<impl Iterator<Item = (usize, std::io::Result<String>)>, TrajectoryIoError> {
    let file = File::open(path).map_err(|source| TrajectoryIoError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(BufReader::new(file).lines().enumerate().map(|(i, l)| (i + 1, l)))
}

/// Reads an episodes JSONL file. Step images are resolved relative to the
/// file's directory; actions may be in either schema.
pub fn read_episodes_jsonl(path: &Path) -> Result<Vec<Episode>, TrajectoryIoError> {
    let base = base_dir(path);
    let mut out = Vec::new();
    for (line_no, line) in lines(path)? {
        let line = line.map_err(|source| TrajectoryIoError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: EpisodeRecord =
            serde_json::from_str(&line).map_err(|e| TrajectoryIoError::Parse {
                path: path.to_path_buf(),
                line: line_no,
                message: e.to_string(),
            })?;
        let mut steps = Vec::with_capacity(rec.steps.len());
        for s in rec.steps {
            let image_path = resolve(&base, &s.image);
            let image = match (s.width, s.height) {
                (Some(w), Some(h)) => StateImage::new(image_path, w, h),
                _ => StateImage::probe(image_path)?,
            };
            let action = CanonicalAction::from_any_record(&s.action).map_err(|source| {
                TrajectoryIoError::Action {
                    path: path.to_path_buf(),
                    line: line_no,
                    source,
                }
            })?;
            steps.push(Step { image, action });
        }
        let episode = Episode {
            episode_id: Arc::from(rec.episode_id),
            app: Arc::from(rec.app),
            goal: rec.goal.map(Arc::from),
            lang: Arc::from(rec.lang),
            steps,
        };
        episode
            .validate()
            .map_err(|source| TrajectoryIoError::Episode {
                path: path.to_path_buf(),
                line: line_no,
                source,
            })?;
        out.push(episode);
    }
    Ok(out)
}

pub fn read_transitions_jsonl(path: &Path) -> Result<Vec<Transition>, TrajectoryIoError> {
    let base = base_dir(path);
    let mut out = Vec::new();
    for (line_no, line) in lines(path)? {
        let line = line.map_err(|source| TrajectoryIoError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| TrajectoryIoError::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message,
        };
        let mut value: Value = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        let action_rec = value
            .get("action")
            .cloned()
            .ok_or_else(|| parse_err("missing `action`".into()))?;
        let action = CanonicalAction::from_any_record(&action_rec).map_err(|source| {
            TrajectoryIoError::Action {
                path: path.to_path_buf(),
                line: line_no,
                source,
            }
        })?;
        value["action"] = serde_json::to_value(&action).map_err(|e| parse_err(e.to_string()))?;
        let mut t: Transition =
            serde_json::from_value(value).map_err(|e| parse_err(e.to_string()))?;
        for img in [&mut t.s_t, &mut t.s_t1] {
            *img = StateImage::new(resolve(&base, img.path()), img.width_px, img.height_px);
        }
        out.push(t);
    }
    Ok(out)
}

/// Writes transitions one per line. Image paths under the output file's
/// directory are written relative to it.
pub fn write_transitions_jsonl(path: &Path, transitions: &[Transition]) -> Result<(), TrajectoryIoError> {
    let io_err = |source| TrajectoryIoError::Io {
        path: path.to_path_buf(),
        source,
    };
    let base = base_dir(path);
    let canonical_base = fs::canonicalize(&base).ok();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err)?;
    }
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    for t in transitions {
        let mut t = t.clone();
        for img in [&mut t.s_t, &mut t.s_t1] {
            let rel = img.path().strip_prefix(&base).ok().or_else(|| {
                let c = canonical_base.as_ref()?;
                img.path().strip_prefix(c).ok()
            });
            if let Some(rel) = rel {
                *img = StateImage::new(rel, img.width_px, img.height_px);
            }
        }
        let line = serde_json::to_string(&t).expect("transition serializes");
        writeln!(w, "{line}").map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::{ActionKind, to_transitions};

    #[test]
    fn episodes_round_trip_to_transitions_file() {
        let dir = tempfile::tempdir().unwrap();
        let eps = dir.path().join("eps.jsonl");
        fs::write(
            &eps,
            concat!(
                r#"{"episode_id":"e1","app":"Clock","goal":"set alarm","lang":"en","steps":["#,
                r#"{"image":"a.png","width":1080,"height":2400,"action":{"action":"click","params":[500,300]}},"#,
                r#"{"image":"b.png","width":1080,"height":2400,"action":{"action_type":"BACK"}},"#,
                r#"{"image":"c.png","width":1080,"height":2400,"action":{"action":"complete"}}]}"#,
                "\n"
            ),
        )
        .unwrap();
        let episodes = read_episodes_jsonl(&eps).unwrap();
        assert_eq!(episodes.len(), 1);
        assert_eq!(episodes[0].steps[1].action.kind, ActionKind::SystemBack);
        let ts = to_transitions(&episodes[0]);
        assert_eq!(ts.len(), 2);
        assert!(ts[0].s_t.path().ends_with("a.png"));

        let out = dir.path().join("t.jsonl");
        write_transitions_jsonl(&out, &ts).unwrap();
        let text = fs::read_to_string(&out).unwrap();
        assert!(text.contains(r#""image":"a.png""#), "{text}");
        let back = read_transitions_jsonl(&out).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].action, ts[0].action);
        assert_eq!(back[1].id, ts[1].id);
    }

    #[test]
    fn empty_episode_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let eps = dir.path().join("eps.jsonl");
        fs::write(&eps, "{\"episode_id\":\"e\",\"steps\":[]}\n").unwrap();
        assert!(matches!(
            read_episodes_jsonl(&eps),
            Err(TrajectoryIoError::Episode { .. })
        ));
    }
}
