use serde_json::{Map, Value, json};
use thiserror::Error;

use super::{ActionError, ActionKind, CanonicalAction, Direction, GRID_MAX, GridPoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionSchema {
    /// Collection schema: `{"action": "click", "params": [x, y]}` and friends.
    Kapps,
    /// Prompt schema: `{"action_type": "TAP", "x": .., "y": ..}` and friends.
    M3a,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ActionCodecError {
    #[error("unknown action type `{0}`")]
    UnknownActionType(String),
    #[error("missing field `{0}`")]
    MissingField(&'static str),
    #[error("coordinate ({x}, {y}) outside the [0, 1000] grid")]
    CoordinateOutOfRange { x: i64, y: i64 },
    #[error("{kind} has no representation in the {schema:?} schema")]
    NotExpressible { kind: ActionKind, schema: ActionSchema },
    #[error("malformed action record: {0}")]
    Malformed(String),
}

impl From<ActionError> for ActionCodecError {
    fn from(e: ActionError) -> Self {
        match e {
            ActionError::MissingField { field, .. } => ActionCodecError::MissingField(field),
            ActionError::CoordinateOutOfRange { x, y } => {
                ActionCodecError::CoordinateOutOfRange { x, y }
            }
            other @ ActionError::UnexpectedField { .. } => {
                ActionCodecError::Malformed(other.to_string())
            }
        }
    }
}

impl ActionSchema {
    /// Guesses the schema of a record from its discriminating key.
    pub fn detect(record: &Value) -> Option<ActionSchema> {
        let obj = record.as_object()?;
        if obj.contains_key("action_type") {
            Some(ActionSchema::M3a)
        } else if obj.contains_key("action") {
            Some(ActionSchema::Kapps)
        } else {
            None
        }
    }
}

impl CanonicalAction {
    pub fn to_record(&self, schema: ActionSchema) -> Result<Value, ActionCodecError> {
        self.validate()?;
        match schema {
            ActionSchema::Kapps => to_kapps(self),
            ActionSchema::M3a => to_m3a(self),
        }
    }

    pub fn from_record(record: &Value, schema: ActionSchema) -> Result<Self, ActionCodecError> {
        let obj = record
            .as_object()
            .ok_or_else(|| ActionCodecError::Malformed("expected a JSON object".into()))?;
        let action = match schema {
            ActionSchema::Kapps => from_kapps(obj)?,
            ActionSchema::M3a => from_m3a(obj)?,
        };
        action.validate()?;
        Ok(action)
    }

    /// Parses a record in whichever schema it is written in. Records carrying
    /// a `kind` key are read as the canonical serde form.
    pub fn from_any_record(record: &Value) -> Result<Self, ActionCodecError> {
        if record.get("kind").is_some() {
            let a: CanonicalAction = serde_json::from_value(record.clone())
                .map_err(|e| ActionCodecError::Malformed(e.to_string()))?;
            a.validate()?;
            return Ok(a);
        }
        let schema = ActionSchema::detect(record).ok_or_else(|| {
            ActionCodecError::Malformed("no `action` or `action_type` key".into())
        })?;
        Self::from_record(record, schema)
    }
}

/// The action as it appears in prompt action slots: its M3A record when one
/// exists, otherwise the KApps record.
pub fn action_prompt_text(action: &CanonicalAction) -> String {
    action
        .to_record(ActionSchema::M3a)
        .or_else(|_| action.to_record(ActionSchema::Kapps))
        .map(|v| v.to_string())
        .unwrap_or_else(|_| format!("{{\"action\":\"{}\"}}", action.kind))
}

fn not_expressible(a: &CanonicalAction, schema: ActionSchema) -> ActionCodecError {
    ActionCodecError::NotExpressible {
        kind: a.kind,
        schema,
    }
}

fn to_kapps(a: &CanonicalAction) -> Result<Value, ActionCodecError> {
    use ActionKind::*;
    let point = |p: Option<GridPoint>| p.ok_or(ActionCodecError::MissingField("point"));
    let v = match a.kind {
        Click | LongPress => {
            let p = point(a.point)?;
            json!({ "action": a.kind.as_str(), "params": [p.x, p.y] })
        }
        Swipe => {
            let s = point(a.point)?;
            let e = a.end_point.ok_or(ActionCodecError::MissingField("end_point"))?;
            let vel = a.velocity.map(Value::from).unwrap_or(Value::Null);
            json!({ "action": "swipe", "params": [s.x, s.y, vel, e.x, e.y] })
        }
        SystemBack => json!({ "action": "system_button", "params": "back" }),
        SystemHome => json!({ "action": "system_button", "params": "home" }),
        SystemRecent => json!({ "action": "system_button", "params": "recent" }),
        SetText => {
            let p = point(a.point)?;
            json!({ "action": "set_text", "params": [p.x, p.y], "text": a.text })
        }
        Wait => json!({ "action": "wait", "duration": a.duration }),
        Complete | Impossible => {
            let mut v = json!({ "action": a.kind.as_str() });
            if let Some(c) = &a.comment {
                v["comment"] = json!(c);
            }
            v
        }
        LaunchApp => json!({ "action": "launch_app", "package_name": a.app_name }),
        ScrollDirection | TypeText | Enter | OpenApp => {
            return Err(not_expressible(a, ActionSchema::Kapps));
        }
    };
    Ok(v)
}

fn to_m3a(a: &CanonicalAction) -> Result<Value, ActionCodecError> {
    use ActionKind::*;
    let v = match a.kind {
        Click | LongPress => {
            let p = a.point.ok_or(ActionCodecError::MissingField("point"))?;
            let ty = if a.kind == Click { "TAP" } else { "LONG_PRESS" };
            json!({ "action_type": ty, "x": p.x, "y": p.y })
        }
        ScrollDirection => {
            let d = a.direction.ok_or(ActionCodecError::MissingField("direction"))?;
            json!({ "action_type": "SCROLL", "direction": d.as_str() })
        }
        TypeText => json!({ "action_type": "TYPE", "text": a.text }),
        SystemBack => json!({ "action_type": "BACK" }),
        SystemHome => json!({ "action_type": "HOME" }),
        Enter => json!({ "action_type": "ENTER" }),
        OpenApp => json!({ "action_type": "OPEN_APP", "app_name": a.app_name }),
        Swipe | SetText | SystemRecent | LaunchApp | Wait | Complete | Impossible => {
            return Err(not_expressible(a, ActionSchema::M3a));
        }
    };
    Ok(v)
}

fn grid_coord(v: &Value, field: &'static str) -> Result<i64, ActionCodecError> {
    match v {
        Value::Number(n) => n
            .as_i64()
            .or_else(|| n.as_f64().map(|f| f.round() as i64))
            .ok_or(ActionCodecError::Malformed(format!("`{field}` is not numeric"))),
        Value::String(s) => s
            .trim()
            .parse::<f64>()
            .map(|f| f.round() as i64)
            .map_err(|_| ActionCodecError::Malformed(format!("`{field}` is not numeric"))),
        Value::Null => Err(ActionCodecError::MissingField(field)),
        _ => Err(ActionCodecError::Malformed(format!("`{field}` is not numeric"))),
    }
}

fn make_point(x: i64, y: i64) -> Result<GridPoint, ActionCodecError> {
    let max = i64::from(GRID_MAX);
    if !(0..=max).contains(&x) || !(0..=max).contains(&y) {
        return Err(ActionCodecError::CoordinateOutOfRange { x, y });
    }
    Ok(GridPoint::new(x as u16, y as u16))
}

fn str_field(obj: &Map<String, Value>, key: &'static str) -> Result<String, ActionCodecError> {
    match obj.get(key) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(Value::Null) | None => Err(ActionCodecError::MissingField(key)),
        Some(other) => Ok(other.to_string()),
    }
}

fn opt_str(obj: &Map<String, Value>, key: &str) -> Option<String> {
    obj.get(key).and_then(|v| v.as_str()).map(str::to_owned)
}

fn params(obj: &Map<String, Value>) -> Result<&Vec<Value>, ActionCodecError> {
    obj.get("params")
        .ok_or(ActionCodecError::MissingField("params"))?
        .as_array()
        .ok_or_else(|| ActionCodecError::Malformed("`params` is not a list".into()))
}

fn point_params(obj: &Map<String, Value>) -> Result<GridPoint, ActionCodecError> {
    let p = params(obj)?;
    if p.len() != 2 {
        return Err(ActionCodecError::Malformed(format!(
            "expected [x, y], got {} values",
            p.len()
        )));
    }
    make_point(grid_coord(&p[0], "x")?, grid_coord(&p[1], "y")?)
}

fn from_kapps(obj: &Map<String, Value>) -> Result<CanonicalAction, ActionCodecError> {
    let name = str_field(obj, "action")?;
    let action = match name.as_str() {
        "click" | "long_press" => {
            let p = point_params(obj)?;
            let kind = if name == "click" {
                ActionKind::Click
            } else {
                ActionKind::LongPress
            };
            CanonicalAction {
                point: Some(p),
                ..CanonicalAction::bare(kind)
            }
        }
        "swipe" => {
            let p = params(obj)?;
            if p.len() != 5 {
                return Err(ActionCodecError::Malformed(format!(
                    "swipe expects [start_x, start_y, velocity, end_x, end_y], got {} values",
                    p.len()
                )));
            }
            let start = make_point(grid_coord(&p[0], "start_x")?, grid_coord(&p[1], "start_y")?)?;
            let end = make_point(grid_coord(&p[3], "end_x")?, grid_coord(&p[4], "end_y")?)?;
            let velocity = match &p[2] {
                Value::Null => None,
                v => Some(
                    v.as_f64()
                        .ok_or_else(|| ActionCodecError::Malformed("velocity".into()))?,
                ),
            };
            CanonicalAction {
                point: Some(start),
                end_point: Some(end),
                velocity,
                ..CanonicalAction::bare(ActionKind::Swipe)
            }
        }
        "system_button" => {
            let which = obj
                .get("params")
                .and_then(|v| match v {
                    Value::String(s) => Some(s.clone()),
                    Value::Array(a) => a.first().and_then(|x| x.as_str()).map(str::to_owned),
                    _ => None,
                })
                .ok_or(ActionCodecError::MissingField("params"))?;
            let kind = match which.to_ascii_lowercase().as_str() {
                "back" => ActionKind::SystemBack,
                "home" => ActionKind::SystemHome,
                "recent" => ActionKind::SystemRecent,
                other => {
                    return Err(ActionCodecError::UnknownActionType(format!(
                        "system_button/{other}"
                    )));
                }
            };
            CanonicalAction::bare(kind)
        }
        "set_text" => {
            let p = point_params(obj)?;
            CanonicalAction {
                point: Some(p),
                text: Some(str_field(obj, "text")?),
                ..CanonicalAction::bare(ActionKind::SetText)
            }
        }
        "wait" => {
            let d = obj
                .get("duration")
                .and_then(Value::as_f64)
                .ok_or(ActionCodecError::MissingField("duration"))?;
            CanonicalAction::wait(d)
        }
        "complete" | "impossible" => {
            let kind = if name == "complete" {
                ActionKind::Complete
            } else {
                ActionKind::Impossible
            };
            CanonicalAction {
                comment: opt_str(obj, "comment"),
                ..CanonicalAction::bare(kind)
            }
        }
        "launch_app" => CanonicalAction::launch_app(str_field(obj, "package_name")?),
        other => return Err(ActionCodecError::UnknownActionType(other.to_owned())),
    };
    Ok(action)
}

fn from_m3a(obj: &Map<String, Value>) -> Result<CanonicalAction, ActionCodecError> {
    let ty = str_field(obj, "action_type")?;
    let xy = || -> Result<GridPoint, ActionCodecError> {
        let x = grid_coord(obj.get("x").unwrap_or(&Value::Null), "x")?;
        let y = grid_coord(obj.get("y").unwrap_or(&Value::Null), "y")?;
        make_point(x, y)
    };
    let action = match ty.to_ascii_uppercase().as_str() {
        "TAP" | "CLICK" => CanonicalAction {
            point: Some(xy()?),
            ..CanonicalAction::bare(ActionKind::Click)
        },
        "LONG_PRESS" => CanonicalAction {
            point: Some(xy()?),
            ..CanonicalAction::bare(ActionKind::LongPress)
        },
        "SCROLL" => {
            let d = str_field(obj, "direction")?;
            let dir = Direction::parse(&d)
                .ok_or_else(|| ActionCodecError::Malformed(format!("direction `{d}`")))?;
            CanonicalAction::scroll(dir)
        }
        "TYPE" => CanonicalAction::type_text(str_field(obj, "text")?),
        "BACK" => CanonicalAction::bare(ActionKind::SystemBack),
        "HOME" => CanonicalAction::bare(ActionKind::SystemHome),
        "ENTER" => CanonicalAction::bare(ActionKind::Enter),
        "OPEN_APP" => CanonicalAction::open_app(str_field(obj, "app_name")?),
        other => return Err(ActionCodecError::UnknownActionType(other.to_owned())),
    };
    Ok(action)
}
