//! Raw input events and the JSONL event-log format.
//!
//! One JSON object per line with the fields `t`, `kind`, `key`, `button`,
//! `dy`, `x`, `y`, `app`, `win`, `shot`. A blank line separates recording
//! sessions; sliding windows never cross that boundary.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Point, Rect};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MouseButton {
    Left,
    Right,
    Middle,
}

impl MouseButton {
    pub fn as_str(&self) -> &'static str {
        match self {
            MouseButton::Left => "left",
            MouseButton::Right => "right",
            MouseButton::Middle => "middle",
        }
    }
}

impl fmt::Display for MouseButton {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MouseButton {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "left" => Ok(MouseButton::Left),
            "right" => Ok(MouseButton::Right),
            "middle" => Ok(MouseButton::Middle),
            other => Err(format!("unknown mouse button {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventKind {
    KeyDown(String),
    KeyUp(String),
    MouseDown(MouseButton),
    MouseUp(MouseButton),
    Scroll(i32),
}

impl EventKind {
    fn wire_name(&self) -> &'static str {
        match self {
            EventKind::KeyDown(_) => "key_down",
            EventKind::KeyUp(_) => "key_up",
            EventKind::MouseDown(_) => "mouse_down",
            EventKind::MouseUp(_) => "mouse_up",
            EventKind::Scroll(_) => "scroll",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputEvent {
    pub timestamp_ms: i64,
    pub kind: EventKind,
    pub cursor: Point,
    pub app_id: String,
    pub window: Rect,
    pub screenshot: Option<String>,
}

impl InputEvent {
    pub fn new(timestamp_ms: i64, kind: EventKind) -> Self {
        Self {
            timestamp_ms,
            kind,
            cursor: Point::default(),
            app_id: String::new(),
            window: Rect::new(0, 0, 1, 1),
            screenshot: None,
        }
    }

    pub fn at(mut self, cursor: Point) -> Self {
        self.cursor = cursor;
        self
    }

    pub fn in_app(mut self, app: impl Into<String>, window: Rect) -> Self {
        self.app_id = app.into();
        self.window = window;
        self
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct WireEvent {
    t: i64,
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    key: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    button: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dy: Option<i32>,
    x: i32,
    y: i32,
    app: String,
    win: [i32; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    shot: Option<String>,
}

impl From<&InputEvent> for WireEvent {
    fn from(ev: &InputEvent) -> Self {
        let (key, button, dy) = match &ev.kind {
            EventKind::KeyDown(k) | EventKind::KeyUp(k) => (Some(k.clone()), None, None),
            EventKind::MouseDown(b) | EventKind::MouseUp(b) => {
                (None, Some(b.as_str().to_string()), None)
            }
            EventKind::Scroll(d) => (None, None, Some(*d)),
        };
        WireEvent {
            t: ev.timestamp_ms,
            kind: ev.kind.wire_name().to_string(),
            key,
            button,
            dy,
            x: ev.cursor.x,
            y: ev.cursor.y,
            app: ev.app_id.clone(),
            win: [ev.window.x, ev.window.y, ev.window.w, ev.window.h],
            shot: ev.screenshot.clone(),
        }
    }
}

impl WireEvent {
    fn into_event(self) -> std::result::Result<InputEvent, String> {
        let kind = match self.kind.as_str() {
            "key_down" | "key_up" => {
                let key = self
                    .key
                    .filter(|k| !k.is_empty())
                    .ok_or_else(|| format!("{} without key", self.kind))?;
                if self.kind == "key_down" {
                    EventKind::KeyDown(key)
                } else {
                    EventKind::KeyUp(key)
                }
            }
            "mouse_down" | "mouse_up" => {
                let button: MouseButton = self
                    .button
                    .as_deref()
                    .ok_or_else(|| format!("{} without button", self.kind))?
                    .parse()?;
                if self.kind == "mouse_down" {
                    EventKind::MouseDown(button)
                } else {
                    EventKind::MouseUp(button)
                }
            }
            "scroll" => EventKind::Scroll(self.dy.ok_or("scroll without dy")?),
            other => return Err(format!("unknown event kind {other:?}")),
        };
        let [wx, wy, ww, wh] = self.win;
        let window = Rect::new(wx, wy, ww, wh);
        if !window.is_valid() {
            return Err(format!("degenerate window rect {:?}", self.win));
        }
        Ok(InputEvent {
            timestamp_ms: self.t,
            kind,
            cursor: Point::new(self.x, self.y),
            app_id: self.app,
            window,
            screenshot: self.shot,
        })
    }
}

/// Parses one JSONL line. `line_no` is only used for error reporting.
pub fn parse_event_line(line: &str, line_no: usize) -> Result<InputEvent> {
    let wire: WireEvent = serde_json::from_str(line).map_err(|e| Error::MalformedInput {
        line: line_no,
        reason: e.to_string(),
    })?;
    wire.into_event().map_err(|reason| Error::MalformedInput {
        line: line_no,
        reason,
    })
}

/// Parses a whole event log into sessions. Blank lines end a session; empty
/// sessions are dropped.
pub fn parse_event_log(text: &str) -> Result<Vec<Vec<InputEvent>>> {
    let mut sessions = Vec::new();
    let mut current = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            if !current.is_empty() {
                sessions.push(std::mem::take(&mut current));
            }
            continue;
        }
        current.push(parse_event_line(line, idx + 1)?);
    }
    if !current.is_empty() {
        sessions.push(current);
    }
    Ok(sessions)
}

pub fn event_to_line(event: &InputEvent) -> String {
    serde_json::to_string(&WireEvent::from(event)).expect("wire event serializes")
}

/// Inverse of [`parse_event_log`]: sessions separated by one blank line.
pub fn write_event_log(sessions: &[Vec<InputEvent>]) -> String {
    let mut out = String::new();
    for (i, session) in sessions.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        for ev in session {
            out.push_str(&event_to_line(ev));
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_kinds() {
        let log = r#"{"t":0,"kind":"key_down","key":"C","x":1,"y":2,"app":"ed","win":[0,0,100,50]}
{"t":5,"kind":"key_up","key":"C","x":1,"y":2,"app":"ed","win":[0,0,100,50]}
{"t":9,"kind":"mouse_down","button":"left","x":10,"y":20,"app":"ed","win":[0,0,100,50],"shot":"s.ppm"}
{"t":10,"kind":"scroll","dy":-3,"x":10,"y":20,"app":"ed","win":[0,0,100,50],"extra":true}
"#;
        let sessions = parse_event_log(log).unwrap();
        assert_eq!(sessions.len(), 1);
        let evs = &sessions[0];
        assert_eq!(evs[0].kind, EventKind::KeyDown("C".into()));
        assert_eq!(evs[2].kind, EventKind::MouseDown(MouseButton::Left));
        assert_eq!(evs[2].screenshot.as_deref(), Some("s.ppm"));
        assert_eq!(evs[3].kind, EventKind::Scroll(-3));
        assert_eq!(evs[3].window, Rect::new(0, 0, 100, 50));
    }

    #[test]
    fn blank_lines_split_sessions() {
        let line = r#"{"t":0,"kind":"key_down","key":"A","x":0,"y":0,"app":"a","win":[0,0,1,1]}"#;
        let log = format!("{line}\n\n\n{line}\n{line}\n");
        let sessions = parse_event_log(&log).unwrap();
        assert_eq!(sessions.iter().map(Vec::len).collect::<Vec<_>>(), vec![1, 2]);
        assert_eq!(write_event_log(&sessions), format!("{line}\n\n{line}\n{line}\n"));
    }

    #[test]
    fn rejects_missing_fields() {
        let cases = [
            (r#"{"t":0,"kind":"key_down","x":0,"y":0,"app":"a","win":[0,0,1,1]}"#, "without key"),
            (r#"{"t":0,"kind":"mouse_up","x":0,"y":0,"app":"a","win":[0,0,1,1]}"#, "without button"),
            (r#"{"t":0,"kind":"scroll","x":0,"y":0,"app":"a","win":[0,0,1,1]}"#, "without dy"),
            (r#"{"t":0,"kind":"key_down","key":"A","y":0,"app":"a","win":[0,0,1,1]}"#, "missing field"),
            (r#"{"t":0,"kind":"key_down","key":"A","x":0,"y":0,"app":"a","win":[0,0,0,1]}"#, "degenerate"),
            (r#"{"t":0,"kind":"hover","x":0,"y":0,"app":"a","win":[0,0,1,1]}"#, "unknown event kind"),
        ];
        for (line, needle) in cases {
            let err = parse_event_line(line, 3).unwrap_err().to_string();
            assert!(err.contains(needle), "{err}");
            assert!(err.contains("line 3"), "{err}");
        }
    }
}
