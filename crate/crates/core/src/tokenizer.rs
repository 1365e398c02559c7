//! Conversion of raw input events into discrete user actions.
//!
//! Modifier keys carry no meaning on their own: only the set of modifiers
//! held while a non-modifier key goes down matters. Every distinct
//! key+modifier combination is its own action (`C`, `CTRL+C`,
//! `CTRL+ALT+DEL`, ...). Mouse presses become clicks on an identified widget
//! when the patch resolver recognizes one, and generic clicks otherwise.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::events::{EventKind, InputEvent, MouseButton};
use crate::patch::PatchId;

/// Scroll events of the same direction closer than this merge into one action.
pub const SCROLL_COALESCE_MS: i64 = 200;

/// Elapsed time is quantized into buckets of this width, capped at [`MAX_ELAPSED_BUCKET`].
pub const ELAPSED_BUCKET_MS: i64 = 10_000;
pub const MAX_ELAPSED_BUCKET: u8 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Modifier {
    Ctrl,
    Shift,
    Alt,
    Meta,
}

impl Modifier {
    pub const ALL: [Modifier; 4] = [Modifier::Ctrl, Modifier::Shift, Modifier::Alt, Modifier::Meta];

    fn bit(self) -> u8 {
        1 << (self as u8)
    }

    pub fn name(self) -> &'static str {
        match self {
            Modifier::Ctrl => "CTRL",
            Modifier::Shift => "SHIFT",
            Modifier::Alt => "ALT",
            Modifier::Meta => "META",
        }
    }

    /// Maps a symbolic key name to a modifier. Left/right variants merge.
    pub fn from_key(key: &str) -> Option<Modifier> {
        match key.to_ascii_uppercase().as_str() {
            "CTRL" | "LCTRL" | "RCTRL" | "CONTROL" | "LCONTROL" | "RCONTROL" | "CONTROL_L"
            | "CONTROL_R" => Some(Modifier::Ctrl),
            "SHIFT" | "LSHIFT" | "RSHIFT" | "SHIFT_L" | "SHIFT_R" => Some(Modifier::Shift),
            "ALT" | "LALT" | "RALT" | "ALT_L" | "ALT_R" | "ALTGR" | "OPTION" => Some(Modifier::Alt),
            "META" | "LMETA" | "RMETA" | "WIN" | "LWIN" | "RWIN" | "SUPER" | "CMD" | "COMMAND" => {
                Some(Modifier::Meta)
            }
            _ => None,
        }
    }
}

/// Canonically ordered modifier set (CTRL, SHIFT, ALT, META).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Modifiers(u8);

impl Modifiers {
    pub const NONE: Modifiers = Modifiers(0);

    pub fn with(mut self, m: Modifier) -> Self {
        self.0 |= m.bit();
        self
    }

    pub fn contains(&self, m: Modifier) -> bool {
        self.0 & m.bit() != 0
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = Modifier> + '_ {
        Modifier::ALL.into_iter().filter(|m| self.contains(*m))
    }
}

impl FromIterator<Modifier> for Modifiers {
    fn from_iter<I: IntoIterator<Item = Modifier>>(iter: I) -> Self {
        iter.into_iter().fold(Modifiers::NONE, Modifiers::with)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ScrollDirection {
    Up,
    Down,
}

/// Identity of a user action, independent of when it happened.
///
/// The textual form doubles as the wire format: `CTRL+ALT+DEL`, `C`,
/// `button#7`, `button#7/right`, `click/left`, `scroll/up`. Key names are
/// upper case, so they never collide with the lower-case mouse forms.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ActionKind {
    Keystroke { key: String, modifiers: Modifiers },
    ButtonClick { patch_id: PatchId, button: MouseButton },
    GenericClick { button: MouseButton },
    Scroll { direction: ScrollDirection },
}

impl ActionKind {
    pub fn key(key: &str) -> Self {
        ActionKind::Keystroke { key: normalize_key(key), modifiers: Modifiers::NONE }
    }

    pub fn chord(mods: &[Modifier], key: &str) -> Self {
        ActionKind::Keystroke {
            key: normalize_key(key),
            modifiers: mods.iter().copied().collect(),
        }
    }

    pub fn button(patch_id: PatchId) -> Self {
        ActionKind::ButtonClick { patch_id, button: MouseButton::Left }
    }

    pub fn is_button_click(&self) -> bool {
        matches!(self, ActionKind::ButtonClick { .. })
    }

    pub fn patch_id(&self) -> Option<PatchId> {
        match self {
            ActionKind::ButtonClick { patch_id, .. } => Some(*patch_id),
            _ => None,
        }
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActionKind::Keystroke { key, modifiers } => {
                for m in modifiers.iter() {
                    write!(f, "{}+", m.name())?;
                }
                f.write_str(key)
            }
            ActionKind::ButtonClick { patch_id, button } => {
                write!(f, "button#{}", patch_id.0)?;
                if *button != MouseButton::Left {
                    write!(f, "/{button}")?;
                }
                Ok(())
            }
            ActionKind::GenericClick { button } => write!(f, "click/{button}"),
            ActionKind::Scroll { direction: ScrollDirection::Up } => f.write_str("scroll/up"),
            ActionKind::Scroll { direction: ScrollDirection::Down } => f.write_str("scroll/down"),
        }
    }
}

impl FromStr for ActionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("unparseable action {s:?}"));
        if let Some(rest) = s.strip_prefix("button#") {
            let (id, button) = match rest.split_once('/') {
                Some((id, b)) => (id, b.parse().map_err(|_| bad())?),
                None => (rest, MouseButton::Left),
            };
            let id = id.parse().map_err(|_| bad())?;
            return Ok(ActionKind::ButtonClick { patch_id: PatchId(id), button });
        }
        if let Some(b) = s.strip_prefix("click/") {
            return Ok(ActionKind::GenericClick { button: b.parse().map_err(|_| bad())? });
        }
        match s {
            "scroll/up" => return Ok(ActionKind::Scroll { direction: ScrollDirection::Up }),
            "scroll/down" => return Ok(ActionKind::Scroll { direction: ScrollDirection::Down }),
            _ => {}
        }
        if s.is_empty() {
            return Err(bad());
        }
        // A trailing "+" is the plus key itself ("CTRL++").
        let (mods_part, key) = match s.strip_suffix("++") {
            _ if s == "+" => ("", "+"),
            Some(prefix) => (prefix, "+"),
            None => match s.rsplit_once('+') {
                Some((m, k)) => (m, k),
                None => ("", s),
            },
        };
        if key.is_empty() || Modifier::from_key(key).is_some() {
            return Err(bad());
        }
        let mut modifiers = Modifiers::NONE;
        if !mods_part.is_empty() {
            for part in mods_part.split('+') {
                modifiers = modifiers.with(Modifier::from_key(part).ok_or_else(bad)?);
            }
        }
        Ok(ActionKind::Keystroke { key: normalize_key(key), modifiers })
    }
}

impl Serialize for ActionKind {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ActionKind {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UserAction {
    pub kind: ActionKind,
    pub timestamp_ms: i64,
}

impl UserAction {
    pub fn new(kind: ActionKind, timestamp_ms: i64) -> Self {
        Self { kind, timestamp_ms }
    }
}

impl fmt::Display for UserAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.kind.fmt(f)
    }
}

pub fn normalize_key(key: &str) -> String {
    key.trim().to_ascii_uppercase()
}

/// An emitted action together with the index of the event that produced it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub action: UserAction,
    pub event_index: usize,
}

/// Tokenizes one session of events. `resolve_patch` is asked once per mouse
/// press and returns the id of the clicked widget if it recognizes one.
pub fn tokenize_events<F>(events: &[InputEvent], resolve_patch: F) -> Result<Vec<UserAction>>
where
    F: FnMut(&InputEvent) -> Option<PatchId>,
{
    Ok(tokenize_with_sources(events, resolve_patch)?
        .into_iter()
        .map(|t| t.action)
        .collect())
}

pub fn tokenize_with_sources<F>(events: &[InputEvent], mut resolve_patch: F) -> Result<Vec<Token>>
where
    F: FnMut(&InputEvent) -> Option<PatchId>,
{
    let mut held: BTreeSet<String> = BTreeSet::new();
    let mut out: Vec<Token> = Vec::new();
    // (direction, timestamp of the latest scroll event in the run)
    let mut scroll_run: Option<(ScrollDirection, i64)> = None;
    let mut prev_ts = i64::MIN;

    for (idx, ev) in events.iter().enumerate() {
        if ev.timestamp_ms < prev_ts {
            return Err(Error::MalformedInput {
                line: idx + 1,
                reason: format!("timestamp {} earlier than {}", ev.timestamp_ms, prev_ts),
            });
        }
        prev_ts = ev.timestamp_ms;

        match &ev.kind {
            EventKind::KeyDown(raw) => {
                let key = normalize_key(raw);
                scroll_run = None;
                if Modifier::from_key(&key).is_some() {
                    held.insert(key);
                    continue;
                }
                held.insert(key.clone());
                let modifiers = held.iter().filter_map(|k| Modifier::from_key(k)).collect();
                out.push(Token {
                    action: UserAction::new(ActionKind::Keystroke { key, modifiers }, ev.timestamp_ms),
                    event_index: idx,
                });
            }
            EventKind::KeyUp(raw) => {
                let key = normalize_key(raw);
                if !held.remove(&key) {
                    log::debug!("ignoring key_up for {key} without matching key_down (event {idx})");
                }
            }
            EventKind::MouseDown(button) => {
                scroll_run = None;
                let kind = match resolve_patch(ev) {
                    Some(patch_id) => ActionKind::ButtonClick { patch_id, button: *button },
                    None => ActionKind::GenericClick { button: *button },
                };
                out.push(Token { action: UserAction::new(kind, ev.timestamp_ms), event_index: idx });
            }
            EventKind::MouseUp(_) => {}
            EventKind::Scroll(dy) => {
                let direction = match dy.signum() {
                    1 => ScrollDirection::Up,
                    -1 => ScrollDirection::Down,
                    _ => continue,
                };
                if let Some((dir, last)) = scroll_run {
                    if dir == direction && ev.timestamp_ms - last <= SCROLL_COALESCE_MS {
                        scroll_run = Some((dir, ev.timestamp_ms));
                        continue;
                    }
                }
                scroll_run = Some((direction, ev.timestamp_ms));
                out.push(Token {
                    action: UserAction::new(ActionKind::Scroll { direction }, ev.timestamp_ms),
                    event_index: idx,
                });
            }
        }
    }
    Ok(out)
}

/// Context of an action before the application vocabulary is known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawContext {
    pub app: String,
    pub rel_x: f64,
    pub rel_y: f64,
    pub elapsed_bucket: u8,
}

impl RawContext {
    pub fn from_event(prev_timestamp_ms: Option<i64>, event: &InputEvent) -> Self {
        let w = &event.window;
        let rel = |pos: i32, origin: i32, extent: i32| {
            (f64::from(pos - origin) / f64::from(extent.max(1))).clamp(0.0, 1.0)
        };
        let elapsed_ms = prev_timestamp_ms.map_or(0, |p| (event.timestamp_ms - p).max(0));
        RawContext {
            app: event.app_id.clone(),
            rel_x: rel(event.cursor.x, w.x, w.w),
            rel_y: rel(event.cursor.y, w.y, w.h),
            elapsed_bucket: elapsed_bucket(elapsed_ms),
        }
    }

    pub fn encode(&self, app_vocab: &HashMap<String, usize>, app_count: usize) -> ContextFeatures {
        ContextFeatures {
            app_index: app_vocab.get(&self.app).copied().filter(|&i| i < app_count),
            app_count,
            rel_x: self.rel_x,
            rel_y: self.rel_y,
            elapsed_bucket: self.elapsed_bucket.min(MAX_ELAPSED_BUCKET),
        }
    }
}

pub fn elapsed_bucket(elapsed_ms: i64) -> u8 {
    (elapsed_ms.max(0) / ELAPSED_BUCKET_MS).min(i64::from(MAX_ELAPSED_BUCKET)) as u8
}

/// Context features attached to each action. The application one-hot is
/// stored as an index; unknown applications have no set entry.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextFeatures {
    pub app_index: Option<usize>,
    pub app_count: usize,
    pub rel_x: f64,
    pub rel_y: f64,
    pub elapsed_bucket: u8,
}

impl ContextFeatures {
    /// All-zero context, used for padding positions.
    pub fn empty(app_count: usize) -> Self {
        Self { app_index: None, app_count, rel_x: 0.0, rel_y: 0.0, elapsed_bucket: 0 }
    }

    pub fn app_onehot(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.app_count];
        if let Some(i) = self.app_index {
            v[i] = 1.0;
        }
        v
    }
}

/// Context for `event`, which produced `_action`. `prev_timestamp_ms` is the
/// timestamp of the previous action in the session, if any.
pub fn encode_context(
    _action: &UserAction,
    prev_timestamp_ms: Option<i64>,
    event: &InputEvent,
    app_vocab: &HashMap<String, usize>,
) -> ContextFeatures {
    RawContext::from_event(prev_timestamp_ms, event).encode(app_vocab, app_vocab.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{Point, Rect};

    fn down(t: i64, k: &str) -> InputEvent {
        InputEvent::new(t, EventKind::KeyDown(k.into()))
    }

    fn up(t: i64, k: &str) -> InputEvent {
        InputEvent::new(t, EventKind::KeyUp(k.into()))
    }

    fn labels(actions: &[UserAction]) -> Vec<String> {
        actions.iter().map(|a| a.to_string()).collect()
    }

    fn no_patch(_: &InputEvent) -> Option<PatchId> {
        None
    }

    #[test]
    fn single_key() {
        let acts = tokenize_events(&[down(0, "C"), up(10, "C")], no_patch).unwrap();
        assert_eq!(acts, vec![UserAction::new(ActionKind::key("C"), 0)]);
    }

    #[test]
    fn lone_modifier_emits_nothing() {
        let acts = tokenize_events(&[down(0, "SHIFT"), up(10, "SHIFT")], no_patch).unwrap();
        assert!(acts.is_empty());
    }

    #[test]
    fn left_and_right_modifiers_merge() {
        let evs = [down(0, "RCTRL"), down(1, "c"), up(2, "c"), up(3, "RCTRL")];
        let acts = tokenize_events(&evs, no_patch).unwrap();
        assert_eq!(labels(&acts), vec!["CTRL+C"]);
        let evs = [down(0, "LSHIFT"), down(1, "RSHIFT"), up(2, "LSHIFT"), down(3, "A")];
        let acts = tokenize_events(&evs, no_patch).unwrap();
        assert_eq!(labels(&acts), vec!["SHIFT+A"], "RSHIFT still held");
    }

    #[test]
    fn auto_repeat_emits_each_press() {
        let evs = [down(0, "J"), down(30, "J"), down(60, "J"), up(70, "J")];
        assert_eq!(tokenize_events(&evs, no_patch).unwrap().len(), 3);
    }

    #[test]
    fn unmatched_key_up_is_ignored() {
        let evs = [up(0, "CTRL"), up(1, "X"), down(2, "X")];
        assert_eq!(labels(&tokenize_events(&evs, no_patch).unwrap()), vec!["X"]);
    }

    #[test]
    fn out_of_order_timestamps_rejected() {
        let err = tokenize_events(&[down(10, "A"), down(5, "B")], no_patch).unwrap_err();
        assert!(matches!(err, Error::MalformedInput { line: 2, .. }), "{err}");
    }

    #[test]
    fn clicks_use_resolver() {
        let click = InputEvent::new(0, EventKind::MouseDown(MouseButton::Left)).at(Point::new(15, 15));
        let acts = tokenize_events(&[click.clone()], |_| Some(PatchId(7))).unwrap();
        assert_eq!(acts[0].kind, ActionKind::ButtonClick { patch_id: PatchId(7), button: MouseButton::Left });
        let acts = tokenize_events(&[click], no_patch).unwrap();
        assert_eq!(acts[0].kind, ActionKind::GenericClick { button: MouseButton::Left });
    }

    #[test]
    fn scroll_coalescing() {
        let s = |t, dy| InputEvent::new(t, EventKind::Scroll(dy));
        let evs = [s(0, 1), s(150, 2), s(300, 1), s(700, 1), s(750, -1), s(760, 0)];
        let acts = tokenize_events(&evs, no_patch).unwrap();
        assert_eq!(labels(&acts), vec!["scroll/up", "scroll/up", "scroll/down"]);
        assert_eq!(acts[1].timestamp_ms, 700);
        // an intervening action breaks the run
        let evs = [s(0, 1), down(10, "A"), s(20, 1)];
        assert_eq!(tokenize_events(&evs, no_patch).unwrap().len(), 3);
    }

    #[test]
    fn action_labels_round_trip() {
        let kinds = [
            ActionKind::chord(&[Modifier::Alt, Modifier::Ctrl], "del"),
            ActionKind::key("SPACE"),
            ActionKind::chord(&[Modifier::Ctrl], "+"),
            ActionKind::button(PatchId(12)),
            ActionKind::ButtonClick { patch_id: PatchId(3), button: MouseButton::Right },
            ActionKind::GenericClick { button: MouseButton::Middle },
            ActionKind::Scroll { direction: ScrollDirection::Down },
        ];
        for k in kinds {
            let label = k.to_string();
            assert_eq!(label.parse::<ActionKind>().unwrap(), k, "{label}");
        }
        assert_eq!(ActionKind::chord(&[Modifier::Alt, Modifier::Ctrl], "DEL").to_string(), "CTRL+ALT+DEL");
        assert!("CTRL".parse::<ActionKind>().is_err());
        assert!("FOO+A".parse::<ActionKind>().is_err());
        assert!("button#x".parse::<ActionKind>().is_err());
    }

    fn ctx_event(t: i64, x: i32, y: i32, app: &str) -> InputEvent {
        InputEvent::new(t, EventKind::KeyDown("A".into()))
            .at(Point::new(x, y))
            .in_app(app, Rect::new(100, 50, 200, 100))
    }

    #[test]
    fn context_encoding() {
        let apps: HashMap<String, usize> = [("ed".to_string(), 0), ("web".to_string(), 1)].into();
        let a = UserAction::new(ActionKind::key("A"), 0);

        let c = encode_context(&a, Some(0), &ctx_event(25_000, 200, 100, "web"), &apps);
        assert_eq!(c.elapsed_bucket, 2);
        assert_eq!((c.rel_x, c.rel_y), (0.5, 0.5));
        assert_eq!(c.app_onehot(), vec![0.0, 1.0]);

        let c = encode_context(&a, Some(0), &ctx_event(120_000, 0, 1000, "ed"), &apps);
        assert_eq!(c.elapsed_bucket, 3);
        assert_eq!((c.rel_x, c.rel_y), (0.0, 1.0));

        let c = encode_context(&a, None, &ctx_event(99_000, 150, 75, "unknown"), &apps);
        assert_eq!(c.elapsed_bucket, 0);
        assert_eq!(c.app_onehot(), vec![0.0, 0.0]);
    }

    #[test]
    fn elapsed_bucket_edges() {
        assert_eq!(elapsed_bucket(9_999), 0);
        assert_eq!(elapsed_bucket(10_000), 1);
        assert_eq!(elapsed_bucket(29_999), 2);
        assert_eq!(elapsed_bucket(30_000), 3);
        assert_eq!(elapsed_bucket(-5), 0);
    }
}
