//! Line-based text form of [`EnvSpec`].
//!
//! ```text
//! kind = spiral-maze
//! episode_length = 100
//! bounds = 0.0 0.0 11.0 11.0
//! wall = 1.0 0.0 2.0 10.0
//! oracle_waypoint = 0.5 10.5
//! ```
//!
//! Floats are written in Rust's shortest round-trip form, so parsing the
//! output reproduces the spec bit for bit. `#` starts a comment.

use std::fmt::Write as _;

use super::{EnvKind, EnvSpec, Geometry, Observation, Point, Rect};
use crate::{Error, Result};

fn join(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| format!("{v:?}"))
        .collect::<Vec<_>>()
        .join(" ")
}

impl EnvSpec {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let b = &self.geometry.bounds;
        // Writing into a String cannot fail.
        let _ = writeln!(s, "kind = {}", self.kind);
        let _ = writeln!(s, "episode_length = {}", self.episode_length);
        let _ = writeln!(s, "step_scale = {:?}", self.step_scale);
        let _ = writeln!(s, "success_radius = {:?}", self.success_radius);
        let _ = writeln!(s, "contact_radius = {:?}", self.contact_radius);
        let _ = writeln!(s, "start_jitter = {:?}", self.start_jitter);
        let _ = writeln!(s, "nominal_start = {}", join(self.nominal_start.as_slice()));
        let _ = writeln!(s, "target_goal = {}", join(self.target_goal.as_slice()));
        let _ = writeln!(s, "bounds = {}", join(&[b.x1, b.y1, b.x2, b.y2]));
        for w in &self.geometry.walls {
            let _ = writeln!(s, "wall = {}", join(&[w.x1, w.y1, w.x2, w.y2]));
        }
        for p in &self.oracle_waypoints {
            let _ = writeln!(s, "oracle_waypoint = {}", join(p));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let ctx = "environment spec";
        let mut kind = None;
        let mut episode_length = None;
        let mut step_scale = None;
        let mut success_radius = None;
        let mut contact_radius = None;
        let mut start_jitter = None;
        let mut nominal_start = None;
        let mut target_goal = None;
        let mut bounds = None;
        let mut walls = Vec::new();
        let mut waypoints = Vec::new();

        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = |msg: String| Error::parse(ctx, format!("line {}: {msg}", lineno + 1));
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| at(format!("expected `key = value`, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            let floats = || -> Result<Vec<f64>> {
                value
                    .split_whitespace()
                    .map(|v| v.parse::<f64>().map_err(|e| at(format!("{key}: {e}"))))
                    .collect()
            };
            let scalar = || -> Result<f64> {
                match floats()?[..] {
                    [v] => Ok(v),
                    _ => Err(at(format!("{key} takes one number"))),
                }
            };
            let quad = || -> Result<Rect> {
                match floats()?[..] {
                    [a, b, c, d] => Ok(Rect::new(a, b, c, d)),
                    _ => Err(at(format!("{key} takes four numbers"))),
                }
            };
            match key {
                "kind" => kind = Some(value.parse::<EnvKind>()?),
                "episode_length" => {
                    episode_length = Some(
                        value
                            .parse::<usize>()
                            .map_err(|e| at(format!("{key}: {e}")))?,
                    )
                }
                "step_scale" => step_scale = Some(scalar()?),
                "success_radius" => success_radius = Some(scalar()?),
                "contact_radius" => contact_radius = Some(scalar()?),
                "start_jitter" => start_jitter = Some(scalar()?),
                "nominal_start" | "target_goal" => {
                    let v = floats()?;
                    if v.len() != 2 && v.len() != 4 {
                        return Err(at(format!("{key} takes 2 or 4 numbers")));
                    }
                    let obs = Some(Observation::new(&v));
                    if key == "nominal_start" {
                        nominal_start = obs;
                    } else {
                        target_goal = obs;
                    }
                }
                "bounds" => bounds = Some(quad()?),
                "wall" => walls.push(quad()?),
                "oracle_waypoint" => match floats()?[..] {
                    [x, y] => waypoints.push([x, y] as Point),
                    _ => return Err(at(format!("{key} takes two numbers"))),
                },
                other => return Err(at(format!("unknown key {other:?}"))),
            }
        }

        let missing = |name: &str| Error::parse(ctx, format!("missing key {name}"));
        let spec = EnvSpec {
            kind: kind.ok_or_else(|| missing("kind"))?,
            episode_length: episode_length.ok_or_else(|| missing("episode_length"))?,
            step_scale: step_scale.ok_or_else(|| missing("step_scale"))?,
            success_radius: success_radius.ok_or_else(|| missing("success_radius"))?,
            contact_radius: contact_radius.unwrap_or(0.0),
            start_jitter: start_jitter.ok_or_else(|| missing("start_jitter"))?,
            geometry: Geometry {
                bounds: bounds.ok_or_else(|| missing("bounds"))?,
                walls,
            },
            nominal_start: nominal_start.ok_or_else(|| missing("nominal_start"))?,
            target_goal: target_goal.ok_or_else(|| missing("target_goal"))?,
            oracle_waypoints: waypoints,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Structural checks shared by parsing and the runner.
    pub fn validate(&self) -> Result<()> {
        let want = if self.kind.is_maze() { 2 } else { 4 };
        if self.episode_length < 1 {
            return Err(Error::Validation(
                "episode_length must be at least 1".into(),
            ));
        }
        if self.nominal_start.dim() != want || self.target_goal.dim() != want {
            return Err(Error::Validation(format!(
                "{} observations have {want} coordinates",
                self.kind
            )));
        }
        if !(self.step_scale > 0.0 && self.success_radius > 0.0 && self.start_jitter >= 0.0) {
            return Err(Error::Validation(
                "step_scale and success_radius must be positive, start_jitter non-negative".into(),
            ));
        }
        if !self.is_valid(&self.nominal_start) {
            return Err(Error::Validation("nominal start lies in a wall".into()));
        }
        Ok(())
    }
}
