//! Textual forms of points and poses: `"x,y"` and `"x,y,yaw"`.

use serde::{Deserialize, Deserializer, Serializer};

use crate::world::{Pose2D, Vec2};

fn number(s: &str) -> Result<f64, String> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| format!("'{}' is not a number", s.trim()))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("'{}' is not finite", s.trim()))
    }
}

pub fn parse_point(s: &str) -> Result<Vec2, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(format!("malformed point '{s}', expected \"x,y\""));
    }
    Ok(Vec2::new(number(parts[0])?, number(parts[1])?))
}

/// Accepts `"x,y,yaw"` or `"x,y"` (yaw 0).
pub fn parse_pose(s: &str) -> Result<Pose2D, String> {
    let parts: Vec<&str> = s.split(',').collect();
    match parts.len() {
        2 => Ok(Pose2D::new(number(parts[0])?, number(parts[1])?, 0.0)),
        3 => Ok(Pose2D::new(number(parts[0])?, number(parts[1])?, number(parts[2])?)),
        _ => Err(format!("malformed pose '{s}', expected \"x,y,yaw\"")),
    }
}

pub fn format_point(p: &Vec2) -> String {
    format!("{},{}", p.x, p.y)
}

pub fn format_pose(p: &Pose2D) -> String {
    format!("{},{},{}", p.x, p.y, p.yaw())
}

pub mod point {
    use super::*;

    pub fn serialize<S: Serializer>(p: &Vec2, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_point(p))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec2, D::Error> {
        let raw = String::deserialize(d)?;
        parse_point(&raw).map_err(serde::de::Error::custom)
    }
}

pub mod opt_point {
    use super::*;

    pub fn serialize<S: Serializer>(p: &Option<Vec2>, s: S) -> Result<S::Ok, S::Error> {
        match p {
            Some(p) => s.serialize_str(&format_point(p)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec2>, D::Error> {
        match Option::<String>::deserialize(d)? {
            Some(raw) => parse_point(&raw).map(Some).map_err(serde::de::Error::custom),
            None => Ok(None),
        }
    }
}

pub mod points {
    use super::*;
    use serde::ser::SerializeSeq;

    pub fn serialize<S: Serializer>(ps: &[Vec2], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(ps.len()))?;
        for p in ps {
            seq.serialize_element(&format_point(p))?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec2>, D::Error> {
        Vec::<String>::deserialize(d)?
            .iter()
            .map(|raw| parse_point(raw).map_err(serde::de::Error::custom))
            .collect()
    }
}

pub mod pose {
    use super::*;

    pub fn serialize<S: Serializer>(p: &Pose2D, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_pose(p))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Pose2D, D::Error> {
        let raw = String::deserialize(d)?;
        parse_pose(&raw).map_err(serde::de::Error::custom)
    }
}
