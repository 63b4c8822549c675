//! Textual forms shared by the CLI flags and the config files.

use gff_core::conditioner::{Avoid, BoundaryCondition};
use gff_core::lattice::Shape;

use crate::error::{value_err, Result};

fn numbers(key: &str, body: &str, count: usize) -> Result<Vec<f64>> {
    let v: Vec<f64> = body
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| value_err(key, format!("`{t}` is not a number")))
        })
        .collect::<Result<_>>()?;
    if v.len() != count {
        return Err(value_err(
            key,
            format!("expected {count} number(s), got {}", v.len()),
        ));
    }
    Ok(v)
}

fn split_kind<'a>(key: &str, s: &'a str) -> Result<(&'a str, &'a str)> {
    s.split_once(':')
        .ok_or_else(|| value_err(key, format!("`{s}` should look like kind:value")))
}

/// `ball:R`, `interval:a,b` or `halfline:b`.
pub fn avoid(s: &str) -> Result<Avoid> {
    let (kind, body) = split_kind("avoid", s)?;
    match kind {
        "ball" => Ok(Avoid::Ball {
            radius: numbers("avoid", body, 1)?[0],
        }),
        "interval" => {
            let v = numbers("avoid", body, 2)?;
            Ok(Avoid::Interval { a: v[0], b: v[1] })
        }
        "halfline" => Ok(Avoid::HalfLine {
            b: numbers("avoid", body, 1)?[0],
        }),
        _ => Err(value_err("avoid", format!("unknown set `{kind}`"))),
    }
}

pub fn avoid_to_string(a: &Avoid) -> String {
    match *a {
        Avoid::Ball { radius } => format!("ball:{radius}"),
        Avoid::Interval { a, b } => format!("interval:{a},{b}"),
        Avoid::HalfLine { b } => format!("halfline:{b}"),
    }
}

/// `zero`, `annulus:R` (clamp on the annulus of the doubled box) or `clamp:R`.
pub fn boundary(s: &str) -> Result<BoundaryCondition> {
    if s == "zero" {
        return Ok(BoundaryCondition::DirichletZero);
    }
    let (kind, body) = split_kind("bc", s)?;
    let level = numbers("bc", body, 1)?[0];
    match kind {
        "annulus" => Ok(BoundaryCondition::ClampAnnulus { level }),
        "clamp" => Ok(BoundaryCondition::ClampExact { level }),
        _ => Err(value_err("bc", format!("unknown boundary `{kind}`"))),
    }
}

pub fn boundary_to_string(bc: &BoundaryCondition) -> String {
    match *bc {
        BoundaryCondition::DirichletZero => "zero".into(),
        BoundaryCondition::ClampAnnulus { level } => format!("annulus:{level}"),
        BoundaryCondition::ClampExact { level } => format!("clamp:{level}"),
    }
}

/// `disc:r`, `square:s` or `annulus:inner,outer`; `box` for the whole box.
pub fn shape(s: &str) -> Result<Option<Shape>> {
    if s == "box" {
        return Ok(None);
    }
    let (kind, body) = split_kind("shape", s)?;
    let shape = match kind {
        "disc" => Shape::Disc {
            radius: numbers("shape", body, 1)?[0],
        },
        "square" => Shape::Square {
            side: numbers("shape", body, 1)?[0],
        },
        "annulus" => {
            let v = numbers("shape", body, 2)?;
            Shape::Annulus {
                inner: v[0],
                outer: v[1],
            }
        }
        _ => return Err(value_err("shape", format!("unknown shape `{kind}`"))),
    };
    shape
        .validate()
        .map_err(|e| value_err("shape", e.to_string()))?;
    Ok(Some(shape))
}

pub fn shape_to_string(s: Option<Shape>) -> String {
    match s {
        None => "box".into(),
        Some(Shape::Disc { radius }) => format!("disc:{radius}"),
        Some(Shape::Square { side }) => format!("square:{side}"),
        Some(Shape::Annulus { inner, outer }) => format!("annulus:{inner},{outer}"),
    }
}

/// Comma-separated list of values.
pub fn list<T: std::str::FromStr>(key: &str, s: &str) -> Result<Vec<T>> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| {
            t.trim()
                .parse::<T>()
                .map_err(|_| value_err(key, format!("`{t}` is not valid")))
        })
        .collect()
}
