//! Pulls a click coordinate out of free-form model output.
//!
//! Four output families are recognised, tried in this order:
//!
//! 1. a parenthesised pair: `(123,456)`, `( 10.5 , 20 )`
//! 2. key/value text: `x=123, y=456`
//! 3. a flat JSON object with numeric `x` and `y`: `{"x": 123, "y": 456}`
//! 4. a point tag: `<point>123 456</point>`
//!
//! The first family that matches anywhere wins, and within a family the
//! earliest match in the text wins. Anything else is an error.

use std::sync::LazyLock;

use regex::Regex;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("no coordinate found")]
    NoCoordinateFound,
}

const NUM: &str = r"(\d+(?:\.\d+)?)";

static PAREN: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(&format!(r"\(\s*{NUM}\s*,\s*{NUM}\s*\)")).unwrap());
static KEY_VALUE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(&format!(r"(?i)\bx\s*=\s*{NUM}\s*[,;]?\s*\by\s*=\s*{NUM}")).unwrap()
});
static JSON_OBJECT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\{[^{}]*\}").unwrap());
static POINT_TAG: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(&format!(r"(?i)<point>\s*{NUM}[\s,]+{NUM}\s*</point>")).unwrap()
});

fn pair(re: &Regex, text: &str) -> Option<(f64, f64)> {
    let caps = re.captures(text)?;
    Some((caps[1].parse().ok()?, caps[2].parse().ok()?))
}

fn json_pair(text: &str) -> Option<(f64, f64)> {
    JSON_OBJECT.find_iter(text).find_map(|m| {
        let value: serde_json::Value = serde_json::from_str(m.as_str()).ok()?;
        let x = value.get("x")?.as_f64()?;
        let y = value.get("y")?.as_f64()?;
        (x.is_finite() && y.is_finite()).then_some((x, y))
    })
}

pub fn parse_coordinates(text: &str) -> Result<(f64, f64), ParseError> {
    pair(&PAREN, text)
        .or_else(|| pair(&KEY_VALUE, text))
        .or_else(|| json_pair(text))
        .or_else(|| pair(&POINT_TAG, text))
        .ok_or(ParseError::NoCoordinateFound)
}
