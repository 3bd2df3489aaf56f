use std::fmt;
use std::str::FromStr;

use chrono::Datelike;
use regex::Regex;
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

use super::IngestError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Convention {
    #[serde(rename = "WHC")]
    Whc,
    #[serde(rename = "ICHC")]
    Ichc,
}

impl fmt::Display for Convention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Convention::Whc => "WHC",
            Convention::Ichc => "ICHC",
        })
    }
}

impl FromStr for Convention {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "WHC" => Ok(Convention::Whc),
            "ICHC" | "ICH" => Ok(Convention::Ichc),
            other => Err(format!("unknown convention `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SessionKind {
    Ordinary,
    Extraordinary,
}

/// A committee session: convention organ, session number, ordinary or
/// extraordinary, and the calendar year it was held.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SessionRef {
    pub convention: Convention,
    pub number: u32,
    pub kind: SessionKind,
    pub year: i32,
}

const FIRST_YEAR: i32 = 1973;

impl SessionRef {
    pub fn new(
        convention: Convention,
        number: u32,
        kind: SessionKind,
        year: i32,
    ) -> Result<Self, String> {
        if number == 0 {
            return Err("session number must be at least 1".into());
        }
        let current = chrono::Utc::now().year();
        if !(FIRST_YEAR..=current).contains(&year) {
            return Err(format!("year {year} outside {FIRST_YEAR}..={current}"));
        }
        Ok(SessionRef {
            convention,
            number,
            kind,
            year,
        })
    }

    /// Label used by filters and ids: `WHC-35`, or `WHC-10EXT` for an
    /// extraordinary session.
    pub fn label(&self) -> String {
        match self.kind {
            SessionKind::Ordinary => format!("{}-{}", self.convention, self.number),
            SessionKind::Extraordinary => format!("{}-{}EXT", self.convention, self.number),
        }
    }

    /// Year of an ordinary session from its number. Extraordinary sessions
    /// have no regular schedule and return `None`.
    pub fn ordinary_year(convention: Convention, number: u32) -> Option<i32> {
        if number == 0 {
            return None;
        }
        let n = number as i32;
        Some(match convention {
            // 1st session 1977, annual; no session was held in 2020 or 2022.
            Convention::Whc if n <= 43 => 1976 + n,
            Convention::Whc if n == 44 => 2021,
            Convention::Whc => 1978 + n,
            // 1st session 2006, annual.
            Convention::Ichc => 2005 + n,
        })
    }
}

impl fmt::Display for SessionRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

fn file_name_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)^(WHC|ICHC)-(\d{1,3})(COM|EXTCOM)(?:-(\d{4}))?\.txt$").unwrap()
    })
}

/// Parses `{convention}-{number}{kind}.txt`, e.g. `WHC-35COM.txt` or
/// `ICHC-12COM.txt`. Extraordinary sessions (`EXTCOM`) need the year as a
/// suffix: `WHC-10EXTCOM-2012.txt`. An explicit year also overrides the
/// computed one for ordinary sessions.
pub fn parse_session_file_name(name: &str) -> Result<SessionRef, IngestError> {
    let fail = |reason: &str| IngestError::SessionName {
        name: name.to_owned(),
        reason: reason.to_owned(),
    };
    let caps = file_name_pattern()
        .captures(name)
        .ok_or_else(|| fail("expected {WHC|ICHC}-{number}{COM|EXTCOM}[-{year}].txt"))?;
    let convention: Convention = caps[1].parse().map_err(|e: String| fail(&e))?;
    let number: u32 = caps[2].parse().map_err(|_| fail("bad session number"))?;
    let kind = if caps[3].eq_ignore_ascii_case("EXTCOM") {
        SessionKind::Extraordinary
    } else {
        SessionKind::Ordinary
    };
    let year = match caps.get(4) {
        Some(y) => y.as_str().parse().map_err(|_| fail("bad year"))?,
        None if kind == SessionKind::Ordinary => SessionRef::ordinary_year(convention, number)
            .ok_or_else(|| fail("session number must be at least 1"))?,
        None => return Err(fail("extraordinary sessions need a -YYYY year suffix")),
    };
    SessionRef::new(convention, number, kind, year).map_err(|e| fail(&e))
}
