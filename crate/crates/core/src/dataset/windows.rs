use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{DatasetError, DialogueRecord, Label};

/// Number of most recent context turns a model sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum WindowSize {
    Turns(usize),
    /// The whole context.
    Max,
}

impl WindowSize {
    /// Turns actually used for a context of `n` turns.
    pub fn effective(self, n: usize) -> usize {
        match self {
            WindowSize::Turns(w) => w.min(n),
            WindowSize::Max => n,
        }
    }
}

impl fmt::Display for WindowSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WindowSize::Turns(w) => write!(f, "{w}"),
            WindowSize::Max => f.write_str("max"),
        }
    }
}

impl FromStr for WindowSize {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("max") {
            return Ok(WindowSize::Max);
        }
        s.parse()
            .map(WindowSize::Turns)
            .map_err(|_| DatasetError::InvalidArgument(format!("bad window size {s:?}")))
    }
}

impl Serialize for WindowSize {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            WindowSize::Turns(w) => s.serialize_u64(*w as u64),
            WindowSize::Max => s.serialize_str("max"),
        }
    }
}

impl<'de> Deserialize<'de> for WindowSize {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            N(usize),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::N(n) => Ok(WindowSize::Turns(n)),
            Raw::S(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Parses `"1,2,3,max"`; the result is sorted and deduplicated.
pub fn parse_window_sizes(s: &str) -> Result<Vec<WindowSize>, DatasetError> {
    let mut sizes = s
        .split(',')
        .filter(|p| !p.trim().is_empty())
        .map(str::parse)
        .collect::<Result<Vec<WindowSize>, _>>()?;
    if sizes.is_empty() {
        return Err(DatasetError::InvalidArgument(
            "no window sizes given".into(),
        ));
    }
    sizes.sort();
    sizes.dedup();
    Ok(sizes)
}

pub fn default_window_sizes() -> Vec<WindowSize> {
    vec![
        WindowSize::Turns(1),
        WindowSize::Turns(2),
        WindowSize::Turns(3),
        WindowSize::Max,
    ]
}

/// `{1, ..., n_max}` over the longest context in the corpus.
pub fn max_context_sizes(records: &[DialogueRecord]) -> Vec<WindowSize> {
    let n_max = records.iter().map(|r| r.context.len()).max().unwrap_or(0);
    (1..=n_max.max(1)).map(WindowSize::Turns).collect()
}

/// A record seen through a window of its most recent turns.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextWindowView {
    pub source_id: String,
    /// Number of turns in `turns`.
    pub window_size: usize,
    pub turns: Vec<String>,
    pub response: String,
    pub label: Option<Label>,
}

/// One view per distinct effective window, ascending by size.
pub fn context_windows(record: &DialogueRecord, sizes: &[WindowSize]) -> Vec<ContextWindowView> {
    let n = record.context.len();
    let mut effective: Vec<usize> = sizes.iter().map(|w| w.effective(n)).collect();
    effective.sort_unstable();
    effective.dedup();
    effective
        .into_iter()
        .map(|w| ContextWindowView {
            source_id: record.id.clone(),
            window_size: w,
            turns: record.context[n - w..].to_vec(),
            response: record.response.clone(),
            label: record.label,
        })
        .collect()
}

pub fn expand_corpus(records: &[DialogueRecord], sizes: &[WindowSize]) -> Vec<ContextWindowView> {
    records
        .iter()
        .flat_map(|r| context_windows(r, sizes))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(turns: &[&str]) -> DialogueRecord {
        DialogueRecord::new(
            "x",
            turns.iter().map(|s| s.to_string()).collect(),
            "r",
            None,
        )
    }

    fn sizes(ws: &[usize]) -> Vec<WindowSize> {
        ws.iter().map(|&w| WindowSize::Turns(w)).collect()
    }

    #[test]
    fn three_windows() {
        let views = context_windows(&rec(&["c1", "c2", "c3"]), &sizes(&[1, 2, 3]));
        let turns: Vec<Vec<String>> = views.into_iter().map(|v| v.turns).collect();
        assert_eq!(
            turns,
            vec![vec!["c3"], vec!["c2", "c3"], vec!["c1", "c2", "c3"]]
        );
    }

    #[test]
    fn short_context_dedups() {
        assert_eq!(context_windows(&rec(&["c1"]), &sizes(&[1, 2, 3])).len(), 1);
    }

    #[test]
    fn zero_window_is_response_only() {
        let views = context_windows(&rec(&["c1", "c2"]), &sizes(&[0]));
        assert_eq!(views.len(), 1);
        assert!(views[0].turns.is_empty());
    }

    #[test]
    fn parses_cli_list() {
        assert_eq!(
            parse_window_sizes("1,2,3,max").unwrap(),
            default_window_sizes()
        );
        assert_eq!(parse_window_sizes("3, 1,1").unwrap(), sizes(&[1, 3]));
        assert!(parse_window_sizes("two").is_err());
        assert!(parse_window_sizes("").is_err());
    }

    #[test]
    fn serde_mixes_numbers_and_max() {
        let s: Vec<WindowSize> = serde_json::from_str(r#"[1, 2, "max"]"#).unwrap();
        assert_eq!(
            s,
            vec![WindowSize::Turns(1), WindowSize::Turns(2), WindowSize::Max]
        );
        assert_eq!(serde_json::to_string(&s).unwrap(), r#"[1,2,"max"]"#);
    }

    #[test]
    fn max_context_covers_longest() {
        let recs = vec![rec(&["a"]), rec(&["a", "b", "c", "d"])];
        assert_eq!(max_context_sizes(&recs), sizes(&[1, 2, 3, 4]));
    }
}
