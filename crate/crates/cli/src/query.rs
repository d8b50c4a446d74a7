//! `predict` query syntax: `HEAD REL TAIL [@binN | @YEAR | @?]`, with `?`
//! in exactly one position.

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum When {
    /// No time given; the latest bin is used.
    Latest,
    Bin(usize),
    Year(i32),
    /// Rank the bins themselves.
    Unknown,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Missing {
    Head,
    Relation,
    Tail,
    Time,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PredictQuery {
    pub head: Option<String>,
    pub relation: Option<String>,
    pub tail: Option<String>,
    pub when: When,
    pub missing: Missing,
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

impl std::str::FromStr for PredictQuery {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        let mut tokens: Vec<&str> = s.split_whitespace().collect();
        let when = match tokens.last().copied() {
            Some(t) if t.starts_with('@') => {
                let spec = &t[1..];
                tokens.pop();
                if spec == "?" {
                    When::Unknown
                } else if let Some(n) = spec.strip_prefix("bin") {
                    When::Bin(n.parse().map_err(|_| usage(format!("bad bin `{t}`")))?)
                } else {
                    When::Year(spec.parse().map_err(|_| usage(format!("bad time `{t}`")))?)
                }
            }
            _ => When::Latest,
        };
        if tokens.len() != 3 {
            return Err(usage(format!("query needs HEAD REL TAIL, found {} fields", tokens.len())));
        }
        let slot = |t: &str| (t != "?").then(|| t.to_string());
        let (head, relation, tail) = (slot(tokens[0]), slot(tokens[1]), slot(tokens[2]));
        let mut missing = Vec::new();
        for (absent, which) in [
            (head.is_none(), Missing::Head),
            (relation.is_none(), Missing::Relation),
            (tail.is_none(), Missing::Tail),
            (when == When::Unknown, Missing::Time),
        ] {
            if absent {
                missing.push(which);
            }
        }
        match missing[..] {
            [one] => Ok(PredictQuery { head, relation, tail, when, missing: one }),
            [] => Err(usage("query has no `?` field")),
            _ => Err(usage("query must have exactly one `?` field")),
        }
    }
}
