//! Query modes evaluated over the full list of answer sets.
//!
//! | mode       | surface        | holds when                 |
//! |------------|----------------|----------------------------|
//! | `Brave`    | `? A`          | `A` in some answer set     |
//! | `NafSome`  | `? not A`      | `A` missing from some      |
//! | `Possible` | `? M A`        | same as `Brave`            |
//! | `Known`    | `? K A`        | `A` in every answer set    |
//! | `NotAll`   | `? NOT A`      | `A` missing from every one |

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asp::{Atom, AnswerSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum QueryMode {
    #[serde(rename = "brave")]
    Brave,
    #[serde(rename = "some-not")]
    NafSome,
    #[serde(rename = "M")]
    Possible,
    #[serde(rename = "K")]
    Known,
    #[serde(rename = "NOT")]
    NotAll,
}

impl QueryMode {
    pub const ALL: [QueryMode; 5] = [
        QueryMode::Brave,
        QueryMode::NafSome,
        QueryMode::Possible,
        QueryMode::Known,
        QueryMode::NotAll,
    ];

    /// Keyword used in descriptor files and on the command line.
    pub fn keyword(self) -> &'static str {
        match self {
            QueryMode::Brave => "brave",
            QueryMode::NafSome => "some-not",
            QueryMode::Possible => "M",
            QueryMode::Known => "K",
            QueryMode::NotAll => "NOT",
        }
    }

    /// Prefix of the consequence atom a true query result contributes to a
    /// service's data state, e.g. `known_device_ok`.
    pub fn atom_prefix(self) -> &'static str {
        match self {
            QueryMode::Brave => "brave",
            QueryMode::NafSome => "somenot",
            QueryMode::Possible => "possible",
            QueryMode::Known => "known",
            QueryMode::NotAll => "notall",
        }
    }
}

impl fmt::Display for QueryMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

impl FromStr for QueryMode {
    type Err = QueryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "brave" | "?" => QueryMode::Brave,
            "some-not" | "not" => QueryMode::NafSome,
            "M" | "possible" => QueryMode::Possible,
            "K" | "known" => QueryMode::Known,
            "NOT" | "not-all" => QueryMode::NotAll,
            other => return Err(QueryError::UnknownMode(other.to_string())),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QueryError {
    #[error("program is inconsistent: no answer sets to query")]
    Inconsistent,
    #[error("query atom `{0}` is not ground")]
    NonGround(String),
    #[error("unknown query mode `{0}` (expected brave, some-not, M, K or NOT)")]
    UnknownMode(String),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct QueryResult {
    pub mode: QueryMode,
    pub atom: Atom,
    pub value: bool,
}

impl QueryResult {
    /// The consequence atom of a true result (see [`QueryMode::atom_prefix`]).
    pub fn as_atom(&self) -> Option<Atom> {
        self.value.then(|| {
            Atom::new(
                format!("{}_{}", self.mode.atom_prefix(), self.atom.predicate),
                self.atom.args.clone(),
            )
        })
    }
}

impl fmt::Display for QueryResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} = {}", self.mode, self.atom, self.value)
    }
}

pub fn eval_query(mode: QueryMode, atom: &Atom, answer_sets: &[AnswerSet]) -> Result<bool, QueryError> {
    if !atom.is_ground() {
        return Err(QueryError::NonGround(atom.to_string()));
    }
    if answer_sets.is_empty() {
        return Err(QueryError::Inconsistent);
    }
    let mut member = answer_sets.iter().map(|s| s.contains(atom));
    Ok(match mode {
        QueryMode::Brave | QueryMode::Possible => member.any(|m| m),
        QueryMode::NafSome => member.any(|m| !m),
        QueryMode::Known => member.all(|m| m),
        QueryMode::NotAll => member.all(|m| !m),
    })
}

pub fn query(mode: QueryMode, atom: &Atom, answer_sets: &[AnswerSet]) -> Result<QueryResult, QueryError> {
    eval_query(mode, atom, answer_sets).map(|value| QueryResult {
        mode,
        atom: atom.clone(),
        value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asp::{parse_atom, parse_program, solve};

    fn sets(text: &str) -> Vec<AnswerSet> {
        solve(&parse_program(text).unwrap()).unwrap()
    }

    #[test]
    fn two_model_program() {
        let s = sets("p :- not q. q :- not p.");
        let p = Atom::prop("p");
        assert!(eval_query(QueryMode::Brave, &p, &s).unwrap());
        assert!(!eval_query(QueryMode::Known, &p, &s).unwrap());
        assert!(eval_query(QueryMode::NafSome, &p, &s).unwrap());
        assert!(!eval_query(QueryMode::NotAll, &p, &s).unwrap());
        assert!(eval_query(QueryMode::Possible, &p, &s).unwrap());
    }

    #[test]
    fn single_model_collapses_to_membership() {
        let s = sets("p.");
        let p = Atom::prop("p");
        assert!(eval_query(QueryMode::Known, &p, &s).unwrap());
        assert!(!eval_query(QueryMode::NotAll, &p, &s).unwrap());
        let q = Atom::prop("q");
        assert!(eval_query(QueryMode::NotAll, &q, &s).unwrap());
    }

    #[test]
    fn errors() {
        let p = Atom::prop("p");
        assert_eq!(
            eval_query(QueryMode::Known, &p, &[]),
            Err(QueryError::Inconsistent)
        );
        let open = parse_atom("p(X)").unwrap();
        assert!(matches!(
            eval_query(QueryMode::Brave, &open, &sets("p(a).")),
            Err(QueryError::NonGround(_))
        ));
        assert!("maybe".parse::<QueryMode>().is_err());
    }

    #[test]
    fn mode_keywords_round_trip() {
        for mode in QueryMode::ALL {
            assert_eq!(mode.keyword().parse::<QueryMode>().unwrap(), mode);
        }
    }

    #[test]
    fn true_results_become_atoms() {
        let r = QueryResult {
            mode: QueryMode::Known,
            atom: Atom::prop("device_ok"),
            value: true,
        };
        assert_eq!(r.as_atom().unwrap().to_string(), "known_device_ok");
        assert!(QueryResult { value: false, ..r }.as_atom().is_none());
    }
}
