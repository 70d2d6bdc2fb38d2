//! JSON (de)serialization of local-domain files: location identifiers mapped
//! to arrays of evaluation vectors, vector elements ordered by the declared
//! variable list.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::approx::{DomainTag, LocalDomain};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DomainFileError {
    #[error("malformed domain file: {0}")]
    Json(String),
    #[error("location `{location}`: vector {vector:?} has length {got}, expected {expected}")]
    RaggedVector {
        location: String,
        vector: Vec<i64>,
        got: usize,
        expected: usize,
    },
    #[error("unknown tag `{0}` (expected `upper` or `lower`)")]
    UnknownTag(String),
}

#[derive(Serialize, Deserialize)]
struct Wire {
    variables: Vec<String>,
    tag: String,
    target: String,
    entries: BTreeMap<String, Vec<Vec<i64>>>,
}

/// Read a domain file. Vectors are canonicalized (sorted, deduplicated);
/// ragged vectors are an error.
pub fn read_domain(bytes: &str) -> Result<LocalDomain, DomainFileError> {
    let wire: Wire = serde_json::from_str(bytes).map_err(|e| DomainFileError::Json(e.to_string()))?;
    let tag = DomainTag::parse(&wire.tag).ok_or(DomainFileError::UnknownTag(wire.tag))?;
    let expected = wire.variables.len();
    let mut entries = BTreeMap::new();
    for (location, vectors) in wire.entries {
        let mut set = BTreeSet::new();
        for vector in vectors {
            if vector.len() != expected {
                return Err(DomainFileError::RaggedVector {
                    location,
                    got: vector.len(),
                    expected,
                    vector,
                });
            }
            set.insert(vector);
        }
        entries.insert(location, set);
    }
    Ok(LocalDomain {
        variables: wire.variables,
        tag,
        target: wire.target,
        entries,
    })
}

/// Write a domain file: deterministic, entries sorted by location, vectors
/// sorted lexicographically.
pub fn write_domain(domain: &LocalDomain) -> String {
    let wire = Wire {
        variables: domain.variables.clone(),
        tag: domain.tag.as_str().to_string(),
        target: domain.target.clone(),
        entries: domain
            .entries
            .iter()
            .map(|(l, set)| (l.clone(), set.iter().cloned().collect()))
            .collect(),
    };
    let mut out = serde_json::to_string_pretty(&wire).expect("domain serialization");
    out.push('\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let domain = LocalDomain {
            variables: vec!["dec".into()],
            tag: DomainTag::Upper,
            target: "Voter".into(),
            entries: [
                ("idle".to_string(), BTreeSet::from([vec![0]])),
                ("waits".to_string(), BTreeSet::from([vec![1], vec![2]])),
            ]
            .into(),
        };
        let bytes = write_domain(&domain);
        let reread = read_domain(&bytes).unwrap();
        assert_eq!(domain, reread);
        assert_eq!(bytes, write_domain(&reread));
    }

    #[test]
    fn reads_example_entry_shape() {
        let src = r#"{
            "variables": ["dec"],
            "tag": "upper",
            "target": "Voter",
            "entries": { "waits": [[1],[2]] }
        }"#;
        let domain = read_domain(src).unwrap();
        assert_eq!(domain.vectors("waits").unwrap().len(), 2);
    }

    #[test]
    fn empty_entries_are_valid() {
        let src = r#"{ "variables": ["x"], "tag": "lower", "target": "ext", "entries": {} }"#;
        let domain = read_domain(src).unwrap();
        assert!(domain.entries.is_empty());
        assert_eq!(domain.tag, DomainTag::Lower);
    }

    #[test]
    fn ragged_vector_is_an_error() {
        let src = r#"{
            "variables": ["x"],
            "tag": "upper",
            "target": "A",
            "entries": { "a": [[1,2]] }
        }"#;
        assert!(matches!(
            read_domain(src),
            Err(DomainFileError::RaggedVector { .. })
        ));
    }

    #[test]
    fn unordered_input_is_canonicalized() {
        let src = r#"{
            "variables": ["x"],
            "tag": "upper",
            "target": "A",
            "entries": { "a": [[2],[1],[2]] }
        }"#;
        let domain = read_domain(src).unwrap();
        let vectors: Vec<_> = domain.vectors("a").unwrap().iter().cloned().collect();
        assert_eq!(vectors, vec![vec![1], vec![2]]);
    }
}
