//! Desk-scale validation of abstraction soundness against the exact
//! checker: the approximation sandwich, may-simulation, must-containment,
//! and preservation of universal invariants.
//!
//! These checks fully enumerate global models, so they are meant for small
//! inputs — randomly generated corpora and worked examples — not for the
//! benchmark scale.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::abstraction::{abstract_model, alpha_values, AbstractError, MappingFunction};
use crate::approx::{approx, ApproxError, ApproxOptions, ApproxRequest, DomainTag, Target};
use crate::checker::{self, CheckError, CheckOptions, Runtime};
use crate::model::MasTemplate;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SoundnessError {
    #[error(transparent)]
    Approx(#[from] ApproxError),
    #[error(transparent)]
    Abstract(#[from] AbstractError),
    #[error(transparent)]
    Check(#[from] CheckError),
    #[error("sandwich violated at `{location}`: {side} bound does not contain {vector:?}")]
    SandwichViolation {
        location: String,
        vector: Vec<i64>,
        side: &'static str,
    },
    #[error("may-simulation violated: concrete {what} {detail} has no abstract counterpart")]
    MaySimulationViolation { what: &'static str, detail: String },
    #[error("must-containment violated: abstract {what} {detail} has no concrete witness")]
    MustContainmentViolation { what: &'static str, detail: String },
}

/// Check `lower(l) ⊆ exact(l) ⊆ upper(l)` for every location of the target.
pub fn check_sandwich(
    model: &MasTemplate,
    variables: &[String],
    target: &Target,
    opts: &ApproxOptions,
) -> Result<(), SoundnessError> {
    let upper = approx(
        model,
        &ApproxRequest {
            variables: variables.to_vec(),
            target: target.clone(),
            tag: DomainTag::Upper,
        },
        opts,
    )?;
    let lower = approx(
        model,
        &ApproxRequest {
            variables: variables.to_vec(),
            target: target.clone(),
            tag: DomainTag::Lower,
        },
        opts,
    )?;
    let exact = checker::project_reachable(model, target, variables, &CheckOptions::default())?;

    for (location, exact_vectors) in &exact.entries {
        let upper_vectors = upper.vectors(location).cloned().unwrap_or_default();
        for vector in exact_vectors {
            if !upper_vectors.contains(vector) {
                return Err(SoundnessError::SandwichViolation {
                    location: location.clone(),
                    vector: vector.clone(),
                    side: "upper",
                });
            }
        }
    }
    for (location, lower_vectors) in &lower.entries {
        let exact_vectors = exact.entries.get(location).cloned().unwrap_or_default();
        for vector in lower_vectors {
            if !exact_vectors.contains(vector) {
                return Err(SoundnessError::SandwichViolation {
                    location: location.clone(),
                    vector: vector.clone(),
                    side: "lower",
                });
            }
        }
    }
    Ok(())
}

/// A decoded global state in comparable form.
pub type StateKey = (Vec<String>, BTreeMap<String, i64>);

/// A fully enumerated global LTS: decoded states and transition pairs.
pub type Lts = (BTreeSet<StateKey>, BTreeSet<(StateKey, StateKey)>);

/// Fully enumerate a model's global LTS as decoded states and transitions.
/// Values are keyed by the model's own declaration names (instance-qualified
/// only where several instances exist), so states of a model and of its
/// abstraction compare under the abstraction map.
pub fn enumerate_lts(model: &MasTemplate) -> Result<Lts, SoundnessError> {
    let runtime = Runtime::from_model(model)?;
    let mut states = BTreeSet::new();
    let mut transitions = BTreeSet::new();
    let mut seen: BTreeSet<Vec<u64>> = BTreeSet::new();
    let mut queue = vec![runtime.initial_state()];
    seen.insert(queue[0].clone());
    while let Some(words) = queue.pop() {
        let key = decode_key(model, &runtime, &words);
        states.insert(key.clone());
        for successor in runtime.successor_states(&words)? {
            transitions.insert((key.clone(), decode_key(model, &runtime, &successor)));
            if seen.insert(successor.clone()) {
                queue.push(successor);
            }
        }
    }
    Ok((states, transitions))
}

fn decode_key(model: &MasTemplate, runtime: &Runtime, words: &[u64]) -> StateKey {
    let (locations, _) = runtime.decode(words);
    let env = runtime.env_view(words);
    let mut values = BTreeMap::new();
    for global in &model.globals {
        values.insert(
            global.name.clone(),
            crate::model::Env::var(&env, &global.name).expect("declared global"),
        );
    }
    for template in &model.templates {
        for instance in 1..=template.count {
            for private in &template.graph.privates {
                let key = if template.count == 1 {
                    private.name.clone()
                } else {
                    format!("{}({}).{}", template.graph.name, instance, private.name)
                };
                let value = crate::model::Env::instance_var(
                    &env,
                    &template.graph.name,
                    instance as i64,
                    &private.name,
                )
                .expect("declared private");
                values.insert(key, value);
            }
        }
    }
    (locations, values)
}

fn alpha_key(
    mapping: &MappingFunction,
    key: &StateKey,
) -> Result<StateKey, SoundnessError> {
    Ok((key.0.clone(), alpha_values(mapping, &key.1)?))
}

/// Reports from one may/must validation run.
#[derive(Debug, Clone, Default)]
pub struct MayMustReport {
    pub concrete_states: usize,
    pub may_states: usize,
    pub must_states: usize,
}

/// Build the may- and must-abstractions of a combined single-template model
/// under a full-scope mapping and verify, by exhaustive enumeration:
/// every concrete state/transition maps into the may-abstraction, and every
/// must-abstraction state/transition has a concrete witness.
pub fn check_may_must(
    combined: &MasTemplate,
    mapping: &MappingFunction,
    opts: &ApproxOptions,
) -> Result<MayMustReport, SoundnessError> {
    let request = |tag| ApproxRequest {
        variables: mapping.remove.clone(),
        target: mapping.target.clone(),
        tag,
    };
    let upper = approx(combined, &request(DomainTag::Upper), opts)?;
    let lower = approx(combined, &request(DomainTag::Lower), opts)?;
    let may = abstract_model(combined, mapping, &upper)?;
    let must = abstract_model(combined, mapping, &lower)?;

    let (concrete_states, concrete_transitions) = enumerate_lts(combined)?;
    let (may_states, may_transitions) = enumerate_lts(&may)?;
    let (must_states, must_transitions) = enumerate_lts(&must)?;

    for state in &concrete_states {
        let mapped = alpha_key(mapping, state)?;
        if !may_states.contains(&mapped) {
            return Err(SoundnessError::MaySimulationViolation {
                what: "state",
                detail: format!("{mapped:?}"),
            });
        }
    }
    for (from, to) in &concrete_transitions {
        let mapped = (alpha_key(mapping, from)?, alpha_key(mapping, to)?);
        if !may_transitions.contains(&mapped) {
            return Err(SoundnessError::MaySimulationViolation {
                what: "transition",
                detail: format!("{mapped:?}"),
            });
        }
    }

    let alpha_states: BTreeSet<StateKey> = concrete_states
        .iter()
        .map(|s| alpha_key(mapping, s))
        .collect::<Result<_, _>>()?;
    let alpha_transitions: BTreeSet<(StateKey, StateKey)> = concrete_transitions
        .iter()
        .map(|(a, b)| Ok((alpha_key(mapping, a)?, alpha_key(mapping, b)?)))
        .collect::<Result<_, SoundnessError>>()?;
    for state in &must_states {
        if !alpha_states.contains(state) {
            return Err(SoundnessError::MustContainmentViolation {
                what: "state",
                detail: format!("{state:?}"),
            });
        }
    }
    for transition in &must_transitions {
        if !alpha_transitions.contains(transition) {
            return Err(SoundnessError::MustContainmentViolation {
                what: "transition",
                detail: format!("{transition:?}"),
            });
        }
    }

    Ok(MayMustReport {
        concrete_states: concrete_states.len(),
        may_states: may_states.len(),
        must_states: must_states.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modelgen::{self, GenParams};
    use crate::unfold;

    #[test]
    fn sandwich_on_a_slice_of_the_corpus() {
        let params = GenParams::default();
        let mut checked = 0;
        for seed in 0..30 {
            let model = modelgen::generate(seed, &params);
            let names: Vec<String> = model.globals.iter().map(|v| v.name.clone()).collect();
            if names.is_empty() {
                continue;
            }
            check_sandwich(&model, &names, &Target::Ext, &ApproxOptions::default())
                .unwrap_or_else(|e| panic!("seed {seed}: {e}"));
            checked += 1;
        }
        assert!(checked > 0);
    }

    #[test]
    fn may_must_on_a_slice_of_the_corpus() {
        let params = GenParams::default();
        let mut checked = 0;
        for seed in 0..20 {
            let model = modelgen::generate(seed, &params);
            let combined =
                unfold::to_single_template(&unfold::unfold_model(&model).unwrap(), &model);
            let vars: Vec<String> = combined.globals
                .iter()
                .chain(combined.templates[0].graph.privates.iter())
                .map(|v| v.name.clone())
                .collect();
            if vars.is_empty() {
                continue;
            }
            let mapping = MappingFunction {
                target: Target::Ext,
                scope: Default::default(),
                remove: vec![vars[0].clone()],
                merge: None,
            };
            check_may_must(&combined, &mapping, &ApproxOptions::default())
                .unwrap_or_else(|e| panic!("seed {seed}: {e}"));
            checked += 1;
        }
        assert!(checked > 0);
    }
}
