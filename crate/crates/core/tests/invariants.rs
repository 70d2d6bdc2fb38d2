//! Cross-module invariants on random models: the combined-target domain is
//! at least as precise as the template-target domain, and the combined edge
//! count decomposes into lifted internal edges plus handshake pairings.

use std::collections::BTreeSet;

use masabs_core::approx::{approx, ApproxOptions, ApproxRequest, DomainTag, Target};
use masabs_core::model::{expand_selects, SyncDir};
use masabs_core::modelgen::{self, GenParams};
use masabs_core::unfold;

#[test]
fn combined_domain_refines_template_domain() {
    let params = GenParams::default();
    let opts = ApproxOptions::default();
    let mut compared = 0u32;
    for seed in 0..120u64 {
        let model = modelgen::generate(seed, &params);
        for template in &model.templates {
            let privates: Vec<String> = template
                .graph
                .privates
                .iter()
                .map(|v| v.name.clone())
                .collect();
            if privates.is_empty() {
                continue;
            }
            let template_domain = approx(
                &model,
                &ApproxRequest {
                    variables: privates.clone(),
                    target: Target::Template(template.graph.name.clone()),
                    tag: DomainTag::Upper,
                },
                &opts,
            )
            .unwrap();

            // combined-target request over one instance's variables, named
            // as the combined analysis sees them: declaration names for a
            // single-instance model, instance-qualified otherwise
            let precombined = model.templates.len() == 1 && model.templates[0].count == 1;
            let instances = unfold::instantiate(&model).unwrap();
            for instance in 1..=template.count {
                let display =
                    unfold::instance_display(&template.graph.name, instance, template.count);
                let qualified: Vec<String> = if precombined {
                    privates.clone()
                } else {
                    instances
                        .iter()
                        .find(|a| a.display == display)
                        .unwrap()
                        .graph
                        .privates
                        .iter()
                        .map(|v| v.name.clone())
                        .collect()
                };
                let combined_domain = approx(
                    &model,
                    &ApproxRequest {
                        variables: qualified,
                        target: Target::Ext,
                        tag: DomainTag::Upper,
                    },
                    &opts,
                )
                .unwrap();

                // fold the combined entries back onto template locations:
                // the union over combined locations whose component for this
                // instance is the template location
                let combined = unfold::unfold_model(&model).unwrap();
                let agent_index = combined
                    .agents
                    .iter()
                    .position(|a| a.display == display)
                    .unwrap();
                for (vector_index, location) in combined.locations.iter().enumerate() {
                    let _ = vector_index;
                    let loc_name = combined.location_name(location);
                    let template_location = &combined.agents[agent_index].locations
                        [location[agent_index] as usize];
                    let combined_vectors = combined_domain
                        .vectors(&loc_name)
                        .cloned()
                        .unwrap_or_default();
                    let template_vectors = template_domain
                        .vectors(template_location)
                        .cloned()
                        .unwrap_or_else(|| {
                            panic!("seed {seed}: template domain lacks {template_location}")
                        });
                    for vector in &combined_vectors {
                        assert!(
                            template_vectors.contains(vector),
                            "seed {seed} {display} at {loc_name}: combined vector {vector:?} \
                             is not in the template domain at {template_location}"
                        );
                    }
                }
                compared += 1;
            }
        }
    }
    assert!(compared > 50);
}

#[test]
fn combined_edge_count_decomposes() {
    let params = GenParams::default();
    for seed in 300..380u64 {
        let model = modelgen::generate(seed, &params);
        let agents = unfold::instantiate(&model).unwrap();
        let combined = unfold::combine(&agents, &model.globals).unwrap();

        // independent oracle: per reachable combined location, lifted
        // internal edges plus send/receive pairings across distinct agents
        let mut expected = 0usize;
        let flat: Vec<Vec<masabs_core::Edge>> = agents
            .iter()
            .map(|a| {
                a.graph
                    .edges
                    .iter()
                    .flat_map(|e| expand_selects(e).unwrap())
                    .collect()
            })
            .collect();
        for location in &combined.locations {
            for (i, agent) in agents.iter().enumerate() {
                let here = &agent.graph.locations[location[i] as usize];
                for edge in flat[i].iter().filter(|e| &e.source == here) {
                    match &edge.sync {
                        None => expected += 1,
                        Some(sync) if sync.dir == SyncDir::Send => {
                            for (j, partner) in agents.iter().enumerate() {
                                if i == j {
                                    continue;
                                }
                                let partner_loc =
                                    &partner.graph.locations[location[j] as usize];
                                expected += flat[j]
                                    .iter()
                                    .filter(|r| {
                                        &r.source == partner_loc
                                            && matches!(&r.sync, Some(s)
                                                if s.dir == SyncDir::Receive
                                                    && s.channel == sync.channel)
                                    })
                                    .count();
                            }
                        }
                        Some(_) => {}
                    }
                }
            }
        }
        assert_eq!(
            combined.edges.len(),
            expected,
            "seed {seed}: combined edge count does not decompose"
        );

        // determinism: rebuilding yields identically ordered structures
        let again = unfold::combine(&agents, &model.globals).unwrap();
        assert_eq!(combined.edges, again.edges);
        assert_eq!(combined.locations, again.locations);
    }
}

#[test]
fn lower_domain_is_contained_in_upper() {
    let params = GenParams::default();
    let opts = ApproxOptions::default();
    for seed in 500..560u64 {
        let model = modelgen::generate(seed, &params);
        let combined =
            unfold::to_single_template(&unfold::unfold_model(&model).unwrap(), &model);
        let names: Vec<String> = combined
            .globals
            .iter()
            .chain(combined.templates[0].graph.privates.iter())
            .map(|v| v.name.clone())
            .collect();
        if names.is_empty() {
            continue;
        }
        let request = |tag| ApproxRequest {
            variables: names.clone(),
            target: Target::Ext,
            tag,
        };
        let upper = approx(&combined, &request(DomainTag::Upper), &opts).unwrap();
        let lower = approx(&combined, &request(DomainTag::Lower), &opts).unwrap();
        for (location, vectors) in &lower.entries {
            let upper_vectors = upper.vectors(location).cloned().unwrap_or_default();
            let missing: BTreeSet<_> = vectors.difference(&upper_vectors).collect();
            assert!(
                missing.is_empty(),
                "seed {seed} at {location}: lower vectors {missing:?} missing from upper"
            );
        }
    }
}
