//! Shared fixtures for unit tests: deterministic toy elections.

use crate::model::*;
use rand::Rng;
use std::collections::BTreeMap;

/// A small random-but-deterministic election: 2 states ("east" with 3
/// seats, "west" with 2), 3 parties with per-state lists, candidates with
/// complete profiles, and voters with skips and varied weights.
pub(crate) fn toy_election(n_cands: usize, n_voters: usize, n_q: usize, seed: u64) -> Election {
    let mut rng = crate::rng::stream(seed, "engine-test-election", &[]);
    let questions: Vec<Question> = (1..=n_q)
        .map(|i| {
            let scale = match i % 3 {
                0 => AnswerScale::policy(),
                1 => AnswerScale::value(),
                _ => AnswerScale::budget(),
            };
            Question::new(format!("q{i}"), i, scale)
        })
        .collect();
    let states = ["east", "west"];
    let parties = ["alpha", "beta", "gamma"];
    let mut candidates = Vec::new();
    let mut lists: Vec<PartyList> = Vec::new();
    for ci in 0..n_cands {
        let state = states[rng.random_range(0..states.len())];
        let party = parties[rng.random_range(0..parties.len())];
        let answers: Vec<f64> = questions
            .iter()
            .map(|q| {
                let a = q.scale.allowed();
                a[rng.random_range(0..a.len())]
            })
            .collect();
        let list_id = format!("{state}-{party}");
        let id = format!("c{ci:03}");
        if let Some(l) = lists.iter_mut().find(|l| l.id == list_id) {
            l.members.push(id.clone());
        } else {
            lists.push(PartyList {
                id: list_id.clone(),
                state: state.into(),
                party: party.into(),
                members: vec![id.clone()],
            });
        }
        candidates.push(Candidate {
            id: id.clone(),
            sort_key: format!("key{:03}", n_cands - ci),
            state: state.into(),
            party: party.into(),
            list: list_id,
            profile: Profile::complete(answers),
        });
    }
    let voters: Vec<Voter> = (0..n_voters)
        .map(|vi| {
            let state = states[rng.random_range(0..states.len())];
            let answers: Vec<Option<f64>> = questions
                .iter()
                .map(|q| {
                    if rng.random_range(0..6) == 0 {
                        None
                    } else {
                        let a = q.scale.allowed();
                        Some(a[rng.random_range(0..a.len())])
                    }
                })
                .collect();
            let weights: Vec<f64> = answers
                .iter()
                .map(|a| {
                    if a.is_some() {
                        [0.0, 0.5, 1.0, 2.0][rng.random_range(0..4)]
                    } else {
                        0.0
                    }
                })
                .collect();
            Voter {
                id: format!("v{vi:04}"),
                state: state.into(),
                preferred_party: Some(parties[rng.random_range(0..parties.len())].into()),
                profile: Profile::new(answers, weights).unwrap(),
                timestamp: vi as i64,
                election_id: Some("toy".into()),
            }
        })
        .collect();
    Election {
        questions,
        weight_set: DEFAULT_WEIGHT_SET.to_vec(),
        states: BTreeMap::from([("east".into(), 3), ("west".into(), 2)]),
        candidates,
        voters,
        lists,
        party_vote_shares: None,
    }
}

/// A single-state election with explicitly placed candidates: each entry is
/// (id, party, answers). All candidates share one list per party; every
/// question uses the policy scale.
pub(crate) fn placed_election(
    seats: u32,
    cands: &[(&str, &str, &[f64])],
    voters: &[(&str, &[Option<f64>])],
) -> Election {
    let n_q = cands
        .first()
        .map(|(_, _, a)| a.len())
        .or_else(|| voters.first().map(|(_, a)| a.len()))
        .unwrap_or(0);
    let questions: Vec<Question> = (1..=n_q)
        .map(|i| Question::new(format!("q{i}"), i, AnswerScale::policy()))
        .collect();
    let mut lists: Vec<PartyList> = Vec::new();
    let mut candidates = Vec::new();
    for (id, party, answers) in cands {
        let list_id = format!("main-{party}");
        if let Some(l) = lists.iter_mut().find(|l| l.id == list_id) {
            l.members.push(id.to_string());
        } else {
            lists.push(PartyList {
                id: list_id.clone(),
                state: "main".into(),
                party: party.to_string(),
                members: vec![id.to_string()],
            });
        }
        candidates.push(Candidate {
            id: id.to_string(),
            sort_key: id.to_string(),
            state: "main".into(),
            party: party.to_string(),
            list: list_id,
            profile: Profile::complete(answers.to_vec()),
        });
    }
    let voters = voters
        .iter()
        .enumerate()
        .map(|(i, (id, answers))| {
            let weights = answers
                .iter()
                .map(|a| if a.is_some() { 1.0 } else { 0.0 })
                .collect();
            Voter {
                id: id.to_string(),
                state: "main".into(),
                preferred_party: None,
                profile: Profile::new(answers.to_vec(), weights).unwrap(),
                timestamp: i as i64,
                election_id: None,
            }
        })
        .collect();
    Election {
        questions,
        weight_set: DEFAULT_WEIGHT_SET.to_vec(),
        states: BTreeMap::from([("main".into(), seats)]),
        candidates,
        voters,
        lists,
        party_vote_shares: None,
    }
}
