//! Voting-advice matching engine with an adversarial-robustness testbed.
//!
//! The crate models a multi-state candidate election questionnaire, computes
//! voter–candidate similarity under seven distance methods, turns similarity
//! into rankings and top-k visibility for candidates, parties and lists, and
//! ships a suite of manipulation experiments (answer optimization, answer
//! calibration, candidate-list diversification, weight and ordering games,
//! tie-breaking exploits) together with the fairness metrics that score them.
//!
//! Modules, bottom-up:
//!
//! * [`model`] — answer scales, profiles, candidates, voters, lists,
//!   elections and structural validation.
//! * [`matching`] — the seven distance methods and display scores.
//! * [`ranking`] — rankings, tie-break policies, k-visibility, mitigations.
//! * [`attacks`] — manipulation strategies and their experiments.
//! * [`metrics`] — bias/robustness metrics and the method scorecard.
//! * [`synth`] — deterministic synthetic election generator.
//! * [`io`] — JSON/CSV serialization and the response-cleaning pipeline.
//! * [`cli`] — the command-line front end.

pub mod attacks;
pub(crate) mod engine;
pub mod matching;
pub mod metrics;
pub mod model;
pub mod ranking;
pub(crate) mod rng;
pub(crate) mod stats;
pub mod synth;

#[cfg(test)]
pub(crate) mod testutil;
