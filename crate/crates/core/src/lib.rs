//! Decentralized do-not-call registry built on a simulated token ledger.
//!
//! Subscribers express an opt-in or opt-out choice by holding exactly one IN
//! or one OUT token. Choices are switched only through an atomic swap with a
//! central contract, bindings between keys and phone numbers are stored on
//! chain encrypted for the subscriber and the attestator, and operators prune
//! call lists against the ledger.

pub mod guard;
pub mod bench;
pub mod binding;
pub mod ledger;
pub mod prune;
pub mod registry;
