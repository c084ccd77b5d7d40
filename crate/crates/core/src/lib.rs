// SPDX-License-Identifier: Apache-2.0
//! Sequential RSFQ synthesis by FSM decomposition.
pub mod balancer;
pub mod bdd;
pub mod decomposition;
pub mod encoding;
pub mod fsm;
pub mod mapping;
pub mod netsim;
pub mod synth;
