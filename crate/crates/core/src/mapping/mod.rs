// SPDX-License-Identifier: Apache-2.0
//! PDK, technology mapping, netlists and cost reports.

mod mapper;
mod netlist;
mod pdk;
mod report;

pub use mapper::{map_components, MappingFailure, Unmapped};
pub use netlist::{Instance, Metadata, Netlist, NetlistError, NetlistFormat};
pub use pdk::{sorted_signature, Cell, CellKind, CellPort, Pdk, PdkError, Supergate, SAMPLE_PDK};
pub use report::{has_data_cycle, report, CostReport};
