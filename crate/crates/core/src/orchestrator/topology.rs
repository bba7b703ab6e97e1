//! Service-reuse comparison: one shared set of claim services versus a
//! separate stack per policy type.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::wire_enum;
use crate::envelope::ServiceName;
use crate::registry::{Registration, ServiceRegistry};

/// The services every policy type needs.
pub const SHARED_SERVICES: [ServiceName; 3] = [ServiceName::PreAuth, ServiceName::Scrutiny, ServiceName::CashAuth];

wire_enum!(TopologyMode {
    Soa => "soa",
    Baseline => "baseline",
});

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopologyReport {
    pub mode: TopologyMode,
    pub policy_type_count: usize,
    pub instance_counts: BTreeMap<ServiceName, usize>,
    pub total_shared_instances: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TopologyError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("building the {mode} registry failed: {detail}")]
    Build { mode: TopologyMode, detail: String },
}

fn build(mode: TopologyMode, n: usize) -> Result<ServiceRegistry, TopologyError> {
    let registry = ServiceRegistry::new();
    let stacks = match mode {
        TopologyMode::Soa => 1,
        TopologyMode::Baseline => n,
    };
    for stack in 0..stacks {
        for name in SHARED_SERVICES {
            let host = match mode {
                TopologyMode::Soa => "shared".to_string(),
                TopologyMode::Baseline => format!("policy-type-{}", stack + 1),
            };
            let endpoint = format!("local://{host}/{}", name.as_str().to_ascii_lowercase());
            registry
                .register(Registration::new(name, "1.0.0", endpoint))
                .map_err(|e| TopologyError::Build { mode, detail: e.to_string() })?;
        }
    }
    Ok(registry)
}

/// Counts the live registrations of each shared service in a registry.
fn report(mode: TopologyMode, n: usize, registry: &ServiceRegistry) -> Result<TopologyReport, TopologyError> {
    let mut instance_counts = BTreeMap::new();
    for name in SHARED_SERVICES {
        registry
            .resolve(name)
            .map_err(|e| TopologyError::Build { mode, detail: e.to_string() })?;
        instance_counts.insert(name, registry.instances(name).len());
    }
    let total_shared_instances = instance_counts.values().sum();
    Ok(TopologyReport { mode, policy_type_count: n, instance_counts, total_shared_instances })
}

/// Builds both registry topologies for `n` policy types and reports what
/// each one holds.
pub fn compare_topologies(n: usize) -> Result<(TopologyReport, TopologyReport), TopologyError> {
    if n < 1 {
        return Err(TopologyError::InvalidArgument("policy type count must be at least 1".into()));
    }
    let soa = report(TopologyMode::Soa, n, &build(TopologyMode::Soa, n)?)?;
    let baseline = report(TopologyMode::Baseline, n, &build(TopologyMode::Baseline, n)?)?;
    Ok((soa, baseline))
}

/// Renders reports as an aligned text table.
pub fn render_table(reports: &[TopologyReport]) -> String {
    let mut header: Vec<String> = vec!["mode".into(), "policy_types".into()];
    header.extend(SHARED_SERVICES.iter().map(|s| s.to_string()));
    header.push("total".into());
    let mut rows = vec![header];
    for r in reports {
        let mut row = vec![r.mode.to_string(), r.policy_type_count.to_string()];
        row.extend(SHARED_SERVICES.iter().map(|s| r.instance_counts.get(s).copied().unwrap_or(0).to_string()));
        row.push(r.total_shared_instances.to_string());
        rows.push(row);
    }
    let widths: Vec<usize> =
        (0..rows[0].len()).map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for row in rows {
        let cells: Vec<String> = row.iter().zip(&widths).map(|(cell, w)| format!("{cell:<w$}")).collect();
        let _ = writeln!(out, "{}", cells.join("  ").trim_end());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_follow_the_construction() {
        for n in 1..=10 {
            let (soa, baseline) = compare_topologies(n).unwrap();
            assert!(soa.instance_counts.values().all(|&c| c == 1));
            assert!(baseline.instance_counts.values().all(|&c| c == n));
            assert_eq!((soa.total_shared_instances, baseline.total_shared_instances), (3, 3 * n));
        }
        let (soa, baseline) = compare_topologies(1).unwrap();
        assert_eq!(soa.instance_counts, baseline.instance_counts);
        assert!(matches!(compare_topologies(0), Err(TopologyError::InvalidArgument(_))));
    }

    #[test]
    fn table_is_aligned() {
        let (soa, baseline) = compare_topologies(12).unwrap();
        let table = render_table(&[soa, baseline]);
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines[0], "mode      policy_types  PreAuth  Scrutiny  CashAuth  total");
        assert_eq!(lines[1], "soa       12            1        1         1         3");
        assert_eq!(lines[2], "baseline  12            12       12        12        36");
    }
}
