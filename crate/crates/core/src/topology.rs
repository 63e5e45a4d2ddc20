//! Island detection over in-service branches.

use serde::{Deserialize, Serialize};

use crate::case::{BusId, Case, CaseError, Contingency};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status", content = "components")]
pub enum Connectivity {
    Connected,
    /// Every connected component, slack component first, bus ids ascending.
    Islanded(Vec<Vec<BusId>>),
}

impl Connectivity {
    pub fn is_connected(&self) -> bool {
        matches!(self, Connectivity::Connected)
    }
}

/// Breadth-first search from the slack bus. Only the outage lookup can fail.
pub fn check_connectivity(case: &Case, outages: &Contingency) -> Result<Connectivity, CaseError> {
    let in_service = case.in_service(outages)?;
    let index = case.bus_index();
    let n = case.buses.len();
    let mut adjacency = vec![Vec::new(); n];
    for (br, _) in case.branches.iter().zip(&in_service).filter(|(_, on)| **on) {
        let (f, t) = (index[&br.from_bus], index[&br.to_bus]);
        adjacency[f].push(t);
        adjacency[t].push(f);
    }

    let mut component = vec![usize::MAX; n];
    let mut components: Vec<Vec<BusId>> = Vec::new();
    let order = std::iter::once(case.slack_index()).chain(0..n);
    for start in order {
        if component[start] != usize::MAX {
            continue;
        }
        let label = components.len();
        let mut members = Vec::new();
        let mut queue = std::collections::VecDeque::from([start]);
        component[start] = label;
        while let Some(u) = queue.pop_front() {
            members.push(case.buses[u].id);
            for &v in &adjacency[u] {
                if component[v] == usize::MAX {
                    component[v] = label;
                    queue.push_back(v);
                }
            }
        }
        members.sort();
        components.push(members);
    }

    if components.len() <= 1 {
        Ok(Connectivity::Connected)
    } else {
        Ok(Connectivity::Islanded(components))
    }
}
