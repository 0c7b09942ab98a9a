//! Highway network, range-limited sub-paths and the flow-refueling coverage
//! constraints that tie charge choices to station siting.

use std::collections::{BTreeMap, BTreeSet};

use crate::conic::LinExpr;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TransportNode {
    pub id: String,
    pub candidate: bool,
    /// Index of the distribution bus this node's station would attach to.
    pub grid_bus: Option<usize>,
    /// Length of the feeder line from the station to its bus.
    pub line_length_km: f64,
    /// Spare substation capacity before expansion.
    pub substation_kva: f64,
    pub spots_min: f64,
    pub spots_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportEdge {
    pub from: usize,
    pub to: usize,
    pub length_km: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TransportNetwork {
    pub nodes: Vec<TransportNode>,
    pub edges: Vec<TransportEdge>,
}

impl TransportNetwork {
    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    pub fn edge_length(&self, a: usize, b: usize) -> Option<f64> {
        self.edges
            .iter()
            .find(|e| (e.from == a && e.to == b) || (e.from == b && e.to == a))
            .map(|e| e.length_km)
    }

    pub fn candidates(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.candidate)
            .map(|(i, _)| i)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PevClass {
    pub id: String,
    pub range_km: f64,
    pub charge_hours: f64,
    pub share: f64,
}

/// A given origin-destination route.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSpec {
    pub id: String,
    /// Node indices in travel order.
    pub nodes: Vec<usize>,
    /// Cumulative distance of each node from the first one.
    pub positions_km: Vec<f64>,
    /// Distance already driven when the vehicle reaches the first node.
    pub d_origin_km: f64,
    /// Distance still to drive after the last node.
    pub d_dest_km: f64,
}

impl PathSpec {
    /// Builds a path along existing edges; positions follow edge lengths.
    pub fn along_edges(
        id: impl Into<String>,
        nodes: Vec<usize>,
        net: &TransportNetwork,
        d_origin_km: f64,
        d_dest_km: f64,
    ) -> Result<Self> {
        let id = id.into();
        if nodes.is_empty() {
            return Err(Error::validation("transport.paths", format!("path {id} has no nodes")));
        }
        let mut positions = vec![0.0];
        for w in nodes.windows(2) {
            let len = net.edge_length(w[0], w[1]).ok_or_else(|| {
                Error::validation(
                    "transport.paths",
                    format!(
                        "path {id}: no edge between {} and {}",
                        net.nodes[w[0]].id, net.nodes[w[1]].id
                    ),
                )
            })?;
            positions.push(positions.last().unwrap() + len);
        }
        let path = Self {
            id,
            nodes,
            positions_km: positions,
            d_origin_km,
            d_dest_km,
        };
        path.validate()?;
        Ok(path)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::validation("transport.paths", m));
        if self.nodes.len() != self.positions_km.len() {
            return bad(format!("path {}: node/position count mismatch", self.id));
        }
        if self.positions_km.windows(2).any(|w| w[1] <= w[0]) {
            return bad(format!("path {}: positions must strictly increase", self.id));
        }
        if !(self.d_origin_km >= 0.0 && self.d_dest_km >= 0.0) {
            return bad(format!("path {}: origin/destination distances must be >= 0", self.id));
        }
        Ok(())
    }

    pub fn origin_position(&self) -> f64 {
        self.positions_km[0] - self.d_origin_km
    }

    pub fn destination_position(&self) -> f64 {
        self.positions_km[self.positions_km.len() - 1] + self.d_dest_km
    }

    pub fn length_km(&self) -> f64 {
        self.destination_position() - self.origin_position()
    }
}

/// Candidate nodes of which at least one must be used for charging.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct SubPath {
    pub path: usize,
    pub class: usize,
    pub nodes: Vec<usize>,
}

/// Enumerates the range windows of `path` for a vehicle of class `pev`.
///
/// Every charge opportunity (the pseudo-origin and each path node) anchors a
/// window `(pos, pos + range]`; the candidate nodes inside it form a
/// sub-path. Windows that already reach the destination are dropped and
/// duplicate node sets are removed.
pub fn enumerate_subpaths(
    net: &TransportNetwork,
    path: &PathSpec,
    path_index: usize,
    pev: &PevClass,
    class_index: usize,
) -> Result<Vec<SubPath>> {
    let origin = path.origin_position();
    let dest = path.destination_position();
    let range = pev.range_km;

    // Gap check between consecutive charge opportunities.
    let mut last_name = "origin".to_string();
    let mut last_pos = origin;
    let stops = path
        .nodes
        .iter()
        .zip(&path.positions_km)
        .filter(|(n, _)| net.nodes[**n].candidate)
        .map(|(n, p)| (net.nodes[*n].id.clone(), *p))
        .chain(std::iter::once(("destination".to_string(), dest)));
    for (name, pos) in stops {
        if pos - last_pos > range {
            return Err(Error::InfeasibleTrip {
                path: path.id.clone(),
                class: pev.id.clone(),
                from: last_name,
                to: name,
                gap_km: pos - last_pos,
                range_km: range,
            });
        }
        last_name = name;
        last_pos = pos;
    }

    let anchors = std::iter::once(origin).chain(path.positions_km.iter().copied());
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for anchor in anchors {
        let reach = anchor + range;
        if reach >= dest {
            continue;
        }
        let nodes: Vec<usize> = path
            .nodes
            .iter()
            .zip(&path.positions_km)
            .filter(|(n, p)| net.nodes[**n].candidate && **p > anchor && **p <= reach)
            .map(|(n, _)| *n)
            .collect();
        debug_assert!(!nodes.is_empty(), "gap check guarantees a stop in every window");
        if seen.insert(nodes.clone()) {
            out.push(SubPath {
                path: path_index,
                class: class_index,
                nodes,
            });
        }
    }
    Ok(out)
}

/// Indices of the station-related first-stage variables.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StationSitingVars {
    /// `γ_{q,i,k}` keyed by (path, node, class).
    pub gamma: BTreeMap<(usize, usize, usize), usize>,
    /// Per transport node; `None` for non-candidates.
    pub x_cs: Vec<Option<usize>>,
    pub y_cs: Vec<Option<usize>>,
    pub p_sub: Vec<Option<usize>>,
    pub y_min: Vec<f64>,
    pub y_max: Vec<f64>,
}

/// Rows `expr ≥ 0` for the coverage, charge-at-station and spot-bound
/// constraints.
pub fn coverage_rows(subpaths: &[SubPath], vars: &StationSitingVars) -> Vec<LinExpr> {
    let mut rows = Vec::new();
    // Σ_{i ∈ sub-path} γ_{q,i,k} − 1 ≥ 0
    for sp in subpaths {
        let mut row = LinExpr::constant(-1.0);
        for &node in &sp.nodes {
            let g = vars.gamma[&(sp.path, node, sp.class)];
            row = row.term(g, 1.0);
        }
        rows.push(row);
    }
    // x_i − γ_{q,i,k} ≥ 0
    for (&(_, node, _), &g) in &vars.gamma {
        let x = vars.x_cs[node].expect("gamma defined only at candidate nodes");
        rows.push(LinExpr::var(x, 1.0).term(g, -1.0));
    }
    // ȳ x − y ≥ 0 and y − y̲ x ≥ 0
    for (node, (&x, &y)) in vars.x_cs.iter().zip(&vars.y_cs).enumerate() {
        if let (Some(x), Some(y)) = (x, y) {
            rows.push(LinExpr::var(x, vars.y_max[node]).term(y, -1.0));
            rows.push(LinExpr::var(y, 1.0).term(x, -vars.y_min[node]));
        }
    }
    rows
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn chain(positions: &[f64], candidate: &[bool]) -> (TransportNetwork, PathSpec) {
        let nodes = positions
            .iter()
            .enumerate()
            .map(|(i, _)| TransportNode {
                id: format!("{}", i + 1),
                candidate: candidate[i],
                grid_bus: Some(0),
                line_length_km: 1.0,
                substation_kva: 1000.0,
                spots_min: 0.0,
                spots_max: 200.0,
            })
            .collect();
        let edges = positions
            .windows(2)
            .enumerate()
            .map(|(i, w)| TransportEdge {
                from: i,
                to: i + 1,
                length_km: w[1] - w[0],
            })
            .collect();
        let net = TransportNetwork { nodes, edges };
        let path = PathSpec {
            id: "q".into(),
            nodes: (0..positions.len()).collect(),
            positions_km: positions.iter().map(|p| p - positions[0]).collect(),
            d_origin_km: 0.0,
            d_dest_km: 0.0,
        };
        (net, path)
    }

    fn class(range: f64) -> PevClass {
        PevClass {
            id: "k".into(),
            range_km: range,
            charge_hours: 1.0,
            share: 1.0,
        }
    }

    /// Drive the path charging fully at every chosen node; true when the
    /// remaining range never goes negative.
    pub(crate) fn fuel_simulation(path: &PathSpec, range: f64, charge: &dyn Fn(usize) -> bool) -> bool {
        let mut last = path.origin_position();
        for (&n, &p) in path.nodes.iter().zip(&path.positions_km) {
            if p - last > range + 1e-9 {
                return false;
            }
            if charge(n) {
                last = p;
            }
        }
        path.destination_position() - last <= range + 1e-9
    }

    fn six_node_corridor() -> (TransportNetwork, PathSpec) {
        let positions = [50.0, 75.0, 100.0, 125.0, 150.0, 175.0];
        let (net, mut path) = chain(&positions, &[true; 6]);
        path.d_origin_km = 50.0;
        path.d_dest_km = 50.0;
        (net, path)
    }

    #[test]
    fn six_node_corridor_windows() {
        let (net, path) = six_node_corridor();
        let subs = enumerate_subpaths(&net, &path, 0, &class(100.0), 0).unwrap();
        let sets: Vec<Vec<String>> = subs
            .iter()
            .map(|s| s.nodes.iter().map(|&n| net.nodes[n].id.clone()).collect())
            .collect();
        for expected in [
            vec!["1", "2", "3"],
            vec!["2", "3", "4", "5"],
            vec!["3", "4", "5", "6"],
            vec!["4", "5", "6"],
        ] {
            assert!(sets.contains(&expected.iter().map(|s| s.to_string()).collect()), "{expected:?} in {sets:?}");
        }
        assert_eq!(sets.len(), 4);
    }

    #[test]
    fn forced_single_stop() {
        let (net, mut path) = chain(&[50.0], &[true]);
        path.d_origin_km = 50.0;
        path.d_dest_km = 50.0;
        let subs = enumerate_subpaths(&net, &path, 0, &class(60.0), 0).unwrap();
        assert_eq!(subs.len(), 1);
        assert_eq!(subs[0].nodes, vec![0]);
    }

    #[test]
    fn gap_too_long_is_rejected() {
        let (net, mut path) = chain(&[0.0, 150.0], &[true, true]);
        path.d_origin_km = 10.0;
        let err = enumerate_subpaths(&net, &path, 0, &class(100.0), 0).unwrap_err();
        match err {
            Error::InfeasibleTrip { from, to, .. } => {
                assert_eq!(from, "1");
                assert_eq!(to, "2");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn non_candidates_never_appear() {
        let (net, path) = chain(&[0.0, 40.0, 80.0, 120.0], &[true, false, true, true]);
        let subs = enumerate_subpaths(&net, &path, 0, &class(90.0), 0).unwrap();
        assert!(subs.iter().all(|s| !s.nodes.contains(&1)));
    }

    #[test]
    fn coverage_row_transcription() {
        let mut vars = StationSitingVars::default();
        vars.gamma.insert((0, 1, 0), 0);
        vars.gamma.insert((0, 2, 0), 1);
        vars.x_cs = vec![None, Some(2), Some(3)];
        vars.y_cs = vec![None, Some(4), Some(5)];
        vars.y_min = vec![0.0; 3];
        vars.y_max = vec![200.0; 3];
        let sp = SubPath {
            path: 0,
            class: 0,
            nodes: vec![1, 2],
        };
        let rows = coverage_rows(&[sp], &vars);
        assert_eq!(rows[0], LinExpr::constant(-1.0).term(0, 1.0).term(1, 1.0));
        // x = 0 forces γ = 0 through x − γ ≥ 0.
        assert_eq!(rows[1], LinExpr::var(2, 1.0).term(0, -1.0));
        let x = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        assert!(rows[1].eval(&x) < 0.0);
        // ȳ x − y ≥ 0 with ȳ = 200.
        assert!(rows.contains(&LinExpr::var(2, 200.0).term(4, -1.0)));
    }

    #[test]
    fn dropping_a_minimal_window_admits_a_stranded_trip() {
        let (net, path) = six_node_corridor();
        let subs = enumerate_subpaths(&net, &path, 0, &class(100.0), 0).unwrap();
        let all_choices = |mask: u32| move |n: usize| mask & (1 << n) != 0;
        // A window containing another window is implied by it ({3,4,5,6} by
        // {4,5,6}); only minimal windows carry information of their own.
        let minimal: Vec<usize> = (0..subs.len())
            .filter(|&i| {
                !subs.iter().enumerate().any(|(j, o)| {
                    j != i && o.nodes.iter().all(|n| subs[i].nodes.contains(n))
                })
            })
            .collect();
        assert_eq!(minimal.len(), 3);
        for skip in minimal {
            let mut found = false;
            for mask in 0u32..(1 << 6) {
                let feasible_without = subs
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i != skip)
                    .all(|(_, s)| s.nodes.iter().any(|&n| mask & (1 << n) != 0));
                if feasible_without && !fuel_simulation(&path, 100.0, &all_choices(mask)) {
                    found = true;
                    break;
                }
            }
            assert!(found, "window {skip} is vacuous");
        }
    }

    proptest! {
        #[test]
        fn covered_choices_are_drivable(
            gaps in proptest::collection::vec(5.0f64..80.0, 1..8),
            d_o in 0.0f64..60.0,
            d_d in 0.0f64..60.0,
            range in 80.0f64..250.0,
            mask in any::<u32>(),
        ) {
            let mut positions = vec![0.0];
            for g in &gaps {
                positions.push(positions.last().unwrap() + g);
            }
            let n = positions.len();
            let (net, mut path) = chain(&positions, &vec![true; n]);
            path.d_origin_km = d_o;
            path.d_dest_km = d_d;
            let Ok(subs) = enumerate_subpaths(&net, &path, 0, &class(range), 0) else {
                return Ok(());
            };
            // Repair a random choice so that every window is covered.
            let mut chosen: Vec<bool> = (0..n).map(|i| mask & (1 << i) != 0).collect();
            for s in &subs {
                if !s.nodes.iter().any(|&i| chosen[i]) {
                    chosen[*s.nodes.last().unwrap()] = true;
                }
            }
            prop_assert!(fuel_simulation(&path, range, &|i| chosen[i]));
        }

        #[test]
        fn longer_range_never_adds_constraints(
            gaps in proptest::collection::vec(5.0f64..60.0, 1..8),
            range in 80.0f64..200.0,
            extra in 0.0f64..100.0,
        ) {
            let mut positions = vec![0.0];
            for g in &gaps {
                positions.push(positions.last().unwrap() + g);
            }
            let n = positions.len();
            let (net, mut path) = chain(&positions, &vec![true; n]);
            path.d_origin_km = 30.0;
            path.d_dest_km = 30.0;
            let short = enumerate_subpaths(&net, &path, 0, &class(range), 0).unwrap();
            let long = enumerate_subpaths(&net, &path, 0, &class(range + extra), 0).unwrap();
            // Each long-range window contains some short-range window, so the
            // long-range constraints are implied by the short-range ones.
            for l in &long {
                prop_assert!(short.iter().any(|s| s.nodes.iter().all(|i| l.nodes.contains(i))));
            }
        }
    }
}
