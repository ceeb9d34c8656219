//! Lane-graph construction over the lot and shortest-path guidance to the
//! nearest vacant spot.
//!
//! Each row gets one lane polyline: a waypoint per inter-pillar gap, placed
//! at the gap midline at a configured offset below the row band. Spot nodes
//! sit at their interval centers and connect to the nearest waypoint of
//! their row; entrances connect to the nearest lane endpoint. All edges are
//! undirected with Euclidean weights.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::depth::{euclidean_distance, PlanarPoint};
use crate::vacancy::{LotModel, SpotStatus, VacancyMap};

/// Distance from a row band's lower edge to its driving lane.
pub const DEFAULT_LANE_OFFSET: f64 = 3.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NavError {
    #[error("no entrances configured")]
    NoEntrances,
    #[error("node {0} does not exist")]
    UnknownNode(usize),
    #[error("node {0} is not an entrance")]
    NotAnEntrance(usize),
    #[error("no vacant spot in the lot")]
    NoVacantSpot,
    #[error("vacant spots exist but none is reachable from the entrance")]
    Unreachable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Entrance,
    Waypoint,
    Spot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NavNode {
    pub id: usize,
    pub kind: NodeKind,
    pub position: PlanarPoint,
    /// Present on spot nodes only; references a `VacancySpot::spot_id`.
    pub spot_ref: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NavEdge {
    pub u: usize,
    pub v: usize,
    pub weight: f64,
}

/// Weighted undirected graph; edges are stored once and traversed both ways.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NavGraph {
    pub nodes: Vec<NavNode>,
    pub edges: Vec<NavEdge>,
}

impl NavGraph {
    fn adjacency(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            adj[e.u].push((e.v, e.weight));
            adj[e.v].push((e.u, e.weight));
        }
        adj
    }

    pub fn entrance_ids(&self) -> Vec<usize> {
        self.nodes
            .iter()
            .filter(|n| n.kind == NodeKind::Entrance)
            .map(|n| n.id)
            .collect()
    }
}

/// Guidance result: the node path from an entrance to a vacant spot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub node_sequence: Vec<usize>,
    pub total_distance: f64,
    pub target_spot: u32,
}

/// Shortest-path tree from one source.
#[derive(Debug, Clone, PartialEq)]
pub struct ShortestPaths {
    pub dist: Vec<f64>,
    pub prev: Vec<Option<usize>>,
}

/// Build the navigation graph for a lot and its vacancy map.
///
/// Node ids are assigned deterministically: entrances first, then each row's
/// waypoints left to right, then spot nodes in spot-id order.
pub fn build_nav_graph(
    lot: &LotModel,
    vmap: &VacancyMap,
    entrances: &[PlanarPoint],
    lane_offset: f64,
) -> Result<NavGraph, NavError> {
    if entrances.is_empty() {
        return Err(NavError::NoEntrances);
    }

    let mut nodes: Vec<NavNode> = Vec::new();
    let mut edges: Vec<NavEdge> = Vec::new();
    let push_edge =
        |u: usize, v: usize, a: PlanarPoint, b: PlanarPoint, edges: &mut Vec<NavEdge>| {
            // Coincident nodes still need a positive weight.
            let weight = euclidean_distance(a, b).max(1e-9);
            edges.push(NavEdge { u, v, weight });
        };

    for p in entrances {
        nodes.push(NavNode {
            id: nodes.len(),
            kind: NodeKind::Entrance,
            position: *p,
            spot_ref: None,
        });
    }

    // One lane polyline per row; remember endpoints and per-row waypoint ids.
    let mut row_waypoints: Vec<Vec<usize>> = Vec::with_capacity(lot.rows.len());
    let mut endpoints: Vec<usize> = Vec::new();
    for (row_index, band) in lot.rows.iter().enumerate() {
        let lane_y = band.y_lo - lane_offset;
        let pillars: Vec<_> = lot.pillars_in_row(row_index).collect();
        let mut waypoints: Vec<usize> = Vec::new();
        for pair in pillars.windows(2) {
            let mid_x = (pair[0].footprint.x_hi + pair[1].footprint.x_lo) / 2.0;
            let id = nodes.len();
            nodes.push(NavNode {
                id,
                kind: NodeKind::Waypoint,
                position: PlanarPoint::new(mid_x, lane_y),
                spot_ref: None,
            });
            if let Some(&prev) = waypoints.last() {
                let (a, b) = (nodes[prev].position, nodes[id].position);
                push_edge(prev, id, a, b, &mut edges);
            }
            waypoints.push(id);
        }
        if let (Some(&first), Some(&last)) = (waypoints.first(), waypoints.last()) {
            endpoints.push(first);
            if last != first {
                endpoints.push(last);
            }
        }
        row_waypoints.push(waypoints);
    }

    for spot in &vmap.spots {
        let row = spot.row_index as usize;
        let band = lot.rows.get(row).ok_or(NavError::UnknownNode(row))?;
        let position = PlanarPoint::new((spot.x_lo + spot.x_hi) / 2.0, band.center());
        let id = nodes.len();
        nodes.push(NavNode {
            id,
            kind: NodeKind::Spot,
            position,
            spot_ref: Some(spot.spot_id),
        });
        if let Some(&wp) = nearest_node(&nodes, &row_waypoints[row], position) {
            let (a, b) = (nodes[wp].position, nodes[id].position);
            push_edge(wp, id, a, b, &mut edges);
        }
    }

    for entrance_id in 0..entrances.len() {
        let position = nodes[entrance_id].position;
        if let Some(&ep) = nearest_node(&nodes, &endpoints, position) {
            let (a, b) = (nodes[ep].position, nodes[entrance_id].position);
            push_edge(entrance_id, ep, a, b, &mut edges);
        }
    }

    Ok(NavGraph { nodes, edges })
}

fn nearest_node<'a>(
    nodes: &[NavNode],
    candidates: &'a [usize],
    from: PlanarPoint,
) -> Option<&'a usize> {
    candidates.iter().min_by(|&&a, &&b| {
        euclidean_distance(nodes[a].position, from)
            .total_cmp(&euclidean_distance(nodes[b].position, from))
            .then(a.cmp(&b))
    })
}

/// Exact single-source shortest paths. Unreachable nodes keep infinite
/// distance; equal-distance pops are resolved by smaller node id so the
/// predecessor tree is reproducible.
pub fn dijkstra(graph: &NavGraph, source: usize) -> Result<ShortestPaths, NavError> {
    let n = graph.nodes.len();
    if source >= n {
        return Err(NavError::UnknownNode(source));
    }
    let adj = graph.adjacency();
    let mut dist = vec![f64::INFINITY; n];
    let mut prev: Vec<Option<usize>> = vec![None; n];
    let mut settled = vec![false; n];

    #[derive(PartialEq)]
    struct QueueKey(f64, usize);
    impl Eq for QueueKey {}
    impl PartialOrd for QueueKey {
        fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(other))
        }
    }
    impl Ord for QueueKey {
        fn cmp(&self, other: &Self) -> std::cmp::Ordering {
            self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
        }
    }

    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(Reverse(QueueKey(0.0, source)));
    while let Some(Reverse(QueueKey(d, u))) = heap.pop() {
        if settled[u] || d > dist[u] {
            continue;
        }
        settled[u] = true;
        for &(v, w) in &adj[u] {
            let alt = dist[u] + w;
            if alt < dist[v] {
                dist[v] = alt;
                prev[v] = Some(u);
                heap.push(Reverse(QueueKey(alt, v)));
            }
        }
    }
    Ok(ShortestPaths { dist, prev })
}

/// Route from an entrance node to the closest vacant spot.
///
/// Equidistant vacant spots resolve to the lowest spot id.
pub fn nearest_vacant(
    graph: &NavGraph,
    vmap: &VacancyMap,
    entrance: usize,
) -> Result<Route, NavError> {
    let node = graph
        .nodes
        .get(entrance)
        .ok_or(NavError::UnknownNode(entrance))?;
    if node.kind != NodeKind::Entrance {
        return Err(NavError::NotAnEntrance(entrance));
    }

    let vacant_ids: Vec<u32> = vmap
        .spots
        .iter()
        .filter(|s| s.status == SpotStatus::Vacant)
        .map(|s| s.spot_id)
        .collect();
    if vacant_ids.is_empty() {
        return Err(NavError::NoVacantSpot);
    }

    let paths = dijkstra(graph, entrance)?;
    let best = graph
        .nodes
        .iter()
        .filter_map(|n| match (n.kind, n.spot_ref) {
            (NodeKind::Spot, Some(spot_id)) if vacant_ids.contains(&spot_id) => {
                Some((paths.dist[n.id], spot_id, n.id))
            }
            _ => None,
        })
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let (distance, spot_id, node_id) = best.ok_or(NavError::Unreachable)?;
    if !distance.is_finite() {
        return Err(NavError::Unreachable);
    }

    let mut sequence = vec![node_id];
    let mut cursor = node_id;
    while let Some(p) = paths.prev[cursor] {
        sequence.push(p);
        cursor = p;
    }
    sequence.reverse();
    debug_assert_eq!(sequence.first(), Some(&entrance));

    Ok(Route {
        node_sequence: sequence,
        total_distance: distance,
        target_spot: spot_id,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annot::ClassLabel;
    use crate::fusion::{FloorRect, Object3D};
    use crate::vacancy::{assign_rows, extract_vacancies, RowBand};

    fn graph(nodes: usize, edges: &[(usize, usize, f64)]) -> NavGraph {
        NavGraph {
            nodes: (0..nodes)
                .map(|id| NavNode {
                    id,
                    kind: NodeKind::Waypoint,
                    position: PlanarPoint::new(id as f64, 0.0),
                    spot_ref: None,
                })
                .collect(),
            edges: edges
                .iter()
                .map(|&(u, v, weight)| NavEdge { u, v, weight })
                .collect(),
        }
    }

    #[test]
    fn dijkstra_triangle() {
        let g = graph(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 3.0)]);
        let sp = dijkstra(&g, 0).unwrap();
        assert_eq!(sp.dist[2], 2.0);
        assert_eq!(sp.prev[2], Some(1));
    }

    #[test]
    fn dijkstra_isolated_node_is_infinite() {
        let g = graph(3, &[(0, 1, 1.0)]);
        let sp = dijkstra(&g, 0).unwrap();
        assert!(sp.dist[2].is_infinite());
    }

    #[test]
    fn dijkstra_unknown_source() {
        let g = graph(2, &[(0, 1, 1.0)]);
        assert_eq!(dijkstra(&g, 5), Err(NavError::UnknownNode(5)));
    }

    fn pillar_at(x_lo: f64, x_hi: f64, y: f64) -> Object3D {
        Object3D {
            class_label: ClassLabel::Pillar,
            floor_position: PlanarPoint::new((x_lo + x_hi) / 2.0, y),
            z: 1.0,
            pixel_area: 10.0,
            footprint: FloorRect::new(x_lo, y - 0.4, x_hi, y + 0.4),
            source_view: 0,
        }
    }

    fn one_row_fixture() -> (LotModel, VacancyMap) {
        let objects = vec![pillar_at(0.0, 1.0, 6.0), pillar_at(11.0, 12.0, 6.0)];
        let lot = assign_rows(
            objects,
            &[RowBand::new(4.0, 8.5)],
            2.5,
            FloorRect::new(-5.0, -5.0, 40.0, 40.0),
            "fixture",
        )
        .unwrap()
        .lot;
        let vmap = extract_vacancies(&lot, 0.2);
        (lot, vmap)
    }

    #[test]
    fn build_one_row_graph_is_connected() {
        let (lot, vmap) = one_row_fixture();
        assert_eq!(vmap.spots.len(), 4);
        let g = build_nav_graph(&lot, &vmap, &[PlanarPoint::new(0.0, 0.0)], 3.0).unwrap();
        let spots = g.nodes.iter().filter(|n| n.kind == NodeKind::Spot).count();
        assert_eq!(spots, 4);
        assert_eq!(g.entrance_ids(), vec![0]);
        let sp = dijkstra(&g, 0).unwrap();
        assert!(sp.dist.iter().all(|d| d.is_finite()));
    }

    #[test]
    fn build_requires_entrances() {
        let (lot, vmap) = one_row_fixture();
        assert_eq!(
            build_nav_graph(&lot, &vmap, &[], 3.0),
            Err(NavError::NoEntrances)
        );
    }

    #[test]
    fn disjoint_rows_split_into_components() {
        let objects = vec![
            pillar_at(0.0, 1.0, 6.0),
            pillar_at(11.0, 12.0, 6.0),
            pillar_at(0.0, 1.0, 20.0),
            pillar_at(11.0, 12.0, 20.0),
        ];
        let lot = assign_rows(
            objects,
            &[RowBand::new(4.0, 8.5), RowBand::new(18.0, 22.5)],
            2.5,
            FloorRect::new(-5.0, -5.0, 40.0, 40.0),
            "fixture",
        )
        .unwrap()
        .lot;
        let vmap = extract_vacancies(&lot, 0.2);
        // Entrance near row 0's lane: row 1 is unreachable.
        let g = build_nav_graph(&lot, &vmap, &[PlanarPoint::new(0.0, 0.0)], 3.0).unwrap();
        let sp = dijkstra(&g, 0).unwrap();
        let row1_spot = g
            .nodes
            .iter()
            .find(|n| n.spot_ref.is_some_and(|s| s >= 4))
            .unwrap();
        assert!(sp.dist[row1_spot.id].is_infinite());
    }

    #[test]
    fn nearest_vacant_picks_single_vacancy() {
        let (lot, mut vmap) = one_row_fixture();
        for spot in &mut vmap.spots {
            spot.status = SpotStatus::Occupied;
        }
        vmap.spots[2].status = SpotStatus::Vacant;
        let g = build_nav_graph(&lot, &vmap, &[PlanarPoint::new(0.0, 0.0)], 3.0).unwrap();
        let route = nearest_vacant(&g, &vmap, 0).unwrap();
        assert_eq!(route.target_spot, 2);
        let sp = dijkstra(&g, 0).unwrap();
        let target_node = g.nodes.iter().find(|n| n.spot_ref == Some(2)).unwrap();
        assert!((route.total_distance - sp.dist[target_node.id]).abs() < 1e-9);
    }

    #[test]
    fn nearest_vacant_tie_breaks_by_spot_id() {
        // Symmetric two-spot graph: both vacant spots at equal distance.
        let mut g = graph(1, &[]);
        g.nodes[0].kind = NodeKind::Entrance;
        for (id, spot) in [(1usize, 0u32), (2usize, 1u32)] {
            g.nodes.push(NavNode {
                id,
                kind: NodeKind::Spot,
                position: PlanarPoint::new(id as f64, 1.0),
                spot_ref: Some(spot),
            });
            g.edges.push(NavEdge {
                u: 0,
                v: id,
                weight: 2.0,
            });
        }
        let vmap = VacancyMap {
            spots: vec![
                crate::vacancy::VacancySpot {
                    spot_id: 0,
                    row_index: 0,
                    x_lo: 0.0,
                    x_hi: 2.5,
                    status: SpotStatus::Vacant,
                },
                crate::vacancy::VacancySpot {
                    spot_id: 1,
                    row_index: 0,
                    x_lo: 2.5,
                    x_hi: 5.0,
                    status: SpotStatus::Vacant,
                },
            ],
            generated_from: crate::vacancy::SourceStamp {
                lot_id: "tie".into(),
                timestamp: None,
            },
        };
        let route = nearest_vacant(&g, &vmap, 0).unwrap();
        assert_eq!(route.target_spot, 0);
    }

    #[test]
    fn nearest_vacant_all_occupied() {
        let (lot, mut vmap) = one_row_fixture();
        for spot in &mut vmap.spots {
            spot.status = SpotStatus::Occupied;
        }
        let g = build_nav_graph(&lot, &vmap, &[PlanarPoint::new(0.0, 0.0)], 3.0).unwrap();
        assert_eq!(nearest_vacant(&g, &vmap, 0), Err(NavError::NoVacantSpot));
    }

    #[test]
    fn triangle_inequality_over_edges() {
        let (lot, vmap) = one_row_fixture();
        let g = build_nav_graph(&lot, &vmap, &[PlanarPoint::new(0.0, 0.0)], 3.0).unwrap();
        let sp = dijkstra(&g, 0).unwrap();
        for e in &g.edges {
            assert!(sp.dist[e.v] <= sp.dist[e.u] + e.weight + 1e-12);
            assert!(sp.dist[e.u] <= sp.dist[e.v] + e.weight + 1e-12);
        }
    }

    #[test]
    fn choosing_a_spot_never_uncovers_a_closer_one() {
        let (lot, mut vmap) = one_row_fixture();
        let g = build_nav_graph(&lot, &vmap, &[PlanarPoint::new(0.0, 0.0)], 3.0).unwrap();
        let first = nearest_vacant(&g, &vmap, 0).unwrap();
        for spot in &mut vmap.spots {
            if spot.spot_id == first.target_spot {
                spot.status = SpotStatus::Occupied;
            }
        }
        if let Ok(second) = nearest_vacant(&g, &vmap, 0) {
            assert!(second.total_distance >= first.total_distance - 1e-12);
        }
    }
}
