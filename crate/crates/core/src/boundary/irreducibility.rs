use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::{Deserialize, Serialize};

use super::table::{BoundaryRateTable, RateModel};
use super::window::{Side, WindowState};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SideReport {
    pub side: Side,
    pub strongly_connected: bool,
    pub components: usize,
    /// On failure: `(from, to)` with `to` unreachable from `from`.
    pub witness: Option<(WindowState, WindowState)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrreducibilityReport {
    pub left: SideReport,
    pub right: SideReport,
}

impl IrreducibilityReport {
    pub fn accepted(&self) -> bool {
        self.left.strongly_connected && self.right.strongly_connected
    }
}

/// Checks that, on each side, boundary replacements together with
/// nearest-neighbour swaps inside the window connect all `2^l` states.
pub fn validate_irreducibility<S: Scalar>(model: &RateModel<S>) -> IrreducibilityReport {
    IrreducibilityReport {
        left: check_side(model.table(Side::Left)),
        right: check_side(model.table(Side::Right)),
    }
}

fn check_side<S: Scalar>(table: &BoundaryRateTable<S>) -> SideReport {
    let l = table.l();
    let dim = table.dim();
    let mut g = DiGraph::<(), ()>::with_capacity(dim, dim * (l + 1));
    let nodes: Vec<_> = (0..dim).map(|_| g.add_node(())).collect();
    for from in WindowState::all(l) {
        for (to, _) in table.transitions(from) {
            g.add_edge(nodes[from.mask as usize], nodes[to.mask as usize], ());
        }
        for i in 0..l.saturating_sub(1) {
            let to = from.swapped(i);
            if to != from {
                g.add_edge(nodes[from.mask as usize], nodes[to.mask as usize], ());
            }
        }
    }
    let sccs = tarjan_scc(&g);
    if sccs.len() == 1 {
        return SideReport { side: table.side(), strongly_connected: true, components: 1, witness: None };
    }
    let mut comp_of = vec![0usize; dim];
    for (c, members) in sccs.iter().enumerate() {
        for n in members {
            comp_of[n.index()] = c;
        }
    }
    let mut is_sink = vec![true; sccs.len()];
    for e in g.raw_edges() {
        let (a, b) = (comp_of[e.source().index()], comp_of[e.target().index()]);
        if a != b {
            is_sink[a] = false;
        }
    }
    // A closed class cannot reach anything outside itself.
    let (sink, min_mask) = sccs
        .iter()
        .enumerate()
        .filter(|(c, _)| is_sink[*c])
        .map(|(c, m)| (c, m.iter().map(|n| n.index()).min().unwrap_or(0)))
        .min_by_key(|&(_, m)| m)
        .expect("a finite digraph has a sink component");
    let outside = (0..dim).rev().find(|&m| comp_of[m] != sink).expect("more than one component");
    SideReport {
        side: table.side(),
        strongly_connected: false,
        components: sccs.len(),
        witness: Some((WindowState::new(min_mask as u32), WindowState::new(outside as u32))),
    }
}
