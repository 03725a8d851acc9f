//! Pedestrian demand compilation.
//!
//! Every undirected sidewalk segment is a trip centroid. OD trip rates are
//! assigned to shortest walking paths once, and the resulting link flows are
//! turned into the quantities the dynamics actually run on: generation rates
//! per directed sidewalk, exit probabilities and node turning ratios.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::Serialize;

use crate::net::{ped_node_index, Network, PedLink, PedNode};

/// Routing of pedestrians over the unified pedestrian link index
/// (crosswalks first, then sidewalks).
#[derive(Clone, Debug, Serialize)]
pub struct PedRouting {
    /// Mean walkers generated per step at the upstream end of each link.
    pub q_in: Vec<f64>,
    /// Mean walkers leaving the network per step from each link.
    pub q_out: Vec<f64>,
    /// Probability that a walker entering a link ends its trip there.
    pub exit_prob: Vec<f64>,
    /// Continuation links and their probabilities given no exit; sums to 1
    /// whenever the list is nonempty.
    #[serde(skip)]
    pub next: Vec<Vec<(PedLink, f64)>>,
}

impl PedRouting {
    /// Routing with no demand and uniform default ratios everywhere.
    pub fn empty(net: &Network) -> PedRouting {
        let n = net.n_ped_links();
        let mut next = Vec::with_capacity(n);
        let mut exit_prob = vec![0.0; n];
        for k in 0..n {
            let link = net.ped_link_from_index(k);
            let cont = net.ped_continuations(link);
            if cont.is_empty() {
                exit_prob[k] = 1.0;
            }
            let p = 1.0 / cont.len().max(1) as f64;
            next.push(cont.into_iter().map(|c| (c, p)).collect());
        }
        PedRouting {
            q_in: vec![0.0; n],
            q_out: vec![0.0; n],
            exit_prob,
            next,
        }
    }

    /// Mean ratio from crosswalk movement `k` onto its unique downstream
    /// crosswalk movement.
    pub fn ratio_to(&self, from: usize, to: PedLink) -> f64 {
        self.next[from]
            .iter()
            .find(|(l, _)| *l == to)
            .map_or(0.0, |&(_, p)| p)
    }

    pub fn total_generation(&self) -> f64 {
        self.q_in.iter().sum()
    }
}

/// OD demand description: a per-pair rate for trips between segments in
/// the high-demand region and another for every other pair.
#[derive(Clone, Debug)]
pub struct OdSpec {
    pub p_high: f64,
    pub p_low: f64,
    /// Trips per step generated by an OD pair per unit of probability.
    pub rate_scale: f64,
    /// High-demand intersections; a segment belongs to the region when all of
    /// its corners do.
    pub high_region: Vec<bool>,
}

#[derive(Clone, Copy, PartialEq)]
struct Item(f64, usize);

impl Eq for Item {}

impl Ord for Item {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .partial_cmp(&self.0)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Item {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn ped_link_length(net: &Network, link: PedLink) -> f64 {
    match link {
        PedLink::Crosswalk(_) => net.params.crosswalk_length,
        PedLink::Sidewalk(s) => net.sidewalk(s).length,
    }
}

/// Single-source shortest paths over pedestrian nodes. Returns distances and
/// the incoming link on the shortest path tree.
fn dijkstra(net: &Network, src: usize) -> (Vec<f64>, Vec<Option<PedLink>>) {
    let n = net.ped_nodes.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut pred = vec![None; n];
    let mut heap = BinaryHeap::new();
    dist[src] = 0.0;
    heap.push(Item(0.0, src));
    while let Some(Item(d, u)) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        for &link in &net.ped_out[u] {
            let v = ped_node_index(net.ped_link_to(link));
            let nd = d + ped_link_length(net, link);
            if nd < dist[v] {
                dist[v] = nd;
                pred[v] = Some(link);
                heap.push(Item(nd, v));
            }
        }
    }
    (dist, pred)
}

fn segment_in_region(net: &Network, seg: usize, region: &[bool]) -> bool {
    let s = net.sidewalk(net.segments[seg][0]);
    [s.from, s.to].iter().all(|n| match n {
        PedNode::Corner { intersection, .. } => region[*intersection],
        PedNode::BoundaryEnd(_) => true,
    })
}

/// Assigns every OD pair to its shortest path and derives per-link rates.
///
/// A trip starts at the upstream end of one directed sidewalk of its origin
/// segment and ends halfway along one directed sidewalk of its destination;
/// the pair of directions with the shortest total walk is used.
pub fn compile(net: &Network, spec: &OdSpec) -> PedRouting {
    let mut routing = PedRouting::empty(net);
    let nl = net.n_ped_links();
    let n_seg = net.segments.len();
    let in_high: Vec<bool> = (0..n_seg)
        .map(|s| segment_in_region(net, s, &spec.high_region))
        .collect();

    let trees: Vec<_> = (0..net.ped_nodes.len()).map(|u| dijkstra(net, u)).collect();
    let mut q_in = vec![0.0; nl];
    let mut q_out = vec![0.0; nl];
    let mut trans: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nl];
    let mut add_trans = |u: usize, v: usize, r: f64| {
        match trans[u].iter_mut().find(|(k, _)| *k == v) {
            Some(e) => e.1 += r,
            None => trans[u].push((v, r)),
        }
    };

    for o in 0..n_seg {
        for d in 0..n_seg {
            if o == d {
                continue;
            }
            let p = if in_high[o] && in_high[d] {
                spec.p_high
            } else {
                spec.p_low
            };
            let rate = p * spec.rate_scale;
            if rate <= 0.0 {
                continue;
            }
            let mut best: Option<(f64, usize, usize)> = None;
            for so in net.segments[o] {
                let a = ped_node_index(net.sidewalk(so).to);
                for sd in net.segments[d] {
                    let b = ped_node_index(net.sidewalk(sd).from);
                    let cost = trees[a].0[b];
                    if cost.is_finite() && best.map_or(true, |(c, _, _)| cost < c) {
                        best = Some((cost, so.0, sd.0));
                    }
                }
            }
            let Some((_, so, sd)) = best else { continue };
            let so = PedLink::Sidewalk(crate::net::SidewalkId(so));
            let sd = PedLink::Sidewalk(crate::net::SidewalkId(sd));
            // Walk back from the destination's upstream node to the origin's
            // downstream node.
            let a = ped_node_index(net.ped_link_to(so));
            let mut node = ped_node_index(net.ped_link_from(sd));
            let mut path = vec![sd];
            while node != a {
                let link = trees[a].1[node].expect("reachable node has predecessor");
                path.push(link);
                node = ped_node_index(net.ped_link_from(link));
            }
            path.push(so);
            path.reverse();
            q_in[net.ped_link_index(so)] += rate;
            q_out[net.ped_link_index(sd)] += rate;
            for w in path.windows(2) {
                add_trans(net.ped_link_index(w[0]), net.ped_link_index(w[1]), rate);
            }
        }
    }

    // Entering flow per link: generation plus transfers in.
    let mut entering = q_in.clone();
    for list in &trans {
        for &(v, r) in list {
            entering[v] += r;
        }
    }
    for k in 0..nl {
        let out: f64 = trans[k].iter().map(|&(_, r)| r).sum();
        if entering[k] > 0.0 {
            routing.exit_prob[k] = (q_out[k] / entering[k]).clamp(0.0, 1.0);
        }
        if routing.next[k].is_empty() {
            routing.exit_prob[k] = 1.0;
        }
        if out > 0.0 {
            for (link, p) in routing.next[k].iter_mut() {
                let v = net.ped_link_index(*link);
                *p = trans[k]
                    .iter()
                    .find(|(x, _)| *x == v)
                    .map_or(0.0, |&(_, r)| r / out);
            }
        }
    }
    routing.q_in = q_in;
    routing.q_out = q_out;
    routing
}
