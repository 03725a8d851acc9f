//! Grid network topology: intersections, directed links, vehicle movements,
//! the pedestrian overlay (corners, sidewalks, crosswalks) and the fixed
//! 11-phase catalog shared by every intersection.
//!
//! Identifiers are dense indices assigned in a fixed order by [`Network::grid`],
//! so the same construction parameters always produce the same ids.

use crate::error::NetError;

/// Number of vehicle movements at a four-leg intersection (4 approaches x L/T/R).
pub const VEH_PER_INTERSECTION: usize = 12;
/// Number of directed crosswalk movements at a four-leg intersection.
pub const CW_PER_INTERSECTION: usize = 8;
/// Number of admissible phases at every intersection.
pub const PHASES_PER_INTERSECTION: usize = 11;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    North,
    East,
    South,
    West,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::North, Side::East, Side::South, Side::West];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn opposite(self) -> Side {
        match self {
            Side::North => Side::South,
            Side::East => Side::West,
            Side::South => Side::North,
            Side::West => Side::East,
        }
    }

    /// Side reached by turning right while heading towards `self`.
    pub fn right_of(self) -> Side {
        match self {
            Side::North => Side::East,
            Side::East => Side::South,
            Side::South => Side::West,
            Side::West => Side::North,
        }
    }

    pub fn left_of(self) -> Side {
        self.right_of().opposite()
    }

    /// The two corners touching this leg, in clockwise order.
    pub fn corners(self) -> (Corner, Corner) {
        match self {
            Side::North => (Corner::NW, Corner::NE),
            Side::East => (Corner::NE, Corner::SE),
            Side::South => (Corner::SE, Corner::SW),
            Side::West => (Corner::SW, Corner::NW),
        }
    }

    pub fn axis(self) -> Axis {
        match self {
            Side::North | Side::South => Axis::NorthSouth,
            Side::East | Side::West => Axis::EastWest,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Axis {
    NorthSouth,
    EastWest,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Turn {
    Left,
    Through,
    Right,
}

impl Turn {
    pub const ALL: [Turn; 3] = [Turn::Left, Turn::Through, Turn::Right];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Corner {
    NE,
    NW,
    SE,
    SW,
}

impl Corner {
    pub const ALL: [Corner; 4] = [Corner::NE, Corner::NW, Corner::SE, Corner::SW];

    pub fn index(self) -> usize {
        self as usize
    }

    /// The two legs (and thus crosswalks) adjacent to this corner.
    pub fn legs(self) -> [Side; 2] {
        match self {
            Corner::NE => [Side::North, Side::East],
            Corner::NW => [Side::North, Side::West],
            Corner::SE => [Side::South, Side::East],
            Corner::SW => [Side::South, Side::West],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LinkClass {
    Entry,
    Internal,
    Exit,
}

/// End point of a directed link: an intersection or the outside world beyond
/// a given leg of a perimeter intersection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Endpoint {
    Intersection(usize),
    Boundary { intersection: usize, side: Side },
}

#[derive(Clone, Debug)]
pub struct Link {
    pub from: Endpoint,
    pub to: Endpoint,
    pub class: LinkClass,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MovementId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CrosswalkId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SidewalkId(pub usize);

/// A vehicle movement (h, i, j): vehicles on the approach link from `from_side`
/// of intersection `intersection` that will leave through `to_side`.
#[derive(Clone, Debug)]
pub struct VehMovement {
    pub intersection: usize,
    pub from_side: Side,
    pub turn: Turn,
    pub to_side: Side,
    pub in_link: usize,
    pub out_link: usize,
    /// Movements at the next intersection fed by this one; empty for exits.
    pub downstream: Vec<MovementId>,
    /// Crosswalk movements a right turn must yield to; empty otherwise.
    pub conflicts: Vec<CrosswalkId>,
}

/// A directed crossing between two corners of the same intersection.
#[derive(Clone, Debug)]
pub struct CrosswalkMovement {
    pub intersection: usize,
    pub leg: Side,
    pub clockwise: bool,
    pub from: PedNode,
    pub to: PedNode,
    /// The unique non-reversing crosswalk continuation from `to`.
    pub downstream: CrosswalkId,
}

/// A pedestrian node: an intersection corner or the outer end of a sidewalk
/// on a perimeter link.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PedNode {
    Corner { intersection: usize, corner: Corner },
    BoundaryEnd(usize),
}

/// A directed sidewalk between two pedestrian nodes along one side of a link.
#[derive(Clone, Debug)]
pub struct Sidewalk {
    pub from: PedNode,
    pub to: PedNode,
    pub length: f64,
    /// Undirected sidewalk segment (pedestrian centroid) this belongs to.
    pub segment: usize,
    pub reverse: SidewalkId,
}

/// Unified handle over the two pedestrian link kinds, used by routing tables.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PedLink {
    Crosswalk(CrosswalkId),
    Sidewalk(SidewalkId),
}

/// Binary service vector over an intersection's local vehicle and crosswalk
/// movements. Local indices are shared by every intersection of the grid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SignalPhase {
    pub index: usize,
    pub name: &'static str,
    pub veh_served: [bool; VEH_PER_INTERSECTION],
    pub cw_served: [bool; CW_PER_INTERSECTION],
}

impl SignalPhase {
    pub fn len(&self) -> usize {
        VEH_PER_INTERSECTION + CW_PER_INTERSECTION
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn serves_vehicles(&self) -> bool {
        self.veh_served.iter().any(|&s| s)
    }

    pub fn serves_crosswalks(&self) -> bool {
        self.cw_served.iter().any(|&s| s)
    }

    /// Phase as one flat binary array: vehicle bits followed by crosswalk bits.
    pub fn as_array(&self) -> Vec<u8> {
        self.veh_served
            .iter()
            .chain(self.cw_served.iter())
            .map(|&b| b as u8)
            .collect()
    }
}

/// Local index of vehicle movement (approach side, turn) within an intersection.
pub fn local_veh(from_side: Side, turn: Turn) -> usize {
    from_side.index() * 3 + turn.index()
}

/// Local index of a directed crosswalk movement on `leg`.
pub fn local_cw(leg: Side, clockwise: bool) -> usize {
    leg.index() * 2 + usize::from(!clockwise)
}

/// Vehicle phase families used by the queue-only baselines.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PhaseFamily {
    NsThroughRight,
    NsLeft,
    EwThroughRight,
    EwLeft,
}

impl PhaseFamily {
    pub const ALL: [PhaseFamily; 4] = [
        PhaseFamily::NsThroughRight,
        PhaseFamily::NsLeft,
        PhaseFamily::EwThroughRight,
        PhaseFamily::EwLeft,
    ];

    /// Phase index serving only this family's vehicles.
    pub fn vehicle_only_phase(self) -> usize {
        match self {
            PhaseFamily::NsThroughRight => 0,
            PhaseFamily::NsLeft => 4,
            PhaseFamily::EwThroughRight => 5,
            PhaseFamily::EwLeft => 9,
        }
    }

    /// Phase index serving this family plus every crosswalk it may carry.
    pub fn with_all_parallel_crosswalks(self) -> usize {
        match self {
            PhaseFamily::NsThroughRight => 2,
            PhaseFamily::EwThroughRight => 7,
            other => other.vehicle_only_phase(),
        }
    }
}

/// Index of the exclusive all-pedestrian phase.
pub const EXCLUSIVE_PED_PHASE: usize = 10;

fn phase(
    index: usize,
    name: &'static str,
    axis: Option<(Axis, &[Turn])>,
    legs: &[Side],
) -> SignalPhase {
    let mut veh = [false; VEH_PER_INTERSECTION];
    if let Some((axis, turns)) = axis {
        for side in Side::ALL.into_iter().filter(|s| s.axis() == axis) {
            for &t in turns {
                veh[local_veh(side, t)] = true;
            }
        }
    }
    let mut cw = [false; CW_PER_INTERSECTION];
    for &leg in legs {
        cw[local_cw(leg, true)] = true;
        cw[local_cw(leg, false)] = true;
    }
    SignalPhase {
        index,
        name,
        veh_served: veh,
        cw_served: cw,
    }
}

/// The 11 admissible phases of a standard four-leg intersection.
///
/// Through-right phases carry zero, one or both crosswalks on the legs parallel
/// to their traffic (right turns yield to them). Left phases carry none. The
/// last phase serves all eight crosswalk movements and no vehicles.
pub fn standard_phases() -> Vec<SignalPhase> {
    use Side::*;
    use Turn::*;
    let ns = Axis::NorthSouth;
    let ew = Axis::EastWest;
    vec![
        phase(0, "NS-TR", Some((ns, &[Through, Right])), &[]),
        phase(1, "NS-TR+E", Some((ns, &[Through, Right])), &[East]),
        phase(2, "NS-TR+EW", Some((ns, &[Through, Right])), &[East, West]),
        phase(3, "NS-TR+W", Some((ns, &[Through, Right])), &[West]),
        phase(4, "NS-L", Some((ns, &[Left])), &[]),
        phase(5, "EW-TR", Some((ew, &[Through, Right])), &[]),
        phase(6, "EW-TR+N", Some((ew, &[Through, Right])), &[North]),
        phase(7, "EW-TR+NS", Some((ew, &[Through, Right])), &[North, South]),
        phase(8, "EW-TR+S", Some((ew, &[Through, Right])), &[South]),
        phase(9, "EW-L", Some((ew, &[Left])), &[]),
        phase(10, "PED", None, &[North, East, South, West]),
    ]
}

#[derive(Clone, Debug)]
pub struct GridParams {
    pub rows: usize,
    pub cols: usize,
    pub link_length: f64,
    pub veh_speed: f64,
    pub ped_speed: f64,
    /// Walking length of one crossing; used only for pedestrian path choice.
    pub crosswalk_length: f64,
}

impl Default for GridParams {
    fn default() -> Self {
        GridParams {
            rows: 5,
            cols: 5,
            link_length: 300.0,
            veh_speed: 15.0,
            ped_speed: 1.3,
            crosswalk_length: 19.2,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Network {
    pub params: GridParams,
    pub n_intersections: usize,
    pub links: Vec<Link>,
    /// `in_links[i][side]`: link arriving at intersection i from that side.
    pub in_links: Vec<[usize; 4]>,
    /// `out_links[i][side]`: link leaving intersection i towards that side.
    pub out_links: Vec<[usize; 4]>,
    pub movements: Vec<VehMovement>,
    pub crosswalks: Vec<CrosswalkMovement>,
    pub sidewalks: Vec<Sidewalk>,
    /// Undirected sidewalk segments: the pair of directed sidewalks on each.
    pub segments: Vec<[SidewalkId; 2]>,
    pub ped_nodes: Vec<PedNode>,
    /// Outgoing pedestrian links per node, indexed like `ped_nodes`.
    pub ped_out: Vec<Vec<PedLink>>,
    pub phases: Vec<SignalPhase>,
    /// Movements by link they queue on, in (Left, Through, Right) order.
    pub link_movements: Vec<Vec<MovementId>>,
    pub dt: f64,
}

impl Network {
    /// Builds a `rows x cols` grid of two-way streets. Perimeter legs get an
    /// entry and an exit link; every link has a sidewalk on both sides.
    pub fn grid(params: GridParams) -> Result<Network, NetError> {
        let GridParams {
            rows,
            cols,
            link_length,
            veh_speed,
            ped_speed,
            crosswalk_length,
        } = params.clone();
        if rows == 0 || cols == 0 {
            return Err(NetError::InvalidDimensions { rows, cols });
        }
        for (name, v) in [
            ("link_length", link_length),
            ("veh_speed", veh_speed),
            ("ped_speed", ped_speed),
            ("crosswalk_length", crosswalk_length),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(NetError::NonPositive { name, value: v });
            }
        }
        let n = rows * cols;
        let neighbor = |i: usize, side: Side| -> Option<usize> {
            let (r, c) = (i / cols, i % cols);
            match side {
                Side::North if r > 0 => Some(i - cols),
                Side::South if r + 1 < rows => Some(i + cols),
                Side::West if c > 0 => Some(i - 1),
                Side::East if c + 1 < cols => Some(i + 1),
                _ => None,
            }
        };

        let mut links = Vec::new();
        let mut out_links = vec![[usize::MAX; 4]; n];
        let mut in_links = vec![[usize::MAX; 4]; n];
        for i in 0..n {
            for side in Side::ALL {
                let (to, class) = match neighbor(i, side) {
                    Some(j) => (Endpoint::Intersection(j), LinkClass::Internal),
                    None => (
                        Endpoint::Boundary {
                            intersection: i,
                            side,
                        },
                        LinkClass::Exit,
                    ),
                };
                out_links[i][side.index()] = links.len();
                links.push(Link {
                    from: Endpoint::Intersection(i),
                    to,
                    class,
                });
            }
        }
        for i in 0..n {
            for side in Side::ALL {
                match neighbor(i, side) {
                    Some(j) => in_links[i][side.index()] = out_links[j][side.opposite().index()],
                    None => {
                        in_links[i][side.index()] = links.len();
                        links.push(Link {
                            from: Endpoint::Boundary {
                                intersection: i,
                                side,
                            },
                            to: Endpoint::Intersection(i),
                            class: LinkClass::Entry,
                        });
                    }
                }
            }
        }

        // Vehicle movements: id = i * 12 + local_veh(side, turn).
        let mut movements = Vec::with_capacity(n * VEH_PER_INTERSECTION);
        for i in 0..n {
            for from_side in Side::ALL {
                let heading = from_side.opposite();
                for turn in Turn::ALL {
                    let to_side = match turn {
                        Turn::Through => heading,
                        Turn::Right => heading.right_of(),
                        Turn::Left => heading.left_of(),
                    };
                    let conflicts = if turn == Turn::Right {
                        vec![
                            CrosswalkId(i * CW_PER_INTERSECTION + local_cw(to_side, true)),
                            CrosswalkId(i * CW_PER_INTERSECTION + local_cw(to_side, false)),
                        ]
                    } else {
                        Vec::new()
                    };
                    movements.push(VehMovement {
                        intersection: i,
                        from_side,
                        turn,
                        to_side,
                        in_link: in_links[i][from_side.index()],
                        out_link: out_links[i][to_side.index()],
                        downstream: Vec::new(),
                        conflicts,
                    });
                }
            }
        }
        let mut link_movements = vec![Vec::new(); links.len()];
        for (m, mv) in movements.iter().enumerate() {
            link_movements[mv.in_link].push(MovementId(m));
        }
        for mv in movements.iter_mut() {
            mv.downstream = link_movements[mv.out_link].clone();
        }

        // Pedestrian nodes: corners first (i * 4 + corner), then boundary ends.
        let mut ped_nodes: Vec<PedNode> = (0..n)
            .flat_map(|i| {
                Corner::ALL.into_iter().map(move |corner| PedNode::Corner {
                    intersection: i,
                    corner,
                })
            })
            .collect();

        // Crosswalks: id = i * 8 + local_cw(leg, clockwise).
        let mut crosswalks = Vec::with_capacity(n * CW_PER_INTERSECTION);
        for i in 0..n {
            for leg in Side::ALL {
                for clockwise in [true, false] {
                    let (a, b) = leg.corners();
                    let (from, to) = if clockwise { (a, b) } else { (b, a) };
                    // Continue in the same rotational sense on the other leg at `to`.
                    let next_leg = to.legs().into_iter().find(|&l| l != leg).unwrap();
                    let downstream =
                        CrosswalkId(i * CW_PER_INTERSECTION + local_cw(next_leg, clockwise));
                    crosswalks.push(CrosswalkMovement {
                        intersection: i,
                        leg,
                        clockwise,
                        from: PedNode::Corner {
                            intersection: i,
                            corner: from,
                        },
                        to: PedNode::Corner {
                            intersection: i,
                            corner: to,
                        },
                        downstream,
                    });
                }
            }
        }

        // Sidewalk segments: two per street (one per side of the street).
        let mut sidewalks: Vec<Sidewalk> = Vec::new();
        let mut segments = Vec::new();
        let mut add_segment = |a: PedNode, b: PedNode, sidewalks: &mut Vec<Sidewalk>| {
            let seg = segments.len();
            let s0 = SidewalkId(sidewalks.len());
            let s1 = SidewalkId(sidewalks.len() + 1);
            sidewalks.push(Sidewalk {
                from: a,
                to: b,
                length: link_length,
                segment: seg,
                reverse: s1,
            });
            sidewalks.push(Sidewalk {
                from: b,
                to: a,
                length: link_length,
                segment: seg,
                reverse: s0,
            });
            segments.push([s0, s1]);
        };
        let corner = |intersection: usize, corner: Corner| PedNode::Corner {
            intersection,
            corner,
        };
        for i in 0..n {
            for side in Side::ALL {
                let (c1, c2) = side.corners();
                match neighbor(i, side) {
                    // Internal streets are emitted once, from their west/north end.
                    Some(j) if side == Side::East || side == Side::South => {
                        let mirror = |c: Corner| match (side, c) {
                            (Side::East, Corner::NE) => Corner::NW,
                            (Side::East, Corner::SE) => Corner::SW,
                            (Side::South, Corner::SE) => Corner::NE,
                            (Side::South, Corner::SW) => Corner::NW,
                            _ => unreachable!(),
                        };
                        add_segment(corner(i, c1), corner(j, mirror(c1)), &mut sidewalks);
                        add_segment(corner(i, c2), corner(j, mirror(c2)), &mut sidewalks);
                    }
                    Some(_) => {}
                    None => {
                        for c in [c1, c2] {
                            let end = PedNode::BoundaryEnd(ped_nodes.len());
                            ped_nodes.push(end);
                            add_segment(corner(i, c), end, &mut sidewalks);
                        }
                    }
                }
            }
        }

        let mut ped_out = vec![Vec::new(); ped_nodes.len()];
        for (k, cw) in crosswalks.iter().enumerate() {
            ped_out[ped_node_index(cw.from)].push(PedLink::Crosswalk(CrosswalkId(k)));
        }
        for (k, sw) in sidewalks.iter().enumerate() {
            ped_out[ped_node_index(sw.from)].push(PedLink::Sidewalk(SidewalkId(k)));
        }

        Ok(Network {
            params,
            n_intersections: n,
            links,
            in_links,
            out_links,
            movements,
            crosswalks,
            sidewalks,
            segments,
            ped_nodes,
            ped_out,
            phases: standard_phases(),
            link_movements,
            dt: link_length / veh_speed,
        })
    }

    pub fn rows(&self) -> usize {
        self.params.rows
    }

    pub fn cols(&self) -> usize {
        self.params.cols
    }

    pub fn movement(&self, id: MovementId) -> &VehMovement {
        &self.movements[id.0]
    }

    pub fn crosswalk(&self, id: CrosswalkId) -> &CrosswalkMovement {
        &self.crosswalks[id.0]
    }

    pub fn sidewalk(&self, id: SidewalkId) -> &Sidewalk {
        &self.sidewalks[id.0]
    }

    pub fn entry_links(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.links.len()).filter(|&l| self.links[l].class == LinkClass::Entry)
    }

    /// Global movement ids of intersection `i`, in local order.
    pub fn veh_range(&self, i: usize) -> std::ops::Range<usize> {
        i * VEH_PER_INTERSECTION..(i + 1) * VEH_PER_INTERSECTION
    }

    pub fn cw_range(&self, i: usize) -> std::ops::Range<usize> {
        i * CW_PER_INTERSECTION..(i + 1) * CW_PER_INTERSECTION
    }

    /// Walking distance covered in one step.
    pub fn walk_per_step(&self) -> f64 {
        self.params.ped_speed * self.dt
    }

    /// Admissible phases of `intersection`; only standard four-leg geometry
    /// is supported.
    pub fn enumerate_phases(&self, intersection: usize) -> Result<&[SignalPhase], NetError> {
        if intersection >= self.n_intersections {
            return Err(NetError::UnknownIntersection(intersection));
        }
        let legs_ok = self.in_links[intersection]
            .iter()
            .chain(self.out_links[intersection].iter())
            .all(|&l| l != usize::MAX);
        if !legs_ok {
            return Err(NetError::NotFourWay(intersection));
        }
        Ok(&self.phases)
    }

    /// Crosswalk movements a vehicle movement must yield to: both directions
    /// of the crossing on a right turn's exit leg, nothing otherwise.
    pub fn conflicting_crosswalks(&self, m: MovementId) -> Result<&[CrosswalkId], NetError> {
        self.movements
            .get(m.0)
            .map(|mv| mv.conflicts.as_slice())
            .ok_or(NetError::UnknownMovement(m.0))
    }

    /// Same-intersection corners adjacent to `corner` (the set O for a corner).
    pub fn adjacent_corners(&self, node: PedNode) -> Vec<PedNode> {
        self.ped_out[ped_node_index(node)]
            .iter()
            .filter_map(|l| match l {
                PedLink::Crosswalk(c) => Some(self.crosswalk(*c).to),
                PedLink::Sidewalk(_) => None,
            })
            .collect()
    }

    /// Corners of neighbouring intersections connected to `node` by a
    /// sidewalk (the set U for a corner).
    pub fn upstream_corners(&self, node: PedNode) -> Vec<PedNode> {
        self.ped_out[ped_node_index(node)]
            .iter()
            .filter_map(|l| match l {
                PedLink::Sidewalk(s) => match self.sidewalk(*s).to {
                    n @ PedNode::Corner { .. } => Some(n),
                    PedNode::BoundaryEnd(_) => None,
                },
                PedLink::Crosswalk(_) => None,
            })
            .collect()
    }

    pub fn ped_link_to(&self, link: PedLink) -> PedNode {
        match link {
            PedLink::Crosswalk(c) => self.crosswalk(c).to,
            PedLink::Sidewalk(s) => self.sidewalk(s).to,
        }
    }

    pub fn ped_link_from(&self, link: PedLink) -> PedNode {
        match link {
            PedLink::Crosswalk(c) => self.crosswalk(c).from,
            PedLink::Sidewalk(s) => self.sidewalk(s).from,
        }
    }

    pub fn ped_link_reverse(&self, link: PedLink) -> PedLink {
        match link {
            PedLink::Crosswalk(c) => {
                let cw = self.crosswalk(c);
                PedLink::Crosswalk(CrosswalkId(
                    cw.intersection * CW_PER_INTERSECTION + local_cw(cw.leg, !cw.clockwise),
                ))
            }
            PedLink::Sidewalk(s) => PedLink::Sidewalk(self.sidewalk(s).reverse),
        }
    }

    /// Admissible continuations after traversing `link`: every link leaving
    /// its downstream node except the immediate reversal.
    pub fn ped_continuations(&self, link: PedLink) -> Vec<PedLink> {
        let rev = self.ped_link_reverse(link);
        self.ped_out[ped_node_index(self.ped_link_to(link))]
            .iter()
            .copied()
            .filter(|&d| d != rev)
            .collect()
    }

    /// Intersection a pedestrian link's queue or walkers are attributed to.
    pub fn ped_link_intersection(&self, link: PedLink) -> usize {
        match link {
            PedLink::Crosswalk(c) => self.crosswalk(c).intersection,
            PedLink::Sidewalk(s) => match self.sidewalk(s).to {
                PedNode::Corner { intersection, .. } => intersection,
                PedNode::BoundaryEnd(_) => match self.sidewalk(s).from {
                    PedNode::Corner { intersection, .. } => intersection,
                    PedNode::BoundaryEnd(_) => unreachable!("sidewalk between two boundary ends"),
                },
            },
        }
    }

    /// Dense index over all pedestrian links: crosswalks, then sidewalks.
    pub fn ped_link_index(&self, link: PedLink) -> usize {
        match link {
            PedLink::Crosswalk(c) => c.0,
            PedLink::Sidewalk(s) => self.crosswalks.len() + s.0,
        }
    }

    pub fn ped_link_from_index(&self, k: usize) -> PedLink {
        if k < self.crosswalks.len() {
            PedLink::Crosswalk(CrosswalkId(k))
        } else {
            PedLink::Sidewalk(SidewalkId(k - self.crosswalks.len()))
        }
    }

    pub fn n_ped_links(&self) -> usize {
        self.crosswalks.len() + self.sidewalks.len()
    }
}

/// Dense index of a pedestrian node: corners are `i * 4 + corner`, boundary
/// ends carry their own index.
pub fn ped_node_index(node: PedNode) -> usize {
    match node {
        PedNode::Corner {
            intersection,
            corner,
        } => intersection * 4 + corner.index(),
        PedNode::BoundaryEnd(k) => k,
    }
}

/// Mean vehicle turning ratios, one per movement: the share of vehicles on the
/// movement's approach link that take it.
#[derive(Clone, Debug)]
pub struct VehTurning {
    pub ratio: Vec<f64>,
}

impl VehTurning {
    pub fn uniform_shares(net: &Network, left: f64, through: f64, right: f64) -> VehTurning {
        let ratio = net
            .movements
            .iter()
            .map(|m| match m.turn {
                Turn::Left => left,
                Turn::Through => through,
                Turn::Right => right,
            })
            .collect();
        VehTurning { ratio }
    }

    pub fn validate(&self, net: &Network) -> Result<(), NetError> {
        for link in net.link_movements.iter().filter(|m| !m.is_empty()) {
            let mut sum = 0.0;
            for m in link {
                let r = self.ratio[m.0];
                if !(0.0..=1.0).contains(&r) {
                    return Err(NetError::BadRatio(r));
                }
                sum += r;
            }
            if (sum - 1.0).abs() > 1e-9 {
                return Err(NetError::RatiosDontSum(sum));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(rows: usize, cols: usize) -> Network {
        Network::grid(GridParams {
            rows,
            cols,
            ..GridParams::default()
        })
        .unwrap()
    }

    #[test]
    fn default_grid_has_twenty_second_step() {
        let net = grid(5, 5);
        assert_eq!(net.n_intersections, 25);
        assert_eq!(net.dt, 20.0);
        assert_eq!(net.entry_links().count(), 20);
    }

    #[test]
    fn single_intersection_counts() {
        let net = grid(1, 1);
        assert_eq!(net.n_intersections, 1);
        let count = |c| net.links.iter().filter(|l| l.class == c).count();
        assert_eq!(count(LinkClass::Entry), 4);
        assert_eq!(count(LinkClass::Exit), 4);
        assert_eq!(count(LinkClass::Internal), 0);
        let corners = net
            .ped_nodes
            .iter()
            .filter(|n| matches!(n, PedNode::Corner { .. }))
            .count();
        assert_eq!(corners, 4);
        assert_eq!(net.crosswalks.len(), 8);
    }

    #[test]
    fn two_by_two_has_eight_internal_links() {
        let net = grid(2, 2);
        assert_eq!(net.n_intersections, 4);
        let internal = net
            .links
            .iter()
            .filter(|l| l.class == LinkClass::Internal)
            .count();
        assert_eq!(internal, 8);
    }

    #[test]
    fn rejects_bad_dimensions() {
        let p = GridParams {
            rows: 0,
            ..GridParams::default()
        };
        assert!(matches!(
            Network::grid(p),
            Err(NetError::InvalidDimensions { .. })
        ));
        let p = GridParams {
            veh_speed: -1.0,
            ..GridParams::default()
        };
        assert!(matches!(Network::grid(p), Err(NetError::NonPositive { .. })));
    }

    #[test]
    fn link_endpoint_classes() {
        let net = grid(3, 4);
        for l in &net.links {
            match l.class {
                LinkClass::Internal => {
                    assert!(matches!(l.from, Endpoint::Intersection(_)));
                    assert!(matches!(l.to, Endpoint::Intersection(_)));
                }
                LinkClass::Entry => {
                    assert!(matches!(l.from, Endpoint::Boundary { .. }));
                    assert!(matches!(l.to, Endpoint::Intersection(_)));
                }
                LinkClass::Exit => {
                    assert!(matches!(l.from, Endpoint::Intersection(_)));
                    assert!(matches!(l.to, Endpoint::Boundary { .. }));
                }
            }
        }
    }

    #[test]
    fn eleven_phases_with_expected_service() {
        let net = grid(1, 1);
        let phases = net.enumerate_phases(0).unwrap();
        assert_eq!(phases.len(), 11);
        for p in phases {
            assert_eq!(p.len(), VEH_PER_INTERSECTION + CW_PER_INTERSECTION);
            assert_eq!(p.as_array().len(), p.len());
        }
        for p in phases.iter().filter(|p| p.name.ends_with("-L")) {
            assert!(!p.serves_crosswalks());
        }
        let exclusive: Vec<_> = phases
            .iter()
            .filter(|p| !p.serves_vehicles() && p.cw_served.iter().all(|&s| s))
            .collect();
        assert_eq!(exclusive.len(), 1);
        assert_eq!(exclusive[0].index, EXCLUSIVE_PED_PHASE);
        // Crosswalks ride only with through-right phases on parallel legs.
        for p in phases.iter().filter(|p| p.serves_vehicles() && p.serves_crosswalks()) {
            assert!(p.name.contains("-TR"));
            let veh_axis = if p.veh_served[local_veh(Side::North, Turn::Through)] {
                Axis::NorthSouth
            } else {
                Axis::EastWest
            };
            for leg in Side::ALL {
                if p.cw_served[local_cw(leg, true)] {
                    assert_ne!(leg.axis(), veh_axis);
                }
            }
        }
        assert!(net.enumerate_phases(7).is_err());
    }

    #[test]
    fn phases_cover_every_movement() {
        let phases = standard_phases();
        for k in 0..VEH_PER_INTERSECTION {
            assert!(phases.iter().any(|p| p.veh_served[k]));
        }
        for k in 0..CW_PER_INTERSECTION {
            assert!(phases.iter().any(|p| p.cw_served[k]));
        }
    }

    #[test]
    fn served_vehicle_movements_do_not_cross() {
        // Opposing approaches only; through/right never mixed with left.
        for p in standard_phases() {
            let served: Vec<(Side, Turn)> = Side::ALL
                .into_iter()
                .flat_map(|s| Turn::ALL.into_iter().map(move |t| (s, t)))
                .filter(|&(s, t)| p.veh_served[local_veh(s, t)])
                .collect();
            let has_left = served.iter().any(|&(_, t)| t == Turn::Left);
            let has_tr = served.iter().any(|&(_, t)| t != Turn::Left);
            assert!(!(has_left && has_tr), "{}", p.name);
            if let Some(&(s0, _)) = served.first() {
                assert!(served.iter().all(|&(s, _)| s.axis() == s0.axis()));
            }
        }
    }

    #[test]
    fn right_turn_conflicts_with_exit_leg_crosswalk() {
        let net = grid(1, 1);
        let nb_right = MovementId(local_veh(Side::South, Turn::Right));
        let mv = net.movement(nb_right);
        assert_eq!(mv.to_side, Side::East);
        let conflicts = net.conflicting_crosswalks(nb_right).unwrap();
        assert_eq!(conflicts.len(), 2);
        for c in conflicts {
            assert_eq!(net.crosswalk(*c).leg, Side::East);
        }
        let nb_through = MovementId(local_veh(Side::South, Turn::Through));
        assert!(net.conflicting_crosswalks(nb_through).unwrap().is_empty());
        for m in 0..net.movements.len() {
            let k = net.conflicting_crosswalks(MovementId(m)).unwrap().len();
            assert!(k == 0 || k == 2);
        }
        assert!(net.conflicting_crosswalks(MovementId(999)).is_err());
    }

    #[test]
    fn corner_adjacency_matches_worked_example() {
        // j is the centre of a 3x3 grid; i to its west, k to its south.
        let net = grid(3, 3);
        let (i, j, k) = (3, 4, 7);
        let c = |x: usize, corner| PedNode::Corner {
            intersection: x,
            corner,
        };
        let mut o = net.adjacent_corners(c(j, Corner::SW));
        o.sort();
        let mut expected = vec![c(j, Corner::NW), c(j, Corner::SE)];
        expected.sort();
        assert_eq!(o, expected);
        let mut u = net.upstream_corners(c(j, Corner::SW));
        u.sort();
        let mut expected = vec![c(i, Corner::SE), c(k, Corner::NW)];
        expected.sort();
        assert_eq!(u, expected);
        for node in net.ped_nodes.iter().filter(|n| matches!(n, PedNode::Corner { .. })) {
            assert_eq!(net.adjacent_corners(*node).len(), 2);
        }
    }

    #[test]
    fn crosswalk_has_unique_non_reversing_successor() {
        let net = grid(2, 3);
        for (k, cw) in net.crosswalks.iter().enumerate() {
            let next = net.crosswalk(cw.downstream);
            assert_eq!(next.from, cw.to);
            assert_ne!(next.to, cw.from);
            let cont: Vec<_> = net
                .ped_continuations(PedLink::Crosswalk(CrosswalkId(k)))
                .into_iter()
                .filter(|l| matches!(l, PedLink::Crosswalk(_)))
                .collect();
            assert_eq!(cont, vec![PedLink::Crosswalk(cw.downstream)]);
        }
    }

    #[test]
    fn sidewalks_on_both_sides_of_every_link() {
        let net = grid(2, 2);
        // 4 internal streets + 8 perimeter stubs, two sides each.
        assert_eq!(net.segments.len(), (4 + 8) * 2);
        assert_eq!(net.sidewalks.len(), net.segments.len() * 2);
        for (k, s) in net.sidewalks.iter().enumerate() {
            let r = net.sidewalk(s.reverse);
            assert_eq!(r.reverse, SidewalkId(k));
            assert_eq!((r.from, r.to), (s.to, s.from));
        }
    }

    #[test]
    fn construction_is_deterministic() {
        let a = grid(3, 2);
        let b = grid(3, 2);
        assert_eq!(a.links.len(), b.links.len());
        for (x, y) in a.sidewalks.iter().zip(&b.sidewalks) {
            assert_eq!((x.from, x.to), (y.from, y.to));
        }
        for (x, y) in a.movements.iter().zip(&b.movements) {
            assert_eq!((x.in_link, x.out_link), (y.in_link, y.out_link));
        }
    }

    #[test]
    fn uniform_turning_is_stochastic() {
        let net = grid(2, 2);
        let t = VehTurning::uniform_shares(&net, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0);
        t.validate(&net).unwrap();
        let bad = VehTurning::uniform_shares(&net, 0.5, 0.5, 0.5);
        assert!(bad.validate(&net).is_err());
    }
}
