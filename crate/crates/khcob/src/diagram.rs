//! Planar crossing diagrams of oriented links as PD codes, resolution
//! states and circle tracing, Reidemeister rewrites, and a canonical
//! form for diagram isomorphism.
//!
//! Conventions fixed here once and for all:
//! * a crossing is a 4-tuple of edge labels read counterclockwise from
//!   the incoming under-strand, so slot 0 is the incoming under edge and
//!   slot 2 the outgoing under edge;
//! * a crossing is positive when the over-strand enters at slot 3;
//! * the 0-smoothing joins slots (0,1) and (2,3), the 1-smoothing joins
//!   (0,3) and (1,2); with these choices the oriented resolution of a
//!   positive crossing is its 0-smoothing.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, VecDeque};

pub type Edge = u64;

#[derive(Debug, thiserror::Error)]
pub enum DiagramError {
    #[error("edge {0} appears {1} times, expected exactly 2")]
    DuplicateEdge(Edge, usize),
    #[error("edge {0} is dangling (appears only once)")]
    DanglingEdge(Edge),
    #[error("inconsistent orientation at edge {0}")]
    InconsistentOrientation(Edge),
    #[error("orientation underdetermined: supply a direction for edge {0}")]
    UnderdeterminedOrientation(Edge),
    #[error("resolution state has {got} bits, diagram has {want} crossings")]
    StateLength { got: usize, want: usize },
    #[error("reidemeister pattern mismatch: {0}")]
    PatternMismatch(String),
    #[error("no such crossing index {0}")]
    NoSuchCrossing(usize),
    #[error("no such edge {0}")]
    NoSuchEdge(Edge),
    #[error("no such free loop {0}")]
    NoSuchLoop(u64),
    #[error("json: {0}")]
    Json(String),
}

/// A strand position in a diagram: either an actual edge or one of the
/// crossingless free loops.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum ArcRef {
    Edge(Edge),
    Loop(u64),
}

impl Serialize for ArcRef {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            ArcRef::Edge(e) => s.serialize_u64(*e),
            ArcRef::Loop(k) => s.serialize_str(&format!("loop:{k}")),
        }
    }
}

impl<'de> Deserialize<'de> for ArcRef {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let v = serde_json::Value::deserialize(d)?;
        match &v {
            serde_json::Value::Number(n) => n
                .as_u64()
                .map(ArcRef::Edge)
                .ok_or_else(|| D::Error::custom("edge labels must be nonnegative integers")),
            serde_json::Value::String(s) => s
                .strip_prefix("loop:")
                .and_then(|k| k.parse().ok())
                .map(ArcRef::Loop)
                .ok_or_else(|| D::Error::custom(format!("bad arc reference {s:?}"))),
            _ => Err(D::Error::custom("arc reference must be an edge number or \"loop:k\"")),
        }
    }
}

/// An oriented link diagram. `heads` records, per edge, the (crossing,
/// slot) occurrence at which the edge points into the crossing.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PDCode {
    pub crossings: Vec<[Edge; 4]>,
    pub free_loops: u64,
    heads: BTreeMap<Edge, (usize, u8)>,
}

/// One choice of smoothing per crossing.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct ResolutionState {
    pub bits: Vec<u8>,
}

impl ResolutionState {
    pub fn from_index(index: usize, n: usize) -> Self {
        ResolutionState { bits: (0..n).map(|k| ((index >> k) & 1) as u8).collect() }
    }

    pub fn weight(&self) -> usize {
        self.bits.iter().filter(|&&b| b == 1).count()
    }

    pub fn flip(&self, k: usize) -> Self {
        let mut s = self.clone();
        s.bits[k] ^= 1;
        s
    }
}

/// One circle of a complete smoothing: either a cyclic run of diagram
/// edges or a crossingless free loop.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Circle {
    pub edges: BTreeSet<Edge>,
    pub loop_index: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Resolution {
    pub circles: Vec<Circle>,
}

impl Resolution {
    pub fn circle_of(&self, a: ArcRef) -> Option<usize> {
        match a {
            ArcRef::Edge(e) => self.circles.iter().position(|c| c.edges.contains(&e)),
            ArcRef::Loop(k) => self.circles.iter().position(|c| c.loop_index == Some(k)),
        }
    }

    /// Circle indices touched by the two smoothing arcs of a crossing.
    pub fn circles_at_crossing(&self, pd: &PDCode, ci: usize) -> Vec<usize> {
        let mut out: Vec<usize> = pd.crossings[ci]
            .iter()
            .filter_map(|&e| self.circle_of(ArcRef::Edge(e)))
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

impl PDCode {
    /// Builds and validates a diagram. `known_heads` may pin directions
    /// for edges the under/over structure leaves free; everything else
    /// is derived.
    pub fn new(
        crossings: Vec<[Edge; 4]>,
        free_loops: u64,
        known_heads: &BTreeMap<Edge, (usize, u8)>,
    ) -> Result<Self, DiagramError> {
        let occurrences = occurrence_map(&crossings)?;
        let mut heads: BTreeMap<Edge, (usize, u8)> = BTreeMap::new();
        let set_head = |heads: &mut BTreeMap<Edge, (usize, u8)>, e: Edge, at: (usize, u8)| {
            match heads.get(&e) {
                Some(&h) if h != at => Err(DiagramError::InconsistentOrientation(e)),
                _ => {
                    heads.insert(e, at);
                    Ok(())
                }
            }
        };
        for (&e, occ) in &occurrences {
            if let Some(&at) = known_heads.get(&e) {
                if !occ.contains(&at) {
                    return Err(DiagramError::InconsistentOrientation(e));
                }
                set_head(&mut heads, e, at)?;
            }
        }
        // under-strand slots force directions outright
        for (ci, cr) in crossings.iter().enumerate() {
            set_head(&mut heads, cr[0], (ci, 0))?;
            let tail = (ci, 2u8);
            let occ = &occurrences[&cr[2]];
            let other = occ.iter().copied().find(|&o| o != tail);
            match other {
                Some(o) => set_head(&mut heads, cr[2], o)?,
                None => return Err(DiagramError::InconsistentOrientation(cr[2])),
            }
        }
        // over-strand: exactly one of slots 1, 3 is incoming; propagate
        let mut changed = true;
        while changed {
            changed = false;
            for (ci, cr) in crossings.iter().enumerate() {
                let s1 = heads.get(&cr[1]).map(|&h| h == (ci, 1));
                let s3 = heads.get(&cr[3]).map(|&h| h == (ci, 3));
                match (s1, s3) {
                    (Some(a), Some(b)) => {
                        if a == b {
                            return Err(DiagramError::InconsistentOrientation(cr[1]));
                        }
                    }
                    (Some(a), None) => {
                        let e = cr[3];
                        let at = if a {
                            // slot 3 must be the tail: head is the other occurrence
                            other_occurrence(&occurrences, e, (ci, 3))?
                        } else {
                            (ci, 3)
                        };
                        set_head(&mut heads, e, at)?;
                        changed = true;
                    }
                    (None, Some(b)) => {
                        let e = cr[1];
                        let at = if b { other_occurrence(&occurrences, e, (ci, 1))? } else { (ci, 1) };
                        set_head(&mut heads, e, at)?;
                        changed = true;
                    }
                    (None, None) => {}
                }
            }
        }
        for &e in occurrences.keys() {
            if !heads.contains_key(&e) {
                return Err(DiagramError::UnderdeterminedOrientation(e));
            }
        }
        let pd = PDCode { crossings, free_loops, heads };
        pd.validate()?;
        Ok(pd)
    }

    /// Re-checks all structural invariants.
    pub fn validate(&self) -> Result<(), DiagramError> {
        let occurrences = occurrence_map(&self.crossings)?;
        for (&e, occ) in &occurrences {
            let head = *self.heads.get(&e).ok_or(DiagramError::UnderdeterminedOrientation(e))?;
            if !occ.contains(&head) {
                return Err(DiagramError::InconsistentOrientation(e));
            }
        }
        if self.heads.len() != occurrences.len() {
            // heads for edges that do not exist
            for e in self.heads.keys() {
                if !occurrences.contains_key(e) {
                    return Err(DiagramError::NoSuchEdge(*e));
                }
            }
        }
        for (ci, cr) in self.crossings.iter().enumerate() {
            if self.heads[&cr[0]] != (ci, 0) {
                return Err(DiagramError::InconsistentOrientation(cr[0]));
            }
            if self.heads[&cr[2]] == (ci, 2) {
                return Err(DiagramError::InconsistentOrientation(cr[2]));
            }
            let in1 = self.heads[&cr[1]] == (ci, 1);
            let in3 = self.heads[&cr[3]] == (ci, 3);
            if in1 == in3 {
                return Err(DiagramError::InconsistentOrientation(cr[1]));
            }
        }
        Ok(())
    }

    pub fn head(&self, e: Edge) -> (usize, u8) {
        self.heads[&e]
    }

    pub fn heads(&self) -> &BTreeMap<Edge, (usize, u8)> {
        &self.heads
    }

    pub fn edges(&self) -> BTreeSet<Edge> {
        self.crossings.iter().flatten().copied().collect()
    }

    pub fn fresh_label(&self) -> Edge {
        self.edges().iter().max().map_or(1, |m| m + 1)
    }

    /// Whether the rotation system given by the counterclockwise slot
    /// order embeds in the sphere: faces are traced from the slot
    /// pairing and each connected component must satisfy V - E + F = 2.
    pub fn is_planar(&self) -> bool {
        let nc = self.crossings.len();
        if nc == 0 {
            return true;
        }
        // pair up the two slot occurrences of each edge
        let mut seen: BTreeMap<Edge, (usize, usize)> = BTreeMap::new();
        let mut twin = vec![usize::MAX; 4 * nc];
        for (c, tuple) in self.crossings.iter().enumerate() {
            for (s, &e) in tuple.iter().enumerate() {
                let d = 4 * c + s;
                match seen.remove(&e) {
                    Some((_, d0)) => {
                        twin[d] = d0;
                        twin[d0] = d;
                    }
                    None => {
                        seen.insert(e, (c, d));
                    }
                }
            }
        }
        if !seen.is_empty() {
            return false;
        }
        // connected components of the crossing graph
        let mut comp: Vec<usize> = (0..nc).collect();
        fn find(comp: &mut Vec<usize>, x: usize) -> usize {
            if comp[x] != x {
                comp[x] = find(comp, comp[x]);
            }
            comp[x]
        }
        for d in 0..4 * nc {
            let (a, b) = (find(&mut comp, d / 4), find(&mut comp, twin[d] / 4));
            comp[a] = b;
        }
        let components: BTreeSet<usize> = (0..nc).map(|c| find(&mut comp, c)).collect();
        // trace faces: follow an edge to its twin, then turn to the next slot
        let mut visited = vec![false; 4 * nc];
        let mut faces = 0usize;
        for start in 0..4 * nc {
            if visited[start] {
                continue;
            }
            faces += 1;
            let mut d = start;
            while !visited[d] {
                visited[d] = true;
                let t = twin[d];
                d = (t / 4) * 4 + (t % 4 + 1) % 4;
            }
        }
        // V - E + F with V = nc, E = 2 nc
        nc + faces == 2 * nc + 2 * components.len()
    }

    /// +1 when the over-strand enters at slot 3, -1 at slot 1.
    pub fn sign(&self, ci: usize) -> i8 {
        if self.heads[&self.crossings[ci][3]] == (ci, 3) {
            1
        } else {
            -1
        }
    }

    pub fn n_plus(&self) -> usize {
        (0..self.crossings.len()).filter(|&c| self.sign(c) > 0).count()
    }

    pub fn n_minus(&self) -> usize {
        self.crossings.len() - self.n_plus()
    }

    pub fn writhe(&self) -> i64 {
        self.n_plus() as i64 - self.n_minus() as i64
    }

    /// Smooths every crossing per the state and traces circles. Circles
    /// of actual edges come first, ordered by smallest edge, then free
    /// loops in index order.
    pub fn resolve(&self, s: &ResolutionState) -> Result<Resolution, DiagramError> {
        if s.bits.len() != self.crossings.len() {
            return Err(DiagramError::StateLength { got: s.bits.len(), want: self.crossings.len() });
        }
        // endpoints are (crossing, slot); smoothing arcs pair slots, and
        // each edge pairs its two occurrences
        let mut next: BTreeMap<(usize, u8), (usize, u8)> = BTreeMap::new();
        let occurrences = occurrence_map(&self.crossings)?;
        for (ci, &bit) in s.bits.iter().enumerate() {
            let pairs: [(u8, u8); 2] = if bit == 0 { [(0, 1), (2, 3)] } else { [(0, 3), (1, 2)] };
            for (a, b) in pairs {
                next.insert((ci, a), (ci, b));
                next.insert((ci, b), (ci, a));
            }
        }
        let mut seen: BTreeSet<(usize, u8)> = BTreeSet::new();
        let mut circles = Vec::new();
        for (&e, occ) in &occurrences {
            let start = occ[0];
            if seen.contains(&start) {
                continue;
            }
            let mut edges = BTreeSet::new();
            edges.insert(e);
            let mut at = start;
            loop {
                seen.insert(at);
                let edge_here = self.crossings[at.0][at.1 as usize];
                edges.insert(edge_here);
                let across = other_occurrence(&occurrences, edge_here, at)?;
                seen.insert(across);
                let onward = next[&across];
                if onward == start {
                    break;
                }
                at = onward;
            }
            circles.push(Circle { edges, loop_index: None });
        }
        circles.sort_by_key(|c| c.edges.iter().next().copied());
        for k in 0..self.free_loops {
            circles.push(Circle { edges: BTreeSet::new(), loop_index: Some(k) });
        }
        Ok(Resolution { circles })
    }

    pub fn disjoint_union(&self, other: &PDCode) -> PDCode {
        let shift = self.fresh_label();
        let ci_shift = self.crossings.len();
        let mut crossings = self.crossings.clone();
        crossings.extend(other.crossings.iter().map(|cr| cr.map(|e| e + shift)));
        let mut heads = self.heads.clone();
        for (&e, &(ci, s)) in &other.heads {
            heads.insert(e + shift, (ci + ci_shift, s));
        }
        PDCode { crossings, free_loops: self.free_loops + other.free_loops, heads }
    }

    /// Canonical relabeling: per connected crossing component, the
    /// lexicographically least breadth-first encoding over all root
    /// crossings; components sorted by encoding; free loops appended.
    pub fn canonical_encoding(&self) -> CanonicalForm {
        let n = self.crossings.len();
        // connected components of the crossing adjacency graph
        let occurrences = occurrence_map(&self.crossings).expect("validated diagram");
        let mut comp = vec![usize::MAX; n];
        let mut ncomp = 0;
        for start in 0..n {
            if comp[start] != usize::MAX {
                continue;
            }
            let mut q = VecDeque::from([start]);
            comp[start] = ncomp;
            while let Some(c) = q.pop_front() {
                for &e in &self.crossings[c] {
                    for &(c2, _) in &occurrences[&e] {
                        if comp[c2] == usize::MAX {
                            comp[c2] = ncomp;
                            q.push_back(c2);
                        }
                    }
                }
            }
            ncomp += 1;
        }
        let mut encodings: Vec<Vec<(Vec<u64>, [bool; 4])>> = Vec::new();
        for k in 0..ncomp {
            let members: Vec<usize> = (0..n).filter(|&c| comp[c] == k).collect();
            let best = members
                .iter()
                .map(|&root| self.bfs_encoding(root, &occurrences))
                .min()
                .unwrap();
            encodings.push(best);
        }
        encodings.sort();
        CanonicalForm { components: encodings, free_loops: self.free_loops }
    }

    fn bfs_encoding(
        &self,
        root: usize,
        occurrences: &BTreeMap<Edge, Vec<(usize, u8)>>,
    ) -> Vec<(Vec<u64>, [bool; 4])> {
        let mut edge_label: BTreeMap<Edge, u64> = BTreeMap::new();
        let mut next_label = 0u64;
        let mut visited: BTreeSet<usize> = BTreeSet::new();
        let mut order = Vec::new();
        let mut q = VecDeque::from([root]);
        visited.insert(root);
        while let Some(c) = q.pop_front() {
            order.push(c);
            for &e in &self.crossings[c] {
                edge_label.entry(e).or_insert_with(|| {
                    next_label += 1;
                    next_label - 1
                });
            }
            for &e in &self.crossings[c] {
                for &(c2, _) in &occurrences[&e] {
                    if visited.insert(c2) {
                        q.push_back(c2);
                    }
                }
            }
        }
        order
            .iter()
            .map(|&c| {
                let tuple: Vec<u64> = self.crossings[c].iter().map(|e| edge_label[e]).collect();
                let mut headbits = [false; 4];
                for s in 0..4u8 {
                    headbits[s as usize] = self.heads[&self.crossings[c][s as usize]] == (c, s);
                }
                (tuple, headbits)
            })
            .collect()
    }

    pub fn is_isomorphic(&self, other: &PDCode) -> bool {
        self.canonical_encoding() == other.canonical_encoding()
    }

    pub fn apply_reidemeister(&self, ev: &ReidemeisterEvent) -> Result<PDCode, DiagramError> {
        match ev {
            ReidemeisterEvent::R1Insert { strand, sign } => self.r1_insert(*strand, *sign),
            ReidemeisterEvent::R1Remove { crossing } => self.r1_remove(*crossing),
            ReidemeisterEvent::R2Insert { over, under, first_sign, parallel } => {
                self.r2_insert(*over, *under, *first_sign, *parallel)
            }
            ReidemeisterEvent::R2Remove { crossings } => self.r2_remove(crossings[0], crossings[1]),
            ReidemeisterEvent::R3 { crossings } => self.r3(*crossings),
        }
    }

    fn check_edge(&self, e: Edge) -> Result<(), DiagramError> {
        if self.edges().contains(&e) {
            Ok(())
        } else {
            Err(DiagramError::NoSuchEdge(e))
        }
    }

    fn check_loop(&self, k: u64) -> Result<(), DiagramError> {
        if k < self.free_loops {
            Ok(())
        } else {
            Err(DiagramError::NoSuchLoop(k))
        }
    }

    /// Kink insertion. The strand passes the new crossing under first;
    /// new labels continue from the current maximum.
    fn r1_insert(&self, strand: ArcRef, sign: i8) -> Result<PDCode, DiagramError> {
        let fresh = self.fresh_label();
        let mut crossings = self.crossings.clone();
        let mut heads = self.heads.clone();
        let mut free_loops = self.free_loops;
        let ci = crossings.len();
        let (e_in, e_out, l) = match strand {
            ArcRef::Edge(e) => {
                self.check_edge(e)?;
                let (g, l) = (fresh, fresh + 1);
                // downstream occurrence of e now carries g
                let h = self.heads[&e];
                crossings[h.0][h.1 as usize] = g;
                heads.insert(g, h);
                heads.insert(e, (ci, 0));
                (e, g, l)
            }
            ArcRef::Loop(k) => {
                self.check_loop(k)?;
                free_loops -= 1;
                let (e, l) = (fresh, fresh + 1);
                heads.insert(e, (ci, 0));
                (e, e, l)
            }
        };
        // under: in e_in (slot 0), out l (slot 2); over: in l, out e_out
        let tuple = if sign > 0 { [e_in, e_out, l, l] } else { [e_in, l, l, e_out] };
        let over_in_slot = if sign > 0 { 3 } else { 1 };
        heads.insert(l, (ci, over_in_slot));
        crossings.push(tuple);
        let pd = PDCode { crossings, free_loops, heads };
        pd.validate()?;
        Ok(pd)
    }

    fn r1_remove(&self, ci: usize) -> Result<PDCode, DiagramError> {
        if ci >= self.crossings.len() {
            return Err(DiagramError::NoSuchCrossing(ci));
        }
        let cr = self.crossings[ci];
        // the kink loop is the edge occupying two slots of this crossing
        let l = (0..4)
            .find_map(|a| ((a + 1)..4).find(|&b| cr[a] == cr[b]).map(|_| cr[a]))
            .ok_or_else(|| DiagramError::PatternMismatch("crossing is not a kink".into()))?;
        let through: Vec<Edge> = cr.iter().copied().filter(|&e| e != l).collect();
        if through.len() != 2 {
            return Err(DiagramError::PatternMismatch("crossing is not a kink".into()));
        }
        let (x, y) = (through[0], through[1]);
        Ok(self.splice_remove(&[ci], &[(x, l), (l, y)])?.0)
    }

    /// Kink removal that also reports where every edge went.
    pub fn r1_remove_with_image(&self, ci: usize) -> Result<(PDCode, EdgeImage), DiagramError> {
        if ci >= self.crossings.len() {
            return Err(DiagramError::NoSuchCrossing(ci));
        }
        let cr = self.crossings[ci];
        let l = (0..4)
            .find_map(|a| ((a + 1)..4).find(|&b| cr[a] == cr[b]).map(|_| cr[a]))
            .ok_or_else(|| DiagramError::PatternMismatch("crossing is not a kink".into()))?;
        let through: Vec<Edge> = cr.iter().copied().filter(|&e| e != l).collect();
        if through.len() != 2 {
            return Err(DiagramError::PatternMismatch("crossing is not a kink".into()));
        }
        self.splice_remove(&[ci], &[(through[0], l), (l, through[1])])
    }

    fn r2_insert(&self, over: ArcRef, under: ArcRef, first_sign: i8, parallel: bool) -> Result<PDCode, DiagramError> {
        if over == under {
            return Err(DiagramError::PatternMismatch("R2 of a strand with itself is not supported".into()));
        }
        let fresh = self.fresh_label();
        let mut next_fresh = fresh;
        let mut take = || {
            next_fresh += 1;
            next_fresh - 1
        };
        let mut crossings = self.crossings.clone();
        let mut heads = self.heads.clone();
        let mut free_loops = self.free_loops;
        let c1 = crossings.len();
        let c2 = c1 + 1;
        // under strand passes c1 then c2
        let (u_in, u_mid, u_out) = match under {
            ArcRef::Edge(e) => {
                self.check_edge(e)?;
                let m = take();
                let o = take();
                let h = self.heads[&e];
                crossings[h.0][h.1 as usize] = o;
                heads.insert(o, h);
                (e, m, o)
            }
            ArcRef::Loop(k) => {
                self.check_loop(k)?;
                free_loops -= 1;
                let m = take();
                let o = take();
                (o, m, o)
            }
        };
        let (o_first, o_mid, o_last) = match over {
            ArcRef::Edge(e) => {
                self.check_edge(e)?;
                let m = take();
                let o = take();
                let h = self.heads[&e];
                crossings[h.0][h.1 as usize] = o;
                heads.insert(o, h);
                (e, m, o)
            }
            ArcRef::Loop(k) => {
                self.check_loop(k)?;
                free_loops -= 1;
                let m = take();
                let o = take();
                (o, m, o)
            }
        };
        // over strand meets (c1, c2) in that order when parallel, else
        // (c2, c1)
        let (ov_in_c1, ov_out_c1, ov_in_c2, ov_out_c2) = if parallel {
            (o_first, o_mid, o_mid, o_last)
        } else {
            (o_mid, o_last, o_first, o_mid)
        };
        let t1 = oriented_crossing(u_in, u_mid, ov_in_c1, ov_out_c1, first_sign);
        let t2 = oriented_crossing(u_mid, u_out, ov_in_c2, ov_out_c2, -first_sign);
        crossings.push(t1.0);
        crossings.push(t2.0);
        heads.insert(u_in, (c1, 0));
        heads.insert(u_mid, (c2, 0));
        heads.insert(ov_in_c1, (c1, t1.1));
        heads.insert(ov_in_c2, (c2, t2.1));
        let pd = PDCode { crossings, free_loops, heads };
        pd.validate()?;
        Ok(pd)
    }

    fn r2_remove(&self, ca: usize, cb: usize) -> Result<PDCode, DiagramError> {
        for &c in &[ca, cb] {
            if c >= self.crossings.len() {
                return Err(DiagramError::NoSuchCrossing(c));
            }
        }
        if ca == cb {
            return Err(DiagramError::PatternMismatch("R2 removal needs two distinct crossings".into()));
        }
        let (ta, tb) = (self.crossings[ca], self.crossings[cb]);
        // the bigon's inner edges: one runs under at both crossings, one
        // over at both
        let under_pair = |t: &[Edge; 4]| [t[0], t[2]];
        let over_pair = |t: &[Edge; 4]| [t[1], t[3]];
        let m_u = under_pair(&ta)
            .into_iter()
            .filter(|e| under_pair(&tb).contains(e))
            .min();
        let m_o = over_pair(&ta)
            .into_iter()
            .filter(|e| over_pair(&tb).contains(e))
            .min();
        let (Some(m_u), Some(m_o)) = (m_u, m_o) else {
            return Err(DiagramError::PatternMismatch(
                "crossings do not share an under-under and an over-over edge".into(),
            ));
        };
        if self.sign(ca) == self.sign(cb) {
            return Err(DiagramError::PatternMismatch("R2 bigon crossings must have opposite signs".into()));
        }
        // external under edges: slot-0/slot-2 companions of m_u
        let u_ext = |t: &[Edge; 4]| if t[0] == m_u { t[2] } else { t[0] };
        let o_ext = |t: &[Edge; 4]| if t[1] == m_o { t[3] } else { t[1] };
        let (ua, ub) = (u_ext(&ta), u_ext(&tb));
        let (oa, ob) = (o_ext(&ta), o_ext(&tb));
        Ok(self.splice_remove(&[ca, cb], &[(ua, m_u), (m_u, ub), (oa, m_o), (m_o, ob)])?.0)
    }

    /// Bigon removal that also reports where every edge went.
    pub fn r2_remove_with_image(&self, ca: usize, cb: usize) -> Result<(PDCode, EdgeImage), DiagramError> {
        self.r2_remove(ca, cb)?;
        let (ta, tb) = (self.crossings[ca], self.crossings[cb]);
        let m_u = [ta[0], ta[2]].into_iter().filter(|e| [tb[0], tb[2]].contains(e)).min().unwrap();
        let m_o = [ta[1], ta[3]].into_iter().filter(|e| [tb[1], tb[3]].contains(e)).min().unwrap();
        let u_ext = |t: &[Edge; 4]| if t[0] == m_u { t[2] } else { t[0] };
        let o_ext = |t: &[Edge; 4]| if t[1] == m_o { t[3] } else { t[1] };
        let (ua, ub) = (u_ext(&ta), u_ext(&tb));
        let (oa, ob) = (o_ext(&ta), o_ext(&tb));
        self.splice_remove(&[ca, cb], &[(ua, m_u), (m_u, ub), (oa, m_o), (m_o, ob)])
    }

    /// The same diagram with one more free loop (index `free_loops`).
    pub fn with_birth(&self) -> PDCode {
        PDCode { crossings: self.crossings.clone(), free_loops: self.free_loops + 1, heads: self.heads.clone() }
    }

    /// Removes the free loop `k`; higher loop indices shift down by one.
    pub fn with_death(&self, k: u64) -> Result<PDCode, DiagramError> {
        self.check_loop(k)?;
        Ok(PDCode { crossings: self.crossings.clone(), free_loops: self.free_loops - 1, heads: self.heads.clone() })
    }

    /// Attaches a band between two arcs, respecting orientations: the
    /// strand entering arc `a` leaves along the far end of arc `b` and
    /// vice versa. Crossings are untouched, so this never changes the
    /// set of resolution states. Returns the rewired diagram and where
    /// each old arc went (arcs absent from the map are unchanged).
    pub fn saddle(&self, a: ArcRef, b: ArcRef) -> Result<(PDCode, BTreeMap<ArcRef, ArcRef>), DiagramError> {
        let mut image: BTreeMap<ArcRef, ArcRef> = BTreeMap::new();
        match (a, b) {
            (ArcRef::Edge(x), ArcRef::Edge(y)) if x == y => {
                self.check_edge(x)?;
                // band from an arc to itself: a circle splits off
                let pd = PDCode {
                    crossings: self.crossings.clone(),
                    free_loops: self.free_loops + 1,
                    heads: self.heads.clone(),
                };
                Ok((pd, image))
            }
            (ArcRef::Edge(x), ArcRef::Edge(y)) => {
                self.check_edge(x)?;
                self.check_edge(y)?;
                // swap the two downstream ends
                let hx = self.heads[&x];
                let hy = self.heads[&y];
                let mut crossings = self.crossings.clone();
                let mut heads = self.heads.clone();
                crossings[hx.0][hx.1 as usize] = y;
                crossings[hy.0][hy.1 as usize] = x;
                heads.insert(x, hy);
                heads.insert(y, hx);
                let pd = PDCode { crossings, free_loops: self.free_loops, heads };
                pd.validate()?;
                Ok((pd, image))
            }
            (ArcRef::Loop(k), ArcRef::Loop(m)) if k == m => {
                self.check_loop(k)?;
                let pd = PDCode {
                    crossings: self.crossings.clone(),
                    free_loops: self.free_loops + 1,
                    heads: self.heads.clone(),
                };
                Ok((pd, image))
            }
            (ArcRef::Loop(k), ArcRef::Loop(m)) => {
                self.check_loop(k)?;
                self.check_loop(m)?;
                let (lo, hi) = (k.min(m), k.max(m));
                image.insert(ArcRef::Loop(hi), ArcRef::Loop(lo));
                for j in (hi + 1)..self.free_loops {
                    image.insert(ArcRef::Loop(j), ArcRef::Loop(j - 1));
                }
                let pd = PDCode {
                    crossings: self.crossings.clone(),
                    free_loops: self.free_loops - 1,
                    heads: self.heads.clone(),
                };
                Ok((pd, image))
            }
            (ArcRef::Edge(x), ArcRef::Loop(k)) | (ArcRef::Loop(k), ArcRef::Edge(x)) => {
                self.check_edge(x)?;
                self.check_loop(k)?;
                // the loop is absorbed into the strand through x
                image.insert(ArcRef::Loop(k), ArcRef::Edge(x));
                for j in (k + 1)..self.free_loops {
                    image.insert(ArcRef::Loop(j), ArcRef::Loop(j - 1));
                }
                let pd = PDCode {
                    crossings: self.crossings.clone(),
                    free_loops: self.free_loops - 1,
                    heads: self.heads.clone(),
                };
                Ok((pd, image))
            }
        }
    }

    /// Removes the listed crossings and splices the named edge chains
    /// back together. Chains that close up become free loops.
    fn splice_remove(&self, removed: &[usize], joins: &[(Edge, Edge)]) -> Result<(PDCode, EdgeImage), DiagramError> {
        let removed_set: BTreeSet<usize> = removed.iter().copied().collect();
        // union-find over edges participating in joins
        let mut parent: BTreeMap<Edge, Edge> = BTreeMap::new();
        fn find(parent: &mut BTreeMap<Edge, Edge>, mut e: Edge) -> Edge {
            while let Some(&p) = parent.get(&e) {
                if p == e {
                    break;
                }
                e = p;
            }
            e
        }
        let mut new_loops: Vec<Edge> = Vec::new();
        for &(a, b) in joins {
            parent.entry(a).or_insert(a);
            parent.entry(b).or_insert(b);
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra == rb {
                new_loops.push(ra);
            } else {
                let (lo, hi) = (ra.min(rb), ra.max(rb));
                parent.insert(hi, lo);
            }
        }
        let closed: BTreeSet<Edge> = new_loops.iter().map(|&e| find(&mut parent, e)).collect();
        let mut loop_of_rep: BTreeMap<Edge, u64> = BTreeMap::new();
        for (k, &rep) in closed.iter().enumerate() {
            loop_of_rep.insert(rep, self.free_loops + k as u64);
        }
        let mut image: EdgeImage = BTreeMap::new();
        for &e in self.edges().iter() {
            let rep = find(&mut parent, e);
            match loop_of_rep.get(&rep) {
                Some(&k) => image.insert(e, ArcRef::Loop(k)),
                None => image.insert(e, ArcRef::Edge(rep)),
            };
        }
        let free_loops = self.free_loops + closed.len() as u64;
        let mut crossings = Vec::new();
        let mut index_map: BTreeMap<usize, usize> = BTreeMap::new();
        for (ci, cr) in self.crossings.iter().enumerate() {
            if removed_set.contains(&ci) {
                continue;
            }
            index_map.insert(ci, crossings.len());
            crossings.push(cr.map(|e| find(&mut parent, e)));
        }
        // orientation: an occurrence keeps its head flag from the edge
        // it used to carry
        let mut heads = BTreeMap::new();
        for (ci, cr) in self.crossings.iter().enumerate() {
            if removed_set.contains(&ci) {
                continue;
            }
            let nci = index_map[&ci];
            for s in 0..4u8 {
                let e = cr[s as usize];
                if self.heads[&e] == (ci, s) {
                    let rep = find(&mut parent, e);
                    if heads.insert(rep, (nci, s)).is_some() && rep != e {
                        return Err(DiagramError::InconsistentOrientation(rep));
                    }
                }
            }
        }
        let pd = PDCode { crossings, free_loops, heads };
        pd.validate()?;
        Ok((pd, image))
    }

    /// Triangle move. Each of the three crossings keeps its strand pair,
    /// over/under assignment and sign; along every strand the order of
    /// its two crossings is swapped and the three inner edges are
    /// relabeled freshly.
    fn r3(&self, cs: [usize; 3]) -> Result<PDCode, DiagramError> {
        for &c in &cs {
            if c >= self.crossings.len() {
                return Err(DiagramError::NoSuchCrossing(c));
            }
        }
        if cs[0] == cs[1] || cs[1] == cs[2] || cs[0] == cs[2] {
            return Err(DiagramError::PatternMismatch("R3 needs three distinct crossings".into()));
        }
        // the three triangle edges: each pair of crossings shares one
        let mut tri: Vec<(usize, usize, Edge)> = Vec::new();
        for a in 0..3 {
            for b in (a + 1)..3 {
                let (ta, tb) = (self.crossings[cs[a]], self.crossings[cs[b]]);
                let shared: Vec<Edge> = {
                    let mut v: Vec<Edge> = ta.iter().copied().filter(|e| tb.contains(e)).collect();
                    v.sort_unstable();
                    v.dedup();
                    v
                };
                if shared.len() != 1 {
                    return Err(DiagramError::PatternMismatch(format!(
                        "crossings {} and {} share {} edges, a triangle needs exactly 1",
                        cs[a],
                        cs[b],
                        shared.len()
                    )));
                }
                tri.push((a, b, shared[0]));
            }
        }
        // strand roles: per crossing, the under strand occupies slots
        // 0/2 and the over strand 1/3; a triangle edge is "over at" a
        // crossing when it sits in slot 1 or 3 there
        let slot_of = |ci: usize, e: Edge| -> Vec<u8> {
            (0..4u8).filter(|&s| self.crossings[ci][s as usize] == e).collect()
        };
        // each crossing has exactly two triangle edges through it
        for &c in &cs {
            let count = tri.iter().filter(|&&(a, b, _)| cs[a] == c || cs[b] == c).count();
            debug_assert_eq!(count, 2);
            let _ = count;
        }
        // Rebuild each crossing from oriented strand data with its two
        // crossings swapped along every strand.
        let mut crossings = self.crossings.clone();
        let mut heads = self.heads.clone();
        let mut fresh = self.fresh_label();
        // fresh labels for the new inner edges, one per crossing pair
        let mut new_inner: BTreeMap<(usize, usize), Edge> = BTreeMap::new();
        for &(a, b, _) in &tri {
            new_inner.insert((a, b), fresh);
            fresh += 1;
        }
        // Strands: for each crossing pair (a,b) with triangle edge e,
        // the strand through e visits the third crossing not at all;
        // each strand is named by the pair of crossings it visits.
        // For strand (a, b): before, it runs ext_in -> c_first -> e ->
        // c_second -> ext_out where {c_first, c_second} = {a, b} in the
        // order given by e's orientation (tail crossing first).
        #[derive(Clone, Copy)]
        struct Pass {
            crossing: usize,
            under: bool,
            enter: Edge,
            exit: Edge,
        }
        let mut rebuilt: BTreeMap<usize, Vec<Pass>> = BTreeMap::new();
        for &(a, b, e) in &tri {
            let (ca, cb) = (cs[a], cs[b]);
            let head = self.heads[&e];
            let (c_first, c_second) = if head.0 == cb { (ca, cb) } else { (cb, ca) };
            if head.0 != ca && head.0 != cb {
                return Err(DiagramError::PatternMismatch("triangle edge leaves the triangle".into()));
            }
            let under_at = |c: usize| {
                let slots = slot_of(c, e);
                slots.iter().any(|&s| s == 0 || s == 2)
            };
            // external edges at each end of the strand
            let ext_at = |c: usize, entering: bool| -> Result<Edge, DiagramError> {
                // the strand's other edge at crossing c: the companion
                // of e on the same (under/over) strand
                let t = self.crossings[c];
                let comp = if under_at(c) {
                    if t[0] == e {
                        t[2]
                    } else {
                        t[0]
                    }
                } else if t[1] == e {
                    t[3]
                } else {
                    t[1]
                };
                let _ = entering;
                Ok(comp)
            };
            let ext_in = ext_at(c_first, true)?;
            let ext_out = ext_at(c_second, false)?;
            let inner = new_inner[&(a, b)];
            // after the move the strand visits c_second first
            let p1 = Pass { crossing: c_second, under: under_at(c_second), enter: ext_in, exit: inner };
            let p2 = Pass { crossing: c_first, under: under_at(c_first), enter: inner, exit: ext_out };
            rebuilt.entry(p1.crossing).or_default().push(p1);
            rebuilt.entry(p2.crossing).or_default().push(p2);
        }
        for (&c, passes) in &rebuilt {
            if passes.len() != 2 {
                return Err(DiagramError::PatternMismatch("triangle strands do not cover the crossings".into()));
            }
            let (u, o) = match (passes[0].under, passes[1].under) {
                (true, false) => (passes[0], passes[1]),
                (false, true) => (passes[1], passes[0]),
                _ => {
                    return Err(DiagramError::PatternMismatch(
                        "triangle crossing lacks an over/under strand pair".into(),
                    ))
                }
            };
            let sign = self.sign(c);
            let (tuple, over_in_slot) = oriented_crossing(u.enter, u.exit, o.enter, o.exit, sign);
            crossings[c] = tuple;
            heads.insert(u.enter, (c, 0));
            heads.insert(o.enter, (c, over_in_slot));
        }
        // drop stale head entries for the removed inner edges
        let old_inner: BTreeSet<Edge> = tri.iter().map(|&(_, _, e)| e).collect();
        for e in old_inner {
            heads.remove(&e);
        }
        let pd = PDCode { crossings, free_loops: self.free_loops, heads };
        pd.validate()?;
        Ok(pd)
    }
}

/// Where an edge of the original diagram ended up after a rewrite that
/// splices edges together: a surviving (possibly renamed) edge, or a
/// free loop when its whole circle closed up.
pub type EdgeImage = BTreeMap<Edge, ArcRef>;

impl PDCode {
    /// Replaces one crossing by one of its two smoothings. The result
    /// is reoriented where the smoothing conflicts with the original
    /// directions: each component keeps the direction of its smallest
    /// surviving original edge. Also returns where every old edge went.
    pub fn resolve_crossing(&self, ci: usize, bit: u8) -> Result<(PDCode, EdgeImage), DiagramError> {
        if ci >= self.crossings.len() {
            return Err(DiagramError::NoSuchCrossing(ci));
        }
        let t = self.crossings[ci];
        let joins: [(Edge, Edge); 2] = if bit == 0 { [(t[0], t[1]), (t[2], t[3])] } else { [(t[0], t[3]), (t[1], t[2])] };
        // union-find over edges, tracking closed-up chains
        let mut parent: BTreeMap<Edge, Edge> = BTreeMap::new();
        fn find(parent: &mut BTreeMap<Edge, Edge>, mut e: Edge) -> Edge {
            while let Some(&p) = parent.get(&e) {
                if p == e {
                    break;
                }
                e = p;
            }
            e
        }
        let mut new_loops: Vec<Edge> = Vec::new();
        for &(a, b) in &joins {
            parent.entry(a).or_insert(a);
            parent.entry(b).or_insert(b);
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra == rb {
                new_loops.push(ra);
            } else {
                let (lo, hi) = (ra.min(rb), ra.max(rb));
                parent.insert(hi, lo);
            }
        }
        let mut crossings: Vec<[Edge; 4]> = Vec::new();
        let mut index_map: BTreeMap<usize, usize> = BTreeMap::new();
        for (i, cr) in self.crossings.iter().enumerate() {
            if i == ci {
                continue;
            }
            index_map.insert(i, crossings.len());
            crossings.push(cr.map(|e| find(&mut parent, e)));
        }
        let mut image: EdgeImage = BTreeMap::new();
        let closed: BTreeSet<Edge> = new_loops.iter().map(|&e| find(&mut parent, e)).collect();
        let mut loop_of_rep: BTreeMap<Edge, u64> = BTreeMap::new();
        for (k, &rep) in closed.iter().enumerate() {
            loop_of_rep.insert(rep, self.free_loops + k as u64);
        }
        for &e in self.edges().iter() {
            let rep = find(&mut parent, e);
            match loop_of_rep.get(&rep) {
                Some(&k) => image.insert(e, ArcRef::Loop(k)),
                None => image.insert(e, ArcRef::Edge(rep)),
            };
        }
        let free_loops = self.free_loops + closed.len() as u64;

        // Reorient: walk each link component of the new diagram as a
        // closed alternating sequence of crossing passages and edge
        // traversals, 2-coloring occurrences as entering/leaving. Each
        // component then keeps the original direction witnessed at its
        // least occurrence.
        let occ = occurrence_map(&crossings)?;
        let rev_index: BTreeMap<usize, usize> = index_map.iter().map(|(&o, &n)| (n, o)).collect();
        // original entering status of a slot, read off the edge that
        // occupied it before the rewrite
        let orig_enters = |nci: usize, s: u8| -> bool {
            let oc = rev_index[&nci];
            let m = self.crossings[oc][s as usize];
            self.heads[&m] == (oc, s)
        };
        let through = |s: u8| -> u8 {
            match s {
                0 => 2,
                2 => 0,
                1 => 3,
                _ => 1,
            }
        };
        let mut enters: BTreeMap<(usize, u8), bool> = BTreeMap::new();
        for (nci, _) in crossings.iter().enumerate() {
            for s0 in 0..4u8 {
                if enters.contains_key(&(nci, s0)) {
                    continue;
                }
                // collect the walk with alternating provisional colors
                let mut walk: Vec<((usize, u8), bool)> = Vec::new();
                let mut at = (nci, s0);
                let mut color = true;
                loop {
                    walk.push((at, color));
                    let exit = (at.0, through(at.1));
                    walk.push((exit, !color));
                    let e = crossings[exit.0][exit.1 as usize];
                    let next = other_occurrence(&occ, e, exit)?;
                    if next == (nci, s0) {
                        break;
                    }
                    at = next;
                    color = true; // the strand enters at the far end of the edge
                }
                let &(least, c) = walk.iter().min_by_key(|&&(o, _)| o).unwrap();
                let flip = orig_enters(least.0, least.1) != c;
                for &(o, c) in &walk {
                    enters.insert(o, if flip { !c } else { c });
                }
            }
        }
        let mut heads: BTreeMap<Edge, (usize, u8)> = BTreeMap::new();
        let mut out: Vec<[Edge; 4]> = Vec::new();
        for (nci, cr) in crossings.iter().enumerate() {
            let rotated = !enters[&(nci, 0)];
            let tuple = if rotated { [cr[2], cr[3], cr[0], cr[1]] } else { *cr };
            for s in 0..4u8 {
                let old_slot = if rotated { through(s) } else { s };
                if enters[&(nci, old_slot)] {
                    heads.insert(tuple[s as usize], (nci, s));
                }
            }
            out.push(tuple);
        }
        let pd = PDCode { crossings: out, free_loops, heads };
        pd.validate()?;
        Ok((pd, image))
    }
}

/// The 4-tuple and over-incoming slot of a crossing with the given
/// oriented under and over edges and sign.
pub fn oriented_crossing(under_in: Edge, under_out: Edge, over_in: Edge, over_out: Edge, sign: i8) -> ([Edge; 4], u8) {
    if sign > 0 {
        ([under_in, over_out, under_out, over_in], 3)
    } else {
        ([under_in, over_in, under_out, over_out], 1)
    }
}

fn occurrence_map(crossings: &[[Edge; 4]]) -> Result<BTreeMap<Edge, Vec<(usize, u8)>>, DiagramError> {
    let mut occ: BTreeMap<Edge, Vec<(usize, u8)>> = BTreeMap::new();
    for (ci, cr) in crossings.iter().enumerate() {
        for s in 0..4u8 {
            occ.entry(cr[s as usize]).or_default().push((ci, s));
        }
    }
    for (&e, v) in &occ {
        match v.len() {
            2 => {}
            1 => return Err(DiagramError::DanglingEdge(e)),
            k => return Err(DiagramError::DuplicateEdge(e, k)),
        }
    }
    Ok(occ)
}

fn other_occurrence(
    occ: &BTreeMap<Edge, Vec<(usize, u8)>>,
    e: Edge,
    at: (usize, u8),
) -> Result<(usize, u8), DiagramError> {
    let v = &occ[&e];
    if v[0] == at {
        Ok(v[1])
    } else if v[1] == at {
        Ok(v[0])
    } else {
        Err(DiagramError::NoSuchEdge(e))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct CanonicalForm {
    pub components: Vec<Vec<(Vec<u64>, [bool; 4])>>,
    pub free_loops: u64,
}

/// A Reidemeister rewrite request, referring to crossings and edges of
/// the diagram it is applied to.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum ReidemeisterEvent {
    #[serde(rename = "R1_insert")]
    R1Insert { strand: ArcRef, sign: i8 },
    #[serde(rename = "R1_remove")]
    R1Remove { crossing: usize },
    #[serde(rename = "R2_insert")]
    R2Insert {
        over: ArcRef,
        under: ArcRef,
        first_sign: i8,
        #[serde(default = "default_true")]
        parallel: bool,
    },
    #[serde(rename = "R2_remove")]
    R2Remove { crossings: [usize; 2] },
    #[serde(rename = "R3")]
    R3 { crossings: [usize; 3] },
}

fn default_true() -> bool {
    true
}

// ---- JSON form ----

#[derive(Serialize, Deserialize)]
struct PDCodeJson {
    crossings: Vec<[Edge; 4]>,
    #[serde(default)]
    orientation: BTreeMap<String, (usize, u8)>,
    #[serde(default)]
    free_loops: u64,
}

impl PDCode {
    pub fn from_json(text: &str) -> Result<Self, DiagramError> {
        let raw: PDCodeJson = serde_json::from_str(text).map_err(|e| DiagramError::Json(e.to_string()))?;
        let mut known = BTreeMap::new();
        for (k, v) in raw.orientation {
            let e: Edge = k.parse().map_err(|_| DiagramError::Json(format!("bad edge label {k:?}")))?;
            known.insert(e, v);
        }
        PDCode::new(raw.crossings, raw.free_loops, &known)
    }

    pub fn to_json(&self) -> String {
        let raw = PDCodeJson {
            crossings: self.crossings.clone(),
            orientation: self.heads.iter().map(|(e, &h)| (e.to_string(), h)).collect(),
            free_loops: self.free_loops,
        };
        serde_json::to_string_pretty(&raw).expect("serializable")
    }
}

// ---- standard small diagrams, used all over the test corpus ----

pub fn unknot() -> PDCode {
    PDCode::new(vec![], 1, &BTreeMap::new()).unwrap()
}

pub fn empty_link() -> PDCode {
    PDCode::new(vec![], 0, &BTreeMap::new()).unwrap()
}

pub fn unlink(components: u64) -> PDCode {
    PDCode::new(vec![], components, &BTreeMap::new()).unwrap()
}

/// Positive Hopf link: two crossings, both positive. Component one runs
/// along edges 1, 2, component two along 3, 4.
pub fn hopf_positive() -> PDCode {
    let (t1, _) = oriented_crossing(1, 2, 3, 4, 1);
    let (t2, _) = oriented_crossing(4, 3, 2, 1, 1);
    PDCode::new(vec![t1, t2], 0, &BTreeMap::new()).unwrap()
}

/// Negative Hopf link: mirror of the positive one.
pub fn hopf_negative() -> PDCode {
    let (t1, _) = oriented_crossing(1, 2, 3, 4, -1);
    let (t2, _) = oriented_crossing(4, 3, 2, 1, -1);
    PDCode::new(vec![t1, t2], 0, &BTreeMap::new()).unwrap()
}

/// Right-handed trefoil: three positive crossings. Edges 1..6 run along
/// the knot; under-strand passages are 1->2, 3->4, 5->6.
pub fn trefoil_right() -> PDCode {
    let (t1, _) = oriented_crossing(1, 2, 4, 5, 1);
    let (t2, _) = oriented_crossing(3, 4, 6, 1, 1);
    let (t3, _) = oriented_crossing(5, 6, 2, 3, 1);
    PDCode::new(vec![t1, t2, t3], 0, &BTreeMap::new()).unwrap()
}

/// Left-handed trefoil: the mirror, three negative crossings.
pub fn trefoil_left() -> PDCode {
    let (t1, _) = oriented_crossing(1, 2, 4, 5, -1);
    let (t2, _) = oriented_crossing(3, 4, 6, 1, -1);
    let (t3, _) = oriented_crossing(5, 6, 2, 3, -1);
    PDCode::new(vec![t1, t2, t3], 0, &BTreeMap::new()).unwrap()
}

/// Figure-eight knot: two positive and two negative crossings.
pub fn figure_eight() -> PDCode {
    // edges 1..8 along the knot; classic alternating 4-crossing code
    let (t1, _) = oriented_crossing(1, 2, 6, 7, -1);
    let (t2, _) = oriented_crossing(5, 6, 2, 3, -1);
    let (t3, _) = oriented_crossing(3, 4, 8, 1, 1);
    let (t4, _) = oriented_crossing(7, 8, 4, 5, 1);
    PDCode::new(vec![t1, t2, t3, t4], 0, &BTreeMap::new()).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validate_corpus() {
        for pd in [unknot(), hopf_positive(), hopf_negative(), trefoil_right(), trefoil_left(), figure_eight()] {
            pd.validate().unwrap();
        }
        assert_eq!(trefoil_right().n_plus(), 3);
        assert_eq!(trefoil_left().n_minus(), 3);
        assert_eq!(figure_eight().writhe(), 0);
        assert_eq!(hopf_positive().writhe(), 2);
    }

    #[test]
    fn validate_rejects_triple_edge() {
        let r = PDCode::new(vec![[1, 1, 1, 2], [2, 3, 3, 4]], 0, &BTreeMap::new());
        assert!(matches!(r, Err(DiagramError::DuplicateEdge(1, 3))));
    }

    #[test]
    fn resolve_unknot() {
        let pd = unknot();
        let r = pd.resolve(&ResolutionState { bits: vec![] }).unwrap();
        assert_eq!(r.circles.len(), 1);
    }

    #[test]
    fn resolve_kink() {
        // positive kink on the unknot: oriented (0-)resolution has two
        // circles (hand trace: shortcut strand plus the split-off loop),
        // the 1-resolution has one
        let pd = unknot().apply_reidemeister(&ReidemeisterEvent::R1Insert { strand: ArcRef::Loop(0), sign: 1 }).unwrap();
        assert_eq!(pd.crossings.len(), 1);
        assert_eq!(pd.sign(0), 1);
        assert_eq!(pd.resolve(&ResolutionState { bits: vec![0] }).unwrap().circles.len(), 2);
        assert_eq!(pd.resolve(&ResolutionState { bits: vec![1] }).unwrap().circles.len(), 1);
    }

    #[test]
    fn resolve_hopf() {
        // hand trace: states 00 and 11 give 2 circles, 01 and 10 give 1
        let pd = hopf_positive();
        let counts: Vec<usize> = (0..4)
            .map(|k| pd.resolve(&ResolutionState::from_index(k, 2)).unwrap().circles.len())
            .collect();
        assert_eq!(counts, vec![2, 1, 1, 2]);
    }

    #[test]
    fn circle_count_changes_by_one() {
        for pd in [hopf_positive(), trefoil_right(), trefoil_left(), figure_eight()] {
            let n = pd.crossings.len();
            for k in 0..(1usize << n) {
                let s = ResolutionState::from_index(k, n);
                let c = pd.resolve(&s).unwrap().circles.len() as i64;
                for b in 0..n {
                    let c2 = pd.resolve(&s.flip(b)).unwrap().circles.len() as i64;
                    assert_eq!((c - c2).abs(), 1, "{pd:?} state {k} bit {b}");
                }
            }
        }
    }

    #[test]
    fn arc_accounting() {
        for pd in [hopf_positive(), trefoil_right(), figure_eight()] {
            let n = pd.crossings.len();
            for k in 0..(1usize << n) {
                let r = pd.resolve(&ResolutionState::from_index(k, n)).unwrap();
                let total: usize = r.circles.iter().map(|c| c.edges.len()).sum();
                assert_eq!(total, 2 * n);
            }
        }
    }

    #[test]
    fn r1_insert_then_remove() {
        let pd = trefoil_right();
        for &e in &[1u64, 4] {
            for sign in [1, -1] {
                let kinked = pd
                    .apply_reidemeister(&ReidemeisterEvent::R1Insert { strand: ArcRef::Edge(e), sign })
                    .unwrap();
                assert_eq!(kinked.crossings.len(), 4);
                let back = kinked
                    .apply_reidemeister(&ReidemeisterEvent::R1Remove { crossing: 3 })
                    .unwrap();
                assert!(back.is_isomorphic(&pd), "R1 roundtrip failed at edge {e} sign {sign}");
            }
        }
    }

    #[test]
    fn r1_on_free_loop() {
        let pd = unknot();
        let kinked = pd
            .apply_reidemeister(&ReidemeisterEvent::R1Insert { strand: ArcRef::Loop(0), sign: -1 })
            .unwrap();
        assert_eq!(kinked.free_loops, 0);
        assert_eq!(kinked.n_minus(), 1);
        let back = kinked.apply_reidemeister(&ReidemeisterEvent::R1Remove { crossing: 0 }).unwrap();
        assert!(back.is_isomorphic(&pd));
    }

    #[test]
    fn r2_insert_then_remove() {
        let pd = trefoil_right();
        for parallel in [true, false] {
            for sign in [1, -1] {
                let ev = ReidemeisterEvent::R2Insert {
                    over: ArcRef::Edge(2),
                    under: ArcRef::Edge(5),
                    first_sign: sign,
                    parallel,
                };
                let poked = pd.apply_reidemeister(&ev).unwrap();
                assert_eq!(poked.crossings.len(), 5);
                assert_eq!(poked.writhe(), pd.writhe());
                let back = poked
                    .apply_reidemeister(&ReidemeisterEvent::R2Remove { crossings: [3, 4] })
                    .unwrap();
                assert!(back.is_isomorphic(&pd), "R2 roundtrip failed parallel={parallel} sign={sign}");
            }
        }
    }

    #[test]
    fn r2_two_loops() {
        let pd = unlink(2);
        let poked = pd
            .apply_reidemeister(&ReidemeisterEvent::R2Insert {
                over: ArcRef::Loop(0),
                under: ArcRef::Loop(1),
                first_sign: 1,
                parallel: true,
            })
            .unwrap();
        assert_eq!(poked.crossings.len(), 2);
        assert_eq!(poked.free_loops, 0);
        let back = poked
            .apply_reidemeister(&ReidemeisterEvent::R2Remove { crossings: [0, 1] })
            .unwrap();
        assert!(back.is_isomorphic(&pd));
    }

    #[test]
    fn r3_roundtrip_on_braid_fixture() {
        // a 6-crossing closed-braid diagram with an R3-movable triangle
        let pd = r3_fixture();
        let moved = pd.apply_reidemeister(&ReidemeisterEvent::R3 { crossings: [0, 1, 2] }).unwrap();
        assert_eq!(moved.crossings.len(), pd.crossings.len());
        assert_eq!(moved.writhe(), pd.writhe());
        let back = moved.apply_reidemeister(&ReidemeisterEvent::R3 { crossings: [0, 1, 2] }).unwrap();
        assert!(back.is_isomorphic(&pd));
    }

    /// Closure of the braid word s1 s2 s1 s1 s2 s1 on 3 strands, all
    /// positive; crossings 0, 1, 2 form an R3 triangle.
    pub fn r3_fixture() -> PDCode {
        braid_closure(3, &[(1, 1), (2, 1), (1, 1), (1, 1), (2, 1), (1, 1)])
    }

    #[test]
    fn disjoint_union_counts() {
        let u = trefoil_right().disjoint_union(&unknot());
        assert_eq!(u.crossings.len(), 3);
        assert_eq!(u.free_loops, 1);
        let v = trefoil_right().disjoint_union(&hopf_positive());
        assert_eq!(v.crossings.len(), 5);
        v.validate().unwrap();
    }

    #[test]
    fn json_roundtrip() {
        for pd in [unknot(), hopf_positive(), trefoil_left(), figure_eight()] {
            let text = pd.to_json();
            let back = PDCode::from_json(&text).unwrap();
            assert_eq!(back, pd);
            assert_eq!(back.to_json(), text);
        }
    }

    #[test]
    fn json_orientation_derived() {
        // the standard published left-trefoil PD code
        let text = r#"{"crossings":[[1,4,2,5],[3,6,4,1],[5,2,6,3]],"free_loops":0}"#;
        let pd = PDCode::from_json(text).unwrap();
        assert!(pd.is_isomorphic(&trefoil_left()));
    }

    #[test]
    fn canonical_form_ignores_labels() {
        let a = trefoil_right();
        let (t1, _) = oriented_crossing(11, 12, 14, 15, 1);
        let (t2, _) = oriented_crossing(13, 14, 16, 11, 1);
        let (t3, _) = oriented_crossing(15, 16, 12, 13, 1);
        let b = PDCode::new(vec![t3, t1, t2], 0, &BTreeMap::new()).unwrap();
        assert!(a.is_isomorphic(&b));
        assert!(!a.is_isomorphic(&trefoil_left()));
    }
}

/// Closure of a braid word on `strands` strands. Generators are
/// (position, sign) with position in 1..strands; all strands oriented
/// the same way. Useful for building fixtures.
pub fn braid_closure(strands: usize, word: &[(usize, i8)]) -> PDCode {
    // current edge label at each braid position; start labels 1..strands
    let mut current: Vec<Edge> = (1..=strands as u64).collect();
    let start = current.clone();
    let mut fresh = strands as u64 + 1;
    let mut crossings = Vec::new();
    let mut heads: BTreeMap<Edge, (usize, u8)> = BTreeMap::new();
    let mut used: BTreeSet<usize> = BTreeSet::new();
    for (k, &(pos, sign)) in word.iter().enumerate() {
        let is_last = |p: usize| word[k + 1..].iter().all(|&(q, _)| q != p && q + 1 != p && q != p + 1);
        let _ = is_last;
        let (a, b) = (current[pos - 1], current[pos]);
        let (na, nb) = (fresh, fresh + 1);
        fresh += 2;
        let ci = crossings.len();
        // positive generator: strand at `pos` goes over; under strand
        // is the left one
        let (tuple, over_in) = if sign > 0 {
            oriented_crossing(a, nb, b, na, 1)
        } else {
            oriented_crossing(b, na, a, nb, -1)
        };
        crossings.push(tuple);
        if sign > 0 {
            heads.insert(a, (ci, 0));
            heads.insert(b, (ci, over_in));
        } else {
            heads.insert(b, (ci, 0));
            heads.insert(a, (ci, over_in));
        }
        current[pos - 1] = na;
        current[pos] = nb;
        used.insert(pos);
    }
    // close up: identify current[i] with start[i]
    let mut rename: BTreeMap<Edge, Edge> = BTreeMap::new();
    for i in 0..strands {
        rename.insert(current[i], start[i]);
    }
    let mut free_loops = 0;
    for i in 0..strands {
        if current[i] == start[i] {
            // untouched strand closes into a free loop
            free_loops += 1;
        }
    }
    let crossings: Vec<[Edge; 4]> = crossings
        .iter()
        .map(|cr| cr.map(|e| *rename.get(&e).unwrap_or(&e)))
        .collect();
    let mut known = BTreeMap::new();
    for (e, h) in heads {
        let e = *rename.get(&e).unwrap_or(&e);
        known.insert(e, h);
    }
    // drop orientation hints for edges that vanished with free loops
    let present: BTreeSet<Edge> = crossings.iter().flatten().copied().collect();
    known.retain(|e, _| present.contains(e));
    PDCode::new(crossings, free_loops, &known).expect("braid closures are valid diagrams")
}
