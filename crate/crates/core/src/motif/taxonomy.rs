use std::collections::HashMap;

use serde::Serialize;

pub const NUM_MOTIFS: usize = 36;
pub const NUM_ROLES: usize = 3;
/// Columns of the motif-role count matrix.
pub const MOTIF_COLUMNS: usize = NUM_MOTIFS * NUM_ROLES;

/// Role pair `(src role, dst role)` of one abstract motif edge.
pub type RolePair = (u8, u8);

/// A 3-edge temporal motif in canonical form: roles numbered by first
/// appearance, so the first edge is always `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct MotifSignature {
    pub edges: [RolePair; 3],
    pub node_count: u8,
}

impl MotifSignature {
    pub fn bytes(&self) -> [u8; 6] {
        let [a, b, c] = self.edges;
        [a.0, a.1, b.0, b.1, c.0, c.1]
    }
}

/// Concrete nodes of one motif instance, indexed by role.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoleMap {
    pub nodes: [u32; 3],
    pub len: u8,
}

impl RoleMap {
    pub fn iter(&self) -> impl Iterator<Item = (u32, usize)> + '_ {
        self.nodes[..self.len as usize].iter().copied().zip(0..)
    }

    pub fn role_of(&self, node: u32) -> Option<usize> {
        self.nodes[..self.len as usize].iter().position(|&n| n == node)
    }
}

const NO_CLASS: u8 = u8::MAX;

#[derive(Debug, Clone)]
pub struct MotifTaxonomy {
    classes: Vec<MotifSignature>,
    lookup: HashMap<[RolePair; 3], usize>,
    /// Indexed by `code(edge2) * 9 + code(edge3)` with `code(s, d) = 3s + d`.
    table: [u8; 81],
}

/// Relabels nodes by first appearance. `None` for self-loops or more than
/// three distinct nodes.
fn relabel<T: PartialEq + Copy>(edges: [(T, T); 3]) -> Option<([RolePair; 3], Vec<T>)> {
    let mut seen: Vec<T> = Vec::with_capacity(3);
    let mut sig = [(0u8, 0u8); 3];
    for (k, &(s, d)) in edges.iter().enumerate() {
        if s == d {
            return None;
        }
        let mut role = |x: T| -> Option<u8> {
            match seen.iter().position(|&y| y == x) {
                Some(p) => Some(p as u8),
                None if seen.len() < 3 => {
                    seen.push(x);
                    Some(seen.len() as u8 - 1)
                }
                None => None,
            }
        };
        sig[k] = (role(s)?, role(d)?);
    }
    Some((sig, seen))
}

/// All canonical 3-edge motifs over at most three nodes, sorted by their
/// signature bytes.
pub fn enumerate_taxonomy() -> MotifTaxonomy {
    let pairs: Vec<RolePair> = (0..3u8)
        .flat_map(|s| (0..3u8).map(move |d| (s, d)))
        .filter(|(s, d)| s != d)
        .collect();
    let mut classes = Vec::new();
    for &a in &pairs {
        for &b in &pairs {
            for &c in &pairs {
                if let Some((sig, nodes)) = relabel([a, b, c]) {
                    if nodes.len() >= 2 {
                        classes.push(MotifSignature { edges: sig, node_count: nodes.len() as u8 });
                    }
                }
            }
        }
    }
    classes.sort_by_key(|s| s.bytes());
    classes.dedup();

    let lookup: HashMap<_, _> = classes.iter().enumerate().map(|(i, s)| (s.edges, i)).collect();
    let mut table = [NO_CLASS; 81];
    for (i, s) in classes.iter().enumerate() {
        let code = |p: RolePair| (p.0 * 3 + p.1) as usize;
        table[code(s.edges[1]) * 9 + code(s.edges[2])] = i as u8;
    }
    MotifTaxonomy { classes, lookup, table }
}

impl MotifTaxonomy {
    pub fn classes(&self) -> &[MotifSignature] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn index_of(&self, edges: &[RolePair; 3]) -> Option<usize> {
        self.lookup.get(edges).copied()
    }

    pub fn signature(&self, motif: usize) -> &MotifSignature {
        &self.classes[motif]
    }

    /// Classifies three concrete directed edges given in temporal order.
    #[inline]
    pub fn canonicalize(&self, e1: (u32, u32), e2: (u32, u32), e3: (u32, u32)) -> Option<(usize, RoleMap)> {
        let (a, b) = e1;
        if a == b {
            return None;
        }
        let mut nodes = [a, b, u32::MAX];
        let mut len = 2u8;
        let mut role = |x: u32| -> Option<u8> {
            if x == nodes[0] {
                Some(0)
            } else if x == nodes[1] {
                Some(1)
            } else if len == 3 {
                (x == nodes[2]).then_some(2)
            } else {
                nodes[2] = x;
                len = 3;
                Some(2)
            }
        };
        let (s2, d2) = (role(e2.0)?, role(e2.1)?);
        let (s3, d3) = (role(e3.0)?, role(e3.1)?);
        if s2 == d2 || s3 == d3 {
            return None;
        }
        let class = self.table[((s2 * 3 + d2) as usize) * 9 + (s3 * 3 + d3) as usize];
        debug_assert_ne!(class, NO_CLASS);
        Some((class as usize, RoleMap { nodes, len }))
    }

    /// Signature of a concrete triple by plain first-appearance relabeling.
    pub fn signature_of<T: PartialEq + Copy>(edges: [(T, T); 3]) -> Option<MotifSignature> {
        relabel(edges).map(|(sig, nodes)| MotifSignature { edges: sig, node_count: nodes.len() as u8 })
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::Value::Array(
            self.classes
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    serde_json::json!({
                        "index": i,
                        "edges": s.edges.iter().map(|p| [p.0, p.1]).collect::<Vec<_>>(),
                        "node_count": s.node_count,
                    })
                })
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn thirty_six_classes() {
        let t = enumerate_taxonomy();
        assert_eq!(t.len(), 36);
        assert_eq!(t.classes().iter().filter(|s| s.node_count == 3).count(), 32);
        assert_eq!(t.classes().iter().filter(|s| s.node_count == 2).count(), 4);
        assert!(t.classes().iter().all(|s| s.edges[0] == (0, 1)));
        for w in t.classes().windows(2) {
            assert!(w[0].bytes() < w[1].bytes());
        }
    }

    #[test]
    fn triangle_is_present() {
        let t = enumerate_taxonomy();
        let idx = t.index_of(&[(0, 1), (1, 2), (2, 0)]).unwrap();
        assert_eq!(t.signature(idx).node_count, 3);
    }

    #[test]
    fn canonicalize_examples() {
        let t = enumerate_taxonomy();
        let (a, b, c, d) = (10, 20, 30, 40);
        let (m, roles) = t.canonicalize((a, b), (b, c), (c, a)).unwrap();
        assert_eq!(t.signature(m).edges, [(0, 1), (1, 2), (2, 0)]);
        assert_eq!(roles.iter().collect::<Vec<_>>(), vec![(a, 0), (b, 1), (c, 2)]);

        let (m, roles) = t.canonicalize((a, b), (a, b), (b, a)).unwrap();
        assert_eq!(t.signature(m).edges, [(0, 1), (0, 1), (1, 0)]);
        assert_eq!(t.signature(m).node_count, 2);
        assert_eq!(roles.len, 2);

        assert!(t.canonicalize((a, b), (c, d), (a, c)).is_none());
        assert!(t.canonicalize((a, a), (a, b), (b, a)).is_none());
    }

    proptest! {
        #[test]
        fn canonicalize_stays_in_taxonomy(raw in prop::array::uniform6(0u32..5)) {
            let t = enumerate_taxonomy();
            let e = [(raw[0], raw[1]), (raw[2], raw[3]), (raw[4], raw[5])];
            let fast = t.canonicalize(e[0], e[1], e[2]);
            let slow = MotifTaxonomy::signature_of(e).filter(|s| s.node_count >= 2);
            match (fast, slow) {
                (Some((m, _)), Some(sig)) => prop_assert_eq!(*t.signature(m), sig),
                (None, None) => {}
                (f, s) => prop_assert!(false, "disagree: {:?} vs {:?}", f, s),
            }
        }
    }
}
