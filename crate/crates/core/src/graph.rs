//! Weighted sparse graph shared by every network-facing module.
//!
//! Adjacency lists are kept sorted by neighbor id, so two networks built from
//! the same edge multiset compare equal regardless of insertion order.

use std::collections::HashMap;
use std::io::Write;

use crate::error::{Error, Result};

/// Dense 0-based node index, stable within one [`Network`].
pub type NodeId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    Pc,
    Sc,
    Unknown,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Pc => "PC",
            Role::Sc => "SC",
            Role::Unknown => "unknown",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    directed: bool,
    adjacency: Vec<Vec<(NodeId, f64)>>,
    roles: Option<Vec<Role>>,
    external_ids: Vec<String>,
    attribute_names: Vec<String>,
    attributes: Vec<Vec<f64>>,
}

impl Network {
    pub fn new(node_count: usize, directed: bool) -> Self {
        Network {
            directed,
            adjacency: vec![Vec::new(); node_count],
            roles: None,
            external_ids: (0..node_count).map(|i| i.to_string()).collect(),
            attribute_names: Vec::new(),
            attributes: vec![Vec::new(); node_count],
        }
    }

    /// Tags every node with a role; from then on every insertion must
    /// connect a PC node to an SC node.
    pub fn with_roles(mut self, roles: Vec<Role>) -> Result<Self> {
        if roles.len() != self.node_count() {
            return Err(Error::Shape(format!(
                "{} roles for {} nodes",
                roles.len(),
                self.node_count()
            )));
        }
        self.roles = Some(roles);
        for (u, v, _) in self.edges() {
            self.check_roles(u, v)?;
        }
        Ok(self)
    }

    pub fn with_external_ids(mut self, ids: Vec<String>) -> Result<Self> {
        if ids.len() != self.node_count() {
            return Err(Error::Shape(format!(
                "{} external ids for {} nodes",
                ids.len(),
                self.node_count()
            )));
        }
        self.external_ids = ids;
        Ok(self)
    }

    pub fn set_attributes(&mut self, names: Vec<String>, rows: Vec<Vec<f64>>) -> Result<()> {
        if rows.len() != self.node_count() || rows.iter().any(|r| r.len() != names.len()) {
            return Err(Error::Shape(format!(
                "attribute table must be {} x {}",
                self.node_count(),
                names.len()
            )));
        }
        self.attribute_names = names;
        self.attributes = rows;
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    pub fn roles(&self) -> Option<&[Role]> {
        self.roles.as_deref()
    }

    pub fn role(&self, u: NodeId) -> Role {
        self.roles.as_ref().map_or(Role::Unknown, |r| r[u])
    }

    pub fn external_id(&self, u: NodeId) -> &str {
        &self.external_ids[u]
    }

    pub fn external_ids(&self) -> &[String] {
        &self.external_ids
    }

    /// Map from external id to node index.
    pub fn index_by_external_id(&self) -> HashMap<&str, NodeId> {
        self.external_ids
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect()
    }

    pub fn attribute_names(&self) -> &[String] {
        &self.attribute_names
    }

    pub fn attributes(&self, u: NodeId) -> &[f64] {
        &self.attributes[u]
    }

    fn check_node(&self, u: NodeId) -> Result<()> {
        if u >= self.node_count() {
            return Err(Error::InvalidNode {
                id: u,
                count: self.node_count(),
            });
        }
        Ok(())
    }

    fn check_roles(&self, u: NodeId, v: NodeId) -> Result<()> {
        if let Some(roles) = &self.roles {
            let ok = matches!(
                (roles[u], roles[v]),
                (Role::Pc, Role::Sc) | (Role::Sc, Role::Pc)
            );
            if !ok || (self.directed && roles[u] != Role::Pc) {
                return Err(Error::BipartiteViolation(u, v));
            }
        }
        Ok(())
    }

    /// Inserts `u -> v` with weight `w`, or adds `w` to an existing edge.
    /// Undirected networks keep the mirror entry in sync.
    pub fn add_edge(&mut self, u: NodeId, v: NodeId, w: f64) -> Result<()> {
        self.check_node(u)?;
        self.check_node(v)?;
        if u == v {
            return Err(Error::SelfLoop(u));
        }
        if !(w > 0.0 && w.is_finite()) {
            return Err(Error::InvalidWeight(w));
        }
        self.check_roles(u, v)?;
        accumulate(&mut self.adjacency[u], v, w);
        if !self.directed {
            accumulate(&mut self.adjacency[v], u, w);
        }
        Ok(())
    }

    /// Out-neighbors (or neighbors, if undirected) in ascending id order.
    pub fn neighbors(&self, u: NodeId) -> Result<&[(NodeId, f64)]> {
        self.check_node(u)?;
        Ok(&self.adjacency[u])
    }

    /// Unchecked neighbor access for hot loops.
    #[inline]
    pub fn adj(&self, u: NodeId) -> &[(NodeId, f64)] {
        &self.adjacency[u]
    }

    pub fn degree(&self, u: NodeId) -> usize {
        self.adjacency[u].len()
    }

    pub fn weight(&self, u: NodeId, v: NodeId) -> Option<f64> {
        let list = self.adjacency.get(u)?;
        list.binary_search_by_key(&v, |&(n, _)| n)
            .ok()
            .map(|i| list[i].1)
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        self.weight(u, v).is_some()
    }

    /// Each edge once: `u < v` for undirected networks, `u -> v` for directed.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId, f64)> + '_ {
        let directed = self.directed;
        self.adjacency.iter().enumerate().flat_map(move |(u, list)| {
            list.iter()
                .filter(move |&&(v, _)| directed || u < v)
                .map(move |&(v, w)| (u, v, w))
        })
    }

    pub fn edge_count(&self) -> usize {
        let entries: usize = self.adjacency.iter().map(Vec::len).sum();
        if self.directed {
            entries
        } else {
            entries / 2
        }
    }

    pub fn total_weight(&self) -> f64 {
        self.edges().map(|(_, _, w)| w).sum()
    }

    /// Same nodes, edges mirrored; reciprocal directed edges merge their weights.
    pub fn to_undirected(&self) -> Network {
        if !self.directed {
            return self.clone();
        }
        let mut out = Network {
            directed: false,
            adjacency: vec![Vec::new(); self.node_count()],
            roles: None,
            external_ids: self.external_ids.clone(),
            attribute_names: self.attribute_names.clone(),
            attributes: self.attributes.clone(),
        };
        for (u, v, w) in self.edges() {
            accumulate(&mut out.adjacency[u], v, w);
            accumulate(&mut out.adjacency[v], u, w);
        }
        out.roles = self.roles.clone();
        out
    }

    /// Copy of this network with the given edges removed (either orientation
    /// for undirected networks). Unknown edges are ignored.
    pub fn without_edges(&self, removed: &[(NodeId, NodeId)]) -> Network {
        let mut out = self.clone();
        for &(u, v) in removed {
            remove(&mut out.adjacency[u], v);
            if !self.directed {
                remove(&mut out.adjacency[v], u);
            }
        }
        out
    }

    /// Copy with every weight set to 1.
    pub fn skeleton(&self) -> Network {
        let mut out = self.clone();
        for list in &mut out.adjacency {
            for e in list.iter_mut() {
                e.1 = 1.0;
            }
        }
        out
    }

    pub fn write_edge_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["source_id", "target_id", "weight"])?;
        for (u, v, w) in self.edges() {
            wtr.write_record([u.to_string(), v.to_string(), w.to_string()])?;
        }
        wtr.flush().map_err(|e| Error::io("<edge csv>", e))?;
        Ok(())
    }

    pub fn write_node_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let mut header = vec![
            "node_id".to_string(),
            "external_id".to_string(),
            "role".to_string(),
        ];
        header.extend(self.attribute_names.iter().cloned());
        wtr.write_record(&header)?;
        for u in 0..self.node_count() {
            let mut row = vec![
                u.to_string(),
                self.external_ids[u].clone(),
                self.role(u).as_str().to_string(),
            ];
            row.extend(self.attributes[u].iter().map(|x| x.to_string()));
            wtr.write_record(&row)?;
        }
        wtr.flush().map_err(|e| Error::io("<node csv>", e))?;
        Ok(())
    }
}

fn accumulate(list: &mut Vec<(NodeId, f64)>, v: NodeId, w: f64) {
    match list.binary_search_by_key(&v, |&(n, _)| n) {
        Ok(i) => list[i].1 += w,
        Err(i) => list.insert(i, (v, w)),
    }
}

fn remove(list: &mut Vec<(NodeId, f64)>, v: NodeId) {
    if let Ok(i) = list.binary_search_by_key(&v, |&(n, _)| n) {
        list.remove(i);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_edge_degrees() {
        let mut g = Network::new(2, false);
        g.add_edge(0, 1, 1.0).unwrap();
        assert_eq!(g.degree(0), 1);
        assert_eq!(g.degree(1), 1);
    }

    #[test]
    fn parallel_edges_accumulate() {
        let mut g = Network::new(2, false);
        g.add_edge(0, 1, 1.0).unwrap();
        g.add_edge(0, 1, 1.0).unwrap();
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.weight(0, 1), Some(2.0));
        assert_eq!(g.weight(1, 0), Some(2.0));
    }

    #[test]
    fn self_loop_rejected() {
        let mut g = Network::new(2, false);
        assert!(matches!(g.add_edge(0, 0, 1.0), Err(Error::SelfLoop(0))));
    }

    #[test]
    fn invalid_id_and_weight_rejected() {
        let mut g = Network::new(2, false);
        assert!(matches!(
            g.add_edge(0, 5, 1.0),
            Err(Error::InvalidNode { id: 5, .. })
        ));
        assert!(matches!(g.add_edge(0, 1, 0.0), Err(Error::InvalidWeight(_))));
        assert!(g.neighbors(9).is_err());
    }

    #[test]
    fn star_neighbors_and_isolated() {
        let mut g = Network::new(5, false);
        for leaf in 1..=3 {
            g.add_edge(0, leaf, 1.5).unwrap();
        }
        assert_eq!(g.neighbors(0).unwrap(), &[(1, 1.5), (2, 1.5), (3, 1.5)]);
        assert!(g.neighbors(4).unwrap().is_empty());
    }

    #[test]
    fn neighbors_sorted_after_out_of_order_insert() {
        let mut g = Network::new(3, false);
        g.add_edge(0, 2, 1.0).unwrap();
        g.add_edge(0, 1, 1.0).unwrap();
        let ids: Vec<_> = g.neighbors(0).unwrap().iter().map(|e| e.0).collect();
        assert_eq!(ids, vec![1, 2]);
    }

    #[test]
    fn bipartite_roles_enforced() {
        let roles = vec![Role::Pc, Role::Sc, Role::Pc];
        let mut g = Network::new(3, true).with_roles(roles).unwrap();
        g.add_edge(0, 1, 1.0).unwrap();
        assert!(matches!(
            g.add_edge(0, 2, 1.0),
            Err(Error::BipartiteViolation(0, 2))
        ));
        // directed referral edges run PC -> SC only
        assert!(g.add_edge(1, 2, 1.0).is_err());
    }

    #[test]
    fn csv_export_format() {
        let mut g = Network::new(3, false);
        g.add_edge(2, 0, 2.0).unwrap();
        g.add_edge(0, 1, 1.5).unwrap();
        let mut buf = Vec::new();
        g.write_edge_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "source_id,target_id,weight\n0,1,1.5\n0,2,2\n"
        );
    }

    fn edge_list() -> impl Strategy<Value = Vec<(usize, usize, u8)>> {
        prop::collection::vec((0usize..8, 0usize..8, 1u8..5), 0..40)
            .prop_map(|v| v.into_iter().filter(|(a, b, _)| a != b).collect())
    }

    proptest! {
        #[test]
        fn degree_sum_is_twice_edge_count(edges in edge_list()) {
            let mut g = Network::new(8, false);
            for (u, v, w) in &edges {
                g.add_edge(*u, *v, f64::from(*w)).unwrap();
            }
            let total: usize = (0..8).map(|u| g.degree(u)).sum();
            prop_assert_eq!(total, 2 * g.edge_count());
        }

        #[test]
        fn insertion_order_irrelevant(edges in edge_list(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut shuffled = edges.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let mut a = Network::new(8, false);
            let mut b = Network::new(8, false);
            for (u, v, w) in &edges {
                a.add_edge(*u, *v, f64::from(*w)).unwrap();
            }
            for (u, v, w) in &shuffled {
                b.add_edge(*u, *v, f64::from(*w)).unwrap();
            }
            prop_assert_eq!(a, b);
        }
    }
}
